//! Weight ensembles: the law of `(Q, T_1, …, T_N)`.

mod assumptions;
pub mod presets;

pub use assumptions::{
    check_aperiodicity_heuristic, check_condition_c, estimate_moment_conditions, iota, AlphaInfo, AperiodicityReport,
    AperiodicityVerdict, AssumptionEntry, AssumptionReport, AssumptionStatus, ConditionC,
};

use std::borrow::Cow;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{NonnegMatrix, NonnegVector};
use crate::rng::RngStream;

/// One realization of the weights with its probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightAtom {
    pub prob: f64,
    #[serde(rename = "Q")]
    pub q: NonnegVector,
    #[serde(rename = "Ts")]
    pub ts: Vec<NonnegMatrix>,
}

/// Law of the number of nonzero weights for a parametric generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NLaw {
    Fixed(usize),
    Finite(FiniteN),
    Geometric(GeometricN),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiniteN {
    pub values: Vec<usize>,
    pub probs: Vec<f64>,
}

/// `P(N = k) ∝ (1−p)^{k−1} p` for `k = 1..=max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometricN {
    pub geometric: GeometricParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometricParams {
    pub p: f64,
    pub max: usize,
}

impl NLaw {
    /// Support and probabilities.
    pub fn table(&self) -> Result<(Vec<usize>, Vec<f64>)> {
        match self {
            NLaw::Fixed(n) => Ok((vec![*n], vec![1.0])),
            NLaw::Finite(f) => {
                if f.values.len() != f.probs.len() || f.values.is_empty() {
                    return Err(Error::InvalidModel("N law needs matching nonempty values and probs".into()));
                }
                Ok((f.values.clone(), f.probs.clone()))
            }
            NLaw::Geometric(g) => {
                let GeometricParams { p, max } = g.geometric;
                if !(p > 0.0 && p <= 1.0) || max == 0 {
                    return Err(Error::InvalidModel("geometric N law needs p in (0,1] and max >= 1".into()));
                }
                let raw: Vec<f64> = (1..=max).map(|k| (1.0 - p).powi(k as i32 - 1) * p).collect();
                let z: f64 = raw.iter().sum();
                Ok(((1..=max).collect(), raw.into_iter().map(|w| w / z).collect()))
            }
        }
    }
}

fn default_scale() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

/// A named parametric generator.
///
/// `iid-uniform-entries`: every entry is `scale · U[lo, hi]`, independently set
/// to zero with probability `zero_prob`; `Q` is the fixed vector `q` (zero if
/// absent).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Generator {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
    #[serde(default)]
    pub zero_prob: f64,
    pub n: NLaw,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<f64>>,
    #[serde(default = "default_scale")]
    pub scale: f64,
    #[serde(default = "default_true")]
    pub condition_c: bool,
}

pub const GENERATOR_IID_UNIFORM: &str = "iid-uniform-entries";

#[derive(Debug, Clone, PartialEq)]
pub enum EnsembleKind {
    Mixture(Vec<WeightAtom>),
    Parametric(Generator),
}

/// The law of `(Q, T_1, …, T_N)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EnsembleFile", into = "EnsembleFile")]
pub struct WeightEnsemble {
    dim: usize,
    kind: EnsembleKind,
    alpha_target: Option<f64>,
    expected_n: f64,
    n_max: usize,
    atom_cdf: Vec<f64>,
    mu_cdf: Vec<f64>,
    n_values: Vec<usize>,
    n_cdf: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnsembleFile {
    dim: usize,
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    atoms: Option<Vec<WeightAtom>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    generator: Option<Generator>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    alpha_target: Option<f64>,
}

impl TryFrom<EnsembleFile> for WeightEnsemble {
    type Error = Error;
    fn try_from(f: EnsembleFile) -> Result<Self> {
        let ens = match (f.kind.as_str(), f.atoms, f.generator) {
            ("mixture", Some(atoms), None) => WeightEnsemble::mixture(f.dim, atoms)?,
            ("parametric", None, Some(g)) => WeightEnsemble::parametric(f.dim, g)?,
            ("mixture", _, _) => return Err(Error::InvalidModel("mixture needs \"atoms\" and no \"generator\"".into())),
            ("parametric", _, _) => {
                return Err(Error::InvalidModel("parametric needs \"generator\" and no \"atoms\"".into()))
            }
            (k, _, _) => return Err(Error::InvalidModel(format!("unknown kind {k:?}"))),
        };
        Ok(ens.with_alpha_target(f.alpha_target))
    }
}

impl From<WeightEnsemble> for EnsembleFile {
    fn from(e: WeightEnsemble) -> Self {
        let (kind, atoms, generator) = match e.kind {
            EnsembleKind::Mixture(a) => ("mixture", Some(a), None),
            EnsembleKind::Parametric(g) => ("parametric", None, Some(g)),
        };
        EnsembleFile { dim: e.dim, kind: kind.into(), atoms, generator, alpha_target: e.alpha_target }
    }
}

/// One draw of `(Q, T_1, …, T_N)`; borrowed from the ensemble for mixtures.
#[derive(Debug, Clone)]
pub struct Realization<'a> {
    pub q: Cow<'a, NonnegVector>,
    pub ts: Cow<'a, [NonnegMatrix]>,
    /// Index of the atom drawn, for mixtures.
    pub atom: Option<usize>,
}

fn cdf(weights: &[f64]) -> Vec<f64> {
    let total: f64 = weights.iter().sum();
    let mut acc = 0.0;
    let mut out: Vec<f64> = weights
        .iter()
        .map(|w| {
            acc += w / total;
            acc
        })
        .collect();
    if let Some(last) = out.last_mut() {
        *last = 1.0;
    }
    out
}

#[inline]
fn pick(cdf: &[f64], u: f64) -> usize {
    cdf.partition_point(|c| *c <= u).min(cdf.len() - 1)
}

impl WeightEnsemble {
    /// A discrete mixture of atoms.
    pub fn mixture(dim: usize, atoms: Vec<WeightAtom>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidModel("dim must be at least 1".into()));
        }
        if atoms.is_empty() {
            return Err(Error::InvalidModel("mixture needs at least one atom".into()));
        }
        let mut total = 0.0;
        for (i, a) in atoms.iter().enumerate() {
            if !(a.prob > 0.0 && a.prob <= 1.0) {
                return Err(Error::InvalidModel(format!("atom {i}: prob {} not in (0,1]", a.prob)));
            }
            if a.q.dim() != dim {
                return Err(Error::InvalidModel(format!("atom {i}: Q has dimension {}, expected {dim}", a.q.dim())));
            }
            if a.ts.is_empty() {
                return Err(Error::InvalidModel(format!("atom {i}: Ts must be nonempty")));
            }
            for (j, t) in a.ts.iter().enumerate() {
                if t.dim() != dim {
                    return Err(Error::InvalidModel(format!("atom {i}: T{j} has dimension {}, expected {dim}", t.dim())));
                }
                if t.is_zero() {
                    return Err(Error::InvalidModel(format!("atom {i}: T{j} is the zero matrix")));
                }
            }
            total += a.prob;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidModel(format!("atom probabilities sum to {total}, not 1")));
        }
        let expected_n = atoms.iter().map(|a| a.prob * a.ts.len() as f64).sum();
        let n_max = atoms.iter().map(|a| a.ts.len()).max().unwrap_or(0);
        let atom_cdf = cdf(&atoms.iter().map(|a| a.prob).collect::<Vec<_>>());
        let mu_cdf = cdf(&atoms.iter().map(|a| a.prob * a.ts.len() as f64).collect::<Vec<_>>());
        Ok(WeightEnsemble {
            dim,
            kind: EnsembleKind::Mixture(atoms),
            alpha_target: None,
            expected_n,
            n_max,
            atom_cdf,
            mu_cdf,
            n_values: vec![],
            n_cdf: vec![],
        })
    }

    /// A parametric generator.
    pub fn parametric(dim: usize, g: Generator) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidModel("dim must be at least 1".into()));
        }
        if g.name != GENERATOR_IID_UNIFORM {
            return Err(Error::InvalidModel(format!("unknown generator {:?}", g.name)));
        }
        if !(g.lo >= 0.0 && g.hi >= g.lo && g.hi > 0.0 && g.hi.is_finite()) {
            return Err(Error::InvalidModel("generator needs 0 <= lo <= hi, hi > 0".into()));
        }
        if !(0.0..1.0).contains(&g.zero_prob) {
            return Err(Error::InvalidModel("zero_prob must lie in [0,1)".into()));
        }
        if !(g.scale > 0.0 && g.scale.is_finite()) {
            return Err(Error::InvalidModel("scale must be positive".into()));
        }
        if let Some(q) = &g.q {
            if q.len() != dim {
                return Err(Error::InvalidModel("generator q has the wrong dimension".into()));
            }
            NonnegVector::new(q.clone())?;
        }
        let (values, probs) = g.n.table()?;
        if values.iter().any(|v| *v == 0) {
            return Err(Error::InvalidModel("N law must be supported on N >= 1".into()));
        }
        if probs.iter().any(|p| !(*p >= 0.0)) || (probs.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidModel("N law probabilities must be nonnegative and sum to 1".into()));
        }
        let expected_n = values.iter().zip(&probs).map(|(v, p)| *v as f64 * p).sum();
        let n_max = *values.iter().max().expect("nonempty");
        let n_cdf = cdf(&probs);
        Ok(WeightEnsemble {
            dim,
            kind: EnsembleKind::Parametric(g),
            alpha_target: None,
            expected_n,
            n_max,
            atom_cdf: vec![],
            mu_cdf: vec![],
            n_values: values,
            n_cdf,
        })
    }

    pub fn with_alpha_target(mut self, alpha: Option<f64>) -> Self {
        self.alpha_target = alpha;
        self
    }

    /// Parses the ensemble JSON format. Syntax and schema problems give
    /// [`Error::Json`]; semantically invalid models give [`Error::InvalidModel`].
    pub fn from_json(s: &str) -> Result<Self> {
        let file: EnsembleFile = serde_json::from_str(s)?;
        WeightEnsemble::try_from(file)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ensemble serializes")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &EnsembleKind {
        &self.kind
    }

    pub fn alpha_target(&self) -> Option<f64> {
        self.alpha_target
    }

    /// `E N`, exact for both kinds.
    pub fn expected_n(&self) -> f64 {
        self.expected_n
    }

    /// Largest possible `N`.
    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn atoms(&self) -> Option<&[WeightAtom]> {
        match &self.kind {
            EnsembleKind::Mixture(a) => Some(a),
            EnsembleKind::Parametric(_) => None,
        }
    }

    /// `Q ≡ 0`.
    pub fn is_homogeneous(&self) -> bool {
        match &self.kind {
            EnsembleKind::Mixture(a) => a.iter().all(|a| a.q.is_zero()),
            EnsembleKind::Parametric(g) => g.q.as_ref().is_none_or(|q| q.iter().all(|v| *v == 0.0)),
        }
    }

    /// Copy with `Q` set to zero.
    pub fn homogeneous(&self) -> Self {
        let mut e = self.clone();
        match &mut e.kind {
            EnsembleKind::Mixture(a) => a.iter_mut().for_each(|a| a.q = NonnegVector::zeros(self.dim)),
            EnsembleKind::Parametric(g) => g.q = None,
        }
        e
    }

    /// Copy with every matrix multiplied by `c > 0`.
    pub fn scale_matrices(&self, c: f64) -> Self {
        assert!(c > 0.0 && c.is_finite(), "scale factor must be positive");
        let mut e = self.clone();
        match &mut e.kind {
            EnsembleKind::Mixture(a) => a.iter_mut().for_each(|a| a.ts.iter_mut().for_each(|t| *t = t.scale(c))),
            EnsembleKind::Parametric(g) => g.scale *= c,
        }
        e
    }

    /// Distinct matrices of a mixture, in first-appearance order.
    pub fn support(&self) -> Option<Vec<NonnegMatrix>> {
        let atoms = self.atoms()?;
        let mut out: Vec<NonnegMatrix> = Vec::new();
        for t in atoms.iter().flat_map(|a| &a.ts) {
            if !out.contains(t) {
                out.push(t.clone());
            }
        }
        Some(out)
    }

    /// The law `μ` of a mixture as merged `(probability, matrix)` pairs.
    pub fn mu_atoms(&self) -> Option<Vec<(f64, NonnegMatrix)>> {
        let atoms = self.atoms()?;
        let mut out: Vec<(f64, NonnegMatrix)> = Vec::new();
        for a in atoms {
            for t in &a.ts {
                let w = a.prob / self.expected_n;
                match out.iter_mut().find(|(_, m)| m == t) {
                    Some((p, _)) => *p += w,
                    None => out.push((w, t.clone())),
                }
            }
        }
        Some(out)
    }

    /// Draws one realization of `(Q, T_1, …, T_N)`.
    pub fn sample_weights<'a>(&'a self, rng: &mut RngStream) -> Result<Realization<'a>> {
        match &self.kind {
            EnsembleKind::Mixture(atoms) => {
                let i = pick(&self.atom_cdf, rng.random::<f64>());
                let a = &atoms[i];
                Ok(Realization { q: Cow::Borrowed(&a.q), ts: Cow::Borrowed(&a.ts), atom: Some(i) })
            }
            EnsembleKind::Parametric(g) => {
                let n = self.n_values[pick(&self.n_cdf, rng.random::<f64>())];
                let ts = (0..n).map(|_| self.generate_matrix(g, rng)).collect::<Result<Vec<_>>>()?;
                let q = match &g.q {
                    Some(q) => NonnegVector::new(q.clone())?,
                    None => NonnegVector::zeros(self.dim),
                };
                Ok(Realization { q: Cow::Owned(q), ts: Cow::Owned(ts), atom: None })
            }
        }
    }

    fn generate_matrix(&self, g: &Generator, rng: &mut RngStream) -> Result<NonnegMatrix> {
        let d = self.dim;
        let data: Vec<f64> = (0..d * d)
            .map(|_| {
                let v = g.scale * (g.lo + (g.hi - g.lo) * rng.random::<f64>());
                if g.zero_prob > 0.0 && rng.random::<f64>() < g.zero_prob {
                    0.0
                } else {
                    v
                }
            })
            .collect();
        let m = NonnegMatrix::new(d, data)?;
        if m.is_zero() {
            return Err(Error::StructuralViolation("generator produced the zero matrix".into()));
        }
        if g.condition_c && !m.is_allowable() {
            return Err(Error::StructuralViolation(format!("generator produced a non-allowable matrix {:?}", m.rows())));
        }
        Ok(m)
    }

    /// Draws one matrix from `μ`: size-biased realization, then a uniform index.
    pub fn sample_mu<'a>(&'a self, rng: &mut RngStream) -> Result<Cow<'a, NonnegMatrix>> {
        match &self.kind {
            EnsembleKind::Mixture(atoms) => {
                let a = &atoms[pick(&self.mu_cdf, rng.random::<f64>())];
                let j = rng.random_range(0..a.ts.len());
                Ok(Cow::Borrowed(&a.ts[j]))
            }
            EnsembleKind::Parametric(_) => loop {
                let r = self.sample_weights(rng)?;
                let n = r.ts.len();
                if rng.random::<f64>() * self.n_max as f64 <= n as f64 {
                    let j = rng.random_range(0..n);
                    return Ok(Cow::Owned(r.ts.into_owned().swap_remove(j)));
                }
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamKey;
    use crate::stats::MeanEstimate;

    fn diagonal_example() -> WeightEnsemble {
        presets::stable_diagonal()
    }

    fn m(rows: &[&[f64]]) -> NonnegMatrix {
        NonnegMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn deterministic_atom_returns_itself() {
        let e = diagonal_example();
        let mut r = StreamKey::new(1).rng();
        for _ in 0..10 {
            let w = e.sample_weights(&mut r).unwrap();
            assert_eq!(w.ts.len(), 4);
            assert!(w.ts.iter().all(|t| *t == NonnegMatrix::diag(&[1.0 / 16.0; 2])));
            assert!(w.q.is_zero());
        }
        assert_eq!(e.expected_n(), 4.0);
    }

    #[test]
    fn parametric_entries_in_range() {
        let json = r#"{"dim":2,"kind":"parametric","generator":{"name":"iid-uniform-entries","lo":0.1,"hi":1.0,"n":2}}"#;
        let e = WeightEnsemble::from_json(json).unwrap();
        let mut r = StreamKey::new(2).rng();
        for _ in 0..1000 {
            let w = e.sample_weights(&mut r).unwrap();
            assert_eq!(w.ts.len(), 2);
            for t in w.ts.iter() {
                assert_eq!(t.dim(), 2);
                assert!(t.entries().iter().all(|v| (0.1..=1.0).contains(v)));
            }
        }
    }

    #[test]
    fn two_atom_frequencies() {
        let a = WeightAtom { prob: 0.5, q: NonnegVector::zeros(2), ts: vec![NonnegMatrix::identity(2)] };
        let b = WeightAtom { prob: 0.5, q: NonnegVector::zeros(2), ts: vec![NonnegMatrix::identity(2); 3] };
        let e = WeightEnsemble::mixture(2, vec![a, b]).unwrap();
        let mut r = StreamKey::new(3).rng();
        let n = 100_000;
        let hits = (0..n).filter(|_| e.sample_weights(&mut r).unwrap().atom == Some(0)).count();
        // binomial sd at n=1e5 is 0.00158; 0.01 is over 6 sd
        assert!((hits as f64 / n as f64 - 0.5).abs() < 0.01);
    }

    #[test]
    fn sample_mu_size_biases() {
        let ma = m(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let mb = m(&[&[2.0, 1.0], &[1.0, 2.0]]);
        let a = WeightAtom { prob: 0.5, q: NonnegVector::zeros(2), ts: vec![ma] };
        let b = WeightAtom { prob: 0.5, q: NonnegVector::zeros(2), ts: vec![mb.clone(); 3] };
        let e = WeightEnsemble::mixture(2, vec![a, b]).unwrap();
        let mu = e.mu_atoms().unwrap();
        assert!((mu[1].0 - 0.75).abs() < 1e-15);
        let mut r = StreamKey::new(4).rng();
        let n = 100_000;
        let hits = (0..n).filter(|_| *e.sample_mu(&mut r).unwrap() == mb).count();
        let p = hits as f64 / n as f64;
        let sd = (0.75f64 * 0.25 / n as f64).sqrt();
        assert!((p - 0.75).abs() < 4.0 * sd, "{p}");
    }

    #[test]
    fn mu_expectation_matches_realization_sum() {
        let json = r#"{"dim":2,"kind":"parametric","generator":{"name":"iid-uniform-entries","lo":0.1,"hi":1.0,
            "n":{"values":[1,3],"probs":[0.5,0.5]}}}"#;
        let e = WeightEnsemble::from_json(json).unwrap();
        let n = 40_000;
        let mut r = StreamKey::new(5).rng();
        let direct: Vec<f64> = (0..n).map(|_| e.sample_mu(&mut r).unwrap().op_norm()).collect();
        let mut r = StreamKey::new(6).rng();
        let via_sum: Vec<f64> = (0..n)
            .map(|_| e.sample_weights(&mut r).unwrap().ts.iter().map(|t| t.op_norm()).sum::<f64>() / e.expected_n())
            .collect();
        let a = MeanEstimate::from_samples(&direct);
        let b = MeanEstimate::from_samples(&via_sum);
        assert!(a.agrees(&b, 3.5, 0.0), "{a:?} {b:?}");
    }

    #[test]
    fn json_round_trip_and_unknown_fields() {
        let e = diagonal_example().with_alpha_target(Some(0.5));
        let back = WeightEnsemble::from_json(&e.to_json()).unwrap();
        assert_eq!(e, back);
        let bad = r#"{"dim":1,"kind":"mixture","atoms":[{"prob":1,"Q":[0],"Ts":[[[0.5]]]}],"extra":1}"#;
        assert!(WeightEnsemble::from_json(bad).is_err());
        let bad_atom = r#"{"dim":1,"kind":"mixture","atoms":[{"prob":1,"Q":[0],"Ts":[[[0.5]]],"N":1}]}"#;
        assert!(WeightEnsemble::from_json(bad_atom).is_err());
        let bad_sum = r#"{"dim":1,"kind":"mixture","atoms":[{"prob":0.9,"Q":[0],"Ts":[[[0.5]]]}]}"#;
        assert!(matches!(WeightEnsemble::from_json(bad_sum), Err(Error::InvalidModel(_))));
    }

    #[test]
    fn structural_violation_in_condition_c_mode() {
        let json = r#"{"dim":2,"kind":"parametric","generator":{"name":"iid-uniform-entries","lo":0.1,"hi":1.0,
            "zero_prob":0.6,"n":1}}"#;
        let e = WeightEnsemble::from_json(json).unwrap();
        let mut r = StreamKey::new(7).rng();
        let errs = (0..200).filter(|_| matches!(e.sample_weights(&mut r), Err(Error::StructuralViolation(_)))).count();
        assert!(errs > 0);
    }

    #[test]
    fn geometric_n_law_is_truncated() {
        let g = NLaw::Geometric(GeometricN { geometric: GeometricParams { p: 0.5, max: 3 } });
        let (v, p) = g.table().unwrap();
        assert_eq!(v, vec![1, 2, 3]);
        assert!((p[0] - 4.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn scaling_and_homogenizing() {
        let e = diagonal_example().scale_matrices(16.0);
        assert_eq!(e.support().unwrap(), vec![NonnegMatrix::identity(2)]);
        assert!(e.homogeneous().is_homogeneous());
    }

    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn samples_are_nonnegative_with_n_at_least_one(seed in any::<u64>(), zero in 0.0f64..0.5) {
            let json = format!(r#"{{"dim":3,"kind":"parametric","generator":{{"name":"iid-uniform-entries","lo":0.0,"hi":2.0,
                "zero_prob":{zero},"n":{{"values":[1,2,4],"probs":[0.2,0.3,0.5]}},"condition_c":false}}}}"#);
            let e = WeightEnsemble::from_json(&json).unwrap();
            let mut r = StreamKey::new(seed).rng();
            for _ in 0..20 {
                if let Ok(w) = e.sample_weights(&mut r) {
                    prop_assert!(!w.ts.is_empty());
                    prop_assert!(w.ts.iter().all(|t| t.entries().iter().all(|v| *v >= 0.0)));
                }
            }
        }

        #[test]
        fn identical_seeds_identical_streams(seed in any::<u64>()) {
            let e = WeightEnsemble::from_json(r#"{"dim":2,"kind":"parametric","generator":{"name":"iid-uniform-entries","lo":0.1,"hi":1.0,"n":2}}"#).unwrap();
            let a: Vec<Vec<f64>> = { let mut r = StreamKey::new(seed).rng(); (0..5).map(|_| e.sample_mu(&mut r).unwrap().entries().to_vec()).collect() };
            let b: Vec<Vec<f64>> = { let mut r = StreamKey::new(seed).rng(); (0..5).map(|_| e.sample_mu(&mut r).unwrap().entries().to_vec()).collect() };
            prop_assert_eq!(a, b);
        }
    }
}
