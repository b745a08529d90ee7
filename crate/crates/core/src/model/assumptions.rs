//! Checks of the structural and moment assumptions on an ensemble.

use std::collections::{HashSet, VecDeque};
use std::sync::OnceLock;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::{norm, NonnegMatrix};
use crate::rng::{RngStream, StreamKey};
use crate::stats::MeanEstimate;

use super::{EnsembleKind, WeightEnsemble};

/// Verdict of the condition-C search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ConditionC {
    /// Every support matrix is allowable and `witness` is a positive product.
    Holds { witness: Vec<Vec<f64>>, word: Vec<usize> },
    /// A support matrix is not allowable.
    Fails { offending: Vec<Vec<f64>> },
    /// No positive product up to the search depth.
    Inconclusive { depth: usize, patterns_seen: usize },
}

impl ConditionC {
    pub fn holds(&self) -> bool {
        matches!(self, ConditionC::Holds { .. })
    }
}

const SAMPLED_SUPPORT: usize = 64;

fn support_for_checks(ens: &WeightEnsemble) -> crate::Result<Vec<NonnegMatrix>> {
    match ens.kind() {
        EnsembleKind::Mixture(_) => Ok(ens.support().expect("mixture")),
        EnsembleKind::Parametric(_) => {
            let mut rng = StreamKey::new(0).tag("sampled-support").rng();
            let mut out = Vec::with_capacity(SAMPLED_SUPPORT);
            while out.len() < SAMPLED_SUPPORT {
                out.push(ens.sample_mu(&mut rng)?.into_owned());
            }
            Ok(out)
        }
    }
}

fn pattern(m: &NonnegMatrix) -> Vec<bool> {
    m.entries().iter().map(|v| *v > 0.0).collect()
}

fn normalized(m: NonnegMatrix) -> NonnegMatrix {
    let s = m.max_entry();
    if s > 0.0 {
        m.scale(1.0 / s)
    } else {
        m
    }
}

/// Allowability of the support plus a breadth-first search over products of
/// length up to `search_depth` for a strictly positive one.
///
/// Parametric ensembles are checked on a fixed sample of 64 draws from `μ`.
pub fn check_condition_c(ens: &WeightEnsemble, search_depth: usize) -> crate::Result<ConditionC> {
    let support = support_for_checks(ens)?;
    if let Some(bad) = support.iter().find(|m| !m.is_allowable()) {
        return Ok(ConditionC::Fails { offending: bad.rows() });
    }
    // Products are tracked by zero pattern only; the real product is kept as witness.
    let mut seen: HashSet<Vec<bool>> = HashSet::new();
    let mut queue: VecDeque<(NonnegMatrix, Vec<usize>)> = VecDeque::new();
    for (i, m) in support.iter().enumerate() {
        if seen.insert(pattern(m)) {
            queue.push_back((normalized(m.clone()), vec![i]));
        }
    }
    while let Some((prod, word)) = queue.pop_front() {
        if prod.is_positive() {
            return Ok(ConditionC::Holds { witness: prod.rows(), word });
        }
        if word.len() >= search_depth {
            continue;
        }
        for (i, m) in support.iter().enumerate() {
            let next = normalized(prod.mul(m));
            if seen.insert(pattern(&next)) {
                let mut w = word.clone();
                w.push(i);
                queue.push_back((next, w));
            }
        }
    }
    Ok(ConditionC::Inconclusive { depth: search_depth, patterns_seen: seen.len() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AperiodicityVerdict {
    LikelyNonArithmetic,
    PossiblyArithmetic,
    NoEvidence,
}

/// Evidence about the additive group generated by `log λ` of positive products.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AperiodicityReport {
    pub verdict: AperiodicityVerdict,
    /// Distinct values of `log λ` (Perron roots of positive products).
    pub log_lambdas: Vec<f64>,
    /// Ratios to the first nonzero value.
    pub ratios: Vec<f64>,
    /// Largest lattice span consistent with every value, if one was found.
    pub span: Option<f64>,
    pub products_examined: usize,
}

const APERIODIC_PRODUCT_CAP: usize = 4096;
const SPAN_FLOOR: f64 = 1e-6;
const RATIONAL_DENOM_CAP: i64 = 10_000;
const RATIONAL_TOL: f64 = 1e-9;

/// Best rational approximation `p/q` with `q ≤ RATIONAL_DENOM_CAP` within tolerance.
fn as_rational(x: f64) -> Option<(i64, i64)> {
    let (mut h0, mut h1) = (0i64, 1i64);
    let (mut k0, mut k1) = (1i64, 0i64);
    let mut r = x;
    for _ in 0..64 {
        let a = r.floor();
        if a.abs() > 1e12 {
            return None;
        }
        let a = a as i64;
        let h2 = a.checked_mul(h1)?.checked_add(h0)?;
        let k2 = a.checked_mul(k1)?.checked_add(k0)?;
        if k2 > RATIONAL_DENOM_CAP {
            return None;
        }
        if (x - h2 as f64 / k2 as f64).abs() <= RATIONAL_TOL * x.abs().max(1.0) {
            return Some((h2, k2));
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        let frac = r - a as f64;
        if frac.abs() < 1e-15 {
            return None;
        }
        r = 1.0 / frac;
    }
    None
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// Heuristic test of non-arithmeticity: enumerates products up to
/// `search_depth` (at most 4096), records `log λ` of the positive ones and
/// looks for a common lattice span.
pub fn check_aperiodicity_heuristic(ens: &WeightEnsemble, search_depth: usize) -> crate::Result<AperiodicityReport> {
    let support = support_for_checks(ens)?;
    let mut values: Vec<f64> = Vec::new();
    let mut examined = 0usize;
    // Each entry: product normalized by max entry plus the log of the scale removed.
    let mut layer: Vec<(NonnegMatrix, f64)> = support
        .iter()
        .map(|m| {
            let s = m.max_entry();
            (m.scale(1.0 / s), s.ln())
        })
        .collect();
    'outer: for depth in 1..=search_depth {
        for (m, log_scale) in &layer {
            examined += 1;
            if m.is_positive() {
                let (lambda, _) = m.perron();
                let v = lambda.ln() + log_scale;
                if !values.iter().any(|w| (w - v).abs() <= 1e-12 * v.abs().max(1.0)) {
                    values.push(v);
                }
            }
            if examined >= APERIODIC_PRODUCT_CAP {
                break 'outer;
            }
        }
        if depth == search_depth {
            break;
        }
        let mut next = Vec::new();
        for (m, ls) in &layer {
            for s in &support {
                let p = m.mul(s);
                let sc = p.max_entry();
                if sc > 0.0 {
                    next.push((p.scale(1.0 / sc), ls + sc.ln()));
                }
                if next.len() + examined >= APERIODIC_PRODUCT_CAP {
                    break;
                }
            }
        }
        layer = next;
    }
    let nonzero: Vec<f64> = values.iter().copied().filter(|v| v.abs() > 1e-14).collect();
    if values.is_empty() {
        return Ok(AperiodicityReport {
            verdict: AperiodicityVerdict::NoEvidence,
            log_lambdas: values,
            ratios: vec![],
            span: None,
            products_examined: examined,
        });
    }
    if nonzero.is_empty() {
        // Every positive product has Perron root 1: the group is {0}.
        return Ok(AperiodicityReport {
            verdict: AperiodicityVerdict::PossiblyArithmetic,
            log_lambdas: values,
            ratios: vec![],
            span: Some(0.0),
            products_examined: examined,
        });
    }
    let base = nonzero[0];
    let ratios: Vec<f64> = nonzero.iter().map(|v| v / base).collect();
    let rationals: Option<Vec<(i64, i64)>> = ratios.iter().map(|r| as_rational(*r)).collect();
    let span = rationals.map(|rs| {
        let l = rs.iter().fold(1i64, |acc, (_, q)| acc / gcd(acc, *q) * q);
        let g = rs.iter().fold(0i64, |acc, (p, q)| gcd(acc, p * (l / q)));
        (base * g as f64 / l as f64).abs()
    });
    let verdict = match span {
        Some(s) if s > SPAN_FLOOR => AperiodicityVerdict::PossiblyArithmetic,
        _ => AperiodicityVerdict::LikelyNonArithmetic,
    };
    Ok(AperiodicityReport { verdict, log_lambdas: values, ratios, span, products_examined: examined })
}

/// `ι(M) = min_{x ∈ S_+} |M x|` to within `tol`.
pub fn iota(m: &NonnegMatrix, tol: f64) -> f64 {
    let d = m.dim();
    match d {
        1 => m.get(0, 0),
        2 => iota_planar(m, tol),
        _ => iota_projected_gradient(m, tol),
    }
}

fn iota_planar(m: &NonnegMatrix, tol: f64) -> f64 {
    const GRID: usize = 4096;
    static TABLE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    let h = std::f64::consts::FRAC_PI_2 / (GRID - 1) as f64;
    let table = TABLE.get_or_init(|| (0..GRID).map(|i| ((i as f64 * h).cos().max(0.0), (i as f64 * h).sin().max(0.0))).collect());
    // |Mx|² = p c² + 2 q c s + r s² with MᵀM = [[p, q], [q, r]]
    let (a, b, c, d) = (m.get(0, 0), m.get(0, 1), m.get(1, 0), m.get(1, 1));
    let (p, q, r) = (a * a + c * c, a * b + c * d, b * b + d * d);
    let g = |cs: f64, sn: f64| p * cs * cs + 2.0 * q * cs * sn + r * sn * sn;
    let f = |t: f64| g(t.cos().max(0.0), t.sin().max(0.0)).max(0.0).sqrt();
    let (mut best_i, mut best) = (0usize, f64::INFINITY);
    for (i, (cs, sn)) in table.iter().enumerate() {
        let v = g(*cs, *sn);
        if v < best {
            best = v;
            best_i = i;
        }
    }
    let best = best.max(0.0).sqrt();
    let mut lo = (best_i as f64 - 1.0).max(0.0) * h;
    let mut hi = ((best_i + 1) as f64 * h).min(std::f64::consts::FRAC_PI_2);
    let gr = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - gr * (hi - lo);
    let mut b = lo + gr * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    while hi - lo > tol.max(1e-15) {
        if fa < fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - gr * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + gr * (hi - lo);
            fb = f(b);
        }
    }
    best.min(fa).min(fb).min(f(0.5 * (lo + hi)))
}

fn project(x: &mut [f64]) -> bool {
    for v in x.iter_mut() {
        *v = v.max(0.0);
    }
    let n = norm(x);
    if n == 0.0 {
        return false;
    }
    x.iter_mut().for_each(|v| *v /= n);
    true
}

fn iota_projected_gradient(m: &NonnegMatrix, tol: f64) -> f64 {
    const RESTARTS: usize = 32;
    let d = m.dim();
    let mtm = m.transpose().mul(m);
    let f = |x: &[f64]| norm(&m.mul_vec(x));
    let lip = 2.0 * m.op_norm().powi(2).max(1e-300);
    let mut rng: RngStream = StreamKey::new(0).tag("iota-restarts").rng();
    let mut starts: Vec<Vec<f64>> = (0..d).map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for _ in 0..RESTARTS {
        let mut x: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
        if project(&mut x) {
            starts.push(x);
        }
    }
    let mut best = f64::INFINITY;
    for mut x in starts {
        let mut fx = f(&x);
        for _ in 0..10_000 {
            // gradient of |Mx|² is 2 MᵀM x
            let g = mtm.mul_vec(&x);
            let mut y: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - 2.0 * gi / lip).collect();
            if !project(&mut y) {
                break;
            }
            let fy = f(&y);
            let step = x.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            x = y;
            let improved = fx - fy;
            fx = fy.min(fx);
            if step < tol && improved.abs() < tol {
                break;
            }
        }
        best = best.min(fx);
    }
    best
}

/// Status of one assumption.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum AssumptionStatus {
    Holds,
    Fails { reason: String },
    Estimated { value: f64, ci: (f64, f64) },
    UndecidableHeuristic { evidence: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionEntry {
    pub name: String,
    #[serde(flatten)]
    pub status: AssumptionStatus,
    pub detail: String,
}

/// One entry for each of A0, A1, A2, A3, A4, A5, A6, A6a, A7, A8.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub entries: Vec<AssumptionEntry>,
}

pub const ASSUMPTION_NAMES: [&str; 10] = ["A0", "A1", "A2", "A3", "A4", "A5", "A6", "A6a", "A7", "A8"];

/// The parts of a spectral solve needed for the A5 entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaInfo {
    pub alpha: f64,
    pub m_prime: f64,
}

fn entry(name: &str, status: AssumptionStatus, detail: impl Into<String>) -> AssumptionEntry {
    AssumptionEntry { name: name.into(), status, detail: detail.into() }
}

fn estimated(m: &MeanEstimate) -> AssumptionStatus {
    let (lo, hi) = m.ci(1.96);
    AssumptionStatus::Estimated { value: m.mean, ci: (lo, hi) }
}

/// Moment estimates for A6, A6a, A7 and A8 (in this order), plus the
/// `E‖M‖^{α±ε}` values used for A5's interior condition.
///
/// Mixtures get exact sums (zero-width intervals); parametric ensembles get
/// Monte-Carlo means over `n_mc` draws.
pub fn estimate_moment_conditions(
    ens: &WeightEnsemble,
    alpha: f64,
    eps: f64,
    n_mc: usize,
    rng: &mut RngStream,
) -> crate::Result<Vec<AssumptionEntry>> {
    // Per-matrix functionals under μ.
    let per_matrix = |m: &NonnegMatrix| -> [f64; 6] {
        let nm = m.op_norm();
        let li = iota(&m.transpose(), 1e-10).ln().abs();
        [
            nm.powf(alpha) * (1.0 + nm).ln() + nm.powf(alpha) * li,
            nm.powf(alpha) * (1.0 + nm).ln() + (1.0 + nm).powf(alpha) * li,
            nm,
            nm.powf((alpha - eps).max(0.0)),
            nm.powf(alpha + eps),
            0.0,
        ]
    };
    let (mats, q_moment): ([MeanEstimate; 5], MeanEstimate) = match ens.kind() {
        EnsembleKind::Mixture(atoms) => {
            let mut acc = [0.0; 5];
            for (p, m) in ens.mu_atoms().expect("mixture") {
                let v = per_matrix(&m);
                for k in 0..5 {
                    acc[k] += p * v[k];
                }
            }
            let q: f64 = atoms.iter().map(|a| a.prob * a.q.norm().powf(alpha + eps)).sum();
            let exact = |x: f64| MeanEstimate { mean: x, se: 0.0, n: 0 };
            (acc.map(exact), exact(q))
        }
        EnsembleKind::Parametric(_) => {
            let n = n_mc.max(2);
            let mut cols: [Vec<f64>; 5] = Default::default();
            let mut qs = Vec::with_capacity(n);
            for _ in 0..n {
                let m = ens.sample_mu(rng)?;
                let v = per_matrix(&m);
                for k in 0..5 {
                    cols[k].push(v[k]);
                }
                let r = ens.sample_weights(rng)?;
                qs.push(r.q.norm().powf(alpha + eps));
            }
            (cols.map(|c| MeanEstimate::from_samples(&c)), MeanEstimate::from_samples(&qs))
        }
    };
    let mut out = vec![
        entry("A6", estimated(&mats[0]), "E|M|^a log(1+|M|) + E|M|^a |log iota(M^T)|"),
        entry("A6a", estimated(&mats[1]), "E|M|^a log(1+|M|) + E(1+|M|)^a |log iota(M^T)|"),
        entry("A7", estimated(&mats[2]), "E|M|"),
    ];
    let a8 = if q_moment.mean > 0.0 {
        estimated(&q_moment)
    } else {
        AssumptionStatus::Fails { reason: "E|Q|^(a+e) > 0 fails: Q is identically zero".into() }
    };
    out.push(entry("A8", a8, format!("E|Q|^(a+e) with a={alpha}, e={eps}")));
    out.push(entry(
        "A5-interior",
        estimated(&mats[4]),
        format!("E|M|^(a-e) = {:.6e}, E|M|^(a+e) = {:.6e}", mats[3].mean, mats[4].mean),
    ));
    Ok(out)
}

impl AssumptionReport {
    /// Assembles the full report. `alpha` carries the spectral solve, if any.
    pub fn build(
        ens: &WeightEnsemble,
        alpha: Option<AlphaInfo>,
        search_depth: usize,
        eps: f64,
        n_mc: usize,
        key: StreamKey,
    ) -> crate::Result<Self> {
        let mut entries = Vec::with_capacity(ASSUMPTION_NAMES.len());
        entries.push(entry("A0", AssumptionStatus::Holds, "entries are validated nonnegative on construction"));
        entries.push(entry("A1", AssumptionStatus::Holds, format!("N is bounded by {}", ens.n_max())));
        let en = ens.expected_n();
        let min_n_ok = true; // every atom and N law is supported on N >= 1
        entries.push(if en > 1.0 && min_n_ok {
            entry("A2", AssumptionStatus::Holds, format!("E N = {en}"))
        } else {
            entry("A2", AssumptionStatus::Fails { reason: format!("E N = {en} is not > 1") }, "")
        });
        let cc = check_condition_c(ens, search_depth)?;
        entries.push(match &cc {
            ConditionC::Holds { word, .. } => {
                entry("A3", AssumptionStatus::Holds, format!("positive product of length {}", word.len()))
            }
            ConditionC::Fails { offending } => entry(
                "A3",
                AssumptionStatus::Fails { reason: format!("non-allowable support matrix {offending:?}") },
                "",
            ),
            ConditionC::Inconclusive { depth, .. } => entry(
                "A3",
                AssumptionStatus::UndecidableHeuristic { evidence: format!("no positive product up to depth {depth}") },
                "",
            ),
        });
        let ap = check_aperiodicity_heuristic(ens, search_depth)?;
        entries.push(entry(
            "A4",
            AssumptionStatus::UndecidableHeuristic { evidence: format!("{:?}", ap.verdict) },
            format!("{} distinct log Perron roots, span {:?}", ap.log_lambdas.len(), ap.span),
        ));
        let a = alpha.map(|a| a.alpha).or(ens.alpha_target()).unwrap_or(1.0);
        let mut rng = key.tag("assumption-moments").rng();
        let moments = estimate_moment_conditions(ens, a, eps, n_mc, &mut rng)?;
        let interior = moments.iter().find(|e| e.name == "A5-interior").expect("present").detail.clone();
        entries.push(match alpha {
            Some(AlphaInfo { alpha, m_prime }) if alpha > 0.0 && alpha <= 1.0 && m_prime <= 1e-9 => {
                entry("A5", AssumptionStatus::Holds, format!("alpha = {alpha}, m'(alpha) = {m_prime}; {interior}"))
            }
            Some(AlphaInfo { alpha, m_prime }) => entry(
                "A5",
                AssumptionStatus::Fails { reason: format!("alpha = {alpha}, m'(alpha) = {m_prime}") },
                interior,
            ),
            None => entry(
                "A5",
                AssumptionStatus::UndecidableHeuristic { evidence: "spectral solve not supplied".into() },
                interior,
            ),
        });
        entries.extend(moments.into_iter().filter(|e| e.name != "A5-interior"));
        let order = |n: &str| ASSUMPTION_NAMES.iter().position(|x| *x == n).unwrap_or(usize::MAX);
        entries.sort_by_key(|e| order(&e.name));
        Ok(AssumptionReport { entries })
    }

    pub fn get(&self, name: &str) -> Option<&AssumptionEntry> {
        self.entries.iter().find(|e| e.name == name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::NonnegVector;
    use crate::model::{presets, WeightAtom};

    fn m(rows: &[&[f64]]) -> NonnegMatrix {
        NonnegMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn support_ensemble(ms: Vec<NonnegMatrix>) -> WeightEnsemble {
        let p = 1.0 / ms.len() as f64;
        let d = ms[0].dim();
        let atoms = ms.into_iter().map(|t| WeightAtom { prob: p, q: NonnegVector::zeros(d), ts: vec![t] }).collect();
        WeightEnsemble::mixture(d, atoms).unwrap()
    }

    /// All products of length ≤ depth, enumerated exhaustively.
    fn all_products(ms: &[NonnegMatrix], depth: usize) -> Vec<NonnegMatrix> {
        let mut out = ms.to_vec();
        let mut layer = ms.to_vec();
        for _ in 1..depth {
            layer = layer.iter().flat_map(|p| ms.iter().map(move |m| p.mul(m))).collect();
            out.extend(layer.iter().cloned());
        }
        out
    }

    #[test]
    fn condition_c_positive_support() {
        let e = support_ensemble(vec![m(&[&[2.0, 1.0], &[1.0, 2.0]])]);
        match check_condition_c(&e, 1).unwrap() {
            ConditionC::Holds { witness, word } => {
                assert_eq!(word.len(), 1);
                assert!(witness.iter().flatten().all(|v| *v > 0.0));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn condition_c_diagonal_is_inconclusive() {
        for depth in [1, 3, 6, 10] {
            assert!(matches!(
                check_condition_c(&presets::stable_diagonal(), depth).unwrap(),
                ConditionC::Inconclusive { .. }
            ));
        }
    }

    #[test]
    fn condition_c_permutation_is_inconclusive() {
        let p = m(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let products = all_products(&[p.clone()], 6);
        assert!(products.iter().all(|q| !q.is_positive()));
        assert!(matches!(check_condition_c(&support_ensemble(vec![p]), 6).unwrap(), ConditionC::Inconclusive { .. }));
    }

    #[test]
    fn condition_c_needs_a_product() {
        // neither factor is positive but the product [[1,1],[1,1]]-like is
        let a = m(&[&[1.0, 1.0], &[0.0, 1.0]]);
        let b = m(&[&[1.0, 0.0], &[1.0, 1.0]]);
        match check_condition_c(&support_ensemble(vec![a, b]), 6).unwrap() {
            ConditionC::Holds { witness, word } => {
                assert_eq!(word.len(), 2);
                assert!(witness.iter().flatten().all(|v| *v > 0.0));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn condition_c_fails_on_non_allowable() {
        let bad = m(&[&[1.0, 1.0], &[0.0, 0.0]]);
        let e = support_ensemble(vec![m(&[&[2.0, 1.0], &[1.0, 2.0]]), bad.clone()]);
        assert_eq!(check_condition_c(&e, 6).unwrap(), ConditionC::Fails { offending: bad.rows() });
    }

    #[test]
    fn aperiodicity_two_positive_matrices() {
        let e = support_ensemble(vec![m(&[&[2.0, 1.0], &[1.0, 2.0]]), m(&[&[3.0, 1.0], &[1.0, 1.0]])]);
        let r = check_aperiodicity_heuristic(&e, 1).unwrap();
        assert_eq!(r.log_lambdas.len(), 2);
        assert!((r.log_lambdas[0] - 3f64.ln()).abs() < 1e-12);
        assert!((r.log_lambdas[1] - (2.0 + 2f64.sqrt()).ln()).abs() < 1e-12);
        assert_eq!(r.verdict, AperiodicityVerdict::LikelyNonArithmetic);
        let deep = check_aperiodicity_heuristic(&e, 4).unwrap();
        assert_eq!(deep.verdict, AperiodicityVerdict::LikelyNonArithmetic);
    }

    #[test]
    fn aperiodicity_single_scaled_positive_matrix() {
        let r = check_aperiodicity_heuristic(&presets::perron_deterministic(0.25), 6).unwrap();
        assert_eq!(r.verdict, AperiodicityVerdict::PossiblyArithmetic);
        // λ(Pⁿ) = λ(P)ⁿ: every value is a multiple of log(3/4)
        assert!((r.span.unwrap() - (0.75f64).ln().abs()).abs() < 1e-9);
    }

    #[test]
    fn aperiodicity_without_positive_products() {
        let r = check_aperiodicity_heuristic(&presets::stable_diagonal(), 6).unwrap();
        assert_eq!(r.verdict, AperiodicityVerdict::NoEvidence);
    }

    #[test]
    fn iota_closed_forms() {
        assert!((iota(&NonnegMatrix::identity(2), 1e-12) - 1.0).abs() < 1e-12);
        assert!((iota(&NonnegMatrix::diag(&[0.3, 2.0]), 1e-12) - 0.3).abs() < 1e-12);
        assert!((iota(&NonnegMatrix::diag(&[2.0, 0.7, 1.5]), 1e-12) - 0.7).abs() < 1e-9);
        assert!((iota(&NonnegMatrix::identity(3), 1e-12) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn iota_ones_matches_dense_grid_oracle() {
        let a = m(&[&[1.0, 1.0], &[1.0, 1.0]]);
        let oracle = (0..=200_000)
            .map(|i| {
                let t = i as f64 / 200_000.0 * std::f64::consts::FRAC_PI_2;
                norm(&a.mul_vec(&[t.cos(), t.sin()]))
            })
            .fold(f64::INFINITY, f64::min);
        assert!((oracle - 2f64.sqrt()).abs() < 1e-9);
        assert!((iota(&a, 1e-12) - oracle).abs() < 1e-9);
    }

    #[test]
    fn moments_exact_for_mixture() {
        let e = presets::scalar(2, 0.5, 3, Some(vec![1.0, 0.0]));
        let mut r = StreamKey::new(1).rng();
        let v = estimate_moment_conditions(&e, 0.5, 0.1, 10, &mut r).unwrap();
        let get = |n: &str| v.iter().find(|x| x.name == n).unwrap().status.clone();
        assert_eq!(get("A7"), AssumptionStatus::Estimated { value: 0.5, ci: (0.5, 0.5) });
        assert_eq!(get("A8"), AssumptionStatus::Estimated { value: 1.0, ci: (1.0, 1.0) });
        let a6 = 0.5f64.sqrt() * (1.5f64.ln() + 0.5f64.ln().abs());
        match get("A6") {
            AssumptionStatus::Estimated { value, .. } => assert!((value - a6).abs() < 1e-9),
            s => panic!("{s:?}"),
        }
    }

    #[test]
    fn a8_fails_for_zero_q() {
        let mut r = StreamKey::new(1).rng();
        let v = estimate_moment_conditions(&presets::stable_diagonal(), 0.5, 0.1, 10, &mut r).unwrap();
        assert!(matches!(v.iter().find(|x| x.name == "A8").unwrap().status, AssumptionStatus::Fails { .. }));
    }

    #[test]
    fn parametric_moments_agree_with_large_budget() {
        let json = r#"{"dim":2,"kind":"parametric","generator":{"name":"iid-uniform-entries","lo":0.1,"hi":1.0,"n":2}}"#;
        let e = WeightEnsemble::from_json(json).unwrap();
        let small = estimate_moment_conditions(&e, 0.5, 0.1, 10_000, &mut StreamKey::new(2).rng()).unwrap();
        let big = estimate_moment_conditions(&e, 0.5, 0.1, 1_000_000, &mut StreamKey::new(3).rng()).unwrap();
        for name in ["A6", "A6a", "A7"] {
            let (AssumptionStatus::Estimated { value: a, ci: ca }, AssumptionStatus::Estimated { value: b, .. }) = (
                &small.iter().find(|x| x.name == name).unwrap().status,
                &big.iter().find(|x| x.name == name).unwrap().status,
            ) else {
                panic!()
            };
            let sigma = (ca.1 - ca.0) / (2.0 * 1.96);
            assert!((a - b).abs() <= 3.0 * sigma * 1.05, "{name}: {a} vs {b}");
        }
    }

    #[test]
    fn report_has_every_assumption_once() {
        let rep = AssumptionReport::build(&presets::stable_diagonal(), None, 6, 0.1, 100, StreamKey::new(1)).unwrap();
        let names: Vec<&str> = rep.entries.iter().map(|e| e.name.as_str()).collect();
        assert_eq!(names, ASSUMPTION_NAMES);
        assert!(matches!(rep.get("A4").unwrap().status, AssumptionStatus::UndecidableHeuristic { .. }));
    }

    use proptest::prelude::{any, prop_assert, prop_assume, proptest, ProptestConfig};

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn iota_is_a_lower_bound(v in proptest::collection::vec(0.05f64..3.0, 4), seed in any::<u64>()) {
            let a = NonnegMatrix::new(2, v).unwrap();
            let io = iota(&a, 1e-12);
            prop_assert!(io <= a.op_norm() + 1e-12);
            let mut r = StreamKey::new(seed).rng();
            for _ in 0..1000 {
                let x = [r.random::<f64>(), r.random::<f64>()];
                let n = norm(&x);
                if n == 0.0 { continue; }
                let x = [x[0] / n, x[1] / n];
                prop_assert!(io <= norm(&a.mul_vec(&x)) + 1e-12);
            }
        }

        #[test]
        fn iota_3d_is_a_lower_bound(v in proptest::collection::vec(0.05f64..3.0, 9), seed in any::<u64>()) {
            let a = NonnegMatrix::new(3, v).unwrap();
            let io = iota(&a, 1e-12);
            prop_assert!(io <= a.op_norm() + 1e-12);
            let mut r = StreamKey::new(seed).rng();
            for _ in 0..1000 {
                let mut x = vec![r.random::<f64>(), r.random::<f64>(), r.random::<f64>()];
                if !project(&mut x) { continue; }
                prop_assert!(io <= norm(&a.mul_vec(&x)) + 1e-9);
            }
        }

        #[test]
        fn condition_c_witness_is_positive(v in proptest::collection::vec(proptest::option::weighted(0.6, 0.1f64..2.0), 8)) {
            let vals: Vec<f64> = v.into_iter().map(|x| x.unwrap_or(0.0)).collect();
            let a = NonnegMatrix::new(2, vals[..4].to_vec()).unwrap();
            let b = NonnegMatrix::new(2, vals[4..].to_vec()).unwrap();
            prop_assume!(!a.is_zero() && !b.is_zero());
            let e = support_ensemble(vec![a.clone(), b.clone()]);
            if let ConditionC::Holds { witness, word } = check_condition_c(&e, 6).unwrap() {
                prop_assert!(witness.iter().flatten().all(|x| *x > 0.0));
                let ms = [a, b];
                let direct = word.iter().skip(1).fold(ms[word[0]].clone(), |p, i| p.mul(&ms[*i]));
                prop_assert!(direct.is_positive());
            }
        }
    }
}
