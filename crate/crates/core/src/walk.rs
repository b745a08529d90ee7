//! The Markov random walk `(U_n, S_n)` driven by i.i.d. `μ`-matrices,
//!
//! ```text
//! U_n = M_nᵀ·U_{n−1},   S_n = S_{n−1} − log|M_nᵀ U_{n−1}|,
//! ```
//!
//! its `s`-shifted version and the overshoot process at first passage.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{transpose_action, NonnegMatrix, SpherePoint};
use crate::model::WeightEnsemble;
use crate::rng::{par_map_indexed, RngStream, StreamKey};
use crate::spectral::{mu_support, HEvaluator, SpectralSolution};
use crate::stats::{effective_sample_size, quantile_sorted, MeanEstimate};

/// Default cap on the length of one overshoot path.
pub const DEFAULT_MAX_STEPS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkPath {
    pub u0: SpherePoint,
    /// `(U_k, S_k)` for `k = 0..=n`.
    pub states: Vec<(SpherePoint, f64)>,
    /// Importance log-weight for the shifted measure; zero under `P⁰`.
    pub log_weight: f64,
}

impl WalkPath {
    /// Number of steps `n`.
    pub fn len(&self) -> usize {
        self.states.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn s_n(&self) -> f64 {
        self.states.last().expect("nonempty").1
    }

    pub fn u_n(&self) -> &SpherePoint {
        &self.states.last().expect("nonempty").0
    }

    /// `S_k − S_{k−1}`.
    pub fn increments(&self) -> Vec<f64> {
        self.states.windows(2).map(|w| w[1].1 - w[0].1).collect()
    }

    /// Rows `n,S_n,u_1..u_d,weight`.
    pub fn to_csv(&self) -> String {
        let d = self.u0.dim();
        let mut out = String::from("n,S_n");
        for i in 0..d {
            out.push_str(&format!(",u{}", i + 1));
        }
        out.push_str(",weight\n");
        let w = self.log_weight.exp();
        for (k, (u, s)) in self.states.iter().enumerate() {
            out.push_str(&format!("{k},{s}"));
            for c in u.coords() {
                out.push_str(&format!(",{c}"));
            }
            out.push_str(&format!(",{w}\n"));
        }
        out
    }
}

fn step(m: &NonnegMatrix, u: &[f64]) -> Result<(f64, Vec<f64>)> {
    let (len, unit) = transpose_action(m, u);
    if len == 0.0 {
        return Err(Error::StructuralViolation("Mᵀu = 0 for a direction u in the orthant".into()));
    }
    Ok((len, unit))
}

/// The walk driven by a given matrix sequence.
pub fn walk_from_matrices(u0: &SpherePoint, ms: &[NonnegMatrix]) -> Result<WalkPath> {
    let mut states = Vec::with_capacity(ms.len() + 1);
    states.push((u0.clone(), 0.0));
    let mut u = u0.coords().to_vec();
    let mut s = 0.0;
    for m in ms {
        let (len, unit) = step(m, &u)?;
        s -= len.ln();
        u = unit;
        states.push((SpherePoint::from_vec(&u)?, s));
    }
    Ok(WalkPath { u0: u0.clone(), states, log_weight: 0.0 })
}

/// A path of length `n` under `P⁰_u`: `M_k` i.i.d. with law `μ`.
pub fn sample_walk_p0(u0: &SpherePoint, n: usize, ens: &WeightEnsemble, rng: &mut RngStream) -> Result<WalkPath> {
    check_dim(u0, ens)?;
    let ms: Vec<NonnegMatrix> = (0..n).map(|_| ens.sample_mu(rng).map(|m| m.into_owned())).collect::<Result<_>>()?;
    walk_from_matrices(u0, &ms)
}

fn check_dim(u0: &SpherePoint, ens: &WeightEnsemble) -> Result<()> {
    if u0.dim() != ens.dim() {
        return Err(Error::Domain(format!("start direction has dimension {}, ensemble {}", u0.dim(), ens.dim())));
    }
    Ok(())
}

/// The change of measure from `P⁰_u` to `P^s_u` on paths of length `n`:
///
/// ```text
/// dP^s_u/dP⁰_u = (E N / m(s))ⁿ · H^s(e^{−S_n} U_n) / H^s(u).
/// ```
#[derive(Debug, Clone)]
pub struct ShiftedMeasure {
    pub s: f64,
    /// `log(E N / m(s))`.
    pub log_ratio: f64,
    pub h: HEvaluator,
}

impl ShiftedMeasure {
    pub fn new(sol: &SpectralSolution) -> Self {
        ShiftedMeasure { s: sol.s, log_ratio: (sol.expected_n / sol.m_s).ln(), h: sol.evaluator() }
    }

    pub fn log_weight(&self, u0: &[f64], n: usize, u_n: &[f64], s_n: f64) -> f64 {
        n as f64 * self.log_ratio - self.s * s_n + self.h.eval(u_n).ln() - self.h.eval(u0).ln()
    }

    pub fn weigh(&self, path: &mut WalkPath) {
        path.log_weight = self.log_weight(path.u0.coords(), path.len(), path.u_n().coords(), path.s_n());
    }
}

/// A Monte-Carlo estimate with importance-sampling diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedEstimate {
    pub estimate: MeanEstimate,
    pub ci: (f64, f64),
    pub ess: f64,
    pub warnings: Vec<String>,
}

impl WeightedEstimate {
    fn from_terms(terms: &[f64], weights: &[f64]) -> Self {
        let estimate = MeanEstimate::from_samples(terms);
        let ess = effective_sample_size(weights);
        let mut warnings = Vec::new();
        if !(ess >= 0.01 * weights.len() as f64) {
            warnings.push(format!("degenerate importance weights: effective sample size {ess:.1} of {}", weights.len()));
        }
        WeightedEstimate { ci: estimate.ci(1.96), estimate, ess, warnings }
    }
}

/// `E^s_u[f]` as the plain average of `f(path)·dP^s/dP⁰` over `n_mc` paths.
pub fn shifted_expectation<F>(
    f: F,
    u0: &SpherePoint,
    n: usize,
    ens: &WeightEnsemble,
    shift: &ShiftedMeasure,
    n_mc: usize,
    key: StreamKey,
) -> Result<WeightedEstimate>
where
    F: Fn(&WalkPath) -> f64 + Sync,
{
    check_dim(u0, ens)?;
    let key = key.tag("shifted-expectation");
    let draws: Vec<Result<(f64, f64)>> = par_map_indexed(n_mc, |i| {
        let mut path = sample_walk_p0(u0, n, ens, &mut key.index(i).rng())?;
        shift.weigh(&mut path);
        let w = path.log_weight.exp();
        Ok((f(&path) * w, w))
    });
    let draws: Vec<(f64, f64)> = draws.into_iter().collect::<Result<_>>()?;
    let (terms, weights): (Vec<f64>, Vec<f64>) = draws.into_iter().unzip();
    Ok(WeightedEstimate::from_terms(&terms, &weights))
}

/// Direct sampler of the shifted chain on a discrete `μ`:
/// from `u` the next matrix is `M_j` with probability `∝ μ_j · H^s(M_jᵀu)`.
///
/// With the exact eigenfunction the normalizer is `m(s)/E N`; the discretized
/// `H^s` is renormalized at every step.
#[derive(Debug, Clone)]
pub struct TiltedWalk {
    support: Vec<(f64, NonnegMatrix)>,
    h: HEvaluator,
}

impl TiltedWalk {
    pub fn new(support: Vec<(f64, NonnegMatrix)>, h: HEvaluator) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::Domain("empty matrix support".into()));
        }
        Ok(TiltedWalk { support, h })
    }

    /// Uses the same discrete `μ` as the spectral kernel built with `n_mc` and `key`.
    pub fn from_ensemble(ens: &WeightEnsemble, sol: &SpectralSolution, n_mc: usize, key: StreamKey) -> Result<Self> {
        TiltedWalk::new(mu_support(ens, n_mc, key)?, sol.evaluator())
    }

    pub fn s(&self) -> f64 {
        self.h.s()
    }

    fn step(&self, u: &[f64], rng: &mut RngStream, cum: &mut Vec<f64>) -> Result<(f64, Vec<f64>)> {
        cum.clear();
        let mut total = 0.0;
        for (p, m) in &self.support {
            total += p * self.h.eval(&m.tmul_vec(u));
            cum.push(total);
        }
        if !(total > 0.0) {
            return Err(Error::Domain("shifted transition has zero mass".into()));
        }
        let x = rng.random::<f64>() * total;
        let j = cum.partition_point(|c| *c <= x).min(cum.len() - 1);
        step(&self.support[j].1, u)
    }

    /// A path of length `n` under the shifted measure.
    pub fn sample(&self, u0: &SpherePoint, n: usize, rng: &mut RngStream) -> Result<WalkPath> {
        let mut states = Vec::with_capacity(n + 1);
        states.push((u0.clone(), 0.0));
        let mut u = u0.coords().to_vec();
        let mut s = 0.0;
        let mut cum = Vec::with_capacity(self.support.len());
        for _ in 0..n {
            let (len, unit) = self.step(&u, rng, &mut cum)?;
            s -= len.ln();
            u = unit;
            states.push((SpherePoint::from_vec(&u)?, s));
        }
        Ok(WalkPath { u0: u0.clone(), states, log_weight: 0.0 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SllnLevel {
    pub n: usize,
    /// `S_n/n` along directly sampled shifted paths.
    pub tilted: MeanEstimate,
    /// `E^s_u[S_n/n]` by importance weighting of `P⁰` paths.
    pub weighted: MeanEstimate,
    pub weighted_ess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SllnReport {
    /// `−m'(α)`.
    pub target: f64,
    pub levels: Vec<SllnLevel>,
    /// `|Ŝ_n/n + m'(α)|` at the largest `n`.
    pub diff: f64,
    pub sigma: f64,
    pub floor: f64,
    pub pass: bool,
}

/// Absolute slack added to the `3σ` band, for zero-variance cases.
pub const SLLN_FLOOR: f64 = 1e-6;

/// Compares `E^α_u[S_n]/n` with `−m'(α)` at `n/8, n/4, n/2, n`.
pub fn slln_check(
    u0: &SpherePoint,
    m_prime: f64,
    ens: &WeightEnsemble,
    walker: &TiltedWalk,
    shift: &ShiftedMeasure,
    n: usize,
    n_mc: usize,
    key: StreamKey,
) -> Result<SllnReport> {
    check_dim(u0, ens)?;
    if n == 0 {
        return Err(Error::Domain("SLLN check needs n ≥ 1".into()));
    }
    let mut ns: Vec<usize> = [n / 8, n / 4, n / 2, n].into_iter().filter(|k| *k > 0).collect();
    ns.dedup();
    let tkey = key.tag("slln-tilted");
    let paths: Vec<Result<WalkPath>> = par_map_indexed(n_mc, |i| walker.sample(u0, n, &mut tkey.index(i).rng()));
    let paths: Vec<WalkPath> = paths.into_iter().collect::<Result<_>>()?;
    let wkey = key.tag("slln-weighted");
    let p0: Vec<Result<WalkPath>> = par_map_indexed(n_mc, |i| sample_walk_p0(u0, n, ens, &mut wkey.index(i).rng()));
    let p0: Vec<WalkPath> = p0.into_iter().collect::<Result<_>>()?;
    let levels: Vec<SllnLevel> = ns
        .iter()
        .map(|&k| {
            let v: Vec<f64> = paths.iter().map(|p| p.states[k].1 / k as f64).collect();
            let ws: Vec<f64> = p0
                .iter()
                .map(|p| shift.log_weight(u0.coords(), k, p.states[k].0.coords(), p.states[k].1).exp())
                .collect();
            let terms: Vec<f64> = p0.iter().zip(&ws).map(|(p, w)| w * p.states[k].1 / k as f64).collect();
            SllnLevel {
                n: k,
                tilted: MeanEstimate::from_samples(&v),
                weighted: MeanEstimate::from_samples(&terms),
                weighted_ess: effective_sample_size(&ws),
            }
        })
        .collect();
    let last = levels.last().expect("at least one level").tilted;
    let target = -m_prime;
    let diff = (last.mean - target).abs();
    Ok(SllnReport { target, diff, sigma: last.se, floor: SLLN_FLOOR, pass: diff <= 3.0 * last.se + SLLN_FLOOR, levels })
}

/// `(U(t), R(t))` at `τ_t = inf{n : S_n > t}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OvershootSample {
    pub t: f64,
    pub tau: usize,
    pub u_t: SpherePoint,
    /// `S_τ − t > 0`.
    pub r_t: f64,
    /// `S_{τ−1} ≤ t`.
    pub s_prev: f64,
    /// Shifted-measure log-weight at `τ_t`; zero for directly sampled paths.
    pub log_weight: f64,
}

/// How overshoot paths are produced.
#[derive(Debug, Clone, Copy)]
pub enum OvershootSampler<'a> {
    /// `P⁰` paths weighted by the shifted measure at `τ_t`.
    Weighted { ens: &'a WeightEnsemble, shift: &'a ShiftedMeasure },
    /// Paths of the shifted chain, unit weights.
    Tilted(&'a TiltedWalk),
}

impl OvershootSampler<'_> {
    pub fn sample(&self, u0: &SpherePoint, t: f64, max_steps: usize, rng: &mut RngStream) -> Result<OvershootSample> {
        let mut u = u0.coords().to_vec();
        let mut s = 0.0;
        let mut cum = Vec::new();
        for tau in 1..=max_steps {
            let (len, unit) = match self {
                OvershootSampler::Weighted { ens, .. } => step(&*ens.sample_mu(rng)?, &u)?,
                OvershootSampler::Tilted(w) => w.step(&u, rng, &mut cum)?,
            };
            let next = s - len.ln();
            if next > t {
                let log_weight = match self {
                    OvershootSampler::Weighted { shift, .. } => shift.log_weight(u0.coords(), tau, &unit, next),
                    OvershootSampler::Tilted(_) => 0.0,
                };
                return Ok(OvershootSample { t, tau, u_t: SpherePoint::from_vec(&unit)?, r_t: next - t, s_prev: s, log_weight });
            }
            s = next;
            u = unit;
        }
        Err(Error::NotTransient { max_steps, t })
    }
}

/// One overshoot sample under `P⁰` with its shifted-measure weight.
pub fn sample_overshoot(
    u0: &SpherePoint,
    t: f64,
    ens: &WeightEnsemble,
    shift: &ShiftedMeasure,
    max_steps: usize,
    rng: &mut RngStream,
) -> Result<OvershootSample> {
    check_dim(u0, ens)?;
    OvershootSampler::Weighted { ens, shift }.sample(u0, t, max_steps, rng)
}

/// `n_mc` independent overshoot samples.
pub fn overshoot_samples(
    u0: &SpherePoint,
    t: f64,
    sampler: OvershootSampler<'_>,
    n_mc: usize,
    max_steps: usize,
    key: StreamKey,
) -> Result<Vec<OvershootSample>> {
    let key = key.tag("overshoot");
    par_map_indexed(n_mc, |i| sampler.sample(u0, t, max_steps, &mut key.index(i).rng())).into_iter().collect()
}

/// `E^α_u[f(U(t), R(t))]` as a weighted average over overshoot samples.
pub fn overshoot_expectation<F>(samples: &[OvershootSample], f: F) -> WeightedEstimate
where
    F: Fn(&SpherePoint, f64) -> f64,
{
    let weights: Vec<f64> = samples.iter().map(|s| s.log_weight.exp()).collect();
    let terms: Vec<f64> = samples.iter().zip(&weights).map(|(s, w)| w * f(&s.u_t, s.r_t)).collect();
    WeightedEstimate::from_terms(&terms, &weights)
}

/// Weighted histogram of `(U(t), R(t))`.
///
/// The angular coordinate is the angle between `U(t)` and `e_1`, scaled to
/// `[0, 1]`; `R` is truncated at its 99.9% quantile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhoHistogram {
    pub t: f64,
    pub n: usize,
    pub ess: f64,
    pub angular_bins: usize,
    pub radial_bins: usize,
    pub r_max: f64,
    /// Row-major `angular × radial` masses summing to one.
    pub mass: Vec<f64>,
    pub angular_marginal: Vec<f64>,
    pub radial_marginal: Vec<f64>,
    /// Weighted fraction of samples with `min_j U(t)_j < 1e-3`.
    pub boundary_fraction: f64,
    pub mean_r: f64,
}

pub const RHO_BINS: usize = 64;

fn angular_coordinate(u: &SpherePoint) -> f64 {
    (u.coords()[0].clamp(-1.0, 1.0).acos() / std::f64::consts::FRAC_PI_2).clamp(0.0, 1.0)
}

/// Empirical `ρ` from overshoot samples at one horizon.
pub fn estimate_rho(samples: &[OvershootSample], angular_bins: usize, radial_bins: usize) -> Result<RhoHistogram> {
    if samples.is_empty() || angular_bins == 0 || radial_bins == 0 {
        return Err(Error::Domain("histogram needs samples and bins".into()));
    }
    let w: Vec<f64> = samples.iter().map(|s| s.log_weight.exp()).collect();
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Domain("all overshoot weights vanish".into()));
    }
    let rs = crate::stats::sorted(&samples.iter().map(|s| s.r_t).collect::<Vec<_>>());
    let r_max = quantile_sorted(&rs, 0.999).max(f64::MIN_POSITIVE);
    let mut mass = vec![0.0; angular_bins * radial_bins];
    let mut boundary = 0.0;
    let mut mean_r = 0.0;
    for (s, wi) in samples.iter().zip(&w) {
        let p = wi / total;
        mean_r += p * s.r_t;
        if s.u_t.min_coord() < 1e-3 {
            boundary += p;
        }
        if s.r_t > r_max {
            continue;
        }
        let a = ((angular_coordinate(&s.u_t) * angular_bins as f64) as usize).min(angular_bins - 1);
        let r = ((s.r_t / r_max * radial_bins as f64) as usize).min(radial_bins - 1);
        mass[a * radial_bins + r] += p;
    }
    let kept: f64 = mass.iter().sum();
    if kept > 0.0 {
        mass.iter_mut().for_each(|m| *m /= kept);
    }
    let angular_marginal = (0..angular_bins).map(|a| mass[a * radial_bins..(a + 1) * radial_bins].iter().sum()).collect();
    let radial_marginal = (0..radial_bins).map(|r| (0..angular_bins).map(|a| mass[a * radial_bins + r]).sum()).collect();
    Ok(RhoHistogram {
        t: samples[0].t,
        n: samples.len(),
        ess: effective_sample_size(&w),
        angular_bins,
        radial_bins,
        r_max,
        mass,
        angular_marginal,
        radial_marginal,
        boundary_fraction: boundary,
        mean_r,
    })
}

impl RhoHistogram {
    /// Rows `angle_lo,angle_hi,r_lo,r_hi,mass` (angles scaled to `[0,1]`).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("angle_lo,angle_hi,r_lo,r_hi,mass\n");
        let da = 1.0 / self.angular_bins as f64;
        let dr = self.r_max / self.radial_bins as f64;
        for a in 0..self.angular_bins {
            for r in 0..self.radial_bins {
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    a as f64 * da,
                    (a + 1) as f64 * da,
                    r as f64 * dr,
                    (r + 1) as f64 * dr,
                    self.mass[a * self.radial_bins + r]
                ));
            }
        }
        out
    }
}
