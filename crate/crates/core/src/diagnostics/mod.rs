//! Statistical checks that a sampled law is a fixed point with the predicted
//! tails, angular measure and Laplace-transform behaviour.
//!
//! Each check returns a typed result with the raw estimates and a
//! `report` method producing [`Entry`] rows judged against [`Thresholds`].

mod report;

use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

pub use report::{Entry, Thresholds, Verdict, VerificationReport};

use crate::branching::{expand_generation, generation, w_n, Caps, Frontier};
use crate::error::{Error, Result};
use crate::fixedpoint::{sample_tree, FixedPointSpec, FpMode};
use crate::linalg::{dot, norm, NonnegMatrix, NonnegVector, SpherePoint};
use crate::model::WeightEnsemble;
use crate::rng::{par_map_indexed, StreamKey};
use crate::spectral::{HEvaluator, SphereGrid};
use crate::stable::StableSpec;
use crate::stats::{hill, ks_two_sample, quantile_sorted, sorted, KsResult, MeanEstimate};

fn label(u: &SpherePoint) -> String {
    let c: Vec<String> = u.coords().iter().map(|v| format!("{v:.4}")).collect();
    format!("u=({})", c.join(" "))
}

// ---------------------------------------------------------------------------
// Fixed-point residual

/// A vector with i.i.d. unit exponential components: a law that is not a fixed point.
pub fn exponential_imposter(dim: usize, key: StreamKey) -> Result<NonnegVector> {
    let mut rng = key.rng();
    NonnegVector::new((0..dim).map(|_| Exp1.sample(&mut rng)).collect())
}

/// Two-sample KS tests of `⟨u, X⟩` against `⟨u, Σ T_i X_i + Q⟩`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualTest {
    pub directions: Vec<SpherePoint>,
    pub ks: Vec<KsResult>,
    /// `min(1, d · min_j p_j)`.
    pub adjusted_p: f64,
    pub n: usize,
}

impl ResidualTest {
    /// Accepts the fixed-point hypothesis at family-wise `level`.
    pub fn accepts(&self, level: f64) -> bool {
        self.adjusted_p > level
    }

    fn entries(&self, check: &str) -> Vec<Entry> {
        self.directions
            .iter()
            .zip(&self.ks)
            .map(|(u, k)| {
                Entry::new(check, &format!("ks_p[{}]", label(u)), k.p_value, Verdict::Info)
                    .sizes(&[k.n1, k.n2])
                    .note(format!("D = {}", k.statistic))
            })
            .collect()
    }
}

/// Runs the residual test for `sampler`, which maps a stream key to one draw of `X`.
///
/// Left side: `X` on `key.tag("fp-lhs").index(i)`. Right side: one weight
/// realization on `key.tag("fp-rhs").index(i)` and the `X_j` on its children.
pub fn fp_residual_test<S>(sampler: S, ens: &WeightEnsemble, dirs: &[SpherePoint], n: usize, key: StreamKey) -> Result<ResidualTest>
where
    S: Fn(StreamKey) -> Result<NonnegVector> + Sync,
{
    if dirs.is_empty() || n == 0 {
        return Err(Error::Domain("residual test needs directions and samples".into()));
    }
    let lk = key.tag("fp-lhs");
    let rk = key.tag("fp-rhs");
    let lhs: Vec<NonnegVector> = par_map_indexed(n, |i| sampler(lk.index(i))).into_iter().collect::<Result<_>>()?;
    let rhs: Vec<Vec<f64>> = par_map_indexed(n, |i| -> Result<Vec<f64>> {
        let k = rk.index(i);
        let r = ens.sample_weights(&mut k.rng())?;
        let mut y = r.q.as_slice().to_vec();
        for (j, t) in r.ts.iter().enumerate() {
            let x = sampler(k.child(j))?;
            y.iter_mut().zip(t.mul_vec(x.as_slice())).for_each(|(a, b)| *a += b);
        }
        Ok(y)
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let ks: Vec<KsResult> = dirs
        .iter()
        .map(|u| {
            let a: Vec<f64> = lhs.iter().map(|x| dot(x.as_slice(), u.coords())).collect();
            let b: Vec<f64> = rhs.iter().map(|y| dot(y, u.coords())).collect();
            ks_two_sample(&a, &b)
        })
        .collect();
    let min_p = ks.iter().map(|k| k.p_value).fold(1.0, f64::min);
    Ok(ResidualTest { directions: dirs.to_vec(), ks, adjusted_p: (min_p * dirs.len() as f64).min(1.0), n })
}

/// The residual test on `sampler` and its power companion on the exponential imposter.
pub fn fp_residual_report<S>(
    sampler: S,
    ens: &WeightEnsemble,
    dirs: &[SpherePoint],
    n: usize,
    th: &Thresholds,
    key: StreamKey,
) -> Result<VerificationReport>
where
    S: Fn(StreamKey) -> Result<NonnegVector> + Sync,
{
    let mut rep = VerificationReport::new(key.raw());
    let t = fp_residual_test(sampler, ens, dirs, n, key)?;
    for e in t.entries("fp_residual") {
        rep.push(e);
    }
    rep.push(
        Entry::new("fp_residual", "bonferroni_p", t.adjusted_p, Verdict::from_bool(t.accepts(th.ks_level)))
            .target(1.0, 1.0 - th.ks_level)
            .sizes(&[n, n]),
    );
    let dim = ens.dim();
    let imp = fp_residual_test(|k| exponential_imposter(dim, k), ens, dirs, n, key.tag("imposter"))?;
    for e in imp.entries("fp_imposter") {
        rep.push(e);
    }
    rep.push(
        Entry::new("fp_imposter", "bonferroni_p", imp.adjusted_p, Verdict::from_bool(imp.adjusted_p < th.imposter_p))
            .target(0.0, th.imposter_p)
            .sizes(&[n, n])
            .note("the imposter must be rejected"),
    );
    Ok(rep)
}

// ---------------------------------------------------------------------------
// Tails

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HillEstimate {
    pub k: usize,
    pub alpha: f64,
    pub se: f64,
}

/// Hill estimate with `k = ⌊n^exponent⌋`.
pub fn hill_estimate(samples: &[f64], exponent: f64) -> Option<HillEstimate> {
    let k = (samples.len() as f64).powf(exponent).floor() as usize;
    hill(samples, k).map(|(alpha, se)| HillEstimate { k, alpha, se })
}

/// `r^α P̂(X > r)` at the empirical `q`-quantile `r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailConstant {
    pub quantile: f64,
    pub r: f64,
    pub exceedances: usize,
    pub estimate: f64,
    pub se: f64,
}

pub fn tail_constant(samples: &[f64], alpha: f64, q: f64) -> TailConstant {
    let s = sorted(samples);
    let n = s.len();
    let r = quantile_sorted(&s, q);
    let exceedances = n - s.partition_point(|x| *x <= r);
    let p = exceedances as f64 / n as f64;
    let scale = r.powf(alpha);
    TailConstant { quantile: q, r, exceedances, estimate: scale * p, se: scale * (p * (1.0 - p) / n as f64).sqrt() }
}

/// `K H^α(u) / Γ(1 − α)`.
pub fn tail_constant_target(alpha: f64, k: f64, h_alpha_u: f64) -> f64 {
    k * h_alpha_u / gamma(1.0 - alpha)
}

/// Tail index and tail constant of one-dimensional projection samples `⟨u, X⟩`.
pub fn tail_check(samples: &[f64], alpha: f64, k: f64, h_alpha_u: f64, th: &Thresholds) -> Result<VerificationReport> {
    if !(alpha > 0.0 && alpha < 1.0) || !(k > 0.0) {
        return Err(Error::Precondition(format!("tail check needs α in (0,1) and K > 0, got α = {alpha}, K = {k}")));
    }
    let n = samples.len();
    let mut rep = VerificationReport::new(0);
    match hill_estimate(samples, th.hill_exponent) {
        Some(h) if h.k >= th.min_tail_exceedances => rep.push(
            Entry::new("tail", "hill_index", h.alpha, Verdict::from_bool((h.alpha - alpha).abs() <= th.hill_tol))
                .ci(h.alpha - 1.96 * h.se, h.alpha + 1.96 * h.se)
                .target(alpha, th.hill_tol)
                .sizes(&[n, h.k]),
        ),
        _ => rep.push(Entry::new("tail", "hill_index", f64::NAN, Verdict::Info).sizes(&[n]).note("too few order statistics")),
    }
    for &e in &th.hill_sweep {
        if let Some(h) = hill_estimate(samples, e) {
            rep.push(
                Entry::new("tail", &format!("hill_index[k=n^{e:.3}]"), h.alpha, Verdict::Info)
                    .ci(h.alpha - 1.96 * h.se, h.alpha + 1.96 * h.se)
                    .sizes(&[n, h.k]),
            );
        }
    }
    let target = tail_constant_target(alpha, k, h_alpha_u);
    for &q in &th.tail_quantiles {
        let c = tail_constant(samples, alpha, q);
        let gated = (q - th.tail_gate_quantile).abs() < 1e-12;
        let verdict = if c.exceedances < th.min_tail_exceedances {
            Verdict::Info
        } else if gated {
            Verdict::from_bool((c.estimate - target).abs() <= th.tail_constant_tol * target)
        } else {
            Verdict::Info
        };
        rep.push(
            Entry::new("tail", &format!("tail_constant[q={q}]"), c.estimate, verdict)
                .ci(c.estimate - 1.96 * c.se, c.estimate + 1.96 * c.se)
                .target(target, th.tail_constant_tol * target)
                .sizes(&[n, c.exceedances])
                .note(format!("r = {}", c.r)),
        );
    }
    Ok(rep)
}

/// Hill calibration on Pareto(α) data, `P(X > x) = x^{−α}` for `x ≥ 1`.
pub fn hill_self_test(alpha: f64, n: usize, th: &Thresholds, key: StreamKey) -> Entry {
    let mut rng = key.tag("pareto").rng();
    let xs: Vec<f64> = (0..n)
        .map(|_| {
            let e: f64 = Exp1.sample(&mut rng);
            (e / alpha).exp()
        })
        .collect();
    let tol = 0.03;
    match hill_estimate(&xs, th.hill_exponent) {
        Some(h) => Entry::new("hill_calibration", "hill_index", h.alpha, Verdict::from_bool((h.alpha - alpha).abs() <= tol))
            .ci(h.alpha - 1.96 * h.se, h.alpha + 1.96 * h.se)
            .target(alpha, tol)
            .sizes(&[n, h.k]),
        None => Entry::new("hill_calibration", "hill_index", f64::NAN, Verdict::Info).sizes(&[n]),
    }
}

// ---------------------------------------------------------------------------
// Angular measure

/// Histogram of `X/|X|` over samples with `|X|` above a quantile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngularMeasure {
    pub quantile: f64,
    pub radius: f64,
    pub exceedances: usize,
    pub bin_centers: Vec<SpherePoint>,
    pub empirical: Vec<f64>,
    pub target: Vec<f64>,
    /// `½ Σ |empirical − target|`.
    pub tv: f64,
    #[serde(skip)]
    pub directions: Vec<SpherePoint>,
}

enum Bins {
    Single,
    Planar(usize),
    Grid(SphereGrid),
}

impl Bins {
    fn new(dim: usize, bins: usize) -> Result<Self> {
        Ok(match dim {
            1 => Bins::Single,
            2 => Bins::Planar(bins.max(1)),
            _ => Bins::Grid(SphereGrid::build(dim, bins.max(2))?),
        })
    }

    fn len(&self) -> usize {
        match self {
            Bins::Single => 1,
            Bins::Planar(b) => *b,
            Bins::Grid(g) => g.len(),
        }
    }

    fn of(&self, x: &[f64]) -> usize {
        match self {
            Bins::Single => 0,
            Bins::Planar(b) => {
                let t = x[1].max(0.0).atan2(x[0].max(0.0)) / std::f64::consts::FRAC_PI_2;
                ((t * *b as f64) as usize).min(b - 1)
            }
            Bins::Grid(g) => g.nearest(x),
        }
    }

    fn centers(&self, dim: usize) -> Vec<SpherePoint> {
        match self {
            Bins::Single => vec![SpherePoint::basis(dim, 0)],
            Bins::Planar(b) => {
                (0..*b).map(|i| SpherePoint::from_angle((i as f64 + 0.5) / *b as f64 * std::f64::consts::FRAC_PI_2)).collect()
            }
            Bins::Grid(g) => g.points().to_vec(),
        }
    }
}

impl AngularMeasure {
    /// Largest geodesic distance from `p` among the exceedance directions.
    pub fn max_distance_to(&self, p: &SpherePoint) -> f64 {
        self.directions.iter().map(|d| d.distance(p)).fold(0.0, f64::max)
    }

    pub fn report(&self, th: &Thresholds, n: usize) -> Entry {
        let verdict = if self.exceedances < th.angular_min_exceedances {
            Verdict::Info
        } else {
            Verdict::from_bool(self.tv <= th.angular_tv)
        };
        Entry::new("angular_measure", &format!("tv[q={}]", self.quantile), self.tv, verdict)
            .target(0.0, th.angular_tv)
            .sizes(&[n, self.exceedances])
    }
}

/// Empirical angular measure at the `q`-quantile of `|X|`, against the
/// discrete measure `Σ w_j δ_{y_j}` (normally `ν^α` on the spectral grid).
pub fn angular_measure(
    samples: &[NonnegVector],
    q: f64,
    nu_points: &[SpherePoint],
    nu_weights: &[f64],
    bins: usize,
) -> Result<AngularMeasure> {
    let dim = samples.first().map(|x| x.dim()).ok_or_else(|| Error::Domain("no samples".into()))?;
    if nu_points.len() != nu_weights.len() || nu_points.is_empty() {
        return Err(Error::Domain("target measure needs matching points and weights".into()));
    }
    let b = Bins::new(dim, bins)?;
    let norms: Vec<f64> = samples.iter().map(|x| x.norm()).collect();
    let radius = quantile_sorted(&sorted(&norms), q);
    let directions: Vec<SpherePoint> = samples
        .iter()
        .zip(&norms)
        .filter(|(_, r)| **r > radius && **r > 0.0)
        .map(|(x, _)| SpherePoint::from_vec(x.as_slice()))
        .collect::<Result<_>>()?;
    let mut empirical = vec![0.0; b.len()];
    for d in &directions {
        empirical[b.of(d.coords())] += 1.0;
    }
    let ne = directions.len();
    if ne > 0 {
        empirical.iter_mut().for_each(|v| *v /= ne as f64);
    }
    let mut target = vec![0.0; b.len()];
    let total: f64 = nu_weights.iter().sum();
    for (p, w) in nu_points.iter().zip(nu_weights) {
        target[b.of(p.coords())] += w / total;
    }
    let tv = 0.5 * empirical.iter().zip(&target).map(|(a, t)| (a - t).abs()).sum::<f64>();
    Ok(AngularMeasure { quantile: q, radius, exceedances: ne, bin_centers: b.centers(dim), empirical, target, tv, directions })
}

// ---------------------------------------------------------------------------
// Laplace-transform evaluators

/// Access to `1 − Φ(x)` for a Laplace transform `Φ` on the orthant.
pub trait LtEvaluator: Sync {
    /// `1 − Φ(x)`, accurate for small arguments.
    fn one_minus(&self, x: &[f64]) -> f64;

    /// 95% CI half-width of [`one_minus`](Self::one_minus); zero for closed forms.
    fn ci_half_width(&self, _x: &[f64]) -> f64 {
        0.0
    }

    fn lt(&self, x: &[f64]) -> f64 {
        1.0 - self.one_minus(x)
    }
}

/// `Φ(x) = exp(−ψ(x))` for an explicit exponent `ψ`.
pub struct AnalyticLt<F> {
    psi: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> AnalyticLt<F> {
    pub fn new(psi: F) -> Self {
        AnalyticLt { psi }
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> LtEvaluator for AnalyticLt<F> {
    fn one_minus(&self, x: &[f64]) -> f64 {
        -(-(self.psi)(x)).exp_m1()
    }
}

/// The closed-form stable transform `exp(−K ∫⟨x, y⟩^α ν(dy))`.
pub fn stable_lt(spec: StableSpec) -> AnalyticLt<impl Fn(&[f64]) -> f64 + Sync> {
    AnalyticLt::new(move |x: &[f64]| spec.k * spec.exponent(x))
}

/// `exp(−K H^α(x))`, the stable transform with the tabulated `H^α`.
pub fn h_lt(k: f64, h: HEvaluator) -> AnalyticLt<impl Fn(&[f64]) -> f64 + Sync> {
    AnalyticLt::new(move |x: &[f64]| k * h.eval(x))
}

#[derive(Debug, Clone)]
struct TreeSummary {
    wstar: Vec<f64>,
    /// `(unit L(v), log|L(v)| + log mass / α)`.
    nodes: Vec<(NonnegMatrix, f64)>,
}

/// Monte-Carlo fixed-point transform
/// `Φ(x) ≈ mean_i exp(−⟨x, W*_{n,i}⟩ − K Σ_v H^α(L_i(v)ᵀx))` over stored trees.
#[derive(Debug, Clone)]
pub struct MonteCarloLt {
    k: f64,
    h: HEvaluator,
    trees: Vec<TreeSummary>,
}

impl MonteCarloLt {
    pub fn build(spec: &FixedPointSpec, n_trees: usize, key: StreamKey) -> Result<Self> {
        let key = key.tag("mc-lt");
        let alpha = spec.alpha();
        let trees = par_map_indexed(n_trees, |i| -> Result<TreeSummary> {
            let g = generation(spec.depth(), spec.ensemble(), &Caps::default(), key.index(i))?;
            let nodes = g.nodes.iter().map(|v| (v.l.unit.clone(), v.l.log_norm + v.log_mass / alpha)).collect();
            Ok(TreeSummary { wstar: g.wstar_partial, nodes })
        })
        .into_iter()
        .collect::<Result<_>>()?;
        Ok(MonteCarloLt { k: spec.k(), h: spec.h().clone(), trees })
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    fn terms(&self, x: &[f64]) -> Vec<f64> {
        self.trees
            .iter()
            .map(|t| {
                let lin = dot(&t.wstar, x);
                let stab: f64 = if self.k == 0.0 {
                    0.0
                } else {
                    t.nodes.iter().map(|(m, s)| self.h.eval_scaled(*s, &m.tmul_vec(x))).sum::<f64>() * self.k
                };
                -(-(lin + stab)).exp_m1()
            })
            .collect()
    }

    pub fn estimate(&self, x: &[f64]) -> MeanEstimate {
        MeanEstimate::from_samples(&self.terms(x))
    }
}


impl LtEvaluator for MonteCarloLt {
    fn one_minus(&self, x: &[f64]) -> f64 {
        self.estimate(x).mean
    }

    fn ci_half_width(&self, x: &[f64]) -> f64 {
        1.96 * self.estimate(x).se
    }
}

// ---------------------------------------------------------------------------
// Disintegration

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisintegrationLevel {
    pub n: usize,
    /// `Z_n(u) = Σ_{|v|=n} (1 − Φ(L(v)ᵀu))`.
    pub z: f64,
    pub w: f64,
    pub ratio: f64,
    /// Upper bound on the ratio's CI half-width from the LT estimator.
    pub ci_half_width: f64,
    pub nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisintegrationReport {
    pub u: SpherePoint,
    pub k: f64,
    pub levels: Vec<DisintegrationLevel>,
}

impl DisintegrationReport {
    /// Judges the deepest level.
    pub fn report(&self, th: &Thresholds) -> Entry {
        let Some(last) = self.levels.last() else {
            return Entry::new("disintegration", "z_over_w", f64::NAN, Verdict::Info);
        };
        let tol = th.disintegration_tol * self.k;
        let verdict = if self.k == 0.0 || !(last.w > 0.0) || last.ci_half_width > th.disintegration_max_ci * self.k {
            Verdict::Info
        } else {
            Verdict::from_bool((last.ratio - self.k).abs() <= tol)
        };
        Entry::new("disintegration", &format!("z_over_w[n={}]", last.n), last.ratio, verdict)
            .ci(last.ratio - last.ci_half_width, last.ratio + last.ci_half_width)
            .target(self.k, tol)
            .sizes(&[last.nodes])
    }
}

/// `Z_n(u)/W_n(u)` along `depths` on the single tree rooted at `key`.
pub fn disintegration_ratio(
    spec: &FixedPointSpec,
    lt: &dyn LtEvaluator,
    u: &SpherePoint,
    depths: &[usize],
    key: StreamKey,
) -> Result<DisintegrationReport> {
    if !(spec.mode() == FpMode::Homogeneous || spec.ensemble().is_homogeneous()) {
        return Err(Error::Precondition("disintegration needs a homogeneous fixed point".into()));
    }
    let caps = Caps::default();
    let max = depths.iter().copied().max().unwrap_or(0);
    let mut f = Frontier::root(spec.ensemble().dim(), key);
    let mut levels = Vec::new();
    for n in 0..=max {
        if n > 0 {
            f = expand_generation(&f, spec.ensemble(), &caps)?;
        }
        if !depths.contains(&n) {
            continue;
        }
        let (mut z, mut ci) = (0.0, 0.0);
        for v in &f.nodes {
            let mass = v.log_mass.exp();
            let scale = v.l.log_norm.exp();
            let x: Vec<f64> = v.l.unit.tmul_vec(u.coords()).into_iter().map(|c| c * scale).collect();
            z += mass * lt.one_minus(&x);
            ci += mass * lt.ci_half_width(&x);
        }
        let w = w_n(&f, u.coords(), spec.h());
        let (ratio, ci) = if w > 0.0 { (z / w, ci / w) } else { (f64::NAN, f64::NAN) };
        levels.push(DisintegrationLevel { n, z, w, ratio, ci_half_width: ci, nodes: f.nodes.len() });
    }
    Ok(DisintegrationReport { u: u.clone(), k: spec.k(), levels })
}

// ---------------------------------------------------------------------------
// Regularity

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub k: f64,
    pub alpha: f64,
    pub rs: Vec<f64>,
    /// `D(r𝟙) = (1 − Φ(r𝟙)) / H^α(r𝟙)`.
    pub d_values: Vec<f64>,
    /// `sup_u |(1 − Φ(ru))/r^α − K H^α(u)|`.
    pub sup_deviation: Vec<f64>,
    pub band_ok: bool,
    pub decreasing: bool,
}

impl RegularityReport {
    pub fn report(&self, th: &Thresholds) -> Vec<Entry> {
        let mut out: Vec<Entry> = self
            .rs
            .iter()
            .zip(&self.d_values)
            .zip(&self.sup_deviation)
            .map(|((r, d), s)| Entry::new("regularity", &format!("D[r={r}]"), *d, Verdict::Info).target(self.k, 0.0).note(format!("sup deviation {s}")))
            .collect();
        let (lo, hi) = th.regularity_band;
        out.push(
            Entry::new("regularity", "band", self.d_values.last().copied().unwrap_or(f64::NAN), Verdict::from_bool(self.band_ok))
                .target(self.k, self.k * (hi - lo)),
        );
        out.push(Entry::new(
            "regularity",
            "sup_deviation_trend",
            self.sup_deviation.last().copied().unwrap_or(f64::NAN),
            Verdict::from_bool(self.decreasing),
        ));
        out
    }
}

/// `D(r𝟙)` and the uniform deviation on `r = 2^{−j}`, `j ∈ exponents`.
pub fn regularity_statistic(
    lt: &dyn LtEvaluator,
    h: &HEvaluator,
    k: f64,
    exponents: &[u32],
    dirs: &[SpherePoint],
    th: &Thresholds,
) -> RegularityReport {
    let alpha = h.s();
    let dim = dirs.first().map(|u| u.dim()).unwrap_or(2);
    let rs: Vec<f64> = exponents.iter().map(|j| 0.5f64.powi(*j as i32)).collect();
    let d_values: Vec<f64> = rs
        .iter()
        .map(|r| {
            let x = vec![*r; dim];
            lt.one_minus(&x) / h.eval(&x)
        })
        .collect();
    let sup_deviation: Vec<f64> = rs
        .iter()
        .map(|r| {
            dirs.iter()
                .map(|u| {
                    let x: Vec<f64> = u.coords().iter().map(|c| c * r).collect();
                    (lt.one_minus(&x) / r.powf(alpha) - k * h.eval(u.coords())).abs()
                })
                .fold(0.0, f64::max)
        })
        .collect();
    let (lo, hi) = th.regularity_band;
    let band_ok = d_values.iter().all(|d| *d >= lo * k && *d <= hi * k);
    let decreasing = match (sup_deviation.first(), sup_deviation.last()) {
        (Some(a), Some(b)) => b <= a,
        _ => true,
    };
    RegularityReport { k, alpha, rs, d_values, sup_deviation, band_ok, decreasing }
}

// ---------------------------------------------------------------------------
// Laplace-transform inequalities

/// Arguments at which the inequalities are checked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IneqGrid {
    pub ts: Vec<f64>,
    pub dirs: Vec<SpherePoint>,
    /// Factors `a ≤ 1`.
    pub a: Vec<f64>,
    /// Factors `b ≥ 1`.
    pub b: Vec<f64>,
    pub matrices: Vec<NonnegMatrix>,
}

impl IneqGrid {
    pub fn default_for(dim: usize) -> Self {
        let dirs = if dim == 2 {
            (0..6).map(|i| SpherePoint::from_angle(i as f64 / 5.0 * std::f64::consts::FRAC_PI_2)).collect()
        } else {
            (0..dim).map(|i| SpherePoint::basis(dim, i)).chain(std::iter::once(SpherePoint::diagonal(dim))).collect()
        };
        let mut m1 = vec![0.3; dim * dim];
        for i in 0..dim {
            m1[i * dim + i] = 1.0;
        }
        let m2: Vec<f64> = (0..dim * dim).map(|i| 0.1 + 0.4 * ((i * 7 % 5) as f64)).collect();
        IneqGrid {
            ts: vec![0.01, 0.1, 1.0, 10.0],
            dirs,
            a: vec![0.1, 0.5, 0.9],
            b: vec![1.5, 3.0, 10.0],
            matrices: vec![
                NonnegMatrix::new(dim, m1).expect("valid"),
                NonnegMatrix::new(dim, m2).expect("valid"),
                NonnegMatrix::identity(dim).scale(0.25),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IneqResult {
    pub name: String,
    pub checks: usize,
    pub failures: usize,
    /// Smallest `rhs − lhs` over the grid (sign adjusted so that ≥ 0 holds).
    pub min_margin: f64,
}

struct Tally<'a> {
    lt: &'a dyn LtEvaluator,
    z: f64,
    floor: f64,
    res: IneqResult,
}

impl<'a> Tally<'a> {
    fn new(name: &str, lt: &'a dyn LtEvaluator, th: &Thresholds) -> Self {
        Tally {
            lt,
            z: th.inequality_z / 1.96,
            floor: th.inequality_floor,
            res: IneqResult { name: name.into(), checks: 0, failures: 0, min_margin: f64::INFINITY },
        }
    }

    fn eval(&self, x: &[f64]) -> (f64, f64) {
        (self.lt.one_minus(x), self.lt.ci_half_width(x))
    }

    /// Records `cl · (1 − Φ(xl)) ≤ cr · (1 − Φ(xr))`.
    fn le(&mut self, cl: f64, xl: &[f64], cr: f64, xr: &[f64]) {
        let (l, el) = self.eval(xl);
        let (r, er) = self.eval(xr);
        let margin = cr * r - cl * l;
        let slack = self.z * (cl * el + cr * er) + self.floor;
        self.res.checks += 1;
        if margin < -slack {
            self.res.failures += 1;
        }
        self.res.min_margin = self.res.min_margin.min(margin);
    }
}

fn scaled(c: f64, x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| c * v).collect()
}

/// Checks the eight Laplace-transform inequalities on `grid`.
pub fn lt_inequality_suite(lt: &dyn LtEvaluator, grid: &IneqGrid, th: &Thresholds) -> Vec<IneqResult> {
    let dim = grid.dirs.first().map(|u| u.dim()).unwrap_or(2);
    let ones = vec![1.0; dim];
    let mut t: Vec<Tally> = (1..=8).map(|i| Tally::new(&format!("ineq{i}"), lt, th)).collect();
    for &s in &grid.ts {
        let one_t = scaled(s, &ones);
        for u in &grid.dirs {
            let tu = scaled(s, u.coords());
            for &a in &grid.a {
                let atu = scaled(a, &tu);
                t[0].le(1.0, &atu, 1.0, &tu);
                t[1].le(a, &tu, 1.0, &atu);
            }
            for &b in &grid.b {
                let btu = scaled(b, &tu);
                t[2].le(1.0, &tu, 1.0, &btu);
                t[3].le(1.0, &btu, b, &tu);
            }
            t[4].le(1.0, &tu, 1.0, &one_t);
            for m in &grid.matrices {
                let au = m.mul_vec(u.coords());
                let tau = scaled(s, &au);
                let op = m.op_norm();
                t[5].le(1.0, &tau, 1.0, &scaled(s * norm(&au), &ones));
                t[5].le(1.0, &scaled(s * norm(&au), &ones), 1.0, &scaled(s * op, &ones));
                t[6].le(1.0, &tau, op.max(1.0), &one_t);
            }
            let mu = u.min_coord();
            let mu_t = scaled(s * mu, &ones);
            t[7].le(1.0, &mu_t, 1.0, &tu);
            t[7].le(mu, &one_t, 1.0, &mu_t);
        }
    }
    t.into_iter().map(|x| x.res).collect()
}

pub fn inequality_report(results: &[IneqResult]) -> VerificationReport {
    let mut rep = VerificationReport::new(0);
    for r in results {
        rep.push(
            Entry::new("lt_inequalities", &r.name, r.failures as f64, Verdict::from_bool(r.failures == 0))
                .target(0.0, 0.0)
                .sizes(&[r.checks])
                .note(format!("min margin {}", r.min_margin)),
        );
    }
    rep
}

// ---------------------------------------------------------------------------
// Coupling distance

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingLevel {
    pub depth: usize,
    /// `Ê|Y_Q − Y_0|^s`.
    pub estimate: MeanEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingReport {
    pub s: f64,
    pub levels: Vec<CouplingLevel>,
    /// Per-depth increments do not grow beyond the combined CI.
    pub bounded: bool,
}

impl CouplingReport {
    pub fn report(&self) -> Vec<Entry> {
        let mut out: Vec<Entry> = self
            .levels
            .iter()
            .map(|l| {
                let (lo, hi) = l.estimate.ci(1.96);
                Entry::new("coupling", &format!("moment[n={}]", l.depth), l.estimate.mean, Verdict::Info).ci(lo, hi).sizes(&[l.estimate.n])
            })
            .collect();
        out.push(Entry::new(
            "coupling",
            "bounded",
            self.levels.last().map(|l| l.estimate.mean).unwrap_or(f64::NAN),
            Verdict::from_bool(self.bounded),
        ));
        out
    }
}

/// `Ê|Y_Q − Y_0|^s` where `Y_Q` and `Y_0` are iterations on the same trees
/// with the same leaves, with and without the `Q` terms.
///
/// `m_s` is `m(s)`, which must be below one.
pub fn coupling_distance(
    spec: &FixedPointSpec,
    s: f64,
    m_s: f64,
    depths: &[usize],
    n_mc: usize,
    z: f64,
    key: StreamKey,
) -> Result<CouplingReport> {
    if !(m_s < 1.0) {
        return Err(Error::Precondition(format!("coupling needs m(s) < 1, got m({s}) = {m_s}")));
    }
    if spec.mode() != FpMode::Inhomogeneous {
        return Err(Error::Precondition("coupling needs the inhomogeneous specification".into()));
    }
    let key = key.tag("coupling");
    let mut levels = Vec::with_capacity(depths.len());
    for &d in depths {
        let sp = spec.clone().with_depth(d);
        let v: Vec<f64> = par_map_indexed(n_mc, |i| -> Result<f64> {
            let t = sample_tree(&sp, &[], true, key.index(i))?;
            let yq = t.x.expect("leaves drawn");
            let y0: Vec<f64> = yq.as_slice().iter().zip(t.wstar.as_slice()).map(|(a, b)| a - b).collect();
            let diff: Vec<f64> = yq.as_slice().iter().zip(&y0).map(|(a, b)| a - b).collect();
            Ok(norm(&diff).powf(s))
        })
        .into_iter()
        .collect::<Result<_>>()?;
        levels.push(CouplingLevel { depth: d, estimate: MeanEstimate::from_samples(&v) });
    }
    Ok(CouplingReport { s, bounded: increments_shrink(&levels, z), levels })
}

/// Increments per unit depth are non-increasing up to `z` combined standard errors.
fn increments_shrink(levels: &[CouplingLevel], z: f64) -> bool {
    let inc: Vec<(f64, f64)> = levels
        .windows(2)
        .map(|w| {
            let dd = (w[1].depth as f64 - w[0].depth as f64).max(1.0);
            ((w[1].estimate.mean - w[0].estimate.mean) / dd, w[0].estimate.se.hypot(w[1].estimate.se) / dd)
        })
        .collect();
    match inc.len() {
        0 => true,
        1 => inc[0].0.abs() <= z * inc[0].1 + 1e-12,
        _ => inc.windows(2).all(|w| w[1].0 <= w[0].0.max(0.0) + z * w[0].1.hypot(w[1].1) + 1e-12),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixedpoint::{iterated_samples, sample_iterated};
    use crate::model::presets;
    use crate::spectral::{solve_alpha, solve_eigen, tests::random_mixture, AlphaOptions, SpectralSolution};
    use crate::stable::{sample_positive_stable, StableSampler};
    use proptest::prelude::{prop_assert, prop_assert_eq, proptest, ProptestConfig};

    fn planar(res: usize) -> SphereGrid {
        SphereGrid::build(2, res).unwrap()
    }

    fn diagonal(k: f64, depth: usize, res: usize) -> (FixedPointSpec, SpectralSolution) {
        let e = presets::stable_diagonal();
        let sol = solve_eigen(0.5, &e, &planar(res), 1e-12, 10_000).unwrap();
        (FixedPointSpec::new(&e, &sol, k, FpMode::Homogeneous, depth).unwrap(), sol)
    }

    fn random_spec(k: f64, depth: usize, mode: FpMode) -> (FixedPointSpec, SpectralSolution) {
        let base = random_mixture();
        let mut atoms = base.atoms().unwrap().to_vec();
        atoms[0].q = NonnegVector::new(vec![0.5, 0.2]).unwrap();
        let e = WeightEnsemble::mixture(2, atoms).unwrap();
        let a = solve_alpha(&e, &planar(129), &AlphaOptions::default()).unwrap();
        (FixedPointSpec::new(&e, &a.spectral, k, mode, depth).unwrap(), a.spectral)
    }

    fn three_dirs() -> Vec<SpherePoint> {
        [0.2, 0.785, 1.3].iter().map(|t| SpherePoint::from_angle(*t)).collect()
    }

    #[test]
    fn stable_fixed_point_passes_and_imposter_fails() {
        let (spec, _) = diagonal(1.0, 1, 17);
        let th = Thresholds::default();
        let rep = fp_residual_report(|k| sample_iterated(&spec, k), spec.ensemble(), &three_dirs(), 10_000, &th, StreamKey::new(1)).unwrap();
        let fp = rep.find("fp_residual", "bonferroni_p").unwrap();
        assert_eq!(fp.verdict, Verdict::Pass, "{fp:?}");
        let imp = rep.find("fp_imposter", "bonferroni_p").unwrap();
        assert!(imp.estimate < 1e-4 && imp.verdict == Verdict::Pass, "{imp:?}");
        assert!(rep.passed());
    }

    #[test]
    fn point_mass_at_zero_passes_trivially() {
        let (spec, _) = diagonal(0.0, 2, 17);
        let t = fp_residual_test(|k| sample_iterated(&spec, k), spec.ensemble(), &three_dirs(), 500, StreamKey::new(2)).unwrap();
        assert!(t.ks.iter().all(|k| k.statistic == 0.0));
        assert_eq!(t.adjusted_p, 1.0);
    }

    #[test]
    fn reports_are_reproducible() {
        let (spec, _) = diagonal(1.0, 1, 17);
        let th = Thresholds::default();
        let run = || fp_residual_report(|k| sample_iterated(&spec, k), spec.ensemble(), &three_dirs(), 2000, &th, StreamKey::new(3)).unwrap();
        assert_eq!(run().to_json().unwrap(), run().to_json().unwrap());
    }

    #[test]
    fn hill_calibration_on_pareto() {
        let th = Thresholds::default();
        for (i, a) in [0.3, 0.5, 0.7].iter().enumerate() {
            let e = hill_self_test(*a, 100_000, &th, StreamKey::new(10 + i as u64));
            assert_eq!(e.verdict, Verdict::Pass, "{e:?}");
        }
    }

    #[test]
    fn levy_tail_index_and_constant() {
        let mut rng = StreamKey::new(4).rng();
        let xs: Vec<f64> = (0..100_000).map(|_| sample_positive_stable(0.5, &mut rng).unwrap()).collect();
        let h = hill_estimate(&xs, 2.0 / 3.0).unwrap();
        assert!((h.alpha - 0.5).abs() < 0.05, "{h:?}");
        let target = tail_constant_target(0.5, 1.0, 1.0);
        assert!((target - 1.0 / std::f64::consts::PI.sqrt()).abs() < 1e-12);
        let c = tail_constant(&xs, 0.5, 0.999);
        assert!((c.estimate / target - 1.0).abs() < 0.3, "{c:?}");
        let rep = tail_check(&xs, 0.5, 1.0, 1.0, &Thresholds::default()).unwrap();
        assert!(rep.passed(), "{:?}", rep.failures().collect::<Vec<_>>());
    }

    #[test]
    fn tail_check_rejects_degenerate_inputs() {
        assert!(tail_check(&[1.0, 2.0], 0.5, 0.0, 1.0, &Thresholds::default()).is_err());
        assert!(tail_check(&[1.0, 2.0], 1.0, 1.0, 1.0, &Thresholds::default()).is_err());
        let rep = tail_check(&[1.0, 2.0, 3.0], 0.5, 1.0, 1.0, &Thresholds::default()).unwrap();
        assert!(rep.entries.iter().all(|e| e.verdict == Verdict::Info));
    }

    #[test]
    fn inhomogeneous_without_stable_part_has_lighter_tails() {
        let (spec, sol) = random_spec(0.0, 8, FpMode::Inhomogeneous);
        let u = SpherePoint::diagonal(2);
        let xs: Vec<f64> =
            iterated_samples(&spec, 20_000, StreamKey::new(5)).unwrap().iter().map(|x| dot(x.as_slice(), u.coords())).collect();
        let h = hill_estimate(&xs, 2.0 / 3.0).unwrap();
        assert!(h.alpha > sol.s + 0.3 && h.alpha - 3.0 * h.se > sol.s, "{h:?} vs α = {}", sol.s);
    }

    #[test]
    fn angular_measure_concentrates_on_the_perron_direction() {
        // Two copies of A/12, A = [[2,1],[1,2]]: m(1/2) = 1 and ν^α = δ at the diagonal.
        let a = NonnegMatrix::from_rows(&[vec![2.0 / 12.0, 1.0 / 12.0], vec![1.0 / 12.0, 2.0 / 12.0]]).unwrap();
        let atom = crate::model::WeightAtom { prob: 1.0, q: NonnegVector::zeros(2), ts: vec![a.clone(), a] };
        let e = WeightEnsemble::mixture(2, vec![atom]).unwrap();
        let sol = solve_eigen(0.5, &e, &planar(65), 1e-12, 10_000).unwrap();
        let spec = FixedPointSpec::new(&e, &sol, 1.0, FpMode::Homogeneous, 4).unwrap();
        let xs = iterated_samples(&spec, 20_000, StreamKey::new(6)).unwrap();
        let m = angular_measure(&xs, 0.99, sol.grid().points(), &sol.nu_weights, 16).unwrap();
        assert!(m.exceedances >= 199);
        assert!(m.max_distance_to(&SpherePoint::diagonal(2)) < 0.1);
        assert!(m.tv < 0.15, "{}", m.tv);
    }

    fn two_point_samples(alpha: f64, n: usize, seed: u64) -> (StableSpec, Vec<NonnegVector>) {
        let spec = StableSpec::new(alpha, 1.0, vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.3, 0.7]).unwrap();
        let s = StableSampler::new(spec.clone()).unwrap();
        let mut rng = StreamKey::new(seed).rng();
        (spec, (0..n).map(|_| s.sample_exact(&mut rng)).collect())
    }

    #[test]
    fn angular_discrepancy_shrinks_with_the_radius() {
        let (_, xs) = two_point_samples(0.9, 1_000_000, 7);
        let pts = [SpherePoint::basis(2, 0), SpherePoint::basis(2, 1)];
        let tv: Vec<f64> = [0.9, 0.99, 0.999].iter().map(|q| angular_measure(&xs, *q, &pts, &[0.3, 0.7], 64).unwrap().tv).collect();
        assert!(tv[0] > tv[1] && tv[1] > tv[2], "{tv:?}");
        let m = angular_measure(&xs, 0.999, &pts, &[0.3, 0.7], 64).unwrap();
        assert_eq!(m.report(&Thresholds::default(), xs.len()).verdict, Verdict::Pass);
    }

    #[test]
    fn angular_histogram_is_swap_symmetric_for_the_diagonal_ensemble() {
        // 24 grid points never sit on the edges of the 16 angular bins
        let (spec, sol) = diagonal(1.0, 0, 24);
        let xs = iterated_samples(&spec, 100_000, StreamKey::new(8)).unwrap();
        let m = angular_measure(&xs, 0.99, sol.grid().points(), &sol.nu_weights, 16).unwrap();
        let n = m.exceedances as f64;
        for i in 0..8 {
            let (a, b) = (m.empirical[i], m.empirical[15 - i]);
            assert!((a - b).abs() <= 4.0 * ((a + b) / n).sqrt() + 1e-12, "bin {i}: {a} vs {b}");
            assert!((m.target[i] - m.target[15 - i]).abs() < 1e-9);
        }
    }

    #[test]
    fn too_few_exceedances_is_info() {
        let (_, xs) = two_point_samples(0.5, 1000, 9);
        let pts = [SpherePoint::basis(2, 0), SpherePoint::basis(2, 1)];
        let m = angular_measure(&xs, 0.99, &pts, &[0.3, 0.7], 16).unwrap();
        assert_eq!(m.report(&Thresholds::default(), 1000).verdict, Verdict::Info);
    }

    #[test]
    fn diagonal_disintegration_matches_the_closed_form() {
        let k = 1.3;
        let (spec, _) = diagonal(k, 0, 65);
        let lt = h_lt(k, spec.h().clone());
        for theta in [0.0, 0.4, 1.2] {
            let u = SpherePoint::from_angle(theta);
            let r = disintegration_ratio(&spec, &lt, &u, &[0, 1, 2, 4, 6], StreamKey::new(11)).unwrap();
            let hu = spec.h().eval(u.coords());
            for l in &r.levels {
                let p = 4f64.powi(l.n as i32);
                let oracle = -(-k * hu / p).exp_m1() * p / hu;
                assert!((l.ratio - oracle).abs() < 1e-10, "n = {}: {} vs {oracle}", l.n, l.ratio);
            }
            let ratios: Vec<f64> = r.levels.iter().map(|l| l.ratio).collect();
            assert!(ratios.windows(2).all(|w| w[1] > w[0] && w[1] < k));
        }
    }

    #[test]
    fn trivial_fixed_point_has_zero_disintegration() {
        let (spec, _) = diagonal(0.0, 0, 17);
        let lt = h_lt(0.0, spec.h().clone());
        let r = disintegration_ratio(&spec, &lt, &SpherePoint::diagonal(2), &[1, 3], StreamKey::new(12)).unwrap();
        assert!(r.levels.iter().all(|l| l.z == 0.0));
        assert_eq!(r.report(&Thresholds::default()).verdict, Verdict::Info);
    }

    #[test]
    fn disintegration_needs_homogeneity() {
        let (spec, _) = random_spec(1.0, 4, FpMode::Inhomogeneous);
        let lt = h_lt(1.0, spec.h().clone());
        assert!(disintegration_ratio(&spec, &lt, &SpherePoint::diagonal(2), &[1], StreamKey::new(0)).is_err());
    }

    #[test]
    fn random_ensemble_disintegration_approaches_k() {
        let (spec, _) = random_spec(1.0, 8, FpMode::Homogeneous);
        let lt = MonteCarloLt::build(&spec, 400, StreamKey::new(13)).unwrap();
        let u = SpherePoint::from_angle(0.6);
        let r = (0..)
            .map(|i| disintegration_ratio(&spec, &lt, &u, &[4, 6, 8], StreamKey::new(100 + i)).unwrap())
            .find(|r| r.levels.last().unwrap().w > 0.0)
            .unwrap();
        assert_eq!(r.report(&Thresholds::default()).verdict, Verdict::Pass, "{:?}", r.levels);
    }

    #[test]
    fn regularity_of_the_exact_stable_transform() {
        let k = 0.8;
        let (spec, _) = diagonal(k, 0, 65);
        let h = spec.h().clone();
        let lt = h_lt(k, h.clone());
        let dirs: Vec<SpherePoint> = (0..9).map(|i| SpherePoint::from_angle(i as f64 / 8.0 * std::f64::consts::FRAC_PI_2)).collect();
        let exps: Vec<u32> = (0..=10).collect();
        let r = regularity_statistic(&lt, &h, k, &exps, &dirs, &Thresholds::default());
        let h1 = h.eval(&[1.0, 1.0]);
        for (rr, d) in r.rs.iter().zip(&r.d_values) {
            let x = rr.sqrt() * h1;
            let oracle = -(-k * x).exp_m1() / x;
            assert!((d - oracle).abs() < 1e-12 && *d < k);
        }
        assert!(r.d_values.windows(2).all(|w| w[1] > w[0]));
        assert!(r.sup_deviation.windows(2).all(|w| w[1] < w[0]));
        assert!(*r.sup_deviation.last().unwrap() < 0.05 * k);
        assert!(r.band_ok && r.decreasing);
        let big = regularity_statistic(&lt, &h, k, &[0], &dirs, &Thresholds::default());
        let at_large = lt.one_minus(&[64.0, 64.0]) / h.eval(&[64.0, 64.0]);
        assert!(at_large < k && big.d_values[0] < k);
    }

    #[test]
    fn inequalities_hold_for_the_exact_stable_transform() {
        let spec = StableSpec::new(0.6, 1.5, vec![vec![1.0, 0.0], vec![0.6, 0.8], vec![0.0, 1.0]], vec![0.2, 0.5, 0.3]).unwrap();
        let lt = stable_lt(spec);
        let res = lt_inequality_suite(&lt, &IneqGrid::default_for(2), &Thresholds::default());
        assert_eq!(res.len(), 8);
        for r in &res {
            assert_eq!(r.failures, 0, "{r:?}");
            assert!(r.checks > 0);
        }
        assert!(res[0].min_margin > 0.0 && res[2].min_margin > 0.0 && res[1].min_margin > 0.0 && res[3].min_margin > 0.0);
        assert!(inequality_report(&res).passed());
    }

    #[test]
    fn inequality_boundary_cases() {
        let spec = StableSpec::new(0.5, 1.0, vec![vec![0.6, 0.8]], vec![1.0]).unwrap();
        let lt = stable_lt(spec);
        let tu = [0.3, 0.9];
        // a = 1 turns the second inequality into an equality
        assert_eq!(lt.one_minus(&scaled(1.0, &tu)), 1.0 * lt.one_minus(&tu));
        let e1 = [2.0, 0.0];
        assert!(lt.one_minus(&e1) <= lt.one_minus(&[2.0, 2.0]));
    }

    #[test]
    fn inequalities_hold_for_the_monte_carlo_transform() {
        let (spec, _) = random_spec(1.0, 6, FpMode::Inhomogeneous);
        let lt = MonteCarloLt::build(&spec, 300, StreamKey::new(14)).unwrap();
        let res = lt_inequality_suite(&lt, &IneqGrid::default_for(2), &Thresholds::default());
        assert!(res.iter().all(|r| r.failures == 0), "{res:?}");
    }

    #[test]
    fn coupling_vanishes_without_immigration() {
        let (spec, _) = diagonal(1.0, 0, 17);
        let e = spec.ensemble().clone();
        let sol = solve_eigen(0.5, &e, &planar(17), 1e-12, 1000).unwrap();
        let spec = FixedPointSpec::new(&e, &sol, 1.0, FpMode::Inhomogeneous, 0).unwrap();
        let r = coupling_distance(&spec, 0.6, 4f64.powf(1.0 - 1.2), &[1, 3], 200, 3.0, StreamKey::new(15)).unwrap();
        assert!(r.levels.iter().all(|l| l.estimate.mean == 0.0));
    }

    #[test]
    fn scalar_coupling_is_a_geometric_series() {
        let (c, q) = (0.5, [0.3, 0.4]);
        let e = presets::scalar(2, c, 1, Some(q.to_vec()));
        let sol = solve_eigen(0.5, &e, &planar(17), 1e-12, 1000).unwrap();
        let spec = FixedPointSpec::new(&e, &sol, 0.0, FpMode::Inhomogeneous, 0).unwrap();
        let s = 0.7;
        let depths = [1, 4, 10, 30];
        let r = coupling_distance(&spec, s, c.powf(s), &depths, 50, 3.0, StreamKey::new(16)).unwrap();
        for (l, n) in r.levels.iter().zip(depths) {
            let oracle = (0.5 * (1.0 - c.powi(n as i32)) / (1.0 - c)).powf(s);
            assert!((l.estimate.mean - oracle).abs() < 1e-12 && l.estimate.se < 1e-12, "{l:?} vs {oracle}");
        }
        // increasing towards (|q|/(1−c))^s but never past it
        assert!((r.levels[3].estimate.mean - 1.0f64.powf(s)).abs() < 1e-8);
        assert!(coupling_distance(&spec, s, 1.2, &depths, 5, 3.0, StreamKey::new(0)).is_err());
    }

    #[test]
    fn random_coupling_stabilizes() {
        let (spec, sol) = random_spec(1.0, 6, FpMode::Inhomogeneous);
        // near α the convergence is slow but the increments shrink
        let s = sol.s + 0.1;
        let m_s = solve_eigen(s, spec.ensemble(), &planar(129), 1e-12, 10_000).unwrap().m_s;
        assert!(m_s < 1.0);
        let r = coupling_distance(&spec, s, m_s, &[6, 8, 10], 2000, 3.0, StreamKey::new(17)).unwrap();
        assert!(r.bounded, "{r:?}");
        // with the matrices scaled by 0.3, m(1) ≈ 0.28 and the depths agree
        let e = spec.ensemble().scale_matrices(0.3);
        let a = solve_alpha(&e, &planar(129), &AlphaOptions::default()).unwrap();
        let spec = FixedPointSpec::new(&e, &a.spectral, 1.0, FpMode::Inhomogeneous, 6).unwrap();
        let s = a.alpha + 0.1;
        let m_s = solve_eigen(s, &e, &planar(129), 1e-12, 10_000).unwrap().m_s;
        let r = coupling_distance(&spec, s, m_s, &[6, 8, 10], 4000, 3.0, StreamKey::new(18)).unwrap();
        assert!(r.bounded, "{r:?}");
        for w in r.levels.windows(2) {
            assert!(w[0].estimate.agrees(&w[1].estimate, 3.0, 0.0), "{r:?}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn inequality_suite_never_fails_on_stable_transforms(
            alpha in 0.1f64..0.99,
            k in 0.05f64..5.0,
            w in 0.0f64..1.0,
            t1 in 0.0f64..1.57,
            t2 in 0.0f64..1.57,
        ) {
            let p1 = SpherePoint::from_angle(t1).coords().to_vec();
            let p2 = SpherePoint::from_angle(t2).coords().to_vec();
            let spec = StableSpec::new(alpha, k, vec![p1, p2], vec![w, 1.0 - w]).unwrap();
            let res = lt_inequality_suite(&stable_lt(spec), &IneqGrid::default_for(2), &Thresholds::default());
            for r in res {
                prop_assert_eq!(r.failures, 0);
            }
        }

        #[test]
        fn tail_constant_counts_exceedances(n in 100usize..2000, q in 0.5f64..0.99) {
            let xs: Vec<f64> = (0..n).map(|i| (i + 1) as f64).collect();
            let c = tail_constant(&xs, 0.5, q);
            prop_assert!(c.exceedances as f64 <= (1.0 - q) * n as f64 + 1.0);
            prop_assert!(c.exceedances as f64 >= (1.0 - q) * n as f64 - 1.0);
        }
    }
}
