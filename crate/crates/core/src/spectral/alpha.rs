use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::NonnegMatrix;
use crate::model::WeightEnsemble;
use crate::rng::{par_map_indexed, RngStream, StreamKey};

use super::{SpectralSolution, SphereGrid, TransferKernel, DEFAULT_KERNEL_MC, DEFAULT_MAX_ITER};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaRegime {
    /// `m'(α) < 0`.
    Subcritical,
    /// `|m'(α)|` below the derivative tolerance.
    Critical,
    /// `m'(α) > 0`: the root is on the increasing branch of `m`.
    Invalid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaOptions {
    pub bracket: (f64, f64),
    /// Target for `|m(α) − 1|`.
    pub tol: f64,
    /// Finite-difference step for `m'`.
    pub h: f64,
    pub derivative_tol: f64,
    /// Accepted `|min m − 1|` when `m` touches 1 without crossing.
    pub critical_tol: f64,
    pub eig_tol: f64,
    pub max_iter: usize,
    pub kernel_mc: usize,
}

impl Default for AlphaOptions {
    fn default() -> Self {
        AlphaOptions {
            bracket: (1e-3, 1.0),
            tol: 1e-9,
            h: 1e-3,
            derivative_tol: 1e-4,
            critical_tol: 1e-6,
            eig_tol: 1e-12,
            max_iter: DEFAULT_MAX_ITER,
            kernel_mc: DEFAULT_KERNEL_MC,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaSolution {
    pub alpha: f64,
    pub m_alpha: f64,
    pub m_prime_alpha: f64,
    pub regime: AlphaRegime,
    pub bracket: (f64, f64),
    pub tol: f64,
    pub h: f64,
    /// Central differences at `h` and `h/2` before extrapolation.
    pub raw_derivatives: (f64, f64),
    pub evaluations: usize,
    /// Spectral data at `α`.
    pub spectral: SpectralSolution,
}

struct MCurve<'a> {
    kernel: &'a TransferKernel,
    opts: &'a AlphaOptions,
    warm: Option<SpectralSolution>,
    evaluations: usize,
}

impl MCurve<'_> {
    fn solve(&mut self, s: f64) -> Result<SpectralSolution> {
        self.evaluations += 1;
        let sol = self.kernel.solve_warm(s, self.opts.eig_tol, self.opts.max_iter, self.warm.as_ref())?;
        self.warm = Some(sol.clone());
        Ok(sol)
    }

    fn m(&mut self, s: f64) -> Result<f64> {
        Ok(self.solve(s)?.m_s)
    }
}

/// Finds `α` with `m(α) = 1` by bisection on `s ↦ m(s)` and estimates `m'(α)`
/// by a central difference with one Richardson step.
///
/// When `m` stays above 1 on the bracket but touches it (the critical case),
/// the minimizer of `m` is returned instead.
pub fn solve_alpha(ens: &WeightEnsemble, grid: &SphereGrid, opts: &AlphaOptions) -> Result<AlphaSolution> {
    let kernel = TransferKernel::build(ens, grid, opts.kernel_mc, StreamKey::new(0))?;
    solve_alpha_with(&kernel, opts)
}

/// [`solve_alpha`] on a prebuilt kernel.
pub fn solve_alpha_with(kernel: &TransferKernel, opts: &AlphaOptions) -> Result<AlphaSolution> {
    let (lo0, hi0) = opts.bracket;
    if !(lo0 > 0.0 && hi0 > lo0) {
        return Err(Error::Domain(format!("bad bracket ({lo0}, {hi0})")));
    }
    let mut curve = MCurve { kernel, opts, warm: None, evaluations: 0 };
    let m_lo = curve.m(lo0)?;
    let m_hi = curve.m(hi0)?;
    let (alpha, spectral) = if (m_lo - 1.0) * (m_hi - 1.0) <= 0.0 {
        let decreasing = m_lo > m_hi;
        let (mut lo, mut hi) = (lo0, hi0);
        let mut best: Option<(f64, SpectralSolution)> = None;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let sol = curve.solve(mid)?;
            let above = sol.m_s > 1.0;
            let done = (sol.m_s - 1.0).abs() <= opts.tol && hi - lo < 1e-9;
            best = Some((mid, sol));
            if done || hi - lo < 1e-15 {
                break;
            }
            if above == decreasing {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        best.expect("at least one bisection step")
    } else if m_lo > 1.0 && m_hi > 1.0 {
        let (s_min, sol) = golden_min(&mut curve, lo0, hi0)?;
        if (sol.m_s - 1.0).abs() > opts.critical_tol {
            return Err(Error::NoRoot { lo: lo0, hi: hi0, m_lo, m_hi });
        }
        (s_min, sol)
    } else {
        return Err(Error::NoRoot { lo: lo0, hi: hi0, m_lo, m_hi });
    };

    let h = opts.h.min(0.5 * alpha);
    let mut diff = |step: f64| -> Result<f64> { Ok((curve.m(alpha + step)? - curve.m(alpha - step)?) / (2.0 * step)) };
    let d1 = diff(h)?;
    let d2 = diff(0.5 * h)?;
    let m_prime = (4.0 * d2 - d1) / 3.0;
    let regime = if m_prime.abs() <= opts.derivative_tol {
        AlphaRegime::Critical
    } else if m_prime < 0.0 {
        AlphaRegime::Subcritical
    } else {
        AlphaRegime::Invalid
    };
    Ok(AlphaSolution {
        alpha,
        m_alpha: spectral.m_s,
        m_prime_alpha: m_prime,
        regime,
        bracket: opts.bracket,
        tol: opts.tol,
        h,
        raw_derivatives: (d1, d2),
        evaluations: curve.evaluations,
        spectral,
    })
}

fn golden_min(curve: &mut MCurve<'_>, mut lo: f64, mut hi: f64) -> Result<(f64, SpectralSolution)> {
    let gr = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - gr * (hi - lo);
    let mut b = lo + gr * (hi - lo);
    let mut sa = curve.solve(a)?;
    let mut sb = curve.solve(b)?;
    while hi - lo > 1e-9 {
        if sa.m_s < sb.m_s {
            hi = b;
            b = a;
            sb = sa;
            a = hi - gr * (hi - lo);
            sa = curve.solve(a)?;
        } else {
            lo = a;
            a = b;
            sa = sb;
            b = lo + gr * (hi - lo);
            sb = curve.solve(b)?;
        }
    }
    Ok(if sa.m_s < sb.m_s { (a, sa) } else { (b, sb) })
}

/// One level of the direct estimate `E N · (E‖M_n⋯M_1‖^s)^{1/n}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelEstimate {
    pub n: usize,
    pub estimate: f64,
    pub se: f64,
    pub ci: (f64, f64),
}

/// Direct Monte-Carlo estimates of `m(s)` from products of `n_levels` i.i.d.
/// `μ`-matrices, with log-scaled products and delta-method intervals.
pub fn m_of_s_direct(s: f64, ens: &WeightEnsemble, n_levels: usize, n_mc: usize, rng: &mut RngStream) -> Result<Vec<LevelEstimate>> {
    if n_levels == 0 {
        return Err(Error::Domain("n_levels must be at least 1".into()));
    }
    let key = StreamKey::new(rng.random::<u64>()).tag("m-direct");
    let n_mc = n_mc.max(2);
    // per path: s·log‖M_n⋯M_1‖ for n = 1..=n_levels
    let paths: Vec<Result<Vec<f64>>> = par_map_indexed(n_mc, |i| {
        let mut r = key.index(i).rng();
        let mut unit = NonnegMatrix::identity(ens.dim());
        let mut log_scale = 0.0;
        let mut out = Vec::with_capacity(n_levels);
        for _ in 0..n_levels {
            let m = ens.sample_mu(&mut r)?;
            let p = m.mul(&unit);
            let nrm = p.op_norm();
            if nrm == 0.0 {
                out.push(f64::NEG_INFINITY);
                unit = p;
                continue;
            }
            log_scale += nrm.ln();
            unit = p.scale(1.0 / nrm);
            out.push(s * log_scale);
        }
        Ok(out)
    });
    let paths: Vec<Vec<f64>> = paths.into_iter().collect::<Result<_>>()?;
    let en = ens.expected_n();
    Ok((0..n_levels)
        .map(|l| {
            let n = l + 1;
            let logs: Vec<f64> = paths.iter().map(|p| p[l]).collect();
            let mx = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let scaled: Vec<f64> = logs.iter().map(|v| (v - mx).exp()).collect();
            let est = crate::stats::MeanEstimate::from_samples(&scaled);
            // mean = e^{mx}·est.mean; level value = EN·mean^{1/n}
            let log_mean = mx + est.mean.ln();
            let value = en * (log_mean / n as f64).exp();
            let se = value / n as f64 * est.se / est.mean;
            LevelEstimate { n, estimate: value, se, ci: (value - 1.96 * se, value + 1.96 * se) }
        })
        .collect())
}

/// `k(s)` at successively doubled resolutions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefinementStep {
    pub resolution: usize,
    pub k_s: f64,
    /// `|k(res) − k(previous res)|`.
    pub change: f64,
    /// `log2` of the ratio of consecutive changes.
    pub observed_order: f64,
}

/// Recomputes `k(s)` on grids of the given (planar) resolutions.
pub fn grid_refinement(s: f64, ens: &WeightEnsemble, resolutions: &[usize], tol: f64) -> Result<Vec<RefinementStep>> {
    let mut out: Vec<RefinementStep> = Vec::new();
    for &res in resolutions {
        let grid = SphereGrid::build(ens.dim(), res)?;
        let k = TransferKernel::build(ens, &grid, DEFAULT_KERNEL_MC, StreamKey::new(0))?.solve(s, tol, DEFAULT_MAX_ITER)?.k_s;
        let change = out.last().map_or(f64::NAN, |p| (k - p.k_s).abs());
        let observed_order = match out.last() {
            Some(p) if p.change.is_finite() && change > 0.0 => (p.change / change).log2(),
            _ => f64::NAN,
        };
        out.push(RefinementStep { resolution: res, k_s: k, change, observed_order });
    }
    Ok(out)
}
