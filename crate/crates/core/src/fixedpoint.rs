//! Fixed points of the smoothing transform `X ≜ Σ_i T_i X_i + Q`.
//!
//! Two constructions are provided. Iteration pushes stable leaves through a
//! tree of depth `n`; the representation
//!
//! ```text
//! ⟨u, X⟩ ≜ ⟨u, W*⟩ + (K W(u))^{1/α} Y_α
//! ```
//!
//! uses `W_n(u)` and `W*_n` from one tree.

use serde::{Deserialize, Serialize};

use crate::branching::{generation, w_n, Caps};
use crate::error::{Error, Result};
use crate::linalg::{dot, NonnegVector, SpherePoint};
use crate::model::WeightEnsemble;
use crate::rng::{par_map_indexed, StreamKey};
use crate::spectral::{solve_eigen, AlphaSolution, HEvaluator, SpectralSolution, SphereGrid, DEFAULT_MAX_ITER};
use crate::stable::{sample_positive_stable, StableSampler, StableSpec};
use crate::stats::{ks_two_sample, MeanEstimate};

pub const DEFAULT_DEPTH: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FpMode {
    /// `Q ≡ 0`.
    Homogeneous,
    Inhomogeneous,
}

/// Everything needed to sample one fixed point.
#[derive(Debug, Clone)]
pub struct FixedPointSpec {
    ens: WeightEnsemble,
    alpha: f64,
    k: f64,
    mode: FpMode,
    depth: usize,
    caps: Caps,
    h: HEvaluator,
    /// Leaf law; `None` when `K = 0`.
    leaves: Option<StableSampler>,
}

impl FixedPointSpec {
    /// `spectral` must be the solution at `s = α`.
    pub fn new(ens: &WeightEnsemble, spectral: &SpectralSolution, k: f64, mode: FpMode, depth: usize) -> Result<Self> {
        if !(k >= 0.0 && k.is_finite()) {
            return Err(Error::Domain(format!("K = {k} must be finite and nonnegative")));
        }
        let ens = match mode {
            FpMode::Homogeneous => ens.homogeneous(),
            FpMode::Inhomogeneous => ens.clone(),
        };
        let leaves = if k > 0.0 { Some(StableSampler::new(StableSpec::from_spectral(spectral, k)?)?) } else { None };
        Ok(FixedPointSpec { alpha: spectral.s, k, mode, depth, caps: Caps::default(), h: spectral.evaluator(), leaves, ens })
    }

    pub fn with_caps(mut self, caps: Caps) -> Self {
        self.caps = caps;
        self
    }

    pub fn with_depth(mut self, depth: usize) -> Self {
        self.depth = depth;
        self
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn mode(&self) -> FpMode {
        self.mode
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn ensemble(&self) -> &WeightEnsemble {
        &self.ens
    }

    pub fn h(&self) -> &HEvaluator {
        &self.h
    }

    /// `K = 0` with `Q ≡ 0`: the fixed point `δ_0`.
    pub fn is_trivial(&self) -> bool {
        self.k == 0.0 && (self.mode == FpMode::Homogeneous || self.ens.is_homogeneous())
    }
}

/// Per-tree functionals of one fixed-point draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointSample {
    /// `W_n(u_j)` for the requested directions.
    pub w: Vec<f64>,
    pub wstar: NonnegVector,
    /// `Σ_{|v|=n} L(v)Y(v) + W*_n`, when leaves were drawn.
    pub x: Option<NonnegVector>,
    pub tree_key: u64,
}

/// Builds the tree rooted at `key` and evaluates `W_n(u_j)`, `W*_n` and,
/// if `with_leaves`, the iterated sample.
pub fn sample_tree(spec: &FixedPointSpec, dirs: &[SpherePoint], with_leaves: bool, key: StreamKey) -> Result<FixedPointSample> {
    let g = generation(spec.depth, &spec.ens, &spec.caps, key)?;
    let w = dirs.iter().map(|u| w_n(&g, u.coords(), &spec.h)).collect();
    let x = if with_leaves {
        let mut x = g.wstar_partial.clone();
        if let Some(s) = &spec.leaves {
            for node in &g.nodes {
                let y = s.sample_exact(&mut node.key.tag("leaf").rng());
                let ly = node.l.unit.mul_vec(y.as_slice());
                let c = (node.l.log_norm + node.log_mass).exp();
                x.iter_mut().zip(ly).for_each(|(a, b)| *a += c * b);
            }
        }
        Some(NonnegVector::new(x.into_iter().map(|v| v.max(0.0)).collect())?)
    } else {
        None
    };
    let wstar = NonnegVector::new(g.wstar_partial.into_iter().map(|v| v.max(0.0)).collect())?;
    Ok(FixedPointSample { w, wstar, x, tree_key: key.raw() })
}

/// `Y_n = Σ_{|v|=n} L(v)Y(v) + Σ_{|v|<n} L(v)Q(v)` with i.i.d. stable leaves.
pub fn sample_iterated(spec: &FixedPointSpec, key: StreamKey) -> Result<NonnegVector> {
    Ok(sample_tree(spec, &[], true, key)?.x.expect("leaves drawn"))
}

/// `⟨u, W*_n⟩ + (K W_n(u))^{1/α} Y_α` from one tree and an independent `Y_α`.
pub fn sample_projection(spec: &FixedPointSpec, u: &SpherePoint, key: StreamKey) -> Result<f64> {
    let t = sample_tree(spec, std::slice::from_ref(u), false, key)?;
    let base = dot(t.wstar.as_slice(), u.coords());
    if spec.k == 0.0 {
        return Ok(base);
    }
    let y = if spec.alpha < 1.0 { sample_positive_stable(spec.alpha, &mut key.tag("projection-y").rng())? } else { 1.0 };
    Ok(base + (spec.k * t.w[0]).powf(1.0 / spec.alpha) * y)
}

/// `n` iterated samples, tree `i` on stream `key.index(i)`.
pub fn iterated_samples(spec: &FixedPointSpec, n: usize, key: StreamKey) -> Result<Vec<NonnegVector>> {
    let key = key.tag("iterated");
    par_map_indexed(n, |i| sample_iterated(spec, key.index(i))).into_iter().collect()
}

/// `n` representation samples of `⟨u, X⟩`.
pub fn projection_samples(spec: &FixedPointSpec, u: &SpherePoint, n: usize, key: StreamKey) -> Result<Vec<f64>> {
    let key = key.tag("projection");
    par_map_indexed(n, |i| sample_projection(spec, u, key.index(i))).into_iter().collect()
}

/// Monte-Carlo Laplace transform `Φ(r u)` on a grid of radii and directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LtGrid {
    pub rs: Vec<f64>,
    pub directions: Vec<SpherePoint>,
    /// `values[j][i]` at direction `j` and radius `i`.
    pub values: Vec<Vec<MeanEstimate>>,
}

impl LtGrid {
    /// Rows `r,u_index,phi,ci_half_width` (95%).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("r,u_index,phi,ci_half_width\n");
        for (j, row) in self.values.iter().enumerate() {
            for (r, v) in self.rs.iter().zip(row) {
                out.push_str(&format!("{r},{j},{},{}\n", v.mean, 1.96 * v.se));
            }
        }
        out
    }
}

/// `E exp(−r⟨u, W*_n⟩ − K r^α W_n(u))` over `n_mc` independent trees.
pub fn lt_fixed_point(spec: &FixedPointSpec, rs: &[f64], dirs: &[SpherePoint], n_mc: usize, key: StreamKey) -> Result<LtGrid> {
    let key = key.tag("lt");
    let trees: Vec<FixedPointSample> =
        par_map_indexed(n_mc, |i| sample_tree(spec, dirs, false, key.index(i))).into_iter().collect::<Result<_>>()?;
    let values = dirs
        .iter()
        .enumerate()
        .map(|(j, u)| {
            rs.iter()
                .map(|&r| {
                    let v: Vec<f64> = trees
                        .iter()
                        .map(|t| {
                            let lin = if r == 0.0 { 0.0 } else { r * dot(t.wstar.as_slice(), u.coords()) };
                            let stab = if r == 0.0 || spec.k == 0.0 { 0.0 } else { spec.k * r.powf(spec.alpha) * t.w[j] };
                            (-lin - stab).exp()
                        })
                        .collect();
                    MeanEstimate::from_samples(&v)
                })
                .collect()
        })
        .collect();
    Ok(LtGrid { rs: rs.to_vec(), directions: dirs.to_vec(), values })
}

/// KS distances between projections of depth-`n` and depth-`(n+2)` iterated samples.
pub fn depth_stability(spec: &FixedPointSpec, u: &SpherePoint, depths: &[usize], n: usize, key: StreamKey) -> Result<Vec<f64>> {
    let proj = |d: usize, tag: &str| -> Result<Vec<f64>> {
        let s = spec.clone().with_depth(d);
        Ok(iterated_samples(&s, n, key.tag(tag).index(d as u64))?.iter().map(|x| dot(x.as_slice(), u.coords())).collect())
    };
    depths.iter().map(|&d| Ok(ks_two_sample(&proj(d, "depth-a")?, &proj(d + 2, "depth-b")?).statistic)).collect()
}

/// Scales every matrix by `m(χ)^{−1/χ}`, so that the new ensemble has `m_χ(χ) = 1`.
pub fn bias_weights(ens: &WeightEnsemble, chi: f64, sol_chi: &SpectralSolution) -> Result<WeightEnsemble> {
    if (sol_chi.s - chi).abs() > 1e-12 {
        return Err(Error::Precondition(format!("spectral solution is at s = {}, not χ = {chi}", sol_chi.s)));
    }
    if !(sol_chi.m_s > 0.0) {
        return Err(Error::Precondition(format!("m(χ) = {} must be positive", sol_chi.m_s)));
    }
    Ok(ens.scale_matrices(bias_factor(chi, sol_chi.m_s)))
}

/// `m(χ)^{−1/χ}`.
pub fn bias_factor(chi: f64, m_chi: f64) -> f64 {
    m_chi.powf(-1.0 / chi)
}

/// One member of the critical-case sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalMember {
    pub chi: f64,
    pub factor: f64,
    /// `m_χ(χ)` re-solved on the biased ensemble.
    pub m_chi: f64,
    /// Central difference of `m_χ` at `χ`.
    pub m_prime_chi: f64,
    /// Scale with `Φ_χ(c_χ u_0) = 1/2`.
    pub c_chi: f64,
    /// `Φ_χ(c_χ r u)` on the test grid, `[direction][radius]`.
    pub lt: Vec<Vec<f64>>,
    /// `Φ_χ(c_χ u_0)`.
    pub lt_at_u0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalReport {
    pub alpha: f64,
    pub members: Vec<CriticalMember>,
    /// Sup distance between consecutive rescaled transforms.
    pub sup_distances: Vec<f64>,
}

/// Budgets of the critical-case approximation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalOptions {
    pub chis: Vec<f64>,
    pub rs: Vec<f64>,
    pub dirs: Vec<SpherePoint>,
    pub n_trees: usize,
    pub depth: usize,
    pub derivative_tol: f64,
}

impl CriticalOptions {
    /// `χ ∈ {α−0.2, α−0.1, α−0.05, α−0.025}` on a planar test grid.
    pub fn defaults(alpha: f64, dim: usize) -> Self {
        let dirs = if dim == 2 {
            (0..5).map(|i| SpherePoint::from_angle(i as f64 / 4.0 * std::f64::consts::FRAC_PI_2)).collect()
        } else {
            (0..dim).map(|i| SpherePoint::basis(dim, i)).chain(std::iter::once(SpherePoint::diagonal(dim))).collect()
        };
        CriticalOptions {
            chis: [0.2, 0.1, 0.05, 0.025].iter().map(|d| alpha - d).filter(|c| *c > 0.0).collect(),
            rs: vec![0.25, 0.5, 1.0, 2.0, 4.0],
            dirs,
            n_trees: 2000,
            depth: DEFAULT_DEPTH,
            derivative_tol: 1e-4,
        }
    }
}

/// Biased subcritical approximations `Φ_χ`, `χ ↑ α`, normalized by `Φ_χ(c_χ u_0) = 1/2`.
pub fn critical_fp_approx(
    ens: &WeightEnsemble,
    alpha: &AlphaSolution,
    u0: &SpherePoint,
    grid: &SphereGrid,
    opts: &CriticalOptions,
    key: StreamKey,
) -> Result<CriticalReport> {
    if alpha.m_prime_alpha.abs() > opts.derivative_tol {
        return Err(Error::Precondition(format!("m'(α) = {} is not critical", alpha.m_prime_alpha)));
    }
    let hom = ens.homogeneous();
    let mut members = Vec::with_capacity(opts.chis.len());
    for (i, &chi) in opts.chis.iter().enumerate() {
        if !(chi > 0.0 && chi < alpha.alpha) {
            return Err(Error::Domain(format!("χ = {chi} must lie in (0, α)")));
        }
        let sol = solve_eigen(chi, &hom, grid, 1e-12, DEFAULT_MAX_ITER)?;
        let biased = bias_weights(&hom, chi, &sol)?;
        let h = 1e-4;
        let at = |s: f64| solve_eigen(s, &biased, grid, 1e-12, DEFAULT_MAX_ITER);
        let bsol = at(chi)?;
        let m_prime_chi = (at(chi + h)?.m_s - at(chi - h)?.m_s) / (2.0 * h);
        let spec = FixedPointSpec::new(&biased, &bsol, 1.0, FpMode::Homogeneous, opts.depth)?;
        let mut dirs = vec![u0.clone()];
        dirs.extend(opts.dirs.iter().cloned());
        let tkey = key.tag("critical").index(i as u64);
        let trees: Vec<FixedPointSample> =
            par_map_indexed(opts.n_trees, |t| sample_tree(&spec, &dirs, false, tkey.index(t))).into_iter().collect::<Result<_>>()?;
        // Φ_χ(c u) = mean exp(−c^χ W(u))
        let phi = |c: f64, j: usize| trees.iter().map(|t| (-(c.powf(chi)) * t.w[j]).exp()).sum::<f64>() / trees.len() as f64;
        let c_chi = solve_half(|c| phi(c, 0))?;
        let lt = (1..dirs.len()).map(|j| opts.rs.iter().map(|r| phi(c_chi * r, j)).collect()).collect();
        members.push(CriticalMember {
            chi,
            factor: bias_factor(chi, sol.m_s),
            m_chi: bsol.m_s,
            m_prime_chi,
            c_chi,
            lt,
            lt_at_u0: phi(c_chi, 0),
        });
    }
    let sup_distances = members
        .windows(2)
        .map(|w| {
            w[0].lt.iter().flatten().zip(w[1].lt.iter().flatten()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        })
        .collect();
    Ok(CriticalReport { alpha: alpha.alpha, members, sup_distances })
}

/// Root of the decreasing function `phi(c) = 1/2`, by bisection in `log c`.
fn solve_half<F: Fn(f64) -> f64>(phi: F) -> Result<f64> {
    let (mut lo, mut hi) = (-40.0f64, 40.0f64);
    if !(phi(lo.exp()) > 0.5 && phi(hi.exp()) < 0.5) {
        return Err(Error::RootFind("Φ(c u0) = 1/2 has no bracketed root".into()));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if phi(mid.exp()) > 0.5 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}
