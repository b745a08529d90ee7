//! Positive `α`-stable laws on the orthant with Laplace transform
//!
//! ```text
//! E exp(−⟨x, X⟩) = exp(−K ∫ ⟨x, y⟩^α ν(dy))
//! ```
//!
//! for a discrete spherical measure `ν`.

use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::linalg::{dot, NonnegVector};
use crate::rng::RngStream;
use crate::spectral::SpectralSolution;

/// Default LePage truncation.
pub const DEFAULT_TERMS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StableSpec {
    pub alpha: f64,
    #[serde(rename = "K")]
    pub k: f64,
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl StableSpec {
    /// Atoms with zero weight are dropped; the weights must sum to one.
    pub fn new(alpha: f64, k: f64, points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::Domain(format!("stable index {alpha} outside (0, 1]")));
        }
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::Domain(format!("scale K = {k} must be positive")));
        }
        if points.is_empty() || points.len() != weights.len() {
            return Err(Error::Domain("spherical measure needs one weight per point".into()));
        }
        let dim = points[0].len();
        if dim == 0 || points.iter().any(|p| p.len() != dim || p.iter().any(|c| !(*c >= 0.0))) {
            return Err(Error::Domain("spherical points must be nonnegative and of one dimension".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Domain("spherical weights must be nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("spherical weights sum to {total}, not 1")));
        }
        let (points, weights) = points.into_iter().zip(weights).filter(|(_, w)| *w > 0.0).unzip();
        Ok(StableSpec { alpha, k, points, weights })
    }

    /// `ν = δ_y`.
    pub fn point(alpha: f64, k: f64, y: Vec<f64>) -> Result<Self> {
        StableSpec::new(alpha, k, vec![y], vec![1.0])
    }

    /// The spherical measure `ν^α` of a spectral solution at `s = α`.
    pub fn from_spectral(sol: &SpectralSolution, k: f64) -> Result<Self> {
        let total: f64 = sol.nu_weights.iter().sum();
        let points = sol.grid().points().iter().map(|p| p.coords().to_vec()).collect();
        let weights = sol.nu_weights.iter().map(|w| w / total).collect();
        StableSpec::new(sol.s, k, points, weights)
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    /// At `α = 1` the law is the point mass `K ∫ y ν(dy)`.
    pub fn is_point_mass(&self) -> bool {
        self.alpha == 1.0
    }

    /// `∫ ⟨x, y⟩^α ν(dy)`.
    pub fn exponent(&self, x: &[f64]) -> f64 {
        self.points.iter().zip(&self.weights).map(|(y, w)| w * dot(x, y).max(0.0).powf(self.alpha)).sum()
    }

    /// `∫ y ν(dy)`.
    fn mean_direction(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim()];
        for (y, w) in self.points.iter().zip(&self.weights) {
            m.iter_mut().zip(y).for_each(|(a, b)| *a += w * b);
        }
        m
    }
}

/// `exp(−K ∫ ⟨x, y⟩^α ν(dy))`.
pub fn lt_stable(spec: &StableSpec, x: &[f64]) -> f64 {
    (-spec.k * spec.exponent(x)).exp()
}

/// One draw with Laplace transform `exp(−t^α)`, by Kanter's representation
/// `(A(U)/E)^{(1−α)/α}` with `U` uniform on `(0, π)` and `E` standard exponential.
pub fn sample_positive_stable(alpha: f64, rng: &mut RngStream) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("positive stable index {alpha} outside (0, 1)")));
    }
    Ok(kanter(alpha, rng))
}

#[inline]
fn kanter(alpha: f64, rng: &mut RngStream) -> f64 {
    let u = loop {
        let u = rng.random::<f64>() * std::f64::consts::PI;
        if u > 0.0 {
            break u;
        }
    };
    let e: f64 = Exp1.sample(rng);
    let b = 1.0 - alpha;
    let a = (alpha * u).sin().powf(alpha / b) * (b * u).sin() / u.sin().powf(1.0 / b);
    (a / e).powf(b / alpha)
}

/// Samplers for one [`StableSpec`].
#[derive(Debug, Clone)]
pub struct StableSampler {
    spec: StableSpec,
    alias: WeightedAliasIndex<f64>,
    /// `(K/Γ(1−α))^{1/α}`.
    lepage_scale: f64,
    /// `(K ν_j)^{1/α}`.
    atom_scales: Vec<f64>,
    mean: Vec<f64>,
}

impl StableSampler {
    pub fn new(spec: StableSpec) -> Result<Self> {
        let alias = WeightedAliasIndex::new(spec.weights.clone()).map_err(|e| Error::Domain(format!("spherical weights: {e}")))?;
        let a = spec.alpha;
        let lepage_scale = if a < 1.0 { (spec.k / gamma(1.0 - a)).powf(1.0 / a) } else { f64::NAN };
        let atom_scales = spec.weights.iter().map(|w| (spec.k * w).powf(1.0 / a)).collect();
        let mean = spec.mean_direction();
        Ok(StableSampler { spec, alias, lepage_scale, atom_scales, mean })
    }

    pub fn spec(&self) -> &StableSpec {
        &self.spec
    }

    /// Mean of the discarded LePage tail, `(K/Γ(1−α))^{1/α} · α/(1−α) · n^{1−1/α}`.
    pub fn remainder_bound(&self, n_terms: usize) -> f64 {
        let a = self.spec.alpha;
        if a >= 1.0 {
            return 0.0;
        }
        self.lepage_scale * a / (1.0 - a) * (n_terms.max(1) as f64).powf(1.0 - 1.0 / a)
    }

    /// LePage series `(K/Γ(1−α))^{1/α} Σ_{k ≤ n} Γ_k^{−1/α} Y_k` plus the
    /// conditional mean of the remainder given `Γ_n`.
    pub fn sample_lepage(&self, n_terms: usize, rng: &mut RngStream) -> NonnegVector {
        if self.spec.is_point_mass() {
            return self.point_mass();
        }
        let a = self.spec.alpha;
        let p = -1.0 / a;
        let d = self.spec.dim();
        let mut x = vec![0.0; d];
        let mut arrival = 0.0;
        for _ in 0..n_terms {
            arrival += <Exp1 as Distribution<f64>>::sample(&Exp1, rng);
            let c = arrival.powf(p);
            let y = &self.spec.points[self.alias.sample(rng)];
            for (xi, yi) in x.iter_mut().zip(y) {
                *xi += c * yi;
            }
        }
        // ∫_{Γ_n}^∞ s^{−1/α} ds = α/(1−α) · Γ_n^{1−1/α}
        let tail = if n_terms > 0 { a / (1.0 - a) * arrival.powf(1.0 - 1.0 / a) } else { 0.0 };
        let out = x.iter().zip(&self.mean).map(|(xi, m)| self.lepage_scale * (xi + tail * m)).collect();
        NonnegVector::new(out).expect("nonnegative terms")
    }

    /// Exact draw for a discrete `ν`: `Σ_j (K ν_j)^{1/α} Z_j y_j` with i.i.d.
    /// `Z_j` of Laplace transform `exp(−t^α)`.
    pub fn sample_exact(&self, rng: &mut RngStream) -> NonnegVector {
        if self.spec.is_point_mass() {
            return self.point_mass();
        }
        let mut x = vec![0.0; self.spec.dim()];
        for (y, c) in self.spec.points.iter().zip(&self.atom_scales) {
            let z = c * kanter(self.spec.alpha, rng);
            for (xi, yi) in x.iter_mut().zip(y) {
                *xi += z * yi;
            }
        }
        NonnegVector::new(x).expect("nonnegative terms")
    }

    fn point_mass(&self) -> NonnegVector {
        NonnegVector::new(self.mean.iter().map(|m| self.spec.k * m).collect()).expect("nonnegative")
    }
}

/// A LePage draw together with truncation diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StableDraw {
    pub x: NonnegVector,
    pub remainder_bound: f64,
    pub warnings: Vec<String>,
}

/// One LePage draw; warns when the mean remainder exceeds `1e-3` or when the
/// law is the `α = 1` point mass.
pub fn sample_multivariate_stable(spec: &StableSpec, n_terms: usize, rng: &mut RngStream) -> Result<StableDraw> {
    let s = StableSampler::new(spec.clone())?;
    let remainder_bound = s.remainder_bound(n_terms);
    let mut warnings = Vec::new();
    if spec.is_point_mass() {
        warnings.push("alpha = 1: point mass K∫y ν(dy)".into());
    } else if remainder_bound > 1e-3 {
        warnings.push(format!("truncation at {n_terms} terms leaves a mean remainder of {remainder_bound:.3e}"));
    }
    Ok(StableDraw { x: s.sample_lepage(n_terms, rng), remainder_bound, warnings })
}

/// Rows `x_1,...,x_d`.
pub fn samples_to_csv(samples: &[NonnegVector]) -> String {
    let d = samples.first().map_or(0, |s| s.dim());
    let mut out = (1..=d).map(|i| format!("x{i}")).collect::<Vec<_>>().join(",");
    out.push('\n');
    for s in samples {
        out.push_str(&s.as_slice().iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    out
}
