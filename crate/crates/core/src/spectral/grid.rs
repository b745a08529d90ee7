use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, SpherePoint};

/// A discretization of `S_+`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphereGrid {
    dim: usize,
    points: Vec<SpherePoint>,
    weights: Vec<f64>,
    /// Angular step for planar grids.
    step: f64,
}

/// Interpolation weights for one off-grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stencil {
    pub idx: [u32; 4],
    pub w: [f64; 4],
    pub len: u8,
}

impl Stencil {
    fn single(i: usize) -> Self {
        Stencil { idx: [i as u32, 0, 0, 0], w: [1.0, 0.0, 0.0, 0.0], len: 1 }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        (0..self.len as usize).map(|k| (self.idx[k] as usize, self.w[k]))
    }

    /// `Σ w_k f(idx_k)`.
    #[inline]
    pub fn apply(&self, f: &[f64]) -> f64 {
        self.iter().map(|(i, w)| w * f[i]).sum()
    }
}

/// Default planar resolution; odd, so that the diagonal direction is a grid point.
pub const DEFAULT_RESOLUTION: usize = 513;

impl SphereGrid {
    /// `d = 1`: the point `{1}`. `d = 2`: `resolution` equi-angular points on
    /// `[0, π/2]` with trapezoid weights. `d ≥ 3`: a Fibonacci point set on the
    /// full sphere folded into the orthant by absolute values, deduplicated,
    /// with uniform weights.
    pub fn build(dim: usize, resolution: usize) -> Result<Self> {
        match dim {
            0 => Err(Error::Domain("grid dimension must be at least 1".into())),
            1 => Ok(SphereGrid { dim, points: vec![SpherePoint::basis(1, 0)], weights: vec![1.0], step: 0.0 }),
            _ if resolution < 2 => Err(Error::Domain("grid resolution must be at least 2".into())),
            2 => {
                let step = std::f64::consts::FRAC_PI_2 / (resolution - 1) as f64;
                let points = (0..resolution).map(|i| SpherePoint::from_angle(i as f64 * step)).collect();
                let mut weights = vec![step; resolution];
                weights[0] *= 0.5;
                weights[resolution - 1] *= 0.5;
                Ok(SphereGrid { dim, points, weights, step })
            }
            _ => {
                let pts = fibonacci_orthant(dim, resolution);
                let n = pts.len();
                Ok(SphereGrid { dim, points: pts, weights: vec![1.0 / n as f64; n], step: 0.0 })
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[SpherePoint] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Angles of a planar grid.
    pub fn angles(&self) -> Vec<f64> {
        self.points.iter().map(|p| if self.dim == 2 { p.angle() } else { f64::NAN }).collect()
    }

    /// Interpolation stencil for a unit vector `x` in the orthant.
    pub fn stencil(&self, x: &[f64]) -> Stencil {
        match self.dim {
            1 => Stencil::single(0),
            2 => {
                let theta = x[1].max(0.0).atan2(x[0].max(0.0)).clamp(0.0, std::f64::consts::FRAC_PI_2);
                let pos = theta / self.step;
                let last = self.points.len() - 1;
                let i = (pos.floor() as usize).min(last - 1);
                let frac = (pos - i as f64).clamp(0.0, 1.0);
                if frac == 0.0 {
                    Stencil::single(i)
                } else if frac == 1.0 {
                    Stencil::single(i + 1)
                } else {
                    Stencil { idx: [i as u32, i as u32 + 1, 0, 0], w: [1.0 - frac, frac, 0.0, 0.0], len: 2 }
                }
            }
            _ => self.nearest_idw(x),
        }
    }

    fn nearest_idw(&self, x: &[f64]) -> Stencil {
        let mut best: [(f64, usize); 4] = [(f64::INFINITY, 0); 4];
        for (i, p) in self.points.iter().enumerate() {
            let d2: f64 = p.coords().iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
            if d2 < best[3].0 {
                best[3] = (d2, i);
                best.sort_by(|a, b| a.0.total_cmp(&b.0));
            }
        }
        if best[0].0 < 1e-24 {
            return Stencil::single(best[0].1);
        }
        let k = best.iter().filter(|b| b.0.is_finite()).count();
        let inv: Vec<f64> = best[..k].iter().map(|b| 1.0 / b.0.sqrt()).collect();
        let z: f64 = inv.iter().sum();
        let mut s = Stencil { idx: [0; 4], w: [0.0; 4], len: k as u8 };
        for j in 0..k {
            s.idx[j] = best[j].1 as u32;
            s.w[j] = inv[j] / z;
        }
        s
    }

    /// Index of the grid point closest to `x`.
    pub fn nearest(&self, x: &[f64]) -> usize {
        let mut best = (f64::NEG_INFINITY, 0);
        for (i, p) in self.points.iter().enumerate() {
            let c = dot(p.coords(), x);
            if c > best.0 {
                best = (c, i);
            }
        }
        best.1
    }
}

fn fibonacci_orthant(dim: usize, n: usize) -> Vec<SpherePoint> {
    let golden = (1.0 + 5f64.sqrt()) / 2.0;
    let mut raw: Vec<Vec<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        let t = (i as f64 + 0.5) / n as f64;
        if dim == 3 {
            let z = 1.0 - 2.0 * t;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = 2.0 * std::f64::consts::PI * i as f64 / golden;
            raw.push(vec![r * phi.cos(), r * phi.sin(), z]);
        } else {
            // Generalized Kronecker sequence mapped through the inverse normal cdf.
            let mut v = Vec::with_capacity(dim);
            for k in 0..dim {
                let alpha = 1.0 / plastic_root(dim).powi(k as i32 + 1);
                let u = (0.5 + alpha * (i as f64 + 1.0)).fract();
                v.push(inv_normal(u.clamp(1e-12, 1.0 - 1e-12)));
            }
            raw.push(v);
        }
    }
    let mut out: Vec<SpherePoint> = Vec::with_capacity(n);
    for v in raw {
        let abs: Vec<f64> = v.iter().map(|x| x.abs()).collect();
        if let Ok(p) = SpherePoint::from_vec(&abs) {
            let dup = out.iter().any(|q| q.coords().iter().zip(p.coords()).all(|(a, b)| (a - b).abs() < 1e-9));
            if !dup {
                out.push(p);
            }
        }
    }
    out
}

/// Unique positive root of `x^{d+1} = x + 1`.
fn plastic_root(d: usize) -> f64 {
    let mut x: f64 = 1.5;
    for _ in 0..100 {
        x = (1.0 + x).powf(1.0 / (d as f64 + 1.0));
    }
    x
}

/// Inverse standard normal cdf (Acklam's rational approximation).
fn inv_normal(p: f64) -> f64 {
    const A: [f64; 6] = [-3.969683028665376e1, 2.209460984245205e2, -2.759285104469687e2, 1.383577518672690e2, -3.066479806614716e1, 2.506628277459239];
    const B: [f64; 5] = [-5.447609879822406e1, 1.615858368580409e2, -1.556989798598866e2, 6.680131188771972e1, -1.328068155288572e1];
    const C: [f64; 6] = [-7.784894002430293e-3, -3.223964580411365e-1, -2.400758277161838, -2.549732539343734, 4.374664141464968, 2.938163982698783];
    const D: [f64; 4] = [7.784695709041462e-3, 3.224671290700398e-1, 2.445134137142996, 3.754408661907416];
    let pl = 0.02425;
    if p < pl {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5]) / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - pl {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -inv_normal(1.0 - p)
    }
}
