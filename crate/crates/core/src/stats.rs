//! Monte-Carlo summaries and classical one-dimensional statistics.

use serde::{Deserialize, Serialize};

/// A sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

impl MeanEstimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return MeanEstimate { mean: f64::NAN, se: f64::NAN, n };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let se = if n > 1 {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        MeanEstimate { mean, se, n }
    }

    /// Symmetric interval `mean ± z·se`.
    pub fn ci(&self, z: f64) -> (f64, f64) {
        (self.mean - z * self.se, self.mean + z * self.se)
    }

    /// `|a − b| ≤ z·sqrt(se_a² + se_b²) + floor`.
    pub fn agrees(&self, other: &MeanEstimate, z: f64, floor: f64) -> bool {
        (self.mean - other.mean).abs() <= z * self.se.hypot(other.se) + floor
    }

    /// `|mean − target| ≤ z·se + floor`.
    pub fn covers(&self, target: f64, z: f64, floor: f64) -> bool {
        (self.mean - target).abs() <= z * self.se + floor
    }
}

/// Ratio estimate `Σ w f / Σ w` with a delta-method standard error.
pub fn self_normalized(values: &[f64], weights: &[f64]) -> MeanEstimate {
    let n = values.len();
    let sw: f64 = weights.iter().sum();
    if n == 0 || sw <= 0.0 {
        return MeanEstimate { mean: f64::NAN, se: f64::NAN, n };
    }
    let mean = values.iter().zip(weights).map(|(f, w)| f * w).sum::<f64>() / sw;
    let wbar = sw / n as f64;
    let var = values.iter().zip(weights).map(|(f, w)| (w * (f - mean)).powi(2)).sum::<f64>() / (n as f64 * wbar * wbar);
    MeanEstimate { mean, se: (var / n as f64).sqrt(), n }
}

/// Kish effective sample size `(Σw)² / Σw²`.
pub fn effective_sample_size(weights: &[f64]) -> f64 {
    let s: f64 = weights.iter().sum();
    let s2: f64 = weights.iter().map(|w| w * w).sum();
    if s2 == 0.0 {
        0.0
    } else {
        s * s / s2
    }
}

/// Linear-interpolated empirical quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let q = q.clamp(0.0, 1.0);
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

pub fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Weighted quantile of `values` with weights `weights`.
pub fn weighted_quantile(values: &[f64], weights: &[f64], q: f64) -> f64 {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|a, b| values[*a].total_cmp(&values[*b]));
    let total: f64 = weights.iter().sum();
    let mut acc = 0.0;
    for i in &idx {
        acc += weights[*i];
        if acc >= q * total {
            return values[*i];
        }
    }
    values[*idx.last().expect("nonempty")]
}

/// Outcome of a two-sample Kolmogorov–Smirnov test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n1: usize,
    pub n2: usize,
}

/// Survival function of the Kolmogorov distribution, `P(K > λ)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sample KS test with the Stephens small-sample correction.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    let x = sorted(a);
    let y = sorted(b);
    let (n1, n2) = (x.len(), y.len());
    assert!(n1 > 0 && n2 > 0, "KS test needs nonempty samples");
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < n1 && j < n2 {
        let v = x[i].min(y[j]);
        while i < n1 && x[i] <= v {
            i += 1;
        }
        while j < n2 && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n1 as f64 - j as f64 / n2 as f64).abs());
    }
    let ne = (n1 * n2) as f64 / (n1 + n2) as f64;
    let sq = ne.sqrt();
    let p = kolmogorov_sf((sq + 0.12 + 0.11 / sq) * d);
    KsResult { statistic: d, p_value: p, n1, n2 }
}

/// Hill estimate of the tail index from the top `k` order statistics.
///
/// Returns `(alpha_hat, standard_error)`; the estimator targets `α` with
/// `P(X > x) ~ C x^{-α}`.
pub fn hill(samples: &[f64], k: usize) -> Option<(f64, f64)> {
    let mut pos: Vec<f64> = samples.iter().copied().filter(|x| *x > 0.0 && x.is_finite()).collect();
    if k < 2 || pos.len() <= k {
        return None;
    }
    pos.sort_by(|a, b| b.total_cmp(a));
    let threshold = pos[k].ln();
    let gamma = pos[..k].iter().map(|x| x.ln() - threshold).sum::<f64>() / k as f64;
    if gamma <= 0.0 {
        return None;
    }
    let alpha = 1.0 / gamma;
    Some((alpha, alpha / (k as f64).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamKey;
    use rand::Rng;

    #[test]
    fn mean_estimate_basic() {
        let m = MeanEstimate::from_samples(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.mean, 2.5);
        assert!((m.se - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn quantiles() {
        let s = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&s, 0.5), 2.0);
        assert_eq!(quantile_sorted(&s, 0.125), 0.5);
        assert_eq!(weighted_quantile(&[3.0, 1.0, 2.0], &[1.0, 1.0, 2.0], 0.5), 2.0);
    }

    #[test]
    fn kolmogorov_reference_points() {
        // Classical critical values: P(K > 1.3581) = 0.05, P(K > 1.6276) = 0.01.
        assert!((kolmogorov_sf(1.3581) - 0.05).abs() < 1e-4);
        assert!((kolmogorov_sf(1.6276) - 0.01).abs() < 1e-4);
    }

    #[test]
    fn ks_identical_and_shifted() {
        let mut r = StreamKey::new(1).rng();
        let a: Vec<f64> = (0..5000).map(|_| r.random::<f64>()).collect();
        let b: Vec<f64> = (0..5000).map(|_| r.random::<f64>()).collect();
        let c: Vec<f64> = b.iter().map(|x| x + 0.1).collect();
        assert!(ks_two_sample(&a, &b).p_value > 0.001);
        assert!(ks_two_sample(&a, &c).p_value < 1e-10);
        assert_eq!(ks_two_sample(&a, &a).statistic, 0.0);
    }

    #[test]
    fn hill_recovers_pareto_index() {
        let alpha = 1.5;
        let mut r = StreamKey::new(9).rng();
        let xs: Vec<f64> = (0..100_000).map(|_| (1.0 - r.random::<f64>()).powf(-1.0 / alpha)).collect();
        let k = (xs.len() as f64).powf(2.0 / 3.0) as usize;
        let (a, _) = hill(&xs, k).unwrap();
        assert!((a - alpha).abs() < 0.03 * alpha.max(1.0), "{a}");
    }

    #[test]
    fn ess_of_equal_weights_is_n() {
        assert_eq!(effective_sample_size(&[2.0; 10]), 10.0);
    }
}
