use crate::linalg::{dot, norm};

use super::SpectralSolution;

/// `H^s(x) = Σ_j ν_j ⟨x, y_j⟩^s`; zero at `x = 0`.
///
/// The quadrature is `s`-homogeneous by construction.
pub fn h_alpha_eval(sol: &SpectralSolution, x: &[f64]) -> f64 {
    if x.iter().all(|v| *v == 0.0) {
        return 0.0;
    }
    sol.grid()
        .points()
        .iter()
        .zip(&sol.nu_weights)
        .filter(|(_, w)| **w > 0.0)
        .map(|(y, w)| w * dot(x, y.coords()).max(0.0).powf(sol.s))
        .sum()
}

const PLANAR_TABLE: usize = 1 << 14;

/// Fast evaluation of `H^s` for the inner loops of tree simulations.
///
/// In the plane the quadrature is tabulated on a fine angular grid and
/// extended homogeneously; elsewhere it is summed directly.
#[derive(Debug, Clone)]
pub enum HEvaluator {
    Planar { s: f64, step: f64, table: Vec<f64> },
    Quadrature { s: f64, points: Vec<Vec<f64>>, weights: Vec<f64> },
}

impl HEvaluator {
    pub fn new(sol: &SpectralSolution) -> Self {
        let support: Vec<(Vec<f64>, f64)> = sol
            .grid()
            .points()
            .iter()
            .zip(&sol.nu_weights)
            .filter(|(_, w)| **w > 0.0)
            .map(|(p, w)| (p.coords().to_vec(), *w))
            .collect();
        if sol.grid().dim() == 2 {
            let step = std::f64::consts::FRAC_PI_2 / PLANAR_TABLE as f64;
            let table = (0..=PLANAR_TABLE)
                .map(|i| {
                    let t = i as f64 * step;
                    let u = [t.cos().max(0.0), t.sin().max(0.0)];
                    support.iter().map(|(y, w)| w * dot(&u, y).max(0.0).powf(sol.s)).sum()
                })
                .collect();
            HEvaluator::Planar { s: sol.s, step, table }
        } else {
            let (points, weights) = support.into_iter().unzip();
            HEvaluator::Quadrature { s: sol.s, points, weights }
        }
    }

    pub fn s(&self) -> f64 {
        match self {
            HEvaluator::Planar { s, .. } | HEvaluator::Quadrature { s, .. } => *s,
        }
    }

    /// `H^s(x)` for any `x` in the orthant.
    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            HEvaluator::Planar { s, step, table } => {
                let r = norm(x);
                if r == 0.0 {
                    return 0.0;
                }
                let pos = x[1].max(0.0).atan2(x[0].max(0.0)) / step;
                let i = (pos.floor() as usize).min(table.len() - 2);
                let f = pos - i as f64;
                let h = table[i] * (1.0 - f) + table[i + 1] * f;
                if *s == 1.0 {
                    r * h
                } else {
                    r.powf(*s) * h
                }
            }
            HEvaluator::Quadrature { s, points, weights } => {
                if x.iter().all(|v| *v == 0.0) {
                    return 0.0;
                }
                points.iter().zip(weights).map(|(y, w)| w * dot(x, y).max(0.0).powf(*s)).sum()
            }
        }
    }

    /// `H^s` at `e^{log_scale} · x`.
    #[inline]
    pub fn eval_scaled(&self, log_scale: f64, x: &[f64]) -> f64 {
        (self.s() * log_scale).exp() * self.eval(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::presets;
    use crate::rng::StreamKey;
    use crate::spectral::{solve_eigen, SphereGrid, DEFAULT_RESOLUTION};
    use rand::Rng;

    fn random_solution(s: f64) -> SpectralSolution {
        let e = crate::spectral::tests::random_mixture();
        solve_eigen(s, &e, &SphereGrid::build(2, DEFAULT_RESOLUTION).unwrap(), 1e-12, 10_000).unwrap()
    }

    #[test]
    fn zero_vector_gives_zero() {
        let sol = random_solution(0.5);
        assert_eq!(sol.h(&[0.0, 0.0]), 0.0);
        assert_eq!(sol.evaluator().eval(&[0.0, 0.0]), 0.0);
    }

    #[test]
    fn homogeneity_of_the_quadrature() {
        let sol = random_solution(0.6);
        let mut r = StreamKey::new(1).rng();
        for _ in 0..100 {
            let u = [r.random::<f64>(), r.random::<f64>()];
            let a = sol.h(&[2.0 * u[0], 2.0 * u[1]]);
            assert!((a - 2f64.powf(0.6) * sol.h(&u)).abs() <= 1e-13 * a);
        }
    }

    #[test]
    fn table_matches_quadrature() {
        let sol = random_solution(0.5);
        let ev = sol.evaluator();
        let mut r = StreamKey::new(2).rng();
        for _ in 0..1000 {
            let x = [3.0 * r.random::<f64>(), r.random::<f64>()];
            assert!((ev.eval(&x) / sol.h(&x) - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn three_dimensional_evaluator_is_the_quadrature() {
        let e = presets::scalar(3, 0.3, 3, None);
        let sol = solve_eigen(0.5, &e, &SphereGrid::build(3, 100).unwrap(), 1e-12, 10).unwrap();
        let x = [0.2, 0.5, 0.1];
        assert!((sol.evaluator().eval(&x) - sol.h(&x)).abs() < 1e-15);
    }
}
