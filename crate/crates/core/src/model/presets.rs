//! Ensembles with closed-form spectral data, used as oracles and examples.

use crate::linalg::{NonnegMatrix, NonnegVector};

use super::{WeightAtom, WeightEnsemble};

fn single_atom(dim: usize, q: Vec<f64>, ts: Vec<NonnegMatrix>) -> WeightEnsemble {
    let atom = WeightAtom { prob: 1.0, q: NonnegVector::new(q).expect("nonnegative Q"), ts };
    WeightEnsemble::mixture(dim, vec![atom]).expect("valid preset")
}

/// `N = 4`, `T_i = I/16` in the plane: `m(s) = 4^{1−2s}`, `α = 1/2`.
///
/// Every strictly 1/2-stable law on the orthant is a fixed point.
pub fn stable_diagonal() -> WeightEnsemble {
    scalar(2, 1.0 / 16.0, 4, None)
}

/// `N` copies of `c·I` in dimension `d`, with optional fixed `Q`.
pub fn scalar(dim: usize, c: f64, n: usize, q: Option<Vec<f64>>) -> WeightEnsemble {
    let t = NonnegMatrix::diag(&vec![c; dim]);
    single_atom(dim, q.unwrap_or_else(|| vec![0.0; dim]), vec![t; n])
}

/// `A = [[2,1],[1,2]]`, `N = 1`, scaled by `c`.
pub fn perron_deterministic(c: f64) -> WeightEnsemble {
    let a = NonnegMatrix::from_rows(&[vec![2.0 * c, c], vec![c, 2.0 * c]]).expect("valid");
    single_atom(2, vec![0.0; 2], vec![a])
}

/// A two-atom planar ensemble with an exactly critical `α = 1/2`.
///
/// Atom A (prob 1/2): one weight `a²·I`. Atom B (prob 1/2): two weights `x²·I`
/// with `x = 1 − a/2`, so that `m(1/2) = a/2 + x = 1`. The value of `a` solves
/// `(a/2)·ln a + x·ln x = 0`, which makes `m'(1/2) = 0`.
pub fn critical_scalar() -> WeightEnsemble {
    let a = critical_scalar_root();
    let x = 1.0 - a / 2.0;
    let ta = NonnegMatrix::diag(&[a * a, a * a]);
    let tb = NonnegMatrix::diag(&[x * x, x * x]);
    let atoms = vec![
        WeightAtom { prob: 0.5, q: NonnegVector::zeros(2), ts: vec![ta] },
        WeightAtom { prob: 0.5, q: NonnegVector::zeros(2), ts: vec![tb.clone(), tb] },
    ];
    WeightEnsemble::mixture(2, atoms).expect("valid preset")
}

/// Root in `(1, 2)` of `g(a) = (a/2)·ln a + (1 − a/2)·ln(1 − a/2)`.
pub fn critical_scalar_root() -> f64 {
    let g = |a: f64| 0.5 * a * a.ln() + (1.0 - 0.5 * a) * (1.0 - 0.5 * a).ln();
    let (mut lo, mut hi) = (1.01, 1.99);
    debug_assert!(g(lo) < 0.0 && g(hi) > 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn critical_root_balances_derivative() {
        let a = critical_scalar_root();
        let x = 1.0 - a / 2.0;
        // m(s) = ½·a^{2s} + x^{2s}; check m(½) = 1 and m'(½) = 0 directly
        let m = |s: f64| 0.5 * a.powf(2.0 * s) + x.powf(2.0 * s);
        assert!((m(0.5) - 1.0).abs() < 1e-14);
        let h = 1e-5;
        assert!(((m(0.5 + h) - m(0.5 - h)) / (2.0 * h)).abs() < 1e-8);
        assert!(a > 1.5 && a < 1.6);
    }

    #[test]
    fn presets_have_expected_n() {
        assert_eq!(stable_diagonal().expected_n(), 4.0);
        assert_eq!(critical_scalar().expected_n(), 1.5);
        assert_eq!(perron_deterministic(1.0).expected_n(), 1.0);
    }
}
