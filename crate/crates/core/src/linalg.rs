//! Small dense nonnegative matrices and vectors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Euclidean norm.
#[inline]
pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[inline]
pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// A `d × d` matrix with nonnegative entries, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct NonnegMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl TryFrom<Vec<Vec<f64>>> for NonnegMatrix {
    type Error = Error;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        NonnegMatrix::from_rows(&rows)
    }
}

impl From<NonnegMatrix> for Vec<Vec<f64>> {
    fn from(m: NonnegMatrix) -> Self {
        m.rows()
    }
}

impl NonnegMatrix {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidModel("matrix dimension must be at least 1".into()));
        }
        if data.len() != dim * dim {
            return Err(Error::InvalidModel(format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidModel(format!("matrix entry {v} is not a finite nonnegative number")));
        }
        Ok(NonnegMatrix { dim, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidModel("matrix must be square".into()));
        }
        NonnegMatrix::new(dim, rows.concat())
    }

    pub fn identity(dim: usize) -> Self {
        NonnegMatrix::diag(&vec![1.0; dim])
    }

    pub fn diag(d: &[f64]) -> Self {
        let dim = d.len();
        let mut data = vec![0.0; dim * dim];
        for (i, v) in d.iter().enumerate() {
            data[i * dim + i] = *v;
        }
        NonnegMatrix { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.dim).map(|r| r.to_vec()).collect()
    }

    /// `c · M` for `c ≥ 0`.
    pub fn scale(&self, c: f64) -> Self {
        debug_assert!(c >= 0.0);
        NonnegMatrix { dim: self.dim, data: self.data.iter().map(|v| v * c).collect() }
    }

    pub fn transpose(&self) -> Self {
        let d = self.dim;
        let mut data = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                data[j * d + i] = self.data[i * d + j];
            }
        }
        NonnegMatrix { dim: d, data }
    }

    /// Matrix product `self · other`.
    pub fn mul(&self, other: &NonnegMatrix) -> Self {
        let d = self.dim;
        assert_eq!(d, other.dim, "dimension mismatch");
        let mut data = vec![0.0; d * d];
        for i in 0..d {
            for k in 0..d {
                let a = self.data[i * d + k];
                if a == 0.0 {
                    continue;
                }
                for j in 0..d {
                    data[i * d + j] += a * other.data[k * d + j];
                }
            }
        }
        NonnegMatrix { dim: d, data }
    }

    /// `M x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        self.data.chunks(self.dim).map(|row| dot(row, x)).collect()
    }

    /// `Mᵀ x`.
    pub fn tmul_vec(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut out = vec![0.0; d];
        for i in 0..d {
            let xi = x[i];
            if xi == 0.0 {
                continue;
            }
            for j in 0..d {
                out[j] += self.data[i * d + j] * xi;
            }
        }
        out
    }

    /// No zero row and no zero column.
    pub fn is_allowable(&self) -> bool {
        let d = self.dim;
        (0..d).all(|i| (0..d).any(|j| self.get(i, j) > 0.0)) && (0..d).all(|j| (0..d).any(|i| self.get(i, j) > 0.0))
    }

    pub fn is_positive(&self) -> bool {
        self.data.iter().all(|v| *v > 0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|v| *v == 0.0)
    }

    /// Operator norm induced by the Euclidean norm.
    pub fn op_norm(&self) -> f64 {
        let d = self.dim;
        match d {
            1 => self.data[0],
            2 => {
                let [a, b, c, e] = [self.data[0], self.data[1], self.data[2], self.data[3]];
                // Largest eigenvalue of MᵀM = [[p, q], [q, r]].
                let p = a * a + c * c;
                let r = b * b + e * e;
                let q = a * b + c * e;
                let half_tr = 0.5 * (p + r);
                let disc = (0.25 * (p - r) * (p - r) + q * q).sqrt();
                (half_tr + disc).max(0.0).sqrt()
            }
            _ => {
                let mtm = self.transpose().mul(self);
                let eig = jacobi_eigenvalues(mtm.data.clone(), d);
                eig.into_iter().fold(0.0_f64, f64::max).max(0.0).sqrt()
            }
        }
    }

    /// Largest entry; a cheap scale for normalizing products.
    pub fn max_entry(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    /// Perron root and right Perron vector (unit norm) by power iteration.
    ///
    /// Intended for positive matrices, where convergence is guaranteed.
    pub fn perron(&self) -> (f64, Vec<f64>) {
        let d = self.dim;
        let mut v = vec![1.0 / (d as f64).sqrt(); d];
        let mut lambda = 0.0;
        for _ in 0..10_000 {
            let w = self.mul_vec(&v);
            let n = norm(&w);
            if n == 0.0 {
                return (0.0, v);
            }
            let w: Vec<f64> = w.iter().map(|x| x / n).collect();
            let diff = w.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            v = w;
            lambda = n;
            if diff < 1e-15 {
                break;
            }
        }
        // Rayleigh-type refinement: λ = (Mv)_i / v_i averaged over support.
        let mv = self.mul_vec(&v);
        let num: f64 = dot(&mv, &v);
        if num > 0.0 {
            lambda = num;
        }
        (lambda, v)
    }
}

/// Eigenvalues of a symmetric `d × d` matrix by cyclic Jacobi rotations.
pub fn jacobi_eigenvalues(mut a: Vec<f64>, d: usize) -> Vec<f64> {
    for _sweep in 0..100 {
        let off: f64 = (0..d).flat_map(|i| (0..d).filter(move |j| *j != i).map(move |j| (i, j))).map(|(i, j)| a[i * d + j].powi(2)).sum();
        let total: f64 = a.iter().map(|v| v * v).sum();
        if off <= 1e-30 * total.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..d {
            for q in p + 1..d {
                let apq = a[p * d + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = a[p * d + p];
                let aqq = a[q * d + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..d {
                    let akp = a[k * d + p];
                    let akq = a[k * d + q];
                    a[k * d + p] = c * akp - s * akq;
                    a[k * d + q] = s * akp + c * akq;
                }
                for k in 0..d {
                    let apk = a[p * d + k];
                    let aqk = a[q * d + k];
                    a[p * d + k] = c * apk - s * aqk;
                    a[q * d + k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..d).map(|i| a[i * d + i]).collect()
}

/// A vector with nonnegative entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct NonnegVector(Vec<f64>);

impl TryFrom<Vec<f64>> for NonnegVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        NonnegVector::new(v)
    }
}

impl From<NonnegVector> for Vec<f64> {
    fn from(v: NonnegVector) -> Self {
        v.0
    }
}

impl NonnegVector {
    pub fn new(v: Vec<f64>) -> Result<Self> {
        if let Some(x) = v.iter().find(|x| !x.is_finite() || **x < 0.0) {
            return Err(Error::InvalidModel(format!("vector entry {x} is not a finite nonnegative number")));
        }
        Ok(NonnegVector(v))
    }

    pub fn zeros(dim: usize) -> Self {
        NonnegVector(vec![0.0; dim])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|v| *v == 0.0)
    }
}

/// A point of the unit sphere in the nonnegative orthant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpherePoint(Vec<f64>);

impl SpherePoint {
    /// Normalizes a nonzero nonnegative vector.
    pub fn from_vec(v: &[f64]) -> Result<Self> {
        if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::Domain("sphere point needs nonnegative finite coordinates".into()));
        }
        let n = norm(v);
        if n == 0.0 {
            return Err(Error::Domain("cannot normalize the zero vector".into()));
        }
        Ok(SpherePoint(v.iter().map(|x| x / n).collect()))
    }

    /// The point at angle `theta ∈ [0, π/2]` in the plane.
    pub fn from_angle(theta: f64) -> Self {
        SpherePoint(vec![theta.cos().max(0.0), theta.sin().max(0.0)])
    }

    /// `𝟙/√d`.
    pub fn diagonal(dim: usize) -> Self {
        SpherePoint(vec![1.0 / (dim as f64).sqrt(); dim])
    }

    pub fn basis(dim: usize, i: usize) -> Self {
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        SpherePoint(v)
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Angle in `[0, π/2]` of a planar point.
    pub fn angle(&self) -> f64 {
        self.0[1].atan2(self.0[0])
    }

    /// Great-circle distance.
    pub fn distance(&self, other: &SpherePoint) -> f64 {
        let chord = self.0.iter().zip(&other.0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        2.0 * (0.5 * chord).min(1.0).asin()
    }

    pub fn min_coord(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// `(|Mᵀx|, Mᵀx / |Mᵀx|)`; the action of `Mᵀ` on the projective orthant.
pub fn transpose_action(m: &NonnegMatrix, x: &[f64]) -> (f64, Vec<f64>) {
    let mut y = m.tmul_vec(x);
    let n = norm(&y);
    if n > 0.0 {
        for v in &mut y {
            *v /= n;
        }
    }
    (n, y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(rows: &[&[f64]]) -> NonnegMatrix {
        NonnegMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn rejects_negative_and_ragged() {
        assert!(NonnegMatrix::from_rows(&[vec![1.0, -1.0], vec![0.0, 1.0]]).is_err());
        assert!(NonnegMatrix::from_rows(&[vec![1.0, 1.0], vec![0.0]]).is_err());
        assert!(NonnegVector::new(vec![0.0, -0.5]).is_err());
    }

    #[test]
    fn allowable_and_positive() {
        assert!(m(&[&[0.0, 1.0], &[1.0, 0.0]]).is_allowable());
        assert!(!m(&[&[0.0, 1.0], &[1.0, 0.0]]).is_positive());
        assert!(!m(&[&[1.0, 1.0], &[0.0, 0.0]]).is_allowable());
        assert!(!m(&[&[1.0, 0.0], &[1.0, 0.0]]).is_allowable());
        assert!(m(&[&[2.0, 1.0], &[1.0, 2.0]]).is_positive());
    }

    #[test]
    fn op_norm_known_values() {
        assert!((m(&[&[2.0, 1.0], &[1.0, 2.0]]).op_norm() - 3.0).abs() < 1e-14);
        assert!((NonnegMatrix::diag(&[0.5, 3.0, 1.0]).op_norm() - 3.0).abs() < 1e-12);
        assert!((m(&[&[1.0, 1.0], &[1.0, 1.0]]).op_norm() - 2.0).abs() < 1e-14);
        // rank one u vᵀ has norm |u||v|
        let r = m(&[&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0], &[0.0, 0.0, 0.0]]);
        assert!((r.op_norm() - 5f64.sqrt() * 14f64.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn perron_roots() {
        let (l, v) = m(&[&[2.0, 1.0], &[1.0, 2.0]]).perron();
        assert!((l - 3.0).abs() < 1e-12);
        assert!((v[0] - v[1]).abs() < 1e-12);
        let (l, _) = m(&[&[3.0, 1.0], &[1.0, 1.0]]).perron();
        assert!((l - (2.0 + 2f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn transpose_action_normalizes() {
        let a = m(&[&[2.0, 1.0], &[1.0, 2.0]]);
        let u = SpherePoint::diagonal(2);
        let (n, y) = transpose_action(&a, u.coords());
        assert!((n - 3.0).abs() < 1e-14);
        assert!((y[0] - u.coords()[0]).abs() < 1e-15);
    }

    fn mat3() -> impl Strategy<Value = NonnegMatrix> {
        proptest::collection::vec(0.0f64..5.0, 9).prop_map(|v| NonnegMatrix::new(3, v).unwrap())
    }

    proptest! {
        #[test]
        fn op_norm_dominates_image_length(a in mat3(), x in proptest::collection::vec(0.0f64..1.0, 3)) {
            prop_assume!(norm(&x) > 1e-6);
            let ax = a.mul_vec(&x);
            prop_assert!(norm(&ax) <= a.op_norm() * norm(&x) * (1.0 + 1e-10) + 1e-12);
        }

        #[test]
        fn op_norm_is_submultiplicative(a in mat3(), b in mat3()) {
            prop_assert!(a.mul(&b).op_norm() <= a.op_norm() * b.op_norm() * (1.0 + 1e-10) + 1e-12);
        }

        #[test]
        fn op_norm_2d_matches_jacobi(v in proptest::collection::vec(0.0f64..4.0, 4)) {
            let a = NonnegMatrix::new(2, v).unwrap();
            let mtm = a.transpose().mul(&a);
            let j = jacobi_eigenvalues(mtm.entries().to_vec(), 2).into_iter().fold(0.0, f64::max).sqrt();
            prop_assert!((a.op_norm() - j).abs() <= 1e-9 * (1.0 + j));
        }
    }
}
