//! Transfer operators `P^s`, `P_*^s` on `S_+` and their Perron data.
//!
//! For a grid point `x` the discretized operators are
//!
//! ```text
//! (P_*^s f)(x) = E_μ |Mᵀx|^s f(Mᵀ·x)        (f interpolated off the grid)
//! ((P^s)'ν)    = Σ_j ν_j E_μ |M y_j|^s δ_{M·y_j}   (mass split by the same stencil)
//! ```
//!
//! and the eigen-pair is obtained by power iteration on both.

mod alpha;
mod grid;
mod heval;

pub use alpha::{
    grid_refinement, m_of_s_direct, solve_alpha, AlphaOptions, AlphaRegime, AlphaSolution, LevelEstimate,
    RefinementStep,
};
pub use grid::{SphereGrid, Stencil, DEFAULT_RESOLUTION};
pub use heval::{h_alpha_eval, HEvaluator};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{NonnegMatrix, SpherePoint};
use crate::model::{check_condition_c, EnsembleKind, WeightEnsemble};
use crate::rng::{RngStream, StreamKey};

/// Default number of `μ`-draws standing in for a parametric ensemble.
pub const DEFAULT_KERNEL_MC: usize = 2048;
pub const DEFAULT_EIG_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 10_000;

#[derive(Debug, Clone)]
struct Entry {
    weight: f64,
    log_norm: f64,
    stencil: Stencil,
}

/// The `μ`-dependent part of the transfer operators on a fixed grid.
///
/// Building it once and re-using it across `s` keeps `m(s)` a deterministic,
/// smooth function of `s`, also for parametric ensembles where `μ` is replaced
/// by a fixed Monte-Carlo sample.
#[derive(Debug, Clone)]
pub struct TransferKernel {
    grid: SphereGrid,
    expected_n: f64,
    n_atoms: usize,
    /// `star[j]`: one entry per atom for `Mᵀ` acting on grid point `j`.
    star: Vec<Vec<Entry>>,
    /// `fwd[j]`: one entry per atom for `M` acting on grid point `j`.
    fwd: Vec<Vec<Entry>>,
    unique: bool,
}

/// Perron data at one exponent `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralSolution {
    pub s: f64,
    pub k_s: f64,
    pub m_s: f64,
    pub expected_n: f64,
    #[serde(skip)]
    pub grid: Option<SphereGrid>,
    #[serde(skip)]
    pub h_values: Vec<f64>,
    #[serde(skip)]
    pub nu_weights: Vec<f64>,
    pub eig_residual: f64,
    pub iterations: usize,
    pub k_adjoint: f64,
    pub adjoint_residual: f64,
    pub adjoint_iterations: usize,
    /// Relative sup distance between the power-iteration `H` and `H` rebuilt from `ν`.
    pub h_nu_discrepancy: f64,
    /// Condition C holds, so `H^s` and `ν^s` are unique.
    pub unique: bool,
    pub warnings: Vec<String>,
}

impl SpectralSolution {
    pub fn grid(&self) -> &SphereGrid {
        self.grid.as_ref().expect("solution carries its grid")
    }

    /// `H^s(x) = Σ_j ν_j ⟨x, y_j⟩^s`, exact quadrature.
    pub fn h(&self, x: &[f64]) -> f64 {
        h_alpha_eval(self, x)
    }

    /// A fast evaluator of the same function.
    pub fn evaluator(&self) -> HEvaluator {
        HEvaluator::new(self)
    }

    /// Grid point carrying the most `ν` mass.
    pub fn nu_mode(&self) -> &SpherePoint {
        let i = self.nu_weights.iter().enumerate().fold(0, |b, (i, w)| if *w > self.nu_weights[b] { i } else { b });
        &self.grid().points()[i]
    }
}

fn entries_for(grid: &SphereGrid, atoms: &[(f64, NonnegMatrix)], transpose: bool) -> Vec<Vec<Entry>> {
    grid.points()
        .par_iter()
        .map(|x| {
            atoms
                .iter()
                .map(|(w, m)| {
                    let y = if transpose { m.tmul_vec(x.coords()) } else { m.mul_vec(x.coords()) };
                    let n = crate::linalg::norm(&y);
                    if n > 0.0 {
                        let u: Vec<f64> = y.iter().map(|v| v / n).collect();
                        Entry { weight: *w, log_norm: n.ln(), stencil: grid.stencil(&u) }
                    } else {
                        Entry { weight: 0.0, log_norm: 0.0, stencil: Stencil { idx: [0; 4], w: [0.0; 4], len: 0 } }
                    }
                })
                .collect()
        })
        .collect()
}

/// Sparse rows `(column, coefficient)`.
struct Csr {
    start: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl Csr {
    fn from_rows(rows: Vec<Vec<(u32, f64)>>) -> Self {
        let mut start = Vec::with_capacity(rows.len() + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        start.push(0);
        for r in rows {
            for (c, v) in r {
                cols.push(c);
                vals.push(v);
            }
            start.push(cols.len());
        }
        Csr { start, cols, vals }
    }

    fn apply(&self, f: &[f64]) -> Vec<f64> {
        (0..self.start.len() - 1)
            .into_par_iter()
            .map(|j| (self.start[j]..self.start[j + 1]).map(|k| self.vals[k] * f[self.cols[k] as usize]).sum())
            .collect()
    }
}

#[inline]
fn pow_from_log(log_norm: f64, s: f64) -> f64 {
    (s * log_norm).exp()
}

/// The discrete law standing in for `μ`: the exact atoms of a mixture, or
/// `n_mc` draws with weight `1/n_mc` on the stream `key` for a parametric ensemble.
pub fn mu_support(ens: &WeightEnsemble, n_mc: usize, key: StreamKey) -> Result<Vec<(f64, NonnegMatrix)>> {
    match ens.kind() {
        EnsembleKind::Mixture(_) => Ok(ens.mu_atoms().expect("mixture")),
        EnsembleKind::Parametric(_) => {
            let n = n_mc.max(1);
            let mut rng = key.tag("kernel-mu").rng();
            (0..n).map(|_| ens.sample_mu(&mut rng).map(|m| (1.0 / n as f64, m.into_owned()))).collect()
        }
    }
}

impl TransferKernel {
    /// Builds the kernel. Mixtures use their exact `μ`; parametric ensembles
    /// use `n_mc` draws from `μ` on the stream `key`, each with weight `1/n_mc`.
    pub fn build(ens: &WeightEnsemble, grid: &SphereGrid, n_mc: usize, key: StreamKey) -> Result<Self> {
        if grid.dim() != ens.dim() {
            return Err(Error::Domain(format!("grid dimension {} differs from ensemble dimension {}", grid.dim(), ens.dim())));
        }
        let atoms = mu_support(ens, n_mc, key)?;
        let unique = check_condition_c(ens, 6)?.holds();
        Ok(TransferKernel {
            star: entries_for(grid, &atoms, true),
            fwd: entries_for(grid, &atoms, false),
            grid: grid.clone(),
            expected_n: ens.expected_n(),
            n_atoms: atoms.len(),
            unique,
        })
    }

    pub fn grid(&self) -> &SphereGrid {
        &self.grid
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    fn star_operator(&self, s: f64) -> Csr {
        Csr::from_rows(
            self.star
                .iter()
                .map(|row| {
                    row.iter()
                        .filter(|e| e.weight > 0.0)
                        .flat_map(|e| {
                            let c = e.weight * pow_from_log(e.log_norm, s);
                            e.stencil.iter().map(move |(i, w)| (i as u32, c * w))
                        })
                        .collect()
                })
                .collect(),
        )
    }

    /// The adjoint push-forward written as a gather: row `l` lists `(j, coef)`
    /// with `(νK)_l = Σ coef · ν_j`.
    fn adjoint_operator(&self, s: f64) -> Csr {
        let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); self.grid.len()];
        for (j, row) in self.fwd.iter().enumerate() {
            for e in row.iter().filter(|e| e.weight > 0.0) {
                let c = e.weight * pow_from_log(e.log_norm, s);
                for (l, w) in e.stencil.iter() {
                    rows[l].push((j as u32, c * w));
                }
            }
        }
        Csr::from_rows(rows)
    }

    /// `P_*^s f` on the grid.
    pub fn apply_pstar(&self, s: f64, f: &[f64]) -> Result<Vec<f64>> {
        if f.len() != self.grid.len() {
            return Err(Error::Domain("grid function has the wrong length".into()));
        }
        if f.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Domain("grid function must be finite and nonnegative".into()));
        }
        Ok(self.star_operator(s).apply(f))
    }

    /// Power iteration for `(k(s), H^s, ν^s)`.
    pub fn solve(&self, s: f64, tol: f64, max_iter: usize) -> Result<SpectralSolution> {
        self.solve_warm(s, tol, max_iter, None)
    }

    /// As [`TransferKernel::solve`], starting from a previous solution.
    pub fn solve_warm(&self, s: f64, tol: f64, max_iter: usize, warm: Option<&SpectralSolution>) -> Result<SpectralSolution> {
        if !(s >= 0.0) {
            return Err(Error::Domain(format!("exponent s = {s} must be nonnegative")));
        }
        let g = self.grid.len();
        let star = self.star_operator(s);
        let mut h: Vec<f64> = match warm {
            Some(w) if w.h_values.len() == g => w.h_values.clone(),
            _ => vec![1.0; g],
        };
        let mut k = 0.0;
        let mut residual = f64::INFINITY;
        let mut iterations = 0;
        while iterations < max_iter {
            iterations += 1;
            let ph = star.apply(&h);
            let sup = ph.iter().copied().fold(0.0, f64::max);
            if !(sup > 0.0) {
                return Err(Error::NonConvergence { iterations, residual: f64::NAN });
            }
            let hs = h.iter().copied().fold(0.0, f64::max);
            residual = ph.iter().zip(&h).map(|(a, b)| (a - sup / hs * b).abs()).fold(0.0, f64::max) / sup;
            k = sup / hs;
            h = ph.into_iter().map(|v| v / sup).collect();
            if residual <= tol {
                break;
            }
        }
        if residual > tol {
            return Err(Error::NonConvergence { iterations, residual });
        }

        let adj = self.adjoint_operator(s);
        let mut nu: Vec<f64> = match warm {
            Some(w) if w.nu_weights.len() == g => w.nu_weights.clone(),
            _ => {
                let z: f64 = self.grid.weights().iter().sum();
                self.grid.weights().iter().map(|w| w / z).collect()
            }
        };
        let mut k_adj = 0.0;
        let mut adj_res = f64::INFINITY;
        let mut adj_iter = 0;
        while adj_iter < max_iter {
            adj_iter += 1;
            let pn = adj.apply(&nu);
            let total: f64 = pn.iter().sum();
            if !(total > 0.0) {
                return Err(Error::NonConvergence { iterations: adj_iter, residual: f64::NAN });
            }
            adj_res = pn.iter().zip(&nu).map(|(a, b)| (a - total * b).abs()).sum::<f64>() / total;
            k_adj = total;
            nu = pn.into_iter().map(|v| v / total).collect();
            if adj_res <= tol {
                break;
            }
        }
        if adj_res > tol {
            return Err(Error::NonConvergence { iterations: adj_iter, residual: adj_res });
        }

        let mut sol = SpectralSolution {
            s,
            k_s: k,
            m_s: self.expected_n * k,
            expected_n: self.expected_n,
            grid: Some(self.grid.clone()),
            h_values: h,
            nu_weights: nu,
            eig_residual: residual,
            iterations,
            k_adjoint: k_adj,
            adjoint_residual: adj_res,
            adjoint_iterations: adj_iter,
            h_nu_discrepancy: 0.0,
            unique: self.unique,
            warnings: Vec::new(),
        };
        let rebuilt: Vec<f64> = self.grid.points().iter().map(|p| sol.h(p.coords())).collect();
        let rsup = rebuilt.iter().copied().fold(0.0, f64::max);
        sol.h_nu_discrepancy = rebuilt.iter().zip(&sol.h_values).map(|(a, b)| (a / rsup - b).abs()).fold(0.0, f64::max);
        if !self.unique {
            sol.warnings.push("condition C not established: H^s and nu^s need not be unique".into());
        }
        Ok(sol)
    }
}

/// `P_*^s f` for an ensemble on a grid (kernel built on the fly).
pub fn apply_pstar(
    s: f64,
    f: &[f64],
    ens: &WeightEnsemble,
    grid: &SphereGrid,
    n_mc: usize,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    let key = StreamKey::new(rng.random::<u64>());
    TransferKernel::build(ens, grid, n_mc, key)?.apply_pstar(s, f)
}

/// Perron data of `P_*^s` and `(P^s)'`.
pub fn solve_eigen(s: f64, ens: &WeightEnsemble, grid: &SphereGrid, tol: f64, max_iter: usize) -> Result<SpectralSolution> {
    TransferKernel::build(ens, grid, DEFAULT_KERNEL_MC, StreamKey::new(0))?.solve(s, tol, max_iter)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::linalg::dot;
    use crate::model::presets;
    use std::f64::consts::PI;

    fn planar(res: usize) -> SphereGrid {
        SphereGrid::build(2, res).unwrap()
    }

    #[test]
    fn pstar_hand_value_for_positive_matrix() {
        let g = planar(DEFAULT_RESOLUTION);
        let mut r = StreamKey::new(1).rng();
        let out = apply_pstar(1.0, &vec![1.0; g.len()], &presets::perron_deterministic(1.0), &g, 1, &mut r).unwrap();
        let i = g.nearest(SpherePoint::diagonal(2).coords());
        assert!((out[i] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn pstar_at_zero_exponent_preserves_constants() {
        let g = planar(65);
        let mut r = StreamKey::new(2).rng();
        let json = r#"{"dim":2,"kind":"parametric","generator":{"name":"iid-uniform-entries","lo":0.1,"hi":1.0,"n":2}}"#;
        let e = WeightEnsemble::from_json(json).unwrap();
        let out = apply_pstar(0.0, &vec![1.0; g.len()], &e, &g, 64, &mut r).unwrap();
        assert!(out.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn pstar_on_scalar_matrix() {
        let g = planar(33);
        let mut r = StreamKey::new(3).rng();
        let out = apply_pstar(0.5, &vec![1.0; g.len()], &presets::stable_diagonal(), &g, 1, &mut r).unwrap();
        assert!(out.iter().all(|v| (v - 0.25).abs() < 1e-15));
        assert!(apply_pstar(0.5, &vec![-1.0; g.len()], &presets::stable_diagonal(), &g, 1, &mut r).is_err());
    }

    #[test]
    fn perron_eigenpair() {
        let g = planar(DEFAULT_RESOLUTION);
        let sol = solve_eigen(1.0, &presets::perron_deterministic(1.0), &g, 1e-10, 10_000).unwrap();
        assert!((sol.k_s - 3.0).abs() < 1e-8, "{}", sol.k_s);
        assert!(sol.unique);
        let ua = SpherePoint::diagonal(2);
        assert!(sol.nu_mode().distance(&ua) < 0.02);
        let mass_near: f64 = g.points().iter().zip(&sol.nu_weights).filter(|(p, _)| p.distance(&ua) < 0.02).map(|(_, w)| w).sum();
        assert!(mass_near > 1.0 - 1e-8);
        let h0 = sol.h(ua.coords());
        for i in 0..64 {
            let u = SpherePoint::from_angle(i as f64 / 63.0 * PI / 2.0);
            let want = dot(u.coords(), ua.coords()) / dot(ua.coords(), ua.coords());
            assert!((sol.h(u.coords()) / h0 - want).abs() < 1e-8);
        }
        // the power-iteration H is the same function up to scale
        for (p, hv) in g.points().iter().zip(&sol.h_values) {
            assert!((hv - dot(p.coords(), ua.coords())).abs() < 1e-4);
        }
    }

    #[test]
    fn diagonal_eigenpair() {
        let g = planar(65);
        let sol = solve_eigen(0.5, &presets::stable_diagonal(), &g, 1e-10, 100).unwrap();
        assert!((sol.k_s - 0.25).abs() < 1e-15);
        assert!((sol.m_s - 1.0).abs() < 1e-14);
        assert!(sol.h_values.iter().all(|v| (v - 1.0).abs() < 1e-15));
        assert!(!sol.unique && !sol.warnings.is_empty());
    }

    #[test]
    fn zero_exponent_gives_expected_n() {
        let g = planar(65);
        for e in [presets::stable_diagonal(), presets::perron_deterministic(0.5), presets::critical_scalar()] {
            let sol = solve_eigen(0.0, &e, &g, 1e-12, 100).unwrap();
            assert!((sol.k_s - 1.0).abs() < 1e-14);
            assert!((sol.m_s - e.expected_n()).abs() < 1e-13);
            assert!(sol.h_values.iter().all(|v| (v - 1.0).abs() < 1e-14));
            assert!((sol.h(&[0.3, 0.9]) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn one_dimensional_mode() {
        let g = SphereGrid::build(1, 2).unwrap();
        let e = presets::scalar(1, 0.25, 2, None);
        let sol = solve_eigen(0.5, &e, &g, 1e-12, 10).unwrap();
        assert!((sol.m_s - 1.0).abs() < 1e-14);
        assert!((sol.h(&[4.0]) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn nu_weights_form_a_probability_vector() {
        let g = planar(129);
        let sol = solve_eigen(0.7, &random_mixture(), &g, 1e-10, 10_000).unwrap();
        assert!((sol.nu_weights.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        assert!(sol.h_values.iter().all(|v| *v > 0.0));
        assert_eq!(sol.m_s, sol.expected_n * sol.k_s);
        assert!((sol.k_s - sol.k_adjoint).abs() < 1e-3 * sol.k_s);
        assert!(sol.h_nu_discrepancy < 1e-2);
    }

    pub(crate) fn random_mixture() -> WeightEnsemble {
        WeightEnsemble::from_json(
            r#"{"dim":2,"kind":"mixture","atoms":[
            {"prob":0.5,"Q":[0,0],"Ts":[[[0.6,0.2],[0.1,0.3]]]},
            {"prob":0.5,"Q":[0,0],"Ts":[[[0.2,0.3],[0.4,0.1]],[[0.5,0.05],[0.3,0.7]]]}]}"#,
        )
        .unwrap()
    }

    #[test]
    fn one_step_branching_identity() {
        let e = random_mixture();
        let g = planar(DEFAULT_RESOLUTION);
        let sol = solve_eigen(0.6, &e, &g, 1e-12, 10_000).unwrap();
        let atoms = e.atoms().unwrap();
        let mut r = StreamKey::new(8).rng();
        for _ in 0..50 {
            let x = [r.random::<f64>(), r.random::<f64>()];
            let lhs: f64 = atoms.iter().map(|a| a.prob * a.ts.iter().map(|t| sol.h(&t.tmul_vec(&x))).sum::<f64>()).sum::<f64>()
                / sol.m_s;
            assert!((lhs / sol.h(&x) - 1.0).abs() < 5e-3);
        }
    }

    #[test]
    fn power_iteration_h_matches_nu_route() {
        let sol = solve_eigen(0.5, &random_mixture(), &planar(DEFAULT_RESOLUTION), 1e-12, 10_000).unwrap();
        assert!(sol.h_nu_discrepancy < 1e-2, "{}", sol.h_nu_discrepancy);
    }
}
