//! Weighted branching: the tree of branch weights `L(v)`, generation and
//! stopping-line frontiers, the intrinsic martingale and the series `W*`.
//!
//! Every node draws its weights from a stream keyed by its Ulam–Harris path,
//! so a tree is a pure function of the root key whatever the traversal order.

use rand::seq::index::sample as sample_indices;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{norm, NonnegMatrix, NonnegVector, SpherePoint};
use crate::model::WeightEnsemble;
use crate::rng::{par_map_indexed, StreamKey};
use crate::spectral::{HEvaluator, SpectralSolution};
use crate::stats::MeanEstimate;
use crate::walk::{overshoot_expectation, overshoot_samples, shifted_expectation, OvershootSampler, ShiftedMeasure, DEFAULT_MAX_STEPS};

/// A matrix stored as `exp(log_norm) · unit` with `‖unit‖ = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledMatrix {
    pub unit: NonnegMatrix,
    pub log_norm: f64,
}

impl ScaledMatrix {
    pub fn identity(dim: usize) -> Self {
        ScaledMatrix { unit: NonnegMatrix::identity(dim), log_norm: 0.0 }
    }

    pub fn from_matrix(m: &NonnegMatrix) -> Self {
        let n = m.op_norm();
        if n == 0.0 {
            ScaledMatrix { unit: m.clone(), log_norm: f64::NEG_INFINITY }
        } else {
            ScaledMatrix { unit: m.scale(1.0 / n), log_norm: n.ln() }
        }
    }

    /// `self · t`, renormalized.
    pub fn mul(&self, t: &NonnegMatrix) -> Self {
        let p = ScaledMatrix::from_matrix(&self.unit.mul(t));
        ScaledMatrix { log_norm: self.log_norm + p.log_norm, unit: p.unit }
    }

    pub fn norm(&self) -> f64 {
        self.log_norm.exp()
    }

    pub fn to_matrix(&self) -> NonnegMatrix {
        self.unit.scale(self.norm())
    }

    /// `(log|Lᵀu|, Lᵀu / |Lᵀu|)`.
    pub fn transpose_apply(&self, u: &[f64]) -> (f64, Vec<f64>) {
        let mut y = self.unit.tmul_vec(u);
        let n = norm(&y);
        if n > 0.0 {
            y.iter_mut().for_each(|v| *v /= n);
        }
        (self.log_norm + n.ln(), y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    /// Ulam–Harris address.
    pub path: Vec<u32>,
    #[serde(skip, default = "dummy_key")]
    pub key: StreamKey,
    pub l: ScaledMatrix,
    pub depth: usize,
    /// Log of the inverse inclusion probability under subsampling; zero otherwise.
    pub log_mass: f64,
    /// Largest `S^u` over strict ancestors (stopping-line mode).
    pub ancestor_max_s: f64,
}

fn dummy_key() -> StreamKey {
    StreamKey::new(0)
}

impl TreeNode {
    fn root(dim: usize, key: StreamKey) -> Self {
        TreeNode {
            path: Vec::new(),
            key,
            l: ScaledMatrix::identity(dim),
            depth: 0,
            log_mass: 0.0,
            ancestor_max_s: f64::NEG_INFINITY,
        }
    }

    /// `S^u(v) = −log|L(v)ᵀu|` and `U^u(v) = L(v)ᵀ·u`.
    pub fn position(&self, u: &[f64]) -> (f64, Vec<f64>) {
        let (log_len, dir) = self.l.transpose_apply(u);
        (-log_len, dir)
    }

    /// `H^s(L(v)ᵀu)`, times the subsampling mass.
    pub fn h_weight(&self, u: &[f64], h: &HEvaluator) -> f64 {
        let x = self.l.unit.tmul_vec(u);
        h.eval_scaled(self.l.log_norm + self.log_mass / h.s().max(f64::MIN_POSITIVE), &x)
    }

    /// Children of this node and `L(v)Q(v)`.
    fn expand(&self, ens: &WeightEnsemble, caps: &Caps) -> Result<(Vec<TreeNode>, Vec<f64>)> {
        let mut rng = self.key.rng();
        let r = ens.sample_weights(&mut rng)?;
        let mass = (self.log_mass + self.l.log_norm).exp();
        let lq: Vec<f64> = if r.q.is_zero() { vec![0.0; ens.dim()] } else { self.l.unit.mul_vec(r.q.as_slice()).iter().map(|v| v * mass).collect() };
        let n = r.ts.len();
        let (keep, extra): (Vec<usize>, f64) = match caps.subsample {
            Some(k) if n > k => {
                let mut idx = sample_indices(&mut rng, n, k).into_vec();
                idx.sort_unstable();
                (idx, (n as f64 / k as f64).ln())
            }
            _ => ((0..n).collect(), 0.0),
        };
        let children = keep
            .into_iter()
            .map(|i| {
                let mut path = self.path.clone();
                path.push(i as u32);
                TreeNode {
                    path,
                    key: self.key.child(i),
                    l: self.l.mul(&r.ts[i]),
                    depth: self.depth + 1,
                    log_mass: self.log_mass + extra,
                    ancestor_max_s: self.ancestor_max_s,
                }
            })
            .collect();
        Ok((children, lq))
    }
}

/// Guards against runaway trees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Caps {
    pub max_nodes: usize,
    pub max_depth: usize,
    /// Keep at most this many children per node, reweighted by the inverse
    /// inclusion probability. Changes variances, not means.
    pub subsample: Option<usize>,
}

impl Default for Caps {
    fn default() -> Self {
        Caps { max_nodes: 2_000_000, max_depth: 200, subsample: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrontierMode {
    Generation(usize),
    StoppingLine { u: SpherePoint, t: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frontier {
    pub mode: FrontierMode,
    pub nodes: Vec<TreeNode>,
    /// `Σ_{|v|<n} L(v)Q(v)` over the expanded generations.
    pub wstar_partial: Vec<f64>,
    /// Nodes created so far, the root included.
    pub total_nodes: usize,
    pub subsampled: bool,
}

impl Frontier {
    /// Generation 0: the root with `L = I`.
    pub fn root(dim: usize, key: StreamKey) -> Self {
        Frontier {
            mode: FrontierMode::Generation(0),
            nodes: vec![TreeNode::root(dim, key)],
            wstar_partial: vec![0.0; dim],
            total_nodes: 1,
            subsampled: false,
        }
    }

    /// JSON lines `{path, depth, log_norm, unit}` for small frontiers.
    pub fn to_jsonl(&self) -> Result<String> {
        if self.nodes.len() > 10_000 {
            return Err(Error::CapExceeded { what: "tree dump", cap: 10_000, reached: self.nodes.len() });
        }
        let mut out = String::new();
        for n in &self.nodes {
            let line = serde_json::json!({"path": n.path, "depth": n.depth, "log_norm": n.l.log_norm, "unit": n.l.unit});
            out.push_str(&line.to_string());
            out.push('\n');
        }
        Ok(out)
    }
}

fn expand_all(nodes: &[TreeNode], ens: &WeightEnsemble, caps: &Caps) -> Result<(Vec<TreeNode>, Vec<f64>)> {
    let parts: Vec<Result<(Vec<TreeNode>, Vec<f64>)>> = if nodes.len() >= 256 {
        nodes.par_iter().map(|n| n.expand(ens, caps)).collect()
    } else {
        nodes.iter().map(|n| n.expand(ens, caps)).collect()
    };
    let mut children = Vec::new();
    let mut lq = vec![0.0; ens.dim()];
    for p in parts {
        let (c, q) = p?;
        children.extend(c);
        lq.iter_mut().zip(q).for_each(|(a, b)| *a += b);
    }
    Ok((children, lq))
}

/// Replaces every node of generation `n` by its children.
pub fn expand_generation(frontier: &Frontier, ens: &WeightEnsemble, caps: &Caps) -> Result<Frontier> {
    let FrontierMode::Generation(n) = frontier.mode else {
        return Err(Error::Precondition("expand_generation needs a generation frontier".into()));
    };
    if n + 1 > caps.max_depth {
        return Err(Error::CapExceeded { what: "depth", cap: caps.max_depth, reached: n + 1 });
    }
    let (nodes, lq) = expand_all(&frontier.nodes, ens, caps)?;
    let total = frontier.total_nodes + nodes.len();
    if total > caps.max_nodes {
        return Err(Error::CapExceeded { what: "population", cap: caps.max_nodes, reached: total });
    }
    let wstar_partial = frontier.wstar_partial.iter().zip(lq).map(|(a, b)| a + b).collect();
    Ok(Frontier {
        mode: FrontierMode::Generation(n + 1),
        nodes,
        wstar_partial,
        total_nodes: total,
        subsampled: frontier.subsampled || caps.subsample.is_some(),
    })
}

/// Generation `n` of the tree rooted at `key`.
pub fn generation(n: usize, ens: &WeightEnsemble, caps: &Caps, key: StreamKey) -> Result<Frontier> {
    let mut f = Frontier::root(ens.dim(), key);
    for _ in 0..n {
        f = expand_generation(&f, ens, caps)?;
    }
    Ok(f)
}

/// `R_n = max_{|v|=n} ‖L(v)‖`.
pub fn r_n(frontier: &Frontier) -> f64 {
    frontier.nodes.iter().map(|n| n.l.log_norm).fold(f64::NEG_INFINITY, f64::max).exp()
}

/// `W_n(u) = Σ_{|v|=n} H^α(L(v)ᵀu)`.
pub fn w_n(frontier: &Frontier, u: &[f64], h: &HEvaluator) -> f64 {
    frontier.nodes.iter().map(|n| n.h_weight(u, h)).sum()
}

/// The stopping line `𝔏_t^u`: nodes with `S^u(v) > t` all of whose strict
/// ancestors have `S^u ≤ t`, found breadth first.
pub fn expand_stopping_line(u: &SpherePoint, t: f64, ens: &WeightEnsemble, caps: &Caps, key: StreamKey) -> Result<Frontier> {
    if u.dim() != ens.dim() {
        return Err(Error::Domain("direction and ensemble dimensions differ".into()));
    }
    let mut active = vec![TreeNode::root(ens.dim(), key)];
    let mut frozen = Vec::new();
    let mut total = 1usize;
    while !active.is_empty() {
        let mut open = Vec::new();
        for mut node in active {
            let (s, _) = node.position(u.coords());
            if s > t {
                frozen.push(node);
            } else {
                node.ancestor_max_s = node.ancestor_max_s.max(s);
                open.push(node);
            }
        }
        if open.is_empty() {
            break;
        }
        let depth = open[0].depth + 1;
        if depth > caps.max_depth {
            return Err(Error::CapExceeded { what: "depth", cap: caps.max_depth, reached: depth });
        }
        let (children, _) = expand_all(&open, ens, caps)?;
        total += children.len();
        if total > caps.max_nodes {
            return Err(Error::CapExceeded { what: "population", cap: caps.max_nodes, reached: total });
        }
        active = children;
    }
    Ok(Frontier {
        mode: FrontierMode::StoppingLine { u: u.clone(), t },
        nodes: frozen,
        wstar_partial: vec![0.0; ens.dim()],
        total_nodes: total,
        subsampled: caps.subsample.is_some(),
    })
}

/// Checks the defining property of a stopping-line frontier node by node.
pub fn verify_line(frontier: &Frontier) -> Result<()> {
    let FrontierMode::StoppingLine { u, t } = &frontier.mode else {
        return Err(Error::Precondition("not a stopping-line frontier".into()));
    };
    for n in &frontier.nodes {
        let (s, _) = n.position(u.coords());
        if !(s > *t) || n.ancestor_max_s > *t {
            return Err(Error::Precondition(format!("node {:?} violates the line: S={s}, ancestors {}", n.path, n.ancestor_max_s)));
        }
    }
    Ok(())
}

/// `W^f_{𝔏_t}(u) = Σ_{v ∈ 𝔏_t^u} H^α(L(v)ᵀu) f(U^u(v), S^u(v) − t)`.
pub fn w_f_line<F>(frontier: &Frontier, f: F, h: &HEvaluator) -> Result<f64>
where
    F: Fn(&SpherePoint, f64) -> f64,
{
    let FrontierMode::StoppingLine { u, t } = &frontier.mode else {
        return Err(Error::Precondition("not a stopping-line frontier".into()));
    };
    let mut acc = 0.0;
    for n in &frontier.nodes {
        let (s, dir) = n.position(u.coords());
        acc += n.h_weight(u.coords(), h) * f(&SpherePoint::from_vec(&dir)?, s - t);
    }
    Ok(acc)
}

/// `W*_n = Σ_{|v|<n} L(v)Q(v)` from the tree rooted at `key`.
pub fn wstar_series(n: usize, ens: &WeightEnsemble, caps: &Caps, key: StreamKey) -> Result<NonnegVector> {
    NonnegVector::new(generation(n, ens, caps, key)?.wstar_partial.into_iter().map(|v| v.max(0.0)).collect())
}

/// Normalized martingale means `E W_n(u) / H^α(u)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleMeans {
    pub directions: Vec<SpherePoint>,
    pub levels: Vec<f64>,
    /// `means[i][j]` for direction `i` and level `j`.
    pub means: Vec<Vec<MeanEstimate>>,
}

/// `E W_n(u)/H^α(u)` for each direction and depth, over `n_trees` trees.
pub fn martingale_means(
    dirs: &[SpherePoint],
    depths: &[usize],
    ens: &WeightEnsemble,
    h: &HEvaluator,
    n_trees: usize,
    caps: &Caps,
    key: StreamKey,
) -> Result<MartingaleMeans> {
    let max = depths.iter().copied().max().unwrap_or(0);
    let key = key.tag("martingale");
    let h0: Vec<f64> = dirs.iter().map(|u| h.eval(u.coords())).collect();
    let per_tree: Vec<Result<Vec<Vec<f64>>>> = par_map_indexed(n_trees, |i| {
        let mut f = Frontier::root(ens.dim(), key.index(i));
        let mut out = vec![vec![0.0; depths.len()]; dirs.len()];
        for n in 0..=max {
            if n > 0 {
                f = expand_generation(&f, ens, caps)?;
            }
            for (j, _) in depths.iter().enumerate().filter(|(_, d)| **d == n) {
                for (k, u) in dirs.iter().enumerate() {
                    out[k][j] = w_n(&f, u.coords(), h) / h0[k];
                }
            }
        }
        Ok(out)
    });
    let per_tree: Vec<Vec<Vec<f64>>> = per_tree.into_iter().collect::<Result<_>>()?;
    let means = (0..dirs.len())
        .map(|k| (0..depths.len()).map(|j| MeanEstimate::from_samples(&per_tree.iter().map(|t| t[k][j]).collect::<Vec<_>>())).collect())
        .collect();
    Ok(MartingaleMeans { directions: dirs.to_vec(), levels: depths.iter().map(|d| *d as f64).collect(), means })
}

/// Per-tree `(W_{𝔏_t}(u), W^f_{𝔏_t}(u))`, both divided by `H^α(u)`.
pub fn line_sums<F>(
    u: &SpherePoint,
    t: f64,
    f: F,
    ens: &WeightEnsemble,
    h: &HEvaluator,
    n_trees: usize,
    caps: &Caps,
    key: StreamKey,
) -> Result<Vec<(f64, f64)>>
where
    F: Fn(&SpherePoint, f64) -> f64 + Sync,
{
    let key = key.tag("stopping-line");
    let h0 = h.eval(u.coords());
    par_map_indexed(n_trees, |i| {
        let line = expand_stopping_line(u, t, ens, caps, key.index(i))?;
        Ok((w_n(&line, u.coords(), h) / h0, w_f_line(&line, &f, h)? / h0))
    })
    .into_iter()
    .collect()
}

/// `E W_{𝔏_t}(u)/H^α(u)` for each direction and horizon.
pub fn line_means(
    dirs: &[SpherePoint],
    ts: &[f64],
    ens: &WeightEnsemble,
    h: &HEvaluator,
    n_trees: usize,
    caps: &Caps,
    key: StreamKey,
) -> Result<MartingaleMeans> {
    let mut means = Vec::with_capacity(dirs.len());
    for (k, u) in dirs.iter().enumerate() {
        let mut row = Vec::with_capacity(ts.len());
        for (j, t) in ts.iter().enumerate() {
            let sums = line_sums(u, *t, |_, _| 1.0, ens, h, n_trees, caps, key.index((k * ts.len() + j) as u64))?;
            row.push(MeanEstimate::from_samples(&sums.iter().map(|s| s.0).collect::<Vec<_>>()));
        }
        means.push(row);
    }
    Ok(MartingaleMeans { directions: dirs.to_vec(), levels: ts.to_vec(), means })
}

/// Smallest depth at which the sd of `W_n − W_{n−1}` falls below `rel · E W_n`.
pub fn martingale_depth(
    u: &SpherePoint,
    ens: &WeightEnsemble,
    h: &HEvaluator,
    rel: f64,
    n_trees: usize,
    caps: &Caps,
    key: StreamKey,
) -> Result<usize> {
    let key = key.tag("martingale-depth");
    let mut frontiers: Vec<Frontier> = (0..n_trees).map(|i| Frontier::root(ens.dim(), key.index(i as u64))).collect();
    let mut prev: Vec<f64> = frontiers.iter().map(|f| w_n(f, u.coords(), h)).collect();
    for n in 1..=caps.max_depth {
        let next: Vec<Result<Frontier>> = frontiers.par_iter().map(|f| expand_generation(f, ens, caps)).collect();
        frontiers = next.into_iter().collect::<Result<_>>()?;
        let cur: Vec<f64> = frontiers.iter().map(|f| w_n(f, u.coords(), h)).collect();
        let diffs: Vec<f64> = cur.iter().zip(&prev).map(|(a, b)| a - b).collect();
        let sd = MeanEstimate::from_samples(&diffs).se * (n_trees as f64).sqrt();
        let mean = MeanEstimate::from_samples(&cur).mean;
        if sd < rel * mean {
            return Ok(n);
        }
        prev = cur;
    }
    Err(Error::CapExceeded { what: "depth", cap: caps.max_depth, reached: caps.max_depth })
}

/// Branching side against walk side of the many-to-one identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManyToOneReport {
    pub branching: MeanEstimate,
    pub walk: MeanEstimate,
    pub walk_ess: f64,
    pub z: f64,
    pub pass: bool,
}

impl ManyToOneReport {
    fn new(branching: MeanEstimate, walk: MeanEstimate, walk_ess: f64, z: f64) -> Self {
        ManyToOneReport { pass: branching.agrees(&walk, z, 1e-12), branching, walk, walk_ess, z }
    }
}

/// `(1/H^α(u)) E Σ_{|v|=n} H^α(L(v)ᵀu) f(U^u(v), S^u(v))` against `E^α_u f(U_n, S_n)`.
#[allow(clippy::too_many_arguments)]
pub fn many_to_one_generation<F>(
    u: &SpherePoint,
    n: usize,
    f: F,
    ens: &WeightEnsemble,
    sol: &SpectralSolution,
    n_trees: usize,
    n_paths: usize,
    caps: &Caps,
    key: StreamKey,
) -> Result<ManyToOneReport>
where
    F: Fn(&SpherePoint, f64) -> f64 + Sync,
{
    let h = sol.evaluator();
    let h0 = h.eval(u.coords());
    let bkey = key.tag("many-to-one-trees");
    let trees: Vec<Result<f64>> = par_map_indexed(n_trees, |i| {
        let g = generation(n, ens, caps, bkey.index(i))?;
        let mut acc = 0.0;
        for node in &g.nodes {
            let (s, dir) = node.position(u.coords());
            acc += node.h_weight(u.coords(), &h) * f(&SpherePoint::from_vec(&dir)?, s);
        }
        Ok(acc / h0)
    });
    let trees: Vec<f64> = trees.into_iter().collect::<Result<_>>()?;
    let shift = ShiftedMeasure::new(sol);
    let walk = shifted_expectation(|p| f(p.u_n(), p.s_n()), u, n, ens, &shift, n_paths, key.tag("many-to-one-paths"))?;
    Ok(ManyToOneReport::new(MeanEstimate::from_samples(&trees), walk.estimate, walk.ess, 3.0))
}

/// `(1/H^α(u)) E W^f_{𝔏_t}(u)` against `E^α_u f(U(t), R(t))`.
#[allow(clippy::too_many_arguments)]
pub fn many_to_one_line<F>(
    u: &SpherePoint,
    t: f64,
    f: F,
    ens: &WeightEnsemble,
    sol: &SpectralSolution,
    sampler: OvershootSampler<'_>,
    n_trees: usize,
    n_paths: usize,
    caps: &Caps,
    key: StreamKey,
) -> Result<ManyToOneReport>
where
    F: Fn(&SpherePoint, f64) -> f64 + Sync,
{
    let h = sol.evaluator();
    let sums = line_sums(u, t, &f, ens, &h, n_trees, caps, key.tag("line-trees"))?;
    let branching = MeanEstimate::from_samples(&sums.iter().map(|s| s.1).collect::<Vec<_>>());
    let samples = overshoot_samples(u, t, sampler, n_paths, DEFAULT_MAX_STEPS, key.tag("line-paths"))?;
    let walk = overshoot_expectation(&samples, |y, r| f(y, r));
    Ok(ManyToOneReport::new(branching, walk.estimate, walk.ess, 3.0))
}
