//! End-to-end runs driven by a JSON [`RunConfig`]: spectral data, branching
//! simulation, fixed-point sampling, verification and the critical case.
//!
//! Every output file starts with a header naming the toolkit version, the
//! SHA-256 of the resolved configuration and the seed.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::branching::{expand_generation, martingale_means, r_n, Caps, Frontier};
use crate::diagnostics::{
    angular_measure, coupling_distance, disintegration_ratio, exponential_imposter, fp_residual_report, hill_self_test,
    inequality_report, lt_inequality_suite, regularity_statistic, stable_lt, tail_check, Entry, IneqGrid, MonteCarloLt,
    Thresholds, Verdict, VerificationReport,
};
use crate::error::{Error, Result};
use crate::fixedpoint::{
    critical_fp_approx, iterated_samples, lt_fixed_point, projection_samples, sample_iterated, CriticalOptions, FixedPointSpec,
    FpMode,
};
use crate::linalg::{dot, SpherePoint};
use crate::model::WeightEnsemble;
use crate::rng::{par_map_indexed, StreamKey};
use crate::spectral::{solve_alpha, solve_eigen, AlphaOptions, AlphaRegime, AlphaSolution, SphereGrid, DEFAULT_RESOLUTION};
use crate::stable::StableSpec;
use crate::stats::{quantile_sorted, sorted};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 1;
    pub const INVALID: i32 = 2;
    pub const NONCONVERGENCE: i32 = 3;
    pub const VERIFICATION: i32 = 4;
}

/// Exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Json(_) | Error::Io(_) => exit::USAGE,
        Error::InvalidModel(_) | Error::StructuralViolation(_) | Error::Domain(_) | Error::NoRoot { .. } | Error::Precondition(_) => {
            exit::INVALID
        }
        Error::NonConvergence { .. } | Error::RootFind(_) | Error::CapExceeded { .. } | Error::NotTransient { .. } => {
            exit::NONCONVERGENCE
        }
    }
}

/// The ensemble, inline or as a path relative to the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EnsembleSource {
    Path(PathBuf),
    Inline(serde_json::Value),
}

/// Monte-Carlo budgets per stage; all scaled by `--budget-scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Budgets {
    pub kernel_mc: usize,
    pub martingale_trees: usize,
    pub fp_samples: usize,
    pub tail_samples: usize,
    pub angular_samples: usize,
    pub lt_trees: usize,
    pub coupling_mc: usize,
    pub critical_trees: usize,
}

impl Default for Budgets {
    fn default() -> Self {
        Budgets {
            kernel_mc: 2048,
            martingale_trees: 10_000,
            fp_samples: 10_000,
            tail_samples: 100_000,
            angular_samples: 20_000,
            lt_trees: 2000,
            coupling_mc: 2000,
            critical_trees: 2000,
        }
    }
}

impl Budgets {
    fn scaled(&self, f: f64) -> Self {
        let s = |n: usize| ((n as f64 * f).round() as usize).max(1);
        Budgets {
            kernel_mc: s(self.kernel_mc),
            martingale_trees: s(self.martingale_trees),
            fp_samples: s(self.fp_samples),
            tail_samples: s(self.tail_samples),
            angular_samples: s(self.angular_samples),
            lt_trees: s(self.lt_trees),
            coupling_mc: s(self.coupling_mc),
            critical_trees: s(self.critical_trees),
        }
    }

    fn all(&self) -> [usize; 8] {
        [
            self.kernel_mc,
            self.martingale_trees,
            self.fp_samples,
            self.tail_samples,
            self.angular_samples,
            self.lt_trees,
            self.coupling_mc,
            self.critical_trees,
        ]
    }
}

/// Law fed to the fixed-point residual test.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualLaw {
    #[default]
    Iterated,
    /// I.i.d. unit exponential components; must fail.
    Imposter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixedPointConfig {
    #[serde(rename = "K")]
    pub k: f64,
    pub mode: FpMode,
    pub depth: usize,
    /// Number of samples written by `fixedpoint`.
    pub samples: usize,
    pub lt_radii: Vec<f64>,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        FixedPointConfig { k: 1.0, mode: FpMode::Homogeneous, depth: 8, samples: 1000, lt_radii: vec![0.0, 0.25, 0.5, 1.0, 2.0, 4.0] }
    }
}

/// Horizons and test points of the verification runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifyConfig {
    pub residual_law: ResidualLaw,
    /// Number of residual-test directions.
    pub residual_directions: usize,
    pub martingale_depths: Vec<usize>,
    pub disintegration_depths: Vec<usize>,
    pub regularity_exponents: Vec<u32>,
    pub coupling_depths: Vec<usize>,
    /// `s = α + coupling_epsilon`.
    pub coupling_epsilon: f64,
    pub directions: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            residual_law: ResidualLaw::Iterated,
            residual_directions: 3,
            martingale_depths: vec![1, 3, 6],
            disintegration_depths: vec![4, 6, 8],
            regularity_exponents: vec![2, 4, 6, 8, 10],
            coupling_depths: vec![6, 8, 10],
            coupling_epsilon: 0.1,
            directions: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub ensemble: EnsembleSource,
    pub seed: u64,
    #[serde(default = "default_resolution")]
    pub grid_resolution: usize,
    #[serde(default)]
    pub budgets: Budgets,
    #[serde(default)]
    pub caps: Caps,
    #[serde(default)]
    pub tolerances: Thresholds,
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub fixed_point: FixedPointConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    /// `χ` values for the critical case; defaults below `α` when empty.
    #[serde(default)]
    pub chis: Vec<f64>,
}

fn default_resolution() -> usize {
    DEFAULT_RESOLUTION
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    /// Parses a config; a relative ensemble path is resolved against `base`.
    pub fn from_json(s: &str, base: Option<&Path>) -> Result<Self> {
        let mut c: RunConfig = serde_json::from_str(s).map_err(|e| Error::Config(format!("config: {e}")))?;
        if let (EnsembleSource::Path(p), Some(b)) = (&c.ensemble, base) {
            if p.is_relative() {
                c.ensemble = EnsembleSource::Path(b.join(p));
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        RunConfig::from_json(&s, path.parent())
    }

    fn validate(&self) -> Result<()> {
        if self.budgets.all().contains(&0) {
            return Err(Error::Config("every budget must be at least 1".into()));
        }
        if self.grid_resolution < 2 {
            return Err(Error::Config("grid_resolution must be at least 2".into()));
        }
        Ok(())
    }

    /// Multiplies every Monte-Carlo budget by `f`, keeping each at least 1.
    pub fn with_budget_scale(mut self, f: f64) -> Result<Self> {
        if !(f > 0.0 && f.is_finite()) {
            return Err(Error::Config(format!("budget scale {f} must be positive")));
        }
        self.budgets = self.budgets.scaled(f);
        Ok(self)
    }

    pub fn ensemble(&self) -> Result<WeightEnsemble> {
        match &self.ensemble {
            EnsembleSource::Path(p) => {
                let s = fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                WeightEnsemble::from_json(&s)
            }
            EnsembleSource::Inline(v) => WeightEnsemble::from_json(&v.to_string()),
        }
    }

    /// SHA-256 of the config with the ensemble inlined and the output directory cleared.
    pub fn hash(&self) -> Result<String> {
        let mut c = self.clone();
        c.ensemble = EnsembleSource::Inline(serde_json::from_str(&self.ensemble()?.to_json())?);
        c.output_dir = PathBuf::new();
        Ok(hex::encode(Sha256::digest(serde_json::to_vec(&c)?)))
    }

    pub fn header(&self) -> Result<Header> {
        Ok(Header { toolkit: "smoothfix".into(), version: VERSION.into(), config_sha256: self.hash()?, seed: self.seed })
    }

    fn key(&self) -> StreamKey {
        StreamKey::new(self.seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub toolkit: String,
    pub version: String,
    pub config_sha256: String,
    pub seed: u64,
}

impl Header {
    fn csv_line(&self) -> String {
        format!("# {} {} config_sha256={} seed={}\n", self.toolkit, self.version, self.config_sha256, self.seed)
    }
}

/// Files produced by one command, in write order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outputs {
    pub files: BTreeMap<String, String>,
}

impl Outputs {
    fn csv(&mut self, h: &Header, name: &str, body: String) {
        self.files.insert(name.into(), h.csv_line() + &body);
    }

    fn json<T: Serialize>(&mut self, h: &Header, name: &str, body: &T) -> Result<()> {
        let v = serde_json::json!({ "header": h, "body": body });
        self.files.insert(name.into(), serde_json::to_string_pretty(&v)? + "\n");
        Ok(())
    }

    /// Writes every file under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for (name, body) in &self.files {
            fs::write(dir.join(name), body)?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Shared stages

struct Prepared {
    ens: WeightEnsemble,
    grid: SphereGrid,
    alpha: AlphaSolution,
}

fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let ens = cfg.ensemble()?;
    let grid = SphereGrid::build(ens.dim(), cfg.grid_resolution)?;
    // bisect down to the resolution of m, so that m(α)^n stays 1 to rounding
    let opts = AlphaOptions { kernel_mc: cfg.budgets.kernel_mc, tol: 1e-13, ..AlphaOptions::default() };
    let alpha = solve_alpha(&ens, &grid, &opts)?;
    if alpha.regime == AlphaRegime::Invalid {
        return Err(Error::InvalidModel(format!("m'(α) = {} > 0: α is not the left root", alpha.m_prime_alpha)));
    }
    Ok(Prepared { ens, grid, alpha })
}

/// Test directions: evenly spaced in the plane, basis vectors and the diagonal otherwise.
pub fn test_directions(dim: usize, n: usize) -> Vec<SpherePoint> {
    match dim {
        1 => vec![SpherePoint::basis(1, 0)],
        2 => (0..n.max(1))
            .map(|i| SpherePoint::from_angle((i as f64 + 0.5) / n.max(1) as f64 * std::f64::consts::FRAC_PI_2))
            .collect(),
        _ => (0..dim).map(|i| SpherePoint::basis(dim, i)).chain(std::iter::once(SpherePoint::diagonal(dim))).take(n.max(1)).collect(),
    }
}

fn fp_spec(cfg: &RunConfig, p: &Prepared, k: f64, mode: FpMode) -> Result<FixedPointSpec> {
    Ok(FixedPointSpec::new(&p.ens, &p.alpha.spectral, k, mode, cfg.fixed_point.depth)?.with_caps(cfg.caps))
}

// ---------------------------------------------------------------------------
// Commands

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SpectralSummary {
    alpha: f64,
    m_alpha: f64,
    m_prime_alpha: f64,
    regime: AlphaRegime,
    k_alpha: f64,
    eig_residual: f64,
    h_nu_discrepancy: f64,
    unique: bool,
    grid_resolution: usize,
    grid_points: usize,
    evaluations: usize,
    warnings: Vec<String>,
}

/// `spectral.json`, `H_alpha.csv`, `nu_alpha.csv`.
pub fn cmd_spectral(cfg: &RunConfig) -> Result<Outputs> {
    let h = cfg.header()?;
    let p = prepare(cfg)?;
    let sol = &p.alpha.spectral;
    let mut out = Outputs::default();
    out.json(
        &h,
        "spectral.json",
        &SpectralSummary {
            alpha: p.alpha.alpha,
            m_alpha: p.alpha.m_alpha,
            m_prime_alpha: p.alpha.m_prime_alpha,
            regime: p.alpha.regime,
            k_alpha: sol.k_s,
            eig_residual: sol.eig_residual,
            h_nu_discrepancy: sol.h_nu_discrepancy,
            unique: sol.unique,
            grid_resolution: cfg.grid_resolution,
            grid_points: p.grid.len(),
            evaluations: p.alpha.evaluations,
            warnings: sol.warnings.clone(),
        },
    )?;
    let coords_header: Vec<String> = (0..p.ens.dim()).map(|i| format!("u{i}")).collect();
    let mut hcsv = format!("index,{},h_alpha\n", coords_header.join(","));
    let mut ncsv = format!("index,{},nu_alpha\n", coords_header.join(","));
    for (i, (pt, (hv, nv))) in p.grid.points().iter().zip(sol.h_values.iter().zip(&sol.nu_weights)).enumerate() {
        let c: Vec<String> = pt.coords().iter().map(|v| v.to_string()).collect();
        hcsv.push_str(&format!("{i},{},{hv}\n", c.join(",")));
        ncsv.push_str(&format!("{i},{},{nv}\n", c.join(",")));
    }
    out.csv(&h, "H_alpha.csv", hcsv);
    out.csv(&h, "nu_alpha.csv", ncsv);
    Ok(out)
}

/// `martingale.csv`, `rn.csv`, `wstar.csv`.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<Outputs> {
    let h = cfg.header()?;
    let p = prepare(cfg)?;
    let key = cfg.key().tag("simulate");
    let dirs = test_directions(p.ens.dim(), cfg.verify.directions);
    let hev = p.alpha.spectral.evaluator();
    let depths = &cfg.verify.martingale_depths;
    let mm = martingale_means(&dirs, depths, &p.ens, &hev, cfg.budgets.martingale_trees, &cfg.caps, key)?;
    let mut out = Outputs::default();
    let mut csv = String::from("n,u_index,mean_w_over_h,ci_lo,ci_hi\n");
    for (j, d) in depths.iter().enumerate() {
        for (k, row) in mm.means.iter().enumerate() {
            let (lo, hi) = row[j].ci(1.96);
            csv.push_str(&format!("{d},{k},{},{lo},{hi}\n", row[j].mean));
        }
    }
    out.csv(&h, "martingale.csv", csv);

    let max = depths.iter().copied().max().unwrap_or(0);
    let n_trees = cfg.budgets.martingale_trees;
    let tkey = key.tag("trees");
    let per_tree: Vec<(Vec<f64>, Vec<f64>)> = par_map_indexed(n_trees, |i| -> Result<(Vec<f64>, Vec<f64>)> {
        let mut rn = Vec::with_capacity(max + 1);
        let mut f = Frontier::root(p.ens.dim(), tkey.index(i));
        rn.push(r_n(&f));
        for _ in 0..max {
            f = expand_generation(&f, &p.ens, &cfg.caps)?;
            rn.push(r_n(&f));
        }
        Ok((rn, f.wstar_partial))
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let mut rcsv = String::from("n,median,q25,q75,extinct_fraction\n");
    for n in 0..=max {
        let vals: Vec<f64> = per_tree.iter().map(|t| t.0[n]).collect();
        let alive: Vec<f64> = vals.iter().copied().filter(|v| *v > 0.0).collect();
        let s = sorted(&vals);
        let ext = (vals.len() - alive.len()) as f64 / vals.len() as f64;
        rcsv.push_str(&format!("{n},{},{},{},{ext}\n", quantile_sorted(&s, 0.5), quantile_sorted(&s, 0.25), quantile_sorted(&s, 0.75)));
    }
    out.csv(&h, "rn.csv", rcsv);
    let cols: Vec<String> = (0..p.ens.dim()).map(|i| format!("w{i}")).collect();
    let mut wcsv = format!("tree,{}\n", cols.join(","));
    for (i, t) in per_tree.iter().enumerate() {
        let c: Vec<String> = t.1.iter().map(|v| v.max(0.0).to_string()).collect();
        wcsv.push_str(&format!("{i},{}\n", c.join(",")));
    }
    out.csv(&h, "wstar.csv", wcsv);
    Ok(out)
}

/// `samples.csv`, `lt_grid.csv`.
pub fn cmd_fixedpoint(cfg: &RunConfig, k: f64, mode: FpMode) -> Result<Outputs> {
    let h = cfg.header()?;
    let p = prepare(cfg)?;
    let spec = fp_spec(cfg, &p, k, mode)?;
    let key = cfg.key().tag("fixedpoint");
    let xs = iterated_samples(&spec, cfg.fixed_point.samples, key)?;
    let mut out = Outputs::default();
    let mut body = crate::stable::samples_to_csv(&xs);
    if body.is_empty() {
        body.push('\n');
    }
    out.csv(&h, "samples.csv", body);
    let dirs = test_directions(p.ens.dim(), cfg.verify.directions);
    let lt = lt_fixed_point(&spec, &cfg.fixed_point.lt_radii, &dirs, cfg.budgets.lt_trees, key)?;
    out.csv(&h, "lt_grid.csv", lt.to_csv());
    Ok(out)
}

/// The verification sections.
pub const SECTIONS: [&str; 7] = ["residual", "tail", "angular", "disintegration", "regularity", "inequalities", "coupling"];

/// Runs the selected sections (`"all"` for every one) and returns the report.
pub fn cmd_verify(cfg: &RunConfig, which: &str) -> Result<VerificationReport> {
    let sections: Vec<&str> = if which == "all" {
        SECTIONS.to_vec()
    } else if SECTIONS.contains(&which) {
        vec![which]
    } else {
        return Err(Error::Config(format!("unknown verification '{which}'; expected all or one of {}", SECTIONS.join(", "))));
    };
    let p = prepare(cfg)?;
    let th = &cfg.tolerances;
    let b = &cfg.budgets;
    let v = &cfg.verify;
    let key = cfg.key().tag("verify");
    let dim = p.ens.dim();
    let alpha = p.alpha.alpha;
    let k = cfg.fixed_point.k;
    let spec = fp_spec(cfg, &p, k, cfg.fixed_point.mode)?;
    let hom = fp_spec(cfg, &p, k, FpMode::Homogeneous)?;
    let mut rep = VerificationReport::new(cfg.seed);

    for s in sections {
        let skey = key.tag(s);
        match s {
            "residual" => {
                let dirs = test_directions(dim, v.residual_directions);
                let r = match v.residual_law {
                    ResidualLaw::Iterated => fp_residual_report(|kk| sample_iterated(&spec, kk), spec.ensemble(), &dirs, b.fp_samples, th, skey)?,
                    ResidualLaw::Imposter => {
                        fp_residual_report(|kk| exponential_imposter(dim, kk), spec.ensemble(), &dirs, b.fp_samples, th, skey)?
                    }
                };
                rep.extend(r);
            }
            "tail" => {
                rep.push(hill_self_test(alpha.min(0.99), b.tail_samples, th, skey.tag("calibration")));
                if k > 0.0 && alpha < 1.0 {
                    let u = SpherePoint::diagonal(dim);
                    let xs = projection_samples(&spec, &u, b.tail_samples, skey)?;
                    rep.extend(tail_check(&xs, alpha, k, spec.h().eval(u.coords()), th)?);
                } else {
                    rep.push(Entry::new("tail", "hill_index", f64::NAN, Verdict::Info).note("needs K > 0 and α < 1"));
                }
            }
            "angular" => {
                if k > 0.0 && alpha < 1.0 {
                    let xs = iterated_samples(&spec, b.angular_samples, skey)?;
                    let sol = &p.alpha.spectral;
                    let m = angular_measure(&xs, th.angular_quantile, sol.grid().points(), &sol.nu_weights, th.angular_bins)?;
                    rep.push(m.report(th, xs.len()));
                } else {
                    rep.push(Entry::new("angular_measure", "tv", f64::NAN, Verdict::Info).note("needs K > 0 and α < 1"));
                }
            }
            "disintegration" => {
                let depths: Vec<usize> = v.disintegration_depths.clone();
                let max = depths.iter().copied().max().unwrap_or(0);
                let h = hom.clone().with_depth(max);
                let lt = MonteCarloLt::build(&h, b.lt_trees, skey)?;
                let u = SpherePoint::diagonal(dim);
                let mut found = None;
                for i in 0..64 {
                    let r = disintegration_ratio(&h, &lt, &u, &depths, skey.tag("tree").index(i))?;
                    if r.levels.last().is_some_and(|l| l.w > 0.0) {
                        found = Some(r);
                        break;
                    }
                }
                match found {
                    Some(r) => {
                        for l in &r.levels[..r.levels.len().saturating_sub(1)] {
                            rep.push(Entry::new("disintegration", &format!("z_over_w[n={}]", l.n), l.ratio, Verdict::Info).sizes(&[l.nodes]));
                        }
                        rep.push(r.report(th).sizes(&[r.levels.last().map(|l| l.nodes).unwrap_or(0), b.lt_trees]));
                    }
                    None => rep.push(Entry::new("disintegration", "z_over_w", f64::NAN, Verdict::Info).note("every tree died out")),
                }
            }
            "regularity" => {
                let lt = MonteCarloLt::build(&hom, b.lt_trees, skey)?;
                let dirs = test_directions(dim, v.directions);
                let r = regularity_statistic(&lt, hom.h(), k, &v.regularity_exponents, &dirs, th);
                for e in r.report(th) {
                    rep.push(if k == 0.0 { Entry { verdict: Verdict::Info, ..e } } else { e }.sizes(&[b.lt_trees]));
                }
            }
            "inequalities" => {
                let grid = IneqGrid::default_for(dim);
                if k > 0.0 {
                    let closed = stable_lt(StableSpec::from_spectral(&p.alpha.spectral, k)?);
                    rep.extend(inequality_report(&lt_inequality_suite(&closed, &grid, th)));
                }
                let lt = MonteCarloLt::build(&spec, b.lt_trees, skey)?;
                for e in inequality_report(&lt_inequality_suite(&lt, &grid, th)).entries {
                    rep.push(Entry { check: "lt_inequalities_mc".into(), ..e });
                }
            }
            "coupling" => {
                if p.ens.is_homogeneous() {
                    rep.push(Entry::new("coupling", "bounded", 0.0, Verdict::Info).note("Q ≡ 0: Y_Q = Y_0"));
                    continue;
                }
                let sc = alpha + v.coupling_epsilon;
                let m_s = solve_eigen(sc, &p.ens, &p.grid, 1e-12, crate::spectral::DEFAULT_MAX_ITER)?.m_s;
                let inh = fp_spec(cfg, &p, k, FpMode::Inhomogeneous)?;
                match coupling_distance(&inh, sc, m_s, &v.coupling_depths, b.coupling_mc, th.z, skey) {
                    Ok(r) => r.report().into_iter().for_each(|e| rep.push(e)),
                    Err(Error::Precondition(msg)) => rep.push(Entry::new("coupling", "bounded", f64::NAN, Verdict::Info).note(msg)),
                    Err(e) => return Err(e),
                }
            }
            _ => unreachable!(),
        }
    }
    Ok(rep)
}

/// `report.json` and `report.csv` for a verification report.
pub fn verify_outputs(cfg: &RunConfig, rep: &VerificationReport) -> Result<Outputs> {
    let h = cfg.header()?;
    let mut out = Outputs::default();
    out.json(&h, "report.json", rep)?;
    out.csv(&h, "report.csv", rep.to_csv());
    Ok(out)
}

/// `critical_lt.csv`, `stabilization.json`.
pub fn cmd_critical(cfg: &RunConfig, chis: &[f64]) -> Result<Outputs> {
    let h = cfg.header()?;
    let p = prepare(cfg)?;
    if p.alpha.regime != AlphaRegime::Critical {
        return Err(Error::Precondition(format!("m'(α) = {} is not critical", p.alpha.m_prime_alpha)));
    }
    let mut opts = CriticalOptions::defaults(p.alpha.alpha, p.ens.dim());
    opts.n_trees = cfg.budgets.critical_trees;
    opts.depth = cfg.fixed_point.depth;
    if !chis.is_empty() {
        opts.chis = chis.to_vec();
    } else if !cfg.chis.is_empty() {
        opts.chis = cfg.chis.clone();
    }
    let u0 = SpherePoint::diagonal(p.ens.dim());
    let r = critical_fp_approx(&p.ens, &p.alpha, &u0, &p.grid, &opts, cfg.key().tag("critical"))?;
    let mut out = Outputs::default();
    let mut csv = String::from("chi,u_index,r,phi\n");
    for m in &r.members {
        for (j, row) in m.lt.iter().enumerate() {
            for (rr, v) in opts.rs.iter().zip(row) {
                csv.push_str(&format!("{},{j},{rr},{v}\n", m.chi));
            }
        }
    }
    out.csv(&h, "critical_lt.csv", csv);
    out.json(&h, "stabilization.json", &r)?;
    Ok(out)
}

/// Projections `⟨u, x⟩` of vectors, for quick summaries.
pub fn project(xs: &[crate::linalg::NonnegVector], u: &SpherePoint) -> Vec<f64> {
    xs.iter().map(|x| dot(x.as_slice(), u.coords())).collect()
}
