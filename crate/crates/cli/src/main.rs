use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use smoothfix::fixedpoint::FpMode;
use smoothfix::pipeline::{self, exit, Outputs, RunConfig};
use smoothfix::Error;

/// Fixed points of the multivariate smoothing transform.
#[derive(Debug, Parser)]
#[command(name = "smoothfix", version)]
struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed of the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; defaults to the config's `output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to the number of logical cores.
    #[arg(long, global = true, env = "SMOOTHFIX_THREADS")]
    threads: Option<usize>,
    /// Multiplies every Monte-Carlo budget.
    #[arg(long, global = true, default_value_t = 1.0)]
    budget_scale: f64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Homogeneous,
    Inhomogeneous,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Section {
    All,
    Residual,
    Tail,
    Angular,
    Disintegration,
    Regularity,
    Inequalities,
    Coupling,
}

impl Section {
    fn name(self) -> &'static str {
        match self {
            Section::All => "all",
            Section::Residual => "residual",
            Section::Tail => "tail",
            Section::Angular => "angular",
            Section::Disintegration => "disintegration",
            Section::Regularity => "regularity",
            Section::Inequalities => "inequalities",
            Section::Coupling => "coupling",
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// α, m'(α), H^α and ν^α: spectral.json, H_alpha.csv, nu_alpha.csv.
    Spectral,
    /// Branching simulation: martingale.csv, rn.csv, wstar.csv.
    Simulate,
    /// Fixed-point samples and Laplace transform: samples.csv, lt_grid.csv.
    Fixedpoint {
        /// Overrides `fixed_point.K`.
        #[arg(long = "k")]
        k: Option<f64>,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
    },
    /// Verification suite: report.json, report.csv. Exit code 4 on failure.
    Verify {
        #[arg(value_enum, default_value = "all")]
        which: Section,
    },
    /// Critical-case approximation: critical_lt.csv, stabilization.json.
    Critical {
        /// Comma-separated χ values below α.
        #[arg(long, value_delimiter = ',')]
        chi: Vec<f64>,
    },
}

fn run(cli: Cli) -> Result<i32, Error> {
    let path = cli.config.ok_or_else(|| Error::Config("--config is required".into()))?;
    let mut cfg = RunConfig::load(&path)?.with_budget_scale(cli.budget_scale)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = cli.out {
        cfg.output_dir = o;
    }
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    let write = |out: &Outputs| -> Result<(), Error> {
        out.write(&cfg.output_dir)?;
        for name in out.files.keys() {
            eprintln!("wrote {}", cfg.output_dir.join(name).display());
        }
        Ok(())
    };
    match cli.command {
        Command::Spectral => write(&pipeline::cmd_spectral(&cfg)?)?,
        Command::Simulate => write(&pipeline::cmd_simulate(&cfg)?)?,
        Command::Fixedpoint { k, mode } => {
            let mode = match mode {
                Some(Mode::Homogeneous) => FpMode::Homogeneous,
                Some(Mode::Inhomogeneous) => FpMode::Inhomogeneous,
                None => cfg.fixed_point.mode,
            };
            write(&pipeline::cmd_fixedpoint(&cfg, k.unwrap_or(cfg.fixed_point.k), mode)?)?
        }
        Command::Verify { which } => {
            let rep = pipeline::cmd_verify(&cfg, which.name())?;
            write(&pipeline::verify_outputs(&cfg, &rep)?)?;
            for e in &rep.entries {
                println!("{:<6} {:<22} {:<36} {:.6e}", e.verdict.as_str(), e.check, e.statistic, e.estimate);
            }
            if !rep.passed() {
                return Ok(exit::VERIFICATION);
            }
        }
        Command::Critical { chi } => write(&pipeline::cmd_critical(&cfg, &chi)?)?,
    }
    Ok(exit::OK)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { exit::OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let code = match run(cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            pipeline::exit_code(&e)
        }
    };
    ExitCode::from(code as u8)
}
