use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use everett_cli::config::ToleranceOverrides;
use everett_cli::matrix_io::DenseFile;
use everett_cli::report::emit_report;
use everett_cli::runner::{run_decompose, run_demo_ambiguity, run_sweep, run_verify};
use everett_cli::{CliError, ScenarioConfig, VerificationReport, EXIT_ERROR, EXIT_FAILED};
use everett_core::ToleranceProfile;

/// Verify finite-dimensional measurement models and their branch structure.
#[derive(Debug, Parser)]
#[command(name = "everett", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Override a tolerance, e.g. `--tolerance eq_tol=1e-11`. Repeatable.
    #[arg(long = "tolerance", value_name = "KEY=VAL")]
    tolerances: Vec<String>,
    /// Write the report here instead of stdout.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check conditions M1-M4, branch form and picture consistency.
    Verify {
        #[arg(long, value_name = "FILE")]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Rotated-basis example for two outcomes.
    DemoAmbiguity {
        #[arg(long, default_value_t = 2)]
        m: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Extract branch structure from an operator file.
    Decompose {
        #[arg(long, value_name = "FILE")]
        operator: PathBuf,
        #[arg(long, value_name = "FILE")]
        ready: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Randomized falsification sweeps.
    Sweep {
        #[arg(long, value_name = "FILE")]
        config: PathBuf,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
}

fn env_seed() -> Result<Option<u64>, CliError> {
    match std::env::var("EVERETT_SEED") {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|e| CliError::Usage(format!("EVERETT_SEED: {e}"))),
        Err(_) => Ok(None),
    }
}

fn overrides(common: &Common) -> Result<ToleranceOverrides, CliError> {
    let mut o = ToleranceOverrides::default();
    for a in &common.tolerances {
        o.set(a).map_err(CliError::Usage)?;
    }
    Ok(o)
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn load_config(path: &Path, seed: Option<u64>, common: &Common) -> Result<ScenarioConfig, CliError> {
    let mut cfg = ScenarioConfig::from_json(&read(path)?)?;
    let mut tol = cfg.tolerances.take().unwrap_or_default();
    tol.merge(&overrides(common)?);
    cfg.tolerances = Some(tol);
    // flag, then config file, then environment
    cfg.seed = match seed.or(cfg.seed) {
        Some(s) => Some(s),
        None => env_seed()?,
    };
    Ok(cfg)
}

fn load_dense(path: &Path) -> Result<DenseFile, CliError> {
    serde_json::from_str(&read(path)?).map_err(|e| CliError::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn run(cli: Cli) -> Result<(VerificationReport, Option<PathBuf>), CliError> {
    match cli.command {
        Command::Verify { config, seed, common } => {
            let cfg = load_config(&config, seed, &common)?;
            Ok((run_verify(&cfg)?, common.out))
        }
        Command::DemoAmbiguity { m, common } => {
            let mut cfg = ScenarioConfig::with_m(m);
            cfg.tolerances = Some(overrides(&common)?);
            Ok((run_demo_ambiguity(&cfg)?, common.out))
        }
        Command::Decompose { operator, ready, seed, common } => {
            let parse_err = |path: &Path| {
                let path = path.display().to_string();
                move |message| CliError::Parse { path, message }
            };
            let op = load_dense(&operator)?.into_operator().map_err(parse_err(&operator))?;
            let ready_vec = load_dense(&ready)?.into_vector().map_err(parse_err(&ready))?;
            let tol = overrides(&common)?.apply(ToleranceProfile::default());
            let seed = match seed {
                Some(s) => s,
                None => env_seed()?.unwrap_or(0),
            };
            Ok((run_decompose(op, ready_vec, seed, &tol)?, common.out))
        }
        Command::Sweep { config, trials, seed, common } => {
            let mut cfg = load_config(&config, seed, &common)?;
            if trials.is_some() {
                cfg.trials = trials;
            }
            Ok((run_sweep(&cfg)?, common.out))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let (report, out) = match run(cli) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_ERROR as u8);
        }
    };
    let written = match &out {
        Some(path) => emit_report(&report, path),
        None => std::io::stdout()
            .write_all(report.to_canonical_string().as_bytes())
            .map_err(|source| CliError::Io { path: "<stdout>".into(), source }),
    };
    if let Err(e) = written {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_ERROR as u8);
    }
    if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_FAILED as u8)
    }
}
