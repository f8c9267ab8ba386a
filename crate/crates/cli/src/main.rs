//! `quatmpc`: run scenarios, falling-cat Monte Carlo batches and numeric self-checks.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 scenario-level
//! failure (fall, solver degradation, failed check).

mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use quatmpc::mpc::ControllerKind;
use quatmpc::sim::{falling_cat_scenario, monte_carlo, run_scenario, Scenario};
use quatmpc::verify::{format_table, run_all, VerifyOptions};
use quatmpc::ConfigError;

use output::{write_atomic, write_json, Manifest, OutDir};

#[derive(Parser, Debug)]
#[command(
    name = "quatmpc",
    version,
    about = "Quaternion MPC for single-rigid-body legged robots"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Controller {
    Quaternion,
    Euler,
}

impl From<Controller> for ControllerKind {
    fn from(c: Controller) -> Self {
        match c {
            Controller::Quaternion => ControllerKind::Quaternion,
            Controller::Euler => ControllerKind::Euler,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one scenario file and write its log, summary and manifest.
    Run {
        scenario: PathBuf,
        /// Overrides the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the scenario's controller.
        #[arg(long, value_enum)]
        controller: Option<Controller>,
        #[arg(long, env = "QUATMPC_OUT", default_value = "out")]
        out: PathBuf,
    },
    /// Falling-cat Monte Carlo: random initial attitudes, report landing success.
    Montecarlo {
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, value_enum, default_value = "quaternion")]
        controller: Controller,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Base scenario; defaults to the built-in falling-cat drop.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, env = "QUATMPC_OUT", default_value = "out")]
        out: PathBuf,
    },
    /// Numeric self-checks against independent oracles.
    Verify {
        /// Add this offset to analytic cost gradients (exercises the checks).
        #[arg(long, hide = true, default_value_t = 0.0)]
        perturb_gradient: f64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let started = Instant::now();
    let result = match &cli.command {
        Command::Run {
            scenario,
            seed,
            controller,
            out,
        } => cmd_run(scenario, *seed, *controller, out, started),
        Command::Montecarlo {
            trials,
            controller,
            seed,
            scenario,
            out,
        } => cmd_montecarlo(*trials, *controller, *seed, scenario.as_deref(), out, started),
        Command::Verify { perturb_gradient } => Ok(cmd_verify(*perturb_gradient)),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

#[derive(Debug)]
enum CliError {
    Config(ConfigError),
    Io(PathBuf, std::io::Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "{e}"),
            CliError::Io(p, e) => write!(f, "cannot write {}: {e}", p.display()),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

fn cmd_run(
    path: &Path,
    seed: Option<u64>,
    controller: Option<Controller>,
    out: &Path,
    started: Instant,
) -> Result<ExitCode, CliError> {
    let mut scenario = Scenario::load(path)?;
    if let Some(s) = seed {
        scenario.seed = s;
    }
    if let Some(c) = controller {
        scenario.controller = c.into();
    }
    scenario.validate()?;
    let dir = OutDir::create(out)?;
    let res = run_scenario(&scenario)?;

    let csv_path = dir.file(&format!("{}.csv", scenario.name));
    let mut buf = Vec::new();
    res.log
        .write_csv(&mut buf)
        .map_err(|e| CliError::Io(csv_path.clone(), std::io::Error::other(e)))?;
    write_atomic(&csv_path, &buf)?;
    write_json(&dir.file(&format!("{}.summary.json", scenario.name)), &res.summary)?;

    let s = &res.summary;
    println!(
        "{}: {:?} at t = {:.3} s, {} rows, solve median {:.2} ms, max attitude error {:.2} deg, max position error {:.3} m",
        s.scenario, s.status, s.end_time, s.rows, s.solve_ms_median, s.max_attitude_error_deg, s.max_position_error
    );
    if let Some(f) = &s.failure {
        println!("failure: {f}");
    }
    Manifest::new("run", Some(path), scenario.seed, out, started).write(&dir)?;
    Ok(if s.succeeded() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn cmd_montecarlo(
    trials: usize,
    controller: Controller,
    seed: u64,
    scenario: Option<&Path>,
    out: &Path,
    started: Instant,
) -> Result<ExitCode, CliError> {
    let kind: ControllerKind = controller.into();
    let base = match scenario {
        Some(p) => Scenario::load(p)?,
        None => falling_cat_scenario(kind),
    };
    if trials == 0 {
        return Err(ConfigError::invalid("trials", "must be at least 1").into());
    }
    base.validate()?;
    let dir = OutDir::create(out)?;
    let report = monte_carlo(&base, trials, kind, seed)?;
    let stem = format!(
        "montecarlo_{}",
        match kind {
            ControllerKind::Quaternion => "quaternion",
            ControllerKind::Euler => "euler",
        }
    );
    write_json(&dir.file(&format!("{stem}.json")), &report)?;
    write_atomic(&dir.file(&format!("{stem}.txt")), report.table().as_bytes())?;
    print!("{}", report.table());
    Manifest::new("montecarlo", scenario, seed, out, started).write(&dir)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(perturb_gradient: f64) -> ExitCode {
    let results = run_all(&VerifyOptions { perturb_gradient });
    print!("{}", format_table(&results));
    if results.iter().all(|r| r.passed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}
