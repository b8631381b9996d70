use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use adafilter::harness::{self, ExperimentConfig, HarnessError, Scenario, THREADS_ENV};
use adafilter::model_file::validate_model;

#[derive(Parser)]
#[command(name = "adafilter", version, about = "Filters for hidden Markov models with an unknown kernel parameter")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate trajectories under the true parameter.
    Simulate(RunArgs),
    /// Exact augmented filter (and particle filter with --particles).
    Filter(RunArgs),
    /// Posterior mass outside the eta-neighborhood of the true parameter.
    Posterior(RunArgs),
    /// Gap between the augmented filter and the filter that knows the parameter.
    Stability(RunArgs),
    /// Step errors, total-error bounds and derivative bounds.
    Bounds(RunArgs),
    /// Mixing constants and contraction coefficients of every grid kernel.
    Metrics(RunArgs),
    /// Pairwise distances between stationary observation laws.
    Identifiability(RunArgs),
    /// Re-run the config stored in a manifest and compare file hashes.
    Replay {
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a model file and list every problem found.
    Validate { model: PathBuf },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    seeds: Vec<u64>,
    #[arg(long, default_value_t = 0.1, allow_negative_numbers = true)]
    eta: f64,
    #[arg(long)]
    out: PathBuf,
    /// True grid index; defaults to the model file's "alpha".
    #[arg(long)]
    alpha: Option<usize>,
    #[arg(long)]
    particles: Option<usize>,
    #[arg(long, default_value_t = adafilter::diagnostics::DEFAULT_FD_STEP)]
    fd_step: f64,
    #[arg(long, default_value_t = adafilter::particle::DEFAULT_ESS_FRACTION)]
    ess_frac: f64,
    #[arg(long, default_value_t = 0.5)]
    rate_window: f64,
    /// Initial law of the prior-averaged filter (stability).
    #[arg(long, value_delimiter = ',')]
    mu: Option<Vec<f64>>,
    /// Initial law of the truth and of the known-parameter filter (stability).
    #[arg(long, value_delimiter = ',')]
    mu_prime: Option<Vec<f64>>,
    #[arg(long, default_value_t = adafilter::diagnostics::DEFAULT_IDENTIFIABILITY_TOL)]
    ident_tol: f64,
    /// Skip the identifiability pre-check.
    #[arg(long)]
    no_ident_check: bool,
}

impl RunArgs {
    fn into_config(self, scenario: Scenario) -> (ExperimentConfig, PathBuf) {
        let config = ExperimentConfig {
            scenario,
            model: self.model,
            n: self.n,
            seeds: self.seeds,
            eta: self.eta,
            alpha: self.alpha,
            particles: self.particles,
            fd_step: self.fd_step,
            ess_frac: self.ess_frac,
            rate_window: self.rate_window,
            mu: self.mu,
            mu_prime: self.mu_prime,
            identifiability_tol: (!self.no_ident_check).then_some(self.ident_tol),
        };
        (config, self.out)
    }
}

fn fail(err: &HarnessError) -> ExitCode {
    eprintln!("{}", err.to_json());
    ExitCode::from(err.exit_code() as u8)
}

fn configure_threads() -> Result<(), HarnessError> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = v
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| HarnessError::Config(vec![adafilter::model_file::Violation {
            pointer: format!("/env/{THREADS_ENV}"),
            message: format!("expected a positive integer, got {v:?}"),
        }]))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| HarnessError::Numerical(e.to_string()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", json!({ "error": "config", "exit_code": 2, "message": e.to_string() }));
            return ExitCode::from(2);
        }
    };
    if let Err(e) = configure_threads() {
        return fail(&e);
    }
    let (scenario, args) = match cli.command {
        Command::Simulate(a) => (Scenario::Simulate, a),
        Command::Filter(a) => (Scenario::Filter, a),
        Command::Posterior(a) => (Scenario::Posterior, a),
        Command::Stability(a) => (Scenario::Stability, a),
        Command::Bounds(a) => (Scenario::Bounds, a),
        Command::Metrics(a) => (Scenario::Metrics, a),
        Command::Identifiability(a) => (Scenario::Identifiability, a),
        Command::Replay { manifest, out } => {
            return match harness::replay(&manifest, &out) {
                Ok(r) => {
                    println!("{}", serde_json::to_string_pretty(&r).expect("serializable"));
                    if r.reproduced {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(1)
                    }
                }
                Err(e) => fail(&e),
            };
        }
        Command::Validate { model } => {
            return match validate_model(&model) {
                Ok(m) => {
                    println!(
                        "{}",
                        json!({ "valid": true, "states": m.model.states(), "params": m.model.params(), "alpha": m.alpha })
                    );
                    ExitCode::SUCCESS
                }
                Err(v) => fail(&HarnessError::Config(v)),
            };
        }
    };
    let (config, out) = args.into_config(scenario);
    match harness::run(&config, &out) {
        Ok(m) => {
            println!(
                "{}",
                json!({ "scenario": scenario.name(), "out": out, "config_sha256": m.config_sha256, "files": m.files.len() + 1 })
            );
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e),
    }
}
