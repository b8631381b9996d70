//! Experiment configuration, scenario orchestration and result persistence.
//!
//! A run reads a model file, executes one scenario, and writes into the
//! output directory:
//!
//! - `report.json`: the config echo and the scenario results;
//! - one or more CSV series (reals printed with shortest round-trip
//!   formatting, rows in a fixed order);
//! - `manifest.json`: library version, config and its SHA-256, model file
//!   hash, seed list, and the SHA-256 of every other file written.
//!
//! Scenarios only wire library calls together. Seeds and grid cells are
//! processed on the rayon pool and collected in input order, so the thread
//! count never changes output bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::diagnostics::{
    bound_check, derivative_bound_series, kernel_derivative, lambda_bound, moment_condition_probe,
    posterior_concentration, stability_experiment, step_errors, total_errors, weak_step_bound_check,
    ConsistencyOptions, DEFAULT_FD_STEP, DEFAULT_IDENTIFIABILITY_TOL,
};
use crate::error::Error;
use crate::filter::{filter_csv, param_posterior, run_augmented_filter, state_marginal};
use crate::measure::DiscreteMeasure;
use crate::metrics::{birkhoff_tau, mixing_constant, tv_slices};
use crate::model::{pushforward, simulate, stationary_dist, AugmentedModel};
use crate::model_file::{validate_model, LoadedModel, Violation};
use crate::particle::{run_particle_filter, DEFAULT_ESS_FRACTION};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST_FILE: &str = "manifest.json";
pub const REPORT_FILE: &str = "report.json";
/// Environment variable capping the worker pool.
pub const THREADS_ENV: &str = "ADAFILTER_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Simulate,
    Filter,
    Posterior,
    Stability,
    Bounds,
    Metrics,
    Identifiability,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Simulate => "simulate",
            Scenario::Filter => "filter",
            Scenario::Posterior => "posterior",
            Scenario::Stability => "stability",
            Scenario::Bounds => "bounds",
            Scenario::Metrics => "metrics",
            Scenario::Identifiability => "identifiability",
        }
    }

    fn uses_trajectories(self) -> bool {
        !matches!(self, Scenario::Metrics | Scenario::Identifiability)
    }
}

/// Everything that determines the output bytes of a run. The output
/// directory is not part of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub model: PathBuf,
    pub n: usize,
    pub seeds: Vec<u64>,
    pub eta: f64,
    /// True grid index; falls back to the model file's `alpha`.
    pub alpha: Option<usize>,
    pub particles: Option<usize>,
    pub fd_step: f64,
    pub ess_frac: f64,
    pub rate_window: f64,
    /// Initial law of the `u`-prior filter in the stability scenario.
    pub mu: Option<Vec<f64>>,
    /// Initial law of the truth and of the `α` filter in the stability scenario.
    pub mu_prime: Option<Vec<f64>>,
    /// Identifiability tolerance; `None` skips the pre-check.
    pub identifiability_tol: Option<f64>,
}

impl ExperimentConfig {
    pub fn new(scenario: Scenario, model: impl Into<PathBuf>) -> Self {
        Self {
            scenario,
            model: model.into(),
            n: 100,
            seeds: vec![1],
            eta: 0.1,
            alpha: None,
            particles: None,
            fd_step: DEFAULT_FD_STEP,
            ess_frac: DEFAULT_ESS_FRACTION,
            rate_window: 0.5,
            mu: None,
            mu_prime: None,
            identifiability_tol: Some(DEFAULT_IDENTIFIABILITY_TOL),
        }
    }

    /// All problems with the knobs, each tagged with the config field.
    pub fn validate(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        let mut bad = |field: &str, message: String| {
            v.push(Violation {
                pointer: format!("/{field}"),
                message,
            })
        };
        if self.scenario.uses_trajectories() {
            if self.n == 0 {
                bad("n", "horizon must be at least 1".into());
            }
            if self.seeds.is_empty() {
                bad("seeds", "seed list is empty".into());
            }
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            bad("eta", format!("eta must be positive, got {}", self.eta));
        }
        if self.particles == Some(0) {
            bad("particles", "particle count must be positive".into());
        }
        if !(self.fd_step > 0.0 && self.fd_step.is_finite()) {
            bad("fd_step", format!("finite-difference step must be positive, got {}", self.fd_step));
        }
        if !(0.0..=1.0).contains(&self.ess_frac) {
            bad("ess_frac", format!("ESS fraction must lie in [0, 1], got {}", self.ess_frac));
        }
        if !(self.rate_window > 0.0 && self.rate_window <= 1.0) {
            bad("rate_window", format!("rate window must lie in (0, 1], got {}", self.rate_window));
        }
        if let Some(t) = self.identifiability_tol {
            if !(t > 0.0) {
                bad("identifiability_tol", format!("tolerance must be positive, got {t}"));
            }
        }
        v
    }

    /// SHA-256 of the config's JSON serialization.
    pub fn hash(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum HarnessError {
    Config(Vec<Violation>),
    Identifiability(Vec<(usize, usize)>),
    NotApplicable(String),
    Numerical(String),
    Io(String),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Identifiability(_) => 3,
            HarnessError::NotApplicable(_) => 4,
            HarnessError::Numerical(_) | HarnessError::Io(_) => 1,
        }
    }

    fn config(field: &str, message: impl Into<String>) -> Self {
        HarnessError::Config(vec![Violation {
            pointer: format!("/{field}"),
            message: message.into(),
        }])
    }

    /// Machine-readable form written to standard error.
    pub fn to_json(&self) -> Value {
        match self {
            HarnessError::Config(v) => json!({
                "error": "config",
                "exit_code": self.exit_code(),
                "violations": v,
            }),
            HarnessError::Identifiability(pairs) => json!({
                "error": "identifiability",
                "exit_code": self.exit_code(),
                "message": "grid points with indistinguishable observation laws",
                "pairs": pairs,
            }),
            HarnessError::NotApplicable(m) => json!({
                "error": "not_applicable",
                "exit_code": self.exit_code(),
                "message": m,
            }),
            HarnessError::Numerical(m) => json!({
                "error": "numerical",
                "exit_code": self.exit_code(),
                "message": m,
            }),
            HarnessError::Io(m) => json!({
                "error": "io",
                "exit_code": self.exit_code(),
                "message": m,
            }),
        }
    }
}

impl From<Error> for HarnessError {
    fn from(e: Error) -> Self {
        match e {
            Error::Identifiability(pairs) => HarnessError::Identifiability(pairs),
            Error::NotApplicable(m) => HarnessError::NotApplicable(m),
            Error::NonErgodic => HarnessError::NotApplicable(e.to_string()),
            Error::NoConvergence(_) => HarnessError::Numerical(e.to_string()),
            other => HarnessError::Config(vec![Violation {
                pointer: String::new(),
                message: other.to_string(),
            }]),
        }
    }
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Io(e.to_string())
    }
}

type HResult<T> = std::result::Result<T, HarnessError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub scenario: Scenario,
    pub config: ExperimentConfig,
    pub config_sha256: String,
    pub model_sha256: String,
    pub seeds: Vec<u64>,
    /// Every file of the run except the manifest, sorted by path.
    pub files: Vec<FileEntry>,
}

/// Files produced by a scenario before they are written.
struct Outputs {
    report: Value,
    csv: Vec<(String, String)>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Comma-joined values with shortest round-trip formatting.
fn row(values: &[String]) -> String {
    let mut s = values.join(",");
    s.push('\n');
    s
}

fn f(x: f64) -> String {
    format!("{x}")
}

/// Runs the scenario and writes its results under `out`.
pub fn run(config: &ExperimentConfig, out: &Path) -> HResult<Manifest> {
    let violations = config.validate();
    if !violations.is_empty() {
        return Err(HarnessError::Config(violations));
    }
    let model_bytes = fs::read(&config.model).map_err(|e| {
        HarnessError::config("model", format!("cannot read {}: {e}", config.model.display()))
    })?;
    let loaded = validate_model(&config.model).map_err(|v| {
        HarnessError::Config(
            v.into_iter()
                .map(|x| Violation {
                    pointer: format!("/model{}", x.pointer),
                    message: x.message,
                })
                .collect(),
        )
    })?;
    let outputs = execute(config, &loaded)?;

    fs::create_dir_all(out)?;
    let mut files = Vec::new();
    let report = json!({
        "version": VERSION,
        "config": config,
        "results": outputs.report,
    });
    let mut report_text = serde_json::to_string_pretty(&report).map_err(|e| HarnessError::Io(e.to_string()))?;
    report_text.push('\n');
    let mut all = outputs.csv;
    all.push((REPORT_FILE.to_string(), report_text));
    all.sort_by(|a, b| a.0.cmp(&b.0));
    for (name, text) in &all {
        fs::write(out.join(name), text)?;
        files.push(FileEntry {
            path: name.clone(),
            sha256: sha256_hex(text.as_bytes()),
            bytes: text.len() as u64,
        });
    }
    let manifest = Manifest {
        version: VERSION.to_string(),
        scenario: config.scenario,
        config: config.clone(),
        config_sha256: config.hash(),
        model_sha256: sha256_hex(&model_bytes),
        seeds: config.seeds.clone(),
        files,
    };
    let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| HarnessError::Io(e.to_string()))?;
    text.push('\n');
    fs::write(out.join(MANIFEST_FILE), text)?;
    Ok(manifest)
}

/// Outcome of re-running a manifest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplayReport {
    pub reproduced: bool,
    pub model_matches: bool,
    pub mismatched_files: Vec<String>,
}

/// Re-runs the config stored in a manifest into `out` and compares hashes.
pub fn replay(manifest_path: &Path, out: &Path) -> HResult<ReplayReport> {
    let text = fs::read_to_string(manifest_path)
        .map_err(|e| HarnessError::config("manifest", format!("cannot read {}: {e}", manifest_path.display())))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| HarnessError::config("manifest", e.to_string()))?;
    let model_now = fs::read(&manifest.config.model).map(|b| sha256_hex(&b)).unwrap_or_default();
    let fresh = run(&manifest.config, out)?;
    let mismatched_files: Vec<String> = manifest
        .files
        .iter()
        .filter(|old| !fresh.files.iter().any(|new| new == *old))
        .map(|f| f.path.clone())
        .collect();
    let model_matches = model_now == manifest.model_sha256;
    Ok(ReplayReport {
        reproduced: mismatched_files.is_empty() && fresh.files.len() == manifest.files.len(),
        model_matches,
        mismatched_files,
    })
}

fn alpha_index(config: &ExperimentConfig, loaded: &LoadedModel) -> HResult<usize> {
    let a = config
        .alpha
        .or(loaded.alpha)
        .ok_or_else(|| HarnessError::config("alpha", "no true parameter index in config or model file"))?;
    if a >= loaded.model.params() {
        return Err(HarnessError::config(
            "alpha",
            format!("index {a} is outside the {}-point grid", loaded.model.params()),
        ));
    }
    Ok(a)
}

fn measure_knob(field: &str, w: Option<&Vec<f64>>, model: &AugmentedModel) -> HResult<DiscreteMeasure> {
    match w {
        None => Ok(model.initial.clone()),
        Some(w) if w.len() != model.states() => Err(HarnessError::config(
            field,
            format!("expected {} weights, found {}", model.states(), w.len()),
        )),
        Some(w) => DiscreteMeasure::probability(w.clone()).map_err(|e| HarnessError::config(field, e.to_string())),
    }
}

fn execute(config: &ExperimentConfig, loaded: &LoadedModel) -> HResult<Outputs> {
    match config.scenario {
        Scenario::Simulate => scenario_simulate(config, loaded),
        Scenario::Filter => scenario_filter(config, loaded),
        Scenario::Posterior => scenario_posterior(config, loaded),
        Scenario::Stability => scenario_stability(config, loaded),
        Scenario::Bounds => scenario_bounds(config, loaded),
        Scenario::Metrics => scenario_metrics(loaded),
        Scenario::Identifiability => scenario_identifiability(config, loaded),
    }
}

fn scenario_simulate(config: &ExperimentConfig, loaded: &LoadedModel) -> HResult<Outputs> {
    let model = &loaded.model;
    let alpha = alpha_index(config, loaded)?;
    let trajs = config
        .seeds
        .par_iter()
        .map(|&s| simulate(model, alpha, config.n, s))
        .collect::<Result<Vec<_>, _>>()?;
    let mut csv = String::from("seed,step,state,observation\n");
    let mut summaries = Vec::new();
    for t in &trajs {
        csv.push_str(&row(&[t.seed.to_string(), "0".into(), t.initial_state.to_string(), String::new()]));
        for (k, (x, y)) in t.states.iter().zip(&t.observations).enumerate() {
            csv.push_str(&row(&[t.seed.to_string(), (k + 1).to_string(), x.to_string(), f(*y)]));
        }
        let mut occupation = vec![0.0; model.states()];
        for &x in &t.states {
            occupation[x] += 1.0 / t.states.len() as f64;
        }
        summaries.push(json!({
            "seed": t.seed,
            "initial_state": t.initial_state,
            "occupation": occupation,
            "mean_observation": t.observations.iter().sum::<f64>() / t.observations.len() as f64,
        }));
    }
    Ok(Outputs {
        report: json!({ "alpha_index": alpha, "trajectories": summaries }),
        csv: vec![("trajectory.csv".into(), csv)],
    })
}

fn scenario_filter(config: &ExperimentConfig, loaded: &LoadedModel) -> HResult<Outputs> {
    let model = &loaded.model;
    let alpha = alpha_index(config, loaded)?;
    let cells = config
        .seeds
        .par_iter()
        .map(|&seed| -> HResult<_> {
            let traj = simulate(model, alpha, config.n, seed)?;
            let exact = run_augmented_filter(model, &traj.observations)?;
            let pf = match config.particles {
                Some(np) => Some(run_particle_filter(model, &traj.observations, np, seed, config.ess_frac)?),
                None => None,
            };
            Ok((seed, exact, pf))
        })
        .collect::<HResult<Vec<_>>>()?;

    let mut csv = Vec::new();
    let mut per_seed = Vec::new();
    let mut pf_rows = String::from("seed,step,state_tv,param_tv\n");
    for (seed, exact, pf) in &cells {
        csv.push((format!("filter_seed{seed}.csv"), filter_csv(exact)));
        let last = exact.last().expect("non-empty horizon");
        let z = param_posterior(last);
        let mut entry = json!({
            "seed": seed,
            "final_param_posterior": z.weights(),
            "final_state_marginal": state_marginal(last).weights(),
            "posterior_mode": argmax(z.weights()),
        });
        if let Some(run) = pf {
            let mut sum_state = 0.0;
            for (k, st) in exact.iter().enumerate() {
                let s_tv = tv_slices(run.state_marginals[k].weights(), state_marginal(st).weights());
                let p_tv = tv_slices(run.param_posteriors[k].weights(), param_posterior(st).weights());
                sum_state += s_tv;
                pf_rows.push_str(&row(&[seed.to_string(), (k + 1).to_string(), f(s_tv), f(p_tv)]));
            }
            csv.push((format!("particles_seed{seed}.csv"), run.final_ensemble.snapshot_csv(true)));
            entry["particle_filter"] = json!({
                "particles": run.final_ensemble.len(),
                "resample_steps": run.resample_steps.len(),
                "mean_state_tv": sum_state / exact.len() as f64,
            });
        }
        per_seed.push(entry);
    }
    if config.particles.is_some() {
        csv.push(("pf_gap.csv".into(), pf_rows));
    }
    Ok(Outputs {
        report: json!({ "alpha_index": alpha, "seeds": per_seed }),
        csv,
    })
}

fn argmax(w: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in w.iter().enumerate() {
        if *x > w[best] {
            best = i;
        }
    }
    best
}

fn scenario_posterior(config: &ExperimentConfig, loaded: &LoadedModel) -> HResult<Outputs> {
    let alpha = alpha_index(config, loaded)?;
    let opts = ConsistencyOptions {
        rate_window: config.rate_window,
        identifiability_tol: config.identifiability_tol,
    };
    let r = posterior_concentration(&loaded.model, alpha, config.eta, config.n, &config.seeds, &opts)?;
    let mut csv = String::from("step,mass_outside,log_mass_outside,mass_at_alpha\n");
    for k in 0..r.mass_outside.len() {
        csv.push_str(&row(&[
            (k + 1).to_string(),
            f(r.mass_outside[k]),
            f(r.log_mass_outside[k]),
            f(r.mass_at_alpha[k]),
        ]));
    }
    let report = json!({
        "alpha_index": alpha,
        "eta": r.eta,
        "terminal_mass_outside": r.mass_outside.last(),
        "log_rate": r.log_rate,
        "rate_window": r.rate_window,
        "series": r,
    });
    Ok(Outputs {
        report,
        csv: vec![("posterior.csv".into(), csv)],
    })
}

fn scenario_stability(config: &ExperimentConfig, loaded: &LoadedModel) -> HResult<Outputs> {
    let model = &loaded.model;
    let alpha = alpha_index(config, loaded)?;
    let mu = measure_knob("mu", config.mu.as_ref(), model)?;
    let mu_prime = measure_knob("mu_prime", config.mu_prime.as_ref(), model)?;
    let r = stability_experiment(
        model,
        alpha,
        &mu,
        &mu_prime,
        config.n,
        &config.seeds,
        config.identifiability_tol,
    )?;
    let mut csv = String::from("step,mean_gap\n");
    for (k, g) in r.mean_gap.iter().enumerate() {
        csv.push_str(&row(&[(k + 1).to_string(), f(*g)]));
    }
    let report = json!({
        "alpha_index": alpha,
        "terminal_gap": r.mean_gap.last(),
        "series": r,
    });
    Ok(Outputs {
        report,
        csv: vec![("stability.csv".into(), csv)],
    })
}

fn scenario_bounds(config: &ExperimentConfig, loaded: &LoadedModel) -> HResult<Outputs> {
    let model = &loaded.model;
    let family = &model.family;
    let alpha = alpha_index(config, loaded)?;

    let deriv = kernel_derivative(family, alpha, config.fd_step)?;
    let lambdas: Vec<Vec<f64>> = deriv
        .matrices
        .iter()
        .map(|d| lambda_bound(d, family.kernel(alpha)))
        .collect();
    if lambdas.iter().flatten().any(|l| l.is_infinite()) {
        return Err(HarnessError::NotApplicable(format!(
            "Lambda is infinite at grid point {alpha}"
        )));
    }

    let cells: Vec<(u64, usize)> = config
        .seeds
        .iter()
        .flat_map(|&s| (0..family.len()).map(move |t| (s, t)))
        .collect();
    let unit_fs: Vec<Vec<f64>> = (0..model.states())
        .map(|x| (0..model.states()).map(|y| if x == y { 1.0 } else { -1.0 }).collect())
        .collect();
    let results = cells
        .par_iter()
        .map(|&(seed, theta)| -> HResult<_> {
            let traj = simulate(model, alpha, config.n, seed)?;
            let ys = &traj.observations;
            let steps = step_errors(family, &model.obs, &model.initial, theta, alpha, ys)?;
            let totals = total_errors(family, &model.obs, &model.initial, theta, alpha, ys)?;
            let bounds = bound_check(&steps, &totals)?;
            let derivative = derivative_bound_series(model, theta, alpha, ys)?;
            let weak = weak_step_bound_check(model, theta, alpha, ys, &unit_fs)?;
            Ok((seed, theta, steps, totals, bounds, derivative, weak))
        })
        .collect::<HResult<Vec<_>>>()?;

    let mut csv = String::from("seed,theta_index,step,delta_h,delta_tv,total_error,lambda_form,ratio_form\n");
    let mut report_cells = Vec::new();
    let (mut violations, mut weak_violations) = (0, 0);
    for (seed, theta, steps, totals, bounds, derivative, weak) in &results {
        for k in 0..totals.len() {
            csv.push_str(&row(&[
                seed.to_string(),
                theta.to_string(),
                (k + 1).to_string(),
                f(steps.hilbert[k]),
                f(steps.tv[k]),
                f(totals[k]),
                f(derivative.lambda_form[k]),
                f(derivative.ratio_form[k]),
            ]));
        }
        violations += bounds.violations;
        weak_violations += weak.violations;
        report_cells.push(json!({
            "seed": seed,
            "theta_index": theta,
            "bounds": bounds,
            "sup_lambda_form": derivative.running_sup_lambda.last(),
            "sup_ratio_form": derivative.running_sup_ratio.last(),
            "weak_step": weak,
        }));
    }
    let horizons: Vec<usize> = [1, 2, 5, 10, config.n]
        .into_iter()
        .filter(|&h| h <= config.n)
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let probe = moment_condition_probe(model, alpha, config.eta, &horizons)?;
    let report = json!({
        "alpha_index": alpha,
        "epsilon_alpha": mixing_constant(family.kernel(alpha)).epsilon,
        "derivative_method": deriv.method,
        "derivative_one_sided": deriv.one_sided,
        "lambda_alpha": lambdas,
        "total_bound_violations": violations,
        "weak_step_violations": weak_violations,
        "moment_probe": probe,
        "cells": report_cells,
    });
    Ok(Outputs {
        report,
        csv: vec![("bounds.csv".into(), csv)],
    })
}

fn scenario_metrics(loaded: &LoadedModel) -> HResult<Outputs> {
    let family = &loaded.model.family;
    let mut csv = String::from("param_index,epsilon,tau,tau_bound,is_mixing\n");
    let mut kernels = Vec::new();
    for (i, k) in family.kernels().iter().enumerate() {
        let cert = mixing_constant(k);
        let tau = birkhoff_tau(k);
        let e2 = cert.epsilon * cert.epsilon;
        let tau_bound = (1.0 - e2) / (1.0 + e2);
        csv.push_str(&row(&[i.to_string(), f(cert.epsilon), f(tau), f(tau_bound), cert.is_mixing.to_string()]));
        let stationary = if cert.is_mixing {
            Some(stationary_dist(k)?.into_weights())
        } else {
            None
        };
        kernels.push(json!({
            "param_index": i,
            "point": family.point(i),
            "epsilon": cert.epsilon,
            "lambda": cert.lambda,
            "is_mixing": cert.is_mixing,
            "tau": tau,
            "tau_bound": tau_bound,
            "stationary": stationary,
        }));
    }
    Ok(Outputs {
        report: json!({ "kernels": kernels }),
        csv: vec![("metrics.csv".into(), csv)],
    })
}

fn scenario_identifiability(config: &ExperimentConfig, loaded: &LoadedModel) -> HResult<Outputs> {
    let model = &loaded.model;
    let tol = config.identifiability_tol.unwrap_or(DEFAULT_IDENTIFIABILITY_TOL);
    let pushes = model
        .family
        .kernels()
        .par_iter()
        .map(|k| pushforward(&stationary_dist(k)?, &model.obs))
        .collect::<Result<Vec<_>, _>>()?;
    let mut csv = String::from("i,j,tv\n");
    let mut pairs = Vec::new();
    let mut min_tv = f64::INFINITY;
    for i in 0..pushes.len() {
        for j in (i + 1)..pushes.len() {
            let tv = tv_slices(pushes[i].weights(), pushes[j].weights());
            min_tv = min_tv.min(tv);
            if tv < tol {
                pairs.push((i, j));
            }
            let _ = writeln!(csv, "{i},{j},{tv}");
        }
    }
    Ok(Outputs {
        report: json!({
            "tolerance": tol,
            "identifiable": pairs.is_empty(),
            "indistinguishable_pairs": pairs,
            "min_pairwise_tv": if min_tv.is_finite() { Some(min_tv) } else { None },
        }),
        csv: vec![("identifiability.csv".into(), csv)],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_model(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, text).unwrap();
        p
    }

    const SYMMETRIC: &str = r#"{"states": 2, "h": [0, 1], "sigma": 0.5, "param_grid": [[0]],
        "kernels": [[[0.9, 0.1], [0.1, 0.9]]], "prior": "uniform", "initial": "uniform", "alpha": 0}"#;

    #[test]
    fn metrics_report_for_symmetric_kernel() {
        let dir = tempfile::tempdir().unwrap();
        let model = write_model(dir.path(), "m.json", SYMMETRIC);
        let cfg = ExperimentConfig::new(Scenario::Metrics, &model);
        run(&cfg, &dir.path().join("out")).unwrap();
        let report: Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("out/report.json")).unwrap()).unwrap();
        let k = &report["results"]["kernels"][0];
        assert!((k["epsilon"].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert!((k["tau"].as_f64().unwrap() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn singleton_posterior_has_no_mass_outside() {
        let dir = tempfile::tempdir().unwrap();
        let model = write_model(dir.path(), "m.json", SYMMETRIC);
        let mut cfg = ExperimentConfig::new(Scenario::Posterior, &model);
        cfg.n = 30;
        cfg.seeds = vec![1, 2];
        run(&cfg, &dir.path().join("out")).unwrap();
        let report: Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("out/report.json")).unwrap()).unwrap();
        assert_eq!(report["results"]["terminal_mass_outside"].as_f64(), Some(0.0));
    }

    #[test]
    fn config_errors_are_collected() {
        let mut cfg = ExperimentConfig::new(Scenario::Posterior, "missing.json");
        cfg.n = 0;
        cfg.seeds.clear();
        cfg.eta = -1.0;
        cfg.rate_window = 0.0;
        let HarnessError::Config(v) = run(&cfg, Path::new("unused")).unwrap_err() else {
            panic!("expected a config error");
        };
        let ptrs: Vec<_> = v.iter().map(|x| x.pointer.as_str()).collect();
        assert_eq!(ptrs, ["/n", "/seeds", "/eta", "/rate_window"]);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(HarnessError::from(Error::Identifiability(vec![(0, 1)])).exit_code(), 3);
        assert_eq!(HarnessError::from(Error::NotApplicable("x".into())).exit_code(), 4);
        assert_eq!(HarnessError::from(Error::NonErgodic).exit_code(), 4);
        assert_eq!(HarnessError::from(Error::EmptyInput("x")).exit_code(), 2);
    }
}
