//! Python bindings: `import pyadafilter`.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use adafilter::diagnostics::{posterior_concentration, stability_experiment, ConsistencyOptions};
use adafilter::filter::{param_posterior, run_augmented_filter, state_marginal};
use adafilter::harness::{self, ExperimentConfig, HarnessError, Scenario};
use adafilter::model_file::{parse_model, validate_model, LoadedModel, Violation};
use adafilter::particle::run_particle_filter;
use adafilter::{DiscreteMeasure, Error, FiniteKernel};

create_exception!(pyadafilter, IdentifiabilityError, PyException);
create_exception!(pyadafilter, NotApplicableError, PyException);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Identifiability(pairs) => IdentifiabilityError::new_err(format!("indistinguishable grid pairs {pairs:?}")),
        Error::NotApplicable(m) => NotApplicableError::new_err(m),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn violations(v: Vec<Violation>) -> PyErr {
    let lines: Vec<String> = v.iter().map(ToString::to_string).collect();
    PyValueError::new_err(lines.join("\n"))
}

fn measure(w: Vec<f64>) -> PyResult<DiscreteMeasure> {
    DiscreteMeasure::new(w).map_err(to_py)
}

fn kernel(rows: Vec<Vec<f64>>) -> PyResult<FiniteKernel> {
    FiniteKernel::from_rows(&rows).map_err(to_py)
}

/// Total variation `Σ|μ - ν|` (range `[0, 2]`).
#[pyfunction]
fn tv_norm(mu: Vec<f64>, nu: Vec<f64>) -> PyResult<f64> {
    adafilter::tv_norm(&measure(mu)?, &measure(nu)?).map_err(to_py)
}

#[pyfunction]
fn hilbert_metric(mu: Vec<f64>, nu: Vec<f64>) -> PyResult<f64> {
    adafilter::hilbert_metric(&measure(mu)?, &measure(nu)?).map_err(to_py)
}

#[pyfunction]
fn birkhoff_tau(rows: Vec<Vec<f64>>) -> PyResult<f64> {
    Ok(adafilter::birkhoff_tau(&kernel(rows)?))
}

/// `(epsilon, lambda)` with `ε λ <= K(x, .) <= λ / ε`.
#[pyfunction]
fn mixing_constant(rows: Vec<Vec<f64>>) -> PyResult<(f64, Vec<f64>)> {
    let c = adafilter::mixing_constant(&kernel(rows)?);
    Ok((c.epsilon, c.lambda.into_weights()))
}

#[pyfunction]
fn stationary_dist(rows: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    Ok(adafilter::stationary_dist(&kernel(rows)?).map_err(to_py)?.into_weights())
}

/// Lévy–Prokhorov distance between `Σ a_i δ_{x_i}` and `Σ b_j δ_{y_j}`.
#[pyfunction]
fn prokhorov_distance(xs: Vec<f64>, a: Vec<f64>, ys: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    let mu = measure(a)?.with_labels(xs).map_err(to_py)?;
    let nu = measure(b)?.with_labels(ys).map_err(to_py)?;
    adafilter::prokhorov_distance(&mu, &nu).map_err(to_py)
}

/// Parameterized hidden Markov model loaded from a JSON model file.
#[pyclass(name = "Model", module = "pyadafilter", frozen)]
struct PyModel {
    inner: LoadedModel,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: validate_model(&path).map_err(violations)?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: parse_model(text).map_err(violations)?,
        })
    }

    #[getter]
    fn states(&self) -> usize {
        self.inner.model.states()
    }

    #[getter]
    fn params(&self) -> usize {
        self.inner.model.params()
    }

    #[getter]
    fn grid(&self) -> Vec<Vec<f64>> {
        self.inner.model.family.grid().to_vec()
    }

    #[getter]
    fn alpha(&self) -> Option<usize> {
        self.inner.alpha
    }

    fn kernel(&self, index: usize) -> PyResult<Vec<Vec<f64>>> {
        self.inner.model.family.check_index(index).map_err(to_py)?;
        Ok(self.inner.model.family.kernel(index).matrix().rows())
    }

    /// `(states, observations)` for `X_1..X_n`, `Y_1..Y_n`.
    fn simulate(&self, alpha: usize, n: usize, seed: u64) -> PyResult<(Vec<usize>, Vec<f64>)> {
        let t = adafilter::simulate(&self.inner.model, alpha, n, seed).map_err(to_py)?;
        Ok((t.states, t.observations))
    }

    /// Exact augmented filter along `ys`.
    fn filter<'py>(&self, py: Python<'py>, ys: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
        let run = run_augmented_filter(&self.inner.model, &ys).map_err(to_py)?;
        let d = PyDict::new(py);
        d.set_item(
            "param_posterior",
            run.iter().map(|s| param_posterior(s).into_weights()).collect::<Vec<_>>(),
        )?;
        d.set_item(
            "state_marginal",
            run.iter().map(|s| state_marginal(s).into_weights()).collect::<Vec<_>>(),
        )?;
        d.set_item("log_likelihood", run.iter().map(|s| s.log_total_mass()).collect::<Vec<_>>())?;
        Ok(d)
    }

    #[pyo3(signature = (ys, particles, seed, ess_frac = 0.5))]
    fn particle_filter<'py>(
        &self,
        py: Python<'py>,
        ys: Vec<f64>,
        particles: usize,
        seed: u64,
        ess_frac: f64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let run = run_particle_filter(&self.inner.model, &ys, particles, seed, ess_frac).map_err(to_py)?;
        let d = PyDict::new(py);
        d.set_item(
            "param_posterior",
            run.param_posteriors.into_iter().map(|m| m.into_weights()).collect::<Vec<_>>(),
        )?;
        d.set_item(
            "state_marginal",
            run.state_marginals.into_iter().map(|m| m.into_weights()).collect::<Vec<_>>(),
        )?;
        d.set_item("resample_steps", run.resample_steps)?;
        Ok(d)
    }

    /// Seed-mean posterior mass outside the open `eta`-ball around `alpha`.
    #[pyo3(signature = (alpha, eta, n, seeds, rate_window = 0.5, identifiability_tol = Some(1e-6)))]
    fn posterior<'py>(
        &self,
        py: Python<'py>,
        alpha: usize,
        eta: f64,
        n: usize,
        seeds: Vec<u64>,
        rate_window: f64,
        identifiability_tol: Option<f64>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let opts = ConsistencyOptions {
            rate_window,
            identifiability_tol,
        };
        let r = posterior_concentration(&self.inner.model, alpha, eta, n, &seeds, &opts).map_err(to_py)?;
        let d = PyDict::new(py);
        d.set_item("mass_outside", r.mass_outside)?;
        d.set_item("log_mass_outside", r.log_mass_outside)?;
        d.set_item("mass_at_alpha", r.mass_at_alpha)?;
        d.set_item("log_rate", r.log_rate)?;
        Ok(d)
    }

    /// Seed-mean `‖Ψ_n^u(μ) - Ψ_n^α(μ')‖_tv` for `n = 1..N`.
    #[pyo3(signature = (alpha, mu, mu_prime, n, seeds, identifiability_tol = Some(1e-6)))]
    fn stability(
        &self,
        alpha: usize,
        mu: Vec<f64>,
        mu_prime: Vec<f64>,
        n: usize,
        seeds: Vec<u64>,
        identifiability_tol: Option<f64>,
    ) -> PyResult<Vec<f64>> {
        let mu = DiscreteMeasure::probability(mu).map_err(to_py)?;
        let mu_prime = DiscreteMeasure::probability(mu_prime).map_err(to_py)?;
        let r = stability_experiment(&self.inner.model, alpha, &mu, &mu_prime, n, &seeds, identifiability_tol)
            .map_err(to_py)?;
        Ok(r.mean_gap)
    }
}

/// Runs a CLI scenario and returns the config hash.
#[pyfunction]
#[pyo3(signature = (scenario, model, out, n = 100, seeds = vec![1], eta = 0.1, alpha = None, particles = None))]
#[allow(clippy::too_many_arguments)]
fn run_experiment(
    scenario: &str,
    model: PathBuf,
    out: PathBuf,
    n: usize,
    seeds: Vec<u64>,
    eta: f64,
    alpha: Option<usize>,
    particles: Option<usize>,
) -> PyResult<String> {
    let scenario: Scenario = serde_json::from_value(serde_json::Value::String(scenario.into()))
        .map_err(|_| PyValueError::new_err(format!("unknown scenario {scenario:?}")))?;
    let mut cfg = ExperimentConfig::new(scenario, model);
    cfg.n = n;
    cfg.seeds = seeds;
    cfg.eta = eta;
    cfg.alpha = alpha;
    cfg.particles = particles;
    match harness::run(&cfg, &out) {
        Ok(m) => Ok(m.config_sha256),
        Err(HarnessError::Identifiability(p)) => Err(IdentifiabilityError::new_err(format!("{p:?}"))),
        Err(HarnessError::NotApplicable(m)) => Err(NotApplicableError::new_err(m)),
        Err(e) => Err(PyValueError::new_err(e.to_json().to_string())),
    }
}

#[pymodule]
fn pyadafilter(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", harness::VERSION)?;
    m.add("IdentifiabilityError", m.py().get_type::<IdentifiabilityError>())?;
    m.add("NotApplicableError", m.py().get_type::<NotApplicableError>())?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(tv_norm, m)?)?;
    m.add_function(wrap_pyfunction!(hilbert_metric, m)?)?;
    m.add_function(wrap_pyfunction!(birkhoff_tau, m)?)?;
    m.add_function(wrap_pyfunction!(mixing_constant, m)?)?;
    m.add_function(wrap_pyfunction!(stationary_dist, m)?)?;
    m.add_function(wrap_pyfunction!(prokhorov_distance, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
