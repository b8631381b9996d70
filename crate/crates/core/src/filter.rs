//! Exact Bayes recursions for the per-parameter filter and the augmented
//! (state × parameter) filter.
//!
//! The augmented kernel never moves the parameter, so the joint filter is a
//! bank of per-parameter filters together with the log-likelihood of each
//! parameter: `Φ_n(dx, dθ) = Ψ_n^θ(dx) Z_n(dθ)`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::FiniteKernel;
use crate::logspace::{log_sum_exp, softmax};
use crate::measure::DiscreteMeasure;
use crate::model::{AugmentedModel, ObservationModel};

/// Below this largest unnormalized weight the update switches to log space.
const UNDERFLOW_GUARD: f64 = 1e-300;

/// Conditional state law and the accumulated log marginal likelihood
/// `log Π_k ∫ g(Y_k - h(x)) (predicted)(dx)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FilterState {
    pub dist: DiscreteMeasure,
    pub log_normalizer: f64,
}

impl FilterState {
    pub fn initial(mu: DiscreteMeasure) -> Self {
        Self {
            dist: mu,
            log_normalizer: 0.0,
        }
    }
}

/// One prediction/correction step: `Ψ ↦ g·(ΨK) / ∫ g d(ΨK)`.
pub fn filter_step(
    kernel: &FiniteKernel,
    obs: &ObservationModel,
    state: &FilterState,
    y: f64,
) -> Result<FilterState> {
    let n = kernel.size();
    for len in [state.dist.len(), obs.states()] {
        if len != n {
            return Err(Error::Dimension { left: len, right: n });
        }
    }
    let predicted = kernel.propagate(state.dist.weights());
    let (dist, log_increment) = correct(&predicted, obs, y);
    Ok(FilterState {
        dist: DiscreteMeasure::new(dist)?,
        log_normalizer: state.log_normalizer + log_increment,
    })
}

/// Bayes correction of a predicted law; returns the posterior weights and
/// `log ∫ g(y - h(x)) predicted(dx)`.
pub(crate) fn correct(predicted: &[f64], obs: &ObservationModel, y: f64) -> (Vec<f64>, f64) {
    let weighted: Vec<f64> = predicted
        .iter()
        .enumerate()
        .map(|(x, p)| p * obs.density(y, x))
        .collect();
    let max = weighted.iter().copied().fold(0.0, f64::max);
    if max >= UNDERFLOW_GUARD {
        let total: f64 = weighted.iter().sum();
        return (weighted.iter().map(|w| w / total).collect(), total.ln());
    }
    let log_w: Vec<f64> = predicted
        .iter()
        .enumerate()
        .map(|(x, &p)| {
            if p > 0.0 {
                p.ln() + obs.log_density(y, x)
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let lse = log_sum_exp(&log_w);
    (log_w.iter().map(|l| (l - lse).exp()).collect(), lse)
}

/// `Ψ_1, ..., Ψ_n` started from `initial`.
pub fn run_filter(
    kernel: &FiniteKernel,
    obs: &ObservationModel,
    initial: &DiscreteMeasure,
    ys: &[f64],
) -> Result<Vec<FilterState>> {
    if ys.is_empty() {
        return Err(Error::EmptyInput("observation sequence"));
    }
    let mut out = Vec::with_capacity(ys.len());
    let mut state = FilterState::initial(initial.clone());
    for &y in ys {
        state = filter_step(kernel, obs, &state, y)?;
        out.push(state.clone());
    }
    Ok(out)
}

/// Augmented filter at one time: one [`FilterState`] per grid point plus
/// `log u(θ_i) + log_normalizer_i`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AugmentedFilterState {
    pub per_param: Vec<FilterState>,
    pub param_log_weights: Vec<f64>,
}

impl AugmentedFilterState {
    pub fn initial(model: &AugmentedModel) -> Self {
        let per_param = vec![FilterState::initial(model.initial.clone()); model.params()];
        let param_log_weights = model.prior.weights().iter().map(|w| w.ln()).collect();
        Self {
            per_param,
            param_log_weights,
        }
    }

    pub fn states(&self) -> usize {
        self.per_param[0].dist.len()
    }

    pub fn params(&self) -> usize {
        self.per_param.len()
    }

    /// `log ∫∫ Φ_n` before normalization: the log marginal likelihood of the
    /// observations under the prior.
    pub fn log_total_mass(&self) -> f64 {
        log_sum_exp(&self.param_log_weights)
    }

    /// `Φ_n` as a flat vector indexed `param * states + state`.
    pub fn joint(&self) -> Vec<f64> {
        let z = softmax(&self.param_log_weights);
        self.per_param
            .iter()
            .zip(&z)
            .flat_map(|(f, &zi)| f.dist.weights().iter().map(move |w| zi * w))
            .collect()
    }
}

/// Runs the filter bank for every grid point over `ys`.
pub fn run_augmented_filter(
    model: &AugmentedModel,
    ys: &[f64],
) -> Result<Vec<AugmentedFilterState>> {
    if ys.is_empty() {
        return Err(Error::EmptyInput("observation sequence"));
    }
    if !(model.prior.total_mass() > 0.0) {
        return Err(Error::InvalidPrior("prior has no mass".into()));
    }
    let bank = (0..model.params())
        .into_par_iter()
        .map(|i| run_filter(model.family.kernel(i), &model.obs, &model.initial, ys))
        .collect::<Result<Vec<_>>>()?;
    let log_prior: Vec<f64> = model.prior.weights().iter().map(|w| w.ln()).collect();
    Ok((0..ys.len())
        .map(|n| {
            let per_param: Vec<FilterState> = bank.iter().map(|run| run[n].clone()).collect();
            let param_log_weights = per_param
                .iter()
                .zip(&log_prior)
                .map(|(f, lp)| lp + f.log_normalizer)
                .collect();
            AugmentedFilterState {
                per_param,
                param_log_weights,
            }
        })
        .collect())
}

/// One augmented step; used when the history does not need to be kept.
pub fn augmented_step(
    model: &AugmentedModel,
    state: &AugmentedFilterState,
    y: f64,
) -> Result<AugmentedFilterState> {
    let per_param = state
        .per_param
        .iter()
        .enumerate()
        .map(|(i, f)| filter_step(model.family.kernel(i), &model.obs, f, y))
        .collect::<Result<Vec<_>>>()?;
    let param_log_weights = state
        .param_log_weights
        .iter()
        .zip(state.per_param.iter().zip(&per_param))
        .map(|(lw, (old, new))| lw + (new.log_normalizer - old.log_normalizer))
        .collect();
    Ok(AugmentedFilterState {
        per_param,
        param_log_weights,
    })
}

/// Posterior `Z_n` over the grid.
pub fn param_posterior(state: &AugmentedFilterState) -> DiscreteMeasure {
    DiscreteMeasure::new(softmax(&state.param_log_weights)).expect("softmax is nonnegative")
}

/// State marginal `Ψ_n^u = Σ_i Z_n(i) Ψ_n^{θ_i}`.
pub fn state_marginal(state: &AugmentedFilterState) -> DiscreteMeasure {
    let z = softmax(&state.param_log_weights);
    let mut out = vec![0.0; state.states()];
    for (f, zi) in state.per_param.iter().zip(z) {
        for (o, w) in out.iter_mut().zip(f.dist.weights()) {
            *o += zi * w;
        }
    }
    DiscreteMeasure::new(out).expect("mixture of probability vectors")
}

/// `log dQ_a / dQ_b` at the shared observations.
pub fn log_likelihood_ratio(a: &FilterState, b: &FilterState) -> f64 {
    a.log_normalizer - b.log_normalizer
}

/// CSV with columns `step,param_index,state_index,weight,param_posterior,log_normalizer`.
pub fn filter_csv(history: &[AugmentedFilterState]) -> String {
    let mut out = String::from("step,param_index,state_index,weight,param_posterior,log_normalizer\n");
    for (n, state) in history.iter().enumerate() {
        let z = param_posterior(state);
        for (i, f) in state.per_param.iter().enumerate() {
            for (x, w) in f.dist.weights().iter().enumerate() {
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    n + 1,
                    i,
                    x,
                    w,
                    z.weight(i),
                    f.log_normalizer
                ));
            }
        }
    }
    out
}
