//! Bootstrap particle approximation of the augmented filter.
//!
//! Particles carry a `(state, parameter index)` pair. Only the state moves;
//! the parameter coordinate is frozen exactly as in the augmented kernel, so
//! the set of parameters represented in the ensemble can only shrink under
//! resampling. The exact grid filter in [`crate::filter`] is the reference.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::logspace::log_sum_exp;
use crate::measure::DiscreteMeasure;
use crate::model::AugmentedModel;
use crate::rng::{CounterRng, StreamTag};

pub const DEFAULT_ESS_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    pub states: Vec<usize>,
    pub params: Vec<usize>,
    /// Normalized: `log Σ exp(log_weights) = 0`.
    pub log_weights: Vec<f64>,
    pub step: usize,
    pub seed: u64,
    pub resampled: bool,
    n_states: usize,
    n_params: usize,
}

impl ParticleEnsemble {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|l| l.exp()).collect()
    }

    /// `1 / Σ w_i²` of the normalized weights.
    pub fn effective_sample_size(&self) -> f64 {
        1.0 / self.log_weights.iter().map(|l| (2.0 * l).exp()).sum::<f64>()
    }

    /// CSV rows `step,particle_id,state,param_index,weight`.
    pub fn snapshot_csv(&self, with_header: bool) -> String {
        let mut out = String::new();
        if with_header {
            out.push_str("step,particle_id,state,param_index,weight\n");
        }
        for (p, ((s, t), lw)) in self
            .states
            .iter()
            .zip(&self.params)
            .zip(&self.log_weights)
            .enumerate()
        {
            out.push_str(&format!("{},{},{},{},{}\n", self.step, p, s, t, lw.exp()));
        }
        out
    }
}

/// `N` i.i.d. draws from `initial ⊗ prior` with uniform weights.
pub fn pf_init(model: &AugmentedModel, n: usize, seed: u64) -> Result<ParticleEnsemble> {
    if n == 0 {
        return Err(Error::InvalidParameter("particle count must be positive".into()));
    }
    let (states, params): (Vec<usize>, Vec<usize>) = (0..n)
        .map(|p| {
            let mut rng = CounterRng::at(seed, StreamTag::ParticleInit, 0, p as u64);
            let x = rng.categorical(model.initial.weights());
            let t = rng.categorical(model.prior.weights());
            (x, t)
        })
        .unzip();
    Ok(ParticleEnsemble {
        states,
        params,
        log_weights: vec![-(n as f64).ln(); n],
        step: 0,
        seed,
        resampled: false,
        n_states: model.states(),
        n_params: model.params(),
    })
}

/// Propagate, reweight by `g(y - h(x))`, and resample systematically when the
/// effective sample size drops below `ess_fraction * N`.
pub fn pf_step(
    model: &AugmentedModel,
    ens: &ParticleEnsemble,
    y: f64,
    ess_fraction: f64,
) -> ParticleEnsemble {
    let step = ens.step + 1;
    let seed = ens.seed;
    let moved: Vec<(usize, f64)> = (0..ens.len())
        .into_par_iter()
        .map(|p| {
            let mut rng = CounterRng::at(seed, StreamTag::ParticlePropagate, step as u64, p as u64);
            let row = model.family.kernel(ens.params[p]).row(ens.states[p]);
            let x = rng.categorical(row);
            (x, ens.log_weights[p] + model.obs.log_density(y, x))
        })
        .collect();
    let (states, mut log_weights): (Vec<usize>, Vec<f64>) = moved.into_iter().unzip();
    let lse = log_sum_exp(&log_weights);
    log_weights.iter_mut().for_each(|l| *l -= lse);

    let mut next = ParticleEnsemble {
        states,
        params: ens.params.clone(),
        log_weights,
        step,
        seed,
        resampled: false,
        n_states: ens.n_states,
        n_params: ens.n_params,
    };
    if next.effective_sample_size() < ess_fraction * next.len() as f64 {
        let u = CounterRng::at(seed, StreamTag::ParticleResample, step as u64, 0).next_f64();
        let idx = systematic_resample(&next.weights(), u);
        let n = idx.len();
        next.states = idx.iter().map(|&i| next.states[i]).collect();
        next.params = idx.iter().map(|&i| next.params[i]).collect();
        next.log_weights = vec![-(n as f64).ln(); n];
        next.resampled = true;
    }
    next
}

/// Systematic resampling of normalized `weights` with offset `u ∈ [0, 1)`:
/// particle `i` is picked for each point `(u + k) / N` in its CDF interval.
pub fn systematic_resample(weights: &[f64], u: f64) -> Vec<usize> {
    let n = weights.len();
    let total: f64 = weights.iter().sum();
    let mut out = Vec::with_capacity(n);
    let mut cum = weights[0] / total;
    let mut i = 0;
    for k in 0..n {
        let point = (u + k as f64) / n as f64;
        while point >= cum && i + 1 < n {
            i += 1;
            cum += weights[i] / total;
        }
        out.push(i);
    }
    out
}

/// Weighted histograms over states and parameter indices.
pub fn pf_estimates(ens: &ParticleEnsemble) -> (DiscreteMeasure, DiscreteMeasure) {
    let mut states = vec![0.0; ens.n_states];
    let mut params = vec![0.0; ens.n_params];
    for ((&x, &t), &lw) in ens.states.iter().zip(&ens.params).zip(&ens.log_weights) {
        let w = lw.exp();
        states[x] += w;
        params[t] += w;
    }
    (
        DiscreteMeasure::normalize(states).expect("weights are positive"),
        DiscreteMeasure::normalize(params).expect("weights are positive"),
    )
}

/// Estimates after each observation and the final ensemble.
#[derive(Debug, Clone)]
pub struct ParticleRun {
    pub state_marginals: Vec<DiscreteMeasure>,
    pub param_posteriors: Vec<DiscreteMeasure>,
    pub resample_steps: Vec<usize>,
    pub final_ensemble: ParticleEnsemble,
}

pub fn run_particle_filter(
    model: &AugmentedModel,
    ys: &[f64],
    particles: usize,
    seed: u64,
    ess_fraction: f64,
) -> Result<ParticleRun> {
    if ys.is_empty() {
        return Err(Error::EmptyInput("observation sequence"));
    }
    let mut ens = pf_init(model, particles, seed)?;
    let mut state_marginals = Vec::with_capacity(ys.len());
    let mut param_posteriors = Vec::with_capacity(ys.len());
    let mut resample_steps = Vec::new();
    for &y in ys {
        ens = pf_step(model, &ens, y, ess_fraction);
        if ens.resampled {
            resample_steps.push(ens.step);
        }
        let (s, p) = pf_estimates(&ens);
        state_marginals.push(s);
        param_posteriors.push(p);
    }
    Ok(ParticleRun {
        state_marginals,
        param_posteriors,
        resample_steps,
        final_ensemble: ens,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::FiniteKernel;
    use crate::model::{KernelFamily, KernelTemplate, ObservationModel};

    fn pm(w: &[f64]) -> DiscreteMeasure {
        DiscreteMeasure::probability(w.to_vec()).unwrap()
    }

    fn flip_model(initial: &[f64], prior_point: Option<usize>) -> AugmentedModel {
        let family = KernelFamily::from_template(
            KernelTemplate::TwoStateFlip { return_prob: 0.3 },
            vec![vec![0.2], vec![0.6]],
        )
        .unwrap();
        let prior = match prior_point {
            Some(i) => DiscreteMeasure::point_mass(2, i).unwrap(),
            None => pm(&[0.5, 0.5]),
        };
        AugmentedModel::new(
            family,
            prior,
            ObservationModel::new(vec![0.0, 1.0], 0.5).unwrap(),
            pm(initial),
        )
        .unwrap()
    }

    #[test]
    fn init_sizes() {
        let m = flip_model(&[0.5, 0.5], None);
        assert!(pf_init(&m, 0, 1).is_err());
        let e = pf_init(&m, 1, 1).unwrap();
        assert_eq!(e.len(), 1);
        let e = pf_init(&flip_model(&[0.0, 1.0], Some(1)), 50, 3).unwrap();
        assert!(e.states.iter().all(|&s| s == 1));
        assert!(e.params.iter().all(|&t| t == 1));
    }

    #[test]
    fn init_matches_prior() {
        let m = flip_model(&[0.5, 0.5], None).with_prior(pm(&[0.3, 0.7])).unwrap();
        let e = pf_init(&m, 100_000, 9).unwrap();
        let (_, params) = pf_estimates(&e);
        let tv = crate::metrics::tv_norm(&params, &m.prior).unwrap();
        assert!(tv < 0.02, "{tv}");
    }

    #[test]
    fn uninformative_model_keeps_uniform_weights() {
        let family = KernelFamily::new(
            vec![vec![0.0]],
            vec![FiniteKernel::from_rows(&[vec![0.4, 0.6], vec![0.4, 0.6]]).unwrap()],
        )
        .unwrap();
        let m = AugmentedModel::new(
            family,
            pm(&[1.0]),
            ObservationModel::new(vec![2.0, 2.0], 1.0).unwrap(),
            pm(&[0.5, 0.5]),
        )
        .unwrap();
        let mut e = pf_init(&m, 64, 5).unwrap();
        for y in [0.0, 3.0, -1.0, 7.0] {
            e = pf_step(&m, &e, y, DEFAULT_ESS_FRACTION);
            assert!(!e.resampled);
            let w = e.weights();
            assert!(w.iter().all(|x| (x - 1.0 / 64.0).abs() < 1e-15));
        }
    }

    #[test]
    fn resampling_resets_weights_and_freezes_params() {
        let m = flip_model(&[0.5, 0.5], None);
        let mut e = pf_init(&m, 500, 2).unwrap();
        let mut saw_resample = false;
        for k in 0..40 {
            let before = e.clone();
            e = pf_step(&m, &e, if k % 3 == 0 { 1.2 } else { -0.1 }, 0.99);
            let total: f64 = e.weights().iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
            if e.resampled {
                saw_resample = true;
                assert!(e.weights().iter().all(|w| (w - 1.0 / 500.0).abs() < 1e-15));
                // every param index is inherited from some ancestor
                assert!(e.params.iter().all(|t| before.params.contains(t)));
            } else {
                assert_eq!(e.params, before.params);
            }
        }
        assert!(saw_resample);
    }

    #[test]
    fn systematic_counts() {
        let idx = systematic_resample(&[0.5, 0.25, 0.25, 0.0], 0.5);
        assert_eq!(idx, vec![0, 0, 1, 2]);
        let idx = systematic_resample(&[0.0, 1.0, 0.0], 0.0);
        assert_eq!(idx, vec![1, 1, 1]);
    }

    #[test]
    fn estimate_examples() {
        let m = flip_model(&[1.0, 0.0], Some(0));
        let e = pf_init(&m, 10, 0).unwrap();
        let (s, p) = pf_estimates(&e);
        assert_eq!(s.weights(), &[1.0, 0.0]);
        assert_eq!(p.weights(), &[1.0, 0.0]);

        let e = ParticleEnsemble {
            states: vec![0, 1],
            params: vec![0, 1],
            log_weights: vec![0.5f64.ln(); 2],
            step: 0,
            seed: 0,
            resampled: false,
            n_states: 2,
            n_params: 2,
        };
        let (s, p) = pf_estimates(&e);
        assert_eq!(s.weights(), &[0.5, 0.5]);
        assert_eq!(p.weights(), &[0.5, 0.5]);
        assert_eq!(e.snapshot_csv(true).lines().count(), 3);
    }

    #[test]
    fn deterministic_given_seed() {
        let m = flip_model(&[0.5, 0.5], None);
        let ys = [0.2, 1.1, 0.9, -0.3, 0.4];
        let a = run_particle_filter(&m, &ys, 300, 17, 0.5).unwrap();
        let b = run_particle_filter(&m, &ys, 300, 17, 0.5).unwrap();
        assert_eq!(a.final_ensemble, b.final_ensemble);
    }
}
