mod common;

use adafilter::filter::{param_posterior, run_augmented_filter, state_marginal};
use adafilter::metrics::tv_slices;
use adafilter::particle::{run_particle_filter, systematic_resample};
use adafilter::{simulate, AugmentedModel, DiscreteMeasure, KernelFamily, KernelTemplate, ObservationModel};
use common::Gen;
use proptest::prelude::*;

fn headline(points: usize) -> AugmentedModel {
    let fam = KernelFamily::from_template(
        KernelTemplate::TwoStateFlip { return_prob: 0.3 },
        KernelFamily::uniform_grid(0.05, 0.95, points),
    )
    .unwrap();
    AugmentedModel::new(
        fam,
        DiscreteMeasure::uniform(points).unwrap(),
        ObservationModel::new(vec![0.0, 1.0], 0.5).unwrap(),
        DiscreteMeasure::probability(vec![0.5, 0.5]).unwrap(),
    )
    .unwrap()
}

#[test]
fn systematic_resampling_is_unbiased() {
    // one weight per particle, so the expected offspring count of i is N w_i
    let weights = Gen::new(3, 0).simplex(50, 0.25);
    let n = weights.len() as f64;
    let seeds = 200;
    let mut sums = vec![0.0; weights.len()];
    let mut sq = vec![0.0; weights.len()];
    for s in 0..seeds {
        let idx = systematic_resample(&weights, Gen::new(4, s).uniform());
        assert_eq!(idx.len(), weights.len());
        let mut counts = vec![0.0; weights.len()];
        for i in idx {
            counts[i] += 1.0;
        }
        for (j, c) in counts.iter().enumerate() {
            sums[j] += c;
            sq[j] += c * c;
        }
    }
    for (j, w) in weights.iter().enumerate() {
        let mean = sums[j] / seeds as f64;
        let var = (sq[j] / seeds as f64 - mean * mean).max(0.0);
        let se = (var / seeds as f64).sqrt();
        assert!((mean - n * w).abs() <= 3.0 * se + 1e-9, "particle {j}: {mean} vs {}", n * w);
    }
}

proptest! {
    #[test]
    fn systematic_counts_are_floor_or_ceil(w in prop::collection::vec(0.0f64..1.0, 1..12), u in 0.0f64..1.0) {
        prop_assume!(w.iter().sum::<f64>() > 0.0);
        let total: f64 = w.iter().sum();
        let idx = systematic_resample(&w, u);
        let n = idx.len();
        let mut counts = vec![0usize; w.len()];
        for i in &idx {
            counts[*i] += 1;
        }
        prop_assert!(idx.windows(2).all(|p| p[0] <= p[1]));
        for (j, c) in counts.iter().enumerate() {
            let expect = n as f64 * w[j] / total;
            prop_assert!((*c as f64 - expect).abs() < 1.0 + 1e-9);
        }
    }
}

#[test]
fn particle_filter_tracks_exact_filter() {
    let model = headline(5);
    let mut state_gap = 0.0;
    let mut param_gap = 0.0;
    let seeds = [1u64, 2, 3, 4];
    for &seed in &seeds {
        let traj = simulate(&model, 2, 60, seed).unwrap();
        let exact = run_augmented_filter(&model, &traj.observations).unwrap();
        let pf = run_particle_filter(&model, &traj.observations, 4000, seed, 0.5).unwrap();
        let last = exact.last().unwrap();
        state_gap += tv_slices(pf.state_marginals.last().unwrap().weights(), state_marginal(last).weights());
        param_gap += tv_slices(pf.param_posteriors.last().unwrap().weights(), param_posterior(last).weights());
        assert!(!pf.resample_steps.is_empty());
    }
    assert!(state_gap / (seeds.len() as f64) < 0.06, "{state_gap}");
    assert!(param_gap / (seeds.len() as f64) < 0.15, "{param_gap}");
}

#[test]
fn single_particle_and_point_prior() {
    let model = headline(3).with_point_prior(1).unwrap();
    let traj = simulate(&model, 1, 20, 5).unwrap();
    let pf = run_particle_filter(&model, &traj.observations, 1, 5, 0.5).unwrap();
    assert!(pf.param_posteriors.iter().all(|z| z.weight(1) == 1.0));
    assert!(pf.state_marginals.iter().all(|m| m.is_probability()));
}
