mod common;

use adafilter::filter::{log_likelihood_ratio, param_posterior, run_augmented_filter, run_filter, state_marginal};
use adafilter::{simulate, stationary_dist, DiscreteMeasure, KernelFamily, KernelTemplate, ObservationModel};
use common::{augmented_oracle, l1, normalized, path_sum, random_instance};

#[test]
fn per_parameter_filter_matches_path_enumeration() {
    for seed in 0..200 {
        let inst = random_instance(seed);
        let m = &inst.model;
        for i in 0..m.params() {
            let run = run_filter(m.family.kernel(i), &m.obs, &m.initial, &inst.ys).unwrap();
            for n in 1..=inst.ys.len() {
                let oracle = normalized(&path_sum(
                    m.family.kernel(i),
                    m.obs.h(),
                    m.obs.sigma(),
                    m.initial.weights(),
                    &inst.ys[..n],
                ));
                let err = l1(run[n - 1].dist.weights(), &oracle);
                assert!(err < 1e-10, "seed {seed} param {i} step {n}: {err}");
            }
        }
    }
}

#[test]
fn augmented_filter_and_its_decomposition_match_enumeration() {
    for seed in 0..200 {
        let inst = random_instance(seed);
        let run = run_augmented_filter(&inst.model, &inst.ys).unwrap();
        for n in 1..=inst.ys.len() {
            let oracle = augmented_oracle(&inst.model, &inst.ys[..n]);
            let state = &run[n - 1];
            assert!(l1(&state.joint(), &oracle) < 1e-10, "seed {seed} step {n}");

            // rebuild Φ_n from Z_n and the per-parameter filters
            let z = param_posterior(state);
            let z = &z;
            let rebuilt: Vec<f64> = state
                .per_param
                .iter()
                .enumerate()
                .flat_map(|(i, f)| f.dist.weights().iter().map(move |w| w * z.weight(i)).collect::<Vec<_>>())
                .collect();
            assert!(l1(&rebuilt, &oracle) < 1e-10, "seed {seed} step {n}");

            let s = inst.model.states();
            let marg: Vec<f64> = (0..s)
                .map(|x| (0..inst.model.params()).map(|i| oracle[i * s + x]).sum())
                .collect();
            assert!(l1(state_marginal(state).weights(), &marg) < 1e-10);
        }
    }
}

#[test]
fn log_likelihood_ratio_matches_enumeration() {
    for seed in 0..50 {
        let inst = random_instance(seed);
        let m = &inst.model;
        if m.params() < 2 {
            continue;
        }
        let a = run_filter(m.family.kernel(0), &m.obs, &m.initial, &inst.ys).unwrap();
        let b = run_filter(m.family.kernel(1), &m.obs, &m.initial, &inst.ys).unwrap();
        let za: f64 = path_sum(m.family.kernel(0), m.obs.h(), m.obs.sigma(), m.initial.weights(), &inst.ys)
            .iter()
            .sum();
        let zb: f64 = path_sum(m.family.kernel(1), m.obs.h(), m.obs.sigma(), m.initial.weights(), &inst.ys)
            .iter()
            .sum();
        let got = log_likelihood_ratio(a.last().unwrap(), b.last().unwrap());
        assert!((got - (za / zb).ln()).abs() < 1e-9, "seed {seed}");
    }
}

#[test]
fn long_runs_stay_finite() {
    // far-off observations would underflow a direct product of likelihoods
    let fam = KernelFamily::from_template(
        KernelTemplate::TwoStateFlip { return_prob: 0.3 },
        KernelFamily::uniform_grid(0.05, 0.95, 21),
    )
    .unwrap();
    let obs = ObservationModel::new(vec![0.0, 1.0], 0.05).unwrap();
    let model = adafilter::AugmentedModel::new(
        fam,
        DiscreteMeasure::uniform(21).unwrap(),
        obs,
        DiscreteMeasure::uniform(2).unwrap(),
    )
    .unwrap();
    let ys: Vec<f64> = (0..500).map(|k| if k % 7 == 0 { 40.0 } else { -3.0 }).collect();
    let run = run_augmented_filter(&model, &ys).unwrap();
    let last = run.last().unwrap();
    assert!(last.log_total_mass().is_finite());
    let z = param_posterior(last);
    assert!(z.is_probability(), "{:?} {:?}", z.weights(), last.param_log_weights);
    assert!(state_marginal(last).is_probability());
}

#[test]
fn simulated_occupation_matches_stationary_law() {
    let fam = KernelFamily::from_template(
        KernelTemplate::TwoStateFlip { return_prob: 0.3 },
        vec![vec![0.2]],
    )
    .unwrap();
    let model = adafilter::AugmentedModel::new(
        fam,
        DiscreteMeasure::uniform(1).unwrap(),
        ObservationModel::new(vec![0.0, 1.0], 0.5).unwrap(),
        DiscreteMeasure::uniform(2).unwrap(),
    )
    .unwrap();
    let pi = stationary_dist(model.family.kernel(0)).unwrap();
    let traj = simulate(&model, 0, 100_000, 9).unwrap();
    let frac1 = traj.states.iter().filter(|&&x| x == 1).count() as f64 / traj.states.len() as f64;
    assert!((frac1 - pi.weight(1)).abs() < 0.01, "{frac1} vs {}", pi.weight(1));
    let mean_y = traj.observations.iter().sum::<f64>() / traj.observations.len() as f64;
    assert!((mean_y - pi.weight(1)).abs() < 0.015);
}
