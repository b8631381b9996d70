mod common;

use adafilter::metrics::{hilbert_slices, tv_slices};
use adafilter::{
    birkhoff_tau, hilbert_metric, mixing_constant, prokhorov_distance, tv_norm, DiscreteMeasure, FiniteKernel,
};
use common::{hilbert_by_subsets, prokhorov_by_subsets, Gen};
use proptest::prelude::*;

fn prob_vec(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, n).prop_map(|w| {
        let s: f64 = w.iter().sum();
        w.into_iter().map(|x| x / s).collect()
    })
}

fn pair(max: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1..=max).prop_flat_map(|n| (prob_vec(n), prob_vec(n)))
}

fn triple(max: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
    (1..=max).prop_flat_map(|n| (prob_vec(n), prob_vec(n), prob_vec(n)))
}

fn kernel(max: usize) -> impl Strategy<Value = FiniteKernel> {
    (2..=max)
        .prop_flat_map(|n| prop::collection::vec(prob_vec(n), n))
        .prop_map(|rows| FiniteKernel::from_rows(&rows).unwrap())
}

fn m(w: &[f64]) -> DiscreteMeasure {
    DiscreteMeasure::new(w.to_vec()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn tv_is_a_metric((a, b, c) in triple(8)) {
        let ab = tv_norm(&m(&a), &m(&b)).unwrap();
        prop_assert_eq!(ab, tv_norm(&m(&b), &m(&a)).unwrap());
        prop_assert!((0.0..=2.0 + 1e-12).contains(&ab));
        prop_assert_eq!(tv_norm(&m(&a), &m(&a)).unwrap(), 0.0);
        let ac = tv_norm(&m(&a), &m(&c)).unwrap();
        let cb = tv_norm(&m(&c), &m(&b)).unwrap();
        prop_assert!(ab <= ac + cb + 1e-12);
    }

    #[test]
    fn hilbert_is_scale_invariant((a, b) in pair(8), s in 0.01f64..100.0, t in 0.01f64..100.0) {
        let h = hilbert_metric(&m(&a), &m(&b)).unwrap();
        let sa: Vec<f64> = a.iter().map(|x| x * s).collect();
        let tb: Vec<f64> = b.iter().map(|x| x * t).collect();
        let hs = hilbert_metric(&m(&sa), &m(&tb)).unwrap();
        prop_assert!((h - hs).abs() <= 1e-12 * (1.0 + h));
        prop_assert!(h >= 0.0);
        prop_assert!((h - hilbert_metric(&m(&b), &m(&a)).unwrap()).abs() <= 1e-12 * (1.0 + h));
    }

    #[test]
    fn hilbert_triangle((a, b, c) in triple(6)) {
        let ab = hilbert_slices(&a, &b);
        prop_assert!(ab <= hilbert_slices(&a, &c) + hilbert_slices(&c, &b) + 1e-12);
    }

    #[test]
    fn tau_never_exceeds_mixing_bound(k in kernel(5)) {
        let cert = mixing_constant(&k);
        let e2 = cert.epsilon * cert.epsilon;
        prop_assert!(birkhoff_tau(&k) <= (1.0 - e2) / (1.0 + e2) + 1e-10);
        prop_assert!(cert.holds_for(&k, 1e-12));
    }

    #[test]
    fn tau_dominates_sampled_contraction(k in kernel(4), seed in 0u64..1000) {
        let n = k.size();
        let mut g = Gen::new(seed, 1);
        let tau = birkhoff_tau(&k);
        for _ in 0..20 {
            let a = g.simplex(n, 0.0);
            let b = g.simplex(n, 0.0);
            let before = hilbert_slices(&a, &b);
            if before == 0.0 {
                continue;
            }
            let after = hilbert_slices(&k.propagate(&a), &k.propagate(&b));
            prop_assert!(after <= tau * before + 1e-9);
        }
    }
}

#[test]
fn tv_against_hilbert_on_many_pairs() {
    let c = 2.0 / 3f64.ln();
    let mut violations = 0;
    for i in 0..10_000u64 {
        let mut g = Gen::new(7, i);
        let n = g.int(1, 12);
        let a = g.simplex(n, 0.0);
        let b = g.simplex(n, 0.0);
        if tv_slices(&a, &b) > c * hilbert_slices(&a, &b) {
            violations += 1;
        }
    }
    assert_eq!(violations, 0);
}

#[test]
fn hilbert_matches_subset_enumeration() {
    for i in 0..500u64 {
        let mut g = Gen::new(11, i);
        let n = g.int(1, 12);
        // shared zero pattern so the measures are comparable
        let zero: Vec<bool> = (0..n).map(|_| g.uniform() < 0.2).collect();
        let draw = |g: &mut Gen| -> Vec<f64> {
            (0..n).map(|j| if zero[j] { 0.0 } else { g.range(0.01, 1.0) }).collect()
        };
        let a = draw(&mut g);
        let b = draw(&mut g);
        if a.iter().all(|&x| x == 0.0) {
            continue;
        }
        let got = hilbert_slices(&a, &b);
        let oracle = hilbert_by_subsets(&a, &b);
        assert!((got - oracle).abs() <= 1e-12 * (1.0 + oracle), "{got} vs {oracle}");
    }
}

#[test]
fn mixing_constant_is_maximal() {
    for i in 0..2000u64 {
        let mut g = Gen::new(13, i);
        let n = g.int(2, 5);
        let k = g.kernel(n, 0.1);
        let cert = mixing_constant(&k);
        if !cert.is_mixing {
            continue;
        }
        assert!(cert.holds_for(&k, 1e-12));
        // a larger ε forces ε λ_j <= m_j and M_j <= λ_j / ε, i.e. ε² <= m_j / M_j
        let bigger = cert.epsilon * (1.0 + 1e-6);
        let feasible = (0..n).all(|j| {
            let col: Vec<f64> = (0..n).map(|r| k.get(r, j)).collect();
            let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = col.iter().copied().fold(0.0, f64::max);
            hi == 0.0 || bigger * bigger * hi <= lo
        });
        assert!(!feasible);
    }
}

#[test]
fn mixing_constant_matches_grid_search() {
    for i in 0..100u64 {
        let mut g = Gen::new(17, i);
        let n = g.int(2, 4);
        let k = g.kernel(n, 0.0);
        let cert = mixing_constant(&k);
        // largest ε on a grid for which some λ on a log grid satisfies the sandwich
        let lambdas: Vec<f64> = (0..2000).map(|t| 10f64.powf(-3.0 + 3.0 * t as f64 / 1999.0)).collect();
        let ok = |eps: f64| {
            (0..n).all(|j| {
                lambdas.iter().any(|&l| (0..n).all(|r| eps * l <= k.get(r, j) && k.get(r, j) <= l / eps))
            })
        };
        let mut best = 0.0;
        for t in 1..=200 {
            let eps = t as f64 / 200.0;
            if ok(eps) {
                best = eps;
            }
        }
        assert!(best <= cert.epsilon + 1e-12, "{best} > {}", cert.epsilon);
        assert!(best >= cert.epsilon - 0.01, "{best} << {}", cert.epsilon);
    }
}

#[test]
fn prokhorov_matches_subset_bisection() {
    for i in 0..300u64 {
        let mut g = Gen::new(19, i);
        let nx = g.int(1, 6);
        let ny = g.int(1, 6);
        let xs: Vec<f64> = (0..nx).map(|_| (g.range(-1.0, 1.0) * 20.0).round() / 20.0).collect();
        let ys: Vec<f64> = (0..ny).map(|_| (g.range(-1.0, 1.0) * 20.0).round() / 20.0).collect();
        let (xs, ys) = (dedup(xs), dedup(ys));
        let a = g.simplex(xs.len(), 0.0);
        let b = g.simplex(ys.len(), 0.0);
        let mu = DiscreteMeasure::probability(a.clone()).unwrap().with_labels(xs.clone()).unwrap();
        let nu = DiscreteMeasure::probability(b.clone()).unwrap().with_labels(ys.clone()).unwrap();
        let got = prokhorov_distance(&mu, &nu).unwrap();
        let oracle = prokhorov_by_subsets(&xs, &a, &ys, &b);
        assert!((got - oracle).abs() < 2e-6, "case {i}: {got} vs {oracle}");
        assert!(got <= 1.0 && got >= 0.0);
    }
}

fn dedup(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}
