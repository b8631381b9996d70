//! Shared helpers for integration tests: random instance generation and
//! brute-force oracles that never call the filtering code.

#![allow(dead_code)]

use adafilter::rng::{CounterRng, StreamTag};
use adafilter::{AugmentedModel, DiscreteMeasure, FiniteKernel, KernelFamily, ObservationModel};

pub struct Gen(CounterRng);

impl Gen {
    pub fn new(seed: u64, index: u64) -> Self {
        Gen(CounterRng::new(seed, StreamTag::Test, index))
    }

    pub fn uniform(&mut self) -> f64 {
        self.0.next_f64()
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn int(&mut self, lo: usize, hi_inclusive: usize) -> usize {
        lo + (self.0.next_u64() % (hi_inclusive - lo + 1) as u64) as usize
    }

    pub fn normal(&mut self) -> f64 {
        self.0.standard_normal()
    }

    /// Probability vector; each entry is zeroed with probability `p_zero`,
    /// keeping at least one positive.
    pub fn simplex(&mut self, n: usize, p_zero: f64) -> Vec<f64> {
        let mut w: Vec<f64> = (0..n)
            .map(|_| if self.uniform() < p_zero { 0.0 } else { self.range(0.05, 1.0) })
            .collect();
        if w.iter().all(|&x| x == 0.0) {
            let i = self.int(0, n - 1);
            w[i] = 1.0;
        }
        let s: f64 = w.iter().sum();
        w.iter().map(|x| x / s).collect()
    }

    pub fn kernel(&mut self, n: usize, p_zero: f64) -> FiniteKernel {
        let rows: Vec<Vec<f64>> = (0..n).map(|_| self.simplex(n, p_zero)).collect();
        FiniteKernel::from_rows(&rows).unwrap()
    }
}

pub fn gaussian(y: f64, mean: f64, sigma: f64) -> f64 {
    let z = (y - mean) / sigma;
    (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

pub struct Instance {
    pub model: AugmentedModel,
    pub ys: Vec<f64>,
}

/// Random augmented model with `|E| <= 3`, `|Θ| <= 3`, `n <= 6`.
pub fn random_instance(seed: u64) -> Instance {
    let mut g = Gen::new(seed, 0);
    let states = g.int(1, 3);
    let params = g.int(1, 3);
    let n = g.int(1, 6);
    let kernels: Vec<FiniteKernel> = (0..params).map(|_| g.kernel(states, 0.2)).collect();
    let grid: Vec<Vec<f64>> = (0..params).map(|i| vec![i as f64]).collect();
    let family = KernelFamily::new(grid, kernels).unwrap();
    let h: Vec<f64> = (0..states).map(|_| g.range(-1.0, 2.0)).collect();
    let sigma = g.range(0.3, 1.5);
    let obs = ObservationModel::new(h, sigma).unwrap();
    let prior = DiscreteMeasure::probability(g.simplex(params, 0.2)).unwrap();
    let initial = DiscreteMeasure::probability(g.simplex(states, 0.2)).unwrap();
    let ys = (0..n).map(|_| g.range(-1.5, 2.5)).collect();
    Instance {
        model: AugmentedModel::new(family, prior, obs, initial).unwrap(),
        ys,
    }
}

/// Unnormalized `Σ_{x_0..x_{n-1}} μ(x_0) Π_k K(x_{k-1}, x_k) g(y_k - h(x_k))`
/// as a function of the final state, by summing over every path.
pub fn path_sum(kernel: &FiniteKernel, h: &[f64], sigma: f64, mu: &[f64], ys: &[f64]) -> Vec<f64> {
    let e = mu.len();
    let n = ys.len();
    let mut out = vec![0.0; e];
    let total_paths = e.pow(n as u32 + 1);
    for code in 0..total_paths {
        let mut c = code;
        let mut path = Vec::with_capacity(n + 1);
        for _ in 0..=n {
            path.push(c % e);
            c /= e;
        }
        let mut w = mu[path[0]];
        for k in 1..=n {
            w *= kernel.get(path[k - 1], path[k]) * gaussian(ys[k - 1], h[path[k]], sigma);
        }
        out[path[n]] += w;
    }
    out
}

pub fn normalized(w: &[f64]) -> Vec<f64> {
    let s: f64 = w.iter().sum();
    w.iter().map(|x| x / s).collect()
}

/// Joint `Φ_n(θ, x)` by enumeration, flat index `θ * states + x`.
pub fn augmented_oracle(model: &AugmentedModel, ys: &[f64]) -> Vec<f64> {
    let mut joint = Vec::new();
    for i in 0..model.params() {
        let w = path_sum(
            model.family.kernel(i),
            model.obs.h(),
            model.obs.sigma(),
            model.initial.weights(),
            ys,
        );
        joint.extend(w.iter().map(|x| x * model.prior.weight(i)));
    }
    normalized(&joint)
}

pub fn l1(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// `log sup_A (μ(A)/ν(A)) · sup_B (ν(B)/μ(B))` over nonempty subsets of the
/// common support.
pub fn hilbert_by_subsets(mu: &[f64], nu: &[f64]) -> f64 {
    let n = mu.len();
    let (mut up, mut down) = (0.0f64, 0.0f64);
    for mask in 1u32..(1 << n) {
        let (mut a, mut b) = (0.0, 0.0);
        for i in 0..n {
            if mask & (1 << i) != 0 {
                a += mu[i];
                b += nu[i];
            }
        }
        if a > 0.0 && b > 0.0 {
            up = up.max(a / b);
            down = down.max(b / a);
        }
    }
    (up * down).ln()
}

/// Lévy–Prokhorov distance between labeled probability vectors by
/// bisection over `α` with the condition checked on every subset of the
/// first support: `μ(A) <= ν(A^α) + α`, closed `α`-neighborhoods.
pub fn prokhorov_by_subsets(xs: &[f64], mu: &[f64], ys: &[f64], nu: &[f64]) -> f64 {
    let feasible = |alpha: f64| {
        for mask in 1u32..(1 << xs.len()) {
            let mut m = 0.0;
            let mut near = vec![false; ys.len()];
            for i in 0..xs.len() {
                if mask & (1 << i) != 0 {
                    m += mu[i];
                    for (j, y) in ys.iter().enumerate() {
                        if (xs[i] - y).abs() <= alpha {
                            near[j] = true;
                        }
                    }
                }
            }
            let v: f64 = nu.iter().zip(&near).filter(|(_, &n)| n).map(|(w, _)| w).sum();
            if m > v + alpha + 1e-12 {
                return false;
            }
        }
        true
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    if feasible(0.0) {
        return 0.0;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}
