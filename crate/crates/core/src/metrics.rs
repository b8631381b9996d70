//! Distances between finite measures and contraction/mixing coefficients of
//! kernels.
//!
//! Total variation uses the full-norm convention `Σ |μ_j - ν_j|`, so two
//! probability measures are at most 2 apart.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::FiniteKernel;
use crate::measure::DiscreteMeasure;

/// Absolute tolerance of [`prokhorov_distance`].
pub const PROKHOROV_TOL: f64 = 1e-6;

fn check_sizes(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<()> {
    if mu.len() != nu.len() {
        return Err(Error::Dimension {
            left: mu.len(),
            right: nu.len(),
        });
    }
    Ok(())
}

pub fn tv_norm(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    check_sizes(mu, nu)?;
    Ok(tv_slices(mu.weights(), nu.weights()))
}

/// `Σ |a_j - b_j|` on raw weight vectors of equal length.
pub fn tv_slices(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

pub fn hilbert_metric(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    check_sizes(mu, nu)?;
    Ok(hilbert_slices(mu.weights(), nu.weights()))
}

/// Hilbert projective distance on raw weight vectors.
///
/// Comparable measures on a finite set are exactly those with the same zero
/// set; for them the set-wise sup/inf of `μ(A)/ν(A)` is attained on atoms.
/// Returns `+∞` for non-comparable pairs and `0` when both are zero.
pub fn hilbert_slices(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut max_ratio = f64::NEG_INFINITY;
    let mut min_ratio = f64::INFINITY;
    for (&x, &y) in a.iter().zip(b) {
        match (x > 0.0, y > 0.0) {
            (true, true) => {
                let r = x / y;
                max_ratio = max_ratio.max(r);
                min_ratio = min_ratio.min(r);
            }
            (false, false) => {}
            _ => return f64::INFINITY,
        }
    }
    if max_ratio == f64::NEG_INFINITY {
        // both identically zero
        return 0.0;
    }
    (max_ratio / min_ratio).ln()
}

/// Birkhoff contraction coefficient `τ(K) = (1 - √φ)/(1 + √φ)` where `φ` is
/// the smallest cross-ratio `K(i,k)K(j,l) / (K(j,k)K(i,l))`.
///
/// Rows with different zero patterns make the projective diameter infinite
/// and give `τ = 1`; identical rows give `τ = 0`.
pub fn birkhoff_tau(kernel: &FiniteKernel) -> f64 {
    let n = kernel.size();
    let mut phi: f64 = 1.0;
    for i in 0..n {
        for j in (i + 1)..n {
            phi = phi.min(row_pair_cross_ratio(kernel.row(i), kernel.row(j)));
            if phi == 0.0 {
                return 1.0;
            }
        }
    }
    let s = phi.sqrt();
    (1.0 - s) / (1.0 + s)
}

/// `min_k r_k / max_k r_k` with `r_k = a_k / b_k`; zero when the zero sets differ.
fn row_pair_cross_ratio(a: &[f64], b: &[f64]) -> f64 {
    let mut max_ratio = f64::NEG_INFINITY;
    let mut min_ratio = f64::INFINITY;
    for (&x, &y) in a.iter().zip(b) {
        match (x > 0.0, y > 0.0) {
            (true, true) => {
                let r = x / y;
                max_ratio = max_ratio.max(r);
                min_ratio = min_ratio.min(r);
            }
            (false, false) => {}
            _ => return 0.0,
        }
    }
    if max_ratio == f64::NEG_INFINITY {
        return 1.0;
    }
    min_ratio / max_ratio
}

/// Witness for the mixing condition `ε λ(A) <= K(x, A) <= λ(A) / ε`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingCertificate {
    pub epsilon: f64,
    pub lambda: DiscreteMeasure,
    pub is_mixing: bool,
}

impl MixingCertificate {
    /// Checks the sandwich inequality atom by atom with absolute slack `tol`.
    pub fn holds_for(&self, kernel: &FiniteKernel, tol: f64) -> bool {
        if !self.is_mixing {
            return self.epsilon == 0.0;
        }
        let eps = self.epsilon;
        (0..kernel.size()).all(|x| {
            kernel.row(x).iter().enumerate().all(|(j, &k)| {
                let l = self.lambda.weight(j);
                eps * l <= k + tol && k <= l / eps + tol
            })
        })
    }
}

/// Largest mixing constant over all reference measures.
///
/// With column extrema `m_j = min_x K(x,j)` and `M_j = max_x K(x,j)`, the
/// condition holds for `ε` iff `ε² <= m_j / M_j` for every column with
/// `M_j > 0`, so `ε* = min_j √(m_j/M_j)` with witness `λ_j = √(m_j M_j)`.
pub fn mixing_constant(kernel: &FiniteKernel) -> MixingCertificate {
    let n = kernel.size();
    let mut epsilon: f64 = 1.0;
    let mut lambda = Vec::with_capacity(n);
    for j in 0..n {
        let (m, big_m) = column_extrema(kernel, j);
        lambda.push((m * big_m).sqrt());
        if big_m > 0.0 {
            epsilon = epsilon.min((m / big_m).sqrt());
        }
    }
    let lambda = DiscreteMeasure::new(lambda).expect("column extrema are nonnegative");
    let is_mixing = epsilon > 0.0;
    MixingCertificate {
        epsilon: if is_mixing { epsilon } else { 0.0 },
        lambda,
        is_mixing,
    }
}

/// `(min_x K(x, j), max_x K(x, j))`.
pub fn column_extrema(kernel: &FiniteKernel, j: usize) -> (f64, f64) {
    (0..kernel.size())
        .map(|x| kernel.get(x, j))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        })
}

/// Lévy–Prokhorov distance between two probability measures on labeled
/// supports of the real line, to absolute accuracy [`PROKHOROV_TOL`].
///
/// Bisects on `α ∈ [0, 1]`. For a fixed `α` the condition
/// `μ(A) <= ν(A^α) + α` for all `A` is equivalent to a transport plan moving
/// at least `1 - α` of mass along pairs within distance `α`, which is
/// decided by a max-flow on the bipartite support graph.
pub fn prokhorov_distance(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    let xs = mu.labels().ok_or(Error::MissingLabels)?;
    let ys = nu.labels().ok_or(Error::MissingLabels)?;
    for m in [mu, nu] {
        if !m.is_probability() {
            return Err(Error::InvalidMeasure(
                "Prokhorov distance needs probability measures".into(),
            ));
        }
    }
    let feasible = |alpha: f64| {
        prokhorov_feasible(xs, mu.weights(), ys, nu.weights(), alpha)
            && prokhorov_feasible(ys, nu.weights(), xs, mu.weights(), alpha)
    };
    if feasible(0.0) {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while hi - lo > PROKHOROV_TOL / 4.0 {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

fn prokhorov_feasible(xs: &[f64], p: &[f64], ys: &[f64], q: &[f64], alpha: f64) -> bool {
    let (n, m) = (xs.len(), ys.len());
    let source = n + m;
    let sink = source + 1;
    let mut net = FlowNetwork::new(n + m + 2);
    for (i, &w) in p.iter().enumerate() {
        if w > 0.0 {
            net.add_edge(source, i, w);
        }
    }
    for (j, &w) in q.iter().enumerate() {
        if w > 0.0 {
            net.add_edge(n + j, sink, w);
        }
    }
    for (i, &x) in xs.iter().enumerate() {
        if p[i] <= 0.0 {
            continue;
        }
        for (j, &y) in ys.iter().enumerate() {
            if q[j] > 0.0 && (x - y).abs() <= alpha {
                net.add_edge(i, n + j, f64::INFINITY);
            }
        }
    }
    net.max_flow(source, sink) >= 1.0 - alpha - 1e-12
}

/// Dinic's algorithm on real capacities.
struct FlowNetwork {
    head: Vec<Vec<usize>>,
    to: Vec<usize>,
    cap: Vec<f64>,
}

const FLOW_EPS: f64 = 1e-15;

impl FlowNetwork {
    fn new(nodes: usize) -> Self {
        Self {
            head: vec![Vec::new(); nodes],
            to: Vec::new(),
            cap: Vec::new(),
        }
    }

    fn add_edge(&mut self, u: usize, v: usize, c: f64) {
        self.head[u].push(self.to.len());
        self.to.push(v);
        self.cap.push(c);
        self.head[v].push(self.to.len());
        self.to.push(u);
        self.cap.push(0.0);
    }

    fn levels(&self, s: usize) -> Vec<i64> {
        let mut level = vec![-1; self.head.len()];
        let mut queue = std::collections::VecDeque::new();
        level[s] = 0;
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            for &e in &self.head[u] {
                let v = self.to[e];
                if self.cap[e] > FLOW_EPS && level[v] < 0 {
                    level[v] = level[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        level
    }

    fn augment(&mut self, u: usize, t: usize, pushed: f64, level: &[i64], it: &mut [usize]) -> f64 {
        if u == t {
            return pushed;
        }
        while it[u] < self.head[u].len() {
            let e = self.head[u][it[u]];
            let v = self.to[e];
            if self.cap[e] > FLOW_EPS && level[v] == level[u] + 1 {
                let got = self.augment(v, t, pushed.min(self.cap[e]), level, it);
                if got > FLOW_EPS {
                    self.cap[e] -= got;
                    self.cap[e ^ 1] += got;
                    return got;
                }
            }
            it[u] += 1;
        }
        0.0
    }

    fn max_flow(&mut self, s: usize, t: usize) -> f64 {
        let mut flow = 0.0;
        loop {
            let level = self.levels(s);
            if level[t] < 0 {
                return flow;
            }
            let mut it = vec![0; self.head.len()];
            loop {
                let pushed = self.augment(s, t, f64::INFINITY, &level, &mut it);
                if pushed <= FLOW_EPS {
                    break;
                }
                flow += pushed;
            }
        }
    }
}
