//! Parameterized hidden Markov models on a finite state space.
//!
//! The signal `X_n` moves by a kernel `K_θ` picked from a [`KernelFamily`]
//! indexed by a finite parameter grid; observations are
//! `Y_n = h(X_n) + σ V_n` with standard Gaussian `V_n`. Freezing the
//! parameter as an extra state coordinate gives the augmented model
//! ([`AugmentedModel`]), whose kernel is block diagonal over the grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{FiniteKernel, Matrix};
use crate::measure::DiscreteMeasure;
use crate::metrics::{mixing_constant, tv_slices};
use crate::rng::{CounterRng, StreamTag};

/// Observation values closer than this are treated as the same level.
pub const LEVEL_MERGE_TOL: f64 = 1e-12;
/// Residual target (total variation) for power iteration.
pub const STATIONARY_TOL: f64 = 1e-13;
const STATIONARY_MAX_ITER: usize = 10_000_000;

/// Closed-form parameterized kernels, usable off the grid and with analytic
/// derivatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum KernelTemplate {
    /// `[[1-θ, θ], [r, 1-r]]`.
    TwoStateFlip { return_prob: f64 },
    /// `[[1-θ, θ], [θ, 1-θ]]`.
    SymmetricFlip,
    /// `[[1-s, s], [r, 1-r]]` with `s = 1 / (1 + e^{-θ})`.
    LogisticFlip { return_prob: f64 },
    /// `base + Σ_i θ_i directions[i]`; each direction must have zero row sums.
    Linear {
        base: Vec<Vec<f64>>,
        directions: Vec<Vec<Vec<f64>>>,
    },
}

impl KernelTemplate {
    pub fn states(&self) -> usize {
        match self {
            KernelTemplate::Linear { base, .. } => base.len(),
            _ => 2,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            KernelTemplate::Linear { directions, .. } => directions.len(),
            _ => 1,
        }
    }

    fn check_dim(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(Error::Dimension {
                left: theta.len(),
                right: self.dim(),
            });
        }
        Ok(())
    }

    pub fn kernel(&self, theta: &[f64]) -> Result<FiniteKernel> {
        self.check_dim(theta)?;
        match self {
            KernelTemplate::TwoStateFlip { return_prob: r } => {
                let t = theta[0];
                FiniteKernel::from_rows(&[vec![1.0 - t, t], vec![*r, 1.0 - r]])
            }
            KernelTemplate::SymmetricFlip => {
                let t = theta[0];
                FiniteKernel::from_rows(&[vec![1.0 - t, t], vec![t, 1.0 - t]])
            }
            KernelTemplate::LogisticFlip { return_prob: r } => {
                let s = logistic(theta[0]);
                FiniteKernel::from_rows(&[vec![1.0 - s, s], vec![*r, 1.0 - r]])
            }
            KernelTemplate::Linear { base, directions } => {
                let mut m = Matrix::from_rows(base)?;
                for (t, d) in theta.iter().zip(directions) {
                    m = m.add(&Matrix::from_rows(d)?.scale(*t));
                }
                FiniteKernel::new(m)
            }
        }
    }

    /// `∂K/∂θ_i` at `theta`, one matrix per coordinate.
    pub fn derivative(&self, theta: &[f64]) -> Result<Vec<Matrix>> {
        self.check_dim(theta)?;
        Ok(match self {
            KernelTemplate::TwoStateFlip { .. } => {
                vec![Matrix::from_rows(&[vec![-1.0, 1.0], vec![0.0, 0.0]])?]
            }
            KernelTemplate::SymmetricFlip => {
                vec![Matrix::from_rows(&[vec![-1.0, 1.0], vec![1.0, -1.0]])?]
            }
            KernelTemplate::LogisticFlip { .. } => {
                let s = logistic(theta[0]);
                let ds = s * (1.0 - s);
                vec![Matrix::from_rows(&[vec![-ds, ds], vec![0.0, 0.0]])?]
            }
            KernelTemplate::Linear { directions, .. } => directions
                .iter()
                .map(|d| Matrix::from_rows(d))
                .collect::<Result<_>>()?,
        })
    }
}

fn logistic(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

/// `θ ↦ K_θ` over a finite grid of distinct parameter points, with Euclidean
/// distance between parameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelFamily {
    grid: Vec<Vec<f64>>,
    kernels: Vec<FiniteKernel>,
    #[serde(skip_serializing_if = "Option::is_none")]
    template: Option<KernelTemplate>,
}

impl KernelFamily {
    pub fn new(grid: Vec<Vec<f64>>, kernels: Vec<FiniteKernel>) -> Result<Self> {
        if grid.is_empty() {
            return Err(Error::EmptyInput("parameter grid"));
        }
        if grid.len() != kernels.len() {
            return Err(Error::Dimension {
                left: grid.len(),
                right: kernels.len(),
            });
        }
        let dim = grid[0].len();
        if dim == 0 {
            return Err(Error::InvalidParameter(
                "parameter points need at least one coordinate".into(),
            ));
        }
        if let Some(p) = grid.iter().find(|p| p.len() != dim) {
            return Err(Error::Dimension {
                left: p.len(),
                right: dim,
            });
        }
        if grid.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("grid points must be finite".into()));
        }
        let states = kernels[0].size();
        if let Some(k) = kernels.iter().find(|k| k.size() != states) {
            return Err(Error::Dimension {
                left: k.size(),
                right: states,
            });
        }
        for i in 0..grid.len() {
            for j in (i + 1)..grid.len() {
                if grid[i] == grid[j] {
                    return Err(Error::InvalidParameter(format!(
                        "grid points {i} and {j} coincide"
                    )));
                }
            }
        }
        Ok(Self {
            grid,
            kernels,
            template: None,
        })
    }

    pub fn from_template(template: KernelTemplate, grid: Vec<Vec<f64>>) -> Result<Self> {
        let kernels = grid
            .iter()
            .map(|theta| template.kernel(theta))
            .collect::<Result<Vec<_>>>()?;
        let mut family = Self::new(grid, kernels)?;
        family.template = Some(template);
        Ok(family)
    }

    /// One-dimensional grid of `points` evenly spaced values on `[lo, hi]`.
    pub fn uniform_grid(lo: f64, hi: f64, points: usize) -> Vec<Vec<f64>> {
        if points == 1 {
            return vec![vec![lo]];
        }
        // interpolating hits both endpoints and the midpoint exactly
        let last = (points - 1) as f64;
        (0..points)
            .map(|i| {
                let t = i as f64 / last;
                vec![lo * (1.0 - t) + hi * t]
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.grid[0].len()
    }

    pub fn states(&self) -> usize {
        self.kernels[0].size()
    }

    pub fn grid(&self) -> &[Vec<f64>] {
        &self.grid
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.grid[i]
    }

    pub fn kernels(&self) -> &[FiniteKernel] {
        &self.kernels
    }

    pub fn kernel(&self, i: usize) -> &FiniteKernel {
        &self.kernels[i]
    }

    pub fn template(&self) -> Option<&KernelTemplate> {
        self.template.as_ref()
    }

    pub fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.len() {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: self.len(),
            });
        }
        Ok(())
    }

    /// Euclidean distance `d_Θ` between grid points `i` and `j`.
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        euclidean(&self.grid[i], &self.grid[j])
    }

    /// Kernel at an arbitrary parameter; needs a template.
    pub fn kernel_at(&self, theta: &[f64]) -> Result<FiniteKernel> {
        match &self.template {
            Some(t) => t.kernel(theta),
            None => Err(Error::NotApplicable(
                "family has no template; kernels exist only on grid points".into(),
            )),
        }
    }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// `Y = h(X) + σ V` with standard Gaussian `V`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationModel {
    h: Vec<f64>,
    sigma: f64,
}

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

impl ObservationModel {
    pub fn new(h: Vec<f64>, sigma: f64) -> Result<Self> {
        if h.is_empty() {
            return Err(Error::EmptyInput("observation map"));
        }
        if h.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("h values must be finite".into()));
        }
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "sigma must be positive, got {sigma}"
            )));
        }
        Ok(Self { h, sigma })
    }

    pub fn h(&self) -> &[f64] {
        &self.h
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn states(&self) -> usize {
        self.h.len()
    }

    /// `g(y - h(x))`.
    pub fn density(&self, y: f64, x: usize) -> f64 {
        self.log_density(y, x).exp()
    }

    pub fn log_density(&self, y: f64, x: usize) -> f64 {
        let z = (y - self.h[x]) / self.sigma;
        -0.5 * z * z - LN_SQRT_2PI - self.sigma.ln()
    }

    /// `(g(y - h(x)))_x`.
    pub fn likelihoods(&self, y: f64) -> Vec<f64> {
        (0..self.h.len()).map(|x| self.density(y, x)).collect()
    }

    pub fn log_likelihoods(&self, y: f64) -> Vec<f64> {
        (0..self.h.len()).map(|x| self.log_density(y, x)).collect()
    }

    /// Distinct observation levels (sorted) and the level index of each state.
    pub fn levels(&self) -> (Vec<f64>, Vec<usize>) {
        let mut sorted = self.h.clone();
        sorted.sort_by(f64::total_cmp);
        let mut levels: Vec<f64> = Vec::new();
        for v in sorted {
            if levels.last().is_none_or(|&l| (v - l).abs() > LEVEL_MERGE_TOL) {
                levels.push(v);
            }
        }
        let assign = self
            .h
            .iter()
            .map(|&v| {
                levels
                    .iter()
                    .position(|&l| (v - l).abs() <= LEVEL_MERGE_TOL)
                    .expect("every value has a level")
            })
            .collect();
        (levels, assign)
    }
}

/// System with the parameter frozen into the state: kernels, prior `u` over
/// the grid, observation model and initial state law `μ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AugmentedModel {
    pub family: KernelFamily,
    pub prior: DiscreteMeasure,
    pub obs: ObservationModel,
    pub initial: DiscreteMeasure,
}

impl AugmentedModel {
    pub fn new(
        family: KernelFamily,
        prior: DiscreteMeasure,
        obs: ObservationModel,
        initial: DiscreteMeasure,
    ) -> Result<Self> {
        if prior.len() != family.len() {
            return Err(Error::Dimension {
                left: prior.len(),
                right: family.len(),
            });
        }
        if !prior.is_probability() {
            return Err(Error::InvalidPrior(format!(
                "prior mass is {}, expected 1",
                prior.total_mass()
            )));
        }
        let states = family.states();
        for len in [initial.len(), obs.states()] {
            if len != states {
                return Err(Error::Dimension { left: len, right: states });
            }
        }
        if !initial.is_probability() {
            return Err(Error::InvalidMeasure(format!(
                "initial law has mass {}, expected 1",
                initial.total_mass()
            )));
        }
        Ok(Self {
            family,
            prior,
            obs,
            initial,
        })
    }

    pub fn states(&self) -> usize {
        self.family.states()
    }

    pub fn params(&self) -> usize {
        self.family.len()
    }

    pub fn with_prior(&self, prior: DiscreteMeasure) -> Result<Self> {
        Self::new(self.family.clone(), prior, self.obs.clone(), self.initial.clone())
    }

    pub fn with_initial(&self, initial: DiscreteMeasure) -> Result<Self> {
        Self::new(self.family.clone(), self.prior.clone(), self.obs.clone(), initial)
    }

    /// Same model with the prior collapsed onto grid point `index`.
    pub fn with_point_prior(&self, index: usize) -> Result<Self> {
        self.family.check_index(index)?;
        self.with_prior(DiscreteMeasure::point_mass(self.params(), index)?)
    }
}

/// Stationary law by power iteration; refuses non-mixing kernels.
pub fn stationary_dist(kernel: &FiniteKernel) -> Result<DiscreteMeasure> {
    if !mixing_constant(kernel).is_mixing {
        return Err(Error::NonErgodic);
    }
    stationary_dist_unchecked(kernel)
}

/// Power iteration from the uniform law without the mixing pre-check; fails
/// with [`Error::NoConvergence`] if the chain does not settle.
pub fn stationary_dist_unchecked(kernel: &FiniteKernel) -> Result<DiscreteMeasure> {
    let n = kernel.size();
    let mut pi = vec![1.0 / n as f64; n];
    for _ in 0..STATIONARY_MAX_ITER {
        let mut next = kernel.propagate(&pi);
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= total);
        let residual = tv_slices(&next, &pi);
        pi = next;
        if residual < STATIONARY_TOL {
            return DiscreteMeasure::new(pi);
        }
    }
    Err(Error::NoConvergence(STATIONARY_MAX_ITER))
}

/// Finite Gaussian mixture with a common standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture {
    pub means: Vec<f64>,
    pub weights: Vec<f64>,
    pub sigma: f64,
}

impl GaussianMixture {
    pub fn density(&self, y: f64) -> f64 {
        self.means
            .iter()
            .zip(&self.weights)
            .map(|(m, w)| {
                let z = (y - m) / self.sigma;
                w * (-0.5 * z * z - LN_SQRT_2PI - self.sigma.ln()).exp()
            })
            .sum()
    }
}

/// `μ ∘ h⁻¹`: the law of `h(X)` for `X ~ mu`, labeled by observation level.
pub fn pushforward(mu: &DiscreteMeasure, obs: &ObservationModel) -> Result<DiscreteMeasure> {
    if mu.len() != obs.states() {
        return Err(Error::Dimension {
            left: mu.len(),
            right: obs.states(),
        });
    }
    let (levels, assign) = obs.levels();
    let mut w = vec![0.0; levels.len()];
    for (x, &l) in assign.iter().enumerate() {
        w[l] += mu.weight(x);
    }
    DiscreteMeasure::new(w)?.with_labels(levels)
}

/// Limiting observation law `ν_θ = (π_θ ∘ h⁻¹) * g`.
pub fn nu_theta(kernel: &FiniteKernel, obs: &ObservationModel) -> Result<GaussianMixture> {
    let pi = stationary_dist(kernel)?;
    let push = pushforward(&pi, obs)?;
    Ok(GaussianMixture {
        means: push.labels().expect("pushforward is labeled").to_vec(),
        weights: push.into_weights(),
        sigma: obs.sigma(),
    })
}

/// Grid pairs `(i, j)`, `i < j`, whose stationary pushforwards are within
/// `tol` in total variation. An empty result certifies identifiability on the
/// grid at that tolerance.
pub fn identifiability_scan(
    family: &KernelFamily,
    obs: &ObservationModel,
    tol: f64,
) -> Result<Vec<(usize, usize)>> {
    let pushes = family
        .kernels()
        .iter()
        .map(|k| pushforward(&stationary_dist(k)?, obs))
        .collect::<Result<Vec<_>>>()?;
    let mut pairs = Vec::new();
    for i in 0..pushes.len() {
        for j in (i + 1)..pushes.len() {
            if tv_slices(pushes[i].weights(), pushes[j].weights()) < tol {
                pairs.push((i, j));
            }
        }
    }
    Ok(pairs)
}

/// A simulated path of the signal and its observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// `X_0`, drawn from the initial law.
    pub initial_state: usize,
    /// `X_1, ..., X_n`.
    pub states: Vec<usize>,
    /// `Y_1, ..., Y_n`.
    pub observations: Vec<f64>,
    pub true_param_index: usize,
    pub seed: u64,
}

/// Simulates `n` steps under grid point `true_param_index`.
///
/// Step `k` reads block `k` of the `(seed, Simulate, 0)` stream: one word for
/// the state draw and two for the observation noise.
pub fn simulate(
    model: &AugmentedModel,
    true_param_index: usize,
    n: usize,
    seed: u64,
) -> Result<Trajectory> {
    if n == 0 {
        return Err(Error::EmptyInput("trajectory length"));
    }
    model.family.check_index(true_param_index)?;
    let kernel = model.family.kernel(true_param_index);
    let mut rng = CounterRng::at(seed, StreamTag::Simulate, 0, 0);
    let initial_state = rng.categorical(model.initial.weights());
    let mut x = initial_state;
    let mut states = Vec::with_capacity(n);
    let mut observations = Vec::with_capacity(n);
    for k in 1..=n {
        rng.seek(k as u64);
        x = rng.categorical(kernel.row(x));
        let y = model.obs.h()[x] + model.obs.sigma() * rng.standard_normal();
        states.push(x);
        observations.push(y);
    }
    Ok(Trajectory {
        initial_state,
        states,
        observations,
        true_param_index,
        seed,
    })
}
