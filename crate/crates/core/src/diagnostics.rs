//! Stability and consistency diagnostics computed from exact filters:
//! one-step errors and the total-error bounds they imply, kernel derivatives
//! and the derived conditional bounds, posterior concentration around the
//! true parameter, and the stability gap between the augmented filter and
//! the filter that knows the parameter.
//!
//! Every routine here consumes the exact grid filter, never particle
//! estimates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{augmented_step, filter_step, state_marginal, AugmentedFilterState, FilterState};
use crate::kernel::{FiniteKernel, Matrix};
use crate::logspace::log_sum_exp;
use crate::measure::DiscreteMeasure;
use crate::metrics::{hilbert_slices, mixing_constant, tv_slices};
use crate::model::{euclidean, identifiability_scan, simulate, AugmentedModel, KernelFamily, ObservationModel};

/// Slack allowed before a bound comparison counts as a violation.
pub const BOUND_SLACK: f64 = 1e-9;
/// Default finite-difference step.
pub const DEFAULT_FD_STEP: f64 = 1e-4;
/// Default tolerance for the identifiability pre-check.
pub const DEFAULT_IDENTIFIABILITY_TOL: f64 = 1e-6;
/// Samples along the segment `[α, θ]` when the family can be evaluated off-grid.
const SEGMENT_SAMPLES: usize = 64;

fn ln3() -> f64 {
    3f64.ln()
}

/// Per-step discrepancies between the `θ` filter and one step of the `α`
/// optimal kernel applied to the previous `θ` filter.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepErrorSeries {
    pub hilbert: Vec<f64>,
    pub tv: Vec<f64>,
    pub theta_index: usize,
    pub alpha_index: usize,
    /// Mixing constant of `K_α`.
    pub epsilon: f64,
    /// False when `K_α` is not mixing; the total-error bounds do not apply.
    pub bounds_applicable: bool,
}

fn check_obs_len(family: &KernelFamily, obs: &ObservationModel, mu: &DiscreteMeasure) -> Result<()> {
    for len in [obs.states(), mu.len()] {
        if len != family.states() {
            return Err(Error::Dimension {
                left: len,
                right: family.states(),
            });
        }
    }
    Ok(())
}

pub fn step_errors(
    family: &KernelFamily,
    obs: &ObservationModel,
    mu: &DiscreteMeasure,
    theta_idx: usize,
    alpha_idx: usize,
    ys: &[f64],
) -> Result<StepErrorSeries> {
    family.check_index(theta_idx)?;
    family.check_index(alpha_idx)?;
    check_obs_len(family, obs, mu)?;
    if ys.is_empty() {
        return Err(Error::EmptyInput("observation sequence"));
    }
    let k_theta = family.kernel(theta_idx);
    let k_alpha = family.kernel(alpha_idx);
    let mut prev = FilterState::initial(mu.clone());
    let mut hilbert = Vec::with_capacity(ys.len());
    let mut tv = Vec::with_capacity(ys.len());
    for &y in ys {
        let next = filter_step(k_theta, obs, &prev, y)?;
        let alt = filter_step(k_alpha, obs, &prev, y)?;
        hilbert.push(hilbert_slices(next.dist.weights(), alt.dist.weights()));
        tv.push(tv_slices(next.dist.weights(), alt.dist.weights()));
        prev = next;
    }
    let cert = mixing_constant(k_alpha);
    Ok(StepErrorSeries {
        hilbert,
        tv,
        theta_index: theta_idx,
        alpha_index: alpha_idx,
        epsilon: cert.epsilon,
        bounds_applicable: cert.is_mixing,
    })
}

/// `‖Ψ_n^θ(μ) - Ψ_n^α(μ)‖_tv` for `n = 1..N`.
pub fn total_errors(
    family: &KernelFamily,
    obs: &ObservationModel,
    mu: &DiscreteMeasure,
    theta_idx: usize,
    alpha_idx: usize,
    ys: &[f64],
) -> Result<Vec<f64>> {
    family.check_index(theta_idx)?;
    family.check_index(alpha_idx)?;
    check_obs_len(family, obs, mu)?;
    let mut a = FilterState::initial(mu.clone());
    let mut b = a.clone();
    let mut out = Vec::with_capacity(ys.len());
    for &y in ys {
        a = filter_step(family.kernel(theta_idx), obs, &a, y)?;
        b = filter_step(family.kernel(alpha_idx), obs, &b, y)?;
        out.push(tv_slices(a.dist.weights(), b.dist.weights()));
    }
    Ok(out)
}

/// Total-error bounds derived from the step errors and their check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub epsilon: f64,
    pub sup_total_error: f64,
    pub sup_step_h: f64,
    pub sup_step_tv: f64,
    /// `2 / (ε² log 3) · sup δ^H`.
    pub bound_h: f64,
    /// `(1 + 2 / (ε⁴ log 3)) · sup δ^tv`.
    pub bound_tv: f64,
    /// Violations of either total-error bound.
    pub violations: usize,
    /// Steps where `δ^tv_n > (2 / log 3) δ^H_n`.
    pub cross_violations: usize,
}

pub fn bound_check(series: &StepErrorSeries, total_errors: &[f64]) -> Result<BoundReport> {
    if !series.bounds_applicable || series.epsilon <= 0.0 {
        return Err(Error::NotApplicable(
            "K_alpha is not mixing (epsilon = 0)".into(),
        ));
    }
    let eps = series.epsilon;
    let sup = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    let sup_total_error = sup(total_errors);
    let sup_step_h = sup(&series.hilbert);
    let sup_step_tv = sup(&series.tv);
    let bound_h = 2.0 / (eps * eps * ln3()) * sup_step_h;
    let bound_tv = (1.0 + 2.0 / (eps.powi(4) * ln3())) * sup_step_tv;
    let violations = [bound_h, bound_tv]
        .iter()
        .filter(|&&b| sup_total_error > b + BOUND_SLACK)
        .count();
    let cross_violations = series
        .tv
        .iter()
        .zip(&series.hilbert)
        .filter(|(t, h)| h.is_finite() && **t > 2.0 / ln3() * **h + BOUND_SLACK)
        .count();
    Ok(BoundReport {
        epsilon: eps,
        sup_total_error,
        sup_step_h,
        sup_step_tv,
        bound_h,
        bound_tv,
        violations,
        cross_violations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeMethod {
    /// Analytic when the family has a template, finite differences otherwise.
    Auto,
    Analytic,
    FiniteDifference,
}

/// `∂K_θ/∂θ_i` for each parameter coordinate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelDerivative {
    pub matrices: Vec<Matrix>,
    pub method: DerivativeMethod,
    /// Set when some coordinate had to use a one-sided difference.
    pub one_sided: bool,
}

impl KernelDerivative {
    /// Derivative along `direction` (`Σ_i u_i ∂K/∂θ_i`).
    pub fn directional(&self, direction: &[f64]) -> Matrix {
        let n = self.matrices[0].size();
        self.matrices
            .iter()
            .zip(direction)
            .fold(Matrix::zeros(n), |acc, (m, u)| acc.add(&m.scale(*u)))
    }

    pub fn max_row_sum(&self) -> f64 {
        self.matrices
            .iter()
            .flat_map(|m| m.row_sums())
            .map(f64::abs)
            .fold(0.0, f64::max)
    }
}

pub fn kernel_derivative(family: &KernelFamily, theta_idx: usize, h_fd: f64) -> Result<KernelDerivative> {
    kernel_derivative_with(family, theta_idx, h_fd, DerivativeMethod::Auto)
}

pub fn kernel_derivative_with(
    family: &KernelFamily,
    theta_idx: usize,
    h_fd: f64,
    method: DerivativeMethod,
) -> Result<KernelDerivative> {
    family.check_index(theta_idx)?;
    kernel_derivative_at(family, family.point(theta_idx), Some(theta_idx), h_fd, method)
}

fn kernel_derivative_at(
    family: &KernelFamily,
    theta: &[f64],
    grid_idx: Option<usize>,
    h_fd: f64,
    method: DerivativeMethod,
) -> Result<KernelDerivative> {
    if !(h_fd > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "finite-difference step must be positive, got {h_fd}"
        )));
    }
    let out = match (method, family.template()) {
        (DerivativeMethod::Auto | DerivativeMethod::Analytic, Some(t)) => KernelDerivative {
            matrices: t.derivative(theta)?,
            method: DerivativeMethod::Analytic,
            one_sided: false,
        },
        (DerivativeMethod::Analytic, None) => {
            return Err(Error::NotApplicable(
                "analytic derivative needs a kernel template".into(),
            ))
        }
        (_, Some(_)) => template_fd(family, theta, h_fd)?,
        (_, None) => {
            let idx = grid_idx.ok_or_else(|| {
                Error::NotApplicable("off-grid derivative needs a kernel template".into())
            })?;
            grid_fd(family, idx)?
        }
    };
    if out.max_row_sum() > 1e-8 {
        return Err(Error::InvalidKernel(format!(
            "derivative rows sum to {}, expected 0",
            out.max_row_sum()
        )));
    }
    Ok(out)
}

fn template_fd(family: &KernelFamily, theta: &[f64], h: f64) -> Result<KernelDerivative> {
    let mut one_sided = false;
    let mut matrices = Vec::with_capacity(theta.len());
    for c in 0..theta.len() {
        let shifted = |delta: f64| {
            let mut p = theta.to_vec();
            p[c] += delta;
            family.kernel_at(&p)
        };
        let m = match (shifted(h), shifted(-h)) {
            (Ok(up), Ok(down)) => up.matrix().sub(down.matrix()).scale(0.5 / h),
            (Ok(up), Err(_)) => {
                one_sided = true;
                up.matrix().sub(family.kernel_at(theta)?.matrix()).scale(1.0 / h)
            }
            (Err(_), Ok(down)) => {
                one_sided = true;
                family.kernel_at(theta)?.matrix().sub(down.matrix()).scale(1.0 / h)
            }
            (Err(e), Err(_)) => return Err(e),
        };
        matrices.push(m);
    }
    Ok(KernelDerivative {
        matrices,
        method: DerivativeMethod::FiniteDifference,
        one_sided,
    })
}

/// Nearest grid points below and above `idx` along coordinate `c`, among
/// points that agree with it in every other coordinate.
fn grid_neighbors(family: &KernelFamily, idx: usize, c: usize) -> (Option<usize>, Option<usize>) {
    let p = family.point(idx);
    let mut below: Option<(usize, f64)> = None;
    let mut above: Option<(usize, f64)> = None;
    for (j, q) in family.grid().iter().enumerate() {
        if j == idx {
            continue;
        }
        let aligned = q
            .iter()
            .zip(p)
            .enumerate()
            .all(|(k, (a, b))| k == c || (a - b).abs() <= 1e-12);
        if !aligned {
            continue;
        }
        let d = q[c] - p[c];
        if d < 0.0 && below.is_none_or(|(_, bd)| d > bd) {
            below = Some((j, d));
        } else if d > 0.0 && above.is_none_or(|(_, ad)| d < ad) {
            above = Some((j, d));
        }
    }
    (below.map(|b| b.0), above.map(|a| a.0))
}

fn grid_fd(family: &KernelFamily, idx: usize) -> Result<KernelDerivative> {
    let mut one_sided = false;
    let mut matrices = Vec::with_capacity(family.dim());
    for c in 0..family.dim() {
        let (lo, hi) = match grid_neighbors(family, idx, c) {
            (Some(lo), Some(hi)) => (lo, hi),
            (Some(lo), None) => {
                one_sided = true;
                (lo, idx)
            }
            (None, Some(hi)) => {
                one_sided = true;
                (idx, hi)
            }
            (None, None) => {
                return Err(Error::NotApplicable(format!(
                    "grid point {idx} has no neighbor along coordinate {c}"
                )))
            }
        };
        let span = family.point(hi)[c] - family.point(lo)[c];
        matrices.push(
            family
                .kernel(hi)
                .matrix()
                .sub(family.kernel(lo).matrix())
                .scale(1.0 / span),
        );
    }
    Ok(KernelDerivative {
        matrices,
        method: DerivativeMethod::FiniteDifference,
        one_sided,
    })
}

/// `Λ(x) = max_{x'} |L(x', x)| / K(x', x)` with `0/0 = 0` and `+∞` where
/// `L(x', x) ≠ 0 = K(x', x)`.
pub fn lambda_bound(derivative: &Matrix, kernel: &FiniteKernel) -> Vec<f64> {
    let n = kernel.size();
    (0..n)
        .map(|x| {
            (0..n).fold(0.0_f64, |acc, xp| {
                let l = derivative.get(xp, x).abs();
                let k = kernel.get(xp, x);
                if l == 0.0 {
                    acc
                } else if k > 0.0 {
                    acc.max(l / k)
                } else {
                    f64::INFINITY
                }
            })
        })
        .collect()
}

/// `g(y - h(x)) / max_z g(y - h(z))`; ratios of integrals against it equal
/// those against `g` and it never underflows to all zeros.
fn scaled_likelihoods(obs: &ObservationModel, y: f64) -> Vec<f64> {
    let logs = obs.log_likelihoods(y);
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    logs.iter().map(|l| (l - max).exp()).collect()
}

/// `(Ψ(K'(Λ g)) / Ψ(K' g), Ψ(|L'| g) / Ψ(K' g))` for one step.
fn conditional_ratios(prev: &[f64], kernel: &FiniteKernel, deriv: &Matrix, lambda: &[f64], g: &[f64]) -> (f64, f64) {
    let n = kernel.size();
    let (mut num_lambda, mut num_abs, mut den) = (0.0, 0.0, 0.0);
    for xp in 0..n {
        let w = prev[xp];
        if w == 0.0 {
            continue;
        }
        for x in 0..n {
            let kg = kernel.get(xp, x) * g[x];
            den += w * kg;
            if kg > 0.0 {
                num_lambda += w * kg * lambda[x];
            }
            num_abs += w * deriv.get(xp, x).abs() * g[x];
        }
    }
    (num_lambda / den, num_abs / den)
}

/// Conditional derivative bounds along the `θ` filter, evaluated with the
/// kernel and derivative at `θ'`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivativeBoundSeries {
    /// `E_{μ,(n,θ,θ')}[Λ_{θ'}(X_n) | Y_1..Y_n]`.
    pub lambda_form: Vec<f64>,
    /// `Ψ_{n-1}^θ(|L_{θ'}| g_n) / Ψ_{n-1}^θ(K_{θ'} g_n)`.
    pub ratio_form: Vec<f64>,
    pub running_sup_lambda: Vec<f64>,
    pub running_sup_ratio: Vec<f64>,
}

fn unit_direction(family: &KernelFamily, from: usize, to: usize) -> Vec<f64> {
    let d = family.distance(from, to);
    if d == 0.0 {
        let mut u = vec![0.0; family.dim()];
        u[0] = 1.0;
        return u;
    }
    family
        .point(to)
        .iter()
        .zip(family.point(from))
        .map(|(a, b)| (a - b) / d)
        .collect()
}

/// Derivative bound series for `θ = theta_idx`, `θ' = thetaprime_idx`.
/// Multi-dimensional parameters use the derivative along `θ → θ'`.
pub fn derivative_bound_series(
    model: &AugmentedModel,
    theta_idx: usize,
    thetaprime_idx: usize,
    ys: &[f64],
) -> Result<DerivativeBoundSeries> {
    let family = &model.family;
    family.check_index(theta_idx)?;
    family.check_index(thetaprime_idx)?;
    let deriv = kernel_derivative(family, thetaprime_idx, DEFAULT_FD_STEP)?
        .directional(&unit_direction(family, theta_idx, thetaprime_idx));
    let k_prime = family.kernel(thetaprime_idx);
    let lambda = lambda_bound(&deriv, k_prime);
    if lambda.iter().any(|l| l.is_infinite()) {
        return Err(Error::NotApplicable(
            "Lambda is infinite: derivative not absolutely continuous w.r.t. the kernel".into(),
        ));
    }
    let mut prev = FilterState::initial(model.initial.clone());
    let mut out = DerivativeBoundSeries {
        lambda_form: Vec::with_capacity(ys.len()),
        ratio_form: Vec::with_capacity(ys.len()),
        running_sup_lambda: Vec::with_capacity(ys.len()),
        running_sup_ratio: Vec::with_capacity(ys.len()),
    };
    let (mut sup_l, mut sup_r) = (0.0_f64, 0.0_f64);
    for &y in ys {
        let g = scaled_likelihoods(&model.obs, y);
        let (l, r) = conditional_ratios(prev.dist.weights(), k_prime, &deriv, &lambda, &g);
        sup_l = sup_l.max(l);
        sup_r = sup_r.max(r);
        out.lambda_form.push(l);
        out.ratio_form.push(r);
        out.running_sup_lambda.push(sup_l);
        out.running_sup_ratio.push(sup_r);
        prev = filter_step(family.kernel(theta_idx), &model.obs, &prev, y)?;
    }
    Ok(out)
}

/// Kernel and directional derivative at a point of the segment `[α, θ]`.
struct SegmentPoint {
    kernel: FiniteKernel,
    derivative: Matrix,
}

/// Grid points on the segment `[α, θ]`, plus evenly spaced off-grid samples
/// when the family has a template.
fn segment_points(family: &KernelFamily, alpha_idx: usize, theta_idx: usize) -> Result<Vec<SegmentPoint>> {
    let a = family.point(alpha_idx);
    let t = family.point(theta_idx);
    let dist = euclidean(a, t);
    let u = unit_direction(family, alpha_idx, theta_idx);
    let mut out = Vec::new();
    for (j, p) in family.grid().iter().enumerate() {
        // p = a + s (t - a) with s in [0, 1]
        let s = if dist == 0.0 {
            if j == alpha_idx { 0.0 } else { continue }
        } else {
            p.iter().zip(a).zip(&u).map(|((pi, ai), ui)| (pi - ai) * ui).sum::<f64>() / dist
        };
        let on_line = p
            .iter()
            .zip(a)
            .zip(t)
            .all(|((pi, ai), ti)| (pi - (ai + s * (ti - ai))).abs() <= 1e-12);
        if on_line && (-1e-12..=1.0 + 1e-12).contains(&s) {
            let d = kernel_derivative(family, j, DEFAULT_FD_STEP)?;
            out.push(SegmentPoint {
                kernel: family.kernel(j).clone(),
                derivative: d.directional(&u),
            });
        }
    }
    if let Some(template) = family.template() {
        for k in 1..SEGMENT_SAMPLES {
            let s = k as f64 / SEGMENT_SAMPLES as f64;
            let p: Vec<f64> = a.iter().zip(t).map(|(ai, ti)| ai + s * (ti - ai)).collect();
            let d = KernelDerivative {
                matrices: template.derivative(&p)?,
                method: DerivativeMethod::Analytic,
                one_sided: false,
            };
            out.push(SegmentPoint {
                kernel: template.kernel(&p)?,
                derivative: d.directional(&u),
            });
        }
    }
    Ok(out)
}

/// Outcome of checking `|Ψ_n^θ(f) - K_n^α(Ψ_{n-1}^θ)(f)| <= 2‖f‖ ‖θ-α‖ sup_{θ'} ratio_n(θ')`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeakStepReport {
    pub checks: usize,
    pub violations: usize,
    /// Largest observed `lhs / rhs` (0 when every rhs is 0 and lhs is 0).
    pub max_tightness: f64,
}

/// Checks the mean-value step bound for each test function in `fs` at every
/// step, with the unknown intermediate point replaced by a sup over the
/// segment `[α, θ]`.
pub fn weak_step_bound_check(
    model: &AugmentedModel,
    theta_idx: usize,
    alpha_idx: usize,
    ys: &[f64],
    fs: &[Vec<f64>],
) -> Result<WeakStepReport> {
    let family = &model.family;
    family.check_index(theta_idx)?;
    family.check_index(alpha_idx)?;
    let dist = family.distance(theta_idx, alpha_idx);
    let segment = segment_points(family, alpha_idx, theta_idx)?;
    let no_lambda = vec![0.0; model.states()];
    let mut prev = FilterState::initial(model.initial.clone());
    let mut report = WeakStepReport {
        checks: 0,
        violations: 0,
        max_tightness: 0.0,
    };
    for &y in ys {
        let g = scaled_likelihoods(&model.obs, y);
        let sup_ratio = segment
            .iter()
            .map(|sp| conditional_ratios(prev.dist.weights(), &sp.kernel, &sp.derivative, &no_lambda, &g).1)
            .fold(0.0, f64::max);
        let next = filter_step(family.kernel(theta_idx), &model.obs, &prev, y)?;
        let alt = filter_step(family.kernel(alpha_idx), &model.obs, &prev, y)?;
        for f in fs {
            let sup_f = f.iter().copied().map(f64::abs).fold(0.0, f64::max);
            let lhs = (next.dist.integrate(f) - alt.dist.integrate(f)).abs();
            let rhs = 2.0 * sup_f * dist * sup_ratio;
            report.checks += 1;
            if lhs > rhs + 1e-12 {
                report.violations += 1;
            }
            if rhs > 0.0 {
                report.max_tightness = report.max_tightness.max(lhs / rhs);
            }
        }
        prev = next;
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentProbeEntry {
    pub theta_index: usize,
    pub theta_prime_index: usize,
    pub n: usize,
    pub value: f64,
}

/// `(E_{μ,θ} (K_{θ'} Λ_{θ'}^{n+1})(X_{n-1}))^{1/(n+1)}` over a neighborhood.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentProbeReport {
    pub alpha_index: usize,
    pub radius: f64,
    pub entries: Vec<MomentProbeEntry>,
    pub sup: f64,
    /// `max_{θ'} max_x Λ_{θ'}(x)` over the neighborhood; no entry exceeds it.
    pub ceiling: f64,
}

/// Exact evaluation of the moment condition on the grid neighborhood
/// `{θ : d(θ, α) <= radius}` (matrix powers, no sampling).
pub fn moment_condition_probe(
    model: &AugmentedModel,
    alpha_idx: usize,
    radius: f64,
    horizons: &[usize],
) -> Result<MomentProbeReport> {
    let family = &model.family;
    family.check_index(alpha_idx)?;
    if horizons.contains(&0) {
        return Err(Error::InvalidParameter("horizons start at 1".into()));
    }
    let hood: Vec<usize> = (0..family.len())
        .filter(|&j| family.distance(j, alpha_idx) <= radius)
        .collect();
    let mut lambdas = Vec::with_capacity(hood.len());
    for &tp in &hood {
        let d = kernel_derivative(family, tp, DEFAULT_FD_STEP)?;
        // coordinatewise derivative; 1-d families have a single matrix
        let l = lambda_bound(&d.directional(&unit_direction(family, tp, tp)), family.kernel(tp));
        if l.iter().any(|v| v.is_infinite()) {
            return Err(Error::NotApplicable(format!(
                "Lambda is infinite at grid point {tp}"
            )));
        }
        lambdas.push(l);
    }
    let ceiling = lambdas.iter().flatten().copied().fold(0.0, f64::max);
    let mut entries = Vec::new();
    for &t in &hood {
        for (tp_pos, &tp) in hood.iter().enumerate() {
            let log_lambda: Vec<f64> = lambdas[tp_pos].iter().map(|l| l.ln()).collect();
            let k_prime = family.kernel(tp);
            for &n in horizons {
                let law = family.kernel(t).propagate_n(model.initial.weights(), n - 1);
                let p = (n + 1) as f64;
                // log Σ_x law(x) Σ_y K'(x, y) Λ(y)^{n+1}
                let terms: Vec<f64> = (0..model.states())
                    .flat_map(|x| {
                        let lw = law[x].ln();
                        let log_lambda = &log_lambda;
                        (0..model.states()).map(move |yy| lw + k_prime.get(x, yy).ln() + p * log_lambda[yy])
                    })
                    .collect();
                let value = (log_sum_exp(&terms) / p).exp();
                entries.push(MomentProbeEntry {
                    theta_index: t,
                    theta_prime_index: tp,
                    n,
                    value,
                });
            }
        }
    }
    let sup = entries.iter().map(|e| e.value).fold(0.0, f64::max);
    Ok(MomentProbeReport {
        alpha_index: alpha_idx,
        radius,
        entries,
        sup,
        ceiling,
    })
}

/// Knobs for [`posterior_concentration`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyOptions {
    /// Fraction of the horizon (taken from the end) used to fit the log rate.
    pub rate_window: f64,
    /// Tolerance for the identifiability pre-check; `None` skips it.
    pub identifiability_tol: Option<f64>,
}

impl Default for ConsistencyOptions {
    fn default() -> Self {
        Self {
            rate_window: 0.5,
            identifiability_tol: Some(DEFAULT_IDENTIFIABILITY_TOL),
        }
    }
}

/// Statistic `E[(sup_{θ∈N_{ε_n}} dQ_{μ,α}/dQ_{μ',θ} / u(N_{ε_n}))^{1/p(n)}]`
/// along user-supplied `ε_n`, `p(n)`; the expectation is a seed average.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PriorProbe {
    pub horizons: Vec<usize>,
    pub eps: Vec<f64>,
    pub p: Vec<f64>,
    pub values: Vec<f64>,
}

/// Posterior mass outside `N_η(α)`, averaged over seeds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub alpha_index: usize,
    pub eta: f64,
    pub seeds: Vec<u64>,
    /// Seed mean of `Z_n(N_η(α)^c)` for `n = 1..N`.
    pub mass_outside: Vec<f64>,
    /// `log` of `mass_outside`, computed without underflow.
    pub log_mass_outside: Vec<f64>,
    /// Seed mean of `Z_n({α})`.
    pub mass_at_alpha: Vec<f64>,
    /// Least-squares slope of `log_mass_outside` against `n` on the tail
    /// window; `None` when fewer than two finite points remain.
    pub log_rate: Option<f64>,
    pub rate_window: f64,
    pub probe: Option<PriorProbe>,
}

fn check_identifiable(model: &AugmentedModel, tol: Option<f64>) -> Result<()> {
    if let Some(tol) = tol {
        let pairs = identifiability_scan(&model.family, &model.obs, tol)?;
        if !pairs.is_empty() {
            return Err(Error::Identifiability(pairs));
        }
    }
    Ok(())
}

pub fn posterior_concentration(
    model: &AugmentedModel,
    alpha_idx: usize,
    eta: f64,
    n: usize,
    seeds: &[u64],
    opts: &ConsistencyOptions,
) -> Result<ConsistencyReport> {
    model.family.check_index(alpha_idx)?;
    if seeds.is_empty() {
        return Err(Error::EmptyInput("seed list"));
    }
    if !(eta > 0.0) {
        return Err(Error::InvalidParameter(format!("eta must be positive, got {eta}")));
    }
    if !(opts.rate_window > 0.0 && opts.rate_window <= 1.0) {
        return Err(Error::InvalidParameter("rate window must lie in (0, 1]".into()));
    }
    if model.prior.weight(alpha_idx) <= 0.0 {
        return Err(Error::InvalidPrior(format!(
            "prior puts no mass on the true grid point {alpha_idx}"
        )));
    }
    check_identifiable(model, opts.identifiability_tol)?;
    let outside: Vec<bool> = (0..model.params())
        .map(|j| model.family.distance(j, alpha_idx) >= eta)
        .collect();

    // per seed: (log mass outside, mass at alpha) for every step
    let runs = seeds
        .par_iter()
        .map(|&seed| {
            let traj = simulate(model, alpha_idx, n, seed)?;
            let mut state = AugmentedFilterState::initial(model);
            let mut log_out = Vec::with_capacity(n);
            let mut at_alpha = Vec::with_capacity(n);
            for &y in &traj.observations {
                state = augmented_step(model, &state, y)?;
                let lse = log_sum_exp(&state.param_log_weights);
                let out_terms: Vec<f64> = state
                    .param_log_weights
                    .iter()
                    .zip(&outside)
                    .filter(|(_, o)| **o)
                    .map(|(l, _)| *l)
                    .collect();
                log_out.push((log_sum_exp(&out_terms) - lse).min(0.0));
                at_alpha.push((state.param_log_weights[alpha_idx] - lse).exp());
            }
            Ok((log_out, at_alpha))
        })
        .collect::<Result<Vec<_>>>()?;

    let s = seeds.len() as f64;
    let mut log_mass_outside = Vec::with_capacity(n);
    let mut mass_outside = Vec::with_capacity(n);
    let mut mass_at_alpha = Vec::with_capacity(n);
    for k in 0..n {
        let logs: Vec<f64> = runs.iter().map(|r| r.0[k]).collect();
        let lm = log_sum_exp(&logs) - s.ln();
        log_mass_outside.push(lm);
        mass_outside.push(lm.exp());
        mass_at_alpha.push(runs.iter().map(|r| r.1[k]).sum::<f64>() / s);
    }
    let log_rate = tail_slope(&log_mass_outside, opts.rate_window);
    Ok(ConsistencyReport {
        alpha_index: alpha_idx,
        eta,
        seeds: seeds.to_vec(),
        mass_outside,
        log_mass_outside,
        mass_at_alpha,
        log_rate,
        rate_window: opts.rate_window,
        probe: None,
    })
}

/// Least-squares slope of `ys[k]` against step `k + 1` over the last
/// `window` fraction, ignoring non-finite values.
pub fn tail_slope(ys: &[f64], window: f64) -> Option<f64> {
    let start = ys.len() - ((ys.len() as f64 * window).ceil() as usize).min(ys.len());
    let pts: Vec<(f64, f64)> = ys[start..]
        .iter()
        .enumerate()
        .filter(|(_, y)| y.is_finite())
        .map(|(i, &y)| ((start + i + 1) as f64, y))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    Some(sxy / sxx)
}

/// Probe of the prior condition along `(ε_n, p(n))` at each horizon. The
/// data are simulated under `α` from the model's initial law `μ`; the
/// competing filters start from `mu_prime`.
pub fn prior_condition_probe(
    model: &AugmentedModel,
    alpha_idx: usize,
    mu_prime: &DiscreteMeasure,
    horizons: &[usize],
    eps: &[f64],
    p: &[f64],
    seeds: &[u64],
) -> Result<PriorProbe> {
    model.family.check_index(alpha_idx)?;
    if horizons.len() != eps.len() || horizons.len() != p.len() {
        return Err(Error::Dimension {
            left: horizons.len(),
            right: eps.len().min(p.len()),
        });
    }
    if seeds.is_empty() || horizons.is_empty() {
        return Err(Error::EmptyInput("probe horizons or seeds"));
    }
    if p.iter().any(|&q| q < 1.0) {
        return Err(Error::InvalidParameter("p(n) must be at least 1".into()));
    }
    let n_max = *horizons.iter().max().unwrap();
    if horizons.contains(&0) {
        return Err(Error::InvalidParameter("horizons start at 1".into()));
    }
    let hoods: Vec<Vec<usize>> = eps
        .iter()
        .map(|&e| (0..model.params()).filter(|&j| model.family.distance(j, alpha_idx) <= e).collect())
        .collect();
    let log_u: Vec<f64> = hoods
        .iter()
        .map(|h| h.iter().map(|&j| model.prior.weight(j)).sum::<f64>().ln())
        .collect();
    let competitors = model.with_initial(mu_prime.clone())?;
    let per_seed = seeds
        .par_iter()
        .map(|&seed| {
            let traj = simulate(model, alpha_idx, n_max, seed)?;
            let mut truth = FilterState::initial(model.initial.clone());
            let mut others = AugmentedFilterState::initial(&competitors);
            let mut vals = vec![0.0; horizons.len()];
            for (k, &y) in traj.observations.iter().enumerate() {
                truth = filter_step(model.family.kernel(alpha_idx), &model.obs, &truth, y)?;
                others = augmented_step(&competitors, &others, y)?;
                for (h, &n) in horizons.iter().enumerate() {
                    if n == k + 1 {
                        let sup = hoods[h]
                            .iter()
                            .map(|&j| truth.log_normalizer - others.per_param[j].log_normalizer)
                            .fold(f64::NEG_INFINITY, f64::max);
                        vals[h] = ((sup - log_u[h]) / p[h]).exp();
                    }
                }
            }
            Ok(vals)
        })
        .collect::<Result<Vec<_>>>()?;
    let values = (0..horizons.len())
        .map(|h| per_seed.iter().map(|v| v[h]).sum::<f64>() / seeds.len() as f64)
        .collect();
    Ok(PriorProbe {
        horizons: horizons.to_vec(),
        eps: eps.to_vec(),
        p: p.to_vec(),
        values,
    })
}

/// `‖Ψ_n^u(μ) - Ψ_n^α(μ')‖_tv` along shared observations `ys`.
pub fn stability_gap(
    model_u: &AugmentedModel,
    model_delta_alpha: &AugmentedModel,
    mu: &DiscreteMeasure,
    mu_prime: &DiscreteMeasure,
    ys: &[f64],
) -> Result<Vec<f64>> {
    if ys.is_empty() {
        return Err(Error::EmptyInput("observation sequence"));
    }
    if model_u.family != model_delta_alpha.family || model_u.obs != model_delta_alpha.obs {
        return Err(Error::Precondition(
            "both filters must share the kernel family and observation model".into(),
        ));
    }
    let a_model = model_u.with_initial(mu.clone())?;
    let b_model = model_delta_alpha.with_initial(mu_prime.clone())?;
    let mut a = AugmentedFilterState::initial(&a_model);
    let mut b = AugmentedFilterState::initial(&b_model);
    let mut out = Vec::with_capacity(ys.len());
    for &y in ys {
        a = augmented_step(&a_model, &a, y)?;
        b = augmented_step(&b_model, &b, y)?;
        out.push(tv_slices(state_marginal(&a).weights(), state_marginal(&b).weights()));
    }
    Ok(out)
}

/// Gap computed from two precomputed filter histories.
pub fn stability_gap_between(a: &[AugmentedFilterState], b: &[AugmentedFilterState]) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::Precondition(format!(
            "filters were run on observation sequences of different lengths ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter()
        .zip(b)
        .map(|(x, y)| tv_slices(state_marginal(x).weights(), state_marginal(y).weights()))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub alpha_index: usize,
    pub seeds: Vec<u64>,
    pub mu: Vec<f64>,
    pub mu_prime: Vec<f64>,
    /// Seed mean of the gap at each step.
    pub mean_gap: Vec<f64>,
}

/// Seed-averaged stability gap. Observations are simulated under `α` with
/// the true chain started from `mu_prime`; the `u`-prior filter starts from
/// `mu` and the `α`-filter from `mu_prime`.
pub fn stability_experiment(
    model: &AugmentedModel,
    alpha_idx: usize,
    mu: &DiscreteMeasure,
    mu_prime: &DiscreteMeasure,
    n: usize,
    seeds: &[u64],
    identifiability_tol: Option<f64>,
) -> Result<StabilityReport> {
    model.family.check_index(alpha_idx)?;
    if seeds.is_empty() {
        return Err(Error::EmptyInput("seed list"));
    }
    check_identifiable(model, identifiability_tol)?;
    let delta = model.with_point_prior(alpha_idx)?;
    let truth = model.with_initial(mu_prime.clone())?;
    let gaps = seeds
        .par_iter()
        .map(|&seed| {
            let traj = simulate(&truth, alpha_idx, n, seed)?;
            stability_gap(model, &delta, mu, mu_prime, &traj.observations)
        })
        .collect::<Result<Vec<_>>>()?;
    let mean_gap = (0..n)
        .map(|k| gaps.iter().map(|g| g[k]).sum::<f64>() / seeds.len() as f64)
        .collect();
    Ok(StabilityReport {
        alpha_index: alpha_idx,
        seeds: seeds.to_vec(),
        mu: mu.weights().to_vec(),
        mu_prime: mu_prime.weights().to_vec(),
        mean_gap,
    })
}
