//! Closed-form error analysis for indirect surveys: response variance,
//! deviation bounds for smooth sequences, and the fractional-error
//! thresholds above which windowed averaging beats per-bin estimates.

use crate::error::{Error, Result};
use crate::survey::BiasGroups;

/// Inputs of the indirect-response variance formula.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceInputs {
    /// Hidden-population fraction.
    pub f: f64,
    /// Mean latent in-degree.
    pub mu_d: f64,
    /// Variance of the latent in-degree.
    pub sigma_d2: f64,
    /// Pair co-membership parameter: `E(I_a I_b) = phi * f` for two nodes
    /// sharing a reporter. `phi == f` means independence.
    pub phi: f64,
}

impl VarianceInputs {
    pub fn new(f: f64, mu_d: f64, sigma_d2: f64, phi: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&f) {
            return Err(Error::Domain(format!("f = {f} outside [0, 1]")));
        }
        if !(mu_d > 0.0) || !mu_d.is_finite() {
            return Err(Error::Domain(format!("mu_d = {mu_d} must be positive")));
        }
        if !(sigma_d2 >= 0.0) || !sigma_d2.is_finite() {
            return Err(Error::Domain(format!(
                "sigma_d2 = {sigma_d2} must be non-negative"
            )));
        }
        if !(0.0..=1.0).contains(&phi) {
            return Err(Error::Domain(format!("phi = {phi} outside [0, 1]")));
        }
        Ok(VarianceInputs {
            f,
            mu_d,
            sigma_d2,
            phi,
        })
    }
}

/// `f (mu^2 (phi - f) + mu (1 - phi) + sigma^2 phi)`.
pub fn variance_indirect(v: &VarianceInputs) -> f64 {
    let VarianceInputs {
        f,
        mu_d,
        sigma_d2,
        phi,
    } = *v;
    f * (mu_d * mu_d * (phi - f) + mu_d * (1.0 - phi) + sigma_d2 * phi)
}

/// `(mu f (1 - mu f), f (sigma^2 + mu^2 (1 - f)))`, the values of
/// [`variance_indirect`] at `phi = 0` and `phi = 1`.
pub fn variance_bounds(v: &VarianceInputs) -> (f64, f64) {
    let VarianceInputs {
        f, mu_d, sigma_d2, ..
    } = *v;
    (
        mu_d * f * (1.0 - mu_d * f),
        f * (sigma_d2 + mu_d * mu_d * (1.0 - f)),
    )
}

/// Whether the indirect estimate `mean(X) / mu_d` deviates from `f` with
/// no larger probability than the direct estimate, i.e.
/// `sigma_d2 <= mu_d (mu_d - 1) (1 - phi) / phi`. `phi == 0` always passes.
pub fn indirect_beats_direct(mu_d: f64, sigma_d2: f64, phi: f64) -> bool {
    if phi <= 0.0 {
        return true;
    }
    sigma_d2 <= mu_d * (mu_d - 1.0) * (1.0 - phi) / phi
}

/// Relative drift `|j| eps1 / (1 - |j| eps1)` a sequence with first
/// differences bounded by `eps1 * g_t` can accumulate over `j` steps.
pub fn first_diff_deviation(eps1: f64, j: i64) -> Result<f64> {
    if !(eps1 >= 0.0) {
        return Err(Error::Domain(format!("eps1 = {eps1} must be non-negative")));
    }
    let x = j.unsigned_abs() as f64 * eps1;
    if x >= 1.0 {
        return Err(Error::Domain(format!(
            "|j| * eps1 = {x} >= 1 makes the bound vacuous"
        )));
    }
    Ok(x / (1.0 - x))
}

/// Leading term `w (w + 1) eps2 / 6` of the relative error of a centered
/// `(2w + 1)`-point mean. The `O(w^4 eps2^2)` remainder is not included.
pub fn window_average_error(eps2: f64, w: usize) -> f64 {
    let w = w as f64;
    w * (w + 1.0) * eps2 / 6.0
}

/// `E(w) + eps1 * (sigma_n / mu_n) * w eps1 / (1 - w eps1)`, the relative
/// error factor of a count-weighted window mean as used in the second
/// smoothing threshold.
pub fn gamma_factor(eps1: f64, eps2: f64, w: usize, sigma_n_over_mu_n: f64) -> Result<f64> {
    let drift = first_diff_deviation(eps1, w as i64)?;
    Ok(window_average_error(eps2, w) + eps1 * sigma_n_over_mu_n * drift)
}

/// `E(w) + (sigma_n / mu_n) * w eps1 / (1 - w eps1)`.
///
/// Cauchy-Schwarz on the count imbalance gives this bound on
/// `|sum_i (n_{t+i} / n_w) g_{t+i} - g_t| / g_t` directly. It is larger
/// than [`gamma_factor`] by a factor `1 / eps1` in its second term.
pub fn count_weighted_deviation_bound(
    eps1: f64,
    eps2: f64,
    w: usize,
    sigma_n_over_mu_n: f64,
) -> Result<f64> {
    let drift = first_diff_deviation(eps1, w as i64)?;
    Ok(window_average_error(eps2, w) + sigma_n_over_mu_n * drift)
}

/// Smoothness and sample-size inputs shared by both thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowBoundInputs {
    /// Bound on `|Δf| / f`.
    pub eps_f1: f64,
    /// Bound on `|Δ²f| / f`.
    pub eps_f2: f64,
    /// Bound on the relative first difference of the response variance.
    pub eps_s1: f64,
    pub eps_s2: f64,
    pub w: usize,
    /// Responses in the anchor bin.
    pub n_t: f64,
    /// Responses in the whole `2w + 1` window.
    pub n_w: f64,
    pub sigma_n_over_mu_n: f64,
}

/// Smallest fractional error `lambda` for which the count-weighted window
/// mean provably beats the anchor bin, from first-difference bounds only:
///
/// `lambda >= d_f / (1 - (1 + d_s) sqrt(n_t / n_w))` with
/// `d_g = w eps_g1 / (1 - w eps_g1)`.
pub fn lambda_threshold_first_diff(b: &WindowBoundInputs) -> Result<f64> {
    check_counts(b.n_t, b.n_w)?;
    let var_drift = first_diff_deviation(b.eps_s1, b.w as i64)?;
    let mean_drift = first_diff_deviation(b.eps_f1, b.w as i64)?;
    let denom = 1.0 - (1.0 + var_drift) * (b.n_t / b.n_w).sqrt();
    if denom <= 0.0 {
        return Err(Error::InfeasibleWindow(format!(
            "first-difference threshold denominator {denom} at w = {}",
            b.w
        )));
    }
    Ok(mean_drift / denom)
}

/// `gamma_f / (1 - sqrt((n_t / n_w) (1 + gamma_s2)))`.
pub fn lambda_threshold_second_diff(
    gamma_f: f64,
    gamma_s2: f64,
    n_t: f64,
    n_w: f64,
) -> Result<f64> {
    check_counts(n_t, n_w)?;
    let denom = 1.0 - ((n_t / n_w) * (1.0 + gamma_s2)).sqrt();
    if denom <= 0.0 {
        return Err(Error::InfeasibleWindow(format!(
            "second-difference threshold denominator {denom}"
        )));
    }
    Ok(gamma_f / denom)
}

/// Threshold of [`lambda_threshold_second_diff`] with both gammas derived from
/// `b` via [`gamma_factor`]; the variance's second-difference bound is
/// `b.eps_s2`.
pub fn lambda_threshold_second_diff_from(b: &WindowBoundInputs) -> Result<f64> {
    let gamma_f = gamma_factor(b.eps_f1, b.eps_f2, b.w, b.sigma_n_over_mu_n)?;
    let gamma_s2 = gamma_factor(b.eps_s1, b.eps_s2, b.w, b.sigma_n_over_mu_n)?;
    lambda_threshold_second_diff(gamma_f, gamma_s2, b.n_t, b.n_w)
}

fn check_counts(n_t: f64, n_w: f64) -> Result<()> {
    if !(n_t > 0.0) || !(n_w >= n_t) {
        return Err(Error::Domain(format!(
            "need 0 < n_t <= n_w, got n_t = {n_t}, n_w = {n_w}"
        )));
    }
    Ok(())
}

/// `B = sum_j q_j alpha_j`, the factor by which group-wise reporting bias
/// scales the expected indirect response.
pub fn bias_factor(bias: &BiasGroups) -> f64 {
    bias.groups().iter().map(|(q, a)| q * a).sum()
}
