//! Adaptive choice of the smoothing window.
//!
//! Starting from an initial half-width, the window shrinks until one of the
//! two fractional-error thresholds drops to the requested tolerance, and
//! the count-weighted moving average at that width is returned.

use crate::bounds::{
    gamma_factor, lambda_threshold_first_diff, lambda_threshold_second_diff, WindowBoundInputs,
};
use crate::error::{Error, Result};
use crate::estimator::{unweighted_ma, weighted_ma, EstimateSeries, Method};
use crate::timeseries::TimeSeries;

/// Safety inflation applied to smoothness bounds estimated from a pilot.
pub const PILOT_INFLATION: f64 = 1.5;

/// Half-width of the pre-smoothing used on pilot series.
pub const PILOT_WINDOW: usize = 3;

/// Relative-difference bounds of the hidden fraction and of the response
/// variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothnessProfile {
    pub eps_f1: f64,
    pub eps_f2: f64,
    pub eps_s1: f64,
}

impl SmoothnessProfile {
    /// The variance's second-difference bound is taken equal to its first.
    pub fn eps_s2(&self) -> f64 {
        self.eps_s1
    }

    /// `(gamma_f, gamma_sigma2)` at half-width `w`.
    pub fn gammas(&self, w: usize, sigma_n_over_mu_n: f64) -> Result<(f64, f64)> {
        Ok((
            gamma_factor(self.eps_f1, self.eps_f2, w, sigma_n_over_mu_n)?,
            gamma_factor(self.eps_s1, self.eps_s2(), w, sigma_n_over_mu_n)?,
        ))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowSearchResult {
    pub w_selected: usize,
    /// First-difference threshold at `w_selected`; `None` when infeasible
    /// or when no window was accepted.
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
    pub satisfied: bool,
    pub estimate: EstimateSeries,
}

/// Coefficient of variation `sigma_n / mu_n` of the non-empty bin counts.
pub fn count_dispersion(counts: &[usize]) -> f64 {
    let present: Vec<f64> = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| c as f64)
        .collect();
    if present.is_empty() {
        return 0.0;
    }
    let n = present.len() as f64;
    let mu = present.iter().sum::<f64>() / n;
    let var = present.iter().map(|c| (c - mu).powi(2)).sum::<f64>() / n;
    var.sqrt() / mu
}

/// The `(n_t, n_w)` pair maximizing `n_t / n_w` over anchors whose full
/// `2w + 1` window lies inside the series. `None` if no such anchor has
/// responses.
pub fn worst_anchor(counts: &[usize], w: usize) -> Option<(f64, f64)> {
    let len = counts.len();
    if len < 2 * w + 1 {
        return None;
    }
    (w..len - w)
        .filter(|&t| counts[t] > 0)
        .map(|t| {
            let n_w: usize = counts[t - w..=t + w].iter().sum();
            (counts[t] as f64, n_w as f64)
        })
        .max_by(|a, b| (a.0 / a.1).total_cmp(&(b.0 / b.1)))
}

/// Both thresholds at half-width `w`; infeasible or undefined thresholds
/// come back as `None`.
pub fn window_thresholds(
    counts: &[usize],
    profile: &SmoothnessProfile,
    w: usize,
) -> (Option<f64>, Option<f64>) {
    let Some((n_t, n_w)) = worst_anchor(counts, w) else {
        return (None, None);
    };
    let dispersion = count_dispersion(counts);
    let inputs = WindowBoundInputs {
        eps_f1: profile.eps_f1,
        eps_f2: profile.eps_f2,
        eps_s1: profile.eps_s1,
        eps_s2: profile.eps_s2(),
        w,
        n_t,
        n_w,
        sigma_n_over_mu_n: dispersion,
    };
    let l1 = lambda_threshold_first_diff(&inputs).ok();
    let l2 = profile
        .gammas(w, dispersion)
        .and_then(|(gf, gs)| lambda_threshold_second_diff(gf, gs, n_t, n_w))
        .ok();
    (l1, l2)
}

fn min_threshold(l1: Option<f64>, l2: Option<f64>) -> f64 {
    l1.unwrap_or(f64::INFINITY).min(l2.unwrap_or(f64::INFINITY))
}

/// Shrinks the window from `w_init` until `min(lambda1, lambda2) <= lambda`
/// and returns the count-weighted moving average at that width. If no
/// `w >= 1` qualifies the unsmoothed input comes back with
/// `satisfied == false`.
pub fn aggregated_estimate(
    e: &EstimateSeries,
    lambda: f64,
    w_init: usize,
    profile: &SmoothnessProfile,
) -> Result<WindowSearchResult> {
    if !(lambda > 0.0) {
        return Err(Error::Domain(format!("lambda = {lambda} must be positive")));
    }
    if w_init == 0 {
        return Err(Error::Domain("w_init must be at least 1".into()));
    }
    let mut w = w_init;
    while w > 0 {
        let (l1, l2) = window_thresholds(&e.counts, profile, w);
        if min_threshold(l1, l2) <= lambda {
            return Ok(WindowSearchResult {
                w_selected: w,
                lambda1: l1,
                lambda2: l2,
                satisfied: true,
                estimate: weighted_ma(e, w)?,
            });
        }
        w -= 1;
    }
    Ok(WindowSearchResult {
        w_selected: 0,
        lambda1: None,
        lambda2: None,
        satisfied: false,
        estimate: e.clone(),
    })
}

/// Largest relative first and second differences over stretches of
/// strictly positive values.
fn positive_run_smoothness(values: &[f64]) -> (f64, f64) {
    let mut eps1: f64 = 0.0;
    let mut eps2: f64 = 0.0;
    for (t, pair) in values.windows(2).enumerate() {
        if pair[0] > 0.0 && pair[1] > 0.0 {
            eps1 = eps1.max((pair[1] - pair[0]).abs() / pair[0]);
        }
        if t + 2 < values.len() {
            let (a, b, c) = (values[t], values[t + 1], values[t + 2]);
            if a > 0.0 && b > 0.0 && c > 0.0 {
                eps2 = eps2.max((c - 2.0 * b + a).abs() / b);
            }
        }
    }
    (eps1, eps2)
}

/// Estimates smoothness bounds from a pilot series.
///
/// The pilot is pre-smoothed with a `PILOT_WINDOW` unweighted moving
/// average, its maximal relative differences are taken, and every bound is
/// inflated by [`PILOT_INFLATION`]. The variance bound comes from the
/// per-bin response variances when given; otherwise the mean's bound is
/// reused (for small fractions the response variance is nearly
/// proportional to the mean).
pub fn smoothness_from_pilot(
    e: &EstimateSeries,
    variances: Option<&TimeSeries>,
) -> Result<SmoothnessProfile> {
    let pilot = unweighted_ma(e, PILOT_WINDOW)?;
    let positive = pilot
        .values
        .values()
        .iter()
        .zip(&pilot.counts)
        .filter(|(v, &n)| **v > 0.0 && n > 0)
        .count();
    if positive < 3 {
        return Err(Error::Domain(format!(
            "pilot has {positive} strictly positive bins; at least 3 are needed"
        )));
    }
    let (eps_f1, eps_f2) = positive_run_smoothness(pilot.values.values());
    let eps_s1 = match variances {
        Some(v) => {
            if v.len() != e.len() {
                return Err(Error::Shape(
                    "variance series does not match the estimate".into(),
                ));
            }
            let var_est = EstimateSeries::new(v.clone(), e.counts.clone(), Method::Ind)?;
            let smoothed = unweighted_ma(&var_est, PILOT_WINDOW)?;
            positive_run_smoothness(smoothed.values.values()).0
        }
        None => eps_f1,
    };
    Ok(SmoothnessProfile {
        eps_f1: eps_f1 * PILOT_INFLATION,
        eps_f2: eps_f2 * PILOT_INFLATION,
        eps_s1: eps_s1 * PILOT_INFLATION,
    })
}
