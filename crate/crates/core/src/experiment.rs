//! The synthetic protocol: an epidemic, a survey on top of it, every
//! estimator and smoothing applied to the responses, and each result scored
//! against binned incidence by range-normalized MAE.

use serde::{Deserialize, Serialize};

use crate::epidemic::{hidden_fraction, simulate_multiwave, EpidemicTrajectory, SirConfig};
use crate::error::{Error, Result};
use crate::estimator::{accumulate, estimate, smooth, EstimateSeries, Method, Smoothing};
use crate::survey::{simulate_survey, ResponseBatch, SurveyConfig, SurveySampler};
use crate::timeseries::{mae, range_normalize, TimeSeries};

/// Trajectories must show at least this many incidence waves.
pub const MIN_WAVES: usize = 2;
/// Seeds tried per cell before giving up on a multi-wave trajectory.
pub const MAX_WAVE_ATTEMPTS: usize = 200;

/// One point of the parameter grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSpec {
    pub d: f64,
    pub n: usize,
    pub n_d: u64,
    pub period: usize,
    pub accum: u32,
    pub w: usize,
    pub seed: u64,
}

impl CellSpec {
    pub fn survey_config(&self) -> SurveyConfig {
        SurveyConfig {
            d: self.d,
            n: self.n,
            n_d: self.n_d,
            period: self.period,
            seed: survey_seed(self.seed),
        }
    }
}

/// Epidemic seeds of neighbouring cell seeds are spaced apart so that
/// rejected trajectories are never shared.
pub fn epidemic_seed(seed: u64) -> u64 {
    seed.wrapping_mul(MAX_WAVE_ATTEMPTS as u64)
}

pub fn survey_seed(seed: u64) -> u64 {
    seed ^ 0x5eed_0f5e_7e7e_u64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    pub method: Method,
    pub smoothing: Smoothing,
    pub mae: f64,
}

/// Means of `daily` over every `accum`-day bin (aligned to day 0) that it
/// covers completely. Bin `b` spans days `b * accum .. (b + 1) * accum`.
pub fn bin_reference(daily: &TimeSeries, accum: u32) -> Result<TimeSeries> {
    if accum == 0 {
        return Err(Error::config("accum", "must be at least 1"));
    }
    let a = accum as i64;
    let first = (daily.start_day() + a - 1).div_euclid(a);
    let last = (daily.end_day() + 1).div_euclid(a) - 1;
    if first > last {
        return Err(Error::Range(format!(
            "reference days [{}, {}] cover no full {accum}-day bin",
            daily.start_day(),
            daily.end_day()
        )));
    }
    let values = (first..=last)
        .map(|b| {
            let s: f64 = (b * a..(b + 1) * a)
                .map(|day| daily.get(day).expect("bin inside reference"))
                .sum();
            s / a as f64
        })
        .collect();
    TimeSeries::new(first, values)
}

/// Range-normalized MAE between an estimate and a daily reference.
///
/// The reference is binned at the estimate's `accum`; only bins present in
/// both, with responses, and not the partial tail take part. Both sides are
/// normalized over exactly those bins.
pub fn normalized_mae(est: &EstimateSeries, daily_ref: &TimeSeries) -> Result<f64> {
    let reference = bin_reference(daily_ref, est.accum)?;
    let last = est.values.end_day();
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for (k, (bin, v)) in est.values.iter().enumerate() {
        if est.is_missing(k) || (est.partial_tail && bin == last) {
            continue;
        }
        if let Some(r) = reference.get(bin) {
            a.push(v);
            b.push(r);
        }
    }
    if a.is_empty() {
        return Err(Error::Range(
            "estimate and reference share no complete bin".into(),
        ));
    }
    let a = range_normalize(&TimeSeries::from_values(a)?);
    let b = range_normalize(&TimeSeries::from_values(b)?);
    mae(&a, &b)
}

/// Every method and smoothing applied to `batches`, scored against the daily
/// `truth`. Methods whose inputs are absent are skipped.
pub fn score_batches(
    batches: &[ResponseBatch],
    truth: &TimeSeries,
    accum: u32,
    w: usize,
) -> Result<Vec<Score>> {
    let pooled = accumulate(batches, accum)?;
    let mut out = Vec::with_capacity(9);
    for method in Method::ALL {
        let raw = match estimate(&pooled, method) {
            Ok(e) => e,
            Err(Error::Shape(_)) => continue,
            Err(e) => return Err(e),
        };
        for smoothing in Smoothing::ALL {
            let e = smooth(&raw, smoothing, w)?;
            out.push(Score {
                method,
                smoothing,
                mae: normalized_mae(&e, truth)?,
            });
        }
    }
    Ok(out)
}

/// The epidemic and survey responses behind one cell.
#[derive(Debug, Clone)]
pub struct CellData {
    pub trajectory: EpidemicTrajectory,
    pub epidemic_seed: u64,
    pub hidden: TimeSeries,
    pub batches: Vec<ResponseBatch>,
}

pub fn simulate_cell(spec: &CellSpec, sir: &SirConfig) -> Result<CellData> {
    let sir = SirConfig {
        seed: epidemic_seed(spec.seed),
        ..sir.clone()
    };
    let (trajectory, epidemic_seed) = simulate_multiwave(&sir, MIN_WAVES, MAX_WAVE_ATTEMPTS)?;
    let hidden = hidden_fraction(&trajectory, spec.period)?;
    let sampler = SurveySampler::new(spec.survey_config())?;
    let batches = simulate_survey(&hidden, &sampler)?;
    Ok(CellData {
        trajectory,
        epidemic_seed,
        hidden,
        batches,
    })
}

/// Simulates a cell and scores all nine method/smoothing pairs against
/// incidence.
pub fn run_cell(spec: &CellSpec, sir: &SirConfig) -> Result<Vec<Score>> {
    let data = simulate_cell(spec, sir)?;
    score_batches(
        &data.batches,
        &data.trajectory.incidence,
        spec.accum,
        spec.w,
    )
}
