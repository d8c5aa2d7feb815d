//! Discrete-time SIR epidemic with a time-varying reproduction number.
//!
//! The reproduction number starts high and is pushed below one by a random
//! number of interventions, each followed by a relaxation back above one.
//! Every transition is a linear ramp, which yields smooth multi-wave
//! incidence curves that serve as the ground truth for survey simulation.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timeseries::{expect_headers, min_max, TimeSeries};

/// Parameters of the multi-wave SIR generator.
///
/// `recovery_rate`, `population` and the intervention ranges are not fixed
/// by any reference study; the defaults are tunable starting points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SirConfig {
    pub population: u64,
    pub r0_initial: f64,
    pub recovery_rate: f64,
    pub horizon_days: usize,
    pub intervention_count_range: (u32, u32),
    pub intervention_ramp_days: usize,
    pub r0_low_range: (f64, f64),
    pub r0_high_range: (f64, f64),
    pub initial_infected_fraction: f64,
    pub seed: u64,
}

impl Default for SirConfig {
    fn default() -> Self {
        SirConfig {
            population: 1_000_000,
            r0_initial: 2.5,
            recovery_rate: 0.1,
            horizon_days: 600,
            intervention_count_range: (3, 6),
            intervention_ramp_days: 14,
            r0_low_range: (0.5, 0.9),
            r0_high_range: (1.3, 2.0),
            initial_infected_fraction: 1e-4,
            seed: 1,
        }
    }
}

impl SirConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population == 0 {
            return Err(Error::config("population", "must be positive"));
        }
        if !(self.r0_initial > 2.0) || !self.r0_initial.is_finite() {
            return Err(Error::config(
                "r0_initial",
                "must be a finite value above 2",
            ));
        }
        if !(self.recovery_rate > 0.0 && self.recovery_rate <= 1.0) {
            return Err(Error::config("recovery_rate", "must lie in (0, 1]"));
        }
        if self.horizon_days == 0 {
            return Err(Error::config("horizon_days", "must be positive"));
        }
        let (cmin, cmax) = self.intervention_count_range;
        if cmin > cmax {
            return Err(Error::config("intervention_count_range", "min exceeds max"));
        }
        if self.intervention_ramp_days == 0 {
            return Err(Error::config("intervention_ramp_days", "must be positive"));
        }
        if self.horizon_days < 2 * self.intervention_ramp_days {
            return Err(Error::config(
                "horizon_days",
                "must be at least twice intervention_ramp_days",
            ));
        }
        let (lo_min, lo_max) = self.r0_low_range;
        if !(0.0 <= lo_min && lo_min <= lo_max && lo_max < 1.0) {
            return Err(Error::config(
                "r0_low_range",
                "must satisfy 0 <= min <= max < 1",
            ));
        }
        let (hi_min, hi_max) = self.r0_high_range;
        if !(1.0 < hi_min && hi_min <= hi_max && hi_max.is_finite()) {
            return Err(Error::config(
                "r0_high_range",
                "must satisfy 1 < min <= max",
            ));
        }
        let i0 = self.initial_infected_fraction;
        if !(i0 > 0.0 && i0 < 1.0) {
            return Err(Error::config(
                "initial_infected_fraction",
                "must lie in (0, 1)",
            ));
        }
        if i0 * (self.population as f64) < 1.0 {
            return Err(Error::config(
                "initial_infected_fraction",
                "seeds less than one individual in the population",
            ));
        }
        Ok(())
    }
}

/// S/I/R compartments (fractions), daily incidence and the applied R0.
#[derive(Debug, Clone, PartialEq)]
pub struct EpidemicTrajectory {
    pub s: TimeSeries,
    pub i: TimeSeries,
    pub r: TimeSeries,
    pub incidence: TimeSeries,
    pub r0: TimeSeries,
}

impl EpidemicTrajectory {
    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "day,s,i,r,incidence,r0")?;
        for (t, day) in self.s.days().enumerate() {
            writeln!(
                w,
                "{day},{},{},{},{},{}",
                self.s.values()[t],
                self.i.values()[t],
                self.r.values()[t],
                self.incidence.values()[t],
                self.r0.values()[t]
            )?;
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            day: i64,
            s: f64,
            i: f64,
            r: f64,
            incidence: f64,
            r0: f64,
        }
        let mut rdr = csv::Reader::from_reader(reader);
        expect_headers(&mut rdr, &["day", "s", "i", "r", "incidence", "r0"])?;
        let mut cols: [Vec<f64>; 5] = Default::default();
        let mut start = None;
        for (k, row) in rdr.deserialize().enumerate() {
            let row: Row = row?;
            let first = *start.get_or_insert(row.day);
            if row.day != first + k as i64 {
                return Err(Error::Format(format!(
                    "trajectory day {} out of sequence",
                    row.day
                )));
            }
            for (col, v) in cols
                .iter_mut()
                .zip([row.s, row.i, row.r, row.incidence, row.r0])
            {
                col.push(v);
            }
        }
        let start = start.unwrap_or(0);
        let [s, i, r, incidence, r0] = cols;
        Ok(EpidemicTrajectory {
            s: TimeSeries::new(start, s)?,
            i: TimeSeries::new(start, i)?,
            r: TimeSeries::new(start, r)?,
            incidence: TimeSeries::new(start, incidence)?,
            r0: TimeSeries::new(start, r0)?,
        })
    }
}

/// Draws the piecewise-linear R0 schedule for `config` from its seed.
///
/// Switch times are placed so that consecutive ramps never overlap; odd
/// switches lower R0 into `r0_low_range`, even ones raise it into
/// `r0_high_range`.
pub fn r0_schedule(config: &SirConfig, rng: &mut impl Rng) -> Vec<f64> {
    let horizon = config.horizon_days;
    let ramp = config.intervention_ramp_days;
    let (cmin, cmax) = config.intervention_count_range;
    let drawn = rng.random_range(cmin..=cmax) as usize;
    let feasible = horizon.saturating_sub(1) / (2 * ramp);
    let interventions = drawn.min(feasible);
    let switches = 2 * interventions;

    let slack = horizon - 1 - switches * ramp;
    let mut offsets: Vec<usize> = (0..switches).map(|_| rng.random_range(0..=slack)).collect();
    offsets.sort_unstable();

    let mut schedule = vec![config.r0_initial; horizon];
    let mut level = config.r0_initial;
    for (k, off) in offsets.into_iter().enumerate() {
        let start = 1 + off + k * ramp;
        let (lo, hi) = if k % 2 == 0 {
            config.r0_low_range
        } else {
            config.r0_high_range
        };
        let target = if hi > lo {
            rng.random_range(lo..=hi)
        } else {
            lo
        };
        for j in 0..ramp {
            schedule[start + j] = level + (target - level) * (j + 1) as f64 / ramp as f64;
        }
        for v in &mut schedule[start + ramp..] {
            *v = target;
        }
        level = target;
    }
    schedule
}

/// Steps the SIR recurrence one day at a time under a given R0 schedule.
///
/// `incidence[0]` is the seeded fraction; for `t >= 1`,
/// `incidence[t] = r0[t] * recovery_rate * s[t-1] * i[t-1]`.
pub fn integrate(
    r0: &[f64],
    recovery_rate: f64,
    initial_infected_fraction: f64,
) -> Result<EpidemicTrajectory> {
    if r0.is_empty() {
        return Err(Error::Shape("empty R0 schedule".into()));
    }
    if let Some(bad) = r0.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::Domain(format!(
            "R0 value {bad} must be finite and non-negative"
        )));
    }
    let h = r0.len();
    let (mut s, mut i, mut r) = (
        1.0 - initial_infected_fraction,
        initial_infected_fraction,
        0.0,
    );
    let mut ss = Vec::with_capacity(h);
    let mut is = Vec::with_capacity(h);
    let mut rs = Vec::with_capacity(h);
    let mut inc = Vec::with_capacity(h);
    ss.push(s);
    is.push(i);
    rs.push(r);
    inc.push(initial_infected_fraction);
    for &r0_t in &r0[1..] {
        let beta = r0_t * recovery_rate;
        let new_inf = (beta * s * i).min(s);
        let recovered = recovery_rate * i;
        s -= new_inf;
        i += new_inf - recovered;
        r += recovered;
        ss.push(s);
        is.push(i.max(0.0));
        rs.push(r);
        inc.push(new_inf);
    }
    Ok(EpidemicTrajectory {
        s: TimeSeries::from_values(ss)?,
        i: TimeSeries::from_values(is)?,
        r: TimeSeries::from_values(rs)?,
        incidence: TimeSeries::from_values(inc)?,
        r0: TimeSeries::from_values(r0.to_vec())?,
    })
}

pub fn simulate(config: &SirConfig) -> Result<EpidemicTrajectory> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let schedule = r0_schedule(config, &mut rng);
    integrate(
        &schedule,
        config.recovery_rate,
        config.initial_infected_fraction,
    )
}

/// Tries seeds `config.seed, config.seed + 1, ...` and returns the first
/// trajectory whose incidence has at least `min_peaks` peaks with
/// prominence of 10% of its maximum, together with the accepted seed.
pub fn simulate_multiwave(
    config: &SirConfig,
    min_peaks: usize,
    max_attempts: usize,
) -> Result<(EpidemicTrajectory, u64)> {
    config.validate()?;
    for attempt in 0..max_attempts.max(1) {
        let seed = config.seed.wrapping_add(attempt as u64);
        let traj = simulate(&SirConfig {
            seed,
            ..config.clone()
        })?;
        let (_, peak) = min_max(traj.incidence.values());
        if peak_count(&traj.incidence, 0.1 * peak)? >= min_peaks {
            return Ok((traj, seed));
        }
    }
    Err(Error::Domain(format!(
        "no seed in {}..+{max_attempts} produced {min_peaks} incidence peaks",
        config.seed
    )))
}

/// `f[t] = sum_{tau < period} incidence[t - tau]`, clamped to `[0, 1]`.
pub fn hidden_fraction(traj: &EpidemicTrajectory, period: usize) -> Result<TimeSeries> {
    if period == 0 {
        return Err(Error::config("period", "must be at least 1"));
    }
    let inc = traj.incidence.values();
    let out = (0..inc.len())
        .map(|t| {
            let total: f64 = inc[t.saturating_sub(period - 1)..=t].iter().sum();
            total.clamp(0.0, 1.0)
        })
        .collect();
    TimeSeries::new(traj.incidence.start_day(), out)
}

/// Number of local maxima rising at least `min_prominence` above both
/// flanking minima.
///
/// The flank on each side runs to the nearest strictly higher sample (or
/// the series end); plateaus count as a single maximum.
pub fn peak_count(s: &TimeSeries, min_prominence: f64) -> Result<usize> {
    if !(min_prominence > 0.0) {
        return Err(Error::Domain("min_prominence must be positive".into()));
    }
    let v = s.values();
    let n = v.len();
    let mut count = 0;
    let mut t = 1;
    while t + 1 < n {
        if v[t] > v[t - 1] {
            // walk across a plateau
            let mut end = t;
            while end + 1 < n && v[end + 1] == v[t] {
                end += 1;
            }
            if end + 1 < n && v[end + 1] < v[t] {
                let height = v[t];
                let mut left_min = height;
                for &x in v[..t].iter().rev() {
                    if x > height {
                        break;
                    }
                    left_min = left_min.min(x);
                }
                let mut right_min = height;
                for &x in &v[end + 1..] {
                    if x > height {
                        break;
                    }
                    right_min = right_min.min(x);
                }
                if height - left_min.max(right_min) >= min_prominence {
                    count += 1;
                }
            }
            t = end + 1;
        } else {
            t += 1;
        }
    }
    Ok(count)
}
