//! Day-indexed series of non-negative reals and the shared diagnostics
//! computed on them: relative differences, range normalization and MAE.

use std::io::{Read, Write};

use serde::Deserialize;

use crate::error::{Error, Result};

/// Ordered, finite, non-negative values indexed by consecutive integer days.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    start_day: i64,
    values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(start_day: i64, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Shape(
                "time series must hold at least one value".into(),
            ));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(Error::Domain(format!(
                "value {v} at day {} is not finite and non-negative",
                start_day + i as i64
            )));
        }
        Ok(TimeSeries { start_day, values })
    }

    /// Series starting at day 0.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        Self::new(0, values)
    }

    pub fn start_day(&self) -> i64 {
        self.start_day
    }

    pub fn end_day(&self) -> i64 {
        self.start_day + self.values.len() as i64 - 1
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, day: i64) -> Option<f64> {
        let idx = day.checked_sub(self.start_day)?;
        usize::try_from(idx)
            .ok()
            .and_then(|i| self.values.get(i).copied())
    }

    pub fn days(&self) -> impl Iterator<Item = i64> + '_ {
        (0..self.values.len() as i64).map(move |i| self.start_day + i)
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.days().zip(self.values.iter().copied())
    }

    /// Sub-series covering `[from, to]` (inclusive), clipped to the stored range.
    pub fn slice_days(&self, from: i64, to: i64) -> Result<Self> {
        let lo = from.max(self.start_day);
        let hi = to.min(self.end_day());
        if lo > hi {
            return Err(Error::Range(format!(
                "days [{from}, {to}] do not overlap [{}, {}]",
                self.start_day,
                self.end_day()
            )));
        }
        let a = (lo - self.start_day) as usize;
        let b = (hi - self.start_day) as usize;
        Ok(TimeSeries {
            start_day: lo,
            values: self.values[a..=b].to_vec(),
        })
    }

    /// Multiplies every value by a non-negative constant.
    pub fn scale(&self, c: f64) -> Result<Self> {
        TimeSeries::new(self.start_day, self.values.iter().map(|v| v * c).collect())
    }

    fn require_positive(&self) -> Result<()> {
        match self.iter().find(|(_, v)| *v <= 0.0) {
            Some((day, _)) => Err(Error::Domain(format!(
                "relative differences need strictly positive values; day {day} is zero"
            ))),
            None => Ok(()),
        }
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            day: i64,
            value: f64,
        }
        let mut rdr = csv::Reader::from_reader(reader);
        expect_headers(&mut rdr, &["day", "value"])?;
        let mut start = None;
        let mut prev: Option<i64> = None;
        let mut values = Vec::new();
        for row in rdr.deserialize() {
            let row: Row = row?;
            if let Some(p) = prev {
                if row.day != p + 1 {
                    return Err(Error::Format(format!(
                        "days must be consecutive increasing integers; {} follows {p}",
                        row.day
                    )));
                }
            }
            start.get_or_insert(row.day);
            prev = Some(row.day);
            values.push(row.value);
        }
        TimeSeries::new(start.unwrap_or(0), values)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "day,value")?;
        for (day, v) in self.iter() {
            writeln!(w, "{day},{v}")?;
        }
        Ok(())
    }
}

/// Fails unless the reader's header row equals `expected` exactly.
pub(crate) fn expect_headers<R: Read>(rdr: &mut csv::Reader<R>, expected: &[&str]) -> Result<()> {
    let headers = rdr.headers()?;
    if headers.iter().ne(expected.iter().copied()) {
        return Err(Error::Format(format!(
            "expected header `{}`, found `{}`",
            expected.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    Ok(())
}

/// `|s[t+1] - s[t]| / s[t]` for every consecutive pair.
pub fn first_diff_ratio(s: &TimeSeries) -> Result<TimeSeries> {
    s.require_positive()?;
    if s.len() < 2 {
        return Err(Error::Shape(
            "first differences need at least 2 values".into(),
        ));
    }
    let v = s.values();
    let out = v.windows(2).map(|p| (p[1] - p[0]).abs() / p[0]).collect();
    TimeSeries::new(s.start_day(), out)
}

/// `|s[t+1] - 2 s[t] + s[t-1]| / s[t]` at every interior point.
pub fn second_diff_ratio(s: &TimeSeries) -> Result<TimeSeries> {
    s.require_positive()?;
    if s.len() < 3 {
        return Err(Error::Shape(
            "second differences need at least 3 values".into(),
        ));
    }
    let v = s.values();
    let out = v
        .windows(3)
        .map(|p| (p[2] - 2.0 * p[1] + p[0]).abs() / p[1])
        .collect();
    TimeSeries::new(s.start_day() + 1, out)
}

/// Affine map sending the minimum to 0 and the maximum to 1.
///
/// A constant series maps to all zeros.
pub fn range_normalize(s: &TimeSeries) -> TimeSeries {
    let (lo, hi) = min_max(s.values());
    let span = hi - lo;
    let values = if span > 0.0 {
        s.values()
            .iter()
            .map(|v| ((v - lo) / span).clamp(0.0, 1.0))
            .collect()
    } else {
        vec![0.0; s.len()]
    };
    TimeSeries {
        start_day: s.start_day(),
        values,
    }
}

pub(crate) fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        })
}

/// Mean absolute error between two equally long series.
pub fn mae(a: &TimeSeries, b: &TimeSeries) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "cannot compare series of lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let total: f64 = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y).abs())
        .sum();
    Ok(total / a.len() as f64)
}

/// Largest observed relative first and second differences, `(eps1, eps2)`.
pub fn empirical_smoothness(s: &TimeSeries) -> Result<(f64, f64)> {
    let d1 = first_diff_ratio(s)?;
    let d2 = second_diff_ratio(s)?;
    Ok((max_of(d1.values()), max_of(d2.values())))
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(0.0, f64::max)
}
