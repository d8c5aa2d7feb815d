//! Per-bin estimates from survey responses and the moving averages applied
//! on top of them.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::survey::{Response, ResponseBatch};
use crate::timeseries::{expect_headers, TimeSeries};

/// Which survey answer an estimate is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    /// Mean indirect count.
    Ind,
    /// Mean of indirect count divided by respondent degree.
    Nsum,
    /// Mean direct self-report.
    Dir,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Smoothing {
    NoS,
    /// Moving average weighted by per-bin response counts.
    WA,
    /// Plain moving average of the per-bin values.
    UA,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Ind, Method::Nsum, Method::Dir];
}

impl Smoothing {
    pub const ALL: [Smoothing; 3] = [Smoothing::NoS, Smoothing::WA, Smoothing::UA];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Ind => "Ind",
            Method::Nsum => "NSUM",
            Method::Dir => "Dir",
        })
    }
}

impl fmt::Display for Smoothing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Smoothing::NoS => "NoS",
            Smoothing::WA => "WA",
            Smoothing::UA => "UA",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ind" | "indirect" => Ok(Method::Ind),
            "nsum" => Ok(Method::Nsum),
            "dir" | "direct" => Ok(Method::Dir),
            _ => Err(Error::config("method", format!("unknown method `{s}`"))),
        }
    }
}

impl FromStr for Smoothing {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nos" | "none" => Ok(Smoothing::NoS),
            "wa" => Ok(Smoothing::WA),
            "ua" => Ok(Smoothing::UA),
            _ => Err(Error::config(
                "smoothing",
                format!("unknown smoothing `{s}`"),
            )),
        }
    }
}

/// A per-bin estimate series with the response tallies behind each bin.
///
/// A bin with count zero had no responses; its value is a placeholder 0
/// and the moving averages give it no weight.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateSeries {
    pub values: TimeSeries,
    pub counts: Vec<usize>,
    pub method: Method,
    pub smoothing: Smoothing,
    pub accum: u32,
    pub w: usize,
    /// The last bin pools fewer than `accum` days.
    pub partial_tail: bool,
}

impl EstimateSeries {
    pub fn new(values: TimeSeries, counts: Vec<usize>, method: Method) -> Result<Self> {
        if values.len() != counts.len() {
            return Err(Error::Shape(format!(
                "{} values but {} counts",
                values.len(),
                counts.len()
            )));
        }
        Ok(EstimateSeries {
            values,
            counts,
            method,
            smoothing: Smoothing::NoS,
            accum: 1,
            w: 0,
            partial_tail: false,
        })
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn is_missing(&self, idx: usize) -> bool {
        self.counts[idx] == 0
    }

    fn with_values(
        &self,
        values: Vec<f64>,
        counts: Vec<usize>,
        smoothing: Smoothing,
        w: usize,
    ) -> Result<Self> {
        Ok(EstimateSeries {
            values: TimeSeries::new(self.values.start_day(), values)?,
            counts,
            smoothing,
            w,
            ..self.clone()
        })
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "bin,value,n,method,smoothing,accum,w")?;
        for ((bin, v), n) in self.values.iter().zip(&self.counts) {
            writeln!(
                out,
                "{bin},{v},{n},{},{},{},{}",
                self.method, self.smoothing, self.accum, self.w
            )?;
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            bin: i64,
            value: f64,
            n: usize,
            method: String,
            smoothing: String,
            accum: u32,
            w: usize,
        }
        let mut rdr = csv::Reader::from_reader(reader);
        expect_headers(
            &mut rdr,
            &["bin", "value", "n", "method", "smoothing", "accum", "w"],
        )?;
        let mut rows = Vec::new();
        for row in rdr.deserialize() {
            let row: Row = row?;
            rows.push(row);
        }
        let first = rows
            .first()
            .ok_or_else(|| Error::Format("empty estimate file".into()))?;
        let (start, method, smoothing, accum, w) = (
            first.bin,
            first.method.parse::<Method>()?,
            first.smoothing.parse::<Smoothing>()?,
            first.accum,
            first.w,
        );
        for (k, r) in rows.iter().enumerate() {
            if r.bin != start + k as i64 {
                return Err(Error::Format(format!("bin {} out of sequence", r.bin)));
            }
            if r.method.parse::<Method>()? != method
                || r.smoothing.parse::<Smoothing>()? != smoothing
                || r.accum != accum
                || r.w != w
            {
                return Err(Error::Format("metadata columns must be constant".into()));
            }
        }
        let values = TimeSeries::new(start, rows.iter().map(|r| r.value).collect())?;
        let counts = rows.iter().map(|r| r.n).collect();
        Ok(EstimateSeries {
            smoothing,
            accum,
            w,
            ..EstimateSeries::new(values, counts, method)?
        })
    }
}

/// Pools respondents of consecutive `accum`-day blocks (aligned to day 0)
/// into one batch whose day is the block index.
pub fn accumulate(batches: &[ResponseBatch], accum: u32) -> Result<Vec<ResponseBatch>> {
    if batches.is_empty() {
        return Err(Error::Shape("no batches to accumulate".into()));
    }
    if accum == 0 {
        return Err(Error::config("accum", "must be at least 1"));
    }
    if batches.windows(2).any(|p| p[0].day >= p[1].day) {
        return Err(Error::Shape(
            "batches must be sorted by strictly increasing day".into(),
        ));
    }
    if accum == 1 {
        return Ok(batches.to_vec());
    }
    let a = accum as i64;
    let last_day = batches[batches.len() - 1].day;
    let mut out: Vec<ResponseBatch> = Vec::new();
    for b in batches {
        let block = b.day.div_euclid(a);
        match out.last_mut() {
            Some(cur) if cur.day == block => cur.responses.extend_from_slice(&b.responses),
            _ => {
                let covered = (last_day - block * a + 1).min(a);
                out.push(ResponseBatch {
                    day: block,
                    span: covered as u32,
                    responses: b.responses.clone(),
                });
            }
        }
    }
    Ok(out)
}

/// Builds a contiguous estimate series from batches, one bin per day index;
/// days with no batch become missing bins.
fn per_bin<F>(batches: &[ResponseBatch], method: Method, mut stat: F) -> Result<EstimateSeries>
where
    F: FnMut(&[Response]) -> Result<(f64, usize)>,
{
    let first = batches
        .first()
        .ok_or_else(|| Error::Shape("no batches".into()))?;
    let last = &batches[batches.len() - 1];
    if batches.windows(2).any(|p| p[0].day >= p[1].day) {
        return Err(Error::Shape(
            "batches must be sorted by strictly increasing day".into(),
        ));
    }
    let len = (last.day - first.day + 1) as usize;
    let mut values = vec![0.0; len];
    let mut counts = vec![0; len];
    for b in batches {
        if b.is_empty() {
            continue;
        }
        let idx = (b.day - first.day) as usize;
        let (v, n) = stat(&b.responses)?;
        values[idx] = v;
        counts[idx] = n;
    }
    let accum = batches.iter().map(|b| b.span).max().unwrap_or(1).max(1);
    Ok(EstimateSeries {
        accum,
        partial_tail: last.span < accum,
        ..EstimateSeries::new(TimeSeries::new(first.day, values)?, counts, method)?
    })
}

fn mean(xs: impl Iterator<Item = f64>) -> (f64, usize) {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        (0.0, 0)
    } else {
        (sum / n as f64, n)
    }
}

/// Sample mean of the indirect counts in each bin.
pub fn indirect_mean(batches: &[ResponseBatch]) -> Result<EstimateSeries> {
    per_bin(batches, Method::Ind, |rs| {
        let xs: Option<Vec<f64>> = rs.iter().map(|r| r.indirect).collect();
        let xs = xs.ok_or_else(|| Error::Shape("indirect counts absent".into()))?;
        Ok(mean(xs.into_iter()))
    })
}

/// Mean over respondents of `indirect / degree`.
pub fn nsum_mean(batches: &[ResponseBatch]) -> Result<EstimateSeries> {
    per_bin(batches, Method::Nsum, |rs| {
        let mut ratios = Vec::with_capacity(rs.len());
        for r in rs {
            let (x, d) = match (r.indirect, r.degree) {
                (Some(x), Some(d)) => (x, d),
                (None, _) => return Err(Error::Shape("indirect counts absent".into())),
                (_, None) => {
                    return Err(Error::Shape(
                        "degrees absent; NSUM needs respondent degrees".into(),
                    ))
                }
            };
            if d == 0 {
                return Err(Error::Domain("respondent with degree 0".into()));
            }
            ratios.push(x / d as f64);
        }
        Ok(mean(ratios.into_iter()))
    })
}

/// Fraction of respondents reporting themselves in the hidden population.
pub fn direct_mean(batches: &[ResponseBatch]) -> Result<EstimateSeries> {
    per_bin(batches, Method::Dir, |rs| {
        let flags: Option<Vec<bool>> = rs.iter().map(|r| r.direct).collect();
        let flags = flags.ok_or_else(|| Error::Shape("direct flags absent".into()))?;
        Ok(mean(flags.into_iter().map(|b| if b { 1.0 } else { 0.0 })))
    })
}

pub fn estimate(batches: &[ResponseBatch], method: Method) -> Result<EstimateSeries> {
    match method {
        Method::Ind => indirect_mean(batches),
        Method::Nsum => nsum_mean(batches),
        Method::Dir => direct_mean(batches),
    }
}

/// Sample variance of the indirect counts per bin (0 for bins with fewer
/// than two responses).
pub fn bin_variances(batches: &[ResponseBatch]) -> Result<TimeSeries> {
    let e = per_bin(batches, Method::Ind, |rs| {
        let xs: Option<Vec<f64>> = rs.iter().map(|r| r.indirect).collect();
        let xs = xs.ok_or_else(|| Error::Shape("indirect counts absent".into()))?;
        if xs.len() < 2 {
            return Ok((0.0, xs.len()));
        }
        let (m, n) = mean(xs.iter().copied());
        let ss: f64 = xs.iter().map(|x| (x - m).powi(2)).sum();
        Ok((ss / (n - 1) as f64, n))
    })?;
    Ok(e.values)
}

/// Weighted mean of the non-missing window entries, or `None` if all are
/// missing. Computed as an offset from the first entry so constant inputs
/// come back bit-identical.
fn window_mean(entries: impl Iterator<Item = (f64, f64)>) -> Option<f64> {
    let entries: Vec<(f64, f64)> = entries.filter(|&(_, wt)| wt > 0.0).collect();
    let &(anchor, _) = entries.first()?;
    let (mut num, mut den) = (0.0, 0.0);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(v, wt) in &entries {
        num += wt * (v - anchor);
        den += wt;
        lo = lo.min(v);
        hi = hi.max(v);
    }
    Some((anchor + num / den).clamp(lo, hi))
}

fn moving_average(e: &EstimateSeries, w: usize, smoothing: Smoothing) -> Result<EstimateSeries> {
    let v = e.values.values();
    let n = v.len();
    let mut values = Vec::with_capacity(n);
    let mut counts = Vec::with_capacity(n);
    for t in 0..n {
        let lo = t.saturating_sub(w);
        let hi = (t + w).min(n - 1);
        let idx = lo..=hi;
        let n_ref = idx.clone().map(|i| e.counts[i]).max().unwrap_or(0);
        let weight = |i: usize| match (smoothing, e.counts[i]) {
            (_, 0) => 0.0,
            (Smoothing::WA, c) => c as f64 / n_ref as f64,
            _ => 1.0,
        };
        let m = window_mean(idx.clone().map(|i| (v[i], weight(i))));
        values.push(m.unwrap_or(0.0));
        counts.push(idx.map(|i| e.counts[i]).sum());
    }
    e.with_values(values, counts, smoothing, w)
}

/// Count-weighted centered moving average over `[t-w, t+w]`, truncated at
/// the series ends with weights renormalized.
pub fn weighted_ma(e: &EstimateSeries, w: usize) -> Result<EstimateSeries> {
    moving_average(e, w, Smoothing::WA)
}

/// Unweighted centered moving average of the non-missing bins.
pub fn unweighted_ma(e: &EstimateSeries, w: usize) -> Result<EstimateSeries> {
    moving_average(e, w, Smoothing::UA)
}

pub fn smooth(e: &EstimateSeries, smoothing: Smoothing, w: usize) -> Result<EstimateSeries> {
    match smoothing {
        Smoothing::NoS => Ok(e.clone()),
        Smoothing::WA => weighted_ma(e, w),
        Smoothing::UA => unweighted_ma(e, w),
    }
}

/// Proportionality constant `value[tau] / f_tau` linking the mean indirect
/// response to the hidden fraction, from one day where the truth is known.
pub fn calibrate_mu_d(e: &EstimateSeries, f_tau: f64, tau: i64) -> Result<f64> {
    if !(f_tau > 0.0) {
        return Err(Error::Domain(format!(
            "calibration fraction {f_tau} must be positive"
        )));
    }
    let v = e
        .values
        .get(tau)
        .ok_or_else(|| Error::Range(format!("bin {tau} outside the estimate range")))?;
    if e.is_missing((tau - e.values.start_day()) as usize) {
        return Err(Error::Domain(format!("bin {tau} has no responses")));
    }
    Ok(v / f_tau)
}
