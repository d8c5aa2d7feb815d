//! Simulated daily surveys over a latent bipartite graph.
//!
//! Each day a fresh set of respondents is drawn. A respondent's target
//! degree comes from a truncated `k^-2` power law, its realized neighbour
//! count from `Binomial(n_d, degree / n_d)`, and each neighbour belongs to
//! the hidden population independently with probability `f_t`. The graph
//! itself is never materialized.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Binomial};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timeseries::{expect_headers, TimeSeries};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurveyConfig {
    /// Approximate mean degree of the latent graph.
    pub d: f64,
    /// Daily respondent cap; the actual tally is uniform on `1..=n`.
    pub n: usize,
    /// Number of nodes the respondents can potentially cover.
    pub n_d: u64,
    /// Look-back window of the survey question, in days.
    pub period: usize,
    pub seed: u64,
}

impl Default for SurveyConfig {
    fn default() -> Self {
        SurveyConfig {
            d: 5.0,
            n: 20,
            n_d: 60,
            period: 7,
            seed: 1,
        }
    }
}

impl SurveyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::config("n", "must be positive"));
        }
        if self.n_d < 2 {
            return Err(Error::config("n_d", "must be at least 2"));
        }
        if self.period == 0 {
            return Err(Error::config("period", "must be positive"));
        }
        if !(self.d >= 1.0 && self.d <= (self.n_d / 2) as f64) {
            return Err(Error::config(
                "d",
                format!("must lie in [1, n_d/2 = {}]", self.n_d / 2),
            ));
        }
        Ok(())
    }
}

/// A `k^-2` law on the integer support `k_min..=k_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct DegreeDistribution {
    k_min: u32,
    pmf: Vec<f64>,
}

impl DegreeDistribution {
    /// Arbitrary weights on `k_min..k_min + weights.len()`; normalized here.
    pub fn from_weights(k_min: u32, weights: Vec<f64>) -> Result<Self> {
        if k_min == 0 {
            return Err(Error::Domain("degrees start at 1".into()));
        }
        let total: f64 = weights.iter().sum();
        if weights.is_empty() || weights.iter().any(|w| !w.is_finite() || *w < 0.0) || total <= 0.0
        {
            return Err(Error::Domain(
                "degree weights must be non-negative with positive sum".into(),
            ));
        }
        Ok(DegreeDistribution {
            k_min,
            pmf: weights.into_iter().map(|w| w / total).collect(),
        })
    }

    pub fn power_law(k_min: u32, k_max: u32) -> Result<Self> {
        if k_max < k_min {
            return Err(Error::Domain("k_max below k_min".into()));
        }
        Self::from_weights(
            k_min,
            (k_min..=k_max).map(|k| (k as f64).powi(-2)).collect(),
        )
    }

    pub fn point_mass(k: u32) -> Result<Self> {
        Self::from_weights(k, vec![1.0])
    }

    pub fn k_min(&self) -> u32 {
        self.k_min
    }

    pub fn k_max(&self) -> u32 {
        self.k_min + self.pmf.len() as u32 - 1
    }

    /// `(k, p_k)` pairs over the support.
    pub fn pmf(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.pmf
            .iter()
            .enumerate()
            .map(|(i, &p)| (self.k_min + i as u32, p))
    }

    pub fn mean(&self) -> f64 {
        self.pmf().map(|(k, p)| k as f64 * p).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.pmf().map(|(k, p)| p * (k as f64 - m).powi(2)).sum()
    }
}

/// Chooses a bounded `k^-2` degree law whose mean is close to `d`.
///
/// The support `k_min..=k_max` never exceeds `n_d / 2`. For each `k_min`
/// from 1 upwards the `k_max` minimizing `|mean - d|` is found (ties go to
/// the smaller `k_max`); the first `k_min` whose best mean is within
/// `5%` of `d` wins. With `k_min = 1` alone the mean grows only
/// logarithmically in `k_max`, so moderate targets such as `d = 5` on a few
/// hundred nodes need a raised lower end.
pub fn degree_distribution(d: f64, n_d: u64) -> Result<DegreeDistribution> {
    let cap = (n_d / 2).min(u32::MAX as u64) as u32;
    if cap < 1 || !(d >= 1.0) || d > cap as f64 {
        return Err(Error::config(
            "d",
            format!("target mean degree {d} unreachable with degrees in [1, {cap}]"),
        ));
    }
    let tol = 0.05 * d;
    // prefix sums of 1/k and 1/k^2
    let mut h1 = vec![0.0; cap as usize + 1];
    let mut h2 = vec![0.0; cap as usize + 1];
    for k in 1..=cap as usize {
        let kf = k as f64;
        h1[k] = h1[k - 1] + 1.0 / kf;
        h2[k] = h2[k - 1] + 1.0 / (kf * kf);
    }
    let mean = |lo: u32, hi: u32| {
        let (lo, hi) = (lo as usize, hi as usize);
        (h1[hi] - h1[lo - 1]) / (h2[hi] - h2[lo - 1])
    };
    let mut best: Option<(f64, u32, u32)> = None;
    for k_min in 1..=cap {
        let mut local: Option<(f64, u32)> = None;
        for k_max in k_min..=cap {
            let err = (mean(k_min, k_max) - d).abs();
            if local.is_none_or(|(e, _)| err < e) {
                local = Some((err, k_max));
            }
        }
        let (err, k_max) = local.expect("non-empty k_max range");
        if best.is_none_or(|(e, _, _)| err < e) {
            best = Some((err, k_min, k_max));
        }
        if err <= tol {
            return DegreeDistribution::power_law(k_min, k_max);
        }
    }
    let (_, k_min, k_max) = best.expect("cap >= 1");
    DegreeDistribution::power_law(k_min, k_max)
}

/// How a respondent's realized neighbour count follows from its target degree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EdgeRealization {
    /// `Binomial(n_d, degree / n_d)` edges, redrawn while zero.
    #[default]
    Binomial,
    /// The target degree is used as is.
    Exact,
}

/// One respondent's answers. Fields absent from a data source are `None`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Response {
    pub indirect: Option<f64>,
    pub degree: Option<u32>,
    pub direct: Option<bool>,
}

/// The responses pooled under one day (or one accumulation bin).
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseBatch {
    pub day: i64,
    /// Number of source days merged into this batch.
    pub span: u32,
    pub responses: Vec<Response>,
}

impl ResponseBatch {
    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    pub fn indirect_counts(&self) -> Option<Vec<f64>> {
        self.responses.iter().map(|r| r.indirect).collect()
    }

    pub fn degrees(&self) -> Option<Vec<u32>> {
        self.responses.iter().map(|r| r.degree).collect()
    }

    pub fn direct_flags(&self) -> Option<Vec<bool>> {
        self.responses.iter().map(|r| r.direct).collect()
    }
}

/// Writes batches as `day,respondent,indirect_count,degree,direct_flag`.
/// Absent fields are left empty.
pub fn write_batches_csv<W: Write>(batches: &[ResponseBatch], mut w: W) -> Result<()> {
    writeln!(w, "day,respondent,indirect_count,degree,direct_flag")?;
    for b in batches {
        for (i, r) in b.responses.iter().enumerate() {
            let ind = r.indirect.map(|v| v.to_string()).unwrap_or_default();
            let deg = r.degree.map(|v| v.to_string()).unwrap_or_default();
            let dir = r
                .direct
                .map(|v| u8::from(v).to_string())
                .unwrap_or_default();
            writeln!(w, "{},{i},{ind},{deg},{dir}", b.day)?;
        }
    }
    Ok(())
}

/// Reads the batch CSV back, grouping rows by day in ascending order.
pub fn read_batches_csv<R: Read>(reader: R) -> Result<Vec<ResponseBatch>> {
    #[derive(Deserialize)]
    struct Row {
        day: i64,
        #[allow(dead_code)]
        respondent: u64,
        indirect_count: Option<f64>,
        degree: Option<u32>,
        direct_flag: Option<u8>,
    }
    let mut rdr = csv::Reader::from_reader(reader);
    expect_headers(
        &mut rdr,
        &[
            "day",
            "respondent",
            "indirect_count",
            "degree",
            "direct_flag",
        ],
    )?;
    let mut days: BTreeMap<i64, Vec<Response>> = BTreeMap::new();
    for row in rdr.deserialize() {
        let row: Row = row?;
        if row
            .indirect_count
            .is_some_and(|v| !v.is_finite() || v < 0.0)
        {
            return Err(Error::Format(format!(
                "negative indirect count on day {}",
                row.day
            )));
        }
        let direct = match row.direct_flag {
            None => None,
            Some(0) => Some(false),
            Some(1) => Some(true),
            Some(v) => return Err(Error::Format(format!("direct_flag {v} is not 0 or 1"))),
        };
        days.entry(row.day).or_default().push(Response {
            indirect: row.indirect_count,
            degree: row.degree,
            direct,
        });
    }
    Ok(days
        .into_iter()
        .map(|(day, responses)| ResponseBatch {
            day,
            span: 1,
            responses,
        })
        .collect())
}

/// Group-wise multiplicative reporting bias: a respondent falls in group
/// `j` with probability `q_j` and scales its count by `alpha_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasGroups {
    groups: Vec<(f64, f64)>,
}

impl BiasGroups {
    pub fn new(groups: Vec<(f64, f64)>) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::config("bias", "at least one group is required"));
        }
        if groups
            .iter()
            .any(|&(q, a)| !(q >= 0.0) || !(a > 0.0) || !a.is_finite())
        {
            return Err(Error::config("bias", "need q_j >= 0 and alpha_j > 0"));
        }
        let total: f64 = groups.iter().map(|g| g.0).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::config(
                "bias",
                format!("group probabilities sum to {total}, not 1"),
            ));
        }
        Ok(BiasGroups { groups })
    }

    /// `(q_j, alpha_j)` pairs.
    pub fn groups(&self) -> &[(f64, f64)] {
        &self.groups
    }
}

/// Draws respondents for one survey configuration.
#[derive(Debug, Clone)]
pub struct SurveySampler {
    config: SurveyConfig,
    degrees: DegreeDistribution,
    degree_index: WeightedIndex<f64>,
    edges: EdgeRealization,
}

impl SurveySampler {
    pub fn new(config: SurveyConfig) -> Result<Self> {
        config.validate()?;
        let degrees = degree_distribution(config.d, config.n_d)?;
        Self::with_distribution(config, degrees, EdgeRealization::Binomial)
    }

    /// Uses a caller-chosen degree law instead of the fitted power law.
    pub fn with_distribution(
        config: SurveyConfig,
        degrees: DegreeDistribution,
        edges: EdgeRealization,
    ) -> Result<Self> {
        if config.n == 0 {
            return Err(Error::config("n", "must be positive"));
        }
        if edges == EdgeRealization::Binomial && degrees.k_max() as u64 > config.n_d {
            return Err(Error::config("n_d", "smaller than the largest degree"));
        }
        let degree_index = WeightedIndex::new(degrees.pmf.iter().copied())
            .map_err(|e| Error::Domain(format!("degree pmf: {e}")))?;
        Ok(SurveySampler {
            config,
            degrees,
            degree_index,
            edges,
        })
    }

    pub fn config(&self) -> &SurveyConfig {
        &self.config
    }

    pub fn degrees(&self) -> &DegreeDistribution {
        &self.degrees
    }

    fn realized_degree<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let target = self.degrees.k_min + self.degree_index.sample(rng) as u32;
        match self.edges {
            EdgeRealization::Exact => target,
            EdgeRealization::Binomial => {
                let n_d = self.config.n_d;
                let edges = Binomial::new(n_d, target as f64 / n_d as f64)
                    .expect("degree probability within [0, 1]");
                loop {
                    let b = edges.sample(rng);
                    if b > 0 {
                        break b as u32;
                    }
                }
            }
        }
    }

    /// One respondent at hidden fraction `f`.
    pub fn respond<R: Rng + ?Sized>(&self, f: f64, rng: &mut R) -> Response {
        let degree = self.realized_degree(rng);
        let indirect = Binomial::new(degree as u64, f)
            .expect("f within [0, 1]")
            .sample(rng) as f64;
        let direct = Bernoulli::new(f).expect("f within [0, 1]").sample(rng);
        Response {
            indirect: Some(indirect),
            degree: Some(degree),
            direct: Some(direct),
        }
    }

    /// `count` respondents at hidden fraction `f`, ignoring the daily cap.
    pub fn respond_many<R: Rng + ?Sized>(
        &self,
        f: f64,
        count: usize,
        rng: &mut R,
    ) -> Vec<Response> {
        (0..count).map(|_| self.respond(f, rng)).collect()
    }
}

/// Simulates one day's survey: `n_t ~ U{1..=n}` respondents at fraction `f_t`.
pub fn run_day<R: Rng + ?Sized>(
    day: i64,
    f_t: f64,
    sampler: &SurveySampler,
    rng: &mut R,
) -> Result<ResponseBatch> {
    if !(0.0..=1.0).contains(&f_t) {
        return Err(Error::Domain(format!(
            "hidden fraction {f_t} outside [0, 1]"
        )));
    }
    let n_t = rng.random_range(1..=sampler.config.n);
    Ok(ResponseBatch {
        day,
        span: 1,
        responses: sampler.respond_many(f_t, n_t, rng),
    })
}

/// Runs [`run_day`] for every day of `hidden`, seeded from the sampler config.
pub fn simulate_survey(hidden: &TimeSeries, sampler: &SurveySampler) -> Result<Vec<ResponseBatch>> {
    let mut rng = ChaCha8Rng::seed_from_u64(sampler.config.seed);
    hidden
        .iter()
        .map(|(day, f)| run_day(day, f, sampler, &mut rng))
        .collect()
}

/// Scales each respondent's indirect count by its randomly assigned group factor.
pub fn apply_bias<R: Rng + ?Sized>(
    batch: &ResponseBatch,
    bias: &BiasGroups,
    rng: &mut R,
) -> Result<ResponseBatch> {
    let index = WeightedIndex::new(bias.groups.iter().map(|g| g.0))
        .map_err(|e| Error::Domain(format!("bias weights: {e}")))?;
    let responses = batch
        .responses
        .iter()
        .map(|r| {
            let alpha = bias.groups[index.sample(rng)].1;
            Response {
                indirect: r.indirect.map(|x| x * alpha),
                ..*r
            }
        })
        .collect();
    Ok(ResponseBatch {
        responses,
        ..batch.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(d: f64, n: usize, n_d: u64) -> SurveyConfig {
        SurveyConfig {
            d,
            n,
            n_d,
            period: 7,
            seed: 3,
        }
    }

    /// Mean of `k^-2` on `lo..=hi`, summed directly.
    fn oracle_mean(lo: u32, hi: u32) -> f64 {
        let num: f64 = (lo..=hi).map(|k| 1.0 / k as f64).sum();
        let den: f64 = (lo..=hi).map(|k| 1.0 / (k as f64).powi(2)).sum();
        num / den
    }

    #[test]
    fn degenerate_degree_target() {
        let dist = degree_distribution(1.0, 480).unwrap();
        assert_eq!((dist.k_min(), dist.k_max()), (1, 1));
        assert_eq!(dist.mean(), 1.0);
    }

    #[test]
    fn degree_search_matches_exhaustive_oracle() {
        for &(d, n_d) in &[(5.0, 480u64), (5.0, 60), (2.0, 100), (12.5, 480), (3.0, 10)] {
            let dist = degree_distribution(d, n_d).unwrap();
            let cap = (n_d / 2) as u32;
            // exhaustive over every (k_min, k_max) pair
            let mut expected = None;
            'outer: for lo in 1..=cap {
                let mut best: Option<(f64, u32)> = None;
                for hi in lo..=cap {
                    let e = (oracle_mean(lo, hi) - d).abs();
                    if best.is_none_or(|b| e < b.0) {
                        best = Some((e, hi));
                    }
                }
                let (e, hi) = best.unwrap();
                if e <= 0.05 * d {
                    expected = Some((lo, hi));
                    break 'outer;
                }
            }
            assert_eq!(
                Some((dist.k_min(), dist.k_max())),
                expected,
                "d={d} n_d={n_d}"
            );
            assert!((dist.mean() - oracle_mean(dist.k_min(), dist.k_max())).abs() < 1e-9);
            assert!((dist.mean() - d).abs() <= 0.5);
        }
    }

    #[test]
    fn unreachable_degree_is_config_error() {
        assert!(matches!(
            degree_distribution(480.0, 480),
            Err(Error::Config { .. })
        ));
        assert!(matches!(
            degree_distribution(0.5, 480),
            Err(Error::Config { .. })
        ));
    }

    #[test]
    fn extreme_fractions() {
        let sampler = SurveySampler::new(config(5.0, 50, 480)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let zero = run_day(0, 0.0, &sampler, &mut rng).unwrap();
        assert!(zero
            .responses
            .iter()
            .all(|r| r.indirect == Some(0.0) && r.direct == Some(false)));
        let one = run_day(1, 1.0, &sampler, &mut rng).unwrap();
        for r in &one.responses {
            assert_eq!(r.indirect, Some(r.degree.unwrap() as f64));
            assert_eq!(r.direct, Some(true));
        }
        assert!(!one.is_empty() && one.len() <= 50);
        assert!(run_day(2, 1.5, &sampler, &mut rng).is_err());
    }

    #[test]
    fn counts_never_exceed_degrees() {
        let sampler = SurveySampler::new(config(5.0, 30, 60)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for day in 0..50 {
            let b = run_day(day, 0.3, &sampler, &mut rng).unwrap();
            for r in &b.responses {
                assert!(r.degree.unwrap() >= 1);
                assert!(r.indirect.unwrap() <= r.degree.unwrap() as f64);
            }
        }
    }

    #[test]
    fn mean_response_is_proportional_to_fraction() {
        let sampler = SurveySampler::new(config(5.0, 1, 480)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let f = 0.1;
        let rs = sampler.respond_many(f, 100_000, &mut rng);
        let n = rs.len() as f64;
        let mu_d = rs.iter().map(|r| r.degree.unwrap() as f64).sum::<f64>() / n;
        let ratios: Vec<f64> = rs.iter().map(|r| r.indirect.unwrap() / mu_d).collect();
        let mean = ratios.iter().sum::<f64>() / n;
        let sd = (ratios.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((mean - f).abs() < 3.0 * sd / n.sqrt(), "mean {mean}");
    }

    #[test]
    fn regular_graph_variance() {
        let k = 8;
        let f = 0.2;
        let sampler = SurveySampler::with_distribution(
            config(8.0, 1, 480),
            DegreeDistribution::point_mass(k).unwrap(),
            EdgeRealization::Exact,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xs: Vec<f64> = sampler
            .respond_many(f, 100_000, &mut rng)
            .iter()
            .map(|r| r.indirect.unwrap())
            .collect();
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
        let se = ((m4 - var * var) / n).sqrt();
        let expected = k as f64 * f * (1.0 - f);
        assert!((var - expected).abs() < 3.0 * se, "var {var} vs {expected}");
    }

    #[test]
    fn identity_and_doubling_bias() {
        let sampler = SurveySampler::new(config(5.0, 40, 480)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let batch = run_day(0, 0.2, &sampler, &mut rng).unwrap();
        let same = apply_bias(
            &batch,
            &BiasGroups::new(vec![(1.0, 1.0)]).unwrap(),
            &mut rng,
        )
        .unwrap();
        assert_eq!(same, batch);
        let doubled = apply_bias(
            &batch,
            &BiasGroups::new(vec![(1.0, 2.0)]).unwrap(),
            &mut rng,
        )
        .unwrap();
        for (a, b) in batch.responses.iter().zip(&doubled.responses) {
            assert_eq!(b.indirect.unwrap(), 2.0 * a.indirect.unwrap());
            assert_eq!((a.degree, a.direct), (b.degree, b.direct));
        }
    }

    #[test]
    fn mixed_bias_preserves_mean_when_factor_is_one() {
        let sampler = SurveySampler::new(config(5.0, 1, 480)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let batch = ResponseBatch {
            day: 0,
            span: 1,
            responses: sampler.respond_many(0.1, 100_000, &mut rng),
        };
        let bias = BiasGroups::new(vec![(0.5, 0.5), (0.5, 1.5)]).unwrap();
        let biased = apply_bias(&batch, &bias, &mut rng).unwrap();
        let xs = biased.indirect_counts().unwrap();
        let base = batch.indirect_counts().unwrap();
        let n = xs.len() as f64;
        let mb = base.iter().sum::<f64>() / n;
        let m = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        // ratio standard error via the biased sample's spread
        let se = var.sqrt() / n.sqrt() / mb;
        assert!((m / mb - 1.0).abs() < 3.0 * se, "ratio {}", m / mb);
    }

    #[test]
    fn bias_groups_validate() {
        assert!(BiasGroups::new(vec![(0.5, 1.0)]).is_err());
        assert!(BiasGroups::new(vec![(1.0, 0.0)]).is_err());
        assert!(BiasGroups::new(vec![]).is_err());
    }

    #[test]
    fn simulation_is_reproducible() {
        let sampler = SurveySampler::new(config(5.0, 20, 60)).unwrap();
        let f = TimeSeries::from_values(vec![0.05; 30]).unwrap();
        assert_eq!(
            simulate_survey(&f, &sampler).unwrap(),
            simulate_survey(&f, &sampler).unwrap()
        );
    }

    #[test]
    fn batch_csv_round_trip() {
        let sampler = SurveySampler::new(config(5.0, 5, 60)).unwrap();
        let f = TimeSeries::from_values(vec![0.1, 0.2, 0.3]).unwrap();
        let batches = simulate_survey(&f, &sampler).unwrap();
        let mut buf = Vec::new();
        write_batches_csv(&batches, &mut buf).unwrap();
        assert_eq!(read_batches_csv(buf.as_slice()).unwrap(), batches);

        let partial = "day,respondent,indirect_count,degree,direct_flag\n0,0,2,,\n0,1,1,,1\n";
        let b = read_batches_csv(partial.as_bytes()).unwrap();
        assert_eq!(b[0].indirect_counts(), Some(vec![2.0, 1.0]));
        assert_eq!(b[0].degrees(), None);
        assert_eq!(b[0].direct_flags(), None);
    }
}
