//! Reading survey microdata and official case counts.
//!
//! Survey rows pass through a null check and three outlier rules before
//! being grouped into daily response batches. Case counts are differenced
//! (if cumulative), clamped at zero and smoothed with a centered rolling
//! mean.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::survey::{Response, ResponseBatch};
use crate::timeseries::{expect_headers, TimeSeries};

pub const SURVEY_HEADER: [&str; 9] = [
    "date",
    "household_cli",
    "household_size",
    "community_cli",
    "symptom_days",
    "tested_positive",
    "age_lt18",
    "age_18_64",
    "age_ge65",
];

pub const REFERENCE_HEADER: [&str; 2] = ["date", "cases"];

/// Upper limit for household CLI, age-range counts and symptom days.
pub const MAX_REPORTED: i64 = 100;

pub const DEFAULT_DENOISE_WIDTH: usize = 7;

/// One survey response as read from disk, before any validation.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct RawSurveyRow {
    pub date: NaiveDate,
    pub household_cli: Option<i64>,
    pub household_size: Option<i64>,
    pub community_cli: Option<i64>,
    pub symptom_days: Option<i64>,
    pub tested_positive: Option<i64>,
    pub age_lt18: Option<i64>,
    pub age_18_64: Option<i64>,
    pub age_ge65: Option<i64>,
}

impl RawSurveyRow {
    fn numeric(&self) -> [Option<i64>; 8] {
        [
            self.household_cli,
            self.household_size,
            self.community_cli,
            self.symptom_days,
            self.tested_positive,
            self.age_lt18,
            self.age_18_64,
            self.age_ge65,
        ]
    }

    fn ages(&self) -> [Option<i64>; 3] {
        [self.age_lt18, self.age_18_64, self.age_ge65]
    }
}

pub fn read_survey_csv<R: Read>(reader: R) -> Result<Vec<RawSurveyRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    expect_headers(&mut rdr, &SURVEY_HEADER)?;
    rdr.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

/// Which survey question feeds the estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Question {
    /// CLI cases in the respondent's household; household size is the degree.
    Household,
    /// CLI cases in the respondent's community; no degree is known.
    Community,
    /// The respondent's own positive test.
    Direct,
}

impl Question {
    pub const ALL: [Question; 3] = [Question::Household, Question::Community, Question::Direct];

    fn required(self, row: &RawSurveyRow) -> bool {
        match self {
            Question::Household => row.household_cli.is_some() && row.household_size.is_some(),
            Question::Community => row.community_cli.is_some(),
            Question::Direct => row.tested_positive.is_some(),
        }
    }
}

impl fmt::Display for Question {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Question::Household => "household",
            Question::Community => "community",
            Question::Direct => "direct",
        })
    }
}

impl FromStr for Question {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "household" => Ok(Question::Household),
            "community" => Ok(Question::Community),
            "direct" => Ok(Question::Direct),
            _ => Err(Error::config(
                "question",
                format!("unknown question `{s}` (household, community, direct)"),
            )),
        }
    }
}

/// Reasons a row is dropped, in the order they are checked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Rule {
    /// A field the chosen question needs is missing.
    Null,
    /// A negative value in a numeric field.
    R1,
    /// More than 100 household CLI cases, people in an age range, or days
    /// with symptoms.
    R2,
    /// Household CLI with no symptom days, more CLI cases than household
    /// members, or a test result other than 0 or 1.
    R3,
}

impl Rule {
    pub const ALL: [Rule; 4] = [Rule::Null, Rule::R1, Rule::R2, Rule::R3];

    pub fn name(self) -> &'static str {
        match self {
            Rule::Null => "null",
            Rule::R1 => "R1",
            Rule::R2 => "R2",
            Rule::R3 => "R3",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilterReport {
    pub rows_in: usize,
    pub rows_out: usize,
    /// Keyed by [`Rule::name`]; every rule is present, possibly with 0.
    pub removed_by_rule: BTreeMap<String, usize>,
}

impl FilterReport {
    pub fn removed(&self, rule: Rule) -> usize {
        self.removed_by_rule.get(rule.name()).copied().unwrap_or(0)
    }
}

/// The first rule `row` violates, if any.
pub fn violated_rule(row: &RawSurveyRow, question: Question) -> Option<Rule> {
    if !question.required(row) {
        return Some(Rule::Null);
    }
    if row.numeric().iter().flatten().any(|&v| v < 0) {
        return Some(Rule::R1);
    }
    let too_many = |v: Option<i64>| v.is_some_and(|v| v > MAX_REPORTED);
    if too_many(row.household_cli)
        || too_many(row.symptom_days)
        || row.ages().into_iter().any(too_many)
    {
        return Some(Rule::R2);
    }
    let cli_without_symptoms = matches!(
        (row.household_cli, row.symptom_days),
        (Some(c), Some(0)) if c > 0
    );
    let cli_exceeds_size = matches!(
        (row.household_cli, row.household_size),
        (Some(c), Some(s)) if c > s
    );
    let bad_test = row.tested_positive.is_some_and(|v| v > 1);
    if cli_without_symptoms || cli_exceeds_size || bad_test {
        return Some(Rule::R3);
    }
    None
}

/// Keeps the rows passing every rule, each dropped row being charged to the
/// first rule it violates.
pub fn outlier_filter(
    rows: &[RawSurveyRow],
    question: Question,
) -> (Vec<RawSurveyRow>, FilterReport) {
    let mut removed: BTreeMap<String, usize> = Rule::ALL
        .iter()
        .map(|r| (r.name().to_string(), 0))
        .collect();
    let mut kept = Vec::with_capacity(rows.len());
    for row in rows {
        match violated_rule(row, question) {
            Some(rule) => *removed.get_mut(rule.name()).expect("all rules listed") += 1,
            None => kept.push(row.clone()),
        }
    }
    let report = FilterReport {
        rows_in: rows.len(),
        rows_out: kept.len(),
        removed_by_rule: removed,
    };
    (kept, report)
}

fn non_negative(v: i64, field: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Domain(format!("{field} = {v} is not a valid count")))
}

fn response(row: &RawSurveyRow, question: Question) -> Result<Response> {
    let missing = |field: &str| Error::Shape(format!("{} row lacks {field}", row.date));
    let direct = row.tested_positive.map(|v| v == 1);
    Ok(match question {
        Question::Household => Response {
            indirect: Some(non_negative(
                row.household_cli.ok_or_else(|| missing("household_cli"))?,
                "household_cli",
            )? as f64),
            degree: Some(non_negative(
                row.household_size
                    .ok_or_else(|| missing("household_size"))?,
                "household_size",
            )?),
            direct,
        },
        Question::Community => Response {
            indirect: Some(non_negative(
                row.community_cli.ok_or_else(|| missing("community_cli"))?,
                "community_cli",
            )? as f64),
            degree: None,
            direct,
        },
        Question::Direct => Response {
            indirect: None,
            degree: None,
            direct: Some(direct.ok_or_else(|| missing("tested_positive"))?),
        },
    })
}

/// Groups filtered rows into one batch per date, sorted by date. Days are
/// counted from the earliest date, which is returned alongside.
pub fn to_batches(
    rows: &[RawSurveyRow],
    question: Question,
) -> Result<(NaiveDate, Vec<ResponseBatch>)> {
    let mut by_date: BTreeMap<NaiveDate, Vec<Response>> = BTreeMap::new();
    for row in rows {
        by_date
            .entry(row.date)
            .or_default()
            .push(response(row, question)?);
    }
    let origin = *by_date
        .keys()
        .next()
        .ok_or_else(|| Error::Shape("no survey rows left to batch".into()))?;
    let batches = by_date
        .into_iter()
        .map(|(date, responses)| ResponseBatch {
            day: (date - origin).num_days(),
            span: 1,
            responses,
        })
        .collect();
    Ok((origin, batches))
}

/// How the `cases` column of a reference file counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseMode {
    Cumulative,
    Daily,
}

impl FromStr for CaseMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cumulative" => Ok(CaseMode::Cumulative),
            "daily" => Ok(CaseMode::Daily),
            _ => Err(Error::config(
                "mode",
                format!("unknown case mode `{s}` (cumulative, daily)"),
            )),
        }
    }
}

/// Successive differences with negative corrections clamped to zero.
pub fn daily_from_cumulative(cumulative: &[f64]) -> Vec<f64> {
    cumulative
        .windows(2)
        .map(|p| (p[1] - p[0]).max(0.0))
        .collect()
}

/// Centered rolling mean of odd `width`, truncated at both ends.
pub fn rolling_mean(values: &[f64], width: usize) -> Result<Vec<f64>> {
    if width == 0 || width.is_multiple_of(2) {
        return Err(Error::config(
            "denoise_width",
            "must be a positive odd integer",
        ));
    }
    let half = width / 2;
    let n = values.len();
    Ok((0..n)
        .map(|t| {
            let win = &values[t.saturating_sub(half)..=(t + half).min(n - 1)];
            let first = win[0];
            // offset from the first entry keeps constant runs exact
            first + win.iter().map(|v| v - first).sum::<f64>() / win.len() as f64
        })
        .map(|v: f64| v.max(0.0))
        .collect())
}

/// Reads `date,cases`, converts to denoised daily counts and indexes the
/// result by days since `origin`.
pub fn load_reference<R: Read>(
    reader: R,
    mode: CaseMode,
    denoise_width: usize,
    origin: NaiveDate,
) -> Result<TimeSeries> {
    #[derive(Deserialize)]
    struct Row {
        date: NaiveDate,
        cases: f64,
    }
    let mut rdr = csv::Reader::from_reader(reader);
    expect_headers(&mut rdr, &REFERENCE_HEADER)?;
    let mut dates: Vec<NaiveDate> = Vec::new();
    let mut cases = Vec::new();
    for row in rdr.deserialize() {
        let row: Row = row?;
        if !row.cases.is_finite() {
            return Err(Error::Format(format!("{}: cases is not finite", row.date)));
        }
        if let Some(prev) = dates.last() {
            if row.date <= *prev {
                return Err(Error::Format(format!(
                    "reference dates must be strictly increasing; {} follows {prev}",
                    row.date
                )));
            }
            if (row.date - *prev).num_days() != 1 {
                return Err(Error::Format(format!(
                    "reference dates skip from {prev} to {}",
                    row.date
                )));
            }
        }
        dates.push(row.date);
        cases.push(row.cases);
    }
    let (first_date, daily) = match mode {
        CaseMode::Cumulative => {
            if dates.len() < 2 {
                return Err(Error::Shape(
                    "cumulative reference needs at least 2 dates".into(),
                ));
            }
            (dates[1], daily_from_cumulative(&cases))
        }
        CaseMode::Daily => {
            let first = *dates
                .first()
                .ok_or_else(|| Error::Shape("empty reference file".into()))?;
            (first, cases.iter().map(|v| v.max(0.0)).collect())
        }
    };
    TimeSeries::new(
        (first_date - origin).num_days(),
        rolling_mean(&daily, denoise_width)?,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(day: u32) -> RawSurveyRow {
        RawSurveyRow {
            date: NaiveDate::from_ymd_opt(2021, 3, day).unwrap(),
            household_cli: Some(0),
            household_size: Some(3),
            community_cli: Some(1),
            symptom_days: Some(0),
            tested_positive: Some(0),
            age_lt18: Some(1),
            age_18_64: Some(2),
            age_ge65: Some(0),
        }
    }

    #[test]
    fn rule_examples() {
        let q = Question::Household;
        let r = RawSurveyRow {
            household_cli: Some(-1),
            ..row(1)
        };
        assert_eq!(violated_rule(&r, q), Some(Rule::R1));
        let r = RawSurveyRow {
            household_cli: Some(101),
            household_size: Some(200),
            symptom_days: Some(3),
            ..row(1)
        };
        assert_eq!(violated_rule(&r, q), Some(Rule::R2));
        let r = RawSurveyRow {
            household_cli: Some(3),
            household_size: Some(2),
            symptom_days: Some(3),
            ..row(1)
        };
        assert_eq!(violated_rule(&r, q), Some(Rule::R3));
        let r = RawSurveyRow {
            household_cli: Some(1),
            symptom_days: Some(0),
            ..row(1)
        };
        assert_eq!(violated_rule(&r, q), Some(Rule::R3));
        // first matching rule wins
        let r = RawSurveyRow {
            household_cli: Some(101),
            age_lt18: Some(-2),
            ..row(1)
        };
        assert_eq!(violated_rule(&r, q), Some(Rule::R1));
        assert_eq!(violated_rule(&row(1), q), None);
    }

    #[test]
    fn null_check_depends_on_question() {
        let r = RawSurveyRow {
            household_size: None,
            ..row(1)
        };
        assert_eq!(violated_rule(&r, Question::Household), Some(Rule::Null));
        assert_eq!(violated_rule(&r, Question::Community), None);
        let r = RawSurveyRow {
            tested_positive: None,
            ..row(1)
        };
        assert_eq!(violated_rule(&r, Question::Direct), Some(Rule::Null));
        assert_eq!(violated_rule(&r, Question::Household), None);
    }

    #[test]
    fn batches_group_and_sort_by_date() {
        let rows = vec![
            RawSurveyRow {
                household_cli: Some(2),
                symptom_days: Some(4),
                ..row(5)
            },
            row(3),
            row(5),
        ];
        let (origin, batches) = to_batches(&rows, Question::Household).unwrap();
        assert_eq!(origin, NaiveDate::from_ymd_opt(2021, 3, 3).unwrap());
        assert_eq!(batches.len(), 2);
        assert_eq!(batches[0].day, 0);
        assert_eq!(batches[1].day, 2);
        assert_eq!(batches[1].indirect_counts().unwrap(), vec![2.0, 0.0]);
        assert_eq!(batches[1].degrees().unwrap(), vec![3, 3]);

        let rows: Vec<_> = [1, 0, 0]
            .into_iter()
            .map(|t| RawSurveyRow {
                tested_positive: Some(t),
                ..row(1)
            })
            .collect();
        let (_, b) = to_batches(&rows, Question::Direct).unwrap();
        assert_eq!(b[0].direct_flags().unwrap(), vec![true, false, false]);
        assert!(b[0].indirect_counts().is_none());

        let (_, b) = to_batches(&rows, Question::Community).unwrap();
        assert!(b[0].degrees().is_none());
    }

    #[test]
    fn reference_examples() {
        assert_eq!(daily_from_cumulative(&[0.0, 10.0, 30.0]), vec![10.0, 20.0]);
        assert_eq!(daily_from_cumulative(&[0.0, 10.0, 5.0]), vec![10.0, 0.0]);
        assert_eq!(rolling_mean(&[4.0; 20], 7).unwrap(), vec![4.0; 20]);
        assert_eq!(
            rolling_mean(&[0.0, 3.0, 6.0, 9.0], 3).unwrap(),
            vec![1.5, 3.0, 6.0, 7.5]
        );
        assert!(rolling_mean(&[1.0], 4).is_err());

        let origin = NaiveDate::from_ymd_opt(2021, 1, 1).unwrap();
        let csv = "date,cases\n2021-01-02,0\n2021-01-03,10\n2021-01-04,30\n";
        let s = load_reference(csv.as_bytes(), CaseMode::Cumulative, 1, origin).unwrap();
        assert_eq!(s.start_day(), 2);
        assert_eq!(s.values(), &[10.0, 20.0]);
        let s = load_reference(csv.as_bytes(), CaseMode::Daily, 1, origin).unwrap();
        assert_eq!(s.start_day(), 1);
    }

    #[test]
    fn reference_rejects_bad_dates() {
        let origin = NaiveDate::from_ymd_opt(2021, 1, 1).unwrap();
        for csv in [
            "date,cases\n2021-01-03,1\n2021-01-02,2\n",
            "date,cases\n2021-01-02,1\n2021-01-02,2\n",
            "date,cases\n2021-01-02,1\n2021-01-04,2\n",
        ] {
            assert!(matches!(
                load_reference(csv.as_bytes(), CaseMode::Daily, 1, origin),
                Err(Error::Format(_))
            ));
        }
        assert!(matches!(
            load_reference("day,cases\n".as_bytes(), CaseMode::Daily, 1, origin),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn survey_csv_reads_blank_cells_as_missing() {
        let csv = format!("{}\n2021-03-01,1,,2,3,0,,1,\n", SURVEY_HEADER.join(","));
        let rows = read_survey_csv(csv.as_bytes()).unwrap();
        assert_eq!(rows[0].household_size, None);
        assert_eq!(rows[0].community_cli, Some(2));
        assert_eq!(rows[0].age_ge65, None);
        let bad = csv.replace("household_cli", "hh_cli");
        assert!(matches!(
            read_survey_csv(bad.as_bytes()),
            Err(Error::Format(_))
        ));
    }

    fn field() -> impl Strategy<Value = Option<i64>> {
        prop_oneof![
            1 => Just(None),
            1 => (-3i64..0).prop_map(Some),
            6 => (0i64..8).prop_map(Some),
            1 => (95i64..110).prop_map(Some),
        ]
    }

    prop_compose! {
        fn raw_row()(day in 1u32..20, f in proptest::collection::vec(field(), 8)) -> RawSurveyRow {
            RawSurveyRow {
                date: NaiveDate::from_ymd_opt(2021, 3, day).unwrap(),
                household_cli: f[0],
                household_size: f[1],
                community_cli: f[2],
                symptom_days: f[3],
                tested_positive: f[4],
                age_lt18: f[5],
                age_18_64: f[6],
                age_ge65: f[7],
            }
        }
    }

    proptest! {
        #[test]
        fn filter_is_idempotent_and_reconciles(
            rows in proptest::collection::vec(raw_row(), 0..80),
            qi in 0usize..3,
        ) {
            let q = Question::ALL[qi];
            let (once, report) = outlier_filter(&rows, q);
            let (twice, again) = outlier_filter(&once, q);
            prop_assert_eq!(&once, &twice);
            prop_assert_eq!(again.rows_out, again.rows_in);
            let removed: usize = report.removed_by_rule.values().sum();
            prop_assert_eq!(report.rows_in, report.rows_out + removed);
            prop_assert_eq!(report.rows_out, once.len());
        }

        #[test]
        fn household_counts_fit_households(rows in proptest::collection::vec(raw_row(), 1..80)) {
            let (kept, _) = outlier_filter(&rows, Question::Household);
            if !kept.is_empty() {
                let (_, batches) = to_batches(&kept, Question::Household).unwrap();
                for b in &batches {
                    let xs = b.indirect_counts().unwrap();
                    let ds = b.degrees().unwrap();
                    for (x, d) in xs.iter().zip(&ds) {
                        prop_assert!(*x <= *d as f64);
                    }
                }
            }
        }
    }
}
