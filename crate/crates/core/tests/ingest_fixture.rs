use std::fs::File;
use std::path::PathBuf;

use chrono::NaiveDate;
use nowcast::ingest::{
    load_reference, outlier_filter, read_survey_csv, to_batches, CaseMode, Question, Rule,
    DEFAULT_DENOISE_WIDTH,
};

fn fixture(name: &str) -> File {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name);
    File::open(p).unwrap()
}

// (question, null, R1, R2, R3) as planted by the fixture generator
const EXPECTED: [(Question, usize, usize, usize, usize); 3] = [
    (Question::Household, 7, 6, 4, 6),
    (Question::Community, 2, 6, 4, 6),
    (Question::Direct, 1, 6, 4, 6),
];

#[test]
fn fixture_filter_counts_are_exact() {
    let rows = read_survey_csv(fixture("survey_ctis_like.csv")).unwrap();
    assert_eq!(rows.len(), 2836);
    for (q, null, r1, r2, r3) in EXPECTED {
        let (kept, report) = outlier_filter(&rows, q);
        assert_eq!(report.removed(Rule::Null), null, "{q}");
        assert_eq!(report.removed(Rule::R1), r1, "{q}");
        assert_eq!(report.removed(Rule::R2), r2, "{q}");
        assert_eq!(report.removed(Rule::R3), r3, "{q}");
        assert_eq!(report.rows_in, 2836);
        assert_eq!(report.rows_out, 2836 - null - r1 - r2 - r3);
        assert_eq!(kept.len(), report.rows_out);
    }
}

#[test]
fn fixture_batches_cover_every_day_in_order() {
    let rows = read_survey_csv(fixture("survey_ctis_like.csv")).unwrap();
    let (kept, _) = outlier_filter(&rows, Question::Household);
    let (origin, batches) = to_batches(&kept, Question::Household).unwrap();
    assert_eq!(origin, NaiveDate::from_ymd_opt(2021, 1, 4).unwrap());
    assert_eq!(batches.len(), 84);
    for (k, b) in batches.iter().enumerate() {
        assert_eq!(b.day, k as i64);
        let xs = b.indirect_counts().unwrap();
        let ds = b.degrees().unwrap();
        assert!(xs.iter().zip(&ds).all(|(x, d)| *x <= *d as f64));
    }
}

#[test]
fn fixture_reference_is_clamped_and_aligned() {
    let origin = NaiveDate::from_ymd_opt(2021, 1, 4).unwrap();
    let s = load_reference(
        fixture("cases_cumulative.csv"),
        CaseMode::Cumulative,
        DEFAULT_DENOISE_WIDTH,
        origin,
    )
    .unwrap();
    // differencing drops the first date
    assert_eq!(s.start_day(), -6);
    assert_eq!(s.end_day(), 90);
    assert!(s.values().iter().all(|v| *v > 0.0));
    let raw = load_reference(
        fixture("cases_cumulative.csv"),
        CaseMode::Cumulative,
        1,
        origin,
    )
    .unwrap();
    assert_eq!(raw.get(30), Some(0.0));
}
