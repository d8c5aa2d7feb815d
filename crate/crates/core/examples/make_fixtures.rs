//! Regenerates the synthetic survey and case-count fixtures.
//!
//! `cargo run -p nowcast --example make_fixtures -- <out-dir>`

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use chrono::{Duration, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

const DAYS: i64 = 84;
const SEED: u64 = 20210104;

fn wave(t: f64) -> f64 {
    1.0 + 6.0 * (-((t - 35.0) / 12.0).powi(2)).exp() + 3.0 * (-((t - 70.0) / 8.0).powi(2)).exp()
}

type Row = [Option<i64>; 8];

fn line(out: &mut String, date: NaiveDate, r: &Row) {
    let cells: Vec<String> = r
        .iter()
        .map(|v| v.map_or(String::new(), |v| v.to_string()))
        .collect();
    writeln!(out, "{date},{}", cells.join(",")).unwrap();
}

fn clean_row(rng: &mut ChaCha8Rng, p: f64) -> Row {
    let size = rng.random_range(1..=6i64);
    let cli = Binomial::new(size as u64, p).unwrap().sample(rng) as i64;
    let community = Binomial::new(40, p).unwrap().sample(rng) as i64;
    let symptoms = if cli > 0 {
        rng.random_range(1..=10)
    } else if rng.random_bool(0.2) {
        rng.random_range(1..=5)
    } else {
        0
    };
    let tested = i64::from(rng.random_bool((2.0 * p).min(1.0)));
    let young = rng.random_range(0..=size);
    let old = rng.random_range(0..=size - young);
    [
        Some(cli),
        Some(size),
        Some(community),
        Some(symptoms),
        Some(tested),
        Some(young),
        Some(size - young - old),
        Some(old),
    ]
}

fn main() {
    let out_dir = PathBuf::from(
        std::env::args()
            .nth(1)
            .unwrap_or_else(|| "crates/core/tests/fixtures".into()),
    );
    fs::create_dir_all(&out_dir).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let origin = NaiveDate::from_ymd_opt(2021, 1, 4).unwrap();

    let mut rows: Vec<(NaiveDate, Row)> = Vec::new();
    for t in 0..DAYS {
        // fraction infected during the last week
        let p = 0.01 * (0..7).map(|k| wave((t - k) as f64)).sum::<f64>() / 7.0;
        for _ in 0..rng.random_range(25..=40) {
            rows.push((origin + Duration::days(t), clean_row(&mut rng, p)));
        }
    }

    let ok = |cli, size, symptoms| -> Row {
        [
            Some(cli),
            Some(size),
            Some(2),
            Some(symptoms),
            Some(0),
            Some(0),
            Some(size),
            Some(0),
        ]
    };
    let with = |mut r: Row, idx: usize, v: Option<i64>| {
        r[idx] = v;
        r
    };
    let injected: Vec<Row> = vec![
        // missing household fields
        with(ok(0, 3, 0), 0, None),
        with(ok(0, 3, 0), 0, None),
        with(ok(0, 3, 0), 0, None),
        with(ok(0, 3, 0), 0, None),
        with(ok(0, 3, 0), 1, None),
        with(ok(0, 3, 0), 1, None),
        with(ok(0, 3, 0), 1, None),
        // missing community or test fields only
        with(ok(0, 3, 0), 2, None),
        with(ok(0, 3, 0), 2, None),
        with(ok(0, 3, 0), 4, None),
        // negative values
        ok(-1, 3, 0),
        ok(0, 3, -3),
        with(ok(0, 3, 0), 5, Some(-1)),
        with(ok(0, 3, 0), 2, Some(-2)),
        with(ok(0, -4, 0), 6, Some(1)),
        with(ok(150, 200, 5), 6, Some(-1)),
        // more than 100
        ok(101, 150, 4),
        ok(0, 3, 120),
        with(ok(0, 3, 0), 7, Some(200)),
        with(ok(0, 3, 0), 5, Some(101)),
        // inconsistent
        ok(3, 2, 5),
        ok(4, 1, 2),
        ok(2, 4, 0),
        ok(1, 1, 0),
        with(ok(0, 3, 0), 4, Some(2)),
        ok(5, 2, 0),
    ];
    for r in injected {
        let t = rng.random_range(0..DAYS);
        rows.push((origin + Duration::days(t), r));
    }
    rows.shuffle(&mut rng);

    let mut survey =
        String::from("date,household_cli,household_size,community_cli,symptom_days,tested_positive,age_lt18,age_18_64,age_ge65\n");
    for (date, r) in &rows {
        line(&mut survey, *date, r);
    }
    fs::write(out_dir.join("survey_ctis_like.csv"), survey).unwrap();

    // cumulative official counts from one week before to one week after the survey
    let mut cases = String::from("date,cases\n");
    let mut total = 50_000.0;
    for t in -7..DAYS + 7 {
        let mut daily = (400.0 * wave(t as f64)).round();
        if t == 30 {
            // a reporting correction
            daily = -250.0;
        }
        total += daily;
        writeln!(cases, "{},{}", origin + Duration::days(t), total).unwrap();
    }
    fs::write(out_dir.join("cases_cumulative.csv"), cases).unwrap();
}
