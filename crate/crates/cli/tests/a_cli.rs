use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nowcast::estimator::{accumulate, direct_mean, estimate, EstimateSeries, Method};
use nowcast::survey::read_batches_csv;
use nowcast::window::{window_thresholds, SmoothnessProfile};

fn nowcast(out_dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nowcast"))
        .arg("--out-dir")
        .arg(out_dir)
        .args(args)
        .output()
        .unwrap()
}

fn ok(out_dir: &Path, args: &[&str]) -> Output {
    let out = nowcast(out_dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(out_dir: &Path, args: &[&str]) -> i32 {
    nowcast(out_dir, args).status.code().unwrap()
}

fn fixture(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures")
        .join(name)
        .display()
        .to_string()
}

fn s(p: PathBuf) -> String {
    p.display().to_string()
}

/// trajectory plus survey in `root/sim` and `root/survey`, both from `seed`.
fn survey(root: &Path, seed: &str, extra: &[&str]) -> PathBuf {
    ok(
        &root.join("sim"),
        &["--seed", seed, "simulate", "--multiwave", "2"],
    );
    let traj = s(root.join("sim/trajectory.csv"));
    let mut args = vec!["--seed", seed, "survey", "--trajectory", &traj];
    args.extend_from_slice(extra);
    ok(&root.join("survey"), &args);
    root.join("survey")
}

#[test]
fn simulate_writes_one_row_per_day() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("sir.toml");
    fs::write(&cfg, "horizon_days = 120\n").unwrap();
    let out = tmp.path().join("out");
    ok(&out, &["--config", cfg.to_str().unwrap(), "simulate"]);
    let text = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert!(text.starts_with("day,s,i,r,incidence,r0\n"));
    assert_eq!(text.lines().count() - 1, 120);
    assert!(out.join("manifest.json").exists());
}

#[test]
fn simulate_rejects_bad_config() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "r0_low_range = [0.5, 1.2]\n").unwrap();
    assert_eq!(
        code(
            &tmp.path().join("a"),
            &["--config", bad.to_str().unwrap(), "simulate"]
        ),
        2
    );
    let unknown = tmp.path().join("unknown.toml");
    fs::write(&unknown, "populaton = 1000\n").unwrap();
    assert_eq!(
        code(
            &tmp.path().join("b"),
            &["--config", unknown.to_str().unwrap(), "simulate"]
        ),
        2
    );
}

#[test]
fn simulate_is_reproducible_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b, c) = (
        tmp.path().join("a"),
        tmp.path().join("b"),
        tmp.path().join("c"),
    );
    ok(&a, &["--seed", "21", "simulate"]);
    ok(&b, &["--seed", "21", "simulate"]);
    ok(&c, &["--seed", "22", "simulate"]);
    let read = |d: &Path| fs::read(d.join("trajectory.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
}

#[test]
fn direct_estimate_matches_library() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = survey(tmp.path(), "9", &["--n", "20"]);
    let batches = s(dir.join("batches.csv"));
    let out = tmp.path().join("est");
    ok(
        &out,
        &["estimate", "--batches", &batches, "--method", "Dir"],
    );
    let got = EstimateSeries::read_csv(File::open(out.join("Dir-NoS.csv")).unwrap()).unwrap();
    let want = direct_mean(&read_batches_csv(File::open(&batches).unwrap()).unwrap()).unwrap();
    assert_eq!(got, want);

    ok(
        &out,
        &[
            "estimate",
            "--batches",
            &batches,
            "--accum",
            "7",
            "--smoothing",
            "WA",
            "--w",
            "1",
        ],
    );
    let text = fs::read_to_string(out.join("Ind-WA.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("bin,value,n,method,smoothing,accum,w"));
    assert!(lines.all(|l| l.ends_with(",Ind,WA,7,1")));
}

#[test]
fn nsum_needs_degrees() {
    let tmp = tempfile::tempdir().unwrap();
    let ing = tmp.path().join("ingest");
    ok(
        &ing,
        &["ingest", "--survey", &fixture("survey_ctis_like.csv")],
    );
    let community = s(ing.join("batches_community.csv"));
    assert_eq!(
        code(
            &tmp.path().join("est"),
            &["estimate", "--batches", &community, "--method", "NSUM"]
        ),
        3
    );
}

#[test]
fn auto_window_picks_largest_passing_width() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = survey(tmp.path(), "9", &["--n", "40"]);
    let batches = s(dir.join("batches.csv"));
    let out = tmp.path().join("auto");
    ok(
        &out,
        &[
            "estimate",
            "--batches",
            &batches,
            "--accum",
            "7",
            "--auto-window",
            "0.1",
            "--eps-f1",
            "0.02",
            "--eps-f2",
            "0.004",
            "--eps-s1",
            "0.02",
        ],
    );
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("window.json")).unwrap()).unwrap();

    let pooled = accumulate(&read_batches_csv(File::open(&batches).unwrap()).unwrap(), 7).unwrap();
    let counts = estimate(&pooled, Method::Ind).unwrap().counts;
    let profile = SmoothnessProfile {
        eps_f1: 0.02,
        eps_f2: 0.004,
        eps_s1: 0.02,
    };
    let passing = (1..=10usize).filter(|&w| {
        let (l1, l2) = window_thresholds(&counts, &profile, w);
        l1.is_some_and(|l| l <= 0.1) || l2.is_some_and(|l| l <= 0.1)
    });
    let expected = passing.max().unwrap_or(0);
    assert!(expected > 0);
    assert_eq!(report["w_selected"], expected);
    assert_eq!(report["satisfied"], true);
    assert!(out.join("Ind-WA.csv").exists());
}

#[test]
fn auto_window_requires_all_eps_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = survey(tmp.path(), "9", &[]);
    let batches = s(dir.join("batches.csv"));
    assert_eq!(
        code(
            &tmp.path().join("x"),
            &[
                "estimate",
                "--batches",
                &batches,
                "--auto-window",
                "0.1",
                "--eps-f1",
                "0.1"
            ]
        ),
        2
    );
}

fn write_estimate(path: &Path, values: &[f64]) {
    let mut text = String::from("bin,value,n,method,smoothing,accum,w\n");
    for (t, v) in values.iter().enumerate() {
        text.push_str(&format!("{t},{v},10,Ind,NoS,1,0\n"));
    }
    fs::write(path, text).unwrap();
}

fn write_series(path: &Path, start: i64, values: &[f64]) {
    let mut text = String::from("day,value\n");
    for (t, v) in values.iter().enumerate() {
        text.push_str(&format!("{},{v}\n", start + t as i64));
    }
    fs::write(path, text).unwrap();
}

#[test]
fn evaluate_scores_and_marks() {
    let tmp = tempfile::tempdir().unwrap();
    let truth: Vec<f64> = (0..30).map(|t| 2.0 + (t as f64 / 4.0).sin()).collect();
    let reference = tmp.path().join("reference.csv");
    write_series(&reference, 0, &truth);
    let exact = tmp.path().join("exact.csv");
    write_estimate(&exact, &truth);
    let flat = tmp.path().join("flat.csv");
    write_estimate(&flat, &(0..30).map(|t| t as f64).collect::<Vec<_>>());
    let noisy = tmp.path().join("noisy.csv");
    write_estimate(
        &noisy,
        &truth
            .iter()
            .enumerate()
            .map(|(t, v)| v + 0.3 * (t % 3) as f64)
            .collect::<Vec<_>>(),
    );

    let out = tmp.path().join("eval");
    let stdout = ok(
        &out,
        &[
            "evaluate",
            &s(flat),
            &s(exact),
            &s(noisy),
            "--reference",
            &s(reference.clone()),
        ],
    )
    .stdout;
    let table = fs::read_to_string(out.join("mae.csv")).unwrap();
    assert_eq!(String::from_utf8(stdout).unwrap(), table);
    let rows: Vec<Vec<&str>> = table
        .lines()
        .skip(1)
        .map(|l| l.split(',').collect())
        .collect();
    let exact_row = rows.iter().find(|r| r[0] == "exact").unwrap();
    assert_eq!(exact_row[5].parse::<f64>().unwrap(), 0.0);
    assert_eq!(exact_row[6], "best");
    assert_eq!(rows.iter().find(|r| r[0] == "noisy").unwrap()[6], "second");
    assert_eq!(rows.iter().find(|r| r[0] == "flat").unwrap()[6], "");

    let far = tmp.path().join("far.csv");
    write_series(&far, 500, &truth);
    assert_eq!(
        code(
            &tmp.path().join("none"),
            &[
                "evaluate",
                &s(tmp.path().join("exact.csv")),
                "--reference",
                &s(far)
            ]
        ),
        4
    );
}

#[test]
fn indirect_smoothing_beats_direct_on_sparse_survey() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = survey(
        tmp.path(),
        "4",
        &["--d", "5", "--n", "10", "--n-d", "480", "--period", "14"],
    );
    let batches = s(dir.join("batches.csv"));
    let out = tmp.path().join("est");
    for method in ["Ind", "Dir"] {
        ok(
            &out,
            &[
                "estimate",
                "--batches",
                &batches,
                "--method",
                method,
                "--smoothing",
                "WA",
                "--accum",
                "14",
                "--w",
                "15",
            ],
        );
    }
    let ev = tmp.path().join("eval");
    ok(
        &ev,
        &[
            "evaluate",
            &s(out.join("Ind-WA.csv")),
            &s(out.join("Dir-WA.csv")),
            "--reference",
            &s(dir.join("incidence.csv")),
        ],
    );
    let table = fs::read_to_string(ev.join("mae.csv")).unwrap();
    let mae = |name: &str| -> f64 {
        table
            .lines()
            .find(|l| l.starts_with(&format!("{name},")))
            .unwrap()
            .split(',')
            .nth(5)
            .unwrap()
            .parse()
            .unwrap()
    };
    assert!(mae("Ind-WA") < mae("Dir-WA"), "{table}");
}

#[test]
fn sweep_resumes_and_ignores_thread_count() {
    let tmp = tempfile::tempdir().unwrap();
    let grid = tmp.path().join("grid.toml");
    fs::write(&grid, "n = [5, 20]\nseeds = [0, 1, 2]\n").unwrap();
    let grid = s(grid);
    let one = tmp.path().join("one");
    let four = tmp.path().join("four");
    ok(&one, &["--config", &grid, "sweep", "--threads", "1"]);
    ok(&four, &["--config", &grid, "sweep", "--threads", "4"]);
    let table = fs::read(one.join("sweep.csv")).unwrap();
    assert_eq!(table, fs::read(four.join("sweep.csv")).unwrap());
    assert_eq!(
        String::from_utf8_lossy(&table).lines().count(),
        1 + 2 * 3 * 9
    );

    let cells: Vec<PathBuf> = fs::read_dir(four.join("cells"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    assert_eq!(cells.len(), 6);
    for c in cells.iter().step_by(2) {
        fs::remove_file(c).unwrap();
    }
    fs::remove_file(four.join("sweep.csv")).unwrap();
    ok(&four, &["--config", &grid, "sweep", "--threads", "2"]);
    assert_eq!(table, fs::read(four.join("sweep.csv")).unwrap());
}

fn diagnose(tmp: &Path, name: &str, values: &[f64]) -> (PathBuf, Output) {
    let series = tmp.join(format!("{name}.csv"));
    write_series(&series, 0, values);
    let out = tmp.join(name);
    let o = nowcast(&out, &["diagnose", &s(series)]);
    (out, o)
}

fn column(path: &Path, idx: usize) -> Vec<Option<f64>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(idx).unwrap().parse().ok())
        .collect()
}

#[test]
fn diagnose_reports_relative_differences() {
    let tmp = tempfile::tempdir().unwrap();
    let (flat, o) = diagnose(tmp.path(), "flat", &[3.0; 20]);
    assert!(o.status.success());
    assert!(column(&flat.join("diffs.csv"), 1)
        .iter()
        .flatten()
        .all(|v| *v == 0.0));
    assert!(column(&flat.join("diffs.csv"), 2)
        .iter()
        .flatten()
        .all(|v| *v == 0.0));
    assert!(column(&flat.join("gamma.csv"), 1)
        .iter()
        .flatten()
        .all(|v| *v == 0.0));

    let geometric: Vec<f64> = (0..30).map(|t| 1.02f64.powi(t)).collect();
    let (geo, o) = diagnose(tmp.path(), "geo", &geometric);
    assert!(o.status.success());
    let d1: Vec<f64> = column(&geo.join("diffs.csv"), 1)
        .into_iter()
        .flatten()
        .collect();
    assert_eq!(d1.len(), 29);
    assert!(d1.iter().all(|v| (v - 0.02).abs() < 1e-12));
    let gamma: Vec<f64> = column(&geo.join("gamma.csv"), 1)
        .into_iter()
        .flatten()
        .collect();
    assert!(!gamma.is_empty());
    assert!(gamma.windows(2).all(|p| p[1] >= p[0]));
    assert!(geo.join("diffs.svg").exists() && geo.join("gamma.svg").exists());

    let (_, o) = diagnose(tmp.path(), "zero", &[1.0, 2.0, 0.0, 1.0]);
    assert_eq!(o.status.code(), Some(5));
}

#[test]
fn ingest_reports_filtered_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("ingest");
    ok(
        &out,
        &[
            "ingest",
            "--survey",
            &fixture("survey_ctis_like.csv"),
            "--reference",
            &fixture("cases_cumulative.csv"),
            "--question",
            "household",
        ],
    );
    assert_eq!(
        fs::read_to_string(out.join("filter_report.csv")).unwrap(),
        "question,rows_in,rows_out,null,R1,R2,R3\nhousehold,2836,2813,7,6,4,6\n"
    );
    assert!(out.join("batches_household.csv").exists());
    assert!(!out.join("batches_direct.csv").exists());
    let reference = fs::read_to_string(out.join("reference.csv")).unwrap();
    assert!(reference.lines().nth(1).unwrap().starts_with("0,"));
}

#[test]
fn replayed_manifest_records_the_original_command() {
    let tmp = tempfile::tempdir().unwrap();
    let first = tmp.path().join("first");
    ok(&first, &["--seed", "3", "simulate"]);
    let second = tmp.path().join("second");
    ok(&second, &["replay", &s(first.join("manifest.json"))]);
    let third = tmp.path().join("third");
    ok(&third, &["replay", &s(second.join("manifest.json"))]);
    let manifest = fs::read(first.join("manifest.json")).unwrap();
    assert_eq!(manifest, fs::read(third.join("manifest.json")).unwrap());
    assert_eq!(
        fs::read(first.join("trajectory.csv")).unwrap(),
        fs::read(third.join("trajectory.csv")).unwrap()
    );
    assert_eq!(
        code(
            &tmp.path().join("x"),
            &["replay", &s(tmp.path().join("missing.json"))]
        ),
        1
    );
}
