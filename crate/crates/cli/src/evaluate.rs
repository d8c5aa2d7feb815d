//! MAE tables of estimate series against a reference curve.

use std::io::Write;
use std::path::Path;

use nowcast::estimator::EstimateSeries;
use nowcast::experiment::normalized_mae;
use nowcast::timeseries::TimeSeries;
use serde_json::json;

use crate::commands::open;
use crate::error::CliResult;
use crate::manifest::Outputs;
use crate::{Ctx, EvaluateArgs, Resolved};

pub const HEADER: &str = "series,method,smoothing,accum,w,mae,mark";

#[derive(Debug, Clone, PartialEq)]
pub struct MaeRow {
    pub series: String,
    pub method: String,
    pub smoothing: String,
    pub accum: u32,
    pub w: usize,
    pub mae: f64,
    pub mark: &'static str,
}

/// Sorts rows by `(accum, w)` (stable) and marks the lowest and second
/// lowest MAE of each group. Ties go to the earlier row.
pub fn mark_groups(rows: &mut [MaeRow]) {
    rows.sort_by_key(|r| (r.accum, r.w));
    let mut start = 0;
    while start < rows.len() {
        let key = (rows[start].accum, rows[start].w);
        let end = start
            + rows[start..]
                .iter()
                .take_while(|r| (r.accum, r.w) == key)
                .count();
        let mut order: Vec<usize> = (start..end).collect();
        order.sort_by(|&a, &b| rows[a].mae.total_cmp(&rows[b].mae).then(a.cmp(&b)));
        for (rank, &i) in order.iter().enumerate() {
            rows[i].mark = match rank {
                0 => "best",
                1 => "second",
                _ => "",
            };
        }
        start = end;
    }
}

pub fn render(rows: &[MaeRow]) -> String {
    let mut s = format!("{HEADER}\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.series, r.method, r.smoothing, r.accum, r.w, r.mae, r.mark
        ));
    }
    s
}

/// One row per `(accum, w)` and one column per series, followed by the
/// names of the best and second-best series. `rows` must be marked.
pub fn render_wide(rows: &[MaeRow]) -> String {
    let mut names: Vec<&str> = Vec::new();
    for r in rows {
        if !names.contains(&r.series.as_str()) {
            names.push(&r.series);
        }
    }
    let mut s = format!("accum,w,{},best,second\n", names.join(","));
    let mut start = 0;
    while start < rows.len() {
        let key = (rows[start].accum, rows[start].w);
        let group: Vec<&MaeRow> = rows[start..]
            .iter()
            .take_while(|r| (r.accum, r.w) == key)
            .collect();
        let cells: Vec<String> = names
            .iter()
            .map(|n| {
                group
                    .iter()
                    .find(|r| r.series == *n)
                    .map_or(String::new(), |r| r.mae.to_string())
            })
            .collect();
        let pick = |mark: &str| {
            group
                .iter()
                .find(|r| r.mark == mark)
                .map_or(String::new(), |r| r.series.clone())
        };
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            key.0,
            key.1,
            cells.join(","),
            pick("best"),
            pick("second")
        ));
        start += group.len();
    }
    s
}

fn series_name(path: &Path) -> String {
    path.file_stem().map_or_else(
        || path.display().to_string(),
        |s| s.to_string_lossy().into_owned(),
    )
}

pub fn evaluate_cmd(a: &EvaluateArgs, _ctx: &Ctx, out: &mut Outputs) -> CliResult<Resolved> {
    let reference = TimeSeries::read_csv(open(&a.reference)?)?;
    let mut rows = Vec::with_capacity(a.estimates.len());
    for path in &a.estimates {
        let e = EstimateSeries::read_csv(open(path)?)?;
        rows.push(MaeRow {
            series: series_name(path),
            method: e.method.to_string(),
            smoothing: e.smoothing.to_string(),
            accum: e.accum,
            w: e.w,
            mae: normalized_mae(&e, &reference)?,
            mark: "",
        });
    }
    mark_groups(&mut rows);
    let table = render(&rows);
    out.write(&a.name, |w| {
        w.write_all(table.as_bytes()).map_err(Into::into)
    })?;
    let wide = render_wide(&rows);
    out.write(&a.wide_name, |w| {
        w.write_all(wide.as_bytes()).map_err(Into::into)
    })?;
    print!("{table}");
    let config = json!({
        "reference": a.reference.display().to_string(),
        "estimates": a.estimates.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
    });
    Ok(Resolved { config, seed: None })
}
