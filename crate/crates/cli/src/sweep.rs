//! Parameter sweeps with per-cell checkpoints.

use std::fs;
use std::io::Write;
use std::path::Path;

use nowcast::epidemic::SirConfig;
use nowcast::estimator::{Method, Smoothing};
use nowcast::experiment::{run_cell, CellSpec, Score};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::commands::{load_config, to_json};
use crate::error::{CliError, CliResult};
use crate::manifest::Outputs;
use crate::{Ctx, Resolved, SweepArgs};

pub const HEADER: &str = "d,n,n_d,period,accum,w,seed,method,smoothing,mae";
const CELL_HEADER: &str = "method,smoothing,mae";
const CELL_DIR: &str = "cells";

/// Lists of values whose cross product forms the sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepGrid {
    pub d: Vec<f64>,
    pub n: Vec<usize>,
    pub n_d: Vec<u64>,
    pub period: Vec<usize>,
    pub accum: Vec<u32>,
    pub w: Vec<usize>,
    pub seeds: Vec<u64>,
    pub sir: SirConfig,
}

impl Default for SweepGrid {
    /// Respondent-count slice at `d = 5, n_d = 60, period = 7, accum = 7,
    /// w = 2` with 16 seeds.
    fn default() -> Self {
        SweepGrid {
            d: vec![5.0],
            n: vec![5, 10, 20, 40],
            n_d: vec![60],
            period: vec![7],
            accum: vec![7],
            w: vec![2],
            seeds: (0..16).collect(),
            sir: SirConfig::default(),
        }
    }
}

impl SweepGrid {
    pub fn cells(&self) -> CliResult<Vec<CellSpec>> {
        let empty = [
            ("d", self.d.is_empty()),
            ("n", self.n.is_empty()),
            ("n_d", self.n_d.is_empty()),
            ("period", self.period.is_empty()),
            ("accum", self.accum.is_empty()),
            ("w", self.w.is_empty()),
            ("seeds", self.seeds.is_empty()),
        ];
        if let Some((field, _)) = empty.iter().find(|(_, e)| *e) {
            return Err(CliError::Core(nowcast::Error::Config {
                field: field.to_string(),
                message: "grid list must not be empty".into(),
            }));
        }
        self.sir.validate()?;
        let mut cells = Vec::new();
        for &d in &self.d {
            for &n in &self.n {
                for &n_d in &self.n_d {
                    for &period in &self.period {
                        for &accum in &self.accum {
                            for &w in &self.w {
                                for &seed in &self.seeds {
                                    let spec = CellSpec {
                                        d,
                                        n,
                                        n_d,
                                        period,
                                        accum,
                                        w,
                                        seed,
                                    };
                                    spec.survey_config().validate()?;
                                    cells.push(spec);
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(cells)
    }
}

pub fn cell_file(c: &CellSpec) -> String {
    format!(
        "{CELL_DIR}/d{}_n{}_nd{}_p{}_a{}_w{}_s{}.csv",
        c.d, c.n, c.n_d, c.period, c.accum, c.w, c.seed
    )
}

fn write_cell(dir: &Path, c: &CellSpec, scores: &[Score]) -> CliResult<()> {
    let mut text = format!("{CELL_HEADER}\n");
    for s in scores {
        text.push_str(&format!("{},{},{}\n", s.method, s.smoothing, s.mae));
    }
    let target = dir.join(cell_file(c));
    let tmp = target.with_extension("tmp");
    fs::write(&tmp, text)?;
    // the rename makes a checkpoint appear only once complete
    fs::rename(tmp, target)?;
    Ok(())
}

fn read_cell(path: &Path) -> Option<Vec<Score>> {
    let mut rdr = csv::Reader::from_path(path).ok()?;
    if rdr.headers().ok()?.iter().ne(CELL_HEADER.split(',')) {
        return None;
    }
    let mut scores = Vec::new();
    for rec in rdr.records() {
        let rec = rec.ok()?;
        scores.push(Score {
            method: rec.get(0)?.parse::<Method>().ok()?,
            smoothing: rec.get(1)?.parse::<Smoothing>().ok()?,
            mae: rec.get(2)?.parse().ok()?,
        });
    }
    (!scores.is_empty()).then_some(scores)
}

/// Runs every cell without a valid checkpoint, then merges all cells in
/// grid order.
pub fn run_sweep(grid: &SweepGrid, dir: &Path, threads: Option<usize>) -> CliResult<String> {
    let cells = grid.cells()?;
    fs::create_dir_all(dir.join(CELL_DIR))?;
    let pending: Vec<&CellSpec> = cells
        .iter()
        .filter(|c| read_cell(&dir.join(cell_file(c))).is_none())
        .collect();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        pool = pool.num_threads(t);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    pool.install(|| {
        pending.par_iter().try_for_each(|c| -> CliResult<()> {
            let scores = run_cell(c, &grid.sir)?;
            write_cell(dir, c, &scores)
        })
    })?;
    let mut table = format!("{HEADER}\n");
    for c in &cells {
        let scores = read_cell(&dir.join(cell_file(c)))
            .ok_or_else(|| CliError::Manifest(format!("checkpoint {} unreadable", cell_file(c))))?;
        for s in scores {
            table.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                c.d, c.n, c.n_d, c.period, c.accum, c.w, c.seed, s.method, s.smoothing, s.mae
            ));
        }
    }
    Ok(table)
}

pub fn sweep_cmd(a: &SweepArgs, ctx: &Ctx, out: &mut Outputs) -> CliResult<Resolved> {
    let mut grid: SweepGrid = load_config(ctx.config.as_deref())?;
    if let Some(start) = ctx.seed {
        let len = grid.seeds.len() as u64;
        grid.seeds = (start..start + len).collect();
    }
    let table = run_sweep(&grid, out.dir(), a.threads)?;
    for c in grid.cells()? {
        out.record(&cell_file(&c));
    }
    out.write(&a.name, |w| {
        w.write_all(table.as_bytes()).map_err(Into::into)
    })?;
    Ok(Resolved {
        config: to_json(&grid),
        seed: ctx.seed,
    })
}
