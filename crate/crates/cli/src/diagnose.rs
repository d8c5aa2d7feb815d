//! Smoothness diagnostics: relative differences, empirical bounds and the
//! error factors and thresholds they imply for each window width.

use std::fs;
use std::io::Write;

use nowcast::bounds::{
    gamma_factor, lambda_threshold_first_diff, lambda_threshold_second_diff, WindowBoundInputs,
};
use nowcast::estimator::EstimateSeries;
use nowcast::timeseries::{empirical_smoothness, first_diff_ratio, second_diff_ratio, TimeSeries};
use nowcast::window::{count_dispersion, worst_anchor};
use serde_json::json;

use crate::commands::open;
use crate::error::CliResult;
use crate::manifest::Outputs;
use crate::svg::{line_chart, Line};
use crate::{Ctx, DiagnoseArgs, Resolved};

/// Count dispersion assumed when the input carries no per-bin counts.
pub const DEFAULT_SIGMA_RATIO: f64 = 0.3;

fn cell(v: Option<f64>) -> String {
    v.map_or(String::new(), |v| v.to_string())
}

pub fn diagnose_cmd(a: &DiagnoseArgs, _ctx: &Ctx, out: &mut Outputs) -> CliResult<Resolved> {
    let text = fs::read_to_string(&a.series)?;
    let (series, counts) = if text.starts_with("bin,") {
        let e = EstimateSeries::read_csv(text.as_bytes())?;
        (e.values, Some(e.counts))
    } else {
        (TimeSeries::read_csv(text.as_bytes())?, None)
    };
    let d1 = first_diff_ratio(&series)?;
    let d2 = second_diff_ratio(&series)?;
    let (eps_f1, eps_f2) = empirical_smoothness(&series)?;
    let (eps_s1, eps_s2) = match &a.variance {
        Some(p) => empirical_smoothness(&TimeSeries::read_csv(open(p)?)?)?,
        None => (eps_f1, eps_f1),
    };
    let sigma_ratio = a.sigma_ratio.unwrap_or_else(|| {
        counts
            .as_deref()
            .map_or(DEFAULT_SIGMA_RATIO, count_dispersion)
    });

    let mut diffs = String::from("day,first_diff,second_diff\n");
    for day in series.days() {
        diffs.push_str(&format!(
            "{day},{},{}\n",
            cell(d1.get(day)),
            cell(d2.get(day))
        ));
    }
    out.write("diffs.csv", |w| {
        w.write_all(diffs.as_bytes()).map_err(Into::into)
    })?;
    let smoothness = format!("eps_f1,eps_f2,eps_s1,eps_s2,sigma_n_over_mu_n\n{eps_f1},{eps_f2},{eps_s1},{eps_s2},{sigma_ratio}\n");
    out.write("smoothness.csv", |w| {
        w.write_all(smoothness.as_bytes()).map_err(Into::into)
    })?;

    let mut gamma = String::from("w,gamma_f,gamma_sigma2,lambda_first_diff,lambda_second_diff\n");
    let mut gamma_lines = (Vec::new(), Vec::new());
    for w in 1..=a.w_max {
        let gf = gamma_factor(eps_f1, eps_f2, w, sigma_ratio).ok();
        let gs = gamma_factor(eps_s1, eps_s2, w, sigma_ratio).ok();
        let anchor = match &counts {
            Some(c) => worst_anchor(c, w),
            None => Some((1.0, (2 * w + 1) as f64)),
        };
        let (l3, l4) = match anchor {
            Some((n_t, n_w)) => {
                let inputs = WindowBoundInputs {
                    eps_f1,
                    eps_f2,
                    eps_s1,
                    eps_s2,
                    w,
                    n_t,
                    n_w,
                    sigma_n_over_mu_n: sigma_ratio,
                };
                let l4 = match (gf, gs) {
                    (Some(gf), Some(gs)) => lambda_threshold_second_diff(gf, gs, n_t, n_w).ok(),
                    _ => None,
                };
                (lambda_threshold_first_diff(&inputs).ok(), l4)
            }
            None => (None, None),
        };
        if let Some(g) = gf {
            gamma_lines.0.push((w as f64, g));
        }
        if let Some(g) = gs {
            gamma_lines.1.push((w as f64, g));
        }
        gamma.push_str(&format!(
            "{w},{},{},{},{}\n",
            cell(gf),
            cell(gs),
            cell(l3),
            cell(l4)
        ));
    }
    out.write("gamma.csv", |w| {
        w.write_all(gamma.as_bytes()).map_err(Into::into)
    })?;

    let diff_svg = line_chart(
        "Relative differences",
        "day",
        &[
            Line {
                label: "first",
                points: d1.iter().map(|(d, v)| (d as f64, v)).collect(),
            },
            Line {
                label: "second",
                points: d2.iter().map(|(d, v)| (d as f64, v)).collect(),
            },
        ],
    );
    out.write("diffs.svg", |w| {
        w.write_all(diff_svg.as_bytes()).map_err(Into::into)
    })?;
    let gamma_svg = line_chart(
        "Error factors by window",
        "w",
        &[
            Line {
                label: "gamma_f",
                points: gamma_lines.0,
            },
            Line {
                label: "gamma_sigma2",
                points: gamma_lines.1,
            },
        ],
    );
    out.write("gamma.svg", |w| {
        w.write_all(gamma_svg.as_bytes()).map_err(Into::into)
    })?;

    let config = json!({
        "series": a.series.display().to_string(),
        "variance": a.variance.as_ref().map(|p| p.display().to_string()),
        "w_max": a.w_max,
        "sigma_n_over_mu_n": sigma_ratio,
    });
    Ok(Resolved { config, seed: None })
}
