//! simulate, survey, estimate and ingest.

use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::path::Path;

use nowcast::epidemic::{
    hidden_fraction, simulate, simulate_multiwave, EpidemicTrajectory, SirConfig,
};
use nowcast::estimator::{accumulate, bin_variances, estimate, smooth, Method};
use nowcast::ingest::{
    load_reference, outlier_filter, read_survey_csv, to_batches, Question, Rule,
};
use nowcast::survey::{
    read_batches_csv, simulate_survey, write_batches_csv, SurveyConfig, SurveySampler,
};
use nowcast::window::{
    aggregated_estimate, count_dispersion, smoothness_from_pilot, SmoothnessProfile,
};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;

use crate::error::{CliError, CliResult};
use crate::manifest::Outputs;
use crate::{Ctx, EstimateArgs, IngestArgs, Resolved, SimulateArgs, SurveyArgs};

/// Reads a flat TOML config, falling back to defaults when no file is given.
pub fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> CliResult<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| CliError::ConfigFile {
        path: path.display().to_string(),
        message: e.message().to_string(),
    })
}

pub fn to_json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("config types serialize")
}

pub fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| {
        CliError::Core(nowcast::Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        )))
    })
}

pub fn simulate_cmd(a: &SimulateArgs, ctx: &Ctx, out: &mut Outputs) -> CliResult<Resolved> {
    let mut cfg: SirConfig = load_config(ctx.config.as_deref())?;
    if let Some(seed) = ctx.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let (traj, accepted) = match a.multiwave {
        Some(peaks) => simulate_multiwave(&cfg, peaks, a.max_attempts)?,
        None => (simulate(&cfg)?, cfg.seed),
    };
    out.write("trajectory.csv", |w| traj.write_csv(w))?;
    let mut config = to_json(&cfg);
    config["accepted_seed"] = json!(accepted);
    config["multiwave"] = json!(a.multiwave);
    Ok(Resolved {
        config,
        seed: Some(cfg.seed),
    })
}

pub fn survey_cmd(a: &SurveyArgs, ctx: &Ctx, out: &mut Outputs) -> CliResult<Resolved> {
    let traj = EpidemicTrajectory::read_csv(open(&a.trajectory)?)?;
    let mut cfg: SurveyConfig = load_config(ctx.config.as_deref())?;
    if let Some(d) = a.d {
        cfg.d = d;
    }
    if let Some(n) = a.n {
        cfg.n = n;
    }
    if let Some(n_d) = a.n_d {
        cfg.n_d = n_d;
    }
    if let Some(period) = a.period {
        cfg.period = period;
    }
    if let Some(seed) = ctx.seed {
        cfg.seed = seed;
    }
    let sampler = SurveySampler::new(cfg.clone())?;
    let hidden = hidden_fraction(&traj, cfg.period)?;
    let batches = simulate_survey(&hidden, &sampler)?;
    out.write("batches.csv", |w| write_batches_csv(&batches, w))?;
    out.write("hidden.csv", |w| hidden.write_csv(w))?;
    out.write("incidence.csv", |w| traj.incidence.write_csv(w))?;
    let law = sampler.degrees();
    let mut config = to_json(&cfg);
    config["degree_k_min"] = json!(law.k_min());
    config["degree_k_max"] = json!(law.k_max());
    config["degree_mean"] = json!(law.mean());
    Ok(Resolved {
        config,
        seed: Some(cfg.seed),
    })
}

pub fn estimate_cmd(a: &EstimateArgs, _ctx: &Ctx, out: &mut Outputs) -> CliResult<Resolved> {
    let batches = read_batches_csv(open(&a.batches)?)?;
    let pooled = accumulate(&batches, a.accum)?;
    let raw = estimate(&pooled, a.method)?;
    let mut config = json!({
        "batches": a.batches.display().to_string(),
        "method": a.method.to_string(),
        "accum": a.accum,
    });
    let result = match a.auto_window {
        None => {
            config["smoothing"] = json!(a.smoothing.to_string());
            config["w"] = json!(a.w);
            smooth(&raw, a.smoothing, a.w)?
        }
        Some(lambda) => {
            let profile = match (a.eps_f1, a.eps_f2, a.eps_s1) {
                (Some(eps_f1), Some(eps_f2), Some(eps_s1)) => SmoothnessProfile {
                    eps_f1,
                    eps_f2,
                    eps_s1,
                },
                (None, None, None) => {
                    let variances = match a.method {
                        Method::Ind => Some(bin_variances(&pooled)?),
                        _ => None,
                    };
                    smoothness_from_pilot(&raw, variances.as_ref())?
                }
                _ => {
                    return Err(CliError::Usage(
                        "--eps-f1, --eps-f2 and --eps-s1 must be given together".into(),
                    ))
                }
            };
            let search = aggregated_estimate(&raw, lambda, a.w_init, &profile)?;
            let report = json!({
                "lambda": lambda,
                "w_init": a.w_init,
                "w_selected": search.w_selected,
                "lambda1": search.lambda1,
                "lambda2": search.lambda2,
                "satisfied": search.satisfied,
                "eps_f1": profile.eps_f1,
                "eps_f2": profile.eps_f2,
                "eps_s1": profile.eps_s1,
                "sigma_n_over_mu_n": count_dispersion(&raw.counts),
            });
            out.write_json("window.json", &report)?;
            config["auto_window"] = report;
            search.estimate
        }
    };
    let name = a
        .name
        .clone()
        .unwrap_or_else(|| format!("{}-{}", result.method, result.smoothing));
    out.write(&format!("{name}.csv"), |w| result.write_csv(w))?;
    Ok(Resolved { config, seed: None })
}

pub fn ingest_cmd(a: &IngestArgs, _ctx: &Ctx, out: &mut Outputs) -> CliResult<Resolved> {
    let rows = read_survey_csv(open(&a.survey)?)?;
    let questions = if a.question.is_empty() {
        Question::ALL.to_vec()
    } else {
        a.question.clone()
    };
    let origin = rows
        .iter()
        .map(|r| r.date)
        .min()
        .ok_or_else(|| nowcast::Error::Shape("survey file has no rows".into()))?;
    let mut report_csv = String::from("question,rows_in,rows_out,null,R1,R2,R3\n");
    let mut last_day = 0;
    for q in &questions {
        let (kept, report) = outlier_filter(&rows, *q);
        report_csv.push_str(&format!(
            "{q},{},{},{},{},{},{}\n",
            report.rows_in,
            report.rows_out,
            report.removed(Rule::Null),
            report.removed(Rule::R1),
            report.removed(Rule::R2),
            report.removed(Rule::R3),
        ));
        let (first, batches) = to_batches(&kept, *q)?;
        // all questions share day 0 = earliest date in the file
        let shift = (first - origin).num_days();
        let batches: Vec<_> = batches
            .into_iter()
            .map(|mut b| {
                b.day += shift;
                b
            })
            .collect();
        last_day = last_day.max(batches.last().map_or(0, |b| b.day));
        out.write(&format!("batches_{q}.csv"), |w| {
            write_batches_csv(&batches, w)
        })?;
    }
    out.write("filter_report.csv", |w| {
        w.write_all(report_csv.as_bytes()).map_err(Into::into)
    })?;
    let mut config = json!({
        "survey": a.survey.display().to_string(),
        "questions": questions.iter().map(|q| q.to_string()).collect::<Vec<_>>(),
        "origin": origin.to_string(),
    });
    if let Some(reference) = &a.reference {
        let series = load_reference(open(reference)?, a.mode, a.denoise_width, origin)?;
        let aligned = series.slice_days(0, last_day)?;
        out.write("reference.csv", |w| aligned.write_csv(w))?;
        config["reference"] = json!(reference.display().to_string());
        config["mode"] = json!(format!("{:?}", a.mode).to_lowercase());
        config["denoise_width"] = json!(a.denoise_width);
    }
    Ok(Resolved { config, seed: None })
}
