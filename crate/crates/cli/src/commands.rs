//! Command implementations over resolved configurations.

use cpdetect::baselines::{BayesCd, SimpleCd};
use cpdetect::calibration::CalibrationTable;
use cpdetect::cl::{make_task_stream, run_continual, ClReport, DetectorChoice};
use cpdetect::eval::{match_changepoints, normality_test, NormalityResult};
use cpdetect::simulate::mean_shift_series;
use cpdetect::{
    published, CheckpointDetector, EventLog, Method, MiniBatch, ModelAdapter, MovingAverageModel, OnlineDetector,
    PassThrough,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::*;
use crate::error::{CliError, Result};
use crate::io;

fn load_table(path: Option<&std::path::Path>, window: usize, alpha: usize) -> Result<CalibrationTable> {
    let table = match path {
        Some(p) => CalibrationTable::from_json(&io::read_text(p)?)
            .map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?,
        None => published::table(window, alpha).map_err(|_| {
            CliError::Usage(format!(
                "no reference table for T = {window}, alpha = {alpha}; pass --table"
            ))
        })?,
    };
    table.check_matches(window, alpha)?;
    Ok(table)
}

pub fn calibrate(cfg: &CalibrateConfig) -> Result<()> {
    let table = CalibrationTable::calibrate(cfg.window, cfg.alpha, cfg.n_sims, cfg.seed, &cfg.deltas)?;
    io::emit(cfg.out.as_deref(), &to_pretty_json(&table))
}

fn run_stream<D: OnlineDetector>(mut det: D, batches: Vec<MiniBatch<f64>>) -> Result<EventLog>
where
    D::Model: ModelAdapter<Item = f64>,
{
    det.run(batches)?;
    Ok(det.into_parts().1)
}

fn detect_with<M: ModelAdapter<Item = f64>>(
    cfg: &DetectConfig,
    model: M,
    batches: Vec<MiniBatch<f64>>,
) -> Result<EventLog> {
    match cfg.method {
        Method::Checkpoint => {
            let table = load_table(cfg.table.as_deref(), cfg.detector.window, cfg.detector.alpha)?;
            run_stream(CheckpointDetector::new(cfg.detector.clone(), table, model)?, batches)
        }
        Method::Bayescd => run_stream(BayesCd::new(model, cfg.baseline.with_cutoff(cfg.cutoff))?, batches),
        Method::Simplecd => run_stream(SimpleCd::new(model, cfg.baseline.with_cutoff(cfg.cutoff))?, batches),
    }
}

pub fn detect(cfg: &DetectConfig) -> Result<()> {
    let batches = io::load_score_stream(&cfg.scores)?;
    let log = match cfg.model {
        ModelKind::Identity => detect_with(cfg, PassThrough, batches),
        ModelKind::MovingAverage => {
            let ma = &cfg.moving_average;
            detect_with(cfg, MovingAverageModel::new(ma.theta0, ma.rho), batches)
        }
    }
    .map_err(|e| match e {
        CliError::Data(m) => CliError::Data(format!("{}: {m}", cfg.scores.display())),
        e => e,
    })?;
    if let Some(p) = &cfg.plot {
        io::emit(Some(p), &io::plot_csv(&log.diagnostics))?;
    }
    io::emit(cfg.out.as_deref(), &to_pretty_json(&log))
}

pub fn simulate_mean_shift(cfg: &MeanShiftConfig) -> Result<()> {
    let series = mean_shift_series(&cfg.series)?;
    let mut csv = String::from("t");
    if series.batch == 1 {
        csv.push_str(",v");
    } else {
        for j in 1..=series.batch {
            csv.push_str(&format!(",v{j}"));
        }
    }
    csv.push('\n');
    for b in series.batches() {
        csv.push_str(&b.time.to_string());
        for v in &b.items {
            csv.push_str(&format!(",{v}"));
        }
        csv.push('\n');
    }
    if let Some(p) = &cfg.truth {
        io::emit(Some(p), &io::times_csv(&series.changepoints))?;
    }
    io::emit(cfg.out.as_deref(), &csv)
}

/// One row per labelled example: `t,label,x1..xd`.
pub fn simulate_cl_tasks(cfg: &ClTasksConfig) -> Result<()> {
    let stream = make_task_stream(&cfg.stream)?;
    let mut csv = String::from("t,label");
    for j in 1..=cfg.stream.input_dim {
        csv.push_str(&format!(",x{j}"));
    }
    csv.push('\n');
    for b in &stream.batches {
        for item in &b.items {
            csv.push_str(&format!("{},{}", b.time, item.label));
            for v in &item.x {
                csv.push_str(&format!(",{v}"));
            }
            csv.push('\n');
        }
    }
    if let Some(p) = &cfg.truth {
        io::emit(Some(p), &io::times_csv(&stream.changepoints))?;
    }
    io::emit(cfg.out.as_deref(), &csv)
}

#[derive(Debug, Serialize)]
struct SweepEntry {
    cutoff: f64,
    jaccard: f64,
    precision: f64,
    recall: f64,
    detections: usize,
}

#[derive(Debug, Serialize)]
struct ClRunOutput {
    /// The checkpoint run, or the best-Jaccard baseline cutoff.
    report: ClReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    cutoff: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    sweep: Vec<SweepEntry>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    warnings: Vec<String>,
}

pub fn cl_run(cfg: &ClRunConfig) -> Result<()> {
    let stream = make_task_stream(&cfg.stream)?;
    let run = |choice: &DetectorChoice, table: Option<&CalibrationTable>| {
        run_continual(&cfg.stream, &stream, choice, &cfg.learner, table, cfg.tolerance).map(|out| {
            let mut warnings = out.log.warnings.clone();
            warnings.extend(out.learner.warnings.iter().cloned());
            (out.report(&stream.changepoints), warnings)
        })
    };
    let output = if cfg.method == Method::Checkpoint {
        let table = load_table(cfg.table.as_deref(), cfg.detector.window, cfg.detector.alpha)?;
        let (report, warnings) = run(
            &DetectorChoice::Checkpoint {
                config: cfg.detector.clone(),
            },
            Some(&table),
        )?;
        ClRunOutput {
            report,
            cutoff: None,
            sweep: Vec::new(),
            warnings,
        }
    } else {
        let runs = cfg
            .cutoffs
            .par_iter()
            .map(|&c| {
                let config = cfg.baseline.with_cutoff(c);
                let choice = match cfg.method {
                    Method::Bayescd => DetectorChoice::Bayescd { config },
                    _ => DetectorChoice::Simplecd { config },
                };
                run(&choice, None).map(|r| (c, r))
            })
            .collect::<cpdetect::Result<Vec<_>>>()?;
        let sweep = runs
            .iter()
            .map(|(c, (r, _))| SweepEntry {
                cutoff: *c,
                jaccard: r.jaccard,
                precision: r.precision,
                recall: r.recall,
                detections: r.detected_cps.len(),
            })
            .collect();
        // First cutoff in grid order among those with the largest Jaccard.
        let best = runs.iter().enumerate().fold(
            0,
            |b, (i, (_, (r, _)))| if r.jaccard > runs[b].1 .0.jaccard { i } else { b },
        );
        let (cutoff, (report, warnings)) = runs.into_iter().nth(best).expect("non-empty grid");
        ClRunOutput {
            report,
            cutoff: Some(cutoff),
            sweep,
            warnings,
        }
    };
    if let Some(p) = &cfg.plot {
        io::emit(Some(p), &io::plot_csv(&output.report.per_test_diagnostics))?;
    }
    io::emit(cfg.out.as_deref(), &to_pretty_json(&output))
}

fn load_detected(path: &std::path::Path) -> Result<Vec<u64>> {
    if path.extension().is_some_and(|e| e == "csv") {
        return io::load_times(path);
    }
    let log: EventLog =
        serde_json::from_str(&io::read_text(path)?).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(log.taus())
}

pub fn evaluate(cfg: &EvaluateConfig) -> Result<()> {
    let truth = io::load_times(&cfg.truth)?;
    let detected = load_detected(&cfg.detected)?;
    let result = match_changepoints(&truth, &detected, cfg.tolerance)?;
    io::emit(cfg.out.as_deref(), &to_pretty_json(&result))
}

#[derive(Debug, Serialize)]
struct NormalityReport {
    n: usize,
    #[serde(flatten)]
    result: NormalityResult,
}

pub fn diagnose_normality(cfg: &NormalityConfig) -> Result<()> {
    let batches = io::load_score_stream(&cfg.scores)?;
    let samples: Vec<f64> = if cfg.per_item {
        batches.iter().flat_map(|b| b.items.iter().copied()).collect()
    } else {
        batches
            .iter()
            .map(|b| b.items.iter().sum::<f64>() / b.len() as f64)
            .collect()
    };
    let result = normality_test(&samples)?;
    io::emit(
        cfg.out.as_deref(),
        &to_pretty_json(&NormalityReport {
            n: samples.len(),
            result,
        }),
    )
}
