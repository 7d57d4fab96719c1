//! Round/client CSV logs, the JSON report, comparison summary and plots.
//!
//! Every file is written to a temporary sibling and renamed into place, so a
//! failed run never leaves a half-written output behind.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::federation::{ClientLogEntry, ExperimentOutput, RoundLog, StrategyReport};
use crate::plot::{self, Series};

pub const ROUND_LOG_HEADER: [&str; 13] = [
    "round",
    "strategy",
    "alpha",
    "sigma2",
    "mean_trust",
    "trust_variance",
    "omitted_count",
    "readmitted_count",
    "active_count",
    "test_accuracy",
    "test_macro_precision",
    "test_macro_recall",
    "test_macro_f1",
];

pub const CLIENT_LOG_HEADER: [&str; 6] = [
    "round",
    "client_id",
    "raw_trust",
    "smoothed_trust",
    "status",
    "behavior",
];

pub const SUMMARY_HEADER: [&str; 5] = [
    "strategy",
    "final_accuracy",
    "final_macro_f1",
    "mean_trust",
    "total_omissions",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Write `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn round_log_csv(logs: &[RoundLog]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(ROUND_LOG_HEADER)?;
    for l in logs {
        w.write_record([
            l.round.to_string(),
            l.strategy.to_string(),
            opt(l.alpha),
            l.sigma2.to_string(),
            l.mean_trust.to_string(),
            l.trust_variance.to_string(),
            l.omitted_now.len().to_string(),
            l.readmitted_now.len().to_string(),
            l.active_count.to_string(),
            l.test.accuracy.to_string(),
            l.test.macro_precision.to_string(),
            l.test.macro_recall.to_string(),
            l.test.macro_f1.to_string(),
        ])?;
    }
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

pub fn client_log_csv(entries: &[ClientLogEntry]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CLIENT_LOG_HEADER)?;
    for e in entries {
        w.write_record([
            e.round.to_string(),
            e.client_id.to_string(),
            opt(e.raw_trust),
            opt(e.smoothed_trust),
            e.status.as_str().to_string(),
            e.behavior.to_string(),
        ])?;
    }
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub strategy: String,
    pub final_accuracy: f64,
    pub final_macro_f1: f64,
    pub mean_trust: f64,
    pub total_omissions: usize,
}

/// One row per strategy, best final macro F1 first.
pub fn summary_rows(outputs: &[ExperimentOutput]) -> Vec<SummaryRow> {
    let mut rows: Vec<SummaryRow> = outputs
        .iter()
        .map(|o| {
            let n = o.logs.len().max(1) as f64;
            SummaryRow {
                strategy: o.report.strategy.to_string(),
                final_accuracy: o.report.final_metrics.accuracy,
                final_macro_f1: o.report.final_metrics.macro_f1,
                mean_trust: o.logs.iter().map(|l| l.mean_trust).sum::<f64>() / n,
                total_omissions: o.report.total_omissions,
            }
        })
        .collect();
    rows.sort_by(|a, b| {
        b.final_macro_f1
            .total_cmp(&a.final_macro_f1)
            .then_with(|| a.strategy.cmp(&b.strategy))
    });
    rows
}

pub fn summary_csv(rows: &[SummaryRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SUMMARY_HEADER)?;
    for r in rows {
        w.write_record([
            r.strategy.clone(),
            r.final_accuracy.to_string(),
            r.final_macro_f1.to_string(),
            r.mean_trust.to_string(),
            r.total_omissions.to_string(),
        ])?;
    }
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub dataset_hash: String,
    pub strategies: Vec<StrategyReport>,
}

impl RunReport {
    pub fn new(config: &ExperimentConfig, outputs: &[ExperimentOutput]) -> Self {
        Self {
            config: config.clone(),
            dataset_hash: outputs
                .first()
                .map(|o| o.report.dataset_hash.clone())
                .unwrap_or_default(),
            strategies: outputs.iter().map(|o| o.report.clone()).collect(),
        }
    }
}

/// Files written for a single-strategy run.
pub fn write_run(dir: &Path, config: &ExperimentConfig, output: &ExperimentOutput) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let files = vec![
        (dir.join("round_log.csv"), round_log_csv(&output.logs)?),
        (dir.join("client_log.csv"), client_log_csv(&output.client_logs)?),
        (
            dir.join("report.json"),
            serde_json::to_vec_pretty(&RunReport::new(config, std::slice::from_ref(output)))?,
        ),
    ];
    write_all(files)
}

/// Files written for a multi-strategy comparison.
pub fn write_comparison(
    dir: &Path,
    config: &ExperimentConfig,
    outputs: &[ExperimentOutput],
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    for o in outputs {
        let name = o.report.strategy.as_str();
        files.push((dir.join(format!("round_log_{name}.csv")), round_log_csv(&o.logs)?));
        files.push((
            dir.join(format!("client_log_{name}.csv")),
            client_log_csv(&o.client_logs)?,
        ));
    }
    files.push((dir.join("summary.csv"), summary_csv(&summary_rows(outputs))?));
    files.push((
        dir.join("report.json"),
        serde_json::to_vec_pretty(&RunReport::new(config, outputs))?,
    ));
    for (file, svg) in comparison_plots(outputs) {
        files.push((dir.join(file), svg.into_bytes()));
    }
    write_all(files)
}

fn write_all(files: Vec<(PathBuf, Vec<u8>)>) -> Result<Vec<PathBuf>> {
    let mut written = Vec::with_capacity(files.len());
    for (path, bytes) in files {
        write_atomic(&path, &bytes)?;
        written.push(path);
    }
    Ok(written)
}

fn per_strategy<F: Fn(&RoundLog) -> f64>(outputs: &[ExperimentOutput], dashed: bool, f: F) -> Vec<Series> {
    outputs
        .iter()
        .enumerate()
        .map(|(i, o)| Series {
            name: o.report.strategy.to_string(),
            points: o.logs.iter().map(|l| (l.round as f64, f(l))).collect(),
            dashed,
            color: plot::PALETTE[i % plot::PALETTE.len()],
        })
        .collect()
}

/// `(file name, svg)` for the trust-variance, trust-dynamics and accuracy charts.
pub fn comparison_plots(outputs: &[ExperimentOutput]) -> Vec<(&'static str, String)> {
    let variance = plot::line_chart(
        "Variance of client trust scores",
        "communication round",
        "trust variance",
        &per_strategy(outputs, false, |l| l.trust_variance),
    );
    let mut dynamics = per_strategy(outputs, false, |l| l.mean_trust);
    for s in &mut dynamics {
        s.name = format!("{} mean trust", s.name);
    }
    let mut omitted = per_strategy(outputs, true, |l| l.omitted_now.len() as f64);
    for s in &mut omitted {
        s.name = format!("{} omitted", s.name);
    }
    let dynamics = plot::dual_axis_chart(
        "Average trust (solid) and omitted clients per round (dashed)",
        "communication round",
        "mean trust",
        "omitted clients",
        &dynamics,
        &omitted,
    );
    let accuracy = plot::line_chart(
        "Global test accuracy",
        "communication round",
        "accuracy",
        &per_strategy(outputs, false, |l| l.test.accuracy),
    );
    vec![
        ("trust_variance.svg", variance),
        ("trust_dynamics.svg", dynamics),
        ("test_accuracy.svg", accuracy),
    ]
}
