//! Output artifacts: JSON result records, delimited summary tables and
//! two-column scatter files. Every record carries the config hash and seed.

use std::path::Path;

use fgb_core::fgb::TrainReport;
use fgb_core::SampleBatch;
use serde::Serialize;

use crate::bench::{MeanSe, RepetitionSummary};
use crate::error::AppResult;

/// Six significant digits; `NA` for a missing value.
pub fn fmt6(x: Option<f64>) -> String {
    match x {
        Some(v) if v.is_finite() => format!("{v:.5e}"),
        Some(v) => v.to_string(),
        None => "NA".into(),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    /// All logarithms in records are natural.
    pub log_base: &'static str,
}

impl Provenance {
    pub fn new(config_hash: String, seed: u64) -> Self {
        Provenance { config_hash, seed, log_base: "e" }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainRecord {
    pub epochs_run: usize,
    pub stopped_by: &'static str,
    pub final_log_r_tilde: f64,
    pub objective_trace: Vec<f64>,
    pub r_trace: Vec<f64>,
}

impl TrainRecord {
    /// `orient` maps log ratios back to `log(Z1/Z2)` when roles were swapped.
    pub fn new(report: &TrainReport, orient: impl Fn(f64) -> f64) -> Self {
        TrainRecord {
            epochs_run: report.epochs_run,
            stopped_by: report.stopped_by.name(),
            final_log_r_tilde: orient(report.final_log_r_tilde),
            objective_trace: report.objective_trace.clone(),
            r_trace: report.r_trace.iter().map(|r| orient(*r)).collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateRecord {
    #[serde(flatten)]
    pub provenance: Provenance,
    pub log_r_hat: f64,
    /// Closed-form `log(Z1/Z2)` when both targets provide one.
    pub log_r_truth: Option<f64>,
    pub re2_estimate: Option<f64>,
    pub saturated: bool,
    pub bridge_converged: bool,
    pub bridge_iterations: usize,
    pub n_train: [usize; 2],
    pub n_estimate: [usize; 2],
    pub train: TrainRecord,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchRecord<T: Serialize> {
    #[serde(flatten)]
    pub provenance: Provenance,
    pub study: &'static str,
    pub result: T,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> AppResult<()> {
    let text = serde_json::to_string_pretty(value).expect("records serialize");
    std::fs::write(path, text + "\n")?;
    Ok(())
}

fn csv_writer(path: &Path) -> AppResult<csv::Writer<std::fs::File>> {
    csv::WriterBuilder::new().from_path(path).map_err(|e| std::io::Error::other(e).into())
}

fn finish(mut w: csv::Writer<std::fs::File>) -> AppResult<()> {
    w.flush()?;
    Ok(())
}

fn row(w: &mut csv::Writer<std::fs::File>, fields: &[String]) -> AppResult<()> {
    w.write_record(fields).map_err(std::io::Error::other)?;
    Ok(())
}

pub const SUMMARY_HEADER: [&str; 7] = ["method", "mc_mse", "mc_mse_se", "mean_re2", "mean_re2_se", "failures", "reps"];

/// One row per summary; standard errors are over repetitions.
pub fn write_summary_table(path: &Path, summaries: &[&RepetitionSummary]) -> AppResult<()> {
    let mut w = csv_writer(path)?;
    row(&mut w, &SUMMARY_HEADER.map(String::from))?;
    let parts = |m: Option<MeanSe>| (fmt6(m.map(|v| v.mean)), fmt6(m.map(|v| v.se)));
    for s in summaries {
        let (mse, mse_se) = parts(s.mc_mse);
        let (re2, re2_se) = parts(s.mean_re2);
        row(&mut w, &[s.method.clone(), mse, mse_se, re2, re2_se, s.failures.to_string(), s.reps.len().to_string()])?;
    }
    finish(w)
}

/// Per-repetition raw results of several summaries.
pub fn write_reps_table(path: &Path, summaries: &[&RepetitionSummary]) -> AppResult<()> {
    let mut w = csv_writer(path)?;
    row(&mut w, &["method", "rep", "log_r_hat", "re2", "converged", "error"].map(String::from))?;
    for s in summaries {
        for r in &s.reps {
            row(
                &mut w,
                &[
                    s.method.clone(),
                    r.rep.to_string(),
                    fmt6(r.log_r_hat),
                    fmt6(r.re2),
                    r.converged.to_string(),
                    r.error.clone().unwrap_or_default(),
                ],
            )?;
        }
    }
    finish(w)
}

/// First two coordinates of each point, one point per line, no header.
pub fn write_scatter(path: &Path, points: &[f64], dim: usize) -> AppResult<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path).map_err(std::io::Error::other)?;
    for p in points.chunks_exact(dim) {
        row(&mut w, &[fmt6(Some(p[0])), fmt6(Some(p[1]))])?;
    }
    finish(w)
}

pub fn write_batch_scatter(path: &Path, batch: &SampleBatch) -> AppResult<()> {
    write_scatter(path, batch.as_slice(), batch.dim())
}
