//! Evaluation metrics for planning benchmarks and control episodes, plus
//! CSV and markdown table rendering.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{CommandSource, DecisionRecord};
use crate::twin::Trajectory;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("benchmark cell has no records")]
    EmptyCell,
    #[error("sample times must be strictly increasing (index {index})")]
    NonMonotonicTime { index: usize },
}

/// Time-weighted mean absolute error of a series against `setpoint`, using
/// the left-rectangle rule: each value is weighted by the gap to the next
/// sample, so the last value carries no weight.
pub fn tw_mae_series(times: &[f64], values: &[f64], setpoint: f64) -> Result<f64, MetricsError> {
    let n = times.len().min(values.len());
    if n < 2 {
        return Err(MetricsError::TooFewSamples { needed: 2, got: n });
    }
    let mut weighted = 0.0;
    let mut total = 0.0;
    for i in 0..n - 1 {
        let dt = times[i + 1] - times[i];
        if !(dt > 0.0) {
            return Err(MetricsError::NonMonotonicTime { index: i + 1 });
        }
        weighted += (values[i] - setpoint).abs() * dt;
        total += dt;
    }
    Ok(weighted / total)
}

/// TW-MAE of the average heater temperature.
pub fn tw_mae(trajectory: &Trajectory, setpoint: f64) -> Result<f64, MetricsError> {
    tw_mae_series(&trajectory.times(), &trajectory.averages(), setpoint)
}

pub fn rmse_series(values: &[f64], setpoint: f64) -> Result<f64, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::TooFewSamples { needed: 1, got: 0 });
    }
    let sq: f64 = values.iter().map(|v| (v - setpoint).powi(2)).sum();
    Ok((sq / values.len() as f64).sqrt())
}

/// Unweighted root mean square deviation of the average temperature.
pub fn rmse(trajectory: &Trajectory, setpoint: f64) -> Result<f64, MetricsError> {
    rmse_series(&trajectory.averages(), setpoint)
}

/// Plain mean absolute deviation, unweighted.
pub fn mae_series(values: &[f64], setpoint: f64) -> Result<f64, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::TooFewSamples { needed: 1, got: 0 });
    }
    Ok(values.iter().map(|v| (v - setpoint).abs()).sum::<f64>() / values.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub count: usize,
    pub mean: f64,
    /// Sample standard deviation (n − 1); zero for a single sample.
    pub std_dev: f64,
    pub min: f64,
    pub max: f64,
}

pub fn latency_stats(samples: &[f64]) -> Result<LatencyStats, MetricsError> {
    if samples.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let n = samples.len();
    let mean = samples.iter().sum::<f64>() / n as f64;
    let std_dev = if n == 1 {
        0.0
    } else {
        (samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    let min = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let max = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(LatencyStats {
        count: n,
        // guards against rounding pushing the mean a hair outside [min, max]
        mean: mean.clamp(min, max),
        std_dev,
        min,
        max,
    })
}

/// Outcome summary of one planning instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FsmInstanceSummary {
    pub id: String,
    pub first_attempt_valid: bool,
    pub solved: bool,
    pub reprompts: u32,
    /// Transitions in the final path, when it was valid and reached the goal.
    pub found_len: Option<usize>,
    /// Transitions in a shortest path; absent only if the goal is unreachable.
    pub optimal_len: Option<usize>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FsmBenchRecord {
    pub n_nodes: usize,
    pub n_edges: usize,
    pub instances: Vec<FsmInstanceSummary>,
}

/// One aggregated row of a planning benchmark table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FsmCellRow {
    pub n_nodes: usize,
    pub n_edges: usize,
    pub instances: usize,
    pub first_pass_accuracy: f64,
    pub valid_path_accuracy: f64,
    pub mean_optimal_len: Option<f64>,
    /// Over solved instances only; absent when nothing was solved.
    pub mean_deviation: Option<f64>,
    /// Over all instances.
    pub mean_reprompts: f64,
    /// Over solved instances only.
    pub mean_reprompts_solved: Option<f64>,
    pub mean_seconds: f64,
}

fn mean_of<I: IntoIterator<Item = f64>>(it: I) -> Option<f64> {
    let (sum, n) = it.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

pub fn fsm_metrics(record: &FsmBenchRecord) -> Result<FsmCellRow, MetricsError> {
    let xs = &record.instances;
    if xs.is_empty() {
        return Err(MetricsError::EmptyCell);
    }
    let n = xs.len() as f64;
    let frac = |f: fn(&FsmInstanceSummary) -> bool| xs.iter().filter(|x| f(x)).count() as f64 / n;
    let solved = || xs.iter().filter(|x| x.solved);
    Ok(FsmCellRow {
        n_nodes: record.n_nodes,
        n_edges: record.n_edges,
        instances: xs.len(),
        first_pass_accuracy: frac(|x| x.first_attempt_valid),
        valid_path_accuracy: frac(|x| x.solved),
        mean_optimal_len: mean_of(xs.iter().filter_map(|x| x.optimal_len.map(|l| l as f64))),
        mean_deviation: mean_of(solved().filter_map(|x| match (x.found_len, x.optimal_len) {
            (Some(f), Some(o)) => Some(f as f64 - o as f64),
            _ => None,
        })),
        mean_reprompts: xs.iter().map(|x| x.reprompts as f64).sum::<f64>() / n,
        mean_reprompts_solved: mean_of(solved().map(|x| x.reprompts as f64)),
        mean_seconds: xs.iter().map(|x| x.seconds).sum::<f64>() / n,
    })
}

/// Summary of one control episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlMetrics {
    pub tw_mae: f64,
    pub rmse: f64,
    pub temp_reprompts: u32,
    pub power_reprompts: u32,
    pub fallbacks: u32,
    /// Per-decision wall-clock seconds.
    pub wall_latency: Option<LatencyStats>,
}

pub fn control_metrics(
    trajectory: &Trajectory,
    setpoint: f64,
    decisions: &[DecisionRecord],
) -> Result<ControlMetrics, MetricsError> {
    let latencies: Vec<f64> = decisions.iter().map(|d| d.wall_latency_s).collect();
    let sum = |f: fn(&DecisionRecord) -> u32| decisions.iter().map(f).sum();
    Ok(ControlMetrics {
        tw_mae: tw_mae(trajectory, setpoint)?,
        rmse: rmse(trajectory, setpoint)?,
        temp_reprompts: sum(|d| d.decision.as_ref().map_or(0, |c| c.temp_reprompts)),
        power_reprompts: sum(|d| d.decision.as_ref().map_or(0, |c| c.power_reprompts)),
        fallbacks: sum(|d| u32::from(d.source == CommandSource::Fallback)),
        wall_latency: latency_stats(&latencies).ok(),
    })
}

/// A rectangular table that renders as CSV or markdown.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        let line = |cells: &[String]| format!("| {} |", cells.join(" | "));
        let _ = writeln!(out, "{}", line(&self.header));
        let _ = writeln!(out, "|{}", "---|".repeat(self.header.len()));
        for r in &self.rows {
            let _ = writeln!(out, "{}", line(r));
        }
        out
    }
}

fn fixed(v: f64, digits: usize) -> String {
    format!("{v:.digits$}")
}

fn opt_fixed(v: Option<f64>, digits: usize) -> String {
    v.map(|v| fixed(v, digits)).unwrap_or_default()
}

/// Planning benchmark table, one row per (nodes, edges) cell.
pub fn fsm_table(rows: &[FsmCellRow]) -> Table {
    let mut t = Table::new([
        "Nodes",
        "Edges",
        "First pass accuracy",
        "Valid Path accuracy",
        "Optimal Path Length",
        "Deviation in Path Length",
        "Avg. Reprompts",
        "Avg. Time (s)",
    ]);
    for r in rows {
        t.push(vec![
            r.n_nodes.to_string(),
            r.n_edges.to_string(),
            fixed(r.first_pass_accuracy, 2),
            fixed(r.valid_path_accuracy, 2),
            opt_fixed(r.mean_optimal_len, 2),
            opt_fixed(r.mean_deviation, 2),
            fixed(r.mean_reprompts, 2),
            fixed(r.mean_seconds, 3),
        ]);
    }
    t
}

/// Inference time statistics, one column per named run.
pub fn latency_table(columns: &[(String, LatencyStats)]) -> Table {
    let mut t = Table::new(std::iter::once("Metric".to_string()).chain(columns.iter().map(|(n, _)| n.clone())));
    let row = |label: &str, f: &dyn Fn(&LatencyStats) -> String| {
        std::iter::once(label.to_string())
            .chain(columns.iter().map(|(_, s)| f(s)))
            .collect::<Vec<_>>()
    };
    t.push(row("Sample Count", &|s| s.count.to_string()));
    t.push(row("Mean (s)", &|s| fixed(s.mean, 2)));
    t.push(row("Std. Deviation (s)", &|s| fixed(s.std_dev, 2)));
    t.push(row("Min/Max (s)", &|s| format!("{} / {}", fixed(s.min, 2), fixed(s.max, 2))));
    t
}

/// Control performance, one column per named run.
pub fn control_table(columns: &[(String, ControlMetrics)]) -> Table {
    let mut t = Table::new(std::iter::once("Model".to_string()).chain(columns.iter().map(|(n, _)| n.clone())));
    let row = |label: &str, f: &dyn Fn(&ControlMetrics) -> String| {
        std::iter::once(label.to_string())
            .chain(columns.iter().map(|(_, m)| f(m)))
            .collect::<Vec<_>>()
    };
    t.push(row("TW-MAE (K)", &|m| fixed(m.tw_mae, 4)));
    t.push(row("RMSE (K)", &|m| fixed(m.rmse, 4)));
    t.push(row("Reprompts (Temp/Power)", &|m| {
        if m.temp_reprompts == 0 && m.power_reprompts == 0 && m.wall_latency.is_none() {
            "-".into()
        } else {
            format!("{}/{}", m.temp_reprompts, m.power_reprompts)
        }
    }));
    t
}
