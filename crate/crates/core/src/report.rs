//! Run reports: JSON and CSV serialization of [`RunMetrics`].
//!
//! JSON keys: `mode`, `seed`, `frames`, `wall_ms`, `throughput_fps`,
//! `latency_ms_mean`, `per_cluster_utilization` (array), `per_layer_ms`
//! (array), `outputs` (array of per-frame output vectors).
//!
//! CSV column order is fixed:
//! `mode,seed,frames,wall_ms,throughput_fps,latency_ms_mean,per_cluster_utilization,per_layer_ms`
//! with the two list columns joined by `;`. Output vectors are not included
//! in CSV.

use serde::{Deserialize, Serialize};

use crate::pipeline::{FrameOutput, RunMetrics};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Report {
    pub mode: String,
    pub seed: u64,
    pub frames: usize,
    pub wall_ms: f64,
    pub throughput_fps: f64,
    pub latency_ms_mean: f64,
    pub per_cluster_utilization: Vec<f64>,
    pub per_layer_ms: Vec<f64>,
    pub outputs: Vec<Vec<f32>>,
}

pub const CSV_HEADER: &str =
    "mode,seed,frames,wall_ms,throughput_fps,latency_ms_mean,per_cluster_utilization,per_layer_ms";

impl Report {
    pub fn new(mode: &str, seed: u64, metrics: &RunMetrics, outputs: &[FrameOutput]) -> Self {
        Report {
            mode: mode.to_string(),
            seed,
            frames: metrics.frames,
            wall_ms: metrics.wall.as_secs_f64() * 1e3,
            throughput_fps: metrics.throughput_fps,
            latency_ms_mean: metrics.latency_mean.as_secs_f64() * 1e3,
            per_cluster_utilization: metrics.per_cluster_utilization.clone(),
            per_layer_ms: metrics
                .per_layer_mean
                .iter()
                .map(|d| d.as_secs_f64() * 1e3)
                .collect(),
            outputs: outputs.iter().map(|o| o.values.clone()).collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One CSV data row in the documented column order.
    pub fn to_csv_row(&self) -> String {
        let join = |values: &[f64]| {
            values
                .iter()
                .map(|v| format!("{v:.6}"))
                .collect::<Vec<_>>()
                .join(";")
        };
        format!(
            "{},{},{},{:.3},{:.3},{:.3},{},{}",
            self.mode,
            self.seed,
            self.frames,
            self.wall_ms,
            self.throughput_fps,
            self.latency_ms_mean,
            join(&self.per_cluster_utilization),
            join(&self.per_layer_ms),
        )
    }

    /// Full CSV document for a set of runs.
    pub fn to_csv(reports: &[Report]) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for report in reports {
            out.push_str(&report.to_csv_row());
            out.push('\n');
        }
        out
    }
}
