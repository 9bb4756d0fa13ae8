//! Report files: per-epoch CSV and JSON summaries.

use std::fs;
use std::path::Path;

use serde::Serialize;

use super::config::ExperimentConfig;
use super::metrics::StructureMetrics;
use super::train::{EpochRecord, TrainOutcome};
use crate::error::{Error, Result};

pub const EPOCH_CSV_HEADER: &str = "epoch,loss,ppv,sen,acc";

pub fn epochs_csv(records: &[EpochRecord]) -> String {
    let mut out = format!("{EPOCH_CSV_HEADER}\n");
    for r in records {
        out.push_str(&format!("{},{},{},{},{}\n", r.epoch, r.loss, r.ppv, r.sen, r.acc));
    }
    out
}

#[derive(Serialize)]
pub struct TrainSummary<'a> {
    pub config: &'a ExperimentConfig,
    pub kernel_params: usize,
    pub total_params: usize,
    pub final_loss: Option<f64>,
    pub train: StructureMetrics,
    pub val: StructureMetrics,
    pub test: StructureMetrics,
}

impl<'a> TrainSummary<'a> {
    pub fn new(config: &'a ExperimentConfig, outcome: &TrainOutcome) -> Self {
        TrainSummary {
            config,
            kernel_params: outcome.network.kernel_param_count(),
            total_params: outcome.network.total_param_count(),
            final_loss: outcome.epochs.last().map(|r| r.loss),
            train: outcome.train,
            val: outcome.val,
            test: outcome.test,
        }
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn write_text(dir: &Path, name: &str, text: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), text)?;
    Ok(())
}

/// `L` lines of `L` comma-separated values, row `i` holding `map[i, :]`.
pub fn matrix_csv(map: &crate::tensor::DenseTensor) -> Result<String> {
    let (l, c) = map.pair_dims()?;
    if c != 1 {
        return Err(Error::shape(format!("heatmap needs one channel, got {c}")));
    }
    let mut out = String::with_capacity(l * l * 20);
    for row in map.data().chunks_exact(l) {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    Ok(out)
}
