//! Hyperparameter-matched symmetric vs plain network comparison.

use serde::Serialize;

use super::config::{NetworkConfig, TaskConfig};
use super::data::Dataset;
use super::metrics::StructureMetrics;
use super::network::Network;
use super::train::train;
use crate::error::{Error, Result};
use crate::par;
use crate::tensor::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    /// Sample standard deviation; zero for a single value.
    pub fn of(values: &[f64]) -> MeanSd {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        MeanSd { mean, sd }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelSummary {
    pub layers: String,
    pub kernel_params: usize,
    pub total_params: usize,
    pub test_ppv: MeanSd,
    pub test_sen: MeanSd,
    pub test_acc: MeanSd,
    pub train_acc: MeanSd,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    pub scnn_train: StructureMetrics,
    pub scnn_test: StructureMetrics,
    pub scnn_final_loss: f64,
    pub cnn_train: StructureMetrics,
    pub cnn_test: StructureMetrics,
    pub cnn_final_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub scnn: ModelSummary,
    pub cnn: ModelSummary,
    pub kernel_param_ratio: f64,
    pub total_param_ratio: f64,
    pub trials: Vec<TrialResult>,
}

/// Runs `task.trials` trials. Trial `t` uses seed `scnn.seed + t` for its
/// dataset and for both networks' initialization and shuffling, so the two
/// models see identical data. Trials run concurrently.
pub fn compare_cnn_scnn(scnn: &NetworkConfig, cnn: &NetworkConfig, task: &TaskConfig) -> Result<ComparisonReport> {
    scnn.check_matched(cnn)?;
    if !scnn.is_symmetric() {
        return Err(Error::config("first network of the pair must be the symmetric one"));
    }
    scnn.validate()?;
    cnn.validate()?;
    task.validate()?;
    if scnn.n != task.alphabet {
        return Err(Error::config(format!("n = {} must equal the alphabet size {}", scnn.n, task.alphabet)));
    }
    let probe = |cfg: &NetworkConfig| Network::init(cfg, &mut Rng::new(0));
    let (s_net, c_net) = (probe(scnn)?, probe(cnn)?);

    let trials = par::map_range(task.trials, |t| -> Result<TrialResult> {
        let seed = scnn.seed.wrapping_add(t as u64);
        let data = Dataset::generate(task, seed)?;
        let s = train(&NetworkConfig { seed, ..scnn.clone() }, &data)?;
        let c = train(&NetworkConfig { seed, ..cnn.clone() }, &data)?;
        let last = |e: &[super::train::EpochRecord]| e.last().map_or(f64::NAN, |r| r.loss);
        Ok(TrialResult {
            trial: t,
            seed,
            scnn_train: s.train,
            scnn_test: s.test,
            scnn_final_loss: last(&s.epochs),
            cnn_train: c.train,
            cnn_test: c.test,
            cnn_final_loss: last(&c.epochs),
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let summary = |net: &Network, cfg: &NetworkConfig, train: fn(&TrialResult) -> StructureMetrics, test: fn(&TrialResult) -> StructureMetrics| {
        let col = |f: &dyn Fn(&StructureMetrics) -> f64, pick: fn(&TrialResult) -> StructureMetrics| {
            MeanSd::of(&trials.iter().map(|t| f(&pick(t))).collect::<Vec<_>>())
        };
        ModelSummary {
            layers: super::config::format_layers(&cfg.layers),
            kernel_params: net.kernel_param_count(),
            total_params: net.total_param_count(),
            test_ppv: col(&|m| m.ppv, test),
            test_sen: col(&|m| m.sensitivity, test),
            test_acc: col(&|m| m.accuracy, test),
            train_acc: col(&|m| m.accuracy, train),
        }
    };
    let s_sum = summary(&s_net, scnn, |t| t.scnn_train, |t| t.scnn_test);
    let c_sum = summary(&c_net, cnn, |t| t.cnn_train, |t| t.cnn_test);
    Ok(ComparisonReport {
        kernel_param_ratio: s_sum.kernel_params as f64 / c_sum.kernel_params as f64,
        total_param_ratio: s_sum.total_params as f64 / c_sum.total_params as f64,
        scnn: s_sum,
        cnn: c_sum,
        trials,
    })
}
