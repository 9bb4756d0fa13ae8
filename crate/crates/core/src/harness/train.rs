//! Mini-batch training loop.

use serde::Serialize;

use super::config::NetworkConfig;
use super::data::{pad_batch, Dataset, Sample};
use super::metrics::{score, StructureMetrics};
use super::network::Network;
use super::optim::Optimizer;
use crate::error::{Error, Result};
use crate::par;
use crate::tensor::{DenseTensor, Rng};

/// One CSV row. Metrics come from the forward passes made while training
/// through the epoch, so they lag the parameters by up to one epoch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub ppv: f64,
    pub sen: f64,
    pub acc: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub network: Network,
    pub epochs: Vec<EpochRecord>,
    pub train: StructureMetrics,
    pub val: StructureMetrics,
    pub test: StructureMetrics,
}

/// Trains from a fresh initialization. Initialization draws from stream 0
/// of `cfg.seed`, batch shuffling from stream 1.
pub fn train(cfg: &NetworkConfig, data: &Dataset) -> Result<TrainOutcome> {
    let root = Rng::new(cfg.seed);
    let network = Network::init(cfg, &mut root.fork(0))?;
    train_from(cfg, network, data, &mut root.fork(1))
}

pub fn train_from(cfg: &NetworkConfig, mut network: Network, data: &Dataset, rng: &mut Rng) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.train.is_empty() {
        return Err(Error::config("training split is empty"));
    }
    let mut optimizer = Optimizer::new(cfg.optimizer, cfg.learning_rate, cfg.weight_decay)?;
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let mut epochs = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut seen = StructureMetrics::default();
        for chunk in order.chunks(cfg.batch_size) {
            let members: Vec<&Sample> = chunk.iter().map(|&i| &data.train[i]).collect();
            let batch = pad_batch(&members)?;
            let results = par::map_range(members.len(), |b| -> Result<_> {
                let sg = network.loss_and_grads(
                    &batch.features[b],
                    &batch.labels[b],
                    batch.lengths[b],
                    cfg.pos_weight,
                    cfg.min_sep,
                )?;
                let m = score(&sg.pred, &batch.labels[b], batch.lengths[b], cfg.min_sep, cfg.decoder)?;
                Ok((sg, m))
            });
            let mut mean: Option<Vec<DenseTensor>> = None;
            let scale = 1.0 / members.len() as f64;
            for r in results {
                // labels and pos_weight are valid here, so a domain error
                // means a non-finite prediction
                let (sg, m) = r.map_err(|e| match e {
                    Error::Domain(reason) => Error::Diverged { epoch, reason },
                    other => other,
                })?;
                if !sg.loss.is_finite() {
                    return Err(Error::Diverged { epoch, reason: format!("loss is {}", sg.loss) });
                }
                loss_sum += sg.loss;
                seen = seen.merge(&m);
                match &mut mean {
                    None => mean = Some(sg.grads.iter().map(|g| g.scale(scale)).collect()),
                    Some(acc) => {
                        for (a, g) in acc.iter_mut().zip(&sg.grads) {
                            a.axpy(scale, g)?;
                        }
                    }
                }
            }
            let grads = mean.expect("chunks are nonempty");
            if !grads.iter().all(DenseTensor::all_finite) {
                return Err(Error::Diverged { epoch, reason: "non-finite gradient".into() });
            }
            optimizer.step(&mut network.params_mut(), &grads)?;
            if !network.params().iter().all(|p| p.all_finite()) {
                return Err(Error::Diverged { epoch, reason: "non-finite parameters".into() });
            }
        }
        epochs.push(EpochRecord {
            epoch,
            loss: loss_sum / data.train.len() as f64,
            ppv: seen.ppv,
            sen: seen.sensitivity,
            acc: seen.accuracy,
        });
    }
    let train = evaluate(&network, &data.train, cfg)?;
    let val = evaluate(&network, &data.val, cfg)?;
    let test = evaluate(&network, &data.test, cfg)?;
    Ok(TrainOutcome { network, epochs, train, val, test })
}

/// Micro-averaged metrics of `network` over `samples`; all zero when empty.
pub fn evaluate(network: &Network, samples: &[Sample], cfg: &NetworkConfig) -> Result<StructureMetrics> {
    let per = par::map_slice(samples, |s| -> Result<StructureMetrics> {
        let pred = network.forward(&s.features)?;
        score(pred.tensor(), &s.label, s.len(), cfg.min_sep, cfg.decoder)
    });
    per.into_iter().try_fold(StructureMetrics::default(), |acc, m| Ok(acc.merge(&m?)))
}
