//! Training and comparison harness on synthetic pairing tasks.
//!
//! Sequences are one-hot encoded and fed straight into the self-Cartesian
//! lift; there is no recurrent encoder.

pub mod compare;
pub mod config;
pub mod data;
pub mod metrics;
pub mod network;
pub mod optim;
pub mod report;
pub mod train;

pub use compare::{compare_cnn_scnn, ComparisonReport, MeanSd};
pub use config::{Activation, ExperimentConfig, LayerKind, LayerSpec, NetworkConfig, OptimizerKind, TaskConfig};
pub use data::{gen_synthetic_pairing, Dataset, PairingRule, Sample};
pub use metrics::{Decoder, StructureMetrics};
pub use network::{LayerParams, Network};
pub use optim::{sgd_step, Adam, Optimizer};
pub use train::{evaluate, train, EpochRecord, TrainOutcome};
