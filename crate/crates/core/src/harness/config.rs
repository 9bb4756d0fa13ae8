//! Flat `key=value` experiment configuration.
//!
//! ```text
//! # comments and blank lines are ignored
//! layers = gen:3:8:relu, pres:3:8:relu, pres:3:1:sigmoid
//! optimizer = adam
//! learning_rate = 0.002
//! seq_len = 30
//! ```
//!
//! `layers` is a comma-separated `kind:C:F:activation` list with kind one of
//! `standard`, `gen` (`sym_generating`), `pres` (`sym_preserving`).

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use super::data::PairingRule;
use super::metrics::Decoder;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Standard,
    SymGenerating,
    SymPreserving,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Sigmoid,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub size: usize,
    pub out_channels: usize,
    pub activation: Activation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NetworkConfig {
    pub layers: Vec<LayerSpec>,
    /// Features per sequence position (the one-hot alphabet size).
    pub n: usize,
    pub seed: u64,
    pub learning_rate: f64,
    pub pos_weight: f64,
    pub weight_decay: f64,
    pub optimizer: OptimizerKind,
    pub epochs: usize,
    pub batch_size: usize,
    /// Loss and metrics cover entries with `j - i >= max(1, min_sep)`.
    pub min_sep: usize,
    pub decoder: Decoder,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TaskConfig {
    pub seq_len: usize,
    /// Shortest generated sequence; below `seq_len` batches need padding.
    pub min_len: usize,
    pub alphabet: usize,
    pub pairing: PairingRule,
    pub min_sep: usize,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub trials: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub network: NetworkConfig,
    pub task: TaskConfig,
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LayerKind::Standard => "standard",
            LayerKind::SymGenerating => "gen",
            LayerKind::SymPreserving => "pres",
        })
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::None => "none",
        })
    }
}

impl FromStr for LayerSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').map(str::trim).collect();
        let [kind, size, out, act] = parts[..] else {
            return Err(Error::config(format!("layer {s:?} is not kind:C:F:activation")));
        };
        let kind = match kind {
            "standard" | "std" | "conv" => LayerKind::Standard,
            "gen" | "sym_generating" | "sg" => LayerKind::SymGenerating,
            "pres" | "sym_preserving" | "sp" => LayerKind::SymPreserving,
            other => return Err(Error::config(format!("unknown layer kind {other:?}"))),
        };
        let activation = match act {
            "relu" => Activation::Relu,
            "sigmoid" => Activation::Sigmoid,
            "none" | "linear" => Activation::None,
            other => return Err(Error::config(format!("unknown activation {other:?}"))),
        };
        let parse = |v: &str, what: &str| {
            v.parse::<usize>().map_err(|e| Error::config(format!("layer {s:?}: bad {what}: {e}")))
        };
        Ok(LayerSpec { kind, size: parse(size, "kernel size")?, out_channels: parse(out, "channel count")?, activation })
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}:{}", self.kind, self.size, self.out_channels, self.activation)
    }
}

pub fn parse_layers(s: &str) -> Result<Vec<LayerSpec>> {
    s.split(',').filter(|p| !p.trim().is_empty()).map(str::parse).collect()
}

pub fn format_layers(layers: &[LayerSpec]) -> String {
    layers.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            layers: parse_layers("gen:3:8:relu,pres:3:8:relu,pres:3:1:sigmoid").expect("valid default"),
            n: 4,
            seed: 0,
            learning_rate: 2e-3,
            pos_weight: 5.0,
            weight_decay: 0.0,
            optimizer: OptimizerKind::Adam,
            epochs: 30,
            batch_size: 10,
            min_sep: 1,
            decoder: Decoder::Threshold,
        }
    }
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig {
            seq_len: 30,
            min_len: 30,
            alphabet: 4,
            pairing: PairingRule::Complementary,
            min_sep: 3,
            train: 200,
            val: 20,
            test: 50,
            trials: 5,
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let task = TaskConfig::default();
        let network = NetworkConfig { n: task.alphabet, min_sep: task.min_sep, ..NetworkConfig::default() };
        ExperimentConfig { network, task }
    }
}

impl NetworkConfig {
    /// True when the stack uses symmetric layers.
    pub fn is_symmetric(&self) -> bool {
        self.layers.first().is_some_and(|l| l.kind == LayerKind::SymGenerating)
    }

    /// Checks the layer chain and hyperparameters.
    ///
    /// A stack is either all `standard` (CNN) or one `gen` layer followed by
    /// `pres` layers (SCNN). Only the final layer uses sigmoid, and it has a
    /// single output channel.
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if self.pos_weight.is_nan() || self.pos_weight <= 0.0 {
            return Err(Error::config(format!("pos_weight must be positive, got {}", self.pos_weight)));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::config("weight_decay must be non-negative"));
        }
        if self.n == 0 || self.batch_size == 0 {
            return Err(Error::config("n and batch_size must be positive"));
        }
        let Some((last, body)) = self.layers.split_last() else {
            return Err(Error::config("network needs at least one layer"));
        };
        if last.activation != Activation::Sigmoid || last.out_channels != 1 {
            return Err(Error::config(format!("final layer must be F = 1 with sigmoid, got {last}")));
        }
        if let Some(l) = body.iter().find(|l| l.activation == Activation::Sigmoid) {
            return Err(Error::config(format!("only the final layer may use sigmoid, got {l}")));
        }
        for l in &self.layers {
            if l.size % 2 == 0 || l.out_channels == 0 {
                return Err(Error::config(format!("layer {l}: kernel size must be odd and F positive")));
            }
        }
        let symmetric = self.is_symmetric();
        for (idx, l) in self.layers.iter().enumerate() {
            let expected = match (symmetric, idx) {
                (false, _) => LayerKind::Standard,
                (true, 0) => LayerKind::SymGenerating,
                (true, _) => LayerKind::SymPreserving,
            };
            if l.kind != expected {
                return Err(Error::config(format!(
                    "layer {idx} is {}, expected {expected} (stacks are all standard, or gen followed by pres)",
                    l.kind
                )));
            }
        }
        Ok(())
    }

    /// The same stack with every layer swapped to the other family.
    pub fn twin(&self) -> NetworkConfig {
        let symmetric = self.is_symmetric();
        let layers = self
            .layers
            .iter()
            .enumerate()
            .map(|(i, l)| LayerSpec {
                kind: match (symmetric, i) {
                    (true, _) => LayerKind::Standard,
                    (false, 0) => LayerKind::SymGenerating,
                    (false, _) => LayerKind::SymPreserving,
                },
                ..*l
            })
            .collect();
        NetworkConfig { layers, ..self.clone() }
    }

    /// Errors unless `other` has the same stack apart from layer kinds.
    pub fn check_matched(&self, other: &NetworkConfig) -> Result<()> {
        let same_shape = self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| {
                a.size == b.size && a.out_channels == b.out_channels && a.activation == b.activation
            });
        let mut a = self.clone();
        let mut b = other.clone();
        a.layers.clear();
        b.layers.clear();
        if !same_shape || a != b {
            return Err(Error::config("compared networks must differ only in layer kind"));
        }
        if self.is_symmetric() == other.is_symmetric() {
            return Err(Error::config("compare needs one symmetric and one standard network"));
        }
        Ok(())
    }
}

impl TaskConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seq_len < 2 || self.min_len < 2 || self.min_len > self.seq_len {
            return Err(Error::config(format!(
                "need 2 <= min_len <= seq_len, got min_len = {}, seq_len = {}",
                self.min_len, self.seq_len
            )));
        }
        if self.alphabet == 0 || self.train == 0 || self.test == 0 || self.trials == 0 {
            return Err(Error::config("alphabet, train, test and trials must be positive"));
        }
        self.pairing.validate(self.alphabet)
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        self.task.validate()?;
        if self.network.n != self.task.alphabet {
            return Err(Error::config(format!(
                "n = {} must equal the one-hot alphabet size {}",
                self.network.n, self.task.alphabet
            )));
        }
        Ok(())
    }

    /// Parses `key=value` lines over the defaults. `n` follows `alphabet` and
    /// the network `min_sep` follows the task's unless given explicitly.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let (mut n_set, mut sep_set, mut min_len_set) = (false, false, false);
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected key=value, got {raw:?}", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |e: &dyn fmt::Display| Error::config(format!("line {}: {key}: {e}", lineno + 1));
            macro_rules! num {
                () => {
                    value.parse().map_err(|e| bad(&e))?
                };
            }
            let (net, task) = (&mut cfg.network, &mut cfg.task);
            match key {
                "layers" => net.layers = parse_layers(value)?,
                "n" => {
                    net.n = num!();
                    n_set = true;
                }
                "seed" => net.seed = num!(),
                "learning_rate" | "lr" => net.learning_rate = num!(),
                "pos_weight" => net.pos_weight = num!(),
                "weight_decay" => net.weight_decay = num!(),
                "optimizer" => {
                    net.optimizer = match value {
                        "sgd" => OptimizerKind::Sgd,
                        "adam" => OptimizerKind::Adam,
                        other => return Err(bad(&format!("unknown optimizer {other:?}"))),
                    }
                }
                "epochs" => net.epochs = num!(),
                "batch_size" => net.batch_size = num!(),
                "loss_min_sep" => {
                    net.min_sep = num!();
                    sep_set = true;
                }
                "decoder" => net.decoder = value.parse()?,
                "seq_len" => task.seq_len = num!(),
                "min_len" => {
                    task.min_len = num!();
                    min_len_set = true;
                }
                "alphabet" => task.alphabet = num!(),
                "pairing" => task.pairing = value.parse()?,
                "min_sep" => task.min_sep = num!(),
                "train" => task.train = num!(),
                "val" => task.val = num!(),
                "test" => task.test = num!(),
                "trials" => task.trials = num!(),
                other => return Err(Error::config(format!("line {}: unknown key {other:?}", lineno + 1))),
            }
        }
        if !n_set {
            cfg.network.n = cfg.task.alphabet;
        }
        if !sep_set {
            cfg.network.min_sep = cfg.task.min_sep;
        }
        if !min_len_set {
            cfg.task.min_len = cfg.task.seq_len;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical text form; `parse(to_text())` reproduces the config.
    pub fn to_text(&self) -> String {
        let (n, t) = (&self.network, &self.task);
        format!(
            "layers={}\nn={}\nseed={}\nlearning_rate={}\npos_weight={}\nweight_decay={}\noptimizer={}\nepochs={}\n\
             batch_size={}\nloss_min_sep={}\ndecoder={}\nseq_len={}\nmin_len={}\nalphabet={}\npairing={}\nmin_sep={}\n\
             train={}\nval={}\ntest={}\ntrials={}\n",
            format_layers(&n.layers),
            n.n,
            n.seed,
            n.learning_rate,
            n.pos_weight,
            n.weight_decay,
            match n.optimizer {
                OptimizerKind::Sgd => "sgd",
                OptimizerKind::Adam => "adam",
            },
            n.epochs,
            n.batch_size,
            n.min_sep,
            n.decoder,
            t.seq_len,
            t.min_len,
            t.alphabet,
            t.pairing,
            t.min_sep,
            t.train,
            t.val,
            t.test,
            t.trials,
        )
    }
}
