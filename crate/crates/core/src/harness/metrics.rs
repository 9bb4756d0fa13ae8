//! Pair-prediction metrics over the strict upper triangle.

use std::fmt;
use std::str::FromStr;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::tensor::DenseTensor;

pub const THRESHOLD: f64 = 0.5;

/// How a probability map becomes a set of predicted pairs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Decoder {
    /// Every entry above [`THRESHOLD`].
    #[default]
    Threshold,
    /// Entries above [`THRESHOLD`], taken in decreasing probability while
    /// neither position is already paired (at most one partner each).
    Greedy,
}

impl fmt::Display for Decoder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Decoder::Threshold => "threshold",
            Decoder::Greedy => "greedy",
        })
    }
}

impl FromStr for Decoder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "threshold" => Ok(Decoder::Threshold),
            "greedy" => Ok(Decoder::Greedy),
            other => Err(Error::config(format!("unknown decoder {other:?}"))),
        }
    }
}

impl Serialize for Decoder {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

/// Confusion counts with the derived ratios. Aggregation over several maps
/// sums the counts first (micro average).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct StructureMetrics {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub ppv: f64,
    pub sensitivity: f64,
    pub accuracy: f64,
}

impl StructureMetrics {
    pub fn from_counts(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        let ratio = |a: u64, b: u64| if a + b == 0 { 0.0 } else { a as f64 / (a + b) as f64 };
        let ppv = ratio(tp, fp);
        let sensitivity = ratio(tp, fn_);
        StructureMetrics { tp, fp, fn_, tn, ppv, sensitivity, accuracy: (ppv + sensitivity) / 2.0 }
    }

    pub fn evaluated(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn merge(&self, other: &StructureMetrics) -> StructureMetrics {
        StructureMetrics::from_counts(
            self.tp + other.tp,
            self.fp + other.fp,
            self.fn_ + other.fn_,
            self.tn + other.tn,
        )
    }

    pub fn sum<'a>(items: impl IntoIterator<Item = &'a StructureMetrics>) -> StructureMetrics {
        items.into_iter().fold(StructureMetrics::default(), |acc, m| acc.merge(m))
    }
}

/// Predicted pairs `(i, j)`, `i < j`, inside the leading `valid x valid`
/// block with `j - i >= max(1, min_sep)`.
pub fn decode(pred: &DenseTensor, valid: usize, min_sep: usize, decoder: Decoder) -> Result<Vec<(usize, usize)>> {
    let l = extent(pred)?;
    if valid > l {
        return Err(Error::shape(format!("valid length {valid} exceeds L = {l}")));
    }
    let sep = min_sep.max(1);
    let p = pred.data();
    let mut pairs: Vec<(usize, usize)> = (0..valid)
        .flat_map(|i| ((i + sep)..valid).map(move |j| (i, j)))
        .filter(|&(i, j)| p[i * l + j] > THRESHOLD)
        .collect();
    if decoder == Decoder::Greedy {
        // stable sort keeps row-major order among equal probabilities
        pairs.sort_by(|a, b| p[b.0 * l + b.1].total_cmp(&p[a.0 * l + a.1]));
        let mut used = vec![false; valid];
        pairs.retain(|&(i, j)| {
            let free = !used[i] && !used[j];
            if free {
                used[i] = true;
                used[j] = true;
            }
            free
        });
        pairs.sort_unstable();
    }
    Ok(pairs)
}

/// Scores one prediction map against its binary label.
pub fn score(
    pred: &DenseTensor,
    label: &DenseTensor,
    valid: usize,
    min_sep: usize,
    decoder: Decoder,
) -> Result<StructureMetrics> {
    let l = extent(pred)?;
    if extent(label)? != l {
        return Err(Error::shape(format!("label {:?} does not match prediction {:?}", label.shape(), pred.shape())));
    }
    let predicted = decode(pred, valid, min_sep, decoder)?;
    let sep = min_sep.max(1);
    let y = label.data();
    let mut hit = vec![false; l * l];
    for &(i, j) in &predicted {
        hit[i * l + j] = true;
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for i in 0..valid {
        for j in (i + sep)..valid {
            match (hit[i * l + j], y[i * l + j] == 1.0) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => tn += 1,
            }
        }
    }
    Ok(StructureMetrics::from_counts(tp, fp, fn_, tn))
}

fn extent(t: &DenseTensor) -> Result<usize> {
    match *t.shape() {
        [a, b] | [a, b, 1] if a == b => Ok(a),
        ref s => Err(Error::shape(format!("expected an L x L map, got {s:?}"))),
    }
}
