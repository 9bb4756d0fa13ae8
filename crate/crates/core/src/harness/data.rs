//! Synthetic pairwise-interaction tasks.
//!
//! Each sample is a random token sequence with a one-hot `L x alphabet`
//! encoding and a symmetric binary `L x L` label marking every pair of
//! positions whose tokens are partners under a pairing rule and that lie at
//! least `min_sep` apart.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Serialize, Serializer};

use super::config::TaskConfig;
use crate::cartesian::SequenceFeatures;
use crate::error::{Error, Result};
use crate::tensor::{DenseTensor, Rng};

/// Which token pairs interact. Tokens are `0..alphabet`; with alphabet 4
/// they read as A, C, G, U.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PairingRule {
    Never,
    /// Token `t` pairs with `alphabet - 1 - t` (A-U, C-G).
    Complementary,
    /// Complementary plus G-U; alphabet 4 only.
    Wobble,
    /// Explicit unordered token pairs.
    Custom(BTreeSet<(usize, usize)>),
}

impl PairingRule {
    pub fn validate(&self, alphabet: usize) -> Result<()> {
        match self {
            PairingRule::Wobble if alphabet != 4 => Err(Error::config("wobble pairing needs alphabet = 4")),
            PairingRule::Custom(pairs) => match pairs.iter().find(|&&(a, b)| a >= alphabet || b >= alphabet) {
                Some(p) => Err(Error::config(format!("pair {p:?} outside alphabet {alphabet}"))),
                None => Ok(()),
            },
            _ => Ok(()),
        }
    }

    pub fn pairs(&self, a: usize, b: usize, alphabet: usize) -> bool {
        match self {
            PairingRule::Never => false,
            PairingRule::Complementary => a + b + 1 == alphabet,
            PairingRule::Wobble => a + b == 3 || (a.min(b), a.max(b)) == (2, 3),
            PairingRule::Custom(set) => set.contains(&(a.min(b), a.max(b))),
        }
    }
}

impl fmt::Display for PairingRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PairingRule::Never => f.write_str("never"),
            PairingRule::Complementary => f.write_str("complementary"),
            PairingRule::Wobble => f.write_str("wobble"),
            PairingRule::Custom(set) => {
                let parts: Vec<String> = set.iter().map(|(a, b)| format!("{a}-{b}")).collect();
                f.write_str(&parts.join(" "))
            }
        }
    }
}

impl FromStr for PairingRule {
    type Err = Error;

    /// `never`, `complementary`, `wobble`, or space-separated token pairs like `0-3 1-2`.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "never" => Ok(PairingRule::Never),
            "complementary" => Ok(PairingRule::Complementary),
            "wobble" => Ok(PairingRule::Wobble),
            custom => {
                let mut set = BTreeSet::new();
                for tok in custom.split_whitespace() {
                    let (a, b) = tok
                        .split_once('-')
                        .ok_or_else(|| Error::config(format!("bad pairing token {tok:?}")))?;
                    let parse = |v: &str| v.parse::<usize>().map_err(|e| Error::config(format!("pairing {tok:?}: {e}")));
                    let (a, b) = (parse(a)?, parse(b)?);
                    set.insert((a.min(b), a.max(b)));
                }
                if set.is_empty() {
                    return Err(Error::config(format!("unknown pairing rule {s:?}")));
                }
                Ok(PairingRule::Custom(set))
            }
        }
    }
}

impl Serialize for PairingRule {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub tokens: Vec<usize>,
    pub features: SequenceFeatures,
    /// Symmetric `L x L` binary label with a zero diagonal.
    pub label: DenseTensor,
}

impl Sample {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

pub fn one_hot(tokens: &[usize], alphabet: usize) -> Result<SequenceFeatures> {
    if tokens.is_empty() {
        return Err(Error::shape("empty token sequence"));
    }
    let mut x = DenseTensor::zeros(&[tokens.len(), alphabet])?;
    for (i, &t) in tokens.iter().enumerate() {
        if t >= alphabet {
            return Err(Error::shape(format!("token {t} outside alphabet {alphabet}")));
        }
        x.set(&[i, t], 1.0);
    }
    SequenceFeatures::new(x)
}

/// `label[i, j] = 1` iff tokens `i`, `j` pair and `|i - j| >= max(1, min_sep)`.
pub fn label_from_tokens(tokens: &[usize], alphabet: usize, rule: &PairingRule, min_sep: usize) -> Result<DenseTensor> {
    let l = tokens.len();
    let sep = min_sep.max(1);
    let mut label = DenseTensor::zeros(&[l, l])?;
    for i in 0..l {
        for j in (i + sep)..l {
            if rule.pairs(tokens[i], tokens[j], alphabet) {
                label.set(&[i, j], 1.0);
                label.set(&[j, i], 1.0);
            }
        }
    }
    Ok(label)
}

pub fn gen_synthetic_pairing(
    rng: &mut Rng,
    len: usize,
    alphabet: usize,
    rule: &PairingRule,
    min_sep: usize,
) -> Result<Sample> {
    if len < 2 {
        return Err(Error::config(format!("sequence length must be at least 2, got {len}")));
    }
    rule.validate(alphabet)?;
    let tokens: Vec<usize> = (0..len).map(|_| rng.below(alphabet)).collect();
    Ok(Sample {
        features: one_hot(&tokens, alphabet)?,
        label: label_from_tokens(&tokens, alphabet, rule, min_sep)?,
        tokens,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
    pub test: Vec<Sample>,
}

impl Dataset {
    /// Draws every split from one seeded stream. Lengths are uniform in
    /// `min_len..=seq_len`.
    pub fn generate(task: &TaskConfig, seed: u64) -> Result<Self> {
        task.validate()?;
        let mut rng = Rng::new(seed).fork(0xda7a);
        let mut split = |count: usize| -> Result<Vec<Sample>> {
            (0..count)
                .map(|_| {
                    let len = task.min_len + rng.below(task.seq_len - task.min_len + 1);
                    gen_synthetic_pairing(&mut rng, len, task.alphabet, &task.pairing, task.min_sep)
                })
                .collect()
        };
        Ok(Dataset { train: split(task.train)?, val: split(task.val)?, test: split(task.test)? })
    }
}

/// One batch padded to a common spatial size. `lengths[b]` is the valid
/// extent of member `b`; padded feature rows and label entries are zero.
#[derive(Clone, Debug)]
pub struct PaddedBatch {
    pub size: usize,
    pub features: Vec<SequenceFeatures>,
    pub labels: Vec<DenseTensor>,
    pub lengths: Vec<usize>,
}

pub fn pad_batch(samples: &[&Sample]) -> Result<PaddedBatch> {
    let size = samples.iter().map(|s| s.len()).max().ok_or_else(|| Error::config("empty batch"))?;
    let mut batch = PaddedBatch { size, features: vec![], labels: vec![], lengths: vec![] };
    for s in samples {
        let (l, n) = (s.len(), s.features.width());
        let mut x = s.features.tensor().data().to_vec();
        x.resize(size * n, 0.0);
        let mut y = vec![0.0; size * size];
        for i in 0..l {
            y[i * size..i * size + l].copy_from_slice(&s.label.data()[i * l..(i + 1) * l]);
        }
        batch.features.push(SequenceFeatures::new(DenseTensor::from_vec(&[size, n], x)?)?);
        batch.labels.push(DenseTensor::from_vec(&[size, size], y)?);
        batch.lengths.push(l);
    }
    Ok(batch)
}

#[cfg(test)]
mod tests {
    use super::*;

    const A: usize = 0;
    const U: usize = 3;

    #[test]
    fn never_rule_gives_empty_label() {
        let mut rng = Rng::new(1);
        let s = gen_synthetic_pairing(&mut rng, 10, 4, &PairingRule::Never, 1).unwrap();
        assert!(s.label.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn augc_example_by_exhaustive_rule() {
        let tokens = [A, U, A, U];
        let label = label_from_tokens(&tokens, 4, &PairingRule::Complementary, 2).unwrap();
        let mut pairs = vec![];
        for i in 0..4 {
            for j in (i + 1)..4 {
                let partner = (tokens[i] == A && tokens[j] == U) || (tokens[i] == U && tokens[j] == A);
                if partner && j - i >= 2 {
                    pairs.push((i, j));
                }
                assert_eq!(label.get(&[i, j]) == 1.0, partner && j - i >= 2);
            }
        }
        // 1-based (1, 4) is the only A-U pair at distance >= 2
        assert_eq!(pairs, vec![(0, 3)]);
    }

    #[test]
    fn labels_symmetric_with_zero_diagonal() {
        let mut rng = Rng::new(2);
        for rule in [PairingRule::Complementary, PairingRule::Wobble, "0-0 1-2".parse().unwrap()] {
            let s = gen_synthetic_pairing(&mut rng, 15, 4, &rule, 0).unwrap();
            let l3 = s.label.clone().reshape(&[15, 15, 1]).unwrap();
            assert_eq!(l3.transpose_spatial().unwrap(), l3);
            assert!((0..15).all(|i| s.label.get(&[i, i]) == 0.0));
        }
    }

    #[test]
    fn rules_parse_and_validate() {
        assert_eq!("never".parse::<PairingRule>().unwrap(), PairingRule::Never);
        let custom: PairingRule = "3-0 2-1".parse().unwrap();
        assert!(custom.pairs(0, 3, 4) && custom.pairs(1, 2, 4) && !custom.pairs(0, 1, 4));
        assert_eq!(custom.to_string().parse::<PairingRule>().unwrap(), custom);
        assert!("bogus".parse::<PairingRule>().is_err());
        assert!(PairingRule::Wobble.validate(5).is_err());
        assert!(custom.validate(3).is_err());
        assert!(PairingRule::Complementary.pairs(2, 1, 4));
        assert!(PairingRule::Wobble.pairs(3, 2, 4));
    }

    #[test]
    fn dataset_is_seeded() {
        let task = TaskConfig { train: 4, val: 2, test: 3, min_len: 5, seq_len: 9, ..TaskConfig::default() };
        let a = Dataset::generate(&task, 7).unwrap();
        assert_eq!(a, Dataset::generate(&task, 7).unwrap());
        assert_ne!(a, Dataset::generate(&task, 8).unwrap());
        assert_eq!((a.train.len(), a.val.len(), a.test.len()), (4, 2, 3));
        assert!(a.train.iter().all(|s| (5..=9).contains(&s.len())));
    }

    #[test]
    fn padding_layout() {
        let mut rng = Rng::new(3);
        let a = gen_synthetic_pairing(&mut rng, 4, 4, &PairingRule::Complementary, 1).unwrap();
        let b = gen_synthetic_pairing(&mut rng, 6, 4, &PairingRule::Complementary, 1).unwrap();
        let batch = pad_batch(&[&a, &b]).unwrap();
        assert_eq!(batch.size, 6);
        assert_eq!(batch.lengths, vec![4, 6]);
        for i in 0..6 {
            for j in 0..6 {
                let v = batch.labels[0].get(&[i, j]);
                if i < 4 && j < 4 {
                    assert_eq!(v, a.label.get(&[i, j]));
                } else {
                    assert_eq!(v, 0.0);
                }
            }
        }
        assert!(batch.features[0].row(5).iter().all(|&v| v == 0.0));
        assert_eq!(batch.features[1], b.features);
    }
}
