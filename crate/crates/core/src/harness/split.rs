use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::{Benchmark, HarnessError};
use crate::math::round;
use crate::rng::{self, shuffle};

/// Share of source pairs used for pretraining; the rest is the source
/// adaptation split.
pub const SOURCE_PRETRAIN_FRACTION: f64 = 0.6;

/// Pair indices of each split.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub source_pretrain: Vec<usize>,
    pub source_adapt: Vec<usize>,
    pub target_adapt: Vec<usize>,
    pub target_test: Vec<usize>,
}

fn cut(n: usize, fraction: f64, stream: u64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    shuffle(&mut idx, &mut rng::stream(seed, stream));
    let k = (round(fraction * n as f64) as usize).min(n);
    let rest = idx.split_off(k);
    (idx, rest)
}

/// Seeded, disjoint and exhaustive splits: source 60/40 pretrain/adapt,
/// target `target_fraction` adapt and the remainder test.
pub fn split(bench: &Benchmark, target_fraction: f64, seed: u64) -> Result<Splits, HarnessError> {
    if !(target_fraction > 0.0 && target_fraction < 1.0) {
        return Err(HarnessError::FractionOutOfRange(target_fraction));
    }
    let (source_pretrain, source_adapt) = cut(bench.source.pairs.len(), SOURCE_PRETRAIN_FRACTION, 0x5350, seed);
    let (target_adapt, target_test) = cut(bench.target.pairs.len(), target_fraction, 0x5450, seed);
    Ok(Splits {
        source_pretrain,
        source_adapt,
        target_adapt,
        target_test,
    })
}
