use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::train::{pretrain, representation_report, split_pairs};
use super::{evaluate, generate_benchmark, spearman, split, HarnessError, Prepared, TrainConfig, TransferMode};
use crate::disdat::MiReport;
use crate::math::{ln, LN_2};

/// Fewest shift levels a sweep accepts.
pub const MIN_SHIFT_LEVELS: usize = 5;

/// One (shift level, seed) cell of the sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryRecord {
    pub shift_level: f64,
    pub seed: u64,
    /// Target test loss minus held-out source loss of a source-only model
    /// (cross-entropy, nats).
    pub delta_eps: f64,
    pub report: MiReport,
    /// |H(Y_s) − H(Y_t)| in bits.
    pub delta_h: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    pub records: Vec<TheoryRecord>,
    /// Least-squares slope of Δε on ΔI through the origin, floored at 0.
    pub xi: f64,
    pub spearman: f64,
    /// Mean ΔI^(g) / ΔI^(i|g) per level, in level order.
    pub ratio_by_level: Vec<(f64, f64)>,
}

/// Binary entropy of a positive rate, in bits.
pub fn label_entropy(p: f64) -> f64 {
    let h = |q: f64| if q > 0.0 { -q * ln(q) } else { 0.0 };
    (h(p) + h(1.0 - p)) / LN_2
}

/// Least-squares slope through the origin, floored at 0.
pub fn fit_xi(delta_i: &[f64], delta_eps: &[f64]) -> f64 {
    let num: f64 = delta_i.iter().zip(delta_eps).map(|(x, y)| x * y).sum();
    let den: f64 = delta_i.iter().map(|x| x * x).sum();
    if den > 0.0 {
        (num / den).max(0.0)
    } else {
        0.0
    }
}

/// For each shift level and seed: train a source-only model, measure the
/// generalisation gap on the target and the MI shift of its representations.
pub fn theory_sweep(
    levels: &[f64],
    seeds: &[u64],
    n_per_domain: usize,
    cfg: &TrainConfig,
) -> Result<TheoryReport, HarnessError> {
    if levels.len() < MIN_SHIFT_LEVELS {
        return Err(HarnessError::TooFewShiftLevels(levels.len()));
    }
    let mut records = Vec::new();
    for &level in levels {
        for &seed in seeds {
            let bench = generate_benchmark(seed, level, n_per_domain)?;
            let prep = Prepared::new(&bench)?;
            let splits = split(&bench, 0.5, seed)?;
            let pre = pretrain(&bench, &prep, &splits, cfg, TransferMode::DisTrans, seed)?;
            let w = TransferMode::DisTrans.pretrain_weights();
            let src = evaluate(
                &pre.model,
                &pre.frozen,
                &prep.source,
                &split_pairs(&bench.source.pairs, &splits.source_adapt),
                w,
            )?;
            let tgt = evaluate(
                &pre.model,
                &pre.frozen,
                &prep.target,
                &split_pairs(&bench.target.pairs, &splits.target_test),
                w,
            )?;
            let all_s: Vec<usize> = (0..bench.source.pairs.len()).collect();
            let all_t: Vec<usize> = (0..bench.target.pairs.len()).collect();
            let report = representation_report(
                &pre.model,
                &pre.frozen,
                &pre.frozen,
                &bench,
                &prep,
                &all_s,
                &all_t,
                cfg,
            )?;
            records.push(TheoryRecord {
                shift_level: level,
                seed,
                delta_eps: tgt.loss - src.loss,
                report,
                delta_h: (label_entropy(bench.source.positive_rate()) - label_entropy(bench.target.positive_rate()))
                    .abs(),
            });
        }
    }
    let di: Vec<f64> = records.iter().map(|r| r.report.delta_i).collect();
    let de: Vec<f64> = records.iter().map(|r| r.delta_eps).collect();
    let mut ratio_by_level = Vec::new();
    for &level in levels {
        let rs: Vec<&TheoryRecord> = records.iter().filter(|r| r.shift_level == level).collect();
        let g: f64 = rs.iter().map(|r| r.report.delta_g).sum();
        let ig: f64 = rs.iter().map(|r| r.report.delta_ig).sum();
        ratio_by_level.push((level, if ig != 0.0 { g / ig } else { f64::INFINITY }));
    }
    Ok(TheoryReport {
        xi: fit_xi(&di, &de),
        spearman: spearman(&di, &de),
        ratio_by_level,
        records,
    })
}
