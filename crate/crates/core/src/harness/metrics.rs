use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::math::sqrt;

/// Evaluation summary. Classification fills every field but `rmse`;
/// regression fills only `rmse`. Unfilled fields are NaN.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub acc: f64,
    pub auroc: f64,
    pub aupr: f64,
    pub f1: f64,
    pub pre: f64,
    pub rmse: f64,
}

/// Scores sorted by descending score, paired with labels.
fn ranked(scores: &[f64], labels: &[u8]) -> Vec<(f64, u8)> {
    let mut v: Vec<(f64, u8)> = scores.iter().copied().zip(labels.iter().copied()).collect();
    v.sort_by(|a, b| b.0.total_cmp(&a.0));
    v
}

/// Area under the ROC curve as the Mann–Whitney statistic, ties counted
/// one half. Computed from integer counts, so it equals pair counting
/// exactly. NaN when a class is absent.
pub fn auroc(scores: &[f64], labels: &[u8]) -> f64 {
    let v = ranked(scores, labels);
    let pos = v.iter().filter(|x| x.1 == 1).count() as u64;
    let neg = v.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return f64::NAN;
    }
    // Twice the number of (positive, negative) pairs ranked correctly.
    let mut twice_wins: u64 = 0;
    let mut neg_below: u64 = neg;
    let mut k = 0;
    while k < v.len() {
        let mut e = k;
        while e < v.len() && v[e].0 == v[k].0 {
            e += 1;
        }
        let (p, n) = v[k..e].iter().fold((0u64, 0u64), |(p, n), x| if x.1 == 1 { (p + 1, n) } else { (p, n + 1) });
        neg_below -= n;
        twice_wins += 2 * p * neg_below + p * n;
        k = e;
    }
    twice_wins as f64 / (2 * pos * neg) as f64
}

/// Area under the precision–recall curve, step-interpolated: the sum over
/// distinct score thresholds (descending) of recall gain times precision.
/// NaN without positives.
pub fn aupr(scores: &[f64], labels: &[u8]) -> f64 {
    let v = ranked(scores, labels);
    let pos = v.iter().filter(|x| x.1 == 1).count();
    if pos == 0 {
        return f64::NAN;
    }
    let (mut tp, mut fp, mut prev_tp) = (0usize, 0usize, 0usize);
    let mut area = 0.0;
    let mut k = 0;
    while k < v.len() {
        let mut e = k;
        while e < v.len() && v[e].0 == v[k].0 {
            if v[e].1 == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            e += 1;
        }
        area += (tp - prev_tp) as f64 / pos as f64 * (tp as f64 / (tp + fp) as f64);
        prev_tp = tp;
        k = e;
    }
    area
}

/// Root mean squared error.
pub fn rmse(pred: &[f64], target: &[f64]) -> f64 {
    let n = pred.len().max(1) as f64;
    sqrt(pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n)
}

/// Classification metrics of positive-class probabilities; hard
/// predictions use the threshold 0.5.
pub fn classification_metrics(probs: &[f64], labels: &[u8]) -> Result<Metrics, HarnessError> {
    if probs.is_empty() || probs.len() != labels.len() {
        return Err(HarnessError::EmptyTestSet);
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &y) in probs.iter().zip(labels) {
        match (p >= 0.5, y == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let acc = (tp + tn) as f64 / probs.len() as f64;
    let pre = if tp + fp > 0 { tp as f64 / (tp + fp) as f64 } else { 0.0 };
    let rec = if tp + fn_ > 0 { tp as f64 / (tp + fn_) as f64 } else { 0.0 };
    let f1 = if pre + rec > 0.0 { 2.0 * pre * rec / (pre + rec) } else { 0.0 };
    Ok(Metrics {
        acc,
        auroc: auroc(probs, labels),
        aupr: aupr(probs, labels),
        f1,
        pre,
        rmse: f64::NAN,
    })
}

pub fn regression_metrics(pred: &[f64], target: &[f64]) -> Result<Metrics, HarnessError> {
    if pred.is_empty() || pred.len() != target.len() {
        return Err(HarnessError::EmptyTestSet);
    }
    Ok(Metrics {
        acc: f64::NAN,
        auroc: f64::NAN,
        aupr: f64::NAN,
        f1: f64::NAN,
        pre: f64::NAN,
        rmse: rmse(pred, target),
    })
}

/// Relative improvement in percent, `(ours − baseline) / baseline · 100`.
pub fn improvement(ours: f64, baseline: f64) -> Result<f64, HarnessError> {
    if baseline == 0.0 {
        return Err(HarnessError::ZeroBaseline);
    }
    Ok((ours - baseline) / baseline * 100.0)
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(x: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..x.len()).collect();
        idx.sort_by(|&i, &j| x[i].total_cmp(&x[j]));
        let mut r = alloc::vec![0.0; x.len()];
        let mut k = 0;
        while k < idx.len() {
            let mut e = k;
            while e < idx.len() && x[idx[e]] == x[idx[k]] {
                e += 1;
            }
            let avg = (k + e - 1) as f64 / 2.0 + 1.0;
            for &i in &idx[k..e] {
                r[i] = avg;
            }
            k = e;
        }
        r
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return 0.0;
    }
    cov / sqrt(va * vb)
}
