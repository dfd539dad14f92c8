use alloc::vec;
use alloc::vec::Vec;

use super::DisdatError;
use crate::math::{floor, ln};

pub const JSD_BINS: usize = 32;
/// Mass added to every histogram bin before normalising.
pub const JSD_EPS: f64 = 1e-8;

/// `KL(P‖M) + KL(Q‖M)` with `M = (P + Q)/2`, after adding `JSD_EPS` to
/// every bin and renormalising. Unhalved, so the maximum is `2 ln 2`.
pub fn discrete_jsd(p: &[f64], q: &[f64]) -> f64 {
    let norm = |h: &[f64]| -> Vec<f64> {
        let z: f64 = h.iter().map(|v| v + JSD_EPS).sum();
        h.iter().map(|v| (v + JSD_EPS) / z).collect()
    };
    let (p, q) = (norm(p), norm(q));
    let mut total = 0.0;
    for (&a, &b) in p.iter().zip(&q) {
        let m = 0.5 * (a + b);
        total += a * ln(a / m) + b * ln(b / m);
    }
    total
}

/// Structural discrepancy `φ_g`: per-dimension histograms of the two sample
/// sets over their pooled min–max range, averaged `discrete_jsd`.
pub fn jsd_scale(source: &[Vec<f64>], target: &[Vec<f64>]) -> Result<f64, DisdatError> {
    if source.is_empty() || target.is_empty() {
        return Err(DisdatError::EmptySampleSet);
    }
    let d = source[0].len();
    if d == 0 || source.iter().chain(target).any(|r| r.len() != d) {
        return Err(DisdatError::RaggedSamples);
    }
    let mut total = 0.0;
    for c in 0..d {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for r in source.iter().chain(target) {
            lo = lo.min(r[c]);
            hi = hi.max(r[c]);
        }
        let hist = |rows: &[Vec<f64>]| {
            let mut h = vec![0.0; JSD_BINS];
            for r in rows {
                let b = if hi > lo {
                    (floor((r[c] - lo) / (hi - lo) * JSD_BINS as f64) as usize).min(JSD_BINS - 1)
                } else {
                    0
                };
                h[b] += 1.0;
            }
            h
        };
        total += discrete_jsd(&hist(source), &hist(target));
    }
    Ok(total / d as f64)
}
