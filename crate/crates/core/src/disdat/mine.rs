use alloc::string::String;
use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::DisdatError;
use crate::autodiff::{Adam, Graph, ParamStore, Tensor, Var};
use crate::encoders::Mlp;
use crate::math::{exp, ln, sqrt, LN_2};
use crate::rng::{self, shuffle, ChaCha8Rng};

/// Fewest paired samples `mine_estimate` accepts.
pub const MIN_SAMPLES: usize = 512;

/// Statistics-network training settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MineConfig {
    pub width: usize,
    pub steps: usize,
    pub lr: f64,
    /// Decay of the moving average that replaces the partition term's
    /// denominator in the gradient.
    pub ema: f64,
    /// Rows per step; 0 trains on the full sample.
    pub batch: usize,
    /// Marginal permutations averaged by the final evaluation.
    pub eval_permutations: usize,
    pub seed: u64,
}

impl Default for MineConfig {
    fn default() -> Self {
        Self {
            width: 64,
            steps: 500,
            lr: 1e-3,
            ema: 0.99,
            batch: 0,
            eval_permutations: 8,
            seed: 0,
        }
    }
}

/// Column-wise z-scores. Mutual information is invariant under invertible
/// per-coordinate maps, and the statistics network trains far better on
/// unit-scale inputs.
fn standardize(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = rows.len() as f64;
    let d = rows[0].len();
    let mut out = rows.to_vec();
    for c in 0..d {
        let mean = rows.iter().map(|r| r[c]).sum::<f64>() / n;
        let var = rows.iter().map(|r| (r[c] - mean) * (r[c] - mean)).sum::<f64>() / n;
        let sd = if var > 1e-24 { sqrt(var) } else { 1.0 };
        for r in out.iter_mut() {
            r[c] = (r[c] - mean) / sd;
        }
    }
    out
}

fn joint_tensor(x: &[Vec<f64>], y: &[Vec<f64>], rows: &[usize], pair: &[usize]) -> Tensor {
    let (dx, dy) = (x[0].len(), y[0].len());
    let mut data = Vec::with_capacity(rows.len() * (dx + dy));
    for (&r, &p) in rows.iter().zip(pair) {
        data.extend_from_slice(&x[r]);
        data.extend_from_slice(&y[p]);
    }
    Tensor::matrix(rows.len(), dx + dy, data).expect("sized above")
}

/// `(mean T_joint, T_marginal)` on the tape.
fn dv_terms(tape: &mut Graph, store: &ParamStore, net: &Mlp, joint: Tensor, marg: Tensor) -> Result<(Var, Var), DisdatError> {
    let j = tape.constant(joint);
    let m = tape.constant(marg);
    let tj = net.forward(tape, store, j)?;
    let tm = net.forward(tape, store, m)?;
    let tm = tape.clamp(tm, -50.0, 50.0);
    Ok((tape.mean(tj), tm))
}

/// Mutual information `I(X; Y)` in nats by the Donsker–Varadhan bound
/// `E_P[T] − ln E_{P_X ⊗ P_Y}[e^T]`, maximised over a two-layer statistics
/// network. Marginal samples pair each `x` with a shuffled `y`. The result
/// is the bound of the trained network on the full sample, averaged over
/// `eval_permutations` fresh shuffles and floored at 0.
pub fn mine_estimate(x: &[Vec<f64>], y: &[Vec<f64>], cfg: &MineConfig) -> Result<f64, DisdatError> {
    let n = x.len();
    if n != y.len() {
        return Err(DisdatError::RaggedSamples);
    }
    if n < MIN_SAMPLES {
        return Err(DisdatError::TooFewSamples { got: n, need: MIN_SAMPLES });
    }
    let (dx, dy) = (x[0].len(), y[0].len());
    if dx == 0 || dy == 0 || x.iter().any(|r| r.len() != dx) || y.iter().any(|r| r.len() != dy) {
        return Err(DisdatError::RaggedSamples);
    }
    let (x, y) = (standardize(x), standardize(y));
    let mut rng: ChaCha8Rng = rng::stream(cfg.seed, 0x4d49_4e45);
    let mut store = ParamStore::new();
    let net = Mlp::new(&mut store, "mine", [dx + dy, cfg.width, 1], &mut rng);
    let mut opt = Adam::new(&store, cfg.lr);
    let batch = if cfg.batch == 0 { n } else { cfg.batch.min(n) };
    let all: Vec<usize> = (0..n).collect();
    let mut ema: Option<f64> = None;

    for _ in 0..cfg.steps {
        let rows: Vec<usize> = if batch == n {
            all.clone()
        } else {
            (0..batch).map(|_| rng.gen_range(0..n)).collect()
        };
        let mut pair = rows.clone();
        shuffle(&mut pair, &mut rng);
        let mut tape = Graph::new();
        let (mean_tj, tm) = dv_terms(
            &mut tape,
            &store,
            &net,
            joint_tensor(&x, &y, &rows, &rows),
            joint_tensor(&x, &y, &rows, &pair),
        )?;
        let e = tape.exp(tm);
        let mean_e = tape.mean(e);
        let cur = tape.value(mean_e).item().unwrap_or(1.0);
        let avg = match ema {
            None => cur,
            Some(a) => cfg.ema * a + (1.0 - cfg.ema) * cur,
        };
        ema = Some(avg);
        // d/dθ ln E[e^T] ≈ E[∇T e^T] / avg: the moving average stands in for
        // the minibatch denominator.
        let part = tape.scale(mean_e, 1.0 / avg.max(1e-300));
        let obj = tape.sub(mean_tj, part)?;
        let loss = tape.scale(obj, -1.0);
        tape.backward(loss)?;
        store.zero_grads();
        tape.accumulate_param_grads(&mut store);
        opt.step(&mut store);
    }

    let reps = cfg.eval_permutations.max(1);
    let mut total = 0.0;
    for _ in 0..reps {
        let mut pair = all.clone();
        shuffle(&mut pair, &mut rng);
        let mut tape = Graph::new();
        let (mean_tj, tm) = dv_terms(
            &mut tape,
            &store,
            &net,
            joint_tensor(&x, &y, &all, &all),
            joint_tensor(&x, &y, &all, &pair),
        )?;
        let t = tape.value(tm).data();
        let mx = t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lme = mx + ln(t.iter().map(|v| exp(v - mx)).sum::<f64>() / n as f64);
        total += tape.value(mean_tj).item().unwrap_or(0.0) - lme;
    }
    let est = total / reps as f64;
    Ok(if est.is_finite() { est.max(0.0) } else { 0.0 })
}

/// Mutual-information shift between domains, in the recorded `units`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MiReport {
    /// Total shift ΔI.
    pub delta_i: f64,
    /// Structural shift ΔI^(g).
    pub delta_g: f64,
    /// Image shift conditioned on structure ΔI^(i|g).
    pub delta_ig: f64,
    pub units: String,
}

impl MiReport {
    /// Report from shifts given in bits; ΔI is their sum.
    pub fn from_bits(delta_g: f64, delta_ig: f64) -> Self {
        Self {
            delta_i: delta_g + delta_ig,
            delta_g,
            delta_ig,
            units: String::from("bits"),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.delta_i.is_finite() && self.delta_g.is_finite() && self.delta_ig.is_finite()
    }
}

/// Labelled representations of one domain: per-sample structure
/// embeddings, image embeddings and label rows.
pub struct DomainSample<'a> {
    pub zg: &'a [Vec<f64>],
    pub zi: &'a [Vec<f64>],
    pub y: &'a [Vec<f64>],
}

fn concat_rows(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    a.iter()
        .zip(b)
        .map(|(u, v)| {
            let mut r = u.clone();
            r.extend_from_slice(v);
            r
        })
        .collect()
}

/// `(I(Z^g; Y), I([Z^g, Z^i]; Y))` in nats.
fn domain_terms(d: &DomainSample<'_>, cfg: &MineConfig, salt: u64) -> Result<(f64, f64), DisdatError> {
    if d.zg.len() != d.zi.len() || d.zg.len() != d.y.len() {
        return Err(DisdatError::RaggedSamples);
    }
    let c = |s: u64| MineConfig {
        seed: cfg.seed ^ (salt.wrapping_mul(0x9e37_79b9_7f4a_7c15)).wrapping_add(s),
        ..cfg.clone()
    };
    let ig = mine_estimate(d.zg, d.y, &c(1))?;
    let both = concat_rows(d.zg, d.zi);
    let igi = mine_estimate(&both, d.y, &c(2))?;
    Ok((ig, igi))
}

/// ΔI^(g) = I(Z_s^g; Y_s) − I(Z_t^g; Y_t) and
/// ΔI^(i|g) = [I([Z^g, Z^i]; Y) − I(Z^g; Y)]_s − [..]_t, reported in bits.
/// ΔI is their sum by construction.
pub fn mi_shift_report(
    source: &DomainSample<'_>,
    target: &DomainSample<'_>,
    cfg: &MineConfig,
) -> Result<MiReport, DisdatError> {
    let (sg, sgi) = domain_terms(source, cfg, 1)?;
    let (tg, tgi) = domain_terms(target, cfg, 2)?;
    let dg = (sg - tg) / LN_2;
    let dig = ((sgi - sg) - (tgi - tg)) / LN_2;
    Ok(MiReport::from_bits(dg, dig))
}
