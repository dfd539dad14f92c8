use alloc::format;
use alloc::vec::Vec;
use rand::Rng;

use super::{DisdatError, Reversal};
use crate::autodiff::{Graph, ParamId, ParamStore, Var};
use crate::encoders::Mlp;
use crate::math::{ln, sigmoid};

/// Classifier logits are clamped to ±30 so probabilities stay strictly
/// inside (0, 1).
pub const LOGIT_CLAMP: f64 = 30.0;

/// Two-layer MLP ending in a sigmoid: probability of source-domain origin.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainClassifier {
    mlp: Mlp,
}

impl DomainClassifier {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, input: usize, rng: &mut R) -> Self {
        Self {
            mlp: Mlp::new(store, &format!("{name}.mlp"), [input, 32, 1], rng),
        }
    }

    pub fn ids(&self) -> Vec<ParamId> {
        self.mlp.ids()
    }

    /// Clamped logits, `B × 1`.
    pub fn logits(
        &self,
        tape: &mut Graph,
        store: &ParamStore,
        z: Var,
        reversal: Reversal,
    ) -> Result<Var, DisdatError> {
        let z = match reversal {
            Reversal::Identity => z,
            Reversal::Reverse(phi) => tape.grad_reverse(z, phi)?,
        };
        let l = self.mlp.forward(tape, store, z)?;
        Ok(tape.clamp(l, -LOGIT_CLAMP, LOGIT_CLAMP))
    }

    /// Probabilities `f(z)`, `B × 1`.
    pub fn forward(&self, tape: &mut Graph, store: &ParamStore, z: Var) -> Result<Var, DisdatError> {
        let l = self.logits(tape, store, z, Reversal::Identity)?;
        Ok(tape.sigmoid(l))
    }
}

/// `E[ln σ(±l)]` over a column of logits, via `ln σ(x) = −softplus(−x)`.
fn mean_log_sigmoid(tape: &mut Graph, logits: Var, sign: f64) -> Var {
    let x = tape.scale(logits, -sign);
    let sp = tape.softplus(x);
    let m = tape.mean(sp);
    tape.scale(m, -1.0)
}

/// Structural adversarial loss `−E_s ln(1 − f) − E_t ln f`, features passed
/// through `reversal` (the reversal node with φ_g under DisTrans).
pub fn loss_struct_adv(
    tape: &mut Graph,
    store: &ParamStore,
    clf: &DomainClassifier,
    z_source: Var,
    z_target: Var,
    reversal: Reversal,
) -> Result<Var, DisdatError> {
    if tape.shape(z_source)[0] == 0 || tape.shape(z_target)[0] == 0 {
        return Err(DisdatError::SingleDomainBatch);
    }
    let ls = clf.logits(tape, store, z_source, reversal)?;
    let lt = clf.logits(tape, store, z_target, reversal)?;
    let a = mean_log_sigmoid(tape, ls, -1.0);
    let b = mean_log_sigmoid(tape, lt, 1.0);
    let s = tape.add(a, b)?;
    Ok(tape.scale(s, -1.0))
}

/// Image adversarial loss `−E_{s∪t} ln f` over the union batch `z`.
pub fn loss_image_adv(
    tape: &mut Graph,
    store: &ParamStore,
    clf: &DomainClassifier,
    z: Var,
    reversal: Reversal,
) -> Result<Var, DisdatError> {
    if tape.shape(z)[0] == 0 {
        return Err(DisdatError::EmptyBatch);
    }
    let l = clf.logits(tape, store, z, reversal)?;
    let m = mean_log_sigmoid(tape, l, 1.0);
    Ok(tape.scale(m, -1.0))
}

fn clamp_prob(f: f64) -> f64 {
    let lo = sigmoid(-LOGIT_CLAMP);
    f.clamp(lo, 1.0 - lo)
}

/// The structural loss evaluated directly on classifier outputs.
pub fn struct_adv_value(f_source: &[f64], f_target: &[f64]) -> Result<f64, DisdatError> {
    if f_source.is_empty() || f_target.is_empty() {
        return Err(DisdatError::SingleDomainBatch);
    }
    let s: f64 = f_source.iter().map(|&f| ln(1.0 - clamp_prob(f))).sum::<f64>() / f_source.len() as f64;
    let t: f64 = f_target.iter().map(|&f| ln(clamp_prob(f))).sum::<f64>() / f_target.len() as f64;
    Ok(-s - t)
}

/// The image loss evaluated directly on classifier outputs.
pub fn image_adv_value(f: &[f64]) -> Result<f64, DisdatError> {
    if f.is_empty() {
        return Err(DisdatError::EmptyBatch);
    }
    Ok(-f.iter().map(|&p| ln(clamp_prob(p))).sum::<f64>() / f.len() as f64)
}
