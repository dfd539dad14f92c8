use alloc::format;
use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::DisdatError;
use crate::autodiff::{Graph, ParamId, ParamStore, Tensor, Var};
use crate::encoders::Mlp;

/// Logit clamp of the classification head.
const HEAD_CLAMP: f64 = 30.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Classification,
    Regression,
}

impl TaskKind {
    pub fn arity(self) -> usize {
        match self {
            TaskKind::Classification => 2,
            TaskKind::Regression => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TaskLabels {
    Class(Vec<usize>),
    Value(Vec<f64>),
}

impl TaskLabels {
    pub fn len(&self) -> usize {
        match self {
            TaskLabels::Class(v) => v.len(),
            TaskLabels::Value(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Pair predictor `f_θp` over `concat(Z_Mi, Z_Mj)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskHead {
    mlp: Mlp,
    kind: TaskKind,
}

impl TaskHead {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        d_f: usize,
        hidden: usize,
        kind: TaskKind,
        rng: &mut R,
    ) -> Self {
        Self {
            mlp: Mlp::new(store, &format!("{name}.mlp"), [2 * d_f, hidden, kind.arity()], rng),
            kind,
        }
    }

    pub fn kind(&self) -> TaskKind {
        self.kind
    }

    pub fn ids(&self) -> Vec<ParamId> {
        self.mlp.ids()
    }

    /// `B × 2` logits or `B × 1` predictions.
    pub fn forward(&self, tape: &mut Graph, store: &ParamStore, zm_i: Var, zm_j: Var) -> Result<Var, DisdatError> {
        let x = tape.concat(&[zm_i, zm_j], 1)?;
        Ok(self.mlp.forward(tape, store, x)?)
    }
}

/// Task loss of head outputs: mean cross-entropy of clamped 2-class logits,
/// or mean absolute error.
pub fn loss_task(tape: &mut Graph, kind: TaskKind, out: Var, labels: &TaskLabels) -> Result<Var, DisdatError> {
    let b = tape.shape(out)[0];
    if labels.len() != b || b == 0 {
        return Err(DisdatError::EmptyBatch);
    }
    match (kind, labels) {
        (TaskKind::Classification, TaskLabels::Class(y)) => {
            if tape.shape(out)[1] != 2 || y.iter().any(|&c| c > 1) {
                return Err(DisdatError::LabelKindMismatch);
            }
            let mut onehot = alloc::vec![0.0; 2 * b];
            for (r, &c) in y.iter().enumerate() {
                onehot[2 * r + c] = 1.0;
            }
            let onehot = tape.constant(Tensor::matrix(b, 2, onehot)?);
            let l = tape.clamp(out, -HEAD_CLAMP, HEAD_CLAMP);
            let p = tape.softmax(l);
            let p = tape.clamp(p, 1e-300, 1.0);
            let lp = tape.log(p);
            let picked = tape.mul(lp, onehot)?;
            let s = tape.sum(picked);
            Ok(tape.scale(s, -1.0 / b as f64))
        }
        (TaskKind::Regression, TaskLabels::Value(y)) => {
            if tape.shape(out)[1] != 1 {
                return Err(DisdatError::LabelKindMismatch);
            }
            let t = tape.constant(Tensor::matrix(b, 1, y.clone())?);
            let diff = tape.sub(out, t)?;
            // |d| = relu(d) + relu(−d)
            let pos = tape.relu(diff);
            let neg = tape.scale(diff, -1.0);
            let neg = tape.relu(neg);
            let abs = tape.add(pos, neg)?;
            Ok(tape.mean(abs))
        }
        _ => Err(DisdatError::LabelKindMismatch),
    }
}

fn check_lambda(lambda_g: f64, lambda_i: f64) -> Result<(), DisdatError> {
    if lambda_g < 0.0 || lambda_i < 0.0 || lambda_g.is_nan() || lambda_i.is_nan() {
        return Err(DisdatError::NegativeLambda(lambda_g, lambda_i));
    }
    Ok(())
}

/// `L_pre + λ_g·L_g + λ_i·L_i`. A zero weight drops its term.
pub fn loss_total(
    tape: &mut Graph,
    l_pre: Var,
    l_g: Option<Var>,
    l_i: Option<Var>,
    lambda_g: f64,
    lambda_i: f64,
) -> Result<Var, DisdatError> {
    check_lambda(lambda_g, lambda_i)?;
    let mut total = l_pre;
    for (l, lam) in [(l_g, lambda_g), (l_i, lambda_i)] {
        if let Some(l) = l {
            if lam != 0.0 {
                let s = tape.scale(l, lam);
                total = tape.add(total, s)?;
            }
        }
    }
    Ok(total)
}

/// The weighted sum on plain numbers.
pub fn total_value(l_pre: f64, l_g: f64, l_i: f64, lambda_g: f64, lambda_i: f64) -> Result<f64, DisdatError> {
    check_lambda(lambda_g, lambda_i)?;
    Ok(l_pre + lambda_g * l_g + lambda_i * l_i)
}
