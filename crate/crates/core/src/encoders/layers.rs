use alloc::format;
use alloc::vec::Vec;
use rand::Rng;

use crate::autodiff::{AutodiffError, Graph, ParamId, ParamStore, Var};

/// Affine map `x·W + b` on row-major batches.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            w: store.add_glorot(format!("{name}.w"), fan_in, fan_out, rng),
            b: store.add_zeros(format!("{name}.b"), &[1, fan_out]),
        }
    }

    pub fn forward(&self, tape: &mut Graph, store: &ParamStore, x: Var) -> Result<Var, AutodiffError> {
        let w = tape.param(store, self.w);
        let b = tape.param(store, self.b);
        let y = tape.matmul(x, w)?;
        tape.add_row(y, b)
    }

    pub fn ids(&self) -> [ParamId; 2] {
        [self.w, self.b]
    }
}

/// `Linear → ReLU → Linear`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Mlp {
    pub l1: Linear,
    pub l2: Linear,
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        dims: [usize; 3],
        rng: &mut R,
    ) -> Self {
        Self {
            l1: Linear::new(store, &format!("{name}.0"), dims[0], dims[1], rng),
            l2: Linear::new(store, &format!("{name}.1"), dims[1], dims[2], rng),
        }
    }

    pub fn forward(&self, tape: &mut Graph, store: &ParamStore, x: Var) -> Result<Var, AutodiffError> {
        let h = self.l1.forward(tape, store, x)?;
        let h = tape.relu(h);
        self.l2.forward(tape, store, h)
    }

    pub fn ids(&self) -> Vec<ParamId> {
        self.l1.ids().into_iter().chain(self.l2.ids()).collect()
    }
}

/// Variance floor of [`standardize_rows`].
pub const NORM_EPS: f64 = 1e-5;

/// Parameter-free layer normalisation of every row.
pub fn standardize_rows(tape: &mut Graph, x: Var) -> Result<Var, AutodiffError> {
    tape.standardize_rows(x, NORM_EPS)
}
