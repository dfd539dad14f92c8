use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{AutodiffError, Tensor};
use crate::{math, rng};

/// Index of a parameter inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(pub usize);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Vec<f64>,
}

/// Named trainable tensors that persist across forward passes. Each
/// forward pass builds a fresh [`super::Graph`]; gradients flow back here
/// through [`super::Graph::accumulate_param_grads`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let n = value.numel();
        self.params.push(Param {
            name: name.into(),
            value,
            grad: vec![0.0; n],
        });
        ParamId(self.params.len() - 1)
    }

    /// Glorot-uniform `[fan_in, fan_out]` matrix.
    pub fn add_glorot<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> ParamId {
        let limit = math::sqrt(6.0 / (fan_in + fan_out) as f64);
        let data = (0..fan_in * fan_out)
            .map(|_| rng.gen_range(-limit..limit))
            .collect();
        self.add(name, Tensor::new(vec![fan_in, fan_out], data).expect("shape"))
    }

    /// Matrix with entries drawn from N(0, std²).
    pub fn add_normal<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        std: f64,
        rng: &mut R,
    ) -> ParamId {
        let n = shape.iter().product();
        let data = (0..n).map(|_| std * rng::normal(rng)).collect();
        self.add(name, Tensor::new(shape.to_vec(), data).expect("shape"))
    }

    pub fn add_zeros(&mut self, name: impl Into<String>, shape: &[usize]) -> ParamId {
        self.add(name, Tensor::zeros(shape))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &[f64] {
        &self.params[id.0].grad
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    pub fn scale_grads(&mut self, ids: &[ParamId], factor: f64) {
        for id in ids {
            self.params[id.0].grad.iter_mut().for_each(|g| *g *= factor);
        }
    }

    pub fn zero_grads_of(&mut self, ids: &[ParamId]) {
        self.scale_grads(ids, 0.0);
    }

    /// Replace parameter values by name from another store with the same
    /// layout.
    pub fn load_values(&mut self, other: &ParamStore) -> Result<(), AutodiffError> {
        for p in &mut self.params {
            let src = other
                .params
                .iter()
                .find(|q| q.name == p.name)
                .ok_or_else(|| AutodiffError::MissingParam(p.name.clone()))?;
            if src.value.shape() != p.value.shape() {
                return Err(AutodiffError::ShapeMismatch {
                    op: "load_values",
                    left: p.value.shape().to_vec(),
                    right: src.value.shape().to_vec(),
                });
            }
            p.value = src.value.clone();
        }
        Ok(())
    }

    /// FNV-1a over the bit patterns of every value, in store order.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for p in &self.params {
            for v in p.value.data() {
                for b in v.to_bits().to_le_bytes() {
                    h ^= u64::from(b);
                    h = h.wrapping_mul(0x0000_0100_0000_01b3);
                }
            }
        }
        h
    }
}

/// `θ ← θ − μ·∇θ` over every parameter, then zero the gradients.
pub fn sgd_step(store: &mut ParamStore, lr: f64) {
    for p in &mut store.params {
        for (v, g) in p.value.data_mut().iter_mut().zip(p.grad.iter_mut()) {
            *v -= lr * *g;
            *g = 0.0;
        }
    }
}

/// Adam, used only by the MINE statistics network.
#[derive(Clone, Debug)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(store: &ParamStore, lr: f64) -> Self {
        let zeros: Vec<Vec<f64>> = store.params.iter().map(|p| vec![0.0; p.grad.len()]).collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step(&mut self, store: &mut ParamStore) {
        self.step += 1;
        let bc1 = 1.0 - libm::pow(self.beta1, f64::from(self.step));
        let bc2 = 1.0 - libm::pow(self.beta2, f64::from(self.step));
        for (i, p) in store.params.iter_mut().enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (j, (val, g)) in p.value.data_mut().iter_mut().zip(p.grad.iter_mut()).enumerate() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * *g;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * *g * *g;
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                *val -= self.lr * mhat / (math::sqrt(vhat) + self.eps);
                *g = 0.0;
            }
        }
    }
}
