use alloc::format;
use alloc::vec::Vec;
use rand::Rng;

use super::{standardize_rows, EncoderError, Linear, Mlp};
use crate::autodiff::{AutodiffError, Graph, ParamId, ParamStore, Tensor, Var};
use crate::math::sqrt;

#[derive(Clone, Debug, PartialEq)]
struct Head {
    q: ParamId,
    k: ParamId,
    v: ParamId,
}

#[derive(Clone, Debug, PartialEq)]
struct Block {
    heads: Vec<Head>,
    out: ParamId,
    mlp: Mlp,
}

/// Patch transformer with the structure mask and substructure bias added
/// to every attention logit. Residual blocks, no normalisation.
#[derive(Clone, Debug, PartialEq)]
pub struct VitEncoder {
    embed: Linear,
    pos: ParamId,
    sub_bias: ParamId,
    blocks: Vec<Block>,
    width: usize,
    patches: usize,
}

/// Image embedding plus the attention matrices of every block and head.
pub struct VitOutput {
    pub z: Var,
    pub attention: Vec<Var>,
}

#[allow(clippy::too_many_arguments)]
impl VitEncoder {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        patches: usize,
        channels: usize,
        width: usize,
        sub_width: usize,
        heads: usize,
        blocks: usize,
        mlp_width: usize,
        rng: &mut R,
    ) -> Self {
        let hd = width / heads;
        let embed = Linear::new(store, &format!("{name}.embed"), channels, width, rng);
        let pos = store.add_normal(format!("{name}.pos"), &[patches, width], 0.1, rng);
        let sub_bias = store.add_glorot(format!("{name}.sub_bias"), sub_width, 1, rng);
        let blocks = (0..blocks)
            .map(|b| Block {
                heads: (0..heads)
                    .map(|h| Head {
                        q: store.add_glorot(format!("{name}.{b}.h{h}.q"), width, hd, rng),
                        k: store.add_glorot(format!("{name}.{b}.h{h}.k"), width, hd, rng),
                        v: store.add_glorot(format!("{name}.{b}.h{h}.v"), width, hd, rng),
                    })
                    .collect(),
                out: store.add_glorot(format!("{name}.{b}.out"), hd * heads, width, rng),
                mlp: Mlp::new(store, &format!("{name}.{b}.mlp"), [width, mlp_width, width], rng),
            })
            .collect();
        Self {
            embed,
            pos,
            sub_bias,
            blocks,
            width,
            patches,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn patches(&self) -> usize {
        self.patches
    }

    pub fn ids(&self) -> Vec<ParamId> {
        let mut ids: Vec<ParamId> = self.embed.ids().into();
        ids.push(self.pos);
        ids.push(self.sub_bias);
        for b in &self.blocks {
            for h in &b.heads {
                ids.extend([h.q, h.k, h.v]);
            }
            ids.push(b.out);
            ids.extend(b.mlp.ids());
        }
        ids
    }

    /// Attention bias `B = mask + s`, `s(l,k) = wᵀZ^g_x` when both patches
    /// belong to substructure `x`. `zg` is `X × d_g`; `bias_index` comes
    /// from [`super::bias_index`].
    fn bias(
        &self,
        tape: &mut Graph,
        store: &ParamStore,
        mask: &Tensor,
        bias_index: &[usize],
        zg: Option<Var>,
    ) -> Result<Var, AutodiffError> {
        let l = mask.shape()[0];
        let m = tape.constant(mask.clone());
        let Some(zg) = zg else { return Ok(m) };
        let w = tape.param(store, self.sub_bias);
        let s = tape.matmul(zg, w)?;
        let zero = tape.constant(Tensor::zeros(&[1, 1]));
        let s = tape.concat(&[s, zero], 0)?;
        let s = tape.gather_rows(s, bias_index)?;
        let s = tape.reshape(s, &[l, l])?;
        tape.add(m, s)
    }

    /// `Z^(i)`: mean over patch outputs, `1 × width`.
    pub fn encode_image(
        &self,
        tape: &mut Graph,
        store: &ParamStore,
        patches: &Tensor,
        mask: &Tensor,
        bias_index: &[usize],
        zg: Option<Var>,
    ) -> Result<VitOutput, EncoderError> {
        let l = patches.shape()[0];
        if mask.shape() != [l, l] || l != self.patches {
            return Err(AutodiffError::ShapeMismatch {
                op: "encode_image",
                left: patches.shape().to_vec(),
                right: mask.shape().to_vec(),
            }
            .into());
        }
        let bias = self.bias(tape, store, mask, bias_index, zg)?;
        let x = tape.constant(patches.clone());
        let x = self.embed.forward(tape, store, x)?;
        let pos = tape.param(store, self.pos);
        let mut x = tape.add(x, pos)?;
        let mut attention = Vec::new();
        for b in &self.blocks {
            let xn = standardize_rows(tape, x)?;
            let mut outs = Vec::with_capacity(b.heads.len());
            for h in &b.heads {
                let (wq, wk, wv) = (
                    tape.param(store, h.q),
                    tape.param(store, h.k),
                    tape.param(store, h.v),
                );
                let q = tape.matmul(xn, wq)?;
                let k = tape.matmul(xn, wk)?;
                let v = tape.matmul(xn, wv)?;
                let dh = tape.shape(q)[1] as f64;
                let kt = tape.transpose(k)?;
                let logits = tape.matmul(q, kt)?;
                let logits = tape.scale(logits, 1.0 / sqrt(dh));
                let logits = tape.add(logits, bias)?;
                let a = tape.softmax(logits);
                attention.push(a);
                outs.push(tape.matmul(a, v)?);
            }
            let cat = tape.concat(&outs, 1)?;
            let wo = tape.param(store, b.out);
            let o = tape.matmul(cat, wo)?;
            x = tape.add(x, o)?;
            let xn = standardize_rows(tape, x)?;
            let f = b.mlp.forward(tape, store, xn)?;
            x = tape.add(x, f)?;
        }
        let z = tape.mean_rows(x)?;
        let z = standardize_rows(tape, z)?;
        Ok(VitOutput { z, attention })
    }
}
