use alloc::format;
use alloc::vec::Vec;
use rand::Rng;

use super::{standardize_rows, EncoderError, Linear, Mlp, MolInput, ATOM_FEATURES, EDGE_FEATURES};
use crate::autodiff::{Graph, ParamId, ParamStore, Var};

#[derive(Clone, Debug, PartialEq)]
struct GineLayer {
    edge: ParamId,
    update: Mlp,
}

/// Edge-conditioned GIN: `h'_v = MLP(h_v + Σ_u ReLU(h_u + e_uv·W_e))`,
/// with ReLU between layers.
#[derive(Clone, Debug, PartialEq)]
pub struct GineEncoder {
    input: Linear,
    layers: Vec<GineLayer>,
    width: usize,
}

impl GineEncoder {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        width: usize,
        depth: usize,
        rng: &mut R,
    ) -> Self {
        let input = Linear::new(store, &format!("{name}.in"), ATOM_FEATURES, width, rng);
        let layers = (0..depth)
            .map(|l| GineLayer {
                edge: store.add_glorot(format!("{name}.{l}.edge"), EDGE_FEATURES, width, rng),
                update: Mlp::new(store, &format!("{name}.{l}.mlp"), [width, width, width], rng),
            })
            .collect();
        Self {
            input,
            layers,
            width,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn ids(&self) -> Vec<ParamId> {
        let mut ids: Vec<ParamId> = self.input.ids().into();
        for l in &self.layers {
            ids.push(l.edge);
            ids.extend(l.update.ids());
        }
        ids
    }

    /// Per-atom embeddings `Z^V`, shape `N × width`.
    pub fn encode_atoms(
        &self,
        tape: &mut Graph,
        store: &ParamStore,
        m: &MolInput,
    ) -> Result<Var, EncoderError> {
        let x = tape.constant(m.atom_x.clone());
        let mut h = self.input.forward(tape, store, x)?;
        let edges = if m.edge_src.is_empty() {
            None
        } else {
            Some((tape.constant(m.edge_x.clone()), tape.constant(m.edge_agg.clone())))
        };
        for (l, layer) in self.layers.iter().enumerate() {
            let z = match edges {
                Some((ex, agg)) => {
                    let src = tape.gather_rows(h, &m.edge_src)?;
                    let we = tape.param(store, layer.edge);
                    let e = tape.matmul(ex, we)?;
                    let msg = tape.add(src, e)?;
                    let msg = tape.relu(msg);
                    let summed = tape.matmul(agg, msg)?;
                    tape.add(h, summed)?
                }
                None => h,
            };
            h = layer.update.forward(tape, store, z)?;
            h = standardize_rows(tape, h)?;
            if l + 1 < self.layers.len() {
                h = tape.relu(h);
            }
        }
        Ok(h)
    }
}
