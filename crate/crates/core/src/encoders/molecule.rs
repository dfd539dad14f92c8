use alloc::vec::Vec;
use rand::Rng;

use super::{
    gumbel_weights, inject_adjacent, pool_all, Affiliation, EncoderConfig, EncoderError,
    standardize_rows, GineEncoder, GumbelNoise, Linear, MolInput, VitEncoder,
};
use crate::autodiff::{Graph, ParamId, ParamStore, Var};
use crate::molgraph::{CHANNELS, PATCHES};

/// Floor applied to affiliations before the logarithm so that saturated
/// sigmoids cannot produce `ln 0`.
const ETA_FLOOR: f64 = 1e-12;

/// The cross-modal feature extractor.
#[derive(Clone, Debug, PartialEq)]
pub struct TRegCross {
    pub config: EncoderConfig,
    pub gine: GineEncoder,
    pub affiliation: Affiliation,
    pub project: Linear,
    pub vit: VitEncoder,
}

/// Tape handles for one encoded molecule.
#[derive(Clone, Copy, Debug)]
pub struct MolEncoding {
    /// `Z^(g)`, `1 × d_g`.
    pub z_g: Var,
    /// `Z^(i)`, `1 × d_i`.
    pub z_i: Var,
    /// Injected substructure embeddings `Z^g_xn`, `X × 2·d_g`.
    pub z_xn: Var,
    /// Pooled substructure embeddings `Z^g_x`, `X × d_g`.
    pub z_x: Var,
}

impl TRegCross {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, config: EncoderConfig, rng: &mut R) -> Self {
        Self::with_patches(store, config, PATCHES, rng)
    }

    /// Encoder for grids of `patches` patches (the default raster has
    /// [`PATCHES`]).
    pub fn with_patches<R: Rng + ?Sized>(
        store: &mut ParamStore,
        config: EncoderConfig,
        patches: usize,
        rng: &mut R,
    ) -> Self {
        let d = config.d_g;
        let gine = GineEncoder::new(store, "struct.gine", d, config.gine_layers, rng);
        let affiliation = Affiliation::new(store, "struct.affil", d, rng);
        let project = Linear::new(store, "struct.proj", 2 * d, d, rng);
        let vit = VitEncoder::new(
            store,
            "image.vit",
            patches,
            CHANNELS,
            config.d_i,
            d,
            config.heads,
            config.vit_blocks,
            config.vit_mlp,
            rng,
        );
        Self {
            config,
            gine,
            affiliation,
            project,
            vit,
        }
    }

    /// Structure-branch parameters.
    pub fn structure_ids(&self) -> Vec<ParamId> {
        let mut ids = self.gine.ids();
        ids.extend(self.affiliation.ids());
        ids.extend(self.project.ids());
        ids
    }

    /// Image-branch parameters.
    pub fn image_ids(&self) -> Vec<ParamId> {
        self.vit.ids()
    }

    /// Structure branch only: `(Z^(g), Z^g_xn, Z^g_x)`.
    pub fn encode_structure(
        &self,
        tape: &mut Graph,
        store: &ParamStore,
        m: &MolInput,
        noise: &mut GumbelNoise<'_>,
    ) -> Result<(Var, Var, Var), EncoderError> {
        let cfg = &self.config;
        let zv = self.gine.encode_atoms(tape, store, m)?;
        let zx = pool_all(tape, zv, &m.partition, cfg.gamma)?;
        let mut rows = Vec::with_capacity(m.partition.len());
        for (x, front) in m.partition.frontier.iter().enumerate() {
            let zg_x = tape.slice_rows(zx, x, x + 1)?;
            let frontier = if front.is_empty() {
                None
            } else {
                let zf = tape.gather_rows(zv, front)?;
                let eta = self.affiliation.forward(tape, store, zg_x, zf)?;
                let eta = tape.clamp(eta, ETA_FLOOR, f64::INFINITY);
                let phi = gumbel_weights(tape, eta, cfg.tau, noise)?;
                Some((phi, zf))
            };
            rows.push(inject_adjacent(tape, zg_x, frontier, cfg.q)?);
        }
        let zxn = tape.concat(&rows, 0)?;
        let pooled = tape.mean_rows(zxn)?;
        let zg = self.project.forward(tape, store, pooled)?;
        let zg = standardize_rows(tape, zg)?;
        Ok((zg, zxn, zx))
    }

    /// Both branches; the image branch sees the pooled substructure
    /// embeddings through its attention bias.
    pub fn encode_molecule(
        &self,
        tape: &mut Graph,
        store: &ParamStore,
        m: &MolInput,
        noise: &mut GumbelNoise<'_>,
    ) -> Result<MolEncoding, EncoderError> {
        let (z_g, z_xn, z_x) = self.encode_structure(tape, store, m, noise)?;
        let img = self
            .vit
            .encode_image(tape, store, &m.patches, &m.mask, &m.bias_index, Some(z_x))?;
        Ok(MolEncoding {
            z_g,
            z_i: img.z,
            z_xn,
            z_x,
        })
    }
}
