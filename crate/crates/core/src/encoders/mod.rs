//! TRegCross: the cross-modal molecule encoder. The structure branch runs
//! GINE message passing, pools atoms into substructures and injects
//! Gumbel-weighted frontier atoms; the image branch runs masked attention
//! over raster patches with a per-substructure bias.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::autodiff::{AutodiffError, Tensor};
use crate::molgraph::{
    fragment, layout_2d, parse_smiles, rasterize, Element, LayoutError,
    MolecularGraph, PatchGrid, SmilesError, SubstructurePartition,
};

mod gine;
pub mod layers;
mod mask;
mod molecule;
mod substructure;
mod vit;

pub use gine::GineEncoder;
pub use layers::{standardize_rows, Linear, Mlp, NORM_EPS};
pub use mask::{bias_index, build_mask, NEG_INF};
pub use molecule::{MolEncoding, TRegCross};
pub use substructure::{
    gumbel_weights, inject_adjacent, pool_all, pool_matrix, pool_substructure, Affiliation,
    GumbelNoise,
};
pub use vit::{VitEncoder, VitOutput};

/// Per-atom input feature width: 11 element classes, aromatic, ring, and
/// 5 degree buckets.
pub const ATOM_FEATURES: usize = 18;
/// One-hot bond order.
pub const EDGE_FEATURES: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub d_g: usize,
    pub d_i: usize,
    pub heads: usize,
    pub gine_layers: usize,
    pub vit_blocks: usize,
    pub vit_mlp: usize,
    pub gamma: f64,
    pub tau: f64,
    pub q: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            d_g: 32,
            d_i: 32,
            heads: 2,
            gine_layers: 3,
            vit_blocks: 3,
            vit_mlp: 64,
            gamma: 0.5,
            tau: 1.0,
            q: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EncoderError {
    #[error("substructure {0} has no atoms")]
    EmptyGroup(usize),
    #[error("substructure {0} has an empty frontier")]
    EmptyFrontier(usize),
    #[error("gumbel temperature must be positive, got {0}")]
    NonPositiveTau(f64),
    #[error("affiliation weight {value} at frontier position {index} is not positive")]
    NonPositiveEta { index: usize, value: f64 },
    #[error("gamma must lie in [0, 1], got {0}")]
    GammaOutOfRange(f64),
    #[error("Q must be at least 1")]
    ZeroQ,
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Smiles(#[from] SmilesError),
    #[error(transparent)]
    Layout(#[from] LayoutError),
}

fn element_class(e: Element) -> usize {
    match e {
        Element::C => 0,
        Element::N => 1,
        Element::O => 2,
        Element::S => 3,
        Element::P => 4,
        Element::F => 5,
        Element::CL => 6,
        Element::BR => 7,
        Element::I => 8,
        Element::B => 9,
        _ => 10,
    }
}

/// `N × ATOM_FEATURES` input matrix.
pub fn atom_features(g: &MolecularGraph) -> Tensor {
    let mut data = vec![0.0; g.atom_count() * ATOM_FEATURES];
    for (i, a) in g.atoms().iter().enumerate() {
        let row = &mut data[i * ATOM_FEATURES..(i + 1) * ATOM_FEATURES];
        row[element_class(a.element)] = 1.0;
        row[11] = f64::from(u8::from(a.aromatic));
        row[12] = f64::from(u8::from(a.ring));
        row[13 + usize::from(a.degree).min(4)] = 1.0;
    }
    Tensor::new(vec![g.atom_count(), ATOM_FEATURES], data).expect("shape")
}

/// Everything the encoder needs about one molecule, precomputed once.
#[derive(Clone, Debug, PartialEq)]
pub struct MolInput {
    pub smiles: String,
    pub atom_count: usize,
    pub atom_x: Tensor,
    /// Source atom of each directed edge (both directions of every bond).
    pub edge_src: Vec<usize>,
    /// `2E × EDGE_FEATURES`.
    pub edge_x: Tensor,
    /// `N × 2E` incidence: row `v` sums the messages arriving at `v`.
    pub edge_agg: Tensor,
    pub partition: SubstructurePartition,
    /// `L × C` patch features.
    pub patches: Tensor,
    pub mask: Tensor,
    pub bias_index: Vec<usize>,
}

impl MolInput {
    pub fn new(g: &MolecularGraph, partition: SubstructurePartition, grid: &PatchGrid) -> Self {
        let n = g.atom_count();
        let e2 = 2 * g.bond_count();
        let mut edge_src = Vec::with_capacity(e2);
        let mut edge_x = vec![0.0; e2 * EDGE_FEATURES];
        let mut edge_agg = vec![0.0; n * e2];
        for (bi, b) in g.bonds().iter().enumerate() {
            for (k, (src, dst)) in [(b.a, b.b), (b.b, b.a)].into_iter().enumerate() {
                let e = 2 * bi + k;
                edge_src.push(src);
                edge_x[e * EDGE_FEATURES + b.order.index()] = 1.0;
                edge_agg[dst * e2 + e] = 1.0;
            }
        }
        let feats: Vec<f64> = grid.patches.iter().flat_map(|p| p.features.iter().copied()).collect();
        Self {
            smiles: String::from(g.smiles_source()),
            atom_count: n,
            atom_x: atom_features(g),
            edge_src,
            edge_x: Tensor::new(vec![e2, EDGE_FEATURES], edge_x).expect("shape"),
            edge_agg: Tensor::new(vec![n, e2], edge_agg).expect("shape"),
            mask: build_mask(grid),
            bias_index: bias_index(grid, partition.len()),
            partition,
            patches: Tensor::new(vec![grid.len(), grid.channels], feats).expect("shape"),
        }
    }

    /// Parse, fragment, lay out and rasterize.
    pub fn from_smiles(smiles: &str) -> Result<Self, EncoderError> {
        let g = parse_smiles(smiles)?;
        let p = fragment(&g);
        let layout = layout_2d(&g)?;
        let grid = rasterize(&g, &p, &layout);
        Ok(Self::new(&g, p, &grid))
    }

    pub fn patch_count(&self) -> usize {
        self.patches.shape()[0]
    }
}

#[cfg(test)]
mod tests;
