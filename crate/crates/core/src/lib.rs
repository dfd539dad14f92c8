//! Cross-domain molecular relational learning, desk scale.
//!
//! The crate is `no_std` (with `alloc`) and holds every computational piece:
//!
//! - [`molgraph`]: SMILES parsing, BRICS-lite fragmentation, 2-D layout and
//!   rasterization into a patch grid.
//! - [`autodiff`]: a dynamic-tape reverse-mode engine over dense `f64`
//!   tensors, including the scaled gradient-reversal node.
//! - [`encoders`]: the cross-modal extractor (GINE message passing with
//!   substructure pooling and Gumbel adjacent-atom injection, plus
//!   structure-masked patch attention).
//! - [`disdat`]: the domain-adversarial objective, JSD gradient scaling,
//!   MINE estimation, shift-aware fusion and the task head.
//! - [`harness`]: the synthetic two-domain benchmark, the training loop,
//!   metrics, ablation modes and the shift/error sweep.
//!
//! File formats, configuration and the command-line front end live in the
//! `distrans` companion crate.

#![cfg_attr(not(test), no_std)]
#![deny(unsafe_code)]

extern crate alloc;

pub mod autodiff;
pub mod disdat;
pub mod encoders;
pub mod harness;
pub mod math;
pub mod molgraph;
pub mod rng;

pub use autodiff::{AutodiffError, Graph, ParamId, ParamStore, Tensor, Var};
pub use molgraph::{MolecularGraph, PatchGrid, SubstructurePartition};
