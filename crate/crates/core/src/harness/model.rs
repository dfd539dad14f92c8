use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::{Benchmark, HarnessError, PairRecord};
use crate::autodiff::{Graph, ParamStore, Tensor, Var};
use crate::disdat::{DomainClassifier, Fusion, MineConfig, TaskHead, TaskKind};
use crate::encoders::{EncoderConfig, GumbelNoise, MolInput, TRegCross};
use crate::rng::{self, ChaCha8Rng};

/// Everything a training run needs besides the data and the mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub encoder: EncoderConfig,
    /// Fused width `d_f`.
    pub fused_width: usize,
    pub head_hidden: usize,
    pub batch: usize,
    pub lr: f64,
    pub pretrain_epochs: usize,
    pub epochs: usize,
    pub lambda_g: f64,
    pub lambda_i: f64,
    pub mine: MineConfig,
    /// Refresh the MI report every this many adaptation epochs; 0 keeps the
    /// report taken before the first epoch.
    pub mi_every: usize,
    /// Substructure rows per domain for the φ_g histograms.
    pub reservoir: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::default(),
            fused_width: 32,
            head_hidden: 32,
            batch: 64,
            lr: 0.01,
            pretrain_epochs: 200,
            epochs: 200,
            lambda_g: 0.3,
            lambda_i: 0.1,
            mine: MineConfig {
                batch: 256,
                ..MineConfig::default()
            },
            mi_every: 1,
            reservoir: 256,
        }
    }
}

/// Encoder, fusion, task head and both domain classifiers over one
/// parameter store.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub encoder: TRegCross,
    pub fusion: Fusion,
    pub head: TaskHead,
    pub clf_g: DomainClassifier,
    pub clf_i: DomainClassifier,
    pub store: ParamStore,
}

impl Model {
    pub fn new(cfg: &TrainConfig, seed: u64) -> Self {
        let mut rng = rng::stream(seed, 0x494e_4954);
        let mut store = ParamStore::new();
        let e = &cfg.encoder;
        let encoder = TRegCross::new(&mut store, e.clone(), &mut rng);
        let fusion = Fusion::new(&mut store, "fuse", e.d_g, e.d_i, cfg.fused_width, &mut rng);
        let head = TaskHead::new(
            &mut store,
            "head",
            cfg.fused_width,
            cfg.head_hidden,
            TaskKind::Classification,
            &mut rng,
        );
        let clf_g = DomainClassifier::new(&mut store, "clf_g", e.d_g, &mut rng);
        let clf_i = DomainClassifier::new(&mut store, "clf_i", e.d_i, &mut rng);
        Self {
            encoder,
            fusion,
            head,
            clf_g,
            clf_i,
            store,
        }
    }
}

/// Encoder inputs for every molecule of both pools.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub source: Vec<MolInput>,
    pub target: Vec<MolInput>,
}

impl Prepared {
    pub fn new(bench: &Benchmark) -> Result<Self, HarnessError> {
        let conv = |ms: &[super::MolRecord]| -> Result<Vec<MolInput>, HarnessError> {
            ms.iter().map(|m| Ok(MolInput::from_smiles(&m.smiles)?)).collect()
        };
        Ok(Self {
            source: conv(&bench.source.molecules)?,
            target: conv(&bench.target.molecules)?,
        })
    }
}

/// Distinct molecules of a batch of pairs, and each pair's two rows in
/// that list.
pub(crate) fn unique_molecules(pairs: &[PairRecord]) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let mut slot: BTreeMap<usize, usize> = BTreeMap::new();
    let mut mols = Vec::new();
    let mut at = |m: usize, mols: &mut Vec<usize>| {
        *slot.entry(m).or_insert_with(|| {
            mols.push(m);
            mols.len() - 1
        })
    };
    let mut a = Vec::with_capacity(pairs.len());
    let mut b = Vec::with_capacity(pairs.len());
    for p in pairs {
        a.push(at(p.i, &mut mols));
        b.push(at(p.j, &mut mols));
    }
    (mols, a, b)
}

/// Per-molecule `Z^(g)` and (when requested) `Z^(i)` stacked as rows.
pub(crate) struct Encoded {
    pub zg: Var,
    pub zi: Option<Var>,
}

pub(crate) fn encode_rows(
    tape: &mut Graph,
    encoder: &TRegCross,
    store: &ParamStore,
    mols: &[&MolInput],
    image: bool,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<Encoded, HarnessError> {
    let mut noise = match rng {
        Some(r) => GumbelNoise::Sample(r),
        None => GumbelNoise::Mean,
    };
    let mut zg = Vec::with_capacity(mols.len());
    let mut zi = Vec::with_capacity(mols.len());
    for m in mols {
        if image {
            let e = encoder.encode_molecule(tape, store, m, &mut noise)?;
            zg.push(e.z_g);
            zi.push(e.z_i);
        } else {
            let (g, _, _) = encoder.encode_structure(tape, store, m, &mut noise)?;
            zg.push(g);
        }
    }
    let zg = tape.concat(&zg, 0)?;
    let zi = if image { Some(tape.concat(&zi, 0)?) } else { None };
    Ok(Encoded { zg, zi })
}

/// Pair logits `B × 2` from per-molecule rows.
#[allow(clippy::too_many_arguments)]
pub(crate) fn pair_logits(
    tape: &mut Graph,
    model: &Model,
    store: &ParamStore,
    enc: &Encoded,
    weights: (f64, f64),
    a: &[usize],
    b: &[usize],
) -> Result<Var, HarnessError> {
    let zi = match enc.zi {
        Some(z) => z,
        None => enc.zg,
    };
    let zm = model.fusion.forward(tape, store, enc.zg, zi, weights)?;
    let za = tape.gather_rows(zm, a)?;
    let zb = tape.gather_rows(zm, b)?;
    Ok(model.head.forward(tape, store, za, zb)?)
}

/// Row-wise softmax probability of class 1.
pub(crate) fn positive_probs(t: &Tensor) -> Vec<f64> {
    let (rows, _) = t.dims2().unwrap_or((0, 2));
    (0..rows)
        .map(|r| {
            let (a, b) = (t.get2(r, 0), t.get2(r, 1));
            crate::math::sigmoid(b - a)
        })
        .collect()
}
