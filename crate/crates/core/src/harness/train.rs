use alloc::string::ToString;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;
use serde::{Deserialize, Serialize};

use super::model::{encode_rows, pair_logits, positive_probs, unique_molecules, Encoded};
use super::{classification_metrics, Benchmark, HarnessError, Metrics, Model, PairRecord, Prepared, Splits, TrainConfig};
use crate::autodiff::{sgd_step, Graph, ParamStore, Tensor, Var};
use crate::disdat::{
    fusion_weights, jsd_scale, loss_image_adv, loss_struct_adv, loss_task, loss_total, mi_shift_report,
    DisdatError, DomainSample, MiReport, Reversal, TaskKind, TaskLabels,
};
use crate::encoders::{GumbelNoise, MolInput};
use crate::rng::{self, shuffle, ChaCha8Rng};

/// Which adversarial branches run, and how.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TransferMode {
    /// φ_g-scaled reversal on structure, unit reversal on image.
    DisTrans,
    /// Both branches without reversal.
    SimCDT,
    /// φ_g-scaled reversal on both branches.
    DSCDT,
    /// Image branch only; structure passes through.
    NoTopo,
    /// Structure branch only; image passes through.
    NoSem,
    /// Structure modality alone.
    OnlyTop,
    /// Image modality alone.
    OnlySem,
}

impl TransferMode {
    pub const ALL: [TransferMode; 7] = [
        TransferMode::DisTrans,
        TransferMode::SimCDT,
        TransferMode::DSCDT,
        TransferMode::NoTopo,
        TransferMode::NoSem,
        TransferMode::OnlyTop,
        TransferMode::OnlySem,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TransferMode::DisTrans => "DisTrans",
            TransferMode::SimCDT => "SimCDT",
            TransferMode::DSCDT => "DSCDT",
            TransferMode::NoTopo => "NoTopo",
            TransferMode::NoSem => "NoSem",
            TransferMode::OnlyTop => "OnlyTop",
            TransferMode::OnlySem => "OnlySem",
        }
    }

    /// Reversal of the structure and image branches; `None` disables one.
    pub fn branches(self, phi_g: f64) -> (Option<Reversal>, Option<Reversal>) {
        use TransferMode::*;
        let s = Some(Reversal::Reverse(phi_g));
        let i = Some(Reversal::Reverse(1.0));
        match self {
            DisTrans => (s, i),
            SimCDT => (Some(Reversal::Identity), Some(Reversal::Identity)),
            DSCDT => (s, s),
            NoTopo => (None, i),
            NoSem => (s, None),
            OnlyTop => (s, None),
            OnlySem => (None, i),
        }
    }

    /// Fixed fusion weights of single-modality modes.
    pub fn fixed_weights(self) -> Option<(f64, f64)> {
        match self {
            TransferMode::OnlyTop => Some((1.0, 0.0)),
            TransferMode::OnlySem => Some((0.0, 1.0)),
            _ => None,
        }
    }

    /// Fusion weights used while pretraining on the source.
    pub fn pretrain_weights(self) -> (f64, f64) {
        self.fixed_weights().unwrap_or((0.5, 0.5))
    }

    fn uses_image(self) -> bool {
        self != TransferMode::OnlyTop
    }
}

impl fmt::Display for TransferMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TransferMode {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TransferMode::ALL
            .iter()
            .copied()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| HarnessError::ModeUnsupported(s.to_string()))
    }
}

fn batches(idx: &[usize], batch: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut v = idx.to_vec();
    shuffle(&mut v, rng);
    v.chunks(batch.max(1)).map(|c| c.to_vec()).collect()
}

fn pick(pairs: &[PairRecord], idx: &[usize]) -> Vec<PairRecord> {
    idx.iter().map(|&k| pairs[k]).collect()
}

fn class_labels(pairs: &[PairRecord]) -> TaskLabels {
    TaskLabels::Class(pairs.iter().map(|p| usize::from(p.label)).collect())
}

/// One supervised step on a batch; returns the task loss.
#[allow(clippy::too_many_arguments)]
fn supervised_loss(
    tape: &mut Graph,
    model: &Model,
    store: &ParamStore,
    mols: &[MolInput],
    pairs: &[PairRecord],
    weights: (f64, f64),
    image: bool,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<(Var, Encoded, Vec<usize>), HarnessError> {
    let (uniq, a, b) = unique_molecules(pairs);
    let refs: Vec<&MolInput> = uniq.iter().map(|&m| &mols[m]).collect();
    let enc = encode_rows(tape, &model.encoder, store, &refs, image, rng)?;
    let logits = pair_logits(tape, model, store, &enc, weights, &a, &b)?;
    let loss = loss_task(tape, TaskKind::Classification, logits, &class_labels(pairs))?;
    Ok((loss, enc, uniq))
}

/// Per-epoch mean task loss of source pretraining.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PretrainLog {
    pub epoch_loss: Vec<f64>,
}

/// Train encoder, fusion and head on the source pretraining split with the
/// task loss only. Returns the frozen source parameters; `model` keeps a
/// trainable copy that becomes the target extractor.
pub fn pretrain_source(
    model: &mut Model,
    bench: &Benchmark,
    prep: &Prepared,
    splits: &Splits,
    cfg: &TrainConfig,
    mode: TransferMode,
    seed: u64,
) -> Result<(ParamStore, PretrainLog), HarnessError> {
    if splits.source_pretrain.is_empty() {
        return Err(HarnessError::EmptySplit("source pretrain"));
    }
    let mut rng = rng::stream(seed, 0x5052_4554);
    let mut log = PretrainLog::default();
    let weights = mode.pretrain_weights();
    for _ in 0..cfg.pretrain_epochs {
        let mut total = 0.0;
        let mut count = 0usize;
        for b in batches(&splits.source_pretrain, cfg.batch, &mut rng) {
            let pairs = pick(&bench.source.pairs, &b);
            let mut tape = Graph::new();
            let (loss, _, _) = supervised_loss(
                &mut tape,
                model,
                &model.store,
                &prep.source,
                &pairs,
                weights,
                mode.uses_image(),
                Some(&mut rng),
            )?;
            total += tape.value(loss).item().unwrap_or(f64::NAN) * pairs.len() as f64;
            count += pairs.len();
            tape.backward(loss)?;
            model.store.zero_grads();
            tape.accumulate_param_grads(&mut model.store);
            sgd_step(&mut model.store, cfg.lr);
        }
        log.epoch_loss.push(total / count.max(1) as f64);
    }
    Ok((model.store.clone(), log))
}

/// Eval-mode per-molecule rows as plain vectors.
fn molecule_rows(
    model: &Model,
    store: &ParamStore,
    mols: &[MolInput],
    which: &[usize],
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>), HarnessError> {
    let mut zg = Vec::with_capacity(which.len());
    let mut zi = Vec::with_capacity(which.len());
    for &m in which {
        let mut tape = Graph::new();
        let e = model.encoder.encode_molecule(&mut tape, store, &mols[m], &mut GumbelNoise::Mean)?;
        zg.push(tape.value(e.z_g).data().to_vec());
        zi.push(tape.value(e.z_i).data().to_vec());
    }
    Ok((zg, zi))
}

/// Pair-level `[Z^g_i, Z^g_j]`, `[Z^i_i, Z^i_j]` and label rows of the
/// given pairs, from per-molecule rows indexed by pool position.
fn pair_features(
    pairs: &[PairRecord],
    zg: &[Vec<f64>],
    zi: &[Vec<f64>],
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let cat = |a: &[f64], b: &[f64]| {
        let mut r = a.to_vec();
        r.extend_from_slice(b);
        r
    };
    let g = pairs.iter().map(|p| cat(&zg[p.i], &zg[p.j])).collect();
    let i = pairs.iter().map(|p| cat(&zi[p.i], &zi[p.j])).collect();
    let y = pairs.iter().map(|p| alloc::vec![f64::from(p.label)]).collect();
    (g, i, y)
}

fn all_molecules(n: usize) -> Vec<usize> {
    (0..n).collect()
}

/// MI-shift report of representations: source pairs under `source_store`,
/// target pairs under `target_store`.
#[allow(clippy::too_many_arguments)]
pub fn representation_report(
    model: &Model,
    source_store: &ParamStore,
    target_store: &ParamStore,
    bench: &Benchmark,
    prep: &Prepared,
    source_pairs: &[usize],
    target_pairs: &[usize],
    cfg: &TrainConfig,
) -> Result<MiReport, HarnessError> {
    let (sg, si) = molecule_rows(model, source_store, &prep.source, &all_molecules(prep.source.len()))?;
    let (tg, ti) = molecule_rows(model, target_store, &prep.target, &all_molecules(prep.target.len()))?;
    let (a, b, c) = pair_features(&pick(&bench.source.pairs, source_pairs), &sg, &si);
    let (d, e, f) = pair_features(&pick(&bench.target.pairs, target_pairs), &tg, &ti);
    Ok(mi_shift_report(
        &DomainSample { zg: &a, zi: &b, y: &c },
        &DomainSample { zg: &d, zi: &e, y: &f },
        &cfg.mine,
    )?)
}

/// Up to `cap` substructure rows `Z^g_xn` from randomly ordered molecules.
fn reservoir(
    model: &Model,
    store: &ParamStore,
    mols: &[MolInput],
    candidates: &[usize],
    cap: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<f64>>, HarnessError> {
    let mut order = candidates.to_vec();
    shuffle(&mut order, rng);
    let mut rows = Vec::new();
    for m in order {
        if rows.len() >= cap {
            break;
        }
        let mut tape = Graph::new();
        let (_, zxn, _) = model.encoder.encode_structure(&mut tape, store, &mols[m], &mut GumbelNoise::Mean)?;
        let t = tape.value(zxn);
        let (r, _) = t.dims2().unwrap_or((0, 0));
        for k in 0..r {
            if rows.len() < cap {
                rows.push(t.row_slice(k).to_vec());
            }
        }
    }
    Ok(rows)
}

fn molecules_of(pairs: &[PairRecord], idx: &[usize]) -> Vec<usize> {
    let mut v: Vec<usize> = idx.iter().flat_map(|&k| [pairs[k].i, pairs[k].j]).collect();
    v.sort_unstable();
    v.dedup();
    v
}

/// Per-epoch diagnostics and the gating audit of `adapt`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AdaptLog {
    pub phi_g: Vec<f64>,
    pub weights: Vec<(f64, f64)>,
    pub reports: Vec<MiReport>,
    pub epoch_task_loss: Vec<f64>,
    pub source_batches: usize,
    pub target_batches: usize,
    /// Source batches after which any trainable parameter changed.
    pub gating_violations: usize,
    /// Too few labelled target pairs for MINE; fusion used (0.5, 0.5).
    pub mi_fallback: bool,
}

/// Settings of `adapt` beyond the training configuration.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdaptOptions {
    /// MI report to use before the first epoch instead of estimating one.
    pub initial_report: Option<MiReport>,
    /// Record parameter checksums around every source batch.
    pub audit_gating: bool,
}

/// Domain-adversarial adaptation. Source and target batches alternate;
/// source batches run forward through the frozen extractor only, and
/// parameters are updated on target batches.
#[allow(clippy::too_many_arguments)]
pub fn adapt(
    model: &mut Model,
    frozen: &ParamStore,
    mode: TransferMode,
    bench: &Benchmark,
    prep: &Prepared,
    splits: &Splits,
    cfg: &TrainConfig,
    opts: &AdaptOptions,
    seed: u64,
) -> Result<AdaptLog, HarnessError> {
    if splits.source_adapt.is_empty() {
        return Err(HarnessError::EmptySplit("source adapt"));
    }
    if splits.target_adapt.is_empty() {
        return Err(HarnessError::EmptySplit("target adapt"));
    }
    if cfg.lambda_g < 0.0 || cfg.lambda_i < 0.0 {
        return Err(HarnessError::Disdat(DisdatError::NegativeLambda(
            cfg.lambda_g,
            cfg.lambda_i,
        )));
    }
    let mut rng = rng::stream(seed, 0x4144_4150);
    let mut log = AdaptLog::default();
    let image = mode.uses_image();

    // The frozen extractor is deterministic in eval mode, so its per-molecule
    // outputs are computed once.
    let (src_g, src_i) = molecule_rows(model, frozen, &prep.source, &all_molecules(prep.source.len()))?;
    let src_mols = molecules_of(&bench.source.pairs, &splits.source_adapt);
    let tgt_mols = molecules_of(&bench.target.pairs, &splits.target_adapt);
    let src_res = reservoir(model, frozen, &prep.source, &src_mols, cfg.reservoir, &mut rng)?;

    let mut report = opts.initial_report.clone();
    let mut stash: Option<(Tensor, Tensor)> = None;

    for epoch in 0..cfg.epochs {
        let refresh = report.is_none() || (cfg.mi_every > 0 && epoch > 0 && epoch % cfg.mi_every == 0);
        if mode.fixed_weights().is_none() && refresh {
            // Every source pair is labelled; the target side may only use
            // its adaptation split.
            let all_source: Vec<usize> = (0..bench.source.pairs.len()).collect();
            report = match representation_report(
                model,
                frozen,
                &model.store,
                bench,
                prep,
                &all_source,
                &splits.target_adapt,
                cfg,
            ) {
                Ok(r) => Some(r),
                Err(HarnessError::Disdat(DisdatError::TooFewSamples { .. })) => {
                    log.mi_fallback = true;
                    Some(MiReport::from_bits(0.0, 0.0))
                }
                Err(e) => return Err(e),
            };
        }
        let weights = match mode.fixed_weights() {
            Some(w) => w,
            None => fusion_weights(report.as_ref().expect("set above")),
        };
        let tgt_res = reservoir(model, &model.store, &prep.target, &tgt_mols, cfg.reservoir, &mut rng)?;
        let phi_g = jsd_scale(&src_res, &tgt_res)?;
        log.phi_g.push(phi_g);
        log.weights.push(weights);
        if let Some(r) = &report {
            log.reports.push(r.clone());
        }
        let (rev_g, rev_i) = mode.branches(phi_g);

        let sb = batches(&splits.source_adapt, cfg.batch, &mut rng);
        let tb = batches(&splits.target_adapt, cfg.batch, &mut rng);
        let mut order = Vec::with_capacity(sb.len() + tb.len());
        for k in 0..sb.len().max(tb.len()) {
            if let Some(b) = sb.get(k) {
                order.push((true, b));
            }
            if let Some(b) = tb.get(k) {
                order.push((false, b));
            }
        }
        let mut task_total = 0.0;
        let mut task_count = 0usize;
        for (is_source, b) in order {
            if is_source {
                let before = opts.audit_gating.then(|| model.store.checksum());
                let pairs = pick(&bench.source.pairs, b);
                let (uniq, _, _) = unique_molecules(&pairs);
                let g: Vec<Vec<f64>> = uniq.iter().map(|&m| src_g[m].clone()).collect();
                let i: Vec<Vec<f64>> = uniq.iter().map(|&m| src_i[m].clone()).collect();
                stash = Some((Tensor::from_rows(&g)?, Tensor::from_rows(&i)?));
                log.source_batches += 1;
                if let Some(c) = before {
                    if model.store.checksum() != c {
                        log.gating_violations += 1;
                    }
                }
                continue;
            }
            let pairs = pick(&bench.target.pairs, b);
            let mut tape = Graph::new();
            let (l_pre, enc, _) = supervised_loss(
                &mut tape,
                model,
                &model.store,
                &prep.target,
                &pairs,
                weights,
                image,
                Some(&mut rng),
            )?;
            task_total += tape.value(l_pre).item().unwrap_or(f64::NAN) * pairs.len() as f64;
            task_count += pairs.len();
            let (sg, si) = stash.clone().expect("a source batch precedes every target batch");
            let l_g = match rev_g {
                Some(r) if cfg.lambda_g > 0.0 => {
                    let s = tape.constant(sg);
                    Some(loss_struct_adv(&mut tape, &model.store, &model.clf_g, s, enc.zg, r)?)
                }
                _ => None,
            };
            let l_i = match (rev_i, enc.zi) {
                (Some(r), Some(zi)) if cfg.lambda_i > 0.0 => {
                    let s = tape.constant(si);
                    let z = tape.concat(&[s, zi], 0)?;
                    Some(loss_image_adv(&mut tape, &model.store, &model.clf_i, z, r)?)
                }
                _ => None,
            };
            let loss = loss_total(&mut tape, l_pre, l_g, l_i, cfg.lambda_g, cfg.lambda_i)?;
            tape.backward(loss)?;
            model.store.zero_grads();
            tape.accumulate_param_grads(&mut model.store);
            sgd_step(&mut model.store, cfg.lr);
            log.target_batches += 1;
        }
        log.epoch_task_loss.push(task_total / task_count.max(1) as f64);
    }
    if let Some(r) = report {
        if log.reports.is_empty() {
            log.reports.push(r);
        }
    }
    Ok(log)
}

/// Test-split predictions and summary of one domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub metrics: Metrics,
    /// Mean cross-entropy (nats).
    pub loss: f64,
    pub probs: Vec<f64>,
    pub labels: Vec<u8>,
}

/// Eval-mode metrics of `store` on the given pairs of one domain.
pub fn evaluate(
    model: &Model,
    store: &ParamStore,
    mols: &[MolInput],
    pairs: &[PairRecord],
    weights: (f64, f64),
) -> Result<Evaluation, HarnessError> {
    if pairs.is_empty() {
        return Err(HarnessError::EmptyTestSet);
    }
    let image = weights.1 != 0.0;
    let mut probs = Vec::with_capacity(pairs.len());
    let mut loss = 0.0;
    for chunk in pairs.chunks(256) {
        let mut tape = Graph::new();
        let (uniq, a, b) = unique_molecules(chunk);
        let refs: Vec<&MolInput> = uniq.iter().map(|&m| &mols[m]).collect();
        let enc = encode_rows(&mut tape, &model.encoder, store, &refs, image, None)?;
        let logits = pair_logits(&mut tape, model, store, &enc, weights, &a, &b)?;
        let l = loss_task(&mut tape, TaskKind::Classification, logits, &class_labels(chunk))?;
        loss += tape.value(l).item().unwrap_or(f64::NAN) * chunk.len() as f64;
        probs.extend(positive_probs(tape.value(logits)));
    }
    let labels: Vec<u8> = pairs.iter().map(|p| p.label).collect();
    Ok(Evaluation {
        metrics: classification_metrics(&probs, &labels)?,
        loss: loss / pairs.len() as f64,
        probs,
        labels,
    })
}

/// Outcome of one (mode, seed) run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub mode: TransferMode,
    pub seed: u64,
    pub test: Evaluation,
    pub weights: (f64, f64),
    pub adapt: AdaptLog,
    pub pretrain: PretrainLog,
}

/// A pretrained starting point shared by every mode with the same
/// pretraining fusion weights.
#[derive(Clone, Debug)]
pub struct Pretrained {
    pub model: Model,
    pub frozen: ParamStore,
    pub log: PretrainLog,
}

pub fn pretrain(
    bench: &Benchmark,
    prep: &Prepared,
    splits: &Splits,
    cfg: &TrainConfig,
    mode: TransferMode,
    seed: u64,
) -> Result<Pretrained, HarnessError> {
    let mut model = Model::new(cfg, seed);
    let (frozen, log) = pretrain_source(&mut model, bench, prep, splits, cfg, mode, seed)?;
    Ok(Pretrained { model, frozen, log })
}

/// Adapt a copy of `start` with `mode` and evaluate on the target test split.
#[allow(clippy::too_many_arguments)]
pub fn run_mode(
    start: &Pretrained,
    mode: TransferMode,
    bench: &Benchmark,
    prep: &Prepared,
    splits: &Splits,
    cfg: &TrainConfig,
    opts: &AdaptOptions,
    seed: u64,
) -> Result<RunResult, HarnessError> {
    let mut model = start.model.clone();
    let log = adapt(&mut model, &start.frozen, mode, bench, prep, splits, cfg, opts, seed)?;
    let weights = log.weights.last().copied().unwrap_or(mode.pretrain_weights());
    let test = evaluate(
        &model,
        &model.store,
        &prep.target,
        &pick(&bench.target.pairs, &splits.target_test),
        weights,
    )?;
    Ok(RunResult {
        mode,
        seed,
        test,
        weights,
        adapt: log,
        pretrain: start.log.clone(),
    })
}

/// Pairs of `domain` at the given split indices.
pub fn split_pairs(pairs: &[PairRecord], idx: &[usize]) -> Vec<PairRecord> {
    pick(pairs, idx)
}
