//! Experiment pipelines behind the run commands. Every function is a pure
//! function of the configuration; file I/O stays in the CLI layer.

use distrans_core::disdat::{DisdatError, MiReport};
use distrans_core::harness::{
    adapt, evaluate, generate_benchmark, pretrain, representation_report, split, split_pairs, theory_sweep,
    AdaptLog, AdaptOptions, Benchmark, HarnessError, Model, Prepared, Pretrained, Splits, TheoryReport,
    TransferMode,
};
use distrans_core::ParamStore;

use crate::config::RunConfig;
use crate::formats::{load_records, store_records, FormatError, MetricsRow, Record};

/// Checkpoint record holding the fusion weights used at evaluation.
pub const WEIGHTS_RECORD: &str = "fusion.weights";

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("checkpoint has no `{WEIGHTS_RECORD}` record of 2 values")]
    MissingWeights,
}

/// Benchmark, encoder inputs and splits of one seed.
pub struct Data {
    pub bench: Benchmark,
    pub prep: Prepared,
    pub splits: Splits,
}

pub fn prepare(cfg: &RunConfig, seed: u64) -> Result<Data, HarnessError> {
    let bench = generate_benchmark(seed, cfg.shift_level, cfg.n_pairs)?;
    let prep = Prepared::new(&bench)?;
    let splits = split(&bench, cfg.target_fraction, seed)?;
    Ok(Data { bench, prep, splits })
}

/// MI report before adaptation: every labelled source pair against the
/// target adaptation split. Too few target pairs give a zero report, which
/// makes fusion fall back to equal weights.
pub fn initial_report(cfg: &RunConfig, data: &Data, start: &Pretrained) -> Result<MiReport, HarnessError> {
    let all_source: Vec<usize> = (0..data.bench.source.pairs.len()).collect();
    match representation_report(
        &start.model,
        &start.frozen,
        &start.model.store,
        &data.bench,
        &data.prep,
        &all_source,
        &data.splits.target_adapt,
        &cfg.train_config(),
    ) {
        Err(HarnessError::Disdat(DisdatError::TooFewSamples { .. })) => Ok(MiReport::from_bits(0.0, 0.0)),
        r => r,
    }
}

/// A finished adaptation run.
pub struct Trained {
    pub row: MetricsRow,
    pub log: AdaptLog,
    pub store: ParamStore,
}

impl Trained {
    /// Parameters plus the evaluation fusion weights.
    pub fn checkpoint(&self) -> Vec<Record> {
        let mut r = store_records(&self.store);
        r.push(Record {
            name: WEIGHTS_RECORD.into(),
            shape: vec![2],
            values: vec![self.row.weights.0, self.row.weights.1],
        });
        r
    }
}

fn row(cfg: &RunConfig, mode: TransferMode, seed: u64, ev: &distrans_core::harness::Evaluation, w: (f64, f64)) -> MetricsRow {
    MetricsRow {
        mode,
        shift_level: cfg.shift_level,
        target_fraction: cfg.target_fraction,
        seed,
        metrics: ev.metrics,
        loss: ev.loss,
        weights: w,
    }
}

/// Adapt a copy of `start` with `mode` and evaluate it on the target test
/// split.
pub fn adapt_and_evaluate(
    cfg: &RunConfig,
    data: &Data,
    start: &Pretrained,
    mode: TransferMode,
    report: Option<MiReport>,
    seed: u64,
) -> Result<Trained, HarnessError> {
    let tc = cfg.train_config();
    let mut model = start.model.clone();
    let opts = AdaptOptions {
        initial_report: report,
        audit_gating: false,
    };
    let log = adapt(&mut model, &start.frozen, mode, &data.bench, &data.prep, &data.splits, &tc, &opts, seed)?;
    let weights = log.weights.last().copied().unwrap_or(mode.pretrain_weights());
    let test = evaluate(
        &model,
        &model.store,
        &data.prep.target,
        &split_pairs(&data.bench.target.pairs, &data.splits.target_test),
        weights,
    )?;
    Ok(Trained {
        row: row(cfg, mode, seed, &test, weights),
        log,
        store: model.store,
    })
}

/// Source pretraining followed by adaptation with `cfg.mode` at `cfg.seed`.
pub fn train(cfg: &RunConfig) -> Result<Trained, HarnessError> {
    let data = prepare(cfg, cfg.seed)?;
    let start = pretrain(&data.bench, &data.prep, &data.splits, &cfg.train_config(), cfg.mode, cfg.seed)?;
    adapt_and_evaluate(cfg, &data, &start, cfg.mode, None, cfg.seed)
}

/// Target test metrics of checkpointed parameters.
pub fn eval(cfg: &RunConfig, records: &[Record]) -> Result<MetricsRow, RunError> {
    let data = prepare(cfg, cfg.seed)?;
    let tc = cfg.train_config();
    let mut model = Model::new(&tc, cfg.seed);
    load_records(&mut model.store, records)?;
    let w = records
        .iter()
        .find(|r| r.name == WEIGHTS_RECORD && r.values.len() == 2)
        .ok_or(RunError::MissingWeights)?;
    let weights = (w.values[0], w.values[1]);
    let test = evaluate(
        &model,
        &model.store,
        &data.prep.target,
        &split_pairs(&data.bench.target.pairs, &data.splits.target_test),
        weights,
    )?;
    Ok(row(cfg, cfg.mode, cfg.seed, &test, weights))
}

/// MI shift of a source-pretrained extractor.
pub fn mi_report(cfg: &RunConfig) -> Result<MiReport, HarnessError> {
    let data = prepare(cfg, cfg.seed)?;
    let start = pretrain(&data.bench, &data.prep, &data.splits, &cfg.train_config(), cfg.mode, cfg.seed)?;
    initial_report(cfg, &data, &start)
}

pub fn theory(cfg: &RunConfig) -> Result<TheoryReport, HarnessError> {
    theory_sweep(&cfg.levels, &cfg.seed_list(), cfg.n_pairs, &cfg.train_config())
}

/// All seven modes at one seed. Modes with the same pretraining fusion
/// weights share one pretrained start and one initial MI report.
pub fn ablate_seed(
    cfg: &RunConfig,
    seed: u64,
    mut progress: impl FnMut(&MetricsRow),
) -> Result<Vec<MetricsRow>, HarnessError> {
    let data = prepare(cfg, seed)?;
    let tc = cfg.train_config();
    let mut starts: Vec<((f64, f64), Pretrained, Option<MiReport>)> = Vec::new();
    let mut rows = Vec::new();
    for mode in TransferMode::ALL {
        let w = mode.pretrain_weights();
        let k = match starts.iter().position(|(sw, _, _)| *sw == w) {
            Some(k) => k,
            None => {
                let start = pretrain(&data.bench, &data.prep, &data.splits, &tc, mode, seed)?;
                starts.push((w, start, None));
                starts.len() - 1
            }
        };
        if mode.fixed_weights().is_none() && starts[k].2.is_none() {
            let r = initial_report(cfg, &data, &starts[k].1)?;
            starts[k].2 = Some(r);
        }
        let t = adapt_and_evaluate(cfg, &data, &starts[k].1, mode, starts[k].2.clone(), seed)?;
        progress(&t.row);
        rows.push(t.row);
    }
    Ok(rows)
}

/// `ablate_seed` over every seed of the configuration.
pub fn ablate(cfg: &RunConfig, mut progress: impl FnMut(&MetricsRow)) -> Result<Vec<MetricsRow>, HarnessError> {
    let mut rows = Vec::new();
    for seed in cfg.seed_list() {
        rows.extend(ablate_seed(cfg, seed, &mut progress)?);
    }
    Ok(rows)
}
