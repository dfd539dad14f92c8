//! Command-line front end. Exit codes: 0 success, 1 runtime failure, 2
//! usage or configuration error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use distrans_core::molgraph::{fragment, layout_2d, parse_smiles, rasterize};
use serde::{Deserialize, Serialize};

use crate::config::{ConfigBuilder, ConfigError, Origin, RunConfig};
use crate::formats::{
    ablation_csv, decode_checkpoint, encode_checkpoint, encode_dtpg, graph_dump, metrics_csv, summarize, GraphDump,
    MetricsRow,
};
use crate::runner;

pub const METRICS_FILE: &str = "metrics.csv";
pub const ABLATION_FILE: &str = "ablation.csv";
pub const MI_REPORT_FILE: &str = "mi_report.json";
pub const THEORY_FILE: &str = "theory.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.dtck";

#[derive(Parser, Debug)]
#[command(name = "distrans", version, about = "Cross-domain molecular relational learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse SMILES (one per line) into graph JSON.
    Parse(MolArgs),
    /// Parse and fragment SMILES into graph JSON with groups and cut bonds.
    Fragment(MolArgs),
    /// Rasterize SMILES into DTPG patch grids, one file per line.
    Render(RenderArgs),
    /// Pretrain on the source, adapt with the configured mode, evaluate.
    Train(RunArgs),
    /// Evaluate a checkpoint on the target test split.
    Eval(EvalArgs),
    /// MI shift report of a source-pretrained extractor.
    MiReport(RunArgs),
    /// Generalisation gap against MI shift over shift levels and seeds.
    TheorySweep(RunArgs),
    /// All seven transfer modes over the configured seeds.
    Ablate(RunArgs),
}

#[derive(Args, Debug)]
struct MolArgs {
    /// SMILES file, one molecule per line.
    #[arg(long = "in")]
    input: PathBuf,
    /// Write the JSON into this directory instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RenderArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

/// Config sources and per-key overrides. Values stay strings here so that
/// the config parser reports every bad value the same way.
#[derive(Args, Debug, Default)]
struct RunArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Reproduce the run recorded in a manifest.
    #[arg(long, conflicts_with = "config")]
    manifest: Option<PathBuf>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long = "shift", alias = "shift-level")]
    shift_level: Option<String>,
    #[arg(long)]
    target_fraction: Option<String>,
    #[arg(long)]
    n_pairs: Option<String>,
    #[arg(long)]
    pretrain_epochs: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    batch: Option<String>,
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    lambda_g: Option<String>,
    #[arg(long)]
    lambda_i: Option<String>,
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long)]
    tau: Option<String>,
    #[arg(long)]
    q: Option<String>,
    #[arg(long)]
    mi_every: Option<String>,
    #[arg(long)]
    mine_steps: Option<String>,
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    levels: Option<String>,
    #[arg(long)]
    free_lr: bool,
    #[arg(long)]
    free_lambda: bool,
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Checkpoint to evaluate. Defaults to the one recorded in an eval
    /// manifest, then `checkpoint.dtck` beside --manifest, then under --out.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

/// Everything needed to repeat a run: the command, every config key and
/// any input files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config: BTreeMap<String, String>,
    #[serde(default)]
    pub inputs: BTreeMap<String, String>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

fn runtime(context: impl std::fmt::Display) -> impl FnOnce(String) -> CliError {
    move |e| CliError::Runtime(format!("{context}: {e}"))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| runtime(path.display())(e.to_string()))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| runtime(path.display())(e.to_string()))
}

fn config_file_error(key: &str, path: &Path, message: String) -> CliError {
    CliError::Config(ConfigError {
        origin: Origin::Flag,
        key: key.into(),
        message: format!("{}: {message}", path.display()),
    })
}

impl RunArgs {
    fn overrides(&self) -> Vec<(&'static str, String)> {
        let mut v = Vec::new();
        let opt = [
            ("mode", &self.mode),
            ("seed", &self.seed),
            ("shift_level", &self.shift_level),
            ("target_fraction", &self.target_fraction),
            ("n_pairs", &self.n_pairs),
            ("pretrain_epochs", &self.pretrain_epochs),
            ("epochs", &self.epochs),
            ("batch", &self.batch),
            ("lr", &self.lr),
            ("lambda_g", &self.lambda_g),
            ("lambda_i", &self.lambda_i),
            ("gamma", &self.gamma),
            ("tau", &self.tau),
            ("q", &self.q),
            ("mi_every", &self.mi_every),
            ("mine_steps", &self.mine_steps),
            ("seeds", &self.seeds),
            ("levels", &self.levels),
            ("out", &self.out),
        ];
        for (k, val) in opt {
            if let Some(s) = val {
                v.push((k, s.clone()));
            }
        }
        if self.free_lr {
            v.push(("free_lr", "true".into()));
        }
        if self.free_lambda {
            v.push(("free_lambda", "true".into()));
        }
        v
    }

    /// Config from the file or manifest, then flag overrides. A manifest
    /// must have been written by one of `commands`.
    fn resolve(&self, commands: &[&str]) -> Result<(RunConfig, Option<Manifest>), CliError> {
        let mut b = ConfigBuilder::new();
        let mut manifest = None;
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path).map_err(|e| config_file_error("config", path, e.to_string()))?;
            b.parse_text(&text, &path.display().to_string())?;
        }
        if let Some(path) = &self.manifest {
            let text = fs::read_to_string(path).map_err(|e| config_file_error("manifest", path, e.to_string()))?;
            let m: Manifest =
                serde_json::from_str(&text).map_err(|e| config_file_error("manifest", path, e.to_string()))?;
            if !commands.contains(&m.command.as_str()) {
                return Err(config_file_error(
                    "manifest",
                    path,
                    format!("recorded command `{}`, expected {}", m.command, commands.join(" or ")),
                ));
            }
            let origin = Origin::Manifest(path.display().to_string());
            for (k, v) in &m.config {
                b.set(k, v, origin.clone())?;
            }
            manifest = Some(m);
        }
        for (k, v) in self.overrides() {
            b.set(k, &v, Origin::Flag)?;
        }
        Ok((b.build()?, manifest))
    }
}

fn manifest_for(command: &str, cfg: &RunConfig, inputs: BTreeMap<String, String>) -> Manifest {
    Manifest {
        command: command.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: cfg.entries().into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        inputs,
    }
}

/// Create the output directory and write the manifest into it.
fn start_run(command: &str, cfg: &RunConfig, inputs: BTreeMap<String, String>) -> Result<PathBuf, CliError> {
    let out = cfg.out.clone();
    fs::create_dir_all(&out).map_err(|e| runtime(out.display())(e.to_string()))?;
    let m = manifest_for(command, cfg, inputs);
    let json = serde_json::to_string_pretty(&m).map_err(|e| CliError::Runtime(e.to_string()))?;
    write(&out.join(MANIFEST_FILE), json + "\n")?;
    Ok(out)
}

fn json<T: Serialize>(v: &T) -> Result<String, CliError> {
    serde_json::to_string_pretty(v)
        .map(|s| s + "\n")
        .map_err(|e| CliError::Runtime(e.to_string()))
}

fn smiles_lines(path: &Path) -> Result<Vec<(usize, String)>, CliError> {
    Ok(read_text(path)?
        .lines()
        .enumerate()
        .map(|(n, l)| (n + 1, l.trim().to_string()))
        .filter(|(_, l)| !l.is_empty())
        .collect())
}

fn dump_molecules(args: &MolArgs, with_partition: bool, file: &str) -> Result<(), CliError> {
    let mut dumps: Vec<GraphDump> = Vec::new();
    for (n, s) in smiles_lines(&args.input)? {
        let g = parse_smiles(&s).map_err(|e| CliError::Runtime(format!("{}:{n}: {e}", args.input.display())))?;
        let p = with_partition.then(|| fragment(&g));
        dumps.push(graph_dump(&g, p.as_ref()));
    }
    let text = json(&dumps)?;
    match &args.out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| runtime(dir.display())(e.to_string()))?;
            write(&dir.join(file), text)
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn render(args: &RenderArgs) -> Result<(), CliError> {
    fs::create_dir_all(&args.out).map_err(|e| runtime(args.out.display())(e.to_string()))?;
    for (k, (n, s)) in smiles_lines(&args.input)?.into_iter().enumerate() {
        let at = |e: String| CliError::Runtime(format!("{}:{n}: {e}", args.input.display()));
        let g = parse_smiles(&s).map_err(|e| at(e.to_string()))?;
        let p = fragment(&g);
        let layout = layout_2d(&g).map_err(|e| at(e.to_string()))?;
        let grid = rasterize(&g, &p, &layout);
        write(&args.out.join(format!("mol_{k:04}.dtpg")), encode_dtpg(&grid))?;
    }
    Ok(())
}

fn report_row(r: &MetricsRow) {
    eprintln!(
        "{} seed {}: auroc {:.4} acc {:.4} loss {:.4}",
        r.mode, r.seed, r.metrics.auroc, r.metrics.acc, r.loss
    );
}

fn harness(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Parse(a) => dump_molecules(&a, false, "graphs.json"),
        Command::Fragment(a) => dump_molecules(&a, true, "fragments.json"),
        Command::Render(a) => render(&a),
        Command::Train(a) => {
            let (cfg, _) = a.resolve(&["train"])?;
            let out = start_run("train", &cfg, BTreeMap::new())?;
            let t = runner::train(&cfg).map_err(harness)?;
            report_row(&t.row);
            write(&out.join(CHECKPOINT_FILE), encode_checkpoint(&t.checkpoint()))?;
            if let Some(r) = t.log.reports.first() {
                write(&out.join(MI_REPORT_FILE), json(r)?)?;
            }
            write(&out.join(METRICS_FILE), metrics_csv(&[t.row]))
        }
        Command::Eval(a) => {
            let (cfg, manifest) = a.run.resolve(&["train", "eval"])?;
            let recorded = manifest.as_ref().and_then(|m| m.inputs.get("checkpoint"));
            let beside = a.run.manifest.as_ref().map(|p| p.with_file_name(CHECKPOINT_FILE));
            let ckpt = match (&a.checkpoint, recorded, beside) {
                (Some(p), _, _) => p.clone(),
                (None, Some(p), _) => PathBuf::from(p),
                (None, None, Some(p)) => p,
                (None, None, None) => cfg.out.join(CHECKPOINT_FILE),
            };
            let bytes = fs::read(&ckpt).map_err(|e| runtime(ckpt.display())(e.to_string()))?;
            let records = decode_checkpoint(&bytes).map_err(|e| runtime(ckpt.display())(e.to_string()))?;
            let inputs = BTreeMap::from([("checkpoint".to_string(), ckpt.display().to_string())]);
            let out = start_run("eval", &cfg, inputs)?;
            let row = runner::eval(&cfg, &records).map_err(harness)?;
            report_row(&row);
            write(&out.join(METRICS_FILE), metrics_csv(&[row]))
        }
        Command::MiReport(a) => {
            let (cfg, _) = a.resolve(&["mi-report"])?;
            let out = start_run("mi-report", &cfg, BTreeMap::new())?;
            let r = runner::mi_report(&cfg).map_err(harness)?;
            eprintln!("delta_g {:.4} delta_ig {:.4} {}", r.delta_g, r.delta_ig, r.units);
            write(&out.join(MI_REPORT_FILE), json(&r)?)
        }
        Command::TheorySweep(a) => {
            let (cfg, _) = a.resolve(&["theory-sweep"])?;
            let out = start_run("theory-sweep", &cfg, BTreeMap::new())?;
            let r = runner::theory(&cfg).map_err(harness)?;
            eprintln!("spearman {:.4} xi {:.4}", r.spearman, r.xi);
            write(&out.join(THEORY_FILE), json(&r)?)
        }
        Command::Ablate(a) => {
            let (cfg, _) = a.resolve(&["ablate"])?;
            let out = start_run("ablate", &cfg, BTreeMap::new())?;
            let rows = runner::ablate(&cfg, report_row).map_err(harness)?;
            write(&out.join(METRICS_FILE), metrics_csv(&rows))?;
            let table = ablation_csv(&summarize(&rows));
            print!("{table}");
            write(&out.join(ABLATION_FILE), table)
        }
    }
}

/// Run the command line and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resolve(args: &[&str]) -> Result<RunConfig, CliError> {
        let cli = Cli::try_parse_from(args).unwrap();
        match cli.command {
            Command::Train(a) | Command::Ablate(a) => a.resolve(&["train"]).map(|(c, _)| c),
            _ => unreachable!(),
        }
    }

    #[test]
    fn flags_reach_the_config() {
        let c = resolve(&["distrans", "train", "--lr", "0.005", "--shift", "0.25", "--mode", "NoSem"]).unwrap();
        assert_eq!((c.lr, c.shift_level), (0.005, 0.25));
        assert_eq!(c.mode.name(), "NoSem");
    }

    #[test]
    fn off_grid_learning_rate_needs_the_flag() {
        let e = resolve(&["distrans", "train", "--lr", "0.002"]).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(e.to_string().contains("key `lr`"), "{e}");
        assert!(resolve(&["distrans", "train", "--lr", "0.002", "--free-lr"]).is_ok());
    }

    #[test]
    fn unreadable_config_is_a_config_error() {
        let e = resolve(&["distrans", "train", "--config", "/nonexistent/run.cfg"]).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn manifest_entries_rebuild_the_config() {
        let mut cfg = RunConfig::default();
        cfg.lr = 0.0001;
        cfg.shift_level = 0.3;
        let m = manifest_for("train", &cfg, BTreeMap::new());
        let mut b = ConfigBuilder::new();
        for (k, v) in &m.config {
            b.set(k, v, Origin::Manifest("m".into())).unwrap();
        }
        assert_eq!(b.build().unwrap(), cfg);
    }

    #[test]
    fn clap_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
