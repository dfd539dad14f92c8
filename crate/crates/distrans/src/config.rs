//! Flat `key = value` run configuration.
//!
//! One key per line, `#` starts a comment, blank lines are ignored. Every
//! key may also be given as a command-line flag, which overrides the file.
//! Unknown and repeated keys are rejected; every error names the key and
//! where its value came from.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use distrans_core::harness::{TrainConfig, TransferMode, MIN_PAIRS, MIN_SHIFT_LEVELS};
use serde::{Deserialize, Serialize};

/// Learning rates accepted without `free_lr`.
pub const LR_GRID: [f64; 4] = [0.01, 0.005, 0.001, 0.0001];
/// Adversarial weights accepted without `free_lambda`.
pub const LAMBDA_GRID: [f64; 5] = [0.7, 0.5, 0.3, 0.1, 0.01];
pub const TARGET_FRACTIONS: [f64; 3] = [0.3, 0.5, 0.7];

/// Every key, in canonical order, with its documented range.
pub const KEYS: [(&str, &str); 21] = [
    ("mode", "transfer mode: DisTrans, SimCDT, DSCDT, NoTopo, NoSem, OnlyTop, OnlySem"),
    ("seed", "base seed (u64); multi-seed commands use seed, seed+1, ..."),
    ("shift_level", "target grammar probability in [0, 1]"),
    ("target_fraction", "labelled target share: 0.3, 0.5 or 0.7"),
    ("n_pairs", "pairs per domain, at least 200"),
    ("pretrain_epochs", "source pretraining epochs, 0..=100000"),
    ("epochs", "adaptation epochs T, 0..=100000"),
    ("batch", "batch size B, 1..=65536"),
    ("lr", "learning rate; one of 0.01, 0.005, 0.001, 0.0001 unless free_lr"),
    ("lambda_g", "structure adversarial weight; one of 0.7, 0.5, 0.3, 0.1, 0.01 unless free_lambda"),
    ("lambda_i", "image adversarial weight; same grid as lambda_g"),
    ("gamma", "adjacent-atom injection weight in [0, 1]"),
    ("tau", "Gumbel temperature in (0, 100]"),
    ("q", "adjacent atoms injected per substructure, 1..=64"),
    ("mi_every", "refresh the MI report every this many epochs; 0 keeps the first"),
    ("mine_steps", "MINE training steps, 1..=1000000"),
    ("seeds", "seeds of ablate and theory-sweep, 1..=1000"),
    ("levels", "comma-separated shift levels of theory-sweep, at least 5, increasing, in [0, 1]"),
    ("free_lr", "true to allow off-grid learning rates"),
    ("free_lambda", "true to allow off-grid lambda values in [0, 10]"),
    ("out", "output directory"),
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub mode: TransferMode,
    pub seed: u64,
    pub shift_level: f64,
    pub target_fraction: f64,
    pub n_pairs: usize,
    pub pretrain_epochs: usize,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub lambda_g: f64,
    pub lambda_i: f64,
    pub gamma: f64,
    pub tau: f64,
    pub q: usize,
    pub mi_every: usize,
    pub mine_steps: usize,
    pub seeds: usize,
    pub levels: Vec<f64>,
    pub free_lr: bool,
    pub free_lambda: bool,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            mode: TransferMode::DisTrans,
            seed: 0,
            shift_level: 1.0,
            target_fraction: 0.5,
            n_pairs: 1000,
            pretrain_epochs: t.pretrain_epochs,
            epochs: t.epochs,
            batch: t.batch,
            lr: t.lr,
            lambda_g: t.lambda_g,
            lambda_i: t.lambda_i,
            gamma: t.encoder.gamma,
            tau: t.encoder.tau,
            q: t.encoder.q,
            mi_every: t.mi_every,
            mine_steps: t.mine.steps,
            seeds: 5,
            levels: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            free_lr: false,
            free_lambda: false,
            out: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    /// Trainer settings: model widths at their defaults, everything else
    /// from this configuration.
    pub fn train_config(&self) -> TrainConfig {
        let mut t = TrainConfig::default();
        t.pretrain_epochs = self.pretrain_epochs;
        t.epochs = self.epochs;
        t.batch = self.batch;
        t.lr = self.lr;
        t.lambda_g = self.lambda_g;
        t.lambda_i = self.lambda_i;
        t.encoder.gamma = self.gamma;
        t.encoder.tau = self.tau;
        t.encoder.q = self.q;
        t.mi_every = self.mi_every;
        t.mine.steps = self.mine_steps;
        t
    }

    /// Seeds of multi-seed commands.
    pub fn seed_list(&self) -> Vec<u64> {
        (0..self.seeds as u64).map(|k| self.seed.wrapping_add(k)).collect()
    }

    /// Value of every key, in `KEYS` order, formatted so that parsing it
    /// back gives the same value.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let levels: Vec<String> = self.levels.iter().map(|v| v.to_string()).collect();
        let values = [
            self.mode.name().to_string(),
            self.seed.to_string(),
            self.shift_level.to_string(),
            self.target_fraction.to_string(),
            self.n_pairs.to_string(),
            self.pretrain_epochs.to_string(),
            self.epochs.to_string(),
            self.batch.to_string(),
            self.lr.to_string(),
            self.lambda_g.to_string(),
            self.lambda_i.to_string(),
            self.gamma.to_string(),
            self.tau.to_string(),
            self.q.to_string(),
            self.mi_every.to_string(),
            self.mine_steps.to_string(),
            self.seeds.to_string(),
            levels.join(","),
            self.free_lr.to_string(),
            self.free_lambda.to_string(),
            self.out.display().to_string(),
        ];
        KEYS.iter().map(|(k, _)| *k).zip(values).collect()
    }

    /// The configuration as a config file.
    pub fn to_text(&self) -> String {
        self.entries().iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

/// Where a value came from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Origin {
    Default,
    Line { file: String, line: usize },
    Manifest(String),
    Flag,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Default => f.write_str("default"),
            Origin::Line { file, line } => write!(f, "{file}:{line}"),
            Origin::Manifest(file) => write!(f, "manifest {file}"),
            Origin::Flag => f.write_str("command line"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{origin}: key `{key}`: {message}")]
pub struct ConfigError {
    pub origin: Origin,
    pub key: String,
    pub message: String,
}

/// Accumulates keys from files and flags, then validates.
#[derive(Clone, Debug, Default)]
pub struct ConfigBuilder {
    cfg: RunConfig,
    origins: BTreeMap<&'static str, Origin>,
}

fn canonical(key: &str) -> Option<&'static str> {
    KEYS.iter().map(|(k, _)| *k).find(|k| *k == key)
}

fn parse_value<T: FromStr>(value: &str, what: &str) -> Result<T, String> {
    value.parse().map_err(|_| format!("`{value}` is not {what}"))
}

fn parse_f64(value: &str) -> Result<f64, String> {
    let v: f64 = parse_value(value, "a number")?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{value}` is not finite"))
    }
}

fn on_grid(v: f64, grid: &[f64]) -> bool {
    grid.iter().any(|g| (v - g).abs() <= 1e-12 * g.abs())
}

fn grid_text(grid: &[f64]) -> String {
    grid.iter().map(|g| g.to_string()).collect::<Vec<_>>().join(", ")
}

impl ConfigBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Set one key. A key may be set once per origin kind: twice in a file
    /// is an error, while a flag may override a file.
    pub fn set(&mut self, key: &str, value: &str, origin: Origin) -> Result<(), ConfigError> {
        let err = |message: String| ConfigError {
            origin: origin.clone(),
            key: key.to_string(),
            message,
        };
        let k = canonical(key).ok_or_else(|| err("unknown key".into()))?;
        if let (Some(Origin::Line { line, .. }), Origin::Line { .. }) = (self.origins.get(k), &origin) {
            return Err(err(format!("already set on line {line}")));
        }
        let value = value.trim();
        let c = &mut self.cfg;
        let r = match k {
            "mode" => value.parse().map(|m| c.mode = m).map_err(|_| format!("unknown mode `{value}`")),
            "seed" => parse_value(value, "an unsigned integer").map(|v| c.seed = v),
            "shift_level" => parse_f64(value).map(|v| c.shift_level = v),
            "target_fraction" => parse_f64(value).map(|v| c.target_fraction = v),
            "n_pairs" => parse_value(value, "an unsigned integer").map(|v| c.n_pairs = v),
            "pretrain_epochs" => parse_value(value, "an unsigned integer").map(|v| c.pretrain_epochs = v),
            "epochs" => parse_value(value, "an unsigned integer").map(|v| c.epochs = v),
            "batch" => parse_value(value, "an unsigned integer").map(|v| c.batch = v),
            "lr" => parse_f64(value).map(|v| c.lr = v),
            "lambda_g" => parse_f64(value).map(|v| c.lambda_g = v),
            "lambda_i" => parse_f64(value).map(|v| c.lambda_i = v),
            "gamma" => parse_f64(value).map(|v| c.gamma = v),
            "tau" => parse_f64(value).map(|v| c.tau = v),
            "q" => parse_value(value, "an unsigned integer").map(|v| c.q = v),
            "mi_every" => parse_value(value, "an unsigned integer").map(|v| c.mi_every = v),
            "mine_steps" => parse_value(value, "an unsigned integer").map(|v| c.mine_steps = v),
            "seeds" => parse_value(value, "an unsigned integer").map(|v| c.seeds = v),
            "levels" => value
                .split(',')
                .map(|s| parse_f64(s.trim()))
                .collect::<Result<Vec<f64>, String>>()
                .map(|v| c.levels = v),
            "free_lr" => parse_value(value, "true or false").map(|v| c.free_lr = v),
            "free_lambda" => parse_value(value, "true or false").map(|v| c.free_lambda = v),
            "out" if value.is_empty() => Err("empty path".to_string()),
            "out" => {
                c.out = PathBuf::from(value);
                Ok(())
            }
            _ => unreachable!("every canonical key is handled"),
        };
        r.map_err(err)?;
        self.origins.insert(k, origin);
        Ok(())
    }

    /// Read a config file's text; `file` names it in diagnostics.
    pub fn parse_text(&mut self, text: &str, file: &str) -> Result<(), ConfigError> {
        for (n, raw) in text.lines().enumerate() {
            let origin = Origin::Line {
                file: file.to_string(),
                line: n + 1,
            };
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError {
                    origin,
                    key: line.to_string(),
                    message: "expected `key = value`".into(),
                });
            };
            self.set(key.trim(), value, origin)?;
        }
        Ok(())
    }

    fn origin(&self, key: &'static str) -> Origin {
        self.origins.get(key).cloned().unwrap_or(Origin::Default)
    }

    /// Check every range and grid; the error names the offending key.
    pub fn build(self) -> Result<RunConfig, ConfigError> {
        let c = &self.cfg;
        let fail = |key: &'static str, message: String| ConfigError {
            origin: self.origin(key),
            key: key.to_string(),
            message,
        };
        if !(0.0..=1.0).contains(&c.shift_level) {
            return Err(fail("shift_level", format!("{} outside [0, 1]", c.shift_level)));
        }
        if !on_grid(c.target_fraction, &TARGET_FRACTIONS) {
            return Err(fail(
                "target_fraction",
                format!("{} not in {{{}}}", c.target_fraction, grid_text(&TARGET_FRACTIONS)),
            ));
        }
        if !(MIN_PAIRS..=1_000_000).contains(&c.n_pairs) {
            return Err(fail("n_pairs", format!("{} outside {MIN_PAIRS}..=1000000", c.n_pairs)));
        }
        for (key, v) in [("pretrain_epochs", c.pretrain_epochs), ("epochs", c.epochs)] {
            if v > 100_000 {
                return Err(fail(key, format!("{v} above 100000")));
            }
        }
        if !(1..=65_536).contains(&c.batch) {
            return Err(fail("batch", format!("{} outside 1..=65536", c.batch)));
        }
        if c.free_lr {
            if !(c.lr > 0.0 && c.lr <= 1.0) {
                return Err(fail("lr", format!("{} outside (0, 1]", c.lr)));
            }
        } else if !on_grid(c.lr, &LR_GRID) {
            return Err(fail(
                "lr",
                format!("{} not in {{{}}} (set free_lr to allow)", c.lr, grid_text(&LR_GRID)),
            ));
        }
        for (key, v) in [("lambda_g", c.lambda_g), ("lambda_i", c.lambda_i)] {
            if c.free_lambda {
                if !(0.0..=10.0).contains(&v) {
                    return Err(fail(key, format!("{v} outside [0, 10]")));
                }
            } else if !on_grid(v, &LAMBDA_GRID) {
                return Err(fail(
                    key,
                    format!("{v} not in {{{}}} (set free_lambda to allow)", grid_text(&LAMBDA_GRID)),
                ));
            }
        }
        if !(0.0..=1.0).contains(&c.gamma) {
            return Err(fail("gamma", format!("{} outside [0, 1]", c.gamma)));
        }
        if !(c.tau > 0.0 && c.tau <= 100.0) {
            return Err(fail("tau", format!("{} outside (0, 100]", c.tau)));
        }
        if !(1..=64).contains(&c.q) {
            return Err(fail("q", format!("{} outside 1..=64", c.q)));
        }
        if !(1..=1_000_000).contains(&c.mine_steps) {
            return Err(fail("mine_steps", format!("{} outside 1..=1000000", c.mine_steps)));
        }
        if !(1..=1000).contains(&c.seeds) {
            return Err(fail("seeds", format!("{} outside 1..=1000", c.seeds)));
        }
        if c.levels.len() < MIN_SHIFT_LEVELS {
            return Err(fail(
                "levels",
                format!("{} levels, need at least {MIN_SHIFT_LEVELS}", c.levels.len()),
            ));
        }
        if c.levels.iter().any(|l| !(0.0..=1.0).contains(l)) || c.levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(fail("levels", "levels must increase within [0, 1]".into()));
        }
        Ok(self.cfg)
    }
}

/// Parse a whole config file with defaults for absent keys.
pub fn parse_config(text: &str, file: &str) -> Result<RunConfig, ConfigError> {
    let mut b = ConfigBuilder::new();
    b.parse_text(text, file)?;
    b.build()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_follow_the_grids() {
        let c = ConfigBuilder::new().build().unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!((c.epochs, c.batch), (200, 64));
        assert_eq!((c.lambda_g, c.lambda_i), (0.3, 0.1));
        assert!(on_grid(c.lr, &LR_GRID));
    }

    #[test]
    fn file_values_and_comments() {
        let c = parse_config("# run\nmode = NoTopo\n\nlr = 0.005  # grid\nlevels = 0, 0.1,0.2,0.3 ,0.4\n", "a.cfg")
            .unwrap();
        assert_eq!(c.mode, TransferMode::NoTopo);
        assert_eq!(c.lr, 0.005);
        assert_eq!(c.levels, vec![0.0, 0.1, 0.2, 0.3, 0.4]);
    }

    #[test]
    fn unknown_key_reports_its_line() {
        let e = parse_config("seed = 1\nlearning_rate = 0.01\n", "a.cfg").unwrap_err();
        assert_eq!(e.key, "learning_rate");
        assert_eq!(e.to_string(), "a.cfg:2: key `learning_rate`: unknown key");
    }

    #[test]
    fn malformed_and_repeated_lines_are_rejected() {
        let e = parse_config("seed 1\n", "a.cfg").unwrap_err();
        assert_eq!(e.origin, Origin::Line { file: "a.cfg".into(), line: 1 });
        let e = parse_config("seed = 1\nseed = 2\n", "a.cfg").unwrap_err();
        assert!(e.message.contains("line 1"), "{e}");
        let e = parse_config("batch = -3\n", "a.cfg").unwrap_err();
        assert_eq!(e.key, "batch");
        let e = parse_config("mode = Best\n", "a.cfg").unwrap_err();
        assert_eq!(e.key, "mode");
    }

    #[test]
    fn learning_rate_grid() {
        assert!(parse_config("lr = 0.005\n", "a").is_ok());
        let e = parse_config("\nlr = 0.002\n", "a").unwrap_err();
        assert_eq!((e.key.as_str(), &e.origin), ("lr", &Origin::Line { file: "a".into(), line: 2 }));
        assert!(parse_config("lr = 0.002\nfree_lr = true\n", "a").is_ok());
        assert!(parse_config("lr = 2\nfree_lr = true\n", "a").is_err());
    }

    #[test]
    fn lambda_grid() {
        for v in LAMBDA_GRID {
            assert!(parse_config(&format!("lambda_g = {v}\nlambda_i = {v}\n"), "a").is_ok());
        }
        assert_eq!(parse_config("lambda_i = 0.2\n", "a").unwrap_err().key, "lambda_i");
        assert!(parse_config("lambda_i = 0.2\nfree_lambda = true\n", "a").is_ok());
        assert!(parse_config("lambda_g = 0\nfree_lambda = true\n", "a").is_ok());
        assert!(parse_config("lambda_g = -0.1\nfree_lambda = true\n", "a").is_err());
    }

    #[test]
    fn ranges() {
        for bad in [
            "target_fraction = 0.4",
            "shift_level = 1.5",
            "n_pairs = 100",
            "batch = 0",
            "tau = 0",
            "gamma = 2",
            "q = 0",
            "seeds = 0",
            "mine_steps = 0",
            "levels = 0,0.5,1",
            "levels = 0,0.5,0.4,0.8,1",
            "shift_level = nan",
        ] {
            assert!(parse_config(bad, "a").is_err(), "{bad}");
        }
    }

    #[test]
    fn flags_override_file_values() {
        let mut b = ConfigBuilder::new();
        b.parse_text("lr = 0.01\nseed = 4\n", "a").unwrap();
        b.set("lr", "0.002", Origin::Flag).unwrap();
        let e = b.clone().build().unwrap_err();
        assert_eq!((e.key.as_str(), e.origin), ("lr", Origin::Flag));
        b.set("free_lr", "true", Origin::Flag).unwrap();
        let c = b.build().unwrap();
        assert_eq!((c.lr, c.seed), (0.002, 4));
    }

    #[test]
    fn text_round_trip() {
        let mut c = RunConfig::default();
        c.mode = TransferMode::OnlySem;
        c.lr = 0.0001;
        c.shift_level = 0.1 + 0.2;
        c.levels = vec![0.0, 0.1, 0.3, 0.7, 0.9, 1.0];
        c.out = PathBuf::from("runs/x");
        assert_eq!(parse_config(&c.to_text(), "t").unwrap(), c);
        assert_eq!(c.entries().len(), KEYS.len());
    }

    #[test]
    fn seed_list_counts_up() {
        let mut c = RunConfig::default();
        c.seed = 7;
        c.seeds = 3;
        assert_eq!(c.seed_list(), vec![7, 8, 9]);
    }
}
