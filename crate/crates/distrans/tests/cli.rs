use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn distrans(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_distrans")).args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn smiles_file(dir: &Path, lines: &str) -> String {
    let p = dir.join("mols.smi");
    fs::write(&p, lines).unwrap();
    p.display().to_string()
}

/// Small enough to finish in seconds.
const TINY: [&str; 12] = [
    "--n-pairs",
    "200",
    "--pretrain-epochs",
    "1",
    "--epochs",
    "1",
    "--batch",
    "64",
    "--mine-steps",
    "20",
    "--seeds",
    "1",
];

fn with_tiny<'a>(head: &[&'a str]) -> Vec<&'a str> {
    let mut v = head.to_vec();
    v.extend_from_slice(&TINY);
    v
}

#[test]
fn parse_methane_gives_one_atom() {
    let dir = tempfile::tempdir().unwrap();
    let input = smiles_file(dir.path(), "C\n");
    let o = distrans(&["parse", "--in", &input]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 1);
    assert_eq!(v[0]["atoms"].as_array().unwrap().len(), 1);
    assert_eq!(v[0]["atoms"][0]["element"], "C");
}

#[test]
fn fragment_writes_groups_and_cut_bonds() {
    let dir = tempfile::tempdir().unwrap();
    let input = smiles_file(dir.path(), "Cc1ccccc1\n\nCCO\n");
    let out = dir.path().join("frag");
    let o = distrans(&["fragment", "--in", &input, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&fs::read_to_string(out.join("fragments.json")).unwrap()).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 2);
    assert_eq!(v[0]["groups"].as_array().unwrap().len(), 2);
    assert_eq!(v[0]["broken_bonds"].as_array().unwrap().len(), 1);
    assert_eq!(v[1]["groups"].as_array().unwrap().len(), 1);
}

#[test]
fn render_writes_one_grid_per_molecule() {
    let dir = tempfile::tempdir().unwrap();
    let input = smiles_file(dir.path(), "c1ccccc1\nCCN\n");
    let out = dir.path().join("grids");
    let o = distrans(&["render", "--in", &input, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for name in ["mol_0000.dtpg", "mol_0001.dtpg"] {
        let b = fs::read(out.join(name)).unwrap();
        assert_eq!(&b[..4], b"DTPG");
        assert_eq!(b.len(), 16 + 64 * 3 * 4);
        let d = distrans::formats::decode_dtpg(&b).unwrap();
        assert!(d.values.iter().any(|&x| x > 0.0));
    }
}

#[test]
fn bad_smiles_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let input = smiles_file(dir.path(), "C\nC1CC\n");
    let o = distrans(&["parse", "--in", &input]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("mols.smi:2"), "{}", stderr(&o));
    let o = distrans(&["parse", "--in", "/nonexistent/x.smi"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn config_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let out = out.to_str().unwrap();
    let o = distrans(&["train", "--lr", "0.002", "--out", out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("key `lr`"), "{}", stderr(&o));
    assert!(!Path::new(out).exists());

    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "seed = 3\nlearning_rate = 0.01\n").unwrap();
    let o = distrans(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("run.cfg:2: key `learning_rate`: unknown key"), "{}", stderr(&o));

    fs::write(&cfg, "target_fraction = 0.4\n").unwrap();
    let o = distrans(&["ablate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("run.cfg:1: key `target_fraction`"), "{}", stderr(&o));

    assert_eq!(distrans(&["train", "--bogus"]).status.code(), Some(2));
    assert_eq!(distrans(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn train_eval_and_manifest_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let o = distrans(&with_tiny(&["train", "--lr", "0.005", "--seed", "2", "--out", a.to_str().unwrap()]));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["metrics.csv", "mi_report.json", "manifest.json", "checkpoint.dtck"] {
        assert!(a.join(f).exists(), "{f}");
    }
    let csv = fs::read_to_string(a.join("metrics.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("DisTrans,1,0.5,2,"), "{}", lines[1]);
    let mi: Value = serde_json::from_str(&fs::read_to_string(a.join("mi_report.json")).unwrap()).unwrap();
    for k in ["delta_i", "delta_g", "delta_ig", "units"] {
        assert!(mi.get(k).is_some(), "{k}");
    }
    let manifest: Value = serde_json::from_str(&fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["config"]["lr"], "0.005");

    let b = dir.path().join("b");
    let o = distrans(&["train", "--manifest", a.join("manifest.json").to_str().unwrap(), "--out", b.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(fs::read(a.join("metrics.csv")).unwrap(), fs::read(b.join("metrics.csv")).unwrap());
    assert_eq!(fs::read(a.join("checkpoint.dtck")).unwrap(), fs::read(b.join("checkpoint.dtck")).unwrap());

    let e = dir.path().join("e");
    let o = distrans(&["eval", "--manifest", a.join("manifest.json").to_str().unwrap(), "--out", e.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(fs::read(a.join("metrics.csv")).unwrap(), fs::read(e.join("metrics.csv")).unwrap());
    let em: Value = serde_json::from_str(&fs::read_to_string(e.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(em["command"], "eval");
    assert!(em["inputs"]["checkpoint"].as_str().unwrap().ends_with("checkpoint.dtck"));

    let o = distrans(&["ablate", "--manifest", a.join("manifest.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("recorded command `train`"), "{}", stderr(&o));
}

#[test]
fn eval_of_a_missing_checkpoint_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = distrans(&["eval", "--checkpoint", "/nonexistent/c.dtck", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn mi_report_writes_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("mi");
    let o = distrans(&with_tiny(&["mi-report", "--shift", "0.5", "--out", out.to_str().unwrap()]));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&fs::read_to_string(out.join("mi_report.json")).unwrap()).unwrap();
    assert_eq!(v["units"], "bits");
    let (g, ig, i) = (v["delta_g"].as_f64().unwrap(), v["delta_ig"].as_f64().unwrap(), v["delta_i"].as_f64().unwrap());
    assert!((g + ig - i).abs() < 1e-12);
}

#[test]
fn ablate_emits_seven_modes_with_one_best_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ab");
    let o = distrans(&with_tiny(&["ablate", "--shift", "1.0", "--out", out.to_str().unwrap()]));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 8);
    let table = fs::read_to_string(out.join("ablation.csv")).unwrap();
    let rows: Vec<Vec<&str>> = table.lines().map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 8);
    let modes: Vec<&str> = rows[1..].iter().map(|r| r[0]).collect();
    assert_eq!(modes, ["DisTrans", "SimCDT", "DSCDT", "NoTopo", "NoSem", "OnlyTop", "OnlySem"]);
    let best = rows[0].iter().position(|c| *c == "best_auroc").unwrap();
    assert_eq!(rows[1..].iter().filter(|r| r[best] == "1").count(), 1);
    for c in ["imp_acc", "imp_auroc", "imp_aupr", "imp_f1", "imp_pre"] {
        assert!(rows[0].contains(&c), "{c}");
    }
    assert_eq!(String::from_utf8_lossy(&o.stdout), table);
}

#[test]
fn theory_sweep_writes_one_record_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("th");
    let mut args = with_tiny(&["theory-sweep", "--out", out.to_str().unwrap()]);
    args[4] = "600";
    let o = distrans(&args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&fs::read_to_string(out.join("theory.json")).unwrap()).unwrap();
    assert_eq!(v["records"].as_array().unwrap().len(), 5);
    assert_eq!(v["ratio_by_level"].as_array().unwrap().len(), 5);
    assert!(v["xi"].as_f64().unwrap() >= 0.0);
}
