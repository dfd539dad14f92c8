//! On-disk artifacts: graph and partition JSON dumps, DTPG patch grids,
//! DTCK parameter checkpoints and the metrics and ablation CSV tables.

use std::fmt::Write as _;

use distrans_core::harness::{improvement, Metrics, TransferMode};
use distrans_core::molgraph::BondOrder;
use distrans_core::{MolecularGraph, ParamStore, PatchGrid, SubstructurePartition, Tensor};
use serde::{Deserialize, Serialize};

pub const DTPG_MAGIC: &[u8; 4] = b"DTPG";
pub const DTCK_MAGIC: &[u8; 4] = b"DTCK";
pub const DTPG_HEADER: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FormatError {
    #[error("bad magic, expected {0}")]
    BadMagic(&'static str),
    #[error("truncated input at byte {0}")]
    Truncated(usize),
    #[error("{0} trailing bytes")]
    TrailingBytes(usize),
    #[error("record name is not UTF-8")]
    BadName,
    #[error("checkpoint has no parameter `{0}`")]
    MissingParam(String),
    #[error("parameter `{name}` has shape {found:?}, expected {expected:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AtomDump {
    pub index: usize,
    pub element: String,
    pub aromatic: bool,
    pub ring: bool,
    pub degree: u8,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BondDump {
    pub index: usize,
    pub a: usize,
    pub b: usize,
    pub order: String,
    pub ring: bool,
}

/// JSON view of one parsed molecule; `groups` and `broken_bonds` are
/// present only for fragmented molecules.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphDump {
    pub smiles: String,
    pub atoms: Vec<AtomDump>,
    pub bonds: Vec<BondDump>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub groups: Option<Vec<Vec<usize>>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub broken_bonds: Option<Vec<usize>>,
}

fn order_name(o: BondOrder) -> &'static str {
    match o {
        BondOrder::Single => "single",
        BondOrder::Double => "double",
        BondOrder::Triple => "triple",
        BondOrder::Aromatic => "aromatic",
    }
}

pub fn graph_dump(g: &MolecularGraph, partition: Option<&SubstructurePartition>) -> GraphDump {
    GraphDump {
        smiles: g.smiles_source().to_string(),
        atoms: g
            .atoms()
            .iter()
            .enumerate()
            .map(|(index, a)| AtomDump {
                index,
                element: a.element.symbol().to_string(),
                aromatic: a.aromatic,
                ring: a.ring,
                degree: a.degree,
            })
            .collect(),
        bonds: g
            .bonds()
            .iter()
            .enumerate()
            .map(|(index, b)| BondDump {
                index,
                a: b.a,
                b: b.b,
                order: order_name(b.order).to_string(),
                ring: b.ring,
            })
            .collect(),
        groups: partition.map(|p| p.groups.clone()),
        broken_bonds: partition.map(|p| p.broken_bonds.clone()),
    }
}

/// Patch grid as a 16-byte header (magic, u32 L, u32 C, u32 reserved = 0)
/// followed by the L×C patch features as row-major little-endian `f32`.
pub fn encode_dtpg(grid: &PatchGrid) -> Vec<u8> {
    let (l, c) = (grid.len(), grid.channels);
    let mut out = Vec::with_capacity(DTPG_HEADER + 4 * l * c);
    out.extend_from_slice(DTPG_MAGIC);
    out.extend_from_slice(&(l as u32).to_le_bytes());
    out.extend_from_slice(&(c as u32).to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    for p in &grid.patches {
        for &v in &p.features {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

/// A decoded DTPG file.
#[derive(Clone, Debug, PartialEq)]
pub struct DtpgData {
    pub patches: usize,
    pub channels: usize,
    pub values: Vec<f32>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        let end = self.pos.checked_add(n).ok_or(FormatError::Truncated(self.pos))?;
        let s = self.bytes.get(self.pos..end).ok_or(FormatError::Truncated(self.pos))?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize, FormatError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn finish(&self) -> Result<(), FormatError> {
        match self.bytes.len() - self.pos {
            0 => Ok(()),
            n => Err(FormatError::TrailingBytes(n)),
        }
    }
}

pub fn decode_dtpg(bytes: &[u8]) -> Result<DtpgData, FormatError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != DTPG_MAGIC {
        return Err(FormatError::BadMagic("DTPG"));
    }
    let patches = r.u32()?;
    let channels = r.u32()?;
    r.u32()?;
    let n = patches.checked_mul(channels).ok_or(FormatError::Truncated(r.pos))?;
    let mut values = Vec::with_capacity(n.min(bytes.len() / 4));
    for _ in 0..n {
        let b = r.take(4)?;
        values.push(f32::from_le_bytes([b[0], b[1], b[2], b[3]]));
    }
    r.finish()?;
    Ok(DtpgData {
        patches,
        channels,
        values,
    })
}

/// One named tensor of a checkpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// Checkpoint as magic, u32 record count, then per record: u32 name
/// length, UTF-8 name, u32 rank, rank × u32 dims, and the values as
/// little-endian `f64`. Every integer is little-endian.
pub fn encode_checkpoint(records: &[Record]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(DTCK_MAGIC);
    out.extend_from_slice(&(records.len() as u32).to_le_bytes());
    for r in records {
        out.extend_from_slice(&(r.name.len() as u32).to_le_bytes());
        out.extend_from_slice(r.name.as_bytes());
        out.extend_from_slice(&(r.shape.len() as u32).to_le_bytes());
        for &d in &r.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in &r.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Vec<Record>, FormatError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != DTCK_MAGIC {
        return Err(FormatError::BadMagic("DTCK"));
    }
    let count = r.u32()?;
    let mut records = Vec::new();
    for _ in 0..count {
        let len = r.u32()?;
        let name = std::str::from_utf8(r.take(len)?).map_err(|_| FormatError::BadName)?.to_string();
        let rank = r.u32()?;
        let shape = (0..rank).map(|_| r.u32()).collect::<Result<Vec<usize>, _>>()?;
        let n = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or(FormatError::Truncated(r.pos))?;
        let mut values = Vec::with_capacity(n.min(bytes.len() / 8));
        for _ in 0..n {
            let b = r.take(8)?;
            values.push(f64::from_le_bytes(b.try_into().expect("8 bytes")));
        }
        records.push(Record { name, shape, values });
    }
    r.finish()?;
    Ok(records)
}

/// Every parameter of `store`, in store order.
pub fn store_records(store: &ParamStore) -> Vec<Record> {
    store
        .iter()
        .map(|(_, p)| Record {
            name: p.name.clone(),
            shape: p.value.shape().to_vec(),
            values: p.value.data().to_vec(),
        })
        .collect()
}

/// Overwrite every parameter of `store` from the record of the same name.
/// Records without a matching parameter are ignored.
pub fn load_records(store: &mut ParamStore, records: &[Record]) -> Result<(), FormatError> {
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let p = store.get_mut(id);
        let r = records
            .iter()
            .find(|r| r.name == p.name)
            .ok_or_else(|| FormatError::MissingParam(p.name.clone()))?;
        if r.shape != p.value.shape() {
            return Err(FormatError::ShapeMismatch {
                name: p.name.clone(),
                expected: p.value.shape().to_vec(),
                found: r.shape.clone(),
            });
        }
        p.value = Tensor::new(r.shape.clone(), r.values.clone()).expect("shape checked");
    }
    Ok(())
}

/// Test-split outcome of one (mode, shift, target fraction, seed) run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub mode: TransferMode,
    pub shift_level: f64,
    pub target_fraction: f64,
    pub seed: u64,
    pub metrics: Metrics,
    /// Mean test cross-entropy (nats).
    pub loss: f64,
    pub weights: (f64, f64),
}

pub const METRICS_HEADER: &str = "mode,shift_level,target_fraction,seed,acc,auroc,aupr,f1,pre,rmse,loss,w_g,w_i";

/// Rows under `METRICS_HEADER`. Floats use the shortest representation
/// that parses back to the same value.
pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut s = String::from(METRICS_HEADER);
    s.push('\n');
    for r in rows {
        let m = &r.metrics;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.mode, r.shift_level, r.target_fraction, r.seed, m.acc, m.auroc, m.aupr, m.f1, m.pre, m.rmse, r.loss,
            r.weights.0, r.weights.1
        );
    }
    s
}

/// Mean and sample standard deviation of the metrics of one mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub mode: TransferMode,
    pub runs: usize,
    pub mean: [f64; 5],
    pub std: [f64; 5],
}

pub const SUMMARY_METRICS: [&str; 5] = ["acc", "auroc", "aupr", "f1", "pre"];

fn metric_array(m: &Metrics) -> [f64; 5] {
    [m.acc, m.auroc, m.aupr, m.f1, m.pre]
}

/// Per-mode summaries in `TransferMode::ALL` order; absent modes are
/// skipped.
pub fn summarize(rows: &[MetricsRow]) -> Vec<ModeSummary> {
    let mut out = Vec::new();
    for mode in TransferMode::ALL {
        let vals: Vec<[f64; 5]> = rows.iter().filter(|r| r.mode == mode).map(|r| metric_array(&r.metrics)).collect();
        if vals.is_empty() {
            continue;
        }
        let n = vals.len() as f64;
        let mut mean = [0.0; 5];
        let mut std = [0.0; 5];
        for k in 0..5 {
            mean[k] = vals.iter().map(|v| v[k]).sum::<f64>() / n;
            if vals.len() > 1 {
                std[k] = (vals.iter().map(|v| (v[k] - mean[k]).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            }
        }
        out.push(ModeSummary {
            mode,
            runs: vals.len(),
            mean,
            std,
        });
    }
    out
}

/// Comparison table. `imp_*` is the relative improvement in percent of
/// DisTrans over the row's mode; on the DisTrans row it is measured
/// against the strongest other mode. `best_auroc` flags the row with the
/// highest mean AUROC (first on ties).
pub fn ablation_csv(summaries: &[ModeSummary]) -> String {
    let mut s = String::from("mode,runs");
    for m in SUMMARY_METRICS {
        let _ = write!(s, ",{m},{m}_std");
    }
    for m in SUMMARY_METRICS {
        let _ = write!(s, ",imp_{m}");
    }
    s.push_str(",best_auroc\n");
    let ours = summaries.iter().find(|r| r.mode == TransferMode::DisTrans);
    let best = summaries
        .iter()
        .enumerate()
        .fold(None::<usize>, |b, (k, r)| match b {
            Some(j) if summaries[j].mean[1] >= r.mean[1] => Some(j),
            _ => Some(k),
        });
    for (k, r) in summaries.iter().enumerate() {
        let _ = write!(s, "{},{}", r.mode, r.runs);
        for j in 0..5 {
            let _ = write!(s, ",{},{}", r.mean[j], r.std[j]);
        }
        for j in 0..5 {
            let imp = match ours {
                Some(o) if r.mode != TransferMode::DisTrans => improvement(o.mean[j], r.mean[j]).unwrap_or(f64::NAN),
                Some(o) => summaries
                    .iter()
                    .filter(|x| x.mode != TransferMode::DisTrans)
                    .map(|x| x.mean[j])
                    .fold(None::<f64>, |b, v| Some(b.map_or(v, |b| b.max(v))))
                    .map_or(f64::NAN, |b| improvement(o.mean[j], b).unwrap_or(f64::NAN)),
                None => f64::NAN,
            };
            let _ = write!(s, ",{imp}");
        }
        let _ = writeln!(s, ",{}", u8::from(best == Some(k)));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use distrans_core::encoders::MolInput;
    use distrans_core::molgraph::{fragment, layout_2d, parse_smiles, rasterize};

    fn grid(smiles: &str) -> PatchGrid {
        let g = parse_smiles(smiles).unwrap();
        let p = fragment(&g);
        rasterize(&g, &p, &layout_2d(&g).unwrap())
    }

    #[test]
    fn methane_dump_has_one_atom() {
        let g = parse_smiles("C").unwrap();
        let d = graph_dump(&g, None);
        assert_eq!(d.atoms.len(), 1);
        assert!(d.bonds.is_empty());
        let json = serde_json::to_string(&d).unwrap();
        assert!(!json.contains("groups"));
        assert_eq!(serde_json::from_str::<GraphDump>(&json).unwrap(), d);
    }

    #[test]
    fn fragment_dump_of_toluene() {
        let g = parse_smiles("Cc1ccccc1").unwrap();
        let p = fragment(&g);
        let d = graph_dump(&g, Some(&p));
        assert_eq!(d.atoms.len(), 7);
        assert_eq!(d.bonds.len(), 7);
        assert_eq!(d.groups.as_ref().unwrap().len(), 2);
        assert_eq!(d.broken_bonds, Some(vec![0]));
        assert_eq!(d.bonds[1].order, "aromatic");
        assert_eq!(d.atoms[1].element, "C");
        assert!(d.atoms[1].aromatic && d.atoms[1].ring && !d.atoms[0].ring);
    }

    #[test]
    fn dtpg_layout_and_round_trip() {
        let gr = grid("c1ccccc1O");
        let bytes = encode_dtpg(&gr);
        assert_eq!(&bytes[..4], b"DTPG");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 64);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 0);
        assert_eq!(bytes.len(), 16 + 64 * 3 * 4);
        let d = decode_dtpg(&bytes).unwrap();
        assert_eq!((d.patches, d.channels), (64, 3));
        let first: Vec<f32> = gr.patches[0].features.iter().map(|&v| v as f32).collect();
        assert_eq!(&d.values[..3], &first[..]);
        let k = 9 * 3 + 2;
        assert_eq!(d.values[k], gr.patches[9].features[2] as f32);
        assert_eq!(encode_dtpg(&grid("c1ccccc1O")), bytes);
    }

    #[test]
    fn dtpg_rejects_damage() {
        let bytes = encode_dtpg(&grid("CCO"));
        assert_eq!(decode_dtpg(&bytes[..bytes.len() - 1]).unwrap_err(), FormatError::Truncated(bytes.len() - 4));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert_eq!(decode_dtpg(&bad).unwrap_err(), FormatError::BadMagic("DTPG"));
        let mut long = bytes.clone();
        long.push(0);
        assert_eq!(decode_dtpg(&long).unwrap_err(), FormatError::TrailingBytes(1));
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let recs = vec![
            Record {
                name: "w".into(),
                shape: vec![2, 3],
                values: vec![0.1, -0.0, f64::MIN_POSITIVE, 1e300, -2.5, 1.0 / 3.0],
            },
            Record {
                name: "fusion.weights".into(),
                shape: vec![2],
                values: vec![0.6815, 0.3185],
            },
            Record {
                name: "s".into(),
                shape: vec![],
                values: vec![7.0],
            },
        ];
        let bytes = encode_checkpoint(&recs);
        assert_eq!(&bytes[..4], b"DTCK");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 3);
        let back = decode_checkpoint(&bytes).unwrap();
        assert_eq!(back.len(), 3);
        for (a, b) in recs.iter().zip(&back) {
            assert_eq!((&a.name, &a.shape), (&b.name, &b.shape));
            let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a.values), bits(&b.values));
        }
        for cut in [3, 7, 12, bytes.len() - 1] {
            assert!(decode_checkpoint(&bytes[..cut]).is_err(), "{cut}");
        }
    }

    #[test]
    fn store_checkpoint_restores_parameters() {
        let mut a = ParamStore::new();
        a.add("x", Tensor::vector(vec![1.0, 2.0]));
        a.add("y", Tensor::matrix(2, 2, vec![3.0, 4.0, 5.0, 6.0]).unwrap());
        let recs = decode_checkpoint(&encode_checkpoint(&store_records(&a))).unwrap();
        let mut b = ParamStore::new();
        b.add("y", Tensor::zeros(&[2, 2]));
        b.add("x", Tensor::zeros(&[2]));
        load_records(&mut b, &recs).unwrap();
        assert_eq!(b.value(b.find("x").unwrap()).data(), &[1.0, 2.0]);
        assert_eq!(b.value(b.find("y").unwrap()).data(), &[3.0, 4.0, 5.0, 6.0]);
        let mut c = ParamStore::new();
        c.add("x", Tensor::zeros(&[3]));
        assert!(matches!(load_records(&mut c, &recs), Err(FormatError::ShapeMismatch { .. })));
        let mut d = ParamStore::new();
        d.add("z", Tensor::zeros(&[1]));
        assert_eq!(load_records(&mut d, &recs).unwrap_err(), FormatError::MissingParam("z".into()));
    }

    fn row(mode: TransferMode, seed: u64, auroc: f64) -> MetricsRow {
        MetricsRow {
            mode,
            shift_level: 1.0,
            target_fraction: 0.5,
            seed,
            metrics: Metrics {
                acc: 0.5,
                auroc,
                aupr: 0.5,
                f1: 0.5,
                pre: 0.5,
                rmse: f64::NAN,
            },
            loss: 0.25,
            weights: (0.5, 0.5),
        }
    }

    #[test]
    fn metrics_csv_rows() {
        let s = metrics_csv(&[row(TransferMode::NoTopo, 3, 0.1 + 0.2)]);
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], METRICS_HEADER);
        assert_eq!(lines[1], "NoTopo,1,0.5,3,0.5,0.30000000000000004,0.5,0.5,0.5,NaN,0.25,0.5,0.5");
    }

    #[test]
    fn summary_and_ablation_table() {
        let rows = vec![
            row(TransferMode::DisTrans, 0, 0.8),
            row(TransferMode::DisTrans, 1, 0.9),
            row(TransferMode::SimCDT, 0, 0.7),
            row(TransferMode::SimCDT, 1, 0.8),
            row(TransferMode::NoTopo, 0, 0.5),
            row(TransferMode::NoTopo, 1, 0.5),
        ];
        let s = summarize(&rows);
        assert_eq!(s.len(), 3);
        assert!((s[0].mean[1] - 0.85).abs() < 1e-12);
        assert!((s[0].std[1] - (0.005f64).sqrt()).abs() < 1e-12);
        let table = ablation_csv(&s);
        let lines: Vec<Vec<&str>> = table.lines().map(|l| l.split(',').collect()).collect();
        assert_eq!(lines.len(), 4);
        let col = |name: &str| lines[0].iter().position(|c| *c == name).unwrap();
        assert_eq!(lines[1][col("best_auroc")], "1");
        assert_eq!(lines[2][col("best_auroc")], "0");
        let imp_sim: f64 = lines[2][col("imp_auroc")].parse().unwrap();
        assert!((imp_sim - (0.85 - 0.75) / 0.75 * 100.0).abs() < 1e-9);
        let imp_ours: f64 = lines[1][col("imp_auroc")].parse().unwrap();
        assert!((imp_ours - imp_sim).abs() < 1e-12);
        let imp_acc: f64 = lines[3][col("imp_acc")].parse().unwrap();
        assert_eq!(imp_acc, 0.0);
    }

    #[test]
    fn mol_input_grid_matches_dtpg_dims() {
        let m = MolInput::from_smiles("CCO").unwrap();
        let d = decode_dtpg(&encode_dtpg(&grid("CCO"))).unwrap();
        assert_eq!(m.patch_count(), d.patches);
    }
}
