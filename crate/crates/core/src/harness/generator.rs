//! Synthetic two-domain pair benchmark.
//!
//! Molecules are a scaffold carrying two substituents, each a carbon chain
//! capped by a functional group. The source grammar uses single small
//! rings (or an acyclic core) with short chains; the target grammar uses
//! three-ring fused systems with long chains. Functional groups are drawn
//! identically in both. Pair labels threshold a per-molecule score: shared
//! functional-group activity plus a topological term whose active half
//! differs between the grammars.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::rng::{self, shuffle, ChaCha8Rng};

/// Fewest pairs per domain `generate_benchmark` accepts.
pub const MIN_PAIRS: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FunctionalGroup {
    Hydroxyl,
    Amine,
    Chloro,
    Carboxyl,
    Nitrile,
    Methoxy,
}

impl FunctionalGroup {
    pub const ALL: [FunctionalGroup; 6] = [
        FunctionalGroup::Hydroxyl,
        FunctionalGroup::Amine,
        FunctionalGroup::Chloro,
        FunctionalGroup::Carboxyl,
        FunctionalGroup::Nitrile,
        FunctionalGroup::Methoxy,
    ];

    pub fn smiles(self) -> &'static str {
        match self {
            FunctionalGroup::Hydroxyl => "O",
            FunctionalGroup::Amine => "N",
            FunctionalGroup::Chloro => "Cl",
            FunctionalGroup::Carboxyl => "C(=O)O",
            FunctionalGroup::Nitrile => "C#N",
            FunctionalGroup::Methoxy => "OC",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DomainLabel {
    Source,
    Target,
}

struct Scaffold {
    template: &'static str,
    rings: usize,
    saturated: bool,
}

const SOURCE_SCAFFOLDS: [Scaffold; 5] = [
    Scaffold { template: "c1c({0})ccc({1})c1", rings: 1, saturated: false },
    Scaffold { template: "c1c({0})cnc({1})c1", rings: 1, saturated: false },
    Scaffold { template: "C1C({0})CCC({1})C1", rings: 1, saturated: true },
    Scaffold { template: "C1C({0})CC({1})C1", rings: 1, saturated: true },
    Scaffold { template: "CC({0})CC({1})C", rings: 0, saturated: false },
];

const TARGET_SCAFFOLDS: [Scaffold; 4] = [
    // anthracene, phenanthrene, fluorene, acridine
    Scaffold { template: "c1c({1})cc2cc3cc({0})ccc3cc2c1", rings: 3, saturated: false },
    Scaffold { template: "c1cc({0})cc2c1ccc1cc({1})ccc12", rings: 3, saturated: false },
    Scaffold { template: "c1cc({0})cc2c1-c1ccc({1})cc1C2", rings: 3, saturated: false },
    Scaffold { template: "c1c({0})cc2nc3ccc({1})cc3cc2c1", rings: 3, saturated: false },
];

/// A generated molecule and the facts the label rule reads.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MolRecord {
    pub smiles: String,
    /// Index into the source scaffolds, or 5 + index into the target ones.
    pub scaffold: usize,
    pub rings: usize,
    pub saturated_ring: bool,
    /// Chain carbons over both substituents.
    pub chain: usize,
    pub groups: [FunctionalGroup; 2],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairRecord {
    pub i: usize,
    pub j: usize,
    pub label: u8,
}

/// One domain: a molecule pool and labelled pairs over it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainData {
    pub domain: DomainLabel,
    pub molecules: Vec<MolRecord>,
    pub pairs: Vec<PairRecord>,
}

impl DomainData {
    pub fn positive_rate(&self) -> f64 {
        let pos = self.pairs.iter().filter(|p| p.label == 1).count();
        pos as f64 / self.pairs.len().max(1) as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Benchmark {
    pub seed: u64,
    pub shift_level: f64,
    pub source: DomainData,
    pub target: DomainData,
}

fn substituent(chain: usize, fg: FunctionalGroup) -> String {
    let mut s = String::new();
    for _ in 0..chain {
        s.push('C');
    }
    s.push_str(fg.smiles());
    s
}

fn draw_molecule(rng: &mut ChaCha8Rng, target_grammar: bool) -> MolRecord {
    let (scaffolds, offset, chains): (&[Scaffold], usize, (usize, usize)) = if target_grammar {
        (&TARGET_SCAFFOLDS, SOURCE_SCAFFOLDS.len(), (3, 5))
    } else {
        (&SOURCE_SCAFFOLDS, 0, (0, 2))
    };
    let k = rng.gen_range(0..scaffolds.len());
    let sc = &scaffolds[k];
    let c = [rng.gen_range(chains.0..=chains.1), rng.gen_range(chains.0..=chains.1)];
    let fg = [
        FunctionalGroup::ALL[rng.gen_range(0..FunctionalGroup::ALL.len())],
        FunctionalGroup::ALL[rng.gen_range(0..FunctionalGroup::ALL.len())],
    ];
    let smiles = sc
        .template
        .replace("{0}", &substituent(c[0], fg[0]))
        .replace("{1}", &substituent(c[1], fg[1]));
    MolRecord {
        smiles,
        scaffold: offset + k,
        rings: sc.rings,
        saturated_ring: sc.saturated,
        chain: c[0] + c[1],
        groups: fg,
    }
}

/// Functional groups counted by the shared semantic rule.
pub fn is_active(fg: FunctionalGroup) -> bool {
    matches!(
        fg,
        FunctionalGroup::Hydroxyl | FunctionalGroup::Amine | FunctionalGroup::Carboxyl
    )
}

/// Shared semantic score of one molecule: its active functional groups.
pub fn semantic_score(m: &MolRecord) -> usize {
    m.groups.iter().filter(|&&g| is_active(g)).count()
}

/// Topological score of one molecule: a saturated ring or a long chain.
/// Only the source grammar has saturated rings and only the target grammar
/// has long chains, so each domain sees its own half of the rule.
pub fn topological_score(m: &MolRecord) -> usize {
    usize::from(m.saturated_ring || m.chain >= LONG_CHAIN)
}

/// Chain carbons from which a molecule counts as long-chained.
pub const LONG_CHAIN: usize = 8;

/// Pair score threshold of a positive label.
pub const LABEL_THRESHOLD: usize = 3;

/// Interaction label: the pair's combined semantic and topological score
/// reaches `LABEL_THRESHOLD`.
pub fn pair_label(a: &MolRecord, b: &MolRecord) -> u8 {
    let s = semantic_score(a) + semantic_score(b) + topological_score(a) + topological_score(b);
    u8::from(s >= LABEL_THRESHOLD)
}

/// Scaffold similarity used to rank negative pairs.
fn scaffold_similarity(a: &MolRecord, b: &MolRecord) -> u8 {
    if a.scaffold == b.scaffold {
        2
    } else if a.rings == b.rings {
        1
    } else {
        0
    }
}

fn build_domain(rng: &mut ChaCha8Rng, domain: DomainLabel, shift_level: f64, n: usize) -> DomainData {
    let half = n / 2;
    let mut pool_size = crate::math::sqrt((4 * n) as f64) as usize + 1;
    pool_size = pool_size.max(48);
    let mut molecules: Vec<MolRecord> = Vec::new();
    let mut seen = BTreeSet::new();
    loop {
        while molecules.len() < pool_size {
            let target_grammar = domain == DomainLabel::Target && rng.gen::<f64>() < shift_level;
            let m = draw_molecule(rng, target_grammar);
            if seen.insert(m.smiles.clone()) {
                molecules.push(m);
            }
        }
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        for i in 0..molecules.len() {
            for j in i + 1..molecules.len() {
                let label = pair_label(&molecules[i], &molecules[j]);
                let p = PairRecord { i, j, label };
                if label == 1 {
                    pos.push(p);
                } else {
                    neg.push(p);
                }
            }
        }
        if pos.len() >= n - half && neg.len() >= half {
            shuffle(&mut pos, rng);
            shuffle(&mut neg, rng);
            // Stable sort keeps the shuffled order within each similarity
            // level, so ties break at random.
            neg.sort_by_key(|p| core::cmp::Reverse(scaffold_similarity(&molecules[p.i], &molecules[p.j])));
            let mut pairs: Vec<PairRecord> = pos[..n - half].to_vec();
            pairs.extend_from_slice(&neg[..half]);
            shuffle(&mut pairs, rng);
            return DomainData { domain, molecules, pairs };
        }
        pool_size += 8;
    }
}

/// Two labelled domains of `n_per_domain` pairs each. `shift_level` is the
/// probability that a target molecule comes from the target grammar, so 0
/// gives identical molecule distributions. Both domains hold exactly
/// `⌈n/2⌉` positive pairs.
pub fn generate_benchmark(seed: u64, shift_level: f64, n_per_domain: usize) -> Result<Benchmark, HarnessError> {
    if n_per_domain < MIN_PAIRS {
        return Err(HarnessError::TooFewPairs(n_per_domain));
    }
    if !(0.0..=1.0).contains(&shift_level) {
        return Err(HarnessError::ShiftOutOfRange(shift_level));
    }
    let mut rs = rng::stream(seed, 0x5352_4300);
    let mut rt = rng::stream(seed, 0x5447_5400);
    Ok(Benchmark {
        seed,
        shift_level,
        source: build_domain(&mut rs, DomainLabel::Source, 0.0, n_per_domain),
        target: build_domain(&mut rt, DomainLabel::Target, shift_level, n_per_domain),
    })
}
