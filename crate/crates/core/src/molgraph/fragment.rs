use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::{BondOrder, MolecularGraph};

/// Disjoint substructures covering every atom, plus the frontier of each
/// group (atoms outside it that share a cut bond with it).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubstructurePartition {
    pub groups: Vec<Vec<usize>>,
    pub frontier: Vec<Vec<usize>>,
    pub broken_bonds: Vec<usize>,
}

impl SubstructurePartition {
    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// Group index of every atom.
    pub fn membership(&self, atom_count: usize) -> Vec<usize> {
        let mut m = vec![usize::MAX; atom_count];
        for (x, g) in self.groups.iter().enumerate() {
            for &a in g {
                m[a] = x;
            }
        }
        m
    }
}

/// BRICS-lite fragmentation: cut every acyclic single bond that touches a
/// ring atom (ring/non-ring boundary, or a linker between two ring systems),
/// then take connected components.
///
/// Groups are ordered by their smallest atom index; atoms inside a group and
/// frontier sets are sorted ascending.
pub fn fragment(g: &MolecularGraph) -> SubstructurePartition {
    let n = g.atom_count();
    let atoms = g.atoms();
    let broken_bonds: Vec<usize> = g
        .bonds()
        .iter()
        .enumerate()
        .filter(|(_, b)| {
            !b.ring && b.order == BondOrder::Single && (atoms[b.a].ring || atoms[b.b].ring)
        })
        .map(|(i, _)| i)
        .collect();
    let mut cut = vec![false; g.bond_count()];
    for &bi in &broken_bonds {
        cut[bi] = true;
    }

    let mut comp = vec![usize::MAX; n];
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for s in 0..n {
        if comp[s] != usize::MAX {
            continue;
        }
        let id = groups.len();
        let mut members = vec![s];
        comp[s] = id;
        let mut stack = vec![s];
        while let Some(v) = stack.pop() {
            for &(u, bi) in g.neighbors(v) {
                if !cut[bi] && comp[u] == usize::MAX {
                    comp[u] = id;
                    members.push(u);
                    stack.push(u);
                }
            }
        }
        members.sort_unstable();
        groups.push(members);
    }

    let mut frontier = vec![Vec::new(); groups.len()];
    for &bi in &broken_bonds {
        let b = g.bonds()[bi];
        frontier[comp[b.a]].push(b.b);
        frontier[comp[b.b]].push(b.a);
    }
    for f in &mut frontier {
        f.sort_unstable();
        f.dedup();
    }
    SubstructurePartition {
        groups,
        frontier,
        broken_bonds,
    }
}
