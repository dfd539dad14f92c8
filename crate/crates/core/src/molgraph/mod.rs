//! Molecular graphs: SMILES in, substructure partition, 2-D depiction and
//! a patch-grid raster out.

use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

mod element;
mod fragment;
mod layout;
mod raster;
mod smiles;

pub use element::Element;
pub use fragment::{fragment, SubstructurePartition};
pub use layout::{layout_2d, Layout, LayoutError, Point};
pub use raster::{rasterize, Patch, PatchGrid, CANVAS, CHANNELS, PATCH_SIZE, PATCHES};
pub use smiles::{parse_smiles, to_smiles, to_smiles_with_order, SmilesError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    /// Index used for one-hot edge features.
    pub fn index(self) -> usize {
        match self {
            BondOrder::Single => 0,
            BondOrder::Double => 1,
            BondOrder::Triple => 2,
            BondOrder::Aromatic => 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AtomRecord {
    pub element: Element,
    pub aromatic: bool,
    /// Atom lies on at least one cycle.
    pub ring: bool,
    /// Number of heavy-atom neighbours.
    pub degree: u8,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub order: BondOrder,
    /// Bond lies on a cycle (is not a bridge).
    pub ring: bool,
}

impl Bond {
    pub fn other(&self, atom: usize) -> usize {
        if self.a == atom {
            self.b
        } else {
            self.a
        }
    }
}

/// Heavy-atom molecular graph. Atom indices are dense `0..N`; every bond is
/// stored once in `bonds` and twice in the neighbour lists.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MolecularGraph {
    atoms: Vec<AtomRecord>,
    bonds: Vec<Bond>,
    #[serde(skip)]
    neighbors: Vec<Vec<(usize, usize)>>,
    smiles_source: String,
}

impl MolecularGraph {
    pub(crate) fn from_parts(
        atoms: Vec<(Element, bool)>,
        bonds: Vec<(usize, usize, BondOrder)>,
        smiles_source: String,
    ) -> Self {
        let n = atoms.len();
        let mut neighbors = alloc::vec![Vec::new(); n];
        for (i, &(a, b, _)) in bonds.iter().enumerate() {
            neighbors[a].push((b, i));
            neighbors[b].push((a, i));
        }
        let ring_bonds = ring_bond_flags(n, &bonds, &neighbors);
        let atoms = atoms
            .into_iter()
            .enumerate()
            .map(|(i, (element, aromatic))| AtomRecord {
                element,
                aromatic,
                ring: neighbors[i].iter().any(|&(_, bi)| ring_bonds[bi]),
                degree: neighbors[i].len() as u8,
            })
            .collect();
        let bonds = bonds
            .into_iter()
            .zip(ring_bonds)
            .map(|((a, b, order), ring)| Bond { a, b, order, ring })
            .collect();
        Self {
            atoms,
            bonds,
            neighbors,
            smiles_source,
        }
    }

    pub fn atoms(&self) -> &[AtomRecord] {
        &self.atoms
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn bond_count(&self) -> usize {
        self.bonds.len()
    }

    /// `(neighbour, bond index)` pairs of `atom`, in bond creation order.
    pub fn neighbors(&self, atom: usize) -> &[(usize, usize)] {
        &self.neighbors[atom]
    }

    pub fn smiles_source(&self) -> &str {
        &self.smiles_source
    }

    /// Cyclomatic number: independent cycles in the (connected) graph.
    pub fn ring_count(&self) -> usize {
        let components = self.components();
        (self.bonds.len() + components).saturating_sub(self.atoms.len())
    }

    fn components(&self) -> usize {
        let mut seen = alloc::vec![false; self.atoms.len()];
        let mut count = 0;
        for s in 0..self.atoms.len() {
            if seen[s] {
                continue;
            }
            count += 1;
            let mut stack = alloc::vec![s];
            seen[s] = true;
            while let Some(v) = stack.pop() {
                for &(u, _) in &self.neighbors[v] {
                    if !seen[u] {
                        seen[u] = true;
                        stack.push(u);
                    }
                }
            }
        }
        count
    }

    /// Rebuild neighbour lists after deserialization.
    pub fn reindex(&mut self) {
        let mut neighbors = alloc::vec![Vec::new(); self.atoms.len()];
        for (i, b) in self.bonds.iter().enumerate() {
            neighbors[b.a].push((b.b, i));
            neighbors[b.b].push((b.a, i));
        }
        self.neighbors = neighbors;
    }
}

/// Marks every bond that is not a bridge (Tarjan low-link, iterative).
fn ring_bond_flags(
    n: usize,
    bonds: &[(usize, usize, BondOrder)],
    neighbors: &[Vec<(usize, usize)>],
) -> Vec<bool> {
    let mut ring = alloc::vec![true; bonds.len()];
    let mut disc = alloc::vec![usize::MAX; n];
    let mut low = alloc::vec![0usize; n];
    let mut timer = 0;
    for root in 0..n {
        if disc[root] != usize::MAX {
            continue;
        }
        // (vertex, parent bond, next neighbour position)
        let mut stack: Vec<(usize, usize, usize)> = alloc::vec![(root, usize::MAX, 0)];
        disc[root] = timer;
        low[root] = timer;
        timer += 1;
        while let Some(&mut (v, pb, ref mut pos)) = stack.last_mut() {
            if *pos < neighbors[v].len() {
                let (u, bi) = neighbors[v][*pos];
                *pos += 1;
                if bi == pb {
                    continue;
                }
                if disc[u] == usize::MAX {
                    disc[u] = timer;
                    low[u] = timer;
                    timer += 1;
                    stack.push((u, bi, 0));
                } else {
                    low[v] = low[v].min(disc[u]);
                }
            } else {
                stack.pop();
                if let Some(&(p, _, _)) = stack.last() {
                    low[p] = low[p].min(low[v]);
                    if low[v] > disc[p] {
                        ring[pb] = false;
                    }
                }
            }
        }
    }
    ring
}
