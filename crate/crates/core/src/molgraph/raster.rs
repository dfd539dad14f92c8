//! Deterministic 64×64×3 raster of a laid-out molecule, pooled into an
//! 8×8 grid of patches.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::{BondOrder, Element, Layout, MolecularGraph, SubstructurePartition};
use crate::math::{floor, sqrt};

pub const CANVAS: usize = 64;
pub const PATCH_SIZE: usize = 8;
pub const CHANNELS: usize = 3;
/// Patch count `L`.
pub const PATCHES: usize = (CANVAS / PATCH_SIZE) * (CANVAS / PATCH_SIZE);

const ATOM: usize = 0;
const BOND: usize = 1;
const RING: usize = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Patch {
    /// Mean pixel intensity per channel.
    pub features: Vec<f64>,
    pub row: usize,
    pub col: usize,
    pub substructure: Option<usize>,
}

/// Square grid of patches in row-major order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchGrid {
    pub patches: Vec<Patch>,
    /// Patches per side.
    pub side: usize,
    pub channels: usize,
    /// Canvas height and width in pixels.
    pub height: usize,
    pub width: usize,
    /// Patch index of every atom.
    pub atom_patch: Vec<usize>,
}

impl PatchGrid {
    /// Grid from row-major features and labels; `features.len()` must be a
    /// perfect square.
    pub fn from_parts(features: Vec<Vec<f64>>, labels: Vec<Option<usize>>) -> Option<Self> {
        let l = features.len();
        let side = (1..=l).find(|s| s * s >= l)?;
        if side * side != l || labels.len() != l {
            return None;
        }
        let channels = features[0].len();
        if features.iter().any(|f| f.len() != channels) {
            return None;
        }
        let patches = features
            .into_iter()
            .zip(labels)
            .enumerate()
            .map(|(i, (features, substructure))| Patch {
                features,
                row: i / side,
                col: i % side,
                substructure,
            })
            .collect();
        Some(Self {
            patches,
            side,
            channels,
            height: side * PATCH_SIZE,
            width: side * PATCH_SIZE,
            atom_patch: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    /// Grid-adjacent in the 4-neighbourhood.
    pub fn adjacent(&self, l: usize, k: usize) -> bool {
        let (a, b) = (&self.patches[l], &self.patches[k]);
        a.row.abs_diff(b.row) + a.col.abs_diff(b.col) == 1
    }
}

/// Intensity of an atom in the atom channel, by element class.
fn atom_intensity(e: Element) -> f64 {
    match e {
        Element::C => 0.4,
        Element::N => 0.6,
        Element::O => 0.8,
        Element::S | Element::P => 0.7,
        e if e.is_halogen() => 1.0,
        _ => 0.5,
    }
}

fn bond_intensity(o: BondOrder) -> f64 {
    match o {
        BondOrder::Single => 0.4,
        BondOrder::Double => 0.7,
        BondOrder::Triple => 1.0,
        BondOrder::Aromatic => 0.55,
    }
}

struct Canvas {
    px: Vec<f64>,
}

impl Canvas {
    fn put(&mut self, c: usize, x: i64, y: i64, v: f64) {
        if x < 0 || y < 0 || x >= CANVAS as i64 || y >= CANVAS as i64 {
            return;
        }
        let i = (c * CANVAS + y as usize) * CANVAS + x as usize;
        if self.px[i] < v {
            self.px[i] = v;
        }
    }

    fn line(&mut self, c: usize, a: (f64, f64), b: (f64, f64), v: f64) {
        let (dx, dy) = (b.0 - a.0, b.1 - a.1);
        let steps = (2.0 * sqrt(dx * dx + dy * dy)) as usize + 1;
        for s in 0..=steps {
            let t = s as f64 / steps as f64;
            self.put(c, floor(a.0 + t * dx) as i64, floor(a.1 + t * dy) as i64, v);
        }
    }
}

fn pixel_of(p: (f64, f64)) -> (usize, usize) {
    let clamp = |z: f64| (floor(z).max(0.0) as usize).min(CANVAS - 1);
    (clamp(p.0), clamp(p.1))
}

/// Draw `g` at the positions in `layout` and pool into patches.
///
/// Channels: atom class, bond order, ring membership. Each atom is a 3×3
/// block clipped to the patch that holds its centre pixel, so every atom
/// lands in exactly one patch. A patch's substructure is the majority group
/// of the atoms inside it, ties going to the lower group index.
pub fn rasterize(g: &MolecularGraph, p: &SubstructurePartition, layout: &Layout) -> PatchGrid {
    let mut cv = Canvas {
        px: vec![0.0; CHANNELS * CANVAS * CANVAS],
    };
    let at = |i: usize| (layout.pixels[i].x, layout.pixels[i].y);
    for b in g.bonds() {
        cv.line(BOND, at(b.a), at(b.b), bond_intensity(b.order));
        if b.ring {
            cv.line(RING, at(b.a), at(b.b), 1.0);
        }
    }
    let side = CANVAS / PATCH_SIZE;
    let mut atom_patch = Vec::with_capacity(g.atom_count());
    for (i, a) in g.atoms().iter().enumerate() {
        let (x, y) = pixel_of(at(i));
        let (pr, pc) = (y / PATCH_SIZE, x / PATCH_SIZE);
        atom_patch.push(pr * side + pc);
        let v = atom_intensity(a.element);
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let (xx, yy) = (x as i64 + dx, y as i64 + dy);
                let inside = xx >= (pc * PATCH_SIZE) as i64
                    && xx < ((pc + 1) * PATCH_SIZE) as i64
                    && yy >= (pr * PATCH_SIZE) as i64
                    && yy < ((pr + 1) * PATCH_SIZE) as i64;
                if inside {
                    cv.put(ATOM, xx, yy, v);
                    if a.ring {
                        cv.put(RING, xx, yy, 1.0);
                    }
                }
            }
        }
    }

    let membership = p.membership(g.atom_count());
    let mut votes = vec![vec![0usize; p.len()]; PATCHES];
    for (i, &l) in atom_patch.iter().enumerate() {
        votes[l][membership[i]] += 1;
    }
    let area = (PATCH_SIZE * PATCH_SIZE) as f64;
    let patches = (0..PATCHES)
        .map(|l| {
            let (row, col) = (l / side, l % side);
            let features = (0..CHANNELS)
                .map(|c| {
                    let mut s = 0.0;
                    for y in row * PATCH_SIZE..(row + 1) * PATCH_SIZE {
                        let base = (c * CANVAS + y) * CANVAS;
                        for x in col * PATCH_SIZE..(col + 1) * PATCH_SIZE {
                            s += cv.px[base + x];
                        }
                    }
                    s / area
                })
                .collect();
            // `max_by_key` keeps the last maximum; iterate groups in reverse
            // so ties resolve to the lower index.
            let substructure = votes[l]
                .iter()
                .enumerate()
                .rev()
                .filter(|&(_, &n)| n > 0)
                .max_by_key(|&(_, &n)| n)
                .map(|(x, _)| x);
            Patch {
                features,
                row,
                col,
                substructure,
            }
        })
        .collect();
    PatchGrid {
        patches,
        side,
        channels: CHANNELS,
        height: CANVAS,
        width: CANVAS,
        atom_patch,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::molgraph::{fragment, layout_2d, parse_smiles};

    fn grid(s: &str) -> (MolecularGraph, SubstructurePartition, PatchGrid) {
        let g = parse_smiles(s).unwrap();
        let p = fragment(&g);
        let l = layout_2d(&g).unwrap();
        let r = rasterize(&g, &p, &l);
        (g, p, r)
    }

    #[test]
    fn dims() {
        let (_, _, r) = grid("CCO");
        assert_eq!(r.len(), PATCHES);
        assert_eq!(r.side * r.side, r.len());
        assert!(r.patches.iter().all(|p| p.features.len() == CHANNELS));
    }

    #[test]
    fn single_atom_lights_one_patch() {
        let (_, _, r) = grid("C");
        let lit: Vec<_> = r.patches.iter().filter(|p| p.features[ATOM] > 0.0).collect();
        assert_eq!(lit.len(), 1);
        assert_eq!(lit[0].substructure, Some(0));
        let empty = r.patches.iter().filter(|p| p.substructure.is_none()).count();
        assert_eq!(empty, PATCHES - 1);
        for p in r.patches.iter().filter(|p| p.substructure.is_none()) {
            assert_eq!(p.features, vec![0.0; CHANNELS]);
        }
    }

    #[test]
    fn toluene_phenyl_patches_are_4_connected() {
        let (_, p, r) = grid("Cc1ccccc1");
        let phenyl = p.groups.iter().position(|g| g.len() == 6).unwrap();
        let cells: Vec<usize> = (0..r.len())
            .filter(|&l| r.patches[l].substructure == Some(phenyl))
            .collect();
        assert!(!cells.is_empty());
        // Flood fill over the 4-neighbourhood.
        let mut seen = vec![cells[0]];
        let mut stack = vec![cells[0]];
        while let Some(l) = stack.pop() {
            let (row, col) = ((l / r.side) as i64, (l % r.side) as i64);
            for (dr, dc) in [(-1, 0), (1, 0), (0, -1), (0, 1)] {
                let (nr, nc) = (row + dr, col + dc);
                if nr < 0 || nc < 0 || nr >= r.side as i64 || nc >= r.side as i64 {
                    continue;
                }
                let k = nr as usize * r.side + nc as usize;
                if cells.contains(&k) && !seen.contains(&k) {
                    seen.push(k);
                    stack.push(k);
                }
            }
        }
        assert_eq!(seen.len(), cells.len());
    }

    #[test]
    fn labels_name_groups_with_atoms_in_tile() {
        let (g, p, r) = grid("CC(=O)OC1=CC=CC=C1C(=O)O");
        let m = p.membership(g.atom_count());
        for (l, patch) in r.patches.iter().enumerate() {
            if let Some(x) = patch.substructure {
                assert!((0..g.atom_count()).any(|a| r.atom_patch[a] == l && m[a] == x));
            }
        }
    }

    #[test]
    fn majority_tie_goes_to_lower_group() {
        // Two atoms in one patch from two groups: force with a tiny layout.
        let g = parse_smiles("Cc1ccccc1").unwrap();
        let p = fragment(&g);
        let mut l = layout_2d(&g).unwrap();
        for (i, q) in l.pixels.iter_mut().enumerate() {
            *q = if i < 2 {
                crate::molgraph::Point::new(3.0, 3.0)
            } else {
                crate::molgraph::Point::new(40.0, 40.0)
            };
        }
        let r = rasterize(&g, &p, &l);
        assert_eq!(r.patches[0].substructure, Some(0));
    }

    #[test]
    fn deterministic() {
        let (_, _, a) = grid("c1ccc2ccccc2c1CCN");
        let (_, _, b) = grid("c1ccc2ccccc2c1CCN");
        assert_eq!(a, b);
    }

    #[test]
    fn from_parts_rejects_non_square() {
        assert!(PatchGrid::from_parts(vec![vec![0.0]; 3], vec![None; 3]).is_none());
        let g = PatchGrid::from_parts(vec![vec![0.0]; 4], vec![None; 4]).unwrap();
        assert_eq!(g.side, 2);
        assert!(g.adjacent(0, 1) && !g.adjacent(0, 3));
    }
}
