use alloc::vec;
use alloc::vec::Vec;

use crate::autodiff::Tensor;
use crate::molgraph::PatchGrid;

/// Stand-in for −∞ in the attention mask.
pub const NEG_INF: f64 = -1e9;

/// `L × L` additive mask: 0 where patches are equal, 4-adjacent or carry
/// the same substructure, `NEG_INF` elsewhere.
pub fn build_mask(grid: &PatchGrid) -> Tensor {
    let l = grid.len();
    let mut data = vec![NEG_INF; l * l];
    for i in 0..l {
        for k in 0..l {
            let same = match (grid.patches[i].substructure, grid.patches[k].substructure) {
                (Some(a), Some(b)) => a == b,
                _ => false,
            };
            if i == k || same || grid.adjacent(i, k) {
                data[i * l + k] = 0.0;
            }
        }
    }
    Tensor::new(vec![l, l], data).expect("shape")
}

/// For every `(l, k)` in row-major order, the substructure both patches
/// share, or `groups` (an always-zero slot) when they share none.
pub fn bias_index(grid: &PatchGrid, groups: usize) -> Vec<usize> {
    let l = grid.len();
    let mut out = Vec::with_capacity(l * l);
    for i in 0..l {
        for k in 0..l {
            out.push(
                match (grid.patches[i].substructure, grid.patches[k].substructure) {
                    (Some(a), Some(b)) if a == b && a < groups => a,
                    _ => groups,
                },
            );
        }
    }
    out
}
