use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;

use super::*;
use crate::autodiff::gradcheck::{input_gradient_error, param_gradient_error};
use crate::autodiff::{Graph, ParamStore, Tensor};
use crate::math::sigmoid;
use crate::molgraph::{BondOrder, MolecularGraph, SubstructurePartition};
use crate::rng;

fn model(seed: u64) -> (ParamStore, TRegCross) {
    let mut store = ParamStore::new();
    let mut r = rng::stream(seed, 0);
    let m = TRegCross::new(&mut store, EncoderConfig::default(), &mut r);
    (store, m)
}

fn random_tensor(shape: &[usize], r: &mut impl Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| r.gen_range(-2.0..2.0)).collect()).unwrap()
}

#[test]
fn zero_weights_single_atom_gives_zero_embedding() {
    let (mut store, m) = model(1);
    for id in m.gine.ids() {
        store.get_mut(id).value.data_mut().iter_mut().for_each(|v| *v = 0.0);
    }
    let input = MolInput::from_smiles("C").unwrap();
    let mut t = Graph::new();
    let z = m.gine.encode_atoms(&mut t, &store, &input).unwrap();
    assert_eq!(t.shape(z), &[1, 32]);
    assert!(t.value(z).data().iter().all(|&v| v == 0.0));
}

fn graph_from(atoms: &[(crate::molgraph::Element, bool)], bonds: &[(usize, usize, BondOrder)]) -> MolecularGraph {
    MolecularGraph::from_parts(atoms.to_vec(), bonds.to_vec(), String::new())
}

#[test]
fn gine_is_permutation_equivariant() {
    use crate::molgraph::{fragment, layout_2d, parse_smiles, rasterize, Element};
    let g = parse_smiles("OCC(N)c1ccccc1Cl").unwrap();
    let n = g.atom_count();
    // perm[new] = old
    let perm: Vec<usize> = (0..n).rev().collect();
    let mut inv = vec![0; n];
    for (new, &old) in perm.iter().enumerate() {
        inv[old] = new;
    }
    let atoms: Vec<(Element, bool)> = perm.iter().map(|&o| (g.atoms()[o].element, g.atoms()[o].aromatic)).collect();
    let bonds: Vec<(usize, usize, BondOrder)> =
        g.bonds().iter().rev().map(|b| (inv[b.b], inv[b.a], b.order)).collect();
    let h = graph_from(&atoms, &bonds);
    let mk = |g: &MolecularGraph| {
        let p = fragment(g);
        let grid = rasterize(g, &p, &layout_2d(g).unwrap());
        MolInput::new(g, p, &grid)
    };
    let (a, b) = (mk(&g), mk(&h));
    let (store, m) = model(3);
    let mut t = Graph::new();
    let za = m.gine.encode_atoms(&mut t, &store, &a).unwrap();
    let zb = m.gine.encode_atoms(&mut t, &store, &b).unwrap();
    for (new, &old) in perm.iter().enumerate() {
        let (ra, rb) = (t.value(za).row_slice(old), t.value(zb).row_slice(new));
        for (x, y) in ra.iter().zip(rb) {
            assert!((x - y).abs() < 1e-12);
        }
    }
    // Pooled structure embedding is invariant (partition groups are
    // re-ordered by the relabelling but their multiset is not).
    let mut noise = GumbelNoise::Mean;
    let (ga, _, _) = m.encode_structure(&mut t, &store, &a, &mut noise).unwrap();
    let (gb, _, _) = m.encode_structure(&mut t, &store, &b, &mut noise).unwrap();
    for (x, y) in t.value(ga).data().iter().zip(t.value(gb).data()) {
        assert!((x - y).abs() < 1e-9, "{x} {y}");
    }
}

#[test]
fn gine_gradient_matches_finite_differences() {
    let input = MolInput::from_smiles("CC(=O)Nc1ccc(O)cc1").unwrap();
    for seed in 0..5 {
        let (store, m) = model(seed);
        let err = param_gradient_error(&store, &m.gine.ids(), 7, |t, s| {
            let z = m.gine.encode_atoms(t, s, &input)?;
            let p = pool_all(t, z, &input.partition, 0.5)?;
            let p = t.tanh(p);
            Ok::<_, EncoderError>(t.sum(p))
        })
        .unwrap();
        assert!(err.worst < 1e-4 && err.kinks * 20 < err.checked, "seed {seed}: {err:?}");
    }
}

fn two_groups() -> SubstructurePartition {
    SubstructurePartition {
        groups: vec![vec![0], vec![1]],
        frontier: vec![vec![1], vec![0]],
        broken_bonds: vec![0],
    }
}

#[test]
fn pool_examples() {
    let mut t = Graph::new();
    let zv = t.constant(Tensor::from_rows(&[vec![2.0, 0.0], vec![0.0, 2.0]]).unwrap());
    let p = two_groups();
    let z = pool_substructure(&mut t, zv, &p, 0, 0.5).unwrap();
    assert_eq!(t.value(z).data(), &[1.0, 1.0]);
    let z = pool_substructure(&mut t, zv, &p, 0, 1.0).unwrap();
    assert_eq!(t.value(z).data(), &[2.0, 0.0]);
    assert!(matches!(
        pool_substructure(&mut t, zv, &p, 0, 1.5),
        Err(EncoderError::GammaOutOfRange(_))
    ));
    let bad = SubstructurePartition {
        groups: vec![vec![0, 1], vec![]],
        frontier: vec![vec![], vec![]],
        broken_bonds: vec![],
    };
    assert!(matches!(pool_all(&mut t, zv, &bad, 0.5), Err(EncoderError::EmptyGroup(1))));
}

#[test]
fn pool_matches_direct_formula() {
    let input = MolInput::from_smiles("OCc1ccccc1").unwrap();
    assert_eq!(input.atom_count, 8);
    let mut r = rng::stream(11, 0);
    let zv_t = random_tensor(&[8, 5], &mut r);
    let gamma = 0.3;
    let mut t = Graph::new();
    let zv = t.constant(zv_t.clone());
    let all = pool_all(&mut t, zv, &input.partition, gamma).unwrap();
    for (x, group) in input.partition.groups.iter().enumerate() {
        let one = pool_substructure(&mut t, zv, &input.partition, x, gamma).unwrap();
        for c in 0..5 {
            let inside: f64 = group.iter().map(|&a| zv_t.get2(a, c)).sum();
            let outside: f64 = (0..8).filter(|a| !group.contains(a)).map(|a| zv_t.get2(a, c)).sum();
            let want = gamma * inside + (1.0 - gamma) / group.len() as f64 * outside;
            assert!((t.value(one).data()[c] - want).abs() < 1e-12);
            assert!((t.value(all).get2(x, c) - want).abs() < 1e-12);
        }
    }
}

#[test]
fn affiliation_examples() {
    let mut store = ParamStore::new();
    let mut r = rng::stream(5, 0);
    let aff = Affiliation::new(&mut store, "a", 3, &mut r);
    let mut t = Graph::new();
    let zg = t.constant(Tensor::row(vec![1.0, 0.0, 0.0]));
    let front = t.constant(Tensor::from_rows(&[vec![0.0, 2.0, -1.0], vec![0.0, 2.0, -1.0]]).unwrap());
    let eta = aff.forward(&mut t, &store, zg, front).unwrap();
    let scale = {
        let h = aff_mlp_value(&store, &[1.0, 0.0, 0.0]);
        crate::math::softplus(h)
    };
    let e = t.value(eta).data();
    assert!((e[0] - 0.5 * scale).abs() < 1e-12);
    assert_eq!(e[0], e[1]);

    // Three random frontier atoms against a direct evaluation.
    let zg_v = random_tensor(&[1, 3], &mut r);
    let fr_v = random_tensor(&[3, 3], &mut r);
    let mut t = Graph::new();
    let zg = t.constant(zg_v.clone());
    let fr = t.constant(fr_v.clone());
    let eta = aff.forward(&mut t, &store, zg, fr).unwrap();
    let s = crate::math::softplus(aff_mlp_value(&store, zg_v.data()));
    for o in 0..3 {
        let dot: f64 = (0..3).map(|c| fr_v.get2(o, c) * zg_v.data()[c]).sum();
        let want = s * sigmoid(dot);
        assert!((t.value(eta).data()[o] - want).abs() < 1e-12);
    }
}

/// Two-layer MLP evaluated directly from the store for a 3-wide input.
fn aff_mlp_value(store: &ParamStore, x: &[f64]) -> f64 {
    let get = |n: &str| store.value(store.find(n).unwrap()).clone();
    let (w1, b1, w2, b2) = (get("a.mlp.0.w"), get("a.mlp.0.b"), get("a.mlp.1.w"), get("a.mlp.1.b"));
    let h: Vec<f64> = (0..3)
        .map(|j| {
            let v: f64 = (0..3).map(|i| x[i] * w1.get2(i, j)).sum::<f64>() + b1.data()[j];
            v.max(0.0)
        })
        .collect();
    (0..3).map(|j| h[j] * w2.get2(j, 0)).sum::<f64>() + b2.data()[0]
}

fn phi_of(eta: &[f64], tau: f64, seed: u64) -> Vec<f64> {
    let mut t = Graph::new();
    let e = t.constant(Tensor::row(eta.to_vec()));
    let mut r = rng::stream(seed, 9);
    let p = gumbel_weights(&mut t, e, tau, &mut GumbelNoise::Sample(&mut r)).unwrap();
    t.value(p).data().to_vec()
}

#[test]
fn gumbel_examples() {
    assert_eq!(phi_of(&[0.3], 1.0, 1), vec![1.0]);
    for seed in 0..100 {
        let p = phi_of(&[0.1, 2.0, 0.7, 1e-3], 0.7, seed);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|&x| x >= 0.0));
    }
    let mut total = 0.0;
    for seed in 0..10_000 {
        let p = phi_of(&[1.0; 4], 100.0, seed);
        total += p.iter().copied().fold(0.0, f64::max);
    }
    assert!(total / 10_000.0 < 0.55);
}

#[test]
fn gumbel_temperature_limits() {
    for seed in 0..20 {
        let cold = phi_of(&[0.2, 0.5, 0.9], 1e-3, seed);
        assert!(cold.iter().any(|&x| x > 1.0 - 1e-9), "{cold:?}");
        let hot = phi_of(&[0.2, 0.5, 0.9], 1e3, seed);
        assert!(hot.iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-2), "{hot:?}");
    }
}

#[test]
fn gumbel_errors() {
    let mut t = Graph::new();
    let e = t.constant(Tensor::row(vec![1.0, 0.0]));
    assert!(matches!(
        gumbel_weights(&mut t, e, 1.0, &mut GumbelNoise::Mean),
        Err(EncoderError::NonPositiveEta { index: 1, .. })
    ));
    let e = t.constant(Tensor::row(vec![1.0]));
    assert!(matches!(
        gumbel_weights(&mut t, e, 0.0, &mut GumbelNoise::Mean),
        Err(EncoderError::NonPositiveTau(_))
    ));
}

#[test]
fn inject_examples() {
    let mut t = Graph::new();
    let zg = t.constant(Tensor::row(vec![1.0, 2.0]));
    let out = inject_adjacent(&mut t, zg, None, 2).unwrap();
    assert_eq!(t.value(out).data(), &[0.0, 0.0, 1.0, 2.0]);

    let fr_rows = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![3.0, 3.0], vec![-1.0, 5.0]];
    let fr = t.constant(Tensor::from_rows(&fr_rows).unwrap());
    let phi_v = [0.1, 0.4, 0.2, 0.3];
    let phi = t.constant(Tensor::row(phi_v.to_vec()));
    let all = inject_adjacent(&mut t, zg, Some((phi, fr)), 4).unwrap();
    let want: Vec<f64> = (0..2).map(|c| (0..4).map(|o| phi_v[o] * fr_rows[o][c]).sum()).collect();
    assert_eq!(&t.value(all).data()[..2], want.as_slice());

    // Q = 2: brute force over all six pairs for the heaviest pair.
    let mut best = (f64::NEG_INFINITY, 0, 0);
    for a in 0..4 {
        for b in a + 1..4 {
            let w = phi_v[a] + phi_v[b];
            if w > best.0 {
                best = (w, a, b);
            }
        }
    }
    let two = inject_adjacent(&mut t, zg, Some((phi, fr)), 2).unwrap();
    for c in 0..2 {
        let want = phi_v[best.1] * fr_rows[best.1][c] + phi_v[best.2] * fr_rows[best.2][c];
        assert!((t.value(two).data()[c] - want).abs() < 1e-15);
    }
    assert!(matches!(inject_adjacent(&mut t, zg, None, 0), Err(EncoderError::ZeroQ)));
}

#[test]
fn mask_examples() {
    let g = crate::molgraph::PatchGrid::from_parts(vec![vec![0.0]], vec![Some(0)]).unwrap();
    assert_eq!(build_mask(&g).data(), &[0.0]);
    let g = crate::molgraph::PatchGrid::from_parts(vec![vec![0.0]; 4], vec![Some(0), None, None, Some(1)])
        .unwrap();
    let m = build_mask(&g);
    assert_eq!(m.get2(0, 3), NEG_INF);
    assert_eq!(m.get2(0, 1), 0.0);
}

#[test]
fn toluene_mask_oracle() {
    use crate::molgraph::{fragment, layout_2d, parse_smiles, rasterize};
    let g = parse_smiles("Cc1ccccc1").unwrap();
    let p = fragment(&g);
    let grid = rasterize(&g, &p, &layout_2d(&g).unwrap());
    let m = build_mask(&grid);
    let l = grid.len();
    let phenyl = Some(1);
    for i in 0..l {
        assert_eq!(m.get2(i, i), 0.0);
        for k in 0..l {
            assert_eq!(m.get2(i, k), m.get2(k, i));
            let (a, b) = (&grid.patches[i], &grid.patches[k]);
            let adjacent = a.row.abs_diff(b.row) + a.col.abs_diff(b.col) == 1;
            let same = a.substructure.is_some() && a.substructure == b.substructure;
            let want = if i == k || adjacent || same { 0.0 } else { NEG_INF };
            assert_eq!(m.get2(i, k), want);
            if a.substructure == phenyl && b.substructure == phenyl {
                assert_eq!(m.get2(i, k), 0.0);
            }
        }
    }
}

fn small_vit(seed: u64) -> (ParamStore, VitEncoder) {
    let mut store = ParamStore::new();
    let mut r = rng::stream(seed, 1);
    let v = VitEncoder::new(&mut store, "v", 4, 3, 4, 2, 2, 2, 6, &mut r);
    (store, v)
}

#[test]
fn standardize_rows_examples() {
    let mut t = Graph::new();
    let x = t.constant(Tensor::from_rows(&[vec![1.0, 2.0, 3.0, 4.0], vec![-2.0, 0.0, 0.0, 2.0]]).unwrap());
    let y = standardize_rows(&mut t, x).unwrap();
    let want = [
        [-1.5, -0.5, 0.5, 1.5].map(|v| v / crate::math::sqrt(1.25 + NORM_EPS)),
        [-2.0, 0.0, 0.0, 2.0].map(|v| v / crate::math::sqrt(2.0 + NORM_EPS)),
    ];
    for (r, row) in want.iter().enumerate() {
        for (c, w) in row.iter().enumerate() {
            assert!((t.value(y).get2(r, c) - w).abs() < 1e-14);
        }
    }
    let bad = t.constant(Tensor::vector(vec![1.0, 2.0]));
    assert!(standardize_rows(&mut t, bad).is_err());

    let mut r = rng::stream(11, 0);
    for _ in 0..20 {
        let a = random_tensor(&[3, 5], &mut r);
        let w = random_tensor(&[3, 5], &mut r);
        let err = input_gradient_error(&[a], |t, v| {
            let y = standardize_rows(t, v[0])?;
            let w = t.constant(w.clone());
            let p = t.mul(y, w)?;
            Ok::<_, crate::autodiff::AutodiffError>(t.sum(p))
        })
        .unwrap();
        assert!(err.worst < 1e-6, "{err:?}");
    }
}

#[test]
fn vit_unmasked_equals_plain_attention() {
    let (store, vit) = small_vit(2);
    let mut r = rng::stream(2, 2);
    let feats = random_tensor(&[4, 3], &mut r);
    let mask = Tensor::zeros(&[4, 4]);
    let idx = vec![0; 16];
    let mut t = Graph::new();
    let out = vit.encode_image(&mut t, &store, &feats, &mask, &idx, None).unwrap();
    // Block 0, head 0 by hand, on pre-normalised rows.
    let get = |n: &str| store.value(store.find(n).unwrap()).clone();
    let (we, be, pos, wq, wk) = (get("v.embed.w"), get("v.embed.b"), get("v.pos"), get("v.0.h0.q"), get("v.0.h0.k"));
    let x: Vec<Vec<f64>> = (0..4)
        .map(|l| {
            (0..4)
                .map(|j| (0..3).map(|c| feats.get2(l, c) * we.get2(c, j)).sum::<f64>() + be.data()[j] + pos.get2(l, j))
                .collect()
        })
        .collect();
    // Pre-norm: each row to zero mean and unit variance.
    let x: Vec<Vec<f64>> = x
        .iter()
        .map(|row| {
            let mu = row.iter().sum::<f64>() / 4.0;
            let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / 4.0;
            row.iter().map(|v| (v - mu) / crate::math::sqrt(var + NORM_EPS)).collect()
        })
        .collect();
    let proj = |w: &Tensor| -> Vec<Vec<f64>> {
        x.iter().map(|row| (0..2).map(|j| (0..4).map(|i| row[i] * w.get2(i, j)).sum()).collect()).collect()
    };
    let (q, k) = (proj(&wq), proj(&wk));
    let a = t.value(out.attention[0]);
    for l in 0..4 {
        let logits: Vec<f64> = (0..4)
            .map(|m| (q[l][0] * k[m][0] + q[l][1] * k[m][1]) / crate::math::sqrt(2.0))
            .collect();
        let mx = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logits.iter().map(|v| crate::math::exp(v - mx)).sum();
        for m in 0..4 {
            let want = crate::math::exp(logits[m] - mx) / z;
            assert!((a.get2(l, m) - want).abs() < 1e-12);
        }
    }
}

#[test]
fn vit_masked_pairs_get_no_attention() {
    let input = MolInput::from_smiles("OCCc1ccc(Cl)cc1").unwrap();
    let (store, m) = model(4);
    let mut t = Graph::new();
    let mut noise = GumbelNoise::Mean;
    let (_, _, zx) = m.encode_structure(&mut t, &store, &input, &mut noise).unwrap();
    let out = m
        .vit
        .encode_image(&mut t, &store, &input.patches, &input.mask, &input.bias_index, Some(zx))
        .unwrap();
    let l = input.patch_count();
    for a in &out.attention {
        for i in 0..l {
            for k in 0..l {
                if input.mask.get2(i, k) == NEG_INF {
                    assert!(t.value(*a).get2(i, k) < 1e-6);
                }
            }
        }
    }
}

#[test]
fn vit_gradient_matches_finite_differences() {
    let mask = Tensor::from_rows(&[
        vec![0.0, 0.0, 0.0, NEG_INF],
        vec![0.0, 0.0, NEG_INF, 0.0],
        vec![0.0, NEG_INF, 0.0, 0.0],
        vec![NEG_INF, 0.0, 0.0, 0.0],
    ])
    .unwrap();
    let idx = vec![0, 2, 2, 2, 2, 1, 2, 1, 2, 2, 0, 2, 2, 1, 2, 1];
    for seed in 0..10 {
        let (store, vit) = small_vit(seed);
        let mut r = rng::stream(seed, 3);
        let feats = random_tensor(&[4, 3], &mut r);
        let zg = random_tensor(&[2, 2], &mut r);
        let ids: Vec<_> = store.ids().collect();
        let err = param_gradient_error(&store, &ids, 1, |t, s| {
            let z = t.constant(zg.clone());
            let out = vit.encode_image(t, s, &feats, &mask, &idx, Some(z))?;
            let y = t.tanh(out.z);
            Ok::<_, EncoderError>(t.sum(y))
        })
        .unwrap();
        assert!(err.worst < 1e-4 && err.kinks * 20 < err.checked, "seed {seed}: {err:?}");
        let err = input_gradient_error(&[zg.clone()], |t, v| {
            let out = vit.encode_image(t, &store, &feats, &mask, &idx, Some(v[0]))?;
            let y = t.tanh(out.z);
            Ok::<_, EncoderError>(t.sum(y))
        })
        .unwrap();
        assert!(err.worst < 1e-4 && err.kinks * 20 < err.checked, "seed {seed}: {err:?}");
    }
}

#[test]
fn single_atom_molecule_encodes() {
    let input = MolInput::from_smiles("C").unwrap();
    assert_eq!(input.partition.len(), 1);
    let (store, m) = model(6);
    let mut t = Graph::new();
    let enc = m.encode_molecule(&mut t, &store, &input, &mut GumbelNoise::Mean).unwrap();
    assert_eq!(t.shape(enc.z_g), &[1, 32]);
    assert_eq!(t.shape(enc.z_i), &[1, 32]);
    assert_eq!(t.shape(enc.z_xn), &[1, 64]);
}

#[test]
fn encode_molecule_is_deterministic_under_seed() {
    let input = MolInput::from_smiles("CC(=O)OC1=CC=CC=C1C(=O)O").unwrap();
    let (store, m) = model(7);
    let run = || {
        let mut t = Graph::new();
        let mut r = rng::stream(42, 5);
        let e = m.encode_molecule(&mut t, &store, &input, &mut GumbelNoise::Sample(&mut r)).unwrap();
        (t.value(e.z_g).clone(), t.value(e.z_i).clone())
    };
    assert_eq!(run(), run());
}

#[test]
fn encode_molecule_gradient_matches_finite_differences() {
    let input = MolInput::from_smiles("Cc1ccc(CCO)cc1").unwrap();
    let (store, m) = model(8);
    let ids: Vec<_> = m.structure_ids().into_iter().chain(m.image_ids()).collect();
    let err = param_gradient_error(&store, &ids, 29, |t, s| {
        let e = m.encode_molecule(t, s, &input, &mut GumbelNoise::Mean)?;
        let c = t.concat(&[e.z_g, e.z_i], 1)?;
        let c = t.tanh(c);
        Ok::<_, EncoderError>(t.sum(c))
    })
    .unwrap();
    assert!(err.worst < 1e-4 && err.kinks * 20 < err.checked, "{err:?}");
}
