use distrans_core::disdat::{fusion_weights, jsd_scale, MiReport};
use distrans_core::harness::{auroc, generate_benchmark, pair_label, split};
use distrans_core::molgraph::{fragment, parse_smiles, to_smiles_with_order};
use distrans_core::{Graph, Tensor};
use proptest::prelude::*;

fn benchmark_smiles(seed: u64, shift: f64) -> Vec<String> {
    let b = generate_benchmark(seed, shift, 200).unwrap();
    b.source
        .molecules
        .iter()
        .chain(&b.target.molecules)
        .map(|m| m.smiles.clone())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn partition_is_disjoint_and_covering(seed in 0u64..10_000, shift in 0.0f64..=1.0) {
        for s in benchmark_smiles(seed, shift) {
            let g = parse_smiles(&s).unwrap();
            let p = fragment(&g);
            let member = p.membership(g.atom_count());
            let mut seen = vec![0usize; g.atom_count()];
            for grp in &p.groups {
                prop_assert!(!grp.is_empty());
                for &a in grp {
                    seen[a] += 1;
                }
            }
            prop_assert!(seen.iter().all(|&c| c == 1), "{}", s);
            for (k, b) in g.bonds().iter().enumerate() {
                let cut = p.broken_bonds.contains(&k);
                prop_assert_eq!(cut, member[b.a] != member[b.b], "{}", s);
                prop_assert!(!(cut && b.ring), "{}", s);
            }
        }
    }

    #[test]
    fn generated_smiles_round_trip(seed in 0u64..10_000, shift in 0.0f64..=1.0) {
        for s in benchmark_smiles(seed, shift) {
            let g = parse_smiles(&s).unwrap();
            let (out, order) = to_smiles_with_order(&g);
            let h = parse_smiles(&out).unwrap();
            prop_assert_eq!(h.atom_count(), g.atom_count());
            prop_assert_eq!(h.ring_count(), g.ring_count());
            let mut e1: Vec<_> = g.bonds().iter().map(|b| (b.a.min(b.b), b.a.max(b.b), b.order)).collect();
            let mut e2: Vec<_> = h
                .bonds()
                .iter()
                .map(|b| {
                    let (x, y) = (order[b.a], order[b.b]);
                    (x.min(y), x.max(y), b.order)
                })
                .collect();
            e1.sort();
            e2.sort();
            prop_assert_eq!(e1, e2);
        }
    }

    #[test]
    fn benchmark_labels_and_splits_are_consistent(seed in 0u64..10_000, n in 200usize..400, frac in 0.05f64..0.95) {
        let b = generate_benchmark(seed, 1.0, n).unwrap();
        for d in [&b.source, &b.target] {
            prop_assert_eq!(d.pairs.len(), n);
            let pos = d.pairs.iter().filter(|p| p.label == 1).count();
            prop_assert_eq!(pos, n.div_ceil(2));
            for p in &d.pairs {
                prop_assert_eq!(p.label, pair_label(&d.molecules[p.i], &d.molecules[p.j]));
            }
        }
        let s = split(&b, frac, seed).unwrap();
        prop_assert_eq!(s.target_adapt.len() + s.target_test.len(), n);
        let mut t: Vec<usize> = s.target_adapt.iter().chain(&s.target_test).copied().collect();
        t.sort_unstable();
        t.dedup();
        prop_assert_eq!(t.len(), n);
    }

    #[test]
    fn fusion_weights_are_a_distribution(g in -10.0f64..10.0, ig in -10.0f64..10.0) {
        let (wg, wi) = fusion_weights(&MiReport::from_bits(g, ig));
        prop_assert!(wg >= 0.0 && wi >= 0.0);
        prop_assert!((wg + wi - 1.0).abs() < 1e-12);
        if g > 0.0 && ig > 0.0 {
            prop_assert!((wg - g / (g + ig)).abs() < 1e-12);
        }
    }

    #[test]
    fn jsd_is_bounded_and_symmetric(
        a in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 1..60),
        b in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 1..60),
    ) {
        let ab = jsd_scale(&a, &b).unwrap();
        let ba = jsd_scale(&b, &a).unwrap();
        prop_assert!(ab >= 0.0 && ab <= 2.0 * std::f64::consts::LN_2 + 1e-12);
        prop_assert!((ab - ba).abs() < 1e-12);
    }

    #[test]
    fn auroc_is_rank_invariant(scores in prop::collection::vec(0.0f64..1.0, 2..80), seed in any::<u64>()) {
        let labels: Vec<u8> = (0..scores.len()).map(|k| ((seed >> (k % 64)) & 1) as u8).collect();
        let a = auroc(&scores, &labels);
        let warped: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 7.0).collect();
        let b = auroc(&warped, &labels);
        if a.is_nan() {
            prop_assert!(b.is_nan());
        } else {
            prop_assert!((0.0..=1.0).contains(&a));
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn reversal_is_identity_forward_and_scales_backward(
        x in prop::collection::vec(-3.0f64..3.0, 1..10),
        phi in 0.0f64..4.0,
    ) {
        let mut tape = Graph::new();
        let v = tape.constant(Tensor::vector(x.clone()));
        let r = tape.grad_reverse(v, phi).unwrap();
        let sq = tape.mul(r, r).unwrap();
        let loss = tape.sum(sq);
        prop_assert_eq!(tape.value(r).data(), &x[..]);
        tape.backward(loss).unwrap();
        for (gk, xk) in tape.grad(v).iter().zip(&x) {
            prop_assert_eq!(*gk, -phi * 2.0 * xk);
        }
    }
}
