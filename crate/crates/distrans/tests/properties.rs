use distrans::config::{parse_config, RunConfig, LAMBDA_GRID, LR_GRID};
use distrans::formats::{decode_checkpoint, encode_checkpoint, Record};
use distrans_core::harness::TransferMode;
use proptest::prelude::*;

fn record() -> impl Strategy<Value = Record> {
    ("[a-z_.]{1,12}", prop::collection::vec(1usize..4, 0..3)).prop_flat_map(|(name, shape)| {
        let n = shape.iter().product::<usize>();
        prop::collection::vec(any::<f64>(), n).prop_map(move |values| Record {
            name: name.clone(),
            shape: shape.clone(),
            values,
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn checkpoints_round_trip_bit_exactly(recs in prop::collection::vec(record(), 0..5)) {
        let back = decode_checkpoint(&encode_checkpoint(&recs)).unwrap();
        prop_assert_eq!(back.len(), recs.len());
        for (a, b) in recs.iter().zip(&back) {
            prop_assert_eq!(&a.name, &b.name);
            prop_assert_eq!(&a.shape, &b.shape);
            let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(&a.values), bits(&b.values));
        }
    }

    #[test]
    fn truncated_checkpoints_are_rejected(recs in prop::collection::vec(record(), 1..4), cut in 0.0f64..1.0) {
        let bytes = encode_checkpoint(&recs);
        let k = ((bytes.len() - 1) as f64 * cut) as usize;
        prop_assert!(decode_checkpoint(&bytes[..k]).is_err());
    }

    #[test]
    fn config_text_round_trips(
        mode in 0usize..7,
        seed in any::<u64>(),
        shift in 0.0f64..=1.0,
        frac in 0usize..3,
        lr in 0usize..4,
        lg in 0usize..5,
        li in 0usize..5,
        gamma in 0.0f64..=1.0,
        tau in 0.01f64..100.0,
        batch in 1usize..512,
    ) {
        let c = RunConfig {
            mode: TransferMode::ALL[mode],
            seed,
            shift_level: shift,
            target_fraction: [0.3, 0.5, 0.7][frac],
            lr: LR_GRID[lr],
            lambda_g: LAMBDA_GRID[lg],
            lambda_i: LAMBDA_GRID[li],
            gamma,
            tau,
            batch,
            ..RunConfig::default()
        };
        prop_assert_eq!(parse_config(&c.to_text(), "p").unwrap(), c);
    }

    #[test]
    fn off_grid_rates_need_free_lr(lr in 1e-6f64..1.0) {
        prop_assume!(!LR_GRID.contains(&lr));
        let e = parse_config(&format!("lr = {lr}\n"), "p").unwrap_err();
        prop_assert_eq!(e.key.as_str(), "lr");
        let free = parse_config(&format!("lr = {lr}\nfree_lr = true\n"), "p");
        prop_assert!(free.is_ok());
    }
}
