use distrans_core::harness::{generate_benchmark, pretrain, split, Prepared, TrainConfig, TransferMode};

/// Source pretraining at the default rate: over the first five epochs,
/// averaged over three seeds, the loss never rises by more than 5%.
#[test]
fn source_pretraining_loss_falls_over_first_epochs() {
    let cfg = TrainConfig {
        pretrain_epochs: 5,
        batch: 16,
        ..TrainConfig::default()
    };
    let mut mean = [0.0; 5];
    for seed in 0..3 {
        let bench = generate_benchmark(seed, 0.5, 300).unwrap();
        let prep = Prepared::new(&bench).unwrap();
        let splits = split(&bench, 0.5, seed).unwrap();
        let pre = pretrain(&bench, &prep, &splits, &cfg, TransferMode::DisTrans, seed).unwrap();
        assert_eq!(pre.log.epoch_loss.len(), 5);
        for (m, l) in mean.iter_mut().zip(&pre.log.epoch_loss) {
            assert!(l.is_finite());
            *m += l / 3.0;
        }
    }
    for w in mean.windows(2) {
        assert!(w[1] <= w[0] * 1.05, "{mean:?}");
    }
    assert!(mean[4] < mean[0], "{mean:?}");
}
