use witness_core::circuit::ShotMode;
use witness_core::datagen::archive::save_dataset;
use witness_core::datagen::{build_dataset, GenerationSettings};
use witness_core::eval::{accuracy, stratified_bootstrap_ci, ScoredPredictions};
use witness_core::fock::ModeShape;
use witness_core::learn::{train, TrainConfig};

fn small_config() -> TrainConfig {
    TrainConfig { max_epochs: 3, head_hidden: vec![16], seed: 4, ..TrainConfig::default() }
}

#[test]
fn dataset_archive_is_byte_identical_across_builds() {
    let shape = ModeShape::new(2, 3).unwrap();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let ds = build_dataset(120, &shape, 21, &GenerationSettings::default()).unwrap();
        save_dataset(&ds, d.path()).unwrap();
    }
    for f in ["train.bin", "validation.bin", "test.bin", "manifest.json"] {
        let a = std::fs::read(dirs[0].path().join(f)).unwrap();
        let b = std::fs::read(dirs[1].path().join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
}

#[test]
fn analytic_training_is_bit_reproducible() {
    let shape = ModeShape::new(2, 3).unwrap();
    let ds = build_dataset(80, &shape, 3, &GenerationSettings::default()).unwrap();
    let a = train(&ds, &small_config()).unwrap();
    let b = train(&ds, &small_config()).unwrap();
    assert_eq!(a.model.flat_params(), b.model.flat_params());
    assert_eq!(a.history, b.history);
    let sa = a.model.scores(&ds.test, ShotMode::Analytic).unwrap();
    assert_eq!(sa, b.model.scores(&ds.test, ShotMode::Analytic).unwrap());
    let sampled = ShotMode::Sampled { shots: 1000, seed: 8 };
    assert_eq!(a.model.scores(&ds.test, sampled).unwrap(), b.model.scores(&ds.test, sampled).unwrap());
}

#[test]
fn different_seeds_change_the_model() {
    let shape = ModeShape::new(2, 3).unwrap();
    let ds = build_dataset(80, &shape, 3, &GenerationSettings::default()).unwrap();
    let a = train(&ds, &small_config()).unwrap();
    let b = train(&ds, &TrainConfig { seed: 5, ..small_config() }).unwrap();
    assert_ne!(a.model.flat_params(), b.model.flat_params());
}

#[test]
fn bootstrap_is_bit_reproducible() {
    let labels: Vec<u8> = (0..50).map(|i| (i % 2) as u8).collect();
    let scores: Vec<f64> = (0..50).map(|i| ((i * 37 % 11) as f64 - 4.0) / 3.0).collect();
    let p = ScoredPredictions::from_logits(labels, scores).unwrap();
    let a = stratified_bootstrap_ci(&p, accuracy, 1000, 0.95, 9).unwrap();
    let b = stratified_bootstrap_ci(&p, accuracy, 1000, 0.95, 9).unwrap();
    assert_eq!(a.distribution, b.distribution);
    assert_eq!((a.low, a.high), (b.low, b.high));
}
