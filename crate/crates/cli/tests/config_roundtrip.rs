use std::path::{Path, PathBuf};

use proptest::prelude::*;
use witness_cli::config::{GammaSetting, MAX_SEED};
use witness_cli::{ExperimentConfig, ExperimentKind};

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn checked_in_presets_equal_builtin_presets() {
    for kind in [ExperimentKind::TwoMode, ExperimentKind::ThreeMode, ExperimentKind::LossSweep] {
        let loaded = ExperimentConfig::load(&configs_dir().join(format!("{}.toml", kind.name()))).unwrap();
        assert_eq!(loaded, ExperimentConfig::preset(kind), "{}", kind.name());
    }
}

fn kind() -> impl Strategy<Value = ExperimentKind> {
    prop_oneof![
        Just(ExperimentKind::TwoMode),
        Just(ExperimentKind::ThreeMode),
        Just(ExperimentKind::LossSweep),
        Just(ExperimentKind::DatasetOnly),
        Just(ExperimentKind::BaselineOnly),
    ]
}

fn gamma() -> impl Strategy<Value = GammaSetting> {
    prop_oneof![
        (1e-6f64..10.0).prop_map(GammaSetting::Value),
        Just(GammaSetting::Named("scale".into())),
        Just(GammaSetting::Named("auto".into())),
    ]
}

prop_compose! {
    fn config()(
        kind in kind(),
        size in 20usize..5000,
        seeds in proptest::array::uniform5(0..=MAX_SEED),
        layers in 1usize..5,
        lr in 1e-5f64..1e-1,
        dropout in 0.0f64..0.5,
        shots in 1u32..100_000,
        training_shots in proptest::option::of(1u32..5000),
        analytic in any::<bool>(),
        cs in proptest::collection::vec(1e-3f64..1e3, 1..5),
        gammas in proptest::collection::vec(gamma(), 1..6),
        losses in proptest::collection::vec(0.0f64..0.99, 1..8),
        hidden in proptest::collection::vec(1usize..256, 0..4),
        max_werner in 0.0f64..0.5,
        out in "[a-z]{1,8}(/[a-z0-9_]{1,8}){0,2}",
    ) -> ExperimentConfig {
        let mut c = ExperimentConfig::preset(kind);
        c.output_dir = PathBuf::from(out);
        c.dataset.size = size;
        c.dataset.seed = seeds[0];
        c.dataset.generation.max_werner_p = max_werner;
        c.training.seed = seeds[1];
        c.training.num_layers = layers;
        c.training.adam.lr = lr;
        c.training.dropout = dropout;
        c.training.training_shots = training_shots;
        c.training.head_hidden = hidden.clone();
        c.evaluation.seed = seeds[2];
        c.evaluation.shots = shots;
        c.evaluation.analytic = analytic;
        c.baselines.seed = seeds[3];
        c.baselines.mlp.seed = seeds[4];
        c.baselines.mlp.hidden = hidden;
        c.baselines.svm_c = cs;
        c.baselines.svm_gamma = gammas;
        c.loss_sweep.probabilities = losses;
        c
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn parse_serialize_parse_is_identity(cfg in config()) {
        let text = cfg.to_toml_string().unwrap();
        let parsed = ExperimentConfig::from_toml_str(&text).unwrap();
        prop_assert_eq!(&parsed, &cfg);
        let again = ExperimentConfig::from_toml_str(&parsed.to_toml_string().unwrap()).unwrap();
        prop_assert_eq!(again, parsed);
    }
}
