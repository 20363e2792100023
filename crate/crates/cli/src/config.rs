//! Experiment configuration: TOML files layered over a per-kind preset.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use witness_core::baselines::{GammaSpec, SvmGrid};
use witness_core::datagen::GenerationSettings;
use witness_core::fock::ModeShape;
use witness_core::learn::{MlpFitConfig, TrainConfig};

use crate::error::CliError;

pub const MAX_SEED: u64 = i64::MAX as u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    TwoMode,
    ThreeMode,
    LossSweep,
    DatasetOnly,
    BaselineOnly,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::TwoMode => "two_mode",
            ExperimentKind::ThreeMode => "three_mode",
            ExperimentKind::LossSweep => "loss_sweep",
            ExperimentKind::DatasetOnly => "dataset_only",
            ExperimentKind::BaselineOnly => "baseline_only",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShapeConfig {
    pub num_modes: usize,
    pub cutoff: usize,
}

impl ShapeConfig {
    pub fn to_shape(&self) -> Result<ModeShape, CliError> {
        ModeShape::new(self.num_modes, self.cutoff).map_err(|e| CliError::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    /// Total number of states before the train/validation/test split.
    pub size: usize,
    pub seed: u64,
    pub generation: GenerationSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationConfig {
    /// Shots per readout setting on the test set.
    pub shots: u32,
    /// Exact probabilities instead of sampled frequencies.
    pub analytic: bool,
    pub bootstrap_replicates: usize,
    pub confidence_level: f64,
    pub seed: u64,
}

/// Kernel width entry: a number, `"scale"` or `"auto"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GammaSetting {
    Value(f64),
    Named(String),
}

impl GammaSetting {
    pub fn to_spec(&self) -> Result<GammaSpec, CliError> {
        match self {
            GammaSetting::Value(v) if *v > 0.0 && v.is_finite() => Ok(GammaSpec::Value(*v)),
            GammaSetting::Value(v) => Err(CliError::Config(format!("gamma {v} must be positive"))),
            GammaSetting::Named(s) if s == "scale" => Ok(GammaSpec::Scale),
            GammaSetting::Named(s) if s == "auto" => Ok(GammaSpec::Auto),
            GammaSetting::Named(s) => {
                Err(CliError::Config(format!("unknown gamma '{s}', expected a number, \"scale\" or \"auto\"")))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub svm_c: Vec<f64>,
    pub svm_gamma: Vec<GammaSetting>,
    pub cv_folds: usize,
    pub seed: u64,
    /// Parameter spread of the fixed random circuit behind the matched features.
    pub matched_init_std: f64,
    pub mlp: MlpFitConfig,
}

impl BaselineConfig {
    pub fn grid(&self) -> Result<SvmGrid, CliError> {
        if self.svm_c.is_empty() || self.svm_gamma.is_empty() {
            return Err(CliError::Config("SVM grid needs at least one C and one gamma".into()));
        }
        if let Some(c) = self.svm_c.iter().find(|c| !(**c > 0.0 && c.is_finite())) {
            return Err(CliError::Config(format!("SVM C {c} must be positive")));
        }
        Ok(SvmGrid {
            cs: self.svm_c.clone(),
            gammas: self.svm_gamma.iter().map(GammaSetting::to_spec).collect::<Result<_, _>>()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossSweepConfig {
    /// Per-layer photon-loss probabilities, one full training each.
    pub probabilities: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub output_dir: PathBuf,
    pub shape: ShapeConfig,
    pub dataset: DatasetConfig,
    pub training: TrainConfig,
    pub evaluation: EvaluationConfig,
    pub baselines: BaselineConfig,
    pub loss_sweep: LossSweepConfig,
}

impl ExperimentConfig {
    /// Defaults for `kind`: two modes at cutoff 4, or three modes at cutoff 3.
    pub fn preset(kind: ExperimentKind) -> Self {
        let three = matches!(kind, ExperimentKind::ThreeMode | ExperimentKind::LossSweep);
        let (num_modes, cutoff) = if three { (3, 3) } else { (2, 4) };
        let grid = SvmGrid::default();
        ExperimentConfig {
            kind,
            output_dir: PathBuf::from("runs").join(kind.name()),
            shape: ShapeConfig { num_modes, cutoff },
            dataset: DatasetConfig { size: 2000, seed: 7, generation: GenerationSettings::default() },
            training: TrainConfig { seed: 11, ..TrainConfig::default() },
            evaluation: EvaluationConfig {
                shots: 1000,
                analytic: false,
                bootstrap_replicates: 1000,
                confidence_level: 0.95,
                seed: 13,
            },
            baselines: BaselineConfig {
                svm_c: grid.cs,
                svm_gamma: grid
                    .gammas
                    .iter()
                    .map(|g| match g {
                        GammaSpec::Value(v) => GammaSetting::Value(*v),
                        other => GammaSetting::Named(other.label()),
                    })
                    .collect(),
                cv_folds: 5,
                seed: 17,
                matched_init_std: 0.1,
                mlp: MlpFitConfig {
                    hidden: witness_core::baselines::baseline_mlp_hidden(num_modes),
                    seed: 19,
                    ..MlpFitConfig::default()
                },
            },
            loss_sweep: LossSweepConfig { probabilities: vec![0.0, 0.02, 0.05, 0.10, 0.15] },
        }
    }

    /// Parses TOML; keys left out take the preset of the file's `kind` (default `two_mode`).
    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        let user: toml::Table = text.parse().map_err(|e| CliError::Config(format!("invalid TOML: {e}")))?;
        let kind = match user.get("kind") {
            None => ExperimentKind::TwoMode,
            Some(v) => v
                .clone()
                .try_into()
                .map_err(|e| CliError::Config(format!("invalid kind: {e}")))?,
        };
        let mut merged = toml::Table::try_from(Self::preset(kind)).map_err(|e| CliError::Config(e.to_string()))?;
        merge(&mut merged, user);
        let cfg: Self = toml::Value::Table(merged)
            .try_into()
            .map_err(|e| CliError::Config(format!("invalid configuration: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String, CliError> {
        self.check_seeds()?;
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Seeds must fit TOML's signed 64-bit integers.
    fn check_seeds(&self) -> Result<(), CliError> {
        let seeds = [
            ("dataset.seed", self.dataset.seed),
            ("training.seed", self.training.seed),
            ("evaluation.seed", self.evaluation.seed),
            ("baselines.seed", self.baselines.seed),
            ("baselines.mlp.seed", self.baselines.mlp.seed),
        ];
        match seeds.iter().find(|(_, s)| *s > MAX_SEED) {
            Some((name, s)) => Err(CliError::Config(format!("{name} = {s} exceeds the maximum seed {MAX_SEED}"))),
            None => Ok(()),
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let cfg_err = |m: String| Err(CliError::Config(m));
        self.check_seeds()?;
        let shape = self.shape.to_shape()?;
        if shape.num_modes < 2 {
            return cfg_err("entanglement needs at least two modes".into());
        }
        if self.dataset.size < 20 {
            return cfg_err(format!("dataset.size {} is below the minimum of 20", self.dataset.size));
        }
        self.dataset
            .generation
            .resolved_weights(shape.num_modes)
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.training.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.evaluation.shots == 0 {
            return cfg_err("evaluation.shots must be positive".into());
        }
        if self.evaluation.bootstrap_replicates == 0 {
            return cfg_err("evaluation.bootstrap_replicates must be positive".into());
        }
        if !(self.evaluation.confidence_level > 0.0 && self.evaluation.confidence_level < 1.0) {
            return cfg_err("evaluation.confidence_level must lie in (0, 1)".into());
        }
        self.baselines.grid()?;
        if self.baselines.cv_folds < 2 {
            return cfg_err("baselines.cv_folds must be at least 2".into());
        }
        if self.baselines.mlp.batch_size == 0 {
            return cfg_err("baselines.mlp.batch_size must be positive".into());
        }
        if self.loss_sweep.probabilities.is_empty() {
            return cfg_err("loss_sweep.probabilities is empty".into());
        }
        if let Some(p) = self.loss_sweep.probabilities.iter().find(|p| !(0.0..1.0).contains(*p)) {
            return cfg_err(format!("loss probability {p} outside [0, 1)"));
        }
        Ok(())
    }

    /// Applies one seed to every random stream.
    pub fn override_seed(&mut self, seed: u64) {
        self.dataset.seed = seed;
        self.training.seed = seed;
        self.evaluation.seed = seed;
        self.baselines.seed = seed;
        self.baselines.mlp.seed = seed;
    }
}

fn merge(base: &mut toml::Table, user: toml::Table) {
    for (k, v) in user {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(u)) => merge(b, u),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
