//! Classical comparison models: RBF SVM with cross-validated grid search and a
//! standalone network, on engineered or matched (fixed-circuit) features.

pub mod svm;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use svm::{
    distance_matrix, rbf_kernel, smo_solve, svm_predict, svm_train, svm_train_with_distances,
    DualSolution, GammaSpec, SvmModel,
};

use crate::circuit::{default_settings, CircuitParams, CompiledCircuit, ShotMode, finalize_features};
use crate::datagen::LabeledState;
use crate::error::{Result, WitnessError};
use crate::fock::ModeShape;
use crate::gates::DEFAULT_AMPLITUDE_LIMIT;
use crate::learn::{fit_mlp, MlpFit, MlpFitConfig};
use crate::rng::{self, tags};

/// Per-feature standardization fitted on one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardScaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl StandardScaler {
    /// Population mean and standard deviation; constant features keep scale 1.
    pub fn fit(x: &[Vec<f64>]) -> Result<Self> {
        let nf = x.first().map(|r| r.len()).ok_or_else(|| WitnessError::Usage("cannot fit a scaler on no rows".into()))?;
        let n = x.len() as f64;
        let mut mean = vec![0.0; nf];
        for row in x {
            if row.len() != nf {
                return Err(WitnessError::Shape("ragged feature matrix".into()));
            }
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; nf];
        for row in x {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 { sd } else { 1.0 }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn transform(&self, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
        x.iter()
            .map(|row| row.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| (v - m) / s).collect())
            .collect()
    }
}

/// Assigns each sample to one of `k` folds, stratified by label.
pub fn stratified_folds(y: &[u8], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(WitnessError::Usage(format!("need at least 2 folds, got {k}")));
    }
    if y.len() < k {
        return Err(WitnessError::Usage("fewer samples than folds".into()));
    }
    let mut assignment = vec![0; y.len()];
    let mut position = 0;
    for class in [0u8, 1] {
        let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        idx.shuffle(&mut rng::stream(seed, &[tags::FOLDS, u64::from(class)]));
        for i in idx {
            assignment[i] = position % k;
            position += 1;
        }
    }
    Ok(assignment)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmGrid {
    pub cs: Vec<f64>,
    pub gammas: Vec<GammaSpec>,
}

impl Default for SvmGrid {
    fn default() -> Self {
        Self {
            cs: vec![1.0, 10.0, 100.0],
            gammas: vec![
                GammaSpec::Value(1e-3),
                GammaSpec::Value(1e-2),
                GammaSpec::Value(1e-1),
                GammaSpec::Scale,
                GammaSpec::Auto,
            ],
        }
    }
}

/// One row of the cross-validation table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    #[serde(rename = "C")]
    pub c: f64,
    pub gamma: String,
    pub fold: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub best_c: f64,
    pub best_gamma: GammaSpec,
    pub best_mean_accuracy: f64,
    pub table: Vec<CvRow>,
}

/// Stratified k-fold grid search; ties go to the smaller `C`, then the smaller kernel width.
pub fn grid_search_cv(
    x: &[Vec<f64>],
    y: &[u8],
    grid: &SvmGrid,
    folds: usize,
    seed: u64,
) -> Result<GridSearchResult> {
    if grid.cs.is_empty() || grid.gammas.is_empty() {
        return Err(WitnessError::Usage("empty hyperparameter grid".into()));
    }
    let assignment = stratified_folds(y, folds, seed)?;
    let dist = &distance_matrix(x);
    let n = x.len();
    let cells: Vec<(f64, GammaSpec)> =
        grid.cs.iter().flat_map(|&c| grid.gammas.iter().map(move |&g| (c, g))).collect();
    let jobs: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..folds).map(move |f| (c, f))).collect();
    let table: Vec<CvRow> = jobs
        .par_iter()
        .map(|&(ci, f)| {
            let (c, gspec) = cells[ci];
            let tr: Vec<usize> = (0..n).filter(|&i| assignment[i] != f).collect();
            let te: Vec<usize> = (0..n).filter(|&i| assignment[i] == f).collect();
            let xtr: Vec<Vec<f64>> = tr.iter().map(|&i| x[i].clone()).collect();
            let ytr: Vec<u8> = tr.iter().map(|&i| y[i]).collect();
            let g = gspec.resolve(&xtr)?;
            let sub: Vec<f64> = tr.iter().flat_map(|&i| tr.iter().map(move |&j| dist[i * n + j])).collect();
            let model = svm_train_with_distances(&xtr, &ytr, &sub, c, g)?;
            let correct = te.iter().filter(|&&i| u8::from(model.decision(&x[i]) > 0.0) == y[i]).count();
            Ok(CvRow { c, gamma: gspec.label(), fold: f, accuracy: correct as f64 / te.len() as f64 })
        })
        .collect::<Result<_>>()?;
    let mut best: Option<(f64, f64, f64, GammaSpec)> = None;
    for (ci, &(c, gspec)) in cells.iter().enumerate() {
        let mean = table[ci * folds..(ci + 1) * folds].iter().map(|r| r.accuracy).sum::<f64>() / folds as f64;
        let width = gspec.resolve(x)?;
        let better = match best {
            None => true,
            Some((bm, bc, bw, _)) => {
                mean > bm || (mean == bm && (c < bc || (c == bc && width < bw)))
            }
        };
        if better {
            best = Some((mean, c, width, gspec));
        }
    }
    let (best_mean_accuracy, best_c, _, best_gamma) = best.unwrap();
    Ok(GridSearchResult { best_c, best_gamma, best_mean_accuracy, table })
}

/// Network sizes for the standalone baseline by mode count.
pub fn baseline_mlp_hidden(num_modes: usize) -> Vec<usize> {
    if num_modes >= 3 {
        vec![128, 64]
    } else {
        vec![64, 32]
    }
}

pub fn baseline_mlp_train(
    x: &[Vec<f64>],
    y: &[u8],
    val_x: &[Vec<f64>],
    val_y: &[u8],
    cfg: &MlpFitConfig,
) -> Result<MlpFit> {
    fit_mlp(x, y, val_x, val_y, cfg)
}

/// Readout probabilities of a fixed circuit with `Normal(0, init_std)` parameters.
pub fn matched_features(
    states: &[LabeledState],
    shape: &ModeShape,
    num_layers: usize,
    init_std: f64,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let params = CircuitParams::random_normal(*shape, num_layers, init_std, &mut rng::stream(seed, &[tags::INIT_QUANTUM]))?;
    let compiled = CompiledCircuit::new(&params, &default_settings(shape)?, 0.0, DEFAULT_AMPLITUDE_LIMIT)?;
    let block = shape.total_dim();
    states
        .par_iter()
        .map(|s| {
            if s.rho.shape() != *shape {
                return Err(WitnessError::Shape("state shape differs from circuit shape".into()));
            }
            let (probs, _) = compiled.probabilities(s.rho.matrix());
            Ok(finalize_features(probs, block, ShotMode::Analytic)?.values)
        })
        .collect()
}

/// Test-set scores of both baselines on one feature scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub grid: GridSearchResult,
    pub svm_scores: Vec<f64>,
    pub svm_converged: bool,
    pub mlp_scores: Vec<f64>,
    pub mlp_best_epoch: usize,
}

pub struct ScenarioInput<'a> {
    pub train_x: &'a [Vec<f64>],
    pub train_y: &'a [u8],
    pub val_x: &'a [Vec<f64>],
    pub val_y: &'a [u8],
    pub test_x: &'a [Vec<f64>],
}

/// Standardizes on the train split, grid-searches the SVM, fits the network.
pub fn run_scenario(
    input: &ScenarioInput<'_>,
    grid: &SvmGrid,
    folds: usize,
    mlp: &MlpFitConfig,
    seed: u64,
) -> Result<ScenarioResult> {
    let scaler = StandardScaler::fit(input.train_x)?;
    let tr = scaler.transform(input.train_x);
    let va = scaler.transform(input.val_x);
    let te = scaler.transform(input.test_x);
    let search = grid_search_cv(&tr, input.train_y, grid, folds, seed)?;
    let model = svm_train(&tr, input.train_y, search.best_c, search.best_gamma)?;
    let (svm_scores, _) = svm_predict(&model, &te);
    let fit = baseline_mlp_train(&tr, input.train_y, &va, input.val_y, mlp)?;
    let mlp_scores = te.iter().map(|r| fit.params.predict(r)).collect::<Result<_>>()?;
    Ok(ScenarioResult {
        grid: search,
        svm_scores,
        svm_converged: model.converged,
        mlp_scores,
        mlp_best_epoch: fit.best_epoch,
    })
}
