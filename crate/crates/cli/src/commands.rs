//! The five CLI verbs as library functions returning their headline numbers.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use witness_core::baselines::{matched_features, run_scenario, ScenarioInput};
use witness_core::circuit::ShotMode;
use witness_core::datagen::archive::{load_dataset, save_dataset, DatasetManifest};
use witness_core::datagen::{build_dataset, engineered_features, DatasetSplit, LabeledState};
use witness_core::eval::{
    accuracy, ci_disjoint, pr_curve, read_metrics_csv, roc_auc, roc_curve, stratified_bootstrap_ci,
    write_csv, MetricsRow, ScoredPredictions,
};
use witness_core::learn::checkpoint::{save_checkpoint, write_history_csv};
use witness_core::learn::{train, MlpFitConfig, TrainConfig};

use crate::config::ExperimentConfig;
use crate::error::CliError;

type CliResult<T> = Result<T, CliError>;

fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn create_file(path: &Path) -> CliResult<fs::File> {
    fs::File::create(path).map_err(|e| CliError::io(path, e))
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> CliResult<()> {
    write_csv(create_file(path)?, rows)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(witness_core::WitnessError::from)?;
    fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

pub fn dataset_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.output_dir.join("dataset")
}

fn build(cfg: &ExperimentConfig) -> CliResult<DatasetSplit> {
    let shape = cfg.shape.to_shape()?;
    Ok(build_dataset(cfg.dataset.size, &shape, cfg.dataset.seed, &cfg.dataset.generation)?)
}

/// Builds the dataset and writes the three split archives plus `manifest.json`.
pub fn cmd_dataset(cfg: &ExperimentConfig) -> CliResult<DatasetManifest> {
    let ds = build(cfg)?;
    let dir = dataset_dir(cfg);
    ensure_dir(&dir)?;
    let manifest = save_dataset(&ds, &dir)?;
    log::info!(
        "dataset: {} states ({:?}) written to {}",
        ds.len(),
        manifest.label_counts,
        dir.display()
    );
    Ok(manifest)
}

/// Loads the archived dataset when it matches the config, otherwise builds and saves it.
pub fn ensure_dataset(cfg: &ExperimentConfig) -> CliResult<DatasetSplit> {
    let dir = dataset_dir(cfg);
    if dir.join("manifest.json").exists() {
        let ds = load_dataset(&dir)?;
        let shape = cfg.shape.to_shape()?;
        if ds.shape != shape || ds.seed != cfg.dataset.seed || ds.len() != cfg.dataset.size {
            return Err(CliError::Config(format!(
                "dataset in {} was built with a different shape, seed or size; choose another --out",
                dir.display()
            )));
        }
        log::info!("dataset: reusing {}", dir.display());
        return Ok(ds);
    }
    cmd_dataset(cfg)?;
    Ok(load_dataset(&dir)?)
}

fn labels(states: &[LabeledState]) -> Vec<u8> {
    states.iter().map(|s| s.label).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ScoreRow {
    label: u8,
    score: f64,
}

/// Writes scores, ROC and PR curves for one model and returns its metrics row.
fn export_model(
    dir: &Path,
    model: &str,
    experiment: &str,
    preds: &ScoredPredictions,
    cfg: &ExperimentConfig,
) -> CliResult<MetricsRow> {
    let ci = stratified_bootstrap_ci(
        preds,
        accuracy,
        cfg.evaluation.bootstrap_replicates,
        cfg.evaluation.confidence_level,
        cfg.evaluation.seed,
    )?;
    let row = MetricsRow {
        model: model.to_string(),
        experiment: experiment.to_string(),
        accuracy: accuracy(preds)?,
        ci_low: ci.low,
        ci_high: ci.high,
        auc: roc_auc(preds)?,
    };
    write_rows(&dir.join(format!("roc_{model}.csv")), &roc_curve(preds)?)?;
    write_rows(&dir.join(format!("pr_{model}.csv")), &pr_curve(preds)?)?;
    let scores: Vec<ScoreRow> =
        preds.labels.iter().zip(&preds.scores).map(|(&label, &score)| ScoreRow { label, score }).collect();
    write_rows(&dir.join(format!("scores_{model}.csv")), &scores)?;
    log::info!(
        "{experiment}/{model}: accuracy {:.4} [{:.4}, {:.4}], AUC {:.4}",
        row.accuracy,
        row.ci_low,
        row.ci_high,
        row.auc
    );
    Ok(row)
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub metrics: MetricsRow,
    pub epochs: usize,
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub predictions: ScoredPredictions,
}

fn eval_mode(cfg: &ExperimentConfig) -> ShotMode {
    if cfg.evaluation.analytic {
        ShotMode::Analytic
    } else {
        ShotMode::Sampled { shots: cfg.evaluation.shots, seed: cfg.evaluation.seed }
    }
}

fn train_and_export(
    cfg: &ExperimentConfig,
    ds: &DatasetSplit,
    training: &TrainConfig,
    dir: &Path,
    model: &str,
) -> CliResult<TrainReport> {
    ensure_dir(dir)?;
    let outcome = train(ds, training)?;
    save_checkpoint(dir, &outcome)?;
    write_history_csv(create_file(&dir.join("history.csv"))?, &outcome.history)?;
    let scores = outcome.model.scores(&ds.test, eval_mode(cfg))?;
    let preds = ScoredPredictions::from_logits(labels(&ds.test), scores)?;
    let metrics = export_model(dir, model, cfg.kind.name(), &preds, cfg)?;
    Ok(TrainReport {
        metrics,
        epochs: outcome.history.len(),
        best_epoch: outcome.best_epoch,
        stopped_early: outcome.stopped_early,
        predictions: preds,
    })
}

/// Trains the hybrid model and evaluates it on the test split.
pub fn cmd_train(cfg: &ExperimentConfig) -> CliResult<TrainReport> {
    let ds = ensure_dataset(cfg)?;
    let dir = cfg.output_dir.join("train");
    let report = train_and_export(cfg, &ds, &cfg.training, &dir, "hybrid")?;
    write_rows(&dir.join("metrics.csv"), std::slice::from_ref(&report.metrics))?;
    Ok(report)
}

/// Grid-search winner and fit diagnostics for one feature scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub scenario: String,
    pub c: f64,
    pub gamma: String,
    pub cv_accuracy: f64,
    pub svm_converged: bool,
    pub mlp_best_epoch: usize,
}

#[derive(Debug, Clone)]
pub struct BaselineReport {
    pub rows: Vec<MetricsRow>,
    pub selections: Vec<Selection>,
}

impl BaselineReport {
    pub fn row(&self, model: &str) -> Option<&MetricsRow> {
        self.rows.iter().find(|r| r.model == model)
    }
}

fn feature_rows(states: &[LabeledState]) -> CliResult<Vec<Vec<f64>>> {
    Ok(states.par_iter().map(engineered_features).collect::<Result<_, _>>()?)
}

/// SVM and MLP on engineered and on matched features.
pub fn cmd_baselines(cfg: &ExperimentConfig) -> CliResult<BaselineReport> {
    let ds = ensure_dataset(cfg)?;
    let shape = cfg.shape.to_shape()?;
    let dir = cfg.output_dir.join("baselines");
    ensure_dir(&dir)?;
    let grid = cfg.baselines.grid()?;
    let mut mlp = cfg.baselines.mlp.clone();
    if mlp.hidden.is_empty() {
        mlp = MlpFitConfig { hidden: witness_core::baselines::baseline_mlp_hidden(shape.num_modes), ..mlp };
    }
    let (ytr, yva, yte) = (labels(&ds.train), labels(&ds.validation), labels(&ds.test));
    let matched = |s: &[LabeledState]| {
        matched_features(s, &shape, cfg.training.num_layers, cfg.baselines.matched_init_std, cfg.baselines.seed)
    };
    let scenarios = [
        ("engineered", feature_rows(&ds.train)?, feature_rows(&ds.validation)?, feature_rows(&ds.test)?),
        ("matched", matched(&ds.train)?, matched(&ds.validation)?, matched(&ds.test)?),
    ];
    let mut rows = Vec::new();
    let mut selections = Vec::new();
    for (name, tr, va, te) in &scenarios {
        let input = ScenarioInput { train_x: tr, train_y: &ytr, val_x: va, val_y: &yva, test_x: te };
        let res = run_scenario(&input, &grid, cfg.baselines.cv_folds, &mlp, cfg.baselines.seed)?;
        write_rows(&dir.join(format!("cv_{name}.csv")), &res.grid.table)?;
        selections.push(Selection {
            scenario: name.to_string(),
            c: res.grid.best_c,
            gamma: res.grid.best_gamma.label(),
            cv_accuracy: res.grid.best_mean_accuracy,
            svm_converged: res.svm_converged,
            mlp_best_epoch: res.mlp_best_epoch,
        });
        for (model, scores) in [("svm", res.svm_scores), ("mlp", res.mlp_scores)] {
            let preds = ScoredPredictions::from_logits(yte.clone(), scores)?;
            rows.push(export_model(&dir, &format!("{model}_{name}"), cfg.kind.name(), &preds, cfg)?);
        }
    }
    write_json(&dir.join("selection.json"), &selections)?;
    write_rows(&dir.join("metrics.csv"), &rows)?;
    Ok(BaselineReport { rows, selections })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub model: String,
    pub loss_p: f64,
    pub accuracy: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub auc: f64,
}

impl SweepRow {
    fn from_metrics(loss_p: f64, m: &MetricsRow) -> Self {
        Self { model: m.model.clone(), loss_p, accuracy: m.accuracy, ci_low: m.ci_low, ci_high: m.ci_high, auc: m.auc }
    }
}

/// One training from scratch per loss level, plus noiseless baseline rows.
pub fn cmd_loss_sweep(cfg: &ExperimentConfig) -> CliResult<Vec<SweepRow>> {
    let ds = ensure_dataset(cfg)?;
    let dir = cfg.output_dir.join("loss_sweep");
    ensure_dir(&dir)?;
    let mut rows = Vec::new();
    let mut metrics = Vec::new();
    for &p in &cfg.loss_sweep.probabilities {
        let training = TrainConfig { loss_p: p, ..cfg.training.clone() };
        let tag = format!("loss_{p:.3}");
        let mut report = train_and_export(cfg, &ds, &training, &dir.join(&tag), "hybrid")?;
        report.metrics.model = format!("hybrid_{tag}");
        rows.push(SweepRow { model: "hybrid".into(), ..SweepRow::from_metrics(p, &report.metrics) });
        metrics.push(report.metrics);
    }
    let baselines = cmd_baselines(cfg)?;
    for m in &baselines.rows {
        rows.push(SweepRow::from_metrics(0.0, m));
    }
    write_rows(&dir.join("sweep.csv"), &rows)?;
    write_rows(&dir.join("metrics.csv"), &metrics)?;
    Ok(rows)
}

/// Accuracy may only rise with loss where the two intervals overlap.
pub fn degrades_gracefully(rows: &[SweepRow]) -> bool {
    let mut hybrid: Vec<&SweepRow> = rows.iter().filter(|r| r.model == "hybrid").collect();
    hybrid.sort_by(|a, b| a.loss_p.total_cmp(&b.loss_p));
    hybrid.iter().enumerate().all(|(i, lo)| {
        hybrid[i + 1..]
            .iter()
            .all(|hi| hi.accuracy <= lo.accuracy || !ci_disjoint((lo.ci_low, lo.ci_high), (hi.ci_low, hi.ci_high)))
    })
}

fn collect_metrics(dir: &Path, out: &mut Vec<PathBuf>) -> CliResult<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| CliError::io(dir, err)))
        .collect::<Result<_, _>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_metrics(&p, out)?;
        } else if p.file_name().is_some_and(|n| n == "metrics.csv") {
            out.push(p);
        }
    }
    Ok(())
}

/// Gathers every `metrics.csv` below `root` into `root/summary.csv` and a text table.
pub fn cmd_report(root: &Path) -> CliResult<(Vec<MetricsRow>, String)> {
    let mut files = Vec::new();
    collect_metrics(root, &mut files)?;
    if files.is_empty() {
        return Err(CliError::Config(format!("no metrics.csv files below {}", root.display())));
    }
    let mut rows = Vec::new();
    for f in &files {
        rows.extend(read_metrics_csv(fs::File::open(f).map_err(|e| CliError::io(f, e))?)?);
    }
    rows.sort_by(|a, b| (&a.experiment, &a.model).cmp(&(&b.experiment, &b.model)));
    rows.dedup();
    write_rows(&root.join("summary.csv"), &rows)?;
    Ok((rows.clone(), format_summary(&rows)))
}

pub fn format_summary(rows: &[MetricsRow]) -> String {
    let mut s = format!("{:<14} {:<22} {:>9} {:>19} {:>7}\n", "experiment", "model", "acc (%)", "95% CI (%)", "AUC");
    for r in rows {
        s += &format!(
            "{:<14} {:<22} {:>9.2} {:>19} {:>7.4}\n",
            r.experiment,
            r.model,
            100.0 * r.accuracy,
            format!("[{:.2}, {:.2}]", 100.0 * r.ci_low, 100.0 * r.ci_high),
            r.auc
        );
    }
    s
}

/// Caps the global worker pool; only the first call has an effect.
pub fn configure_threads(threads: usize) {
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
        log::warn!("thread pool already initialised: {e}");
    }
}
