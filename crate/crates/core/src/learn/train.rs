//! Hybrid model and the minibatch training loops.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, AdamState};
use super::mlp::{DropoutMasks, MlpParams};
use super::qgrad::{
    adjoint_gradient, estimator_plan, forward_tape, rerun_gradient, rerun_partial, Estimator,
};
use super::{bce_grad, bce_with_logits, total_loss};
use crate::circuit::{
    default_settings, finalize_features, AncillaMap, CircuitParams, CompiledCircuit,
    MeasurementSetting, ShotMode,
};
use crate::datagen::{DatasetSplit, LabeledState};
use crate::error::{Result, WitnessError};
use crate::fock::{CMatrix, ModeShape};
use crate::gates::DEFAULT_AMPLITUDE_LIMIT;
use crate::rng::{self, tags};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GradientMethod {
    /// Observable pulled back through the circuit; one local derivative per parameter.
    #[default]
    Adjoint,
    /// Feature map and head rerun at every shifted parameter.
    Rerun,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub num_layers: usize,
    pub head_hidden: Vec<usize>,
    pub dropout: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub gamma: f64,
    pub fd_epsilon: f64,
    pub shift_rule: bool,
    pub gradient_method: GradientMethod,
    /// Finite-shot features during training; `None` trains on exact probabilities.
    pub training_shots: Option<u32>,
    pub loss_p: f64,
    pub ancillas: usize,
    pub init_std: f64,
    pub amplitude_limit: f64,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            num_layers: 2,
            head_hidden: vec![64, 64],
            dropout: 0.1,
            batch_size: 32,
            max_epochs: 200,
            patience: 20,
            gamma: 1.0,
            fd_epsilon: 1e-4,
            shift_rule: false,
            gradient_method: GradientMethod::Adjoint,
            training_shots: None,
            loss_p: 0.0,
            ancillas: 0,
            init_std: 0.1,
            amplitude_limit: DEFAULT_AMPLITUDE_LIMIT,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(WitnessError::Usage(m));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.gamma >= 0.0) {
            return bad(format!("gamma must be nonnegative, got {}", self.gamma));
        }
        if self.num_layers == 0 {
            return bad("num_layers must be at least 1".into());
        }
        if !(self.fd_epsilon > 0.0) {
            return bad("fd_epsilon must be positive".into());
        }
        if !(0.0..1.0).contains(&self.loss_p) {
            return bad(format!("loss_p {} outside [0, 1)", self.loss_p));
        }
        if self.training_shots == Some(0) {
            return bad("training_shots must be positive".into());
        }
        Ok(())
    }
}

/// Circuit, readout and classical head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridModel {
    pub circuit: CircuitParams,
    pub head: MlpParams,
    pub loss_p: f64,
    pub ancillas: AncillaMap,
    pub amplitude_limit: f64,
}

impl HybridModel {
    /// Quantum parameters from `Normal(0, init_std)`, head by fan-in scaled uniform draws.
    pub fn init(system: ModeShape, cfg: &TrainConfig) -> Result<Self> {
        let ancillas = AncillaMap { num_ancillas: cfg.ancillas };
        let shape = ancillas.processed_shape(&system);
        let circuit = CircuitParams::random_normal(
            shape,
            cfg.num_layers,
            cfg.init_std,
            &mut rng::stream(cfg.seed, &[tags::INIT_QUANTUM]),
        )?;
        let k = default_settings(&shape)?.len();
        let mut sizes = vec![k * shape.total_dim()];
        sizes.extend(&cfg.head_hidden);
        sizes.push(1);
        let head = MlpParams::init(&sizes, cfg.dropout, &mut rng::stream(cfg.seed, &[tags::INIT_CLASSICAL]))?;
        Ok(Self { circuit, head, loss_p: cfg.loss_p, ancillas, amplitude_limit: cfg.amplitude_limit })
    }

    pub fn shape(&self) -> ModeShape {
        self.circuit.shape
    }

    pub fn settings(&self) -> Result<Vec<MeasurementSetting>> {
        default_settings(&self.circuit.shape)
    }

    pub fn compile(&self) -> Result<CompiledCircuit> {
        self.compile_with(&self.circuit, &self.settings()?)
    }

    fn compile_with(&self, circuit: &CircuitParams, settings: &[MeasurementSetting]) -> Result<CompiledCircuit> {
        CompiledCircuit::new(circuit, settings, self.loss_p, self.amplitude_limit)
    }

    /// Input matrices after the optional ancilla stage.
    pub fn prepare_inputs(&self, states: &[LabeledState]) -> Result<Vec<CMatrix>> {
        states
            .iter()
            .map(|s| Ok(self.ancillas.prepare(&s.rho)?.into_matrix()))
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.circuit.num_params() + self.head.num_params()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut v = self.circuit.flatten();
        v.extend(&self.head.values);
        v
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        let nq = self.circuit.num_params();
        if flat.len() != nq + self.head.num_params() {
            return Err(WitnessError::Shape("parameter vector length mismatch".into()));
        }
        self.circuit.set_flat(&flat[..nq])?;
        self.head.values.copy_from_slice(&flat[nq..]);
        Ok(())
    }

    /// Witness logits for `states`. Sampled readout uses one stream per sample.
    pub fn scores(&self, states: &[LabeledState], mode: ShotMode) -> Result<Vec<f64>> {
        let compiled = self.compile()?;
        let inputs = self.prepare_inputs(states)?;
        let block = compiled.shape().total_dim();
        inputs
            .par_iter()
            .enumerate()
            .map(|(i, rho)| {
                let (probs, _) = compiled.probabilities(rho);
                let feats = finalize_features(probs, block, per_sample_mode(mode, i as u64))?;
                self.head.predict(&feats.values)
            })
            .collect()
    }

    /// Mean total loss and accuracy in inference mode with exact features.
    pub fn evaluate(&self, inputs: &[CMatrix], labels: &[u8], gamma: f64) -> Result<(f64, f64)> {
        if inputs.is_empty() {
            return Err(WitnessError::Usage("cannot evaluate an empty split".into()));
        }
        let compiled = self.compile()?;
        let block = compiled.shape().total_dim();
        let per: Vec<(f64, bool)> = inputs
            .par_iter()
            .zip(labels)
            .map(|(rho, &y)| {
                let (probs, trace) = compiled.probabilities(rho);
                let feats = finalize_features(probs, block, ShotMode::Analytic)?;
                let w = self.head.predict(&feats.values)?;
                Ok((total_loss(w, y, trace, gamma), (w > 0.0) == (y == 1)))
            })
            .collect::<Result<_>>()?;
        let n = per.len() as f64;
        Ok((
            per.iter().map(|p| p.0).sum::<f64>() / n,
            per.iter().filter(|p| p.1).count() as f64 / n,
        ))
    }
}

/// Readout mode for dataset sample `index`.
pub fn per_sample_mode(mode: ShotMode, index: u64) -> ShotMode {
    match mode {
        ShotMode::Analytic => ShotMode::Analytic,
        ShotMode::Sampled { shots, seed } => ShotMode::Sampled {
            shots,
            seed: rng::derive_seed(seed, &[tags::SHOTS, index]),
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation loss.
    pub model: HybridModel,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub initial_val_loss: f64,
    pub initial_val_acc: f64,
    pub stopped_early: bool,
    pub adam: AdamState,
}

struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    stale: usize,
}

impl EarlyStopping {
    fn new(patience: usize) -> Self {
        Self { patience, best: f64::INFINITY, best_epoch: 0, stale: 0 }
    }

    /// Returns `(improved, should_stop)`.
    fn observe(&mut self, epoch: usize, val_loss: f64) -> (bool, bool) {
        if val_loss < self.best {
            self.best = val_loss;
            self.best_epoch = epoch;
            self.stale = 0;
            (true, false)
        } else {
            self.stale += 1;
            (false, self.stale >= self.patience)
        }
    }
}

fn check_finite(v: f64, epoch: usize, what: &str) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(WitnessError::TrainingFailure { epoch, reason: format!("{what} is {v}") })
    }
}

struct SampleStep {
    loss: f64,
    correct: bool,
    head_grad: Vec<f64>,
    prob_grad: Vec<f64>,
    trace_grad: f64,
    tape: super::qgrad::SampleTape,
}

fn batch_masks(head: &MlpParams, seed: u64, epoch: usize, batch: usize, idx: &[usize]) -> Vec<DropoutMasks> {
    idx.iter()
        .map(|&i| head.sample_masks(&mut rng::stream(seed, &[tags::DROPOUT, epoch as u64, batch as u64, i as u64])))
        .collect()
}

/// Trains the hybrid model on the train split with early stopping on the validation split.
pub fn train(dataset: &DatasetSplit, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if dataset.train.is_empty() || dataset.validation.is_empty() {
        return Err(WitnessError::Usage("training needs non-empty train and validation splits".into()));
    }
    let mut model = HybridModel::init(dataset.shape, cfg)?;
    let settings = model.settings()?;
    let train_in = model.prepare_inputs(&dataset.train)?;
    let train_y: Vec<u8> = dataset.train.iter().map(|s| s.label).collect();
    let val_in = model.prepare_inputs(&dataset.validation)?;
    let val_y: Vec<u8> = dataset.validation.iter().map(|s| s.label).collect();
    let block = model.shape().total_dim();
    let nq = model.circuit.num_params();
    let plan = estimator_plan(&model.circuit, cfg.shift_rule);
    if cfg.shift_rule {
        let info = model.circuit.param_info();
        for ((_, flagged), i) in plan.iter().zip(&info) {
            if *flagged {
                log::warn!("shift rule is not exact for {}; using central differences", i.name);
            }
        }
    }

    let (initial_val_loss, initial_val_acc) = model.evaluate(&val_in, &val_y, cfg.gamma)?;
    let mut adam = AdamState::new(model.num_params(), cfg.adam);
    let mut history = Vec::new();
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best = model.clone();
    let mut order: Vec<usize> = (0..train_in.len()).collect();
    let mut stopped_early = false;

    for epoch in 1..=cfg.max_epochs {
        order.sort_unstable();
        order.shuffle(&mut rng::stream(cfg.seed, &[tags::SHUFFLE, epoch as u64]));
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        let mut norm_sum = 0.0;
        let mut n_batches = 0usize;
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let compiled = model.compile_with(&model.circuit, &settings)?;
            let masks = batch_masks(&model.head, cfg.seed, epoch, b, idx);
            let scale = 1.0 / idx.len() as f64;
            let steps: Vec<SampleStep> = idx
                .par_iter()
                .zip(&masks)
                .map(|(&i, mask)| {
                    let tape = forward_tape(&compiled, &train_in[i]);
                    let mode = match cfg.training_shots {
                        None => ShotMode::Analytic,
                        Some(shots) => ShotMode::Sampled {
                            shots,
                            seed: rng::derive_seed(cfg.seed, &[tags::SHOTS, epoch as u64, i as u64]),
                        },
                    };
                    let feats = finalize_features(tape.probs.clone(), block, mode)?;
                    let cache = model.head.forward(&feats.values, Some(mask))?;
                    let w = cache.output;
                    let y = train_y[i];
                    let mut head_grad = vec![0.0; model.head.num_params()];
                    let dx = model.head.backward(&cache, bce_grad(w, y) * scale, &mut head_grad);
                    Ok(SampleStep {
                        loss: total_loss(w, y, tape.trace, cfg.gamma),
                        correct: (w > 0.0) == (y == 1),
                        head_grad,
                        prob_grad: dx,
                        trace_grad: -2.0 * cfg.gamma * (1.0 - tape.trace) * scale,
                        tape,
                    })
                })
                .collect::<Result<_>>()?;

            let batch_loss = steps.iter().map(|s| s.loss).sum::<f64>() * scale;
            check_finite(batch_loss, epoch, "training loss")?;
            let mut grad = vec![0.0; model.num_params()];
            for s in &steps {
                for (g, h) in grad[nq..].iter_mut().zip(&s.head_grad) {
                    *g += h;
                }
            }
            let loss_fn = |p: &CircuitParams| -> Result<f64> {
                let c = model.compile_with(p, &settings)?;
                let mut acc = 0.0;
                for (&i, mask) in idx.iter().zip(&masks) {
                    let (probs, trace) = c.probabilities(&train_in[i]);
                    let feats = finalize_features(probs, block, ShotMode::Analytic)?;
                    let w = model.head.forward(&feats.values, Some(mask))?.output;
                    acc += total_loss(w, train_y[i], trace, cfg.gamma);
                }
                Ok(acc * scale)
            };
            let qgrad = match cfg.gradient_method {
                GradientMethod::Rerun => rerun_gradient(&model.circuit, cfg.shift_rule, cfg.fd_epsilon, &loss_fn)?,
                GradientMethod::Adjoint => {
                    let tapes: Vec<_> = steps.iter().map(|s| s.tape.clone()).collect();
                    let pg: Vec<Vec<f64>> = steps.iter().map(|s| s.prob_grad.clone()).collect();
                    let tg: Vec<f64> = steps.iter().map(|s| s.trace_grad).collect();
                    let mut g = adjoint_gradient(
                        &model.circuit,
                        &compiled,
                        &tapes,
                        &pg,
                        &tg,
                        cfg.fd_epsilon,
                        model.amplitude_limit,
                    )?;
                    for (i, (est, _)) in plan.iter().enumerate() {
                        if *est == Estimator::ShiftRule {
                            g[i] = rerun_partial(&model.circuit, i, *est, cfg.fd_epsilon, &loss_fn)?;
                        }
                    }
                    g
                }
            };
            grad[..nq].copy_from_slice(&qgrad);
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            check_finite(norm, epoch, "gradient norm")?;
            let mut flat = model.flat_params();
            adam.update(&mut flat, &grad)?;
            model.set_flat_params(&flat)?;

            loss_sum += batch_loss * idx.len() as f64;
            correct += steps.iter().filter(|s| s.correct).count();
            norm_sum += norm;
            n_batches += 1;
        }
        let (val_loss, val_acc) = model.evaluate(&val_in, &val_y, cfg.gamma)?;
        check_finite(val_loss, epoch, "validation loss")?;
        let rec = EpochRecord {
            epoch,
            train_loss: loss_sum / train_in.len() as f64,
            val_loss,
            train_acc: correct as f64 / train_in.len() as f64,
            val_acc,
            grad_norm: norm_sum / n_batches as f64,
        };
        log::info!(
            "epoch {epoch}: train_loss {:.4} val_loss {:.4} train_acc {:.3} val_acc {:.3} grad_norm {:.3e}",
            rec.train_loss,
            rec.val_loss,
            rec.train_acc,
            rec.val_acc,
            rec.grad_norm
        );
        history.push(rec);
        let (improved, stop) = stopper.observe(epoch, val_loss);
        if improved {
            best = model.clone();
        }
        if stop {
            stopped_early = true;
            break;
        }
    }
    Ok(TrainOutcome {
        model: best,
        history,
        best_epoch: stopper.best_epoch,
        initial_val_loss,
        initial_val_acc,
        stopped_early,
        adam,
    })
}

/// Settings for a standalone network trained on fixed feature vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpFitConfig {
    pub hidden: Vec<usize>,
    pub dropout: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for MlpFitConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 32],
            dropout: 0.1,
            batch_size: 32,
            max_epochs: 200,
            patience: 20,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpFit {
    pub params: MlpParams,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
}

fn mlp_eval(p: &MlpParams, x: &[Vec<f64>], y: &[u8]) -> Result<(f64, f64)> {
    let mut loss = 0.0;
    let mut correct = 0;
    for (xi, &yi) in x.iter().zip(y) {
        let w = p.predict(xi)?;
        loss += bce_with_logits(w, yi);
        correct += usize::from((w > 0.0) == (yi == 1));
    }
    let n = x.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Adam with early stopping on `(val_x, val_y)`; binary cross-entropy on the logit.
pub fn fit_mlp(
    train_x: &[Vec<f64>],
    train_y: &[u8],
    val_x: &[Vec<f64>],
    val_y: &[u8],
    cfg: &MlpFitConfig,
) -> Result<MlpFit> {
    if train_x.is_empty() || val_x.is_empty() || train_x.len() != train_y.len() || val_x.len() != val_y.len() {
        return Err(WitnessError::Usage("network fit needs matching, non-empty splits".into()));
    }
    if cfg.batch_size == 0 {
        return Err(WitnessError::Usage("batch_size must be at least 1".into()));
    }
    let mut sizes = vec![train_x[0].len()];
    sizes.extend(&cfg.hidden);
    sizes.push(1);
    let mut params = MlpParams::init(&sizes, cfg.dropout, &mut rng::stream(cfg.seed, &[tags::INIT_CLASSICAL]))?;
    let mut adam = AdamState::new(params.num_params(), cfg.adam);
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best = params.clone();
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..train_x.len()).collect();
    for epoch in 1..=cfg.max_epochs {
        order.sort_unstable();
        order.shuffle(&mut rng::stream(cfg.seed, &[tags::SHUFFLE, epoch as u64]));
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        let mut norm_sum = 0.0;
        let mut n_batches = 0;
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let masks = batch_masks(&params, cfg.seed, epoch, b, idx);
            let scale = 1.0 / idx.len() as f64;
            let mut grad = vec![0.0; params.num_params()];
            for (&i, mask) in idx.iter().zip(&masks) {
                let cache = params.forward(&train_x[i], Some(mask))?;
                let w = cache.output;
                loss_sum += bce_with_logits(w, train_y[i]);
                correct += usize::from((w > 0.0) == (train_y[i] == 1));
                params.backward(&cache, bce_grad(w, train_y[i]) * scale, &mut grad);
            }
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            check_finite(norm, epoch, "gradient norm")?;
            adam.update(&mut params.values, &grad)?;
            norm_sum += norm;
            n_batches += 1;
        }
        check_finite(loss_sum, epoch, "training loss")?;
        let (val_loss, val_acc) = mlp_eval(&params, val_x, val_y)?;
        history.push(EpochRecord {
            epoch,
            train_loss: loss_sum / train_x.len() as f64,
            val_loss,
            train_acc: correct as f64 / train_x.len() as f64,
            val_acc,
            grad_norm: norm_sum / n_batches as f64,
        });
        let (improved, stop) = stopper.observe(epoch, val_loss);
        if improved {
            best = params.clone();
        }
        if stop {
            break;
        }
    }
    Ok(MlpFit { params: best, history, best_epoch: stopper.best_epoch })
}
