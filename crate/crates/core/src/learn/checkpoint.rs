//! Checkpoints (JSON manifest plus little-endian `f64` payload) and history export.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, AdamState};
use super::mlp::MlpParams;
use super::train::{EpochRecord, HybridModel, TrainOutcome};
use crate::circuit::{AncillaMap, CircuitParams};
use crate::error::{Result, WitnessError};
use crate::fock::ModeShape;

pub const CHECKPOINT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "checkpoint.json";
pub const PAYLOAD_FILE: &str = "checkpoint.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub shape: ModeShape,
    pub num_layers: usize,
    pub head_sizes: Vec<usize>,
    pub dropout: f64,
    pub loss_p: f64,
    pub ancillas: usize,
    pub amplitude_limit: f64,
    pub circuit_params: usize,
    pub head_params: usize,
    pub adam: AdamConfig,
    pub adam_step: u64,
    pub best_epoch: usize,
    pub initial_val_loss: f64,
    pub initial_val_acc: f64,
    pub stopped_early: bool,
    pub history: Vec<EpochRecord>,
    /// Payload layout: circuit parameters, head parameters, Adam first then second moments.
    pub payload: String,
}

pub fn save_checkpoint(dir: &Path, outcome: &TrainOutcome) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let m = &outcome.model;
    let manifest = CheckpointManifest {
        format_version: CHECKPOINT_VERSION,
        shape: m.circuit.shape,
        num_layers: m.circuit.layers.len(),
        head_sizes: m.head.sizes.clone(),
        dropout: m.head.dropout,
        loss_p: m.loss_p,
        ancillas: m.ancillas.num_ancillas,
        amplitude_limit: m.amplitude_limit,
        circuit_params: m.circuit.num_params(),
        head_params: m.head.num_params(),
        adam: outcome.adam.config,
        adam_step: outcome.adam.step,
        best_epoch: outcome.best_epoch,
        initial_val_loss: outcome.initial_val_loss,
        initial_val_acc: outcome.initial_val_acc,
        stopped_early: outcome.stopped_early,
        history: outcome.history.clone(),
        payload: PAYLOAD_FILE.to_string(),
    };
    std::fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    let mut payload = Vec::new();
    for v in m.flat_params().iter().chain(&outcome.adam.m).chain(&outcome.adam.v) {
        payload.write_all(&v.to_le_bytes())?;
    }
    std::fs::write(dir.join(PAYLOAD_FILE), payload)?;
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<TrainOutcome> {
    let manifest: CheckpointManifest = serde_json::from_slice(&std::fs::read(dir.join(MANIFEST_FILE))?)?;
    if manifest.format_version != CHECKPOINT_VERSION {
        return Err(WitnessError::Format(format!(
            "unsupported checkpoint version {}",
            manifest.format_version
        )));
    }
    let bytes = std::fs::read(dir.join(&manifest.payload))?;
    let n = manifest.circuit_params + manifest.head_params;
    if bytes.len() != 3 * n * 8 {
        return Err(WitnessError::Format(format!(
            "payload holds {} bytes, expected {}",
            bytes.len(),
            3 * n * 8
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let mut circuit = CircuitParams::zeros(manifest.shape, manifest.num_layers)?;
    let mut head = MlpParams::zeros(&manifest.head_sizes, manifest.dropout)?;
    if circuit.num_params() != manifest.circuit_params || head.num_params() != manifest.head_params {
        return Err(WitnessError::Format("parameter counts disagree with the recorded shapes".into()));
    }
    circuit.set_flat(&values[..manifest.circuit_params])?;
    head.values.copy_from_slice(&values[manifest.circuit_params..n]);
    let adam = AdamState {
        m: values[n..2 * n].to_vec(),
        v: values[2 * n..].to_vec(),
        step: manifest.adam_step,
        config: manifest.adam,
    };
    Ok(TrainOutcome {
        model: HybridModel {
            circuit,
            head,
            loss_p: manifest.loss_p,
            ancillas: AncillaMap { num_ancillas: manifest.ancillas },
            amplitude_limit: manifest.amplitude_limit,
        },
        history: manifest.history,
        best_epoch: manifest.best_epoch,
        initial_val_loss: manifest.initial_val_loss,
        initial_val_acc: manifest.initial_val_acc,
        stopped_early: manifest.stopped_early,
        adam,
    })
}

/// CSV with columns `epoch, train_loss, val_loss, train_acc, val_acc, grad_norm`.
pub fn write_history_csv<W: Write>(out: W, history: &[EpochRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for rec in history {
        w.serialize(rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::train::TrainConfig;

    #[test]
    fn checkpoint_roundtrip() {
        let shape = ModeShape::new(2, 2).unwrap();
        let cfg = TrainConfig { head_hidden: vec![4, 4], ..Default::default() };
        let model = HybridModel::init(shape, &cfg).unwrap();
        let mut adam = AdamState::new(model.num_params(), cfg.adam);
        let mut flat = model.flat_params();
        let grads: Vec<f64> = (0..flat.len()).map(|i| (i as f64).sin()).collect();
        adam.update(&mut flat, &grads).unwrap();
        let rec = EpochRecord { epoch: 1, train_loss: 0.5, val_loss: 0.6, train_acc: 0.7, val_acc: 0.8, grad_norm: 1.5 };
        let outcome = TrainOutcome {
            model,
            history: vec![rec],
            best_epoch: 1,
            initial_val_loss: 0.69,
            initial_val_acc: 0.5,
            stopped_early: false,
            adam,
        };
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(dir.path(), &outcome).unwrap();
        assert_eq!(load_checkpoint(dir.path()).unwrap(), outcome);
        std::fs::write(dir.path().join(PAYLOAD_FILE), [0u8; 8]).unwrap();
        assert!(matches!(load_checkpoint(dir.path()), Err(WitnessError::Format(_))));
    }

    #[test]
    fn history_csv_has_header_and_rows() {
        let rec = EpochRecord { epoch: 1, train_loss: 0.5, val_loss: 0.6, train_acc: 0.7, val_acc: 0.8, grad_norm: 1.5 };
        let mut buf = Vec::new();
        write_history_csv(&mut buf, &[rec, EpochRecord { epoch: 2, ..rec }]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "epoch,train_loss,val_loss,train_acc,val_acc,grad_norm");
        assert_eq!(lines.len(), 3);
    }
}
