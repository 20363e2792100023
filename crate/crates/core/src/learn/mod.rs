//! Classical head, composite loss, hybrid gradients, Adam and the training loop.

pub mod adam;
pub mod checkpoint;
pub mod mlp;
pub mod qgrad;
pub mod train;

pub use adam::{AdamConfig, AdamState};
pub use mlp::{DropoutMasks, ForwardCache, MlpParams};
pub use train::{
    fit_mlp, train, EpochRecord, GradientMethod, HybridModel, MlpFit, MlpFitConfig, TrainConfig,
    TrainOutcome,
};

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy of a logit, `max(w, 0) - w y + ln(1 + e^{-|w|})`.
pub fn bce_with_logits(witness: f64, label: u8) -> f64 {
    let y = f64::from(label);
    witness.max(0.0) - witness * y + (-witness.abs()).exp().ln_1p()
}

/// `BCE(witness, label) + gamma (1 - trace)^2`.
pub fn total_loss(witness: f64, label: u8, trace: f64, gamma: f64) -> f64 {
    bce_with_logits(witness, label) + gamma * (1.0 - trace) * (1.0 - trace)
}

/// Derivative of [`bce_with_logits`] with respect to the logit.
pub fn bce_grad(witness: f64, label: u8) -> f64 {
    sigmoid(witness) - f64::from(label)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_examples() {
        let ln2 = std::f64::consts::LN_2;
        assert!((total_loss(0.0, 0, 1.0, 1.0) - ln2).abs() < 1e-15);
        assert!((total_loss(0.0, 1, 1.0, 1.0) - ln2).abs() < 1e-15);
        assert!(total_loss(20.0, 1, 1.0, 1.0) < 1e-8);
        assert!((total_loss(0.0, 1, 0.9, 1.0) - (ln2 + 0.01)).abs() < 1e-12);
        assert!(total_loss(-800.0, 1, 1.0, 1.0).is_finite());
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-1000.0) >= 0.0 && sigmoid(1000.0) <= 1.0);
        assert!(bce_grad(20.0, 1).abs() < 1e-8);
    }
}
