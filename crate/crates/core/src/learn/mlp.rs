//! Fully connected network with layer normalization, ReLU and inverted dropout
//! on every hidden layer and a linear scalar output.
//!
//! Parameters live in one flat vector. Per layer `l` (fan-in `n`, fan-out `m`):
//! `W` (`m x n`, row-major), `b` (`m`), then for hidden layers the
//! normalization gain (`m`) and offset (`m`).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, WitnessError};

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub sizes: Vec<usize>,
    pub dropout: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct LayerOffsets {
    w: usize,
    b: usize,
    gain: Option<usize>,
    offset: Option<usize>,
    fan_in: usize,
    fan_out: usize,
}

/// Per-hidden-layer dropout multipliers (`0` or `1 / (1 - rate)`).
pub type DropoutMasks = Vec<Vec<f64>>;

#[derive(Debug, Clone)]
struct HiddenCache {
    xhat: Vec<f64>,
    inv_std: f64,
    pre_relu: Vec<f64>,
    mask: Option<Vec<f64>>,
    out: Vec<f64>,
}

/// Intermediates of one forward pass, consumed by [`MlpParams::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Vec<f64>,
    hidden: Vec<HiddenCache>,
    pub output: f64,
}

impl MlpParams {
    pub fn num_params_for(sizes: &[usize]) -> usize {
        let nl = sizes.len() - 1;
        (0..nl)
            .map(|l| {
                let (n, m) = (sizes[l], sizes[l + 1]);
                m * n + m + if l + 1 < nl { 2 * m } else { 0 }
            })
            .sum()
    }

    fn check_sizes(sizes: &[usize], dropout: f64) -> Result<()> {
        if sizes.len() < 2 || sizes.iter().any(|&s| s == 0) {
            return Err(WitnessError::Usage(format!("invalid layer sizes {sizes:?}")));
        }
        if *sizes.last().unwrap() != 1 {
            return Err(WitnessError::Usage("the output layer must have one unit".into()));
        }
        if !(0.0..1.0).contains(&dropout) {
            return Err(WitnessError::Usage(format!("dropout rate {dropout} outside [0, 1)")));
        }
        Ok(())
    }

    /// All weights, biases and offsets zero; gains one.
    pub fn zeros(sizes: &[usize], dropout: f64) -> Result<Self> {
        Self::check_sizes(sizes, dropout)?;
        let mut p = Self {
            sizes: sizes.to_vec(),
            dropout,
            values: vec![0.0; Self::num_params_for(sizes)],
        };
        for l in 0..p.num_layers() {
            let o = p.offsets(l);
            if let Some(g) = o.gain {
                p.values[g..g + o.fan_out].fill(1.0);
            }
        }
        Ok(p)
    }

    /// Weights uniform in `+-1/sqrt(fan_in)`, biases zero, unit gains.
    pub fn init<R: Rng + ?Sized>(sizes: &[usize], dropout: f64, rng: &mut R) -> Result<Self> {
        let mut p = Self::zeros(sizes, dropout)?;
        for l in 0..p.num_layers() {
            let o = p.offsets(l);
            let bound = 1.0 / (o.fan_in as f64).sqrt();
            for v in &mut p.values[o.w..o.w + o.fan_in * o.fan_out] {
                *v = rng.random_range(-bound..bound);
            }
        }
        Ok(p)
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn num_params(&self) -> usize {
        self.values.len()
    }

    pub fn input_len(&self) -> usize {
        self.sizes[0]
    }

    fn offsets(&self, layer: usize) -> LayerOffsets {
        let mut at = 0;
        let nl = self.num_layers();
        for l in 0..nl {
            let (n, m) = (self.sizes[l], self.sizes[l + 1]);
            let hidden = l + 1 < nl;
            let o = LayerOffsets {
                w: at,
                b: at + m * n,
                gain: hidden.then_some(at + m * n + m),
                offset: hidden.then_some(at + m * n + 2 * m),
                fan_in: n,
                fan_out: m,
            };
            if l == layer {
                return o;
            }
            at += m * n + m + if hidden { 2 * m } else { 0 };
        }
        unreachable!("layer index out of range")
    }

    pub fn validate(&self) -> Result<()> {
        Self::check_sizes(&self.sizes, self.dropout)?;
        if self.values.len() != Self::num_params_for(&self.sizes) {
            return Err(WitnessError::Shape("parameter vector length mismatch".into()));
        }
        if !self.values.iter().all(|v| v.is_finite()) {
            return Err(WitnessError::Usage("non-finite network parameter".into()));
        }
        Ok(())
    }

    /// Fresh inverted-dropout masks for one training forward pass.
    pub fn sample_masks<R: Rng + ?Sized>(&self, rng: &mut R) -> DropoutMasks {
        let keep = 1.0 - self.dropout;
        (0..self.num_layers() - 1)
            .map(|l| {
                (0..self.sizes[l + 1])
                    .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                    .collect()
            })
            .collect()
    }

    /// Witness logit for `x`. Dropout is applied only when `masks` is given.
    pub fn forward(&self, x: &[f64], masks: Option<&DropoutMasks>) -> Result<ForwardCache> {
        if x.len() != self.input_len() {
            return Err(WitnessError::Usage(format!(
                "feature length {} does not match network input {}",
                x.len(),
                self.input_len()
            )));
        }
        let nl = self.num_layers();
        let mut hidden = Vec::with_capacity(nl - 1);
        let mut current: Vec<f64> = x.to_vec();
        let mut output = 0.0;
        for l in 0..nl {
            let o = self.offsets(l);
            let w = &self.values[o.w..o.w + o.fan_in * o.fan_out];
            let b = &self.values[o.b..o.b + o.fan_out];
            let z: Vec<f64> = (0..o.fan_out)
                .map(|r| {
                    let row = &w[r * o.fan_in..(r + 1) * o.fan_in];
                    b[r] + row.iter().zip(&current).map(|(a, c)| a * c).sum::<f64>()
                })
                .collect();
            let (Some(g), Some(off)) = (o.gain, o.offset) else {
                output = z[0];
                break;
            };
            let m = o.fan_out as f64;
            let mean = z.iter().sum::<f64>() / m;
            let var = z.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m;
            let inv_std = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            let xhat: Vec<f64> = z.iter().map(|v| (v - mean) * inv_std).collect();
            let gain = &self.values[g..g + o.fan_out];
            let offset = &self.values[off..off + o.fan_out];
            let pre_relu: Vec<f64> =
                xhat.iter().zip(gain).zip(offset).map(|((x, g), b)| g * x + b).collect();
            let mask = masks.map(|ms| ms[l].clone());
            let out: Vec<f64> = pre_relu
                .iter()
                .enumerate()
                .map(|(i, &v)| {
                    let a = v.max(0.0);
                    mask.as_ref().map_or(a, |mk| a * mk[i])
                })
                .collect();
            current = out.clone();
            hidden.push(HiddenCache { xhat, inv_std, pre_relu, mask, out });
        }
        Ok(ForwardCache { input: x.to_vec(), hidden, output })
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        Ok(self.forward(x, None)?.output)
    }

    /// Accumulates `d_out * d(output)/d(params)` into `grad` and returns the
    /// gradient with respect to the input features.
    pub fn backward(&self, cache: &ForwardCache, d_out: f64, grad: &mut [f64]) -> Vec<f64> {
        let nl = self.num_layers();
        let mut delta = vec![d_out];
        for l in (0..nl).rev() {
            let o = self.offsets(l);
            if l + 1 < nl {
                let h = &cache.hidden[l];
                let g = o.gain.unwrap();
                let off = o.offset.unwrap();
                let m = o.fan_out;
                let mut dxhat = vec![0.0; m];
                for i in 0..m {
                    let mut d = delta[i];
                    if let Some(mk) = &h.mask {
                        d *= mk[i];
                    }
                    if h.pre_relu[i] <= 0.0 {
                        d = 0.0;
                    }
                    grad[g + i] += d * h.xhat[i];
                    grad[off + i] += d;
                    dxhat[i] = d * self.values[g + i];
                }
                let mean_d = dxhat.iter().sum::<f64>() / m as f64;
                let mean_dx = dxhat.iter().zip(&h.xhat).map(|(a, b)| a * b).sum::<f64>() / m as f64;
                delta = (0..m)
                    .map(|i| h.inv_std * (dxhat[i] - mean_d - h.xhat[i] * mean_dx))
                    .collect();
            }
            let input: &[f64] = if l == 0 { &cache.input } else { &cache.hidden[l - 1].out };
            let mut prev = vec![0.0; o.fan_in];
            for (r, &dr) in delta.iter().enumerate() {
                if dr == 0.0 {
                    continue;
                }
                grad[o.b + r] += dr;
                let row = o.w + r * o.fan_in;
                for (c, &x) in input.iter().enumerate() {
                    grad[row + c] += dr * x;
                    prev[c] += dr * self.values[row + c];
                }
            }
            delta = prev;
        }
        delta
    }
}
