//! Gradients of a batch loss with respect to the circuit parameters.
//!
//! The default route is adjoint differentiation: the loss derivative with
//! respect to the readout probabilities and the output trace defines an
//! observable that is pulled back through each layer (loss channel adjoint,
//! then the layer unitary). Each layer unitary is a product of local gates, and
//! the derivative of a local gate with respect to its parameter is taken by
//! central differences. The alternative route reruns the full feature map and
//! head for every shifted parameter.

use num_complex::Complex64;

use crate::circuit::{
    diag_sandwich, loss_adjoint, mode_pairs, propagate, CircuitParams, CompiledCircuit, LayerParams,
    ParamKind,
};
use crate::error::{Result, WitnessError};
use crate::fock::CMatrix;
use crate::gates::{beamsplitter_gate, embed_gate, single_mode_gate_limited, GateKind};

/// Forward intermediates of one sample.
#[derive(Debug, Clone)]
pub struct SampleTape {
    /// State entering each layer.
    pub layer_inputs: Vec<CMatrix>,
    pub output: CMatrix,
    /// Clamped readout probabilities, setting blocks concatenated.
    pub probs: Vec<f64>,
    pub trace: f64,
}

pub fn forward_tape(compiled: &CompiledCircuit, rho: &CMatrix) -> SampleTape {
    let shape = compiled.shape();
    let mut layer_inputs = Vec::with_capacity(compiled.layers().len());
    let mut state = rho.clone();
    for u in compiled.layers() {
        let next = propagate(&state, u, compiled.kraus(), &shape);
        layer_inputs.push(std::mem::replace(&mut state, next));
    }
    let trace = (0..state.nrows()).map(|i| state[(i, i)].re).sum();
    let mut probs = Vec::with_capacity(compiled.feature_len());
    for v in compiled.setting_matrices() {
        probs.extend(diag_sandwich(v, &state));
    }
    SampleTape { layer_inputs, output: state, probs, trace }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LocalGate {
    Rotation(usize),
    Beamsplitter(usize, usize),
    Squeeze(usize),
    Displace(usize),
    Kerr(usize),
}

/// A gate of the layer product together with the layer-flat indices it reads.
#[derive(Debug, Clone)]
struct GateSlot {
    gate: LocalGate,
    params: Vec<usize>,
}

/// Gates of one layer in application order, matching [`crate::circuit::layer_unitary`].
fn layer_gates(num_modes: usize) -> Vec<GateSlot> {
    let m = num_modes;
    let pairs = mode_pairs(m);
    let np = pairs.len();
    let mut out = Vec::new();
    for k in 0..m {
        out.push(GateSlot { gate: LocalGate::Rotation(k), params: vec![k] });
    }
    for (p, (i, j)) in pairs.into_iter().enumerate() {
        out.push(GateSlot { gate: LocalGate::Beamsplitter(i, j), params: vec![m + 2 * p, m + 2 * p + 1] });
    }
    let sq = m + 2 * np;
    for k in 0..m {
        out.push(GateSlot { gate: LocalGate::Squeeze(k), params: vec![sq + k] });
    }
    let dsp = sq + m;
    for k in 0..m {
        out.push(GateSlot { gate: LocalGate::Displace(k), params: vec![dsp + 2 * k, dsp + 2 * k + 1] });
    }
    let kerr = dsp + 2 * m;
    for k in 0..m {
        out.push(GateSlot { gate: LocalGate::Kerr(k), params: vec![kerr + k] });
    }
    out
}

fn local_matrix(slot: &GateSlot, flat: &[f64], d: usize, limit: f64) -> Result<(CMatrix, Vec<usize>)> {
    let v = |i: usize| flat[slot.params[i]];
    Ok(match slot.gate {
        LocalGate::Rotation(k) => (single_mode_gate_limited(GateKind::Rotation(v(0)), d, limit)?, vec![k]),
        LocalGate::Beamsplitter(i, j) => (beamsplitter_gate(v(0), v(1), d)?, vec![i, j]),
        LocalGate::Squeeze(k) => (
            single_mode_gate_limited(GateKind::Squeeze(Complex64::new(v(0), 0.0)), d, limit)?,
            vec![k],
        ),
        LocalGate::Displace(k) => (
            single_mode_gate_limited(GateKind::Displace(Complex64::new(v(0), v(1))), d, limit)?,
            vec![k],
        ),
        LocalGate::Kerr(k) => (single_mode_gate_limited(GateKind::Kerr(v(0)), d, limit)?, vec![k]),
    })
}

/// `Re Tr(A B)`.
fn re_trace_product(a: &CMatrix, b: &CMatrix) -> f64 {
    let n = a.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            let x = a[(i, j)];
            let y = b[(j, i)];
            acc += x.re * y.re - x.im * y.im;
        }
    }
    acc
}

/// Output observable `sum_k V_k^dag diag(g_k) V_k + t I`.
fn output_observable(settings: &[CMatrix], prob_grad: &[f64], trace_grad: f64, dim: usize) -> CMatrix {
    let mut obs = CMatrix::identity(dim, dim) * Complex64::new(trace_grad, 0.0);
    for (v, g) in settings.iter().zip(prob_grad.chunks(dim)) {
        if g.iter().all(|&x| x == 0.0) {
            continue;
        }
        let mut scaled = v.clone();
        for (r, &gr) in g.iter().enumerate() {
            for c in 0..dim {
                scaled[(r, c)] *= gr;
            }
        }
        obs += v.adjoint() * scaled;
    }
    obs
}

/// Adjoint gradient of `sum_s L_s` where `prob_grads[s]` is `dL_s/dp` for the
/// clamped probabilities of sample `s` and `trace_grads[s]` is `dL_s/dTr`.
pub fn adjoint_gradient(
    params: &CircuitParams,
    compiled: &CompiledCircuit,
    tapes: &[SampleTape],
    prob_grads: &[Vec<f64>],
    trace_grads: &[f64],
    eps: f64,
    limit: f64,
) -> Result<Vec<f64>> {
    let shape = compiled.shape();
    let dim = shape.total_dim();
    let n_layers = compiled.layers().len();
    if params.layers.len() != n_layers || params.shape != shape {
        return Err(WitnessError::Shape("circuit parameters do not match compiled circuit".into()));
    }
    if tapes.len() != prob_grads.len() || tapes.len() != trace_grads.len() {
        return Err(WitnessError::Shape("batch bookkeeping lengths differ".into()));
    }
    // Z_l = sum_s rho_{l,s} U_l^dag C^dag(O_{l,s}) U_l
    let mut z: Vec<CMatrix> = vec![CMatrix::zeros(dim, dim); n_layers];
    for ((tape, g), &t) in tapes.iter().zip(prob_grads).zip(trace_grads) {
        let mut obs = output_observable(compiled.setting_matrices(), g, t, dim);
        for l in (0..n_layers).rev() {
            let u = &compiled.layers()[l];
            let pulled = loss_adjoint(&obs, compiled.kraus(), &shape);
            obs = u.adjoint() * pulled * u;
            z[l] += &tape.layer_inputs[l] * &obs;
        }
    }
    let per = LayerParams::num_params(shape.num_modes);
    let mut grad = vec![0.0; params.num_params()];
    let gates = layer_gates(shape.num_modes);
    for (l, layer) in params.layers.iter().enumerate() {
        let flat = layer.flatten();
        let mut q = CMatrix::identity(dim, dim);
        for slot in &gates {
            let (local, targets) = local_matrix(slot, &flat, shape.cutoff, limit)?;
            let g = embed_gate(&local, &targets, &shape)?;
            let q_next = &g * &q;
            let env = &q * &z[l] * q_next.adjoint();
            for &pi in &slot.params {
                let mut plus = flat.clone();
                plus[pi] += eps;
                let mut minus = flat.clone();
                minus[pi] -= eps;
                let dg = (local_matrix(slot, &plus, shape.cutoff, limit)?.0
                    - local_matrix(slot, &minus, shape.cutoff, limit)?.0)
                    / Complex64::new(2.0 * eps, 0.0);
                let dg = embed_gate(&dg, &targets, &shape)?;
                grad[l * per + pi] = 2.0 * re_trace_product(&dg, &env);
            }
            q = q_next;
        }
    }
    Ok(grad)
}

/// Whether the two-point `pi/2` shift rule is exact for this parameter: the
/// loss must be a first-order trigonometric polynomial in it, which holds for
/// a phase rotation only when the number operator has eigenvalues `{0, 1}`.
pub fn shift_rule_exact(kind: ParamKind, cutoff: usize) -> bool {
    kind == ParamKind::Rotation && cutoff == 2
}

/// How a single parameter's derivative was estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    ShiftRule,
    CentralDifference,
}

/// Per-parameter estimator choice. With `use_shift_rule`, parameters where the
/// rule would be inexact are flagged and fall back to central differences.
pub fn estimator_plan(params: &CircuitParams, use_shift_rule: bool) -> Vec<(Estimator, bool)> {
    params
        .param_info()
        .iter()
        .map(|info| {
            let rotation_like = matches!(info.kind, ParamKind::Rotation | ParamKind::BsTheta | ParamKind::BsPhi);
            if use_shift_rule && shift_rule_exact(info.kind, params.shape.cutoff) {
                (Estimator::ShiftRule, false)
            } else {
                (Estimator::CentralDifference, use_shift_rule && rotation_like)
            }
        })
        .collect()
}

fn shifted(params: &CircuitParams, flat: &[f64], i: usize, delta: f64) -> Result<CircuitParams> {
    let mut p = params.clone();
    let mut f = flat.to_vec();
    f[i] += delta;
    p.set_flat(&f)?;
    Ok(p)
}

fn eval_checked<F>(loss: &F, p: &CircuitParams, name: &str) -> Result<f64>
where
    F: Fn(&CircuitParams) -> Result<f64>,
{
    let v = loss(p).map_err(|e| WitnessError::GradientEvaluation {
        param: name.to_string(),
        reason: e.to_string(),
    })?;
    if !v.is_finite() {
        return Err(WitnessError::GradientEvaluation {
            param: name.to_string(),
            reason: format!("non-finite loss {v} at shifted point"),
        });
    }
    Ok(v)
}

/// Derivative of `loss` with respect to one parameter by the chosen estimator.
pub fn rerun_partial<F>(
    params: &CircuitParams,
    index: usize,
    estimator: Estimator,
    eps: f64,
    loss: &F,
) -> Result<f64>
where
    F: Fn(&CircuitParams) -> Result<f64>,
{
    let flat = params.flatten();
    let name = params.param_info()[index].name.clone();
    let (delta, scale) = match estimator {
        Estimator::ShiftRule => (std::f64::consts::FRAC_PI_2, 0.5),
        Estimator::CentralDifference => (eps, 0.5 / eps),
    };
    let plus = eval_checked(loss, &shifted(params, &flat, index, delta)?, &name)?;
    let minus = eval_checked(loss, &shifted(params, &flat, index, -delta)?, &name)?;
    Ok((plus - minus) * scale)
}

/// Full gradient by rerunning `loss` at shifted parameters.
pub fn rerun_gradient<F>(params: &CircuitParams, use_shift_rule: bool, eps: f64, loss: &F) -> Result<Vec<f64>>
where
    F: Fn(&CircuitParams) -> Result<f64>,
{
    estimator_plan(params, use_shift_rule)
        .into_iter()
        .enumerate()
        .map(|(i, (est, _))| rerun_partial(params, i, est, eps, loss))
        .collect()
}

/// Forward tapes for a batch; exposed for the training loop.
pub fn tapes_for(compiled: &CompiledCircuit, inputs: &[&CMatrix]) -> Vec<SampleTape> {
    inputs.iter().map(|rho| forward_tape(compiled, rho)).collect()
}
