//! The layered CV-QNN ansatz and its informationally complete readout.
//!
//! One layer is `U = K(kappa) D(alpha) S(r) BS_mesh R(phi)`: phase shifters
//! first, then beamsplitters over all pairs `i < j` in lexicographic order,
//! then per-mode squeezing, displacement and Kerr. With a nonzero per-layer
//! loss probability every mode passes through a loss channel after the layer.

use std::f64::consts::FRAC_PI_4;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, WitnessError};
use crate::fock::{CMatrix, DensityMatrix, ModeShape, C0};
use crate::gates::{
    apply_kraus_adjoint_on_mode, apply_kraus_on_mode, embedded_beamsplitter,
    embedded_single_mode, loss_kraus, single_mode_gate_limited, GateKind, GateLabel, GateMatrix,
    DEFAULT_AMPLITUDE_LIMIT,
};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BsParams {
    pub theta: f64,
    pub phi: f64,
}

/// Trainable parameters of one layer. Squeezing is a real amplitude `r` per
/// mode; displacements are complex and count as two reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub rotations: Vec<f64>,
    pub beamsplitters: Vec<BsParams>,
    pub squeezes: Vec<f64>,
    pub displacements: Vec<Complex64>,
    pub kerrs: Vec<f64>,
}

/// Which gate a flat parameter drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParamKind {
    Rotation,
    BsTheta,
    BsPhi,
    Squeeze,
    DisplaceRe,
    DisplaceIm,
    Kerr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamInfo {
    pub layer: usize,
    pub kind: ParamKind,
    /// Mode index, or pair index for beamsplitter parameters.
    pub slot: usize,
    pub name: String,
}

/// All beamsplitter pairs `(i, j)`, `i < j`, in lexicographic order.
pub fn mode_pairs(num_modes: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for i in 0..num_modes {
        for j in (i + 1)..num_modes {
            pairs.push((i, j));
        }
    }
    pairs
}

impl LayerParams {
    pub fn zeros(num_modes: usize) -> Self {
        Self {
            rotations: vec![0.0; num_modes],
            beamsplitters: vec![BsParams { theta: 0.0, phi: 0.0 }; num_modes * (num_modes - 1) / 2],
            squeezes: vec![0.0; num_modes],
            displacements: vec![C0; num_modes],
            kerrs: vec![0.0; num_modes],
        }
    }

    pub fn num_params(num_modes: usize) -> usize {
        5 * num_modes + num_modes * (num_modes - 1)
    }

    pub fn num_modes(&self) -> usize {
        self.rotations.len()
    }

    fn validate(&self, num_modes: usize) -> Result<()> {
        let pairs = num_modes * (num_modes - 1) / 2;
        if self.rotations.len() != num_modes
            || self.beamsplitters.len() != pairs
            || self.squeezes.len() != num_modes
            || self.displacements.len() != num_modes
            || self.kerrs.len() != num_modes
        {
            return Err(WitnessError::Shape(format!(
                "layer parameters do not match {num_modes} modes"
            )));
        }
        if !self.flatten().iter().all(|v| v.is_finite()) {
            return Err(WitnessError::Usage("non-finite layer parameter".into()));
        }
        Ok(())
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(Self::num_params(self.num_modes()));
        out.extend(&self.rotations);
        for bs in &self.beamsplitters {
            out.push(bs.theta);
            out.push(bs.phi);
        }
        out.extend(&self.squeezes);
        for a in &self.displacements {
            out.push(a.re);
            out.push(a.im);
        }
        out.extend(&self.kerrs);
        out
    }

    fn assign(&mut self, flat: &[f64]) {
        let m = self.num_modes();
        let mut it = flat.iter().copied();
        for r in self.rotations.iter_mut() {
            *r = it.next().unwrap();
        }
        for bs in self.beamsplitters.iter_mut() {
            bs.theta = it.next().unwrap();
            bs.phi = it.next().unwrap();
        }
        for s in self.squeezes.iter_mut() {
            *s = it.next().unwrap();
        }
        for a in self.displacements.iter_mut() {
            let re = it.next().unwrap();
            let im = it.next().unwrap();
            *a = Complex64::new(re, im);
        }
        for k in self.kerrs.iter_mut() {
            *k = it.next().unwrap();
        }
        debug_assert_eq!(m, self.num_modes());
    }

    fn param_info(num_modes: usize, layer: usize) -> Vec<ParamInfo> {
        let mut out = Vec::new();
        let mut push = |kind, slot, name: String| out.push(ParamInfo { layer, kind, slot, name });
        for m in 0..num_modes {
            push(ParamKind::Rotation, m, format!("L{layer}.rotation[{m}]"));
        }
        for (p, (i, j)) in mode_pairs(num_modes).into_iter().enumerate() {
            push(ParamKind::BsTheta, p, format!("L{layer}.bs_theta[{i},{j}]"));
            push(ParamKind::BsPhi, p, format!("L{layer}.bs_phi[{i},{j}]"));
        }
        for m in 0..num_modes {
            push(ParamKind::Squeeze, m, format!("L{layer}.squeeze[{m}]"));
        }
        for m in 0..num_modes {
            push(ParamKind::DisplaceRe, m, format!("L{layer}.displace_re[{m}]"));
            push(ParamKind::DisplaceIm, m, format!("L{layer}.displace_im[{m}]"));
        }
        for m in 0..num_modes {
            push(ParamKind::Kerr, m, format!("L{layer}.kerr[{m}]"));
        }
        out
    }
}

/// The full quantum parameter set, one entry per layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitParams {
    pub layers: Vec<LayerParams>,
    pub shape: ModeShape,
}

impl CircuitParams {
    pub fn zeros(shape: ModeShape, num_layers: usize) -> Result<Self> {
        if num_layers == 0 {
            return Err(WitnessError::Usage("a circuit needs at least one layer".into()));
        }
        Ok(Self { layers: vec![LayerParams::zeros(shape.num_modes); num_layers], shape })
    }

    /// Every parameter drawn independently from `Normal(0, std)`.
    pub fn random_normal<R: Rng + ?Sized>(
        shape: ModeShape,
        num_layers: usize,
        std: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut params = Self::zeros(shape, num_layers)?;
        let normal = Normal::new(0.0, std)
            .map_err(|e| WitnessError::Usage(format!("invalid init std: {e}")))?;
        let flat: Vec<f64> = (0..params.num_params()).map(|_| normal.sample(rng)).collect();
        params.set_flat(&flat)?;
        Ok(params)
    }

    pub fn num_params(&self) -> usize {
        self.layers.len() * LayerParams::num_params(self.shape.num_modes)
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.flatten()).collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(WitnessError::Shape(format!(
                "expected {} circuit parameters, got {}",
                self.num_params(),
                flat.len()
            )));
        }
        let per = LayerParams::num_params(self.shape.num_modes);
        for (layer, chunk) in self.layers.iter_mut().zip(flat.chunks(per)) {
            layer.assign(chunk);
        }
        Ok(())
    }

    pub fn param_info(&self) -> Vec<ParamInfo> {
        (0..self.layers.len())
            .flat_map(|l| LayerParams::param_info(self.shape.num_modes, l))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(WitnessError::Usage("a circuit needs at least one layer".into()));
        }
        self.layers.iter().try_for_each(|l| l.validate(self.shape.num_modes))
    }
}

fn product_of_single_mode(
    shape: &ModeShape,
    limit: f64,
    kinds: impl Iterator<Item = GateKind>,
) -> Result<CMatrix> {
    let mut acc: Option<CMatrix> = None;
    for kind in kinds {
        let g = single_mode_gate_limited(kind, shape.cutoff, limit)?;
        acc = Some(match acc {
            None => g,
            Some(a) => a.kronecker(&g),
        });
    }
    Ok(acc.expect("at least one mode"))
}

/// Interferometer `BS_mesh * R(phi)` with the mesh applied over pairs in lexicographic order.
pub fn interferometer(
    rotations: &[f64],
    beamsplitters: &[BsParams],
    shape: &ModeShape,
) -> Result<CMatrix> {
    let mut u = product_of_single_mode(
        shape,
        f64::INFINITY,
        rotations.iter().map(|&p| GateKind::Rotation(p)),
    )?;
    for (bs, pair) in beamsplitters.iter().zip(mode_pairs(shape.num_modes)) {
        if bs.theta != 0.0 {
            let g = embedded_beamsplitter(bs.theta, bs.phi, pair, shape)?;
            u = &g.matrix * u;
        }
    }
    Ok(u)
}

/// Unitary of one layer, `K D S U_I`.
pub fn layer_unitary(layer: &LayerParams, shape: &ModeShape, limit: f64) -> Result<CMatrix> {
    layer.validate(shape.num_modes)?;
    let ui = interferometer(&layer.rotations, &layer.beamsplitters, shape)?;
    let s = product_of_single_mode(
        shape,
        limit,
        layer.squeezes.iter().map(|&r| GateKind::Squeeze(Complex64::new(r, 0.0))),
    )?;
    let dsp = product_of_single_mode(
        shape,
        limit,
        layer.displacements.iter().map(|&a| GateKind::Displace(a)),
    )?;
    let k = product_of_single_mode(shape, limit, layer.kerrs.iter().map(|&k| GateKind::Kerr(k)))?;
    let mut u = &s * ui;
    u = &dsp * u;
    // Kerr is diagonal: scale rows.
    for r in 0..u.nrows() {
        let f = k[(r, r)];
        for c in 0..u.ncols() {
            u[(r, c)] *= f;
        }
    }
    Ok(u)
}

fn check_loss(loss_p: f64) -> Result<()> {
    if !(0.0..1.0).contains(&loss_p) {
        return Err(WitnessError::Usage(format!("loss probability {loss_p} outside [0, 1)")));
    }
    Ok(())
}

/// `C(U rho U^dag)` where `C` applies the loss Kraus set on every mode.
pub(crate) fn propagate(
    rho: &CMatrix,
    u: &CMatrix,
    kraus: Option<&[CMatrix]>,
    shape: &ModeShape,
) -> CMatrix {
    let mut out = u * rho * u.adjoint();
    if let Some(k) = kraus {
        for mode in 0..shape.num_modes {
            out = apply_kraus_on_mode(k, mode, &out, shape);
        }
    }
    hermitize_matrix(&mut out);
    out
}

/// Loss adjoint only: `C^dag(O)`.
pub(crate) fn loss_adjoint(obs: &CMatrix, kraus: Option<&[CMatrix]>, shape: &ModeShape) -> CMatrix {
    let mut o = obs.clone();
    if let Some(k) = kraus {
        for mode in (0..shape.num_modes).rev() {
            o = apply_kraus_adjoint_on_mode(k, mode, &o, shape);
        }
    }
    o
}

pub(crate) fn hermitize_matrix(m: &mut CMatrix) {
    let n = m.nrows();
    for i in 0..n {
        m[(i, i)].im = 0.0;
        for j in (i + 1)..n {
            let avg = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            m[(i, j)] = avg;
            m[(j, i)] = avg.conj();
        }
    }
}

/// One layer applied to a state, followed by per-mode loss when `loss_p > 0`.
pub fn apply_layer(rho: &DensityMatrix, layer: &LayerParams, loss_p: f64) -> Result<DensityMatrix> {
    check_loss(loss_p)?;
    let shape = rho.shape();
    let u = layer_unitary(layer, &shape, DEFAULT_AMPLITUDE_LIMIT)?;
    let kraus = (loss_p > 0.0).then(|| loss_kraus(1.0 - loss_p, shape.cutoff));
    let out = propagate(rho.matrix(), &u, kraus.as_deref(), &shape);
    Ok(DensityMatrix::from_matrix_unchecked(out, shape))
}

pub fn apply_circuit(rho: &DensityMatrix, params: &CircuitParams, loss_p: f64) -> Result<DensityMatrix> {
    if rho.shape() != params.shape {
        return Err(WitnessError::Shape("state and circuit shapes differ".into()));
    }
    params.validate()?;
    let mut state = rho.clone();
    for layer in &params.layers {
        state = apply_layer(&state, layer, loss_p)?;
    }
    Ok(state)
}

/// `(1 - Tr rho_out)^2`.
pub fn trace_penalty(rho_out: &DensityMatrix) -> f64 {
    let t = rho_out.trace();
    (1.0 - t) * (1.0 - t)
}

/// A fixed pre-measurement unitary `V_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSetting {
    pub id: usize,
    pub unitary: GateMatrix,
}

fn mesh(theta: f64, shape: &ModeShape) -> Result<CMatrix> {
    let bs = vec![BsParams { theta, phi: 0.0 }; shape.num_modes * (shape.num_modes - 1) / 2];
    interferometer(&vec![0.0; shape.num_modes], &bs, shape)
}

/// The three fixed readout settings: identity; a balanced beamsplitter mesh;
/// quarter-turn rotations, the same mesh, then a 0.3 displacement on every mode.
pub fn default_settings(shape: &ModeShape) -> Result<Vec<MeasurementSetting>> {
    let dim = shape.total_dim();
    let m = shape.num_modes;
    let identity = GateMatrix {
        matrix: CMatrix::identity(dim, dim),
        label: GateLabel { kind: "V1:identity".into(), params: vec![], targets: (0..m).collect() },
    };
    let mesh_u = mesh(FRAC_PI_4, shape)?;
    let v2 = GateMatrix {
        matrix: mesh_u.clone(),
        label: GateLabel {
            kind: "V2:mesh".into(),
            params: vec![FRAC_PI_4, 0.0],
            targets: (0..m).collect(),
        },
    };
    let rot = product_of_single_mode(shape, f64::INFINITY, (0..m).map(|_| GateKind::Rotation(FRAC_PI_4)))?;
    let disp = product_of_single_mode(
        shape,
        DEFAULT_AMPLITUDE_LIMIT,
        (0..m).map(|_| GateKind::Displace(Complex64::new(0.3, 0.0))),
    )?;
    let v3 = GateMatrix {
        matrix: disp * mesh_u * rot,
        label: GateLabel {
            kind: "V3:displace*mesh*rotate".into(),
            params: vec![FRAC_PI_4, FRAC_PI_4, 0.3],
            targets: (0..m).collect(),
        },
    };
    Ok(vec![
        MeasurementSetting { id: 1, unitary: identity },
        MeasurementSetting { id: 2, unitary: v2 },
        MeasurementSetting { id: 3, unitary: v3 },
    ])
}

/// Optional input stage: append vacuum ancilla modes, then a fixed balanced mesh.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct AncillaMap {
    pub num_ancillas: usize,
}

impl AncillaMap {
    pub fn processed_shape(&self, system: &ModeShape) -> ModeShape {
        system.with_extra_modes(self.num_ancillas)
    }

    pub fn prepare(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        if self.num_ancillas == 0 {
            return Ok(rho.clone());
        }
        let anc = DensityMatrix::vacuum(ModeShape::new(self.num_ancillas, rho.shape().cutoff)?);
        let joint = rho.tensor(&anc)?;
        let shape = joint.shape();
        let v = mesh(FRAC_PI_4, &shape)?;
        let out = &v * joint.matrix() * v.adjoint();
        DensityMatrix::from_matrix(out, shape)
    }
}

/// Exact probabilities or finite-shot frequencies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ShotMode {
    Analytic,
    Sampled { shots: u32, seed: u64 },
}

/// Concatenated per-setting outcome distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub shot_mode: ShotMode,
}

/// Circuit compiled for repeated evaluation at fixed parameters.
#[derive(Debug, Clone)]
pub struct CompiledCircuit {
    shape: ModeShape,
    layers: Vec<CMatrix>,
    kraus: Option<Vec<CMatrix>>,
    settings: Vec<CMatrix>,
    /// `V_k U_L ... U_1` when the circuit is lossless.
    combined: Option<Vec<CMatrix>>,
}

impl CompiledCircuit {
    pub fn new(
        params: &CircuitParams,
        settings: &[MeasurementSetting],
        loss_p: f64,
        limit: f64,
    ) -> Result<Self> {
        check_loss(loss_p)?;
        params.validate()?;
        if settings.is_empty() {
            return Err(WitnessError::Usage("at least one measurement setting is required".into()));
        }
        let shape = params.shape;
        for s in settings {
            if s.unitary.matrix.nrows() != shape.total_dim() {
                return Err(WitnessError::Shape("setting unitary does not match circuit shape".into()));
            }
        }
        let layers = params
            .layers
            .iter()
            .map(|l| layer_unitary(l, &shape, limit))
            .collect::<Result<Vec<_>>>()?;
        let settings: Vec<CMatrix> = settings.iter().map(|s| s.unitary.matrix.clone()).collect();
        Ok(Self::from_parts(shape, layers, loss_p, settings))
    }

    pub(crate) fn from_parts(
        shape: ModeShape,
        layers: Vec<CMatrix>,
        loss_p: f64,
        settings: Vec<CMatrix>,
    ) -> Self {
        let kraus = (loss_p > 0.0).then(|| loss_kraus(1.0 - loss_p, shape.cutoff));
        let combined = if kraus.is_none() {
            let dim = shape.total_dim();
            let total = layers.iter().fold(CMatrix::identity(dim, dim), |acc, u| u * acc);
            Some(settings.iter().map(|v| v * &total).collect())
        } else {
            None
        };
        Self { shape, layers, kraus, settings, combined }
    }

    pub fn shape(&self) -> ModeShape {
        self.shape
    }

    pub fn num_settings(&self) -> usize {
        self.settings.len()
    }

    pub fn feature_len(&self) -> usize {
        self.settings.len() * self.shape.total_dim()
    }

    pub fn layers(&self) -> &[CMatrix] {
        &self.layers
    }

    pub fn kraus(&self) -> Option<&[CMatrix]> {
        self.kraus.as_deref()
    }

    pub fn setting_matrices(&self) -> &[CMatrix] {
        &self.settings
    }

    pub fn combined(&self) -> Option<&[CMatrix]> {
        self.combined.as_deref()
    }

    /// Output state of the variational circuit (before the readout unitaries).
    pub fn output(&self, rho: &CMatrix) -> CMatrix {
        let mut state = rho.clone();
        for u in &self.layers {
            state = propagate(&state, u, self.kraus.as_deref(), &self.shape);
        }
        state
    }

    /// Clamped per-setting diagonal probabilities and the output trace.
    pub fn probabilities(&self, rho: &CMatrix) -> (Vec<f64>, f64) {
        let dim = self.shape.total_dim();
        let mut out = Vec::with_capacity(self.feature_len());
        match &self.combined {
            Some(ws) => {
                for w in ws {
                    out.extend(diag_sandwich(w, rho));
                }
                // unitary circuit: trace of the output equals the input trace
                let tr = (0..dim).map(|i| rho[(i, i)].re).sum();
                (out, tr)
            }
            None => {
                let state = self.output(rho);
                let tr = (0..dim).map(|i| state[(i, i)].re).sum();
                for v in &self.settings {
                    out.extend(diag_sandwich(v, &state));
                }
                (out, tr)
            }
        }
    }

    pub fn features(&self, rho: &CMatrix, mode: ShotMode) -> Result<FeatureVector> {
        let (probs, _) = self.probabilities(rho);
        finalize_features(probs, self.shape.total_dim(), mode)
    }
}

/// `max(Re diag(W X W^dag), 0)`.
pub(crate) fn diag_sandwich(w: &CMatrix, x: &CMatrix) -> Vec<f64> {
    let t = w * x;
    let n = w.nrows();
    let k = w.ncols();
    (0..n)
        .map(|r| {
            let mut acc = 0.0;
            for j in 0..k {
                let a = t[(r, j)];
                let b = w[(r, j)];
                acc += a.re * b.re + a.im * b.im;
            }
            acc.max(0.0)
        })
        .collect()
}

/// Applies the shot mode to clamped probability blocks.
pub fn finalize_features(probs: Vec<f64>, block: usize, mode: ShotMode) -> Result<FeatureVector> {
    for (k, chunk) in probs.chunks(block).enumerate() {
        let total: f64 = chunk.iter().sum();
        if !(total > 1e-300) {
            return Err(WitnessError::DegenerateState(format!(
                "setting {} has an all-zero outcome distribution",
                k + 1
            )));
        }
    }
    match mode {
        ShotMode::Analytic => Ok(FeatureVector { values: probs, shot_mode: mode }),
        ShotMode::Sampled { shots, seed } => {
            if shots == 0 {
                return Err(WitnessError::Usage("shot count must be positive".into()));
            }
            let mut values = Vec::with_capacity(probs.len());
            for (k, chunk) in probs.chunks(block).enumerate() {
                let mut r = rng::stream(seed, &[rng::tags::SHOTS, k as u64]);
                values.extend(sample_frequencies(chunk, shots, &mut r));
            }
            Ok(FeatureVector { values, shot_mode: mode })
        }
    }
}

/// Multinomial frequencies from a (renormalized) distribution.
pub fn sample_frequencies<R: Rng + ?Sized>(probs: &[f64], shots: u32, rng: &mut R) -> Vec<f64> {
    let total: f64 = probs.iter().sum();
    let mut cdf = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    for p in probs {
        acc += p / total;
        cdf.push(acc);
    }
    let last_nonzero = probs.iter().rposition(|&p| p > 0.0).unwrap_or(0);
    let mut counts = vec![0u32; probs.len()];
    for _ in 0..shots {
        let u: f64 = rng.random();
        let idx = cdf.partition_point(|&c| c <= u).min(last_nonzero);
        counts[idx] += 1;
    }
    counts.into_iter().map(|c| c as f64 / shots as f64).collect()
}

/// IC readout of `V_k U_Theta rho U_Theta^dag V_k^dag` for every setting.
pub fn ic_features(
    rho: &DensityMatrix,
    params: &CircuitParams,
    settings: &[MeasurementSetting],
    shot_mode: ShotMode,
) -> Result<FeatureVector> {
    ic_features_lossy(rho, params, settings, shot_mode, 0.0)
}

pub fn ic_features_lossy(
    rho: &DensityMatrix,
    params: &CircuitParams,
    settings: &[MeasurementSetting],
    shot_mode: ShotMode,
    loss_p: f64,
) -> Result<FeatureVector> {
    if rho.shape() != params.shape {
        return Err(WitnessError::Shape("state and circuit shapes differ".into()));
    }
    let compiled = CompiledCircuit::new(params, settings, loss_p, DEFAULT_AMPLITUDE_LIMIT)?;
    compiled.features(rho.matrix(), shot_mode)
}

/// Embeds a single-mode gate kind; exposed for settings and tests.
pub fn single_mode_on(kind: GateKind, mode: usize, shape: &ModeShape) -> Result<GateMatrix> {
    embedded_single_mode(kind, mode, shape, DEFAULT_AMPLITUDE_LIMIT)
}

/// Permutes the mode order of a full-space matrix: output mode `i` is input mode `perm[i]`.
pub fn permute_modes(m: &CMatrix, perm: &[usize], shape: &ModeShape) -> CMatrix {
    let dim = shape.total_dim();
    let map: Vec<usize> = (0..dim)
        .map(|i| {
            let occ = crate::fock::digits(i, shape);
            let permuted: Vec<usize> = perm.iter().map(|&p| occ[p]).collect();
            crate::fock::fock_index(&permuted, shape).expect("valid occupations")
        })
        .collect();
    let mut out = CMatrix::zeros(dim, dim);
    for i in 0..dim {
        for j in 0..dim {
            out[(map[i], map[j])] = m[(i, j)];
        }
    }
    out
}
