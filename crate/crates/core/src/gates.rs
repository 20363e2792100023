//! CV gate matrices in the truncated Fock basis, plus the photon-loss channel.
//!
//! Non-diagonal gates (squeezing, displacement, beamsplitter) are the matrix
//! exponential of the truncated anti-Hermitian generator. Rotation and Kerr
//! gates are diagonal and built directly from their spectra.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, WitnessError};
use crate::fock::{CMatrix, DensityMatrix, ModeShape, C0, C1};

/// Default hard limit on `|z|` and `|alpha|`.
pub const DEFAULT_AMPLITUDE_LIMIT: f64 = 3.0;

/// Single-mode gate family with its parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GateKind {
    /// `exp(i phi n)`
    Rotation(f64),
    /// `exp((z* a^2 - z a^dag^2) / 2)`
    Squeeze(Complex64),
    /// `exp(alpha a^dag - alpha* a)`
    Displace(Complex64),
    /// `exp(i kappa n^2)`
    Kerr(f64),
}

/// Descriptor attached to an embedded gate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateLabel {
    pub kind: String,
    pub params: Vec<f64>,
    pub targets: Vec<usize>,
}

/// Gate acting on the full M-mode space.
#[derive(Debug, Clone, PartialEq)]
pub struct GateMatrix {
    pub matrix: CMatrix,
    pub label: GateLabel,
}

impl GateMatrix {
    pub fn identity(shape: &ModeShape) -> Self {
        let dim = shape.total_dim();
        Self {
            matrix: CMatrix::identity(dim, dim),
            label: GateLabel { kind: "identity".into(), params: vec![], targets: vec![] },
        }
    }

    /// `other` applied after `self`.
    pub fn then(&self, other: &GateMatrix) -> GateMatrix {
        let mut targets = self.label.targets.clone();
        targets.extend(other.label.targets.iter().copied());
        GateMatrix {
            matrix: &other.matrix * &self.matrix,
            label: GateLabel {
                kind: format!("{}*{}", other.label.kind, self.label.kind),
                params: self.label.params.iter().chain(&other.label.params).copied().collect(),
                targets,
            },
        }
    }

    /// Kronecker product; `self` occupies the leading modes.
    pub fn tensor(&self, other: &GateMatrix) -> GateMatrix {
        GateMatrix {
            matrix: self.matrix.kronecker(&other.matrix),
            label: GateLabel {
                kind: format!("{}(x){}", self.label.kind, other.label.kind),
                params: self.label.params.iter().chain(&other.label.params).copied().collect(),
                targets: vec![],
            },
        }
    }

    /// `max |(U^dag U - I)_{ij}|`.
    pub fn unitarity_residual(&self) -> f64 {
        unitarity_residual(&self.matrix, None)
    }
}

/// Annihilation, creation, and number matrices for cutoff `d`.
pub fn ladder_ops(d: usize) -> (CMatrix, CMatrix, CMatrix) {
    let mut a = CMatrix::zeros(d, d);
    for n in 1..d {
        a[(n - 1, n)] = Complex64::new((n as f64).sqrt(), 0.0);
    }
    let adag = a.adjoint();
    let num = CMatrix::from_diagonal(&nalgebra::DVector::from_fn(d, |n, _| {
        Complex64::new(n as f64, 0.0)
    }));
    (a, adag, num)
}

/// Matrix exponential by scaling and squaring.
pub fn expm(generator: &CMatrix) -> CMatrix {
    generator.clone().exp()
}

fn check_amplitude(value: f64, limit: f64, what: &str) -> Result<()> {
    if !value.is_finite() {
        return Err(WitnessError::Usage(format!("{what} parameter is not finite")));
    }
    if value > limit {
        return Err(WitnessError::Usage(format!(
            "{what} magnitude {value} exceeds limit {limit}"
        )));
    }
    Ok(())
}

/// Single-mode gate on a `d`-level mode with the default amplitude limit.
pub fn single_mode_gate(kind: GateKind, d: usize) -> Result<CMatrix> {
    single_mode_gate_limited(kind, d, DEFAULT_AMPLITUDE_LIMIT)
}

pub fn single_mode_gate_limited(kind: GateKind, d: usize, limit: f64) -> Result<CMatrix> {
    if d < 2 {
        return Err(WitnessError::Shape(format!("cutoff must be >= 2, got {d}")));
    }
    match kind {
        GateKind::Rotation(phi) => {
            check_amplitude(phi.abs(), f64::INFINITY, "rotation")?;
            Ok(diagonal(d, |n| Complex64::from_polar(1.0, phi * n as f64)))
        }
        GateKind::Kerr(kappa) => {
            check_amplitude(kappa.abs(), f64::INFINITY, "kerr")?;
            Ok(diagonal(d, |n| Complex64::from_polar(1.0, kappa * (n * n) as f64)))
        }
        GateKind::Squeeze(z) => {
            check_amplitude(z.norm(), limit, "squeeze")?;
            if z == C0 {
                return Ok(CMatrix::identity(d, d));
            }
            let (a, adag, _) = ladder_ops(d);
            let a2 = &a * &a;
            let adag2 = &adag * &adag;
            let gen = (a2 * z.conj() - adag2 * z) * Complex64::new(0.5, 0.0);
            Ok(expm(&gen))
        }
        GateKind::Displace(alpha) => {
            check_amplitude(alpha.norm(), limit, "displacement")?;
            if alpha == C0 {
                return Ok(CMatrix::identity(d, d));
            }
            let (a, adag, _) = ladder_ops(d);
            let gen = adag * alpha - a * alpha.conj();
            Ok(expm(&gen))
        }
    }
}

fn diagonal(d: usize, f: impl Fn(usize) -> Complex64) -> CMatrix {
    CMatrix::from_diagonal(&nalgebra::DVector::from_fn(d, |n, _| f(n)))
}

/// Two-mode beamsplitter `exp(theta (e^{i phi} a_1^dag a_2 - e^{-i phi} a_1 a_2^dag))`
/// on a `d*d` space with the first mode as the leading digit.
pub fn beamsplitter_gate(theta: f64, phi: f64, d: usize) -> Result<CMatrix> {
    if !theta.is_finite() || !phi.is_finite() {
        return Err(WitnessError::Usage("beamsplitter angles must be finite".into()));
    }
    if theta == 0.0 {
        return Ok(CMatrix::identity(d * d, d * d));
    }
    Ok(expm(&beamsplitter_generator(theta, phi, d)))
}

pub(crate) fn beamsplitter_generator(theta: f64, phi: f64, d: usize) -> CMatrix {
    let (a, adag, _) = ladder_ops(d);
    let id = CMatrix::identity(d, d);
    let a1dag_a2 = adag.kronecker(&id) * id.kronecker(&a);
    let a1_a2dag = a.kronecker(&id) * id.kronecker(&adag);
    let e = Complex64::from_polar(theta, phi);
    a1dag_a2 * e - a1_a2dag * e.conj()
}

/// Lifts a local gate on `targets` to the full space with identity on the other modes.
/// The first target is the most significant digit of the local index.
pub fn embed_gate(local: &CMatrix, targets: &[usize], shape: &ModeShape) -> Result<CMatrix> {
    let d = shape.cutoff;
    let m = shape.num_modes;
    for (i, &t) in targets.iter().enumerate() {
        if t >= m {
            return Err(WitnessError::OutOfRange(format!("target mode {t} >= {m}")));
        }
        if targets[..i].contains(&t) {
            return Err(WitnessError::Usage(format!("target mode {t} repeated")));
        }
    }
    let local_dim = d.pow(targets.len() as u32);
    if local.nrows() != local_dim || local.ncols() != local_dim {
        return Err(WitnessError::Shape(format!(
            "local gate is {}x{}, expected {local_dim}x{local_dim}",
            local.nrows(),
            local.ncols()
        )));
    }
    let dim = shape.total_dim();
    let strides: Vec<usize> = targets.iter().map(|&t| d.pow((m - 1 - t) as u32)).collect();
    // Global offset of each local index.
    let local_offset: Vec<usize> = (0..local_dim)
        .map(|mut l| {
            let mut off = 0;
            for s in strides.iter().rev() {
                off += (l % d) * s;
                l /= d;
            }
            off
        })
        .collect();
    let mut out = CMatrix::zeros(dim, dim);
    for col in 0..dim {
        let mut lc = 0;
        for &s in &strides {
            lc = lc * d + (col / s) % d;
        }
        let base = col - local_offset[lc];
        for lr in 0..local_dim {
            let v = local[(lr, lc)];
            if v != C0 {
                out[(base + local_offset[lr], col)] = v;
            }
        }
    }
    Ok(out)
}

/// Embeds a single-mode gate built from `kind`.
pub fn embedded_single_mode(
    kind: GateKind,
    mode: usize,
    shape: &ModeShape,
    limit: f64,
) -> Result<GateMatrix> {
    let local = single_mode_gate_limited(kind, shape.cutoff, limit)?;
    let (name, params) = match kind {
        GateKind::Rotation(p) => ("R", vec![p]),
        GateKind::Kerr(k) => ("K", vec![k]),
        GateKind::Squeeze(z) => ("S", vec![z.re, z.im]),
        GateKind::Displace(a) => ("D", vec![a.re, a.im]),
    };
    Ok(GateMatrix {
        matrix: embed_gate(&local, &[mode], shape)?,
        label: GateLabel { kind: name.into(), params, targets: vec![mode] },
    })
}

pub fn embedded_beamsplitter(
    theta: f64,
    phi: f64,
    modes: (usize, usize),
    shape: &ModeShape,
) -> Result<GateMatrix> {
    let local = beamsplitter_gate(theta, phi, shape.cutoff)?;
    Ok(GateMatrix {
        matrix: embed_gate(&local, &[modes.0, modes.1], shape)?,
        label: GateLabel { kind: "BS".into(), params: vec![theta, phi], targets: vec![modes.0, modes.1] },
    })
}

/// `max |((U^dag U - I) P)_{ij}|`, optionally restricted to columns in `cols`.
pub fn unitarity_residual(u: &CMatrix, cols: Option<&[usize]>) -> f64 {
    let g = u.adjoint() * u;
    let n = g.nrows();
    let all: Vec<usize> = (0..n).collect();
    let cols = cols.unwrap_or(&all);
    let mut worst: f64 = 0.0;
    for &c in cols {
        for r in 0..n {
            let target = if r == c { C1 } else { C0 };
            worst = worst.max((g[(r, c)] - target).norm());
        }
    }
    worst
}

/// Indices whose every per-mode occupation is at most `max_n`.
pub fn low_photon_indices(shape: &ModeShape, max_n: usize) -> Vec<usize> {
    (0..shape.total_dim())
        .filter(|&i| crate::fock::digits(i, shape).iter().all(|&n| n <= max_n))
        .collect()
}

/// Pure-loss channel on one mode: `E_k = sqrt((1-eta)^k / k!) eta^{n/2} a^k`, `k < d`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossChannel {
    pub eta: f64,
    pub kraus: Vec<CMatrix>,
    pub target_mode: usize,
    shape: ModeShape,
}

pub fn loss_channel(eta: f64, d: usize, target_mode: usize, shape: &ModeShape) -> Result<LossChannel> {
    if !(0.0..=1.0).contains(&eta) || eta.is_nan() {
        return Err(WitnessError::Usage(format!("transmissivity {eta} outside [0, 1]")));
    }
    if d != shape.cutoff {
        return Err(WitnessError::Shape(format!("cutoff {d} does not match shape {}", shape.cutoff)));
    }
    if target_mode >= shape.num_modes {
        return Err(WitnessError::OutOfRange(format!(
            "target mode {target_mode} >= {}",
            shape.num_modes
        )));
    }
    Ok(LossChannel { eta, kraus: loss_kraus(eta, d), target_mode, shape: *shape })
}

/// Single-mode Kraus operators of the loss channel.
pub fn loss_kraus(eta: f64, d: usize) -> Vec<CMatrix> {
    let (a, _, _) = ladder_ops(d);
    let damp = diagonal(d, |n| Complex64::new(eta.powf(n as f64 / 2.0), 0.0));
    let mut a_pow = CMatrix::identity(d, d);
    let mut factorial = 1.0;
    let mut out = Vec::with_capacity(d);
    for k in 0..d {
        if k > 0 {
            a_pow = &a_pow * &a;
            factorial *= k as f64;
        }
        let coeff = ((1.0 - eta).powi(k as i32) / factorial).sqrt();
        out.push((&damp * &a_pow).scale(coeff));
    }
    out
}

impl LossChannel {
    pub fn shape(&self) -> ModeShape {
        self.shape
    }

    /// `sum_k E_k^dag E_k` on the single mode.
    pub fn completeness(&self) -> CMatrix {
        let d = self.shape.cutoff;
        self.kraus
            .iter()
            .fold(CMatrix::zeros(d, d), |acc, e| acc + e.adjoint() * e)
    }
}

/// `rho' = sum_k E_k rho E_k^dag`, hermitized.
pub fn apply_channel(chan: &LossChannel, rho: &DensityMatrix) -> Result<DensityMatrix> {
    if rho.shape() != chan.shape {
        return Err(WitnessError::Shape("channel and state shapes differ".into()));
    }
    let out = apply_kraus_on_mode(&chan.kraus, chan.target_mode, rho.matrix(), &chan.shape);
    let mut out = DensityMatrix::from_matrix_unchecked(out, chan.shape);
    out.hermitize();
    Ok(out)
}

/// `sum_k E_k X E_k^dag` with each `E_k` acting on one mode of `X`.
pub(crate) fn apply_kraus_on_mode(
    kraus: &[CMatrix],
    mode: usize,
    x: &CMatrix,
    shape: &ModeShape,
) -> CMatrix {
    let dim = x.nrows();
    let mut acc = CMatrix::zeros(dim, dim);
    for e in kraus {
        let left = mode_op_left(e, mode, x, shape);
        acc += mode_op_right_adjoint(e, mode, &left, shape);
    }
    acc
}

/// Adjoint (Heisenberg) action `sum_k E_k^dag X E_k` on one mode.
pub(crate) fn apply_kraus_adjoint_on_mode(
    kraus: &[CMatrix],
    mode: usize,
    x: &CMatrix,
    shape: &ModeShape,
) -> CMatrix {
    let dim = x.nrows();
    let mut acc = CMatrix::zeros(dim, dim);
    for e in kraus {
        let ed = e.adjoint();
        let left = mode_op_left(&ed, mode, x, shape);
        acc += mode_op_right_adjoint(&ed, mode, &left, shape);
    }
    acc
}

/// `(I (x) op (x) I) X` for a `d x d` operator on `mode`.
pub(crate) fn mode_op_left(op: &CMatrix, mode: usize, x: &CMatrix, shape: &ModeShape) -> CMatrix {
    let d = shape.cutoff;
    let stride = d.pow((shape.num_modes - 1 - mode) as u32);
    let dim = x.nrows();
    let mut out = DMatrix::zeros(dim, dim);
    for r in 0..dim {
        let rm = (r / stride) % d;
        let base = r - rm * stride;
        for k in 0..d {
            let coef = op[(rm, k)];
            if coef == C0 {
                continue;
            }
            let src = base + k * stride;
            for c in 0..dim {
                out[(r, c)] += coef * x[(src, c)];
            }
        }
    }
    out
}

/// `X (I (x) op (x) I)^dag` for a `d x d` operator on `mode`.
pub(crate) fn mode_op_right_adjoint(
    op: &CMatrix,
    mode: usize,
    x: &CMatrix,
    shape: &ModeShape,
) -> CMatrix {
    let d = shape.cutoff;
    let stride = d.pow((shape.num_modes - 1 - mode) as u32);
    let dim = x.nrows();
    let mut out = DMatrix::zeros(dim, dim);
    for c in 0..dim {
        let cm = (c / stride) % d;
        let base = c - cm * stride;
        for k in 0..d {
            let coef = op[(cm, k)].conj();
            if coef == C0 {
                continue;
            }
            let src = base + k * stride;
            for r in 0..dim {
                out[(r, c)] += x[(r, src)] * coef;
            }
        }
    }
    out
}
