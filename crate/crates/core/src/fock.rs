//! Truncated Fock-space linear algebra.
//!
//! Basis ordering is row-major over modes: mode 0 is the most significant
//! digit, so the occupation vector `[n_0, ..., n_{M-1}]` sits at index
//! `sum_i n_i * d^(M-1-i)`. Every other module relies on this convention.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, WitnessError};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub const C0: Complex64 = Complex64 { re: 0.0, im: 0.0 };
pub const C1: Complex64 = Complex64 { re: 1.0, im: 0.0 };

/// Number of modes and per-mode cutoff of a truncated Fock space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModeShape {
    pub num_modes: usize,
    pub cutoff: usize,
}

impl ModeShape {
    pub fn new(num_modes: usize, cutoff: usize) -> Result<Self> {
        if num_modes < 1 {
            return Err(WitnessError::Shape("at least one mode is required".into()));
        }
        if cutoff < 2 {
            return Err(WitnessError::Shape(format!("cutoff must be >= 2, got {cutoff}")));
        }
        Ok(Self { num_modes, cutoff })
    }

    pub fn total_dim(&self) -> usize {
        self.cutoff.pow(self.num_modes as u32)
    }

    /// Shape obtained by appending `extra` modes of the same cutoff.
    pub fn with_extra_modes(&self, extra: usize) -> Self {
        Self { num_modes: self.num_modes + extra, cutoff: self.cutoff }
    }
}

pub fn fock_index(occupations: &[usize], shape: &ModeShape) -> Result<usize> {
    if occupations.len() != shape.num_modes {
        return Err(WitnessError::Shape(format!(
            "expected {} occupations, got {}",
            shape.num_modes,
            occupations.len()
        )));
    }
    let mut idx = 0;
    for (mode, &n) in occupations.iter().enumerate() {
        if n >= shape.cutoff {
            return Err(WitnessError::OutOfRange(format!(
                "occupation {n} of mode {mode} exceeds cutoff {}",
                shape.cutoff
            )));
        }
        idx = idx * shape.cutoff + n;
    }
    Ok(idx)
}

pub fn fock_occupations(index: usize, shape: &ModeShape) -> Result<Vec<usize>> {
    if index >= shape.total_dim() {
        return Err(WitnessError::OutOfRange(format!(
            "index {index} outside dimension {}",
            shape.total_dim()
        )));
    }
    Ok(digits(index, shape))
}

/// Occupation digits of an in-range index (no bounds check).
pub(crate) fn digits(mut index: usize, shape: &ModeShape) -> Vec<usize> {
    let mut occ = vec![0; shape.num_modes];
    for slot in occ.iter_mut().rev() {
        *slot = index % shape.cutoff;
        index /= shape.cutoff;
    }
    occ
}

/// Normalized pure state on a truncated Fock space.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    amplitudes: CVector,
    shape: ModeShape,
}

impl PureState {
    /// Builds a state from raw amplitudes, renormalizing to unit norm.
    pub fn new(amplitudes: CVector, shape: ModeShape) -> Result<Self> {
        if amplitudes.len() != shape.total_dim() {
            return Err(WitnessError::Shape(format!(
                "amplitude length {} does not match dimension {}",
                amplitudes.len(),
                shape.total_dim()
            )));
        }
        let norm = amplitudes.norm();
        if !(norm > 1e-300) || !norm.is_finite() {
            return Err(WitnessError::DegenerateState("zero-norm amplitude vector".into()));
        }
        Ok(Self { amplitudes: amplitudes.unscale(norm), shape })
    }

    pub fn basis(occupations: &[usize], shape: ModeShape) -> Result<Self> {
        let idx = fock_index(occupations, &shape)?;
        let mut amps = CVector::zeros(shape.total_dim());
        amps[idx] = C1;
        Ok(Self { amplitudes: amps, shape })
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn shape(&self) -> ModeShape {
        self.shape
    }

    pub fn to_density(&self) -> DensityMatrix {
        let m = &self.amplitudes * self.amplitudes.adjoint();
        DensityMatrix { matrix: m, shape: self.shape }
    }

    /// Tensor product; `self` occupies the leading modes.
    pub fn tensor(&self, other: &PureState) -> Result<PureState> {
        if self.shape.cutoff != other.shape.cutoff {
            return Err(WitnessError::Shape("cutoff mismatch in tensor product".into()));
        }
        let amps = self.amplitudes.kronecker(&other.amplitudes);
        Ok(PureState {
            amplitudes: amps,
            shape: self.shape.with_extra_modes(other.shape.num_modes),
        })
    }
}

/// Density operator on an M-mode truncated Fock space.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: CMatrix,
    shape: ModeShape,
}

impl DensityMatrix {
    pub fn from_matrix(matrix: CMatrix, shape: ModeShape) -> Result<Self> {
        let dim = shape.total_dim();
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(WitnessError::Shape(format!(
                "matrix is {}x{}, expected {dim}x{dim}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Self { matrix, shape })
    }

    pub(crate) fn from_matrix_unchecked(matrix: CMatrix, shape: ModeShape) -> Self {
        debug_assert_eq!(matrix.nrows(), shape.total_dim());
        Self { matrix, shape }
    }

    pub fn vacuum(shape: ModeShape) -> Self {
        let mut m = CMatrix::zeros(shape.total_dim(), shape.total_dim());
        m[(0, 0)] = C1;
        Self { matrix: m, shape }
    }

    pub fn maximally_mixed(shape: ModeShape) -> Self {
        let dim = shape.total_dim();
        let m = CMatrix::identity(dim, dim).unscale(dim as f64);
        Self { matrix: m, shape }
    }

    pub fn basis_projector(occupations: &[usize], shape: ModeShape) -> Result<Self> {
        Ok(PureState::basis(occupations, shape)?.to_density())
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn shape(&self) -> ModeShape {
        self.shape
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.matrix.diagonal().iter().map(|z| z.re).sum()
    }

    /// Replaces the matrix with its Hermitian part `(rho + rho^dagger) / 2`.
    pub fn hermitize(&mut self) {
        let n = self.matrix.nrows();
        for i in 0..n {
            self.matrix[(i, i)].im = 0.0;
            for j in (i + 1)..n {
                let avg = (self.matrix[(i, j)] + self.matrix[(j, i)].conj()) * 0.5;
                self.matrix[(i, j)] = avg;
                self.matrix[(j, i)] = avg.conj();
            }
        }
    }

    /// Largest entrywise deviation from Hermiticity.
    pub fn hermiticity_residual(&self) -> f64 {
        let n = self.matrix.nrows();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                worst = worst.max((self.matrix[(i, j)] - self.matrix[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.matrix)
    }

    /// Mean total photon number `Tr(rho * sum_i n_i)`.
    pub fn mean_photon_number(&self) -> f64 {
        (0..self.dim())
            .map(|i| {
                let n: usize = digits(i, &self.shape).iter().sum();
                n as f64 * self.matrix[(i, i)].re
            })
            .sum()
    }

    /// Convex mixture `(1 - p) self + p other`.
    pub fn mix(&self, other: &DensityMatrix, p: f64) -> Result<DensityMatrix> {
        if self.shape != other.shape {
            return Err(WitnessError::Shape("cannot mix states of different shapes".into()));
        }
        Ok(Self {
            matrix: self.matrix.scale(1.0 - p) + other.matrix.scale(p),
            shape: self.shape,
        })
    }

    pub fn tensor(&self, other: &DensityMatrix) -> Result<DensityMatrix> {
        let shape = tensor_shape(&self.shape, &other.shape)?;
        Ok(Self { matrix: self.matrix.kronecker(&other.matrix), shape })
    }
}

pub(crate) fn tensor_shape(a: &ModeShape, b: &ModeShape) -> Result<ModeShape> {
    if a.cutoff != b.cutoff {
        return Err(WitnessError::Shape(format!(
            "cutoff mismatch in tensor product: {} vs {}",
            a.cutoff, b.cutoff
        )));
    }
    Ok(a.with_extra_modes(b.num_modes))
}

/// Kronecker product of two density matrices; `a` occupies the leading modes.
pub fn tensor_product(a: &DensityMatrix, b: &DensityMatrix) -> Result<DensityMatrix> {
    a.tensor(b)
}

/// Real eigenvalues of a Hermitian matrix (only the Hermitian part is used), ascending.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let h = (m + m.adjoint()).scale(0.5);
    let mut ev: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// Two-sided partition of the modes. `subset_a` always contains mode 0.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BipartiteSplit {
    subset_a: Vec<usize>,
    subset_b: Vec<usize>,
}

impl BipartiteSplit {
    /// Builds a split from one side; the complement becomes the other side.
    pub fn new(side: &[usize], num_modes: usize) -> Result<Self> {
        let mut mask = vec![false; num_modes];
        for &m in side {
            if m >= num_modes {
                return Err(WitnessError::OutOfRange(format!("mode {m} >= {num_modes}")));
            }
            if mask[m] {
                return Err(WitnessError::Usage(format!("mode {m} repeated in split")));
            }
            mask[m] = true;
        }
        let count = mask.iter().filter(|&&x| x).count();
        if count == 0 || count == num_modes {
            return Err(WitnessError::Usage("both sides of a split must be non-empty".into()));
        }
        if !mask[0] {
            mask.iter_mut().for_each(|x| *x = !*x);
        }
        let subset_a = (0..num_modes).filter(|&m| mask[m]).collect();
        let subset_b = (0..num_modes).filter(|&m| !mask[m]).collect();
        Ok(Self { subset_a, subset_b })
    }

    pub fn subset_a(&self) -> &[usize] {
        &self.subset_a
    }

    pub fn subset_b(&self) -> &[usize] {
        &self.subset_b
    }

    /// Every distinct bipartition, ordered by the bitmask of the side holding mode 0.
    /// For three modes: `{0}|{1,2}`, `{0,1}|{2}`, `{0,2}|{1}`.
    pub fn all(num_modes: usize) -> Vec<BipartiteSplit> {
        let full = (1usize << num_modes) - 1;
        (1..full)
            .filter(|mask| mask & 1 == 1)
            .map(|mask| {
                let side: Vec<usize> = (0..num_modes).filter(|m| mask >> m & 1 == 1).collect();
                BipartiteSplit::new(&side, num_modes).expect("valid mask")
            })
            .collect()
    }
}

/// Reduced state on the modes in `keep` (in ascending mode order).
pub fn partial_trace(rho: &DensityMatrix, keep: &[usize]) -> Result<DensityMatrix> {
    let shape = rho.shape;
    if keep.is_empty() {
        return Err(WitnessError::Usage("partial trace needs at least one kept mode".into()));
    }
    let mut kept: Vec<usize> = keep.to_vec();
    kept.sort_unstable();
    kept.dedup();
    if kept.len() != keep.len() {
        return Err(WitnessError::Usage("repeated mode in keep set".into()));
    }
    if let Some(&m) = kept.iter().find(|&&m| m >= shape.num_modes) {
        return Err(WitnessError::OutOfRange(format!("mode {m} >= {}", shape.num_modes)));
    }
    let traced: Vec<usize> = (0..shape.num_modes).filter(|m| !kept.contains(m)).collect();
    let d = shape.cutoff;
    let strides: Vec<usize> = (0..shape.num_modes)
        .map(|m| d.pow((shape.num_modes - 1 - m) as u32))
        .collect();
    let offsets = |modes: &[usize]| -> Vec<usize> {
        let count = d.pow(modes.len() as u32);
        (0..count)
            .map(|mut k| {
                let mut off = 0;
                for &m in modes.iter().rev() {
                    off += (k % d) * strides[m];
                    k /= d;
                }
                off
            })
            .collect()
    };
    let keep_off = offsets(&kept);
    let trace_off = offsets(&traced);
    let out_shape = ModeShape { num_modes: kept.len(), cutoff: d };
    let kd = keep_off.len();
    let mut out = CMatrix::zeros(kd, kd);
    let m = rho.matrix();
    for &t in &trace_off {
        for (r, &ro) in keep_off.iter().enumerate() {
            for (c, &co) in keep_off.iter().enumerate() {
                out[(r, c)] += m[(ro + t, co + t)];
            }
        }
    }
    Ok(DensityMatrix { matrix: out, shape: out_shape })
}

/// Partial transpose over the modes of `split.subset_b`.
pub fn partial_transpose(rho: &DensityMatrix, split: &BipartiteSplit) -> Result<CMatrix> {
    let shape = rho.shape;
    if split.subset_a.len() + split.subset_b.len() != shape.num_modes
        || split.subset_b.iter().any(|&m| m >= shape.num_modes)
    {
        return Err(WitnessError::Shape("split does not match the state's modes".into()));
    }
    let d = shape.cutoff;
    let dim = shape.total_dim();
    // b_part[i]: contribution of subset_b digits to index i.
    let b_part: Vec<usize> = (0..dim)
        .map(|i| {
            let occ = digits(i, &shape);
            split
                .subset_b
                .iter()
                .map(|&m| occ[m] * d.pow((shape.num_modes - 1 - m) as u32))
                .sum()
        })
        .collect();
    let m = rho.matrix();
    let mut out = CMatrix::zeros(dim, dim);
    for i in 0..dim {
        for j in 0..dim {
            let ii = i - b_part[i] + b_part[j];
            let jj = j - b_part[j] + b_part[i];
            out[(ii, jj)] = m[(i, j)];
        }
    }
    Ok(out)
}

/// Absolute sum of negative eigenvalues of the partial transpose,
/// equal to `(||rho^{T_B}||_1 - 1) / 2` for unit-trace input.
pub fn negativity(rho: &DensityMatrix, split: &BipartiteSplit) -> Result<f64> {
    let tr = rho.trace();
    if (tr - 1.0).abs() > 1e-6 {
        return Err(WitnessError::Usage(format!("negativity needs unit trace, got {tr}")));
    }
    let pt = partial_transpose(rho, split)?;
    Ok(hermitian_eigenvalues(&pt).iter().filter(|&&l| l < 0.0).map(|l| -l).sum())
}

/// Negativity for every split in [`BipartiteSplit::all`] order.
pub fn split_negativities(rho: &DensityMatrix) -> Result<Vec<f64>> {
    BipartiteSplit::all(rho.shape.num_modes)
        .iter()
        .map(|s| negativity(rho, s))
        .collect()
}

pub fn purity(rho: &DensityMatrix) -> f64 {
    rho.matrix.iter().map(|z| z.norm_sqr()).sum()
}

/// Von Neumann entropy in nats; eigenvalues at or below 1e-12 are dropped.
pub fn von_neumann_entropy(rho: &DensityMatrix) -> f64 {
    rho.eigenvalues()
        .into_iter()
        .filter(|&l| l > 1e-12)
        .map(|l| -l * l.ln())
        .sum()
}
