#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use witness_core::fock::{DensityMatrix, ModeShape, PureState};

pub type CMatrix = DMatrix<Complex64>;

pub fn gaussian_c<R: Rng + ?Sized>(r: &mut R) -> Complex64 {
    Complex64::new(StandardNormal.sample(r), StandardNormal.sample(r))
}

pub fn random_pure<R: Rng + ?Sized>(shape: ModeShape, r: &mut R) -> PureState {
    let v = DVector::from_fn(shape.total_dim(), |_, _| gaussian_c(r));
    let n = v.norm();
    PureState::new(v / Complex64::new(n, 0.0), shape).unwrap()
}

/// `G G^dag / Tr` with a complex Gaussian `G`.
pub fn random_density<R: Rng + ?Sized>(shape: ModeShape, r: &mut R) -> DensityMatrix {
    let d = shape.total_dim();
    let g = CMatrix::from_fn(d, d, |_, _| gaussian_c(r));
    let m = &g * g.adjoint();
    let tr = m.trace();
    DensityMatrix::from_matrix(m / tr, shape).unwrap()
}

/// Tensor product of independent random single-mode density matrices.
pub fn random_product<R: Rng + ?Sized>(shape: ModeShape, r: &mut R) -> DensityMatrix {
    let single = ModeShape::new(1, shape.cutoff).unwrap();
    let mut acc = random_density(single, r);
    for _ in 1..shape.num_modes {
        acc = acc.tensor(&random_density(single, r)).unwrap();
    }
    acc
}

/// Sum of absolute eigenvalues of a Hermitian matrix.
pub fn trace_norm(m: &CMatrix) -> f64 {
    let h = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    h.symmetric_eigen().eigenvalues.iter().map(|e| e.abs()).sum()
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}
