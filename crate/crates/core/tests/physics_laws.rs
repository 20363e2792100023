mod common;

use common::{max_abs, random_density, random_product, trace_norm, CMatrix};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::Rng;
use witness_core::circuit::{
    apply_circuit, default_settings, CircuitParams, CompiledCircuit, ShotMode,
};
use witness_core::fock::{negativity, split_negativities, BipartiteSplit, DensityMatrix, ModeShape, PureState};
use witness_core::gates::{
    apply_channel, beamsplitter_gate, loss_channel, loss_kraus, single_mode_gate, unitarity_residual, GateKind,
    DEFAULT_AMPLITUDE_LIMIT,
};
use witness_core::rng;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Transposes the digits of `b_modes` in a row-major index pair, by explicit digit arithmetic.
fn partial_transpose_oracle(m: &CMatrix, shape: ModeShape, b_modes: &[usize]) -> CMatrix {
    let d = shape.cutoff;
    let n = shape.num_modes;
    let dim = shape.total_dim();
    let to_digits = |mut i: usize| {
        let mut v = vec![0; n];
        for k in (0..n).rev() {
            v[k] = i % d;
            i /= d;
        }
        v
    };
    let to_index = |v: &[usize]| v.iter().fold(0, |acc, &x| acc * d + x);
    let mut out = CMatrix::zeros(dim, dim);
    for i in 0..dim {
        for j in 0..dim {
            let (mut a, mut b) = (to_digits(i), to_digits(j));
            for &k in b_modes {
                std::mem::swap(&mut a[k], &mut b[k]);
            }
            out[(to_index(&a), to_index(&b))] = m[(i, j)];
        }
    }
    out
}

fn oracle_negativity(rho: &DensityMatrix, b_modes: &[usize]) -> f64 {
    let pt = partial_transpose_oracle(rho.matrix(), rho.shape(), b_modes);
    (trace_norm(&pt) - 1.0) / 2.0
}

#[test]
fn rotation_and_kerr_are_exactly_unitary() {
    for d in [2, 3, 4, 6] {
        for phi in [-3.0, -0.7, 0.2, 1.9, 3.1] {
            for kind in [GateKind::Rotation(phi), GateKind::Kerr(phi)] {
                let u = single_mode_gate(kind, d).unwrap();
                assert!(unitarity_residual(&u, None) < 1e-12, "{kind:?} d={d}");
                for i in 0..d {
                    for j in 0..d {
                        if i != j {
                            assert_eq!(u[(i, j)], c(0.0, 0.0));
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn gaussian_gates_are_unitary_at_working_ranges() {
    let mut r = rng::stream(101, &[]);
    for d in [3, 4] {
        for _ in 0..20 {
            let s = single_mode_gate(GateKind::Squeeze(c(r.random_range(-1.5..1.5), 0.0)), d).unwrap();
            assert!(unitarity_residual(&s, None) < 1e-6);
            let a = c(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0));
            let dsp = single_mode_gate(GateKind::Displace(a), d).unwrap();
            assert!(unitarity_residual(&dsp, None) < 1e-6);
            let bs = beamsplitter_gate(r.random_range(0.0..std::f64::consts::PI), r.random_range(-3.0..3.0), d).unwrap();
            assert!(unitarity_residual(&bs, None) < 1e-6);
        }
    }
}

#[test]
fn beamsplitter_preserves_total_photon_number() {
    let d = 4;
    let bs = beamsplitter_gate(0.83, -1.1, d).unwrap();
    for i in 0..d * d {
        for j in 0..d * d {
            let (ni, nj) = (i / d + i % d, j / d + j % d);
            if ni != nj {
                assert_eq!(bs[(i, j)], c(0.0, 0.0), "({i},{j})");
            }
        }
    }
}

#[test]
fn loss_kraus_is_complete() {
    for d in [2, 3, 4, 5] {
        for eta in [0.0, 0.1, 0.5, 0.9, 1.0] {
            let sum = loss_kraus(eta, d).iter().fold(CMatrix::zeros(d, d), |acc, e| acc + e.adjoint() * e);
            assert!(max_abs(&(sum - CMatrix::identity(d, d))) < 1e-8, "d={d} eta={eta}");
        }
    }
}

#[test]
fn loss_channel_limits_and_single_photon() {
    let shape = ModeShape::new(1, 4).unwrap();
    let mut r = rng::stream(5, &[]);
    let rho = random_density(shape, &mut r);
    let id = apply_channel(&loss_channel(1.0, 4, 0, &shape).unwrap(), &rho).unwrap();
    assert!(max_abs(&(id.matrix() - rho.matrix())) < 1e-12);
    let vac = apply_channel(&loss_channel(0.0, 4, 0, &shape).unwrap(), &rho).unwrap();
    assert!(max_abs(&(vac.matrix() - DensityMatrix::vacuum(shape).matrix())) < 1e-12);
    let one = DensityMatrix::basis_projector(&[1], shape).unwrap();
    for eta in [0.2, 0.7] {
        let out = apply_channel(&loss_channel(eta, 4, 0, &shape).unwrap(), &one).unwrap();
        let mut expect = CMatrix::zeros(4, 4);
        expect[(1, 1)] = c(eta, 0.0);
        expect[(0, 0)] = c(1.0 - eta, 0.0);
        assert!(max_abs(&(out.matrix() - expect)) < 1e-10);
    }
}

#[test]
fn bell_negativity_matches_oracle() {
    let shape = ModeShape::new(2, 4).unwrap();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut v = nalgebra::DVector::zeros(16);
    v[0] = c(s, 0.0);
    v[5] = c(s, 0.0);
    let rho = PureState::new(v, shape).unwrap().to_density();
    let split = BipartiteSplit::new(&[0], 2).unwrap();
    assert!((negativity(&rho, &split).unwrap() - 0.5).abs() < 1e-9);
    assert!((oracle_negativity(&rho, &[1]) - 0.5).abs() < 1e-9);
}

#[test]
fn random_products_have_zero_negativity() {
    let mut r = rng::stream(77, &[]);
    for k in 0..100 {
        let shape = if k % 2 == 0 { ModeShape::new(2, 3).unwrap() } else { ModeShape::new(3, 2).unwrap() };
        let rho = random_product(shape, &mut r);
        for n in split_negativities(&rho).unwrap() {
            assert!(n.abs() < 1e-9, "product {k}: {n}");
        }
    }
}

#[test]
fn library_negativity_agrees_with_oracle_on_mixed_states() {
    let mut r = rng::stream(78, &[]);
    let shape = ModeShape::new(3, 2).unwrap();
    for _ in 0..10 {
        let rho = random_density(shape, &mut r);
        for split in BipartiteSplit::all(3) {
            let lib = negativity(&rho, &split).unwrap();
            let orc = oracle_negativity(&rho, split.subset_b());
            assert!((lib - orc).abs() < 1e-9);
        }
    }
}

fn features(compiled: &CompiledCircuit, rho: &DensityMatrix) -> Vec<f64> {
    compiled.features(rho.matrix(), ShotMode::Analytic).unwrap().values
}

fn random_compiled(shape: ModeShape, loss: f64, seed: u64) -> CompiledCircuit {
    let params = CircuitParams::random_normal(shape, 2, 0.3, &mut rng::stream(seed, &[])).unwrap();
    CompiledCircuit::new(&params, &default_settings(&shape).unwrap(), loss, DEFAULT_AMPLITUDE_LIMIT).unwrap()
}

#[test]
fn feature_map_is_an_l1_contraction() {
    let mut r = rng::stream(9, &[]);
    for (shape, loss) in [(ModeShape::new(2, 4).unwrap(), 0.0), (ModeShape::new(3, 3).unwrap(), 0.05)] {
        let compiled = random_compiled(shape, loss, 3);
        let k = compiled.num_settings() as f64;
        let bound_factor = k * (shape.cutoff as f64).powi(shape.num_modes as i32);
        for _ in 0..25 {
            let a = random_density(shape, &mut r);
            let b = random_density(shape, &mut r);
            let df: f64 = features(&compiled, &a).iter().zip(features(&compiled, &b)).map(|(x, y)| (x - y).abs()).sum();
            let dr = trace_norm(&(a.matrix() - b.matrix()));
            assert!(df <= k * dr + 1e-12);
            assert!(df <= bound_factor * dr);
        }
    }
}

#[test]
fn features_are_continuous() {
    let shape = ModeShape::new(2, 3).unwrap();
    let compiled = random_compiled(shape, 0.0, 4);
    let mut r = rng::stream(10, &[]);
    let rho = random_density(shape, &mut r);
    let other = random_density(shape, &mut r);
    let delta = other.matrix() - rho.matrix();
    let base = features(&compiled, &rho);
    let dist = |eps: f64| {
        let m = rho.matrix() + &delta * c(eps, 0.0);
        let f = features(&compiled, &DensityMatrix::from_matrix(m, shape).unwrap());
        f.iter().zip(&base).map(|(x, y)| (x - y).abs()).sum::<f64>()
    };
    let (d1, d2) = (dist(1e-2), dist(1e-4));
    assert!(d1 > 0.0);
    assert!((d1 / d2 - 100.0).abs() < 1e-3 * 100.0);
}

#[test]
fn lossless_circuit_preserves_trace_and_positivity() {
    let shape = ModeShape::new(2, 3).unwrap();
    let params = CircuitParams::random_normal(shape, 2, 0.5, &mut rng::stream(1, &[])).unwrap();
    let rho = random_density(shape, &mut rng::stream(2, &[]));
    for loss in [0.0, 0.1] {
        let out = apply_circuit(&rho, &params, loss).unwrap();
        assert!((out.trace() - 1.0).abs() < 1e-10);
        assert!(out.eigenvalues().iter().all(|&l| l > -1e-10));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn squeezed_displaced_rotated_states_stay_normalized(
        r in -1.5f64..1.5, are in -1.0f64..1.0, aim in -1.0f64..1.0, phi in -3.2f64..3.2, kappa in -1.0f64..1.0
    ) {
        for kind in [GateKind::Squeeze(c(r, 0.0)), GateKind::Displace(c(are, aim)), GateKind::Rotation(phi), GateKind::Kerr(kappa)] {
            let u = single_mode_gate(kind, 4).unwrap();
            prop_assert!(unitarity_residual(&u, None) < 1e-10);
        }
    }

    #[test]
    fn loss_is_trace_preserving(eta in 0.0f64..=1.0, seed in any::<u64>()) {
        let shape = ModeShape::new(2, 3).unwrap();
        let rho = random_density(shape, &mut rng::stream(seed, &[]));
        for mode in 0..2 {
            let out = apply_channel(&loss_channel(eta, 3, mode, &shape).unwrap(), &rho).unwrap();
            prop_assert!((out.trace() - 1.0).abs() < 1e-10);
            prop_assert!(out.eigenvalues().iter().all(|&l| l > -1e-10));
        }
    }

    #[test]
    fn partial_transpose_is_an_involution_preserving_trace(seed in any::<u64>()) {
        let shape = ModeShape::new(3, 2).unwrap();
        let rho = random_density(shape, &mut rng::stream(seed, &[]));
        for split in BipartiteSplit::all(3) {
            let pt = witness_core::fock::partial_transpose(&rho, &split).unwrap();
            prop_assert!((pt.trace() - c(1.0, 0.0)).norm() < 1e-12);
            let back = witness_core::fock::partial_transpose(&DensityMatrix::from_matrix(pt, shape).unwrap(), &split).unwrap();
            prop_assert!(max_abs(&(back - rho.matrix())) < 1e-14);
        }
    }

    #[test]
    fn features_form_distributions(seed in any::<u64>()) {
        let shape = ModeShape::new(2, 3).unwrap();
        let compiled = random_compiled(shape, 0.0, seed);
        let rho = random_density(shape, &mut rng::stream(seed ^ 1, &[]));
        let f = features(&compiled, &rho);
        for block in f.chunks(shape.total_dim()) {
            prop_assert!(block.iter().all(|&p| p >= 0.0));
            prop_assert!((block.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
    }
}
