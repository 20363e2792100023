//! Labeled dataset factory.
//!
//! Entangled candidates are pure states from a named family mixed with white
//! noise and kept only if some bipartite split has negativity above
//! [`ENTANGLED_THRESHOLD`]; separable samples are explicit product states.
//! Classes are balanced by undersampling and the result is split 60/20/20.

pub mod archive;

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, WitnessError};
use crate::fock::{
    fock_index, partial_trace, purity, split_negativities, von_neumann_entropy, CVector,
    DensityMatrix, ModeShape, PureState,
};
use crate::rng::{self, tags, StreamRng};

/// A candidate entangled state must exceed this negativity on some split.
pub const ENTANGLED_THRESHOLD: f64 = 1e-7;
/// Consecutive verification failures tolerated per family.
pub const MAX_CONSECUTIVE_REJECTS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Bell,
    Ghz,
    W,
    Tmsv,
    Cat,
    Separable,
}

impl Family {
    pub const ALL: [Family; 6] =
        [Family::Bell, Family::Ghz, Family::W, Family::Tmsv, Family::Cat, Family::Separable];

    pub fn name(&self) -> &'static str {
        match self {
            Family::Bell => "bell",
            Family::Ghz => "ghz",
            Family::W => "w",
            Family::Tmsv => "tmsv",
            Family::Cat => "cat",
            Family::Separable => "separable",
        }
    }

    pub fn from_name(name: &str) -> Option<Family> {
        Family::ALL.iter().copied().find(|f| f.name() == name)
    }

    pub fn code(&self) -> u8 {
        Family::ALL.iter().position(|f| f == self).unwrap() as u8
    }

    pub fn from_code(code: u8) -> Option<Family> {
        Family::ALL.get(code as usize).copied()
    }

    pub fn is_entangled(&self) -> bool {
        !matches!(self, Family::Separable)
    }

    pub fn compatible(&self, num_modes: usize) -> bool {
        match self {
            Family::Bell | Family::Tmsv => num_modes == 2,
            Family::Ghz | Family::W => num_modes == 3,
            Family::Cat | Family::Separable => num_modes >= 2,
        }
    }

    /// Families available for `num_modes`, in canonical order.
    pub fn available(num_modes: usize) -> Vec<Family> {
        Family::ALL.iter().copied().filter(|f| f.compatible(num_modes)).collect()
    }
}

pub type GenParams = BTreeMap<String, f64>;

/// Output of a single family draw.
#[derive(Debug, Clone)]
pub enum Generated {
    Pure(PureState),
    Mixed(DensityMatrix),
}

impl Generated {
    pub fn to_density(&self) -> DensityMatrix {
        match self {
            Generated::Pure(p) => p.to_density(),
            Generated::Mixed(m) => m.clone(),
        }
    }
}

/// Relative weights of the per-mode draws used for separable products.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparableWeights {
    pub coherent: f64,
    pub fock: f64,
    pub thermal: f64,
}

impl Default for SeparableWeights {
    fn default() -> Self {
        Self { coherent: 1.0, fock: 1.0, thermal: 1.0 }
    }
}

/// Sampling ranges and weights for dataset generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationSettings {
    /// Family weights; families missing from the map get weight 0. Empty means uniform.
    pub family_weights: BTreeMap<Family, f64>,
    pub separable: SeparableWeights,
    pub max_squeezing: f64,
    pub max_coherent: f64,
    pub cat_min_amplitude: f64,
    pub cat_max_amplitude: f64,
    pub max_thermal_mean: f64,
    pub max_werner_p: f64,
}

impl Default for GenerationSettings {
    fn default() -> Self {
        Self {
            family_weights: BTreeMap::new(),
            separable: SeparableWeights::default(),
            max_squeezing: 1.5,
            max_coherent: 1.0,
            cat_min_amplitude: 0.3,
            cat_max_amplitude: 1.0,
            max_thermal_mean: 1.0,
            max_werner_p: 0.3,
        }
    }
}

impl GenerationSettings {
    /// Effective weights for the families usable at `num_modes`.
    pub fn resolved_weights(&self, num_modes: usize) -> Result<Vec<(Family, f64)>> {
        let available = Family::available(num_modes);
        let weights: Vec<(Family, f64)> = if self.family_weights.is_empty() {
            available.iter().map(|&f| (f, 1.0)).collect()
        } else {
            for (f, w) in &self.family_weights {
                if !(*w >= 0.0) || !w.is_finite() {
                    return Err(WitnessError::Usage(format!("invalid weight {w} for {}", f.name())));
                }
                if *w > 0.0 && !f.compatible(num_modes) {
                    return Err(WitnessError::Usage(format!(
                        "family {} needs a different mode count than {num_modes}",
                        f.name()
                    )));
                }
            }
            available
                .iter()
                .map(|&f| (f, self.family_weights.get(&f).copied().unwrap_or(0.0)))
                .collect()
        };
        let ent: f64 = weights.iter().filter(|(f, _)| f.is_entangled()).map(|(_, w)| w).sum();
        let sep: f64 = weights.iter().filter(|(f, _)| !f.is_entangled()).map(|(_, w)| w).sum();
        if ent <= 0.0 || sep <= 0.0 {
            return Err(WitnessError::Usage(
                "family weights must give both classes positive mass".into(),
            ));
        }
        Ok(weights)
    }
}

fn coherent_amplitudes(alpha: Complex64, d: usize) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(d);
    let pref = (-alpha.norm_sqr() / 2.0).exp();
    let mut term = Complex64::new(pref, 0.0);
    for n in 0..d {
        if n > 0 {
            term = term * alpha / (n as f64).sqrt();
        }
        out.push(term);
    }
    out
}

fn random_phase(rng: &mut StreamRng) -> f64 {
    rng.random_range(0.0..TAU)
}

fn product_amplitudes(per_mode: &[Vec<Complex64>]) -> CVector {
    let mut acc = DVector::from_element(1, Complex64::new(1.0, 0.0));
    for amps in per_mode {
        acc = acc.kronecker(&DVector::from_vec(amps.clone()));
    }
    acc
}

fn incompatible(family: Family, shape: &ModeShape) -> WitnessError {
    WitnessError::Usage(format!(
        "family {} is not defined for {} modes",
        family.name(),
        shape.num_modes
    ))
}

/// Draws one state from `family`. Entangled families return pure states.
pub fn gen_family(
    family: Family,
    shape: &ModeShape,
    settings: &GenerationSettings,
    rng: &mut StreamRng,
    params: &mut GenParams,
) -> Result<Generated> {
    if !family.compatible(shape.num_modes) {
        return Err(incompatible(family, shape));
    }
    let dim = shape.total_dim();
    let m = shape.num_modes;
    let d = shape.cutoff;
    let idx = |occ: &[usize]| fock_index(occ, shape);
    match family {
        Family::Bell | Family::Ghz => {
            let chi = random_phase(rng);
            params.insert("chi".into(), chi);
            let mut amps = CVector::zeros(dim);
            amps[idx(&vec![0; m])?] = Complex64::new(1.0, 0.0);
            amps[idx(&vec![1; m])?] = Complex64::from_polar(1.0, chi);
            Ok(Generated::Pure(PureState::new(amps, *shape)?))
        }
        Family::W => {
            let mut amps = CVector::zeros(dim);
            for k in 0..m {
                let chi = random_phase(rng);
                params.insert(format!("chi{k}"), chi);
                let mut occ = vec![0; m];
                occ[k] = 1;
                amps[idx(&occ)?] = Complex64::from_polar(1.0, chi);
            }
            Ok(Generated::Pure(PureState::new(amps, *shape)?))
        }
        Family::Tmsv => {
            let r = rng.random_range(0.0..=settings.max_squeezing);
            params.insert("r".into(), r);
            tmsv(r, shape).map(Generated::Pure)
        }
        Family::Cat => {
            let mag = rng.random_range(settings.cat_min_amplitude..=settings.cat_max_amplitude);
            let phase = random_phase(rng);
            let chi = random_phase(rng);
            params.insert("alpha_abs".into(), mag);
            params.insert("alpha_arg".into(), phase);
            params.insert("chi".into(), chi);
            cat_state(Complex64::from_polar(mag, phase), chi, shape).map(Generated::Pure)
        }
        Family::Separable => {
            let w = settings.separable;
            let total = w.coherent + w.fock + w.thermal;
            if !(total > 0.0) {
                return Err(WitnessError::Usage("separable draw weights sum to zero".into()));
            }
            let mut modes = Vec::with_capacity(m);
            for k in 0..m {
                let u = rng.random_range(0.0..total);
                let single = ModeShape::new(1, d)?;
                let state = if u < w.coherent {
                    let mag = rng.random_range(0.0..=settings.max_coherent);
                    let arg = random_phase(rng);
                    params.insert(format!("mode{k}_kind"), 0.0);
                    params.insert(format!("mode{k}_alpha_abs"), mag);
                    params.insert(format!("mode{k}_alpha_arg"), arg);
                    let amps = coherent_amplitudes(Complex64::from_polar(mag, arg), d);
                    PureState::new(DVector::from_vec(amps), single)?.to_density()
                } else if u < w.coherent + w.fock {
                    let n = rng.random_range(0..d);
                    params.insert(format!("mode{k}_kind"), 1.0);
                    params.insert(format!("mode{k}_n"), n as f64);
                    DensityMatrix::basis_projector(&[n], single)?
                } else {
                    let nbar = rng.random_range(0.0..=settings.max_thermal_mean);
                    params.insert(format!("mode{k}_kind"), 2.0);
                    params.insert(format!("mode{k}_nbar"), nbar);
                    thermal_state(nbar, d)?
                };
                modes.push(state);
            }
            let mut rho = modes[0].clone();
            for s in &modes[1..] {
                rho = rho.tensor(s)?;
            }
            Ok(Generated::Mixed(rho))
        }
    }
}

/// `normalize(sum_{n<d} tanh(r)^n |n, n>)`.
pub fn tmsv(r: f64, shape: &ModeShape) -> Result<PureState> {
    if shape.num_modes != 2 {
        return Err(incompatible(Family::Tmsv, shape));
    }
    let t = r.tanh();
    let mut amps = CVector::zeros(shape.total_dim());
    for n in 0..shape.cutoff {
        amps[fock_index(&[n, n], shape)?] = Complex64::new(t.powi(n as i32), 0.0);
    }
    PureState::new(amps, *shape)
}

/// `normalize(|alpha>^M + e^{i chi} |-alpha>^M)` with truncated coherent factors.
pub fn cat_state(alpha: Complex64, chi: f64, shape: &ModeShape) -> Result<PureState> {
    let plus = coherent_amplitudes(alpha, shape.cutoff);
    let minus = coherent_amplitudes(-alpha, shape.cutoff);
    let a = product_amplitudes(&vec![plus; shape.num_modes]);
    let b = product_amplitudes(&vec![minus; shape.num_modes]);
    let amps = a + b * Complex64::from_polar(1.0, chi);
    PureState::new(amps, *shape)
}

/// Thermal state with mean photon number `nbar`, truncated and renormalized.
pub fn thermal_state(nbar: f64, d: usize) -> Result<DensityMatrix> {
    let shape = ModeShape::new(1, d)?;
    let mut diag: Vec<f64> = (0..d)
        .map(|n| nbar.powi(n as i32) / (1.0 + nbar).powi(n as i32 + 1))
        .collect();
    let total: f64 = diag.iter().sum();
    diag.iter_mut().for_each(|p| *p /= total);
    let mut m = crate::fock::CMatrix::zeros(d, d);
    for (n, p) in diag.into_iter().enumerate() {
        m[(n, n)] = Complex64::new(p, 0.0);
    }
    DensityMatrix::from_matrix(m, shape)
}

/// `(1 - p) |psi><psi| + p I / d^M`.
pub fn wernerize(psi: &PureState, p: f64) -> Result<DensityMatrix> {
    if !(0.0..=1.0).contains(&p) {
        return Err(WitnessError::Usage(format!("mixing probability {p} outside [0, 1]")));
    }
    let pure = psi.to_density();
    let mut rho = pure.mix(&DensityMatrix::maximally_mixed(psi.shape()), p)?;
    rho.hermitize();
    Ok(rho)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledState {
    pub rho: DensityMatrix,
    /// 0 separable, 1 entangled.
    pub label: u8,
    pub family: Family,
    pub gen_params: GenParams,
    /// One value per split, in [`crate::fock::BipartiteSplit::all`] order.
    pub negativities: Vec<f64>,
}

impl LabeledState {
    pub fn max_negativity(&self) -> f64 {
        self.negativities.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<LabeledState>,
    pub validation: Vec<LabeledState>,
    pub test: Vec<LabeledState>,
    pub seed: u64,
    pub shape: ModeShape,
    pub family_weights: Vec<(Family, f64)>,
}

impl DatasetSplit {
    pub fn len(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn all(&self) -> impl Iterator<Item = &LabeledState> {
        self.train.iter().chain(&self.validation).chain(&self.test)
    }

    pub fn splits(&self) -> [(&'static str, &Vec<LabeledState>); 3] {
        [("train", &self.train), ("validation", &self.validation), ("test", &self.test)]
    }
}

fn pick_family(weights: &[(Family, f64)], rng: &mut StreamRng) -> Family {
    let total: f64 = weights.iter().map(|(_, w)| w).sum();
    let mut u = rng.random_range(0.0..total);
    for &(f, w) in weights {
        if u < w {
            return f;
        }
        u -= w;
    }
    weights.iter().rev().find(|(_, w)| *w > 0.0).unwrap().0
}

/// Draws one labeled state from `family`, regenerating rejected entangled candidates.
pub fn draw_labeled(
    family: Family,
    shape: &ModeShape,
    settings: &GenerationSettings,
    rng: &mut StreamRng,
) -> Result<LabeledState> {
    let mut rejects = 0;
    loop {
        let mut params = GenParams::new();
        let generated = gen_family(family, shape, settings, rng, &mut params)?;
        let rho = match (&generated, family.is_entangled()) {
            (Generated::Pure(psi), true) => {
                let p = rng.random_range(0.0..=settings.max_werner_p);
                params.insert("werner_p".into(), p);
                wernerize(psi, p)?
            }
            _ => generated.to_density(),
        };
        let negativities = split_negativities(&rho)?;
        let max_neg = negativities.iter().copied().fold(0.0, f64::max);
        if family.is_entangled() && max_neg <= ENTANGLED_THRESHOLD {
            rejects += 1;
            if rejects > MAX_CONSECUTIVE_REJECTS {
                return Err(WitnessError::GenerationExhausted {
                    family: family.name().into(),
                    rejects,
                });
            }
            continue;
        }
        return Ok(LabeledState {
            rho,
            label: u8::from(family.is_entangled()),
            family,
            gen_params: params,
            negativities,
        });
    }
}

/// Builds a balanced dataset of exactly `n` states and splits it 60/20/20.
pub fn build_dataset(
    n: usize,
    shape: &ModeShape,
    seed: u64,
    settings: &GenerationSettings,
) -> Result<DatasetSplit> {
    if n < 20 {
        return Err(WitnessError::Usage(format!("dataset size must be >= 20, got {n}")));
    }
    let weights = settings.resolved_weights(shape.num_modes)?;
    let sep_target = n / 2;
    let ent_target = n - sep_target;
    let mut separable = Vec::with_capacity(sep_target);
    let mut entangled = Vec::with_capacity(ent_target);
    let mut candidate: u64 = 0;
    while separable.len() < sep_target || entangled.len() < ent_target {
        let mut rng = rng::stream(seed, &[tags::DATASET, candidate]);
        candidate += 1;
        let family = pick_family(&weights, &mut rng);
        // undersampling: surplus draws of a full class are discarded
        let bucket = if family.is_entangled() { &mut entangled } else { &mut separable };
        let target = if family.is_entangled() { ent_target } else { sep_target };
        if bucket.len() >= target {
            continue;
        }
        bucket.push(draw_labeled(family, shape, settings, &mut rng)?);
    }
    let mut all: Vec<LabeledState> = separable.into_iter().chain(entangled).collect();
    let mut rng = rng::stream(seed, &[tags::SPLIT]);
    all.shuffle(&mut rng);
    let n_train = (n as f64 * 0.6).round() as usize;
    let n_val = (n as f64 * 0.2).round() as usize;
    let test = all.split_off(n_train + n_val);
    let validation = all.split_off(n_train);
    Ok(DatasetSplit { train: all, validation, test, seed, shape: *shape, family_weights: weights })
}

/// Hand-engineered classical features:
/// `[purity, single-mode entropies, split negativities, vec(Re rho), vec(Im rho)]`.
pub fn engineered_features(state: &LabeledState) -> Result<Vec<f64>> {
    let rho = &state.rho;
    let shape = rho.shape();
    let dim = shape.total_dim();
    let mut out = Vec::with_capacity(1 + shape.num_modes + state.negativities.len() + 2 * dim * dim);
    out.push(purity(rho));
    for m in 0..shape.num_modes {
        out.push(von_neumann_entropy(&partial_trace(rho, &[m])?));
    }
    out.extend(split_negativities(rho)?);
    let mat = rho.matrix();
    for i in 0..dim {
        for j in 0..dim {
            out.push(mat[(i, j)].re);
        }
    }
    for i in 0..dim {
        for j in 0..dim {
            out.push(mat[(i, j)].im);
        }
    }
    Ok(out)
}

pub fn engineered_len(shape: &ModeShape) -> usize {
    let splits = crate::fock::BipartiteSplit::all(shape.num_modes).len();
    let dim = shape.total_dim();
    1 + shape.num_modes + splits + 2 * dim * dim
}
