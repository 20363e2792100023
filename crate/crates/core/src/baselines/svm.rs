//! Soft-margin RBF support vector machine solved by SMO with a
//! maximal-violating-pair working set (second-order pair selection).

use serde::{Deserialize, Serialize};

use crate::error::{Result, WitnessError};

pub const KKT_TOLERANCE: f64 = 1e-3;
pub const MAX_PASSES: usize = 1000;
const TAU: f64 = 1e-12;

/// `exp(-gamma ||x - y||^2)`.
pub fn rbf_kernel(x: &[f64], y: &[f64], gamma: f64) -> f64 {
    (-gamma * squared_distance(x, y)).exp()
}

pub fn squared_distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Pairwise squared distances, row-major `n x n`.
pub fn distance_matrix(x: &[Vec<f64>]) -> Vec<f64> {
    let n = x.len();
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = squared_distance(&x[i], &x[j]);
            out[i * n + j] = d;
            out[j * n + i] = d;
        }
    }
    out
}

/// Kernel width: a value, or derived from the training matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaSpec {
    Value(f64),
    /// `1 / (n_features * var(X))` over all entries of `X`.
    Scale,
    /// `1 / n_features`.
    Auto,
}

impl GammaSpec {
    pub fn resolve(&self, x: &[Vec<f64>]) -> Result<f64> {
        let nf = x.first().map_or(0, |r| r.len());
        if nf == 0 {
            return Err(WitnessError::Usage("cannot resolve gamma without features".into()));
        }
        let g = match *self {
            GammaSpec::Value(v) => v,
            GammaSpec::Auto => 1.0 / nf as f64,
            GammaSpec::Scale => {
                let n = (x.len() * nf) as f64;
                let mean = x.iter().flatten().sum::<f64>() / n;
                let var = x.iter().flatten().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                if var > 0.0 {
                    1.0 / (nf as f64 * var)
                } else {
                    1.0
                }
            }
        };
        if !(g > 0.0) || !g.is_finite() {
            return Err(WitnessError::Usage(format!("kernel width must be positive, got {g}")));
        }
        Ok(g)
    }

    pub fn label(&self) -> String {
        match self {
            GammaSpec::Value(v) => format!("{v}"),
            GammaSpec::Scale => "scale".into(),
            GammaSpec::Auto => "auto".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub support_vectors: Vec<Vec<f64>>,
    /// `alpha_i y_i` for each support vector.
    pub dual_coef: Vec<f64>,
    pub bias: f64,
    pub gamma: f64,
    pub c: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Dual solution on a precomputed kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    pub bias: f64,
    pub converged: bool,
    pub iterations: usize,
}

fn signs(y: &[u8]) -> Result<Vec<f64>> {
    let s: Vec<f64> = y.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect();
    let pos = s.iter().filter(|&&v| v > 0.0).count();
    if pos == 0 || pos == s.len() {
        return Err(WitnessError::Usage("SVM training needs both classes".into()));
    }
    Ok(s)
}

/// Solves `min 1/2 a^T Q a - e^T a`, `0 <= a <= C`, `y^T a = 0`, with
/// `Q_ij = y_i y_j K_ij` and `K` row-major `n x n`.
pub fn smo_solve(kernel: &[f64], y: &[u8], c: f64) -> Result<DualSolution> {
    let n = y.len();
    if kernel.len() != n * n {
        return Err(WitnessError::Shape("kernel size does not match labels".into()));
    }
    if !(c > 0.0) {
        return Err(WitnessError::Usage(format!("C must be positive, got {c}")));
    }
    let s = signs(y)?;
    let k = |i: usize, j: usize| kernel[i * n + j];
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let max_iter = MAX_PASSES.saturating_mul(n.max(1));
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = usize::MAX;
        for t in 0..n {
            let up = if s[t] > 0.0 { alpha[t] < c } else { alpha[t] > 0.0 };
            if up && -s[t] * grad[t] >= gmax {
                gmax = -s[t] * grad[t];
                i_sel = t;
            }
        }
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j_sel = usize::MAX;
        let mut obj_min = f64::INFINITY;
        if i_sel != usize::MAX {
            let i = i_sel;
            for t in 0..n {
                let low = if s[t] > 0.0 { alpha[t] > 0.0 } else { alpha[t] < c };
                if !low {
                    continue;
                }
                let v = s[t] * grad[t];
                if v >= gmax2 {
                    gmax2 = v;
                }
                let diff = gmax + v;
                if diff > 0.0 {
                    let quad = (k(i, i) + k(t, t) - 2.0 * s[i] * s[t] * k(i, t)).max(TAU);
                    let obj = -diff * diff / quad;
                    if obj <= obj_min {
                        obj_min = obj;
                        j_sel = t;
                    }
                }
            }
        }
        if i_sel == usize::MAX || j_sel == usize::MAX || gmax + gmax2 < KKT_TOLERANCE {
            converged = true;
            break;
        }
        let (i, j) = (i_sel, j_sel);
        iterations += 1;
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let qij = s[i] * s[j] * k(i, j);
        if s[i] != s[j] {
            let quad = (k(i, i) + k(j, j) + 2.0 * qij).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (k(i, i) + k(j, j) - 2.0 * qij).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += s[t] * (s[i] * k(i, t) * di + s[j] * k(j, t) * dj);
        }
    }
    if !converged {
        log::warn!("SMO stopped after {iterations} iterations without reaching the KKT tolerance");
    }
    // bias from free vectors, else the midpoint of the feasible interval
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free_sum, mut free_n) = (0.0, 0usize);
    for t in 0..n {
        let yg = s[t] * grad[t];
        let at_upper = alpha[t] >= c;
        let at_lower = alpha[t] <= 0.0;
        if at_upper {
            if s[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if at_lower {
            if s[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free_sum += yg;
            free_n += 1;
        }
    }
    let rho = if free_n > 0 { free_sum / free_n as f64 } else { (ub + lb) / 2.0 };
    Ok(DualSolution { alpha, bias: -rho, converged, iterations })
}

fn model_from_dual(x: &[Vec<f64>], y: &[u8], sol: DualSolution, gamma: f64, c: f64) -> SvmModel {
    let mut support_vectors = Vec::new();
    let mut dual_coef = Vec::new();
    for (i, &a) in sol.alpha.iter().enumerate() {
        if a > 0.0 {
            support_vectors.push(x[i].clone());
            dual_coef.push(if y[i] == 1 { a } else { -a });
        }
    }
    SvmModel {
        support_vectors,
        dual_coef,
        bias: sol.bias,
        gamma,
        c,
        converged: sol.converged,
        iterations: sol.iterations,
    }
}

pub fn svm_train(x: &[Vec<f64>], y: &[u8], c: f64, gamma: GammaSpec) -> Result<SvmModel> {
    if x.len() != y.len() || x.is_empty() {
        return Err(WitnessError::Usage("SVM training needs matching non-empty inputs".into()));
    }
    let g = gamma.resolve(x)?;
    let d = distance_matrix(x);
    svm_train_with_distances(x, y, &d, c, g)
}

/// Training on a precomputed squared-distance matrix of `x`.
pub fn svm_train_with_distances(x: &[Vec<f64>], y: &[u8], dist: &[f64], c: f64, gamma: f64) -> Result<SvmModel> {
    let kernel: Vec<f64> = dist.iter().map(|d| (-gamma * d).exp()).collect();
    let sol = smo_solve(&kernel, y, c)?;
    Ok(model_from_dual(x, y, sol, gamma, c))
}

impl SvmModel {
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.dual_coef)
            .map(|(sv, a)| a * rbf_kernel(sv, x, self.gamma))
            .sum::<f64>()
            + self.bias
    }
}

/// Signed decision values and `{0, 1}` labels.
pub fn svm_predict(model: &SvmModel, x: &[Vec<f64>]) -> (Vec<f64>, Vec<u8>) {
    let scores: Vec<f64> = x.iter().map(|r| model.decision(r)).collect();
    let labels = scores.iter().map(|&s| u8::from(s > 0.0)).collect();
    (scores, labels)
}
