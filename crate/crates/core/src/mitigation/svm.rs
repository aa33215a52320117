//! RBF-kernel support vector classifier fitted by sequential minimal
//! optimization with second-order working-set selection.

use serde::{Deserialize, Serialize};

use super::features::FEATURE_COUNT;

const TAU: f64 = 1e-12;
const STOP_TOLERANCE: f64 = 1e-3;

pub type FeatureVector = [f64; FEATURE_COUNT];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelClassifier {
    /// Per-feature standardization learned from the training set.
    pub feature_mean: FeatureVector,
    pub feature_std: FeatureVector,
    pub rbf_gamma: f64,
    /// Standardized support vectors.
    pub support_vectors: Vec<FeatureVector>,
    /// `α_i y_i` for each support vector.
    pub dual_coefficients: Vec<f64>,
    pub bias: f64,
}

fn rbf(a: &FeatureVector, b: &FeatureVector, gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

impl KernelClassifier {
    pub fn standardize(&self, x: &FeatureVector) -> FeatureVector {
        let mut z = *x;
        for i in 0..FEATURE_COUNT {
            z[i] = (x[i] - self.feature_mean[i]) / self.feature_std[i];
        }
        z
    }

    /// Signed decision value; positive means adversarial.
    pub fn decision(&self, x: &FeatureVector) -> f64 {
        let z = self.standardize(x);
        self.support_vectors
            .iter()
            .zip(&self.dual_coefficients)
            .map(|(sv, c)| c * rbf(sv, &z, self.rbf_gamma))
            .sum::<f64>()
            + self.bias
    }

    /// Fits on `features` with labels `+1` (adversarial) / `−1` (normal).
    /// `gamma = None` uses `1 / (d · var)` over the standardized training
    /// matrix.
    pub fn fit(features: &[FeatureVector], labels: &[f64], c: f64, gamma: Option<f64>) -> Self {
        assert_eq!(features.len(), labels.len());
        assert!(c > 0.0);
        let n = features.len();
        let mut mean = [0.0; FEATURE_COUNT];
        let mut std = [0.0; FEATURE_COUNT];
        for f in features {
            for i in 0..FEATURE_COUNT {
                mean[i] += f[i] / n as f64;
            }
        }
        for f in features {
            for i in 0..FEATURE_COUNT {
                std[i] += (f[i] - mean[i]).powi(2) / n as f64;
            }
        }
        for s in &mut std {
            *s = if *s > 0.0 { s.sqrt() } else { 1.0 };
        }
        let mut model = KernelClassifier {
            feature_mean: mean,
            feature_std: std,
            rbf_gamma: 1.0,
            support_vectors: Vec::new(),
            dual_coefficients: Vec::new(),
            bias: 0.0,
        };
        let z: Vec<FeatureVector> = features.iter().map(|f| model.standardize(f)).collect();
        model.rbf_gamma = gamma.unwrap_or_else(|| {
            let all: Vec<f64> = z.iter().flatten().copied().collect();
            let var = super::features::variance(&all);
            if var > 0.0 {
                1.0 / (FEATURE_COUNT as f64 * var)
            } else {
                1.0 / FEATURE_COUNT as f64
            }
        });
        let g = model.rbf_gamma;
        let k: Vec<Vec<f64>> = z.iter().map(|a| z.iter().map(|b| rbf(a, b, g)).collect()).collect();
        let (alpha, rho) = solve(&k, labels, c);
        for i in 0..n {
            if alpha[i] > 0.0 {
                model.support_vectors.push(z[i]);
                model.dual_coefficients.push(alpha[i] * labels[i]);
            }
        }
        model.bias = -rho;
        model
    }
}

/// Dual solver: minimizes `½ αᵀQα − eᵀα` with `Q_ij = y_i y_j K_ij`,
/// `0 ≤ α ≤ c`, `yᵀα = 0`. Returns `α` and the offset `ρ`.
fn solve(k: &[Vec<f64>], y: &[f64], c: f64) -> (Vec<f64>, f64) {
    let n = y.len();
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let max_iter = (100 * n).max(10_000);
    for _ in 0..max_iter {
        let mut g_max = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..n {
            let up = if y[t] > 0.0 { alpha[t] < c } else { alpha[t] > 0.0 };
            if up && -y[t] * grad[t] >= g_max {
                g_max = -y[t] * grad[t];
                i = t;
            }
        }
        if i == usize::MAX {
            break;
        }
        let mut g_max2 = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut best = f64::INFINITY;
        for t in 0..n {
            let low = if y[t] > 0.0 { alpha[t] > 0.0 } else { alpha[t] < c };
            if !low {
                continue;
            }
            let v = y[t] * grad[t];
            g_max2 = g_max2.max(v);
            let diff = g_max + v;
            if diff > 0.0 {
                let quad = k[i][i] + k[t][t] - 2.0 * k[i][t];
                let obj = -(diff * diff) / if quad > 0.0 { quad } else { TAU };
                if obj <= best {
                    best = obj;
                    j = t;
                }
            }
        }
        if g_max + g_max2 < STOP_TOLERANCE || j == usize::MAX {
            break;
        }

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let quad = (k[i][i] + k[j][j] - 2.0 * k[i][j]).max(TAU);
        if y[i] != y[j] {
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
            grad[t] += y[t] * (y[i] * k[t][i] * di + y[j] * k[t][j] * dj);
        }
    }

    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free_sum, mut free) = (0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            free_sum += yg;
        }
    }
    let rho = if free > 0 { free_sum / free as f64 } else { 0.5 * (ub + lb) };
    (alpha, rho)
}
