//! Binary soft-margin SVM trained by sequential minimal optimization.
//!
//! Each step picks the maximal violating pair of multipliers (the pair that
//! most violates the KKT conditions, following Keerthi's improvement to
//! Platt's heuristics), solves the two-variable subproblem analytically and
//! clips it to the box `[0, C]`. Training stops once the violation gap
//! `m - M` drops below `tol`, which bounds every point's KKT residual by
//! `tol` in margin units.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::{ClassifierError, Kernel, Result};

/// Solver settings for one binary machine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoParams {
    pub c: f64,
    pub kernel: Kernel,
    pub tol: f64,
    /// Iteration budget in units of `n` pair updates.
    pub max_passes: usize,
}

impl Default for SmoParams {
    fn default() -> Self {
        Self {
            c: 1.0,
            kernel: Kernel::Linear,
            tol: 1e-3,
            max_passes: DEFAULT_MAX_PASSES,
        }
    }
}

pub const DEFAULT_MAX_PASSES: usize = 1000;

/// Raw solver output on a precomputed kernel matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoSolution {
    pub alphas: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Final violation gap `m - M`.
    pub gap: f64,
}

/// Row-major symmetric kernel matrix.
pub struct KernelMatrix {
    n: usize,
    values: Vec<f64>,
}

impl KernelMatrix {
    pub fn new(x: &[Vec<f64>], kernel: Kernel) -> Self {
        let n = x.len();
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let k = kernel.eval(&x[i], &x[j]);
                values[i * n + j] = k;
                values[j * n + i] = k;
            }
        }
        Self { n, values }
    }

    pub fn from_values(n: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), n * n);
        Self { n, values }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }
}

/// Dual objective `sum(a) - 1/2 sum_ij a_i a_j y_i y_j K_ij`.
pub fn dual_objective(alphas: &[f64], y: &[f64], k: &KernelMatrix) -> f64 {
    let n = alphas.len();
    let mut quad = 0.0;
    for i in 0..n {
        if alphas[i] == 0.0 {
            continue;
        }
        for j in 0..n {
            quad += alphas[i] * alphas[j] * y[i] * y[j] * k.get(i, j);
        }
    }
    alphas.iter().sum::<f64>() - 0.5 * quad
}

fn in_up(alpha: f64, y: f64, c: f64) -> bool {
    (y > 0.0 && alpha < c) || (y < 0.0 && alpha > 0.0)
}

fn in_low(alpha: f64, y: f64, c: f64) -> bool {
    (y > 0.0 && alpha > 0.0) || (y < 0.0 && alpha < c)
}

/// Solves the SVM dual for labels `y` in {-1, +1}.
pub fn solve(k: &KernelMatrix, y: &[f64], c: f64, tol: f64, max_iterations: usize) -> SmoSolution {
    let n = y.len();
    let mut alpha = vec![0.0; n];
    // v_t = y_t - sum_l alpha_l y_l K_lt; the optimal bias satisfies
    // v_t = b for every free multiplier.
    let mut v: Vec<f64> = y.to_vec();
    let mut iterations = 0;

    let select = |alpha: &[f64], v: &[f64]| {
        let mut up = (usize::MAX, f64::NEG_INFINITY);
        let mut low = (usize::MAX, f64::INFINITY);
        for t in 0..n {
            if in_up(alpha[t], y[t], c) && v[t] > up.1 {
                up = (t, v[t]);
            }
            if in_low(alpha[t], y[t], c) && v[t] < low.1 {
                low = (t, v[t]);
            }
        }
        (up, low)
    };

    let (mut up, mut low) = select(&alpha, &v);
    let mut converged = false;
    while iterations < max_iterations {
        if up.0 == usize::MAX || low.0 == usize::MAX || up.1 - low.1 <= tol {
            converged = true;
            break;
        }
        let (i, j) = (up.0, low.0);
        let (yi, yj) = (y[i], y[j]);
        let eta = (k.get(i, i) + k.get(j, j) - 2.0 * k.get(i, j)).max(1e-12);
        let (lo, hi) = if yi != yj {
            ((alpha[j] - alpha[i]).max(0.0), (c + alpha[j] - alpha[i]).min(c))
        } else {
            ((alpha[i] + alpha[j] - c).max(0.0), (alpha[i] + alpha[j]).min(c))
        };
        let aj_new = (alpha[j] + yj * (v[j] - v[i]) / eta).clamp(lo, hi);
        let mut ai_new = alpha[i] + yi * yj * (alpha[j] - aj_new);
        // snap rounding noise onto the box
        if ai_new < 1e-12 * c {
            ai_new = 0.0;
        } else if ai_new > c * (1.0 - 1e-12) {
            ai_new = c;
        }
        let (di, dj) = (ai_new - alpha[i], aj_new - alpha[j]);
        alpha[i] = ai_new;
        alpha[j] = aj_new;
        let (ri, rj) = (k.row(i), k.row(j));
        for t in 0..n {
            v[t] -= di * yi * ri[t] + dj * yj * rj[t];
        }
        iterations += 1;
        (up, low) = select(&alpha, &v);
    }

    let gap = if up.0 == usize::MAX || low.0 == usize::MAX {
        0.0
    } else {
        up.1 - low.1
    };
    let free: Vec<f64> = (0..n)
        .filter(|&t| alpha[t] > 0.0 && alpha[t] < c)
        .map(|t| v[t])
        .collect();
    let bias = if !free.is_empty() {
        free.iter().sum::<f64>() / free.len() as f64
    } else {
        match (up.0, low.0) {
            (usize::MAX, usize::MAX) => 0.0,
            (usize::MAX, _) => low.1,
            (_, usize::MAX) => up.1,
            _ => 0.5 * (up.1 + low.1),
        }
    };

    SmoSolution {
        alphas: alpha,
        bias,
        iterations,
        converged,
        gap,
    }
}

#[derive(Debug, Clone, Default)]
struct LinearWeights(OnceLock<Vec<f64>>);

impl PartialEq for LinearWeights {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

/// A trained binary machine. Positive decisions vote for `classes[0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarySvm {
    pub classes: [usize; 2],
    pub kernel: Kernel,
    pub c: f64,
    pub bias: f64,
    pub support_vectors: Vec<Vec<f64>>,
    pub alphas: Vec<f64>,
    /// +1 or -1 per support vector.
    pub labels: Vec<f64>,
    /// Positions of the support vectors in the training set.
    pub support_indices: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
    #[serde(skip)]
    weights: LinearWeights,
}

impl BinarySvm {
    fn linear_weights(&self) -> &[f64] {
        self.weights.0.get_or_init(|| {
            let dim = self.support_vectors.first().map_or(0, Vec::len);
            let mut w = vec![0.0; dim];
            for ((sv, a), y) in self.support_vectors.iter().zip(&self.alphas).zip(&self.labels) {
                for (wi, xi) in w.iter_mut().zip(sv) {
                    *wi += a * y * xi;
                }
            }
            w
        })
    }

    /// `f(x) = sum_i alpha_i y_i K(sv_i, x) + b` on an already normalized
    /// vector.
    pub fn decision_value(&self, x: &[f64]) -> f64 {
        match self.kernel {
            Kernel::Linear => {
                self.linear_weights()
                    .iter()
                    .zip(x)
                    .map(|(w, v)| w * v)
                    .sum::<f64>()
                    + self.bias
            }
            kernel => {
                self.support_vectors
                    .iter()
                    .zip(&self.alphas)
                    .zip(&self.labels)
                    .map(|((sv, a), y)| a * y * kernel.eval(sv, x))
                    .sum::<f64>()
                    + self.bias
            }
        }
    }

    /// Multiplier of every training point (zero for non-support vectors).
    pub fn full_alphas(&self, n: usize) -> Vec<f64> {
        let mut a = vec![0.0; n];
        for (&i, &alpha) in self.support_indices.iter().zip(&self.alphas) {
            a[i] = alpha;
        }
        a
    }

    /// Per-point KKT violation in margin units:
    /// alpha = 0 needs y f >= 1, 0 < alpha < C needs y f = 1, alpha = C needs
    /// y f <= 1.
    pub fn kkt_residuals(&self, x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
        let alphas = self.full_alphas(x.len());
        x.iter()
            .zip(y)
            .zip(&alphas)
            .map(|((xi, &yi), &a)| {
                let margin = yi * self.decision_value(xi) - 1.0;
                if a <= 0.0 {
                    (-margin).max(0.0)
                } else if a >= self.c {
                    margin.max(0.0)
                } else {
                    margin.abs()
                }
            })
            .collect()
    }
}

/// Trains one machine on `x` with labels in {-1, +1}.
pub fn train_binary_smo(x: &[Vec<f64>], y: &[f64], params: &SmoParams) -> Result<BinarySvm> {
    if x.len() != y.len() {
        return Err(ClassifierError::LengthMismatch(x.len(), y.len()));
    }
    if !(params.c > 0.0) || !(params.tol > 0.0) {
        return Err(ClassifierError::InvalidParams(format!(
            "C = {} and tol = {} must be positive",
            params.c, params.tol
        )));
    }
    params.kernel.validate()?;
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(ClassifierError::InvalidParams("labels must be -1 or +1".into()));
    }
    if !(y.contains(&1.0) && y.contains(&-1.0)) {
        return Err(ClassifierError::SingleClass);
    }
    if let Some(d) = x.first().map(Vec::len) {
        if let Some(bad) = x.iter().find(|r| r.len() != d) {
            return Err(ClassifierError::DimensionMismatch {
                expected: d,
                actual: bad.len(),
            });
        }
    }

    let k = KernelMatrix::new(x, params.kernel);
    let max_iterations = params.max_passes.saturating_mul(x.len().max(1));
    let sol = solve(&k, y, params.c, params.tol, max_iterations);
    if !sol.converged {
        log::warn!(
            "SMO stopped after {} iterations with violation gap {:.3e} > tol {:.1e}",
            sol.iterations,
            sol.gap,
            params.tol
        );
    }

    let support_indices: Vec<usize> = (0..x.len()).filter(|&i| sol.alphas[i] > 0.0).collect();
    Ok(BinarySvm {
        classes: [0, 1],
        kernel: params.kernel,
        c: params.c,
        bias: sol.bias,
        support_vectors: support_indices.iter().map(|&i| x[i].clone()).collect(),
        alphas: support_indices.iter().map(|&i| sol.alphas[i]).collect(),
        labels: support_indices.iter().map(|&i| y[i]).collect(),
        support_indices,
        iterations: sol.iterations,
        converged: sol.converged,
        weights: LinearWeights::default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_points_split_at_origin() {
        let x = vec![vec![-1.0], vec![1.0]];
        let y = vec![-1.0, 1.0];
        let params = SmoParams {
            c: 1e6,
            ..SmoParams::default()
        };
        let m = train_binary_smo(&x, &y, &params).unwrap();
        assert!(m.converged);
        assert_eq!(m.support_indices, vec![0, 1]);
        assert!(m.decision_value(&[0.0]).abs() < 1e-9);
        assert!((m.decision_value(&[1.0]) - 1.0).abs() < 1e-9);
        assert!((m.decision_value(&[-1.0]) + 1.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_single_class_and_bad_params() {
        let x = vec![vec![0.0], vec![1.0]];
        assert!(matches!(
            train_binary_smo(&x, &[1.0, 1.0], &SmoParams::default()),
            Err(ClassifierError::SingleClass)
        ));
        let bad = SmoParams {
            c: 0.0,
            ..SmoParams::default()
        };
        assert!(train_binary_smo(&x, &[1.0, -1.0], &bad).is_err());
        assert!(train_binary_smo(&x, &[1.0, 0.0], &SmoParams::default()).is_err());
    }

    #[test]
    fn equality_constraint_holds() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.91).cos()]).collect();
        let y: Vec<f64> = (0..20).map(|i| if (i * 7) % 3 == 0 { 1.0 } else { -1.0 }).collect();
        let m = train_binary_smo(&x, &y, &SmoParams::default()).unwrap();
        let s: f64 = m.alphas.iter().zip(&m.labels).map(|(a, y)| a * y).sum();
        assert!(s.abs() < 1e-9);
        assert!(m.alphas.iter().all(|&a| a > 0.0 && a <= m.c));
    }

    #[test]
    fn iteration_cap_reports_non_convergence() {
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()]).collect();
        let y: Vec<f64> = (0..40).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let k = KernelMatrix::new(&x, Kernel::Linear);
        let sol = solve(&k, &y, 10.0, 1e-3, 1);
        assert!(!sol.converged);
        assert_eq!(sol.iterations, 1);
    }
}
