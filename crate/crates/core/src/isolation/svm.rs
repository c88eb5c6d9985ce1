//! Soft-margin support vector classification.
//!
//! Each class pair gets a binary machine trained by sequential minimal
//! optimisation with second-order working-set selection. Multiclass
//! prediction is one-vs-one voting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Kernel {
    Linear,
    /// `exp(-|x - y|^2 / (2 sigma^2))`.
    Rbf { sigma: f64 },
}

impl Kernel {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            Kernel::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            Kernel::Rbf { sigma } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
                (-d2 / (2.0 * sigma * sigma)).exp()
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Kernel::Rbf { sigma } if !(sigma > 0.0 && sigma.is_finite()) => {
                Err(Error::invalid("sigma", "must be positive and finite"))
            }
            _ => Ok(()),
        }
    }
}

/// Per-dimension affine map to zero mean and unit scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Fits on rows of `x`. Dimensions with zero spread keep scale 1.
    pub fn fit(x: &[Vec<f64>]) -> Result<Self> {
        let n = x.len();
        if n == 0 {
            return Err(Error::DegenerateData("no samples".into()));
        }
        let d = x[0].len();
        let mut mean = vec![0.0; d];
        for row in x {
            if row.len() != d {
                return Err(Error::Dimension("ragged feature rows".into()));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::DegenerateData("non-finite feature".into()));
            }
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v / n as f64;
            }
        }
        let mut scale = vec![0.0; d];
        for row in x {
            for ((s, v), m) in scale.iter_mut().zip(row).zip(&mean) {
                *s += (v - m).powi(2) / n as f64;
            }
        }
        let mut informative = 0;
        for s in scale.iter_mut() {
            *s = s.sqrt();
            if *s > 1e-300 {
                informative += 1;
            } else {
                *s = 1.0;
            }
        }
        if informative == 0 {
            return Err(Error::DegenerateData("every feature has zero variance".into()));
        }
        Ok(Standardizer { mean, scale })
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoOptions {
    /// Stop when the maximal KKT violation falls below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SmoOptions {
    fn default() -> Self {
        SmoOptions { tol: 1e-3, max_iter: 10_000_000 }
    }
}

/// Solution of the binary dual
/// `min 1/2 a'Qa - sum(a)` s.t. `0 <= a <= C`, `y'a = 0`, `Q_ij = y_i y_j K_ij`.
#[derive(Debug, Clone)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    /// Decision function is `sum_i a_i y_i K(x_i, x) - rho`.
    pub rho: f64,
    pub objective: f64,
    /// Final maximal KKT violation.
    pub violation: f64,
    pub iterations: usize,
}

const TAU: f64 = 1e-12;

/// SMO on a precomputed kernel matrix (row-major, `n x n`). Labels are ±1.
pub fn solve_dual(k: &[f64], y: &[f64], c: f64, opts: &SmoOptions) -> Result<DualSolution> {
    let n = y.len();
    if k.len() != n * n {
        return Err(Error::Dimension("kernel matrix size".into()));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::invalid("C", "must be positive and finite"));
    }
    if !y.iter().any(|&v| v > 0.0) || !y.iter().any(|&v| v < 0.0) {
        return Err(Error::DegenerateData("binary problem needs both labels".into()));
    }
    let q = |i: usize, j: usize| y[i] * y[j] * k[i * n + j];
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let is_up = |a: f64, yt: f64| (yt > 0.0 && a < c) || (yt < 0.0 && a > 0.0);
    let is_low = |a: f64, yt: f64| (yt > 0.0 && a > 0.0) || (yt < 0.0 && a < c);

    let mut iterations = 0;
    let violation = loop {
        // First index: maximal violating candidate in the up set.
        let mut g_max = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..n {
            if is_up(alpha[t], y[t]) && -y[t] * grad[t] >= g_max {
                g_max = -y[t] * grad[t];
                i = t;
            }
        }
        // Second index: largest guaranteed decrease of the objective.
        let mut g_min = f64::INFINITY;
        let mut j = usize::MAX;
        let mut best = f64::INFINITY;
        for t in 0..n {
            if !is_low(alpha[t], y[t]) {
                continue;
            }
            let v = -y[t] * grad[t];
            g_min = g_min.min(v);
            if i != usize::MAX && v < g_max {
                let b = g_max - v;
                let mut a = k[i * n + i] + k[t * n + t] - 2.0 * k[i * n + t];
                if a <= 0.0 {
                    a = TAU;
                }
                let obj = -b * b / a;
                if obj <= best {
                    best = obj;
                    j = t;
                }
            }
        }
        let gap = g_max - g_min;
        if gap < opts.tol || j == usize::MAX {
            break gap.max(0.0);
        }
        if iterations >= opts.max_iter {
            log::warn!("SMO stopped at the iteration limit with violation {gap:.3e}");
            break gap;
        }
        iterations += 1;

        let (ai_old, aj_old) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let mut quad = k[i * n + i] + k[j * n + j] + 2.0 * q(i, j);
            if quad <= 0.0 {
                quad = TAU;
            }
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
            let mut quad = k[i * n + i] + k[j * n + j] - 2.0 * q(i, j);
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = sum;
                }
                if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = sum;
                }
            }
        }
        let (di, dj) = (alpha[i] - ai_old, alpha[j] - aj_old);
        for t in 0..n {
            grad[t] += q(i, t) * di + q(j, t) * dj;
        }
    };

    // Offset: average over free variables, else midpoint of the feasible interval.
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum_free, mut n_free) = (0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 { ub = ub.min(yg) } else { lb = lb.max(yg) }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 { ub = ub.min(yg) } else { lb = lb.max(yg) }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 { sum_free / n_free as f64 } else { 0.5 * (ub + lb) };
    let objective = 0.5 * alpha.iter().zip(&grad).map(|(a, g)| a * (g - 1.0)).sum::<f64>();
    Ok(DualSolution { alpha, rho, objective, violation, iterations })
}

/// Row-major kernel matrix over `x`.
pub fn kernel_matrix(kernel: &Kernel, x: &[Vec<f64>]) -> Vec<f64> {
    let n = x.len();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = kernel.eval(&x[i], &x[j]);
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    k
}

/// Binary machine separating `positive` (decision > 0) from `negative`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryMachine {
    pub positive: usize,
    pub negative: usize,
    pub support_vectors: Vec<Vec<f64>>,
    /// `alpha_i * y_i` for each support vector.
    pub coefficients: Vec<f64>,
    pub bias: f64,
}

impl BinaryMachine {
    pub fn decision(&self, kernel: &Kernel, x: &[f64]) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.coefficients)
            .map(|(sv, c)| c * kernel.eval(sv, x))
            .sum::<f64>()
            + self.bias
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub kernel: Kernel,
    pub c: f64,
    pub normalization: Standardizer,
    /// Classes seen in training, ascending.
    pub classes: Vec<usize>,
    pub machines: Vec<BinaryMachine>,
}

/// Trains a one-vs-one classifier on raw (unstandardised) features.
pub fn train_svm(x: &[Vec<f64>], labels: &[usize], kernel: Kernel, c: f64, opts: &SmoOptions) -> Result<SvmModel> {
    if x.len() != labels.len() {
        return Err(Error::Dimension("feature and label counts differ".into()));
    }
    kernel.validate()?;
    let normalization = Standardizer::fit(x)?;
    let z: Vec<Vec<f64>> = x.iter().map(|r| normalization.apply(r)).collect();
    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::DegenerateData("need at least two classes".into()));
    }
    let mut machines = Vec::new();
    for (a_idx, &a) in classes.iter().enumerate() {
        for &b in &classes[a_idx + 1..] {
            let idx: Vec<usize> = (0..z.len()).filter(|&i| labels[i] == a || labels[i] == b).collect();
            let xs: Vec<Vec<f64>> = idx.iter().map(|&i| z[i].clone()).collect();
            let ys: Vec<f64> = idx.iter().map(|&i| if labels[i] == a { 1.0 } else { -1.0 }).collect();
            let k = kernel_matrix(&kernel, &xs);
            let sol = solve_dual(&k, &ys, c, opts)?;
            let mut support_vectors = Vec::new();
            let mut coefficients = Vec::new();
            for (t, &al) in sol.alpha.iter().enumerate() {
                if al > 0.0 {
                    support_vectors.push(xs[t].clone());
                    coefficients.push(al * ys[t]);
                }
            }
            machines.push(BinaryMachine {
                positive: a,
                negative: b,
                support_vectors,
                coefficients,
                bias: -sol.rho,
            });
        }
    }
    Ok(SvmModel { kernel, c, normalization, classes, machines })
}

/// Majority vote over pairwise winners. Ties go to the class with the
/// largest summed decision value; `scores[c]` holds that sum.
pub fn vote(n_classes: usize, pairs: &[(usize, usize, f64)]) -> usize {
    let mut votes = vec![0usize; n_classes];
    let mut scores = vec![0.0; n_classes];
    for &(pos, neg, d) in pairs {
        if d > 0.0 {
            votes[pos] += 1;
        } else {
            votes[neg] += 1;
        }
        scores[pos] += d;
        scores[neg] -= d;
    }
    let top = *votes.iter().max().expect("nonempty");
    (0..n_classes)
        .filter(|&c| votes[c] == top)
        .fold(None::<usize>, |best, c| match best {
            Some(b) if scores[b] >= scores[c] => Some(b),
            _ => Some(c),
        })
        .expect("at least one class")
}

impl SvmModel {
    pub fn n_features(&self) -> usize {
        self.normalization.mean.len()
    }

    /// Pairwise decision values on a raw feature vector.
    pub fn decision_values(&self, features: &[f64]) -> Result<Vec<(usize, usize, f64)>> {
        if features.len() != self.n_features() {
            return Err(Error::Dimension(format!(
                "model expects {} features, got {}",
                self.n_features(),
                features.len()
            )));
        }
        let z = self.normalization.apply(features);
        Ok(self
            .machines
            .iter()
            .map(|m| (m.positive, m.negative, m.decision(&self.kernel, &z)))
            .collect())
    }

    pub fn predict(&self, features: &[f64]) -> Result<usize> {
        let pairs = self.decision_values(features)?;
        let n = self.classes.iter().max().map_or(0, |m| m + 1);
        Ok(vote(n, &pairs))
    }

    pub fn predict_all(&self, x: &[Vec<f64>]) -> Result<Vec<usize>> {
        x.iter().map(|r| self.predict(r)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}
