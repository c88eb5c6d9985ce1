//! Hyperparameter search by stratified k-fold cross-validation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::svm::{train_svm, Kernel, SmoOptions, Standardizer, SvmModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub kernel: Kernel,
    pub c: f64,
}

/// Search settings. RBF widths are multiples of the median pairwise
/// distance of the standardised training features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchOptions {
    pub c_grid: Vec<f64>,
    pub sigma_factors: Vec<f64>,
    pub include_linear: bool,
    pub folds: usize,
    pub seed: u64,
    /// Share of the training set held out for validation.
    pub validation_fraction: f64,
    pub smo: SmoOptions,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            c_grid: vec![0.1, 1.0, 10.0, 100.0],
            sigma_factors: vec![0.5, 1.0, 2.0, 5.0],
            include_linear: true,
            folds: 5,
            seed: 0,
            validation_fraction: 0.2,
            smo: SmoOptions { tol: 1e-3, max_iter: 1_000_000 },
        }
    }
}

impl SearchOptions {
    pub fn candidates(&self, median_distance: f64) -> Vec<Candidate> {
        let mut out = Vec::new();
        for &c in &self.c_grid {
            if self.include_linear {
                out.push(Candidate { kernel: Kernel::Linear, c });
            }
            for &f in &self.sigma_factors {
                out.push(Candidate {
                    kernel: Kernel::Rbf { sigma: f * median_distance },
                    c,
                });
            }
        }
        out
    }
}

/// Median Euclidean distance over all pairs of rows.
pub fn median_pairwise_distance(x: &[Vec<f64>]) -> f64 {
    let mut d = Vec::with_capacity(x.len() * x.len().saturating_sub(1) / 2);
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            d.push(x[i].iter().zip(&x[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt());
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    let mid = d.len() / 2;
    let (_, m, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    if *m > 0.0 { *m } else { 1.0 }
}

/// Assigns each sample a fold in `0..k`, keeping class proportions.
pub fn stratified_folds(labels: &[usize], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::invalid("folds", "need at least two folds"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold = vec![0; labels.len()];
    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    for c in classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if idx.len() < k {
            return Err(Error::DegenerateData(format!(
                "class {c} has {} samples, fewer than {k} folds",
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        for (r, i) in idx.into_iter().enumerate() {
            fold[i] = r % k;
        }
    }
    Ok(fold)
}

/// Stratified split: returns (kept, held_out) indices, both ascending.
pub fn stratified_split(labels: &[usize], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let (mut keep, mut hold) = (Vec::new(), Vec::new());
    for c in classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        idx.shuffle(&mut rng);
        let n_hold = (fraction * idx.len() as f64).round() as usize;
        hold.extend_from_slice(&idx[..n_hold]);
        keep.extend_from_slice(&idx[n_hold..]);
    }
    keep.sort_unstable();
    hold.sort_unstable();
    (keep, hold)
}

fn accuracy(model: &SvmModel, x: &[Vec<f64>], y: &[usize]) -> Result<f64> {
    let p = model.predict_all(x)?;
    Ok(p.iter().zip(y).filter(|(a, b)| a == b).count() as f64 / y.len().max(1) as f64)
}

fn subset<T: Clone>(v: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| v[i].clone()).collect()
}

/// Orders candidates with equal accuracy: smaller C, then linear, then wider RBF.
fn preference(a: &Candidate, b: &Candidate) -> std::cmp::Ordering {
    let rank = |k: &Kernel| match *k {
        Kernel::Linear => (0, 0.0),
        Kernel::Rbf { sigma } => (1, -sigma),
    };
    a.c.total_cmp(&b.c).then_with(|| {
        let (ra, rb) = (rank(&a.kernel), rank(&b.kernel));
        ra.0.cmp(&rb.0).then(ra.1.total_cmp(&rb.1))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub best: Candidate,
    pub accuracy: f64,
    /// Mean fold accuracy of every candidate, in grid order.
    pub scores: Vec<(Candidate, f64)>,
}

/// Mean k-fold accuracy of each candidate; picks the best.
pub fn cross_validate(
    x: &[Vec<f64>],
    labels: &[usize],
    candidates: &[Candidate],
    folds: usize,
    seed: u64,
    smo: &SmoOptions,
) -> Result<CvResult> {
    if candidates.is_empty() {
        return Err(Error::invalid("grid", "no hyperparameter candidates"));
    }
    let fold = stratified_folds(labels, folds, seed)?;
    let jobs: Vec<(usize, usize)> = (0..candidates.len())
        .flat_map(|c| (0..folds).map(move |f| (c, f)))
        .collect();
    let acc: Vec<f64> = jobs
        .par_iter()
        .map(|&(ci, f)| {
            let train: Vec<usize> = (0..x.len()).filter(|&i| fold[i] != f).collect();
            let test: Vec<usize> = (0..x.len()).filter(|&i| fold[i] == f).collect();
            let cand = candidates[ci];
            let model = train_svm(&subset(x, &train), &subset(labels, &train), cand.kernel, cand.c, smo)?;
            accuracy(&model, &subset(x, &test), &subset(labels, &test))
        })
        .collect::<Result<_>>()?;
    let scores: Vec<(Candidate, f64)> = candidates
        .iter()
        .enumerate()
        .map(|(ci, c)| (*c, acc[ci * folds..(ci + 1) * folds].iter().sum::<f64>() / folds as f64))
        .collect();
    let (best, accuracy) = scores
        .iter()
        .copied()
        .reduce(|b, s| {
            if s.1 > b.1 + 1e-12 || ((s.1 - b.1).abs() <= 1e-12 && preference(&s.0, &b.0).is_lt()) {
                s
            } else {
                b
            }
        })
        .expect("nonempty");
    Ok(CvResult { best, accuracy, scores })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub model: SvmModel,
    pub cv: CvResult,
    pub median_distance: f64,
    /// Accuracy on the held-out split of a model fit on the rest.
    pub validation_accuracy: Option<f64>,
    pub n_train: usize,
}

/// Holds out a validation split, cross-validates the grid on the rest,
/// then refits the winner on all samples.
pub fn search_and_fit(x: &[Vec<f64>], labels: &[usize], opts: &SearchOptions) -> Result<TrainingReport> {
    let z: Vec<Vec<f64>> = {
        let s = Standardizer::fit(x)?;
        x.iter().map(|r| s.apply(r)).collect()
    };
    let median_distance = median_pairwise_distance(&z);
    let candidates = opts.candidates(median_distance);
    let (keep, hold) = if opts.validation_fraction > 0.0 {
        stratified_split(labels, opts.validation_fraction, opts.seed)
    } else {
        ((0..labels.len()).collect(), Vec::new())
    };
    let (xk, yk) = (subset(x, &keep), subset(labels, &keep));
    let cv = cross_validate(&xk, &yk, &candidates, opts.folds, opts.seed, &opts.smo)?;
    let validation_accuracy = if hold.is_empty() {
        None
    } else {
        let m = train_svm(&xk, &yk, cv.best.kernel, cv.best.c, &opts.smo)?;
        Some(accuracy(&m, &subset(x, &hold), &subset(labels, &hold))?)
    };
    let model = train_svm(x, labels, cv.best.kernel, cv.best.c, &opts.smo)?;
    Ok(TrainingReport {
        model,
        cv,
        median_distance,
        validation_accuracy,
        n_train: x.len(),
    })
}
