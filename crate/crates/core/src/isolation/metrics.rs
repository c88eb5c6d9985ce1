//! Confusion matrices and the detection metrics derived from them.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Class names in label order.
pub const CLASS_NAMES: [&str; 3] = ["healthy", "belt", "tilt"];
pub const N_CLASSES: usize = 3;

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; N_CLASSES]; N_CLASSES],
}

impl ConfusionMatrix {
    pub fn from_predictions(truth: &[usize], predicted: &[usize]) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::Dimension("prediction and label counts differ".into()));
        }
        let mut cm = ConfusionMatrix::default();
        for (&t, &p) in truth.iter().zip(predicted) {
            if t >= N_CLASSES || p >= N_CLASSES {
                return Err(Error::Dimension(format!("label out of range: {t} / {p}")));
            }
            cm.counts[t][p] += 1;
        }
        Ok(cm)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_sum(&self, c: usize) -> u64 {
        self.counts[c].iter().sum()
    }

    pub fn write_csv<W: Write>(&self, mut out: W, config_hash: Option<&str>) -> Result<()> {
        if let Some(h) = config_hash {
            writeln!(out, "# config_hash={h}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["true\\predicted".to_string()];
        header.extend(CLASS_NAMES.iter().map(|s| s.to_string()));
        w.write_record(&header)?;
        for (c, row) in self.counts.iter().enumerate() {
            let mut rec = vec![CLASS_NAMES[c].to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Detection metrics. `None` marks a ratio whose denominator is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Fault detection rate, `TP / (TP + FN)`, any fault counted positive.
    pub fdr: Option<f64>,
    /// False alarm rate, `FP / (TN + FP)`.
    pub far: Option<f64>,
    /// Share of correctly classified samples.
    pub tdr: Option<f64>,
    /// One-vs-rest accuracy of each class.
    pub per_class_tdr: [Option<f64>; N_CLASSES],
    /// Harmonic mean of the per-class rates.
    pub hma: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn metrics(cm: &ConfusionMatrix) -> Result<Metrics> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::DegenerateData("empty confusion matrix".into()));
    }
    let c = &cm.counts;
    let tn = c[0][0];
    let fp = c[0][1] + c[0][2];
    let fn_ = c[1][0] + c[2][0];
    let tp = c[1][1] + c[1][2] + c[2][1] + c[2][2];
    let correct: u64 = (0..N_CLASSES).map(|k| c[k][k]).sum();

    let mut per_class = [None; N_CLASSES];
    for (k, slot) in per_class.iter_mut().enumerate() {
        if cm.row_sum(k) == 0 {
            continue;
        }
        let predicted_k: u64 = (0..N_CLASSES).map(|r| c[r][k]).sum();
        let tp_k = c[k][k];
        let fp_k = predicted_k - tp_k;
        let fn_k = cm.row_sum(k) - tp_k;
        let tn_k = total - tp_k - fp_k - fn_k;
        *slot = ratio(tp_k + tn_k, total);
    }
    let hma = if per_class.iter().all(Option::is_some) {
        let inv: f64 = per_class.iter().map(|v| 1.0 / v.unwrap()).sum();
        Some(N_CLASSES as f64 / inv)
    } else {
        None
    };
    Ok(Metrics {
        fdr: ratio(tp, tp + fn_),
        far: ratio(fp, tn + fp),
        tdr: ratio(correct, total),
        per_class_tdr: per_class,
        hma,
    })
}

/// Harmonic mean of per-class rates.
pub fn harmonic_mean(rates: &[f64]) -> f64 {
    rates.len() as f64 / rates.iter().map(|r| 1.0 / r).sum::<f64>()
}
