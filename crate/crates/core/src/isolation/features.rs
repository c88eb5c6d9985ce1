//! Windowed summary statistics of fault estimates or raw input/output
//! signals.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::EstimateSeries;
use crate::sim::{fmt_float, FaultKind, TimeSeries};

/// Statistics computed per channel, in feature order.
pub const STATISTICS: [&str; 5] = ["mean", "std", "rms", "max_abs", "slope"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureMode {
    /// Statistics of the two fault-estimate channels.
    Hybrid,
    /// Statistics of the two inputs and two measured outputs.
    Raw,
}

impl FeatureMode {
    pub fn name(&self) -> &'static str {
        match self {
            FeatureMode::Hybrid => "hybrid",
            FeatureMode::Raw => "raw",
        }
    }

    pub fn n_features(&self) -> usize {
        STATISTICS.len()
            * match self {
                FeatureMode::Hybrid => 2,
                FeatureMode::Raw => 4,
            }
    }
}

impl std::str::FromStr for FeatureMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hybrid" => Ok(FeatureMode::Hybrid),
            "raw" => Ok(FeatureMode::Raw),
            other => Err(Error::Config(format!("unknown feature mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledWindow {
    pub features: Vec<f64>,
    pub label: usize,
    pub scenario: String,
}

/// Window length, stride and labelling horizon, all in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindowSpec {
    pub window: f64,
    pub stride: f64,
    /// Faulty windows must end within this long after the fault.
    pub horizon: f64,
    /// Also emit healthy-labelled windows from before the fault.
    pub include_prefault: bool,
}

impl Default for WindowSpec {
    fn default() -> Self {
        WindowSpec {
            window: 2.0,
            stride: 1.0,
            horizon: 30.0,
            include_prefault: false,
        }
    }
}

impl WindowSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.window > 0.0 && self.stride > 0.0 && self.horizon >= self.window) {
            return Err(Error::invalid("window", "need 0 < window <= horizon and stride > 0"));
        }
        Ok(())
    }
}

/// Summary statistics of one channel: mean, standard deviation, RMS,
/// largest magnitude and least-squares slope against time.
pub fn channel_statistics(t: &[f64], v: &[f64]) -> [f64; 5] {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let rms = (v.iter().map(|x| x * x).sum::<f64>() / n).sqrt();
    let max_abs = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let t_mean = t.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (ti, vi) in t.iter().zip(v) {
        sxy += (ti - t_mean) * (vi - mean);
        sxx += (ti - t_mean).powi(2);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    [mean, var.sqrt(), rms, max_abs, slope]
}

/// Feature vector of one window over several channels.
pub fn window_features(t: &[f64], channels: &[Vec<f64>]) -> Vec<f64> {
    channels
        .iter()
        .flat_map(|c| channel_statistics(t, c))
        .collect()
}

/// Signals to window, sampled on a common time base.
pub struct Signals<'a> {
    pub t: &'a [f64],
    pub channels: Vec<Vec<f64>>,
}

impl<'a> Signals<'a> {
    pub fn hybrid(est: &'a EstimateSeries) -> Self {
        Signals {
            t: &est.t,
            channels: (0..2).map(|c| est.fhat.iter().map(|v| v[c]).collect()).collect(),
        }
    }

    pub fn raw(ts: &'a TimeSeries) -> Self {
        let mut channels: Vec<Vec<f64>> = (0..2).map(|c| ts.u.iter().map(|v| v[c]).collect()).collect();
        channels.extend((0..2).map(|c| ts.y.iter().map(|v| v[c]).collect::<Vec<_>>()));
        Signals { t: &ts.t, channels }
    }
}

/// Index range of samples with `start <= t < end`.
fn sample_range(t: &[f64], start: f64, end: f64) -> (usize, usize) {
    let tol = 1e-9 * (1.0 + end.abs());
    let lo = t.partition_point(|&v| v < start - tol);
    let hi = t.partition_point(|&v| v < end - tol);
    (lo, hi)
}

/// Windows lying entirely inside `[start, end]`.
fn windows_in(sig: &Signals, spec: &WindowSpec, start: f64, end: f64, label: usize, scenario: &str) -> Vec<LabeledWindow> {
    let mut out = Vec::new();
    let mut i = 0usize;
    loop {
        let s = start + i as f64 * spec.stride;
        if s + spec.window > end + 1e-9 {
            break;
        }
        let (lo, hi) = sample_range(sig.t, s, s + spec.window);
        if hi > lo + 1 {
            let chans: Vec<Vec<f64>> = sig.channels.iter().map(|c| c[lo..hi].to_vec()).collect();
            out.push(LabeledWindow {
                features: window_features(&sig.t[lo..hi], &chans),
                label,
                scenario: scenario.to_string(),
            });
        }
        i += 1;
    }
    out
}

/// Cuts a run into labelled windows.
///
/// Faulty runs give windows inside `[t_fault, t_fault + horizon]` (and, if
/// asked, healthy windows before the fault). Healthy runs give windows
/// inside `span`, or over the whole run when `span` is `None`.
pub fn extract_windows(
    sig: &Signals,
    spec: &WindowSpec,
    fault: &FaultKind,
    span: Option<(f64, f64)>,
    scenario: &str,
) -> Result<Vec<LabeledWindow>> {
    spec.validate()?;
    if sig.t.len() < 2 {
        return Ok(Vec::new());
    }
    let (first, last) = (sig.t[0], *sig.t.last().expect("nonempty"));
    let mut out = Vec::new();
    match fault.onset() {
        Some(tf) => {
            if spec.include_prefault {
                out.extend(windows_in(sig, spec, first, tf, 0, scenario));
            }
            out.extend(windows_in(sig, spec, tf, (tf + spec.horizon).min(last), fault.label(), scenario));
        }
        None => {
            let (s, e) = span.unwrap_or((first, last));
            out.extend(windows_in(sig, spec, s.max(first), e.min(last), 0, scenario));
        }
    }
    Ok(out)
}

/// Writes windows as `feature_0..feature_k,label,scenario_id`.
pub fn write_dataset<W: Write>(windows: &[LabeledWindow], mut out: W, config_hash: Option<&str>) -> Result<()> {
    if let Some(h) = config_hash {
        writeln!(out, "# config_hash={h}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    let nf = windows.first().map_or(0, |x| x.features.len());
    let mut header: Vec<String> = (0..nf).map(|i| format!("feature_{i}")).collect();
    header.push("label".into());
    header.push("scenario_id".into());
    w.write_record(&header)?;
    for win in windows {
        if win.features.len() != nf {
            return Err(Error::Dimension("feature length differs across windows".into()));
        }
        let mut rec: Vec<String> = win.features.iter().map(|&v| fmt_float(v)).collect();
        rec.push(win.label.to_string());
        rec.push(win.scenario.clone());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset<R: Read>(input: R) -> Result<Vec<LabeledWindow>> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let n = rec.len();
        if n < 2 {
            return Err(Error::Dimension("dataset row too short".into()));
        }
        let features = (0..n - 2)
            .map(|i| rec[i].parse::<f64>().map_err(|e| Error::Config(format!("bad feature {:?}: {e}", &rec[i]))))
            .collect::<Result<Vec<_>>>()?;
        let label = rec[n - 2]
            .parse::<usize>()
            .map_err(|e| Error::Config(format!("bad label {:?}: {e}", &rec[n - 2])))?;
        out.push(LabeledWindow {
            features,
            label,
            scenario: rec[n - 1].to_string(),
        });
    }
    Ok(out)
}
