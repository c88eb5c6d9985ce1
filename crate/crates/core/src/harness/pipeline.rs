//! Stage runners and the end-to-end pipeline.
//!
//! Every stage reads and writes flat files under the run directory, so the
//! command-line tool can run them one at a time.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::grid::{expand_grid, DataSet, GridScenario};
use crate::dynamics::{default_operating_point, LinearPlant};
use crate::error::{Error, Result};
use crate::filter::{run_realization, EstimateSeries, FilterRealization};
use crate::isolation::{
    extract_windows, metrics, read_dataset, search_and_fit, write_dataset, Candidate, ConfusionMatrix, FeatureMode,
    LabeledWindow, Metrics, Signals, TrainingReport, CLASS_NAMES,
};
use crate::lmi::{synthesize, FilterDesign, VerificationReport};
use crate::sim::{fmt_float, run_scenario, TimeSeries};

/// Which feature sets a pipeline run trains and compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PipelineMode {
    Hybrid,
    Raw,
    Both,
}

impl PipelineMode {
    pub fn feature_modes(&self) -> Vec<FeatureMode> {
        match self {
            PipelineMode::Hybrid => vec![FeatureMode::Hybrid],
            PipelineMode::Raw => vec![FeatureMode::Raw],
            PipelineMode::Both => vec![FeatureMode::Hybrid, FeatureMode::Raw],
        }
    }

    fn needs_filter(&self) -> bool {
        !matches!(self, PipelineMode::Raw)
    }
}

impl std::str::FromStr for PipelineMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hybrid" => Ok(PipelineMode::Hybrid),
            "raw" => Ok(PipelineMode::Raw),
            "both" => Ok(PipelineMode::Both),
            other => Err(Error::Config(format!("unknown mode {other:?}, expected hybrid, raw or both"))),
        }
    }
}

/// Directory layout of one run.
#[derive(Debug, Clone)]
pub struct RunPaths {
    pub root: PathBuf,
    pub design: PathBuf,
    pub sim: PathBuf,
    pub features: PathBuf,
    pub models: PathBuf,
    pub report: PathBuf,
}

impl RunPaths {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        let root = root.into();
        RunPaths {
            design: root.join("design"),
            sim: root.join("sim"),
            features: root.join("features"),
            models: root.join("models"),
            report: root.join("report"),
            root,
        }
    }

    pub fn design_file(&self) -> PathBuf {
        self.design.join("design.json")
    }

    pub fn dataset_file(&self, mode: FeatureMode, set: DataSet) -> PathBuf {
        self.features.join(format!("{}_{}.csv", mode.name(), set.name()))
    }

    pub fn model_file(&self, mode: FeatureMode) -> PathBuf {
        self.models.join(format!("{}.json", mode.name()))
    }

    pub fn evaluation_file(&self, mode: FeatureMode) -> PathBuf {
        self.report.join(format!("evaluation_{}.json", mode.name()))
    }

    pub fn metrics_file(&self) -> PathBuf {
        self.report.join("metrics.csv")
    }

    fn ensure(dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(Error::from)
    }
}

/// A JSON artifact tagged with the config it came from.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Stamped<T> {
    pub config_hash: String,
    pub data: T,
}

fn write_json<T: Serialize>(path: &Path, hash: &str, data: &T) -> Result<()> {
    let stamped = Stamped { config_hash: hash.to_string(), data };
    let mut text = serde_json::to_string_pretty(&stamped)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<Stamped<T>> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Everything a stage needs: config, its hash and where to write.
pub struct Run {
    pub cfg: ExperimentConfig,
    pub hash: String,
    pub paths: RunPaths,
}

impl Run {
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let hash = cfg.hash();
        let paths = RunPaths::new(cfg.run_dir());
        Ok(Run { cfg, hash, paths })
    }

    /// Runs `f` on a worker pool sized by the config.
    pub fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> Result<R> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.cfg.workers)
            .build()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
        Ok(pool.install(f))
    }
}

fn design_matches(design: &FilterDesign, cfg: &ExperimentConfig) -> bool {
    design.options == cfg.synthesis && design.params_hash == cfg.robot.fingerprint()
}

/// Synthesises the filter and writes the design and its verification.
pub fn synthesize_stage(run: &Run) -> Result<FilterDesign> {
    let go = || -> Result<FilterDesign> {
        RunPaths::ensure(&run.paths.design)?;
        let x_e = default_operating_point(&run.cfg.robot);
        let design = synthesize(&run.cfg.robot, &x_e, &run.cfg.synthesis)?;
        write_json(&run.paths.design_file(), &run.hash, &design)?;
        write_json(&run.paths.design.join("verification.json"), &run.hash, &design.verification)?;
        let v = design.verification.as_ref().expect("verified");
        log::info!(
            "design: lambda {:.4} (swept {:.4}), gamma {:.4} (computed {:.4}), passed {}",
            v.lambda_bar, v.hinf, v.gamma_bar, v.h2, v.passed
        );
        if !v.passed {
            return Err(Error::Numerical("synthesised filter failed verification".into()));
        }
        Ok(design)
    };
    go().map_err(|e| e.in_stage("synthesize"))
}

/// Loads the stored design when it matches the config, else synthesises.
pub fn ensure_design(run: &Run) -> Result<FilterDesign> {
    match read_json::<FilterDesign>(&run.paths.design_file()) {
        Ok(stamped) if design_matches(&stamped.data, &run.cfg) => Ok(stamped.data),
        Ok(_) => {
            log::info!("stored design is stale; synthesising");
            synthesize_stage(run)
        }
        Err(Error::MissingArtifact(_)) => synthesize_stage(run),
        Err(e) => Err(e.in_stage("synthesize")),
    }
}

/// In-memory result of simulating and filtering one scenario.
#[derive(Debug, Clone)]
pub struct ScenarioResult {
    pub grid: GridScenario,
    pub series: TimeSeries,
    pub estimate: Option<EstimateSeries>,
}

impl ScenarioResult {
    pub fn windows(&self, mode: FeatureMode, run: &Run) -> Result<Vec<LabeledWindow>> {
        let sig = match mode {
            FeatureMode::Hybrid => Signals::hybrid(self.estimate.as_ref().ok_or_else(|| {
                Error::Config(format!("scenario {} has no fault estimate", self.grid.scenario.name))
            })?),
            FeatureMode::Raw => Signals::raw(&self.series),
        };
        let sc = &self.grid.scenario;
        extract_windows(&sig, &run.cfg.ml.windows, &sc.fault, Some(self.grid.span), &sc.name)
    }

    /// Post-fault normalised RMS estimation error after `settle` seconds.
    pub fn estimation_error(&self, settle: f64) -> Option<f64> {
        let onset = self.grid.scenario.fault.onset()?;
        Some(self.estimate.as_ref()?.normalized_rms_error(onset + settle))
    }
}

struct FilterContext {
    realization: FilterRealization,
    plant: LinearPlant,
}

fn simulate_all(run: &Run, set: DataSet, filter: Option<&FilterContext>) -> Result<Vec<ScenarioResult>> {
    let grid = expand_grid(&run.cfg, set)?;
    let robot = run.cfg.robot;
    grid.into_par_iter()
        .map(|g| {
            let series = run_scenario(&g.scenario, &robot)
                .map_err(|e| Error::Config(format!("{}: {e}", g.scenario.name)).in_stage("simulate"))?;
            let estimate = match filter {
                Some(fc) => Some(
                    run_realization(&fc.realization, &series, &robot, &fc.plant).map_err(|e| e.in_stage("filter"))?,
                ),
                None => None,
            };
            Ok(ScenarioResult { grid: g, series, estimate })
        })
        .collect()
}

fn filter_context(run: &Run, needed: bool) -> Result<Option<FilterContext>> {
    if !needed {
        return Ok(None);
    }
    let design = ensure_design(run)?;
    let plant = design.linear_plant(&run.cfg.robot).map_err(|e| e.in_stage("filter"))?;
    Ok(Some(FilterContext {
        realization: FilterRealization::from(&design),
        plant,
    }))
}

/// Simulates both grids and writes the closed-loop logs.
pub fn simulate_stage(run: &Run) -> Result<Vec<ScenarioResult>> {
    RunPaths::ensure(&run.paths.sim)?;
    let mut all = Vec::new();
    for set in [DataSet::Training, DataSet::Test] {
        let results = simulate_all(run, set, None)?;
        for r in &results {
            write_series(run, r)?;
        }
        all.extend(results);
    }
    Ok(all)
}

fn write_series(run: &Run, r: &ScenarioResult) -> Result<()> {
    let path = run.paths.sim.join(format!("{}.csv", r.grid.scenario.name));
    r.series
        .decimate(run.cfg.output.store_every)
        .write_csv(create(&path)?, Some(&run.hash))
        .map_err(|e| e.in_stage("simulate"))
}

/// Writes `t,f1,f2,fhat1,fhat2` for every filtered scenario.
pub fn emit_plot_data(run: &Run, results: &[ScenarioResult]) -> Result<Vec<PathBuf>> {
    RunPaths::ensure(&run.paths.sim)?;
    let mut out = Vec::new();
    for r in results {
        let Some(est) = &r.estimate else { continue };
        let path = run.paths.sim.join(format!("{}_estimate.csv", r.grid.scenario.name));
        est.decimate(run.cfg.output.store_every)
            .write_csv(create(&path)?, Some(&run.hash))
            .map_err(|e| e.in_stage("report"))?;
        out.push(path);
    }
    Ok(out)
}

/// Simulates and filters both grids and writes the fault-estimate series.
pub fn estimate_stage(run: &Run) -> Result<Vec<ScenarioResult>> {
    let fc = filter_context(run, true)?;
    let mut all = Vec::new();
    for set in [DataSet::Training, DataSet::Test] {
        all.extend(simulate_all(run, set, fc.as_ref())?);
    }
    emit_plot_data(run, &all)?;
    Ok(all)
}

/// Feature data sets written by [`gen_data_stage`].
#[derive(Debug, Clone, Default)]
pub struct GeneratedData {
    pub datasets: Vec<(FeatureMode, DataSet, Vec<LabeledWindow>)>,
    pub estimation_errors: Vec<(String, f64)>,
}

/// Settling time excluded from the reported estimation errors.
pub const SETTLING_TIME: f64 = 2.0;

/// Simulates both grids, filters when needed, and writes feature sets.
pub fn gen_data_stage(run: &Run, mode: PipelineMode) -> Result<GeneratedData> {
    let fc = filter_context(run, mode.needs_filter())?;
    RunPaths::ensure(&run.paths.features)?;
    let mut out = GeneratedData::default();
    for set in [DataSet::Training, DataSet::Test] {
        let results = simulate_all(run, set, fc.as_ref())?;
        emit_plot_data(run, &results)?;
        if run.cfg.output.write_sim {
            for r in &results {
                write_series(run, r)?;
            }
        }
        if set == DataSet::Test {
            out.estimation_errors.extend(
                results
                    .iter()
                    .filter_map(|r| Some((r.grid.scenario.name.clone(), r.estimation_error(SETTLING_TIME)?))),
            );
        }
        for fm in mode.feature_modes() {
            let mut windows = Vec::new();
            for r in &results {
                windows.extend(r.windows(fm, run).map_err(|e| e.in_stage("features"))?);
            }
            write_dataset(&windows, create(&run.paths.dataset_file(fm, set))?, Some(&run.hash))
                .map_err(|e| e.in_stage("features"))?;
            log::info!("{} {}: {} windows", fm.name(), set.name(), windows.len());
            out.datasets.push((fm, set, windows));
        }
    }
    if !out.estimation_errors.is_empty() {
        write_estimation_errors(run, &out.estimation_errors)?;
    }
    Ok(out)
}

fn write_estimation_errors(run: &Run, errors: &[(String, f64)]) -> Result<()> {
    RunPaths::ensure(&run.paths.report)?;
    let mut f = create(&run.paths.report.join("estimation_error.csv"))?;
    use std::io::Write;
    writeln!(f, "# config_hash={}", run.hash)?;
    writeln!(f, "scenario,normalized_rms_error")?;
    for (name, e) in errors {
        writeln!(f, "{name},{}", fmt_float(*e))?;
    }
    Ok(())
}

fn load_dataset(path: &Path) -> Result<Vec<LabeledWindow>> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    read_dataset(File::open(path)?)
}

fn split(windows: &[LabeledWindow]) -> (Vec<Vec<f64>>, Vec<usize>) {
    (
        windows.iter().map(|w| w.features.clone()).collect(),
        windows.iter().map(|w| w.label).collect(),
    )
}

/// Cross-validates the grid on the training windows and stores the model.
pub fn train_stage(run: &Run, mode: FeatureMode) -> Result<TrainingReport> {
    let go = || -> Result<TrainingReport> {
        let windows = load_dataset(&run.paths.dataset_file(mode, DataSet::Training))?;
        let (x, y) = split(&windows);
        let report = search_and_fit(&x, &y, &run.cfg.ml.search)?;
        RunPaths::ensure(&run.paths.models)?;
        write_json(&run.paths.model_file(mode), &run.hash, &report)?;
        log::info!(
            "{}: best {:?} with CV accuracy {:.4}",
            mode.name(),
            report.cv.best,
            report.cv.accuracy
        );
        Ok(report)
    };
    go().map_err(|e| e.in_stage("train"))
}

/// Test-set performance of one feature mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeReport {
    pub mode: FeatureMode,
    pub candidate: Candidate,
    pub cv_accuracy: f64,
    pub validation_accuracy: Option<f64>,
    pub n_train: usize,
    pub n_test: usize,
    pub confusion: ConfusionMatrix,
    pub metrics: Metrics,
}

/// Classifies the test windows with the stored model.
pub fn evaluate_stage(run: &Run, mode: FeatureMode) -> Result<ModeReport> {
    let go = || -> Result<ModeReport> {
        let trained: TrainingReport = read_json(&run.paths.model_file(mode))?.data;
        let windows = load_dataset(&run.paths.dataset_file(mode, DataSet::Test))?;
        let (x, y) = split(&windows);
        let predicted = trained.model.predict_all(&x)?;
        let confusion = ConfusionMatrix::from_predictions(&y, &predicted)?;
        let report = ModeReport {
            mode,
            candidate: trained.cv.best,
            cv_accuracy: trained.cv.accuracy,
            validation_accuracy: trained.validation_accuracy,
            n_train: trained.n_train,
            n_test: y.len(),
            metrics: metrics(&confusion)?,
            confusion,
        };
        RunPaths::ensure(&run.paths.report)?;
        report
            .confusion
            .write_csv(create(&run.paths.report.join(format!("confusion_{}.csv", mode.name())))?, Some(&run.hash))?;
        write_json(&run.paths.evaluation_file(mode), &run.hash, &report)?;
        Ok(report)
    };
    go().map_err(|e| e.in_stage("evaluate"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub config_hash: String,
    pub design: Option<VerificationReport>,
    pub modes: Vec<ModeReport>,
    /// Hybrid minus raw total detection rate, when both ran.
    pub tdr_delta: Option<f64>,
    /// Post-fault normalised RMS estimation error of each faulty test run.
    pub estimation_errors: Vec<(String, f64)>,
}

impl PipelineReport {
    pub fn mode(&self, mode: FeatureMode) -> Option<&ModeReport> {
        self.modes.iter().find(|m| m.mode == mode)
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_float).unwrap_or_default()
}

/// Writes the metrics table as CSV.
pub fn write_metrics_csv(path: &Path, hash: &str, modes: &[ModeReport]) -> Result<()> {
    let mut out = create(path)?;
    {
        use std::io::Write;
        writeln!(out, "# config_hash={hash}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ["mode", "n_train", "n_test", "fdr", "far", "tdr"].map(String::from).to_vec();
    header.extend(CLASS_NAMES.iter().map(|c| format!("tdr_{c}")));
    header.extend(["hma", "cv_accuracy", "validation_accuracy"].map(String::from));
    w.write_record(&header)?;
    for m in modes {
        let mut row = vec![
            m.mode.name().to_string(),
            m.n_train.to_string(),
            m.n_test.to_string(),
            opt(m.metrics.fdr),
            opt(m.metrics.far),
            opt(m.metrics.tdr),
        ];
        row.extend(m.metrics.per_class_tdr.iter().map(|v| opt(*v)));
        row.extend([opt(m.metrics.hma), fmt_float(m.cv_accuracy), opt(m.validation_accuracy)]);
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Collects stored evaluations into the metrics table and summary.
pub fn report_stage(run: &Run, mode: PipelineMode) -> Result<PipelineReport> {
    let go = || -> Result<PipelineReport> {
        let modes = mode
            .feature_modes()
            .into_iter()
            .map(|fm| read_json::<ModeReport>(&run.paths.evaluation_file(fm)).map(|s| s.data))
            .collect::<Result<Vec<_>>>()?;
        let design = match read_json::<FilterDesign>(&run.paths.design_file()) {
            Ok(s) if mode.needs_filter() => s.data.verification,
            _ => None,
        };
        let estimation_errors = read_estimation_errors(&run.paths.report.join("estimation_error.csv"))?;
        let tdr = |fm| modes.iter().find(|m| m.mode == fm).and_then(|m| m.metrics.tdr);
        let tdr_delta = match (tdr(FeatureMode::Hybrid), tdr(FeatureMode::Raw)) {
            (Some(h), Some(r)) => Some(h - r),
            _ => None,
        };
        let report = PipelineReport {
            config_hash: run.hash.clone(),
            design,
            modes,
            tdr_delta,
            estimation_errors,
        };
        write_metrics_csv(&run.paths.metrics_file(), &run.hash, &report.modes)?;
        let mut text = serde_json::to_string_pretty(&report)?;
        text.push('\n');
        fs::write(run.paths.report.join("report.json"), text)?;
        Ok(report)
    };
    go().map_err(|e| e.in_stage("report"))
}

fn read_estimation_errors(path: &Path) -> Result<Vec<(String, f64)>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(File::open(path)?);
    r.records()
        .map(|rec| {
            let rec = rec?;
            let v = rec[1].parse::<f64>().map_err(|e| Error::Config(format!("bad error value: {e}")))?;
            Ok((rec[0].to_string(), v))
        })
        .collect()
}

/// Synthesis, simulation, feature extraction, training, evaluation and
/// reporting in sequence.
pub fn run_pipeline(cfg: &ExperimentConfig, mode: PipelineMode) -> Result<PipelineReport> {
    let run = Run::new(cfg.clone())?;
    run.install(|| {
        gen_data_stage(&run, mode)?;
        for fm in mode.feature_modes() {
            train_stage(&run, fm)?;
            evaluate_stage(&run, fm)?;
        }
        report_stage(&run, mode)
    })?
}
