//! Experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::isolation::{SearchOptions, WindowSpec};
use crate::lmi::SynthesisOptions;
use crate::params::{short_hash, RobotParams};
use crate::sim::Setpoint;

/// Settings shared by every simulated run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioDefaults {
    pub dt: f64,
    /// Uniform encoder noise amplitude.
    pub noise: f64,
    /// Fault time for tilt runs, which the grids leave unspecified.
    pub tilt_t_fault: f64,
    pub setpoint: Setpoint,
}

impl Default for ScenarioDefaults {
    fn default() -> Self {
        ScenarioDefaults {
            dt: 1e-3,
            noise: 1e-6,
            tilt_t_fault: 50.0,
            setpoint: Setpoint::default(),
        }
    }
}

/// Fault parameters of one data set. Every tilt combination draws each of
/// the three angles from `tilt_deg`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultGrid {
    pub belt_t_fault: Vec<f64>,
    pub tilt_deg: Vec<f64>,
    /// Add one healthy run per faulty run.
    #[serde(default = "yes")]
    pub healthy_per_fault: bool,
}

fn yes() -> bool {
    true
}

fn arithmetic(start: f64, step: f64, count: usize) -> Vec<f64> {
    (0..count).map(|i| start + step * i as f64).collect()
}

impl FaultGrid {
    pub fn training() -> Self {
        FaultGrid {
            belt_t_fault: arithmetic(30.0, 5.0, 8),
            tilt_deg: vec![2.0, 5.0],
            healthy_per_fault: true,
        }
    }

    pub fn test() -> Self {
        FaultGrid {
            belt_t_fault: arithmetic(27.0, 4.5, 8),
            tilt_deg: vec![1.8, 4.5],
            healthy_per_fault: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MlConfig {
    pub windows: WindowSpec,
    pub search: SearchOptions,
}

impl Default for MlConfig {
    fn default() -> Self {
        MlConfig {
            windows: WindowSpec::default(),
            search: SearchOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Root directory; a run writes to `<dir>/<name>/`.
    pub dir: PathBuf,
    /// Keep every n-th sample in emitted series.
    pub store_every: usize,
    /// Also write full closed-loop logs during the pipeline.
    pub write_sim: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("runs"),
            store_every: 50,
            write_sim: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub name: String,
    /// Base seed; scenario seeds are derived from it.
    pub seed: u64,
    /// Worker threads; 0 picks the number of cores.
    pub workers: usize,
    pub robot: RobotParams,
    pub scenario: ScenarioDefaults,
    pub synthesis: SynthesisOptions,
    pub training: FaultGrid,
    pub test: FaultGrid,
    pub ml: MlConfig,
    pub output: OutputConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "default".into(),
            seed: 2024,
            workers: 0,
            robot: RobotParams::default(),
            scenario: ScenarioDefaults::default(),
            synthesis: SynthesisOptions::default(),
            training: FaultGrid::training(),
            test: FaultGrid::test(),
            ml: MlConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file. The name `default` selects the built-in config.
    pub fn load(path: &Path) -> Result<Self> {
        if path.as_os_str() == "default" {
            return Ok(Self::default());
        }
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(Error::Config(format!("run name {:?} is not a plain directory name", self.name)));
        }
        self.robot.validate()?;
        self.ml.windows.validate()?;
        for (label, grid) in [("training", &self.training), ("test", &self.test)] {
            if grid.belt_t_fault.is_empty() && grid.tilt_deg.is_empty() {
                return Err(Error::Config(format!("{label} grid is empty")));
            }
            if grid.belt_t_fault.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
                return Err(Error::Config(format!("{label} grid has a non-positive fault time")));
            }
        }
        if self.ml.search.c_grid.is_empty() || self.ml.search.folds < 2 {
            return Err(Error::Config("ml search needs a C grid and at least two folds".into()));
        }
        if !(0.0..1.0).contains(&self.ml.search.validation_fraction) {
            return Err(Error::Config("validation_fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// Short digest of the canonical serialised config.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serialises");
        short_hash(&canonical)
    }

    pub fn run_dir(&self) -> PathBuf {
        self.output.dir.join(&self.name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg = ExperimentConfig::from_toml("name = \"quick\"\n[training]\nbelt_t_fault = [40.0]\ntilt_deg = []\n").unwrap();
        assert_eq!(cfg.name, "quick");
        assert_eq!(cfg.test, FaultGrid::test());
        assert!(cfg.training.healthy_per_fault);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml("nmae = \"typo\"").is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed += 1;
        assert_ne!(a.hash(), b.hash());
    }
}
