//! Expansion of the fault grids into concrete scenarios.

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, FaultGrid};
use crate::error::{Error, Result};
use crate::fault::TiltAngles;
use crate::sim::{FaultKind, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSet {
    Training,
    Test,
}

impl DataSet {
    pub fn name(&self) -> &'static str {
        match self {
            DataSet::Training => "train",
            DataSet::Test => "test",
        }
    }

    fn tag(&self) -> u64 {
        match self {
            DataSet::Training => 1,
            DataSet::Test => 2,
        }
    }
}

/// A scenario and the time span its windows are drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridScenario {
    pub scenario: Scenario,
    pub span: (f64, f64),
}

/// Seed of the `index`-th scenario of a data set.
pub fn scenario_seed(base: u64, set: DataSet, index: usize) -> u64 {
    base ^ ((set.tag() << 32) | index as u64)
}

fn tilt_combinations(values: &[f64]) -> Vec<[f64; 3]> {
    let mut out = Vec::new();
    for &a in values {
        for &b in values {
            for &g in values {
                out.push([a, b, g]);
            }
        }
    }
    out
}

fn expand(cfg: &ExperimentConfig, grid: &FaultGrid, set: DataSet) -> Result<Vec<GridScenario>> {
    let horizon = cfg.ml.windows.horizon;
    let d = &cfg.scenario;
    let mut faulty = Vec::new();
    for (i, &tf) in grid.belt_t_fault.iter().enumerate() {
        faulty.push((format!("{}_belt_{i:02}", set.name()), FaultKind::Belt { t_fault: tf }));
    }
    for (i, deg) in tilt_combinations(&grid.tilt_deg).into_iter().enumerate() {
        let tilt = TiltAngles::from_degrees(deg[0], deg[1], deg[2])?;
        faulty.push((
            format!("{}_tilt_{i:02}", set.name()),
            FaultKind::Tilt { tilt, t_fault: d.tilt_t_fault },
        ));
    }
    if faulty.is_empty() {
        return Err(Error::Config(format!("{} grid has no fault scenarios", set.name())));
    }
    let mut out = Vec::new();
    let mut make = |name: String, fault: FaultKind, tf: f64| {
        let mut sc = Scenario::new(name, tf + horizon, fault);
        sc.dt = d.dt;
        sc.noise = d.noise;
        sc.setpoint = d.setpoint;
        sc.seed = scenario_seed(cfg.seed, set, out.len());
        sc.validate()?;
        out.push(GridScenario { scenario: sc, span: (tf, tf + horizon) });
        Ok::<_, Error>(())
    };
    for (name, fault) in &faulty {
        let tf = fault.onset().expect("faulty");
        make(name.clone(), *fault, tf)?;
    }
    if grid.healthy_per_fault {
        for (name, fault) in &faulty {
            let tf = fault.onset().expect("faulty");
            make(name.replacen("_belt_", "_healthy_belt_", 1).replacen("_tilt_", "_healthy_tilt_", 1), FaultKind::Healthy, tf)?;
        }
    }
    Ok(out)
}

pub fn expand_training_grid(cfg: &ExperimentConfig) -> Result<Vec<GridScenario>> {
    expand(cfg, &cfg.training, DataSet::Training)
}

/// Test scenarios. Fault parameters shared with the training grid are
/// reported as a warning.
pub fn expand_test_grid(cfg: &ExperimentConfig) -> Result<Vec<GridScenario>> {
    let shared_belt: Vec<f64> = cfg
        .test
        .belt_t_fault
        .iter()
        .copied()
        .filter(|t| cfg.training.belt_t_fault.contains(t))
        .collect();
    if !shared_belt.is_empty() {
        log::warn!("test belt fault times {shared_belt:?} also appear in the training grid");
    }
    let train_tilts = tilt_combinations(&cfg.training.tilt_deg);
    let shared_tilt = tilt_combinations(&cfg.test.tilt_deg)
        .into_iter()
        .filter(|c| train_tilts.contains(c))
        .count();
    if shared_tilt > 0 {
        log::warn!("{shared_tilt} test tilt combinations also appear in the training grid");
    }
    expand(cfg, &cfg.test, DataSet::Test)
}

pub fn expand_grid(cfg: &ExperimentConfig, set: DataSet) -> Result<Vec<GridScenario>> {
    match set {
        DataSet::Training => expand_training_grid(cfg),
        DataSet::Test => expand_test_grid(cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_cardinalities() {
        let cfg = ExperimentConfig::default();
        for set in [DataSet::Training, DataSet::Test] {
            let g = expand_grid(&cfg, set).unwrap();
            let count = |l| g.iter().filter(|s| s.scenario.fault.label() == l).count();
            assert_eq!((count(0), count(1), count(2)), (16, 8, 8));
        }
    }

    #[test]
    fn seeds_are_distinct() {
        let cfg = ExperimentConfig::default();
        let mut seeds: Vec<u64> = [DataSet::Training, DataSet::Test]
            .iter()
            .flat_map(|&s| expand_grid(&cfg, s).unwrap())
            .map(|s| s.scenario.seed)
            .collect();
        let n = seeds.len();
        seeds.sort_unstable();
        seeds.dedup();
        assert_eq!(seeds.len(), n);
    }

    #[test]
    fn healthy_runs_mirror_fault_spans() {
        let g = expand_training_grid(&ExperimentConfig::default()).unwrap();
        let h = g.iter().find(|s| s.scenario.name == "train_healthy_belt_03").unwrap();
        assert_eq!(h.span, (45.0, 75.0));
        assert_eq!(h.scenario.duration, 75.0);
        assert_eq!(h.scenario.fault, FaultKind::Healthy);
    }
}
