//! Closed-loop simulation: request release, dispatch, routing, cooperative
//! planning and execution, plus the service metrics computed from a run.

pub mod engine;
pub mod metrics;
pub mod output;
pub mod scenario;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dispatch::DispatchRule;
use crate::planner::PlannerParams;

pub use engine::{replay_error, run, ModelClients, SimError, SimOutcome, VehicleTrace};
pub use metrics::{
    compute_rates, compute_task_times, distance_penalty, Frame, MeanStd, MetricsReport, RatesUndefined, TaskTimes,
};
pub use output::write_run_directory;
pub use scenario::{generate_scenario, GenerateOptions, RequestSpec, Scenario, ScenarioError, VehicleSpec, SCENARIO_SCHEMA_VERSION};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// Which dispatcher assigns free vehicles to waiting requests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum DispatcherChoice {
    Rule(DispatchRule),
    Model,
}

impl DispatcherChoice {
    pub const NAMES: [&'static str; 5] = ["distance_first", "idle_first", "fcfs", "mixed_first", "model"];

    pub fn name(self) -> &'static str {
        match self {
            DispatcherChoice::Rule(r) => r.name(),
            DispatcherChoice::Model => "model",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown dispatcher '{0}' (valid: distance_first, idle_first, fcfs, mixed_first, model)")]
pub struct UnknownDispatcher(pub String);

impl FromStr for DispatcherChoice {
    type Err = UnknownDispatcher;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "model" {
            return Ok(DispatcherChoice::Model);
        }
        s.parse::<DispatchRule>().map(DispatcherChoice::Rule).map_err(|_| UnknownDispatcher(s.to_string()))
    }
}

impl TryFrom<String> for DispatcherChoice {
    type Error = UnknownDispatcher;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<DispatcherChoice> for String {
    fn from(d: DispatcherChoice) -> String {
        d.name().to_string()
    }
}

impl fmt::Display for DispatcherChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How vehicles are split into jointly planned subgraphs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupingChoice {
    Threshold,
    Model,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown grouping '{0}' (valid: threshold, model)")]
pub struct UnknownGrouping(pub String);

impl FromStr for GroupingChoice {
    type Err = UnknownGrouping;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "threshold" => Ok(GroupingChoice::Threshold),
            "model" => Ok(GroupingChoice::Model),
            other => Err(UnknownGrouping(other.to_string())),
        }
    }
}

impl fmt::Display for GroupingChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GroupingChoice::Threshold => "threshold",
            GroupingChoice::Model => "model",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub schema_version: u32,
    /// Simulated duration, s.
    pub t_sim: f64,
    /// Requests are released in batches at multiples of this period, s.
    pub t_s: f64,
    /// Planning horizon, s.
    pub t_p: f64,
    /// Executed part of each plan, s.
    pub t_e: f64,
    pub dt: f64,
    /// Waiting limit used by `mixed_first` and the model fallback, s.
    pub t_max: f64,
    /// Distance at which a vehicle counts as arrived at its target, m.
    pub arrival_tolerance: f64,
    pub seed: u64,
    pub dispatcher: DispatcherChoice,
    pub grouping: GroupingChoice,
    /// Threads used to solve subgraphs.
    pub workers: usize,
    /// Slot length of the distance penalty series, s.
    pub dp_slot: f64,
    /// Distance that normalises the distance penalty, m.
    pub dp_d_max: f64,
    /// Densification slack factor.
    pub w_dis: f64,
    pub smooth_window: usize,
    pub smooth_order: usize,
    pub lane_change_penalty: f64,
    pub snap_radius: f64,
    /// BEV resolution, pixels per metre.
    pub bev_pixels_per_meter: f64,
    /// Render and keep a BEV frame at every dispatch.
    pub emit_bev: bool,
    /// Retrieved memories per model dispatch.
    pub memory_k: usize,
    /// Image weight in memory retrieval.
    pub memory_omega: f64,
    /// Weights, bounds and solver settings. Horizon, executed steps and
    /// time step are derived from `t_p`, `t_e` and `dt`.
    pub planner: PlannerParams,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            t_sim: 200.0,
            t_s: 10.0,
            t_p: 2.0,
            t_e: 1.0,
            dt: 0.1,
            t_max: 40.0,
            arrival_tolerance: 2.5,
            seed: 0,
            dispatcher: DispatcherChoice::Rule(DispatchRule::DistanceFirst),
            grouping: GroupingChoice::Threshold,
            workers: 1,
            dp_slot: 20.0,
            dp_d_max: 20.0,
            w_dis: 1.2,
            smooth_window: 9,
            smooth_order: 3,
            lane_change_penalty: 5.0,
            snap_radius: 5.0,
            bev_pixels_per_meter: 2.0,
            emit_bev: false,
            memory_k: 3,
            memory_omega: 0.5,
            planner: PlannerParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("config file could not be read: {0}")]
    Io(String),
    #[error("config file is not valid: {0}")]
    Parse(String),
    #[error("unsupported config schema version {0} (expected {CONFIG_SCHEMA_VERSION})")]
    UnsupportedVersion(u32),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Whole number of `dt` steps in `span`, if there is one.
fn steps(span: f64, dt: f64) -> Option<usize> {
    let n = (span / dt).round();
    ((span / dt - n).abs() < 1e-9 && n >= 1.0).then_some(n as usize)
}

impl SimConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: SimConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        if cfg.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(ConfigError::UnsupportedVersion(cfg.schema_version));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if !(self.dt > 0.0) {
            return bad("dt must be positive".into());
        }
        if steps(self.t_p, self.dt).is_none() {
            return bad(format!("t_p = {} is not a whole number of dt = {} steps", self.t_p, self.dt));
        }
        if steps(self.t_e, self.dt).is_none() || self.t_e > self.t_p {
            return bad(format!("t_e = {} must be a whole number of steps and at most t_p", self.t_e));
        }
        if !(self.t_sim > 0.0 && self.t_s > 0.0) {
            return bad("t_sim and t_s must be positive".into());
        }
        if !(self.t_max >= 0.0 && self.arrival_tolerance > 0.0) {
            return bad("t_max must be non-negative and arrival_tolerance positive".into());
        }
        if !(self.dp_slot > 0.0 && self.dp_d_max > 0.0) {
            return bad("dp_slot and dp_d_max must be positive".into());
        }
        if !(self.w_dis >= 1.0) {
            return bad("w_dis must be at least 1".into());
        }
        if self.smooth_window % 2 == 0 || self.smooth_window <= self.smooth_order {
            return bad("smooth_window must be odd and larger than smooth_order".into());
        }
        if !(self.snap_radius > 0.0 && self.lane_change_penalty >= 0.0 && self.bev_pixels_per_meter > 0.0) {
            return bad("snap_radius and bev resolution must be positive, lane_change_penalty non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.memory_omega) {
            return bad("memory_omega must lie in [0, 1]".into());
        }
        self.planner_params().validate().map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// Planner parameters with the horizon, executed steps and time step
    /// taken from this config.
    pub fn planner_params(&self) -> PlannerParams {
        let mut p = self.planner.clone();
        p.kinematics.dt = self.dt;
        p.horizon = steps(self.t_p, self.dt).unwrap_or(0);
        p.execute = steps(self.t_e, self.dt).unwrap_or(0);
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_derive_horizon() {
        let c = SimConfig::default();
        c.validate().unwrap();
        let p = c.planner_params();
        assert_eq!((p.horizon, p.execute), (20, 10));
    }

    #[test]
    fn toml_round_trip() {
        let c = SimConfig { dispatcher: DispatcherChoice::Model, seed: 7, ..Default::default() };
        assert_eq!(SimConfig::from_toml_str(&c.to_toml_string()).unwrap(), c);
    }

    #[test]
    fn rejects_unknown_keys_and_versions() {
        assert!(matches!(SimConfig::from_toml_str("schema_version = 1\nbogus = 3"), Err(ConfigError::Parse(_))));
        assert_eq!(SimConfig::from_toml_str("schema_version = 9"), Err(ConfigError::UnsupportedVersion(9)));
        let e = SimConfig::from_toml_str("schema_version = 1\ndispatcher = \"nearest\"").unwrap_err();
        assert!(e.to_string().contains("unknown dispatcher"), "{e}");
    }

    #[test]
    fn horizon_must_be_whole_steps() {
        let c = SimConfig { t_p: 2.05, ..Default::default() };
        assert!(c.validate().is_err());
        let c = SimConfig { t_e: 3.0, ..Default::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn dispatcher_names_round_trip() {
        for n in DispatcherChoice::NAMES {
            assert_eq!(n.parse::<DispatcherChoice>().unwrap().name(), n);
        }
        let e = "nearest".parse::<DispatcherChoice>().unwrap_err();
        assert!(e.to_string().contains("mixed_first"));
    }
}
