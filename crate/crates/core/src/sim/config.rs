//! Scenario configuration: one declarative file describes a whole run.

use crate::cbf::BarrierParams;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// How CAVs decide when to re-solve their control and broadcast.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Re-solve on a fixed period with the plain constraints.
    TimeTriggered,
    /// Re-solve on a fixed period with margin-tightened constraints.
    TimeTriggeredModified,
    /// Margin-tightened constraints plus analytic scheduling of the next
    /// update instant.
    SelfTriggered,
}

impl Scheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::TimeTriggered => "time_triggered",
            Scheme::TimeTriggeredModified => "time_triggered_modified",
            Scheme::SelfTriggered => "self_triggered",
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Scheme {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "time_triggered" => Ok(Scheme::TimeTriggered),
            "time_triggered_modified" => Ok(Scheme::TimeTriggeredModified),
            "self_triggered" => Ok(Scheme::SelfTriggered),
            other => Err(ConfigError::Invalid(format!(
                "unknown scheme '{other}' (expected time_triggered, \
                 time_triggered_modified, or self_triggered)"
            ))),
        }
    }
}

/// Arrival process and entry-speed distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficConfig {
    /// Seed of the arrival streams. Both lanes derive their own independent
    /// stream from it, so the same seed always reproduces the same traffic
    /// no matter which scheme consumes it.
    pub rng_seed: u64,
    /// Main-road arrival rate [veh/s].
    pub main_rate: f64,
    /// On-ramp arrival rate [veh/s].
    pub ramp_rate: f64,
    /// Entry speed range [m/s]; speeds are drawn uniformly.
    pub v0_min: f64,
    pub v0_max: f64,
    /// Arrivals are generated for the window [0, horizon) seconds; the
    /// simulation then runs until every admitted CAV has exited.
    pub horizon: f64,
    /// Optional cap on the total number of CAVs across both lanes.
    #[serde(default)]
    pub max_cavs: Option<usize>,
}

/// Polynomial fuel-rate model coefficients (configuration data).
///
/// Idle/cruise consumption is cubic in speed and acceleration adds a
/// speed-dependent term proportional to positive acceleration only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FuelCoefficients {
    /// Cruise polynomial `c[0] + c[1] v + c[2] v^2 + c[3] v^3` [fuel/s].
    pub cruise: [f64; 4],
    /// Acceleration factor `a[0] + a[1] v + a[2] v^2`, multiplied by
    /// `max(u, 0)` [fuel/s per m/s^2].
    pub accel: [f64; 3],
}

/// Full parameterization of one simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scheme: Scheme,
    /// Guaranteed minimum inter-event interval; also the integration grid
    /// step [s].
    pub t_d: f64,
    /// Period of the time-triggered schemes [s]. Must equal `t_d` so the
    /// schemes stay comparable.
    pub t_s: f64,
    /// Cap on the self-triggered inter-update interval [s].
    pub t_max: f64,
    /// Time/energy trade-off weight in `[0, 1)`; 0 ignores travel time.
    pub alpha: f64,
    /// Penalty on the tracking slack in the QP objective.
    pub slack_weight: f64,
    /// Re-solve the reference profile from the current state at every
    /// control update instead of keeping the entry profile.
    #[serde(default)]
    pub replan_at_triggers: bool,
    pub barrier: BarrierParams,
    pub traffic: TrafficConfig,
    pub fuel: FuelCoefficients,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("malformed configuration: {0}")]
    Parse(#[from] toml::de::Error),
}

impl ScenarioConfig {
    /// Parse and validate a TOML scenario description.
    pub fn from_toml_str(s: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Check every cross-field invariant. Called by [`crate::sim::run`];
    /// exposed so front ends can reject a bad file before doing any work.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |msg: String| Err(ConfigError::Invalid(msg));
        if !(self.t_d > 0.0) {
            return fail(format!(
                "t_d = {} violates the minimum inter-event invariant: the \
                 interval must be strictly positive",
                self.t_d
            ));
        }
        if (self.t_s - self.t_d).abs() > 1e-12 {
            return fail(format!(
                "t_s = {} must equal t_d = {} so time- and self-triggered \
                 runs share one grid",
                self.t_s, self.t_d
            ));
        }
        if self.t_max < self.t_d - 1e-12 {
            return fail(format!(
                "t_max = {} must be at least t_d = {}",
                self.t_max, self.t_d
            ));
        }
        let steps = self.t_max / self.t_d;
        if (steps - steps.round()).abs() > 1e-9 {
            return fail(format!(
                "t_max = {} must be a whole number of t_d = {} steps",
                self.t_max, self.t_d
            ));
        }
        if !(0.0..1.0).contains(&self.alpha) {
            return fail(format!("alpha = {} must lie in [0, 1)", self.alpha));
        }
        if !(self.slack_weight > 0.0) {
            return fail(format!(
                "slack_weight = {} must be positive",
                self.slack_weight
            ));
        }
        let b = &self.barrier;
        if !(b.zone_length > 0.0) {
            return fail(format!("zone_length = {} must be positive", b.zone_length));
        }
        if b.psi < 0.0 || b.standstill_gap < 0.0 {
            return fail(format!(
                "headway psi = {} and standstill_gap = {} must be non-negative",
                b.psi, b.standstill_gap
            ));
        }
        if !(b.v_min < b.v_max) || b.v_min < 0.0 {
            return fail(format!(
                "speed range [{}, {}] must satisfy 0 <= v_min < v_max",
                b.v_min, b.v_max
            ));
        }
        if !(b.u_min < 0.0 && b.u_max > 0.0) {
            return fail(format!(
                "acceleration range [{}, {}] must straddle zero",
                b.u_min, b.u_max
            ));
        }
        if !(b.clf_gain > 0.0) {
            return fail(format!("clf_gain = {} must be positive", b.clf_gain));
        }
        let tr = &self.traffic;
        if tr.main_rate < 0.0 || tr.ramp_rate < 0.0 {
            return fail(format!(
                "arrival rates ({}, {}) must be non-negative",
                tr.main_rate, tr.ramp_rate
            ));
        }
        if !(tr.v0_min > 0.0 && tr.v0_min <= tr.v0_max && tr.v0_max <= b.v_max) {
            return fail(format!(
                "entry speed range [{}, {}] must satisfy 0 < v0_min <= v0_max \
                 <= v_max = {}",
                tr.v0_min, tr.v0_max, b.v_max
            ));
        }
        if tr.horizon < 0.0 {
            return fail(format!("horizon = {} must be non-negative", tr.horizon));
        }
        Ok(())
    }

    /// Time weight of the planning cost, derived from `alpha`.
    pub fn beta(&self) -> f64 {
        crate::profile::beta_from_alpha(self.alpha, self.barrier.u_min, self.barrier.u_max)
    }
}

/// A fully specified scenario used as a fixture across the test suite.
#[cfg(test)]
pub(crate) const SAMPLE: &str = r#"
scheme = "self_triggered"
t_d = 0.05
t_s = 0.05
t_max = 0.5
alpha = 0.25
slack_weight = 1.0

[barrier]
zone_length = 400.0
psi = 1.8
standstill_gap = 0.0
v_min = 0.0
v_max = 30.0
u_min = -5.886
u_max = 4.905
clf_gain = 10.0

[traffic]
rng_seed = 1
main_rate = 0.1
ramp_rate = 0.1
v0_min = 15.0
v0_max = 20.0
horizon = 150.0

[fuel]
cruise = [0.1569, 2.450e-2, -7.415e-4, 5.975e-5]
accel = [0.07224, 9.681e-2, 1.075e-3]
"#;
