//! Whole-scenario simulation: configuration, traffic, engine, and metrics.

mod arrivals;
mod config;
mod engine;
mod fuel;
mod metrics;

pub use arrivals::{gen_arrivals, Arrival};
pub use config::{ConfigError, FuelCoefficients, ScenarioConfig, Scheme, TrafficConfig};
pub use engine::{run, run_traced, SimError};
pub use fuel::fuel_rate;
pub use metrics::{CavMetrics, RunMetrics, SafetyViolation, TraceRow};
