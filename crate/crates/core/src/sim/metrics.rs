//! Run outputs: per-CAV measurements, aggregates, audits, and trace rows.

use super::config::Scheme;
use crate::dynamics::Lane;
use serde::{Deserialize, Serialize};

/// Measurements of one CAV that completed the zone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavMetrics {
    pub id: u64,
    pub lane: Lane,
    /// Entry instant [s].
    pub t0: f64,
    /// Exact exit-crossing instant [s] (sub-grid resolution).
    pub t_exit: f64,
    /// `t_exit - t0` [s].
    pub travel_time: f64,
    /// Integral of `u^2 / 2` over the stay [m^2/s^3].
    pub control_effort: f64,
    /// Integrated fuel model output.
    pub fuel: f64,
    /// Number of control solves / broadcasts.
    pub comm_count: u64,
    pub v0: f64,
    pub v_exit: f64,
}

/// One detected breach of a safety invariant (amount is how far past the
/// tolerance-free boundary the quantity went, in the invariant's units).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetyViolation {
    pub t: f64,
    pub id: u64,
    /// Which invariant: `speed_max`, `speed_min`, `rear_end_gap`, or
    /// `merge_crossing`.
    pub kind: String,
    pub amount: f64,
}

/// Aggregated results of one simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub scheme: Scheme,
    pub alpha: f64,
    pub seed: u64,
    pub t_d: f64,
    pub t_max: f64,
    /// CAVs admitted into the zone.
    pub admitted: usize,
    /// CAVs that crossed the exit (runs drain completely, so this equals
    /// `admitted` unless the run was cut short by an error).
    pub completed: usize,
    /// Total control solves / broadcasts over all completed CAVs.
    pub total_comm: u64,
    /// Averages over completed CAVs (0.0 when none completed).
    pub avg_travel_time: f64,
    pub avg_control_effort: f64,
    pub avg_fuel: f64,
    /// Smallest gap between consecutive updates of any one CAV, in grid
    /// ticks; `None` when no CAV updated twice.
    pub min_trigger_gap_ticks: Option<u64>,
    /// Control solves that came back infeasible and fell back to full
    /// braking.
    pub infeasible_qp_count: u64,
    /// Whether exits happened strictly in arrival (FIFO) order.
    pub exit_order_ok: bool,
    pub safety_violations: Vec<SafetyViolation>,
    pub per_cav: Vec<CavMetrics>,
}

/// One per-CAV, per-tick trace record.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub id: u64,
    pub lane: Lane,
    pub x: f64,
    pub v: f64,
    /// Control held over the tick starting at `t`.
    pub u: f64,
    pub h1: f64,
    pub h2: f64,
    pub h3: Option<f64>,
    pub h4: Option<f64>,
    /// Whether this CAV re-solved its control at `t`.
    pub trigger: bool,
    /// For trigger rows: why the *next* update was scheduled when it was
    /// (constraint name, `t_max_cap`, `neighbor_follow`, `period`, or
    /// `infeasible`). Empty otherwise.
    pub reason: &'static str,
}

impl TraceRow {
    pub const CSV_HEADER: &'static str = "t,id,lane,x,v,u,h1,h2,h3,h4,trigger_flag,reason";

    /// Render as one CSV line (no trailing newline). Floats use the shortest
    /// round-trip form, so output is bit-identical for identical runs.
    pub fn to_csv(&self) -> String {
        let opt = |h: Option<f64>| h.map(|v| v.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.t,
            self.id,
            self.lane,
            self.x,
            self.v,
            self.u,
            self.h1,
            self.h2,
            opt(self.h3),
            opt(self.h4),
            self.trigger as u8,
            self.reason
        )
    }
}
