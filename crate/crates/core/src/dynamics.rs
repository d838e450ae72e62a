//! Longitudinal vehicle kinematics inside the control zone.
//!
//! Every CAV is modeled as a double integrator driven by a piecewise-constant
//! acceleration command: between two control updates the position advances by
//! the exact closed-form kinematics, so no ODE integration (and no
//! integration error) is involved anywhere in the simulator.

use crate::coordinator::CoordinatorRecord;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Identifier assigned to a CAV when it enters the control zone.
/// Ids are assigned in arrival order and never reused within a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CavId(pub u64);

impl std::fmt::Display for CavId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Which road a CAV entered on. Both lanes join at the merge point located
/// at the end of the control zone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lane {
    Main,
    Ramp,
}

impl std::fmt::Display for Lane {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Lane::Main => write!(f, "main"),
            Lane::Ramp => write!(f, "ramp"),
        }
    }
}

/// Longitudinal state of one CAV, measured along its own lane from the
/// control-zone entry (`x = 0`) toward the merge point (`x = zone length`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavState {
    pub id: CavId,
    pub lane: Lane,
    /// Position along the lane [m].
    pub x: f64,
    /// Longitudinal speed [m/s].
    pub v: f64,
}

/// Advance a state by `dt` seconds under constant acceleration `u` [m/s^2].
///
/// Exact for the double-integrator model:
/// `x' = x + v dt + u dt^2 / 2`, `v' = v + u dt`.
pub fn propagate(state: &CavState, u: f64, dt: f64) -> CavState {
    CavState {
        x: state.x + state.v * dt + 0.5 * u * dt * dt,
        v: state.v + u * dt,
        ..*state
    }
}

/// Reconstruct a CAV's position and speed at time `t` from its coordinator
/// record, which pins down the state at the record's last update and the
/// constant control applied since.
///
/// Valid only up to the record's next scheduled update (`t <= t_next` on the
/// grid): past that instant the CAV has recomputed its control and the
/// record no longer describes its motion.
pub fn extrapolate(record: &CoordinatorRecord, t: f64, t_d: f64) -> Result<(f64, f64), StaleRecord> {
    let t_last = record.t_last.seconds(t_d);
    let t_next = record.t_next.seconds(t_d);
    // The boundary instant itself is still governed by the old control.
    if t > t_next + crate::grid::GRID_EPS || t < t_last - crate::grid::GRID_EPS {
        return Err(StaleRecord {
            id: record.id,
            t,
            t_last,
            t_next,
        });
    }
    let dt = t - t_last;
    Ok((
        record.x_last + record.v_last * dt + 0.5 * record.u_last * dt * dt,
        record.v_last + record.u_last * dt,
    ))
}

/// Asked to extrapolate a coordinator record outside the interval on which
/// its recorded control is actually applied.
#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("record of CAV {id} covers [{t_last}, {t_next}] s but was queried at {t} s")]
pub struct StaleRecord {
    pub id: CavId,
    pub t: f64,
    pub t_last: f64,
    pub t_next: f64,
}
