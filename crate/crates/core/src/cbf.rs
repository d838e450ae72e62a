//! Barrier functions, constraint margins, and QP assembly.
//!
//! Safety requirements are encoded as barrier functions `h >= 0`:
//!
//! * `h1 = v_max - v` and `h2 = v - v_min` — speed envelope;
//! * `h3 = x_ip - x - psi*v - l` — rear-end gap behind the same-lane leader
//!   (time-headway `psi` plus standstill gap `l`);
//! * `h4 = x_j - x - (psi/L)*x*v - l` — merging gap behind the crossing
//!   predecessor on the other lane. The headway term ramps up linearly with
//!   position so the full gap is enforced exactly at the merge point
//!   (`x = L`) without over-constraining vehicles that just entered.
//!
//! Each barrier yields one affine-in-`u` constraint of the form
//! `dh/dt + h >= nu`, where `nu = 0` reproduces the plain constraints and
//! `nu > 0` tightens them by a margin large enough that the plain constraint
//! provably holds for a whole update interval even though the control is
//! frozen between updates. The margins ([`margins`]) bound the worst-case
//! drift of each constraint over the interval using only information present
//! in the coordinator records.

use crate::dynamics::CavState;
use crate::qp::{ConstraintRow, QpProblem, RowKind};
use serde::{Deserialize, Serialize};

/// Road geometry, actuation envelope, and controller gains shared by every
/// CAV in a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarrierParams {
    /// Length of the control zone up to the merge point [m].
    pub zone_length: f64,
    /// Time headway for the rear-end and merging gaps [s].
    pub psi: f64,
    /// Standstill gap [m].
    pub standstill_gap: f64,
    /// Speed envelope [m/s].
    pub v_min: f64,
    pub v_max: f64,
    /// Actuation envelope [m/s^2] (`u_min < 0 < u_max`).
    pub u_min: f64,
    pub u_max: f64,
    /// Convergence gain of the speed-tracking (Lyapunov) constraint.
    pub clf_gain: f64,
}

impl BarrierParams {
    /// Largest acceleration magnitude any CAV can apply; the worst-case
    /// bound used by the margins and by the simultaneous-update fallback.
    pub fn u_peak(&self) -> f64 {
        self.u_min.abs().max(self.u_max.abs())
    }
}

/// Motion of a neighbor reconstructed at the current instant: position,
/// speed, and the constant control it is holding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborMotion {
    pub x: f64,
    pub v: f64,
    pub u: f64,
}

/// The (possibly absent) neighbors that constrain a CAV.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NeighborView {
    /// Nearest CAV ahead on the same lane.
    pub ip: Option<NeighborMotion>,
    /// Crossing predecessor on the other lane.
    pub j: Option<NeighborMotion>,
}

/// Barrier values at one instant; `None` where the neighbor is absent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Barriers {
    pub h1: f64,
    pub h2: f64,
    pub h3: Option<f64>,
    pub h4: Option<f64>,
}

/// Tightening margins for one update interval; zero for absent neighbors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Margins {
    pub nu1: f64,
    pub nu2: f64,
    pub nu3: f64,
    pub nu4: f64,
}

impl Margins {
    pub const ZERO: Margins = Margins {
        nu1: 0.0,
        nu2: 0.0,
        nu3: 0.0,
        nu4: 0.0,
    };
}

/// Tracking reference for the QP: the control and speed of the CAV's
/// unconstrained optimal profile at the current instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reference {
    pub u_star: f64,
    pub v_star: f64,
}

/// Left-hand sides of the plain (untightened) constraints at a given control.
/// A value `>= 0` means the constraint is satisfied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintValues {
    pub c1: f64,
    pub c2: f64,
    pub c3: Option<f64>,
    pub c4: Option<f64>,
}

impl ConstraintValues {
    /// Smallest constraint value (ignoring absent neighbors).
    pub fn min(&self) -> f64 {
        let mut m = self.c1.min(self.c2);
        if let Some(c3) = self.c3 {
            m = m.min(c3);
        }
        if let Some(c4) = self.c4 {
            m = m.min(c4);
        }
        m
    }
}

/// Evaluate all barriers for `ego` against its current neighbors.
pub fn eval_barriers(ego: &CavState, nb: &NeighborView, p: &BarrierParams) -> Barriers {
    Barriers {
        h1: p.v_max - ego.v,
        h2: ego.v - p.v_min,
        h3: nb
            .ip
            .map(|ip| ip.x - ego.x - p.psi * ego.v - p.standstill_gap),
        h4: nb.j.map(|j| {
            j.x - ego.x - (p.psi / p.zone_length) * ego.x * ego.v - p.standstill_gap
        }),
    }
}

/// Constraint left-hand sides `C_k(u) = dh_k/dt + h_k` for a candidate
/// control `u`, using the same neighbor data the QP rows are built from.
pub fn constraint_values(
    ego: &CavState,
    nb: &NeighborView,
    u: f64,
    p: &BarrierParams,
) -> ConstraintValues {
    let h = eval_barriers(ego, nb, p);
    let k = p.psi / p.zone_length;
    ConstraintValues {
        c1: -u + h.h1,
        c2: u + h.h2,
        c3: nb.ip.map(|ip| ip.v - ego.v - p.psi * u + h.h3.unwrap()),
        c4: nb.j.map(|j| {
            j.v - ego.v - k * ego.v * ego.v - k * ego.x * u + h.h4.unwrap()
        }),
    }
}

/// Margins that dominate the worst-case drift of each constraint over a
/// `horizon`-second interval during which `ego` holds an arbitrary
/// admissible control and each neighbor holds its recorded control.
pub fn margins(ego: &CavState, nb: &NeighborView, p: &BarrierParams, horizon: f64) -> Margins {
    margins_assuming(ego, nb, p, horizon, false, false)
}

/// Like [`margins`], but optionally replacing a neighbor's recorded control
/// magnitude by the worst-case peak. Used when a neighbor updates its
/// control at the very same instant, so its new control cannot be known yet.
pub fn margins_assuming(
    ego: &CavState,
    nb: &NeighborView,
    p: &BarrierParams,
    horizon: f64,
    worst_case_ip: bool,
    worst_case_j: bool,
) -> Margins {
    let t = horizon;
    let u_pk = p.u_peak();
    let nu_speed = u_pk * t;

    let nu3 = nb.ip.map_or(0.0, |ip| {
        let u_ip = if worst_case_ip { u_pk } else { ip.u.abs() };
        let dv = (ip.v - ego.v).abs();
        (u_ip + (1.0 + p.psi) * u_pk + dv) * t + 0.5 * t * t * (u_ip + u_pk)
    });

    let nu4 = nb.j.map_or(0.0, |j| {
        let k = p.psi / p.zone_length;
        let u_j = if worst_case_j { u_pk } else { j.u.abs() };
        let v = ego.v.abs();
        let x = ego.x.abs();
        let lin = u_j + (3.0 * k * v + k * x + 1.0) * u_pk + j.v.abs() + v + k * ego.v * ego.v;
        let quad = 1.5 * k * u_pk * u_pk + 0.5 * u_j + 0.5 * u_pk + 1.5 * k * v * u_pk;
        let cub = 0.5 * k * u_pk * u_pk;
        lin * t + quad * t * t + cub * t * t * t
    });

    Margins {
        nu1: nu_speed,
        nu2: nu_speed,
        nu3,
        nu4,
    }
}

/// Assemble the tracking QP for one control update.
///
/// With `tighten = false` the rows encode the plain constraints; with
/// `tighten = true` each row's right-hand side is reduced by the interval
/// margin for `horizon = t_d`, guaranteeing the plain constraints hold for
/// at least `t_d` seconds after the update.
pub fn build_qp(
    ego: &CavState,
    nb: &NeighborView,
    reference: &Reference,
    p: &BarrierParams,
    rho: f64,
    tighten: bool,
    t_d: f64,
) -> QpProblem {
    let m = if tighten {
        margins(ego, nb, p, t_d)
    } else {
        Margins::ZERO
    };
    build_qp_with_margins(ego, nb, reference, p, rho, &m)
}

/// [`build_qp`] with externally supplied margins (e.g. the worst-case
/// margins of the simultaneous-update fallback).
pub fn build_qp_with_margins(
    ego: &CavState,
    nb: &NeighborView,
    reference: &Reference,
    p: &BarrierParams,
    rho: f64,
    m: &Margins,
) -> QpProblem {
    let h = eval_barriers(ego, nb, p);
    let dv = ego.v - reference.v_star;
    let mut rows = Vec::with_capacity(5);

    // Speed tracking: (v - v*) u + clf_gain (v - v*)^2 <= delta.
    rows.push(ConstraintRow {
        kind: RowKind::Clf,
        coeff_u: dv,
        coeff_delta: -1.0,
        rhs: -p.clf_gain * dv * dv,
    });
    // Speed envelope: -u + h1 >= nu1  and  u + h2 >= nu2.
    rows.push(ConstraintRow {
        kind: RowKind::SpeedMax,
        coeff_u: 1.0,
        coeff_delta: 0.0,
        rhs: h.h1 - m.nu1,
    });
    rows.push(ConstraintRow {
        kind: RowKind::SpeedMin,
        coeff_u: -1.0,
        coeff_delta: 0.0,
        rhs: h.h2 - m.nu2,
    });
    // Rear end: (v_ip - v) - psi u + h3 >= nu3.
    if let Some(ip) = nb.ip {
        rows.push(ConstraintRow {
            kind: RowKind::RearEnd,
            coeff_u: p.psi,
            coeff_delta: 0.0,
            rhs: ip.v - ego.v + h.h3.unwrap() - m.nu3,
        });
    }
    // Merging: (v_j - v) - (psi/L) v^2 - (psi/L) x u + h4 >= nu4.
    if let Some(j) = nb.j {
        let k = p.psi / p.zone_length;
        rows.push(ConstraintRow {
            kind: RowKind::Merge,
            coeff_u: k * ego.x,
            coeff_delta: 0.0,
            rhs: j.v - ego.v - k * ego.v * ego.v + h.h4.unwrap() - m.nu4,
        });
    }

    QpProblem {
        u_star: reference.u_star,
        rho,
        u_lo: p.u_min,
        u_hi: p.u_max,
        rows,
    }
}
