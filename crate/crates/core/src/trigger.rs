//! Self-triggered scheduling: when must a CAV next recompute its control?
//!
//! Between updates every vehicle moves with a known constant acceleration,
//! so each constraint value `C(t)` is a polynomial in the elapsed time —
//! degree 1 for the speed envelope, 2 for the rear-end gap, 3 for the
//! merging gap. The next update is scheduled at the earliest future zero of
//! any of these polynomials (the first instant a *plain* constraint could be
//! violated), capped by a maximum update interval, coordinated with the
//! neighbors' own schedules, and floored to the event grid. The tightened
//! QP guarantees the result is always at least one grid step away.

use crate::cbf::BarrierParams;
use crate::grid::Tick;
use serde::Serialize;

/// Roots closer to zero than this are treated as the constraint sitting on
/// its boundary *now* (a zero of the polynomial at the update instant
/// itself, e.g. a just-activated constraint) rather than a future violation.
pub const TAU_EPS: f64 = 1e-12;

/// Why a particular next-update instant was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerReason {
    /// The upper speed constraint is the first that could be violated.
    SpeedMax,
    /// The lower speed constraint is the first that could be violated.
    SpeedMin,
    /// The rear-end gap constraint is the first that could be violated.
    RearEnd,
    /// The merging gap constraint is the first that could be violated.
    Merge,
    /// No constraint becomes critical within the maximum update interval.
    TMaxCap,
    /// A neighbor updates first; re-solve one grid step after it does.
    NeighborFollow,
}

impl TriggerReason {
    pub fn as_str(self) -> &'static str {
        match self {
            TriggerReason::SpeedMax => "speed_max",
            TriggerReason::SpeedMin => "speed_min",
            TriggerReason::RearEnd => "rear_end",
            TriggerReason::Merge => "merge",
            TriggerReason::TMaxCap => "t_max_cap",
            TriggerReason::NeighborFollow => "neighbor_follow",
        }
    }
}

/// Outcome of one scheduling decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriggerOutcome {
    /// Predicted first-violation instants of the four constraints [s]
    /// (`f64::INFINITY` where the constraint can never be violated under
    /// the current controls).
    pub t_speed_max: f64,
    pub t_speed_min: f64,
    pub t_rear_end: f64,
    pub t_merge: f64,
    /// Earliest of the candidates and the capped horizon [s].
    pub t_min: f64,
    /// The chosen next update instant on the grid.
    pub t_next: Tick,
    pub reason: TriggerReason,
}

/// First future instant at which the upper speed constraint
/// `-u + (v_max - v) >= 0` would be violated under constant `u`.
pub fn next_violation_speed_max(t_k: f64, v: f64, u: f64, p: &BarrierParams) -> f64 {
    if u > 0.0 {
        t_k + (-u + p.v_max - v) / u
    } else {
        f64::INFINITY
    }
}

/// First future instant at which the lower speed constraint
/// `u + (v - v_min) >= 0` would be violated under constant `u`.
pub fn next_violation_speed_min(t_k: f64, v: f64, u: f64, p: &BarrierParams) -> f64 {
    if u < 0.0 {
        t_k + (-u + p.v_min - v) / u
    } else {
        f64::INFINITY
    }
}

/// First future zero of the rear-end constraint value, with the ego holding
/// `u` and the leader holding `u_ip`. `c3` is the constraint value now.
pub fn next_violation_rear_end(
    t_k: f64,
    ego_v: f64,
    ego_u: f64,
    ip_v: f64,
    ip_u: f64,
    c3: f64,
    p: &BarrierParams,
) -> f64 {
    let du = ip_u - ego_u;
    let dv = ip_v - ego_v;
    let coeffs = [c3, du + dv - p.psi * ego_u, 0.5 * du, 0.0];
    match least_positive_root(&coeffs) {
        Some(tau) => t_k + tau,
        None => f64::INFINITY,
    }
}

/// First future zero of the merging constraint value, with the ego at
/// `(x, v)` holding `u` and the crossing predecessor holding `u_j`.
/// `c4` is the constraint value now.
#[allow(clippy::too_many_arguments)]
pub fn next_violation_merge(
    t_k: f64,
    ego_x: f64,
    ego_v: f64,
    ego_u: f64,
    j_v: f64,
    j_u: f64,
    c4: f64,
    p: &BarrierParams,
) -> f64 {
    let k = p.psi / p.zone_length;
    let (x, v, u) = (ego_x, ego_v, ego_u);
    let du = j_u - u;
    let dv = j_v - v;
    let coeffs = [
        c4,
        du + dv - 3.0 * k * v * u - k * v * v - k * u * x,
        0.5 * du - 1.5 * k * u * u - 1.5 * k * v * u,
        -0.5 * k * u * u,
    ];
    match least_positive_root(&coeffs) {
        Some(tau) => t_k + tau,
        None => f64::INFINITY,
    }
}

/// Combine the four violation candidates into the next update instant.
///
/// `t_min` is the earliest candidate, never later than `t_k + t_max`. If a
/// neighbor is scheduled to update before `t_min`, the CAV instead re-solves
/// one grid step after that neighbor (its data would be stale past that
/// point). The result is floored to the grid and never earlier than one
/// grid step after `t_k`.
pub fn next_update_time(
    t_k: Tick,
    candidates: &[f64; 4],
    t_max: f64,
    neighbor_nexts: &[Option<Tick>; 2],
    t_d: f64,
) -> TriggerOutcome {
    let t_k_s = t_k.seconds(t_d);
    let order = [
        TriggerReason::SpeedMax,
        TriggerReason::SpeedMin,
        TriggerReason::RearEnd,
        TriggerReason::Merge,
    ];
    let mut t_min = t_k_s + t_max;
    let mut reason = TriggerReason::TMaxCap;
    // Strict comparison in reverse priority order: the earliest candidate
    // wins, with ties going to the constraint listed first.
    for i in (0..4).rev() {
        if candidates[i] <= t_min {
            t_min = candidates[i];
            reason = order[i];
        }
    }

    let nb_min = match (neighbor_nexts[0], neighbor_nexts[1]) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    };

    let (t_next, reason) = match nb_min {
        // A neighbor broadcasts first: follow it one grid step later.
        Some(nm) if t_min > nm.seconds(t_d) + 1e-9 => (nm + 1, TriggerReason::NeighborFollow),
        _ => (Tick::floor_from_seconds(t_min, t_d), reason),
    };
    let t_next = t_next.max(t_k + 1);

    TriggerOutcome {
        t_speed_max: candidates[0],
        t_speed_min: candidates[1],
        t_rear_end: candidates[2],
        t_merge: candidates[3],
        t_min,
        t_next,
        reason,
    }
}

/// Smallest root greater than [`TAU_EPS`] of
/// `c[0] + c[1] t + c[2] t^2 + c[3] t^3`, or `None` if there is none.
///
/// Leading coefficients may be exactly zero; the degree degrades gracefully
/// 3 → 2 → 1 → 0. The polynomial is split at its real critical points
/// (closed-form roots of the derivative via the cancellation-free quadratic
/// formula) into intervals on which it is monotonic, so a sign change over
/// an interval brackets exactly one root; bisection then pins it to full
/// precision. Bracketing stays reliable even for the near-degenerate cubics
/// produced by very small controls, where monic normalization puts a
/// spurious giant root next to the physical ones and the classic closed
/// forms lose several digits to cancellation.
pub fn least_positive_root(c: &[f64; 4]) -> Option<f64> {
    let eval = |t: f64| c[0] + t * (c[1] + t * (c[2] + t * c[3]));
    // Sign of the polynomial as t -> +infinity.
    let lead = if c[3] != 0.0 {
        c[3]
    } else if c[2] != 0.0 {
        c[2]
    } else if c[1] != 0.0 {
        c[1]
    } else {
        // Constant: never zero, or identically on the boundary ("now").
        return None;
    };

    let mut bps = [0.0f64; 2];
    let n_bp = derivative_roots(c, &mut bps);
    let mut bps: Vec<f64> = bps[..n_bp]
        .iter()
        .copied()
        .filter(|b| b.is_finite() && *b > TAU_EPS)
        .collect();
    bps.sort_by(f64::total_cmp);

    let mut a = TAU_EPS;
    // A boundary contact exactly at the window edge is "now", not a future
    // violation; treat it as the satisfied side and scan onward.
    let mut pos_a = eval(a) >= 0.0;
    for &b in &bps {
        let pb = eval(b);
        if pb == 0.0 {
            // Root exactly at a critical point (the polynomial grazes zero).
            return Some(b);
        }
        if pos_a != (pb > 0.0) {
            return Some(bisect_root(&eval, a, b, pos_a));
        }
        a = b;
        pos_a = pb > 0.0;
    }

    // Tail segment: monotonic all the way out. A root exists iff the sign
    // at the last critical point differs from the sign at infinity.
    if pos_a == (lead > 0.0) {
        return None;
    }
    let mut lo = a;
    let mut hi = (2.0 * a.abs()).max(1.0);
    loop {
        let ph = eval(hi);
        if ph == 0.0 {
            return Some(hi);
        }
        if pos_a != (ph > 0.0) {
            return Some(bisect_root(&eval, lo, hi, pos_a));
        }
        lo = hi;
        hi *= 2.0;
        if hi > 1e200 {
            // Physically "never"; also keeps the evaluation finite.
            return None;
        }
    }
}

/// Bisection for the single root in `(lo, hi)`, where the polynomial is
/// monotonic, `sign(p(lo))` is `pos_lo`, and `p(hi)` has the opposite sign.
/// Converges to the last representable bracket, i.e. full f64 precision.
fn bisect_root(eval: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, pos_lo: bool) -> f64 {
    for _ in 0..200 {
        let mid = lo + 0.5 * (hi - lo);
        if mid <= lo || mid >= hi {
            break;
        }
        let pm = eval(mid);
        if pm == 0.0 {
            return mid;
        }
        if (pm > 0.0) == pos_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo + 0.5 * (hi - lo)
}

/// Real critical points of the (up to cubic) polynomial: roots of
/// `c[1] + 2 c[2] t + 3 c[3] t^2`, via the cancellation-free quadratic
/// formula so a tiny quadratic coefficient cannot corrupt the small root.
fn derivative_roots(c: &[f64; 4], out: &mut [f64; 2]) -> usize {
    if c[3] != 0.0 {
        let (a, b, cc) = (3.0 * c[3], 2.0 * c[2], c[1]);
        let disc = b * b - 4.0 * a * cc;
        if disc < 0.0 {
            return 0;
        }
        let q = -0.5 * (b + b.signum() * disc.sqrt());
        if q == 0.0 {
            // b == 0 and disc == 0: double critical point at the origin.
            out[0] = 0.0;
            return 1;
        }
        out[0] = q / a;
        out[1] = cc / q;
        2
    } else if c[2] != 0.0 {
        out[0] = -c[1] / (2.0 * c[2]);
        1
    } else {
        0
    }
}
