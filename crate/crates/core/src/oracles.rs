//! Independent brute-force reference computations.
//!
//! Everything here deliberately avoids the closed forms used by the
//! production code paths: constraint drift is measured by propagating states
//! and re-evaluating, violation instants are found by scanning and bisecting,
//! polynomial roots come from companion-matrix eigenvalues, QP optima from a
//! dense grid, and the optimal exit time from a shooting search. The unit and
//! acceptance tests pit the analytic implementations against these oracles;
//! the oracles are also runnable from the command line for spot audits.

use crate::cbf::{constraint_values, BarrierParams, ConstraintValues, NeighborMotion, NeighborView};
use crate::dynamics::{CavId, CavState, Lane};
use crate::qp::{ConstraintRow, QpProblem, RowKind};
use crate::trigger::TAU_EPS;
use nalgebra::{Complex, Matrix2, Matrix3, Matrix4, Vector4};
use rand::Rng;

/// Constraint values `tau` seconds in the future, with every vehicle holding
/// its current control: states are propagated with the exact kinematics and
/// the constraints are re-evaluated from scratch at the propagated states.
pub fn constraint_values_after(
    ego: &CavState,
    nb: &NeighborView,
    u: f64,
    p: &BarrierParams,
    tau: f64,
) -> ConstraintValues {
    let roll = |x: f64, v: f64, a: f64| (x + v * tau + 0.5 * a * tau * tau, v + a * tau);
    let (ex, ev) = roll(ego.x, ego.v, u);
    let moved = CavState {
        id: ego.id,
        lane: ego.lane,
        x: ex,
        v: ev,
    };
    let roll_nb = |m: &NeighborMotion| {
        let (x, v) = roll(m.x, m.v, m.u);
        NeighborMotion { x, v, u: m.u }
    };
    let nb_moved = NeighborView {
        ip: nb.ip.as_ref().map(roll_nb),
        j: nb.j.as_ref().map(roll_nb),
    };
    constraint_values(&moved, &nb_moved, u, p)
}

/// First instant in `(0, horizon]` at which `f` goes negative, found by
/// scanning at `step` resolution (with a midpoint guard against narrow dips)
/// and bisecting the bracketing interval down to ~1e-13 s. Returns `None`
/// when no sign change is seen over the horizon, `Some(0.0)` when `f` is
/// already negative at zero.
pub fn first_violation_scan(f: impl Fn(f64) -> f64, horizon: f64, step: f64) -> Option<f64> {
    if f(0.0) < 0.0 {
        return Some(0.0);
    }
    let n = (horizon / step).ceil() as usize;
    let mut prev = 0.0;
    for k in 1..=n {
        let t = (k as f64 * step).min(horizon);
        for cand in [0.5 * (prev + t), t] {
            if f(cand) < 0.0 {
                return Some(bisect_sign_change(&f, prev, cand));
            }
        }
        prev = t;
    }
    None
}

/// Bisection on `[lo, hi]` with `f(lo) >= 0 > f(hi)`.
fn bisect_sign_change(f: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        if hi - lo < 1e-13 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Smallest real root greater than [`TAU_EPS`] of
/// `c[0] + c[1] t + c[2] t^2 + c[3] t^3`, computed from the eigenvalues of
/// the companion matrix of the (degree-reduced) polynomial.
pub fn least_positive_root_companion(c: &[f64; 4]) -> Option<f64> {
    let mut reals: Vec<f64> = Vec::new();
    let mut keep = |ev: Complex<f64>| {
        if ev.im.abs() <= 1e-8 * (1.0 + ev.norm()) {
            reals.push(ev.re);
        }
    };
    if c[3] != 0.0 {
        let m = Matrix3::new(
            0.0,
            0.0,
            -c[0] / c[3],
            1.0,
            0.0,
            -c[1] / c[3],
            0.0,
            1.0,
            -c[2] / c[3],
        );
        for ev in m.complex_eigenvalues().iter() {
            keep(*ev);
        }
    } else if c[2] != 0.0 {
        let m = Matrix2::new(0.0, -c[0] / c[2], 1.0, -c[1] / c[2]);
        for ev in m.complex_eigenvalues().iter() {
            keep(*ev);
        }
    } else if c[1] != 0.0 {
        keep(Complex::new(-c[0] / c[1], 0.0));
    }
    reals
        .into_iter()
        .filter(|r| *r > TAU_EPS)
        .min_by(|a, b| a.total_cmp(b))
}

/// Random single-variable QP in the shape produced by the constraint
/// builder: box bounds on `u`, at most one row per constraint kind, and a
/// slack-coupled row for the tracking objective. Roughly a quarter of the
/// draws are infeasible (decisively so, never within grid tolerance).
pub fn random_qp(rng: &mut impl Rng) -> QpProblem {
    let u_lo = rng.gen_range(-8.0..2.0);
    let u_hi = u_lo + rng.gen_range(0.5..10.0);
    let mut rows = Vec::new();
    if rng.gen_bool(0.9) {
        rows.push(ConstraintRow {
            kind: RowKind::Clf,
            coeff_u: rng.gen_range(-10.0..10.0),
            coeff_delta: -rng.gen_range(0.1..2.0),
            rhs: rng.gen_range(-30.0..30.0),
        });
    }
    if rng.gen_bool(0.7) {
        rows.push(ConstraintRow {
            kind: RowKind::SpeedMax,
            coeff_u: 1.0,
            coeff_delta: 0.0,
            rhs: rng.gen_range(-12.0..12.0),
        });
    }
    if rng.gen_bool(0.7) {
        rows.push(ConstraintRow {
            kind: RowKind::SpeedMin,
            coeff_u: -1.0,
            coeff_delta: 0.0,
            rhs: rng.gen_range(-12.0..12.0),
        });
    }
    if rng.gen_bool(0.6) {
        rows.push(ConstraintRow {
            kind: RowKind::RearEnd,
            coeff_u: 1.8,
            coeff_delta: 0.0,
            rhs: rng.gen_range(-20.0..25.0),
        });
    }
    if rng.gen_bool(0.6) {
        rows.push(ConstraintRow {
            kind: RowKind::Merge,
            coeff_u: rng.gen_range(0.01..1.8),
            coeff_delta: 0.0,
            rhs: rng.gen_range(-20.0..25.0),
        });
    }
    QpProblem {
        u_star: rng.gen_range(-6.0..6.0),
        rho: [0.5, 1.0, 5.0][rng.gen_range(0..3)],
        u_lo,
        u_hi,
        rows,
    }
}

/// Dense grid minimization of a single-variable QP: for each `u` on the grid
/// the slack takes its cheapest admissible value in closed form. Returns the
/// best `(u, objective)` over feasible grid points, or `None` if no grid
/// point is feasible (within the same 1e-9 slack the solver uses).
pub fn qp_grid_search(p: &QpProblem, step: f64) -> Option<(f64, f64)> {
    let n = ((p.u_hi - p.u_lo) / step).ceil() as usize;
    let mut best: Option<(f64, f64)> = None;
    for k in 0..=n {
        let u = (p.u_lo + k as f64 * step).min(p.u_hi);
        let mut delta = 0.0f64;
        let mut feasible = true;
        for row in &p.rows {
            debug_assert!(row.coeff_delta <= 0.0, "slack must relax the row");
            if row.coeff_delta == 0.0 {
                if row.coeff_u * u - row.rhs > 1e-9 {
                    feasible = false;
                    break;
                }
            } else {
                delta = delta.max((row.coeff_u * u - row.rhs) / -row.coeff_delta);
            }
        }
        if !feasible {
            continue;
        }
        let obj = 0.5 * (u - p.u_star) * (u - p.u_star) + p.rho * delta * delta;
        if best.is_none_or(|(_, b)| obj < b) {
            best = Some((u, obj));
        }
    }
    best
}

/// Random mid-zone scene with both a lane predecessor and a merge
/// predecessor, plus a held ego control. The merge constraint is feasible at
/// the draw instant but the gap is tight enough that a large share of draws
/// violate it within a 20 s ballistic horizon.
pub fn random_merge_instance(
    rng: &mut impl Rng,
    p: &BarrierParams,
) -> (CavState, NeighborView, f64) {
    let k = p.psi / p.zone_length;
    loop {
        let x = rng.gen_range(10.0..0.8 * p.zone_length);
        let v = rng.gen_range(3.0..p.v_max - 2.0);
        let u = rng.gen_range(p.u_min..p.u_max);
        let ego = CavState {
            id: CavId(2),
            lane: Lane::Main,
            x,
            v,
        };
        let nb = NeighborView {
            ip: Some(NeighborMotion {
                x: x + p.psi * v + p.standstill_gap + rng.gen_range(1.0..60.0),
                v: rng.gen_range(3.0..p.v_max - 2.0),
                u: rng.gen_range(-3.0..3.0),
            }),
            j: Some(NeighborMotion {
                x: x + k * x * v + p.standstill_gap + rng.gen_range(0.5..45.0),
                v: rng.gen_range(3.0..p.v_max - 2.0),
                u: rng.gen_range(-3.0..3.0),
            }),
        };
        let c = constraint_values(&ego, &nb, u, p);
        if c.c4.expect("merge neighbor present") >= 1e-3 {
            return (ego, nb, u);
        }
    }
}

/// Shooting search for the optimal exit: for each candidate relative exit
/// time the four boundary conditions fix the cubic position profile through
/// a dense linear solve, and the total cost is integrated by Simpson
/// quadrature. A coarse scan over candidate times followed by golden-section
/// refinement returns `(exit time [s], cost)`.
pub fn shooting_exit_time(x0: f64, v0: f64, zone_length: f64, beta: f64) -> (f64, f64) {
    let cost_at = |t: f64| -> f64 {
        let m = Matrix4::new(
            0.0,
            0.0,
            1.0,
            0.0,
            0.0,
            0.0,
            0.0,
            1.0,
            t * t * t / 6.0,
            0.5 * t * t,
            t,
            1.0,
            t,
            1.0,
            0.0,
            0.0,
        );
        let rhs = Vector4::new(v0, x0, zone_length, 0.0);
        let z = m
            .lu()
            .solve(&rhs)
            .expect("boundary system is nonsingular for positive exit times");
        let (a, b) = (z[0], z[1]);
        let u = |s: f64| a * s + b;
        let n = 64;
        let h = t / n as f64;
        let mut acc = u(0.0) * u(0.0) + u(t) * u(t);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            let us = u(i as f64 * h);
            acc += w * us * us;
        }
        beta * t + 0.5 * acc * h / 3.0
    };

    let cruise = (zone_length - x0) / v0;
    let lo = 1e-3 * cruise;
    let hi = 1.05 * cruise;
    let n = 4000;
    let cell = (hi - lo) / n as f64;
    let mut best_k = 0usize;
    let mut best = f64::INFINITY;
    for k in 0..=n {
        let c = cost_at(lo + cell * k as f64);
        if c < best {
            best = c;
            best_k = k;
        }
    }
    let mut a = (lo + cell * (best_k as f64 - 2.0)).max(lo);
    let mut b = (lo + cell * (best_k as f64 + 2.0)).min(hi);
    let phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut c1 = b - phi * (b - a);
    let mut c2 = a + phi * (b - a);
    let mut f1 = cost_at(c1);
    let mut f2 = cost_at(c2);
    for _ in 0..200 {
        if b - a < 1e-10 {
            break;
        }
        if f1 < f2 {
            b = c2;
            c2 = c1;
            f2 = f1;
            c1 = b - phi * (b - a);
            f1 = cost_at(c1);
        } else {
            a = c1;
            c1 = c2;
            f1 = f2;
            c2 = a + phi * (b - a);
            f2 = cost_at(c2);
        }
    }
    let t = 0.5 * (a + b);
    (t, cost_at(t))
}
