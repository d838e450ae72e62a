//! Exact solver for the per-update tracking QP.
//!
//! The decision variables are the control `u` and the tracking-relaxation
//! slack `delta`:
//!
//! ```text
//! minimize   0.5 (u - u*)^2 + rho delta^2
//! subject to coeff_u[r] u + coeff_delta[r] delta <= rhs[r]   for each row r
//!            u_lo <= u <= u_hi
//! ```
//!
//! The problem has special structure: `delta` appears in the objective only
//! as `rho delta^2` and in rows only with non-positive coefficient, so for a
//! fixed `u` the optimal slack is `delta*(u) = max(0, envelope(u))` where
//! `envelope` is the maximum of the rows' linear lower bounds on `delta`.
//! Substituting it back leaves a convex piecewise-quadratic function of `u`
//! alone, which is minimized exactly by enumerating its breakpoints. No
//! iterative solver, no tolerance tuning, and bit-for-bit deterministic
//! results.

use serde::Serialize;
use thiserror::Error;

/// Which requirement a constraint row encodes (bounds get kinds of their
/// own so the active set can name them).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RowKind {
    Clf,
    SpeedMax,
    SpeedMin,
    RearEnd,
    Merge,
    UBoundLo,
    UBoundHi,
}

/// One affine constraint `coeff_u * u + coeff_delta * delta <= rhs`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintRow {
    pub kind: RowKind,
    pub coeff_u: f64,
    pub coeff_delta: f64,
    pub rhs: f64,
}

/// A fully assembled per-update QP.
#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    /// Objective center for the control [m/s^2].
    pub u_star: f64,
    /// Weight on the squared relaxation slack.
    pub rho: f64,
    /// Actuation bounds [m/s^2].
    pub u_lo: f64,
    pub u_hi: f64,
    pub rows: Vec<ConstraintRow>,
}

/// Optimal point of a feasible QP.
#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub u: f64,
    pub delta: f64,
    pub objective: f64,
    /// Rows (and bounds) binding at the optimum, in problem order.
    pub active_set: Vec<RowKind>,
}

/// The constraint rows and bounds admit no control at all.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("QP infeasible: {detail}")]
pub struct QpInfeasible {
    pub detail: String,
}

/// Feasibility slack: rows may be violated by at most this much before the
/// problem is declared infeasible, and the same tolerance decides which rows
/// count as active.
pub const FEAS_TOL: f64 = 1e-9;

/// Solve the QP exactly. Returns [`QpInfeasible`] instead of panicking when
/// the rows contradict each other; callers apply their own fallback.
pub fn solve(p: &QpProblem) -> Result<QpSolution, QpInfeasible> {
    debug_assert!(p.rho >= 0.0, "relaxation weight must be non-negative");
    let (mut lo, mut hi) = (p.u_lo, p.u_hi);

    // Pure-u rows shrink the admissible interval; delta rows form the
    // lower envelope for the slack.
    let mut pieces: Vec<(f64, f64)> = Vec::new(); // delta >= alpha*u + gamma
    for row in &p.rows {
        if row.coeff_delta == 0.0 {
            if row.coeff_u == 0.0 {
                if row.rhs < -FEAS_TOL {
                    return Err(QpInfeasible {
                        detail: format!(
                            "{:?} requires 0 <= {:.6}, violated with no control authority",
                            row.kind, row.rhs
                        ),
                    });
                }
            } else if row.coeff_u > 0.0 {
                hi = hi.min(row.rhs / row.coeff_u);
            } else {
                lo = lo.max(row.rhs / row.coeff_u);
            }
        } else {
            debug_assert!(
                row.coeff_delta < 0.0,
                "slack rows must lower-bound delta (coeff_delta < 0)"
            );
            pieces.push((-row.coeff_u / row.coeff_delta, row.rhs / row.coeff_delta));
        }
    }

    if lo > hi {
        if lo - hi <= FEAS_TOL {
            let mid = 0.5 * (lo + hi);
            lo = mid;
            hi = mid;
        } else {
            return Err(QpInfeasible {
                detail: format!("admissible control interval is empty: [{lo:.6}, {hi:.6}]"),
            });
        }
    }

    let envelope = |u: f64| -> f64 {
        pieces
            .iter()
            .fold(0.0f64, |acc, &(a, g)| acc.max(a * u + g))
    };
    let objective = |u: f64| -> f64 {
        let d = envelope(u);
        0.5 * (u - p.u_star) * (u - p.u_star) + p.rho * d * d
    };

    // Breakpoints of the piecewise-quadratic objective: interval ends, zero
    // crossings of each envelope piece, and pairwise piece intersections.
    let mut breaks = vec![lo, hi];
    let mut push = |u: f64| {
        if u.is_finite() && u > lo && u < hi {
            breaks.push(u);
        }
    };
    for &(a, g) in &pieces {
        if a != 0.0 {
            push(-g / a);
        }
    }
    for i in 0..pieces.len() {
        for k in i + 1..pieces.len() {
            let (ai, gi) = pieces[i];
            let (ak, gk) = pieces[k];
            if ai != ak {
                push((gk - gi) / (ai - ak));
            }
        }
    }
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    breaks.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + a.abs()));

    // Candidates: every breakpoint plus the interior stationary point of
    // each segment's quadratic.
    let mut candidates = breaks.clone();
    for w in breaks.windows(2) {
        let (s, e) = (w[0], w[1]);
        let mid = 0.5 * (s + e);
        let d_mid = envelope(mid);
        let interior = if d_mid <= 0.0 {
            // Slack inactive on this segment: pure tracking quadratic.
            p.u_star
        } else {
            // Active piece is the one attaining the envelope at the midpoint.
            let &(a, g) = pieces
                .iter()
                .max_by(|x, y| {
                    (x.0 * mid + x.1).partial_cmp(&(y.0 * mid + y.1)).unwrap()
                })
                .expect("positive envelope implies at least one piece");
            // d/du [ 0.5 (u - u*)^2 + rho (a u + g)^2 ] = 0.
            (p.u_star - 2.0 * p.rho * a * g) / (1.0 + 2.0 * p.rho * a * a)
        };
        if interior > s && interior < e {
            candidates.push(interior);
        }
    }

    let mut best_u = candidates[0];
    let mut best_obj = objective(best_u);
    for &u in &candidates[1..] {
        let obj = objective(u);
        let better = obj < best_obj
            || (obj == best_obj
                && (u.abs() < best_u.abs() || (u.abs() == best_u.abs() && u < best_u)));
        if better {
            best_u = u;
            best_obj = obj;
        }
    }

    let delta = envelope(best_u).max(0.0);
    let mut active_set = Vec::new();
    for row in &p.rows {
        if (row.coeff_u * best_u + row.coeff_delta * delta - row.rhs).abs() <= FEAS_TOL {
            active_set.push(row.kind);
        }
    }
    if (best_u - p.u_lo).abs() <= FEAS_TOL {
        active_set.push(RowKind::UBoundLo);
    }
    if (best_u - p.u_hi).abs() <= FEAS_TOL {
        active_set.push(RowKind::UBoundHi);
    }

    debug_assert!(
        p.rows
            .iter()
            .all(|r| r.coeff_u * best_u + r.coeff_delta * delta - r.rhs <= FEAS_TOL),
        "solver returned an infeasible point"
    );

    Ok(QpSolution {
        u: best_u,
        delta,
        objective: best_obj,
        active_set,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const U_LO: f64 = -5.886;
    const U_HI: f64 = 4.905;

    fn bare(u_star: f64) -> QpProblem {
        QpProblem {
            u_star,
            rho: 1.0,
            u_lo: U_LO,
            u_hi: U_HI,
            rows: vec![],
        }
    }

    #[test]
    fn unconstrained_optimum_is_the_reference_control() {
        let sol = solve(&bare(1.0)).unwrap();
        assert_eq!(sol.u, 1.0);
        assert_eq!(sol.delta, 0.0);
        assert_eq!(sol.objective, 0.0);
        assert!(sol.active_set.is_empty());
    }

    #[test]
    fn bounds_clamp_and_appear_in_the_active_set() {
        let sol = solve(&bare(10.0)).unwrap();
        assert_eq!(sol.u, U_HI);
        assert_eq!(sol.active_set, vec![RowKind::UBoundHi]);
        let sol = solve(&bare(-20.0)).unwrap();
        assert_eq!(sol.u, U_LO);
        assert_eq!(sol.active_set, vec![RowKind::UBoundLo]);
    }

    #[test]
    fn contradictory_rows_are_reported_infeasible() {
        let mut p = bare(0.0);
        p.rows = vec![
            ConstraintRow {
                kind: RowKind::SpeedMax,
                coeff_u: 1.0,
                coeff_delta: 0.0,
                rhs: -10.0, // u <= -10
            },
            ConstraintRow {
                kind: RowKind::SpeedMin,
                coeff_u: -1.0,
                coeff_delta: 0.0,
                rhs: -10.0, // u >= 10
            },
        ];
        let err = solve(&p).unwrap_err();
        assert!(err.detail.contains("empty"), "{}", err.detail);
    }

    #[test]
    fn constant_row_feasibility_is_checked() {
        let mut p = bare(0.0);
        p.rows = vec![ConstraintRow {
            kind: RowKind::Merge,
            coeff_u: 0.0,
            coeff_delta: 0.0,
            rhs: -1.0,
        }];
        assert!(solve(&p).is_err());
        p.rows[0].rhs = 1.0;
        assert!(solve(&p).is_ok());
    }

    #[test]
    fn slack_trades_off_against_tracking() {
        // CLF row delta >= 2u + 1 (coeff_u = 2, coeff_delta = -1, rhs = -1):
        // minimize 0.5 u^2 + (2u+1)^2 on the active side. Stationary point
        // u = -4/9, delta = 1/9.
        let mut p = bare(0.0);
        p.rows = vec![ConstraintRow {
            kind: RowKind::Clf,
            coeff_u: 2.0,
            coeff_delta: -1.0,
            rhs: -1.0,
        }];
        let sol = solve(&p).unwrap();
        assert!((sol.u - (-4.0 / 9.0)).abs() < 1e-12, "u = {}", sol.u);
        assert!((sol.delta - 1.0 / 9.0).abs() < 1e-12);
        assert!(sol.active_set.contains(&RowKind::Clf));
    }

    #[test]
    fn matches_dense_grid_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..300 {
            let p = crate::oracles::random_qp(&mut rng);
            match solve(&p) {
                Ok(sol) => {
                    let (_, obj) = crate::oracles::qp_grid_search(&p, 1e-4)
                        .expect("solver feasible but grid search found nothing");
                    assert!(
                        sol.objective <= obj + 1e-6,
                        "solver {} worse than grid {}",
                        sol.objective,
                        obj
                    );
                }
                Err(_) => {
                    assert!(
                        crate::oracles::qp_grid_search(&p, 1e-4).is_none(),
                        "solver infeasible but grid search found a point"
                    );
                }
            }
        }
    }

    #[test]
    fn scaling_rows_leaves_the_solution_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let p = crate::oracles::random_qp(&mut rng);
            let Ok(sol) = solve(&p) else { continue };
            let mut scaled = p.clone();
            let s = rng.gen_range(0.1..50.0);
            for row in &mut scaled.rows {
                row.coeff_u *= s;
                row.coeff_delta *= s;
                row.rhs *= s;
            }
            let sol2 = solve(&scaled).unwrap();
            assert!((sol.u - sol2.u).abs() < 1e-9, "{} vs {}", sol.u, sol2.u);
            assert!((sol.delta - sol2.delta).abs() < 1e-9);
        }
    }

    #[test]
    fn removing_an_inactive_row_changes_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut checked = 0;
        for _ in 0..200 {
            let p = crate::oracles::random_qp(&mut rng);
            let Ok(sol) = solve(&p) else { continue };
            for i in 0..p.rows.len() {
                if sol.active_set.contains(&p.rows[i].kind) {
                    continue;
                }
                let mut reduced = p.clone();
                reduced.rows.remove(i);
                let sol2 = solve(&reduced).unwrap();
                assert!((sol.u - sol2.u).abs() < 1e-12);
                assert!((sol.delta - sol2.delta).abs() < 1e-12);
                checked += 1;
            }
        }
        assert!(checked > 50, "too few inactive-row cases exercised");
    }
}
