//! Unconstrained energy/time-optimal speed profile.
//!
//! On entering the control zone each CAV plans the trajectory minimizing
//!
//! ```text
//! J = integral from t0 to tf of ( beta + 0.5 u(t)^2 ) dt
//! ```
//!
//! subject to the double-integrator dynamics, fixed initial state
//! `(x0, v0)`, fixed final position `x(tf) = L`, and free final speed and
//! free final time. The weight `beta` converts travel time into the same
//! units as control energy; it is derived from the scenario's time/energy
//! trade-off factor by [`beta_from_alpha`].
//!
//! Variational analysis gives the optimality structure directly: the
//! optimal control is affine in time, `u*(s) = a s + b` with `u*(T) = 0` at
//! the (relative) exit time `T`, and the free final time adds the scalar
//! condition `beta + a v*(T) = 0`. Together with the boundary conditions
//! this pins down the five unknowns `(a, b, c, d, T)`; they are found by a
//! damped Newton iteration with an analytic Jacobian, with a bisection
//! fallback that is guaranteed to bracket the optimum.
//!
//! Coefficients are stored in *elapsed* time `s = t - t0`, which keeps the
//! system perfectly conditioned no matter how late in a long scenario the
//! CAV arrives.

use crate::cbf::Reference;
use nalgebra::{Matrix5, Vector5};
use thiserror::Error;

/// Polynomial reference trajectory of one CAV:
/// `u*(s) = a s + b`, `v*(s) = a s^2/2 + b s + c`,
/// `x*(s) = a s^3/6 + b s^2/2 + c s + d`, with `s = t - t0` in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalProfile {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    /// Entry instant [s] (absolute scenario time).
    pub t0: f64,
    /// Planned exit instant [s] (absolute scenario time).
    pub tf: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProfileError {
    #[error("profile solve did not converge: {detail}")]
    NoConvergence { detail: String },
    #[error("no admissible profile: {detail}")]
    InfeasibleProfile { detail: String },
}

/// Iteration budget of the damped Newton solve.
const MAX_NEWTON_ITERS: usize = 100;
/// Residual norm (infinity norm) required of an accepted solution.
const RESIDUAL_TOL: f64 = 1e-9;

/// Time-weight `beta` for a time/energy trade-off factor `alpha` in `[0, 1)`:
/// `beta = alpha * max(u_max^2, u_min^2) / (2 (1 - alpha))`, so that `alpha`
/// expresses the fraction of the (normalized) cost assigned to travel time.
pub fn beta_from_alpha(alpha: f64, u_min: f64, u_max: f64) -> f64 {
    let peak_sq = (u_max * u_max).max(u_min * u_min);
    alpha * peak_sq / (2.0 * (1.0 - alpha))
}

impl OptimalProfile {
    /// Reference control and speed at absolute time `t`. Before `t0` the
    /// entry state applies; past `tf` the profile has landed (`u* = 0`)
    /// and the terminal speed is held.
    pub fn ref_at(&self, t: f64) -> Reference {
        let span = self.tf - self.t0;
        let s = (t - self.t0).clamp(0.0, span);
        Reference {
            // The terminal boundary condition makes the control land on
            // zero, up to solver residual; report the landing exactly.
            u_star: if t - self.t0 >= span { 0.0 } else { self.a * s + self.b },
            v_star: 0.5 * self.a * s * s + self.b * s + self.c,
        }
    }

    /// Reference position at absolute time `t` [m].
    pub fn position_at(&self, t: f64) -> f64 {
        let s = (t - self.t0).clamp(0.0, self.tf - self.t0);
        ((self.a * s / 6.0 + 0.5 * self.b) * s + self.c) * s + self.d
    }

    /// Total planned cost `beta (tf - t0) + integral of u*^2/2`.
    pub fn cost(&self, beta: f64) -> f64 {
        let t = self.tf - self.t0;
        let energy = if self.a != 0.0 {
            let end = self.a * t + self.b;
            (end * end * end - self.b * self.b * self.b) / (6.0 * self.a)
        } else {
            0.5 * self.b * self.b * t
        };
        beta * t + energy
    }
}

/// Plan the optimal profile for a CAV entering at `(x0, v0)` at time `t0`,
/// bound for the exit at `zone_length`.
pub fn solve_unconstrained(
    x0: f64,
    v0: f64,
    t0: f64,
    zone_length: f64,
    beta: f64,
) -> Result<OptimalProfile, ProfileError> {
    let dist = zone_length - x0;
    if !(dist > 0.0) {
        return Err(ProfileError::InfeasibleProfile {
            detail: format!("entry position {x0} m is not before the exit at {zone_length} m"),
        });
    }
    if !(v0 > 0.0) {
        return Err(ProfileError::InfeasibleProfile {
            detail: format!("entry speed {v0} m/s is not positive"),
        });
    }
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(ProfileError::InfeasibleProfile {
            detail: format!("time weight beta = {beta} must be positive and finite"),
        });
    }

    let cruise_time = dist / v0;
    // Slightly perturbed coasting profile as the Newton seed.
    let seed = {
        let a = -1e-6;
        Vector5::new(a, -a * cruise_time, v0, x0, cruise_time)
    };
    let solution = newton_solve(seed, x0, v0, zone_length, beta)
        .or_else(|| bisection_solve(x0, v0, zone_length, beta))
        .ok_or_else(|| ProfileError::NoConvergence {
            detail: format!("x0 = {x0} m, v0 = {v0} m/s, beta = {beta}"),
        })?;

    let (a, b, c, d, t) = (
        solution[0],
        solution[1],
        solution[2],
        solution[3],
        solution[4],
    );
    let profile = OptimalProfile {
        a,
        b,
        c,
        d,
        t0,
        tf: t0 + t,
    };

    // The reference speed must stay positive all the way to the exit
    // (a stalled or reversing reference cannot be tracked to the merge).
    let vertex = if a != 0.0 { -b / a } else { f64::NAN };
    let mut v_inf = profile.ref_at(t0).v_star.min(profile.ref_at(t0 + t).v_star);
    if vertex.is_finite() && vertex > 0.0 && vertex < t {
        v_inf = v_inf.min(0.5 * a * vertex * vertex + b * vertex + c);
    }
    if v_inf <= 0.0 {
        return Err(ProfileError::InfeasibleProfile {
            detail: format!("reference speed reaches {v_inf} m/s before the exit"),
        });
    }
    Ok(profile)
}

/// Residuals of the five optimality equations at `z = (a, b, c, d, T)`.
fn residual(z: &Vector5<f64>, x0: f64, v0: f64, zone_length: f64, beta: f64) -> Vector5<f64> {
    let (a, b, c, d, t) = (z[0], z[1], z[2], z[3], z[4]);
    let v_f = 0.5 * a * t * t + b * t + c;
    Vector5::new(
        c - v0,
        d - x0,
        a * t * t * t / 6.0 + 0.5 * b * t * t + c * t + d - zone_length,
        a * t + b,
        beta + a * v_f,
    )
}

fn jacobian(z: &Vector5<f64>) -> Matrix5<f64> {
    let (a, b, c, t) = (z[0], z[1], z[2], z[4]);
    let v_f = 0.5 * a * t * t + b * t + c;
    let u_f = a * t + b;
    Matrix5::new(
        0.0, 0.0, 1.0, 0.0, 0.0, //
        0.0, 0.0, 0.0, 1.0, 0.0, //
        t * t * t / 6.0, 0.5 * t * t, t, 1.0, v_f, //
        t, 1.0, 0.0, 0.0, a, //
        v_f + 0.5 * a * t * t, a * t, a, 0.0, a * u_f,
    )
}

fn newton_solve(
    mut z: Vector5<f64>,
    x0: f64,
    v0: f64,
    zone_length: f64,
    beta: f64,
) -> Option<Vector5<f64>> {
    let mut r = residual(&z, x0, v0, zone_length, beta);
    for _ in 0..MAX_NEWTON_ITERS {
        if r.amax() <= 1e-12 {
            return Some(z);
        }
        let step = jacobian(&z).lu().solve(&-r)?;
        // Backtracking line search on the residual norm; also refuses to
        // step across T <= 0.
        let mut lambda = 1.0;
        let mut improved = false;
        for _ in 0..40 {
            let z_new = z + step * lambda;
            if z_new[4] > 0.0 {
                let r_new = residual(&z_new, x0, v0, zone_length, beta);
                if r_new.norm() < r.norm() {
                    z = z_new;
                    r = r_new;
                    improved = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !improved {
            break;
        }
    }
    (r.amax() <= RESIDUAL_TOL).then_some(z)
}

/// Reduction to one scalar equation in the exit time, using the four linear
/// boundary equations to eliminate `(a, b, c, d)` in closed form. Used only
/// when Newton stalls; the bracket below provably contains the optimum.
fn bisection_solve(x0: f64, v0: f64, zone_length: f64, beta: f64) -> Option<Vector5<f64>> {
    let dist = zone_length - x0;
    let assemble = |t: f64| -> Vector5<f64> {
        let a = 3.0 * (v0 * t - dist) / (t * t * t);
        Vector5::new(a, -a * t, v0, x0, t)
    };
    let g = |t: f64| -> f64 {
        let z = assemble(t);
        let (a, b) = (z[0], z[1]);
        beta + a * (0.5 * a * t * t + b * t + v0)
    };

    // g(cruise_time) = beta > 0 and g -> -inf as T -> 0+, so a sign change
    // always exists in (0, cruise_time].
    let t_hi = dist / v0;
    let mut hi = t_hi;
    let mut lo = t_hi;
    for _ in 0..200 {
        lo *= 0.5;
        if g(lo) < 0.0 {
            break;
        }
        hi = lo;
    }
    if g(lo) >= 0.0 {
        return None;
    }
    let (mut lo, mut hi) = (lo, hi);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Polish the bisection estimate on the full system.
    let z = assemble(0.5 * (lo + hi));
    newton_solve(z, x0, v0, zone_length, beta).or_else(|| {
        let r = residual(&z, x0, v0, zone_length, beta);
        (r.amax() <= RESIDUAL_TOL).then_some(z)
    })
}
