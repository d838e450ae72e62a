//! Discrete time grid.
//!
//! Every scheduled event in a scenario (arrival, control update, broadcast)
//! happens on a uniform grid with step `t_d` (the minimum inter-event
//! interval). Times are carried as integer tick counts so that grid
//! arithmetic — "is this update at least one interval after the previous
//! one?" — is exact rather than a floating-point comparison.

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Tolerance (in fractional ticks) used when converting a nominal grid time
/// expressed in seconds back to a tick index.
pub const GRID_EPS: f64 = 1e-9;

/// A point on the simulation time grid, counted in steps of `t_d` seconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Tick(pub u64);

impl Tick {
    /// Sentinel for an event that will never fire (for example the next
    /// update of a vehicle that has already left the control zone). Far
    /// beyond any reachable horizon, and safe to compare against.
    pub const NEVER: Tick = Tick(u64::MAX);

    /// The tick's absolute time in seconds for a grid of step `t_d`.
    pub fn seconds(self, t_d: f64) -> f64 {
        self.0 as f64 * t_d
    }

    /// Largest grid point at or below `t` seconds.
    ///
    /// A small tolerance absorbs round-off so that times computed as
    /// `k * t_d` floor back to tick `k` exactly. Negative times floor to 0.
    pub fn floor_from_seconds(t: f64, t_d: f64) -> Tick {
        let raw = t / t_d + GRID_EPS;
        if raw <= 0.0 {
            Tick(0)
        } else {
            Tick(raw.floor() as u64)
        }
    }

    /// Smallest grid point at or above `t` seconds.
    pub fn ceil_from_seconds(t: f64, t_d: f64) -> Tick {
        let raw = t / t_d - GRID_EPS;
        if raw <= 0.0 {
            Tick(0)
        } else {
            Tick(raw.ceil() as u64)
        }
    }

    /// Exact conversion of a time that is supposed to already lie on the
    /// grid. Rejects values farther than [`GRID_EPS`] ticks from any grid
    /// point, which catches callers that try to schedule between grid points.
    pub fn try_from_seconds(t: f64, t_d: f64) -> Result<Tick, OffGrid> {
        if !(t_d > 0.0) || !t.is_finite() || t < 0.0 {
            return Err(OffGrid { t, t_d });
        }
        let raw = t / t_d;
        let nearest = raw.round();
        if (raw - nearest).abs() <= GRID_EPS * (1.0 + raw.abs()) {
            Ok(Tick(nearest as u64))
        } else {
            Err(OffGrid { t, t_d })
        }
    }
}

impl fmt::Display for Tick {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::ops::Add<u64> for Tick {
    type Output = Tick;
    fn add(self, rhs: u64) -> Tick {
        Tick(self.0 + rhs)
    }
}

impl std::ops::Sub<Tick> for Tick {
    type Output = u64;
    fn sub(self, rhs: Tick) -> u64 {
        self.0 - rhs.0
    }
}

/// A time in seconds did not coincide with any point of the `t_d` grid.
#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("time {t} s is not on the {t_d} s grid")]
pub struct OffGrid {
    pub t: f64,
    pub t_d: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    const T_D: f64 = 0.05;

    #[test]
    fn seconds_round_trip_over_long_horizons() {
        // 0.05 is not exactly representable in binary; the tolerance must
        // absorb the accumulated representation error at large tick counts.
        for k in [0u64, 1, 3, 7, 41, 1_000, 199_999, 2_000_000] {
            let t = Tick(k).seconds(T_D);
            assert_eq!(Tick::floor_from_seconds(t, T_D), Tick(k));
            assert_eq!(Tick::ceil_from_seconds(t, T_D), Tick(k));
            assert_eq!(Tick::try_from_seconds(t, T_D).unwrap(), Tick(k));
        }
    }

    #[test]
    fn floor_and_ceil_between_grid_points() {
        assert_eq!(Tick::floor_from_seconds(2.07, T_D), Tick(41));
        assert_eq!(Tick::ceil_from_seconds(2.07, T_D), Tick(42));
        assert_eq!(Tick::floor_from_seconds(0.049, T_D), Tick(0));
        assert_eq!(Tick::ceil_from_seconds(0.001, T_D), Tick(1));
    }

    #[test]
    fn off_grid_times_are_rejected() {
        assert!(Tick::try_from_seconds(2.07, T_D).is_err());
        assert!(Tick::try_from_seconds(-0.05, T_D).is_err());
        assert!(Tick::try_from_seconds(f64::NAN, T_D).is_err());
        assert!(Tick::try_from_seconds(1.0, 0.0).is_err());
        assert_eq!(Tick::try_from_seconds(3.05, T_D).unwrap(), Tick(61));
    }

    #[test]
    fn tick_arithmetic() {
        assert_eq!(Tick(10) + 3, Tick(13));
        assert_eq!(Tick(13) - Tick(10), 3);
        assert!(Tick(2) < Tick(3));
    }
}
