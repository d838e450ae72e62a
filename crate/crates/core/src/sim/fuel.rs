//! Instantaneous fuel-rate model.

use super::config::FuelCoefficients;

/// Fuel consumption rate at speed `v` [m/s] under acceleration `u` [m/s^2].
///
/// Cruise consumption is a cubic polynomial in speed; accelerating adds a
/// speed-dependent term proportional to the acceleration. Braking burns no
/// extra fuel: only `max(u, 0)` enters the acceleration term.
pub fn fuel_rate(v: f64, u: f64, c: &FuelCoefficients) -> f64 {
    let cruise = c.cruise[0] + v * (c.cruise[1] + v * (c.cruise[2] + v * c.cruise[3]));
    let accel = u.max(0.0) * (c.accel[0] + v * (c.accel[1] + v * c.accel[2]));
    cruise + accel
}
