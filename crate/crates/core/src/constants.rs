//! Physical constants (SI).

use std::f64::consts::PI;

/// Speed of light in vacuum, m/s.
pub const C0: f64 = 299_792_458.0;

/// Vacuum permeability, H/m (CODATA 2018).
pub const MU0: f64 = 1.256_637_062_12e-6;

/// Vacuum permittivity, F/m, derived from `MU0` and `C0` so that
/// `k0² = ω² μ0 ε0` holds to rounding.
pub const EPS0: f64 = 1.0 / (MU0 * C0 * C0);

/// Angular frequency for a frequency in Hz.
pub fn angular_frequency(frequency_hz: f64) -> f64 {
    2.0 * PI * frequency_hz
}

/// Vacuum wavenumber for an angular frequency.
pub fn wavenumber(omega: f64) -> f64 {
    omega / C0
}
