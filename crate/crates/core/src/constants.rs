//! Physical constants and the frequency convention.
//!
//! All angular frequencies are carried internally in rad/s. Quantities that
//! are quoted "/2π" (tabulated rates, report columns) are ordinary frequencies
//! in Hz.

use std::f64::consts::PI;

/// Reduced Planck constant, J·s (CODATA 2018, exact).
pub const HBAR: f64 = 1.054_571_817e-34;
/// Vacuum permittivity, F/m (CODATA 2018).
pub const EPS0: f64 = 8.854_187_812_8e-12;
/// Speed of light in vacuum, m/s (exact).
pub const C_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    pub hbar: f64,
    pub eps0: f64,
    pub c: f64,
}

impl PhysicalConstants {
    pub const CODATA: PhysicalConstants = PhysicalConstants {
        hbar: HBAR,
        eps0: EPS0,
        c: C_LIGHT,
    };
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::CODATA
    }
}

/// Ordinary frequency (Hz) to angular frequency (rad/s).
#[inline]
pub fn to_angular(hz: f64) -> f64 {
    2.0 * PI * hz
}

/// Angular frequency (rad/s) to ordinary frequency (Hz).
#[inline]
pub fn to_ordinary(rad_per_s: f64) -> f64 {
    rad_per_s / (2.0 * PI)
}
