//! Physical constants (CODATA 2018 exact/recommended values) and unit helpers.

use std::f64::consts::PI;

/// Elementary charge (C).
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
/// Vacuum permittivity (F/m).
pub const EPSILON_0: f64 = 8.854_187_812_8e-12;
/// Speed of light (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Atomic mass constant (kg).
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;
/// Reduced Planck constant (J s).
pub const HBAR: f64 = 1.054_571_817e-34;

/// Coulomb constant 1/(4 pi eps0) (m/F).
pub const COULOMB_K: f64 = 1.0 / (4.0 * PI * EPSILON_0);

pub const MICRON: f64 = 1e-6;

/// Converts a surface-charge density in e/µm² to C/m².
pub fn e_per_um2_to_si(sigma: f64) -> f64 {
    sigma * ELEMENTARY_CHARGE / (MICRON * MICRON)
}

/// Angular frequency (rad/s) from a frequency in MHz.
pub fn mhz_to_angular(f_mhz: f64) -> f64 {
    2.0 * PI * f_mhz * 1e6
}

/// Frequency in MHz from an angular frequency (rad/s).
pub fn angular_to_mhz(omega: f64) -> f64 {
    omega / (2.0 * PI * 1e6)
}

pub fn khz_to_angular(f_khz: f64) -> f64 {
    2.0 * PI * f_khz * 1e3
}
