//! Fiber Fabry-Pérot resonator geometry and cavity QED rates.
//!
//! All linewidths and decay rates are half widths at half maximum, given as
//! angular frequencies (rad/s). Report structs carry the convention as a
//! string so downstream files are self-describing.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::constants::{angular_to_mhz, mhz_to_angular, SPEED_OF_LIGHT};
use crate::error::{Error, Result};

pub const LINEWIDTH_CONVENTION: &str = "HWHM";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CavityGeometry {
    pub length_um: f64,
    pub roc1_um: f64,
    pub roc2_um: f64,
    pub wavelength_nm: f64,
    pub t1_ppm: f64,
    pub t2_ppm: f64,
    /// Scatter and absorption per round trip.
    pub other_loss_ppm: f64,
    /// True when `other_loss_ppm` was back-computed from a measured finesse
    /// rather than measured directly.
    pub other_loss_inferred: bool,
}

impl Default for CavityGeometry {
    /// The as-built fiber cavity. The extra loss of 50.3 ppm is inferred so
    /// that the finesse comes out near 9.2e4.
    fn default() -> Self {
        Self {
            length_um: 507.0,
            roc1_um: 318.0,
            roc2_um: 312.0,
            wavelength_nm: 854.0,
            t1_ppm: 2.0,
            t2_ppm: 16.0,
            other_loss_ppm: 50.3,
            other_loss_inferred: true,
        }
    }
}

impl CavityGeometry {
    pub fn g_factors(&self) -> (f64, f64) {
        (1.0 - self.length_um / self.roc1_um, 1.0 - self.length_um / self.roc2_um)
    }

    pub fn total_loss_ppm(&self) -> f64 {
        self.t1_ppm + self.t2_ppm + self.other_loss_ppm
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("length_um", self.length_um),
            ("roc1_um", self.roc1_um),
            ("roc2_um", self.roc2_um),
            ("wavelength_nm", self.wavelength_nm),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::parameter(name, "must be positive"));
            }
        }
        for (name, v) in [
            ("t1_ppm", self.t1_ppm),
            ("t2_ppm", self.t2_ppm),
            ("other_loss_ppm", self.other_loss_ppm),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::parameter(name, "must be non-negative"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeGeometry {
    pub g1g2: f64,
    pub waist_um: f64,
    /// Waist distance from mirror 1.
    pub waist_position_um: f64,
    pub rayleigh_range_um: f64,
    /// True at the confocal-type (g1g2 = 0) or planar (g1g2 = 1) stability edge.
    pub marginal: bool,
}

/// Gaussian fundamental mode of a two-mirror resonator.
pub fn mode_geometry(cavity: &CavityGeometry) -> Result<ModeGeometry> {
    cavity.validate()?;
    let (g1, g2) = cavity.g_factors();
    let p = g1 * g2;
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Stability(format!(
            "resonator outside the stability region: g1g2 = {p:.6}"
        )));
    }
    let eps = 1e-12;
    let marginal = p < eps || p > 1.0 - eps;
    let denom = g1 + g2 - 2.0 * p;
    if marginal || denom.abs() < eps {
        return Ok(ModeGeometry {
            g1g2: p,
            waist_um: f64::NAN,
            waist_position_um: f64::NAN,
            rayleigh_range_um: f64::NAN,
            marginal: true,
        });
    }
    let lambda_um = cavity.wavelength_nm * 1e-3;
    let l = cavity.length_um;
    let zr2 = l * l * p * (1.0 - p) / (denom * denom);
    let zr = zr2.sqrt();
    let w0 = (lambda_um * zr / PI).sqrt();
    Ok(ModeGeometry {
        g1g2: p,
        waist_um: w0,
        waist_position_um: l * g2 * (1.0 - g1) / denom,
        rayleigh_range_um: zr,
        marginal: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavityRates {
    pub fsr_hz: f64,
    pub finesse: f64,
    /// Field decay rate, HWHM, rad/s.
    pub kappa: f64,
}

impl CavityRates {
    /// Rates for a cavity of given length and finesse.
    pub fn from_finesse(length_um: f64, finesse: f64) -> Result<Self> {
        if !(length_um > 0.0) {
            return Err(Error::parameter("length_um", "must be positive"));
        }
        if !(finesse > 0.0 && finesse.is_finite()) {
            return Err(Error::parameter("finesse", "must be positive and finite"));
        }
        let fsr = SPEED_OF_LIGHT / (2.0 * length_um * 1e-6);
        Ok(Self {
            fsr_hz: fsr,
            finesse,
            kappa: PI * fsr / finesse,
        })
    }
}

/// Free spectral range, finesse from the round-trip loss, and κ.
pub fn cavity_rates(cavity: &CavityGeometry) -> Result<CavityRates> {
    cavity.validate()?;
    let loss = cavity.total_loss_ppm() * 1e-6;
    if !(loss > 0.0) {
        return Err(Error::parameter(
            "other_loss_ppm",
            "total round-trip loss must be positive",
        ));
    }
    CavityRates::from_finesse(cavity.length_um, 2.0 * PI / loss)
}

/// The cavity-coupled atomic line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CavityTransition {
    pub wavelength_nm: f64,
    /// Decay rate of the cavity-coupled line, HWHM, MHz (ordinary frequency).
    pub gamma_mhz: f64,
    /// Decay rate of the competing strong line, HWHM, MHz.
    pub gamma_competing_mhz: f64,
    /// Clebsch-Gordan and projection factor.
    pub alpha: f64,
}

impl Default for CavityTransition {
    /// ⁴⁰Ca⁺ D5/2 to P3/2 at 854 nm; the competing line is P3/2 to S1/2.
    fn default() -> Self {
        Self {
            wavelength_nm: 854.0,
            gamma_mhz: 0.67,
            gamma_competing_mhz: 10.74,
            alpha: (2.0f64 / 3.0).sqrt(),
        }
    }
}

impl CavityTransition {
    pub fn validate(&self) -> Result<()> {
        if !(self.wavelength_nm > 0.0) {
            return Err(Error::parameter("wavelength_nm", "must be positive"));
        }
        if !(self.gamma_mhz > 0.0) {
            return Err(Error::parameter("gamma_mhz", "must be positive"));
        }
        if !(self.gamma_competing_mhz >= 0.0) {
            return Err(Error::parameter("gamma_competing_mhz", "must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::parameter("alpha", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CqedRates {
    pub fsr_hz: f64,
    pub finesse: f64,
    pub kappa: f64,
    pub waist_um: f64,
    pub mode_volume_um3: f64,
    pub g0: f64,
    pub alpha: f64,
    pub g: f64,
    pub gamma_pd: f64,
    pub gamma_ps: f64,
}

/// Single-photon coupling for a TEM00 mode waist `waist_um` and length
/// `length_um`: g₀² = 3cλ²γ/(4πV) with V = πw₀²L/4 and γ the HWHM decay rate.
pub fn g0_from_waist(length_um: f64, waist_um: f64, wavelength_nm: f64, gamma: f64) -> f64 {
    let lambda = wavelength_nm * 1e-9;
    let w0 = waist_um * 1e-6;
    let l = length_um * 1e-6;
    (3.0 * lambda * lambda * SPEED_OF_LIGHT * gamma / (PI * PI * w0 * w0 * l)).sqrt()
}

pub fn coupling_strength(cavity: &CavityGeometry, transition: &CavityTransition) -> Result<CqedRates> {
    transition.validate()?;
    let mode = mode_geometry(cavity)?;
    if mode.marginal {
        return Err(Error::Stability(format!(
            "marginal resonator (g1g2 = {:.6}) has no finite mode volume",
            mode.g1g2
        )));
    }
    let rates = cavity_rates(cavity)?;
    let gamma = mhz_to_angular(transition.gamma_mhz);
    let g0 = g0_from_waist(cavity.length_um, mode.waist_um, transition.wavelength_nm, gamma);
    Ok(CqedRates {
        fsr_hz: rates.fsr_hz,
        finesse: rates.finesse,
        kappa: rates.kappa,
        waist_um: mode.waist_um,
        mode_volume_um3: PI * mode.waist_um * mode.waist_um * cavity.length_um / 4.0,
        g0,
        alpha: transition.alpha,
        g: transition.alpha * g0,
        gamma_pd: gamma,
        gamma_ps: mhz_to_angular(transition.gamma_competing_mhz),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrongCouplingReport {
    pub g_mhz: f64,
    pub kappa_mhz: f64,
    pub gamma_pd_mhz: f64,
    pub gamma_ps_mhz: f64,
    pub g_exceeds_kappa: bool,
    pub g_exceeds_gamma_ps: bool,
    pub convention: String,
}

pub fn strong_coupling_report(rates: &CqedRates) -> StrongCouplingReport {
    StrongCouplingReport {
        g_mhz: angular_to_mhz(rates.g),
        kappa_mhz: angular_to_mhz(rates.kappa),
        gamma_pd_mhz: angular_to_mhz(rates.gamma_pd),
        gamma_ps_mhz: angular_to_mhz(rates.gamma_ps),
        g_exceeds_kappa: rates.g > rates.kappa,
        g_exceeds_gamma_ps: rates.g > rates.gamma_ps,
        convention: LINEWIDTH_CONVENTION.into(),
    }
}

/// Flat JSON summary; frequencies are ordinary (divided by 2π).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCard {
    #[serde(rename = "fsr_GHz")]
    pub fsr_ghz: f64,
    pub finesse: f64,
    #[serde(rename = "kappa_MHz")]
    pub kappa_mhz: f64,
    pub g1g2: f64,
    pub w0_um: f64,
    pub waist_position_um: f64,
    pub mode_volume_um3: f64,
    #[serde(rename = "g0_MHz")]
    pub g0_mhz: f64,
    pub alpha: f64,
    #[serde(rename = "g_MHz")]
    pub g_mhz: f64,
    #[serde(rename = "gamma_PD_MHz")]
    pub gamma_pd_mhz: f64,
    #[serde(rename = "gamma_PS_MHz")]
    pub gamma_ps_mhz: f64,
    pub total_loss_ppm: f64,
    pub other_loss_ppm: f64,
    pub other_loss_inferred: bool,
    pub strong_coupling: StrongCouplingReport,
}

pub fn rate_card(cavity: &CavityGeometry, transition: &CavityTransition) -> Result<RateCard> {
    let mode = mode_geometry(cavity)?;
    let r = coupling_strength(cavity, transition)?;
    Ok(RateCard {
        fsr_ghz: r.fsr_hz * 1e-9,
        finesse: r.finesse,
        kappa_mhz: angular_to_mhz(r.kappa),
        g1g2: mode.g1g2,
        w0_um: mode.waist_um,
        waist_position_um: mode.waist_position_um,
        mode_volume_um3: r.mode_volume_um3,
        g0_mhz: angular_to_mhz(r.g0),
        alpha: r.alpha,
        g_mhz: angular_to_mhz(r.g),
        gamma_pd_mhz: angular_to_mhz(r.gamma_pd),
        gamma_ps_mhz: angular_to_mhz(r.gamma_ps),
        total_loss_ppm: cavity.total_loss_ppm(),
        other_loss_ppm: cavity.other_loss_ppm,
        other_loss_inferred: cavity.other_loss_inferred,
        strong_coupling: strong_coupling_report(&r),
    })
}
