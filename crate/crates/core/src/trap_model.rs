//! Total trapping potential: RF pseudopotential, DC potential and facet
//! surface-charge potential, for the two RF drive configurations.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use nalgebra::{DMatrix, Matrix3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::{mhz_to_angular, ATOMIC_MASS_UNIT, ELEMENTARY_CHARGE, MICRON};
use crate::error::{Error, Result};
use crate::field_solver::{Excitation, FieldSample, FieldSource, PreparedField};
use crate::geometry::{Label, Vec3};
use crate::numerics::lsq::linear_least_squares;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn unit(self) -> Vec3 {
        let mut v = Vec3::zeros();
        v[self.index()] = 1.0;
        v
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriveMode {
    /// RF on the RF_A pair, RF_B grounded.
    RfGnd,
    /// RF_A and RF_B driven 180° out of phase.
    Symmetric,
}

/// RF drive and DC settings. Voltages in V, frequency in MHz (not angular).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriveConfig {
    pub mode: DriveMode,
    /// RF amplitude V_RF.
    pub v_rf: f64,
    /// Ω_rf / 2π.
    pub rf_frequency_mhz: f64,
    pub v_pc: f64,
    pub v_mm: f64,
    /// COMP_1, COMP_2, ... in order.
    pub compensation_v: Vec<f64>,
}

impl Default for DriveConfig {
    fn default() -> Self {
        Self {
            mode: DriveMode::Symmetric,
            v_rf: 160.0,
            rf_frequency_mhz: 35.0,
            v_pc: 1.0,
            v_mm: 1.0,
            compensation_v: Vec::new(),
        }
    }
}

impl DriveConfig {
    pub fn rf_gnd() -> Self {
        Self {
            mode: DriveMode::RfGnd,
            ..Self::default()
        }
    }

    pub fn symmetric() -> Self {
        Self::default()
    }

    pub fn with_dc(mut self, v_pc: f64, v_mm: f64) -> Self {
        self.v_pc = v_pc;
        self.v_mm = v_mm;
        self
    }

    pub fn with_rf(mut self, v_rf: f64, rf_frequency_mhz: f64) -> Self {
        self.v_rf = v_rf;
        self.rf_frequency_mhz = rf_frequency_mhz;
        self
    }

    /// Ω_rf (rad/s).
    pub fn omega_rf(&self) -> f64 {
        mhz_to_angular(self.rf_frequency_mhz)
    }

    pub fn set_omega_rf(&mut self, omega: f64) {
        self.rf_frequency_mhz = omega / mhz_to_angular(1.0);
    }

    /// Basis voltage V0 at which the RF basis field is computed.
    pub fn v0(&self) -> f64 {
        match self.mode {
            DriveMode::RfGnd => 1.0,
            DriveMode::Symmetric => 0.5,
        }
    }

    /// The RF electrode excitation at the basis voltage V0.
    pub fn rf_basis(&self) -> Excitation {
        match self.mode {
            DriveMode::RfGnd => Excitation::new().with(Label::RfA, 1.0),
            DriveMode::Symmetric => Excitation::new().with(Label::RfA, 0.5).with(Label::RfB, -0.5),
        }
    }

    pub fn dc_excitation(&self) -> Excitation {
        let mut e = Excitation::new()
            .with(Label::DcPc, self.v_pc)
            .with(Label::DcMm, self.v_mm);
        for (i, v) in self.compensation_v.iter().enumerate() {
            e = e.with(Label::Comp(i as u8 + 1), *v);
        }
        e
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v_rf >= 0.0 && self.v_rf.is_finite()) {
            return Err(Error::parameter(
                "drive.v_rf",
                format!("must be >= 0, got {}", self.v_rf),
            ));
        }
        if !(self.rf_frequency_mhz > 0.0 && self.rf_frequency_mhz.is_finite()) {
            return Err(Error::parameter(
                "drive.rf_frequency_mhz",
                format!("must be > 0, got {}", self.rf_frequency_mhz),
            ));
        }
        for (name, v) in [("drive.v_pc", self.v_pc), ("drive.v_mm", self.v_mm)] {
            if !v.is_finite() {
                return Err(Error::parameter(name, "must be finite"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IonSpecies {
    pub mass_u: f64,
    /// Charge in units of e.
    pub charge_e: f64,
    /// Probe wavelength for micromotion and Lamb-Dicke factors.
    pub probe_wavelength_nm: f64,
}

impl Default for IonSpecies {
    fn default() -> Self {
        Self::calcium40()
    }
}

impl IonSpecies {
    pub fn calcium40() -> Self {
        Self {
            mass_u: 40.0,
            charge_e: 1.0,
            probe_wavelength_nm: 729.0,
        }
    }

    pub fn mass(&self) -> f64 {
        self.mass_u * ATOMIC_MASS_UNIT
    }

    pub fn charge(&self) -> f64 {
        self.charge_e * ELEMENTARY_CHARGE
    }

    pub fn wavelength(&self) -> f64 {
        self.probe_wavelength_nm * 1e-9
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass_u > 0.0) {
            return Err(Error::parameter("species.mass_u", "must be > 0"));
        }
        if self.charge_e == 0.0 || !self.charge_e.is_finite() {
            return Err(Error::parameter("species.charge_e", "must be nonzero"));
        }
        if !(self.probe_wavelength_nm > 0.0) {
            return Err(Error::parameter("species.probe_wavelength_nm", "must be > 0"));
        }
        Ok(())
    }
}

/// Pseudopotential (eV) of the RF basis field `e_basis` (V/m, computed at V0).
pub fn pseudopotential(e_basis: &Vec3, drive: &DriveConfig, species: &IonSpecies) -> Result<f64> {
    let omega = drive.omega_rf();
    if !(omega > 0.0) {
        return Err(Error::parameter("drive.rf_frequency_mhz", "must be > 0"));
    }
    let e = e_basis * (drive.v_rf / drive.v0());
    let q = species.charge();
    Ok(q * q * e.norm_squared() / (4.0 * species.mass() * omega * omega) / ELEMENTARY_CHARGE)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PotentialComponents {
    pub rf: f64,
    pub dc: f64,
    pub sigma: f64,
    pub total: f64,
}

/// Drive, species and facet charges bound to a field source.
pub struct TrapModel<'a> {
    source: &'a dyn FieldSource,
    prepared: Box<dyn PreparedField + 'a>,
    pub drive: DriveConfig,
    pub species: IonSpecies,
    pub sigma_pc: f64,
    pub sigma_mm: f64,
}

impl<'a> TrapModel<'a> {
    pub fn new(
        source: &'a dyn FieldSource,
        drive: &DriveConfig,
        species: &IonSpecies,
        sigma_pc: f64,
        sigma_mm: f64,
    ) -> Result<Self> {
        drive.validate()?;
        species.validate()?;
        let excitations = [
            drive.rf_basis(),
            drive.dc_excitation(),
            Excitation::new().with_sigma(sigma_pc, sigma_mm),
        ];
        Ok(Self {
            source,
            prepared: source.prepare(&excitations)?,
            drive: drive.clone(),
            species: *species,
            sigma_pc,
            sigma_mm,
        })
    }

    pub fn source(&self) -> &'a dyn FieldSource {
        self.source
    }

    /// Same source with another drive or charge state.
    pub fn with(&self, drive: &DriveConfig, sigma_pc: f64, sigma_mm: f64) -> Result<TrapModel<'a>> {
        TrapModel::new(self.source, drive, &self.species, sigma_pc, sigma_mm)
    }

    fn raw(&self, point_um: &Vec3) -> Result<[FieldSample; 3]> {
        let v = self.prepared.sample(point_um)?;
        Ok([v[0], v[1], v[2]])
    }

    pub fn components(&self, point_um: &Vec3) -> Result<PotentialComponents> {
        let [rf, dc, sg] = self.raw(point_um)?;
        let rf = pseudopotential(&rf.field, &self.drive, &self.species)?;
        let dc = self.species.charge_e * dc.potential;
        let sigma = self.species.charge_e * sg.potential;
        Ok(PotentialComponents {
            rf,
            dc,
            sigma,
            total: rf + dc + sigma,
        })
    }

    /// φ_trap (eV).
    pub fn total(&self, point_um: &Vec3) -> Result<f64> {
        Ok(self.components(point_um)?.total)
    }

    /// RF field amplitude at the applied V_RF (V/m).
    pub fn rf_field(&self, point_um: &Vec3) -> Result<Vec3> {
        Ok(self.raw(point_um)?[0].field * (self.drive.v_rf / self.drive.v0()))
    }

    /// RF potential amplitude at the applied V_RF (V).
    pub fn rf_potential(&self, point_um: &Vec3) -> Result<f64> {
        Ok(self.raw(point_um)?[0].potential * (self.drive.v_rf / self.drive.v0()))
    }

    /// Static potential (DC plus facet charges) in V.
    pub fn static_potential(&self, point_um: &Vec3) -> Result<f64> {
        let [_, dc, sg] = self.raw(point_um)?;
        Ok(dc.potential + sg.potential)
    }
}

/// Potential components at a point for an arbitrary field source.
pub fn total_potential(
    source: &dyn FieldSource,
    point_um: &Vec3,
    drive: &DriveConfig,
    sigma_pc: f64,
    sigma_mm: f64,
    species: &IonSpecies,
) -> Result<PotentialComponents> {
    TrapModel::new(source, drive, species, sigma_pc, sigma_mm)?.components(point_um)
}

/// Potential components sampled at a list of points. Energies in eV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PotentialMap {
    /// Set for axis scans: `coords` are then positions along this axis.
    pub axis: Option<Axis>,
    pub coords_um: Vec<f64>,
    pub points_um: Vec<Vec3>,
    pub rf: Vec<f64>,
    pub dc: Vec<f64>,
    pub sigma: Vec<f64>,
    pub total: Vec<f64>,
}

impl PotentialMap {
    pub fn sample(model: &TrapModel, points_um: Vec<Vec3>) -> Result<Self> {
        let comps: Vec<PotentialComponents> = points_um
            .par_iter()
            .map(|p| model.components(p))
            .collect::<Result<_>>()?;
        Ok(Self {
            axis: None,
            coords_um: Vec::new(),
            rf: comps.iter().map(|c| c.rf).collect(),
            dc: comps.iter().map(|c| c.dc).collect(),
            sigma: comps.iter().map(|c| c.sigma).collect(),
            total: comps.iter().map(|c| c.total).collect(),
            points_um,
        })
    }

    /// Scan along `axis` through `center` over ±`half_width` with `step` (µm).
    pub fn along_axis(
        model: &TrapModel,
        axis: Axis,
        center_um: &Vec3,
        half_width_um: f64,
        step_um: f64,
    ) -> Result<Self> {
        if !(step_um > 0.0 && half_width_um >= 0.0) {
            return Err(Error::parameter("step_um", "scan step must be > 0 and half width >= 0"));
        }
        let n = (half_width_um / step_um).round() as i64;
        let coords: Vec<f64> = (-n..=n).map(|i| i as f64 * step_um).collect();
        let points = coords.iter().map(|c| center_um + axis.unit() * *c).collect();
        let mut map = Self::sample(model, points)?;
        map.coords_um = coords.iter().map(|c| c + center_um[axis.index()]).collect();
        map.axis = Some(axis);
        Ok(map)
    }

    pub fn len(&self) -> usize {
        self.total.len()
    }

    pub fn is_empty(&self) -> bool {
        self.total.is_empty()
    }

    /// Columns: coordinate(s) in µm, then each component in meV.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let comps = "phi_RF_meV,phi_DC_meV,phi_sigma_meV,phi_trap_meV";
        match self.axis {
            Some(a) => writeln!(w, "{a}_um,{comps}")?,
            None => writeln!(w, "x_um,y_um,z_um,{comps}")?,
        }
        for i in 0..self.len() {
            match self.axis {
                Some(_) => write!(w, "{:.4}", self.coords_um[i])?,
                None => {
                    let p = self.points_um[i];
                    write!(w, "{:.4},{:.4},{:.4}", p.x, p.y, p.z)?
                }
            }
            writeln!(
                w,
                ",{:.9},{:.9},{:.9},{:.9}",
                1e3 * self.rf[i],
                1e3 * self.dc[i],
                1e3 * self.sigma[i],
                1e3 * self.total[i]
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MathieuParameters {
    pub q: [f64; 3],
    pub a: [f64; 3],
}

/// Relative RMS misfit above which a local quadratic fit is rejected.
const QUADRATIC_FIT_TOL: f64 = 1e-3;

/// Curvatures ∂²φ/∂r_i² (V/m²) of a harmonic quadratic fitted to `phi` on a
/// 3×3×3 grid of ±`half_um` around `center_um`. The fit basis is harmonic, so
/// the three curvatures sum to zero.
pub fn harmonic_curvatures(phi: impl Fn(&Vec3) -> Result<f64>, center_um: &Vec3, half_um: f64) -> Result<[f64; 3]> {
    let mut rows = Vec::with_capacity(27);
    let mut y = Vec::with_capacity(27);
    for i in -1..=1 {
        for j in -1..=1 {
            for k in -1..=1 {
                let d = Vec3::new(i as f64, j as f64, k as f64) * half_um;
                let v = phi(&(center_um + d))?;
                let (x, yy, z) = (d.x, d.y, d.z);
                rows.push([1.0, x, yy, z, x * x - z * z, yy * yy - z * z, x * yy, x * z, yy * z]);
                y.push(v);
            }
        }
    }
    let design = DMatrix::from_fn(rows.len(), 9, |r, c| rows[r][c]);
    let fit = linear_least_squares(&design, &y)?;
    let p = &fit.params;
    let span = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - y.iter().cloned().fold(f64::INFINITY, f64::min);
    if span > 0.0 && fit.residual_rms > QUADRATIC_FIT_TOL * span {
        return Err(Error::Fit(format!(
            "local field is not quadratic: residual {:.3e} of span {:.3e}",
            fit.residual_rms, span
        )));
    }
    let um2 = MICRON * MICRON;
    Ok([2.0 * p[4] / um2, 2.0 * p[5] / um2, -2.0 * (p[4] + p[5]) / um2])
}

/// Mathieu a and q parameters along x, y, z at a point, from local quadratic
/// fits of the RF and static potentials (±2 µm grid).
pub fn mathieu_parameters(model: &TrapModel, point_um: &Vec3) -> Result<MathieuParameters> {
    let h = 2.0;
    let rf = harmonic_curvatures(|p| model.rf_potential(p), point_um, h)?;
    let st = harmonic_curvatures(|p| model.static_potential(p), point_um, h)?;
    let q_ = model.species.charge();
    let m = model.species.mass();
    let om2 = model.drive.omega_rf().powi(2);
    let mut out = MathieuParameters {
        q: [0.0; 3],
        a: [0.0; 3],
    };
    for i in 0..3 {
        out.q[i] = -2.0 * q_ * rf[i] / (m * om2);
        out.a[i] = 4.0 * q_ * st[i] / (m * om2);
    }
    Ok(out)
}

/// Quadratic potential per unit weight: φ = ½ (r−c)ᵀ H (r−c) + g·(r−c) + φ₀,
/// with r in m, H in V/m², g in V/m.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticTerm {
    pub center_um: Vec3,
    pub hessian: Matrix3<f64>,
    pub gradient: Vec3,
    pub offset: f64,
}

impl QuadraticTerm {
    pub fn diagonal(hxx: f64, hyy: f64, hzz: f64) -> Self {
        Self {
            center_um: Vec3::zeros(),
            hessian: Matrix3::from_diagonal(&Vec3::new(hxx, hyy, hzz)),
            gradient: Vec3::zeros(),
            offset: 0.0,
        }
    }

    pub fn with_gradient(mut self, g: Vec3) -> Self {
        self.gradient = g;
        self
    }

    pub fn centered(mut self, c_um: Vec3) -> Self {
        self.center_um = c_um;
        self
    }

    fn sample(&self, p_um: &Vec3) -> (f64, Vec3) {
        let d = (p_um - self.center_um) * MICRON;
        let hd = self.hessian * d;
        (
            0.5 * d.dot(&hd) + self.gradient.dot(&d) + self.offset,
            -(hd + self.gradient),
        )
    }
}

/// Closed-form field source built from quadratic terms per label (facet
/// labels are weighted by σ in e/µm²). Used for ideal-trap checks and as a
/// fast stand-in for a solved geometry.
#[derive(Debug, Clone, Default)]
pub struct AnalyticTrap {
    pub terms: BTreeMap<Label, QuadraticTerm>,
}

impl AnalyticTrap {
    pub fn with_term(mut self, label: Label, term: QuadraticTerm) -> Self {
        self.terms.insert(label, term);
        self
    }

    /// Ideal linear Paul trap: RF quadrupole (x² − y²)/(2r₀²) per volt on
    /// RF_A (and its negative on RF_B), endcaps giving z-curvature 1/z₀²
    /// per volt, split evenly between DC_PC and DC_MM, and facets adding
    /// `facet_curvature` (V/m² per e/µm²) the same way.
    pub fn ideal(r0_um: f64, z0_um: f64, facet_curvature: f64) -> Self {
        let r0 = r0_um * MICRON;
        let z0 = z0_um * MICRON;
        let rf = 1.0 / (r0 * r0);
        let kz = 1.0 / (z0 * z0);
        let dc = |k: f64| QuadraticTerm::diagonal(-k / 4.0, -k / 4.0, k / 2.0);
        Self::default()
            .with_term(Label::RfA, QuadraticTerm::diagonal(rf, -rf, 0.0))
            .with_term(Label::RfB, QuadraticTerm::diagonal(-rf, rf, 0.0))
            // each endcap also pushes the ion toward the other one
            .with_term(Label::DcPc, dc(kz).with_gradient(Vec3::new(0.0, 0.0, kz * z0 / 2.0)))
            .with_term(Label::DcMm, dc(kz).with_gradient(Vec3::new(0.0, 0.0, -kz * z0 / 2.0)))
            .with_term(
                Label::FacetPc,
                dc(facet_curvature).with_gradient(Vec3::new(0.0, 0.0, facet_curvature * z0 / 2.0)),
            )
            .with_term(
                Label::FacetMm,
                dc(facet_curvature).with_gradient(Vec3::new(0.0, 0.0, -facet_curvature * z0 / 2.0)),
            )
    }
}

struct PreparedAnalytic<'a> {
    trap: &'a AnalyticTrap,
    weights: Vec<Vec<(Label, f64)>>,
}

impl FieldSource for AnalyticTrap {
    fn prepare(&self, excitations: &[Excitation]) -> Result<Box<dyn PreparedField + '_>> {
        let weights = excitations
            .iter()
            .map(|e| {
                self.terms
                    .keys()
                    .map(|l| {
                        let w = match l {
                            Label::FacetPc => e.sigma_pc,
                            Label::FacetMm => e.sigma_mm,
                            l => e.voltage(*l),
                        };
                        (*l, w)
                    })
                    .collect()
            })
            .collect();
        Ok(Box::new(PreparedAnalytic { trap: self, weights }))
    }
}

impl PreparedField for PreparedAnalytic<'_> {
    fn sample(&self, point_um: &Vec3) -> Result<Vec<FieldSample>> {
        Ok(self
            .weights
            .iter()
            .map(|ws| {
                let mut phi = 0.0;
                let mut e = Vec3::zeros();
                for (l, w) in ws {
                    if *w != 0.0 {
                        let (p, f) = self.trap.terms[l].sample(point_um);
                        phi += w * p;
                        e += f * *w;
                    }
                }
                FieldSample {
                    position: point_um * MICRON,
                    potential: phi,
                    field: e,
                }
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pseudopotential_reference_value() {
        let drive = DriveConfig::rf_gnd().with_rf(1.0, 35.0);
        let e = Vec3::new(1e5, 0.0, 0.0);
        let psi = pseudopotential(&e, &drive, &IonSpecies::calcium40()).unwrap();
        // e·E²/(4 m Ω²) by hand
        let m = 40.0 * ATOMIC_MASS_UNIT;
        let om = 2.0 * std::f64::consts::PI * 35e6;
        let expect = ELEMENTARY_CHARGE * 1e10 / (4.0 * m * om * om);
        assert!((psi - expect).abs() < 1e-15);
        assert!((psi - 0.1247).abs() < 5e-4);
    }

    #[test]
    fn pseudopotential_is_quadratic_in_v_rf() {
        let e = Vec3::new(3e4, -1e4, 2e3);
        let s = IonSpecies::calcium40();
        let p1 = pseudopotential(&e, &DriveConfig::symmetric().with_rf(100.0, 30.0), &s).unwrap();
        let p2 = pseudopotential(&e, &DriveConfig::symmetric().with_rf(200.0, 30.0), &s).unwrap();
        assert!((p2 / p1 - 4.0).abs() < 1e-12);
        assert_eq!(
            pseudopotential(&Vec3::zeros(), &DriveConfig::default(), &s).unwrap(),
            0.0
        );
        let bad = DriveConfig::default().with_rf(1.0, 0.0);
        assert!(matches!(pseudopotential(&e, &bad, &s), Err(Error::Parameter { .. })));
    }

    #[test]
    fn components_sum_exactly() {
        let trap = AnalyticTrap::ideal(250.0, 400.0, 0.05 / (400e-6f64).powi(2));
        let model = TrapModel::new(&trap, &DriveConfig::rf_gnd(), &IonSpecies::calcium40(), 3.0, -1.0).unwrap();
        let c = model.components(&Vec3::new(3.0, -2.0, 7.0)).unwrap();
        assert_eq!(c.total - (c.rf + c.dc + c.sigma), 0.0);
    }

    #[test]
    fn ideal_quadrupole_secular_frequency_matches_q_over_root_eight() {
        let trap = AnalyticTrap::ideal(250.0, 400.0, 0.0);
        let drive = DriveConfig::symmetric().with_rf(50.0, 30.0).with_dc(0.0, 0.0);
        let species = IonSpecies::calcium40();
        let model = TrapModel::new(&trap, &drive, &species, 0.0, 0.0).unwrap();
        let mp = mathieu_parameters(&model, &Vec3::zeros()).unwrap();
        assert!(mp.q[0].abs() < 0.3);
        // pseudopotential curvature along x
        let h = 1.0;
        let f = |x: f64| model.total(&Vec3::new(x, 0.0, 0.0)).unwrap();
        let k = (f(h) - 2.0 * f(0.0) + f(-h)) / (h * h) * ELEMENTARY_CHARGE / (MICRON * MICRON);
        let omega = (k / species.mass()).sqrt();
        let expect = mp.q[0].abs() * drive.omega_rf() / 8f64.sqrt();
        assert!((omega - expect).abs() / expect < 1e-6, "{omega} vs {expect}");
    }

    #[test]
    fn pure_dc_has_zero_q_and_traceless_a() {
        let trap = AnalyticTrap::ideal(250.0, 400.0, 0.0);
        let drive = DriveConfig::rf_gnd().with_rf(0.0, 30.0).with_dc(2.0, 1.0);
        let model = TrapModel::new(&trap, &drive, &IonSpecies::calcium40(), 0.0, 0.0).unwrap();
        let mp = mathieu_parameters(&model, &Vec3::new(1.0, 0.0, 3.0)).unwrap();
        assert!(mp.q.iter().all(|q| *q == 0.0));
        assert!((mp.a.iter().sum::<f64>()).abs() < 1e-6);
        assert!(mp.a[2] > 0.0);
    }

    #[test]
    fn axis_map_csv_has_unit_columns() {
        let trap = AnalyticTrap::ideal(250.0, 400.0, 0.0);
        let model = TrapModel::new(&trap, &DriveConfig::symmetric(), &IonSpecies::calcium40(), 0.0, 0.0).unwrap();
        let map = PotentialMap::along_axis(&model, Axis::Z, &Vec3::zeros(), 10.0, 1.0).unwrap();
        assert_eq!(map.len(), 21);
        let mut buf = Vec::new();
        map.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("z_um,phi_RF_meV,phi_DC_meV,phi_sigma_meV,phi_trap_meV\n"));
    }
}
