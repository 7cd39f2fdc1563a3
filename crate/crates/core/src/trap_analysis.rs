//! Ion position, secular frequencies, micromotion and calibration sweeps.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::{ELEMENTARY_CHARGE, MICRON};
use crate::error::{Error, Result};
use crate::field_solver::{solve_basis, SolverOptions};
use crate::geometry::{build_wheel_trap, mesh_surface, MeshOptions, Vec3, WheelTrapParams};
use crate::numerics::lsq::linear_least_squares;
use crate::numerics::optimize::{minimize_bfgs, MinimizeOptions};
use crate::numerics::roots::brent;
use crate::trap_model::{Axis, DriveConfig, IonSpecies, PotentialMap, TrapModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitOptions {
    pub half_width_um: f64,
    pub step_um: f64,
    /// Fits whose residual RMS exceeds this fraction of the sampled span are
    /// flagged non-harmonic.
    pub nonharmonic_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            half_width_um: 20.0,
            step_um: 1.0,
            nonharmonic_tol: 0.02,
        }
    }
}

/// φ ≈ a (r − r̄)² + b (r − r̄) + c, r in µm, φ in eV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticFit {
    pub center_um: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub cov: [[f64; 3]; 3],
    pub residual_rms: f64,
    pub span: f64,
}

impl QuadraticFit {
    /// Signed ω² (rad²/s²) implied by the curvature.
    pub fn omega_squared(&self, species: &IonSpecies) -> f64 {
        2.0 * self.a * ELEMENTARY_CHARGE / (MICRON * MICRON) / species.mass()
    }

    /// Vertex position (µm).
    pub fn vertex_um(&self) -> f64 {
        self.center_um - self.b / (2.0 * self.a)
    }
}

pub fn fit_quadratic(coords_um: &[f64], values: &[f64]) -> Result<QuadraticFit> {
    let n = coords_um.len();
    if n != values.len() || n < 3 {
        return Err(Error::Fit(format!("need >= 3 matching samples, got {n}")));
    }
    let center = coords_um.iter().sum::<f64>() / n as f64;
    let design = DMatrix::from_fn(n, 3, |i, j| (coords_um[i] - center).powi(2 - j as i32));
    let fit = linear_least_squares(&design, values)?;
    let mut cov = [[0.0; 3]; 3];
    for (i, row) in cov.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = fit.covariance[(i, j)];
        }
    }
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(QuadraticFit {
        center_um: center,
        a: fit.params[0],
        b: fit.params[1],
        c: fit.params[2],
        cov,
        residual_rms: fit.residual_rms,
        span: hi - lo,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HarmonicFit {
    pub axis: Axis,
    /// Secular angular frequency (rad/s).
    pub omega: f64,
    pub r0_um: f64,
    pub phi0_ev: f64,
    pub residual_rms_ev: f64,
    pub omega_sd: f64,
    pub r0_sd_um: f64,
    pub phi0_sd_ev: f64,
    pub nonharmonic: bool,
}

/// Least-squares ½mω²(r − r₀)² + φ₀ fit to the total potential of an axis scan.
pub fn fit_harmonic(map: &PotentialMap, species: &IonSpecies, nonharmonic_tol: f64) -> Result<HarmonicFit> {
    let axis = map
        .axis
        .ok_or_else(|| Error::parameter("map.axis", "harmonic fits need an axis scan"))?;
    if map.len() < 7 {
        return Err(Error::parameter("map", format!("need >= 7 samples, got {}", map.len())));
    }
    let lo = map.coords_um.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = map.coords_um.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo < 20.0 - 1e-9 {
        return Err(Error::parameter(
            "map",
            format!("scan spans {:.1} µm, need >= 20 µm", hi - lo),
        ));
    }
    let q = fit_quadratic(&map.coords_um, &map.total)?;
    if !(q.a > 0.0) {
        return Err(Error::AntiConfinement {
            axis: axis.to_string(),
            curvature: q.a,
        });
    }
    let omega = q.omega_squared(species).sqrt();
    let var = |g: [f64; 3]| {
        let mut s = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                s += g[i] * q.cov[i][j] * g[j];
            }
        }
        s.max(0.0).sqrt()
    };
    let (a, b) = (q.a, q.b);
    Ok(HarmonicFit {
        axis,
        omega,
        r0_um: q.vertex_um(),
        phi0_ev: q.c - b * b / (4.0 * a),
        residual_rms_ev: q.residual_rms,
        omega_sd: var([omega / (2.0 * a), 0.0, 0.0]),
        r0_sd_um: var([b / (2.0 * a * a), -1.0 / (2.0 * a), 0.0]),
        phi0_sd_ev: var([b * b / (4.0 * a * a), -b / (2.0 * a), 1.0]),
        nonharmonic: q.residual_rms > nonharmonic_tol * q.span,
    })
}

/// Local minimum of φ_trap near `seed_um`; gradient tolerance in eV/µm.
pub fn find_minimum(model: &TrapModel, seed_um: &Vec3, opts: &MinimizeOptions) -> Result<Vec3> {
    let m = minimize_bfgs(|x| model.total(&Vec3::new(x[0], x[1], x[2])), seed_um.as_slice(), opts)?;
    Ok(Vec3::new(m.x[0], m.x[1], m.x[2]))
}

/// Minimum in the plane transverse to z through `seed_um` (for potentials
/// without axial confinement).
pub fn find_radial_minimum(model: &TrapModel, seed_um: &Vec3, opts: &MinimizeOptions) -> Result<Vec3> {
    let z = seed_um.z;
    let m = minimize_bfgs(
        |x| model.total(&Vec3::new(x[0], x[1], z)),
        &[seed_um.x, seed_um.y],
        opts,
    )?;
    Ok(Vec3::new(m.x[0], m.x[1], z))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SecularFrequencies {
    pub minimum_um: Vec3,
    pub fits: [HarmonicFit; 3],
}

impl SecularFrequencies {
    pub fn omega(&self, axis: Axis) -> f64 {
        self.fits[axis.index()].omega
    }
}

/// Minimizes, then fits the three axis scans through the minimum.
pub fn secular_frequencies(model: &TrapModel, seed_um: &Vec3, opts: &FitOptions) -> Result<SecularFrequencies> {
    let min = find_minimum(model, seed_um, &MinimizeOptions::default())?;
    let fits: Vec<HarmonicFit> = Axis::ALL
        .par_iter()
        .map(|&ax| {
            let map = PotentialMap::along_axis(model, ax, &min, opts.half_width_um, opts.step_um)?;
            fit_harmonic(&map, &model.species, opts.nonharmonic_tol)
        })
        .collect::<Result<_>>()?;
    Ok(SecularFrequencies {
        minimum_um: min,
        fits: [fits[0], fits[1], fits[2]],
    })
}

/// Signed axial ω² and vertex z₀ from a quadratic fit of φ_trap along z through `center_um`.
pub fn axial_curvature(model: &TrapModel, center_um: &Vec3, opts: &FitOptions) -> Result<(f64, f64)> {
    let map = PotentialMap::along_axis(model, Axis::Z, center_um, opts.half_width_um, opts.step_um)?;
    let q = fit_quadratic(&map.coords_um, &map.total)?;
    Ok((q.omega_squared(&model.species), q.vertex_um()))
}

/// Rescales Ω_rf so that the secular frequency along `axis` equals
/// `target_omega`, using ψ ∝ 1/Ω² for the RF part of the curvature.
pub fn calibrate_rf_frequency(
    model: &TrapModel,
    axis: Axis,
    target_omega: f64,
    seed_um: &Vec3,
    opts: &FitOptions,
) -> Result<DriveConfig> {
    let mut drive = model.drive.clone();
    let mut seed = *seed_um;
    for _ in 0..3 {
        let m = model.with(&drive, model.sigma_pc, model.sigma_mm)?;
        let min = find_minimum(&m, &seed, &MinimizeOptions::default())?;
        let map = PotentialMap::along_axis(&m, axis, &min, opts.half_width_um, opts.step_um)?;
        let statics: Vec<f64> = map.dc.iter().zip(&map.sigma).map(|(a, b)| a + b).collect();
        let a_rf = fit_quadratic(&map.coords_um, &map.rf)?.a;
        let a_st = fit_quadratic(&map.coords_um, &statics)?.a;
        let a_target = 0.5 * m.species.mass() * target_omega * target_omega * MICRON * MICRON / ELEMENTARY_CHARGE;
        if !(a_rf > 0.0 && a_target > a_st) {
            return Err(Error::parameter(
                "target_omega",
                format!("unreachable by scaling Ω_rf (RF curvature {a_rf:.3e}, static {a_st:.3e} eV/µm²)"),
            ));
        }
        let omega = drive.omega_rf() * (a_rf / (a_target - a_st)).sqrt();
        let converged = (omega / drive.omega_rf() - 1.0).abs() < 1e-9;
        drive.set_omega_rf(omega);
        seed = min;
        if converged {
            break;
        }
    }
    Ok(drive)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MicromotionMetrics {
    /// RF field amplitude at the ion (V/m).
    pub residual_field: Vec3,
    /// Micromotion amplitude (m).
    pub amplitude: Vec3,
    pub beta: f64,
    /// Probe wavevector (1/m).
    pub wavevector: Vec3,
}

/// Wavevector of magnitude 2π/λ along `direction`.
pub fn probe_wavevector(species: &IonSpecies, direction: &Vec3) -> Vec3 {
    direction.normalize() * (2.0 * PI / species.wavelength())
}

/// β = |k·u| with u = Q·E_rf/(mΩ²).
pub fn modulation_index(model: &TrapModel, position_um: &Vec3, wavevector: &Vec3) -> Result<MicromotionMetrics> {
    let e = model.rf_field(position_um)?;
    let sp = &model.species;
    let u = e * (sp.charge() / (sp.mass() * model.drive.omega_rf().powi(2)));
    Ok(MicromotionMetrics {
        residual_field: e,
        amplitude: u,
        beta: wavevector.dot(&u).abs(),
        wavevector: *wavevector,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DisplacementCalibration {
    pub delta_v: f64,
    pub z_plus_um: f64,
    pub z_minus_um: f64,
    /// z₊ − z₋ (µm).
    pub displacement_um: f64,
    /// Axial shift per volt of V_PC − V_MM; `None` for ΔV = 0.
    pub um_per_volt: Option<f64>,
}

/// Central difference of the axial minimum under V_PC = V̄ ± ΔV/2,
/// V_MM = V̄ ∓ ΔV/2, with V̄ the model's mean endcap voltage.
pub fn displacement_per_volt(model: &TrapModel, delta_v: f64, seed_um: &Vec3) -> Result<DisplacementCalibration> {
    let mean = 0.5 * (model.drive.v_pc + model.drive.v_mm);
    let opts = MinimizeOptions {
        grad_tol: 1e-8,
        ..Default::default()
    };
    if delta_v == 0.0 {
        let z = find_minimum(model, seed_um, &opts)?.z;
        return Ok(DisplacementCalibration {
            delta_v,
            z_plus_um: z,
            z_minus_um: z,
            displacement_um: 0.0,
            um_per_volt: None,
        });
    }
    let at = |s: f64| -> Result<f64> {
        let drive = model
            .drive
            .clone()
            .with_dc(mean + s * delta_v / 2.0, mean - s * delta_v / 2.0);
        let m = model.with(&drive, model.sigma_pc, model.sigma_mm)?;
        Ok(find_minimum(&m, seed_um, &opts)?.z)
    };
    let (zp, zm) = (at(1.0)?, at(-1.0)?);
    Ok(DisplacementCalibration {
        delta_v,
        z_plus_um: zp,
        z_minus_um: zm,
        displacement_um: zp - zm,
        um_per_volt: Some((zp - zm) / (2.0 * delta_v)),
    })
}

/// Common endcap voltage V̄ (V_PC = V_MM = V̄) giving axial frequency
/// `target_omega`, searched in [lo, hi] V.
pub fn mean_voltage_for_axial_frequency(
    model: &TrapModel,
    target_omega: f64,
    center_um: &Vec3,
    bracket: (f64, f64),
    opts: &FitOptions,
) -> Result<f64> {
    let target = target_omega * target_omega;
    let root = brent(
        |v| {
            let drive = model.drive.clone().with_dc(v, v);
            let m = model.with(&drive, model.sigma_pc, model.sigma_mm)?;
            Ok(axial_curvature(&m, center_um, opts)?.0 - target)
        },
        bracket.0,
        bracket.1,
        1e-4,
        100,
    )?;
    Ok(root.x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FiberOffsetPoint {
    pub offset_um: f64,
    pub x0_um: f64,
    pub y0_um: f64,
    pub x0_sd_um: f64,
}

/// Moves both endcaps and fibers along x by each δ_f, re-solves, and locates
/// the ion in the transverse plane through `seed_um`.
#[allow(clippy::too_many_arguments)]
pub fn fiber_offset_sweep(
    params: &WheelTrapParams,
    offsets_um: &[f64],
    mesh: &MeshOptions,
    solver: &SolverOptions,
    drive: &DriveConfig,
    species: &IonSpecies,
    seed_um: &Vec3,
    opts: &FitOptions,
) -> Result<Vec<FiberOffsetPoint>> {
    let mut out = Vec::with_capacity(offsets_um.len());
    for &d in offsets_um {
        let p = WheelTrapParams {
            fiber_offset_um: d,
            ..params.clone()
        };
        let sol = solve_basis(&mesh_surface(&build_wheel_trap(&p)?, mesh)?, solver)?;
        let model = TrapModel::new(&sol, drive, species, 0.0, 0.0)?;
        let min = find_radial_minimum(&model, seed_um, &MinimizeOptions::default())?;
        let map = PotentialMap::along_axis(&model, Axis::X, &min, opts.half_width_um, opts.step_um)?;
        let fit = fit_harmonic(&map, species, opts.nonharmonic_tol)?;
        out.push(FiberOffsetPoint {
            offset_um: d,
            x0_um: min.x,
            y0_um: min.y,
            x0_sd_um: fit.r0_sd_um,
        });
    }
    Ok(out)
}
