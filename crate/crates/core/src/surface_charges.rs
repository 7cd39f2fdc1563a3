//! Homogeneous facet charge: frequency sweeps, equivalent endcap voltage and
//! compensation by the two endcaps.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field_solver::{solve_basis, SolverOptions};
use crate::geometry::{build_wheel_trap, mesh_surface, MeshOptions, Vec3, WheelTrapParams};
use crate::numerics::roots::brent;
use crate::trap_analysis::{axial_curvature, fit_quadratic, secular_frequencies, FitOptions};
use crate::trap_model::{Axis, DriveConfig, IonSpecies, PotentialMap, TrapModel};

/// Facet charge densities (e/µm², signed).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChargeScenario {
    pub sigma_pc: f64,
    pub sigma_mm: f64,
}

impl ChargeScenario {
    pub fn symmetric(sigma: f64) -> Self {
        Self {
            sigma_pc: sigma,
            sigma_mm: sigma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (f, v) in [("charges.sigma_pc", self.sigma_pc), ("charges.sigma_mm", self.sigma_mm)] {
            if !v.is_finite() {
                return Err(Error::parameter(f, "must be finite"));
            }
        }
        Ok(())
    }
}

/// Secular frequencies below this count as no confinement.
pub const MIN_CONFINING_OMEGA: f64 = 2.0 * PI * 10e3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChargeSweepRow {
    pub sigma: f64,
    pub omega: Option<[f64; 3]>,
    pub stable: bool,
    pub note: Option<String>,
}

/// Secular frequencies for σ on both facets, at each σ. Non-confining points
/// are reported as unstable rows.
pub fn sweep_charge_density(
    base: &TrapModel,
    sigmas: &[f64],
    seed_um: &Vec3,
    opts: &FitOptions,
) -> Result<Vec<ChargeSweepRow>> {
    sigmas
        .par_iter()
        .map(|&sigma| {
            let model = base.with(&base.drive, sigma, sigma)?;
            let unstable = |note: String| ChargeSweepRow {
                sigma,
                omega: None,
                stable: false,
                note: Some(note),
            };
            let (w2, _) = axial_curvature(&model, seed_um, opts)?;
            if w2 < MIN_CONFINING_OMEGA * MIN_CONFINING_OMEGA {
                return Ok(unstable(format!(
                    "no axial confinement (omega_z^2 = {w2:.3e} rad^2/s^2)"
                )));
            }
            match secular_frequencies(&model, seed_um, opts) {
                Ok(f) => Ok(ChargeSweepRow {
                    sigma,
                    omega: Some([f.omega(Axis::X), f.omega(Axis::Y), f.omega(Axis::Z)]),
                    stable: true,
                    note: None,
                }),
                Err(e @ (Error::AntiConfinement { .. } | Error::Optimization { .. })) => Ok(unstable(e.to_string())),
                Err(e) => Err(e),
            }
        })
        .collect()
}

/// Axial curvature (eV/µm²) of one potential component along z through `center_um`.
fn component_curvature(
    model: &TrapModel,
    center_um: &Vec3,
    opts: &FitOptions,
    pick: fn(&PotentialMap) -> &Vec<f64>,
) -> Result<f64> {
    let map = PotentialMap::along_axis(model, Axis::Z, center_um, opts.half_width_um, opts.step_um)?;
    Ok(fit_quadratic(&map.coords_um, pick(&map))?.a)
}

/// Facet charge density σ (on both facets, e/µm²) whose axial curvature
/// equals that of 1 V on both endcaps.
pub fn charge_equivalent_of_volt(base: &TrapModel, center_um: &Vec3, opts: &FitOptions) -> Result<f64> {
    let drive = base.drive.clone().with_dc(1.0, 1.0);
    let k_dc = component_curvature(&base.with(&drive, 0.0, 0.0)?, center_um, opts, |m| &m.dc)?;
    let k_sigma = component_curvature(&base.with(&drive, 1.0, 1.0)?, center_um, opts, |m| &m.sigma)?;
    if k_sigma == 0.0 {
        return Err(Error::parameter("charges", "facet charge has no axial curvature"));
    }
    Ok(k_dc / k_sigma)
}

/// Common endcap voltage restoring `omega_target` with σ on both facets.
/// The bracket is widened (up to six doublings) until it contains a root.
pub fn compensation_voltage(
    base: &TrapModel,
    sigma: f64,
    omega_target: f64,
    center_um: &Vec3,
    bracket: (f64, f64),
    opts: &FitOptions,
) -> Result<f64> {
    let target = omega_target * omega_target;
    let f = |v: f64| -> Result<f64> {
        let m = base.with(&base.drive.clone().with_dc(v, v), sigma, sigma)?;
        Ok(axial_curvature(&m, center_um, opts)?.0 - target)
    };
    let (mut lo, mut hi) = bracket;
    let (mut flo, mut fhi) = (f(lo)?, f(hi)?);
    for _ in 0..6 {
        if flo.signum() != fhi.signum() {
            break;
        }
        let w = hi - lo;
        lo -= w / 2.0;
        hi += w / 2.0;
        flo = f(lo)?;
        fhi = f(hi)?;
    }
    if flo.signum() == fhi.signum() {
        return Err(Error::Bracketing {
            lo,
            hi,
            f_lo: flo,
            f_hi: fhi,
        });
    }
    Ok(brent(f, lo, hi, 1e-4, 100)?.x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CompensationResult {
    pub v_pc: f64,
    pub v_mm: f64,
    pub omega_z: f64,
    pub z0_um: f64,
    pub iterations: usize,
}

/// Solves for (V_PC, V_MM) giving axial frequency `omega_target` with the
/// minimum at `z_target_um` on the trap axis. Damped Newton with a
/// forward-difference Jacobian, started from `seed`.
pub fn endcap_voltages_for(
    base: &TrapModel,
    charges: ChargeScenario,
    omega_target: f64,
    z_target_um: f64,
    seed: (f64, f64),
    opts: &FitOptions,
) -> Result<CompensationResult> {
    let center = Vec3::new(0.0, 0.0, z_target_um);
    let eval = |v: [f64; 2]| -> Result<(f64, f64)> {
        let m = base.with(
            &base.drive.clone().with_dc(v[0], v[1]),
            charges.sigma_pc,
            charges.sigma_mm,
        )?;
        axial_curvature(&m, &center, opts)
    };
    // ω² relative to the target; z₀ in units of 1 µm
    let resid = |(w2, z0): (f64, f64)| [w2 / (omega_target * omega_target) - 1.0, z0 - z_target_um];
    let norm = |r: [f64; 2]| (r[0] * r[0] + r[1] * r[1]).sqrt();
    let mut v = [seed.0, seed.1];
    let mut state = eval(v)?;
    let mut r = resid(state);
    let h = 1e-3;
    for it in 0..40 {
        if r[0].abs() < 1e-7 && r[1].abs() < 1e-4 {
            return Ok(CompensationResult {
                v_pc: v[0],
                v_mm: v[1],
                omega_z: state.0.max(0.0).sqrt(),
                z0_um: state.1,
                iterations: it,
            });
        }
        let mut jac = [[0.0; 2]; 2];
        for k in 0..2 {
            let mut vp = v;
            vp[k] += h;
            let rp = resid(eval(vp)?);
            for i in 0..2 {
                jac[i][k] = (rp[i] - r[i]) / h;
            }
        }
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        let scale = jac.iter().flatten().map(|x| x.abs()).fold(0.0, f64::max);
        if !(det.abs() > 1e-12 * scale * scale) {
            return Err(Error::Solver {
                reason: "singular Jacobian in endcap voltage solve".into(),
                condition: if det == 0.0 {
                    f64::INFINITY
                } else {
                    scale * scale / det.abs()
                },
            });
        }
        let step = [
            -(jac[1][1] * r[0] - jac[0][1] * r[1]) / det,
            -(-jac[1][0] * r[0] + jac[0][0] * r[1]) / det,
        ];
        let mut t = 1.0;
        loop {
            let trial = [v[0] + t * step[0], v[1] + t * step[1]];
            let s = eval(trial)?;
            let rt = resid(s);
            if norm(rt) < norm(r) || t < 1e-3 {
                v = trial;
                state = s;
                r = rt;
                break;
            }
            t *= 0.5;
        }
    }
    Err(Error::Optimization {
        iterations: 40,
        reason: format!("endcap voltages did not converge (residual {:.3e}, {:.3e})", r[0], r[1]),
        trace: vec![],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LengthSweepPoint {
    pub length_um: f64,
    pub result: CompensationResult,
}

/// Re-solves the geometry at each cavity length and finds the endcap
/// voltages holding ω_z and z₀ fixed.
#[allow(clippy::too_many_arguments)]
pub fn cavity_length_sweep(
    params: &WheelTrapParams,
    lengths_um: &[f64],
    mesh: &MeshOptions,
    solver: &SolverOptions,
    drive: &DriveConfig,
    species: &IonSpecies,
    charges: ChargeScenario,
    omega_target: f64,
    z_target_um: f64,
    opts: &FitOptions,
) -> Result<Vec<LengthSweepPoint>> {
    let mut seed = (drive.v_pc, drive.v_mm);
    let mut out = Vec::with_capacity(lengths_um.len());
    for &l in lengths_um {
        let p = WheelTrapParams {
            cavity_length_um: l,
            ..params.clone()
        };
        let sol = solve_basis(&mesh_surface(&build_wheel_trap(&p)?, mesh)?, solver)?;
        let model = TrapModel::new(&sol, drive, species, charges.sigma_pc, charges.sigma_mm)?;
        let result = endcap_voltages_for(&model, charges, omega_target, z_target_um, seed, opts)?;
        seed = (result.v_pc, result.v_mm);
        out.push(LengthSweepPoint { length_um: l, result });
    }
    Ok(out)
}

/// Endcap voltages observed at one cavity length with the ion held at the
/// target position and frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoltageObservation {
    pub length_um: f64,
    pub v_pc: f64,
    pub v_mm: f64,
}

/// Facet charge densities that reproduce a set of observed endcap voltages.
/// These are effective values of the uniform-charge model and need not equal
/// the physical densities.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectiveCharges {
    pub charges: ChargeScenario,
    /// One-standard-error uncertainties from the residual scatter; zero when
    /// the fit is exactly determined.
    pub sigma_pc_se: f64,
    pub sigma_mm_se: f64,
    pub residual_rms_v: f64,
    /// Model voltages (V_PC, V_MM) at the fitted densities, per observation.
    pub predicted: Vec<[f64; 2]>,
}

/// Least-squares fit of (σ_PC, σ_MM) to observed endcap voltages. At fixed
/// ω_z and z₀ the voltages are affine in the densities, so each length needs
/// three compensation solves to fix that map exactly.
#[allow(clippy::too_many_arguments)]
pub fn fit_effective_charges(
    params: &WheelTrapParams,
    observations: &[VoltageObservation],
    mesh: &MeshOptions,
    solver: &SolverOptions,
    drive: &DriveConfig,
    species: &IonSpecies,
    omega_target: f64,
    z_target_um: f64,
    opts: &FitOptions,
) -> Result<EffectiveCharges> {
    if observations.is_empty() {
        return Err(Error::parameter("observations", "need at least one observed length"));
    }
    // probe densities far enough apart that the Newton tolerance is negligible
    let probe = 10.0;
    let mut rows: Vec<([f64; 2], f64)> = Vec::with_capacity(2 * observations.len());
    let mut offsets = Vec::with_capacity(observations.len());
    let mut gains = Vec::with_capacity(observations.len());
    let mut seed = (drive.v_pc, drive.v_mm);
    for ob in observations {
        let p = WheelTrapParams {
            cavity_length_um: ob.length_um,
            ..params.clone()
        };
        let sol = solve_basis(&mesh_surface(&build_wheel_trap(&p)?, mesh)?, solver)?;
        let model = TrapModel::new(&sol, drive, species, 0.0, 0.0)?;
        let solve = |c: ChargeScenario, seed| endcap_voltages_for(&model, c, omega_target, z_target_um, seed, opts);
        let r0 = solve(ChargeScenario::default(), seed)?;
        seed = (r0.v_pc, r0.v_mm);
        let rp = solve(
            ChargeScenario {
                sigma_pc: probe,
                sigma_mm: 0.0,
            },
            seed,
        )?;
        let rm = solve(
            ChargeScenario {
                sigma_pc: 0.0,
                sigma_mm: probe,
            },
            seed,
        )?;
        let g = [
            [(rp.v_pc - r0.v_pc) / probe, (rm.v_pc - r0.v_pc) / probe],
            [(rp.v_mm - r0.v_mm) / probe, (rm.v_mm - r0.v_mm) / probe],
        ];
        rows.push((g[0], ob.v_pc - r0.v_pc));
        rows.push((g[1], ob.v_mm - r0.v_mm));
        offsets.push([r0.v_pc, r0.v_mm]);
        gains.push(g);
    }
    let a = nalgebra::DMatrix::from_fn(rows.len(), 2, |i, j| rows[i].0[j]);
    let b = nalgebra::DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1));
    let ata = a.transpose() * &a;
    let cov = ata
        .clone()
        .try_inverse()
        .filter(|m| m.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::Fit("endcap voltages do not distinguish the two facet charges".into()))?;
    let x = &cov * a.transpose() * &b;
    let resid = &a * &x - &b;
    let dof = rows.len().saturating_sub(2);
    let s2 = if dof > 0 {
        resid.norm_squared() / dof as f64
    } else {
        0.0
    };
    let predicted = offsets
        .iter()
        .zip(&gains)
        .map(|(o, g)| {
            [
                o[0] + g[0][0] * x[0] + g[0][1] * x[1],
                o[1] + g[1][0] * x[0] + g[1][1] * x[1],
            ]
        })
        .collect();
    Ok(EffectiveCharges {
        charges: ChargeScenario {
            sigma_pc: x[0],
            sigma_mm: x[1],
        },
        sigma_pc_se: (s2 * cov[(0, 0)]).sqrt(),
        sigma_mm_se: (s2 * cov[(1, 1)]).sqrt(),
        residual_rms_v: (resid.norm_squared() / rows.len() as f64).sqrt(),
        predicted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::mhz_to_angular;
    use crate::trap_model::AnalyticTrap;

    fn ideal() -> AnalyticTrap {
        // 1 e/µm² curves the axis like 0.1 V on both endcaps
        AnalyticTrap::ideal(250.0, 400.0, 0.1 / (400e-6f64).powi(2))
    }

    #[test]
    fn equivalence_matches_construction() {
        let trap = ideal();
        let model = TrapModel::new(&trap, &DriveConfig::symmetric(), &IonSpecies::calcium40(), 0.0, 0.0).unwrap();
        let s = charge_equivalent_of_volt(&model, &Vec3::zeros(), &FitOptions::default()).unwrap();
        assert!((s - 10.0).abs() < 1e-6, "{s}");
        let w = mhz_to_angular(0.5);
        let v0 = compensation_voltage(&model, 0.0, w, &Vec3::zeros(), (0.0, 5.0), &FitOptions::default()).unwrap();
        let v1 = compensation_voltage(&model, s * v0, w, &Vec3::zeros(), (-5.0, 5.0), &FitOptions::default()).unwrap();
        assert!(v1.abs() < 1e-3, "{v1}");
    }

    #[test]
    fn unconfined_rows_are_flagged() {
        let trap = ideal();
        let drive = DriveConfig::symmetric().with_dc(0.0, 0.0);
        let model = TrapModel::new(&trap, &drive, &IonSpecies::calcium40(), 0.0, 0.0).unwrap();
        let rows = sweep_charge_density(&model, &[-1.0, 0.0, 5.0], &Vec3::zeros(), &FitOptions::default()).unwrap();
        assert!(!rows[0].stable && !rows[1].stable);
        assert!(rows[2].stable);
    }

    #[test]
    fn asymmetric_charge_needs_lower_voltage_on_the_charged_side() {
        let trap = ideal();
        let model = TrapModel::new(&trap, &DriveConfig::symmetric(), &IonSpecies::calcium40(), 0.0, 0.0).unwrap();
        let w = mhz_to_angular(0.6);
        let r = endcap_voltages_for(
            &model,
            ChargeScenario {
                sigma_pc: 5.0,
                sigma_mm: 20.0,
            },
            w,
            0.0,
            (1.0, 1.0),
            &FitOptions::default(),
        )
        .unwrap();
        assert!(r.v_mm < r.v_pc, "{r:?}");
        assert!((r.omega_z - w).abs() < 2.0 * PI * 10e3);
        assert!(r.z0_um.abs() < 1.0);
        let s = endcap_voltages_for(
            &model,
            ChargeScenario::symmetric(7.0),
            w,
            0.0,
            (2.0, 0.5),
            &FitOptions::default(),
        )
        .unwrap();
        assert!((s.v_pc - s.v_mm).abs() < 1e-3);
    }

    #[test]
    fn missing_root_reports_bracket() {
        let trap = ideal();
        let model = TrapModel::new(&trap, &DriveConfig::symmetric(), &IonSpecies::calcium40(), 0.0, 0.0).unwrap();
        let r = compensation_voltage(
            &model,
            0.0,
            mhz_to_angular(1e3),
            &Vec3::zeros(),
            (0.0, 1.0),
            &FitOptions::default(),
        );
        assert!(matches!(r, Err(Error::Bracketing { .. })));
    }
}
