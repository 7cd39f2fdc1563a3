//! Endcap voltages that undo facet charging: a common voltage for equal
//! charges, then independent voltages for unequal charges as the cavity
//! gets longer.

use fibertrap::constants::{angular_to_mhz, mhz_to_angular};
use fibertrap::field_solver::{solve_basis, SolverOptions};
use fibertrap::geometry::{build_wheel_trap, mesh_surface, MeshOptions, Vec3, WheelTrapParams};
use fibertrap::surface_charges::{cavity_length_sweep, compensation_voltage, ChargeScenario};
use fibertrap::trap_analysis::{calibrate_rf_frequency, FitOptions};
use fibertrap::trap_model::{Axis, DriveConfig, IonSpecies, TrapModel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = WheelTrapParams::default();
    let sol = solve_basis(
        &mesh_surface(&build_wheel_trap(&params)?, &MeshOptions::default())?,
        &SolverOptions::default(),
    )?;
    let species = IonSpecies::calcium40();
    let fit = FitOptions::default();
    let m0 = TrapModel::new(&sol, &DriveConfig::symmetric(), &species, 0.0, 0.0)?;
    let drive = calibrate_rf_frequency(&m0, Axis::X, mhz_to_angular(3.134), &Vec3::zeros(), &fit)?;
    let model = TrapModel::new(&sol, &drive, &species, 0.0, 0.0)?;
    let target = mhz_to_angular(1.0);

    println!("common mode, ω_z/2π = 1 MHz");
    for sigma in [-10.0, 0.0, 10.0, 25.0, 50.0] {
        let v = compensation_voltage(&model, sigma, target, &Vec3::zeros(), (-20.0, 20.0), &fit)?;
        println!("  σ = {sigma:>5.1}  V_DC = {v:>8.4} V");
    }

    println!("independent, σ_PC = 5, σ_MM = 20 e/µm²");
    let pts = cavity_length_sweep(
        &params,
        &[550.0, 800.0, 1200.0],
        &MeshOptions::default(),
        &SolverOptions::default(),
        &drive,
        &species,
        ChargeScenario {
            sigma_pc: 5.0,
            sigma_mm: 20.0,
        },
        target,
        0.0,
        &fit,
    )?;
    for p in pts {
        let r = p.result;
        println!(
            "  L = {:>6.0} µm  V_PC = {:>7.3} V  V_MM = {:>7.3} V  ω_z/2π = {:.4} MHz",
            p.length_um,
            r.v_pc,
            r.v_mm,
            angular_to_mhz(r.omega_z)
        );
    }
    Ok(())
}
