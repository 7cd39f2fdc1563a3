//! Axial RF pseudopotential for the RF-GND and symmetric drives.

use fibertrap::constants::mhz_to_angular;
use fibertrap::field_solver::{solve_basis, SolverOptions};
use fibertrap::geometry::{build_wheel_trap, mesh_surface, MeshOptions, Vec3, WheelTrapParams};
use fibertrap::trap_analysis::{calibrate_rf_frequency, FitOptions};
use fibertrap::trap_model::{Axis, DriveConfig, DriveMode, IonSpecies, PotentialMap, TrapModel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sol = solve_basis(
        &mesh_surface(&build_wheel_trap(&WheelTrapParams::default())?, &MeshOptions::default())?,
        &SolverOptions::default(),
    )?;
    let species = IonSpecies::calcium40();
    let m0 = TrapModel::new(&sol, &DriveConfig::symmetric(), &species, 0.0, 0.0)?;
    let drive = calibrate_rf_frequency(
        &m0,
        Axis::X,
        mhz_to_angular(3.134),
        &Vec3::zeros(),
        &FitOptions::default(),
    )?;

    let mut maps = Vec::new();
    for mode in [DriveMode::RfGnd, DriveMode::Symmetric] {
        let m = TrapModel::new(&sol, &DriveConfig { mode, ..drive.clone() }, &species, 0.0, 0.0)?;
        maps.push(PotentialMap::along_axis(&m, Axis::Z, &Vec3::zeros(), 100.0, 10.0)?);
    }
    println!("{:>8} {:>14} {:>14}", "z_um", "RF-GND meV", "symmetric meV");
    for i in 0..maps[0].coords_um.len() {
        println!(
            "{:>8.1} {:>14.3} {:>14.3}",
            maps[0].coords_um[i],
            maps[0].rf[i] * 1e3,
            maps[1].rf[i] * 1e3
        );
    }
    Ok(())
}
