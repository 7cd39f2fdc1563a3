//! Solve the fiber trap, calibrate Ω_rf on the radial frequency and report
//! the secular frequencies and Mathieu parameters.

use fibertrap::constants::{angular_to_mhz, mhz_to_angular};
use fibertrap::field_solver::{solve_basis, SolverOptions};
use fibertrap::geometry::{build_wheel_trap, mesh_surface, MeshOptions, Vec3, WheelTrapParams};
use fibertrap::trap_analysis::{calibrate_rf_frequency, secular_frequencies, FitOptions};
use fibertrap::trap_model::{mathieu_parameters, Axis, DriveConfig, IonSpecies, TrapModel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let prims = build_wheel_trap(&WheelTrapParams::default())?;
    let mesh = mesh_surface(&prims, &MeshOptions::default())?;
    let sol = solve_basis(&mesh, &SolverOptions::default())?;
    println!("{} panels", mesh.len());

    let species = IonSpecies::calcium40();
    let fit = FitOptions::default();
    let model = TrapModel::new(&sol, &DriveConfig::symmetric(), &species, 0.0, 0.0)?;
    let drive = calibrate_rf_frequency(&model, Axis::X, mhz_to_angular(3.134), &Vec3::zeros(), &fit)?;
    let model = model.with(&drive, 0.0, 0.0)?;
    let sec = secular_frequencies(&model, &Vec3::new(0.5, 0.3, 0.2), &fit)?;

    println!("Ω_rf/2π = {:.3} MHz", drive.rf_frequency_mhz);
    println!("minimum at {:.4?} µm", sec.minimum_um);
    for axis in Axis::ALL {
        println!("ω_{axis:?}/2π = {:.4} MHz", angular_to_mhz(sec.omega(axis)));
    }
    let m = mathieu_parameters(&model, &sec.minimum_um)?;
    println!("q = {:.4?}\na = {:.3e}, {:.3e}, {:.3e}", m.q, m.a[0], m.a[1], m.a[2]);
    Ok(())
}
