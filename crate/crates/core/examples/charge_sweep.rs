//! Secular frequencies against a uniform charge density on the fiber facets,
//! endcaps grounded.

use fibertrap::constants::{angular_to_mhz, mhz_to_angular};
use fibertrap::field_solver::{solve_basis, SolverOptions};
use fibertrap::geometry::{build_wheel_trap, mesh_surface, MeshOptions, Vec3, WheelTrapParams};
use fibertrap::surface_charges::{charge_equivalent_of_volt, sweep_charge_density};
use fibertrap::trap_analysis::{calibrate_rf_frequency, FitOptions};
use fibertrap::trap_model::{Axis, DriveConfig, IonSpecies, TrapModel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sol = solve_basis(
        &mesh_surface(&build_wheel_trap(&WheelTrapParams::default())?, &MeshOptions::default())?,
        &SolverOptions::default(),
    )?;
    let species = IonSpecies::calcium40();
    let fit = FitOptions::default();
    let m0 = TrapModel::new(&sol, &DriveConfig::symmetric(), &species, 0.0, 0.0)?;
    let drive = calibrate_rf_frequency(&m0, Axis::X, mhz_to_angular(3.134), &Vec3::zeros(), &fit)?.with_dc(0.0, 0.0);
    let model = TrapModel::new(&sol, &drive, &species, 0.0, 0.0)?;

    let sigmas = [-5.0, 0.0, 0.1, 1.0, 2.0, 5.0, 10.0, 20.0, 30.0, 40.0, 50.0];
    for row in sweep_charge_density(&model, &sigmas, &Vec3::zeros(), &fit)? {
        match row.omega {
            Some(w) => println!(
                "σ = {:>5.1} e/µm²  ω/2π = ({:.3}, {:.3}, {:.3}) MHz",
                row.sigma,
                angular_to_mhz(w[0]),
                angular_to_mhz(w[1]),
                angular_to_mhz(w[2])
            ),
            None => println!(
                "σ = {:>5.1} e/µm²  unstable: {}",
                row.sigma,
                row.note.unwrap_or_default()
            ),
        }
    }
    let m1 = model.with(&drive.clone().with_dc(1.0, 1.0), 0.0, 0.0)?;
    println!(
        "1 V on both endcaps acts like σ = {:.3} e/µm²",
        charge_equivalent_of_volt(&m1, &Vec3::zeros(), &fit)?
    );
    Ok(())
}
