//! Endcap-imbalance displacement and micromotion modulation index along the
//! axis of the fiberless test trap, for both drive modes.

use fibertrap::constants::{angular_to_mhz, mhz_to_angular};
use fibertrap::field_solver::{solve_basis, SolverOptions};
use fibertrap::geometry::{build_wheel_trap, mesh_surface, MeshOptions, Vec3, WheelTrapParams};
use fibertrap::trap_analysis::{
    displacement_per_volt, mean_voltage_for_axial_frequency, modulation_index, probe_wavevector, secular_frequencies,
    FitOptions,
};
use fibertrap::trap_model::{Axis, DriveConfig, DriveMode, IonSpecies, TrapModel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sol = solve_basis(
        &mesh_surface(
            &build_wheel_trap(&WheelTrapParams::test_setup())?,
            &MeshOptions::default(),
        )?,
        &SolverOptions::default(),
    )?;
    let species = IonSpecies::calcium40();
    let fit = FitOptions::default();
    let k = probe_wavevector(&species, &Vec3::z());

    for mode in [DriveMode::RfGnd, DriveMode::Symmetric] {
        let drive = DriveConfig {
            mode,
            rf_frequency_mhz: 63.3,
            ..DriveConfig::symmetric()
        };
        let base = TrapModel::new(&sol, &drive, &species, 0.0, 0.0)?;
        let v = mean_voltage_for_axial_frequency(&base, mhz_to_angular(1.517), &Vec3::zeros(), (0.5, 2000.0), &fit)?;
        let model = base.with(&drive.with_dc(v, v), 0.0, 0.0)?;
        let sec = secular_frequencies(&model, &Vec3::zeros(), &fit)?;
        let d = displacement_per_volt(&model, 1.0, &sec.minimum_um)?;
        println!(
            "{mode:?}: V̄ = {v:.2} V, ω/2π = ({:.3}, {:.3}, {:.3}) MHz, {:.3} µm/V",
            angular_to_mhz(sec.omega(Axis::X)),
            angular_to_mhz(sec.omega(Axis::Y)),
            angular_to_mhz(sec.omega(Axis::Z)),
            d.um_per_volt.unwrap_or(f64::NAN)
        );
        for z in [-10.0, -5.0, -2.0, 0.0, 2.0, 5.0, 10.0] {
            let mm = modulation_index(&model, &Vec3::new(0.0, 0.0, z), &k)?;
            println!("    z = {z:>5.1} µm  β = {:.3e}", mm.beta);
        }
    }
    Ok(())
}
