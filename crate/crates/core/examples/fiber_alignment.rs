//! Radial ion position against a transverse fiber offset.

use fibertrap::field_solver::SolverOptions;
use fibertrap::geometry::{MeshOptions, Vec3, WheelTrapParams};
use fibertrap::trap_analysis::{fiber_offset_sweep, FitOptions};
use fibertrap::trap_model::{DriveConfig, IonSpecies};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let drive = DriveConfig {
        rf_frequency_mhz: 63.3,
        ..DriveConfig::symmetric()
    }
    .with_dc(0.0, 0.0);
    let pts = fiber_offset_sweep(
        &WheelTrapParams::default(),
        &[-50.0, -25.0, 0.0, 25.0, 50.0],
        &MeshOptions::default(),
        &SolverOptions::default(),
        &drive,
        &IonSpecies::calcium40(),
        &Vec3::zeros(),
        &FitOptions::default(),
    )?;
    for p in pts {
        println!(
            "δ_f = {:>6.1} µm  x₀ = {:>7.3} µm  y₀ = {:>7.3} µm",
            p.offset_um, p.x0_um, p.y0_um
        );
    }
    Ok(())
}
