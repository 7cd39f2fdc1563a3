//! Capacitance of an isolated sphere against 4πε₀R under mesh refinement.

use std::f64::consts::PI;

use fibertrap::constants::{EPSILON_0, MICRON};
use fibertrap::field_solver::{solve_basis, Excitation, SolverOptions};
use fibertrap::geometry::{mesh_surface, ElectrodePrimitive, Label, MeshOptions, Pose, PrimitiveKind};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let radius_um = 100.0;
    let exact = 4.0 * PI * EPSILON_0 * radius_um * MICRON;
    println!("{:>6} {:>7} {:>14} {:>10}", "h_um", "panels", "C (F)", "rel err");
    for h in [32.0, 24.0, 16.0, 12.0, 9.0] {
        let sphere = ElectrodePrimitive::new(
            PrimitiveKind::Sphere {
                diameter: 2.0 * radius_um,
            },
            Pose::at(0.0, 0.0, 0.0),
            Label::Aux(0),
        )?;
        let mesh = mesh_surface(&[sphere], &MeshOptions::uniform(h))?;
        let sol = solve_basis(&mesh, &SolverOptions::default())?;
        let c = sol.charges(&Excitation::new().with(Label::Aux(0), 1.0))[&Label::Aux(0)];
        println!(
            "{h:>6.1} {:>7} {c:>14.6e} {:>10.2e}",
            mesh.len(),
            (c - exact).abs() / exact
        );
    }
    Ok(())
}
