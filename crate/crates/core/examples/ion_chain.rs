//! Equilibrium positions and axial modes of small ion chains.

use fibertrap::constants::{angular_to_mhz, mhz_to_angular};
use fibertrap::ion_chain::{equilibrium_positions, length_scale, normal_modes, two_ion_spacing, AxialPotential};
use fibertrap::trap_model::IonSpecies;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let species = IonSpecies::calcium40();
    let omega = mhz_to_angular(1.517);
    println!("two-ion spacing {:.4} µm", two_ion_spacing(omega, &species)?);
    let ell = length_scale(omega, &species);
    for n in 2..=6 {
        let chain = equilibrium_positions(n, &AxialPotential::harmonic(omega), &species)?;
        let scaled: Vec<String> = chain.positions_um.iter().map(|z| format!("{:+.4}", z / ell)).collect();
        let modes: Vec<String> = normal_modes(&chain)?
            .iter()
            .map(|w| format!("{:.3}", angular_to_mhz(*w)))
            .collect();
        println!(
            "N = {n}: z/ℓ = [{}]  modes/2π = [{}] MHz",
            scaled.join(", "),
            modes.join(", ")
        );
    }
    Ok(())
}
