//! Mode geometry, decay rates and ion-cavity coupling of the fiber cavity.

use fibertrap::cavity_qed::{rate_card, CavityGeometry, CavityTransition};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let card = rate_card(&CavityGeometry::default(), &CavityTransition::default())?;
    println!("{}", serde_json::to_string_pretty(&card)?);

    // a shorter cavity with the same mirrors
    let short = CavityGeometry {
        length_um: 300.0,
        ..CavityGeometry::default()
    };
    let c = rate_card(&short, &CavityTransition::default())?;
    println!(
        "L = 300 µm: w₀ = {:.3} µm, κ/2π = {:.3} MHz, g/2π = {:.3} MHz",
        c.w0_um, c.kappa_mhz, c.g_mhz
    );
    Ok(())
}
