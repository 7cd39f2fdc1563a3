//! Temperature from a thermal carrier Rabi flop and from the sideband ratio,
//! both on synthetic data.

use fibertrap::constants::{khz_to_angular, mhz_to_angular};
use fibertrap::motional_thermometry::{
    fit_thermal_rabi, lamb_dicke, sideband_nbar_from_counts, synthetic_rabi_trace, synthetic_sideband_counts,
    RabiFitOptions, TransitionKind,
};
use fibertrap::trap_model::IonSpecies;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let eta = lamb_dicke(&IonSpecies::calcium40(), mhz_to_angular(1.517), 45f64.to_radians());
    let omega0 = khz_to_angular(50.0);
    println!("η = {eta:.4}");

    let times: Vec<f64> = (1..=60).map(|i| 1.5 * i as f64).collect();
    let trace = synthetic_rabi_trace(&mut rng, &times, omega0, 15.0, eta, TransitionKind::Carrier, 100)?;
    let fit = fit_thermal_rabi(&trace, eta, &RabiFitOptions::default())?;
    println!(
        "carrier flop: n̄ = {:.2} ± {:.2} (injected 15), Ω₀/2π = {:.2} kHz, χ²_red = {:.2}",
        fit.nbar,
        fit.nbar_sd,
        fit.omega0 / (2e3 * std::f64::consts::PI),
        fit.reduced_chi2
    );

    let (mut red, mut blue) = (0, 0);
    for _ in 0..20 {
        let (r, b) = synthetic_sideband_counts(&mut rng, 0.5, eta, omega0, 40.0, 100)?;
        red += r;
        blue += b;
    }
    let est = sideband_nbar_from_counts(red, blue, 2000)?;
    println!(
        "sideband ratio {:.3}: n̄ = {:.3} ± {:.3} (injected 0.5)",
        est.ratio, est.nbar, est.nbar_sd
    );
    Ok(())
}
