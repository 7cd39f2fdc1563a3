//! Modulation index from carrier and micromotion-sideband Rabi frequencies.

use fibertrap::constants::khz_to_angular;
use fibertrap::motional_thermometry::{
    fit_rabi_frequency, modulation_index_from_rabi, synthetic_micromotion_pair, RabiFitOptions,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let carrier_t: Vec<f64> = (0..60).map(|i| 1.0 + i as f64).collect();
    let sideband_t: Vec<f64> = (0..60).map(|i| 1.0 + 7.0 * i as f64).collect();
    let (c, s) = synthetic_micromotion_pair(&mut rng, khz_to_angular(50.0), 0.1, &carrier_t, &sideband_t, 100)?;
    let opts = RabiFitOptions::default();
    let fc = fit_rabi_frequency(&c, &opts)?;
    let fs = fit_rabi_frequency(&s, &opts)?;
    println!("Ω_c = {:.4e} ± {:.1e} rad/s", fc.omega, fc.omega_sd);
    println!("Ω_m = {:.4e} ± {:.1e} rad/s", fs.omega, fs.omega_sd);
    println!(
        "β = {:.4} (injected 0.1)",
        modulation_index_from_rabi(fs.omega, fc.omega)?
    );
    Ok(())
}
