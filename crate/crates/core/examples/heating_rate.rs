//! Heating rate from n̄ against waiting time, on a synthetic series.

use fibertrap::motional_thermometry::{fit_heating_rate, synthetic_heating_series};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let t_w_ms = [0.0, 10.0, 20.0, 30.0, 40.0, 50.0];
    let series = synthetic_heating_series(&mut rng, 13.0, 0.05, &t_w_ms, 0.2, 0.05, 20, "z")?;
    for i in 0..series.t_w_ms.len() {
        println!(
            "t_w = {:>4.0} ms  n̄ = {:.3} ± {:.3}",
            series.t_w_ms[i], series.nbar[i], series.sigma[i]
        );
    }
    let fit = fit_heating_rate(&series)?;
    println!(
        "ṅ = {:.2} ± {:.2} quanta/s (injected 13), n̄(0) = {:.3}, χ²_red = {:.2}",
        fit.rate_per_s, fit.rate_sd_per_s, fit.intercept, fit.reduced_chi2
    );
    Ok(())
}
