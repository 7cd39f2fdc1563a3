use fibertrap::cavity_qed::{coupling_strength, g0_from_waist, mode_geometry, CavityGeometry, CavityTransition};
use fibertrap::constants::mhz_to_angular;
use fibertrap::ion_chain::{equilibrium_positions, normal_modes, two_ion_spacing, AxialPotential};
use fibertrap::motional_thermometry::{
    fit_heating_rate, sideband_ratio_to_nbar, thermal_rabi, HeatingSeries, TransitionKind,
};
use fibertrap::trap_model::IonSpecies;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn kind() -> impl Strategy<Value = TransitionKind> {
    prop_oneof![
        Just(TransitionKind::Carrier),
        Just(TransitionKind::RedSideband),
        Just(TransitionKind::BlueSideband),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn chain_is_reflection_symmetric(n in 2usize..=10, f_mhz in 0.3..3.0f64) {
        let sp = IonSpecies::calcium40();
        let c = equilibrium_positions(n, &AxialPotential::harmonic(mhz_to_angular(f_mhz)), &sp).unwrap();
        for i in 0..n {
            let s = c.positions_um[i] + c.positions_um[n - 1 - i];
            prop_assert!(s.abs() < 1e-9, "ion {i}: {s} µm");
        }
        prop_assert!(c.positions_um.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn chain_is_a_local_minimum(n in 2usize..=8, f_mhz in 0.5..2.0f64, seed in any::<u64>()) {
        let sp = IonSpecies::calcium40();
        let c = equilibrium_positions(n, &AxialPotential::harmonic(mhz_to_angular(f_mhz)), &sp).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..100 {
            let z: Vec<f64> = c.positions_um.iter().map(|z| z + rng.random_range(-0.01..0.01)).collect();
            prop_assert!(c.energy(&z).unwrap() >= c.energy_ev);
        }
        let modes = normal_modes(&c).unwrap();
        prop_assert!(modes.iter().all(|w| *w > 0.0));
        prop_assert!((modes[0] / mhz_to_angular(f_mhz) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn thermal_rabi_is_a_probability(
        t in 0.0..500.0f64,
        omega_khz in 1.0..200.0f64,
        nbar in 0.0..30.0f64,
        eta in 0.0..0.3f64,
        kind in kind(),
    ) {
        let p = thermal_rabi(t, omega_khz * 2.0 * std::f64::consts::PI * 1e3, nbar, eta, kind).unwrap();
        prop_assert!((0.0..=1.0).contains(&p), "{p}");
    }

    #[test]
    fn sideband_ratio_map_is_increasing(a in 0.0..0.99f64, b in 0.0..0.99f64) {
        prop_assume!((a - b).abs() > 1e-9);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(sideband_ratio_to_nbar(lo).unwrap() < sideband_ratio_to_nbar(hi).unwrap());
    }

    #[test]
    fn heating_fit_scales_and_shifts(
        rate in 1.0..1e4f64,
        n0 in 0.0..5.0f64,
        scale in 0.1..10.0f64,
        shift in 0.0..50.0f64,
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t: Vec<f64> = (0..6).map(|i| i as f64 * 2.0).collect();
        let nbar: Vec<f64> = t.iter().map(|t| n0 + rate * t * 1e-3 + rng.random_range(0.0..0.5)).collect();
        let sigma: Vec<f64> = nbar.iter().map(|n| 0.1 + 0.05 * n).collect();
        let base = HeatingSeries { t_w_ms: t.clone(), nbar: nbar.clone(), sigma: sigma.clone(), mode: "z".into(), projected: false };
        let f = fit_heating_rate(&base).unwrap();

        let scaled = HeatingSeries {
            nbar: nbar.iter().map(|v| v * scale).collect(),
            sigma: sigma.iter().map(|v| v * scale).collect(),
            ..base.clone()
        };
        let g = fit_heating_rate(&scaled).unwrap();
        prop_assert!((g.rate_per_s - scale * f.rate_per_s).abs() <= 1e-8 * (scale * f.rate_per_s).abs().max(1.0));
        prop_assert!((g.rate_sd_per_s - scale * f.rate_sd_per_s).abs() <= 1e-8 * scale * f.rate_sd_per_s);

        let shifted = HeatingSeries { t_w_ms: t.iter().map(|v| v + shift).collect(), ..base.clone() };
        let h = fit_heating_rate(&shifted).unwrap();
        prop_assert!((h.rate_per_s - f.rate_per_s).abs() <= 1e-8 * f.rate_per_s.abs().max(1.0));
        prop_assert!((h.rate_sd_per_s - f.rate_sd_per_s).abs() <= 1e-8 * f.rate_sd_per_s);
    }

    #[test]
    fn cavity_is_symmetric_under_mirror_swap(
        l in 100.0..600.0f64,
        r1 in 310.0..2000.0f64,
        r2 in 310.0..2000.0f64,
    ) {
        let a = CavityGeometry { length_um: l, roc1_um: r1, roc2_um: r2, ..CavityGeometry::default() };
        let b = CavityGeometry { roc1_um: r2, roc2_um: r1, ..a.clone() };
        let (ma, mb) = (mode_geometry(&a), mode_geometry(&b));
        prop_assume!(ma.is_ok());
        let (ma, mb) = (ma.unwrap(), mb.unwrap());
        prop_assert!((ma.waist_um - mb.waist_um).abs() < 1e-9 * ma.waist_um);
        prop_assert!((ma.waist_position_um - (l - mb.waist_position_um)).abs() < 1e-7 * l);
        let tr = CavityTransition::default();
        let (ga, gb) = (coupling_strength(&a, &tr).unwrap(), coupling_strength(&b, &tr).unwrap());
        prop_assert!((ga.g0 - gb.g0).abs() < 1e-9 * ga.g0);
    }

    #[test]
    fn g0_decreases_with_waist(w in 1.0..50.0f64, dw in 0.01..10.0f64, l in 50.0..1000.0f64) {
        let gamma = 2.0 * std::f64::consts::PI * 0.67e6;
        prop_assert!(g0_from_waist(l, w + dw, 854.0, gamma) < g0_from_waist(l, w, 854.0, gamma));
    }
}

#[test]
fn two_ion_spacing_matches_minimizer() {
    let sp = IonSpecies::calcium40();
    for f in [0.5, 1.0, 2.0] {
        let om = mhz_to_angular(f);
        let c = equilibrium_positions(2, &AxialPotential::harmonic(om), &sp).unwrap();
        let d = c.positions_um[1] - c.positions_um[0];
        let exact = two_ion_spacing(om, &sp).unwrap();
        assert!(((d - exact) / exact).abs() < 1e-6, "{f} MHz: {d} vs {exact}");
    }
}
