use fibertrap::constants::mhz_to_angular;
use fibertrap::field_solver::SolverOptions;
use fibertrap::geometry::{MeshOptions, WheelTrapParams};
use fibertrap::surface_charges::{cavity_length_sweep, fit_effective_charges, ChargeScenario, VoltageObservation};
use fibertrap::trap_analysis::FitOptions;
use fibertrap::trap_model::{DriveConfig, IonSpecies};

#[test]
fn fitted_charges_reproduce_generating_densities() {
    let params = WheelTrapParams::default();
    let drive = DriveConfig {
        rf_frequency_mhz: 63.3,
        ..DriveConfig::symmetric()
    };
    let species = IonSpecies::calcium40();
    let fit = FitOptions::default();
    let omega = mhz_to_angular(1.0);
    let truth = ChargeScenario {
        sigma_pc: 5.0,
        sigma_mm: 20.0,
    };
    let lengths = [550.0, 900.0];
    let pts = cavity_length_sweep(
        &params,
        &lengths,
        &MeshOptions::default(),
        &SolverOptions::default(),
        &drive,
        &species,
        truth,
        omega,
        0.0,
        &fit,
    )
    .unwrap();
    let obs: Vec<VoltageObservation> = pts
        .iter()
        .map(|p| VoltageObservation {
            length_um: p.length_um,
            v_pc: p.result.v_pc,
            v_mm: p.result.v_mm,
        })
        .collect();
    let got = fit_effective_charges(
        &params,
        &obs,
        &MeshOptions::default(),
        &SolverOptions::default(),
        &drive,
        &species,
        omega,
        0.0,
        &fit,
    )
    .unwrap();
    assert!((got.charges.sigma_pc - 5.0).abs() < 1e-3, "{:?}", got.charges);
    assert!((got.charges.sigma_mm - 20.0).abs() < 1e-3, "{:?}", got.charges);
    assert!(got.residual_rms_v < 1e-4);
    for (p, o) in got.predicted.iter().zip(&obs) {
        assert!((p[0] - o.v_pc).abs() < 1e-4 && (p[1] - o.v_mm).abs() < 1e-4);
    }
}

#[test]
fn empty_observations_are_rejected() {
    let r = fit_effective_charges(
        &WheelTrapParams::default(),
        &[],
        &MeshOptions::default(),
        &SolverOptions::default(),
        &DriveConfig::symmetric(),
        &IonSpecies::calcium40(),
        mhz_to_angular(1.0),
        0.0,
        &FitOptions::default(),
    );
    assert!(r.is_err());
}
