use std::path::Path;
use std::process::Command as Process;

use fibertrap::cli_io::{parse_config_with, run_in, Command, LoadedConfig, Origin};
use fibertrap::constants::khz_to_angular;
use fibertrap::geometry::Vec3;
use fibertrap::ion_chain::two_ion_spacing;
use fibertrap::motional_thermometry::{
    fit_rabi_frequency, modulation_index_from_rabi, synthetic_micromotion_pair, RabiFitOptions,
};
use fibertrap::trap_analysis::{modulation_index, probe_wavevector};
use fibertrap::trap_model::{DriveConfig, IonSpecies, TrapModel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

fn loaded(text: &str, overrides: &[&str]) -> LoadedConfig {
    let ov: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    parse_config_with(text, &ov).unwrap()
}

fn result(dir: &Path, name: &str) -> Value {
    let v: Value = serde_json::from_str(&std::fs::read_to_string(dir.join(name)).unwrap()).unwrap();
    v["result"].clone()
}

fn bin() -> Process {
    Process::new(env!("CARGO_BIN_EXE_fibertrap"))
}

#[test]
fn same_config_and_seed_give_identical_files() {
    let cfg = loaded(
        "seed = 9\n[thermo]\nmode = \"rabi\"\neta = 0.08\n[thermo.synthetic]\nnbar = 4.0\n",
        &[],
    );
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for cmd in [Command::ThermoFit, Command::Cavity, Command::Map] {
        let oa = run_in(cmd, &cfg, a.path()).unwrap();
        let ob = run_in(cmd, &cfg, b.path()).unwrap();
        assert_eq!(oa.files.len(), ob.files.len());
        for (fa, fb) in oa.files.iter().zip(&ob.files) {
            assert_eq!(
                std::fs::read(fa).unwrap(),
                std::fs::read(fb).unwrap(),
                "{}",
                fa.display()
            );
        }
    }
}

#[test]
fn different_seeds_give_different_synthetic_data() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_in(Command::ThermoFit, &loaded("seed = 1\n", &[]), a.path()).unwrap();
    run_in(Command::ThermoFit, &loaded("seed = 2\n", &[]), b.path()).unwrap();
    let ra = std::fs::read_to_string(a.path().join("rabi_trace.csv")).unwrap();
    let rb = std::fs::read_to_string(b.path().join("rabi_trace.csv")).unwrap();
    assert_ne!(
        ra.lines().skip(1).collect::<Vec<_>>(),
        rb.lines().skip(1).collect::<Vec<_>>()
    );
}

#[test]
fn symmetric_map_has_flat_rf_potential() {
    let cfg = loaded(
        "[drive]\nmode = \"symmetric\"\n[map]\nmodes = [\"symmetric\", \"rf-gnd\"]\n",
        &[],
    );
    let dir = tempfile::tempdir().unwrap();
    run_in(Command::Map, &cfg, dir.path()).unwrap();
    let s = result(dir.path(), "map_summary.json");
    assert!(s[0]["phi_rf_variation_mev"].as_f64().unwrap() < 1e-6);
    assert!(s[1]["phi_rf_variation_mev"].as_f64().unwrap() > 10.0);
    let csv = std::fs::read_to_string(dir.path().join("map_z_symmetric.csv")).unwrap();
    assert!(csv.starts_with("# fibertrap "));
    assert!(csv.lines().next().unwrap().contains("command=map"));
}

#[test]
fn cavity_command_reports_strong_coupling() {
    let dir = tempfile::tempdir().unwrap();
    run_in(Command::Cavity, &loaded("", &[]), dir.path()).unwrap();
    let r = result(dir.path(), "cavity.json");
    assert!((r["kappa_MHz"].as_f64().unwrap() - 1.607).abs() < 0.01);
    assert!((r["g0_MHz"].as_f64().unwrap() - 20.29).abs() < 0.05);
    assert_eq!(r["other_loss_inferred"], Value::Bool(true));
    assert_eq!(r["strong_coupling"]["g_exceeds_kappa"], Value::Bool(true));
}

#[test]
fn simulated_two_ion_spacing_is_close_to_harmonic_value() {
    let cfg = loaded(
        "preset = \"test-setup\"\n[drive]\nrf_frequency_mhz = 63.3\n[analysis]\ntarget_omega_z_mhz = 1.517\n[chain]\nsource = \"simulated\"\nn_ions = 2\n",
        &[],
    );
    let dir = tempfile::tempdir().unwrap();
    run_in(Command::Chain, &cfg, dir.path()).unwrap();
    let r = result(dir.path(), "chain.json");
    let z: Vec<f64> = r["positions_um"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    let omega = r["omega_z_MHz"].as_f64().unwrap();
    assert!((omega - 1.517).abs() < 1e-6);
    let expect = two_ion_spacing(fibertrap::constants::mhz_to_angular(omega), &IonSpecies::calcium40()).unwrap();
    assert!(
        ((z[1] - z[0]) / expect - 1.0).abs() < 0.02,
        "{} vs {expect}",
        z[1] - z[0]
    );
}

#[test]
fn micromotion_index_survives_a_rabi_round_trip() {
    let cfg = loaded("preset = \"test-setup\"\n", &[]);
    let c = &cfg.config;
    let prims = fibertrap::geometry::build_wheel_trap(&c.geometry).unwrap();
    let mesh = fibertrap::geometry::mesh_surface(&prims, &c.mesh).unwrap();
    let sol = fibertrap::field_solver::solve_basis(&mesh, &c.solver).unwrap();
    let drive = DriveConfig {
        rf_frequency_mhz: 63.3,
        ..DriveConfig::rf_gnd()
    };
    let model = TrapModel::new(&sol, &drive, &c.species, 0.0, 0.0).unwrap();
    let k = probe_wavevector(&c.species, &Vec3::z());
    let beta = modulation_index(&model, &Vec3::new(0.0, 0.0, 2.0), &k).unwrap().beta;
    assert!(beta > 0.02 && beta < 0.5, "β = {beta}");

    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let om = khz_to_angular(50.0);
    let tc: Vec<f64> = (0..60).map(|i| 1.0 + i as f64).collect();
    // about two sideband periods
    let span_us = 4.0 * std::f64::consts::PI / (om * beta / 2.0) * 1e6;
    let ts: Vec<f64> = (0..80).map(|i| 1.0 + span_us * i as f64 / 79.0).collect();
    let (carrier, side) = synthetic_micromotion_pair(&mut rng, om, beta, &tc, &ts, 200).unwrap();
    let opts = RabiFitOptions::default();
    let fq = fit_rabi_frequency(&carrier, &opts).unwrap();
    let fm = fit_rabi_frequency(&side, &opts).unwrap();
    let back = modulation_index_from_rabi(fm.omega, fq.omega).unwrap();
    assert!((back / beta - 1.0).abs() < 0.05, "{back} vs {beta}");
}

#[test]
fn overrides_are_recorded_in_provenance_and_headers() {
    let cfg = loaded("[cavity]\nlength_um = 400.0\n", &["cavity.t2_ppm=20", "seed=4"]);
    assert_eq!(cfg.provenance["cavity.t2_ppm"], Origin::Override);
    assert_eq!(cfg.provenance["cavity.length_um"], Origin::Config);
    assert_eq!(cfg.provenance["cavity.roc1_um"], Origin::Default);
    let dir = tempfile::tempdir().unwrap();
    run_in(Command::Cavity, &cfg, dir.path()).unwrap();
    let v: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("cavity.json")).unwrap()).unwrap();
    assert_eq!(v["meta"]["overrides"].as_array().unwrap().len(), 2);
    assert_eq!(v["result"]["total_loss_ppm"].as_f64().unwrap(), 72.3);
    assert!(dir.path().join("provenance.json").exists());
}

#[test]
fn binary_runs_and_reports_bad_configs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[cavity]\nlength_um = 507.0\n").unwrap();
    let out = bin()
        .args(["cavity", "-c"])
        .arg(&cfg)
        .env("FIBERTRAP_OUT_DIR", dir.path().join("out"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("out/cavity.json").exists());

    std::fs::write(&cfg, "[cavity]\nlenght_um = 507.0\n").unwrap();
    let out = bin().args(["cavity", "-c"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lenght_um"));

    let out = bin()
        .args(["cavity", "-c"])
        .arg(dir.path().join("missing.toml"))
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut n = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().is_some_and(|e| e == "toml") {
            fibertrap::cli_io::load_config(&p, &[]).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            n += 1;
        }
    }
    assert!(n >= 10);
}

#[test]
fn resolved_config_reproduces_the_hash() {
    let cfg = loaded("preset = \"test-setup\"\n[cavity]\nlength_um = 420.0\n", &["seed=8"]);
    let dir = tempfile::tempdir().unwrap();
    run_in(Command::Cavity, &cfg, dir.path()).unwrap();
    let text = std::fs::read_to_string(dir.path().join("resolved_config.toml")).unwrap();
    let again = parse_config_with(&text, &[]).unwrap();
    assert_eq!(again.config, cfg.config);
    let v: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("cavity.json")).unwrap()).unwrap();
    assert_eq!(
        v["meta"]["config_sha256"].as_str().unwrap(),
        again.config.sha256().unwrap()
    );
}
