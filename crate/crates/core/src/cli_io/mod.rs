//! Run configuration, command dispatch and output files.
//!
//! Every command reads one TOML [`RunConfig`], optionally patched by
//! `key.path=value` overrides, and writes CSV sweeps and JSON reports into
//! the output directory. Each file starts with a header naming the toolkit
//! version, the SHA-256 of the resolved config and the overrides applied.
//! `FIBERTRAP_OUT_DIR` replaces the configured output directory.

mod config;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub use config::{
    parse_config, parse_config_with, AnalysisSpec, Calibration, ChainSource, ChainSpec, CompensateSpec,
    CompensationMode, LoadedConfig, MapSpec, MicromotionScan, Origin, Preset, RunConfig, SweepSpec, SweepVariable,
    SyntheticSpec, ThermoMode, ThermoSpec,
};

use crate::cavity_qed::rate_card;
use crate::constants::{angular_to_mhz, khz_to_angular, mhz_to_angular};
use crate::error::{Error, Result};
use crate::field_solver::{sample_points, solve_basis, write_field_csv, BasisSolution};
use crate::geometry::{build_wheel_trap, mesh_surface, Vec3};
use crate::ion_chain::{equilibrium_positions, two_ion_spacing, write_omega_sweep_csv, AxialPotential, ChainReport};
use crate::motional_thermometry::{
    fit_heating_rate, fit_rabi_frequency, fit_thermal_rabi, lamb_dicke, modulation_index_from_rabi,
    sideband_nbar_from_counts, synthetic_heating_series, synthetic_micromotion_pair, synthetic_rabi_trace,
    synthetic_sideband_counts, HeatingSeries, RabiFitOptions, RabiTrace, TransitionKind,
};
use crate::surface_charges::{
    cavity_length_sweep, charge_equivalent_of_volt, compensation_voltage, endcap_voltages_for, fit_effective_charges,
    sweep_charge_density, ChargeScenario,
};
use crate::trap_analysis::{
    calibrate_rf_frequency, displacement_per_volt, fiber_offset_sweep, find_minimum, mean_voltage_for_axial_frequency,
    modulation_index, probe_wavevector, secular_frequencies,
};
use crate::trap_model::{mathieu_parameters, Axis, DriveConfig, PotentialMap, TrapModel};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const OUT_DIR_ENV: &str = "FIBERTRAP_OUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Solve,
    Map,
    Fit,
    ChargeSweep,
    Compensate,
    Chain,
    Cavity,
    ThermoFit,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Map => "map",
            Command::Fit => "fit",
            Command::ChargeSweep => "charge-sweep",
            Command::Compensate => "compensate",
            Command::Chain => "chain",
            Command::Cavity => "cavity",
            Command::ThermoFit => "thermo-fit",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Header {
    pub toolkit: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config_sha256: String,
    pub overrides: Vec<String>,
}

impl Header {
    fn csv_line(&self) -> String {
        let ov = if self.overrides.is_empty() {
            "none".to_string()
        } else {
            self.overrides.join(";")
        };
        format!(
            "# {} {} command={} config_sha256={} overrides={}",
            self.toolkit, self.version, self.command, self.config_sha256, ov
        )
    }
}

/// Files written by one command.
#[derive(Debug, Clone)]
pub struct Output {
    pub dir: PathBuf,
    pub header: Header,
    pub files: Vec<PathBuf>,
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    meta: &'a Header,
    result: &'a T,
}

impl Output {
    fn new(dir: PathBuf, header: Header) -> Result<Self> {
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        Ok(Self {
            dir,
            header,
            files: Vec::new(),
        })
    }

    fn create(&mut self, name: &str) -> Result<(PathBuf, BufWriter<File>)> {
        let path = self.dir.join(name);
        let f = File::create(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
        self.files.push(path.clone());
        Ok((path, BufWriter::new(f)))
    }

    /// CSV file; `body` writes the column header and rows.
    pub fn csv(&mut self, name: &str, body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
        let line = self.header.csv_line();
        let (path, mut w) = self.create(name)?;
        let io = |e| Error::io(path.display().to_string(), e);
        writeln!(w, "{line}").map_err(io)?;
        body(&mut w).map_err(io)?;
        w.flush().map_err(io)
    }

    /// File written verbatim, without the header line.
    pub fn text(&mut self, name: &str, content: &str) -> Result<()> {
        let (path, mut w) = self.create(name)?;
        let io = |e| Error::io(path.display().to_string(), e);
        w.write_all(content.as_bytes()).map_err(io)?;
        w.flush().map_err(io)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let env = Envelope {
            meta: &self.header,
            result: value,
        };
        let text = serde_json::to_string_pretty(&env).map_err(|e| Error::Config(e.to_string()))?;
        let (path, mut w) = self.create(name)?;
        let io = |e| Error::io(path.display().to_string(), e);
        writeln!(w, "{text}").map_err(io)?;
        w.flush().map_err(io)
    }
}

pub fn load_config(path: &Path, overrides: &[String]) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_config_with(&text, overrides)
}

/// Output directory after the environment override.
pub fn output_dir(config: &RunConfig) -> PathBuf {
    match std::env::var(OUT_DIR_ENV) {
        Ok(d) if !d.is_empty() => PathBuf::from(d),
        _ => PathBuf::from(&config.output_dir),
    }
}

/// Runs `command` writing into `dir`.
pub fn run_in(command: Command, loaded: &LoadedConfig, dir: &Path) -> Result<Output> {
    let cfg = &loaded.config;
    let header = Header {
        toolkit: "fibertrap",
        version: VERSION,
        command: command.name(),
        config_sha256: cfg.sha256()?,
        overrides: loaded.overrides.clone(),
    };
    let mut out = Output::new(dir.to_path_buf(), header)?;
    out.json("provenance.json", &loaded.provenance)?;
    // hashes to `config_sha256`
    let resolved = cfg.to_toml()?;
    out.text("resolved_config.toml", &resolved)?;
    match command {
        Command::Solve => cmd_solve(cfg, &mut out)?,
        Command::Map => cmd_map(cfg, &mut out)?,
        Command::Fit => cmd_fit(cfg, &mut out)?,
        Command::ChargeSweep => cmd_charge_sweep(cfg, &mut out)?,
        Command::Compensate => cmd_compensate(cfg, &mut out)?,
        Command::Chain => cmd_chain(cfg, &mut out)?,
        Command::Cavity => cmd_cavity(cfg, &mut out)?,
        Command::ThermoFit => cmd_thermo(cfg, &mut out)?,
    }
    Ok(out)
}

pub fn run(command: Command, loaded: &LoadedConfig) -> Result<Output> {
    run_in(command, loaded, &output_dir(&loaded.config))
}

fn vec3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

fn solve(cfg: &RunConfig) -> Result<BasisSolution> {
    let prims = build_wheel_trap(&cfg.geometry)?;
    let mesh = mesh_surface(&prims, &cfg.mesh)?;
    solve_basis(&mesh, &cfg.solver)
}

/// The configured drive, with Ω_rf rescaled when a calibration is given.
fn calibrated_drive(cfg: &RunConfig, sol: &BasisSolution) -> Result<DriveConfig> {
    match &cfg.calibration {
        None => Ok(cfg.drive.clone()),
        Some(c) => {
            let model = TrapModel::new(
                sol,
                &cfg.drive,
                &cfg.species,
                cfg.charges.sigma_pc,
                cfg.charges.sigma_mm,
            )?;
            calibrate_rf_frequency(
                &model,
                c.axis,
                mhz_to_angular(c.target_mhz),
                &vec3(cfg.analysis.seed_um),
                &cfg.fit,
            )
        }
    }
}

fn axis_points(center: Vec3, axis: Axis, half: f64, step: f64) -> Vec<Vec3> {
    let n = (half / step).round() as i64;
    (-n..=n).map(|i| center + axis.unit() * (i as f64 * step)).collect()
}

fn sweep_values(
    cfg: &RunConfig,
    accept: &[SweepVariable],
    fallback: (SweepVariable, Vec<f64>),
) -> Result<(SweepVariable, Vec<f64>)> {
    match &cfg.sweep {
        None => Ok(fallback),
        Some(s) if accept.contains(&s.variable) => Ok((s.variable, s.values())),
        Some(s) => Err(Error::parameter(
            "sweep.variable",
            format!(
                "{:?} is not supported by this command (use one of {accept:?})",
                s.variable
            ),
        )),
    }
}

fn cmd_solve(cfg: &RunConfig, out: &mut Output) -> Result<()> {
    let sol = solve(cfg)?;
    out.json("solver_diagnostics.json", sol.diagnostics())?;
    out.csv("mesh.csv", |w| sol.mesh().write_csv(w))?;
    let pts = axis_points(
        vec3(cfg.map.center_um),
        cfg.map.axis,
        cfg.map.half_width_um,
        cfg.map.step_um,
    );
    let rf = sample_points(&sol, &cfg.drive.rf_basis(), &pts)?;
    out.csv("field_rf_basis.csv", |w| write_field_csv(w, &rf))?;
    let dc = sample_points(&sol, &cfg.drive.dc_excitation(), &pts)?;
    out.csv("field_dc.csv", |w| write_field_csv(w, &dc))
}

#[derive(Serialize)]
struct MapSummary {
    mode: crate::trap_model::DriveMode,
    axis: Axis,
    rf_frequency_mhz: f64,
    phi_rf_max_mev: f64,
    phi_rf_min_mev: f64,
    phi_rf_variation_mev: f64,
    phi_trap_min_mev: f64,
}

fn cmd_map(cfg: &RunConfig, out: &mut Output) -> Result<()> {
    let sol = solve(cfg)?;
    let drive = calibrated_drive(cfg, &sol)?;
    let modes = if cfg.map.modes.is_empty() {
        vec![drive.mode]
    } else {
        cfg.map.modes.clone()
    };
    let axis_name = format!("{:?}", cfg.map.axis).to_lowercase();
    let mut summary = Vec::new();
    for mode in modes {
        let d = DriveConfig { mode, ..drive.clone() };
        let model = TrapModel::new(&sol, &d, &cfg.species, cfg.charges.sigma_pc, cfg.charges.sigma_mm)?;
        let map = PotentialMap::along_axis(
            &model,
            cfg.map.axis,
            &vec3(cfg.map.center_um),
            cfg.map.half_width_um,
            cfg.map.step_um,
        )?;
        let mode_name = serde_json::to_value(mode)
            .ok()
            .and_then(|v| v.as_str().map(String::from))
            .unwrap_or_default();
        out.csv(&format!("map_{axis_name}_{mode_name}.csv"), |w| map.write_csv(w))?;
        let max = map.rf.iter().cloned().fold(f64::NEG_INFINITY, f64::max) * 1e3;
        let min = map.rf.iter().cloned().fold(f64::INFINITY, f64::min) * 1e3;
        summary.push(MapSummary {
            mode,
            axis: cfg.map.axis,
            rf_frequency_mhz: d.rf_frequency_mhz,
            phi_rf_max_mev: max,
            phi_rf_min_mev: min,
            phi_rf_variation_mev: max - min,
            phi_trap_min_mev: map.total.iter().cloned().fold(f64::INFINITY, f64::min) * 1e3,
        });
    }
    out.json("map_summary.json", &summary)
}

#[derive(Serialize)]
struct FitReport {
    rf_frequency_mhz: f64,
    v_pc: f64,
    v_mm: f64,
    minimum_um: [f64; 3],
    #[serde(rename = "omega_MHz")]
    omega_mhz: [f64; 3],
    fits: [crate::trap_analysis::HarmonicFit; 3],
    #[serde(skip_serializing_if = "Option::is_none")]
    mathieu: Option<crate::trap_model::MathieuParameters>,
    #[serde(skip_serializing_if = "Option::is_none")]
    displacement: Option<crate::trap_analysis::DisplacementCalibration>,
}

fn cmd_fit(cfg: &RunConfig, out: &mut Output) -> Result<()> {
    let seed = vec3(cfg.analysis.seed_um);
    if let Some(SweepSpec {
        variable: SweepVariable::FiberOffsetUm,
        ..
    }) = &cfg.sweep
    {
        let offsets = cfg.sweep.as_ref().map(|s| s.values()).unwrap_or_default();
        let pts = fiber_offset_sweep(
            &cfg.geometry,
            &offsets,
            &cfg.mesh,
            &cfg.solver,
            &cfg.drive,
            &cfg.species,
            &seed,
            &cfg.fit,
        )?;
        return out.csv("fiber_offset.csv", |w| {
            writeln!(w, "fiber_offset_um,x0_um,y0_um,x0_sd_um")?;
            for p in &pts {
                writeln!(w, "{},{:.6},{:.6},{:.6}", p.offset_um, p.x0_um, p.y0_um, p.x0_sd_um)?;
            }
            Ok(())
        });
    }
    if cfg.sweep.is_some() {
        return Err(Error::parameter("sweep.variable", "fit only sweeps fiber_offset_um"));
    }
    let sol = solve(cfg)?;
    let mut drive = calibrated_drive(cfg, &sol)?;
    let base = TrapModel::new(&sol, &drive, &cfg.species, cfg.charges.sigma_pc, cfg.charges.sigma_mm)?;
    if let Some(target) = cfg.analysis.target_omega_z_mhz {
        let b = cfg.analysis.voltage_bracket_v;
        let v = mean_voltage_for_axial_frequency(&base, mhz_to_angular(target), &seed, (b[0], b[1]), &cfg.fit)?;
        drive = drive.with_dc(v, v);
    }
    let model = base.with(&drive, cfg.charges.sigma_pc, cfg.charges.sigma_mm)?;
    let sec = secular_frequencies(&model, &seed, &cfg.fit)?;
    let mathieu = if cfg.analysis.mathieu {
        Some(mathieu_parameters(&model, &sec.minimum_um)?)
    } else {
        None
    };
    let displacement = match cfg.analysis.displacement_delta_v {
        Some(dv) => Some(displacement_per_volt(&model, dv, &sec.minimum_um)?),
        None => None,
    };
    let report = FitReport {
        rf_frequency_mhz: drive.rf_frequency_mhz,
        v_pc: drive.v_pc,
        v_mm: drive.v_mm,
        minimum_um: [sec.minimum_um.x, sec.minimum_um.y, sec.minimum_um.z],
        omega_mhz: Axis::ALL.map(|a| angular_to_mhz(sec.omega(a))),
        fits: sec.fits,
        mathieu,
        displacement,
    };
    out.json("fit.json", &report)?;
    if let Some(scan) = &cfg.analysis.micromotion {
        let k = probe_wavevector(&cfg.species, &vec3(scan.direction));
        let pts = axis_points(
            Vec3::new(0.0, 0.0, sec.minimum_um.z),
            Axis::Z,
            scan.half_width_um,
            scan.step_um,
        );
        let rows = pts
            .iter()
            .map(|p| modulation_index(&model, p, &k).map(|m| (p.z, m)))
            .collect::<Result<Vec<_>>>()?;
        out.csv("micromotion.csv", |w| {
            writeln!(w, "z_um,E_rf_x_V_per_m,E_rf_y_V_per_m,E_rf_z_V_per_m,beta")?;
            for (z, m) in &rows {
                let e = m.residual_field;
                writeln!(w, "{z:.4},{:.6e},{:.6e},{:.6e},{:.6e}", e.x, e.y, e.z, m.beta)?;
            }
            Ok(())
        })?;
    }
    Ok(())
}

#[derive(Serialize)]
struct ChargeSweepSummary {
    sigma_equivalent_e_per_um2_per_volt: f64,
    unstable_sigmas: Vec<f64>,
}

fn cmd_charge_sweep(cfg: &RunConfig, out: &mut Output) -> Result<()> {
    let default_sigmas = vec![-5.0, 0.0, 0.1, 1.0, 2.0, 5.0, 10.0, 20.0, 30.0, 40.0, 50.0];
    let (_, sigmas) = sweep_values(cfg, &[SweepVariable::Sigma], (SweepVariable::Sigma, default_sigmas))?;
    let sol = solve(cfg)?;
    let drive = calibrated_drive(cfg, &sol)?;
    let model = TrapModel::new(&sol, &drive, &cfg.species, 0.0, 0.0)?;
    let seed = vec3(cfg.analysis.seed_um);
    let rows = sweep_charge_density(&model, &sigmas, &seed, &cfg.fit)?;
    out.csv("charge_sweep.csv", |w| {
        writeln!(w, "sigma_e_per_um2,omega_x_MHz,omega_y_MHz,omega_z_MHz,stable,note")?;
        for r in &rows {
            let f = |i: usize| {
                r.omega
                    .map_or(String::new(), |o| format!("{:.6}", angular_to_mhz(o[i])))
            };
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.sigma,
                f(0),
                f(1),
                f(2),
                r.stable,
                r.note.clone().unwrap_or_default().replace(',', ";")
            )?;
        }
        Ok(())
    })?;
    let summary = ChargeSweepSummary {
        sigma_equivalent_e_per_um2_per_volt: charge_equivalent_of_volt(&model, &seed, &cfg.fit)?,
        unstable_sigmas: rows.iter().filter(|r| !r.stable).map(|r| r.sigma).collect(),
    };
    out.json("charge_sweep_summary.json", &summary)
}

#[derive(Serialize)]
struct LinearSummary {
    slope_v_per_e_per_um2: f64,
    intercept_v: f64,
    r_squared: f64,
}

/// Ordinary least-squares line and its R².
pub fn linear_r2(x: &[f64], y: &[f64]) -> Result<(f64, f64, f64)> {
    let sigma = vec![1.0; x.len()];
    let f = crate::numerics::lsq::weighted_line(x, y, &sigma)?;
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - f.chi2 / ss_tot } else { 1.0 };
    Ok((f.slope, f.intercept, r2))
}

fn cmd_compensate(cfg: &RunConfig, out: &mut Output) -> Result<()> {
    let spec = &cfg.compensate;
    let omega = mhz_to_angular(spec.target_omega_z_mhz);
    if !spec.observed.is_empty() {
        let fit = fit_effective_charges(
            &cfg.geometry,
            &spec.observed,
            &cfg.mesh,
            &cfg.solver,
            &cfg.drive,
            &cfg.species,
            omega,
            spec.z_target_um,
            &cfg.fit,
        )?;
        return out.json("effective_charges.json", &fit);
    }
    let (var, values) = sweep_values(
        cfg,
        &[
            SweepVariable::Sigma,
            SweepVariable::SigmaPc,
            SweepVariable::SigmaMm,
            SweepVariable::CavityLengthUm,
        ],
        (SweepVariable::Sigma, (0..=12).map(|i| -10.0 + 5.0 * i as f64).collect()),
    )?;
    if var == SweepVariable::CavityLengthUm {
        let pts = cavity_length_sweep(
            &cfg.geometry,
            &values,
            &cfg.mesh,
            &cfg.solver,
            &cfg.drive,
            &cfg.species,
            cfg.charges,
            omega,
            spec.z_target_um,
            &cfg.fit,
        )?;
        return out.csv("length_sweep.csv", |w| {
            writeln!(w, "cavity_length_um,V_PC_V,V_MM_V,omega_z_MHz,z0_um")?;
            for p in &pts {
                let r = &p.result;
                writeln!(
                    w,
                    "{},{:.6},{:.6},{:.6},{:.6}",
                    p.length_um,
                    r.v_pc,
                    r.v_mm,
                    angular_to_mhz(r.omega_z),
                    r.z0_um
                )?;
            }
            Ok(())
        });
    }
    let sol = solve(cfg)?;
    let drive = calibrated_drive(cfg, &sol)?;
    let model = TrapModel::new(&sol, &drive, &cfg.species, 0.0, 0.0)?;
    let center = Vec3::new(0.0, 0.0, spec.z_target_um);
    let scenario = |v: f64| match var {
        SweepVariable::SigmaPc => ChargeScenario {
            sigma_pc: v,
            ..cfg.charges
        },
        SweepVariable::SigmaMm => ChargeScenario {
            sigma_mm: v,
            ..cfg.charges
        },
        _ => ChargeScenario::symmetric(v),
    };
    match spec.mode {
        CompensationMode::Common => {
            if var != SweepVariable::Sigma {
                return Err(Error::parameter(
                    "compensate.mode",
                    "common-mode compensation sweeps `sigma` only",
                ));
            }
            let b = spec.bracket_v;
            let v: Vec<f64> = values
                .iter()
                .map(|s| compensation_voltage(&model, *s, omega, &center, (b[0], b[1]), &cfg.fit))
                .collect::<Result<_>>()?;
            out.csv("compensation.csv", |w| {
                writeln!(w, "sigma_e_per_um2,V_DC_V")?;
                for (s, v) in values.iter().zip(&v) {
                    writeln!(w, "{s},{v:.6}")?;
                }
                Ok(())
            })?;
            let (slope, intercept, r2) = linear_r2(&values, &v)?;
            out.json(
                "compensation_fit.json",
                &LinearSummary {
                    slope_v_per_e_per_um2: slope,
                    intercept_v: intercept,
                    r_squared: r2,
                },
            )
        }
        CompensationMode::Independent => {
            let mut seed = (cfg.drive.v_pc, cfg.drive.v_mm);
            let mut rows = Vec::new();
            for s in &values {
                let r = endcap_voltages_for(&model, scenario(*s), omega, spec.z_target_um, seed, &cfg.fit)?;
                seed = (r.v_pc, r.v_mm);
                rows.push((*s, r));
            }
            out.csv("compensation.csv", |w| {
                writeln!(w, "sigma_e_per_um2,V_PC_V,V_MM_V,omega_z_MHz,z0_um")?;
                for (s, r) in &rows {
                    writeln!(
                        w,
                        "{s},{:.6},{:.6},{:.6},{:.6}",
                        r.v_pc,
                        r.v_mm,
                        angular_to_mhz(r.omega_z),
                        r.z0_um
                    )?;
                }
                Ok(())
            })
        }
    }
}

#[derive(Serialize)]
struct ChainOutput {
    #[serde(flatten)]
    report: ChainReport,
    #[serde(rename = "omega_z_MHz")]
    omega_z_mhz: f64,
    two_ion_spacing_um: f64,
    source: ChainSource,
}

fn cmd_chain(cfg: &RunConfig, out: &mut Output) -> Result<()> {
    let spec = &cfg.chain;
    if let Some(s) = &cfg.sweep {
        if s.variable != SweepVariable::OmegaZMhz || spec.source != ChainSource::Harmonic {
            return Err(Error::parameter(
                "sweep.variable",
                "chain sweeps omega_z_mhz with a harmonic source only",
            ));
        }
        let omegas: Vec<f64> = s.values().iter().map(|f| mhz_to_angular(*f)).collect();
        let mut buf = Vec::new();
        write_omega_sweep_csv(&mut buf, spec.n_ions, &omegas, &cfg.species)?;
        return out.csv("chain_sweep.csv", |w| w.write_all(&buf));
    }
    let (potential, omega_z) = match spec.source {
        ChainSource::Harmonic => {
            let om = mhz_to_angular(spec.omega_z_mhz);
            (AxialPotential::harmonic(om), om)
        }
        ChainSource::Simulated => {
            let sol = solve(cfg)?;
            let mut drive = calibrated_drive(cfg, &sol)?;
            let base = TrapModel::new(&sol, &drive, &cfg.species, cfg.charges.sigma_pc, cfg.charges.sigma_mm)?;
            let seed = vec3(cfg.analysis.seed_um);
            if let Some(target) = cfg.analysis.target_omega_z_mhz {
                let b = cfg.analysis.voltage_bracket_v;
                let v = mean_voltage_for_axial_frequency(&base, mhz_to_angular(target), &seed, (b[0], b[1]), &cfg.fit)?;
                drive = drive.with_dc(v, v);
            }
            let model = base.with(&drive, cfg.charges.sigma_pc, cfg.charges.sigma_mm)?;
            let min = find_minimum(&model, &seed, &Default::default())?;
            let sec = secular_frequencies(&model, &min, &cfg.fit)?;
            let map = PotentialMap::along_axis(
                &model,
                Axis::Z,
                &Vec3::new(min.x, min.y, min.z),
                spec.half_width_um,
                spec.step_um,
            )?;
            out.csv("chain_potential_z.csv", |w| map.write_csv(w))?;
            (AxialPotential::from_map(&map, &cfg.species)?, sec.omega(Axis::Z))
        }
    };
    let chain = equilibrium_positions(spec.n_ions, &potential, &cfg.species)?;
    let report = ChainOutput {
        report: ChainReport::new(&chain)?,
        omega_z_mhz: angular_to_mhz(omega_z),
        two_ion_spacing_um: two_ion_spacing(omega_z, &cfg.species)?,
        source: spec.source,
    };
    out.json("chain.json", &report)
}

fn cmd_cavity(cfg: &RunConfig, out: &mut Output) -> Result<()> {
    out.json("cavity.json", &rate_card(&cfg.cavity, &cfg.transition)?)
}

fn read_input(path: &str) -> Result<BufReader<File>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(BufReader::new(f))
}

#[derive(Serialize)]
struct Injected {
    nbar: Option<f64>,
    rabi_khz: Option<f64>,
    rate_per_s: Option<f64>,
    beta: Option<f64>,
}

#[derive(Serialize)]
struct ThermoReport<T: Serialize> {
    mode: ThermoMode,
    synthetic: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    injected: Option<Injected>,
    #[serde(skip_serializing_if = "Option::is_none")]
    eta: Option<f64>,
    fit: T,
}

fn cmd_thermo(cfg: &RunConfig, out: &mut Output) -> Result<()> {
    let t = &cfg.thermo;
    let syn = &t.synthetic;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let eta = t.eta.unwrap_or_else(|| {
        lamb_dicke(
            &cfg.species,
            mhz_to_angular(t.trap_omega_mhz),
            t.probe_angle_deg.to_radians(),
        )
    });
    let omega0 = khz_to_angular(syn.rabi_khz);
    let times: Vec<f64> = (0..syn.points)
        .map(|i| syn.t_start_us + (syn.t_stop_us - syn.t_start_us) * i as f64 / (syn.points - 1) as f64)
        .collect();
    let fit_opts = RabiFitOptions { t2_us: t.t2_us };
    let synthetic = t.input.is_none();
    match t.mode {
        ThermoMode::Sideband => {
            let (mut red, mut blue, mut shots) = (0u64, 0u64, 0u64);
            let mut rows = Vec::new();
            if let Some(path) = &t.input {
                // red,blue,shots rows
                for line in std::io::BufRead::lines(read_input(path)?) {
                    let line = line.map_err(|e| Error::io(path.as_str(), e))?;
                    let v: Vec<u64> = line.split(',').filter_map(|s| s.trim().parse().ok()).collect();
                    if v.len() == 3 {
                        rows.push((v[0], v[1], v[2]));
                    }
                }
            } else {
                for _ in 0..syn.repeats {
                    let (r, b) = synthetic_sideband_counts(&mut rng, syn.nbar, eta, omega0, syn.pulse_us, syn.shots)?;
                    rows.push((r, b, syn.shots as u64));
                }
            }
            for (r, b, n) in &rows {
                red += r;
                blue += b;
                shots += n;
            }
            let est = sideband_nbar_from_counts(red, blue, shots)?;
            out.csv("sideband_counts.csv", |w| {
                writeln!(w, "red_counts,blue_counts,shots")?;
                for (r, b, n) in &rows {
                    writeln!(w, "{r},{b},{n}")?;
                }
                Ok(())
            })?;
            out.json(
                "thermo_fit.json",
                &ThermoReport {
                    mode: t.mode,
                    synthetic,
                    injected: synthetic.then_some(Injected {
                        nbar: Some(syn.nbar),
                        rabi_khz: Some(syn.rabi_khz),
                        rate_per_s: None,
                        beta: None,
                    }),
                    eta: Some(eta),
                    fit: est,
                },
            )
        }
        ThermoMode::Rabi => {
            let trace = match &t.input {
                Some(p) => RabiTrace::read_csv(read_input(p)?, t.kind)?,
                None => synthetic_rabi_trace(&mut rng, &times, omega0, syn.nbar, eta, t.kind, syn.shots)?,
            };
            out.csv("rabi_trace.csv", |w| trace.write_csv(w))?;
            let mut fit = fit_thermal_rabi(&trace, eta, &fit_opts)?;
            fit.projected = t.projected;
            out.json(
                "thermo_fit.json",
                &ThermoReport {
                    mode: t.mode,
                    synthetic,
                    injected: synthetic.then_some(Injected {
                        nbar: Some(syn.nbar),
                        rabi_khz: Some(syn.rabi_khz),
                        rate_per_s: None,
                        beta: None,
                    }),
                    eta: Some(eta),
                    fit,
                },
            )
        }
        ThermoMode::Heating => {
            let mut series = match &t.input {
                Some(p) => HeatingSeries::read_csv(read_input(p)?, &t.heating_mode)?,
                None => synthetic_heating_series(
                    &mut rng,
                    syn.rate_per_s,
                    syn.n0,
                    &syn.t_w_ms,
                    syn.relative_noise,
                    syn.absolute_noise,
                    syn.samples,
                    &t.heating_mode,
                )?,
            };
            series.projected = t.projected;
            out.csv("heating_series.csv", |w| series.write_csv(w))?;
            let fit = fit_heating_rate(&series)?;
            out.json(
                "thermo_fit.json",
                &ThermoReport {
                    mode: t.mode,
                    synthetic,
                    injected: synthetic.then_some(Injected {
                        nbar: None,
                        rabi_khz: None,
                        rate_per_s: Some(syn.rate_per_s),
                        beta: None,
                    }),
                    eta: None,
                    fit,
                },
            )
        }
        ThermoMode::Micromotion => {
            let (carrier, sideband) = match (&t.input, &t.input_sideband) {
                (Some(a), Some(b)) => (
                    RabiTrace::read_csv(read_input(a)?, TransitionKind::Carrier)?,
                    RabiTrace::read_csv(read_input(b)?, TransitionKind::MicromotionSideband)?,
                ),
                (None, None) => {
                    let ts: Vec<f64> = (0..syn.points)
                        .map(|i| {
                            syn.t_start_us
                                + (syn.sideband_stop_us - syn.t_start_us) * i as f64 / (syn.points - 1) as f64
                        })
                        .collect();
                    synthetic_micromotion_pair(&mut rng, omega0, syn.beta, &times, &ts, syn.shots)?
                }
                _ => {
                    return Err(Error::parameter(
                        "thermo.input_sideband",
                        "micromotion mode needs both carrier and sideband inputs",
                    ))
                }
            };
            out.csv("carrier_trace.csv", |w| carrier.write_csv(w))?;
            out.csv("sideband_trace.csv", |w| sideband.write_csv(w))?;
            let fq = fit_rabi_frequency(&carrier, &fit_opts)?;
            let fm = fit_rabi_frequency(&sideband, &fit_opts)?;
            #[derive(Serialize)]
            struct Mm {
                carrier: crate::motional_thermometry::RabiFrequencyFit,
                sideband: crate::motional_thermometry::RabiFrequencyFit,
                beta: f64,
            }
            let beta = modulation_index_from_rabi(fm.omega, fq.omega)?;
            out.json(
                "thermo_fit.json",
                &ThermoReport {
                    mode: t.mode,
                    synthetic,
                    injected: synthetic.then_some(Injected {
                        nbar: None,
                        rabi_khz: Some(syn.rabi_khz),
                        rate_per_s: None,
                        beta: Some(syn.beta),
                    }),
                    eta: None,
                    fit: Mm {
                        carrier: fq,
                        sideband: fm,
                        beta,
                    },
                },
            )
        }
    }
}
