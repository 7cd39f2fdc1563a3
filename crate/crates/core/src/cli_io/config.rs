use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::cavity_qed::{CavityGeometry, CavityTransition};
use crate::error::{Error, Result};
use crate::field_solver::SolverOptions;
use crate::geometry::{MeshOptions, WheelTrapParams};
use crate::ion_chain::MAX_IONS;
use crate::motional_thermometry::TransitionKind;
use crate::surface_charges::{ChargeScenario, VoltageObservation};
use crate::trap_analysis::FitOptions;
use crate::trap_model::{Axis, DriveConfig, DriveMode, IonSpecies};

/// Geometry defaults a config starts from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Assembled trap with fiber mirrors.
    #[default]
    FiberCavity,
    /// Earlier trap without fibers and with wider endcaps.
    TestSetup,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    /// σ on both facets, e/µm².
    Sigma,
    SigmaPc,
    SigmaMm,
    CavityLengthUm,
    FiberOffsetUm,
    OmegaZMhz,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    #[serde(default)]
    pub start: f64,
    #[serde(default)]
    pub stop: f64,
    #[serde(default = "one")]
    pub steps: usize,
    /// Explicit values; when non-empty, start/stop/steps are ignored.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub values: Vec<f64>,
}

fn one() -> usize {
    1
}

impl SweepSpec {
    pub fn values(&self) -> Vec<f64> {
        if !self.values.is_empty() {
            return self.values.clone();
        }
        if self.steps <= 1 {
            return vec![self.start];
        }
        (0..self.steps)
            .map(|i| self.start + (self.stop - self.start) * i as f64 / (self.steps - 1) as f64)
            .collect()
    }
}

/// Rescale Ω_rf once so that the secular frequency along `axis` hits a target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Calibration {
    pub axis: Axis,
    pub target_mhz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MapSpec {
    pub axis: Axis,
    pub center_um: [f64; 3],
    pub half_width_um: f64,
    pub step_um: f64,
    /// Drive modes to map; empty means the configured drive only.
    pub modes: Vec<DriveMode>,
}

impl Default for MapSpec {
    fn default() -> Self {
        Self {
            axis: Axis::Z,
            center_um: [0.0; 3],
            half_width_um: 100.0,
            step_um: 2.0,
            modes: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MicromotionScan {
    pub half_width_um: f64,
    pub step_um: f64,
    /// Probe beam direction.
    pub direction: [f64; 3],
}

impl Default for MicromotionScan {
    fn default() -> Self {
        Self {
            half_width_um: 10.0,
            step_um: 0.5,
            direction: [0.0, 0.0, 1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSpec {
    pub seed_um: [f64; 3],
    /// Solve for the common endcap voltage giving this ω_z before fitting.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_omega_z_mhz: Option<f64>,
    /// Search range for that voltage.
    pub voltage_bracket_v: [f64; 2],
    /// Differential step for the axial displacement-per-volt calibration.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub displacement_delta_v: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub micromotion: Option<MicromotionScan>,
    pub mathieu: bool,
}

impl Default for AnalysisSpec {
    fn default() -> Self {
        Self {
            seed_um: [0.0; 3],
            target_omega_z_mhz: None,
            voltage_bracket_v: [0.5, 2000.0],
            displacement_delta_v: None,
            micromotion: None,
            mathieu: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompensationMode {
    /// One voltage on both endcaps, ω_z only.
    Common,
    /// V_PC and V_MM independently, ω_z and position.
    Independent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompensateSpec {
    pub mode: CompensationMode,
    pub target_omega_z_mhz: f64,
    pub z_target_um: f64,
    pub bracket_v: [f64; 2],
    /// Endcap voltages measured at known cavity lengths. When given,
    /// `compensate` fits effective facet charge densities to them.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub observed: Vec<VoltageObservation>,
}

impl Default for CompensateSpec {
    fn default() -> Self {
        Self {
            mode: CompensationMode::Common,
            target_omega_z_mhz: 1.0,
            z_target_um: 0.0,
            bracket_v: [-20.0, 20.0],
            observed: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChainSource {
    Harmonic,
    Simulated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChainSpec {
    pub n_ions: usize,
    pub source: ChainSource,
    /// Axial frequency of the harmonic source.
    pub omega_z_mhz: f64,
    /// Axial scan half-width for the simulated source.
    pub half_width_um: f64,
    pub step_um: f64,
}

impl Default for ChainSpec {
    fn default() -> Self {
        Self {
            n_ions: 2,
            source: ChainSource::Harmonic,
            omega_z_mhz: 1.517,
            half_width_um: 30.0,
            step_um: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThermoMode {
    Sideband,
    Rabi,
    Heating,
    Micromotion,
}

/// Parameters of synthetic data, used when no input file is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub nbar: f64,
    pub rabi_khz: f64,
    pub shots: u32,
    pub t_start_us: f64,
    pub t_stop_us: f64,
    pub points: usize,
    /// Sideband pulse length.
    pub pulse_us: f64,
    pub repeats: usize,
    pub rate_per_s: f64,
    pub n0: f64,
    pub t_w_ms: Vec<f64>,
    pub relative_noise: f64,
    pub absolute_noise: f64,
    pub samples: usize,
    pub beta: f64,
    /// Micromotion-sideband trace stop time.
    pub sideband_stop_us: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            nbar: 15.0,
            rabi_khz: 50.0,
            shots: 100,
            t_start_us: 1.0,
            t_stop_us: 100.0,
            points: 60,
            pulse_us: 50.0,
            repeats: 20,
            rate_per_s: 13.0,
            n0: 0.05,
            t_w_ms: vec![0.0, 10.0, 20.0, 30.0, 40.0, 50.0],
            relative_noise: 0.2,
            absolute_noise: 0.05,
            samples: 20,
            beta: 0.1,
            sideband_stop_us: 400.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThermoSpec {
    pub mode: ThermoMode,
    /// CSV input; synthetic data is generated from `synthetic` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<String>,
    /// Second CSV (micromotion sideband) for the micromotion mode.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input_sideband: Option<String>,
    pub kind: TransitionKind,
    /// Lamb-Dicke parameter; computed from `trap_omega_mhz` and
    /// `probe_angle_deg` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    pub trap_omega_mhz: f64,
    pub probe_angle_deg: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t2_us: Option<f64>,
    pub heating_mode: String,
    /// n̄ is the projection of all modes onto the probed axis.
    pub projected: bool,
    pub synthetic: SyntheticSpec,
}

impl Default for ThermoSpec {
    fn default() -> Self {
        Self {
            mode: ThermoMode::Rabi,
            input: None,
            input_sideband: None,
            kind: TransitionKind::Carrier,
            eta: None,
            trap_omega_mhz: 1.517,
            probe_angle_deg: 45.0,
            t2_us: None,
            heating_mode: "z".into(),
            projected: false,
            synthetic: SyntheticSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub preset: Preset,
    pub seed: u64,
    pub output_dir: String,
    /// Worker threads; 0 lets the runtime decide.
    pub threads: usize,
    pub geometry: WheelTrapParams,
    pub mesh: MeshOptions,
    pub solver: SolverOptions,
    pub drive: DriveConfig,
    pub species: IonSpecies,
    pub charges: ChargeScenario,
    pub fit: FitOptions,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub calibration: Option<Calibration>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sweep: Option<SweepSpec>,
    pub map: MapSpec,
    pub analysis: AnalysisSpec,
    pub compensate: CompensateSpec,
    pub chain: ChainSpec,
    pub cavity: CavityGeometry,
    pub transition: CavityTransition,
    pub thermo: ThermoSpec,
}

impl RunConfig {
    pub fn with_preset(preset: Preset) -> Self {
        Self {
            preset,
            seed: 1,
            output_dir: "out".into(),
            threads: 0,
            geometry: match preset {
                Preset::FiberCavity => WheelTrapParams::default(),
                Preset::TestSetup => WheelTrapParams::test_setup(),
            },
            mesh: MeshOptions::default(),
            solver: SolverOptions::default(),
            drive: DriveConfig::default(),
            species: IonSpecies::calcium40(),
            charges: ChargeScenario::default(),
            fit: FitOptions::default(),
            calibration: None,
            sweep: None,
            map: MapSpec::default(),
            analysis: AnalysisSpec::default(),
            compensate: CompensateSpec::default(),
            chain: ChainSpec::default(),
            cavity: CavityGeometry::default(),
            transition: CavityTransition::default(),
            thermo: ThermoSpec::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.drive.validate()?;
        self.species.validate()?;
        self.charges.validate()?;
        self.cavity.validate()?;
        self.transition.validate()?;
        if !(self.mesh.h_um > 0.0) {
            return Err(Error::parameter("mesh.h_um", "must be positive"));
        }
        if !(self.fit.half_width_um > 0.0 && self.fit.step_um > 0.0) {
            return Err(Error::parameter("fit", "half_width_um and step_um must be positive"));
        }
        if !(self.map.half_width_um > 0.0 && self.map.step_um > 0.0) {
            return Err(Error::parameter("map", "half_width_um and step_um must be positive"));
        }
        if let Some(c) = &self.calibration {
            if !(c.target_mhz > 0.0) {
                return Err(Error::parameter("calibration.target_mhz", "must be positive"));
            }
        }
        if let Some(s) = &self.sweep {
            if s.values.is_empty() && s.steps == 0 {
                return Err(Error::parameter("sweep.steps", "must be at least 1"));
            }
            if s.values().iter().any(|v| !v.is_finite()) {
                return Err(Error::parameter("sweep", "values must be finite"));
            }
        }
        if !(1..=MAX_IONS).contains(&self.chain.n_ions) {
            return Err(Error::parameter("chain.n_ions", format!("must be in 1..={MAX_IONS}")));
        }
        if !(self.chain.omega_z_mhz > 0.0) {
            return Err(Error::parameter("chain.omega_z_mhz", "must be positive"));
        }
        if !(self.compensate.target_omega_z_mhz > 0.0) {
            return Err(Error::parameter("compensate.target_omega_z_mhz", "must be positive"));
        }
        if self
            .compensate
            .observed
            .iter()
            .any(|o| !(o.length_um > 0.0) || !o.v_pc.is_finite() || !o.v_mm.is_finite())
        {
            return Err(Error::parameter(
                "compensate.observed",
                "lengths must be positive and voltages finite",
            ));
        }
        if self.compensate.bracket_v[0] >= self.compensate.bracket_v[1] {
            return Err(Error::parameter(
                "compensate.bracket_v",
                "lower bound must be below upper bound",
            ));
        }
        let syn = &self.thermo.synthetic;
        if syn.shots == 0 || syn.points < 2 || syn.samples < 2 || syn.repeats == 0 {
            return Err(Error::parameter(
                "thermo.synthetic",
                "shots, repeats must be positive; points and samples at least 2",
            ));
        }
        if !(self.thermo.trap_omega_mhz > 0.0) {
            return Err(Error::parameter("thermo.trap_omega_mhz", "must be positive"));
        }
        Ok(())
    }

    /// Canonical TOML text; the config hash is taken over this.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn sha256(&self) -> Result<String> {
        let text = self.to_toml()?;
        let digest = Sha256::digest(text.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::with_preset(Preset::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Default,
    Config,
    Override,
}

/// A validated config, where each leaf value came from, and the applied
/// command-line overrides in order.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub provenance: BTreeMap<String, Origin>,
    pub overrides: Vec<String>,
}

pub fn parse_config(text: &str) -> Result<LoadedConfig> {
    parse_config_with(text, &[])
}

/// Parses `text`, applies `key.path=value` overrides, fills defaults from
/// the selected preset and validates.
pub fn parse_config_with(text: &str, overrides: &[String]) -> Result<LoadedConfig> {
    let mut user: Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    let mut override_paths = Vec::new();
    for o in overrides {
        let (path, raw) = o
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{o}` is not of the form key.path=value")))?;
        let path = path.trim();
        set_path(&mut user, path, parse_scalar(raw.trim()))?;
        override_paths.push(path.to_string());
    }
    let preset: Preset = match user.get("preset") {
        Some(v) => v
            .clone()
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("preset: {e}")))?,
        None => Preset::default(),
    };
    let defaults = Value::try_from(RunConfig::with_preset(preset)).map_err(|e| Error::Config(e.to_string()))?;
    let Value::Table(mut merged) = defaults.clone() else {
        unreachable!("config serializes to a table")
    };
    merge(&mut merged, &user);
    let config: RunConfig = Value::Table(merged)
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    config.validate()?;

    let mut provenance = BTreeMap::new();
    let mut leaves = Vec::new();
    let resolved = Value::try_from(&config).map_err(|e| Error::Config(e.to_string()))?;
    collect_leaves(&resolved, String::new(), &mut leaves);
    for path in leaves {
        let origin = if override_paths
            .iter()
            .any(|o| path == *o || path.starts_with(&format!("{o}.")))
        {
            Origin::Override
        } else if lookup(&user, &path).is_some() {
            Origin::Config
        } else {
            Origin::Default
        };
        provenance.insert(path, origin);
    }
    Ok(LoadedConfig {
        config,
        provenance,
        overrides: overrides.to_vec(),
    })
}

fn parse_scalar(raw: &str) -> Value {
    match format!("v = {raw}").parse::<Table>() {
        Ok(mut t) => t.remove("v").unwrap_or(Value::String(raw.into())),
        Err(_) => Value::String(raw.into()),
    }
}

fn set_path(table: &mut Table, path: &str, value: Value) -> Result<()> {
    let mut parts: Vec<&str> = path.split('.').collect();
    let last = parts
        .pop()
        .filter(|s| !s.is_empty())
        .ok_or_else(|| Error::Config(format!("empty override key `{path}`")))?;
    let mut cur = table;
    for p in parts {
        let entry = cur.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override `{path}`: `{p}` is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

fn merge(base: &mut Table, over: &Table) {
    for (k, v) in over {
        match (base.get_mut(k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            _ => {
                base.insert(k.clone(), v.clone());
            }
        }
    }
}

fn collect_leaves(v: &Value, prefix: String, out: &mut Vec<String>) {
    match v {
        Value::Table(t) => {
            for (k, v) in t {
                let p = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                collect_leaves(v, p, out);
            }
        }
        _ => out.push(prefix),
    }
}

fn lookup<'a>(t: &'a Table, path: &str) -> Option<&'a Value> {
    let mut cur = t;
    let mut parts = path.split('.').peekable();
    while let Some(p) = parts.next() {
        let v = cur.get(p)?;
        if parts.peek().is_none() {
            return Some(v);
        }
        cur = v.as_table()?;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_all_defaults() {
        let c = parse_config("").unwrap();
        assert_eq!(c.config, RunConfig::default());
        assert!(c.provenance.values().all(|o| *o == Origin::Default));
        assert_eq!(c.provenance["geometry.cavity_length_um"], Origin::Default);
    }

    #[test]
    fn preset_switches_geometry() {
        let c = parse_config("preset = \"test-setup\"\n").unwrap();
        assert_eq!(c.config.geometry, WheelTrapParams::test_setup());
        assert_eq!(c.provenance["preset"], Origin::Config);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = parse_config("[geometry]\ncavity_lenght_um = 3.0\n").unwrap_err();
        assert!(err.to_string().contains("cavity_lenght_um"), "{err}");
    }

    #[test]
    fn inner_diameter_below_fiber_fails() {
        let err = parse_config("[geometry]\nendcap_inner_diameter_um = 200.0\n").unwrap_err();
        assert!(matches!(err, Error::Parameter { .. }), "{err}");
    }

    #[test]
    fn override_wins_and_is_recorded() {
        let c = parse_config_with(
            "[drive]\nv_rf = 100.0\n",
            &["drive.v_rf=120".into(), "map.axis=x".into()],
        )
        .unwrap();
        assert_eq!(c.config.drive.v_rf, 120.0);
        assert_eq!(c.config.map.axis, Axis::X);
        assert_eq!(c.provenance["drive.v_rf"], Origin::Override);
        assert_eq!(c.provenance["drive.v_pc"], Origin::Default);
    }

    #[test]
    fn serialization_round_trip() {
        let text = "preset = \"test-setup\"\nseed = 9\n[sweep]\nvariable = \"sigma\"\nstart = -5.0\nstop = 50.0\nsteps = 12\n[analysis.micromotion]\nhalf_width_um = 8.0\n";
        let a = parse_config(text).unwrap().config;
        let b = parse_config(&a.to_toml().unwrap()).unwrap().config;
        assert_eq!(a, b);
        assert_eq!(a.sha256().unwrap(), b.sha256().unwrap());
    }
}
