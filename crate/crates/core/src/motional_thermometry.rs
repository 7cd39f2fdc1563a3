//! Motional-state observables: sideband thermometry, thermal Rabi
//! oscillations, micromotion-sideband Rabi ratios and heating-rate fits.
//!
//! Times are in µs for Rabi traces and ms for heating series; Rabi
//! frequencies are angular (rad/s).

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use rand::Rng;
use rand_distr::{Binomial, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::constants::{HBAR, MICRON};
use crate::error::{Error, Result};
use crate::numerics::lsq::{levenberg_marquardt, weighted_line, LmOptions};
use crate::trap_model::IonSpecies;

/// Thermal populations beyond the cutoff sum to less than this.
pub const THERMAL_TAIL: f64 = 1e-6;

/// n̄ = R/(1 − R) for a red/blue sideband excitation ratio R.
pub fn sideband_ratio_to_nbar(ratio: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&ratio) {
        return Err(Error::OutOfRange {
            value: ratio,
            reason: "sideband ratio must lie in [0, 1)".into(),
        });
    }
    Ok(ratio / (1.0 - ratio))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NbarEstimate {
    pub ratio: f64,
    pub nbar: f64,
    pub nbar_sd: f64,
}

/// n̄ from red and blue sideband counts of `shots` repetitions each, with
/// binomial error propagation.
pub fn sideband_nbar_from_counts(red: u64, blue: u64, shots: u64) -> Result<NbarEstimate> {
    if shots == 0 || red > shots || blue > shots {
        return Err(Error::parameter(
            "shots",
            "counts must not exceed a positive shot number",
        ));
    }
    if blue == 0 {
        return Err(Error::OutOfRange {
            value: 0.0,
            reason: "blue sideband excitation is zero".into(),
        });
    }
    let n = shots as f64;
    let (pr, pb) = (red as f64 / n, blue as f64 / n);
    let ratio = pr / pb;
    let nbar = sideband_ratio_to_nbar(ratio)?;
    // shot noise floor keeps zero-count points from claiming zero error
    let var = |p: f64| (p * (1.0 - p)).max(0.25 / n) / n;
    let sr = (var(pr) / (pb * pb) + ratio * ratio * var(pb) / (pb * pb)).sqrt();
    Ok(NbarEstimate {
        ratio,
        nbar,
        nbar_sd: sr / ((1.0 - ratio) * (1.0 - ratio)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransitionKind {
    Carrier,
    RedSideband,
    BlueSideband,
    MicromotionSideband,
}

impl TransitionKind {
    fn order(self) -> Result<i32> {
        match self {
            TransitionKind::Carrier => Ok(0),
            TransitionKind::RedSideband => Ok(-1),
            TransitionKind::BlueSideband => Ok(1),
            TransitionKind::MicromotionSideband => Err(Error::parameter(
                "kind",
                "micromotion sidebands have no motional Fock structure; use fit_rabi_frequency",
            )),
        }
    }
}

/// Lamb-Dicke parameter η = k cos θ √(ħ/(2mω)) for a probe at angle θ to the
/// motional axis.
pub fn lamb_dicke(species: &IonSpecies, omega: f64, angle_rad: f64) -> f64 {
    let k = 2.0 * PI / species.wavelength();
    k * angle_rad.cos().abs() * (HBAR / (2.0 * species.mass() * omega)).sqrt()
}

fn check_eta(eta: f64) -> Result<()> {
    if !(eta >= 0.0) {
        return Err(Error::parameter("eta", "must be non-negative"));
    }
    if eta >= 1.0 {
        return Err(Error::Regime(format!(
            "Lamb-Dicke parameter {eta} is outside the Lamb-Dicke regime (η < 1)"
        )));
    }
    Ok(())
}

/// Fock-state cutoff so that the thermal tail beyond it is below
/// [`THERMAL_TAIL`].
pub fn fock_cutoff(nbar: f64) -> usize {
    if nbar <= 0.0 {
        return 0;
    }
    let r = nbar / (nbar + 1.0);
    // r^(n+1) < tail
    ((THERMAL_TAIL.ln() / r.ln()).ceil() as usize).saturating_sub(1) + 1
}

fn thermal_weights(nbar: f64) -> Vec<f64> {
    let n_max = fock_cutoff(nbar);
    let r = nbar / (nbar + 1.0);
    let mut p = Vec::with_capacity(n_max + 1);
    let mut w = 1.0 / (nbar + 1.0);
    for _ in 0..=n_max {
        p.push(w);
        w *= r;
    }
    p
}

/// Generalized Laguerre polynomials L_k^α(x) for k = 0..=n.
fn laguerre(n: usize, alpha: f64, x: f64) -> Vec<f64> {
    let mut l = Vec::with_capacity(n + 1);
    l.push(1.0);
    if n >= 1 {
        l.push(1.0 + alpha - x);
    }
    for k in 1..n {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 + alpha - x) * l[k] - (kf + alpha) * l[k - 1]) / (kf + 1.0);
        l.push(next);
    }
    l
}

/// Rabi frequencies Ω_{n,n+s}/Ω₀ for n = 0..=n_max; s = 0 or ±1. For the
/// red sideband entry n couples n → n−1 (entry 0 is zero).
fn relative_rabi(n_max: usize, eta: f64, order: i32) -> Vec<f64> {
    let x = eta * eta;
    let dw = (-x / 2.0).exp();
    match order {
        0 => laguerre(n_max, 0.0, x).into_iter().map(|l| dw * l).collect(),
        1 => laguerre(n_max, 1.0, x)
            .into_iter()
            .enumerate()
            .map(|(n, l)| dw * eta * l / ((n + 1) as f64).sqrt())
            .collect(),
        _ => {
            let l = laguerre(n_max.max(1), 1.0, x);
            (0..=n_max)
                .map(|n| {
                    if n == 0 {
                        0.0
                    } else {
                        dw * eta * l[n - 1] / (n as f64).sqrt()
                    }
                })
                .collect()
        }
    }
}

/// Precomputed thermal Fock sum for a fixed (n̄, η, order).
struct FockSum {
    weights: Vec<f64>,
    rel: Vec<f64>,
    /// Red sidebands have no n = 0 term.
    start: usize,
}

impl FockSum {
    fn new(nbar: f64, eta: f64, order: i32) -> Self {
        let weights = thermal_weights(nbar);
        let rel = relative_rabi(weights.len() - 1, eta, order);
        Self {
            weights,
            rel,
            start: usize::from(order == -1),
        }
    }

    /// Thermal mean of |Ω_n|/Ω₀.
    fn mean_relative(&self) -> f64 {
        let w: f64 = self.weights[self.start..].iter().sum();
        let s: f64 = (self.start..self.weights.len())
            .map(|n| self.weights[n] * self.rel[n].abs())
            .sum();
        if w > 0.0 {
            s / w
        } else {
            0.0
        }
    }

    fn excitation(&self, t_us: f64, omega0: f64, t2_us: Option<f64>) -> f64 {
        let t = t_us * 1e-6;
        let envelope = t2_us.map_or(1.0, |t2| (-t_us / t2).exp());
        let mut p = 0.0;
        for n in self.start..self.weights.len() {
            let c = (self.rel[n] * omega0 * t).cos();
            p += self.weights[n] * 0.5 * (1.0 - envelope * c);
        }
        p.clamp(0.0, 1.0)
    }
}

/// Thermally averaged excitation probability after a pulse of `t_us`.
pub fn thermal_rabi(t_us: f64, omega0: f64, nbar: f64, eta: f64, kind: TransitionKind) -> Result<f64> {
    check_eta(eta)?;
    if !(nbar >= 0.0 && nbar.is_finite()) {
        return Err(Error::parameter("nbar", "must be non-negative"));
    }
    if t_us < 0.0 {
        return Err(Error::parameter("t_us", "must be non-negative"));
    }
    let order = kind.order()?;
    if order == -1 && nbar == 0.0 {
        return Ok(0.0);
    }
    Ok(FockSum::new(nbar, eta, order).excitation(t_us, omega0, None))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RabiTrace {
    pub times_us: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub shots: Vec<u32>,
    pub kind: TransitionKind,
}

impl RabiTrace {
    pub fn validate(&self) -> Result<()> {
        let n = self.times_us.len();
        if self.probabilities.len() != n || self.shots.len() != n {
            return Err(Error::parameter(
                "trace",
                "times, probabilities and shots differ in length",
            ));
        }
        if self.times_us.iter().any(|t| !(*t >= 0.0)) || self.times_us.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::parameter(
                "times_us",
                "must be non-negative and strictly increasing",
            ));
        }
        if self.probabilities.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::parameter("probabilities", "must lie in [0, 1]"));
        }
        if self.shots.contains(&0) {
            return Err(Error::parameter("shots", "must be positive"));
        }
        Ok(())
    }

    /// Binomial standard errors with a half-count floor.
    fn sigmas(&self) -> Vec<f64> {
        self.probabilities
            .iter()
            .zip(&self.shots)
            .map(|(p, n)| {
                let n = *n as f64;
                let q = (p * n + 0.5) / (n + 1.0);
                (q * (1.0 - q) / n).sqrt()
            })
            .collect()
    }

    /// Reads `t_us,p,shots` CSV; lines starting with `#` are skipped.
    pub fn read_csv<R: BufRead>(r: R, kind: TransitionKind) -> Result<Self> {
        let rows = read_numeric_csv(r, 3)?;
        Ok(Self {
            times_us: rows.iter().map(|v| v[0]).collect(),
            probabilities: rows.iter().map(|v| v[1]).collect(),
            shots: rows.iter().map(|v| v[2] as u32).collect(),
            kind,
        })
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t_us,p,shots")?;
        for i in 0..self.times_us.len() {
            writeln!(w, "{},{},{}", self.times_us[i], self.probabilities[i], self.shots[i])?;
        }
        Ok(())
    }
}

fn read_numeric_csv<R: BufRead>(r: R, cols: usize) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::io("csv input", e))?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let vals: std::result::Result<Vec<f64>, _> = t.split(',').map(|s| s.trim().parse::<f64>()).collect();
        match vals {
            Ok(v) if v.len() >= cols => rows.push(v),
            // header line
            Err(_) if rows.is_empty() => continue,
            _ => {
                return Err(Error::Config(format!(
                    "line {}: expected {cols} numeric columns",
                    i + 1
                )))
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RabiFitOptions {
    /// Fixed coherence-time envelope; `None` disables it.
    pub t2_us: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermalRabiFit {
    pub omega0: f64,
    pub omega0_sd: f64,
    pub nbar: f64,
    pub nbar_sd: f64,
    pub chi2: f64,
    pub reduced_chi2: f64,
    pub iterations: usize,
    /// n̄ is a projection onto the probed axis when all modes overlap the beam.
    pub projected: bool,
}

fn lm_options(lower: Vec<f64>) -> LmOptions {
    LmOptions {
        max_iter: 200,
        fd_rel_step: 1e-7,
        tol: 1e-10,
        lower,
    }
}

/// Log-spaced trial frequencies resolvable by the trace sampling.
fn frequency_grid(times_us: &[f64], points: usize) -> Vec<f64> {
    let t_max = times_us.last().copied().unwrap_or(1.0) * 1e-6;
    let dt = times_us.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min) * 1e-6;
    let lo = PI / t_max;
    let hi = PI / dt;
    (0..points)
        .map(|i| lo * (hi / lo).powf(i as f64 / (points - 1) as f64))
        .collect()
}

/// Weighted fit of (Ω₀, n̄) with η fixed.
pub fn fit_thermal_rabi(trace: &RabiTrace, eta: f64, opts: &RabiFitOptions) -> Result<ThermalRabiFit> {
    trace.validate()?;
    check_eta(eta)?;
    let order = trace.kind.order()?;
    let n = trace.times_us.len();
    if n < 10 {
        return Err(Error::Fit(format!("need at least 10 points, got {n}")));
    }
    let sig = trace.sigmas();
    let model = |p: &[f64]| -> Vec<f64> {
        let fs = FockSum::new(p[1].max(0.0), eta, order);
        trace
            .times_us
            .iter()
            .map(|t| fs.excitation(*t, p[0], opts.t2_us))
            .collect()
    };
    let chi2_of = |p: &[f64]| -> f64 {
        model(p)
            .iter()
            .zip(&trace.probabilities)
            .zip(&sig)
            .map(|((m, d), s)| ((m - d) / s).powi(2))
            .sum()
    };

    let mut best = (f64::INFINITY, [0.0, 0.0]);
    for om in frequency_grid(&trace.times_us, 120) {
        for nb in [0.0, 0.5, 2.0, 5.0, 10.0, 20.0, 40.0] {
            // scan the effective frequency, convert to Ω₀
            let rel = FockSum::new(nb, eta, order).mean_relative().max(1e-6);
            let p = [om / rel, nb];
            let c = chi2_of(&p);
            if c < best.0 {
                best = (c, p);
            }
        }
    }

    let fit = levenberg_marquardt(
        |p| {
            Ok(model(p)
                .iter()
                .zip(&trace.probabilities)
                .zip(&sig)
                .map(|((m, d), s)| (m - d) / s)
                .collect())
        },
        &best.1,
        &lm_options(vec![0.0, 0.0]),
    )?;
    let (omega0, nbar) = (fit.params[0], fit.params[1]);
    let eff = omega0 * FockSum::new(nbar, eta, order).mean_relative();
    let t_max = trace.times_us[n - 1] * 1e-6;
    if eff * t_max < 2.0 * PI {
        return Err(Error::UnderResolved(format!(
            "effective Rabi frequency {:.3e} rad/s completes less than one period in {:.3} µs",
            eff,
            trace.times_us[n - 1]
        )));
    }
    Ok(ThermalRabiFit {
        omega0,
        omega0_sd: fit.covariance[(0, 0)].sqrt(),
        nbar,
        nbar_sd: fit.covariance[(1, 1)].sqrt(),
        chi2: fit.chi2,
        reduced_chi2: fit.chi2 / (n - 2) as f64,
        iterations: fit.iterations,
        projected: true,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RabiFrequencyFit {
    pub omega: f64,
    pub omega_sd: f64,
    pub amplitude: f64,
    pub amplitude_sd: f64,
    pub reduced_chi2: f64,
}

/// Fits p = (A/2)(1 − e^(−t/T₂) cos Ωt) to any trace, including
/// micromotion sidebands.
pub fn fit_rabi_frequency(trace: &RabiTrace, opts: &RabiFitOptions) -> Result<RabiFrequencyFit> {
    trace.validate()?;
    let n = trace.times_us.len();
    if n < 10 {
        return Err(Error::Fit(format!("need at least 10 points, got {n}")));
    }
    let sig = trace.sigmas();
    let shape = |om: f64, t_us: f64| {
        let env = opts.t2_us.map_or(1.0, |t2| (-t_us / t2).exp());
        0.5 * (1.0 - env * (om * t_us * 1e-6).cos())
    };
    let mut best = (f64::INFINITY, [1.0, 1.0]);
    for om in frequency_grid(&trace.times_us, 400) {
        // amplitude is linear: closed-form weighted estimate
        let (mut num, mut den) = (0.0, 0.0);
        for ((t, p), sg) in trace.times_us.iter().zip(&trace.probabilities).zip(&sig) {
            let s = shape(om, *t);
            let w = 1.0 / (sg * sg);
            num += w * s * p;
            den += w * s * s;
        }
        let a = if den > 0.0 { (num / den).clamp(0.0, 1.0) } else { 0.0 };
        let c: f64 = (0..n)
            .map(|i| ((a * shape(om, trace.times_us[i]) - trace.probabilities[i]) / sig[i]).powi(2))
            .sum();
        if c < best.0 {
            best = (c, [a.max(1e-3), om]);
        }
    }
    let fit = levenberg_marquardt(
        |p| {
            Ok((0..n)
                .map(|i| (p[0] * shape(p[1], trace.times_us[i]) - trace.probabilities[i]) / sig[i])
                .collect())
        },
        &best.1,
        &lm_options(vec![0.0, 0.0]),
    )?;
    let omega = fit.params[1];
    if omega * trace.times_us[n - 1] * 1e-6 < 2.0 * PI {
        return Err(Error::UnderResolved(format!(
            "Rabi frequency {omega:.3e} rad/s completes less than one period in {:.3} µs",
            trace.times_us[n - 1]
        )));
    }
    Ok(RabiFrequencyFit {
        omega,
        omega_sd: fit.covariance[(1, 1)].sqrt(),
        amplitude: fit.params[0],
        amplitude_sd: fit.covariance[(0, 0)].sqrt(),
        reduced_chi2: fit.chi2 / (n - 2) as f64,
    })
}

/// β = 2Ω_M/Ω_Q, valid for small modulation index.
pub fn modulation_index_from_rabi(omega_m: f64, omega_q: f64) -> Result<f64> {
    if !(omega_q > 0.0) {
        return Err(Error::parameter("omega_q", "carrier Rabi frequency must be positive"));
    }
    if !(omega_m >= 0.0) {
        return Err(Error::parameter("omega_m", "must be non-negative"));
    }
    Ok(2.0 * omega_m / omega_q)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatingSeries {
    pub t_w_ms: Vec<f64>,
    pub nbar: Vec<f64>,
    pub sigma: Vec<f64>,
    pub mode: String,
    /// n̄ is the projection of all modes onto the probed axis.
    #[serde(default)]
    pub projected: bool,
}

impl HeatingSeries {
    /// Reads `t_w_ms,nbar,sigma` CSV.
    pub fn read_csv<R: BufRead>(r: R, mode: &str) -> Result<Self> {
        let rows = read_numeric_csv(r, 3)?;
        Ok(Self {
            t_w_ms: rows.iter().map(|v| v[0]).collect(),
            nbar: rows.iter().map(|v| v[1]).collect(),
            sigma: rows.iter().map(|v| v[2]).collect(),
            mode: mode.into(),
            projected: false,
        })
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t_w_ms,nbar,sigma")?;
        for i in 0..self.t_w_ms.len() {
            writeln!(w, "{},{},{}", self.t_w_ms[i], self.nbar[i], self.sigma[i])?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatingRateFit {
    pub mode: String,
    pub rate_per_s: f64,
    pub rate_sd_per_s: f64,
    pub intercept: f64,
    pub intercept_sd: f64,
    pub chi2: f64,
    pub reduced_chi2: f64,
    pub projected: bool,
}

pub fn fit_heating_rate(series: &HeatingSeries) -> Result<HeatingRateFit> {
    let n = series.t_w_ms.len();
    if series.nbar.len() != n || series.sigma.len() != n {
        return Err(Error::parameter("series", "column lengths differ"));
    }
    if series.nbar.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::parameter("nbar", "must be non-negative"));
    }
    let mut distinct = series.t_w_ms.clone();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::Fit(format!(
            "need at least 3 distinct waiting times, got {}",
            distinct.len()
        )));
    }
    let t_s: Vec<f64> = series.t_w_ms.iter().map(|t| t * 1e-3).collect();
    let f = weighted_line(&t_s, &series.nbar, &series.sigma)?;
    Ok(HeatingRateFit {
        mode: series.mode.clone(),
        rate_per_s: f.slope,
        rate_sd_per_s: f.slope_se,
        intercept: f.intercept,
        intercept_sd: f.intercept_se,
        chi2: f.chi2,
        reduced_chi2: f.reduced_chi2,
        projected: series.projected,
    })
}

/// Binomially sampled thermal Rabi trace.
pub fn synthetic_rabi_trace<R: Rng>(
    rng: &mut R,
    times_us: &[f64],
    omega0: f64,
    nbar: f64,
    eta: f64,
    kind: TransitionKind,
    shots: u32,
) -> Result<RabiTrace> {
    let mut p = Vec::with_capacity(times_us.len());
    for t in times_us {
        let exact = thermal_rabi(*t, omega0, nbar, eta, kind)?;
        p.push(sample_fraction(rng, exact, shots)?);
    }
    Ok(RabiTrace {
        times_us: times_us.to_vec(),
        probabilities: p,
        shots: vec![shots; times_us.len()],
        kind,
    })
}

/// Noise-free thermal Rabi trace.
pub fn exact_rabi_trace(
    times_us: &[f64],
    omega0: f64,
    nbar: f64,
    eta: f64,
    kind: TransitionKind,
    shots: u32,
) -> Result<RabiTrace> {
    Ok(RabiTrace {
        times_us: times_us.to_vec(),
        probabilities: times_us
            .iter()
            .map(|t| thermal_rabi(*t, omega0, nbar, eta, kind))
            .collect::<Result<_>>()?,
        shots: vec![shots; times_us.len()],
        kind,
    })
}

fn sample_fraction<R: Rng>(rng: &mut R, p: f64, shots: u32) -> Result<f64> {
    let b = Binomial::new(shots as u64, p.clamp(0.0, 1.0)).map_err(|e| Error::parameter("p", e.to_string()))?;
    Ok(b.sample(rng) as f64 / shots as f64)
}

/// Red and blue sideband counts at pulse time `t_us` for a thermal state.
pub fn synthetic_sideband_counts<R: Rng>(
    rng: &mut R,
    nbar: f64,
    eta: f64,
    omega0: f64,
    t_us: f64,
    shots: u32,
) -> Result<(u64, u64)> {
    let pr = thermal_rabi(t_us, omega0, nbar, eta, TransitionKind::RedSideband)?;
    let pb = thermal_rabi(t_us, omega0, nbar, eta, TransitionKind::BlueSideband)?;
    let draw = |rng: &mut R, p: f64| -> Result<u64> {
        Ok(Binomial::new(shots as u64, p)
            .map_err(|e| Error::parameter("p", e.to_string()))?
            .sample(rng))
    };
    let r = draw(rng, pr)?;
    let b = draw(rng, pb)?;
    Ok((r, b))
}

/// Heating series n̄(t) = n₀ + ṅ t observed through `samples` noisy
/// repetitions per waiting time. Each point is the sample mean and σ its
/// standard error.
#[allow(clippy::too_many_arguments)]
pub fn synthetic_heating_series<R: Rng>(
    rng: &mut R,
    rate_per_s: f64,
    n0: f64,
    t_w_ms: &[f64],
    relative_noise: f64,
    absolute_noise: f64,
    samples: usize,
    mode: &str,
) -> Result<HeatingSeries> {
    if samples < 2 {
        return Err(Error::parameter("samples", "need at least 2 samples per point"));
    }
    let mut nbar = Vec::new();
    let mut sigma = Vec::new();
    for t in t_w_ms {
        let truth = n0 + rate_per_s * t * 1e-3;
        let sd = absolute_noise + relative_noise * truth;
        let normal = Normal::new(truth, sd).map_err(|e| Error::parameter("noise", e.to_string()))?;
        let draws: Vec<f64> = (0..samples).map(|_| normal.sample(rng).max(0.0)).collect();
        let mean = draws.iter().sum::<f64>() / samples as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (samples - 1) as f64;
        nbar.push(mean);
        sigma.push((var / samples as f64).sqrt());
    }
    Ok(HeatingSeries {
        t_w_ms: t_w_ms.to_vec(),
        nbar,
        sigma,
        mode: mode.into(),
        projected: false,
    })
}

/// Carrier and micromotion-sideband traces for a modulation index β; the
/// carrier is scaled by J₀(β) and the sideband by J₁(β). Motion is frozen
/// (n̄ = 0, η = 0).
pub fn synthetic_micromotion_pair<R: Rng>(
    rng: &mut R,
    omega0: f64,
    beta: f64,
    carrier_times_us: &[f64],
    sideband_times_us: &[f64],
    shots: u32,
) -> Result<(RabiTrace, RabiTrace)> {
    let oq = omega0 * libm::j0(beta).abs();
    let om = omega0 * libm::j1(beta).abs();
    let make = |rng: &mut R, times: &[f64], om: f64, kind| -> Result<RabiTrace> {
        let mut p = Vec::new();
        for t in times {
            p.push(sample_fraction(rng, (om * t * 1e-6 / 2.0).sin().powi(2), shots)?);
        }
        Ok(RabiTrace {
            times_us: times.to_vec(),
            probabilities: p,
            shots: vec![shots; times.len()],
            kind,
        })
    };
    let c = make(rng, carrier_times_us, oq, TransitionKind::Carrier)?;
    let m = make(rng, sideband_times_us, om, TransitionKind::MicromotionSideband)?;
    Ok((c, m))
}

/// Ground-state spread √(ħ/(2mω)) in µm.
pub fn zero_point_um(species: &IonSpecies, omega: f64) -> f64 {
    (HBAR / (2.0 * species.mass() * omega)).sqrt() / MICRON
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::{khz_to_angular, mhz_to_angular};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ratio_closed_forms() {
        assert_eq!(sideband_ratio_to_nbar(0.0).unwrap(), 0.0);
        assert!((sideband_ratio_to_nbar(0.5).unwrap() - 1.0).abs() < 1e-15);
        assert!((sideband_ratio_to_nbar(0.9).unwrap() - 9.0).abs() < 1e-12);
        assert!(matches!(sideband_ratio_to_nbar(1.0), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn laguerre_matches_explicit_forms() {
        let x = 0.3;
        let l = laguerre(3, 1.0, x);
        assert!((l[2] - (x * x / 2.0 - 3.0 * x + 3.0)).abs() < 1e-14);
        let l0 = laguerre(2, 0.0, x);
        assert!((l0[2] - (x * x / 2.0 - 2.0 * x + 1.0)).abs() < 1e-14);
    }

    #[test]
    fn rabi_edge_cases() {
        let om = khz_to_angular(50.0);
        assert_eq!(thermal_rabi(0.0, om, 5.0, 0.1, TransitionKind::Carrier).unwrap(), 0.0);
        for t in [1.0, 7.0, 33.0] {
            assert_eq!(thermal_rabi(t, om, 0.0, 0.1, TransitionKind::RedSideband).unwrap(), 0.0);
        }
        // ground state carrier: single Fock term, Debye-Waller-reduced
        let eff = om * (-0.005f64).exp();
        let t_pi = PI / eff * 1e6;
        assert!((thermal_rabi(t_pi, om, 0.0, 0.1, TransitionKind::Carrier).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(
            thermal_rabi(1.0, om, 1.0, 1.0, TransitionKind::Carrier),
            Err(Error::Regime(_))
        ));
    }

    #[test]
    fn fock_cutoff_bounds_tail() {
        for nbar in [0.1, 1.0, 15.0, 60.0] {
            let n = fock_cutoff(nbar);
            let r: f64 = nbar / (nbar + 1.0);
            assert!(r.powi(n as i32 + 1) < THERMAL_TAIL);
        }
    }

    #[test]
    fn noiseless_fit_recovers_parameters() {
        let om = khz_to_angular(50.0);
        let times: Vec<f64> = (1..=60).map(|i| i as f64 * 1.5).collect();
        let tr = exact_rabi_trace(&times, om, 15.0, 0.1, TransitionKind::Carrier, 100).unwrap();
        let f = fit_thermal_rabi(&tr, 0.1, &RabiFitOptions::default()).unwrap();
        assert!(((f.omega0 - om) / om).abs() < 1e-6, "{}", f.omega0 / om);
        assert!(((f.nbar - 15.0) / 15.0).abs() < 1e-6, "{}", f.nbar);
    }

    #[test]
    fn slow_trace_is_under_resolved() {
        let om = khz_to_angular(1.0);
        let times: Vec<f64> = (1..=20).map(|i| i as f64 * 10.0).collect();
        let tr = exact_rabi_trace(&times, om, 0.0, 0.0, TransitionKind::Carrier, 100).unwrap();
        assert!(matches!(
            fit_rabi_frequency(&tr, &RabiFitOptions::default()),
            Err(Error::UnderResolved(_))
        ));
    }

    #[test]
    fn heating_fit_rejects_bad_weights() {
        let s = HeatingSeries {
            t_w_ms: vec![0.0, 1.0, 2.0],
            nbar: vec![1.0, 2.0, 3.0],
            sigma: vec![0.1, 0.0, 0.1],
            mode: "z".into(),
            projected: false,
        };
        assert!(matches!(fit_heating_rate(&s), Err(Error::Weighting(_))));
    }

    #[test]
    fn micromotion_ratio_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let beta = 0.1;
        let om = khz_to_angular(100.0);
        let tq: Vec<f64> = (1..=40).map(|i| i as f64 * 0.5).collect();
        let tm: Vec<f64> = (1..=40).map(|i| i as f64 * 10.0).collect();
        let (c, m) = synthetic_micromotion_pair(&mut rng, om, beta, &tq, &tm, 1000).unwrap();
        let fq = fit_rabi_frequency(&c, &RabiFitOptions::default()).unwrap();
        let fm = fit_rabi_frequency(&m, &RabiFitOptions::default()).unwrap();
        let b = modulation_index_from_rabi(fm.omega, fq.omega).unwrap();
        assert!((b - beta).abs() / beta < 0.05, "{b}");
    }

    #[test]
    fn lamb_dicke_scale() {
        let eta = lamb_dicke(&IonSpecies::calcium40(), mhz_to_angular(1.5), 0.0);
        assert!(eta > 0.05 && eta < 0.1, "{eta}");
    }
}
