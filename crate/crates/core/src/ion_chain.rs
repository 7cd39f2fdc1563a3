//! Linear ion crystals along the trap axis: equilibrium positions and axial
//! normal modes.
//!
//! Energies are in eV and positions in µm. The Coulomb energy of two
//! elementary charges a distance `d` µm apart is `coulomb_ev_um() / d`.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::constants::{angular_to_mhz, COULOMB_K, ELEMENTARY_CHARGE, EPSILON_0, MICRON};
use crate::error::{Error, Result};
use crate::numerics::spline::CubicSpline;
use crate::trap_model::{Axis, IonSpecies, PotentialMap};

pub const MAX_IONS: usize = 20;

/// q²/(4πε₀) in eV·µm for the given species.
pub fn coulomb_ev_um(species: &IonSpecies) -> f64 {
    COULOMB_K * species.charge() * species.charge() / ELEMENTARY_CHARGE / MICRON
}

/// Two-ion spacing δz = (q²/(2πε₀ m ω²))^(1/3), in µm.
pub fn two_ion_spacing(omega_z: f64, species: &IonSpecies) -> Result<f64> {
    if !(omega_z > 0.0 && omega_z.is_finite()) {
        return Err(Error::parameter("omega_z", "must be positive"));
    }
    let q = species.charge();
    let d = (q * q / (2.0 * PI * EPSILON_0 * species.mass() * omega_z * omega_z)).cbrt();
    Ok(d / MICRON)
}

/// Length scale ℓ = (q²/(4πε₀ m ω²))^(1/3) in µm.
pub fn length_scale(omega_z: f64, species: &IonSpecies) -> f64 {
    let q = species.charge();
    (COULOMB_K * q * q / (species.mass() * omega_z * omega_z)).cbrt() / MICRON
}

/// Curvature in eV/µm² of a harmonic well with angular frequency `omega`.
fn curvature_ev_um2(omega: f64, species: &IonSpecies) -> f64 {
    species.mass() * omega * omega * MICRON * MICRON / species.charge()
}

/// Axial potential energy of a single ion, U(z) in eV.
#[derive(Debug, Clone)]
pub enum AxialPotential {
    Harmonic { omega: f64, z0_um: f64 },
    Map(CubicSpline),
}

impl AxialPotential {
    pub fn harmonic(omega: f64) -> Self {
        AxialPotential::Harmonic { omega, z0_um: 0.0 }
    }

    /// Interpolates the total trap potential of an axial scan.
    pub fn from_map(map: &PotentialMap, species: &IonSpecies) -> Result<Self> {
        if map.axis != Some(Axis::Z) {
            return Err(Error::parameter("map", "chain potentials need a scan along z"));
        }
        let u: Vec<f64> = map.total.iter().map(|v| v * species.charge_e).collect();
        Ok(AxialPotential::Map(CubicSpline::new(map.coords_um.clone(), u)?))
    }

    /// Energy, slope and curvature at `z_um`.
    pub fn eval(&self, z_um: f64, species: &IonSpecies) -> Result<(f64, f64, f64)> {
        match self {
            AxialPotential::Harmonic { omega, z0_um } => {
                let k = curvature_ev_um2(*omega, species);
                let d = z_um - z0_um;
                Ok((0.5 * k * d * d, k * d, k))
            }
            AxialPotential::Map(s) => {
                let (lo, hi) = s.domain();
                if z_um < lo || z_um > hi {
                    return Err(Error::OutOfRange {
                        value: z_um,
                        reason: format!("ion left the sampled range [{lo}, {hi}] µm"),
                    });
                }
                Ok(s.eval(z_um))
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            AxialPotential::Harmonic { omega, .. } if !(*omega > 0.0) => {
                Err(Error::parameter("omega_z", "must be positive"))
            }
            _ => Ok(()),
        }
    }

    /// Location and curvature of the single-ion minimum.
    fn well(&self, species: &IonSpecies) -> Result<(f64, f64)> {
        match self {
            AxialPotential::Harmonic { omega, z0_um } => Ok((*z0_um, curvature_ev_um2(*omega, species))),
            AxialPotential::Map(s) => {
                let (lo, hi) = s.domain();
                let n = 400;
                let mut best = (f64::INFINITY, 0.5 * (lo + hi));
                for i in 0..=n {
                    let z = lo + (hi - lo) * i as f64 / n as f64;
                    let u = s.eval(z).0;
                    if u < best.0 {
                        best = (u, z);
                    }
                }
                let mut z = best.1;
                for _ in 0..50 {
                    let (_, d1, d2) = s.eval(z);
                    if d2 <= 0.0 {
                        break;
                    }
                    let step = d1 / d2;
                    z = (z - step).clamp(lo, hi);
                    if step.abs() < 1e-12 {
                        break;
                    }
                }
                let k = s.eval(z).2;
                if !(k > 0.0) {
                    return Err(Error::AntiConfinement {
                        axis: "z".into(),
                        curvature: k,
                    });
                }
                Ok((z, k))
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct IonChain {
    pub positions_um: Vec<f64>,
    pub species: IonSpecies,
    pub potential: AxialPotential,
    pub energy_ev: f64,
    /// Largest residual force on any ion, eV/µm.
    pub max_force_ev_um: f64,
    pub iterations: usize,
}

impl IonChain {
    pub fn len(&self) -> usize {
        self.positions_um.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions_um.is_empty()
    }

    pub fn energy(&self, positions_um: &[f64]) -> Result<f64> {
        chain_energy(positions_um, &self.potential, &self.species)
    }
}

pub fn chain_energy(z: &[f64], potential: &AxialPotential, species: &IonSpecies) -> Result<f64> {
    let c = coulomb_ev_um(species);
    let mut e = 0.0;
    for (i, zi) in z.iter().enumerate() {
        e += potential.eval(*zi, species)?.0;
        for zj in &z[i + 1..] {
            e += c / (zi - zj).abs();
        }
    }
    Ok(e)
}

fn gradient_hessian(
    z: &[f64],
    potential: &AxialPotential,
    species: &IonSpecies,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = z.len();
    let c = coulomb_ev_um(species);
    let mut g = DVector::zeros(n);
    let mut h = DMatrix::zeros(n, n);
    for i in 0..n {
        let (_, d1, d2) = potential.eval(z[i], species)?;
        g[i] += d1;
        h[(i, i)] += d2;
        for j in 0..n {
            if i == j {
                continue;
            }
            let d = z[i] - z[j];
            let a = d.abs();
            g[i] -= c * d.signum() / (a * a);
            let k = 2.0 * c / (a * a * a);
            h[(i, i)] += k;
            h[(i, j)] -= k;
        }
    }
    Ok((g, h))
}

/// Equilibrium of `n` ions in `potential`, found by damped Newton iteration
/// from a scaled uniform guess.
pub fn equilibrium_positions(n: usize, potential: &AxialPotential, species: &IonSpecies) -> Result<IonChain> {
    if n == 0 || n > MAX_IONS {
        return Err(Error::parameter("n_ions", format!("must be in 1..={MAX_IONS}")));
    }
    species.validate()?;
    potential.validate()?;
    let (z0, k) = potential.well(species)?;
    let c = coulomb_ev_um(species);
    // ℓ from the local curvature: k ℓ³ = c
    let ell = (c / k).cbrt();
    let spacing = 2.018 * ell * (n as f64).powf(-0.559);
    let mut z: Vec<f64> = (0..n)
        .map(|i| z0 + spacing * (i as f64 - 0.5 * (n as f64 - 1.0)))
        .collect();

    let force_scale = c / (ell * ell);
    let tol = 1e-10 * force_scale;
    let mut energy = chain_energy(&z, potential, species)?;
    let mut trace = Vec::new();
    for it in 0..200 {
        let (g, h) = gradient_hessian(&z, potential, species)?;
        let gmax = g.amax();
        trace.push(format!(
            "iter {it}: max force {gmax:.3e} eV/µm, energy {energy:.12e} eV"
        ));
        if gmax < tol {
            return Ok(IonChain {
                positions_um: z,
                species: *species,
                potential: potential.clone(),
                energy_ev: energy,
                max_force_ev_um: gmax,
                iterations: it,
            });
        }
        let step = match h.clone().cholesky() {
            Some(ch) => -ch.solve(&g),
            None => -&g / h.diagonal().amax().max(k),
        };
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial: Vec<f64> = z.iter().zip(step.iter()).map(|(a, s)| a + t * s).collect();
            let ordered = trial.windows(2).all(|w| w[1] > w[0]);
            if ordered {
                if let Ok(e) = chain_energy(&trial, potential, species) {
                    if e <= energy + 1e-4 * t * g.dot(&step) || (e - energy).abs() <= 1e-15 * energy.abs().max(c / ell)
                    {
                        z = trial;
                        energy = e;
                        accepted = true;
                        break;
                    }
                }
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(Error::Optimization {
                iterations: it,
                reason: "line search failed to reduce the chain energy".into(),
                trace,
            });
        }
    }
    Err(Error::Optimization {
        iterations: 200,
        reason: "chain forces did not converge".into(),
        trace,
    })
}

/// Axial normal-mode angular frequencies (rad/s), ascending.
pub fn normal_modes(chain: &IonChain) -> Result<Vec<f64>> {
    let (_, h) = gradient_hessian(&chain.positions_um, &chain.potential, &chain.species)?;
    let eig = SymmetricEigen::new(h);
    let mut lambda: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    lambda.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if let Some(&l) = lambda.iter().find(|l| **l <= 0.0) {
        return Err(Error::Stability(format!(
            "axial Hessian has non-positive eigenvalue {l:.4e} eV/µm²"
        )));
    }
    // eV/µm² -> J/m², then ω² = λ/m
    let scale = chain.species.charge() / (MICRON * MICRON) / chain.species.mass();
    Ok(lambda.iter().map(|l| (l * scale).sqrt()).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainReport {
    pub n_ions: usize,
    pub positions_um: Vec<f64>,
    #[serde(rename = "modes_MHz")]
    pub modes_mhz: Vec<f64>,
    pub max_force_ev_per_um: f64,
}

impl ChainReport {
    pub fn new(chain: &IonChain) -> Result<Self> {
        let modes = normal_modes(chain)?;
        Ok(Self {
            n_ions: chain.len(),
            positions_um: chain.positions_um.clone(),
            modes_mhz: modes.iter().map(|w| angular_to_mhz(*w)).collect(),
            max_force_ev_per_um: chain.max_force_ev_um,
        })
    }
}

/// Chain positions and modes over a list of axial frequencies, one CSV row
/// per (ω_z, ion).
pub fn write_omega_sweep_csv<W: Write>(mut w: W, n: usize, omegas: &[f64], species: &IonSpecies) -> Result<()> {
    let io = |e| Error::io("chain sweep", e);
    writeln!(w, "omega_z_MHz,ion,z_um,mode_MHz").map_err(io)?;
    for &om in omegas {
        let chain = equilibrium_positions(n, &AxialPotential::harmonic(om), species)?;
        let modes = normal_modes(&chain)?;
        for (i, (z, m)) in chain.positions_um.iter().zip(&modes).enumerate() {
            writeln!(w, "{:.6},{},{:.9},{:.9}", angular_to_mhz(om), i, z, angular_to_mhz(*m)).map_err(io)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::mhz_to_angular;

    fn ca() -> IonSpecies {
        IonSpecies::calcium40()
    }

    #[test]
    fn spacing_at_axial_frequency() {
        let d = two_ion_spacing(mhz_to_angular(1.517), &ca()).unwrap();
        assert!((d - 4.25).abs() < 0.01, "{d}");
        let d2 = two_ion_spacing(mhz_to_angular(1.517 / 2.0), &ca()).unwrap();
        assert!((d2 / d - 2f64.powf(2.0 / 3.0)).abs() < 1e-12);
        assert!(two_ion_spacing(0.0, &ca()).is_err());
    }

    #[test]
    fn single_ion_sits_at_minimum() {
        let p = AxialPotential::Harmonic {
            omega: mhz_to_angular(1.0),
            z0_um: 3.5,
        };
        let c = equilibrium_positions(1, &p, &ca()).unwrap();
        assert!((c.positions_um[0] - 3.5).abs() < 1e-12);
    }

    #[test]
    fn two_ion_minimizer_matches_closed_form() {
        let om = mhz_to_angular(1.517);
        let c = equilibrium_positions(2, &AxialPotential::harmonic(om), &ca()).unwrap();
        let d = c.positions_um[1] - c.positions_um[0];
        let exact = two_ion_spacing(om, &ca()).unwrap();
        assert!(((d - exact) / exact).abs() < 1e-9);
    }

    #[test]
    fn com_and_stretch_modes() {
        let om = mhz_to_angular(1.2);
        for n in 1..=6 {
            let c = equilibrium_positions(n, &AxialPotential::harmonic(om), &ca()).unwrap();
            let m = normal_modes(&c).unwrap();
            assert!(((m[0] - om) / om).abs() < 1e-9, "n={n}");
            assert!(m.windows(2).all(|w| w[1] > w[0]));
            if n == 2 {
                assert!((m[1] / om - 3f64.sqrt()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rejects_bad_counts() {
        let p = AxialPotential::harmonic(mhz_to_angular(1.0));
        assert!(equilibrium_positions(0, &p, &ca()).is_err());
        assert!(equilibrium_positions(21, &p, &ca()).is_err());
    }
}
