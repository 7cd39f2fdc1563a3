//! Boundary-element electrostatics on a [`PanelMesh`].
//!
//! Conductor panels carry unknown constant charge densities fixed by
//! collocation at panel centroids. Facet panels carry a prescribed density
//! and act as sources. Densities are stored scaled by 1/(4πε₀) (V/m) so that
//! potentials are plain sums of density × ∫1/R dA.

pub(crate) mod kernels;

use std::collections::BTreeMap;
use std::io::Write;

use faer::linalg::solvers::Solve;
use faer::{Mat, MatMut, MatRef};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::{e_per_um2_to_si, COULOMB_K, EPSILON_0, MICRON};
use crate::error::{Error, Result};
use crate::geometry::{Label, PanelMesh, Vec3};
use kernels::{potential_and_gradient, potential_coefficient, TriGeom};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    /// Refuse meshes with more panels than this (dense storage is O(n²)).
    pub max_panels: usize,
    /// Largest accepted 1-norm condition estimate.
    pub max_condition: f64,
    /// Largest accepted collocation residual for unit-voltage solutions (V).
    pub residual_tol_v: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_panels: 12_000,
            max_condition: 1e12,
            residual_tol_v: 1e-3,
        }
    }
}

/// Applied voltages (V) per conductor label and facet charge densities (e/µm²).
/// Labels absent from `voltages` are grounded.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Excitation {
    pub voltages: BTreeMap<Label, f64>,
    pub sigma_pc: f64,
    pub sigma_mm: f64,
}

impl Excitation {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, label: Label, volts: f64) -> Self {
        *self.voltages.entry(label).or_insert(0.0) += volts;
        self
    }

    pub fn with_sigma(mut self, sigma_pc: f64, sigma_mm: f64) -> Self {
        self.sigma_pc = sigma_pc;
        self.sigma_mm = sigma_mm;
        self
    }

    pub fn voltage(&self, label: Label) -> f64 {
        self.voltages.get(&label).copied().unwrap_or(0.0)
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            voltages: self.voltages.iter().map(|(l, v)| (*l, k * v)).collect(),
            sigma_pc: k * self.sigma_pc,
            sigma_mm: k * self.sigma_mm,
        }
    }

    pub fn plus(&self, other: &Excitation) -> Self {
        let mut out = self.clone();
        for (l, v) in &other.voltages {
            *out.voltages.entry(*l).or_insert(0.0) += v;
        }
        out.sigma_pc += other.sigma_pc;
        out.sigma_mm += other.sigma_mm;
        out
    }

    /// Weight of a basis label: its voltage, or σ for a facet label.
    fn weight(&self, label: Label) -> f64 {
        match label {
            Label::FacetPc => self.sigma_pc,
            Label::FacetMm => self.sigma_mm,
            l => self.voltage(l),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FieldSample {
    /// Position (m).
    pub position: Vec3,
    /// Potential (V).
    pub potential: f64,
    /// Electric field (V/m).
    pub field: Vec3,
}

/// Anything that yields potential and field for a set of excitations.
pub trait FieldSource: Sync {
    /// Fixes a list of excitations so that each `sample` returns one
    /// [`FieldSample`] per excitation, in order.
    fn prepare(&self, excitations: &[Excitation]) -> Result<Box<dyn PreparedField + '_>>;

    fn evaluate(&self, excitation: &Excitation, point_um: &Vec3) -> Result<FieldSample> {
        let prepared = self.prepare(std::slice::from_ref(excitation))?;
        Ok(prepared.sample(point_um)?.remove(0))
    }
}

pub trait PreparedField: Sync {
    fn sample(&self, point_um: &Vec3) -> Result<Vec<FieldSample>>;
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelResidual {
    pub label: Label,
    /// Max |A·x − b| over collocation points (V).
    pub max_residual_v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverDiagnostics {
    pub panels: usize,
    pub conductor_panels: usize,
    pub facet_panels: usize,
    pub h_um: f64,
    pub condition_estimate: f64,
    pub residuals: Vec<LabelResidual>,
}

impl SolverDiagnostics {
    pub fn write_json<W: Write>(&self, w: W) -> std::io::Result<()> {
        serde_json::to_writer_pretty(w, self).map_err(std::io::Error::other)
    }
}

/// Per-label responses: unit voltage on each driven conductor, and unit
/// facet charge (1 e/µm²) on each facet with every conductor grounded.
#[derive(Debug, Clone)]
pub struct BasisSolution {
    mesh: PanelMesh,
    geoms: Vec<TriGeom>,
    /// Scaled densities σ/(4πε₀) over all panels, per basis label (V/m).
    basis: BTreeMap<Label, Vec<f64>>,
    diagnostics: SolverDiagnostics,
}

/// Scaled density of 1 e/µm² (V/m).
fn unit_facet_density() -> f64 {
    COULOMB_K * e_per_um2_to_si(1.0)
}

pub fn solve_basis(mesh: &PanelMesh, opts: &SolverOptions) -> Result<BasisSolution> {
    let geoms: Vec<TriGeom> = mesh.panels.iter().map(TriGeom::new).collect();
    let conductors: Vec<usize> = (0..mesh.len())
        .filter(|&i| mesh.panels[i].label.is_conductor())
        .collect();
    let facets: Vec<usize> = (0..mesh.len()).filter(|&i| mesh.panels[i].label.is_facet()).collect();
    let n = conductors.len();
    if n == 0 {
        return Err(Error::parameter("mesh", "contains no conductor panels"));
    }
    if mesh.len() > opts.max_panels {
        return Err(Error::Resource {
            panels: mesh.len(),
            cap: opts.max_panels,
        });
    }

    let mut a = vec![0.0; n * n];
    a.par_chunks_mut(n).enumerate().for_each(|(j, col)| {
        let src = &geoms[conductors[j]];
        for (i, out) in col.iter_mut().enumerate() {
            *out = potential_coefficient(src, &geoms[conductors[i]].centroid);
        }
    });
    let norm1 = a
        .chunks(n)
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);

    let labels = mesh.labels();
    let driven: Vec<Label> = labels.iter().copied().filter(|l| l.is_driven()).collect();
    let facet_labels: Vec<Label> = labels.iter().copied().filter(|l| l.is_facet()).collect();
    let rhs_labels: Vec<Label> = driven.iter().chain(&facet_labels).copied().collect();
    let k = rhs_labels.len();
    let s_unit = unit_facet_density();
    let mut b = vec![0.0; n * k];
    b.par_chunks_mut(n).zip(&rhs_labels).for_each(|(col, label)| {
        if label.is_facet() {
            for (i, out) in col.iter_mut().enumerate() {
                let p = geoms[conductors[i]].centroid;
                *out = -s_unit
                    * facets
                        .iter()
                        .filter(|&&f| mesh.panels[f].label == *label)
                        .map(|&f| potential_coefficient(&geoms[f], &p))
                        .sum::<f64>();
            }
        } else {
            for (i, out) in col.iter_mut().enumerate() {
                *out = if mesh.panels[conductors[i]].label == *label {
                    1.0
                } else {
                    0.0
                };
            }
        }
    });

    let a_ref = MatRef::from_column_major_slice(&a, n, n);
    let lu = a_ref.partial_piv_lu();
    let mut x = b.clone();
    if k > 0 {
        lu.solve_in_place(MatMut::from_column_major_slice_mut(&mut x, n, k));
    }
    let inv_norm1 = hager_inverse_norm1(n, |v| lu.solve_in_place(v), |v| lu.solve_transpose_in_place(v));
    let condition = norm1 * inv_norm1;
    if !condition.is_finite() || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Solver {
            reason: "collocation matrix is singular".into(),
            condition,
        });
    }
    if condition > opts.max_condition {
        return Err(Error::Solver {
            reason: format!("condition estimate exceeds {:.1e}", opts.max_condition),
            condition,
        });
    }

    let mut residuals = Vec::with_capacity(k);
    if k > 0 {
        let ax: Mat<f64> = a_ref * MatRef::from_column_major_slice(&x, n, k);
        for (c, label) in rhs_labels.iter().enumerate() {
            let bcol = &b[c * n..(c + 1) * n];
            let r = (0..n).map(|i| (ax[(i, c)] - bcol[i]).abs()).fold(0.0, f64::max);
            let scale = bcol.iter().map(|v| v.abs()).fold(1.0, f64::max);
            if r > opts.residual_tol_v * scale {
                return Err(Error::Solver {
                    reason: format!("collocation residual {r:.3e} V for {label}"),
                    condition,
                });
            }
            residuals.push(LabelResidual {
                label: *label,
                max_residual_v: r,
            });
        }
    }

    let mut basis = BTreeMap::new();
    for (c, label) in rhs_labels.iter().enumerate() {
        let mut full = vec![0.0; mesh.len()];
        for (i, &p) in conductors.iter().enumerate() {
            full[p] = x[c * n + i];
        }
        if label.is_facet() {
            for &f in &facets {
                if mesh.panels[f].label == *label {
                    full[f] = s_unit;
                }
            }
        }
        basis.insert(*label, full);
    }

    Ok(BasisSolution {
        geoms,
        basis,
        diagnostics: SolverDiagnostics {
            panels: mesh.len(),
            conductor_panels: n,
            facet_panels: facets.len(),
            h_um: mesh.options.h_um,
            condition_estimate: condition,
            residuals,
        },
        mesh: mesh.clone(),
    })
}

/// Hager's estimate of ‖A⁻¹‖₁ from solves with A and Aᵀ.
fn hager_inverse_norm1(n: usize, solve: impl Fn(MatMut<'_, f64>), solve_t: impl Fn(MatMut<'_, f64>)) -> f64 {
    let mut x = vec![1.0 / n as f64; n];
    let mut est = 0.0;
    for _ in 0..5 {
        let mut y = x.clone();
        solve(MatMut::from_column_major_slice_mut(&mut y, n, 1));
        est = y.iter().map(|v| v.abs()).sum::<f64>();
        let mut z: Vec<f64> = y.iter().map(|v| if *v >= 0.0 { 1.0 } else { -1.0 }).collect();
        solve_t(MatMut::from_column_major_slice_mut(&mut z, n, 1));
        let (jmax, zmax) = z
            .iter()
            .enumerate()
            .fold((0, 0.0), |acc, (i, v)| if v.abs() > acc.1 { (i, v.abs()) } else { acc });
        let ztx: f64 = z.iter().zip(&x).map(|(a, b)| a * b).sum();
        if zmax <= ztx {
            break;
        }
        x.iter_mut().for_each(|v| *v = 0.0);
        x[jmax] = 1.0;
    }
    est
}

impl BasisSolution {
    pub fn mesh(&self) -> &PanelMesh {
        &self.mesh
    }

    pub fn diagnostics(&self) -> &SolverDiagnostics {
        &self.diagnostics
    }

    /// Labels with a basis solution (driven conductors, then facets).
    pub fn labels(&self) -> Vec<Label> {
        self.basis.keys().copied().collect()
    }

    /// Panel charge densities (C/m²) of a basis solution, if present.
    pub fn charge_density(&self, label: Label) -> Option<Vec<f64>> {
        self.basis
            .get(&label)
            .map(|s| s.iter().map(|v| v / COULOMB_K).collect())
    }

    /// Panel charge densities (C/m²) for an excitation.
    pub fn superposed_density(&self, exc: &Excitation) -> Vec<f64> {
        self.scaled_density(exc).iter().map(|v| v / COULOMB_K).collect()
    }

    /// Total charge (C) on each labeled surface for an excitation.
    pub fn charges(&self, exc: &Excitation) -> BTreeMap<Label, f64> {
        let d = self.scaled_density(exc);
        let mut out = BTreeMap::new();
        for (p, s) in self.mesh.panels.iter().zip(&d) {
            *out.entry(p.label).or_insert(0.0) += s * p.area * 4.0 * std::f64::consts::PI * EPSILON_0;
        }
        out
    }

    fn scaled_density(&self, exc: &Excitation) -> Vec<f64> {
        let mut d = vec![0.0; self.mesh.len()];
        for (label, col) in &self.basis {
            let w = exc.weight(*label);
            if w != 0.0 {
                d.iter_mut().zip(col).for_each(|(a, b)| *a += w * b);
            }
        }
        d
    }
}

struct PreparedBasis<'a> {
    sol: &'a BasisSolution,
    /// Panel-major: densities[j * m + k] for panel j, excitation k.
    densities: Vec<f64>,
    active: Vec<bool>,
    m: usize,
}

impl FieldSource for BasisSolution {
    fn prepare(&self, excitations: &[Excitation]) -> Result<Box<dyn PreparedField + '_>> {
        let m = excitations.len();
        let per: Vec<Vec<f64>> = excitations.iter().map(|e| self.scaled_density(e)).collect();
        let np = self.mesh.len();
        let mut densities = vec![0.0; np * m];
        let mut active = vec![false; np];
        for j in 0..np {
            for k in 0..m {
                densities[j * m + k] = per[k][j];
                active[j] |= per[k][j] != 0.0;
            }
        }
        Ok(Box::new(PreparedBasis {
            sol: self,
            densities,
            active,
            m,
        }))
    }
}

impl PreparedField for PreparedBasis<'_> {
    fn sample(&self, point_um: &Vec3) -> Result<Vec<FieldSample>> {
        if let Some(prim) = self.sol.mesh.conductor_containing(point_um) {
            return Err(Error::Domain {
                x: point_um.x,
                y: point_um.y,
                z: point_um.z,
                label: prim.label.to_string(),
            });
        }
        let p = point_um * MICRON;
        let m = self.m;
        let mut phi = vec![0.0; m];
        let mut grad = vec![Vec3::zeros(); m];
        for (j, g) in self.sol.geoms.iter().enumerate() {
            if !self.active[j] {
                continue;
            }
            let (v, dv) = potential_and_gradient(g, &p);
            for k in 0..m {
                let s = self.densities[j * m + k];
                phi[k] += s * v;
                grad[k] += dv * s;
            }
        }
        Ok((0..m)
            .map(|k| FieldSample {
                position: p,
                potential: phi[k],
                field: -grad[k],
            })
            .collect())
    }
}

/// Evaluates one excitation at one point (µm).
pub fn evaluate(solution: &BasisSolution, excitation: &Excitation, point_um: &Vec3) -> Result<FieldSample> {
    solution.evaluate(excitation, point_um)
}

/// Samples a field along a list of points (µm), in parallel and in order.
pub fn sample_points(
    source: &dyn FieldSource,
    excitation: &Excitation,
    points_um: &[Vec3],
) -> Result<Vec<FieldSample>> {
    let prepared = source.prepare(std::slice::from_ref(excitation))?;
    points_um
        .par_iter()
        .map(|p| prepared.sample(p).map(|mut v| v.remove(0)))
        .collect()
}

/// CSV with columns x_um, y_um, z_um, phi_V, Ex_V_per_m, Ey_V_per_m, Ez_V_per_m.
pub fn write_field_csv<W: Write>(mut w: W, samples: &[FieldSample]) -> std::io::Result<()> {
    writeln!(w, "x_um,y_um,z_um,phi_V,Ex_V_per_m,Ey_V_per_m,Ez_V_per_m")?;
    for s in samples {
        let p = s.position / MICRON;
        writeln!(
            w,
            "{:.4},{:.4},{:.4},{:.9e},{:.9e},{:.9e},{:.9e}",
            p.x, p.y, p.z, s.potential, s.field.x, s.field.y, s.field.z
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{mesh_surface, ElectrodePrimitive, MeshOptions, Pose, PrimitiveKind};

    fn sphere_at(x: f64, d: f64, label: Label) -> ElectrodePrimitive {
        ElectrodePrimitive::new(PrimitiveKind::Sphere { diameter: d }, Pose::at(x, 0.0, 0.0), label).unwrap()
    }

    #[test]
    fn sphere_capacitance_and_exterior_potential() {
        let r_um = 100.0;
        let mesh = mesh_surface(
            &[sphere_at(0.0, 2.0 * r_um, Label::Aux(0))],
            &MeshOptions::uniform(12.0),
        )
        .unwrap();
        let sol = solve_basis(&mesh, &SolverOptions::default()).unwrap();
        let exc = Excitation::new().with(Label::Aux(0), 1.0);
        let q = sol.charges(&exc)[&Label::Aux(0)];
        let c = 4.0 * std::f64::consts::PI * EPSILON_0 * r_um * MICRON;
        assert!((q - c).abs() / c < 0.01, "{q} vs {c}");
        let s = sol.evaluate(&exc, &Vec3::new(0.0, 130.0, 250.0)).unwrap();
        let r = (130.0f64.powi(2) + 250.0f64.powi(2)).sqrt();
        assert!((s.potential - r_um / r).abs() / (r_um / r) < 0.01);
    }

    #[test]
    fn twin_spheres_are_mirror_symmetric() {
        let prims = [
            sphere_at(-60.0, 80.0, Label::Aux(0)),
            sphere_at(60.0, 80.0, Label::Aux(1)),
        ];
        let mesh = mesh_surface(&prims, &MeshOptions::uniform(15.0)).unwrap();
        let sol = solve_basis(&mesh, &SolverOptions::default()).unwrap();
        let exc = Excitation::new().with(Label::Aux(0), 1.0).with(Label::Aux(1), 1.0);
        let q = sol.charges(&exc);
        assert!((q[&Label::Aux(0)] - q[&Label::Aux(1)]).abs() < 1e-9 * q[&Label::Aux(0)]);
        let e = sol.evaluate(&exc, &Vec3::new(0.0, 10.0, 5.0)).unwrap();
        assert!(e.field.x.abs() < 1e-9 * e.field.norm().max(1.0));
    }

    #[test]
    fn grounded_system_has_zero_charge() {
        let mesh = mesh_surface(&[sphere_at(0.0, 50.0, Label::Aux(0))], &MeshOptions::uniform(10.0)).unwrap();
        let sol = solve_basis(&mesh, &SolverOptions::default()).unwrap();
        assert!(sol.superposed_density(&Excitation::new()).iter().all(|d| *d == 0.0));
    }

    #[test]
    fn panel_cap_and_domain_errors() {
        let mesh = mesh_surface(&[sphere_at(0.0, 50.0, Label::Aux(0))], &MeshOptions::uniform(10.0)).unwrap();
        let opts = SolverOptions {
            max_panels: 10,
            ..Default::default()
        };
        assert!(matches!(
            solve_basis(&mesh, &opts),
            Err(Error::Resource { cap: 10, .. })
        ));
        let sol = solve_basis(&mesh, &SolverOptions::default()).unwrap();
        let exc = Excitation::new().with(Label::Aux(0), 1.0);
        assert!(matches!(
            sol.evaluate(&exc, &Vec3::new(1.0, 2.0, 3.0)),
            Err(Error::Domain { .. })
        ));
    }

    #[test]
    fn residuals_and_condition_are_reported() {
        let mesh = mesh_surface(&[sphere_at(0.0, 50.0, Label::Aux(0))], &MeshOptions::uniform(10.0)).unwrap();
        let sol = solve_basis(&mesh, &SolverOptions::default()).unwrap();
        let d = sol.diagnostics();
        assert_eq!(d.panels, mesh.len());
        assert!(d.condition_estimate > 1.0 && d.condition_estimate.is_finite());
        assert!(d.residuals[0].max_residual_v < 1e-9);
        let mut buf = Vec::new();
        d.write_json(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().contains("condition_estimate"));
    }
}
