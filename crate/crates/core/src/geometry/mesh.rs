use std::f64::consts::{FRAC_PI_4, PI};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ElectrodePrimitive, Label, PrimitiveKind, Vec3};
use crate::constants::MICRON;
use crate::error::{Error, Result};

/// Target panel size and its spatial grading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeshOptions {
    /// Target edge length (µm) inside the focus region.
    pub h_um: f64,
    /// Radius (µm, about the origin) meshed at `h_um`; set to infinity for uniform meshes.
    pub focus_radius_um: f64,
    /// Relative size growth per focus radius of distance beyond the focus region.
    pub growth: f64,
    /// Largest allowed panel size in units of `h_um`.
    pub max_size_factor: f64,
    /// Panel size at primitive edges relative to the local size.
    pub edge_ratio: f64,
}

impl Default for MeshOptions {
    fn default() -> Self {
        Self {
            h_um: 40.0,
            focus_radius_um: 250.0,
            growth: 2.0,
            max_size_factor: 5.0,
            edge_ratio: 0.5,
        }
    }
}

impl MeshOptions {
    pub fn uniform(h_um: f64) -> Self {
        Self {
            h_um,
            focus_radius_um: f64::INFINITY,
            growth: 0.0,
            max_size_factor: 1.0,
            edge_ratio: 1.0,
        }
    }

    pub fn size_field(&self) -> SizeField {
        SizeField { opts: *self }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SizeField {
    opts: MeshOptions,
}

impl SizeField {
    /// Local target edge length (µm) at a global point (µm).
    pub fn at(&self, p: &Vec3) -> f64 {
        let o = &self.opts;
        if !o.focus_radius_um.is_finite() {
            return o.h_um;
        }
        let excess = (p.norm() - o.focus_radius_um).max(0.0) / o.focus_radius_um;
        o.h_um * (1.0 + o.growth * excess).min(o.max_size_factor.max(1.0))
    }
}

/// Flat triangular panel. Coordinates in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub vertices: [Vec3; 3],
    pub centroid: Vec3,
    pub area: f64,
    pub normal: Vec3,
    /// Longest edge (m).
    pub diameter: f64,
    pub label: Label,
    pub primitive: usize,
}

impl Panel {
    fn new(vertices: [Vec3; 3], label: Label, primitive: usize) -> Self {
        let e1 = vertices[1] - vertices[0];
        let e2 = vertices[2] - vertices[0];
        let cross = e1.cross(&e2);
        let twice = cross.norm();
        let diameter = e1.norm().max(e2.norm()).max((vertices[2] - vertices[1]).norm());
        Self {
            centroid: (vertices[0] + vertices[1] + vertices[2]) / 3.0,
            area: 0.5 * twice,
            normal: cross / twice,
            diameter,
            vertices,
            label,
            primitive,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PanelMesh {
    pub panels: Vec<Panel>,
    pub options: MeshOptions,
    pub primitives: Vec<ElectrodePrimitive>,
}

impl PanelMesh {
    pub fn len(&self) -> usize {
        self.panels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.panels.is_empty()
    }

    /// Distinct labels in first-appearance order.
    pub fn labels(&self) -> Vec<Label> {
        let mut out: Vec<Label> = Vec::new();
        for p in &self.panels {
            if !out.contains(&p.label) {
                out.push(p.label);
            }
        }
        out
    }

    /// Summed panel area per primitive (µm²).
    pub fn primitive_areas_um2(&self) -> Vec<f64> {
        let mut areas = vec![0.0; self.primitives.len()];
        for p in &self.panels {
            areas[p.primitive] += p.area / (MICRON * MICRON);
        }
        areas
    }

    /// Relative area error per primitive versus the closed-form surface area.
    pub fn area_errors(&self) -> Vec<f64> {
        self.primitive_areas_um2()
            .iter()
            .zip(&self.primitives)
            .map(|(a, p)| {
                let exact = p.surface_area_um2();
                (a - exact).abs() / exact
            })
            .collect()
    }

    /// Conductor containing the point (µm), if any.
    pub fn conductor_containing(&self, point_um: &Vec3) -> Option<&ElectrodePrimitive> {
        self.primitives
            .iter()
            .find(|p| p.label.is_conductor() && p.contains(point_um))
    }

    /// One panel per row: vertices, centroid, normal (µm / unit), area (µm²), label.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "x1_um,y1_um,z1_um,x2_um,y2_um,z2_um,x3_um,y3_um,z3_um,cx_um,cy_um,cz_um,nx,ny,nz,area_um2,label"
        )?;
        for p in &self.panels {
            let mut cols: Vec<String> = Vec::with_capacity(17);
            for v in p.vertices.iter().chain(std::iter::once(&p.centroid)) {
                for c in v.iter() {
                    cols.push(format!("{:.6}", c / MICRON));
                }
            }
            for c in p.normal.iter() {
                cols.push(format!("{c:.9}"));
            }
            cols.push(format!("{:.6}", p.area / (MICRON * MICRON)));
            cols.push(p.label.to_string());
            writeln!(w, "{}", cols.join(","))?;
        }
        Ok(())
    }
}

/// Largest allowed relative area error per primitive.
const AREA_TOLERANCE: f64 = 0.02;

/// Triangulates every primitive surface. Deterministic: panels are ordered by
/// primitive index, then by local construction order.
pub fn mesh_surface(primitives: &[ElectrodePrimitive], opts: &MeshOptions) -> Result<PanelMesh> {
    if !(opts.h_um > 0.0 && opts.h_um.is_finite()) {
        return Err(Error::parameter("h_um", format!("must be > 0, got {}", opts.h_um)));
    }
    if !(opts.edge_ratio > 0.0 && opts.edge_ratio <= 1.0) {
        return Err(Error::parameter("edge_ratio", "must lie in (0, 1]"));
    }
    for p in primitives {
        p.validate()?;
        let feature = p.smallest_feature_um();
        if opts.h_um > feature {
            return Err(Error::Resolution {
                h_um: opts.h_um,
                feature_um: feature,
                primitive: p.label.to_string(),
            });
        }
    }
    let field = opts.size_field();
    let per_primitive: Vec<Vec<Panel>> = primitives
        .par_iter()
        .enumerate()
        .map(|(idx, prim)| {
            let mut tris = Vec::new();
            mesh_primitive(prim, &field, opts.edge_ratio, &mut tris);
            tris.into_iter()
                .map(|[a, b, c]| {
                    let g = |v: Vec3| prim.pose.to_global(&v) * MICRON;
                    Panel::new([g(a), g(b), g(c)], prim.label, idx)
                })
                .collect()
        })
        .collect();
    let mesh = PanelMesh {
        panels: per_primitive.into_iter().flatten().collect(),
        options: *opts,
        primitives: primitives.to_vec(),
    };
    for (err, prim) in mesh.area_errors().iter().zip(primitives) {
        if *err > AREA_TOLERANCE {
            return Err(Error::parameter(
                "h_um",
                format!(
                    "panel area of {} deviates {:.2}% from its analytic surface area",
                    prim.label,
                    100.0 * err
                ),
            ));
        }
    }
    Ok(mesh)
}

type Tri = [Vec3; 3];

fn mesh_primitive(prim: &ElectrodePrimitive, field: &SizeField, edge_ratio: f64, out: &mut Vec<Tri>) {
    let size = |local: Vec3| field.at(&prim.pose.to_global(&local));
    match prim.kind {
        PrimitiveKind::BoxBlade { size: [a, b, c] } => {
            let (hx, hy, hz) = (a / 2.0, b / 2.0, c / 2.0);
            let faces = [
                (Vec3::new(hx, -hy, -hz), Vec3::new(0.0, b, 0.0), Vec3::new(0.0, 0.0, c)),
                (Vec3::new(-hx, -hy, -hz), Vec3::new(0.0, 0.0, c), Vec3::new(0.0, b, 0.0)),
                (Vec3::new(-hx, hy, -hz), Vec3::new(0.0, 0.0, c), Vec3::new(a, 0.0, 0.0)),
                (Vec3::new(-hx, -hy, -hz), Vec3::new(a, 0.0, 0.0), Vec3::new(0.0, 0.0, c)),
                (Vec3::new(-hx, -hy, hz), Vec3::new(a, 0.0, 0.0), Vec3::new(0.0, b, 0.0)),
                (Vec3::new(-hx, -hy, -hz), Vec3::new(0.0, b, 0.0), Vec3::new(a, 0.0, 0.0)),
            ];
            for (o, eu, ev) in faces {
                rect_face(o, eu, ev, &size, edge_ratio, out);
            }
        }
        PrimitiveKind::Plate { width, height } => {
            rect_face(
                Vec3::new(-width / 2.0, -height / 2.0, 0.0),
                Vec3::new(width, 0.0, 0.0),
                Vec3::new(0.0, height, 0.0),
                &size,
                edge_ratio,
                out,
            );
        }
        PrimitiveKind::Disk { diameter } => {
            let r = diameter / 2.0;
            let radial = |t: f64| ring_size(&size, |th| Vec3::new(t * th.cos(), t * th.sin(), 0.0));
            let rs = graded_nodes(r, radial, edge_ratio, 2, 1);
            let rings = ring_counts(&rs, |t| 2.0 * PI * t, &radial, 8, 32);
            let pt = |t: f64, th: f64| Vec3::new(t * th.cos(), t * th.sin(), 0.0);
            ring_strip(&rs, &rings, pt, false, out);
        }
        PrimitiveKind::HollowCylinder {
            inner_diameter,
            outer_diameter,
            length,
        } => {
            let (ri, ro) = (inner_diameter / 2.0, outer_diameter / 2.0);
            for (z, flip) in [(0.0, true), (length, false)] {
                let pt = move |t: f64, th: f64| Vec3::new(t * th.cos(), t * th.sin(), z);
                let radial = |t: f64| ring_size(&size, |th| pt(t, th));
                let rs: Vec<f64> = graded_nodes(ro - ri, |s| radial(ri + s), edge_ratio, 2, 2)
                    .into_iter()
                    .map(|s| ri + s)
                    .collect();
                let rings = ring_counts(&rs, |t| 2.0 * PI * t, &radial, 16, 32);
                ring_strip(&rs, &rings, pt, flip, out);
            }
            for (r, flip) in [(ri, false), (ro, true)] {
                let pt = move |t: f64, th: f64| Vec3::new(r * th.cos(), r * th.sin(), t);
                let axial = |t: f64| ring_size(&size, |th| pt(t, th));
                let zs = graded_nodes(length, axial, edge_ratio, 2, 2);
                let rings = ring_counts(&zs, |_| 2.0 * PI * r, &axial, 16, 16);
                ring_strip(&zs, &rings, pt, flip, out);
            }
        }
        PrimitiveKind::Sphere { diameter } => {
            let r = diameter / 2.0;
            let faces = [
                (Vec3::x(), Vec3::y(), Vec3::z()),
                (-Vec3::x(), Vec3::z(), Vec3::y()),
                (Vec3::y(), Vec3::z(), Vec3::x()),
                (-Vec3::y(), Vec3::x(), Vec3::z()),
                (Vec3::z(), Vec3::x(), Vec3::y()),
                (-Vec3::z(), Vec3::y(), Vec3::x()),
            ];
            let mut hmin = f64::INFINITY;
            for (c, _, _) in &faces {
                hmin = hmin.min(size(c * r));
            }
            let mut n = ((0.5 * PI * r) / hmin).ceil() as usize;
            n = n.max(6);
            n += n % 2;
            let ticks: Vec<f64> = (0..=n)
                .map(|i| (FRAC_PI_4 * (-1.0 + 2.0 * i as f64 / n as f64)).tan())
                .collect();
            for (c, eu, ev) in faces {
                let p = |i: usize, j: usize| (c + eu * ticks[i] + ev * ticks[j]).normalize() * r;
                for j in 0..n {
                    for i in 0..n {
                        quad(
                            p(i, j),
                            p(i + 1, j),
                            p(i + 1, j + 1),
                            p(i, j + 1),
                            (i + j) % 2 == 0,
                            out,
                        );
                    }
                }
            }
        }
    }
}

/// Smallest target size around a ring parameterized by angle.
fn ring_size(size: &impl Fn(Vec3) -> f64, at: impl Fn(f64) -> Vec3) -> f64 {
    (0..16)
        .map(|k| size(at(2.0 * PI * k as f64 / 16.0)))
        .fold(f64::INFINITY, f64::min)
}

/// Node positions on [0, len] with spacing following `size`, refined toward
/// both ends by `edge_ratio`. Division count is at least `min_div` and a
/// multiple of `multiple`.
fn graded_nodes(len: f64, size: impl Fn(f64) -> f64, edge_ratio: f64, min_div: usize, multiple: usize) -> Vec<f64> {
    const M: usize = 256;
    let s: Vec<f64> = (0..=M).map(|i| len * i as f64 / M as f64).collect();
    let dens: Vec<f64> = s
        .iter()
        .map(|&t| {
            let h = size(t);
            let d = t.min(len - t).max(0.0);
            let f = (edge_ratio + (1.0 - edge_ratio) * d / h).min(1.0);
            1.0 / (h * f)
        })
        .collect();
    let mut cum = vec![0.0; M + 1];
    for i in 0..M {
        cum[i + 1] = cum[i] + 0.5 * (dens[i] + dens[i + 1]) * (s[i + 1] - s[i]);
    }
    let total = cum[M];
    let mut n = (total - 1e-9).ceil().max(1.0) as usize;
    n = n.max(min_div);
    if multiple > 1 && !n.is_multiple_of(multiple) {
        n += multiple - n % multiple;
    }
    let mut nodes = Vec::with_capacity(n + 1);
    nodes.push(0.0);
    let mut i = 0;
    for k in 1..n {
        let target = total * k as f64 / n as f64;
        while cum[i + 1] < target {
            i += 1;
        }
        let frac = (target - cum[i]) / (cum[i + 1] - cum[i]);
        nodes.push(s[i] + frac * (s[i + 1] - s[i]));
    }
    nodes.push(len);
    nodes
}

/// Azimuthal node counts per ring. Counts are drawn from a halving chain
/// `n_max / 2^j` (multiples of 8, at least `min_count`, except a central
/// point ring), and neighbouring rings differ by at most a factor of two.
/// The outermost count is at least `floor`, which bounds the polygon area deficit.
fn ring_counts(
    params: &[f64],
    circumference: impl Fn(f64) -> f64,
    size: &impl Fn(f64) -> f64,
    min_count: usize,
    floor: usize,
) -> Vec<usize> {
    let cmax = params.iter().map(|&t| circumference(t)).fold(0.0, f64::max);
    let targets: Vec<f64> = params
        .iter()
        .map(|&t| {
            let c = circumference(t);
            (c / size(t)).max(floor as f64 * c / cmax)
        })
        .collect();
    let tmax = targets.iter().copied().fold(0.0, f64::max);
    let n_max = (8 * ((tmax / 8.0).ceil() as usize)).max(min_count);
    let mut allowed = vec![n_max];
    while allowed.last().unwrap() % 16 == 0 && allowed.last().unwrap() / 2 >= min_count {
        let next = allowed.last().unwrap() / 2;
        allowed.push(next);
    }
    let mut counts: Vec<usize> = targets
        .iter()
        .zip(params)
        .map(|(&t, &p)| {
            if circumference(p) == 0.0 {
                return 0;
            }
            *allowed.iter().rev().find(|&&a| a as f64 >= t).unwrap_or(&n_max)
        })
        .collect();
    loop {
        let mut changed = false;
        for k in 0..counts.len() {
            for nb in [k.wrapping_sub(1), k + 1] {
                if nb < counts.len() && counts[k] != 0 && counts[nb] != 0 && counts[nb] > 2 * counts[k] {
                    counts[k] = counts[nb] / 2;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    counts
}

/// Triangulates the strip between consecutive rings. `point(s, θ)` maps the
/// ring parameter and angle into local coordinates; the natural orientation
/// is ∂s × ∂θ, reversed when `flip` is set. A ring with count 0 is a single
/// point (disk center).
fn ring_strip(params: &[f64], counts: &[usize], point: impl Fn(f64, f64) -> Vec3, flip: bool, out: &mut Vec<Tri>) {
    let node = |k: usize, i: usize| {
        let n = counts[k];
        if n == 0 {
            point(params[k], 0.0)
        } else {
            point(params[k], 2.0 * PI * (i % n) as f64 / n as f64)
        }
    };
    let mut push = |a: Vec3, b: Vec3, c: Vec3| {
        if flip {
            out.push([a, c, b]);
        } else {
            out.push([a, b, c]);
        }
    };
    for k in 0..params.len() - 1 {
        let (n0, n1) = (counts[k], counts[k + 1]);
        if n0 == 0 {
            for i in 0..n1 {
                push(node(k, 0), node(k + 1, i), node(k + 1, i + 1));
            }
        } else if n1 == 0 {
            for i in 0..n0 {
                push(node(k, i), node(k + 1, 0), node(k, i + 1));
            }
        } else if n0 == n1 {
            for i in 0..n0 {
                let (a, b, c, d) = (node(k, i), node(k + 1, i), node(k + 1, i + 1), node(k, i + 1));
                if (i + k) % 2 == 0 {
                    push(a, b, c);
                    push(a, c, d);
                } else {
                    push(a, b, d);
                    push(b, c, d);
                }
            }
        } else if n1 == 2 * n0 {
            for i in 0..n0 {
                let (ia, ib) = (node(k, i), node(k, i + 1));
                let (o0, o1, o2) = (node(k + 1, 2 * i), node(k + 1, 2 * i + 1), node(k + 1, 2 * i + 2));
                push(ia, o0, o1);
                push(ia, o1, ib);
                push(ib, o1, o2);
            }
        } else if n0 == 2 * n1 {
            for i in 0..n1 {
                let (oa, ob) = (node(k + 1, i), node(k + 1, i + 1));
                let (i0, i1, i2) = (node(k, 2 * i), node(k, 2 * i + 1), node(k, 2 * i + 2));
                push(i0, oa, i1);
                push(i1, oa, ob);
                push(i1, ob, i2);
            }
        } else {
            unreachable!("ring counts {n0} -> {n1} differ by more than a factor of two");
        }
    }
}

/// Structured grid on a planar rectangle `origin + u·eu + v·ev`, normal eu × ev.
fn rect_face(origin: Vec3, eu: Vec3, ev: Vec3, size: &impl Fn(Vec3) -> f64, edge_ratio: f64, out: &mut Vec<Tri>) {
    let (lu, lv) = (eu.norm(), ev.norm());
    let (du, dv) = (eu / lu, ev / lv);
    let line_min = |along: Vec3, across: Vec3, lacross: f64, s: f64| {
        (0..=8)
            .map(|k| size(origin + along * s + across * (lacross * k as f64 / 8.0)))
            .fold(f64::INFINITY, f64::min)
    };
    let us = graded_nodes(lu, |s| line_min(du, dv, lv, s), edge_ratio, 2, 2);
    let vs = graded_nodes(lv, |s| line_min(dv, du, lu, s), edge_ratio, 2, 2);
    let p = |i: usize, j: usize| origin + du * us[i] + dv * vs[j];
    for j in 0..vs.len() - 1 {
        for i in 0..us.len() - 1 {
            quad(
                p(i, j),
                p(i + 1, j),
                p(i + 1, j + 1),
                p(i, j + 1),
                (i + j) % 2 == 0,
                out,
            );
        }
    }
}

fn quad(a: Vec3, b: Vec3, c: Vec3, d: Vec3, diag_ac: bool, out: &mut Vec<Tri>) {
    if diag_ac {
        out.push([a, b, c]);
        out.push([a, c, d]);
    } else {
        out.push([a, b, d]);
        out.push([b, c, d]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_wheel_trap, Pose, WheelTrapParams};

    fn sphere(d: f64) -> ElectrodePrimitive {
        ElectrodePrimitive::new(
            PrimitiveKind::Sphere { diameter: d },
            Pose::at(0.0, 0.0, 0.0),
            Label::Aux(0),
        )
        .unwrap()
    }

    #[test]
    fn unit_sphere_area() {
        // radius 1 µm sphere
        let mesh = mesh_surface(&[sphere(2.0)], &MeshOptions::uniform(0.08)).unwrap();
        let a = mesh.primitive_areas_um2()[0];
        assert!((a - 4.0 * PI).abs() / (4.0 * PI) < 0.01, "area {a}");
    }

    #[test]
    fn disk_area() {
        let a = 40.0;
        let disk = ElectrodePrimitive::new(
            PrimitiveKind::Disk { diameter: 2.0 * a },
            Pose::at(1.0, 2.0, 3.0),
            Label::FacetPc,
        )
        .unwrap();
        let mesh = mesh_surface(&[disk], &MeshOptions::uniform(2.0)).unwrap();
        let area = mesh.primitive_areas_um2()[0];
        assert!((area - PI * a * a).abs() / (PI * a * a) < 0.01);
        assert!(mesh.panels.iter().all(|p| (p.normal - Vec3::z()).norm() < 1e-12));
    }

    #[test]
    fn normals_point_outward_on_closed_solids() {
        let prims = build_wheel_trap(&WheelTrapParams::default()).unwrap();
        let mesh = mesh_surface(&prims, &MeshOptions::default()).unwrap();
        for p in &mesh.panels {
            if !p.label.is_conductor() {
                continue;
            }
            let prim = &mesh.primitives[p.primitive];
            // flat chords on curved faces sit up to d²/8r off the true surface
            let depth = 0.2 * MICRON + p.diameter * p.diameter / (8.0 * 100.0 * MICRON);
            let probe = (p.centroid - p.normal * depth) / MICRON;
            assert!(prim.contains(&probe), "{} panel normal points inward", p.label);
        }
    }

    #[test]
    fn oversized_h_is_refused() {
        match mesh_surface(&[sphere(10.0)], &MeshOptions::uniform(20.0)) {
            Err(Error::Resolution { feature_um, .. }) => assert_eq!(feature_um, 5.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn graded_nodes_are_symmetric_for_symmetric_size() {
        let nodes = graded_nodes(100.0, |s| 3.0 + (s - 50.0).abs() * 0.1, 0.5, 2, 2);
        let n = nodes.len();
        for i in 0..n {
            assert!((nodes[i] + nodes[n - 1 - i] - 100.0).abs() < 1e-9);
        }
    }
}
