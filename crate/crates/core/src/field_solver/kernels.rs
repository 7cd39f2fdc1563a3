//! Single-layer integrals of a uniform unit density over a flat triangle.
//!
//! All lengths in meters. `potential_and_gradient` is closed form
//! (edge-wise log and arctangent terms) and exact for any observation point
//! off the panel edges.

use crate::geometry::{Panel, Vec3};

#[derive(Debug, Clone)]
pub(crate) struct TriGeom {
    pub v: [Vec3; 3],
    pub n: Vec3,
    /// Unit direction of edge i (v[i] → v[i+1]).
    pub s_hat: [Vec3; 3],
    /// In-plane outward normal of edge i.
    pub m_hat: [Vec3; 3],
    pub len: [f64; 3],
    pub centroid: Vec3,
    pub area: f64,
    pub diameter: f64,
    /// Edge midpoints, the nodes of the 3-point rule.
    pub mid: [Vec3; 3],
}

impl TriGeom {
    pub fn new(p: &Panel) -> Self {
        let v = p.vertices;
        let n = p.normal;
        let mut s_hat = [Vec3::zeros(); 3];
        let mut m_hat = [Vec3::zeros(); 3];
        let mut len = [0.0; 3];
        let mut mid = [Vec3::zeros(); 3];
        for i in 0..3 {
            let e = v[(i + 1) % 3] - v[i];
            len[i] = e.norm();
            s_hat[i] = e / len[i];
            m_hat[i] = s_hat[i].cross(&n);
            mid[i] = 0.5 * (v[i] + v[(i + 1) % 3]);
        }
        Self {
            v,
            n,
            s_hat,
            m_hat,
            len,
            centroid: p.centroid,
            area: p.area,
            diameter: p.diameter,
            mid,
        }
    }
}

/// ∫ 1/|p − y| dA over the triangle and its gradient with respect to p.
pub(crate) fn potential_and_gradient(t: &TriGeom, p: &Vec3) -> (f64, Vec3) {
    let h = (p - t.v[0]).dot(&t.n);
    let ah = h.abs();
    let rho = p - t.n * h;
    let mut phi = 0.0;
    let mut grad = Vec3::zeros();
    let mut beta = 0.0;
    for i in 0..3 {
        let a = t.v[i];
        let b = t.v[(i + 1) % 3];
        let d = a - rho;
        let s_minus = d.dot(&t.s_hat[i]);
        let s_plus = s_minus + t.len[i];
        let t0 = d.dot(&t.m_hat[i]);
        let r_minus = (p - a).norm();
        let r_plus = (p - b).norm();
        let r0sq = t0 * t0 + h * h;
        let f = if s_minus > 0.0 {
            ((r_plus + s_plus) / (r_minus + s_minus)).ln()
        } else if s_plus < 0.0 {
            ((r_minus - s_minus) / (r_plus - s_plus)).ln()
        } else if r0sq > 0.0 {
            ((r_plus + s_plus) * (r_minus - s_minus) / r0sq).ln()
        } else {
            0.0
        };
        let b_i = (t0 * s_plus).atan2(r0sq + ah * r_plus) - (t0 * s_minus).atan2(r0sq + ah * r_minus);
        phi += t0 * f - ah * b_i;
        grad -= t.m_hat[i] * f;
        beta += b_i;
    }
    if h != 0.0 {
        grad -= t.n * (h.signum() * beta);
    }
    (phi, grad)
}

/// Collocation weight: analytic close in, then a 3-point edge-midpoint rule,
/// then the centroid rule.
pub(crate) fn potential_coefficient(t: &TriGeom, p: &Vec3) -> f64 {
    let d = (p - t.centroid).norm();
    if d < 4.0 * t.diameter {
        potential_and_gradient(t, p).0
    } else if d < 12.0 * t.diameter {
        t.area / 3.0 * t.mid.iter().map(|m| 1.0 / (p - m).norm()).sum::<f64>()
    } else {
        t.area / d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Label;

    fn tri(a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> TriGeom {
        let v = [Vec3::from(a), Vec3::from(b), Vec3::from(c)];
        let e1 = v[1] - v[0];
        let e2 = v[2] - v[0];
        let cr = e1.cross(&e2);
        let panel = Panel {
            vertices: v,
            centroid: (v[0] + v[1] + v[2]) / 3.0,
            area: 0.5 * cr.norm(),
            normal: cr.normalize(),
            diameter: e1.norm().max(e2.norm()).max((v[2] - v[1]).norm()),
            label: Label::Aux(0),
            primitive: 0,
        };
        TriGeom::new(&panel)
    }

    /// Brute force: midpoint rule on a k×k barycentric subdivision.
    fn brute(t: &TriGeom, p: &Vec3, k: usize) -> f64 {
        let (a, b, c) = (t.v[0], t.v[1], t.v[2]);
        let mut sum = 0.0;
        let sub_area = t.area / (k * k) as f64;
        for i in 0..k {
            for j in 0..k - i {
                let pt = |u: f64, w: f64| a + (b - a) * (u / k as f64) + (c - a) * (w / k as f64);
                let up = (pt(i as f64, j as f64) + pt(i as f64 + 1.0, j as f64) + pt(i as f64, j as f64 + 1.0)) / 3.0;
                sum += sub_area / (p - up).norm();
                if j + i + 1 < k {
                    let dn = (pt(i as f64 + 1.0, j as f64)
                        + pt(i as f64 + 1.0, j as f64 + 1.0)
                        + pt(i as f64, j as f64 + 1.0))
                        / 3.0;
                    sum += sub_area / (p - dn).norm();
                }
            }
        }
        sum
    }

    #[test]
    fn matches_brute_force_quadrature() {
        let t = tri([0.0, 0.0, 0.0], [1.0, 0.2, 0.0], [0.3, 0.9, 0.1]);
        for p in [
            Vec3::new(0.4, 0.3, 0.5),
            Vec3::new(-0.5, 1.5, -0.3),
            Vec3::new(2.0, -1.0, 0.05),
            Vec3::new(0.45, 0.35, -0.2),
        ] {
            let exact = potential_and_gradient(&t, &p).0;
            let approx = brute(&t, &p, 400);
            assert!((exact - approx).abs() / exact < 1e-4, "{exact} vs {approx}");
        }
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let t = tri([0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.2, 0.8, 0.0]);
        for p in [
            Vec3::new(0.3, 0.2, 0.1),
            Vec3::new(1.5, -0.4, -0.6),
            Vec3::new(0.3, 0.2, -0.02),
        ] {
            let (_, g) = potential_and_gradient(&t, &p);
            let h = 1e-6;
            for k in 0..3 {
                let mut dp = Vec3::zeros();
                dp[k] = h;
                let fd =
                    (potential_and_gradient(&t, &(p + dp)).0 - potential_and_gradient(&t, &(p - dp)).0) / (2.0 * h);
                assert!(
                    (fd - g[k]).abs() < 1e-6 * (1.0 + g.norm()),
                    "axis {k}: {fd} vs {}",
                    g[k]
                );
            }
        }
    }

    #[test]
    fn self_term_of_equilateral_triangle() {
        // centroid of an equilateral triangle with side a: ∫ 1/r dA = √3·a·ln(2+√3)
        let a = 1.0;
        let t = tri([0.0, 0.0, 0.0], [a, 0.0, 0.0], [a / 2.0, a * 3f64.sqrt() / 2.0, 0.0]);
        let v = potential_and_gradient(&t, &t.centroid).0;
        let expect = 3f64.sqrt() * a * (2.0 + 3f64.sqrt()).ln();
        assert!((v - expect).abs() < 1e-12, "{v} vs {expect}");
    }

    #[test]
    fn normal_field_jump_is_two_pi() {
        let t = tri([0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]);
        let p = Vec3::new(0.25, 0.25, 0.0);
        let up = potential_and_gradient(&t, &(p + Vec3::z() * 1e-9)).1.z;
        let dn = potential_and_gradient(&t, &(p - Vec3::z() * 1e-9)).1.z;
        assert!(((dn - up) - 4.0 * std::f64::consts::PI).abs() < 1e-6);
    }
}
