use std::f64::consts::FRAC_PI_4;

use nalgebra::{Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use super::{ElectrodePrimitive, Label, Pose, PrimitiveKind};
use crate::error::{Error, Result};

/// Wheel-trap / fiber-cavity dimensions in µm.
///
/// The fiber mirrors sit at z = ±L/2; each endcap tube's front face is
/// recessed toward the trap center by `fiber_recess_um`, so the mirrors lie
/// inside the bores. PC endcap and fiber are on +z, MM on −z.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WheelTrapParams {
    pub ion_electrode_distance_um: f64,
    pub endcap_inner_diameter_um: f64,
    pub endcap_outer_diameter_um: f64,
    pub endcap_length_um: f64,
    /// Mirror-to-mirror distance L.
    pub cavity_length_um: f64,
    pub fiber_recess_um: f64,
    pub fiber_diameter_pc_um: f64,
    pub fiber_diameter_mm_um: f64,
    /// Include the charge-bearing fiber facets.
    pub include_fibers: bool,
    /// Transverse displacement δ_f of both endcaps (with their fibers) along x.
    pub fiber_offset_um: f64,
    pub rf_blade_thickness_um: f64,
    pub rf_blade_width_um: f64,
    pub rf_blade_length_um: f64,
    pub comp_radius_um: f64,
    pub comp_width_um: f64,
    pub comp_length_um: f64,
    pub comp_thickness_um: f64,
}

impl Default for WheelTrapParams {
    fn default() -> Self {
        Self {
            ion_electrode_distance_um: 250.0,
            endcap_inner_diameter_um: 250.0,
            endcap_outer_diameter_um: 500.0,
            endcap_length_um: 700.0,
            cavity_length_um: 500.0,
            fiber_recess_um: 10.0,
            fiber_diameter_pc_um: 230.0,
            fiber_diameter_mm_um: 220.0,
            include_fibers: true,
            fiber_offset_um: 0.0,
            rf_blade_thickness_um: 300.0,
            rf_blade_width_um: 200.0,
            rf_blade_length_um: 600.0,
            comp_radius_um: 450.0,
            comp_width_um: 150.0,
            comp_length_um: 400.0,
            comp_thickness_um: 300.0,
        }
    }
}

impl WheelTrapParams {
    /// Trap used before fiber integration: wider-spaced, smaller endcaps and no fibers.
    pub fn test_setup() -> Self {
        Self {
            endcap_inner_diameter_um: 260.0,
            endcap_outer_diameter_um: 410.0,
            endcap_length_um: 1000.0,
            cavity_length_um: 3000.0,
            fiber_recess_um: 0.0,
            include_fibers: false,
            ..Self::default()
        }
    }

    /// z of the endcap front faces (positive side).
    pub fn endcap_face_z_um(&self) -> f64 {
        self.cavity_length_um / 2.0 - self.fiber_recess_um
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("ion_electrode_distance_um", self.ion_electrode_distance_um),
            ("endcap_inner_diameter_um", self.endcap_inner_diameter_um),
            ("endcap_outer_diameter_um", self.endcap_outer_diameter_um),
            ("endcap_length_um", self.endcap_length_um),
            ("cavity_length_um", self.cavity_length_um),
            ("fiber_diameter_pc_um", self.fiber_diameter_pc_um),
            ("fiber_diameter_mm_um", self.fiber_diameter_mm_um),
            ("rf_blade_thickness_um", self.rf_blade_thickness_um),
            ("rf_blade_width_um", self.rf_blade_width_um),
            ("rf_blade_length_um", self.rf_blade_length_um),
            ("comp_radius_um", self.comp_radius_um),
            ("comp_width_um", self.comp_width_um),
            ("comp_length_um", self.comp_length_um),
            ("comp_thickness_um", self.comp_thickness_um),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::parameter(name, format!("must be > 0, got {v}")));
            }
        }
        if !(self.fiber_recess_um >= 0.0) {
            return Err(Error::parameter(
                "fiber_recess_um",
                format!("must be >= 0, got {}", self.fiber_recess_um),
            ));
        }
        if self.fiber_recess_um >= self.endcap_length_um {
            return Err(Error::parameter(
                "fiber_recess_um",
                "recess must be shorter than the endcap tube",
            ));
        }
        if !self.fiber_offset_um.is_finite() {
            return Err(Error::parameter("fiber_offset_um", "must be finite"));
        }
        if self.endcap_inner_diameter_um >= self.endcap_outer_diameter_um {
            return Err(Error::parameter(
                "endcap_inner_diameter_um",
                format!(
                    "inner diameter {} must be below outer diameter {}",
                    self.endcap_inner_diameter_um, self.endcap_outer_diameter_um
                ),
            ));
        }
        if self.include_fibers {
            for (name, d) in [
                ("fiber_diameter_pc_um", self.fiber_diameter_pc_um),
                ("fiber_diameter_mm_um", self.fiber_diameter_mm_um),
            ] {
                if self.endcap_inner_diameter_um < d {
                    return Err(Error::parameter(
                        "endcap_inner_diameter_um",
                        format!(
                            "inner diameter {} is smaller than {name} = {d}",
                            self.endcap_inner_diameter_um
                        ),
                    ));
                }
            }
        }
        if self.endcap_face_z_um() <= 0.0 {
            return Err(Error::parameter(
                "cavity_length_um",
                "endcap faces would cross the trap center",
            ));
        }
        let endcap_reach = self.endcap_outer_diameter_um / 2.0 + self.fiber_offset_um.abs();
        if self.endcap_face_z_um() < self.rf_blade_thickness_um / 2.0 && endcap_reach > self.ion_electrode_distance_um {
            return Err(Error::parameter(
                "cavity_length_um",
                "endcap tubes intersect the RF blades",
            ));
        }
        if self.comp_radius_um <= self.ion_electrode_distance_um {
            return Err(Error::parameter(
                "comp_radius_um",
                "compensation electrodes must sit outside the RF blade tips",
            ));
        }
        Ok(())
    }
}

/// Assembles the trap: four RF blades (pairs RF_A on ±x, RF_B on ±y), four
/// compensation blades on the diagonals, two hollow endcaps and, optionally,
/// two recessed fiber-facet disks.
pub fn build_wheel_trap(params: &WheelTrapParams) -> Result<Vec<ElectrodePrimitive>> {
    params.validate()?;
    let mut out = Vec::with_capacity(12);

    let r_tip = params.ion_electrode_distance_um;
    let len = params.rf_blade_length_um;
    for k in 0..4 {
        let rot = Pose::quarter_turn_z(k);
        let center = rot * Vector3::new(r_tip + len / 2.0, 0.0, 0.0);
        let label = if k % 2 == 0 { Label::RfA } else { Label::RfB };
        out.push(ElectrodePrimitive::new(
            PrimitiveKind::BoxBlade {
                size: [len, params.rf_blade_width_um, params.rf_blade_thickness_um],
            },
            Pose {
                position: center,
                rotation: rot,
            },
            label,
        )?);
    }

    let clen = params.comp_length_um;
    for k in 0..4u8 {
        let angle = FRAC_PI_4 * (2 * k + 1) as f64;
        let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), angle);
        let center = rot * Vector3::new(params.comp_radius_um + clen / 2.0, 0.0, 0.0);
        out.push(ElectrodePrimitive::new(
            PrimitiveKind::BoxBlade {
                size: [clen, params.comp_width_um, params.comp_thickness_um],
            },
            Pose {
                position: center,
                rotation: rot,
            },
            Label::Comp(k + 1),
        )?);
    }

    let face = params.endcap_face_z_um();
    let dx = params.fiber_offset_um;
    let tube = PrimitiveKind::HollowCylinder {
        inner_diameter: params.endcap_inner_diameter_um,
        outer_diameter: params.endcap_outer_diameter_um,
        length: params.endcap_length_um,
    };
    out.push(ElectrodePrimitive::new(tube, Pose::at(dx, 0.0, face), Label::DcPc)?);
    out.push(ElectrodePrimitive::new(
        tube,
        Pose::at(dx, 0.0, -face).with_rotation(Pose::half_turn_x()),
        Label::DcMm,
    )?);

    if params.include_fibers {
        let zf = params.cavity_length_um / 2.0;
        // facets face the trap center
        out.push(ElectrodePrimitive::new(
            PrimitiveKind::Disk {
                diameter: params.fiber_diameter_pc_um,
            },
            Pose::at(dx, 0.0, zf).with_rotation(Pose::half_turn_x()),
            Label::FacetPc,
        )?);
        out.push(ElectrodePrimitive::new(
            PrimitiveKind::Disk {
                diameter: params.fiber_diameter_mm_um,
            },
            Pose::at(dx, 0.0, -zf),
            Label::FacetMm,
        )?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;

    #[test]
    fn default_assembly_counts() {
        let prims = build_wheel_trap(&WheelTrapParams::default()).unwrap();
        let count = |f: &dyn Fn(Label) -> bool| prims.iter().filter(|p| f(p.label)).count();
        assert_eq!(count(&|l| matches!(l, Label::RfA | Label::RfB)), 4);
        assert_eq!(count(&|l| matches!(l, Label::DcPc | Label::DcMm)), 2);
        assert_eq!(count(&|l| l.is_facet()), 2);
        assert_eq!(count(&|l| matches!(l, Label::Comp(_))), 4);
    }

    #[test]
    fn blade_tips_at_ion_distance() {
        let prims = build_wheel_trap(&WheelTrapParams::default()).unwrap();
        for p in prims.iter().filter(|p| matches!(p.label, Label::RfA | Label::RfB)) {
            let PrimitiveKind::BoxBlade { size } = p.kind else {
                panic!()
            };
            let tip = p.pose.to_global(&Vec3::new(-size[0] / 2.0, 0.0, 0.0));
            assert!((tip.norm() - 250.0).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_recess_puts_facet_on_endcap_face() {
        let params = WheelTrapParams {
            fiber_recess_um: 0.0,
            ..Default::default()
        };
        let prims = build_wheel_trap(&params).unwrap();
        let z = |l: Label| prims.iter().find(|p| p.label == l).unwrap().pose.position.z;
        assert_eq!(z(Label::FacetPc), z(Label::DcPc));
        assert_eq!(z(Label::FacetMm), z(Label::DcMm));
    }

    #[test]
    fn inner_diameter_below_fiber_is_rejected() {
        let params = WheelTrapParams {
            endcap_inner_diameter_um: 200.0,
            ..Default::default()
        };
        match build_wheel_trap(&params) {
            Err(Error::Parameter { field, .. }) => assert_eq!(field, "endcap_inner_diameter_um"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn negative_length_names_field() {
        let params = WheelTrapParams {
            cavity_length_um: -5.0,
            ..Default::default()
        };
        match build_wheel_trap(&params) {
            Err(Error::Parameter { field, .. }) => assert_eq!(field, "cavity_length_um"),
            other => panic!("{other:?}"),
        }
    }
}
