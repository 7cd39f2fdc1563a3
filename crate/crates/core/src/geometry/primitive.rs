use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Rotation3};
use serde::{Deserialize, Serialize};

use super::Vec3;
use crate::error::{Error, Result};

/// Electrode or surface label. Conductors are voltage driven (or grounded);
/// fiber facets are dielectric and carry a prescribed surface charge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Label {
    RfA,
    RfB,
    DcPc,
    DcMm,
    Comp(u8),
    FacetPc,
    FacetMm,
    /// Conductor held at 0 V.
    Ground,
    /// Auxiliary conductor for test geometries.
    Aux(u8),
}

impl Label {
    pub fn is_facet(self) -> bool {
        matches!(self, Label::FacetPc | Label::FacetMm)
    }

    pub fn is_conductor(self) -> bool {
        !self.is_facet()
    }

    /// Conductors that receive their own unit-voltage basis solution.
    pub fn is_driven(self) -> bool {
        self.is_conductor() && self != Label::Ground
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::RfA => write!(f, "RF_A"),
            Label::RfB => write!(f, "RF_B"),
            Label::DcPc => write!(f, "DC_PC"),
            Label::DcMm => write!(f, "DC_MM"),
            Label::Comp(i) => write!(f, "COMP_{i}"),
            Label::FacetPc => write!(f, "FIBER_FACET_PC"),
            Label::FacetMm => write!(f, "FIBER_FACET_MM"),
            Label::Ground => write!(f, "GROUND"),
            Label::Aux(i) => write!(f, "AUX_{i}"),
        }
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let fixed = match s {
            "RF_A" => Some(Label::RfA),
            "RF_B" => Some(Label::RfB),
            "DC_PC" => Some(Label::DcPc),
            "DC_MM" => Some(Label::DcMm),
            "FIBER_FACET_PC" => Some(Label::FacetPc),
            "FIBER_FACET_MM" => Some(Label::FacetMm),
            "GROUND" => Some(Label::Ground),
            _ => None,
        };
        if let Some(l) = fixed {
            return Ok(l);
        }
        let indexed = |prefix: &str| s.strip_prefix(prefix).and_then(|n| n.parse::<u8>().ok());
        if let Some(i) = indexed("COMP_") {
            return Ok(Label::Comp(i));
        }
        if let Some(i) = indexed("AUX_") {
            return Ok(Label::Aux(i));
        }
        Err(Error::parameter("label", format!("unknown electrode label `{s}`")))
    }
}

impl From<Label> for String {
    fn from(l: Label) -> String {
        l.to_string()
    }
}

impl TryFrom<String> for Label {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Rigid placement of a primitive: position (µm) and orientation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vec3,
    pub rotation: Rotation3<f64>,
}

impl Pose {
    pub fn at(x: f64, y: f64, z: f64) -> Self {
        Self {
            position: Vec3::new(x, y, z),
            rotation: Rotation3::identity(),
        }
    }

    pub fn with_rotation(mut self, rotation: Rotation3<f64>) -> Self {
        self.rotation = rotation;
        self
    }

    /// Rotation by `quarter_turns`·90° about z, built from exact matrix entries.
    pub fn quarter_turn_z(quarter_turns: i32) -> Rotation3<f64> {
        let (c, s) = match quarter_turns.rem_euclid(4) {
            0 => (1.0, 0.0),
            1 => (0.0, 1.0),
            2 => (-1.0, 0.0),
            _ => (0.0, -1.0),
        };
        Rotation3::from_matrix_unchecked(Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0))
    }

    /// Half turn about x (maps z → −z, y → −y), exact.
    pub fn half_turn_x() -> Rotation3<f64> {
        Rotation3::from_matrix_unchecked(Matrix3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0))
    }

    pub fn to_global(&self, local: &Vec3) -> Vec3 {
        self.rotation * local + self.position
    }

    pub fn to_local(&self, global: &Vec3) -> Vec3 {
        self.rotation.inverse() * (global - self.position)
    }
}

impl Serialize for Pose {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Repr {
            position_um: [f64; 3],
            rotation: [[f64; 3]; 3],
        }
        let m = self.rotation.matrix();
        Repr {
            position_um: [self.position.x, self.position.y, self.position.z],
            rotation: [
                [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
                [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
                [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
            ],
        }
        .serialize(s)
    }
}

/// Shape and dimensions (µm) in the primitive's local frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PrimitiveKind {
    /// Rectangular prism centered on the local origin; `size` = extents along local x, y, z.
    BoxBlade {
        size: [f64; 3],
    },
    /// Tube along local +z; front annulus at z = 0, back annulus at z = `length`.
    HollowCylinder {
        inner_diameter: f64,
        outer_diameter: f64,
        length: f64,
    },
    /// Zero-thickness disk in the local x-y plane with normal +z.
    Disk {
        diameter: f64,
    },
    Sphere {
        diameter: f64,
    },
    /// Zero-thickness rectangle in the local x-y plane with normal +z.
    Plate {
        width: f64,
        height: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ElectrodePrimitive {
    #[serde(flatten)]
    pub kind: PrimitiveKind,
    pub pose: Pose,
    pub label: Label,
}

impl ElectrodePrimitive {
    pub fn new(kind: PrimitiveKind, pose: Pose, label: Label) -> Result<Self> {
        let p = Self { kind, pose, label };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::parameter(
                    format!("{}.{name}", self.label),
                    format!("must be strictly positive, got {v}"),
                ))
            }
        };
        match self.kind {
            PrimitiveKind::BoxBlade { size } => {
                positive("size_x", size[0])?;
                positive("size_y", size[1])?;
                positive("size_z", size[2])
            }
            PrimitiveKind::HollowCylinder {
                inner_diameter,
                outer_diameter,
                length,
            } => {
                positive("inner_diameter", inner_diameter)?;
                positive("outer_diameter", outer_diameter)?;
                positive("length", length)?;
                if inner_diameter >= outer_diameter {
                    return Err(Error::parameter(
                        format!("{}.inner_diameter", self.label),
                        format!("inner diameter {inner_diameter} must be below outer diameter {outer_diameter}"),
                    ));
                }
                Ok(())
            }
            PrimitiveKind::Disk { diameter } | PrimitiveKind::Sphere { diameter } => positive("diameter", diameter),
            PrimitiveKind::Plate { width, height } => {
                positive("width", width)?;
                positive("height", height)
            }
        }
    }

    /// Closed-form surface area (µm²).
    pub fn surface_area_um2(&self) -> f64 {
        match self.kind {
            PrimitiveKind::BoxBlade { size: [a, b, c] } => 2.0 * (a * b + b * c + c * a),
            PrimitiveKind::HollowCylinder {
                inner_diameter,
                outer_diameter,
                length,
            } => {
                let (ri, ro) = (inner_diameter / 2.0, outer_diameter / 2.0);
                2.0 * PI * (ri + ro) * length + 2.0 * PI * (ro * ro - ri * ri)
            }
            PrimitiveKind::Disk { diameter } => PI * diameter * diameter / 4.0,
            PrimitiveKind::Sphere { diameter } => PI * diameter * diameter,
            PrimitiveKind::Plate { width, height } => width * height,
        }
    }

    /// Smallest geometric feature (µm) the mesh must resolve.
    pub fn smallest_feature_um(&self) -> f64 {
        match self.kind {
            PrimitiveKind::BoxBlade { size } => size.iter().copied().fold(f64::INFINITY, f64::min),
            PrimitiveKind::HollowCylinder {
                inner_diameter,
                outer_diameter,
                length,
            } => ((outer_diameter - inner_diameter) / 2.0).min(length),
            PrimitiveKind::Disk { diameter } | PrimitiveKind::Sphere { diameter } => diameter / 2.0,
            PrimitiveKind::Plate { width, height } => width.min(height),
        }
    }

    /// Whether a global point (µm) lies strictly inside the conductor volume.
    pub fn contains(&self, point_um: &Vec3) -> bool {
        let p = self.pose.to_local(point_um);
        let eps = 1e-9;
        match self.kind {
            PrimitiveKind::BoxBlade { size } => (0..3).all(|i| p[i].abs() < size[i] / 2.0 - eps),
            PrimitiveKind::HollowCylinder {
                inner_diameter,
                outer_diameter,
                length,
            } => {
                let r = (p.x * p.x + p.y * p.y).sqrt();
                r > inner_diameter / 2.0 + eps && r < outer_diameter / 2.0 - eps && p.z > eps && p.z < length - eps
            }
            PrimitiveKind::Sphere { diameter } => p.norm() < diameter / 2.0 - eps,
            PrimitiveKind::Disk { .. } | PrimitiveKind::Plate { .. } => false,
        }
    }

    pub fn translated(&self, d: Vec3) -> Self {
        let mut p = self.clone();
        p.pose.position += d;
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_round_trip() {
        for l in [
            Label::RfA,
            Label::RfB,
            Label::DcPc,
            Label::DcMm,
            Label::Comp(3),
            Label::FacetPc,
            Label::FacetMm,
            Label::Ground,
            Label::Aux(7),
        ] {
            assert_eq!(l.to_string().parse::<Label>().unwrap(), l);
        }
        assert!("RF_C".parse::<Label>().is_err());
    }

    #[test]
    fn hollow_cylinder_rejects_inverted_diameters() {
        let r = ElectrodePrimitive::new(
            PrimitiveKind::HollowCylinder {
                inner_diameter: 500.0,
                outer_diameter: 250.0,
                length: 100.0,
            },
            Pose::at(0.0, 0.0, 0.0),
            Label::DcPc,
        );
        match r {
            Err(Error::Parameter { field, .. }) => assert_eq!(field, "DC_PC.inner_diameter"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn zero_dimension_rejected() {
        let r = ElectrodePrimitive::new(
            PrimitiveKind::Sphere { diameter: 0.0 },
            Pose::at(0.0, 0.0, 0.0),
            Label::Aux(0),
        );
        assert!(matches!(r, Err(Error::Parameter { .. })));
    }

    #[test]
    fn containment_respects_pose() {
        let p = ElectrodePrimitive::new(
            PrimitiveKind::HollowCylinder {
                inner_diameter: 250.0,
                outer_diameter: 500.0,
                length: 700.0,
            },
            Pose::at(0.0, 0.0, -240.0).with_rotation(Pose::half_turn_x()),
            Label::DcMm,
        )
        .unwrap();
        assert!(p.contains(&Vec3::new(200.0, 0.0, -300.0)));
        assert!(!p.contains(&Vec3::new(200.0, 0.0, 300.0)));
        assert!(!p.contains(&Vec3::new(0.0, 0.0, -300.0)));
    }
}
