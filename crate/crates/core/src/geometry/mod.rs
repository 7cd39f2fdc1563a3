//! Electrode geometry: labeled primitives, the wheel-trap/fiber-cavity
//! assembly, and surface meshing into flat triangular panels.
//!
//! All user-facing lengths are in µm. Panels store coordinates in meters.

mod mesh;
mod primitive;
mod wheel;

pub use mesh::{mesh_surface, MeshOptions, Panel, PanelMesh, SizeField};
pub use primitive::{ElectrodePrimitive, Label, Pose, PrimitiveKind};
pub use wheel::{build_wheel_trap, WheelTrapParams};

pub type Vec3 = nalgebra::Vector3<f64>;
