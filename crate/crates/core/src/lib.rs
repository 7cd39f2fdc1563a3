//! Simulation and analysis toolkit for a wheel-type linear Paul trap with an
//! integrated fiber Fabry-Pérot cavity.
//!
//! The pipeline runs from electrode geometry ([`geometry`]) through a
//! boundary-element electrostatic solve ([`field_solver`]) to the trapping
//! potential ([`trap_model`]), harmonic analysis and micromotion
//! ([`trap_analysis`]), fiber surface-charge compensation
//! ([`surface_charges`]) and ion crystals ([`ion_chain`]). The cavity QED
//! rate card lives in [`cavity_qed`] and motional-state fitting in
//! [`motional_thermometry`]. [`cli_io`] ties everything to configuration files and the
//! `fibertrap` command line tool.

pub mod cavity_qed;
pub mod cli_io;
pub mod constants;
pub mod error;
pub mod field_solver;
pub mod geometry;
pub mod ion_chain;
pub mod motional_thermometry;
pub mod numerics;
pub mod surface_charges;
pub mod trap_analysis;
pub mod trap_model;

pub use error::{Error, Result};
