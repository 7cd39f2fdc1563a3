//! Small numerical building blocks shared by the analysis modules.

pub mod lsq;
pub mod optimize;
pub mod roots;
pub mod spline;
