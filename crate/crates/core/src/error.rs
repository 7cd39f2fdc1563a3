use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    Parameter { field: String, reason: String },

    #[error("mesh resolution h = {h_um} µm exceeds the smallest feature ({feature_um} µm) of {primitive}")]
    Resolution {
        h_um: f64,
        feature_um: f64,
        primitive: String,
    },

    #[error("linear solve failed: {reason} (condition estimate {condition:.3e})")]
    Solver { reason: String, condition: f64 },

    #[error("panel count {panels} exceeds the configured cap of {cap}")]
    Resource { panels: usize, cap: usize },

    #[error("point ({x:.3}, {y:.3}, {z:.3}) µm lies inside conductor {label}")]
    Domain { x: f64, y: f64, z: f64, label: String },

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("potential is anti-confining along {axis} (curvature {curvature:.4e} eV/µm²)")]
    AntiConfinement { axis: String, curvature: f64 },

    #[error("optimization did not converge after {iterations} iterations: {reason}")]
    Optimization {
        iterations: usize,
        reason: String,
        trace: Vec<String>,
    },

    #[error("no sign change in bracket [{lo}, {hi}]: f(lo) = {f_lo:.4e}, f(hi) = {f_hi:.4e}")]
    Bracketing { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },

    #[error("unstable: {0}")]
    Stability(String),

    #[error("{0}")]
    Regime(String),

    #[error("value {value} outside allowed range: {reason}")]
    OutOfRange { value: f64, reason: String },

    #[error("invalid weighting: {0}")]
    Weighting(String),

    #[error("trace does not resolve a full oscillation: {0}")]
    UnderResolved(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn parameter(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Parameter {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code; one class per error family.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parameter { .. } | Error::Config(_) => 2,
            Error::Resolution { .. } => 3,
            Error::Solver { .. } | Error::Resource { .. } => 4,
            Error::Domain { .. } => 5,
            Error::Fit(_) | Error::AntiConfinement { .. } | Error::Optimization { .. } | Error::Bracketing { .. } => 6,
            Error::Stability(_) => 7,
            Error::Regime(_) | Error::OutOfRange { .. } | Error::Weighting(_) | Error::UnderResolved(_) => 8,
            Error::Io { .. } => 9,
        }
    }
}
