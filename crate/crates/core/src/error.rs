use std::fmt;

use thiserror::Error;

/// Pipeline stage, used to tag failures in end-to-end runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Geometry,
    Electrostatics,
    Optics,
    Coupling,
    Converter,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Geometry => "geometry",
            Stage::Electrostatics => "electrostatics",
            Stage::Optics => "optics",
            Stage::Coupling => "coupling",
            Stage::Converter => "converter",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid material `{name}`: {reason}")]
    InvalidMaterial { name: String, reason: String },

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("region `{region}` is under-resolved: {cells:.2} cells across its {extent:.3e} m extent (need at least {required})")]
    UnderResolved {
        region: String,
        cells: f64,
        extent: f64,
        required: usize,
    },

    #[error("region `{0}` has zero area")]
    DegenerateRegion(String),

    #[error("unknown geometry preset `{0}` (expected G1, G2, G3 or G4)")]
    UnknownPreset(String),

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("{solver} did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    NoConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("no confined mode found: {0}")]
    NoConfinedMode(String),

    #[error("`{name}` must be positive, got {value:e}")]
    NonPositive { name: &'static str, value: f64 },

    #[error("`{name}` = {value:e} lies outside the supported range [{lo:e}, {hi:e}]")]
    OutOfRange {
        name: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("zero applied voltage: capacitance is undefined")]
    ZeroAppliedVoltage,

    #[error("zero-energy optical mode")]
    ZeroEnergyMode,

    #[error("cooperativity is zero: added noise is undefined")]
    ZeroCooperativity,

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("bracket failure: {0}")]
    BracketFailure(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("all {0} sweep points failed")]
    AllPointsFailed(usize),

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn in_stage(self, stage: Stage) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }

    /// True for errors caused by the user's configuration rather than by a
    /// solver or by the physics of the requested design.
    pub fn is_config_error(&self) -> bool {
        match self {
            Error::Config(_)
            | Error::UnknownPreset(_)
            | Error::InvalidMaterial { .. }
            | Error::InvalidGeometry(_)
            | Error::DegenerateRegion(_) => true,
            Error::Stage { source, .. } => source.is_config_error(),
            _ => false,
        }
    }

    pub fn stage(&self) -> Option<Stage> {
        match self {
            Error::Stage { stage, .. } => Some(*stage),
            _ => None,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn ensure_positive(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositive { name, value })
    }
}
