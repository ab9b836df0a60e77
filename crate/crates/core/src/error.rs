use std::fmt;

use crate::grid::ScalarField;

/// Stage of the stabilize-avoid pipeline that produced an error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Srcis,
    Rclvf,
    Shift,
    ReachAvoid,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::Srcis => "srcis",
            Stage::Rclvf => "rclvf",
            Stage::Shift => "shift",
            Stage::ReachAvoid => "reach-avoid",
        };
        f.write_str(name)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("fields are attached to different grids")]
    GridMismatch,

    #[error("time step {dt} exceeds the CFL bound {bound}")]
    CflViolation { dt: f64, bound: f64 },

    #[error("non-finite value at node {node} (time-to-go {time_to_go})")]
    NonFiniteValue { node: usize, time_to_go: f64 },

    #[error("no convergence: {reason}")]
    NoConvergence {
        reason: String,
        partial: Option<Box<ScalarField>>,
    },

    #[error("assumption violated: {0}")]
    AssumptionViolated(String),

    #[error("state outside the R-CLVF domain (value {value} exceeds cap {cap})")]
    OutsideDomain { value: f64, cap: f64 },

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed field file: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn at_stage(self, stage: Stage) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Strips any stage labels.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
