use std::fmt;

use nalgebra::DVector;
use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, KornError>;

#[derive(Debug, Error)]
pub enum KornError {
    #[error("resolution too coarse: {0}")]
    Resolution(String),

    #[error("inadmissible ansatz scales: {0}")]
    Admissibility(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("trace condition violated for {component} at {location}: |value| = {value:e}")]
    Trace {
        component: &'static str,
        location: String,
        value: f64,
    },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("denominator form is singular (kernel vector of length {})", .vector.len())]
    SingularPencil { vector: DVector<f64> },

    #[error("eigensolver hit the iteration cap ({iterations}) with residual {residual:e}")]
    NotConverged {
        iterations: usize,
        residual: f64,
        best: Box<crate::eigen::EigenResult>,
    },

    #[error("denominator pivot ratio {ratio:e} exceeds the conditioning limit")]
    IllConditioned { ratio: f64 },

    #[error("linear solve failed: residual {residual:e}")]
    Solver { residual: f64 },

    #[error("fit failed at row {row}: {reason}")]
    Fit { row: usize, reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which of the three cylindrical components a message refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Component {
    R,
    Theta,
    Z,
}

impl Component {
    pub const ALL: [Component; 3] = [Component::R, Component::Theta, Component::Z];

    pub fn index(self) -> usize {
        match self {
            Component::R => 0,
            Component::Theta => 1,
            Component::Z => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Component::R => "phi_r",
            Component::Theta => "phi_theta",
            Component::Z => "phi_z",
        }
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
