use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Component, KornError, Result};

/// Thin circular cylindrical shell `I_h x T x [0, L]` with `I_h = [1 - h/2, 1 + h/2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShellGeometry {
    h: f64,
    length: f64,
}

impl ShellGeometry {
    pub fn new(h: f64, length: f64) -> Result<Self> {
        if !(h > 0.0 && h < 1.0) {
            return Err(KornError::Config(format!(
                "thickness h must lie in (0, 1), got {h}"
            )));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(KornError::Config(format!(
                "length L must be positive, got {length}"
            )));
        }
        Ok(Self { h, length })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// The radial interval `I_h`.
    pub fn radial_interval(&self) -> (f64, f64) {
        (1.0 - 0.5 * self.h, 1.0 + 0.5 * self.h)
    }

    /// Volume of the shell, `2 pi L h`.
    pub fn volume(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.length * self.h
    }
}

/// Essential trace conditions of one component at the two ends of the shell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct EndTraces {
    /// Component vanishes at `z = 0`.
    pub bottom: bool,
    /// Component vanishes at `z = L`.
    pub top: bool,
}

impl EndTraces {
    pub const FREE: EndTraces = EndTraces {
        bottom: false,
        top: false,
    };
    pub const BOTH: EndTraces = EndTraces {
        bottom: true,
        top: true,
    };
    pub const BOTTOM: EndTraces = EndTraces {
        bottom: true,
        top: false,
    };

    /// True when every condition of `other` is also imposed here.
    pub fn implies(&self, other: &EndTraces) -> bool {
        (self.bottom || !other.bottom) && (self.top || !other.top)
    }
}

/// Admissible displacement spaces on the shell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FunctionSpace {
    /// Clamped at both ends.
    V0,
    /// Fixed bottom; top allows only axial displacement.
    V1,
    /// Ends may breathe: `phi_theta`, `phi_z` vanish at both ends.
    V2,
    /// `phi_theta`, `phi_z` vanish at the bottom, `phi_theta` at the top.
    Vstar,
    /// `phi_r, phi_theta ~ sin(pi m z / L)`, `phi_z ~ cos(pi m z / L)`.
    ParityOdd,
    /// `phi_r, phi_theta ~ cos(pi m z / L)`, `phi_z ~ sin(pi m z / L)`.
    ParityEven,
}

impl FunctionSpace {
    pub const ALL: [FunctionSpace; 6] = [
        FunctionSpace::V0,
        FunctionSpace::V1,
        FunctionSpace::V2,
        FunctionSpace::Vstar,
        FunctionSpace::ParityOdd,
        FunctionSpace::ParityEven,
    ];

    /// Trace conditions per component, ordered `(phi_r, phi_theta, phi_z)`.
    ///
    /// For the parity spaces these are the essential conditions of the
    /// H^1 closure of the sine/cosine families: sine components vanish at
    /// both ends, cosine components are free.
    pub fn traces(&self) -> [EndTraces; 3] {
        use EndTraces as T;
        match self {
            FunctionSpace::V0 => [T::BOTH, T::BOTH, T::BOTH],
            FunctionSpace::V1 => [T::BOTH, T::BOTH, T::BOTTOM],
            FunctionSpace::V2 => [T::FREE, T::BOTH, T::BOTH],
            FunctionSpace::Vstar => [T::FREE, T::BOTH, T::BOTTOM],
            FunctionSpace::ParityOdd => [T::BOTH, T::BOTH, T::FREE],
            FunctionSpace::ParityEven => [T::FREE, T::FREE, T::BOTH],
        }
    }

    pub fn trace(&self, c: Component) -> EndTraces {
        self.traces()[c.index()]
    }

    /// True when `self` is a subspace of `other`.
    pub fn is_subspace_of(&self, other: &FunctionSpace) -> bool {
        self.traces()
            .iter()
            .zip(other.traces().iter())
            .all(|(mine, theirs)| mine.implies(theirs))
    }

    pub fn is_parity(&self) -> bool {
        matches!(self, FunctionSpace::ParityOdd | FunctionSpace::ParityEven)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            FunctionSpace::V0 => "v0",
            FunctionSpace::V1 => "v1",
            FunctionSpace::V2 => "v2",
            FunctionSpace::Vstar => "vstar",
            FunctionSpace::ParityOdd => "parity-odd",
            FunctionSpace::ParityEven => "parity-even",
        }
    }
}

impl fmt::Display for FunctionSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FunctionSpace {
    type Err = KornError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "v0" => Ok(FunctionSpace::V0),
            "v1" => Ok(FunctionSpace::V1),
            "v2" => Ok(FunctionSpace::V2),
            "vstar" | "v*" => Ok(FunctionSpace::Vstar),
            "parity-odd" | "odd" => Ok(FunctionSpace::ParityOdd),
            "parity-even" | "even" => Ok(FunctionSpace::ParityEven),
            other => Err(KornError::Config(format!("unknown space '{other}'"))),
        }
    }
}
