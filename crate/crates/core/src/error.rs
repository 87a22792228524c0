//! Error type shared by the solver, population and control modules.

use core::fmt;

use crate::fpe::Species;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An agent temperature left the representable range.
    NonFiniteTemperature { value: f64 },
    /// A population of zero agents was requested.
    EmptyPopulation,
    /// The requested step exceeds the explicit-scheme stability bound.
    CflViolation { dt: f64, admissible: f64 },
    /// A field cell went negative beyond the round-off allowance.
    PositivityViolation {
        species: Species,
        index: usize,
        value: f64,
    },
    /// Zero diffusion and zero advection: no admissible step exists.
    DegenerateSystem,
    /// ON-state mass fell below the controller's denominator floor.
    ControlSingularity { on_mass: f64, floor: f64 },
    /// A schedule segment violates construction or endpoint conditions.
    InvalidSchedule {
        segment: usize,
        reason: &'static str,
    },
    /// A trajectory was evaluated outside its horizon.
    OutOfHorizon { t: f64, horizon: f64 },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::NonFiniteTemperature { value } => {
                write!(f, "non-finite agent temperature: {value}")
            }
            Error::EmptyPopulation => write!(f, "population size must be at least 1"),
            Error::CflViolation { dt, admissible } => {
                write!(f, "dt = {dt} exceeds the admissible step {admissible}")
            }
            Error::PositivityViolation {
                species,
                index,
                value,
            } => write!(
                f,
                "{species:?} density went negative at cell {index}: {value}"
            ),
            Error::DegenerateSystem => {
                write!(f, "zero diffusion and zero advection: system is degenerate")
            }
            Error::ControlSingularity { on_mass, floor } => write!(
                f,
                "ON-state mass {on_mass} below the denominator floor {floor}"
            ),
            Error::InvalidSchedule { segment, reason } => {
                write!(f, "schedule segment {segment} invalid: {reason}")
            }
            Error::OutOfHorizon { t, horizon } => {
                write!(f, "t = {t} outside the schedule horizon [0, {horizon}]")
            }
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
