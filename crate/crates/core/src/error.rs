use std::fmt;

use thiserror::Error;

/// A single broken constraint reported by [`crate::rates::feasibility_check`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// The policy puts mass on `x2 = 1` in a state that cannot afford it.
    SpendingBelowCost { state: usize },
    /// A joint (or product) cell is below the interior bound in a state `u >= m`.
    ZeroElement { state: usize },
    /// The `x1` marginal is below the interior bound in a state `u < m`.
    ZeroMarginal { state: usize },
    /// The policy has the wrong number of per-state entries.
    StateCount { expected: usize, found: usize },
    /// The policy shape does not match what the theorem optimizes over.
    WrongMode { expected: &'static str },
    /// A per-state table has the wrong alphabet sizes.
    Shape { state: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::SpendingBelowCost { state } => {
                write!(f, "spending below cost at state {state}")
            }
            Violation::ZeroElement { state } => write!(f, "zero element at state {state}"),
            Violation::ZeroMarginal { state } => {
                write!(f, "zero element in x1 marginal at state {state}")
            }
            Violation::StateCount { expected, found } => {
                write!(f, "policy covers {found} states, battery has {expected}")
            }
            Violation::WrongMode { expected } => write!(f, "policy must be {expected}"),
            Violation::Shape { state } => write!(f, "table at state {state} is not 2x2"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("infeasible policy: {}", join(.0))]
    Constraint(Vec<Violation>),

    #[error("second-hop channel has q1 + q2 = 1 ({q1} + {q2}); its output carries no information")]
    ChannelClass { q1: f64, q2: f64 },

    #[error("battery chain has no steady state (indecomposable: {indecomposable}, self-loop state: {self_loop})")]
    NoSteadyState { indecomposable: bool, self_loop: bool },

    #[error("support mismatch: p = {p} where q = 0")]
    SupportMismatch { p: f64 },

    #[error("timing noise is degenerate: arrival probability must be positive")]
    DegenerateNoise,

    #[error("truncation horizon {zmax} keeps only {mass} of the timing-noise mass")]
    HorizonTooSmall { zmax: usize, mass: f64 },

    #[error("wait table does not cover (u = {u}, z = {z})")]
    Coverage { u: usize, z: usize },

    #[error("budget exceeded: {0}")]
    Budget(String),

    #[error("empty observation sequence")]
    EmptySequence,

    #[error("numerical failure: {0}")]
    Numerical(String),
}

fn join(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Validation(msg.into()))
}
