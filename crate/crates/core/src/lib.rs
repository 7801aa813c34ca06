//! Achievable information rates for a binary two-hop relay channel whose
//! relay harvests energy from the first hop and stores it in a finite
//! battery, plus seeded Monte Carlo experiments that check the stochastic
//! behaviour those rates rely on.
//!
//! Module map:
//!
//! - [`pmf`]: distributions, entropies, the binary memoryless channel.
//! - [`battery`]: battery-state kernel, regularity check, stationary law.
//! - [`chain`]: the pair chain `(U_i, U_{i+1})`, its entropy rate and
//!   forward likelihoods.
//! - [`rates`]: rate expressions for the superposition-coding schemes.
//! - [`timing`]: the equivalent timing channel and its rate.
//! - [`optimize`]: maximization over policies and parameter sweeps.
//! - [`mc`]: Monte Carlo lab.

pub mod battery;
pub mod chain;
pub mod error;
pub mod mc;
pub mod optimize;
mod par;
pub mod pmf;
pub mod rates;
pub mod timing;

pub use battery::{ArrivalModel, BatterySpec, Kernel, Regularity, StatePolicy, StationaryAnalysis};
pub use chain::PairChain;
pub use error::{Error, Result, Violation};
pub use pmf::{BinaryChannel, JointPmf, Pmf};
pub use rates::{Binding, RateBreakdown, Theorem};
