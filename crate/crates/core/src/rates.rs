//! Achievable-rate expressions for the superposition-coding schemes.
//!
//! Each rate is the minimum of a relay-decoding term and a receiver term.
//! The receiver term uses the single-letter lower bound
//! `sum_u pi_u I(X2|u; Y3|u)` on the mutual-information rate of the relay's
//! Markov symbol stream, not the n-letter limit itself.

use std::fmt;

use crate::battery::{
    build_kernel, check_regularity, recurrent_below_cost, ArrivalModel, BatterySpec, StatePolicy, StationaryAnalysis,
};
use crate::error::{Error, Result, Violation};
use crate::pmf::{conditional_entropy, mutual_information, BinaryChannel, Pmf};

/// Default lower bound on probabilities that must be strictly positive.
pub const DEFAULT_EPS_POS: f64 = 1e-6;

/// Gap below which both terms are reported as binding.
pub const BINDING_TIE: f64 = 1e-9;

/// Which channel model (and which rate expression) is meant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Theorem {
    /// Noiseless first hop, noisy second hop, joint per-state policy.
    NoisySecondHop,
    /// Noisy first hop, noiseless second hop, equivalent timing channel, `U = m`.
    Timing,
    /// Noisy first and second hops, product policy.
    NoisyBothHops,
    /// Noisy hops plus random energy loss at the relay.
    RandomLoss,
}

impl Theorem {
    pub const ALL: [Theorem; 4] = [
        Theorem::NoisySecondHop,
        Theorem::Timing,
        Theorem::NoisyBothHops,
        Theorem::RandomLoss,
    ];

    /// Numeric id, 1 through 4.
    pub fn id(self) -> u8 {
        match self {
            Theorem::NoisySecondHop => 1,
            Theorem::Timing => 2,
            Theorem::NoisyBothHops => 3,
            Theorem::RandomLoss => 4,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        Theorem::ALL.into_iter().find(|t| t.id() == id)
    }

    pub fn label(self) -> &'static str {
        match self {
            Theorem::NoisySecondHop => "noisy-second-hop",
            Theorem::Timing => "timing",
            Theorem::NoisyBothHops => "noisy-both-hops",
            Theorem::RandomLoss => "random-loss",
        }
    }
}

impl fmt::Display for Theorem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Binding {
    Relay,
    Receiver,
    Both,
}

impl fmt::Display for Binding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Binding::Relay => "relay",
            Binding::Receiver => "receiver",
            Binding::Both => "both",
        })
    }
}

/// The two terms of a rate expression and their minimum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateBreakdown {
    /// Rate at which the relay can decode the transmitter (bits/use).
    pub relay_bound: f64,
    /// Rate at which the receiver can decode the relay (bits/use).
    pub receiver_bound: f64,
    /// `min(relay_bound, receiver_bound)`; may be negative.
    pub rate: f64,
    /// `max(rate, 0)`.
    pub achievable: f64,
    pub binding: Binding,
}

impl RateBreakdown {
    pub fn new(relay_bound: f64, receiver_bound: f64) -> Self {
        let rate = relay_bound.min(receiver_bound);
        let binding = if (relay_bound - receiver_bound).abs() <= BINDING_TIE {
            Binding::Both
        } else if relay_bound < receiver_bound {
            Binding::Relay
        } else {
            Binding::Receiver
        };
        RateBreakdown {
            relay_bound,
            receiver_bound,
            rate,
            achievable: rate.max(0.0),
            binding,
        }
    }
}

/// Every positivity and support constraint of `theorem` that `policy` breaks.
pub fn feasibility_check(policy: &StatePolicy, theorem: Theorem, spec: &BatterySpec, eps_pos: f64) -> Vec<Violation> {
    let mode_ok = matches!(
        (theorem, policy),
        (Theorem::NoisySecondHop, StatePolicy::Joint(_))
            | (
                Theorem::NoisyBothHops | Theorem::RandomLoss,
                StatePolicy::Product { .. }
            )
    );
    if !mode_ok {
        let expected = match theorem {
            Theorem::NoisySecondHop => "a joint per-state policy",
            Theorem::Timing => "a timing scheme, not a state policy",
            _ => "a product policy p(x1) p(x2|u)",
        };
        return vec![Violation::WrongMode { expected }];
    }
    let mut out = policy.check_support(spec);
    if !out.is_empty() {
        return out;
    }
    for u in 0..spec.num_states() {
        let joint = policy.joint_at(u);
        if spec.can_spend(u) {
            if joint.cells().iter().any(|&p| p < eps_pos) {
                out.push(Violation::ZeroElement { state: u });
            }
        } else if theorem == Theorem::NoisySecondHop && joint.row_marginal().probs().iter().any(|&p| p < eps_pos) {
            out.push(Violation::ZeroMarginal { state: u });
        }
    }
    out
}

fn require_feasible(policy: &StatePolicy, theorem: Theorem, spec: &BatterySpec, eps_pos: f64) -> Result<()> {
    let v = feasibility_check(policy, theorem, spec, eps_pos);
    if v.is_empty() {
        Ok(())
    } else {
        Err(Error::Constraint(v))
    }
}

/// `sum_u pi_u I(X2|u; Y3|u)`.
fn weighted_relay_information(analysis: &StationaryAnalysis, policy: &StatePolicy, ch2: &BinaryChannel) -> Result<f64> {
    let mut total = 0.0;
    for (u, &pi) in analysis.pi.probs().iter().enumerate() {
        if pi > 0.0 {
            total += pi * mutual_information(&policy.x2_at(u), ch2)?;
        }
    }
    Ok(total)
}

/// Receiver information term for the product-policy schemes. A chain that is
/// not regular but whose closed classes all sit below the cost is silent in
/// the long run, so the term is zero for every stationary law.
fn long_run_relay_information(
    spec: &BatterySpec,
    policy: &StatePolicy,
    arrival: &ArrivalModel,
    ch2: &BinaryChannel,
) -> Result<f64> {
    let kernel = build_kernel(spec, policy, arrival)?;
    if !check_regularity(&kernel).has_steady_state() && recurrent_below_cost(spec, &kernel) {
        return Ok(0.0);
    }
    weighted_relay_information(&StationaryAnalysis::of(kernel)?, policy, ch2)
}

/// Noiseless first hop, noisy second hop `ch2`:
/// `min { sum_u pi_u I(X2|u; Y3|u), sum_u pi_u H(X1|u | X2|u) }`.
pub fn rate_thm1(spec: &BatterySpec, policy: &StatePolicy, ch2: &BinaryChannel, eps_pos: f64) -> Result<RateBreakdown> {
    ch2.require_informative()?;
    require_feasible(policy, Theorem::NoisySecondHop, spec, eps_pos)?;
    let analysis = StationaryAnalysis::build(spec, policy, &ArrivalModel::Deterministic)?;
    let receiver = weighted_relay_information(&analysis, policy, ch2)?;
    let relay: f64 = analysis
        .pi
        .probs()
        .iter()
        .enumerate()
        .map(|(u, &pi)| pi * conditional_entropy(&policy.joint_at(u)))
        .sum();
    Ok(RateBreakdown::new(relay, receiver))
}

fn product_x1(policy: &StatePolicy) -> &Pmf {
    match policy {
        StatePolicy::Product { x1, .. } => x1,
        StatePolicy::Joint(_) => unreachable!("feasibility check admits only product policies here"),
    }
}

/// Noisy first hop `ch1` and second hop `ch2`, product policy:
/// `min { sum_u pi_u I(X2|u; Y3|u) - H(Y2|X1), I(X1; Y2) }`.
pub fn rate_thm3(
    spec: &BatterySpec,
    policy: &StatePolicy,
    ch1: &BinaryChannel,
    ch2: &BinaryChannel,
    eps_pos: f64,
) -> Result<RateBreakdown> {
    ch2.require_informative()?;
    spec.require_capacity_covers_cost()?;
    require_feasible(policy, Theorem::NoisyBothHops, spec, eps_pos)?;
    let x1 = product_x1(policy);
    let receiver =
        long_run_relay_information(spec, policy, &ArrivalModel::Channel(*ch1), ch2)? - ch1.noise_entropy(x1)?;
    let relay = mutual_information(x1, ch1)?;
    Ok(RateBreakdown::new(relay, receiver))
}

/// `p(e | x1) = sum_y2 p(y2 | x1) p(e | y2)` and `H(E | X1)`.
pub fn energy_equivocation(x1: &Pmf, ch1: &BinaryChannel, loss: &[Pmf; 2]) -> Result<f64> {
    let arrival = ArrivalModel::Lossy {
        channel: *ch1,
        energy: loss.clone(),
    };
    let e_given_x1 = arrival.energy_given_x1()?;
    Ok(x1.get(0) * e_given_x1[0].entropy() + x1.get(1) * e_given_x1[1].entropy())
}

/// As [`rate_thm3`], but the relay harvests a random `E` in `0..m` per
/// received "1" according to `loss[y2]`:
/// `min { sum_u pi_u I(X2|u; Y3|u) - H(E|X1), I(X1; Y2) }`.
pub fn rate_thm4(
    spec: &BatterySpec,
    policy: &StatePolicy,
    ch1: &BinaryChannel,
    ch2: &BinaryChannel,
    loss: &[Pmf; 2],
    eps_pos: f64,
) -> Result<RateBreakdown> {
    ch2.require_informative()?;
    spec.require_capacity_covers_cost()?;
    require_feasible(policy, Theorem::RandomLoss, spec, eps_pos)?;
    let x1 = product_x1(policy);
    let arrival = ArrivalModel::Lossy {
        channel: *ch1,
        energy: loss.clone(),
    };
    let receiver = long_run_relay_information(spec, policy, &arrival, ch2)? - energy_equivocation(x1, ch1, loss)?;
    let relay = mutual_information(x1, ch1)?;
    Ok(RateBreakdown::new(relay, receiver))
}

/// Product policy with `p(x1 = 1) = p1` and `p(x2 = 1 | u) = send` for every
/// `u >= m` (zero below).
pub fn product_policy(spec: &BatterySpec, p1: f64, send: f64) -> Result<StatePolicy> {
    let x2_given_u = (0..spec.num_states())
        .map(|u| {
            if spec.can_spend(u) {
                Pmf::bernoulli(send)
            } else {
                Ok(Pmf::point(2, 0))
            }
        })
        .collect::<Result<_>>()?;
    Ok(StatePolicy::Product {
        x1: Pmf::bernoulli(p1)?,
        x2_given_u,
    })
}
