//! Markov chains with a deterministic binary emission: the pair chain
//! `S_i = (U_i, U_{i+1})` that drives the relay's symbol sequence, its
//! entropy rate, and exact hidden-Markov likelihoods.

use crate::battery::{transition_weights, ArrivalModel, BatterySpec, Kernel, StatePolicy, StationaryAnalysis};
use crate::error::{invalid, Error, Result};
use crate::pmf::BinaryChannel;

/// Label of a pair-chain state built from the battery chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct PairState {
    pub from: usize,
    pub to: usize,
    /// Relay symbol sent on the transition.
    pub x2: u8,
}

/// A finite Markov chain whose states each emit a fixed binary symbol.
#[derive(Debug, Clone)]
pub struct PairChain {
    labels: Vec<PairState>,
    transition: Vec<Vec<f64>>,
    emission: Vec<u8>,
    stationary: Vec<f64>,
}

impl PairChain {
    /// A generic chain; the stationary law is solved from `transition`.
    pub fn new(transition: Vec<Vec<f64>>, emission: Vec<u8>) -> Result<Self> {
        if emission.len() != transition.len() {
            return invalid("one emission symbol per state is required");
        }
        if emission.iter().any(|&x| x > 1) {
            return invalid("emissions must be binary");
        }
        let kernel = Kernel::new(transition)?;
        let pi = crate::battery::stationary(&kernel)?;
        Ok(PairChain {
            labels: Vec::new(),
            transition: kernel.rows().to_vec(),
            emission,
            stationary: pi.probs().to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.transition.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transition.is_empty()
    }

    /// Battery labels, empty for chains built with [`PairChain::new`].
    pub fn labels(&self) -> &[PairState] {
        &self.labels
    }

    pub fn transition(&self) -> &[Vec<f64>] {
        &self.transition
    }

    pub fn emission(&self) -> &[u8] {
        &self.emission
    }

    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }

    /// Index of the state labelled `(from, to, x2)`.
    pub fn find(&self, from: usize, to: usize, x2: u8) -> Option<usize> {
        self.labels.iter().position(|l| *l == PairState { from, to, x2 })
    }

    /// Stationary mass aggregated over the first battery coordinate.
    pub fn first_marginal(&self, num_battery_states: usize) -> Vec<f64> {
        let mut m = vec![0.0; num_battery_states];
        for (l, p) in self.labels.iter().zip(&self.stationary) {
            m[l.from] += p;
        }
        m
    }

    /// From every state, distinct successors emit distinct symbols, so the
    /// emitted sequence pins down the state path.
    pub fn emissions_injective(&self) -> bool {
        self.transition.iter().all(|row| {
            let mut seen = [false; 2];
            row.iter()
                .zip(&self.emission)
                .filter(|(p, _)| **p > 0.0)
                .all(|(_, &x)| {
                    let fresh = !seen[x as usize];
                    seen[x as usize] = true;
                    fresh
                })
        })
    }
}

/// Pair chain `(U_i, U_{i+1})` with the relay symbol on each transition.
///
/// States are keyed by `(u, u', x2)` so the emission stays deterministic even
/// if two symbols could lead to the same transition. With `m > 1` and energy
/// arrivals below `m` this never happens and the states are exactly the
/// positive-probability pairs.
pub fn pair_chain(
    spec: &BatterySpec,
    policy: &StatePolicy,
    arrival: &ArrivalModel,
    analysis: &StationaryAnalysis,
) -> Result<PairChain> {
    let w = transition_weights(spec, policy, arrival)?;
    let n = spec.num_states();
    let mut labels = Vec::new();
    for (u, row) in w.iter().enumerate() {
        for (v, cell) in row.iter().enumerate() {
            for x2 in 0..2 {
                if cell[x2] > 0.0 {
                    labels.push(PairState {
                        from: u,
                        to: v,
                        x2: x2 as u8,
                    });
                }
            }
        }
    }
    let index_from: Vec<Vec<usize>> = (0..n)
        .map(|u| (0..labels.len()).filter(|&i| labels[i].from == u).collect())
        .collect();
    let transition = labels
        .iter()
        .map(|l| {
            let mut row = vec![0.0; labels.len()];
            for &j in &index_from[l.to] {
                let next = labels[j];
                row[j] = w[next.from][next.to][next.x2 as usize];
            }
            row
        })
        .collect();
    let pi = analysis.pi.probs();
    let stationary = labels
        .iter()
        .map(|l| pi[l.from] * w[l.from][l.to][l.x2 as usize])
        .collect();
    let emission = labels.iter().map(|l| l.x2).collect();
    Ok(PairChain {
        labels,
        transition,
        emission,
        stationary,
    })
}

/// `sum_s pi_s sum_s' P(s, s') (-log2 P(s, s'))`.
///
/// This is the entropy rate of the emitted symbols when
/// [`PairChain::emissions_injective`] holds, and an upper bound otherwise.
pub fn markov_entropy_rate(chain: &PairChain) -> f64 {
    chain
        .stationary
        .iter()
        .zip(&chain.transition)
        .map(|(pi, row)| pi * row.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.log2()).sum::<f64>())
        .sum()
}

/// Natural-log probability of `observed` when the chain starts from its
/// stationary law and each emitted symbol passes through `channel`
/// (`None` means the symbols are observed directly).
///
/// Forward recursion with per-step renormalization.
pub fn forward_loglik(chain: &PairChain, channel: Option<&BinaryChannel>, observed: &[u8]) -> Result<f64> {
    if observed.is_empty() {
        return Err(Error::EmptySequence);
    }
    if observed.iter().any(|&y| y > 1) {
        return invalid("observations must be binary");
    }
    let emit = |s: usize, y: u8| -> f64 {
        let x = chain.emission[s] as usize;
        match channel {
            Some(ch) => ch.prob(x, y as usize),
            None => f64::from(u8::from(x == y as usize)),
        }
    };
    let n = chain.len();
    let mut alpha: Vec<f64> = (0..n).map(|s| chain.stationary[s] * emit(s, observed[0])).collect();
    let mut next = vec![0.0; n];
    let mut loglik = 0.0;
    for (step, &y) in observed.iter().enumerate() {
        if step > 0 {
            next.iter_mut().for_each(|v| *v = 0.0);
            for (i, &a) in alpha.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (j, &p) in chain.transition[i].iter().enumerate() {
                    if p > 0.0 {
                        next[j] += a * p;
                    }
                }
            }
            for (j, v) in next.iter_mut().enumerate() {
                *v *= emit(j, y);
            }
            std::mem::swap(&mut alpha, &mut next);
        }
        let scale: f64 = alpha.iter().sum();
        if scale <= 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        loglik += scale.ln();
        alpha.iter_mut().for_each(|a| *a /= scale);
    }
    Ok(loglik)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::battery::tests::worked_example;
    use crate::battery::StationaryAnalysis;
    use crate::pmf::{JointPmf, Pmf};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn worked_chain() -> PairChain {
        let (spec, policy) = worked_example();
        let a = StationaryAnalysis::build(&spec, &policy, &ArrivalModel::Deterministic).unwrap();
        pair_chain(&spec, &policy, &ArrivalModel::Deterministic, &a).unwrap()
    }

    #[test]
    fn worked_example_pairs() {
        let c = worked_chain();
        assert_eq!(c.len(), 7);
        assert!(c.find(2, 0, 1).is_some());
        assert!(c.find(2, 0, 0).is_none());
        assert!(c.find(0, 1, 0).is_some());
        let marg = c.first_marginal(3);
        for (got, want) in marg.iter().zip([0.2, 0.4, 0.4]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(c.stationary().iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        // From level 2 the relay may spend and land on 0 or 1 depending on the
        // hidden arrival, so two successors share the emission.
        assert!(!c.emissions_injective());
    }

    #[test]
    fn pair_stationary_is_invariant() {
        let c = worked_chain();
        let n = c.len();
        for j in 0..n {
            let v: f64 = (0..n).map(|i| c.stationary()[i] * c.transition()[i][j]).sum();
            assert_abs_diff_eq!(v, c.stationary()[j], epsilon = 1e-12);
        }
    }

    #[test]
    fn no_spending_emits_zeros() {
        let spec = BatterySpec::new(3, 2).unwrap();
        let j = JointPmf::new(vec![vec![0.5, 0.0], vec![0.5, 0.0]]).unwrap();
        let policy = StatePolicy::Joint(vec![j; 4]);
        let a = StationaryAnalysis::build(&spec, &policy, &ArrivalModel::Deterministic).unwrap();
        let c = pair_chain(&spec, &policy, &ArrivalModel::Deterministic, &a).unwrap();
        assert!(c.emission().iter().all(|&x| x == 0));
        let zeros = vec![0u8; 25];
        assert_abs_diff_eq!(forward_loglik(&c, None, &zeros).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn entropy_rate_examples() {
        let det = PairChain::new(vec![vec![1.0]], vec![0]).unwrap();
        assert_eq!(markov_entropy_rate(&det), 0.0);
        let iid = PairChain::new(vec![vec![0.5, 0.5], vec![0.5, 0.5]], vec![0, 1]).unwrap();
        assert_abs_diff_eq!(markov_entropy_rate(&iid), 1.0, epsilon = 1e-12);
        assert!(iid.emissions_injective());
        let hidden = PairChain::new(vec![vec![0.5, 0.5], vec![0.5, 0.5]], vec![0, 0]).unwrap();
        assert!(!hidden.emissions_injective());
    }

    #[test]
    fn single_symbol_likelihood_is_stationary_emission() {
        let c = worked_chain();
        let p1: f64 = c
            .stationary()
            .iter()
            .zip(c.emission())
            .filter(|(_, &x)| x == 1)
            .map(|(p, _)| p)
            .sum();
        assert_abs_diff_eq!(forward_loglik(&c, None, &[1]).unwrap(), p1.ln(), epsilon = 1e-14);
        assert_abs_diff_eq!(
            forward_loglik(&c, None, &[0]).unwrap(),
            (1.0 - p1).ln(),
            epsilon = 1e-14
        );
        assert!(matches!(forward_loglik(&c, None, &[]), Err(Error::EmptySequence)));
        assert!(forward_loglik(&c, None, &[2]).is_err());
    }

    /// Sum over every positive-probability state path.
    fn path_sum(c: &PairChain, ch: Option<&BinaryChannel>, obs: &[u8]) -> f64 {
        fn emit(c: &PairChain, ch: Option<&BinaryChannel>, s: usize, y: u8) -> f64 {
            let x = c.emission()[s] as usize;
            match ch {
                Some(ch) => ch.prob(x, y as usize),
                None => (x == y as usize) as u8 as f64,
            }
        }
        fn rec(c: &PairChain, ch: Option<&BinaryChannel>, obs: &[u8], s: usize, weight: f64) -> f64 {
            if obs.is_empty() {
                return weight;
            }
            let mut total = 0.0;
            for (t, &p) in c.transition()[s].iter().enumerate() {
                if p > 0.0 {
                    total += rec(c, ch, &obs[1..], t, weight * p * emit(c, ch, t, obs[0]));
                }
            }
            total
        }
        (0..c.len())
            .filter(|&s| c.stationary()[s] > 0.0)
            .map(|s| rec(c, ch, &obs[1..], s, c.stationary()[s] * emit(c, ch, s, obs[0])))
            .sum()
    }

    #[test]
    fn forward_matches_path_sum_on_worked_chain() {
        let c = worked_chain();
        let ch = BinaryChannel::new(0.9, 0.8).unwrap();
        let obs = [0, 1, 1, 0, 0, 1, 0, 0, 0, 1];
        let fwd = forward_loglik(&c, Some(&ch), &obs).unwrap().exp();
        assert_abs_diff_eq!(fwd, path_sum(&c, Some(&ch), &obs), epsilon = 1e-12);
        let fwd = forward_loglik(&c, None, &obs).unwrap().exp();
        assert_abs_diff_eq!(fwd, path_sum(&c, None, &obs), epsilon = 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn forward_matches_path_sum(
            cap in 2usize..=3,
            px1 in 0.05f64..0.95,
            px2 in 0.05f64..0.95,
            q1 in 0.5f64..1.0,
            q2 in 0.5f64..1.0,
            obs in prop::collection::vec(0u8..=1, 1..=10),
        ) {
            let spec = BatterySpec::new(cap, 2).unwrap();
            let x2_given_u = (0..=cap)
                .map(|u| if u >= 2 { Pmf::bernoulli(px2).unwrap() } else { Pmf::point(2, 0) })
                .collect();
            let policy = StatePolicy::Product { x1: Pmf::bernoulli(px1).unwrap(), x2_given_u };
            let a = StationaryAnalysis::build(&spec, &policy, &ArrivalModel::Deterministic).unwrap();
            let c = pair_chain(&spec, &policy, &ArrivalModel::Deterministic, &a).unwrap();
            let ch = BinaryChannel::new(q1, q2).unwrap();
            let fwd = forward_loglik(&c, Some(&ch), &obs).unwrap().exp();
            prop_assert!((fwd - path_sum(&c, Some(&ch), &obs)).abs() <= 1e-9);
            let marg = c.first_marginal(cap + 1);
            for (m, p) in marg.iter().zip(a.pi.probs()) {
                prop_assert!((m - p).abs() <= 1e-10);
            }
        }
    }
}
