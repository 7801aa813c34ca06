//! Concentration of the per-symbol log-likelihoods of the relay's output and
//! of the (relay, receiver) pair.

use rand::Rng;

use super::{coin, draw, mean_std, rng, RunConfig};
use crate::chain::{forward_loglik, PairChain};
use crate::error::Result;
use crate::par::map_range;
use crate::pmf::BinaryChannel;

pub const EXPERIMENT: &str = "aep";

#[derive(Debug, Clone, PartialEq)]
pub struct AepReport {
    /// `-(1/n) log2 p(y^n)` per trial.
    pub marginal: Vec<f64>,
    /// `-(1/n) log2 p(x^n, y^n)` per trial.
    pub joint: Vec<f64>,
    pub marginal_mean: f64,
    pub marginal_std: f64,
    pub joint_mean: f64,
    pub joint_std: f64,
}

/// Emitted symbols of a stationary path of length `n`.
pub fn sample_emissions<R: Rng + ?Sized>(rng: &mut R, chain: &PairChain, n: usize) -> Vec<u8> {
    let mut s = draw(rng, chain.stationary());
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        if i > 0 {
            s = draw(rng, &chain.transition()[s]);
        }
        out.push(chain.emission()[s]);
    }
    out
}

pub fn pass_through<R: Rng + ?Sized>(rng: &mut R, ch: &BinaryChannel, xs: &[u8]) -> Vec<u8> {
    xs.iter()
        .map(|&x| u8::from(coin(rng, ch.prob(x as usize, 1))))
        .collect()
}

/// Samples relay sequences from `chain`, passes them through `ch2`, and
/// scores each trial exactly.
pub fn empirical_aep(chain: &PairChain, ch2: &BinaryChannel, cfg: &RunConfig) -> Result<AepReport> {
    cfg.validate()?;
    ch2.require_informative()?;
    let n = cfg.n as f64;
    let per_trial = map_range(cfg.trials, |t| -> Result<(f64, f64)> {
        let mut r = rng::stream(cfg.seed, EXPERIMENT, t as u64);
        let x = sample_emissions(&mut r, chain, cfg.n);
        let y = pass_through(&mut r, ch2, &x);
        let ln_y = forward_loglik(chain, Some(ch2), &y)?;
        let ln_x = forward_loglik(chain, None, &x)?;
        let ln_y_given_x: f64 = x
            .iter()
            .zip(&y)
            .map(|(&a, &b)| ch2.prob(a as usize, b as usize).ln())
            .sum();
        let to_bits = |ln: f64| -ln / (n * std::f64::consts::LN_2);
        Ok((to_bits(ln_y), to_bits(ln_x + ln_y_given_x)))
    });
    let (marginal, joint): (Vec<f64>, Vec<f64>) =
        per_trial.into_iter().collect::<Result<Vec<_>>>()?.into_iter().unzip();
    let (marginal_mean, marginal_std) = mean_std(&marginal);
    let (joint_mean, joint_std) = mean_std(&joint);
    Ok(AepReport {
        marginal,
        joint,
        marginal_mean,
        marginal_std,
        joint_mean,
        joint_std,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::battery::tests::worked_example;
    use crate::battery::{ArrivalModel, StationaryAnalysis};
    use crate::chain::{markov_entropy_rate, pair_chain};

    fn worked_chain() -> PairChain {
        let (spec, policy) = worked_example();
        let a = StationaryAnalysis::build(&spec, &policy, &ArrivalModel::Deterministic).unwrap();
        pair_chain(&spec, &policy, &ArrivalModel::Deterministic, &a).unwrap()
    }

    #[test]
    fn noiseless_matches_entropy_rate_when_emissions_identify_states() {
        let chain = PairChain::new(vec![vec![0.9, 0.1], vec![0.3, 0.7]], vec![0, 1]).unwrap();
        assert!(chain.emissions_injective());
        let rep = empirical_aep(&chain, &BinaryChannel::noiseless(), &RunConfig::new(4, 10_000, 10)).unwrap();
        assert!((rep.marginal_mean - markov_entropy_rate(&chain)).abs() < 2e-2);
        for (m, j) in rep.marginal.iter().zip(&rep.joint) {
            assert!((m - j).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_chain_scores_zero() {
        let chain = PairChain::new(vec![vec![1.0]], vec![1]).unwrap();
        let rep = empirical_aep(&chain, &BinaryChannel::noiseless(), &RunConfig::new(1, 1000, 5)).unwrap();
        assert!(rep.marginal.iter().chain(&rep.joint).all(|&v| v == 0.0));
    }

    #[test]
    fn joint_dominates_marginal() {
        let chain = worked_chain();
        let rep = empirical_aep(
            &chain,
            &BinaryChannel::symmetric(0.1).unwrap(),
            &RunConfig::new(2, 2000, 20),
        )
        .unwrap();
        for (m, j) in rep.marginal.iter().zip(&rep.joint) {
            assert!(*j >= m - 1e-12);
        }
    }

    #[test]
    fn concentrates_with_length() {
        let chain = worked_chain();
        let ch = BinaryChannel::symmetric(0.1).unwrap();
        let short = empirical_aep(&chain, &ch, &RunConfig::new(8, 1000, 50)).unwrap();
        let long = empirical_aep(&chain, &ch, &RunConfig::new(8, 10_000, 50)).unwrap();
        assert!(long.marginal_std < short.marginal_std);
    }
}
