//! Exact-match collisions in a superposition codebook: given a cloud
//! sequence `u^n`, `2^{nR}` words are drawn conditionally i.i.d. from
//! `p(x|u)`, and a trial collides when some other word equals word 1.

use rand::Rng;

use super::{any_match_probability, coin, draw, rng, MAX_EXPLICIT_CODEWORDS};
use crate::error::{invalid, Error, Result};
use crate::par::map_range;
use crate::pmf::Pmf;

pub const EXPERIMENT: &str = "collision";

/// Joint law of the cloud symbol `u` and the codeword symbol `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct CollisionSource {
    pub u: Pmf,
    pub x_given_u: Vec<Pmf>,
}

impl CollisionSource {
    pub fn new(u: Pmf, x_given_u: Vec<Pmf>) -> Result<Self> {
        if x_given_u.len() != u.len() {
            return invalid("one conditional law per cloud symbol is required");
        }
        Ok(CollisionSource { u, x_given_u })
    }

    /// `H(X | U)` in bits.
    pub fn conditional_entropy(&self) -> f64 {
        self.u
            .probs()
            .iter()
            .zip(&self.x_given_u)
            .map(|(p, x)| p * x.entropy())
            .sum()
    }
}

/// How the other codewords are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CollisionMode {
    /// Draw every codeword symbol by symbol (at most 2^20 words).
    Explicit,
    /// Draw only the collision indicator, from its exact law given `u^n` and
    /// word 1.
    Conditional,
    /// Explicit when the codebook fits the cap, conditional otherwise.
    #[default]
    Auto,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollisionReport {
    pub trials: usize,
    pub collisions: usize,
    pub fraction: f64,
    pub mode: CollisionMode,
}

/// Fraction of trials in which some word other than word 1 equals it.
///
/// The codebook holds `round(2^{nR})` words.
pub fn collision_experiment(
    source: &CollisionSource,
    n: usize,
    rate: f64,
    trials: usize,
    seed: u64,
    mode: CollisionMode,
) -> Result<CollisionReport> {
    if n < 1 || trials < 1 {
        return invalid("n and trials must both be at least 1");
    }
    if !(rate >= 0.0) {
        return invalid(format!("rate must be nonnegative, got {rate}"));
    }
    let log2_words = n as f64 * rate;
    let fits = log2_words <= (MAX_EXPLICIT_CODEWORDS as f64).log2();
    let mode = match mode {
        CollisionMode::Auto if fits => CollisionMode::Explicit,
        CollisionMode::Auto => CollisionMode::Conditional,
        CollisionMode::Explicit if !fits => {
            return Err(Error::Budget(format!(
                "2^{log2_words:.1} codewords exceed the explicit cap of 2^20"
            )))
        }
        m => m,
    };
    let words = log2_words.exp2().round();
    let others = words - 1.0;
    let hits = map_range(trials, |t| {
        let mut r = rng::stream(seed, EXPERIMENT, t as u64);
        let us = sample_cloud(&mut r, source, n);
        let word: Vec<usize> = us.iter().map(|&u| draw(&mut r, source.x_given_u[u].probs())).collect();
        if others < 1.0 {
            return false;
        }
        match mode {
            CollisionMode::Explicit => (0..others as u64).any(|_| {
                us.iter()
                    .zip(&word)
                    .all(|(&u, &x)| draw(&mut r, source.x_given_u[u].probs()) == x)
            }),
            _ => {
                let ln_q: f64 = us
                    .iter()
                    .zip(&word)
                    .map(|(&u, &x)| source.x_given_u[u].get(x).ln())
                    .sum();
                coin(&mut r, any_match_probability(ln_q, others.log2()))
            }
        }
    });
    let collisions = hits.iter().filter(|&&h| h).count();
    Ok(CollisionReport {
        trials,
        collisions,
        fraction: collisions as f64 / trials as f64,
        mode,
    })
}

pub fn sample_cloud<R: Rng + ?Sized>(rng: &mut R, source: &CollisionSource, n: usize) -> Vec<usize> {
    (0..n).map(|_| draw(rng, source.u.probs())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn source() -> CollisionSource {
        CollisionSource::new(
            Pmf::uniform(2),
            vec![Pmf::bernoulli(0.5).unwrap(), Pmf::bernoulli(0.2).unwrap()],
        )
        .unwrap()
    }

    #[test]
    fn singleton_codebook_never_collides() {
        let r = collision_experiment(&source(), 50, 0.0, 200, 1, CollisionMode::Auto).unwrap();
        assert_eq!(r.collisions, 0);
    }

    #[test]
    fn explicit_budget_is_enforced() {
        let r = collision_experiment(&source(), 200, 0.5, 1, 1, CollisionMode::Explicit);
        assert!(matches!(r, Err(Error::Budget(_))));
    }

    #[test]
    fn explicit_and_conditional_agree() {
        // n = 4, 2^{4 * 2.5} = 1024 words: collisions are common.
        let s = source();
        let a = collision_experiment(&s, 4, 2.5, 2000, 3, CollisionMode::Explicit).unwrap();
        let b = collision_experiment(&s, 4, 2.5, 2000, 3, CollisionMode::Conditional).unwrap();
        assert!((a.fraction - b.fraction).abs() < 0.05, "{a:?} {b:?}");
        // Two words, one symbol: collision iff the single draws agree.
        let want = 0.5 * 0.5 + 0.5 * (0.2 * 0.2 + 0.8 * 0.8);
        let c = collision_experiment(&s, 1, 1.0, 20_000, 4, CollisionMode::Explicit).unwrap();
        assert!((c.fraction - want).abs() < 0.02, "{c:?}");
    }

    #[test]
    fn conditional_is_monotone_in_rate() {
        // Same seed means same cloud, word, and uniform per trial.
        let s = source();
        let h = s.conditional_entropy();
        let mut last = 0;
        for k in -2..=2 {
            let r = collision_experiment(&s, 100, h + 0.1 * k as f64, 300, 6, CollisionMode::Conditional).unwrap();
            assert!(r.collisions >= last);
            last = r.collisions;
        }
    }
}
