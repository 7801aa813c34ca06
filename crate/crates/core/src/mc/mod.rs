//! Monte Carlo lab: seeded experiments that check the long-run behaviour the
//! rate expressions depend on.
//!
//! Trial `t` of experiment `id` always draws from [`rng::stream`]`(seed, id,
//! t)`, so results do not depend on how trials are scheduled.

pub mod aep;
pub mod codec;
pub mod collision;
pub mod occupancy;
pub mod rng;
pub mod znoise;

use rand::Rng;

use crate::error::{invalid, Error, Result};

/// Longest sequence any experiment will simulate.
pub const MAX_LENGTH: usize = 10_000_000;

/// Largest codebook built word by word.
pub const MAX_EXPLICIT_CODEWORDS: u64 = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunConfig {
    pub seed: u64,
    /// Sequence length.
    pub n: usize,
    pub trials: usize,
}

impl RunConfig {
    pub fn new(seed: u64, n: usize, trials: usize) -> Self {
        RunConfig { seed, n, trials }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 1 || self.trials < 1 {
            return invalid("n and trials must both be at least 1");
        }
        if self.n > MAX_LENGTH {
            return Err(Error::Budget(format!("n = {} exceeds the cap of {MAX_LENGTH}", self.n)));
        }
        Ok(())
    }
}

/// Index drawn from `probs` by inversion.
pub(crate) fn draw<R: Rng + ?Sized>(rng: &mut R, probs: &[f64]) -> usize {
    let r: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if r < acc {
            return i;
        }
    }
    // Rounding left r above the running total; fall back to the last
    // positive entry.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

pub(crate) fn coin<R: Rng + ?Sized>(rng: &mut R, p: f64) -> bool {
    rng.random::<f64>() < p
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// `P(at least one of `others` independent words matches)` when each matches
/// with probability `exp(ln_q)`, computed without underflow. `log2_others`
/// is `log2` of the number of other words.
pub(crate) fn any_match_probability(ln_q: f64, log2_others: f64) -> f64 {
    if log2_others == f64::NEG_INFINITY || ln_q == f64::NEG_INFINITY {
        return 0.0;
    }
    // -ln(1 - q), accurate for tiny q.
    let ln_neg_log1m = if ln_q < -30.0 {
        ln_q
    } else {
        (-(-ln_q.exp()).ln_1p()).ln()
    };
    let ln_t = log2_others * std::f64::consts::LN_2 + ln_neg_log1m;
    -(-ln_t.exp()).exp_m1()
}
