//! Block-Markov codec over a noiseless first hop.
//!
//! Each battery level `u` owns a subcodebook of `K_u` transmitter words of
//! length `n_u + delta`, drawn conditionally on the relay's word for that
//! level. Within a block both ends keep one cursor per level: at step `i`
//! with level `u_i` they send symbol `l_u` of level `u_i`'s words and advance
//! that cursor. The relay recovers level `u`'s word from the first `n_u`
//! symbols received while at level `u`.
//!
//! Error events per block: too few visits to some level (`eps1`), or another
//! word of some subcodebook agreeing with the extracted symbols (`eps2`).

use std::collections::VecDeque;

use rand::Rng;

use super::aep::pass_through;
use super::{any_match_probability, coin, draw, rng, RunConfig};
use crate::battery::{ArrivalModel, BatterySpec, StatePolicy, StationaryAnalysis};
use crate::chain::{forward_loglik, pair_chain};
use crate::error::{invalid, Error, Result};
use crate::par::map_range;
use crate::pmf::{conditional_entropy, BinaryChannel};
use crate::rates::{feasibility_check, Theorem, DEFAULT_EPS_POS};

pub const EXPERIMENT: &str = "codec";
pub const SMOKE_EXPERIMENT: &str = "receiver-smoke";

/// Subcodebooks with at most this many other words are drawn explicitly.
const EXPLICIT_OTHERS: f64 = 4096.0;

/// Largest relay codebook the receiver smoke test enumerates, in bits.
pub const SMOKE_MAX_BITS: f64 = 12.0;

#[derive(Debug, Clone, PartialEq)]
pub struct CodecConfig {
    pub spec: BatterySpec,
    /// Joint per-level policy.
    pub policy: StatePolicy,
    /// Per-level rate `log2(K_u) / n_u`.
    pub rates: Vec<f64>,
    /// `n_u = floor(n (pi_u - slack))`.
    pub slack: f64,
    /// Pad length; `None` uses `n - min_u n_u`.
    pub delta: Option<usize>,
}

/// Block layout for one block length.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub n: usize,
    pub n_u: Vec<usize>,
    pub log2_words: Vec<f64>,
    pub delta: usize,
    /// Message bits per block, `sum_u log2 K_u`.
    pub message_bits: f64,
}

impl CodecConfig {
    /// Rates a fixed `margin` below `H(X1 | X2, u)` at every level, and slack
    /// `min_u pi_u / 2`.
    pub fn with_margin(spec: BatterySpec, policy: StatePolicy, margin: f64) -> Result<Self> {
        let analysis = StationaryAnalysis::build(&spec, &policy, &ArrivalModel::Deterministic)?;
        let rates = (0..spec.num_states())
            .map(|u| (conditional_entropy(&policy.joint_at(u)) - margin).max(0.0))
            .collect();
        let pi_min = analysis.pi.probs().iter().copied().fold(f64::INFINITY, f64::min);
        Ok(CodecConfig {
            spec,
            policy,
            rates,
            slack: pi_min / 2.0,
            delta: None,
        })
    }

    fn check(&self) -> Result<StationaryAnalysis> {
        let v = feasibility_check(&self.policy, Theorem::NoisySecondHop, &self.spec, DEFAULT_EPS_POS);
        if !v.is_empty() {
            return Err(Error::Constraint(v));
        }
        if self.rates.len() != self.spec.num_states() || self.rates.iter().any(|r| !(*r >= 0.0)) {
            return invalid("one nonnegative rate per battery level is required");
        }
        if !(0.0..1.0).contains(&self.slack) {
            return invalid(format!("slack must lie in [0, 1), got {}", self.slack));
        }
        StationaryAnalysis::build(&self.spec, &self.policy, &ArrivalModel::Deterministic)
    }

    pub fn layout(&self, n: usize) -> Result<Layout> {
        let analysis = self.check()?;
        let n_u: Vec<usize> = analysis
            .pi
            .probs()
            .iter()
            // The guard keeps exact products such as 200 * 0.1 from rounding down.
            .map(|p| (n as f64 * (p - self.slack) + 1e-9).floor().max(0.0) as usize)
            .collect();
        let min_nu = *n_u.iter().min().expect("at least one level");
        let delta = self.delta.unwrap_or(n - min_nu);
        if n_u.iter().any(|&k| k + delta < n) {
            return invalid(format!(
                "pad {delta} leaves some word shorter than the block length {n}"
            ));
        }
        let log2_words: Vec<f64> = n_u.iter().zip(&self.rates).map(|(&k, r)| k as f64 * r).collect();
        Ok(Layout {
            n,
            message_bits: log2_words.iter().sum(),
            n_u,
            log2_words,
            delta,
        })
    }
}

/// `log2(K - 1)` for `K = round(2^log2_words)`.
fn log2_others(log2_words: f64) -> f64 {
    if log2_words > 50.0 {
        return log2_words;
    }
    let words = log2_words.exp2().round();
    if words <= 1.0 {
        f64::NEG_INFINITY
    } else {
        (words - 1.0).log2()
    }
}

/// Shortest forced `(x1, x2)` sequence taking the battery from `from` to `to`.
pub fn adjustment_path(spec: &BatterySpec, from: usize, to: usize) -> Vec<(usize, usize)> {
    let n = spec.num_states();
    let mut prev: Vec<Option<(usize, usize, usize)>> = vec![None; n];
    let mut seen = vec![false; n];
    seen[from] = true;
    let mut queue = VecDeque::from([from]);
    while let Some(u) = queue.pop_front() {
        if u == to {
            break;
        }
        for x2 in 0..2 {
            if x2 == 1 && !spec.can_spend(u) {
                continue;
            }
            for x1 in 0..2 {
                let v = spec.next_state(u, x1, x2);
                if !seen[v] {
                    seen[v] = true;
                    prev[v] = Some((u, x1, x2));
                    queue.push_back(v);
                }
            }
        }
    }
    let mut path = Vec::new();
    let mut cur = to;
    while cur != from {
        let (u, x1, x2) = prev[cur].expect("every level is reachable by forced steps");
        path.push((x1, x2));
        cur = u;
    }
    path.reverse();
    path
}

/// Per-level tables `p(x2 | u)` and `p(x1 | x2, u)`.
struct Sampler {
    x2: Vec<[f64; 2]>,
    x1_given_x2: Vec<[[f64; 2]; 2]>,
}

impl Sampler {
    fn new(policy: &StatePolicy) -> Self {
        let n = policy.num_states();
        let mut x2 = Vec::with_capacity(n);
        let mut x1_given_x2 = Vec::with_capacity(n);
        for u in 0..n {
            let j = policy.joint_at(u);
            let col = j.col_marginal();
            x2.push([col.get(0), col.get(1)]);
            let mut cond = [[0.5; 2]; 2];
            for (c, row) in cond.iter_mut().enumerate() {
                if let Some(p) = j.row_given_col(c) {
                    *row = [p.get(0), p.get(1)];
                }
            }
            x1_given_x2.push(cond);
        }
        Sampler { x2, x1_given_x2 }
    }

    fn relay_word<R: Rng + ?Sized>(&self, rng: &mut R, u: usize, len: usize) -> Vec<usize> {
        (0..len).map(|_| draw(rng, &self.x2[u])).collect()
    }

    fn transmitter_word<R: Rng + ?Sized>(&self, rng: &mut R, u: usize, relay: &[usize]) -> Vec<usize> {
        relay.iter().map(|&x2| draw(rng, &self.x1_given_x2[u][x2])).collect()
    }
}

/// Runs the cursor encoder for `steps` from `start`; returns the sent
/// `(x1, x2)` pairs, the visited levels, and the final level.
fn encode(
    spec: &BatterySpec,
    start: usize,
    steps: usize,
    x1_words: &[Vec<usize>],
    x2_words: &[Vec<usize>],
) -> (Vec<(usize, usize)>, Vec<usize>, usize) {
    let mut cursor = vec![0usize; spec.num_states()];
    let mut sent = Vec::with_capacity(steps);
    let mut levels = Vec::with_capacity(steps);
    let mut u = start;
    for _ in 0..steps {
        let l = cursor[u];
        let (x1, x2) = (x1_words[u][l], x2_words[u][l]);
        cursor[u] += 1;
        sent.push((x1, x2));
        levels.push(u);
        u = spec.next_state(u, x1, x2);
    }
    (sent, levels, u)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodecReport {
    pub layout: Layout,
    pub blocks: usize,
    pub eps1: usize,
    pub eps2: usize,
    pub p_eps1: f64,
    pub p_eps2: f64,
    pub mean_forced_steps: f64,
}

impl CodecReport {
    pub fn error_sum(&self) -> f64 {
        self.p_eps1 + self.p_eps2
    }
}

/// `cfg.trials` independent runs of `blocks` consecutive blocks of length
/// `cfg.n`. Every block starts by forcing the battery to a level drawn from
/// the stationary law, spending up to a few slots of the block.
pub fn relay_codec_trial(c: &CodecConfig, blocks: usize, cfg: &RunConfig) -> Result<CodecReport> {
    cfg.validate()?;
    if blocks < 1 {
        return invalid("at least one block is required");
    }
    let layout = c.layout(cfg.n)?;
    let analysis = c.check()?;
    let pi = analysis.pi.probs();
    let sampler = Sampler::new(&c.policy);
    let spec = &c.spec;
    let levels = spec.num_states();

    let per_trial = map_range(cfg.trials, |t| {
        let mut r = rng::stream(cfg.seed, EXPERIMENT, t as u64);
        let mut state = draw(&mut r, pi);
        let (mut e1, mut e2, mut forced_total) = (0usize, 0usize, 0usize);
        for _ in 0..blocks {
            let target = draw(&mut r, pi);
            let forced = adjustment_path(spec, state, target);
            forced_total += forced.len();
            let coded = cfg.n.saturating_sub(forced.len());

            let lens: Vec<usize> = layout.n_u.iter().map(|&k| k + layout.delta).collect();
            let x2_words: Vec<Vec<usize>> = (0..levels).map(|u| sampler.relay_word(&mut r, u, lens[u])).collect();
            let x1_words: Vec<Vec<usize>> = (0..levels)
                .map(|u| sampler.transmitter_word(&mut r, u, &x2_words[u]))
                .collect();
            let (sent, visited, end) = encode(spec, target, coded, &x1_words, &x2_words);
            state = end;

            // Relay side: A_u = steps spent at level u, in order.
            let mut extracted: Vec<Vec<usize>> = vec![Vec::new(); levels];
            for (&(x1, _), &u) in sent.iter().zip(&visited) {
                extracted[u].push(x1);
            }
            if (0..levels).any(|u| extracted[u].len() < layout.n_u[u]) {
                e1 += 1;
            }
            let collided = (0..levels).any(|u| {
                let k = layout.n_u[u].min(extracted[u].len());
                let others = log2_others(layout.log2_words[u]);
                if others == f64::NEG_INFINITY || k == 0 {
                    return others != f64::NEG_INFINITY;
                }
                let seen = &extracted[u][..k];
                let relay = &x2_words[u][..k];
                if others.exp2() <= EXPLICIT_OTHERS {
                    (0..others.exp2().round() as usize).any(|_| {
                        seen.iter()
                            .zip(relay)
                            .all(|(&x1, &x2)| draw(&mut r, &sampler.x1_given_x2[u][x2]) == x1)
                    })
                } else {
                    let ln_q: f64 = seen
                        .iter()
                        .zip(relay)
                        .map(|(&x1, &x2)| sampler.x1_given_x2[u][x2][x1].ln())
                        .sum();
                    coin(&mut r, any_match_probability(ln_q, others))
                }
            });
            if collided {
                e2 += 1;
            }
        }
        (e1, e2, forced_total)
    });
    let total = blocks * cfg.trials;
    let (eps1, eps2, forced) = per_trial
        .into_iter()
        .fold((0, 0, 0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
    Ok(CodecReport {
        layout,
        blocks: total,
        eps1,
        eps2,
        p_eps1: eps1 as f64 / total as f64,
        p_eps2: eps2 as f64 / total as f64,
        mean_forced_steps: forced as f64 / total as f64,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmokeReport {
    pub trials: usize,
    pub errors: usize,
    /// Mean of `(1/n) log2 p(y | x2) / p(y)` at the true word.
    pub mean_information_density: f64,
}

/// Last-block receiver check: the transmitter's message is fixed, the relay
/// picks one of `2^{nR}` messages, each with its own codewords and initial
/// level, and the receiver picks the candidate relay sequence with the
/// largest information density against the channel output.
pub fn receiver_smoke_trial(
    spec: &BatterySpec,
    policy: &StatePolicy,
    relay_rate: f64,
    ch2: &BinaryChannel,
    cfg: &RunConfig,
) -> Result<SmokeReport> {
    cfg.validate()?;
    ch2.require_informative()?;
    let bits = (cfg.n as f64 * relay_rate).round();
    if !(0.0..=SMOKE_MAX_BITS).contains(&bits) {
        return Err(Error::Budget(format!(
            "nR = {bits} is outside the smoke-test range [0, {SMOKE_MAX_BITS}]"
        )));
    }
    let v = feasibility_check(policy, Theorem::NoisySecondHop, spec, DEFAULT_EPS_POS);
    if !v.is_empty() {
        return Err(Error::Constraint(v));
    }
    let analysis = StationaryAnalysis::build(spec, policy, &ArrivalModel::Deterministic)?;
    let chain = pair_chain(spec, policy, &ArrivalModel::Deterministic, &analysis)?;
    let sampler = Sampler::new(policy);
    let messages = bits.exp2() as usize;
    let n = cfg.n;

    let per_trial = map_range(cfg.trials, |t| -> Result<(bool, f64)> {
        let mut r = rng::stream(cfg.seed, SMOKE_EXPERIMENT, t as u64);
        let candidates: Vec<Vec<u8>> = (0..messages)
            .map(|_| {
                let start = draw(&mut r, analysis.pi.probs());
                let x2_words: Vec<Vec<usize>> = (0..spec.num_states())
                    .map(|u| sampler.relay_word(&mut r, u, n))
                    .collect();
                let x1_words: Vec<Vec<usize>> = (0..spec.num_states())
                    .map(|u| sampler.transmitter_word(&mut r, u, &x2_words[u]))
                    .collect();
                let (sent, _, _) = encode(spec, start, n, &x1_words, &x2_words);
                sent.iter().map(|&(_, x2)| x2 as u8).collect()
            })
            .collect();
        let y = pass_through(&mut r, ch2, &candidates[0]);
        let ln_y = forward_loglik(&chain, Some(ch2), &y)?;
        let density = |x: &[u8]| -> f64 {
            let ln_cond: f64 = x
                .iter()
                .zip(&y)
                .map(|(&a, &b)| ch2.prob(a as usize, b as usize).ln())
                .sum();
            (ln_cond - ln_y) / (n as f64 * std::f64::consts::LN_2)
        };
        let scores: Vec<f64> = candidates.iter().map(|x| density(x)).collect();
        let truth = scores[0];
        let wrong = scores[1..].iter().any(|&s| s >= truth);
        Ok((wrong, truth))
    });
    let per_trial = per_trial.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(SmokeReport {
        trials: cfg.trials,
        errors: per_trial.iter().filter(|p| p.0).count(),
        mean_information_density: per_trial.iter().map(|p| p.1).sum::<f64>() / cfg.trials as f64,
    })
}
