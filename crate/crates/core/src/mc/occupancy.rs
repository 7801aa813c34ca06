//! Battery-level occupancy from direct simulation of the charge/spend
//! dynamics.

use rand::Rng;

use super::{coin, draw, rng, RunConfig};
use crate::battery::{ArrivalModel, BatterySpec, StatePolicy, StationaryAnalysis};
use crate::error::{invalid, Result};
use crate::par::map_range;
use crate::pmf::Pmf;

pub const EXPERIMENT: &str = "occupancy";

/// Visit frequencies of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct Occupancy {
    pub frequencies: Vec<f64>,
    /// `max_u |freq_u - pi_u|`.
    pub max_deviation: f64,
}

#[derive(Debug, Clone)]
pub struct OccupancyReport {
    pub pi: Pmf,
    pub trials: Vec<Occupancy>,
}

/// Per-level sampling tables: `(x1, x2)` cells of `p(x1, x2 | u)` in the
/// order `(0,0), (0,1), (1,0), (1,1)`.
fn cell_tables(policy: &StatePolicy) -> Vec<[f64; 4]> {
    (0..policy.num_states())
        .map(|u| {
            let j = policy.joint_at(u);
            [j.get(0, 0), j.get(0, 1), j.get(1, 0), j.get(1, 1)]
        })
        .collect()
}

/// One energy arrival given the transmitted `x1`.
pub(crate) fn sample_energy<R: Rng + ?Sized>(rng: &mut R, arrival: &ArrivalModel, x1: usize) -> usize {
    match arrival {
        ArrivalModel::Deterministic => x1,
        ArrivalModel::Channel(ch) => usize::from(coin(rng, ch.prob(x1, 1))),
        ArrivalModel::Lossy { channel, energy } => {
            let y2 = usize::from(coin(rng, channel.prob(x1, 1)));
            draw(rng, energy[y2].probs())
        }
    }
}

/// Visits per level over `n` steps from `initial`; the level at step 0
/// counts.
pub fn occupancy_counts<R: Rng + ?Sized>(
    rng: &mut R,
    spec: &BatterySpec,
    policy: &StatePolicy,
    arrival: &ArrivalModel,
    n: usize,
    initial: usize,
) -> Vec<u64> {
    let cells = cell_tables(policy);
    let mut counts = vec![0u64; spec.num_states()];
    let mut u = initial;
    for _ in 0..n {
        counts[u] += 1;
        let c = draw(rng, &cells[u]);
        let (x1, x2) = (c >> 1, c & 1);
        let e = sample_energy(rng, arrival, x1);
        u = spec.next_state(u, e, x2);
    }
    counts
}

/// Simulates the battery for `cfg.n` steps per trial and compares the visit
/// frequencies with the stationary law.
pub fn simulate_states(
    spec: &BatterySpec,
    policy: &StatePolicy,
    arrival: &ArrivalModel,
    cfg: &RunConfig,
    initial: usize,
) -> Result<OccupancyReport> {
    cfg.validate()?;
    if initial >= spec.num_states() {
        return invalid(format!(
            "initial level {initial} exceeds the capacity {}",
            spec.capacity()
        ));
    }
    let analysis = StationaryAnalysis::build(spec, policy, arrival)?;
    let pi = analysis.pi;
    let trials = map_range(cfg.trials, |t| {
        let mut r = rng::stream(cfg.seed, EXPERIMENT, t as u64);
        let counts = occupancy_counts(&mut r, spec, policy, arrival, cfg.n, initial);
        let frequencies: Vec<f64> = counts.iter().map(|&c| c as f64 / cfg.n as f64).collect();
        let max_deviation = frequencies
            .iter()
            .zip(pi.probs())
            .map(|(f, p)| (f - p).abs())
            .fold(0.0, f64::max);
        Occupancy {
            frequencies,
            max_deviation,
        }
    });
    Ok(OccupancyReport { pi, trials })
}
