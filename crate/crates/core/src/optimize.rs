//! Maximization of each scheme's rate over its policy space, and sweeps over
//! the battery parameters.
//!
//! Every policy is encoded as a point of the box `[s, 1 - s]^d` with
//! `s = sqrt(eps_pos)` (slightly inflated), which keeps every table cell at
//! least `eps_pos` and so the whole box feasible. The search runs nested
//! grids over a tied low-dimensional family, then cyclic coordinate ascent in
//! the full box from the best point of every grid level, from the uniform
//! policy and from seeded random points.

use rand::Rng;
use sha2::{Digest, Sha256};

use crate::battery::{BatterySpec, StatePolicy};
use crate::error::{invalid, Error, Result};
use crate::mc::rng;
use crate::par::map_range;
use crate::pmf::{BinaryChannel, JointPmf, Pmf};
use crate::rates::{rate_thm1, rate_thm3, rate_thm4, RateBreakdown, Theorem, DEFAULT_EPS_POS};
use crate::timing::{rate_thm2, NoiseOptions, TimingScheme};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizeOptions {
    /// Grid points per free coordinate of the tied family.
    pub grid_points: usize,
    /// Passes of coordinate ascent per start.
    pub refine_iters: usize,
    pub eps_pos: f64,
    pub seed: u64,
    pub restarts: usize,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        OptimizeOptions {
            grid_points: 21,
            refine_iters: 200,
            eps_pos: DEFAULT_EPS_POS,
            seed: 0,
            restarts: 8,
        }
    }
}

impl OptimizeOptions {
    pub fn validate(&self) -> Result<()> {
        if self.grid_points < 2 {
            return invalid("grid_points must be at least 2");
        }
        if !(self.eps_pos > 0.0 && self.eps_pos < 0.5) {
            return invalid(format!("eps_pos must lie in (0, 0.5), got {}", self.eps_pos));
        }
        Ok(())
    }
}

/// Timing-scheme settings for the timing model.
#[derive(Debug, Clone, PartialEq)]
pub struct TimingSetup {
    pub scheme: TimingScheme,
    pub noise: NoiseOptions,
    /// Also search the auxiliary law `p(u)` over the simplex.
    pub search_aux: bool,
}

impl TimingSetup {
    /// Uniform `p(u)` on `n` symbols, modular wait rule, no overlap.
    pub fn modular(n: usize) -> Result<Self> {
        Ok(TimingSetup {
            scheme: TimingScheme::modular(n)?,
            noise: NoiseOptions::default(),
            search_aux: false,
        })
    }
}

/// One rate-maximization instance.
#[derive(Debug, Clone, PartialEq)]
pub enum Problem {
    NoisySecondHop {
        spec: BatterySpec,
        ch2: BinaryChannel,
    },
    Timing {
        spec: BatterySpec,
        ch1: BinaryChannel,
        setup: TimingSetup,
    },
    NoisyBothHops {
        spec: BatterySpec,
        ch1: BinaryChannel,
        ch2: BinaryChannel,
    },
    RandomLoss {
        spec: BatterySpec,
        ch1: BinaryChannel,
        ch2: BinaryChannel,
        loss: [Pmf; 2],
    },
}

impl Problem {
    /// Builds the instance for `theorem`; the first hop is ignored by the
    /// noisy-second-hop model, the loss law and timing setup are required
    /// only by the models that use them.
    pub fn new(
        theorem: Theorem,
        spec: BatterySpec,
        ch1: BinaryChannel,
        ch2: BinaryChannel,
        loss: Option<&[Pmf; 2]>,
        timing: Option<&TimingSetup>,
    ) -> Result<Self> {
        Ok(match theorem {
            Theorem::NoisySecondHop => Problem::NoisySecondHop { spec, ch2 },
            Theorem::Timing => Problem::Timing {
                spec,
                ch1,
                setup: timing
                    .cloned()
                    .ok_or_else(|| Error::Validation("the timing model needs a timing setup".into()))?,
            },
            Theorem::NoisyBothHops => Problem::NoisyBothHops { spec, ch1, ch2 },
            Theorem::RandomLoss => Problem::RandomLoss {
                spec,
                ch1,
                ch2,
                loss: loss
                    .cloned()
                    .ok_or_else(|| Error::Validation("the random-loss model needs a loss law".into()))?,
            },
        })
    }

    pub fn theorem(&self) -> Theorem {
        match self {
            Problem::NoisySecondHop { .. } => Theorem::NoisySecondHop,
            Problem::Timing { .. } => Theorem::Timing,
            Problem::NoisyBothHops { .. } => Theorem::NoisyBothHops,
            Problem::RandomLoss { .. } => Theorem::RandomLoss,
        }
    }

    pub fn spec(&self) -> BatterySpec {
        match self {
            Problem::NoisySecondHop { spec, .. }
            | Problem::Timing { spec, .. }
            | Problem::NoisyBothHops { spec, .. }
            | Problem::RandomLoss { spec, .. } => *spec,
        }
    }

    /// Dimension of the full parameter box.
    pub fn dims(&self) -> usize {
        let spec = self.spec();
        let spending = spec.num_states() - spec.cost();
        match self {
            Problem::NoisySecondHop { .. } => spec.cost() + 3 * spending,
            Problem::Timing { setup, .. } => {
                1 + if setup.search_aux {
                    setup.scheme.aux.len() - 1
                } else {
                    0
                }
            }
            _ => 1 + spending,
        }
    }

    /// Dimension of the tied family used by the grid.
    fn tied_dims(&self) -> usize {
        match self {
            Problem::NoisySecondHop { .. } => 4,
            Problem::Timing { .. } => 1,
            _ => 2,
        }
    }

    /// Full parameters from tied ones: every level below the cost shares one
    /// value, every level at or above it shares another.
    fn expand(&self, tied: &[f64]) -> Vec<f64> {
        let spec = self.spec();
        match self {
            Problem::NoisySecondHop { .. } => (0..spec.num_states())
                .flat_map(|u| {
                    if spec.can_spend(u) {
                        tied[1..4].to_vec()
                    } else {
                        vec![tied[0]]
                    }
                })
                .collect(),
            Problem::Timing { setup, .. } => {
                let mut out = vec![tied[0]];
                if setup.search_aux {
                    out.extend(sticks_from_pmf(&setup.scheme.aux));
                }
                out
            }
            _ => {
                let mut out = vec![tied[0]];
                out.extend(std::iter::repeat_n(tied[1], spec.num_states() - spec.cost()));
                out
            }
        }
    }

    /// Decodes a parameter point and evaluates the rate there.
    pub fn evaluate(&self, params: &[f64], eps_pos: f64) -> Result<(RateBreakdown, Solution)> {
        if params.len() != self.dims() {
            return invalid(format!("expected {} parameters, got {}", self.dims(), params.len()));
        }
        match self {
            Problem::NoisySecondHop { spec, ch2 } => {
                let policy = joint_policy(spec, params)?;
                Ok((rate_thm1(spec, &policy, ch2, eps_pos)?, Solution::Policy(policy)))
            }
            Problem::Timing { spec, ch1, setup } => {
                let p_x1 = Pmf::bernoulli(params[0])?;
                let mut scheme = setup.scheme.clone();
                if setup.search_aux {
                    scheme.aux = pmf_from_sticks(&params[1..])?;
                }
                let r = rate_thm2(spec, &p_x1, ch1, &scheme, setup.noise)?;
                Ok((r.breakdown, Solution::Timing { p_x1, scheme }))
            }
            Problem::NoisyBothHops { spec, ch1, ch2 } => {
                let policy = product_policy_from(spec, params)?;
                Ok((rate_thm3(spec, &policy, ch1, ch2, eps_pos)?, Solution::Policy(policy)))
            }
            Problem::RandomLoss { spec, ch1, ch2, loss } => {
                let policy = product_policy_from(spec, params)?;
                Ok((
                    rate_thm4(spec, &policy, ch1, ch2, loss, eps_pos)?,
                    Solution::Policy(policy),
                ))
            }
        }
    }
}

/// Per level: below the cost `p(x1 = 1)`; at or above it
/// `(p(x2 = 1), p(x1 = 1 | x2 = 0), p(x1 = 1 | x2 = 1))`.
fn joint_policy(spec: &BatterySpec, params: &[f64]) -> Result<StatePolicy> {
    let mut it = params.iter().copied();
    let mut next = || it.next().expect("parameter count checked by the caller");
    let tables = (0..spec.num_states())
        .map(|u| {
            if spec.can_spend(u) {
                let (a, b, c) = (next(), next(), next());
                JointPmf::from_internal(vec![
                    vec![(1.0 - a) * (1.0 - b), a * (1.0 - c)],
                    vec![(1.0 - a) * b, a * c],
                ])
            } else {
                let d = next();
                JointPmf::from_internal(vec![vec![1.0 - d, 0.0], vec![d, 0.0]])
            }
        })
        .collect::<Result<_>>()?;
    Ok(StatePolicy::Joint(tables))
}

/// `p(x1 = 1)` then `p(x2 = 1 | u)` for each level at or above the cost.
fn product_policy_from(spec: &BatterySpec, params: &[f64]) -> Result<StatePolicy> {
    let mut send = params[1..].iter();
    let x2_given_u = (0..spec.num_states())
        .map(|u| {
            if spec.can_spend(u) {
                Pmf::bernoulli(*send.next().expect("parameter count checked by the caller"))
            } else {
                Ok(Pmf::point(2, 0))
            }
        })
        .collect::<Result<_>>()?;
    Ok(StatePolicy::Product {
        x1: Pmf::bernoulli(params[0])?,
        x2_given_u,
    })
}

/// Stick-breaking: `p_k = s_k prod_{j<k} (1 - s_j)`, last symbol takes the rest.
fn pmf_from_sticks(sticks: &[f64]) -> Result<Pmf> {
    let mut rest = 1.0;
    let mut probs = Vec::with_capacity(sticks.len() + 1);
    for &s in sticks {
        probs.push(rest * s);
        rest *= 1.0 - s;
    }
    probs.push(rest);
    Pmf::from_internal(probs)
}

fn sticks_from_pmf(p: &Pmf) -> Vec<f64> {
    let mut rest = 1.0;
    let mut out = Vec::with_capacity(p.len().saturating_sub(1));
    for &x in &p.probs()[..p.len() - 1] {
        out.push(if rest > 0.0 { (x / rest).clamp(0.0, 1.0) } else { 0.5 });
        rest -= x;
    }
    out
}

/// Decoded optimizer output.
#[derive(Debug, Clone, PartialEq)]
pub enum Solution {
    Policy(StatePolicy),
    Timing { p_x1: Pmf, scheme: TimingScheme },
}

#[derive(Debug, Clone)]
pub struct Optimum {
    pub theorem: Theorem,
    pub params: Vec<f64>,
    pub solution: Solution,
    pub breakdown: RateBreakdown,
    pub evaluations: usize,
}

impl Optimum {
    /// First 16 hex digits of the SHA-256 of the parameter bit patterns.
    pub fn digest(&self) -> String {
        param_digest(&self.params)
    }
}

pub fn param_digest(params: &[f64]) -> String {
    let mut h = Sha256::new();
    for p in params {
        h.update(p.to_bits().to_le_bytes());
    }
    h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Scored point; `None` score means the evaluation failed.
#[derive(Debug, Clone)]
struct Point {
    score: f64,
    params: Vec<f64>,
}

impl Point {
    /// Higher score wins; ties go to the lexicographically smaller point, so
    /// the reduction does not depend on evaluation order.
    fn better(self, other: Point) -> Point {
        use std::cmp::Ordering::*;
        match self.score.total_cmp(&other.score) {
            Greater => self,
            Less => other,
            Equal => {
                let lex = self
                    .params
                    .iter()
                    .zip(&other.params)
                    .map(|(a, b)| a.total_cmp(b))
                    .find(|o| *o != Equal)
                    .unwrap_or(Equal);
                if lex == Greater {
                    other
                } else {
                    self
                }
            }
        }
    }
}

struct Search<'a> {
    problem: &'a Problem,
    eps_pos: f64,
    lo: f64,
    hi: f64,
    evaluations: std::sync::atomic::AtomicUsize,
}

impl Search<'_> {
    fn score(&self, params: &[f64]) -> f64 {
        self.evaluations.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
        match self.problem.evaluate(params, self.eps_pos) {
            Ok((r, _)) if r.rate.is_finite() => r.rate,
            _ => f64::NEG_INFINITY,
        }
    }

    fn point(&self, params: Vec<f64>) -> Point {
        Point {
            score: self.score(&params),
            params,
        }
    }

    fn grid_value(&self, g: usize, i: usize) -> f64 {
        if i + 1 == g {
            self.hi
        } else {
            self.lo + (self.hi - self.lo) * i as f64 / (g - 1) as f64
        }
    }

    /// Best point of the `g`-point grid over the tied family.
    fn grid_best(&self, g: usize) -> Point {
        let k = self.problem.tied_dims();
        let total = g.pow(k as u32);
        map_range(total, |mut idx| {
            let tied: Vec<f64> = (0..k)
                .map(|_| {
                    let v = self.grid_value(g, idx % g);
                    idx /= g;
                    v
                })
                .collect();
            self.point(self.problem.expand(&tied))
        })
        .into_iter()
        .reduce(Point::better)
        .expect("grid is nonempty")
    }

    /// Cyclic coordinate ascent with halving steps. When no single coordinate
    /// improves, paired moves are tried before shrinking, which lets the
    /// search slide along the ridge where the two bounds meet.
    fn ascend(&self, start: Point, iters: usize) -> Point {
        let d = start.params.len();
        let mut cur = start;
        if !cur.score.is_finite() {
            return cur;
        }
        let mut step = 0.25 * (self.hi - self.lo);
        let clamp = |v: f64| v.clamp(self.lo, self.hi);
        for _ in 0..iters {
            if step < 1e-10 {
                break;
            }
            let mut moved = false;
            'single: for i in 0..d {
                for dir in [1.0, -1.0] {
                    let mut p = cur.params.clone();
                    p[i] = clamp(p[i] + dir * step);
                    if p[i] == cur.params[i] {
                        continue;
                    }
                    let cand = self.point(p);
                    if cand.score > cur.score {
                        cur = cand;
                        moved = true;
                        continue 'single;
                    }
                }
            }
            if !moved {
                'pair: for i in 0..d {
                    for j in i + 1..d {
                        for (di, dj) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                            let mut p = cur.params.clone();
                            p[i] = clamp(p[i] + di * step);
                            p[j] = clamp(p[j] + dj * step);
                            let cand = self.point(p);
                            if cand.score > cur.score {
                                cur = cand;
                                moved = true;
                                break 'pair;
                            }
                        }
                    }
                }
            }
            if !moved {
                step *= 0.5;
            }
        }
        cur
    }
}

/// Grid levels `g, ceil(g/2), ..` down to 2; the levels for `2g` contain
/// those for `g`, so refining the grid never loses a start.
fn grid_levels(g: usize) -> Vec<usize> {
    let mut out = vec![g];
    let mut cur = g;
    while cur > 2 {
        cur = cur.div_ceil(2);
        out.push(cur);
    }
    out
}

/// Best policy found for `problem`.
pub fn optimize(problem: &Problem, opts: &OptimizeOptions) -> Result<Optimum> {
    opts.validate()?;
    let s = (opts.eps_pos.sqrt() * (1.0 + 1e-9)).min(0.5);
    let search = Search {
        problem,
        eps_pos: opts.eps_pos,
        lo: s,
        hi: 1.0 - s,
        evaluations: Default::default(),
    };
    let dims = problem.dims();

    let mut starts = vec![search.point(problem.expand(&vec![0.5; problem.tied_dims()]))];
    starts.extend(grid_levels(opts.grid_points).into_iter().map(|g| search.grid_best(g)));
    let mut r = rng::stream(opts.seed, "optimize-restarts", problem.theorem().id() as u64);
    for _ in 0..opts.restarts {
        let p = (0..dims).map(|_| r.random_range(search.lo..=search.hi)).collect();
        starts.push(search.point(p));
    }

    let best = map_range(starts.len(), |i| search.ascend(starts[i].clone(), opts.refine_iters))
        .into_iter()
        .reduce(Point::better)
        .expect("at least one start");

    if !best.score.is_finite() {
        // Surface the reason the uniform point fails.
        problem.evaluate(&starts[0].params, opts.eps_pos)?;
        return Err(Error::Constraint(Vec::new()));
    }
    let (breakdown, solution) = problem.evaluate(&best.params, opts.eps_pos)?;
    Ok(Optimum {
        theorem: problem.theorem(),
        params: best.params,
        solution,
        breakdown,
        evaluations: search.evaluations.into_inner(),
    })
}

/// Which battery parameter a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    /// Vary the cost `m` with `U = m`.
    Cost,
    /// Vary the capacity `U` at a fixed cost.
    Capacity { cost: usize },
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub theorem: Theorem,
    pub axis: SweepAxis,
    pub values: Vec<usize>,
    pub ch1: BinaryChannel,
    pub ch2: BinaryChannel,
    pub loss: Option<[Pmf; 2]>,
    pub timing: Option<TimingSetup>,
    pub options: OptimizeOptions,
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub theorem: Theorem,
    pub cost: usize,
    pub capacity: usize,
    pub optimum: Optimum,
}

/// One optimization per swept value, in ascending order of the value.
pub fn sweep(s: &SweepSpec) -> Result<Vec<SweepRow>> {
    if s.values.is_empty() {
        return invalid("sweep range is empty");
    }
    let mut values = s.values.clone();
    values.sort_unstable();
    values.dedup();
    values
        .into_iter()
        .map(|v| {
            let (capacity, cost) = match s.axis {
                SweepAxis::Cost => (v, v),
                SweepAxis::Capacity { cost } => (v, cost),
            };
            if capacity < cost {
                return invalid(format!("capacity {capacity} is below the cost {cost}"));
            }
            let spec = BatterySpec::new(capacity, cost)?;
            let problem = Problem::new(s.theorem, spec, s.ch1, s.ch2, s.loss.as_ref(), s.timing.as_ref())?;
            Ok(SweepRow {
                theorem: s.theorem,
                cost,
                capacity,
                optimum: optimize(&problem, &s.options)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rates::{feasibility_check, product_policy};

    fn bsc(p: f64) -> BinaryChannel {
        BinaryChannel::symmetric(p).unwrap()
    }

    fn quick() -> OptimizeOptions {
        OptimizeOptions {
            grid_points: 5,
            refine_iters: 60,
            restarts: 2,
            ..Default::default()
        }
    }

    #[test]
    fn levels_nest() {
        assert_eq!(grid_levels(21), vec![21, 11, 6, 3, 2]);
        assert_eq!(grid_levels(42), vec![42, 21, 11, 6, 3, 2]);
        assert_eq!(grid_levels(2), vec![2]);
    }

    #[test]
    fn sticks_roundtrip() {
        let p = Pmf::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let back = pmf_from_sticks(&sticks_from_pmf(&p)).unwrap();
        for (a, b) in back.probs().iter().zip(p.probs()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn options_are_checked() {
        let bad = OptimizeOptions {
            grid_points: 1,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = OptimizeOptions {
            eps_pos: 0.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn box_corners_are_feasible() {
        let spec = BatterySpec::new(4, 2).unwrap();
        let problem = Problem::NoisySecondHop { spec, ch2: bsc(0.1) };
        let s = (DEFAULT_EPS_POS.sqrt() * (1.0 + 1e-9)).min(0.5);
        for corner in [s, 1.0 - s] {
            let params = vec![corner; problem.dims()];
            let (_, sol) = problem.evaluate(&params, DEFAULT_EPS_POS).unwrap();
            let Solution::Policy(policy) = sol else { unreachable!() };
            assert!(feasibility_check(&policy, Theorem::NoisySecondHop, &spec, DEFAULT_EPS_POS).is_empty());
        }
    }

    #[test]
    fn thm3_beats_the_uniform_point() {
        let spec = BatterySpec::new(2, 2).unwrap();
        let (ch1, ch2) = (bsc(0.05), bsc(0.1));
        let problem = Problem::NoisyBothHops { spec, ch1, ch2 };
        let best = optimize(&problem, &quick()).unwrap();
        let uniform = rate_thm3(
            &spec,
            &product_policy(&spec, 0.5, 0.5).unwrap(),
            &ch1,
            &ch2,
            DEFAULT_EPS_POS,
        )
        .unwrap();
        assert!(best.breakdown.rate >= uniform.rate);
        let Solution::Policy(p) = &best.solution else {
            unreachable!()
        };
        assert!(feasibility_check(p, Theorem::NoisyBothHops, &spec, DEFAULT_EPS_POS).is_empty());
    }

    #[test]
    fn deterministic_given_seed() {
        let spec = BatterySpec::new(3, 2).unwrap();
        let problem = Problem::NoisyBothHops {
            spec,
            ch1: bsc(0.05),
            ch2: bsc(0.1),
        };
        let a = optimize(&problem, &quick()).unwrap();
        let b = optimize(&problem, &quick()).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.breakdown.rate.to_bits(), b.breakdown.rate.to_bits());
    }

    #[test]
    fn eps_too_large_is_infeasible() {
        let spec = BatterySpec::new(2, 2).unwrap();
        let problem = Problem::NoisySecondHop { spec, ch2: bsc(0.1) };
        let opts = OptimizeOptions {
            eps_pos: 0.3,
            ..quick()
        };
        assert!(matches!(optimize(&problem, &opts), Err(Error::Constraint(_))));
    }
}
