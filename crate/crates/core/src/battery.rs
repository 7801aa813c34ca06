//! Battery-state Markov chain at the relay.
//!
//! The battery level `u` in `0..=U` evolves as `u' = min(u + e - m x2, U)`,
//! where `e` is the energy harvested in the slot and `x2` the relay's symbol.
//! A "1" can only be sent when `u >= m`.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result, Violation};
use crate::pmf::{push_through, BinaryChannel, JointPmf, Pmf};

/// Battery capacity `U` and the cost `m` of transmitting a "1".
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatterySpec {
    capacity: usize,
    cost: usize,
}

impl BatterySpec {
    pub fn new(capacity: usize, cost: usize) -> Result<Self> {
        if capacity < 1 {
            return invalid("battery capacity must be at least 1");
        }
        if cost < 2 {
            return invalid(format!("transmission cost must exceed 1, got {cost}"));
        }
        Ok(BatterySpec { capacity, cost })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn cost(&self) -> usize {
        self.cost
    }

    pub fn num_states(&self) -> usize {
        self.capacity + 1
    }

    /// Whether the relay may send a "1" at level `u`.
    pub fn can_spend(&self, u: usize) -> bool {
        u >= self.cost
    }

    pub fn next_state(&self, u: usize, energy: usize, x2: usize) -> usize {
        debug_assert!(x2 == 0 || self.can_spend(u));
        (u + energy - self.cost * x2).min(self.capacity)
    }

    /// Fails unless `U >= m`.
    pub fn require_capacity_covers_cost(&self) -> Result<()> {
        if self.capacity < self.cost {
            return invalid(format!(
                "battery capacity {} is below the transmission cost {}",
                self.capacity, self.cost
            ));
        }
        Ok(())
    }
}

/// Per-state input distributions of the transmitter and relay.
#[derive(Debug, Clone, PartialEq)]
pub enum StatePolicy {
    /// One joint table `p(x1, x2 | u)` per battery level; rows are `x1`,
    /// columns are `x2`.
    Joint(Vec<JointPmf>),
    /// A state-independent `p(x1)` and one `p(x2 | u)` per battery level.
    Product { x1: Pmf, x2_given_u: Vec<Pmf> },
}

impl StatePolicy {
    pub fn num_states(&self) -> usize {
        match self {
            StatePolicy::Joint(v) => v.len(),
            StatePolicy::Product { x2_given_u, .. } => x2_given_u.len(),
        }
    }

    /// `p(x1, x2 | u)`.
    pub fn joint_at(&self, u: usize) -> JointPmf {
        match self {
            StatePolicy::Joint(v) => v[u].clone(),
            StatePolicy::Product { x1, x2_given_u } => JointPmf::product(x1, &x2_given_u[u]),
        }
    }

    /// `p(x2 | u)`.
    pub fn x2_at(&self, u: usize) -> Pmf {
        match self {
            StatePolicy::Joint(v) => v[u].col_marginal(),
            StatePolicy::Product { x2_given_u, .. } => x2_given_u[u].clone(),
        }
    }

    /// The joint policy induced by this one.
    pub fn to_joint(&self) -> StatePolicy {
        StatePolicy::Joint((0..self.num_states()).map(|u| self.joint_at(u)).collect())
    }

    /// Structural checks shared by every use: state count, binary tables, and
    /// no spending below cost.
    pub fn check_support(&self, spec: &BatterySpec) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.num_states() != spec.num_states() {
            out.push(Violation::StateCount {
                expected: spec.num_states(),
                found: self.num_states(),
            });
            return out;
        }
        for u in 0..self.num_states() {
            let shape_ok = match self {
                StatePolicy::Joint(v) => v[u].rows() == 2 && v[u].cols() == 2,
                StatePolicy::Product { x1, x2_given_u } => x1.len() == 2 && x2_given_u[u].len() == 2,
            };
            if !shape_ok {
                out.push(Violation::Shape { state: u });
                continue;
            }
            if !spec.can_spend(u) && self.x2_at(u).get(1) > 0.0 {
                out.push(Violation::SpendingBelowCost { state: u });
            }
        }
        out
    }
}

/// How much energy reaches the battery in one slot.
#[derive(Debug, Clone, PartialEq)]
pub enum ArrivalModel {
    /// Noiseless first hop: the harvested energy equals `x1`.
    Deterministic,
    /// Noisy first hop: the harvested energy equals `y2`.
    Channel(BinaryChannel),
    /// Noisy first hop followed by random loss: `energy[y2]` is the law of the
    /// harvested energy `e` in `0..m` given `y2`.
    Lossy { channel: BinaryChannel, energy: [Pmf; 2] },
}

impl ArrivalModel {
    pub fn validate(&self, spec: &BatterySpec) -> Result<()> {
        if let ArrivalModel::Lossy { energy, .. } = self {
            for (y2, e) in energy.iter().enumerate() {
                if e.len() > spec.cost() {
                    return invalid(format!(
                        "energy law for y2 = {y2} has support beyond m - 1 = {}",
                        spec.cost() - 1
                    ));
                }
            }
        }
        Ok(())
    }

    /// First-hop channel seen by the relay (noiseless for deterministic arrivals).
    pub fn channel(&self) -> BinaryChannel {
        match self {
            ArrivalModel::Deterministic => BinaryChannel::noiseless(),
            ArrivalModel::Channel(ch) | ArrivalModel::Lossy { channel: ch, .. } => *ch,
        }
    }

    /// `p(e | x1)` for `x1 = 0, 1`.
    pub fn energy_given_x1(&self) -> Result<[Pmf; 2]> {
        match self {
            ArrivalModel::Deterministic => Ok([Pmf::point(2, 0), Pmf::point(2, 1)]),
            ArrivalModel::Channel(ch) => Ok([
                push_through(ch, &Pmf::point(2, 0))?,
                push_through(ch, &Pmf::point(2, 1))?,
            ]),
            ArrivalModel::Lossy { channel, energy } => {
                let len = energy[0].len().max(energy[1].len());
                let compose = |x1: usize| {
                    let probs = (0..len)
                        .map(|e| (0..2).map(|y2| channel.prob(x1, y2) * energy[y2].get(e)).sum())
                        .collect();
                    Pmf::from_internal(probs)
                };
                Ok([compose(0)?, compose(1)?])
            }
        }
    }
}

/// Row-stochastic transition matrix over battery levels, ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    rows: Vec<Vec<f64>>,
}

impl Kernel {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return invalid("empty kernel");
        }
        for (i, r) in rows.iter().enumerate() {
            if r.len() != n {
                return invalid(format!("kernel row {i} has {} entries, expected {n}", r.len()));
            }
            if r.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return invalid(format!("kernel row {i} has a negative or non-finite entry"));
            }
            let s: f64 = r.iter().sum();
            if (s - 1.0).abs() > 1e-12 {
                return invalid(format!("kernel row {i} sums to {s}"));
            }
        }
        Ok(Kernel { rows })
    }

    pub fn size(&self) -> usize {
        self.rows.len()
    }

    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.rows[from][to]
    }

    pub fn row(&self, from: usize) -> &[f64] {
        &self.rows[from]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// `max_j |(pi P)_j - pi_j|`.
    pub fn residual(&self, pi: &[f64]) -> f64 {
        let n = self.size();
        (0..n)
            .map(|j| {
                let v: f64 = (0..n).map(|i| pi[i] * self.rows[i][j]).sum();
                (v - pi[j]).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Mass `w[u][u'][x2]` of moving from `u` to `u'` while the relay sends `x2`.
pub(crate) type TransitionWeights = Vec<Vec<[f64; 2]>>;

pub(crate) fn transition_weights(
    spec: &BatterySpec,
    policy: &StatePolicy,
    arrival: &ArrivalModel,
) -> Result<TransitionWeights> {
    let violations = policy.check_support(spec);
    if !violations.is_empty() {
        return Err(Error::Constraint(violations));
    }
    arrival.validate(spec)?;
    let energy = arrival.energy_given_x1()?;
    let n = spec.num_states();
    let mut w = vec![vec![[0.0; 2]; n]; n];
    for (u, row) in w.iter_mut().enumerate() {
        let joint = policy.joint_at(u);
        for x1 in 0..2 {
            for x2 in 0..2 {
                let pj = joint.get(x1, x2);
                if pj == 0.0 {
                    continue;
                }
                for (e, &pe) in energy[x1].probs().iter().enumerate() {
                    if pe > 0.0 {
                        row[spec.next_state(u, e, x2)][x2] += pj * pe;
                    }
                }
            }
        }
    }
    Ok(w)
}

/// Battery transition kernel for a policy and an arrival model.
pub fn build_kernel(spec: &BatterySpec, policy: &StatePolicy, arrival: &ArrivalModel) -> Result<Kernel> {
    let w = transition_weights(spec, policy, arrival)?;
    let rows = w.iter().map(|row| row.iter().map(|c| c[0] + c[1]).collect()).collect();
    Ok(Kernel { rows })
}

/// Structural facts about a kernel that decide whether a steady state exists.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Regularity {
    /// Exactly one closed communicating class.
    pub indecomposable: bool,
    /// Lowest state with a positive self-transition, taken from the closed
    /// class when the chain is indecomposable.
    pub self_loop_state: Option<usize>,
}

impl Regularity {
    pub fn has_steady_state(&self) -> bool {
        self.indecomposable && self.self_loop_state.is_some()
    }
}

fn reachability(k: &Kernel) -> Vec<Vec<bool>> {
    let n = k.size();
    let mut reach = vec![vec![false; n]; n];
    for (s, seen) in reach.iter_mut().enumerate() {
        let mut stack = vec![s];
        seen[s] = true;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                if k.get(i, j) > 0.0 && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    reach
}

/// Closed communicating classes, each as an ascending list of states.
fn closed_classes(k: &Kernel) -> Vec<Vec<usize>> {
    let n = k.size();
    let reach = reachability(k);
    let mut assigned = vec![false; n];
    let mut classes = Vec::new();
    for i in 0..n {
        if assigned[i] {
            continue;
        }
        // i is recurrent iff everything it reaches reaches it back.
        let closed = (0..n).all(|j| !reach[i][j] || reach[j][i]);
        if !closed {
            continue;
        }
        let class: Vec<usize> = (0..n).filter(|&j| reach[i][j]).collect();
        for &j in &class {
            assigned[j] = true;
        }
        classes.push(class);
    }
    classes
}

/// Every closed class lies below the cost, so the relay eventually never
/// transmits whatever the starting level.
pub fn recurrent_below_cost(spec: &BatterySpec, k: &Kernel) -> bool {
    closed_classes(k).iter().flatten().all(|&u| !spec.can_spend(u))
}

pub fn check_regularity(k: &Kernel) -> Regularity {
    let classes = closed_classes(k);
    let indecomposable = classes.len() == 1;
    let candidates: Vec<usize> = if indecomposable {
        classes[0].clone()
    } else {
        (0..k.size()).collect()
    };
    let self_loop_state = candidates.into_iter().find(|&s| k.get(s, s) > 0.0);
    Regularity {
        indecomposable,
        self_loop_state,
    }
}

const STATIONARY_RESIDUAL: f64 = 1e-10;

/// Unique stationary law of a regular kernel.
///
/// Solves `(P^T - I) pi = 0` with the last equation replaced by `sum(pi) = 1`,
/// and falls back to power iteration if the residual check fails.
pub fn stationary(k: &Kernel) -> Result<Pmf> {
    let reg = check_regularity(k);
    if !reg.has_steady_state() {
        return Err(Error::NoSteadyState {
            indecomposable: reg.indecomposable,
            self_loop: reg.self_loop_state.is_some(),
        });
    }
    if let Some(pi) = direct_solve(k) {
        return Ok(pi);
    }
    power_iteration(k)
}

fn direct_solve(k: &Kernel) -> Option<Pmf> {
    let n = k.size();
    let mut a = DMatrix::from_fn(n, n, |i, j| k.get(j, i) - if i == j { 1.0 } else { 0.0 });
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    let x = a.lu().solve(&b)?;
    let mut pi: Vec<f64> = x.iter().copied().collect();
    if pi.iter().any(|p| !p.is_finite() || *p < -1e-12) {
        return None;
    }
    pi.iter_mut().for_each(|p| *p = p.max(0.0));
    let s: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|p| *p /= s);
    (k.residual(&pi) <= STATIONARY_RESIDUAL).then(|| Pmf::from_internal(pi).ok())?
}

fn power_iteration(k: &Kernel) -> Result<Pmf> {
    let n = k.size();
    let mut pi = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    for _ in 0..1_000_000 {
        for j in 0..n {
            next[j] = (0..n).map(|i| pi[i] * k.get(i, j)).sum();
        }
        let s: f64 = next.iter().sum();
        next.iter_mut().for_each(|p| *p /= s);
        std::mem::swap(&mut pi, &mut next);
        if k.residual(&pi) <= STATIONARY_RESIDUAL {
            return Pmf::from_internal(pi);
        }
    }
    Err(Error::Numerical(format!(
        "stationary solve did not reach residual {STATIONARY_RESIDUAL}"
    )))
}

/// Kernel, stationary law, and the regularity flags behind it.
#[derive(Debug, Clone)]
pub struct StationaryAnalysis {
    pub kernel: Kernel,
    pub pi: Pmf,
    pub regularity: Regularity,
}

impl StationaryAnalysis {
    pub fn of(kernel: Kernel) -> Result<Self> {
        let regularity = check_regularity(&kernel);
        let pi = stationary(&kernel)?;
        Ok(StationaryAnalysis { kernel, pi, regularity })
    }

    pub fn build(spec: &BatterySpec, policy: &StatePolicy, arrival: &ArrivalModel) -> Result<Self> {
        Self::of(build_kernel(spec, policy, arrival)?)
    }
}
