//! Equivalent timing channel for a noisy first hop and `U = m`.
//!
//! After each "1" the relay waits `Z` slots to harvest `m` units (negative
//! binomial in the per-slot arrival probability), then waits `v(u, Z) >= 1`
//! more slots chosen from an auxiliary symbol `u`. The receiver sees
//! `T = Z + v(U, Z)`.

use crate::battery::BatterySpec;
use crate::error::{invalid, Error, Result};
use crate::pmf::{entropy_bits, mutual_information, push_through, BinaryChannel, Pmf};
use crate::rates::RateBreakdown;

/// Cumulative mass the truncated noise law must keep.
pub const TRUNCATION_MASS: f64 = 1.0 - 1e-12;

/// Largest horizon the truncation rule may pick.
pub const MAX_HORIZON: usize = 10_000_000;

/// Distribution over the integers `start ..= start + len - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntPmf {
    start: usize,
    pmf: Pmf,
}

impl IntPmf {
    pub fn new(start: usize, pmf: Pmf) -> Self {
        IntPmf { start, pmf }
    }

    pub fn start(&self) -> usize {
        self.start
    }

    /// Largest value in the stored support.
    pub fn end(&self) -> usize {
        self.start + self.pmf.len() - 1
    }

    pub fn prob(&self, value: usize) -> f64 {
        if value < self.start {
            0.0
        } else {
            self.pmf.get(value - self.start)
        }
    }

    pub fn probs(&self) -> &[f64] {
        self.pmf.probs()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.pmf
            .probs()
            .iter()
            .enumerate()
            .map(move |(i, &p)| (self.start + i, p))
    }

    pub fn mean(&self) -> f64 {
        self.start as f64 + self.pmf.mean_index()
    }

    pub fn entropy(&self) -> f64 {
        self.pmf.entropy()
    }
}

/// Parameters of the timing noise `Z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZNoise {
    /// Units needed per "1".
    pub m: usize,
    /// Per-slot probability that a unit arrives.
    pub p1: f64,
    /// Whether the slot carrying the relay's "1" may itself deliver a unit.
    pub overlap: bool,
    /// Truncation horizon; `None` picks the smallest horizon that keeps
    /// [`TRUNCATION_MASS`].
    pub zmax: Option<usize>,
}

impl ZNoise {
    pub fn new(m: usize, p1: f64) -> Self {
        ZNoise {
            m,
            p1,
            overlap: false,
            zmax: None,
        }
    }
}

/// Unnormalized negative-binomial terms `C(z-1, r-1) p^r (1-p)^(z-r)` for
/// `z = r ..= horizon`.
fn nb_terms(r: usize, p: f64, horizon: usize) -> Vec<f64> {
    if horizon < r {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(horizon - r + 1);
    let mut term = p.powi(r as i32);
    for z in r..=horizon {
        out.push(term);
        term *= (1.0 - p) * z as f64 / (z + 1 - r) as f64;
    }
    out
}

/// Kahan sum, so the truncation rule is not fooled by rounding on long tails.
fn kahan_sum(xs: &[f64]) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for &x in xs {
        let y = x - c;
        let t = s + y;
        c = (t - s) - y;
        s = t;
    }
    s
}

/// Law of `Z` on `start ..= horizon` as raw masses (before renormalizing).
fn z_masses(z: &ZNoise, horizon: usize) -> (usize, Vec<f64>) {
    if !z.overlap {
        return (z.m, nb_terms(z.m, z.p1, horizon));
    }
    let start = z.m - 1;
    let early = nb_terms(z.m - 1, z.p1, horizon);
    let late = nb_terms(z.m, z.p1, horizon);
    let masses = (start..=horizon)
        .map(|v| {
            let a = early.get(v - start).copied().unwrap_or(0.0);
            let b = if v >= z.m { late[v - z.m] } else { 0.0 };
            z.p1 * a + (1.0 - z.p1) * b
        })
        .collect();
    (start, masses)
}

/// Truncated, renormalized law of the timing noise.
///
/// Without overlap this is the negative binomial on `{m, m+1, ..}`; with
/// overlap it is the mixture `p1 NB(m-1) + (1-p1) NB(m)` on `{m-1, ..}`.
pub fn z_pmf(z: &ZNoise) -> Result<IntPmf> {
    if z.m < 2 {
        return invalid("timing noise needs m >= 2");
    }
    if !(z.p1 > 0.0) {
        return Err(Error::DegenerateNoise);
    }
    if z.p1 > 1.0 {
        return invalid(format!("arrival probability {} exceeds 1", z.p1));
    }
    let (start, masses) = match z.zmax {
        Some(h) => {
            let (start, masses) = z_masses(z, h);
            let mass = kahan_sum(&masses);
            if mass < TRUNCATION_MASS {
                return Err(Error::HorizonTooSmall { zmax: h, mass });
            }
            (start, masses)
        }
        None => {
            let mut h = 4 * z.m + 16;
            loop {
                let (start, masses) = z_masses(z, h);
                let mut acc = (0.0f64, 0.0f64);
                let cut = masses.iter().position(|&x| {
                    let y = x - acc.1;
                    let t = acc.0 + y;
                    acc.1 = (t - acc.0) - y;
                    acc.0 = t;
                    acc.0 >= TRUNCATION_MASS
                });
                if let Some(i) = cut {
                    break (start, masses[..=i].to_vec());
                }
                if h >= MAX_HORIZON {
                    return Err(Error::Budget(format!(
                        "timing noise needs a horizon beyond {MAX_HORIZON}"
                    )));
                }
                h = (h * 2).min(MAX_HORIZON);
            }
        }
    };
    let total = kahan_sum(&masses);
    let probs = masses.iter().map(|x| x / total).collect();
    Ok(IntPmf::new(start, Pmf::from_internal(probs)?))
}

/// Wait table `v(u, z)` for `u < rows` and `z <= zmax`.
#[derive(Debug, Clone, PartialEq)]
pub struct WaitTable {
    table: Vec<Vec<usize>>,
}

impl WaitTable {
    pub fn new(table: Vec<Vec<usize>>) -> Result<Self> {
        if table.is_empty() {
            return invalid("empty wait table");
        }
        if table.iter().flatten().any(|&v| v < 1) {
            return invalid("every wait must be at least one slot");
        }
        Ok(WaitTable { table })
    }

    pub fn get(&self, u: usize, z: usize) -> Result<usize> {
        self.table
            .get(u)
            .and_then(|row| row.get(z))
            .copied()
            .ok_or(Error::Coverage { u, z })
    }
}

/// `v(u, z) = ((u - z) mod n) + 1` on `u < n`, `z <= zmax`.
pub fn default_wait_table(n: usize, zmax: usize) -> Result<WaitTable> {
    if n < 1 {
        return invalid("auxiliary alphabet must be nonempty");
    }
    WaitTable::new(
        (0..n)
            .map(|u| (0..=zmax).map(|z| modular_wait(n, u, z)).collect())
            .collect(),
    )
}

fn modular_wait(n: usize, u: usize, z: usize) -> usize {
    (u as i64 - z as i64).rem_euclid(n as i64) as usize + 1
}

/// The relay's deterministic wait function.
#[derive(Debug, Clone, PartialEq)]
pub enum Wait {
    /// `((u - z) mod n) + 1`, defined for every `z`.
    Modular { n: usize },
    /// Always wait `c >= 1` slots.
    Constant(usize),
    /// Explicit table; lookups outside it fail.
    Table(WaitTable),
}

impl Wait {
    pub fn get(&self, u: usize, z: usize) -> Result<usize> {
        match self {
            Wait::Modular { n } => Ok(modular_wait(*n, u, z)),
            Wait::Constant(c) => Ok(*c),
            Wait::Table(t) => t.get(u, z),
        }
    }
}

/// Auxiliary law `p(u)` plus the wait function.
#[derive(Debug, Clone, PartialEq)]
pub struct TimingScheme {
    pub aux: Pmf,
    pub wait: Wait,
}

impl TimingScheme {
    /// Uniform `p(u)` on `n` symbols with the modular wait rule.
    pub fn modular(n: usize) -> Result<Self> {
        if n < 1 {
            return invalid("auxiliary alphabet must be nonempty");
        }
        Ok(TimingScheme {
            aux: Pmf::uniform(n),
            wait: Wait::Modular { n },
        })
    }

    pub fn constant(c: usize) -> Result<Self> {
        if c < 1 {
            return invalid("every wait must be at least one slot");
        }
        Ok(TimingScheme {
            aux: Pmf::point(1, 0),
            wait: Wait::Constant(c),
        })
    }

    fn validate(&self) -> Result<()> {
        match &self.wait {
            Wait::Modular { n } if *n < 1 => invalid("auxiliary alphabet must be nonempty"),
            Wait::Modular { n } if self.aux.len() > *n => {
                invalid("auxiliary law is longer than the modular wait alphabet")
            }
            Wait::Constant(0) => invalid("every wait must be at least one slot"),
            _ => Ok(()),
        }
    }
}

/// Law of `T = Z + v(U, Z)` with `U ~ aux` independent of `Z`.
pub fn t_pmf(z: &IntPmf, scheme: &TimingScheme) -> Result<IntPmf> {
    scheme.validate()?;
    let mut start = usize::MAX;
    let mut end = 0;
    let mut entries = Vec::new();
    for (u, &pu) in scheme.aux.probs().iter().enumerate() {
        if pu == 0.0 {
            continue;
        }
        for (zv, pz) in z.iter() {
            let t = zv + scheme.wait.get(u, zv)?;
            start = start.min(t);
            end = end.max(t);
            entries.push((t, pu * pz));
        }
    }
    let mut probs = vec![0.0; end - start + 1];
    for (t, p) in entries {
        probs[t - start] += p;
    }
    Ok(IntPmf::new(start, Pmf::from_internal(probs)?))
}

/// How the timing noise is set up for [`rate_thm2`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NoiseOptions {
    pub overlap: bool,
    pub zmax: Option<usize>,
    /// Use this arrival probability instead of `P(Y2 = 1)`.
    pub p1_override: Option<f64>,
}

/// Rate of the timing scheme together with the laws behind it.
#[derive(Debug, Clone)]
pub struct TimingRate {
    pub breakdown: RateBreakdown,
    pub p1: f64,
    pub z: IntPmf,
    pub t: IntPmf,
    pub entropy_t: f64,
    pub mean_t: f64,
}

/// `min { I(X1; Y2), H(T) / E[T] - H(Y2 | X1) }` with `Z` driven by
/// `P(Y2 = 1)`.
pub fn rate_thm2(
    spec: &BatterySpec,
    p_x1: &Pmf,
    ch1: &BinaryChannel,
    scheme: &TimingScheme,
    noise: NoiseOptions,
) -> Result<TimingRate> {
    if spec.capacity() != spec.cost() {
        return invalid(format!(
            "the timing scheme needs a battery of exactly m = {} units (got U = {}); \
             with a larger battery the timing noise has memory",
            spec.cost(),
            spec.capacity()
        ));
    }
    let p1 = match noise.p1_override {
        Some(p) => p,
        None => push_through(ch1, p_x1)?.get(1),
    };
    let z = z_pmf(&ZNoise {
        m: spec.cost(),
        p1,
        overlap: noise.overlap,
        zmax: noise.zmax,
    })?;
    let t = t_pmf(&z, scheme)?;
    let entropy_t = entropy_bits(t.probs());
    let mean_t = t.mean();
    let receiver = entropy_t / mean_t - ch1.noise_entropy(p_x1)?;
    let relay = mutual_information(p_x1, ch1)?;
    Ok(TimingRate {
        breakdown: RateBreakdown::new(relay, receiver),
        p1,
        z,
        t,
        entropy_t,
        mean_t,
    })
}
