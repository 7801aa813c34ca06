//! TOML configuration schema and its conversion into library types.

use std::path::Path;

use ehrelay::optimize::{OptimizeOptions, SweepAxis, TimingSetup};
use ehrelay::timing::{NoiseOptions, TimingScheme, Wait};
use ehrelay::{BatterySpec, BinaryChannel, Error, JointPmf, Pmf, Result, StatePolicy, Theorem};
use serde::Deserialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    /// 1 noisy second hop, 2 timing, 3 noisy both hops, 4 random loss.
    pub theorem: Option<u8>,
    pub battery: Option<Battery>,
    pub channels: Option<Channels>,
    pub loss: Option<Loss>,
    pub policy: Option<PolicyConfig>,
    pub timing: Option<TimingConfig>,
    pub optimizer: Option<OptimizerConfig>,
    pub run: Option<RunSection>,
    pub sweep: Option<SweepConfig>,
    pub output: Option<OutputConfig>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Battery {
    pub capacity: usize,
    pub cost: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Channels {
    pub first: Option<ChannelConfig>,
    pub second: Option<ChannelConfig>,
}

/// Either `{ q1, q2 }` or a symmetric crossover `{ p }`.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub q1: Option<f64>,
    pub q2: Option<f64>,
    pub p: Option<f64>,
}

impl ChannelConfig {
    pub fn build(&self) -> Result<BinaryChannel> {
        match (self.q1, self.q2, self.p) {
            (Some(q1), Some(q2), None) => BinaryChannel::new(q1, q2),
            (None, None, Some(p)) => BinaryChannel::symmetric(p),
            _ => Err(Error::Validation("a channel takes either q1 and q2, or p".into())),
        }
    }
}

/// `rows[y2]` is the law of the harvested energy given `y2`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Loss {
    pub rows: [Vec<f64>; 2],
}

impl Loss {
    pub fn build(&self) -> Result<[Pmf; 2]> {
        let row = |r: &Vec<f64>, y2: usize| {
            Pmf::new(r.clone()).map_err(|e| match e {
                Error::Validation(msg) => Error::Validation(format!("loss row for y2 = {y2}: {msg}")),
                other => other,
            })
        };
        Ok([row(&self.rows[0], 0)?, row(&self.rows[1], 1)?])
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    /// "joint", "product", or "optimize".
    pub mode: String,
    /// Joint mode: one 2x2 table per level, rows x1, columns x2.
    pub tables: Option<Vec<[[f64; 2]; 2]>>,
    /// Product mode: `p(x1)`.
    pub x1: Option<Vec<f64>>,
    /// Product mode: `p(x2 | u)` per level.
    pub x2_given_u: Option<Vec<Vec<f64>>>,
}

pub enum PolicyChoice {
    Fixed(StatePolicy),
    Optimize,
}

impl PolicyConfig {
    pub fn build(&self) -> Result<PolicyChoice> {
        match self.mode.as_str() {
            "optimize" => Ok(PolicyChoice::Optimize),
            "joint" => {
                let tables = self.tables.as_ref().ok_or_else(|| missing("policy.tables"))?;
                let joint = tables
                    .iter()
                    .map(|t| JointPmf::new(t.iter().map(|r| r.to_vec()).collect()))
                    .collect::<Result<_>>()?;
                Ok(PolicyChoice::Fixed(StatePolicy::Joint(joint)))
            }
            "product" => {
                let x1 = Pmf::new(self.x1.clone().ok_or_else(|| missing("policy.x1"))?)?;
                let x2_given_u = self
                    .x2_given_u
                    .as_ref()
                    .ok_or_else(|| missing("policy.x2_given_u"))?
                    .iter()
                    .map(|r| Pmf::new(r.clone()))
                    .collect::<Result<_>>()?;
                Ok(PolicyChoice::Fixed(StatePolicy::Product { x1, x2_given_u }))
            }
            other => Err(Error::Validation(format!(
                "policy.mode must be joint, product, or optimize (got {other:?})"
            ))),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingConfig {
    /// Auxiliary alphabet size.
    #[serde(rename = "N")]
    pub n: Option<usize>,
    /// "modular" or "constant".
    pub wait: Option<String>,
    /// Wait for the constant rule.
    pub constant: Option<usize>,
    pub overlap: Option<bool>,
    pub zmax: Option<usize>,
    /// Optional `p(u)`; uniform by default.
    pub aux: Option<Vec<f64>>,
    pub search_aux: Option<bool>,
    /// `p(x1 = 1)` for the `timing` command.
    pub p_x1: Option<f64>,
}

impl TimingConfig {
    pub fn build(&self) -> Result<TimingSetup> {
        let n = self.n.unwrap_or(5);
        let scheme = match self.wait.as_deref().unwrap_or("modular") {
            "modular" => {
                let mut s = TimingScheme::modular(n)?;
                if let Some(aux) = &self.aux {
                    s.aux = Pmf::new(aux.clone())?;
                }
                s
            }
            "constant" => TimingScheme::constant(self.constant.unwrap_or(1))?,
            other => {
                return Err(Error::Validation(format!(
                    "timing.wait must be modular or constant (got {other:?})"
                )))
            }
        };
        if matches!(scheme.wait, Wait::Modular { .. }) && scheme.aux.len() > n {
            return Err(Error::Validation("timing.aux is longer than N".into()));
        }
        Ok(TimingSetup {
            scheme,
            noise: NoiseOptions {
                overlap: self.overlap.unwrap_or(false),
                zmax: self.zmax,
                p1_override: None,
            },
            search_aux: self.search_aux.unwrap_or(false),
        })
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub grid_points: Option<usize>,
    pub refine_iters: Option<usize>,
    pub eps_pos: Option<f64>,
    pub restarts: Option<usize>,
}

impl OptimizerConfig {
    pub fn build(&self, seed: u64) -> OptimizeOptions {
        let d = OptimizeOptions::default();
        OptimizeOptions {
            grid_points: self.grid_points.unwrap_or(d.grid_points),
            refine_iters: self.refine_iters.unwrap_or(d.refine_iters),
            eps_pos: self.eps_pos.unwrap_or(d.eps_pos),
            seed,
            restarts: self.restarts.unwrap_or(d.restarts),
        }
    }
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub seed: Option<u64>,
    pub n: Option<usize>,
    pub trials: Option<usize>,
    /// Battery level at step 0 for `simulate`.
    pub initial: Option<usize>,
    /// Block lengths for `codec`.
    pub n_values: Option<Vec<usize>>,
    pub blocks: Option<usize>,
    /// Per-level rate margin below the conditional entropy for `codec`.
    pub margin: Option<f64>,
    pub slack: Option<f64>,
    /// Number of samples for `timing`.
    pub samples: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// "m" (with U = m) or "U" (at fixed cost).
    pub axis: String,
    pub values: Vec<usize>,
    pub theorems: Vec<u8>,
    /// Fixed cost for the "U" axis.
    pub cost: Option<usize>,
}

impl SweepConfig {
    pub fn axis(&self) -> Result<SweepAxis> {
        match self.axis.as_str() {
            "m" => Ok(SweepAxis::Cost),
            "U" => Ok(SweepAxis::Capacity {
                cost: self.cost.ok_or_else(|| missing("sweep.cost"))?,
            }),
            other => Err(Error::Validation(format!("sweep.axis must be m or U (got {other:?})"))),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub path: Option<String>,
}

pub fn missing(what: &str) -> Error {
    Error::Validation(format!("configuration is missing {what}"))
}

/// Parsed config plus the hash of its source text.
pub struct Loaded {
    pub config: Config,
    pub hash: String,
}

pub fn hash_text(text: &str) -> String {
    Sha256::digest(text.as_bytes())
        .iter()
        .take(8)
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn load(path: &Path) -> Result<Loaded> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Validation(format!("cannot read {}: {e}", path.display())))?;
    let config: Config = toml::from_str(&text).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
    Ok(Loaded {
        config,
        hash: hash_text(&text),
    })
}

impl Config {
    pub fn theorem(&self) -> Result<Theorem> {
        let id = self.theorem.ok_or_else(|| missing("theorem"))?;
        Theorem::from_id(id).ok_or_else(|| Error::Validation(format!("theorem must be 1, 2, 3, or 4 (got {id})")))
    }

    pub fn battery(&self) -> Result<BatterySpec> {
        let b = self.battery.as_ref().ok_or_else(|| missing("battery"))?;
        BatterySpec::new(b.capacity, b.cost)
    }

    pub fn first(&self) -> Result<BinaryChannel> {
        self.channels
            .as_ref()
            .and_then(|c| c.first)
            .ok_or_else(|| missing("channels.first"))?
            .build()
    }

    pub fn second(&self) -> Result<BinaryChannel> {
        self.channels
            .as_ref()
            .and_then(|c| c.second)
            .ok_or_else(|| missing("channels.second"))?
            .build()
    }

    pub fn timing_setup(&self) -> Result<TimingSetup> {
        match &self.timing {
            Some(t) => t.build(),
            None => TimingSetup::modular(5),
        }
    }

    /// Metadata note when the auxiliary law falls back to uniform.
    pub fn aux_note(&self) -> Option<&'static str> {
        let t = self.timing.as_ref();
        let explicit =
            t.is_some_and(|t| t.aux.is_some() || t.search_aux == Some(true) || t.wait.as_deref() == Some("constant"));
        (!explicit).then_some("auxiliary law p(u) is the uniform default")
    }

    pub fn run(&self) -> RunSection {
        self.run.clone().unwrap_or_default()
    }
}
