//! Subcommand implementations. Each returns the CSV table plus summary lines.

use ehrelay::battery::StationaryAnalysis;
use ehrelay::chain::{markov_entropy_rate, pair_chain};
use ehrelay::mc::aep::empirical_aep;
use ehrelay::mc::codec::{relay_codec_trial, CodecConfig};
use ehrelay::mc::occupancy::simulate_states;
use ehrelay::mc::znoise::z_empirical;
use ehrelay::mc::RunConfig;
use ehrelay::optimize::{optimize, sweep, Problem, Solution, SweepSpec};
use ehrelay::rates::{rate_thm1, rate_thm3, rate_thm4, RateBreakdown, DEFAULT_EPS_POS};
use ehrelay::timing::{rate_thm2, NoiseOptions, TimingScheme};
use ehrelay::{ArrivalModel, BatterySpec, BinaryChannel, Error, Pmf, Result, StatePolicy, Theorem};

use crate::config::{missing, Config, PolicyChoice};
use crate::output::{num, Csv};

pub struct Outcome {
    pub csv: Csv,
    pub summary: Vec<String>,
}

/// Everything a command needs besides its own flags.
pub struct Context<'a> {
    pub config: &'a Config,
    pub hash: &'a str,
    pub seed: u64,
}

impl Context<'_> {
    fn csv(&self, command: &str, header: &[&str]) -> Csv {
        Csv::new(command, self.hash, self.seed, header)
    }

    fn fixed_policy(&self) -> Result<StatePolicy> {
        match self.config.policy.as_ref().ok_or_else(|| missing("policy"))?.build()? {
            PolicyChoice::Fixed(p) => Ok(p),
            PolicyChoice::Optimize => Err(Error::Validation(
                "policy.mode = \"optimize\" is only meaningful for the optimize command".into(),
            )),
        }
    }

    fn loss(&self) -> Result<[Pmf; 2]> {
        self.config.loss.as_ref().ok_or_else(|| missing("loss"))?.build()
    }

    fn arrival(&self, theorem: Theorem) -> Result<ArrivalModel> {
        match theorem {
            Theorem::NoisySecondHop => Ok(ArrivalModel::Deterministic),
            Theorem::NoisyBothHops => Ok(ArrivalModel::Channel(self.config.first()?)),
            Theorem::RandomLoss => Ok(ArrivalModel::Lossy {
                channel: self.config.first()?,
                energy: self.loss()?,
            }),
            Theorem::Timing => Err(Error::Validation(
                "the timing model has no battery policy to simulate; use the timing command".into(),
            )),
        }
    }

    fn optimizer(&self) -> ehrelay::optimize::OptimizeOptions {
        self.config
            .optimizer
            .as_ref()
            .map(|o| o.build(self.seed))
            .unwrap_or_else(|| ehrelay::optimize::OptimizeOptions {
                seed: self.seed,
                ..Default::default()
            })
    }

    fn eps_pos(&self) -> f64 {
        self.config
            .optimizer
            .as_ref()
            .and_then(|o| o.eps_pos)
            .unwrap_or(DEFAULT_EPS_POS)
    }

    fn run_config(&self, default_n: usize, default_trials: usize) -> RunConfig {
        let r = self.config.run();
        RunConfig::new(self.seed, r.n.unwrap_or(default_n), r.trials.unwrap_or(default_trials))
    }
}

fn annotate(csv: &mut Csv, c: &Config) {
    if let Some(note) = c.aux_note() {
        csv.note(note);
    }
}

const RATE_HEADER: [&str; 8] = [
    "model",
    "m",
    "U",
    "rate",
    "binding",
    "relay_bound",
    "receiver_bound",
    "achievable",
];

fn rate_cells(theorem: Theorem, spec: &BatterySpec, r: &RateBreakdown) -> Vec<String> {
    vec![
        theorem.label().into(),
        spec.cost().to_string(),
        spec.capacity().to_string(),
        num(r.rate),
        r.binding.to_string(),
        num(r.relay_bound),
        num(r.receiver_bound),
        num(r.achievable),
    ]
}

fn rate_summary(theorem: Theorem, r: &RateBreakdown) -> Vec<String> {
    vec![
        format!("model: {} ({})", theorem.label(), theorem.id()),
        format!("relay bound:    {}", num(r.relay_bound)),
        format!("receiver bound: {}", num(r.receiver_bound)),
        format!("rate:           {} (binding: {})", num(r.rate), r.binding),
        format!("achievable:     {}", num(r.achievable)),
    ]
}

pub fn rate(ctx: &Context) -> Result<Outcome> {
    let c = ctx.config;
    let theorem = c.theorem()?;
    let spec = c.battery()?;
    let eps = ctx.eps_pos();
    let r = match theorem {
        Theorem::NoisySecondHop => rate_thm1(&spec, &ctx.fixed_policy()?, &c.second()?, eps)?,
        Theorem::NoisyBothHops => rate_thm3(&spec, &ctx.fixed_policy()?, &c.first()?, &c.second()?, eps)?,
        Theorem::RandomLoss => rate_thm4(
            &spec,
            &ctx.fixed_policy()?,
            &c.first()?,
            &c.second()?,
            &ctx.loss()?,
            eps,
        )?,
        Theorem::Timing => {
            let setup = c.timing_setup()?;
            let p = c.timing.as_ref().and_then(|t| t.p_x1).unwrap_or(0.5);
            rate_thm2(&spec, &Pmf::bernoulli(p)?, &c.first()?, &setup.scheme, setup.noise)?.breakdown
        }
    };
    let mut csv = ctx.csv("rate", &RATE_HEADER);
    if theorem == Theorem::Timing {
        annotate(&mut csv, c);
    }
    csv.row(&rate_cells(theorem, &spec, &r));
    Ok(Outcome {
        csv,
        summary: rate_summary(theorem, &r),
    })
}

fn params_cell(params: &[f64]) -> String {
    params.iter().map(|p| num(*p)).collect::<Vec<_>>().join(";")
}

fn describe_solution(s: &Solution) -> Vec<String> {
    match s {
        Solution::Policy(StatePolicy::Joint(tables)) => tables
            .iter()
            .enumerate()
            .map(|(u, t)| {
                format!(
                    "  u={u}: p(x1,x2) = [[{}, {}], [{}, {}]]",
                    num(t.get(0, 0)),
                    num(t.get(0, 1)),
                    num(t.get(1, 0)),
                    num(t.get(1, 1))
                )
            })
            .collect(),
        Solution::Policy(StatePolicy::Product { x1, x2_given_u }) => {
            let mut out = vec![format!("  p(x1=1) = {}", num(x1.get(1)))];
            out.extend(
                x2_given_u
                    .iter()
                    .enumerate()
                    .map(|(u, p)| format!("  u={u}: p(x2=1|u) = {}", num(p.get(1)))),
            );
            out
        }
        Solution::Timing { p_x1, scheme } => vec![
            format!("  p(x1=1) = {}", num(p_x1.get(1))),
            format!(
                "  p(u) = [{}]",
                scheme
                    .aux
                    .probs()
                    .iter()
                    .map(|p| num(*p))
                    .collect::<Vec<_>>()
                    .join(", ")
            ),
        ],
    }
}

pub fn optimize_cmd(ctx: &Context) -> Result<Outcome> {
    let c = ctx.config;
    let theorem = c.theorem()?;
    let spec = c.battery()?;
    let loss = match theorem {
        Theorem::RandomLoss => Some(ctx.loss()?),
        _ => None,
    };
    let timing = match theorem {
        Theorem::Timing => Some(c.timing_setup()?),
        _ => None,
    };
    let ch1 = match theorem {
        Theorem::NoisySecondHop => BinaryChannel::noiseless(),
        _ => c.first()?,
    };
    let ch2 = match theorem {
        Theorem::Timing => BinaryChannel::noiseless(),
        _ => c.second()?,
    };
    let problem = Problem::new(theorem, spec, ch1, ch2, loss.as_ref(), timing.as_ref())?;
    let best = optimize(&problem, &ctx.optimizer())?;
    let mut header = RATE_HEADER.to_vec();
    header.extend(["digest", "params"]);
    let mut csv = ctx.csv("optimize", &header);
    if theorem == Theorem::Timing {
        annotate(&mut csv, c);
    }
    let mut cells = rate_cells(theorem, &spec, &best.breakdown);
    cells.extend([best.digest(), params_cell(&best.params)]);
    csv.row(&cells);
    let mut summary = rate_summary(theorem, &best.breakdown);
    summary.push(format!("policy digest:  {}", best.digest()));
    summary.push("best policy:".into());
    summary.extend(describe_solution(&best.solution));
    Ok(Outcome { csv, summary })
}

pub fn sweep_cmd(ctx: &Context) -> Result<Outcome> {
    let c = ctx.config;
    let s = c.sweep.as_ref().ok_or_else(|| missing("sweep"))?;
    let axis = s.axis()?;
    let theorems = s
        .theorems
        .iter()
        .map(|&id| {
            Theorem::from_id(id).ok_or_else(|| Error::Validation(format!("unknown theorem {id} in sweep.theorems")))
        })
        .collect::<Result<Vec<_>>>()?;
    let needs_first = theorems.iter().any(|t| *t != Theorem::NoisySecondHop);
    let needs_second = theorems.iter().any(|t| *t != Theorem::Timing);
    let ch1 = if needs_first {
        c.first()?
    } else {
        BinaryChannel::noiseless()
    };
    let ch2 = if needs_second {
        c.second()?
    } else {
        BinaryChannel::noiseless()
    };
    let loss = if theorems.contains(&Theorem::RandomLoss) {
        Some(ctx.loss()?)
    } else {
        None
    };
    let timing = if theorems.contains(&Theorem::Timing) {
        Some(c.timing_setup()?)
    } else {
        None
    };
    let mut header = RATE_HEADER.to_vec();
    header.push("digest");
    let mut csv = ctx.csv("sweep", &header);
    if timing.is_some() {
        annotate(&mut csv, c);
    }
    let mut summary = Vec::new();
    for theorem in theorems {
        let rows = sweep(&SweepSpec {
            theorem,
            axis,
            values: s.values.clone(),
            ch1,
            ch2,
            loss: loss.clone(),
            timing: timing.clone(),
            options: ctx.optimizer(),
        })?;
        let mut line = format!("{:<18}", theorem.label());
        for row in rows {
            let spec = BatterySpec::new(row.capacity, row.cost)?;
            let mut cells = rate_cells(theorem, &spec, &row.optimum.breakdown);
            cells.push(row.optimum.digest());
            csv.row(&cells);
            line.push_str(&format!(" {:>9.5}", row.optimum.breakdown.rate));
        }
        summary.push(line);
    }
    summary.insert(
        0,
        format!("optimized rate per swept value ({}: {:?})", s.axis, {
            let mut v = s.values.clone();
            v.sort_unstable();
            v.dedup();
            v
        }),
    );
    Ok(Outcome { csv, summary })
}

pub fn simulate(ctx: &Context) -> Result<Outcome> {
    let c = ctx.config;
    let theorem = c.theorem()?;
    let spec = c.battery()?;
    let policy = ctx.fixed_policy()?;
    let arrival = ctx.arrival(theorem)?;
    let cfg = ctx.run_config(1_000_000, 1);
    let initial = c.run().initial.unwrap_or(0);
    let rep = simulate_states(&spec, &policy, &arrival, &cfg, initial)?;
    let mut csv = ctx.csv("simulate", &["trial", "u", "frequency", "pi", "deviation"]);
    for (t, occ) in rep.trials.iter().enumerate() {
        for (u, (&f, &p)) in occ.frequencies.iter().zip(rep.pi.probs()).enumerate() {
            csv.row(&[t.to_string(), u.to_string(), num(f), num(p), num((f - p).abs())]);
        }
    }
    let worst = rep.trials.iter().map(|o| o.max_deviation).fold(0.0, f64::max);
    Ok(Outcome {
        csv,
        summary: vec![
            format!("steps per trial: {}, trials: {}", cfg.n, cfg.trials),
            format!(
                "stationary law:  [{}]",
                rep.pi.probs().iter().map(|p| num(*p)).collect::<Vec<_>>().join(", ")
            ),
            format!("max deviation:   {}", num(worst)),
        ],
    })
}

pub fn aep(ctx: &Context) -> Result<Outcome> {
    let c = ctx.config;
    let theorem = c.theorem()?;
    let spec = c.battery()?;
    let policy = ctx.fixed_policy()?;
    let arrival = ctx.arrival(theorem)?;
    let ch2 = c.second()?;
    let analysis = StationaryAnalysis::build(&spec, &policy, &arrival)?;
    let chain = pair_chain(&spec, &policy, &arrival, &analysis)?;
    let cfg = ctx.run_config(10_000, 100);
    let rep = empirical_aep(&chain, &ch2, &cfg)?;
    let mut csv = ctx.csv("aep", &["trial", "n", "marginal_bits", "joint_bits"]);
    for (t, (m, j)) in rep.marginal.iter().zip(&rep.joint).enumerate() {
        csv.row(&[t.to_string(), cfg.n.to_string(), num(*m), num(*j)]);
    }
    Ok(Outcome {
        csv,
        summary: vec![
            format!("n = {}, trials = {}", cfg.n, cfg.trials),
            format!(
                "-(1/n) log2 p(y):    mean {} std {}",
                num(rep.marginal_mean),
                num(rep.marginal_std)
            ),
            format!(
                "-(1/n) log2 p(x, y): mean {} std {}",
                num(rep.joint_mean),
                num(rep.joint_std)
            ),
            format!("pair-chain entropy rate bound: {}", num(markov_entropy_rate(&chain))),
        ],
    })
}

pub fn codec(ctx: &Context) -> Result<Outcome> {
    let c = ctx.config;
    let spec = c.battery()?;
    let policy = ctx.fixed_policy()?;
    let run = c.run();
    let mut cc = CodecConfig::with_margin(spec, policy, run.margin.unwrap_or(0.2))?;
    if let Some(s) = run.slack {
        cc.slack = s;
    }
    let n_values = run.n_values.clone().unwrap_or_else(|| vec![200, 400, 800]);
    let blocks = run.blocks.unwrap_or(20);
    let trials = run.trials.unwrap_or(10);
    let mut csv = ctx.csv(
        "codec",
        &[
            "n",
            "blocks",
            "eps1",
            "eps2",
            "p_eps1",
            "p_eps2",
            "error_sum",
            "mean_forced_steps",
            "message_bits",
        ],
    );
    let mut summary = vec![format!(
        "per-level rates: [{}], slack {}",
        cc.rates.iter().map(|r| num(*r)).collect::<Vec<_>>().join(", "),
        num(cc.slack)
    )];
    for n in n_values {
        let rep = relay_codec_trial(&cc, blocks, &RunConfig::new(ctx.seed, n, trials))?;
        csv.row(&[
            n.to_string(),
            rep.blocks.to_string(),
            rep.eps1.to_string(),
            rep.eps2.to_string(),
            num(rep.p_eps1),
            num(rep.p_eps2),
            num(rep.error_sum()),
            num(rep.mean_forced_steps),
            num(rep.layout.message_bits),
        ]);
        summary.push(format!(
            "n = {n:>5}: P(eps1) = {}, P(eps2) = {}",
            num(rep.p_eps1),
            num(rep.p_eps2)
        ));
    }
    Ok(Outcome { csv, summary })
}

/// `const1` or `modular` from the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum WaitArg {
    Const1,
    Modular,
}

pub struct TimingArgs {
    pub m: Option<usize>,
    pub p1: Option<f64>,
    pub v: Option<WaitArg>,
    pub samples: Option<usize>,
}

pub fn timing(ctx: &Context, args: &TimingArgs) -> Result<Outcome> {
    let c = ctx.config;
    let spec = match (args.m, &c.battery) {
        (Some(m), _) => BatterySpec::new(m, m)?,
        (None, Some(_)) => c.battery()?,
        (None, None) => return Err(missing("battery (or --m)")),
    };
    let mut setup = c.timing_setup()?;
    match args.v {
        Some(WaitArg::Const1) => setup.scheme = TimingScheme::constant(1)?,
        Some(WaitArg::Modular) => {
            let n = c.timing.as_ref().and_then(|t| t.n).unwrap_or(5);
            setup.scheme = TimingScheme::modular(n)?;
        }
        None => {}
    }
    let has_first = c.channels.as_ref().is_some_and(|ch| ch.first.is_some());
    let ch1 = if has_first {
        c.first()?
    } else {
        BinaryChannel::noiseless()
    };
    let mut p_x1 = c.timing.as_ref().and_then(|t| t.p_x1).unwrap_or(0.5);
    let mut noise = setup.noise;
    if let Some(p1) = args.p1 {
        if has_first {
            noise = NoiseOptions {
                p1_override: Some(p1),
                ..noise
            };
        } else {
            p_x1 = p1;
        }
    }
    let r = rate_thm2(&spec, &Pmf::bernoulli(p_x1)?, &ch1, &setup.scheme, noise)?;
    let mut csv = ctx.csv("timing", &["variable", "value", "probability"]);
    if args.v != Some(WaitArg::Const1) {
        annotate(&mut csv, c);
    }
    for (name, law) in [("Z", &r.z), ("T", &r.t)] {
        for (v, p) in law.iter() {
            csv.row(&[name.into(), v.to_string(), num(p)]);
        }
    }
    let mut summary = vec![
        format!("m = {}, p1 = {}, overlap = {}", spec.cost(), num(r.p1), noise.overlap),
        format!("E[Z]={} H(Z)={}", num(r.z.mean()), num(r.z.entropy())),
        format!("E[T]={} H(T)={}", num(r.mean_t), num(r.entropy_t)),
    ];
    summary.extend(rate_summary(Theorem::Timing, &r.breakdown));
    if let Some(samples) = args.samples.or(c.run().samples) {
        let e = z_empirical(spec.cost(), r.p1, noise.overlap, samples, ctx.seed)?;
        summary.push(format!(
            "simulated Z: {samples} samples, mean {}, total variation {}",
            num(e.mean),
            num(e.tv)
        ));
    }
    Ok(Outcome { csv, summary })
}
