mod commands;
mod config;
mod output;

use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ehrelay::Error;

use commands::{Context, Outcome, TimingArgs, WaitArg};

#[derive(Parser)]
#[command(
    name = "ehrelay",
    version,
    about = "Achievable rates of an energy-harvesting two-hop relay with a finite battery"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random component; overrides `run.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Write the CSV table here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Pretty,
}

#[derive(Subcommand)]
enum Command {
    /// Rate of a fixed policy.
    Rate,
    /// Maximize the rate over policies.
    Optimize,
    /// Optimized rate along a cost or capacity axis.
    Sweep,
    /// Empirical battery occupancy against the stationary law.
    Simulate,
    /// Per-symbol log-likelihoods of simulated relay output.
    Aep,
    /// Error events of the level-cursor relay code.
    Codec,
    /// Delay and wait laws for the timing scheme.
    Timing {
        /// Energy cost of a transmission (battery capacity equals it).
        #[arg(long)]
        m: Option<usize>,
        /// Probability that a slot delivers a unit of energy.
        #[arg(long)]
        p1: Option<f64>,
        /// Wait rule.
        #[arg(long, value_enum)]
        v: Option<WaitArg>,
        /// Also simulate this many delays.
        #[arg(long)]
        samples: Option<usize>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Constraint(_) | Error::ChannelClass { .. } | Error::NoSteadyState { .. } => 2,
        Error::Numerical(_) | Error::HorizonTooSmall { .. } => 3,
        _ => 1,
    }
}

fn run(cli: &Cli) -> Result<(), Error> {
    let loaded = match &cli.config {
        Some(p) => Some(config::load(p)?),
        None => None,
    };
    let (cfg, hash) = match loaded {
        Some(l) => (l.config, l.hash),
        None => {
            let tag = match &cli.command {
                Command::Timing { m, p1, v, samples } => {
                    format!(
                        "timing m={m:?} p1={p1:?} v={:?} samples={samples:?}",
                        v.map(|v| v == WaitArg::Const1)
                    )
                }
                _ => String::new(),
            };
            (config::Config::default(), config::hash_text(&tag))
        }
    };
    let seed = cli.seed.or(cfg.run.as_ref().and_then(|r| r.seed)).unwrap_or(0);
    let ctx = Context {
        config: &cfg,
        hash: &hash,
        seed,
    };
    let Outcome { csv, summary } = match &cli.command {
        Command::Rate => commands::rate(&ctx)?,
        Command::Optimize => commands::optimize_cmd(&ctx)?,
        Command::Sweep => commands::sweep_cmd(&ctx)?,
        Command::Simulate => commands::simulate(&ctx)?,
        Command::Aep => commands::aep(&ctx)?,
        Command::Codec => commands::codec(&ctx)?,
        Command::Timing { m, p1, v, samples } => commands::timing(
            &ctx,
            &TimingArgs {
                m: *m,
                p1: *p1,
                v: *v,
                samples: *samples,
            },
        )?,
    };
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.output.as_ref().and_then(|o| o.path.as_ref().map(PathBuf::from)));
    let text = csv.into_string();
    if let Some(path) = &out {
        std::fs::write(path, &text).map_err(|e| Error::Validation(format!("cannot write {}: {e}", path.display())))?;
    }
    let mut stdout = std::io::stdout().lock();
    match cli.format {
        Format::Csv => {
            if out.is_none() {
                let _ = stdout.write_all(text.as_bytes());
            }
            for line in &summary {
                eprintln!("{line}");
            }
        }
        Format::Pretty => {
            let _ = stdout.write_all(output::pretty(&text).as_bytes());
            let _ = writeln!(stdout);
            for line in &summary {
                let _ = writeln!(stdout, "{line}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::Constraint(v) = &e {
                for violation in v {
                    eprintln!("  - {violation}");
                }
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
