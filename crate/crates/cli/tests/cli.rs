use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ehrelay"))
}

fn config(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("configs")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn rate_prints_header_and_one_row() {
    let o = run(&["rate", "--config", &config("rate.toml")]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("# ehrelay "));
    assert!(lines[0].contains("command=rate"));
    assert!(lines[0].contains("seed=0"));
    assert_eq!(lines[1], "model,m,U,rate,binding,relay_bound,receiver_bound,achievable");
    assert_eq!(lines.len(), 3);
    assert!(lines[2].starts_with("noisy-second-hop,2,2,"));
}

#[test]
fn infeasible_policy_exits_2_with_violations() {
    let o = run(&["rate", "--config", &config("infeasible.toml")]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("state 0"), "{err}");
    assert!(err.lines().any(|l| l.trim_start().starts_with("- ")), "{err}");
}

#[test]
fn bad_loss_row_exits_1() {
    let o = run(&["rate", "--config", &config("loss_verbatim.toml")]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("1.09"));
    let o = run(&["rate", "--config", &config("loss_variant_b.toml")]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_1_and_help_exits_0() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["rate"]).status.code(), Some(1));
    assert_eq!(run(&["rate", "--config", "/nonexistent/x.toml"]).status.code(), Some(1));
    let h = run(&["--help"]);
    assert_eq!(h.status.code(), Some(0));
    assert!(stdout(&h).contains("timing"));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = std::env::temp_dir().join(format!("ehrelay-cli-unknown-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let p = dir.join("c.toml");
    std::fs::write(&p, "theorem = 1\n[battery]\ncapacity = 2\ncost = 2\ncolour = 3\n").unwrap();
    let o = run(&["rate", "--config", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("colour"));
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn unit_wait_shifts_the_delay_by_one() {
    let o = run(&["timing", "--m", "2", "--p1", "0.5", "--v", "const1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let err = stderr(&o);
    assert!(err.contains("E[Z]=4.00000000"), "{err}");
    assert!(err.contains("E[T]=5.00000000"), "{err}");
    let field = |key: &str| -> String {
        err.split_whitespace()
            .find_map(|w| w.strip_prefix(key))
            .unwrap()
            .to_string()
    };
    assert_eq!(field("H(Z)="), field("H(T)="));
    // The T rows are the Z rows moved one slot later.
    let csv = stdout(&o);
    let rows = |name: &str| -> Vec<(u64, String)> {
        csv.lines()
            .filter_map(|l| l.strip_prefix(&format!("{name},")))
            .map(|r| {
                let (v, p) = r.split_once(',').unwrap();
                (v.parse().unwrap(), p.to_string())
            })
            .collect()
    };
    let z = rows("Z");
    let t = rows("T");
    assert_eq!(z.len(), t.len());
    for ((zv, zp), (tv, tp)) in z.iter().zip(&t) {
        assert_eq!(zv + 1, *tv);
        assert_eq!(zp, tp);
    }
}

#[test]
fn timing_requires_positive_arrivals() {
    let o = run(&["timing", "--m", "2", "--p1", "0"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn out_flag_writes_the_same_table() {
    let dir = std::env::temp_dir().join(format!("ehrelay-cli-out-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("rate.csv");
    let direct = run(&["rate", "--config", &config("rate.toml")]);
    let o = run(&[
        "rate",
        "--config",
        &config("rate.toml"),
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    assert_eq!(std::fs::read(&path).unwrap(), direct.stdout);
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn pretty_format_goes_to_stdout() {
    let o = run(&["rate", "--config", &config("rate.toml"), "--format", "pretty"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("binding"));
    assert!(text.contains("receiver bound:"));
    assert!(o.stderr.is_empty());
}

#[test]
fn seed_changes_simulation_output_and_is_recorded() {
    let a = run(&["aep", "--config", &config("aep.toml"), "--seed", "1"]);
    let b = run(&["aep", "--config", &config("aep.toml"), "--seed", "2"]);
    assert!(a.status.success() && b.status.success());
    assert!(stdout(&a).lines().next().unwrap().ends_with("seed=1"));
    assert_ne!(a.stdout, b.stdout);
}

#[test]
fn simulate_rows_cover_every_level() {
    let o = run(&["simulate", "--config", &config("simulate.toml")]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    // 4 trials x 4 levels plus the two header lines.
    assert_eq!(text.lines().count(), 2 + 16);
    for line in text.lines().skip(2) {
        let dev: f64 = line.split(',').nth(4).unwrap().parse().unwrap();
        assert!(dev < 1e-2, "{line}");
    }
}

#[test]
fn timing_model_cannot_be_simulated() {
    let o = run(&["simulate", "--config", &config("timing.toml")]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn optimize_beats_the_fixed_policy() {
    let fixed = run(&["rate", "--config", &config("rate.toml")]);
    let dir = std::env::temp_dir().join(format!("ehrelay-cli-opt-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let p = dir.join("opt.toml");
    std::fs::write(
        &p,
        "theorem = 1\n[battery]\ncapacity = 2\ncost = 2\n[channels.second]\np = 0.1\n[optimizer]\ngrid_points = 9\nrestarts = 2\n",
    )
    .unwrap();
    let best = run(&["optimize", "--config", p.to_str().unwrap()]);
    assert!(best.status.success(), "{}", stderr(&best));
    let rate = |o: &Output| -> f64 {
        stdout(o)
            .lines()
            .nth(2)
            .unwrap()
            .split(',')
            .nth(3)
            .unwrap()
            .parse()
            .unwrap()
    };
    assert!(rate(&best) >= rate(&fixed));
    let digest = stdout(&best)
        .lines()
        .nth(2)
        .unwrap()
        .split(',')
        .nth(8)
        .unwrap()
        .to_string();
    assert_eq!(digest.len(), 16);
    let _ = std::fs::remove_dir_all(&dir);
}
