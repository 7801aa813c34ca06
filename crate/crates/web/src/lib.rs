//! Browser bindings. Every export takes plain numbers and returns a JSON
//! string, or throws a string error.

use ehrelay::optimize::{sweep, OptimizeOptions, SweepAxis, SweepSpec, TimingSetup};
use ehrelay::rates::{product_policy, rate_thm1, rate_thm3, rate_thm4, DEFAULT_EPS_POS};
use ehrelay::timing::{rate_thm2, NoiseOptions, TimingScheme};
use ehrelay::{ArrivalModel, BatterySpec, BinaryChannel, Error, Pmf, RateBreakdown, StationaryAnalysis, Theorem};
use serde::Serialize;
use wasm_bindgen::prelude::*;

type Out = Result<String, String>;

fn err(e: Error) -> String {
    e.to_string()
}

fn json<T: Serialize>(v: &T) -> Out {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

/// The lossy arrival used throughout the demo: no harvest after a received
/// "0", one unit with probability 0.9 after a received "1".
fn demo_loss() -> Result<[Pmf; 2], Error> {
    Ok([Pmf::point(2, 0), Pmf::new(vec![0.1, 0.9])?])
}

#[derive(Serialize)]
struct Breakdown {
    rate: f64,
    relay_bound: f64,
    receiver_bound: f64,
    achievable: f64,
    binding: String,
}

impl From<&RateBreakdown> for Breakdown {
    fn from(r: &RateBreakdown) -> Self {
        Breakdown {
            rate: r.rate,
            relay_bound: r.relay_bound,
            receiver_bound: r.receiver_bound,
            achievable: r.achievable,
            binding: r.binding.to_string(),
        }
    }
}

#[derive(Serialize)]
struct Curve {
    model: &'static str,
    x: Vec<usize>,
    rate: Vec<f64>,
}

/// Optimized rate of every model along the cost axis (`axis = "m"`, with
/// capacity equal to the cost) or the capacity axis (`axis = "U"`, cost 2).
/// The timing model is skipped on the capacity axis, where it is undefined.
pub fn rate_curves_json(axis: &str, max: usize, p_first: f64, p_second: f64, grid_points: usize) -> Out {
    let (sweep_axis, x) = match axis {
        "m" => (SweepAxis::Cost, (2..=max).collect::<Vec<_>>()),
        "U" => (SweepAxis::Capacity { cost: 2 }, (2..=max).collect()),
        other => return Err(format!("axis must be m or U, got {other:?}")),
    };
    if x.is_empty() || max > 12 {
        return Err("the largest value must lie between 2 and 12".into());
    }
    let ch1 = BinaryChannel::symmetric(p_first).map_err(err)?;
    let ch2 = BinaryChannel::symmetric(p_second).map_err(err)?;
    let options = OptimizeOptions {
        grid_points,
        restarts: 2,
        refine_iters: 60,
        ..Default::default()
    };
    let mut curves = Vec::new();
    for theorem in Theorem::ALL {
        if theorem == Theorem::Timing && axis == "U" {
            continue;
        }
        let rows = sweep(&SweepSpec {
            theorem,
            axis: sweep_axis,
            values: x.clone(),
            ch1,
            ch2,
            loss: Some(demo_loss().map_err(err)?),
            timing: Some(TimingSetup::modular(5).map_err(err)?),
            options,
        })
        .map_err(err)?;
        curves.push(Curve {
            model: theorem.label(),
            x: x.clone(),
            rate: rows.iter().map(|r| r.optimum.breakdown.rate).collect(),
        });
    }
    json(&curves)
}

#[derive(Serialize)]
struct TimingView {
    z: Vec<(usize, f64)>,
    t: Vec<(usize, f64)>,
    mean_z: f64,
    mean_t: f64,
    entropy_z: f64,
    entropy_t: f64,
    breakdown: Breakdown,
}

/// Delay laws and the timing rate over a noiseless first hop with
/// `p(x1 = 1) = p1`. `wait` is "const1" or "modular" (with `n` symbols).
pub fn timing_json(m: usize, p1: f64, wait: &str, n: usize) -> Out {
    let spec = BatterySpec::new(m, m).map_err(err)?;
    let scheme = match wait {
        "const1" => TimingScheme::constant(1),
        "modular" => TimingScheme::modular(n),
        other => return Err(format!("wait must be const1 or modular, got {other:?}")),
    }
    .map_err(err)?;
    let p = Pmf::bernoulli(p1).map_err(err)?;
    let r = rate_thm2(&spec, &p, &BinaryChannel::noiseless(), &scheme, NoiseOptions::default()).map_err(err)?;
    // Drop the far tail so the page stays light; it carries < 1e-6 of mass.
    let trim = |law: &ehrelay::timing::IntPmf| -> Vec<(usize, f64)> {
        let mut acc = 0.0;
        law.iter()
            .take_while(|&(_, q)| {
                let keep = acc < 1.0 - 1e-6;
                acc += q;
                keep
            })
            .collect()
    };
    json(&TimingView {
        z: trim(&r.z),
        t: trim(&r.t),
        mean_z: r.z.mean(),
        mean_t: r.mean_t,
        entropy_z: r.z.entropy(),
        entropy_t: r.entropy_t,
        breakdown: (&r.breakdown).into(),
    })
}

#[derive(Serialize)]
struct StationaryView {
    pi: Vec<f64>,
    kernel: Vec<Vec<f64>>,
    second_hop_only: Breakdown,
    noisy_both_hops: Breakdown,
    random_loss: Breakdown,
}

/// Battery law and per-model rates of the product policy `p(x1 = 1) = p1`,
/// `p(x2 = 1 | u) = send` at every level that can pay the cost.
/// `arrival` picks the harvesting model: "x1", "y2", or "lossy".
pub fn stationary_json(
    capacity: usize,
    cost: usize,
    p1: f64,
    send: f64,
    arrival: &str,
    p_first: f64,
    p_second: f64,
) -> Out {
    let spec = BatterySpec::new(capacity, cost).map_err(err)?;
    let policy = product_policy(&spec, p1, send).map_err(err)?;
    let ch1 = BinaryChannel::symmetric(p_first).map_err(err)?;
    let ch2 = BinaryChannel::symmetric(p_second).map_err(err)?;
    let loss = demo_loss().map_err(err)?;
    let model = match arrival {
        "x1" => ArrivalModel::Deterministic,
        "y2" => ArrivalModel::Channel(ch1),
        "lossy" => ArrivalModel::Lossy {
            channel: ch1,
            energy: loss.clone(),
        },
        other => return Err(format!("arrival must be x1, y2, or lossy, got {other:?}")),
    };
    let a = StationaryAnalysis::build(&spec, &policy, &model).map_err(err)?;
    let eps = DEFAULT_EPS_POS;
    json(&StationaryView {
        pi: a.pi.probs().to_vec(),
        kernel: a.kernel.rows().to_vec(),
        second_hop_only: (&rate_thm1(&spec, &policy.to_joint(), &ch2, eps).map_err(err)?).into(),
        noisy_both_hops: (&rate_thm3(&spec, &policy, &ch1, &ch2, eps).map_err(err)?).into(),
        random_loss: (&rate_thm4(&spec, &policy, &ch1, &ch2, &loss, eps).map_err(err)?).into(),
    })
}

#[wasm_bindgen]
pub fn rate_curves(axis: &str, max: usize, p_first: f64, p_second: f64, grid_points: usize) -> Result<String, JsValue> {
    rate_curves_json(axis, max, p_first, p_second, grid_points).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn timing(m: usize, p1: f64, wait: &str, n: usize) -> Result<String, JsValue> {
    timing_json(m, p1, wait, n).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn stationary(
    capacity: usize,
    cost: usize,
    p1: f64,
    send: f64,
    arrival: &str,
    p_first: f64,
    p_second: f64,
) -> Result<String, JsValue> {
    stationary_json(capacity, cost, p1, send, arrival, p_first, p_second).map_err(|e| JsValue::from_str(&e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    #[test]
    fn timing_view_shifts_by_one() {
        let v: Value = serde_json::from_str(&timing_json(2, 0.5, "const1", 5).unwrap()).unwrap();
        assert!((v["mean_t"].as_f64().unwrap() - 5.0).abs() < 1e-9);
        assert!((v["entropy_t"].as_f64().unwrap() - v["entropy_z"].as_f64().unwrap()).abs() < 1e-12);
        assert_eq!(v["z"][0][0], 2);
        assert_eq!(v["t"][0][0], 3);
    }

    #[test]
    fn stationary_view_of_worked_battery() {
        let v: Value = serde_json::from_str(&stationary_json(2, 2, 0.5, 0.5, "x1", 0.05, 0.1).unwrap()).unwrap();
        let pi: Vec<f64> = v["pi"]
            .as_array()
            .unwrap()
            .iter()
            .map(|x| x.as_f64().unwrap())
            .collect();
        for (got, want) in pi.iter().zip([0.2, 0.4, 0.4]) {
            assert!((got - want).abs() < 1e-12);
        }
        assert_eq!(v["kernel"].as_array().unwrap().len(), 3);
    }

    #[test]
    fn curves_have_one_point_per_value() {
        let v: Value = serde_json::from_str(&rate_curves_json("U", 3, 0.05, 0.1, 3).unwrap()).unwrap();
        let curves = v.as_array().unwrap();
        assert_eq!(curves.len(), 3);
        for c in curves {
            assert_eq!(c["rate"].as_array().unwrap().len(), 2);
        }
    }

    #[test]
    fn bad_inputs_are_reported() {
        assert!(timing_json(1, 0.5, "const1", 5).is_err());
        assert!(timing_json(2, 0.5, "sometimes", 5).is_err());
        assert!(stationary_json(2, 2, 0.5, 0.5, "wind", 0.05, 0.1).is_err());
        assert!(rate_curves_json("z", 4, 0.05, 0.1, 3).is_err());
    }
}
