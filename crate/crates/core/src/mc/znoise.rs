//! Empirical law of the harvesting delay `Z`, simulated slot by slot.

use rand::Rng;

use super::{coin, rng};
use crate::error::{invalid, Result};
use crate::timing::{z_pmf, IntPmf, ZNoise};

pub const EXPERIMENT: &str = "znoise";

#[derive(Debug, Clone, PartialEq)]
pub struct ZReport {
    /// `counts[z]` samples equal to `z`.
    pub counts: Vec<u64>,
    pub samples: usize,
    pub mean: f64,
    /// Total-variation distance to the truncated analytic law.
    pub tv: f64,
    pub analytic: IntPmf,
}

/// Slots after a "1" until `m` units have arrived. With `overlap` the slot
/// carrying the "1" may itself deliver a unit, which is not counted in `Z`.
pub fn sample_z<R: Rng + ?Sized>(rng: &mut R, m: usize, p1: f64, overlap: bool) -> usize {
    let mut units = usize::from(overlap && coin(rng, p1));
    let mut z = 0;
    while units < m {
        z += 1;
        if coin(rng, p1) {
            units += 1;
        }
    }
    z
}

pub fn z_empirical(m: usize, p1: f64, overlap: bool, samples: usize, seed: u64) -> Result<ZReport> {
    if samples < 1 {
        return invalid("at least one sample is required");
    }
    let analytic = z_pmf(&ZNoise {
        m,
        p1,
        overlap,
        zmax: None,
    })?;
    let mut r = rng::stream(seed, EXPERIMENT, 0);
    let mut counts: Vec<u64> = Vec::new();
    let mut total = 0u64;
    for _ in 0..samples {
        let z = sample_z(&mut r, m, p1, overlap);
        if z >= counts.len() {
            counts.resize(z + 1, 0);
        }
        counts[z] += 1;
        total += z as u64;
    }
    let end = (counts.len() - 1).max(analytic.end());
    let tv = 0.5
        * (0..=end)
            .map(|z| {
                let emp = counts.get(z).copied().unwrap_or(0) as f64 / samples as f64;
                (emp - analytic.prob(z)).abs()
            })
            .sum::<f64>();
    Ok(ZReport {
        counts,
        samples,
        mean: total as f64 / samples as f64,
        tv,
        analytic,
    })
}
