#![allow(dead_code)]

use okd::instances::{generate, GenSpec};
use okd::threshold::{default_gamma, size_precondition};
use okd::{Instance, KnapsackSpec, ThresholdConfig, ThresholdFn};

pub fn knapsack(capacity: f64, theta: f64, lo: u32, hi: u32, eps: f64) -> KnapsackSpec {
    KnapsackSpec {
        capacity,
        density_ratio: theta,
        duration_lo: lo,
        duration_hi: hi,
        size_cap: eps,
    }
}

/// A knapsack whose size cap sits exactly at the precondition for the
/// default gamma.
pub fn safe_knapsack(capacity: f64, theta: f64, lo: u32, hi: u32) -> KnapsackSpec {
    let g = default_gamma(theta, hi as f64 / lo as f64).unwrap();
    knapsack(
        capacity,
        theta,
        lo,
        hi,
        size_precondition(capacity, g).min(capacity),
    )
}

/// Uniform instance with `k` knapsacks whose parameters vary with the seed.
pub fn uniform(n: usize, k: usize, seed: u64) -> Instance {
    let thetas = [1.0, 2.0, 4.0, 8.0];
    let knapsacks = (0..k)
        .map(|i| {
            let j = (seed as usize + i) % 4;
            knapsack(
                1.0 + j as f64,
                thetas[j],
                1 + (j as u32 % 2),
                2 + j as u32,
                0.3 + 0.2 * j as f64,
            )
        })
        .collect();
    let spec = GenSpec {
        knapsacks,
        eligibility: if seed.is_multiple_of(3) { 1.0 } else { 0.6 },
        ..GenSpec::uniform(n, 12, knapsack(1.0, 1.0, 1, 1, 1.0), k, seed)
    };
    generate(&spec).unwrap().pop().unwrap()
}

pub fn thresholds(inst: &Instance) -> Vec<ThresholdFn> {
    ThresholdConfig::default().build(inst).unwrap()
}
