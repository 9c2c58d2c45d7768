//! Instance generators and trace ingestion.
//!
//! All generators are pure functions of their [`GenSpec`]; randomness comes
//! from [`rng::Sampler`] and is therefore reproducible across runs and
//! platforms.

pub mod rng;
pub mod trace;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Instance, Item, ItemOption, KnapsackSpec, SlotInterval, StructureError};
use rng::Sampler;

pub use trace::{
    ingest_reader, ingest_trace, IngestReport, Placement, TraceError, TraceMapping, ViolationPolicy,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GenError {
    #[error("invalid generator spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Structure(#[from] StructureError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Uniform,
    /// Geometric density ladder on one shared window: a lower-bound probe.
    Staircase,
    /// Arrivals clustered into a few slots.
    Burst,
}

fn default_eligibility() -> f64 {
    1.0
}

fn default_levels() -> usize {
    4
}

fn default_bursts() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenSpec {
    pub family: Family,
    pub n: usize,
    pub horizon: u32,
    /// One entry per knapsack.
    pub knapsacks: Vec<KnapsackSpec>,
    pub seed: u64,
    /// Probability that an item may enter a given knapsack.
    #[serde(default = "default_eligibility")]
    pub eligibility: f64,
    /// Staircase levels.
    #[serde(default = "default_levels")]
    pub levels: usize,
    /// Number of arrival clusters for the burst family.
    #[serde(default = "default_bursts")]
    pub bursts: usize,
}

impl GenSpec {
    /// `k` identical knapsacks.
    pub fn uniform(n: usize, horizon: u32, knapsack: KnapsackSpec, k: usize, seed: u64) -> Self {
        Self {
            family: Family::Uniform,
            n,
            horizon,
            knapsacks: vec![knapsack; k],
            seed,
            eligibility: 1.0,
            levels: default_levels(),
            bursts: default_bursts(),
        }
    }

    fn check(&self) -> Result<(), GenError> {
        if self.knapsacks.is_empty() {
            return Err(GenError::Spec("at least one knapsack is required".into()));
        }
        for (k, s) in self.knapsacks.iter().enumerate() {
            s.check()
                .map_err(|e| GenError::Spec(format!("knapsack {k}: {e}")))?;
        }
        if !(self.eligibility > 0.0 && self.eligibility <= 1.0) {
            return Err(GenError::Spec(format!(
                "eligibility must lie in (0, 1], got {}",
                self.eligibility
            )));
        }
        Ok(())
    }
}

/// Dispatches on `spec.family`. The staircase family yields one instance
/// per prefix; the others yield exactly one.
pub fn generate(spec: &GenSpec) -> Result<Vec<Instance>, GenError> {
    match spec.family {
        Family::Uniform => gen_uniform(spec).map(|i| vec![i]),
        Family::Burst => gen_burst(spec).map(|i| vec![i]),
        Family::Staircase => gen_staircase(spec, spec.levels),
    }
}

fn arrival_window(spec: &GenSpec) -> Result<u32, GenError> {
    let d_max = spec
        .knapsacks
        .iter()
        .map(|k| k.duration_hi)
        .max()
        .unwrap_or(1);
    if d_max >= spec.horizon {
        return Err(GenError::Spec(format!(
            "duration_hi {d_max} leaves no arrival slot in horizon {}",
            spec.horizon
        )));
    }
    Ok(spec.horizon - d_max)
}

fn draw_options(spec: &GenSpec, s: &mut Sampler, arrival: u32) -> Vec<ItemOption> {
    let k_count = spec.knapsacks.len();
    let mut eligible: Vec<bool> = if spec.eligibility >= 1.0 {
        vec![true; k_count]
    } else {
        (0..k_count).map(|_| s.chance(spec.eligibility)).collect()
    };
    if !eligible.iter().any(|e| *e) {
        eligible[s.index(k_count)] = true;
    }
    spec.knapsacks
        .iter()
        .zip(eligible)
        .map(|(ks, ok)| {
            if !ok {
                return ItemOption {
                    interval: SlotInterval::new(arrival, ks.duration_lo),
                    ..ItemOption::ineligible()
                };
            }
            let duration = s.range_u32(ks.duration_lo, ks.duration_hi);
            let size = s.open_upper(ks.size_cap);
            let density = s.range_f64(1.0, ks.density_ratio);
            ItemOption::new(
                size,
                density * size * duration as f64,
                SlotInterval::new(arrival, duration),
            )
        })
        .collect()
}

fn assemble(spec: &GenSpec, s: &mut Sampler, mut arrivals: Vec<u32>) -> Result<Instance, GenError> {
    arrivals.sort_unstable();
    let items = arrivals
        .into_iter()
        .enumerate()
        .map(|(i, a)| Item {
            id: i as u64,
            arrival: a,
            options: draw_options(spec, s, a),
        })
        .collect();
    Ok(Instance::new(spec.horizon, spec.knapsacks.clone(), items)?)
}

/// Arrivals uniform on `[1, T - duration_hi]`, each item starting at its
/// arrival. Per eligible option: duration uniform on the declared range,
/// size uniform on `(0, size_cap]`, density uniform on `[1, theta]`.
pub fn gen_uniform(spec: &GenSpec) -> Result<Instance, GenError> {
    spec.check()?;
    let last = arrival_window(spec)?;
    let mut s = Sampler::new(spec.seed);
    let arrivals = (0..spec.n).map(|_| s.range_u32(1, last)).collect();
    assemble(spec, &mut s, arrivals)
}

/// Like [`gen_uniform`] but every arrival is one of `bursts` slots drawn
/// uniformly from the same window.
pub fn gen_burst(spec: &GenSpec) -> Result<Instance, GenError> {
    spec.check()?;
    if spec.bursts == 0 {
        return Err(GenError::Spec("bursts must be at least 1".into()));
    }
    let last = arrival_window(spec)?;
    let mut s = Sampler::new(spec.seed);
    let centers: Vec<u32> = (0..spec.bursts).map(|_| s.range_u32(1, last)).collect();
    let arrivals = (0..spec.n)
        .map(|_| centers[s.index(centers.len())])
        .collect();
    assemble(spec, &mut s, arrivals)
}

/// Lower-bound probe: `levels` batches on one shared window
/// `[1, duration_lo]` of a single knapsack. Batch `l` (from 0) has density
/// `theta^(l / (levels - 1))` and total size exactly `C`, split into the
/// smallest power-of-two count of items no larger than `size_cap`.
///
/// Returns the `levels` prefix instances: prefix `l` holds batches `0..l`.
/// This is a stand-in construction, not a proven worst case.
pub fn gen_staircase(spec: &GenSpec, levels: usize) -> Result<Vec<Instance>, GenError> {
    spec.check()?;
    if spec.knapsacks.len() != 1 {
        return Err(GenError::Spec(
            "the staircase family uses exactly one knapsack".into(),
        ));
    }
    if levels < 2 {
        return Err(GenError::Spec("staircase needs at least 2 levels".into()));
    }
    let ks = &spec.knapsacks[0];
    let duration = ks.duration_lo;
    if duration > spec.horizon {
        return Err(GenError::Spec(format!(
            "window of {duration} slots exceeds horizon {}",
            spec.horizon
        )));
    }
    let per_batch = batch_count(ks.capacity, ks.size_cap);
    let size = ks.capacity / per_batch as f64;
    let window = SlotInterval::new(1, duration);

    let mut items = Vec::with_capacity(levels * per_batch);
    let mut prefixes = Vec::with_capacity(levels);
    for level in 0..levels {
        let density = staircase_density(ks.density_ratio, level, levels);
        for _ in 0..per_batch {
            items.push(Item {
                id: items.len() as u64,
                arrival: 1,
                options: vec![ItemOption::new(
                    size,
                    density * size * duration as f64,
                    window,
                )],
            });
        }
        prefixes.push(Instance::new(
            spec.horizon,
            spec.knapsacks.clone(),
            items.clone(),
        )?);
    }
    Ok(prefixes)
}

/// `theta^(level / (levels - 1))`, exactly 1 at the bottom and `theta` at
/// the top.
pub fn staircase_density(theta: f64, level: usize, levels: usize) -> f64 {
    if level == 0 {
        1.0
    } else if level + 1 == levels {
        theta
    } else {
        theta.powf(level as f64 / (levels - 1) as f64)
    }
}

/// Smallest power of two `m` with `capacity / m <= size_cap`. Powers of
/// two keep `m * (capacity / m) == capacity` exact in floating point.
fn batch_count(capacity: f64, size_cap: f64) -> usize {
    let mut m = 1usize;
    while capacity / m as f64 > size_cap {
        m *= 2;
    }
    m
}
