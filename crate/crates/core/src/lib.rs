//! Online multiple knapsack with item departures.
//!
//! * [`model`]: items, knapsacks, instances and the utilization ledger.
//! * [`validate`]: checks against declared density, duration and size bounds.
//! * [`threshold`]: exponential and tabulated marginal-cost functions.
//! * [`engine`]: threshold admission and the online multi-knapsack loop.
//! * [`oracle`]: exact offline optimum, brute-force cross-check, upper bound.
//! * [`instances`]: seeded generators and CSV trace ingestion.
//! * [`bench`]: empirical competitive ratios and the gamma tuner.

pub mod bench;
pub mod engine;
pub mod instances;
pub mod model;
pub mod oracle;
pub mod threshold;
pub mod validate;

pub use engine::{ota_admit, run, AdmissionQuery, RunResult};
pub use model::{
    Decision, Instance, Item, ItemOption, KnapsackSpec, SlotInterval, UtilizationState,
};
pub use oracle::{solve_bruteforce, solve_exact, upper_bound, OfflineSolution};
pub use threshold::{default_gamma, size_precondition, Threshold, ThresholdConfig, ThresholdFn};
pub use validate::{observed_parameters, validate_instance, ValidationReport};
