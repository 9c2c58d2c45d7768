//! Checks an instance against its declared fluctuation bounds: density in
//! `[1, theta]`, duration in `[duration_lo, duration_hi]`, size at most
//! `size_cap`, and optionally the exponential threshold's size bound
//! `size_cap <= C ln 2 / gamma`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Instance, StructureError};
use crate::threshold::size_precondition;

/// Relative slack on bound comparisons, absorbing the rounding in
/// `value = density * size * duration` round trips.
pub const BOUND_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueKind {
    DensityBelowOne,
    DensityAboveTheta,
    DurationBelowLo,
    DurationAboveHi,
    SizeAboveCap,
    SizeCapAboveGammaBound,
    VacuousItem,
    StartBeforeArrival,
}

impl IssueKind {
    /// Whether strict validation treats this as fatal. Starting before
    /// arrival is reported but never fatal.
    pub fn is_violation(self) -> bool {
        !matches!(self, IssueKind::StartBeforeArrival)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Issue {
    pub kind: IssueKind,
    pub knapsack: Option<usize>,
    pub item: Option<u64>,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

/// Observed ranges for one knapsack next to what it declares.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnapsackSummary {
    pub knapsack: usize,
    pub eligible_items: usize,
    /// `[min, max]` observed density, absent without eligible items.
    pub density_range: Option<(f64, f64)>,
    pub theta: f64,
    pub duration_range: Option<(u32, u32)>,
    pub duration_bounds: (u32, u32),
    pub max_size: f64,
    pub size_cap: f64,
    pub gamma: Option<f64>,
    /// `C ln 2 / gamma` when a gamma was supplied.
    pub gamma_size_bound: Option<f64>,
    pub gamma_bound_holds: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub knapsacks: Vec<KnapsackSummary>,
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn violations(&self) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(|i| i.kind.is_violation())
    }

    pub fn is_clean(&self) -> bool {
        self.violations().next().is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error(transparent)]
    Structure(#[from] StructureError),
    #[error("expected {expected} gamma values, found {found}")]
    GammaCount { expected: usize, found: usize },
    #[error("{} assumption violation(s), first: {}", count_violations(.0), first_violation(.0))]
    Violations(Box<ValidationReport>),
}

fn count_violations(r: &ValidationReport) -> usize {
    r.violations().count()
}

fn first_violation(r: &ValidationReport) -> String {
    r.violations()
        .next()
        .map(|i| i.message.clone())
        .unwrap_or_default()
}

fn above(x: f64, bound: f64) -> bool {
    x > bound * (1.0 + BOUND_TOLERANCE)
}

fn below(x: f64, bound: f64) -> bool {
    x < bound * (1.0 - BOUND_TOLERANCE)
}

/// Validates `inst`. With `strict`, any assumption violation becomes
/// [`ValidationError::Violations`]; otherwise violations are returned as
/// issues. Structural defects are always errors. `gammas`, when given,
/// enables the size-bound check per knapsack.
pub fn validate_instance(
    inst: &Instance,
    strict: bool,
    gammas: Option<&[f64]>,
) -> Result<ValidationReport, ValidationError> {
    inst.check_structure()?;
    let k_count = inst.num_knapsacks();
    if let Some(g) = gammas {
        if g.len() != k_count {
            return Err(ValidationError::GammaCount {
                expected: k_count,
                found: g.len(),
            });
        }
    }

    let mut issues = Vec::new();
    let mut summaries: Vec<KnapsackSummary> = inst
        .knapsacks
        .iter()
        .enumerate()
        .map(|(k, spec)| KnapsackSummary {
            knapsack: k,
            eligible_items: 0,
            density_range: None,
            theta: spec.density_ratio,
            duration_range: None,
            duration_bounds: (spec.duration_lo, spec.duration_hi),
            max_size: 0.0,
            size_cap: spec.size_cap,
            gamma: gammas.map(|g| g[k]),
            gamma_size_bound: None,
            gamma_bound_holds: None,
        })
        .collect();

    for item in &inst.items {
        if item.is_vacuous() {
            issues.push(Issue {
                kind: IssueKind::VacuousItem,
                knapsack: None,
                item: Some(item.id),
                message: format!("item {} has no eligible knapsack", item.id),
            });
        }
        for (k, opt) in item.eligible() {
            let spec = &inst.knapsacks[k];
            let sum = &mut summaries[k];
            let density = opt.density();
            let d = opt.interval.duration;
            sum.eligible_items += 1;
            sum.density_range = Some(match sum.density_range {
                None => (density, density),
                Some((lo, hi)) => (lo.min(density), hi.max(density)),
            });
            sum.duration_range = Some(match sum.duration_range {
                None => (d, d),
                Some((lo, hi)) => (lo.min(d), hi.max(d)),
            });
            sum.max_size = sum.max_size.max(opt.size);

            let mut push = |kind, message: String| {
                issues.push(Issue {
                    kind,
                    knapsack: Some(k),
                    item: Some(item.id),
                    message: format!("item {}, knapsack {}: {}", item.id, k, message),
                })
            };
            if below(density, 1.0) {
                push(
                    IssueKind::DensityBelowOne,
                    format!("density {density} below 1"),
                );
            }
            if above(density, spec.density_ratio) {
                push(
                    IssueKind::DensityAboveTheta,
                    format!("density {density} above theta {}", spec.density_ratio),
                );
            }
            if d < spec.duration_lo {
                push(
                    IssueKind::DurationBelowLo,
                    format!("duration {d} below duration_lo {}", spec.duration_lo),
                );
            }
            if d > spec.duration_hi {
                push(
                    IssueKind::DurationAboveHi,
                    format!("duration {d} above duration_hi {}", spec.duration_hi),
                );
            }
            if above(opt.size, spec.size_cap) {
                push(
                    IssueKind::SizeAboveCap,
                    format!("size {} above size_cap {}", opt.size, spec.size_cap),
                );
            }
            if opt.interval.start < item.arrival {
                push(
                    IssueKind::StartBeforeArrival,
                    format!(
                        "requested start {} precedes arrival {}",
                        opt.interval.start, item.arrival
                    ),
                );
            }
        }
    }

    if let Some(gs) = gammas {
        for (k, spec) in inst.knapsacks.iter().enumerate() {
            let bound = size_precondition(spec.capacity, gs[k]);
            let holds = !above(spec.size_cap, bound);
            summaries[k].gamma_size_bound = Some(bound);
            summaries[k].gamma_bound_holds = Some(holds);
            if !holds {
                issues.push(Issue {
                    kind: IssueKind::SizeCapAboveGammaBound,
                    knapsack: Some(k),
                    item: None,
                    message: format!(
                        "knapsack {k}: size_cap {} > C*ln2/gamma = {bound}",
                        spec.size_cap
                    ),
                });
            }
        }
    }

    let report = ValidationReport {
        knapsacks: summaries,
        issues,
    };
    if strict && !report.is_clean() {
        return Err(ValidationError::Violations(Box::new(report)));
    }
    Ok(report)
}

/// Tightest bounds consistent with the instance, per knapsack.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservedParameters {
    pub theta: f64,
    pub alpha: f64,
    pub eps: f64,
}

impl Default for ObservedParameters {
    fn default() -> Self {
        Self {
            theta: 1.0,
            alpha: 1.0,
            eps: 0.0,
        }
    }
}

/// Max density, max/min duration and max size over eligible options; a
/// knapsack with no eligible options reports `(1, 1, 0)`.
pub fn observed_parameters(inst: &Instance) -> Vec<ObservedParameters> {
    (0..inst.num_knapsacks())
        .map(|k| {
            let mut theta: Option<f64> = None;
            let mut d_min = u32::MAX;
            let mut d_max = 0u32;
            let mut eps = 0.0f64;
            for opt in inst
                .items
                .iter()
                .map(|i| &i.options[k])
                .filter(|o| o.eligible)
            {
                let density = opt.density();
                theta = Some(theta.map_or(density, |t| t.max(density)));
                d_min = d_min.min(opt.interval.duration);
                d_max = d_max.max(opt.interval.duration);
                eps = eps.max(opt.size);
            }
            match theta {
                None => ObservedParameters::default(),
                Some(theta) => ObservedParameters {
                    theta,
                    alpha: d_max as f64 / d_min as f64,
                    eps,
                },
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::*;
    use crate::model::ItemOption;
    use proptest::prelude::*;

    fn single(w: f64, d: u32, v: f64, eps: f64) -> Instance {
        Instance::new(
            10,
            vec![spec(10.0, 4.0, 1, 4, eps)],
            vec![item(0, 1, vec![opt(w, v, 1, d)])],
        )
        .unwrap()
    }

    #[test]
    fn lower_edges_are_valid() {
        let r = validate_instance(&single(1.0, 2, 2.0, 10.0), true, None).unwrap();
        assert!(r.issues.is_empty());
        assert_eq!(r.knapsacks[0].density_range, Some((1.0, 1.0)));
        assert_eq!(r.knapsacks[0].duration_range, Some((2, 2)));
    }

    #[test]
    fn density_below_one() {
        let inst = single(1.0, 2, 1.0, 10.0);
        let r = validate_instance(&inst, false, None).unwrap();
        assert_eq!(r.issues.len(), 1);
        assert_eq!(r.issues[0].kind, IssueKind::DensityBelowOne);
        assert!(r.issues[0].message.contains("density 0.5 below 1"));
        assert!(matches!(
            validate_instance(&inst, true, None),
            Err(ValidationError::Violations(_))
        ));
    }

    #[test]
    fn size_bound_warning() {
        let inst = single(1.0, 2, 2.0, 4.0);
        let r = validate_instance(&inst, false, Some(&[9f64.ln()])).unwrap();
        let s = &r.knapsacks[0];
        assert!((s.gamma_size_bound.unwrap() - 3.154_648_767_857_287).abs() < 1e-12);
        assert_eq!(s.gamma_bound_holds, Some(false));
        assert_eq!(r.issues.len(), 1);
        assert_eq!(r.issues[0].kind, IssueKind::SizeCapAboveGammaBound);
        assert!(r.issues[0].message.contains("3.1546"));
        assert!(validate_instance(&inst, true, Some(&[9f64.ln()])).is_err());
        assert!(validate_instance(&inst, true, Some(&[0.1])).is_ok());
        assert!(matches!(
            validate_instance(&inst, false, Some(&[1.0, 2.0])),
            Err(ValidationError::GammaCount { .. })
        ));
    }

    #[test]
    fn duration_and_size_bounds() {
        let inst = Instance::new(
            20,
            vec![spec(10.0, 4.0, 2, 4, 1.0)],
            vec![
                item(0, 1, vec![opt(1.0, 1.0, 1, 1)]),
                item(1, 1, vec![opt(2.0, 10.0, 1, 5)]),
            ],
        )
        .unwrap();
        let r = validate_instance(&inst, false, None).unwrap();
        let kinds: Vec<_> = r.issues.iter().map(|i| i.kind).collect();
        assert_eq!(
            kinds,
            vec![
                IssueKind::DurationBelowLo,
                IssueKind::DurationAboveHi,
                IssueKind::SizeAboveCap
            ]
        );
    }

    #[test]
    fn start_before_arrival_never_fatal() {
        let inst = Instance::new(
            10,
            vec![spec(10.0, 4.0, 1, 4, 10.0)],
            vec![item(0, 3, vec![opt(1.0, 2.0, 1, 2)])],
        )
        .unwrap();
        let r = validate_instance(&inst, true, None).unwrap();
        assert_eq!(r.issues[0].kind, IssueKind::StartBeforeArrival);
    }

    #[test]
    fn vacuous_item_is_violation() {
        let inst = Instance::new(
            10,
            vec![spec(10.0, 4.0, 1, 4, 10.0)],
            vec![item(0, 1, vec![ItemOption::ineligible()])],
        )
        .unwrap();
        assert!(validate_instance(&inst, true, None).is_err());
    }

    #[test]
    fn observed_examples() {
        let inst = Instance::new(
            20,
            vec![spec(10.0, 4.0, 1, 6, 10.0), spec(10.0, 4.0, 1, 6, 10.0)],
            vec![
                item(0, 1, vec![opt(1.0, 2.0, 1, 2), ItemOption::ineligible()]),
                item(1, 1, vec![opt(1.0, 18.0, 1, 6), ItemOption::ineligible()]),
                item(2, 1, vec![opt(0.5, 3.0, 1, 2), ItemOption::ineligible()]),
            ],
        )
        .unwrap();
        let obs = observed_parameters(&inst);
        assert_eq!(obs[0].theta, 3.0);
        assert_eq!(obs[0].alpha, 3.0);
        assert_eq!(obs[0].eps, 1.0);
        assert_eq!(
            obs[1],
            ObservedParameters {
                theta: 1.0,
                alpha: 1.0,
                eps: 0.0
            }
        );
    }

    proptest! {
        #[test]
        fn observed_is_permutation_invariant(
            raw in prop::collection::vec((0.1f64..2.0, 1u32..6, 1.0f64..4.0), 1..12),
            seed in any::<u64>(),
        ) {
            let items: Vec<_> = raw
                .iter()
                .enumerate()
                .map(|(i, (w, d, rho))| item(i as u64, 1, vec![opt(*w, rho * w * *d as f64, 1, *d)]))
                .collect();
            let ks = vec![spec(10.0, 4.0, 1, 6, 2.0)];
            let a = Instance::new(10, ks.clone(), items.clone()).unwrap();
            let mut shuffled = items;
            // Fisher-Yates driven by a splitmix sequence.
            let mut s = seed;
            for i in (1..shuffled.len()).rev() {
                s = s.wrapping_add(0x9E37_79B9_7F4A_7C15);
                let j = (s % (i as u64 + 1)) as usize;
                shuffled.swap(i, j);
            }
            let b = Instance::new(10, ks, shuffled).unwrap();
            let oa = observed_parameters(&a);
            prop_assert_eq!(&oa, &observed_parameters(&b));
            prop_assert_eq!(&oa, &observed_parameters(&a));
        }
    }
}
