//! Online admission with irrevocable decisions.
//!
//! [`ota_admit`] decides for a single knapsack: an item is admissible when
//! its value covers the threshold price `sum_t w * phi(z_t)` of its slots
//! and every slot has room. [`OnlineEngine`] asks every eligible knapsack,
//! assigns the item to the admissible knapsack of highest value (lowest
//! index on ties) and commits the capacity.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    CapacityError, Decision, Instance, Item, KnapsackSpec, SlotInterval, UtilizationState,
};
use crate::threshold::{Threshold, ThresholdError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("snapshot has {found} slots but the interval spans {expected}")]
    Snapshot { expected: usize, found: usize },
    #[error("expected {expected} thresholds, found {found}")]
    ThresholdCount { expected: usize, found: usize },
    #[error(
        "knapsack {knapsack}: threshold capacity {threshold} differs from knapsack capacity {spec}"
    )]
    CapacityMismatch {
        knapsack: usize,
        threshold: f64,
        spec: f64,
    },
    #[error("item {item} has {found} options for {expected} knapsacks")]
    OptionCount {
        item: u64,
        expected: usize,
        found: usize,
    },
    #[error(transparent)]
    Threshold(#[from] ThresholdError),
    #[error(transparent)]
    Capacity(#[from] CapacityError),
}

/// Everything one admission check sees.
#[derive(Debug, Clone, Copy)]
pub struct AdmissionQuery<'a, T: ?Sized> {
    pub value: f64,
    pub size: f64,
    pub interval: SlotInterval,
    pub threshold: &'a T,
    /// Utilization of each slot of `interval`, in slot order.
    pub snapshot: &'a [f64],
    pub capacity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Admission {
    pub admissible: bool,
    /// Threshold price `Phi` of the requested slots.
    pub threshold_value: f64,
}

/// Single-knapsack threshold admission. `value >= Phi` admits on ties.
pub fn ota_admit<T: Threshold + ?Sized>(
    q: &AdmissionQuery<'_, T>,
) -> Result<Admission, EngineError> {
    let expected = q.interval.duration as usize;
    if q.snapshot.len() != expected {
        return Err(EngineError::Snapshot {
            expected,
            found: q.snapshot.len(),
        });
    }
    let mut phi = 0.0;
    let mut room = true;
    for &z in q.snapshot {
        phi += q.size * q.threshold.eval(z)?;
        room &= z + q.size <= q.capacity;
    }
    Ok(Admission {
        admissible: q.value >= phi && room,
        threshold_value: phi,
    })
}

/// Result of checking one eligible knapsack for one item.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnapsackCheck {
    pub phi: f64,
    pub admissible: bool,
    /// Whether capacity alone would allow the item.
    pub fits: bool,
}

/// Per-item audit trail, one entry per knapsack (`None` if ineligible).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemAudit {
    pub id: u64,
    pub admitted: bool,
    pub knapsack: Option<usize>,
    pub phi: Vec<Option<f64>>,
    #[serde(skip)]
    pub checks: Vec<Option<KnapsackCheck>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub decision: Decision,
    pub audit: ItemAudit,
}

/// Stateful online orchestrator over a fixed set of knapsacks.
#[derive(Debug, Clone)]
pub struct OnlineEngine<'a, T> {
    specs: &'a [KnapsackSpec],
    thresholds: &'a [T],
    state: UtilizationState,
}

impl<'a, T: Threshold> OnlineEngine<'a, T> {
    pub fn new(
        specs: &'a [KnapsackSpec],
        thresholds: &'a [T],
        horizon: u32,
    ) -> Result<Self, EngineError> {
        if specs.len() != thresholds.len() {
            return Err(EngineError::ThresholdCount {
                expected: specs.len(),
                found: thresholds.len(),
            });
        }
        for (k, (s, t)) in specs.iter().zip(thresholds).enumerate() {
            if s.capacity != t.capacity() {
                return Err(EngineError::CapacityMismatch {
                    knapsack: k,
                    threshold: t.capacity(),
                    spec: s.capacity,
                });
            }
        }
        let caps: Vec<f64> = specs.iter().map(|s| s.capacity).collect();
        Ok(Self {
            specs,
            thresholds,
            state: UtilizationState::new(&caps, horizon),
        })
    }

    pub fn state(&self) -> &UtilizationState {
        &self.state
    }

    pub fn into_state(self) -> UtilizationState {
        self.state
    }

    pub fn step(&mut self, item: &Item) -> Result<Step, EngineError> {
        oa_okd_step(item, &mut self.state, self.thresholds, self.specs)
    }
}

/// Processes one arriving item against `state`, committing capacity if it
/// is admitted. Ineligible options are never queried.
pub fn oa_okd_step<T: Threshold>(
    item: &Item,
    state: &mut UtilizationState,
    thresholds: &[T],
    specs: &[KnapsackSpec],
) -> Result<Step, EngineError> {
    if item.options.len() != specs.len() {
        return Err(EngineError::OptionCount {
            item: item.id,
            expected: specs.len(),
            found: item.options.len(),
        });
    }
    let mut checks = vec![None; specs.len()];
    let mut best: Option<(usize, f64)> = None;
    for (k, opt) in item.eligible() {
        let snapshot = state.snapshot(k, &opt.interval);
        let q = AdmissionQuery {
            value: opt.value,
            size: opt.size,
            interval: opt.interval,
            threshold: &thresholds[k],
            snapshot: &snapshot,
            capacity: specs[k].capacity,
        };
        let adm = ota_admit(&q)?;
        let fits = snapshot.iter().all(|z| z + opt.size <= specs[k].capacity);
        checks[k] = Some(KnapsackCheck {
            phi: adm.threshold_value,
            admissible: adm.admissible,
            fits,
        });
        if adm.admissible && best.is_none_or(|(_, v)| opt.value > v) {
            best = Some((k, opt.value));
        }
    }

    let chosen = best.map(|(k, _)| k);
    if let Some(k) = chosen {
        let opt = &item.options[k];
        state.commit(k, &opt.interval, opt.size)?;
    }
    Ok(Step {
        decision: Decision {
            id: item.id,
            knapsack: chosen,
        },
        audit: ItemAudit {
            id: item.id,
            admitted: chosen.is_some(),
            knapsack: chosen,
            phi: checks.iter().map(|c| c.map(|c| c.phi)).collect(),
            checks,
        },
    })
}

/// Outcome of a full online pass.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunResult {
    pub profit: f64,
    pub decisions: Vec<Decision>,
    pub items: Vec<ItemAudit>,
    #[serde(skip)]
    pub utilization: UtilizationState,
}

impl RunResult {
    pub fn admitted(&self) -> usize {
        self.decisions.iter().filter(|d| d.admitted()).count()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run result serialization is infallible")
    }
}

/// Runs the online algorithm over `inst` from empty knapsacks, in item
/// order. Deterministic.
pub fn run<T: Threshold>(inst: &Instance, thresholds: &[T]) -> Result<RunResult, EngineError> {
    let mut engine = OnlineEngine::new(&inst.knapsacks, thresholds, inst.horizon)?;
    let mut decisions = Vec::with_capacity(inst.len());
    let mut items = Vec::with_capacity(inst.len());
    let mut profit = 0.0;
    for item in &inst.items {
        let step = engine.step(item)?;
        if let Some(k) = step.decision.knapsack {
            profit += item.options[k].value;
        }
        decisions.push(step.decision);
        items.push(step.audit);
    }
    Ok(RunResult {
        profit,
        decisions,
        items,
        utilization: engine.into_state(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::*;
    use crate::model::ItemOption;
    use crate::threshold::{Exponential, ThresholdFn};

    fn exp(gamma: f64, cap: f64) -> Exponential {
        Exponential::new(gamma, cap).unwrap()
    }

    fn query<'a>(
        v: f64,
        w: f64,
        d: u32,
        th: &'a Exponential,
        snap: &'a [f64],
    ) -> AdmissionQuery<'a, Exponential> {
        AdmissionQuery {
            value: v,
            size: w,
            interval: SlotInterval::new(1, d),
            threshold: th,
            snapshot: snap,
            capacity: th.capacity,
        }
    }

    #[test]
    fn empty_knapsack_admits() {
        let th = exp(9f64.ln(), 10.0);
        let a = ota_admit(&query(5.0, 1.0, 3, &th, &[0.0; 3])).unwrap();
        assert_eq!(
            a,
            Admission {
                admissible: true,
                threshold_value: 0.0
            }
        );
    }

    #[test]
    fn half_full_rejects_on_price() {
        let th = exp(9f64.ln(), 10.0);
        let a = ota_admit(&query(5.0, 1.0, 3, &th, &[5.0; 3])).unwrap();
        assert!(!a.admissible);
        assert!((a.threshold_value - 6.0).abs() < 1e-12);
    }

    #[test]
    fn capacity_clause_dominates() {
        let th = exp(9f64.ln(), 10.0);
        let a = ota_admit(&query(100.0, 2.0, 1, &th, &[9.0])).unwrap();
        assert!(!a.admissible);
        assert!(a.threshold_value < 100.0);
    }

    #[test]
    fn tie_admits() {
        let th = exp(1.0, 10.0);
        let snap = [3.0, 7.0];
        let phi = ota_admit(&query(0.0, 1.5, 2, &th, &snap))
            .unwrap()
            .threshold_value;
        assert!(
            ota_admit(&query(phi, 1.5, 2, &th, &snap))
                .unwrap()
                .admissible
        );
        let below = f64::from_bits(phi.to_bits() - 1);
        assert!(
            !ota_admit(&query(below, 1.5, 2, &th, &snap))
                .unwrap()
                .admissible
        );
    }

    #[test]
    fn snapshot_must_cover_interval() {
        let th = exp(1.0, 10.0);
        let err = ota_admit(&query(1.0, 1.0, 3, &th, &[0.0, 0.0])).unwrap_err();
        assert_eq!(
            err,
            EngineError::Snapshot {
                expected: 3,
                found: 2
            }
        );
    }

    fn two_knapsacks() -> (Vec<KnapsackSpec>, Vec<ThresholdFn>) {
        let specs = vec![spec(10.0, 4.0, 1, 4, 10.0), spec(10.0, 4.0, 1, 4, 10.0)];
        let th = specs
            .iter()
            .map(|s| ThresholdFn::exponential(9f64.ln(), s.capacity).unwrap())
            .collect();
        (specs, th)
    }

    #[test]
    fn assigns_to_highest_value() {
        let (specs, th) = two_knapsacks();
        let mut st = UtilizationState::new(&[10.0, 10.0], 5);
        let it = item(0, 1, vec![opt(1.0, 3.0, 1, 1), opt(1.0, 5.0, 1, 1)]);
        let step = oa_okd_step(&it, &mut st, &th, &specs).unwrap();
        assert_eq!(step.decision.knapsack, Some(1));
        assert_eq!(st.get(1, 1), 1.0);
        assert_eq!(st.get(0, 1), 0.0);
    }

    #[test]
    fn value_tie_goes_to_lowest_index() {
        let (specs, th) = two_knapsacks();
        let mut st = UtilizationState::new(&[10.0, 10.0], 5);
        let it = item(0, 1, vec![opt(1.0, 4.0, 1, 1), opt(1.0, 4.0, 1, 1)]);
        let step = oa_okd_step(&it, &mut st, &th, &specs).unwrap();
        assert_eq!(step.decision.knapsack, Some(0));
    }

    #[test]
    fn neither_admissible_declines_without_state_change() {
        let (specs, th) = two_knapsacks();
        let mut st = UtilizationState::new(&[10.0, 10.0], 5);
        st.commit(0, &SlotInterval::new(1, 1), 9.5).unwrap();
        st.commit(1, &SlotInterval::new(1, 1), 9.5).unwrap();
        let before = st.clone();
        let it = item(0, 1, vec![opt(1.0, 40.0, 1, 1), opt(1.0, 40.0, 1, 1)]);
        let step = oa_okd_step(&it, &mut st, &th, &specs).unwrap();
        assert_eq!(step.decision, Decision::declined(0));
        assert_eq!(st, before);
        let check = step.audit.checks[0].unwrap();
        assert!(!check.fits && !check.admissible);
    }

    #[test]
    fn ineligible_never_queried() {
        let (specs, th) = two_knapsacks();
        let mut st = UtilizationState::new(&[10.0, 10.0], 5);
        let it = item(0, 1, vec![ItemOption::ineligible(), opt(1.0, 4.0, 1, 1)]);
        let step = oa_okd_step(&it, &mut st, &th, &specs).unwrap();
        assert_eq!(step.audit.phi, vec![None, Some(0.0)]);
        assert_eq!(step.decision.knapsack, Some(1));
    }

    #[test]
    fn run_empty_and_single() {
        let specs = vec![spec(10.0, 4.0, 1, 4, 10.0)];
        let empty = Instance::new(5, specs.clone(), vec![]).unwrap();
        let th = vec![exp(1.0, 10.0)];
        let r = run(&empty, &th).unwrap();
        assert_eq!(r.profit, 0.0);
        assert!(r.decisions.is_empty());

        let one = Instance::new(5, specs, vec![item(0, 1, vec![opt(1.0, 7.0, 1, 2)])]).unwrap();
        let r = run(&one, &th).unwrap();
        assert_eq!(r.profit, 7.0);
        assert_eq!(r.admitted(), 1);
    }

    #[test]
    fn run_checks_threshold_shape() {
        let inst = Instance::new(5, vec![spec(10.0, 4.0, 1, 4, 10.0)], vec![]).unwrap();
        assert!(matches!(
            run(&inst, &[exp(1.0, 10.0), exp(1.0, 10.0)]),
            Err(EngineError::ThresholdCount { .. })
        ));
        assert!(matches!(
            run(&inst, &[exp(1.0, 5.0)]),
            Err(EngineError::CapacityMismatch { .. })
        ));
    }

    #[test]
    fn departures_free_capacity() {
        let specs = vec![spec(1.0, 1.0, 1, 2, 1.0)];
        let inst = Instance::new(
            4,
            specs,
            vec![
                item(0, 1, vec![opt(1.0, 2.0, 1, 2)]),
                item(1, 2, vec![opt(1.0, 2.0, 2, 2)]),
                item(2, 3, vec![opt(1.0, 2.0, 3, 2)]),
            ],
        )
        .unwrap();
        // A flat zero threshold isolates the capacity clause.
        let flat = crate::threshold::Tabulated::new(1.0, vec![(0.0, 0.0), (1.0, 0.0)]).unwrap();
        let r = run(&inst, &[flat]).unwrap();
        let got: Vec<_> = r.decisions.iter().map(|d| d.knapsack).collect();
        assert_eq!(got, vec![Some(0), None, Some(0)]);
        assert_eq!(r.profit, 4.0);
    }

    #[test]
    fn result_json_shape() {
        let specs = vec![spec(10.0, 4.0, 1, 4, 10.0)];
        let inst = Instance::new(5, specs, vec![item(3, 1, vec![opt(1.0, 7.0, 1, 2)])]).unwrap();
        let r = run(&inst, &[exp(1.0, 10.0)]).unwrap();
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v["profit"], 7.0);
        assert_eq!(v["decisions"][0]["id"], 3);
        assert_eq!(v["decisions"][0]["knapsack"], 0);
        assert_eq!(v["items"][0]["admitted"], true);
        assert_eq!(v["items"][0]["phi"][0], 0.0);
    }
}
