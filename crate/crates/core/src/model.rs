//! Domain types: items, knapsacks, instances, decisions and the per-slot
//! utilization ledger mutated by the online engine.
//!
//! Slots are integers `1..=horizon`. An item requests a contiguous block of
//! slots in each knapsack it may enter and occupies capacity only there.

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Structural defects that make an instance unusable regardless of the
/// declared fluctuation parameters.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum StructureError {
    #[error("horizon must be at least 1")]
    EmptyHorizon,
    #[error("instance declares no knapsacks")]
    NoKnapsacks,
    #[error("knapsack {knapsack}: {reason}")]
    Knapsack { knapsack: usize, reason: String },
    #[error("item {item}: expected {expected} options, found {found}")]
    OptionCount {
        item: u64,
        expected: usize,
        found: usize,
    },
    #[error("item {item}, knapsack {knapsack}: {reason}")]
    Option {
        item: u64,
        knapsack: usize,
        reason: String,
    },
    #[error("item {item}: arrival {arrival} outside [1, {horizon}]")]
    Arrival {
        item: u64,
        arrival: u32,
        horizon: u32,
    },
    #[error("item {item} arrives at {arrival} after item {prev} arriving at {prev_arrival}")]
    Unsorted {
        item: u64,
        arrival: u32,
        prev: u64,
        prev_arrival: u32,
    },
    #[error("duplicate item id {0}")]
    DuplicateId(u64),
}

/// The contiguous block `{start, ..., start + duration - 1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SlotInterval {
    pub start: u32,
    pub duration: u32,
}

impl SlotInterval {
    pub fn new(start: u32, duration: u32) -> Self {
        Self { start, duration }
    }

    /// Last occupied slot (inclusive).
    pub fn end(&self) -> u64 {
        self.start as u64 + self.duration as u64 - 1
    }

    pub fn slots(&self) -> impl Iterator<Item = u32> + Clone {
        self.start..self.start + self.duration
    }

    pub fn contains(&self, slot: u32) -> bool {
        slot >= self.start && (slot as u64) <= self.end()
    }

    pub fn overlaps(&self, other: &SlotInterval) -> bool {
        (self.start as u64) <= other.end() && (other.start as u64) <= self.end()
    }

    pub fn fits_horizon(&self, horizon: u32) -> bool {
        self.start >= 1 && self.duration >= 1 && self.end() <= horizon as u64
    }
}

impl fmt::Display for SlotInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.start, self.end())
    }
}

/// What an item asks of one particular knapsack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "RawOption", into = "RawOption")]
pub struct ItemOption {
    pub eligible: bool,
    pub size: f64,
    pub value: f64,
    pub interval: SlotInterval,
}

impl ItemOption {
    pub fn new(size: f64, value: f64, interval: SlotInterval) -> Self {
        Self {
            eligible: true,
            size,
            value,
            interval,
        }
    }

    /// Placeholder for a knapsack the item may not enter.
    pub fn ineligible() -> Self {
        Self {
            eligible: false,
            size: 0.0,
            value: 0.0,
            interval: SlotInterval::new(1, 1),
        }
    }

    /// Value per unit size per slot.
    pub fn density(&self) -> f64 {
        self.value / (self.size * self.interval.duration as f64)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOption {
    #[serde(default = "yes")]
    eligible: bool,
    #[serde(default)]
    size: f64,
    #[serde(default)]
    value: f64,
    #[serde(default = "one")]
    start: u32,
    #[serde(default = "one")]
    duration: u32,
}

fn one() -> u32 {
    1
}

fn yes() -> bool {
    true
}

impl From<RawOption> for ItemOption {
    fn from(raw: RawOption) -> Self {
        Self {
            eligible: raw.eligible,
            size: raw.size,
            value: raw.value,
            interval: SlotInterval::new(raw.start, raw.duration),
        }
    }
}

impl From<ItemOption> for RawOption {
    fn from(opt: ItemOption) -> Self {
        Self {
            eligible: opt.eligible,
            size: opt.size,
            value: opt.value,
            start: opt.interval.start,
            duration: opt.interval.duration,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Item {
    pub id: u64,
    pub arrival: u32,
    pub options: Vec<ItemOption>,
}

impl Item {
    pub fn eligible(&self) -> impl Iterator<Item = (usize, &ItemOption)> {
        self.options.iter().enumerate().filter(|(_, o)| o.eligible)
    }

    /// Largest value over eligible knapsacks, or 0 for a vacuous item.
    pub fn best_value(&self) -> f64 {
        self.eligible().map(|(_, o)| o.value).fold(0.0, f64::max)
    }

    pub fn is_vacuous(&self) -> bool {
        self.eligible().next().is_none()
    }
}

/// Capacity and declared fluctuation bounds of one knapsack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KnapsackSpec {
    pub capacity: f64,
    /// Upper bound on value density (lower bound is 1).
    #[serde(rename = "theta")]
    pub density_ratio: f64,
    pub duration_lo: u32,
    pub duration_hi: u32,
    /// Largest size any item may have in this knapsack.
    pub size_cap: f64,
}

impl KnapsackSpec {
    pub fn duration_ratio(&self) -> f64 {
        self.duration_hi as f64 / self.duration_lo as f64
    }

    pub fn check(&self) -> Result<(), String> {
        if !(self.capacity.is_finite() && self.capacity > 0.0) {
            return Err(format!("capacity must be positive, got {}", self.capacity));
        }
        if !(self.density_ratio.is_finite() && self.density_ratio >= 1.0) {
            return Err(format!("theta must be >= 1, got {}", self.density_ratio));
        }
        if self.duration_lo < 1 {
            return Err("duration_lo must be >= 1".into());
        }
        if self.duration_hi < self.duration_lo {
            return Err(format!(
                "duration_hi {} below duration_lo {}",
                self.duration_hi, self.duration_lo
            ));
        }
        if !(self.size_cap.is_finite() && self.size_cap > 0.0) {
            return Err(format!("size_cap must be positive, got {}", self.size_cap));
        }
        if self.size_cap > self.capacity {
            return Err(format!(
                "size_cap {} exceeds capacity {}",
                self.size_cap, self.capacity
            ));
        }
        Ok(())
    }
}

/// A complete offline description of an arrival sequence.
///
/// Deserialization runs [`Instance::check_structure`], so any `Instance`
/// obtained from JSON is structurally sound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawInstance")]
pub struct Instance {
    pub horizon: u32,
    pub knapsacks: Vec<KnapsackSpec>,
    pub items: Vec<Item>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInstance {
    horizon: u32,
    knapsacks: Vec<KnapsackSpec>,
    items: Vec<Item>,
}

impl TryFrom<RawInstance> for Instance {
    type Error = StructureError;

    fn try_from(raw: RawInstance) -> Result<Self, Self::Error> {
        Instance::new(raw.horizon, raw.knapsacks, raw.items)
    }
}

impl Instance {
    pub fn new(
        horizon: u32,
        knapsacks: Vec<KnapsackSpec>,
        items: Vec<Item>,
    ) -> Result<Self, StructureError> {
        let inst = Self {
            horizon,
            knapsacks,
            items,
        };
        inst.check_structure()?;
        Ok(inst)
    }

    pub fn num_knapsacks(&self) -> usize {
        self.knapsacks.len()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacities(&self) -> Vec<f64> {
        self.knapsacks.iter().map(|k| k.capacity).collect()
    }

    pub fn check_structure(&self) -> Result<(), StructureError> {
        if self.horizon < 1 {
            return Err(StructureError::EmptyHorizon);
        }
        if self.knapsacks.is_empty() {
            return Err(StructureError::NoKnapsacks);
        }
        for (k, spec) in self.knapsacks.iter().enumerate() {
            spec.check().map_err(|reason| StructureError::Knapsack {
                knapsack: k,
                reason,
            })?;
        }
        let k_count = self.knapsacks.len();
        let mut seen = HashSet::with_capacity(self.items.len());
        let mut prev: Option<&Item> = None;
        for item in &self.items {
            if !seen.insert(item.id) {
                return Err(StructureError::DuplicateId(item.id));
            }
            if item.arrival < 1 || item.arrival > self.horizon {
                return Err(StructureError::Arrival {
                    item: item.id,
                    arrival: item.arrival,
                    horizon: self.horizon,
                });
            }
            if let Some(p) = prev {
                if item.arrival < p.arrival {
                    return Err(StructureError::Unsorted {
                        item: item.id,
                        arrival: item.arrival,
                        prev: p.id,
                        prev_arrival: p.arrival,
                    });
                }
            }
            prev = Some(item);
            if item.options.len() != k_count {
                return Err(StructureError::OptionCount {
                    item: item.id,
                    expected: k_count,
                    found: item.options.len(),
                });
            }
            for (k, opt) in item.eligible() {
                let bad = |reason: String| StructureError::Option {
                    item: item.id,
                    knapsack: k,
                    reason,
                };
                if !(opt.size.is_finite() && opt.size > 0.0) {
                    return Err(bad(format!("size must be positive, got {}", opt.size)));
                }
                if !(opt.value.is_finite() && opt.value > 0.0) {
                    return Err(bad(format!("value must be positive, got {}", opt.value)));
                }
                if !opt.interval.fits_horizon(self.horizon) {
                    return Err(bad(format!(
                        "interval {} does not fit horizon [1, {}]",
                        opt.interval, self.horizon
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serialization is infallible")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Assignment of one item: `Some(k)` means `x_{nk} = 1`, `None` means declined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub id: u64,
    pub knapsack: Option<usize>,
}

impl Decision {
    pub fn declined(id: u64) -> Self {
        Self { id, knapsack: None }
    }

    pub fn admitted(&self) -> bool {
        self.knapsack.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CapacityError {
    #[error("knapsack {knapsack} out of range")]
    UnknownKnapsack { knapsack: usize },
    #[error("knapsack {knapsack}, slot {slot}: {used} + {size} exceeds capacity {capacity}")]
    Exceeded {
        knapsack: usize,
        slot: u32,
        used: f64,
        size: f64,
        capacity: f64,
    },
}

/// Slot-indexed rows are dense up to this horizon and hashed beyond it.
pub const DENSE_HORIZON_LIMIT: u32 = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
enum Row {
    Dense(Vec<f64>),
    Sparse(HashMap<u32, f64>),
}

impl Row {
    fn new(horizon: u32) -> Self {
        if horizon <= DENSE_HORIZON_LIMIT {
            Row::Dense(vec![0.0; horizon as usize + 1])
        } else {
            Row::Sparse(HashMap::new())
        }
    }

    fn get(&self, slot: u32) -> f64 {
        match self {
            Row::Dense(v) => v.get(slot as usize).copied().unwrap_or(0.0),
            Row::Sparse(m) => m.get(&slot).copied().unwrap_or(0.0),
        }
    }

    fn add(&mut self, slot: u32, size: f64) {
        match self {
            Row::Dense(v) => v[slot as usize] += size,
            Row::Sparse(m) => *m.entry(slot).or_insert(0.0) += size,
        }
    }

    fn set(&mut self, slot: u32, z: f64) {
        match self {
            Row::Dense(v) => v[slot as usize] = z,
            Row::Sparse(m) if z == 0.0 => {
                m.remove(&slot);
            }
            Row::Sparse(m) => {
                m.insert(slot, z);
            }
        }
    }

    fn occupied(&self) -> Vec<(u32, f64)> {
        match self {
            Row::Dense(v) => v
                .iter()
                .enumerate()
                .filter(|(_, z)| **z != 0.0)
                .map(|(t, z)| (t as u32, *z))
                .collect(),
            Row::Sparse(m) => {
                let mut out: Vec<_> = m.iter().map(|(t, z)| (*t, *z)).collect();
                out.sort_unstable_by_key(|(t, _)| *t);
                out
            }
        }
    }
}

/// Committed size `z_{kt}` per knapsack and slot. Only ever grows: a
/// departure is encoded by the item's interval, never by a decrement.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilizationState {
    capacities: Vec<f64>,
    rows: Vec<Row>,
}

impl UtilizationState {
    pub fn new(capacities: &[f64], horizon: u32) -> Self {
        Self {
            capacities: capacities.to_vec(),
            rows: capacities.iter().map(|_| Row::new(horizon)).collect(),
        }
    }

    pub fn for_instance(inst: &Instance) -> Self {
        Self::new(&inst.capacities(), inst.horizon)
    }

    pub fn num_knapsacks(&self) -> usize {
        self.rows.len()
    }

    pub fn capacity(&self, knapsack: usize) -> f64 {
        self.capacities[knapsack]
    }

    pub fn get(&self, knapsack: usize, slot: u32) -> f64 {
        self.rows[knapsack].get(slot)
    }

    /// Utilization over every slot of `interval`, in slot order.
    pub fn snapshot(&self, knapsack: usize, interval: &SlotInterval) -> Vec<f64> {
        let row = &self.rows[knapsack];
        interval.slots().map(|t| row.get(t)).collect()
    }

    /// `z_t + size <= C` for every slot of the interval.
    pub fn fits(&self, knapsack: usize, interval: &SlotInterval, size: f64) -> bool {
        let cap = self.capacities[knapsack];
        let row = &self.rows[knapsack];
        interval.slots().all(|t| row.get(t) + size <= cap)
    }

    /// Adds `size` to every slot of `interval`, refusing (and leaving the
    /// state untouched) if any slot would overflow.
    pub fn commit(
        &mut self,
        knapsack: usize,
        interval: &SlotInterval,
        size: f64,
    ) -> Result<(), CapacityError> {
        let cap = *self
            .capacities
            .get(knapsack)
            .ok_or(CapacityError::UnknownKnapsack { knapsack })?;
        let row = &mut self.rows[knapsack];
        if let Some(t) = interval.slots().find(|&t| row.get(t) + size > cap) {
            return Err(CapacityError::Exceeded {
                knapsack,
                slot: t,
                used: row.get(t),
                size,
                capacity: cap,
            });
        }
        for t in interval.slots() {
            row.add(t, size);
        }
        Ok(())
    }

    /// Puts back a snapshot taken before a commit. Only search code that
    /// backtracks uses this; the online engine never lowers utilization.
    pub(crate) fn restore(&mut self, knapsack: usize, interval: &SlotInterval, saved: &[f64]) {
        let row = &mut self.rows[knapsack];
        for (t, z) in interval.slots().zip(saved) {
            row.set(t, *z);
        }
    }

    /// Nonzero `(slot, z)` pairs of one knapsack in slot order.
    pub fn occupied(&self, knapsack: usize) -> Vec<(u32, f64)> {
        self.rows[knapsack].occupied()
    }

    /// Checks `0 <= z_{kt} <= C_k` everywhere.
    pub fn check(&self) -> Result<(), CapacityError> {
        for (k, row) in self.rows.iter().enumerate() {
            let cap = self.capacities[k];
            for (t, z) in row.occupied() {
                if !(0.0..=cap).contains(&z) {
                    return Err(CapacityError::Exceeded {
                        knapsack: k,
                        slot: t,
                        used: z,
                        size: 0.0,
                        capacity: cap,
                    });
                }
            }
        }
        Ok(())
    }
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn interval_slots_and_overlap() {
        let a = SlotInterval::new(3, 4);
        assert_eq!(a.slots().collect::<Vec<_>>(), vec![3, 4, 5, 6]);
        assert_eq!(a.end(), 6);
        assert!(a.overlaps(&SlotInterval::new(6, 1)));
        assert!(!a.overlaps(&SlotInterval::new(7, 2)));
        assert!(a.fits_horizon(6));
        assert!(!a.fits_horizon(5));
    }

    #[test]
    fn rejects_interval_past_horizon() {
        let err = Instance::new(
            3,
            vec![spec(10.0, 4.0, 1, 4, 10.0)],
            vec![item(0, 1, vec![opt(1.0, 2.0, 2, 3)])],
        )
        .unwrap_err();
        assert!(matches!(err, StructureError::Option { .. }), "{err}");
    }

    #[test]
    fn rejects_nonpositive_size_and_unsorted() {
        let ks = vec![spec(10.0, 4.0, 1, 4, 10.0)];
        let err = Instance::new(5, ks.clone(), vec![item(0, 1, vec![opt(0.0, 2.0, 1, 1)])]);
        assert!(err.is_err());
        let err = Instance::new(
            5,
            ks,
            vec![
                item(0, 3, vec![opt(1.0, 2.0, 3, 1)]),
                item(1, 2, vec![opt(1.0, 2.0, 2, 1)]),
            ],
        )
        .unwrap_err();
        assert!(matches!(err, StructureError::Unsorted { .. }));
    }

    #[test]
    fn ineligible_options_skip_checks() {
        let inst = Instance::new(
            2,
            vec![spec(10.0, 4.0, 1, 4, 10.0), spec(5.0, 2.0, 1, 1, 1.0)],
            vec![item(
                0,
                1,
                vec![opt(1.0, 2.0, 1, 2), ItemOption::ineligible()],
            )],
        )
        .unwrap();
        assert_eq!(inst.items[0].eligible().count(), 1);
    }

    #[test]
    fn json_rejects_unknown_fields() {
        let good = r#"{"horizon":2,"knapsacks":[{"capacity":1,"theta":1,"duration_lo":1,"duration_hi":1,"size_cap":1}],
            "items":[{"id":0,"arrival":1,"options":[{"eligible":true,"size":1,"value":1,"start":1,"duration":1}]}]}"#;
        assert!(Instance::from_json(good).is_ok());
        let bad = good.replace("\"size_cap\":1", "\"size_cap\":1,\"extra\":0");
        assert!(Instance::from_json(&bad).is_err());
        let bad = good.replace("\"duration\":1}", "\"duration\":1,\"weight\":2}");
        assert!(Instance::from_json(&bad).is_err());
    }

    #[test]
    fn json_enforces_structure() {
        let text = r#"{"horizon":1,"knapsacks":[{"capacity":1,"theta":1,"duration_lo":1,"duration_hi":1,"size_cap":1}],
            "items":[{"id":0,"arrival":1,"options":[{"eligible":true,"size":1,"value":1,"start":1,"duration":2}]}]}"#;
        assert!(Instance::from_json(text).is_err());
    }

    #[test]
    fn utilization_commit_is_all_or_nothing() {
        let mut st = UtilizationState::new(&[10.0], 5);
        st.commit(0, &SlotInterval::new(2, 2), 9.0).unwrap();
        let err = st.commit(0, &SlotInterval::new(1, 3), 2.0).unwrap_err();
        assert!(matches!(err, CapacityError::Exceeded { slot: 2, .. }));
        assert_eq!(st.get(0, 1), 0.0);
        assert_eq!(
            st.snapshot(0, &SlotInterval::new(1, 4)),
            vec![0.0, 9.0, 9.0, 0.0]
        );
        st.check().unwrap();
    }

    #[test]
    fn sparse_rows_behave_like_dense() {
        let big = DENSE_HORIZON_LIMIT + 10;
        let mut sparse = UtilizationState::new(&[3.0], big);
        let mut dense = UtilizationState::new(&[3.0], 100);
        for st in [&mut sparse, &mut dense] {
            st.commit(0, &SlotInterval::new(5, 3), 1.5).unwrap();
            st.commit(0, &SlotInterval::new(6, 1), 1.5).unwrap();
            assert!(!st.fits(0, &SlotInterval::new(6, 1), 0.5));
        }
        assert_eq!(sparse.occupied(0), dense.occupied(0));
    }
}
