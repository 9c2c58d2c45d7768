//! Offline optimum: the best total value of an assignment in which every
//! item goes to at most one eligible knapsack and no knapsack slot exceeds
//! its capacity.
//!
//! [`solve_exact`] is a depth-first branch and bound; [`solve_bruteforce`]
//! enumerates every assignment and exists only to cross-check it.
//! [`upper_bound`] is a cheap surrogate for instances too large for either.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Decision, Instance, UtilizationState};
use crate::validate::observed_parameters;

/// Largest `(K + 1)^N` the brute-force enumerator accepts.
pub const BRUTEFORCE_LIMIT: f64 = 1e8;

pub const DEFAULT_NODE_BUDGET: u64 = 50_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("instance too large for enumeration: (K+1)^N = {size:e} exceeds {limit:e}")]
    TooLarge { size: f64, limit: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Proof {
    /// The search completed; `objective` is optimal.
    Exact,
    /// The search was cut short; `objective` is only an incumbent and
    /// `bound` an upper bound on the optimum.
    UpperBoundOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfflineSolution {
    pub objective: f64,
    pub proof: Proof,
    /// Upper bound on the optimum; equals `objective` when exact.
    pub bound: f64,
    pub nodes: u64,
    pub decisions: Vec<Decision>,
}

impl OfflineSolution {
    pub fn is_exact(&self) -> bool {
        self.proof == Proof::Exact
    }

    pub fn assignment(&self) -> Vec<Option<usize>> {
        self.decisions.iter().map(|d| d.knapsack).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("solution serialization is infallible")
    }
}

/// Replays an assignment into a fresh utilization ledger, in item order.
/// Returns the total value, or `None` if an option is ineligible or a
/// capacity is exceeded.
pub fn evaluate_assignment(inst: &Instance, assignment: &[Option<usize>]) -> Option<f64> {
    if assignment.len() != inst.len() {
        return None;
    }
    let mut state = UtilizationState::for_instance(inst);
    let mut total = 0.0;
    for (item, choice) in inst.items.iter().zip(assignment) {
        if let Some(k) = *choice {
            let opt = item.options.get(k).filter(|o| o.eligible)?;
            state.commit(k, &opt.interval, opt.size).ok()?;
            total += opt.value;
        }
    }
    Some(total)
}

/// `min(sum_n max_k v_nk, sum_k theta_k * C_k * |slots requested in k|)`.
///
/// `theta_k` is the larger of the declared and the observed density bound,
/// so the second term stays a bound on instances that break their
/// declaration.
pub fn upper_bound(inst: &Instance) -> f64 {
    let by_value: f64 = inst.items.iter().map(|i| i.best_value()).sum();
    let observed = observed_parameters(inst);
    let by_area: f64 = inst
        .knapsacks
        .iter()
        .enumerate()
        .map(|(k, spec)| {
            let theta = spec.density_ratio.max(observed[k].theta);
            theta * spec.capacity * requested_slots(inst, k).len() as f64
        })
        .sum();
    by_value.min(by_area)
}

/// Sorted distinct slots requested by eligible options of `items` in `k`.
fn slots_of<'a>(items: impl Iterator<Item = &'a crate::model::Item>, k: usize) -> Vec<u32> {
    let mut slots: Vec<u32> = items
        .map(|i| &i.options[k])
        .filter(|o| o.eligible)
        .flat_map(|o| o.interval.slots())
        .collect();
    slots.sort_unstable();
    slots.dedup();
    slots
}

fn requested_slots(inst: &Instance, k: usize) -> Vec<u32> {
    slots_of(inst.items.iter(), k)
}

/// Bound inflation guarding pruning against rounding in the area bound.
const PRUNE_SLACK: f64 = 1e-9;

struct Search<'a> {
    inst: &'a Instance,
    /// Eligible knapsacks per item, highest value first.
    children: Vec<Vec<usize>>,
    /// `suffix_value[i]`: sum of best values of items `i..`.
    suffix_value: Vec<f64>,
    /// `suffix_density[i][k]`: max density among items `i..` in `k`.
    suffix_density: Vec<Vec<f64>>,
    /// `suffix_slots[i][k]`: slots requested by items `i..` in `k`.
    suffix_slots: Vec<Vec<Vec<u32>>>,
    state: UtilizationState,
    path: Vec<Option<usize>>,
    best: Vec<Option<usize>>,
    best_value: f64,
    nodes: u64,
    budget: u64,
    exhausted: bool,
}

impl<'a> Search<'a> {
    fn new(inst: &'a Instance, budget: u64) -> Self {
        let n = inst.len();
        let k_count = inst.num_knapsacks();
        let children = inst
            .items
            .iter()
            .map(|item| {
                let mut ks: Vec<usize> = item.eligible().map(|(k, _)| k).collect();
                // Stable: equal values keep knapsack order.
                ks.sort_by(|a, b| item.options[*b].value.total_cmp(&item.options[*a].value));
                ks
            })
            .collect();
        let mut suffix_value = vec![0.0; n + 1];
        let mut suffix_density = vec![vec![0.0f64; k_count]; n + 1];
        for i in (0..n).rev() {
            let item = &inst.items[i];
            suffix_value[i] = suffix_value[i + 1] + item.best_value();
            suffix_density[i] = suffix_density[i + 1].clone();
            for (k, opt) in item.eligible() {
                suffix_density[i][k] = suffix_density[i][k].max(opt.density());
            }
        }
        let suffix_slots = (0..=n)
            .map(|i| {
                (0..k_count)
                    .map(|k| slots_of(inst.items[i..].iter(), k))
                    .collect()
            })
            .collect();
        Self {
            inst,
            children,
            suffix_value,
            suffix_density,
            suffix_slots,
            state: UtilizationState::for_instance(inst),
            path: Vec::with_capacity(n),
            best: vec![None; n],
            best_value: 0.0,
            nodes: 0,
            budget,
            exhausted: false,
        }
    }

    /// Fractional capacity-time bound on what items `i..` can still add.
    fn area_bound(&self, i: usize) -> f64 {
        (0..self.inst.num_knapsacks())
            .map(|k| {
                let density = self.suffix_density[i][k];
                if density == 0.0 {
                    return 0.0;
                }
                let cap = self.state.capacity(k);
                let free: f64 = self.suffix_slots[i][k]
                    .iter()
                    .map(|&t| (cap - self.state.get(k, t)).max(0.0))
                    .sum();
                density * free
            })
            .sum()
    }

    fn prunable(&self, i: usize, value: f64) -> bool {
        let inflate = |b: f64| value + b * (1.0 + PRUNE_SLACK) + PRUNE_SLACK;
        if inflate(self.suffix_value[i]) <= self.best_value {
            return true;
        }
        inflate(self.area_bound(i)) <= self.best_value
    }

    fn descend(&mut self, i: usize, value: f64) {
        if self.exhausted {
            return;
        }
        self.nodes += 1;
        if self.nodes > self.budget {
            self.exhausted = true;
            return;
        }
        if i == self.inst.len() {
            if value > self.best_value {
                self.best_value = value;
                self.best.copy_from_slice(&self.path);
            }
            return;
        }
        if self.prunable(i, value) {
            return;
        }
        let item = &self.inst.items[i];
        for c in 0..self.children[i].len() {
            let k = self.children[i][c];
            let opt = &item.options[k];
            if !self.state.fits(k, &opt.interval, opt.size) {
                continue;
            }
            let saved = self.state.snapshot(k, &opt.interval);
            self.state
                .commit(k, &opt.interval, opt.size)
                .expect("fits() checked capacity");
            self.path.push(Some(k));
            self.descend(i + 1, value + opt.value);
            self.path.pop();
            self.state.restore(k, &opt.interval, &saved);
            if self.exhausted {
                return;
            }
        }
        self.path.push(None);
        self.descend(i + 1, value);
        self.path.pop();
    }
}

fn decisions(inst: &Instance, assignment: &[Option<usize>]) -> Vec<Decision> {
    inst.items
        .iter()
        .zip(assignment)
        .map(|(item, k)| Decision {
            id: item.id,
            knapsack: *k,
        })
        .collect()
}

/// Depth-first branch and bound over items in input order. Children try
/// eligible knapsacks by decreasing value and declining last. A node is
/// pruned when either the sum of remaining best values or a fractional
/// capacity-time bound cannot beat the incumbent.
///
/// When more than `node_budget` nodes would be needed, the best incumbent
/// is returned tagged [`Proof::UpperBoundOnly`].
pub fn solve_exact(inst: &Instance, node_budget: u64) -> OfflineSolution {
    let mut search = Search::new(inst, node_budget);
    search.descend(0, 0.0);
    let Search {
        best,
        best_value,
        nodes,
        exhausted,
        ..
    } = search;
    let (proof, bound) = if exhausted {
        (Proof::UpperBoundOnly, upper_bound(inst).max(best_value))
    } else {
        (Proof::Exact, best_value)
    };
    OfflineSolution {
        objective: best_value,
        proof,
        bound,
        nodes: nodes.min(node_budget),
        decisions: decisions(inst, &best),
    }
}

/// Exhaustive enumeration of all `(K + 1)^N` assignment vectors.
///
/// Shares no code with [`solve_exact`]: it keeps its own per-slot load
/// table and applies no value bound. A prefix that already overflows a
/// slot is skipped along with its extensions, all of which overflow too.
pub fn solve_bruteforce(inst: &Instance) -> Result<OfflineSolution, OracleError> {
    let n = inst.len();
    let size = (inst.num_knapsacks() as f64 + 1.0).powi(n as i32);
    if size > BRUTEFORCE_LIMIT {
        return Err(OracleError::TooLarge {
            size,
            limit: BRUTEFORCE_LIMIT,
        });
    }

    struct Enum<'a> {
        inst: &'a Instance,
        load: Vec<Vec<f64>>,
        current: Vec<Option<usize>>,
        best: Vec<Option<usize>>,
        best_value: f64,
        leaves: u64,
    }

    impl Enum<'_> {
        fn visit(&mut self, i: usize, value: f64) {
            if i == self.inst.len() {
                self.leaves += 1;
                if value > self.best_value {
                    self.best_value = value;
                    self.best.clone_from(&self.current);
                }
                return;
            }
            self.current[i] = None;
            self.visit(i + 1, value);
            let item = &self.inst.items[i];
            for k in 0..self.inst.num_knapsacks() {
                let opt = &item.options[k];
                if !opt.eligible {
                    continue;
                }
                let cap = self.inst.knapsacks[k].capacity;
                let lo = opt.interval.start as usize;
                let hi = lo + opt.interval.duration as usize;
                if self.load[k][lo..hi].iter().any(|z| z + opt.size > cap) {
                    continue;
                }
                let saved: Vec<f64> = self.load[k][lo..hi].to_vec();
                for z in &mut self.load[k][lo..hi] {
                    *z += opt.size;
                }
                self.current[i] = Some(k);
                self.visit(i + 1, value + opt.value);
                self.load[k][lo..hi].copy_from_slice(&saved);
            }
            self.current[i] = None;
        }
    }

    let mut e = Enum {
        inst,
        load: vec![vec![0.0; inst.horizon as usize + 1]; inst.num_knapsacks()],
        current: vec![None; n],
        best: vec![None; n],
        best_value: 0.0,
        leaves: 0,
    };
    e.visit(0, 0.0);
    Ok(OfflineSolution {
        objective: e.best_value,
        proof: Proof::Exact,
        bound: e.best_value,
        nodes: e.leaves,
        decisions: decisions(inst, &e.best),
    })
}
