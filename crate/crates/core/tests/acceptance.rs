//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.
//!
//! Run with `cargo test -p okd --test acceptance`.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{safe_knapsack, uniform};
use okd::bench::{bench_suite, tune_gamma, BenchConfig, NamedInstance, TuneGrid, TuneSpec};
use okd::instances::rng::Sampler;
use okd::instances::{generate, Family, GenSpec};
use okd::oracle::Proof;
use okd::threshold::Exponential;
use okd::{
    default_gamma, ota_admit, run, size_precondition, solve_bruteforce, solve_exact,
    AdmissionQuery, Instance, SlotInterval, Threshold, ThresholdFn,
};
use rayon::prelude::*;

const FEASIBILITY_INSTANCES: u64 = 1000;
const ORACLE_INSTANCES: u64 = 240;
const ORACLE_NODE_BUDGET: u64 = 2_000_000;
const GRID: [f64; 5] = [1.0, 2.0, 4.0, 8.0, 64.0];

type Check<'a> = Box<dyn Fn() -> Outcome + 'a>;

struct Outcome {
    pass: bool,
    detail: String,
}

fn mixed_seed(i: u64) -> u64 {
    i.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ 0xD1B5_4A32_D192_ED03
}

fn feasibility_suite() -> Vec<Instance> {
    (0..FEASIBILITY_INSTANCES)
        .map(|i| {
            uniform(
                1 + (i * 7 % 50) as usize,
                1 + (i % 4) as usize,
                mixed_seed(i),
            )
        })
        .collect()
}

fn oracle_suite() -> Vec<Instance> {
    (0..ORACLE_INSTANCES)
        .map(|i| {
            uniform(
                (i % 11) as usize,
                1 + (i % 3) as usize,
                mixed_seed(i + 1_000_000),
            )
        })
        .collect()
}

/// Runs the engine on every instance and returns the concatenated run
/// records plus the number of capacity / assignment violations.
fn feasibility_report(suite: &[Instance]) -> (String, usize) {
    let results: Vec<(String, usize)> = suite
        .par_iter()
        .map(|inst| {
            let th = common::thresholds(inst);
            let r = run(inst, &th).expect("engine run");
            let mut bad = 0;
            let mut loads = vec![vec![0.0; inst.horizon as usize + 1]; inst.num_knapsacks()];
            let mut seen = std::collections::HashSet::new();
            if r.decisions.len() != inst.len() {
                bad += 1;
            }
            for (d, item) in r.decisions.iter().zip(&inst.items) {
                if d.id != item.id || !seen.insert(d.id) {
                    bad += 1;
                }
                if let Some(k) = d.knapsack {
                    let o = &item.options[k];
                    if !o.eligible {
                        bad += 1;
                    }
                    for t in o.interval.slots() {
                        loads[k][t as usize] += o.size;
                    }
                }
            }
            for (k, row) in loads.iter().enumerate() {
                bad += row
                    .iter()
                    .filter(|z| **z > inst.knapsacks[k].capacity)
                    .count();
            }
            (r.to_json(), bad)
        })
        .collect();
    let bad = results.iter().map(|r| r.1).sum();
    (results.into_iter().map(|r| r.0).collect(), bad)
}

fn criterion_1(suite: &[Instance]) -> Outcome {
    let start = Instant::now();
    let (_, bad) = feasibility_report(suite);
    let elapsed = start.elapsed();
    Outcome {
        pass: bad == 0 && elapsed < Duration::from_secs(60),
        detail: format!(
            "{} instances, {bad} violations, {:.2}s",
            suite.len(),
            elapsed.as_secs_f64()
        ),
    }
}

fn criterion_2(suite: &[Instance]) -> Outcome {
    let start = Instant::now();
    let mismatches: Vec<usize> = suite
        .par_iter()
        .enumerate()
        .filter_map(|(i, inst)| {
            let exact = solve_exact(inst, u64::MAX);
            let brute = solve_bruteforce(inst).expect("within enumeration limit");
            (exact.proof != Proof::Exact || exact.objective != brute.objective).then_some(i)
        })
        .collect();
    let elapsed = start.elapsed();
    Outcome {
        pass: mismatches.is_empty() && elapsed < Duration::from_secs(120),
        detail: format!(
            "{} instances, {} mismatches {:?}, {:.2}s",
            suite.len(),
            mismatches.len(),
            mismatches,
            elapsed.as_secs_f64()
        ),
    }
}

fn criterion_3(feasibility: &[Instance], oracle: &[Instance]) -> Outcome {
    let checked: Vec<Option<bool>> = feasibility
        .par_iter()
        .chain(oracle.par_iter())
        .map(|inst| {
            let opt = solve_exact(inst, ORACLE_NODE_BUDGET);
            if !opt.is_exact() {
                return None;
            }
            let alg = run(inst, &common::thresholds(inst))
                .expect("engine run")
                .profit;
            Some(alg <= opt.objective + 1e-9)
        })
        .collect();
    let exact = checked.iter().flatten().count();
    let above = checked.iter().flatten().filter(|ok| !**ok).count();
    Outcome {
        pass: above == 0 && exact > 0,
        detail: format!(
            "{exact}/{} instances with exact OPT, {above} with ALG > OPT + 1e-9",
            checked.len()
        ),
    }
}

fn criterion_4() -> Outcome {
    let capacity = 10.0;
    let mut failures = Vec::new();
    let mut worst_rel: f64 = 0.0;
    let mut s = Sampler::new(4);
    for &theta in &GRID {
        for &alpha in &GRID {
            let g = default_gamma(theta, alpha).expect("grid is in domain");
            let th = Exponential::new(g, capacity).expect("positive gamma");
            let target = alpha * theta;
            if th.eval(0.0).unwrap() != 0.0 {
                failures.push(format!("eval(0) != 0 at theta={theta} alpha={alpha}"));
            }
            let rel = (th.eval(capacity).unwrap() - target).abs() / target;
            worst_rel = worst_rel.max(rel);
            if rel > 1e-12 {
                failures.push(format!(
                    "eval(C) off by {rel:e} at theta={theta} alpha={alpha}"
                ));
            }
            let mut bad_pairs = 0;
            for _ in 0..10_000 {
                let (a, b) = (s.range_f64(0.0, capacity), s.range_f64(0.0, capacity));
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                if th.eval(lo).unwrap() > th.eval(hi).unwrap() {
                    bad_pairs += 1;
                }
            }
            if bad_pairs > 0 {
                failures.push(format!(
                    "{bad_pairs} non-monotone pairs at theta={theta} alpha={alpha}"
                ));
            }
        }
    }
    Outcome {
        pass: failures.is_empty(),
        detail: if failures.is_empty() {
            format!("25 configurations, worst eval(C) relative error {worst_rel:e}")
        } else {
            failures.join("; ")
        },
    }
}

fn criterion_5() -> Outcome {
    let mut s = Sampler::new(5);
    let mut mismatches = 0;
    let (mut admitted, mut ties, mut tight) = (0, 0, 0);
    for _ in 0..100_000 {
        let capacity = s.range_f64(0.5, 20.0);
        let gamma = s.range_f64(0.05, 6.0);
        let th = ThresholdFn::exponential(gamma, capacity).expect("valid parameters");
        let duration = s.range_u32(1, 8);
        let size = s.open_upper(capacity);
        let snapshot: Vec<f64> = (0..duration)
            .map(|_| match s.range_u32(0, 4) {
                0 => 0.0,
                1 => (capacity - size).max(0.0),
                _ => s.range_f64(0.0, capacity),
            })
            .collect();
        let phi = snapshot
            .iter()
            .fold(0.0, |acc, z| acc + size * th.eval(*z).unwrap());
        let room = snapshot.iter().all(|z| z + size <= capacity);
        let value = match s.range_u32(0, 3) {
            0 => phi,
            _ => s.range_f64(0.0, 2.0 * phi + 1.0),
        };
        let expected = value >= phi && room;
        let got = ota_admit(&AdmissionQuery {
            value,
            size,
            interval: SlotInterval::new(1, duration),
            threshold: &th,
            snapshot: &snapshot,
            capacity,
        })
        .expect("well-formed query");
        if got.admissible != expected {
            mismatches += 1;
        }
        admitted += expected as usize;
        ties += (value == phi) as usize;
        tight += snapshot.iter().any(|z| z + size == capacity) as usize;
    }
    Outcome {
        pass: mismatches == 0,
        detail: format!(
            "100000 queries ({admitted} admit, {ties} value ties, {tight} exactly tight), {mismatches} mismatches"
        ),
    }
}

fn staircase_suite(theta: f64) -> Vec<NamedInstance> {
    let gamma = default_gamma(theta, 1.0).expect("theta >= 1");
    let ks = safe_knapsack(1.0, theta, 2, 2);
    assert!(ks.size_cap <= size_precondition(1.0, gamma));
    let spec = GenSpec {
        family: Family::Staircase,
        levels: 4,
        ..GenSpec::uniform(0, 4, ks, 1, 0)
    };
    generate(&spec)
        .expect("staircase spec is valid")
        .into_iter()
        .enumerate()
        .map(|(i, inst)| NamedInstance::new(format!("staircase-theta{theta}-p{}", i + 1), inst))
        .collect()
}

fn staircase_reports() -> Vec<(f64, okd::bench::BenchReport)> {
    let cfg = BenchConfig {
        exact_cutoff: 64,
        node_budget: u64::MAX,
        ..BenchConfig::default()
    };
    [2.0, 8.0, 64.0]
        .into_iter()
        .map(|theta| {
            (
                theta,
                bench_suite(&staircase_suite(theta), &cfg).expect("bench"),
            )
        })
        .collect()
}

fn criterion_6() -> Outcome {
    let reports = staircase_reports();
    let crs: Vec<Option<f64>> = reports
        .iter()
        .map(|(_, r)| {
            let s = &r.summary;
            let all_exact = s.exact_rows == s.instances && s.error_rows == 0;
            if all_exact && !s.cr_infinite {
                s.empirical_cr.filter(|c| c.is_finite())
            } else {
                None
            }
        })
        .collect();
    let limit = 2.0 * 65f64.ln() / 3f64.ln();
    let raw: Vec<String> = reports
        .iter()
        .zip(&crs)
        .map(|((theta, _), cr)| match cr {
            Some(c) => format!("CR(theta={theta})={c:.6}"),
            None => format!("CR(theta={theta})=not finite/exact"),
        })
        .collect();
    let (pass, growth) = match (crs[0], crs[2]) {
        (Some(lo), Some(hi)) if crs.iter().all(Option::is_some) => {
            let g = hi / lo;
            (g <= limit, format!("growth {g:.4} <= {limit:.4}"))
        }
        _ => (false, "growth undefined".to_string()),
    };
    Outcome {
        pass,
        detail: format!("{}; {growth}", raw.join(", ")),
    }
}

fn criterion_7() -> Outcome {
    let mut escapes = 0;
    let mut sets = 0;
    for seed in 0..50u64 {
        let mut s = Sampler::new(seed);
        let knapsacks: Vec<_> = (0..1 + s.index(3))
            .map(|_| {
                let lo = s.range_u32(1, 3);
                safe_knapsack(
                    1.0 + s.index(4) as f64,
                    GRID[s.index(5)],
                    lo,
                    lo * s.range_u32(1, 3),
                )
            })
            .collect();
        let n = 1 + s.index(25);
        let training: Vec<Instance> = (0..4)
            .map(|j| {
                let spec = GenSpec {
                    knapsacks: knapsacks.clone(),
                    ..GenSpec::uniform(n, 16, knapsacks[0].clone(), 1, seed * 100 + j)
                };
                generate(&spec)
                    .expect("valid spec")
                    .pop()
                    .expect("one instance")
            })
            .collect();
        let delta = s.range_f64(0.0, 0.9);
        let points = 2 + s.index(12);
        let spec = TuneSpec {
            training: training.clone(),
            grid: TuneGrid::Points(points),
            delta,
        };
        let r = tune_gamma(&spec).expect("tuner");
        sets += 1;
        for (k, g) in r.gammas.iter().enumerate() {
            let ks = &training[0].knapsacks[k];
            let d = default_gamma(ks.density_ratio, ks.duration_ratio()).expect("valid knapsack");
            if !(d * (1.0 - delta) <= *g && *g <= d * (1.0 + delta)) {
                escapes += 1;
            }
        }
    }

    // Every item fits with room to spare and no two items share a slot.
    let ks = safe_knapsack(10.0, 4.0, 1, 2);
    let items = (0..6)
        .map(|i| okd::Item {
            id: i,
            arrival: i as u32 + 1,
            options: vec![okd::ItemOption::new(
                0.5,
                1.0,
                SlotInterval::new(i as u32 + 1, 1),
            )],
        })
        .collect();
    let flat = Instance::new(8, vec![ks.clone()], items).expect("valid instance");
    let r = tune_gamma(&TuneSpec::new(vec![flat], TuneGrid::Points(9))).expect("tuner");
    let expected = default_gamma(ks.density_ratio, ks.duration_ratio()).expect("valid knapsack");
    let constant = r
        .curve
        .iter()
        .all(|p| p.mean_profit == r.curve[0].mean_profit);
    let tie_ok = constant && r.gammas == vec![expected];
    Outcome {
        pass: escapes == 0 && sets == 50 && tie_ok,
        detail: format!(
            "{sets} training sets, {escapes} escapes; constant landscape returned {:?} (default {expected})",
            r.gammas
        ),
    }
}

fn criterion_8(feasibility: &[Instance]) -> Outcome {
    let first = feasibility_report(feasibility).0;
    let again = feasibility_report(&feasibility_suite()).0;
    let stair = |reports: Vec<(f64, okd::bench::BenchReport)>| -> String {
        reports
            .iter()
            .map(|(_, r)| r.to_json() + &r.to_csv())
            .collect()
    };
    let s1 = stair(staircase_reports());
    let s2 = stair(staircase_reports());
    let same_feasibility = first == again;
    let same_staircase = s1 == s2;
    Outcome {
        pass: same_feasibility && same_staircase,
        detail: format!(
            "feasibility report {} bytes identical={same_feasibility}, staircase report {} bytes identical={same_staircase}",
            first.len(),
            s1.len()
        ),
    }
}

fn main() -> ExitCode {
    let feasibility = feasibility_suite();
    let oracle = oracle_suite();
    let criteria: Vec<(&str, Check<'_>)> = vec![
        ("1 feasibility", Box::new(|| criterion_1(&feasibility))),
        ("2 oracle equivalence", Box::new(|| criterion_2(&oracle))),
        (
            "3 online <= offline",
            Box::new(|| criterion_3(&feasibility, &oracle)),
        ),
        ("4 threshold identities", Box::new(criterion_4)),
        ("5 admission audit", Box::new(criterion_5)),
        ("6 staircase ratio growth", Box::new(criterion_6)),
        ("7 tuner safety", Box::new(criterion_7)),
        ("8 determinism", Box::new(|| criterion_8(&feasibility))),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!(
            "{} criterion {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    println!(
        "{}/{} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
