//! Empirical competitive ratios: run the online engine and the offline
//! oracle side by side over a suite of instances.

pub mod tune;

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::run;
use crate::model::Instance;
use crate::oracle::{solve_bruteforce, solve_exact, upper_bound, DEFAULT_NODE_BUDGET};
use crate::threshold::ThresholdConfig;
use crate::validate::observed_parameters;

pub use tune::{tune_gamma, CurvePoint, TuneError, TuneGrid, TuneResult, TuneSpec};

/// Tolerance on `ALG <= OPT` and on ratios of at least 1.
pub const PROFIT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("cannot build worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

fn default_exact_cutoff() -> usize {
    18
}

fn default_crosscheck_cutoff() -> usize {
    10
}

fn default_node_budget() -> u64 {
    DEFAULT_NODE_BUDGET
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    #[serde(default)]
    pub threshold: ThresholdConfig,
    /// Instances with at most this many items get an exact optimum.
    #[serde(default = "default_exact_cutoff")]
    pub exact_cutoff: usize,
    /// Instances with at most this many items are also brute-forced.
    #[serde(default = "default_crosscheck_cutoff")]
    pub crosscheck_cutoff: usize,
    #[serde(default = "default_node_budget")]
    pub node_budget: u64,
    /// Worker threads; `None` uses the global pool.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            threshold: ThresholdConfig::default(),
            exact_cutoff: default_exact_cutoff(),
            crosscheck_cutoff: default_crosscheck_cutoff(),
            node_budget: default_node_budget(),
            jobs: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedInstance {
    pub id: String,
    pub instance: Instance,
}

impl NamedInstance {
    pub fn new(id: impl Into<String>, instance: Instance) -> Self {
        Self {
            id: id.into(),
            instance,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptKind {
    Exact,
    UpperBound,
    Error,
}

/// `OPT / ALG` with `0 / 0 = 1` and `x / 0 = inf` for `x > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ratio {
    Finite(f64),
    Infinite,
}

impl Ratio {
    pub fn of(opt: f64, alg: f64) -> Self {
        if alg > 0.0 {
            Ratio::Finite(opt / alg)
        } else if opt > 0.0 {
            Ratio::Infinite
        } else {
            Ratio::Finite(1.0)
        }
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Ratio::Finite(r) => Some(r),
            Ratio::Infinite => None,
        }
    }

    fn cmp_desc(a: Option<Ratio>, b: Option<Ratio>) -> Ordering {
        let rank = |r: Option<Ratio>| match r {
            Some(Ratio::Infinite) => (0, 0.0),
            Some(Ratio::Finite(x)) => (1, -x),
            None => (2, 0.0),
        };
        let (ra, xa) = rank(a);
        let (rb, xb) = rank(b);
        ra.cmp(&rb).then(xa.total_cmp(&xb))
    }
}

/// Per-knapsack parameters the row was run with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnapsackEcho {
    /// Absent for non-exponential thresholds.
    pub gamma: Option<f64>,
    pub theta: f64,
    pub alpha: f64,
    pub eps: f64,
    pub observed_theta: f64,
    pub observed_alpha: f64,
    pub observed_eps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub instance: String,
    pub n: usize,
    pub k: usize,
    pub alg: Option<f64>,
    /// Exact optimum or an upper bound, per `opt_kind`.
    pub opt: Option<f64>,
    pub opt_kind: OptKind,
    /// Finite `OPT / ALG`; absent when infinite or on error.
    pub ratio: Option<f64>,
    pub infinite: bool,
    /// Brute-force agreement for small instances.
    pub crosscheck: Option<bool>,
    pub knapsacks: Vec<KnapsackEcho>,
    pub error: Option<String>,
}

impl BenchRow {
    pub fn ratio(&self) -> Option<Ratio> {
        if self.infinite {
            Some(Ratio::Infinite)
        } else {
            self.ratio.map(Ratio::Finite)
        }
    }

    fn error(named: &NamedInstance, msg: String) -> Self {
        Self {
            instance: named.id.clone(),
            n: named.instance.len(),
            k: named.instance.num_knapsacks(),
            alg: None,
            opt: None,
            opt_kind: OptKind::Error,
            ratio: None,
            infinite: false,
            crosscheck: None,
            knapsacks: Vec::new(),
            error: Some(msg),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteSummary {
    pub instances: usize,
    pub exact_rows: usize,
    pub upper_bound_rows: usize,
    pub error_rows: usize,
    /// Max ratio over exact rows; absent when there are none or it is
    /// infinite.
    pub empirical_cr: Option<f64>,
    pub cr_infinite: bool,
    /// Mean finite ratio over exact rows.
    pub mean_ratio: Option<f64>,
    pub worst_instance: Option<String>,
    /// Max ratio over upper-bound rows, an overestimate.
    pub upper_bound_cr: Option<f64>,
    /// Exact rows where `ALG > OPT + tolerance`.
    pub alg_above_opt: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub summary: SuiteSummary,
    pub rows: Vec<BenchRow>,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    instance: &'a str,
    n: usize,
    k: usize,
    alg: Option<f64>,
    opt: Option<f64>,
    opt_kind: OptKind,
    ratio: String,
    crosscheck: Option<bool>,
    gamma: String,
    theta: String,
    alpha: String,
    eps: String,
    error: &'a str,
}

fn join(xs: impl Iterator<Item = f64>) -> String {
    xs.map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

impl BenchReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization is infallible")
    }

    /// One row per instance; `ratio` is `inf` for infinite ratios and empty
    /// on error rows. Per-knapsack echoes are `;`-separated.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            let ratio = match r.ratio() {
                Some(Ratio::Infinite) => "inf".to_string(),
                Some(Ratio::Finite(x)) => x.to_string(),
                None => String::new(),
            };
            w.serialize(CsvRow {
                instance: &r.instance,
                n: r.n,
                k: r.k,
                alg: r.alg,
                opt: r.opt,
                opt_kind: r.opt_kind,
                ratio,
                crosscheck: r.crosscheck,
                gamma: join(r.knapsacks.iter().filter_map(|e| e.gamma)),
                theta: join(r.knapsacks.iter().map(|e| e.theta)),
                alpha: join(r.knapsacks.iter().map(|e| e.alpha)),
                eps: join(r.knapsacks.iter().map(|e| e.eps)),
                error: r.error.as_deref().unwrap_or(""),
            })
            .expect("in-memory csv write");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("csv is utf-8")
    }
}

fn bench_one(named: &NamedInstance, cfg: &BenchConfig) -> BenchRow {
    let inst = &named.instance;
    let thresholds = match cfg.threshold.build(inst) {
        Ok(t) => t,
        Err(e) => return BenchRow::error(named, format!("threshold: {e}")),
    };
    let alg = match run(inst, &thresholds) {
        Ok(r) => r.profit,
        Err(e) => return BenchRow::error(named, format!("engine: {e}")),
    };
    let observed = observed_parameters(inst);
    let knapsacks = inst
        .knapsacks
        .iter()
        .zip(&thresholds)
        .zip(&observed)
        .map(|((ks, th), obs)| KnapsackEcho {
            gamma: th.gamma(),
            theta: ks.density_ratio,
            alpha: ks.duration_ratio(),
            eps: ks.size_cap,
            observed_theta: obs.theta,
            observed_alpha: obs.alpha,
            observed_eps: obs.eps,
        })
        .collect();

    let (opt, kind, crosscheck) = if inst.len() <= cfg.exact_cutoff {
        let sol = solve_exact(inst, cfg.node_budget);
        if sol.is_exact() {
            let cross = (inst.len() <= cfg.crosscheck_cutoff)
                .then(|| {
                    solve_bruteforce(inst)
                        .ok()
                        .map(|bf| bf.objective == sol.objective)
                })
                .flatten();
            if cross == Some(false) {
                return BenchRow::error(
                    named,
                    "branch and bound disagrees with enumeration".to_string(),
                );
            }
            (sol.objective, OptKind::Exact, cross)
        } else {
            (sol.bound, OptKind::UpperBound, None)
        }
    } else {
        (upper_bound(inst), OptKind::UpperBound, None)
    };
    let ratio = Ratio::of(opt, alg);
    BenchRow {
        instance: named.id.clone(),
        n: inst.len(),
        k: inst.num_knapsacks(),
        alg: Some(alg),
        opt: Some(opt),
        opt_kind: kind,
        ratio: ratio.finite(),
        infinite: ratio == Ratio::Infinite,
        crosscheck,
        knapsacks,
        error: None,
    }
}

/// Summary statistics over rows; exact rows alone feed the empirical CR.
pub fn summarize(rows: &[BenchRow]) -> SuiteSummary {
    let exact: Vec<&BenchRow> = rows
        .iter()
        .filter(|r| r.opt_kind == OptKind::Exact)
        .collect();
    let cr_infinite = exact.iter().any(|r| r.infinite);
    let worst = exact
        .iter()
        .min_by(|a, b| Ratio::cmp_desc(a.ratio(), b.ratio()).then(a.instance.cmp(&b.instance)));
    let finite: Vec<f64> = exact.iter().filter_map(|r| r.ratio).collect();
    let empirical_cr = if cr_infinite {
        None
    } else {
        finite.iter().copied().reduce(f64::max)
    };
    let mean_ratio = (!finite.is_empty()).then(|| finite.iter().sum::<f64>() / finite.len() as f64);
    let upper_bound_cr = rows
        .iter()
        .filter(|r| r.opt_kind == OptKind::UpperBound)
        .map(|r| r.ratio.unwrap_or(f64::INFINITY))
        .reduce(f64::max);
    let alg_above_opt = exact
        .iter()
        .filter(|r| match (r.alg, r.opt) {
            (Some(a), Some(o)) => a > o + PROFIT_TOLERANCE,
            _ => false,
        })
        .count();
    SuiteSummary {
        instances: rows.len(),
        exact_rows: exact.len(),
        upper_bound_rows: rows
            .iter()
            .filter(|r| r.opt_kind == OptKind::UpperBound)
            .count(),
        error_rows: rows.iter().filter(|r| r.opt_kind == OptKind::Error).count(),
        empirical_cr,
        cr_infinite,
        mean_ratio,
        worst_instance: worst.map(|r| r.instance.clone()),
        upper_bound_cr,
        alg_above_opt,
    }
}

/// Runs engine and oracle on every instance. Instances are evaluated in
/// parallel; rows come back sorted by ratio, highest first, with ties in
/// instance-id order, so the report is a pure function of its inputs.
pub fn bench_suite(suite: &[NamedInstance], cfg: &BenchConfig) -> Result<BenchReport, BenchError> {
    let eval = || -> Vec<BenchRow> { suite.par_iter().map(|ni| bench_one(ni, cfg)).collect() };
    let mut rows = match cfg.jobs {
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build()?
            .install(eval),
        None => eval(),
    };
    rows.sort_by(|a, b| {
        Ratio::cmp_desc(a.ratio(), b.ratio()).then_with(|| a.instance.cmp(&b.instance))
    });
    Ok(BenchReport {
        config: cfg.clone(),
        summary: summarize(&rows),
        rows,
    })
}
