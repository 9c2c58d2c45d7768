//! `okd`: generate, validate, run, solve, benchmark and tune.
//!
//! Machine-readable output goes to standard output or `--out`; progress and
//! summaries go to standard error. Exit codes: 0 success, 1 failure
//! (including strict validation), 2 usage error.

mod experiment;
mod io;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use okd::bench::{bench_suite, tune_gamma, BenchConfig, NamedInstance, TuneGrid, TuneSpec};
use okd::instances::{generate, Family, GenSpec};
use okd::oracle::{solve_bruteforce, solve_exact, DEFAULT_NODE_BUDGET};
use okd::threshold::{default_gamma, size_precondition, GammaSetting, ThresholdConfig};
use okd::validate::{validate_instance, ValidationError};
use okd::{run, Instance, KnapsackSpec};

use experiment::Experiment;

#[derive(Parser)]
#[command(
    name = "okd",
    version,
    about = "Online multiple knapsack with departures"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an instance (or staircase prefixes) as JSON.
    Gen(GenArgs),
    /// Check an instance against its declared bounds.
    Validate(ValidateArgs),
    /// Run the online algorithm.
    Run(RunArgs),
    /// Solve the offline problem exactly.
    Opt(OptArgs),
    /// Compare online and offline over a suite.
    Bench(BenchArgs),
    /// Pick gamma by grid search inside the safety band.
    Tune(TuneArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Uniform,
    Staircase,
    Burst,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Uniform => Family::Uniform,
            FamilyArg::Staircase => Family::Staircase,
            FamilyArg::Burst => Family::Burst,
        }
    }
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum, default_value = "uniform")]
    family: FamilyArg,
    /// Number of items (ignored by the staircase family).
    #[arg(long, default_value_t = 20)]
    n: usize,
    /// Number of knapsacks.
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// Horizon in slots.
    #[arg(long, default_value_t = 50)]
    t: u32,
    #[arg(long, default_value_t = 1.0)]
    capacity: f64,
    #[arg(long, default_value_t = 4.0)]
    theta: f64,
    /// Duration ratio; the longest duration is round(alpha * dlo).
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Shortest duration.
    #[arg(long, default_value_t = 1)]
    dlo: u32,
    /// Size cap, or "auto" for C ln2 / gamma with the default gamma.
    #[arg(long, default_value = "auto")]
    eps: String,
    #[arg(long, default_value_t = 1.0)]
    eligibility: f64,
    /// Staircase levels.
    #[arg(long, default_value_t = 4)]
    levels: usize,
    /// Arrival clusters for the burst family.
    #[arg(long, default_value_t = 3)]
    bursts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Emit every staircase prefix as a JSON array instead of the longest.
    #[arg(long)]
    all_prefixes: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    /// Fail (exit 1) on any assumption violation.
    #[arg(long)]
    strict: bool,
    /// Also check the size bound for this gamma ("auto", a float, or a list).
    #[arg(long)]
    gamma: Option<GammaSetting>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, default_value = "auto")]
    gamma: GammaSetting,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OptArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_NODE_BUDGET)]
    node_budget: u64,
    /// Use exhaustive enumeration instead of branch and bound.
    #[arg(long)]
    bruteforce: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Instance files (one instance or an array each); repeatable.
    #[arg(long)]
    input: Vec<PathBuf>,
    /// Experiment file naming sources and settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    gamma: Option<GammaSetting>,
    #[arg(long)]
    exact_cutoff: Option<usize>,
    #[arg(long)]
    crosscheck_cutoff: Option<usize>,
    #[arg(long)]
    node_budget: Option<u64>,
    #[arg(long)]
    jobs: Option<usize>,
    /// Writes PREFIX.csv and PREFIX.json; without it the JSON report goes
    /// to standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TuneArgs {
    /// Training instance files; repeatable.
    #[arg(long)]
    input: Vec<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Band half-width around the default gamma.
    #[arg(long)]
    delta: Option<f64>,
    /// Grid points across the band.
    #[arg(long)]
    points: Option<usize>,
    #[arg(long)]
    jobs: Option<usize>,
    /// Writes PREFIX.json (gamma) and PREFIX.csv (curve); without it the
    /// JSON result goes to standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Outcome {
    Ok,
    Failed,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Failed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cmd: Command) -> Result<Outcome> {
    match cmd {
        Command::Gen(a) => cmd_gen(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Run(a) => cmd_run(a),
        Command::Opt(a) => cmd_opt(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Tune(a) => cmd_tune(a),
    }
}

fn cmd_gen(a: GenArgs) -> Result<Outcome> {
    if a.alpha < 1.0 {
        bail!("--alpha must be >= 1");
    }
    let dhi = (a.alpha * a.dlo as f64).round() as u32;
    let eps = if a.eps.eq_ignore_ascii_case("auto") {
        let alpha = dhi as f64 / a.dlo.max(1) as f64;
        size_precondition(a.capacity, default_gamma(a.theta, alpha)?).min(a.capacity)
    } else {
        a.eps
            .parse()
            .with_context(|| format!("cannot parse --eps {:?}", a.eps))?
    };
    let knapsack = KnapsackSpec {
        capacity: a.capacity,
        density_ratio: a.theta,
        duration_lo: a.dlo,
        duration_hi: dhi,
        size_cap: eps,
    };
    let spec = GenSpec {
        family: a.family.into(),
        n: a.n,
        horizon: a.t,
        knapsacks: vec![knapsack; a.k],
        seed: a.seed,
        eligibility: a.eligibility,
        levels: a.levels,
        bursts: a.bursts,
    };
    let mut insts = generate(&spec)?;
    let emitted = if a.all_prefixes { insts.len() } else { 1 };
    let text = if a.all_prefixes && insts.len() > 1 {
        serde_json::to_string_pretty(&insts)?
    } else {
        insts
            .pop()
            .expect("generators return at least one instance")
            .to_json()
    };
    io::write_output(a.out.as_deref(), &text)?;
    eprintln!("generated {} instance(s), seed {}", emitted, a.seed);
    Ok(Outcome::Ok)
}

fn load_one(input: Option<&Path>) -> Result<Instance> {
    let mut v = io::load_named(input)?;
    if v.len() != 1 {
        bail!("expected a single instance, found {}", v.len());
    }
    Ok(v.pop().expect("length checked").instance)
}

fn cmd_validate(a: ValidateArgs) -> Result<Outcome> {
    let inst = load_one(a.input.as_deref())?;
    let gammas = match &a.gamma {
        Some(g) => Some(ThresholdConfig::with_gamma(g.clone()).gammas(&inst.knapsacks)?),
        None => None,
    };
    match validate_instance(&inst, a.strict, gammas.as_deref()) {
        Ok(report) => {
            io::write_output(a.out.as_deref(), &serde_json::to_string_pretty(&report)?)?;
            for issue in &report.issues {
                eprintln!("warning: {issue}");
            }
            eprintln!(
                "valid: {} item(s), {} issue(s)",
                inst.len(),
                report.issues.len()
            );
            Ok(Outcome::Ok)
        }
        Err(ValidationError::Violations(report)) => {
            io::write_output(a.out.as_deref(), &serde_json::to_string_pretty(&report)?)?;
            for issue in report.violations() {
                eprintln!("violation: {issue}");
            }
            Ok(Outcome::Failed)
        }
        Err(e) => Err(e.into()),
    }
}

fn cmd_run(a: RunArgs) -> Result<Outcome> {
    let inst = load_one(a.input.as_deref())?;
    let thresholds = ThresholdConfig::with_gamma(a.gamma).build(&inst)?;
    let result = run(&inst, &thresholds)?;
    io::write_output(a.out.as_deref(), &result.to_json())?;
    eprintln!(
        "admitted {}/{} item(s), profit {}",
        result.admitted(),
        inst.len(),
        result.profit
    );
    Ok(Outcome::Ok)
}

fn cmd_opt(a: OptArgs) -> Result<Outcome> {
    let inst = load_one(a.input.as_deref())?;
    let sol = if a.bruteforce {
        solve_bruteforce(&inst)?
    } else {
        solve_exact(&inst, a.node_budget)
    };
    io::write_output(a.out.as_deref(), &sol.to_json())?;
    eprintln!(
        "objective {} ({:?}, {} node(s))",
        sol.objective, sol.proof, sol.nodes
    );
    Ok(Outcome::Ok)
}

fn gather(inputs: &[PathBuf], exp: Option<&(Experiment, PathBuf)>) -> Result<Vec<NamedInstance>> {
    let mut suite = Vec::new();
    if let Some((e, dir)) = exp {
        suite.extend(e.instances(dir)?);
    }
    for p in inputs {
        suite.extend(io::load_named(Some(p))?);
    }
    if inputs.is_empty() && exp.is_none() {
        suite.extend(io::load_named(None)?);
    }
    Ok(suite)
}

fn load_experiment(path: Option<&Path>) -> Result<Option<(Experiment, PathBuf)>> {
    path.map(|p| {
        let dir = p.parent().map(Path::to_path_buf).unwrap_or_default();
        Experiment::load(p).map(|e| (e, dir))
    })
    .transpose()
}

fn cmd_bench(a: BenchArgs) -> Result<Outcome> {
    let exp = load_experiment(a.config.as_deref())?;
    let suite = gather(&a.input, exp.as_ref())?;
    let mut cfg: BenchConfig = exp
        .as_ref()
        .map(|(e, _)| e.bench.clone())
        .unwrap_or_default();
    if let Some(g) = a.gamma {
        cfg.threshold = ThresholdConfig::with_gamma(g);
    }
    if let Some(c) = a.exact_cutoff {
        cfg.exact_cutoff = c;
    }
    if let Some(c) = a.crosscheck_cutoff {
        cfg.crosscheck_cutoff = c;
    }
    if let Some(b) = a.node_budget {
        cfg.node_budget = b;
    }
    if a.jobs.is_some() {
        cfg.jobs = a.jobs;
    }
    let report = bench_suite(&suite, &cfg)?;
    match &a.out {
        Some(prefix) => {
            io::write_output(Some(&io::with_ext(prefix, "csv")), &report.to_csv())?;
            io::write_output(Some(&io::with_ext(prefix, "json")), &report.to_json())?;
        }
        None => io::write_output(None, &report.to_json())?,
    }
    let s = &report.summary;
    let cr = match (s.cr_infinite, s.empirical_cr) {
        (true, _) => "inf".to_string(),
        (false, Some(c)) => format!("{c:.6}"),
        (false, None) => "n/a".to_string(),
    };
    eprintln!(
        "{} instance(s): {} exact, {} upper-bound, {} error; empirical CR {cr}",
        s.instances, s.exact_rows, s.upper_bound_rows, s.error_rows
    );
    Ok(if s.error_rows > 0 {
        Outcome::Failed
    } else {
        Outcome::Ok
    })
}

fn cmd_tune(a: TuneArgs) -> Result<Outcome> {
    let exp = load_experiment(a.config.as_deref())?;
    let training: Vec<Instance> = gather(&a.input, exp.as_ref())?
        .into_iter()
        .map(|n| n.instance)
        .collect();
    let tuner = exp.as_ref().map(|(e, _)| &e.tuner);
    let delta = a
        .delta
        .or(tuner.map(|t| t.delta))
        .unwrap_or(okd::bench::tune::DEFAULT_DELTA);
    let points = a.points.or(tuner.map(|t| t.points)).unwrap_or(11);
    let spec = TuneSpec {
        training,
        grid: TuneGrid::Points(points),
        delta,
    };
    let result = match a.jobs {
        Some(j) => rayon_pool(j)?.install(|| tune_gamma(&spec))?,
        None => tune_gamma(&spec)?,
    };
    match &a.out {
        Some(prefix) => {
            io::write_output(Some(&io::with_ext(prefix, "json")), &result.to_json())?;
            io::write_output(Some(&io::with_ext(prefix, "csv")), &result.curve_csv())?;
        }
        None => io::write_output(None, &result.to_json())?,
    }
    eprintln!(
        "{}: multiplier {} -> gamma {:?} over {} instance(s)",
        result.method, result.multiplier, result.gammas, result.training_instances
    );
    Ok(Outcome::Ok)
}

fn rayon_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()?)
}
