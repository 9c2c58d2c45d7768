//! Experiment files: where the instances come from and how to run them.
//!
//! ```json
//! {
//!   "sources": [
//!     { "file": "suite.json" },
//!     { "generate": { "family": "uniform", "n": 8, "horizon": 30,
//!                     "knapsacks": [...], "seed": 0 },
//!       "seeds": [1, 2, 3] }
//!   ],
//!   "bench": { "threshold": { "kind": "exponential", "gamma": "auto" },
//!              "exact_cutoff": 18 },
//!   "tuner": { "delta": 0.5, "points": 11 }
//! }
//! ```
//!
//! Relative file paths resolve against the experiment file's directory.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use okd::bench::tune::DEFAULT_DELTA;
use okd::bench::{BenchConfig, NamedInstance};
use okd::instances::{generate, Family, GenSpec};
use serde::Deserialize;

use crate::io;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Experiment {
    #[serde(default)]
    pub sources: Vec<Source>,
    #[serde(default)]
    pub bench: BenchConfig,
    #[serde(default)]
    pub tuner: TunerConfig,
}

#[derive(Debug, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum Source {
    File {
        file: PathBuf,
    },
    Generate {
        generate: GenSpec,
        /// Overrides `generate.seed`, one instance set per seed.
        #[serde(default)]
        seeds: Option<Vec<u64>>,
    },
}

fn default_points() -> usize {
    11
}

fn default_delta() -> f64 {
    DEFAULT_DELTA
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TunerConfig {
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_points")]
    pub points: usize,
}

impl Default for TunerConfig {
    fn default() -> Self {
        Self {
            delta: default_delta(),
            points: default_points(),
        }
    }
}

pub fn family_name(f: Family) -> &'static str {
    match f {
        Family::Uniform => "uniform",
        Family::Staircase => "staircase",
        Family::Burst => "burst",
    }
}

/// Named instances for one generator spec.
pub fn generated(spec: &GenSpec) -> Result<Vec<NamedInstance>> {
    let insts = generate(spec).context("generator")?;
    let base = format!("{}-s{}", family_name(spec.family), spec.seed);
    let single = insts.len() == 1;
    Ok(insts
        .into_iter()
        .enumerate()
        .map(|(i, inst)| {
            let id = if single {
                base.clone()
            } else {
                format!("{base}-p{}", i + 1)
            };
            NamedInstance::new(id, inst)
        })
        .collect())
}

impl Experiment {
    pub fn load(path: &Path) -> Result<Self> {
        let text = io::read_input(Some(path))?;
        serde_json::from_str(&text)
            .with_context(|| format!("{}: invalid experiment file", path.display()))
    }

    pub fn instances(&self, base_dir: &Path) -> Result<Vec<NamedInstance>> {
        let mut out = Vec::new();
        for src in &self.sources {
            match src {
                Source::File { file } => {
                    let p = if file.is_absolute() {
                        file.clone()
                    } else {
                        base_dir.join(file)
                    };
                    out.extend(io::load_named(Some(&p))?);
                }
                Source::Generate { generate, seeds } => match seeds {
                    None => out.extend(generated(generate)?),
                    Some(seeds) => {
                        for &seed in seeds {
                            let spec = GenSpec {
                                seed,
                                ..generate.clone()
                            };
                            out.extend(generated(&spec)?);
                        }
                    }
                },
            }
        }
        Ok(out)
    }
}
