//! Gamma selection by grid search inside a band around the default.
//!
//! Every candidate scales each knapsack's default gamma by the same
//! multiplier `m` in `[1 - delta, 1 + delta]`; the multiplier with the best
//! mean online profit over the training set wins. Staying inside the band
//! keeps the worst-case behaviour within a known factor of the default.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{run, EngineError};
use crate::model::Instance;
use crate::threshold::{default_gamma, ThresholdError, ThresholdFn};

/// Mean profits within this distance count as tied.
pub const TIE_TOLERANCE: f64 = 1e-9;

pub const DEFAULT_DELTA: f64 = 0.5;

pub const METHOD: &str = "band-constrained grid search";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TuneError {
    #[error("training set is empty")]
    EmptyTraining,
    #[error("grid is empty")]
    EmptyGrid,
    #[error("band half-width must lie in [0, 1), got {0}")]
    Delta(f64),
    #[error("grid multiplier {0} lies outside the band [{1}, {2}]")]
    OutsideBand(f64, f64, f64),
    #[error("training instance {0} declares different knapsacks than instance 0")]
    Inconsistent(usize),
    #[error(transparent)]
    Threshold(#[from] ThresholdError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TuneGrid {
    /// Explicit multipliers of the default gamma.
    Multipliers(Vec<f64>),
    /// Evenly spaced multipliers spanning the band, endpoints included.
    Points(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneSpec {
    pub training: Vec<Instance>,
    pub grid: TuneGrid,
    pub delta: f64,
}

impl TuneSpec {
    pub fn new(training: Vec<Instance>, grid: TuneGrid) -> Self {
        Self {
            training,
            grid,
            delta: DEFAULT_DELTA,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub multiplier: f64,
    pub gammas: Vec<f64>,
    pub mean_profit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub method: String,
    pub gammas: Vec<f64>,
    pub multiplier: f64,
    pub default_gammas: Vec<f64>,
    /// Per-knapsack `[gamma_lo, gamma_hi]`.
    pub band: Vec<(f64, f64)>,
    pub delta: f64,
    pub training_instances: usize,
    pub curve: Vec<CurvePoint>,
}

impl TuneResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tune result serialization is infallible")
    }

    /// `multiplier,gamma,mean_profit` with `;`-separated per-knapsack gammas.
    pub fn curve_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["multiplier", "gamma", "mean_profit"])
            .expect("in-memory csv write");
        for p in &self.curve {
            let gammas: Vec<String> = p.gammas.iter().map(|g| g.to_string()).collect();
            w.write_record([
                p.multiplier.to_string(),
                gammas.join(";"),
                p.mean_profit.to_string(),
            ])
            .expect("in-memory csv write");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("csv is utf-8")
    }
}

fn multipliers(grid: &TuneGrid, delta: f64) -> Result<Vec<f64>, TuneError> {
    let (lo, hi) = (1.0 - delta, 1.0 + delta);
    let ms = match grid {
        TuneGrid::Multipliers(ms) => ms.clone(),
        TuneGrid::Points(0) => Vec::new(),
        TuneGrid::Points(1) => vec![1.0],
        TuneGrid::Points(p) => (0..*p)
            .map(|i| {
                if i + 1 == *p {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / (*p - 1) as f64
                }
            })
            .collect(),
    };
    if ms.is_empty() {
        return Err(TuneError::EmptyGrid);
    }
    if let Some(m) = ms.iter().find(|m| !(lo..=hi).contains(*m)) {
        return Err(TuneError::OutsideBand(*m, lo, hi));
    }
    Ok(ms)
}

/// Mean online profit over `training` with the given per-knapsack gammas.
pub fn mean_profit(training: &[Instance], gammas: &[f64]) -> Result<f64, TuneError> {
    let profits = training
        .par_iter()
        .map(|inst| -> Result<f64, TuneError> {
            let th = gammas
                .iter()
                .zip(&inst.knapsacks)
                .map(|(g, k)| ThresholdFn::exponential(*g, k.capacity))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(run(inst, &th)?.profit)
        })
        .collect::<Result<Vec<f64>, _>>()?;
    Ok(profits.iter().sum::<f64>() / profits.len() as f64)
}

/// Picks the multiplier with the highest mean training profit; ties go to
/// the multiplier closest to 1 (the default gamma), then the smaller one.
/// The returned gammas always lie in their knapsack's band.
pub fn tune_gamma(spec: &TuneSpec) -> Result<TuneResult, TuneError> {
    let first = spec.training.first().ok_or(TuneError::EmptyTraining)?;
    if !(0.0..1.0).contains(&spec.delta) {
        return Err(TuneError::Delta(spec.delta));
    }
    let key = |inst: &Instance| -> Vec<(f64, f64)> {
        inst.knapsacks
            .iter()
            .map(|k| (k.density_ratio, k.duration_ratio()))
            .collect()
    };
    let reference = key(first);
    if let Some(i) = spec.training.iter().position(|inst| key(inst) != reference) {
        return Err(TuneError::Inconsistent(i));
    }
    let ms = multipliers(&spec.grid, spec.delta)?;
    let defaults = reference
        .iter()
        .map(|(theta, alpha)| default_gamma(*theta, *alpha))
        .collect::<Result<Vec<_>, _>>()?;
    let band: Vec<(f64, f64)> = defaults
        .iter()
        .map(|g| (g * (1.0 - spec.delta), g * (1.0 + spec.delta)))
        .collect();
    let gammas_for = |m: f64| -> Vec<f64> {
        defaults
            .iter()
            .zip(&band)
            .map(|(g, (lo, hi))| (g * m).clamp(*lo, *hi))
            .collect()
    };

    let mut curve = Vec::with_capacity(ms.len());
    for m in ms {
        let gammas = gammas_for(m);
        let mean = mean_profit(&spec.training, &gammas)?;
        curve.push(CurvePoint {
            multiplier: m,
            gammas,
            mean_profit: mean,
        });
    }

    let best_profit = curve
        .iter()
        .map(|p| p.mean_profit)
        .fold(f64::NEG_INFINITY, f64::max);
    let best = curve
        .iter()
        .filter(|p| p.mean_profit >= best_profit - TIE_TOLERANCE)
        .min_by(|a, b| {
            (a.multiplier - 1.0)
                .abs()
                .total_cmp(&(b.multiplier - 1.0).abs())
                .then(a.multiplier.total_cmp(&b.multiplier))
        })
        .expect("grid is nonempty");

    Ok(TuneResult {
        method: METHOD.to_string(),
        gammas: best.gammas.clone(),
        multiplier: best.multiplier,
        default_gammas: defaults,
        band,
        delta: spec.delta,
        training_instances: spec.training.len(),
        curve,
    })
}
