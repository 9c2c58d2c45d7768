//! Marginal-cost threshold functions.
//!
//! A threshold maps the current utilization `z` of a knapsack slot to a cost
//! per unit size. The default family is `phi(z) = exp(z * gamma / C) - 1`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Instance, KnapsackSpec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ThresholdError {
    #[error("utilization {z} outside [0, {capacity}]")]
    Domain { z: f64, capacity: f64 },
    #[error("invalid threshold parameter: {0}")]
    Parameter(String),
    #[error("expected {expected} gamma values, found {found}")]
    GammaCount { expected: usize, found: usize },
}

/// Anything the admission rule can use as a marginal cost.
pub trait Threshold {
    fn capacity(&self) -> f64;

    /// Cost per unit size per slot at utilization `z`.
    fn eval(&self, z: f64) -> Result<f64, ThresholdError>;
}

/// `exp(z * gamma / C) - 1` on `[0, C]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exponential {
    pub gamma: f64,
    pub capacity: f64,
}

impl Exponential {
    pub fn new(gamma: f64, capacity: f64) -> Result<Self, ThresholdError> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(ThresholdError::Parameter(format!(
                "gamma must be positive, got {gamma}"
            )));
        }
        check_capacity(capacity)?;
        Ok(Self { gamma, capacity })
    }

    /// Uses [`default_gamma`] for the knapsack's declared bounds.
    pub fn for_spec(spec: &KnapsackSpec) -> Result<Self, ThresholdError> {
        Self::new(
            default_gamma(spec.density_ratio, spec.duration_ratio())?,
            spec.capacity,
        )
    }
}

impl Threshold for Exponential {
    fn capacity(&self) -> f64 {
        self.capacity
    }

    fn eval(&self, z: f64) -> Result<f64, ThresholdError> {
        check_domain(z, self.capacity)?;
        Ok((z / self.capacity * self.gamma).exp_m1())
    }
}

/// Piecewise-linear interpolation over `(z, phi)` knots spanning `[0, C]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tabulated {
    capacity: f64,
    knots: Vec<(f64, f64)>,
}

impl Tabulated {
    /// Knots must start at `(0, 0)`, end at `z = C`, have strictly
    /// increasing `z` and nondecreasing `phi`.
    pub fn new(capacity: f64, knots: Vec<(f64, f64)>) -> Result<Self, ThresholdError> {
        check_capacity(capacity)?;
        let bad = |msg: &str| Err(ThresholdError::Parameter(msg.to_string()));
        if knots.len() < 2 {
            return bad("table needs at least two knots");
        }
        if knots[0] != (0.0, 0.0) {
            return bad("table must start at (0, 0)");
        }
        if knots.last().map(|k| k.0) != Some(capacity) {
            return bad("table must end at z = capacity");
        }
        if knots.iter().any(|(z, p)| !z.is_finite() || !p.is_finite()) {
            return bad("table entries must be finite");
        }
        for w in knots.windows(2) {
            if w[1].0 <= w[0].0 {
                return bad("knot utilizations must be strictly increasing");
            }
            if w[1].1 < w[0].1 {
                return bad("threshold values must be nondecreasing");
            }
        }
        Ok(Self { capacity, knots })
    }

    /// Samples `f` on `points` evenly spaced utilizations.
    pub fn sample(
        capacity: f64,
        points: usize,
        f: impl Fn(f64) -> f64,
    ) -> Result<Self, ThresholdError> {
        let points = points.max(2);
        let knots = (0..points)
            .map(|i| {
                let z = if i + 1 == points {
                    capacity
                } else {
                    capacity * i as f64 / (points - 1) as f64
                };
                (z, if i == 0 { 0.0 } else { f(z) })
            })
            .collect();
        Self::new(capacity, knots)
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }
}

impl Threshold for Tabulated {
    fn capacity(&self) -> f64 {
        self.capacity
    }

    fn eval(&self, z: f64) -> Result<f64, ThresholdError> {
        check_domain(z, self.capacity)?;
        let i = self.knots.partition_point(|(kz, _)| *kz <= z);
        if i >= self.knots.len() {
            return Ok(self.knots[self.knots.len() - 1].1);
        }
        let (z0, p0) = self.knots[i - 1];
        let (z1, p1) = self.knots[i];
        Ok(p0 + (p1 - p0) * (z - z0) / (z1 - z0))
    }
}

/// Closed set of threshold kinds usable from configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ThresholdFn {
    Exponential(Exponential),
    Table(Tabulated),
}

impl ThresholdFn {
    pub fn exponential(gamma: f64, capacity: f64) -> Result<Self, ThresholdError> {
        Exponential::new(gamma, capacity).map(Self::Exponential)
    }

    pub fn gamma(&self) -> Option<f64> {
        match self {
            Self::Exponential(e) => Some(e.gamma),
            Self::Table(_) => None,
        }
    }
}

impl Threshold for ThresholdFn {
    fn capacity(&self) -> f64 {
        match self {
            Self::Exponential(e) => e.capacity(),
            Self::Table(t) => t.capacity(),
        }
    }

    fn eval(&self, z: f64) -> Result<f64, ThresholdError> {
        match self {
            Self::Exponential(e) => e.eval(z),
            Self::Table(t) => t.eval(z),
        }
    }
}

impl<T: Threshold + ?Sized> Threshold for &T {
    fn capacity(&self) -> f64 {
        (**self).capacity()
    }

    fn eval(&self, z: f64) -> Result<f64, ThresholdError> {
        (**self).eval(z)
    }
}

fn check_capacity(capacity: f64) -> Result<(), ThresholdError> {
    if capacity.is_finite() && capacity > 0.0 {
        Ok(())
    } else {
        Err(ThresholdError::Parameter(format!(
            "capacity must be positive, got {capacity}"
        )))
    }
}

fn check_domain(z: f64, capacity: f64) -> Result<(), ThresholdError> {
    if (0.0..=capacity).contains(&z) {
        Ok(())
    } else {
        Err(ThresholdError::Domain { z, capacity })
    }
}

/// `ln(1 + alpha * theta)`, which makes the full-capacity cost `phi(C)`
/// equal `alpha * theta`.
pub fn default_gamma(theta: f64, alpha: f64) -> Result<f64, ThresholdError> {
    if !(theta >= 1.0 && theta.is_finite()) {
        return Err(ThresholdError::Parameter(format!(
            "theta must be >= 1, got {theta}"
        )));
    }
    if !(alpha >= 1.0 && alpha.is_finite()) {
        return Err(ThresholdError::Parameter(format!(
            "alpha must be >= 1, got {alpha}"
        )));
    }
    Ok((alpha * theta).ln_1p())
}

/// Largest item size `C * ln 2 / gamma` compatible with the exponential
/// threshold's guarantee.
pub fn size_precondition(capacity: f64, gamma: f64) -> f64 {
    capacity * std::f64::consts::LN_2 / gamma
}

/// How experiment files and the CLI choose gamma.
#[derive(Debug, Clone, PartialEq)]
pub enum GammaSetting {
    /// `default_gamma` from each knapsack's declared bounds.
    Auto,
    Fixed(f64),
    PerKnapsack(Vec<f64>),
}

impl Serialize for GammaSetting {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Self::Auto => s.serialize_str("auto"),
            Self::Fixed(g) => s.serialize_f64(*g),
            Self::PerKnapsack(gs) => gs.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for GammaSetting {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Word(String),
            One(f64),
            Many(Vec<f64>),
        }
        match Repr::deserialize(d)? {
            Repr::Word(w) if w == "auto" => Ok(Self::Auto),
            Repr::Word(w) => Err(serde::de::Error::custom(format!(
                "gamma must be a number, a list of numbers, or \"auto\"; got {w:?}"
            ))),
            Repr::One(g) => Ok(Self::Fixed(g)),
            Repr::Many(gs) => Ok(Self::PerKnapsack(gs)),
        }
    }
}

impl std::str::FromStr for GammaSetting {
    type Err = ThresholdError;

    /// `auto`, a single float, or a comma-separated list.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Self::Auto);
        }
        let parse = |p: &str| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| ThresholdError::Parameter(format!("cannot parse gamma {p:?}")))
        };
        if s.contains(',') {
            s.split(',')
                .map(parse)
                .collect::<Result<_, _>>()
                .map(Self::PerKnapsack)
        } else {
            parse(s).map(Self::Fixed)
        }
    }
}

/// `{ "kind": "exponential", "gamma": float | [floats] | "auto" }`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdConfig {
    pub kind: ThresholdKind,
    pub gamma: GammaSetting,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdKind {
    Exponential,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        Self {
            kind: ThresholdKind::Exponential,
            gamma: GammaSetting::Auto,
        }
    }
}

impl ThresholdConfig {
    pub fn with_gamma(gamma: GammaSetting) -> Self {
        Self {
            kind: ThresholdKind::Exponential,
            gamma,
        }
    }

    /// Per-knapsack gammas for the given knapsacks.
    pub fn gammas(&self, knapsacks: &[KnapsackSpec]) -> Result<Vec<f64>, ThresholdError> {
        match &self.gamma {
            GammaSetting::Auto => knapsacks
                .iter()
                .map(|k| default_gamma(k.density_ratio, k.duration_ratio()))
                .collect(),
            GammaSetting::Fixed(g) => Ok(vec![*g; knapsacks.len()]),
            GammaSetting::PerKnapsack(gs) if gs.len() == knapsacks.len() => Ok(gs.clone()),
            GammaSetting::PerKnapsack(gs) => Err(ThresholdError::GammaCount {
                expected: knapsacks.len(),
                found: gs.len(),
            }),
        }
    }

    pub fn build(&self, inst: &Instance) -> Result<Vec<ThresholdFn>, ThresholdError> {
        self.gammas(&inst.knapsacks)?
            .into_iter()
            .zip(&inst.knapsacks)
            .map(|(g, k)| ThresholdFn::exponential(g, k.capacity))
            .collect()
    }
}
