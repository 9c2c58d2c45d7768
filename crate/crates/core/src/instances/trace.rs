//! CSV job traces to instances.
//!
//! Each data row is one job: an arrival slot, a size, a duration and
//! optionally a value and a start slot. Rows outside the declared bounds of
//! a target knapsack are clamped into them or dropped, per
//! [`ViolationPolicy`].

use std::collections::HashMap;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Instance, Item, ItemOption, KnapsackSpec, SlotInterval, StructureError};

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing column(s): {}", .0.join(", "))]
    MissingColumns(Vec<String>),
    #[error("{} of {total} rows unparseable (tolerance {tolerance}); lines: {}", .lines.len(), fmt_lines(.lines))]
    TooManyBadRows {
        lines: Vec<u64>,
        total: usize,
        tolerance: f64,
    },
    #[error("mapping: {0}")]
    Mapping(String),
    #[error(transparent)]
    Structure(#[from] StructureError),
}

fn fmt_lines(lines: &[u64]) -> String {
    let shown: Vec<String> = lines.iter().take(20).map(|l| l.to_string()).collect();
    let more = if lines.len() > 20 { ", ..." } else { "" };
    format!("{}{more}", shown.join(", "))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationPolicy {
    #[default]
    Clamp,
    Drop,
}

/// How rows become per-knapsack options.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    /// Every row is eligible in every knapsack.
    #[default]
    Replicate,
    /// Row `r` (0-based) is eligible only in knapsack `r mod K`.
    RoundRobin,
    /// A column holds the 0-based knapsack index.
    Column(String),
}

fn default_tolerance() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceMapping {
    pub arrival: String,
    pub size: String,
    pub duration: String,
    #[serde(default)]
    pub value: Option<String>,
    /// Requested start slot; defaults to the arrival slot.
    #[serde(default)]
    pub start: Option<String>,
    pub knapsacks: Vec<KnapsackSpec>,
    /// Defaults to the last requested slot.
    #[serde(default)]
    pub horizon: Option<u32>,
    #[serde(default)]
    pub placement: Placement,
    #[serde(default)]
    pub policy: ViolationPolicy,
    /// Density used to synthesize values when there is no value column;
    /// defaults to the midpoint of `[1, theta_k]`.
    #[serde(default)]
    pub density_default: Option<f64>,
    /// Largest tolerated fraction of unparseable rows.
    #[serde(default = "default_tolerance")]
    pub max_bad_fraction: f64,
}

impl TraceMapping {
    pub fn new(arrival: &str, size: &str, duration: &str, knapsacks: Vec<KnapsackSpec>) -> Self {
        Self {
            arrival: arrival.into(),
            size: size.into(),
            duration: duration.into(),
            value: None,
            start: None,
            knapsacks,
            horizon: None,
            placement: Placement::Replicate,
            policy: ViolationPolicy::Clamp,
            density_default: None,
            max_bad_fraction: default_tolerance(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows_read: usize,
    pub items: usize,
    /// File line numbers (header is line 1) of skipped unparseable rows.
    pub bad_lines: Vec<u64>,
    pub clamped_duration: usize,
    pub clamped_size: usize,
    pub clamped_density: usize,
    pub dropped_duration: usize,
    pub dropped_size: usize,
    pub dropped_density: usize,
    pub dropped_horizon: usize,
}

impl IngestReport {
    pub fn dropped(&self) -> usize {
        self.dropped_duration + self.dropped_size + self.dropped_density + self.dropped_horizon
    }
}

pub fn ingest_trace(
    path: impl AsRef<Path>,
    mapping: &TraceMapping,
) -> Result<(Instance, IngestReport), TraceError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| TraceError::Io {
        path: path.display().to_string(),
        source,
    })?;
    ingest_reader(file, mapping)
}

struct Row {
    index: usize,
    arrival: u32,
    start: u32,
    size: f64,
    duration: u32,
    value: Option<f64>,
    target: Option<usize>,
}

enum Outcome {
    Keep(ItemOption),
    Drop,
}

pub fn ingest_reader<R: Read>(
    reader: R,
    mapping: &TraceMapping,
) -> Result<(Instance, IngestReport), TraceError> {
    if mapping.knapsacks.is_empty() {
        return Err(TraceError::Mapping(
            "at least one knapsack is required".into(),
        ));
    }
    for (k, s) in mapping.knapsacks.iter().enumerate() {
        s.check()
            .map_err(|e| TraceError::Mapping(format!("knapsack {k}: {e}")))?;
    }
    let k_count = mapping.knapsacks.len();

    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: HashMap<String, usize> = rdr
        .headers()?
        .iter()
        .enumerate()
        .map(|(i, h)| (h.to_string(), i))
        .collect();
    let mut wanted = vec![&mapping.arrival, &mapping.size, &mapping.duration];
    wanted.extend(mapping.value.iter());
    wanted.extend(mapping.start.iter());
    if let Placement::Column(c) = &mapping.placement {
        wanted.push(c);
    }
    let missing: Vec<String> = wanted
        .iter()
        .filter(|c| !header.contains_key(c.as_str()))
        .map(|c| c.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(TraceError::MissingColumns(missing));
    }
    let col = |name: &str| header[name];

    let mut report = IngestReport::default();
    let mut rows = Vec::new();
    for (index, record) in rdr.records().enumerate() {
        report.rows_read += 1;
        let line = index as u64 + 2;
        let record = match record {
            Ok(r) => r,
            Err(_) => {
                report.bad_lines.push(line);
                continue;
            }
        };
        let field = |name: &str| record.get(col(name)).unwrap_or("");
        let parsed = (|| {
            let arrival: u32 = field(&mapping.arrival).parse().ok().filter(|a| *a >= 1)?;
            let size: f64 = field(&mapping.size)
                .parse()
                .ok()
                .filter(|s: &f64| s.is_finite() && *s > 0.0)?;
            let duration: u32 = field(&mapping.duration).parse().ok().filter(|d| *d >= 1)?;
            let value = match &mapping.value {
                Some(c) => Some(
                    field(c)
                        .parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite() && *v > 0.0)?,
                ),
                None => None,
            };
            let start = match &mapping.start {
                Some(c) => field(c).parse().ok().filter(|s| *s >= 1)?,
                None => arrival,
            };
            let target = match &mapping.placement {
                Placement::Replicate => None,
                Placement::RoundRobin => Some(index % k_count),
                Placement::Column(c) => Some(field(c).parse().ok().filter(|k| *k < k_count)?),
            };
            Some(Row {
                index,
                arrival,
                start,
                size,
                duration,
                value,
                target,
            })
        })();
        match parsed {
            Some(r) => rows.push(r),
            None => report.bad_lines.push(line),
        }
    }
    let allowed = mapping.max_bad_fraction * report.rows_read as f64;
    if report.bad_lines.len() as f64 > allowed {
        return Err(TraceError::TooManyBadRows {
            lines: report.bad_lines,
            total: report.rows_read,
            tolerance: mapping.max_bad_fraction,
        });
    }

    let mut items = Vec::with_capacity(rows.len());
    'rows: for row in &rows {
        let mut options = Vec::with_capacity(k_count);
        for (k, ks) in mapping.knapsacks.iter().enumerate() {
            if row.target.is_some_and(|t| t != k) {
                options.push(ItemOption {
                    interval: SlotInterval::new(row.start, ks.duration_lo),
                    ..ItemOption::ineligible()
                });
                continue;
            }
            match shape_option(row, ks, mapping, &mut report) {
                Outcome::Keep(opt) => options.push(opt),
                Outcome::Drop => continue 'rows,
            }
        }
        items.push(Item {
            id: row.index as u64,
            arrival: row.arrival,
            options,
        });
    }

    let last_slot = items
        .iter()
        .flat_map(|i| i.eligible().map(|(_, o)| o.interval.end()))
        .chain(items.iter().map(|i| i.arrival as u64))
        .max()
        .unwrap_or(1);
    let horizon = match mapping.horizon {
        Some(t) => {
            let before = items.len();
            items.retain(|i| {
                i.arrival <= t && i.eligible().all(|(_, o)| o.interval.end() <= t as u64)
            });
            report.dropped_horizon += before - items.len();
            t
        }
        None => u32::try_from(last_slot)
            .map_err(|_| TraceError::Mapping(format!("last slot {last_slot} overflows")))?,
    };
    items.sort_by_key(|i| i.arrival);
    report.items = items.len();
    let inst = Instance::new(horizon, mapping.knapsacks.clone(), items)?;
    Ok((inst, report))
}

fn shape_option(
    row: &Row,
    ks: &KnapsackSpec,
    mapping: &TraceMapping,
    report: &mut IngestReport,
) -> Outcome {
    let clamp = mapping.policy == ViolationPolicy::Clamp;
    let mut duration = row.duration;
    if duration < ks.duration_lo || duration > ks.duration_hi {
        if !clamp {
            report.dropped_duration += 1;
            return Outcome::Drop;
        }
        duration = duration.clamp(ks.duration_lo, ks.duration_hi);
        report.clamped_duration += 1;
    }
    let mut size = row.size;
    if size > ks.size_cap {
        if !clamp {
            report.dropped_size += 1;
            return Outcome::Drop;
        }
        size = ks.size_cap;
        report.clamped_size += 1;
    }
    let area = size * duration as f64;
    let value = match row.value {
        None => {
            let density = mapping
                .density_default
                .unwrap_or((1.0 + ks.density_ratio) / 2.0)
                .clamp(1.0, ks.density_ratio);
            density * area
        }
        Some(v) => {
            let density = v / area;
            if (1.0..=ks.density_ratio).contains(&density) {
                v
            } else if clamp {
                report.clamped_density += 1;
                density.clamp(1.0, ks.density_ratio) * area
            } else {
                report.dropped_density += 1;
                return Outcome::Drop;
            }
        }
    };
    Outcome::Keep(ItemOption::new(
        size,
        value,
        SlotInterval::new(row.start, duration),
    ))
}
