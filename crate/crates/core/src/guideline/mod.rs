//! Range guidelines: per-parameter sub-ranges that trade the share of
//! incorrect validated configurations they admit (`f1`, minimized)
//! against how many validated configurations they admit (`f2`,
//! maximized).

mod nsga2;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::monitor::{Verdict, VerdictLabel};
use crate::paramspec::{Configuration, ParameterTable};

pub use nsga2::{grid_value, pareto_optimize, MoeaParams};

pub const RECORDS_FORMAT_VERSION: u32 = 1;

/// One validated configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRecord {
    pub id: usize,
    /// PotentialSet provenance, when the config came from a search.
    pub segment_id: Option<usize>,
    pub fitness: Option<f64>,
    pub config: Configuration,
    pub prearm_accepted: bool,
    pub injected: bool,
    pub verdict: Verdict,
}

impl ValidationRecord {
    /// A bare record, mostly for tests and hand-built inputs.
    pub fn new(id: usize, config: Configuration, label: VerdictLabel) -> Self {
        Self {
            id,
            segment_id: None,
            fitness: None,
            config,
            prearm_accepted: true,
            injected: false,
            verdict: Verdict { label, evidence: None },
        }
    }

    pub fn incorrect(&self) -> bool {
        self.verdict.label.is_incorrect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationSet {
    pub format_version: u32,
    pub parameters: Vec<String>,
    pub records: Vec<ValidationRecord>,
}

impl ValidationSet {
    pub fn new(table: &ParameterTable, records: Vec<ValidationRecord>) -> Self {
        Self {
            format_version: RECORDS_FORMAT_VERSION,
            parameters: table.names().map(str::to_string).collect(),
            records,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let set: Self = serde_json::from_str(&text)?;
        if set.format_version != RECORDS_FORMAT_VERSION {
            return Err(Error::FormatVersion {
                found: set.format_version,
                expected: RECORDS_FORMAT_VERSION,
            });
        }
        Ok(set)
    }

    /// Flat per-record summary: id, verdict, detector and the configuration.
    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<String> = [
            "id",
            "segment_id",
            "fitness",
            "prearm_accepted",
            "injected",
            "verdict",
            "detector",
            "t_start",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        header.extend(self.parameters.iter().cloned());
        w.write_record(&header)?;
        let opt = |v: Option<String>| v.unwrap_or_default();
        for r in &self.records {
            let ev = r.verdict.evidence.as_ref();
            let mut row = vec![
                r.id.to_string(),
                opt(r.segment_id.map(|s| s.to_string())),
                opt(r.fitness.map(|f| f.to_string())),
                r.prearm_accepted.to_string(),
                r.injected.to_string(),
                r.verdict.label.as_str().to_string(),
                opt(ev.map(|e| {
                    serde_json::to_value(e.detector)
                        .expect("enum serializes")
                        .as_str()
                        .unwrap_or_default()
                        .to_string()
                })),
                opt(ev.map(|e| e.t_start.to_string())),
            ];
            row.extend(r.config.values().iter().map(f64::to_string));
            w.write_record(&row)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Precondition(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Inclusive per-parameter bounds, in parameter units.
pub type Bounds = Vec<(f64, f64)>;

pub fn covered(bounds: &[(f64, f64)], config: &Configuration) -> bool {
    bounds.len() == config.len()
        && bounds
            .iter()
            .zip(config.values())
            .all(|(&(lo, hi), &v)| lo <= v && v <= hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Objectives {
    pub f1: f64,
    pub f2: usize,
    pub covered_incorrect: usize,
}

impl Objectives {
    pub fn from_counts(covered: usize, covered_incorrect: usize) -> Self {
        let f1 = if covered == 0 {
            1.0
        } else {
            covered_incorrect as f64 / covered as f64
        };
        Self {
            f1,
            f2: covered,
            covered_incorrect,
        }
    }
}

/// `f2` counts covered records; `f1` is the covered-incorrect share, or 1
/// when nothing is covered.
pub fn objectives(bounds: &[(f64, f64)], records: &[ValidationRecord]) -> Objectives {
    let mut n = 0;
    let mut bad = 0;
    for r in records {
        if covered(bounds, &r.config) {
            n += 1;
            bad += usize::from(r.incorrect());
        }
    }
    Objectives::from_counts(n, bad)
}

/// Lower `f1` and higher `f2` are better.
pub fn dominates(a: (f64, usize), b: (f64, usize)) -> bool {
    a.0 <= b.0 && a.1 >= b.1 && (a.0 < b.0 || a.1 > b.1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeGuideline {
    pub bounds: Bounds,
    pub f1: f64,
    pub f2: usize,
    pub covered_incorrect: usize,
    /// `1 - new width / original width`, per parameter.
    pub reduction: Vec<f64>,
}

impl RangeGuideline {
    pub fn new(table: &ParameterTable, bounds: Bounds, obj: Objectives) -> Self {
        let reduction = table
            .specs()
            .iter()
            .zip(&bounds)
            .map(|(s, &(lo, hi))| 1.0 - (hi - lo) / s.width())
            .collect();
        Self {
            bounds,
            f1: obj.f1,
            f2: obj.f2,
            covered_incorrect: obj.covered_incorrect,
            reduction,
        }
    }

    pub fn objectives(&self) -> (f64, usize) {
        (self.f1, self.f2)
    }
}

/// Keeps the non-dominated entries of `(objectives, payload)` pairs.
pub fn non_dominated<T: Clone>(items: &BTreeMap<(usize, usize), T>) -> Vec<((usize, usize), T)> {
    let objs: Vec<((usize, usize), (f64, usize))> = items
        .keys()
        .map(|&(cov, bad)| {
            let o = Objectives::from_counts(cov, bad);
            ((cov, bad), (o.f1, o.f2))
        })
        .collect();
    objs.iter()
        .filter(|(_, a)| !objs.iter().any(|(_, b)| dominates(*b, *a)))
        .map(|(k, _)| (*k, items[k].clone()))
        .collect()
}

pub fn guidelines_csv(table: &ParameterTable, front: &[RangeGuideline]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["guideline_id", "param", "lower", "upper", "reduce_pct"])?;
    for (g, guide) in front.iter().enumerate() {
        for ((spec, &(lo, hi)), red) in table.specs().iter().zip(&guide.bounds).zip(&guide.reduction) {
            w.write_record([
                g.to_string(),
                spec.name.clone(),
                lo.to_string(),
                hi.to_string(),
                format!("{:.2}", 100.0 * red),
            ])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Precondition(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn front_csv(front: &[RangeGuideline]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["guideline_id", "f1", "f2", "covered", "covered_incorrect"])?;
    for (g, guide) in front.iter().enumerate() {
        w.write_record([
            g.to_string(),
            guide.f1.to_string(),
            guide.f2.to_string(),
            guide.f2.to_string(),
            guide.covered_incorrect.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Precondition(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Scatter data, one row per guideline.
pub fn plot_csv(front: &[RangeGuideline]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["f2", "f1"])?;
    for guide in front {
        w.write_record([guide.f2.to_string(), guide.f1.to_string()])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Precondition(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
