//! Log campaigns over stable configurations, the on-disk log format, and
//! segmentation into fixed-length context windows.
//!
//! A log set is a directory holding `manifest.json` and one
//! `flight_<id>.csv` per retained flight.

use std::fs;
use std::path::Path;

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::monitor::{classify, PrearmRules, Thresholds, VerdictLabel};
use crate::paramspec::{Configuration, ParameterTable};
use crate::rng;
use crate::simkernel::{run_mission, FlightTrace, Mission, SensorUnit, SimOptions, StateUnit};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CSV_HEADER: [&str; 13] = [
    "t",
    "roll",
    "pitch",
    "yaw",
    "roll_rate",
    "pitch_rate",
    "yaw_rate",
    "gx",
    "gy",
    "gz",
    "ax",
    "ay",
    "az",
];

/// State and sensor readings at one log tick.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Context {
    pub state: StateUnit,
    pub sensors: SensorUnit,
}

impl Context {
    pub const LEN: usize = StateUnit::LEN + SensorUnit::LEN;

    pub fn to_array(&self) -> [f64; 12] {
        let mut out = [0.0; 12];
        out[..6].copy_from_slice(&self.state.to_array());
        out[6..].copy_from_slice(&self.sensors.to_array());
        out
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self {
            state: StateUnit::from_slice(&v[..6]),
            sensors: SensorUnit::from_slice(&v[6..12]),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.state.is_finite() && self.sensors.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub t: f64,
    pub context: Context,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlightLog {
    pub id: usize,
    pub config: Configuration,
    pub verdict: VerdictLabel,
    /// Simulation seed, so the flight can be re-flown.
    pub seed: u64,
    pub entries: Vec<LogEntry>,
}

impl FlightLog {
    pub fn from_trace(id: usize, seed: u64, verdict: VerdictLabel, trace: &FlightTrace) -> Self {
        Self {
            id,
            config: trace.config.clone(),
            verdict,
            seed,
            entries: trace
                .entries
                .iter()
                .map(|e| LogEntry {
                    t: e.t,
                    context: Context {
                        state: e.state,
                        sensors: e.sensors,
                    },
                })
                .collect(),
        }
    }
}

/// Counts from the campaign that produced a log set.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignStats {
    pub attempted: usize,
    pub retained: usize,
    pub rejected_prearm: usize,
    pub unstable: usize,
    pub total_entries: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LogSet {
    pub parameters: Vec<String>,
    pub flights: Vec<FlightLog>,
    pub stats: CampaignStats,
}

impl LogSet {
    pub fn total_entries(&self) -> usize {
        self.flights.iter().map(|f| f.entries.len()).sum()
    }

    pub fn flight(&self, id: usize) -> Option<&FlightLog> {
        self.flights.iter().find(|f| f.id == id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignOptions {
    pub n_flights: usize,
    pub seed: u64,
    /// Sampler standard deviation as a fraction of each range width.
    pub sigma_fraction: f64,
    pub min_stable_fraction: f64,
    pub sim: SimOptions,
    pub thresholds: Thresholds,
}

impl Default for CampaignOptions {
    fn default() -> Self {
        Self {
            n_flights: 300,
            seed: 0,
            sigma_fraction: 0.15,
            min_stable_fraction: 0.1,
            sim: SimOptions::default(),
            thresholds: Thresholds::default(),
        }
    }
}

/// Configuration flown as flight `id`: defaults for flight 0, otherwise a
/// Gaussian draw around the defaults clipped to the ranges.
pub fn campaign_config(table: &ParameterTable, seed: u64, id: usize, sigma_fraction: f64) -> Configuration {
    if id == 0 {
        return table.default_configuration();
    }
    let mut rng = rng::stream(seed, &[0xC0, id as u64]);
    Configuration(
        table
            .specs()
            .iter()
            .map(|s| {
                let sd = sigma_fraction * s.width();
                let v = if sd > 0.0 {
                    Normal::new(s.default, sd).expect("positive sd").sample(&mut rng)
                } else {
                    s.default
                };
                s.clamp(v)
            })
            .collect(),
    )
}

enum Outcome {
    Rejected,
    Unstable,
    Stable(FlightLog),
}

/// Flies `opts.n_flights` missions and keeps the pre-arm-accepted flights
/// that classify as Correct.
pub fn generate_campaign(
    table: &ParameterTable,
    mission: &Mission,
    rules: &PrearmRules,
    opts: &CampaignOptions,
) -> Result<LogSet> {
    if opts.n_flights == 0 {
        return Err(Error::Precondition("campaign needs at least one flight".into()));
    }
    let outcomes: Vec<Outcome> = (0..opts.n_flights)
        .into_par_iter()
        .map(|id| -> Result<Outcome> {
            let config = campaign_config(table, opts.seed, id, opts.sigma_fraction);
            let prearm = rules.check(table, &config);
            if !prearm.accepted {
                return Ok(Outcome::Rejected);
            }
            let seed = rng::derive_seed(opts.seed, &[0xF1, id as u64]);
            let sim = SimOptions { seed, ..opts.sim };
            let trace = run_mission(table, &config, mission, None, &sim)?;
            let verdict = classify(&trace, &prearm, false, &opts.thresholds);
            Ok(if verdict.label == VerdictLabel::Correct {
                Outcome::Stable(FlightLog::from_trace(id, seed, verdict.label, &trace))
            } else {
                Outcome::Unstable
            })
        })
        .collect::<Result<_>>()?;

    let mut stats = CampaignStats {
        attempted: opts.n_flights,
        ..CampaignStats::default()
    };
    let mut flights = Vec::new();
    for o in outcomes {
        match o {
            Outcome::Rejected => stats.rejected_prearm += 1,
            Outcome::Unstable => stats.unstable += 1,
            Outcome::Stable(f) => flights.push(f),
        }
    }
    stats.retained = flights.len();
    stats.total_entries = flights.iter().map(|f| f.entries.len()).sum();
    if (stats.retained as f64) < opts.min_stable_fraction * opts.n_flights as f64 {
        return Err(Error::CampaignFailed {
            stable: stats.retained,
            total: opts.n_flights,
        });
    }
    Ok(LogSet {
        parameters: table.names().map(str::to_string).collect(),
        flights,
        stats,
    })
}

#[derive(Serialize, Deserialize)]
struct ManifestFlight {
    id: usize,
    config: Vec<f64>,
    verdict: VerdictLabel,
    n_entries: usize,
    seed: u64,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    parameters: Vec<String>,
    flights: Vec<ManifestFlight>,
    campaign: CampaignStats,
}

fn flight_file(id: usize) -> String {
    format!("flight_{id}.csv")
}

pub fn write_log(logset: &LogSet, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for f in &logset.flights {
        let path = dir.join(flight_file(f.id));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(CSV_HEADER)?;
        for e in &f.entries {
            let mut row = Vec::with_capacity(13);
            row.push(e.t.to_string());
            row.extend(e.context.to_array().iter().map(f64::to_string));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        parameters: logset.parameters.clone(),
        flights: logset
            .flights
            .iter()
            .map(|f| ManifestFlight {
                id: f.id,
                config: f.config.values().to_vec(),
                verdict: f.verdict,
                n_entries: f.entries.len(),
                seed: f.seed,
            })
            .collect(),
        campaign: logset.stats.clone(),
    };
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

pub fn read_log(dir: impl AsRef<Path>) -> Result<LogSet> {
    let dir = dir.as_ref();
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|_| Error::FormatVersion {
        found: 0,
        expected: FORMAT_VERSION,
    })?;
    let found = value.get("format_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if found != FORMAT_VERSION {
        return Err(Error::FormatVersion {
            found,
            expected: FORMAT_VERSION,
        });
    }
    let manifest: Manifest = serde_json::from_value(value)?;
    let mut flights = Vec::with_capacity(manifest.flights.len());
    for mf in manifest.flights {
        if mf.config.len() != manifest.parameters.len() {
            return Err(Error::DimensionMismatch {
                expected: manifest.parameters.len(),
                actual: mf.config.len(),
            });
        }
        let fpath = dir.join(flight_file(mf.id));
        let origin = fpath.display().to_string();
        let mut rdr = csv::Reader::from_path(&fpath)?;
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if header != CSV_HEADER {
            return Err(Error::Parse {
                path: origin,
                row: 1,
                message: format!("unexpected header {header:?}"),
            });
        }
        let mut entries = Vec::with_capacity(mf.n_entries);
        for (i, rec) in rdr.records().enumerate() {
            let row = i + 2;
            let rec = rec.map_err(|e| Error::Parse {
                path: origin.clone(),
                row,
                message: e.to_string(),
            })?;
            let vals = rec
                .iter()
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse {
                    path: origin.clone(),
                    row,
                    message: e.to_string(),
                })?;
            if vals.len() != CSV_HEADER.len() {
                return Err(Error::Truncated {
                    path: origin,
                    message: format!("row {row} has {} fields", vals.len()),
                });
            }
            entries.push(LogEntry {
                t: vals[0],
                context: Context::from_slice(&vals[1..]),
            });
        }
        if entries.len() != mf.n_entries {
            return Err(Error::Truncated {
                path: origin,
                message: format!("manifest lists {} entries, file has {}", mf.n_entries, entries.len()),
            });
        }
        flights.push(FlightLog {
            id: mf.id,
            config: Configuration(mf.config),
            verdict: mf.verdict,
            seed: mf.seed,
            entries,
        });
    }
    Ok(LogSet {
        parameters: manifest.parameters,
        flights,
        stats: manifest.campaign,
    })
}

/// `h + 1` consecutive contexts from one flight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub flight: usize,
    pub start: usize,
    pub contexts: Vec<Context>,
}

impl Segment {
    /// Flattened contexts, the embedding used for clustering.
    pub fn flatten(&self) -> Vec<f64> {
        self.contexts.iter().flat_map(|c| c.to_array()).collect()
    }
}

/// Non-overlapping windows of `h + 1` entries starting at multiples of
/// `h + 1`; trailing entries that do not fill a window are dropped.
pub fn segment(logset: &LogSet, h: usize) -> Result<Vec<Segment>> {
    if h == 0 {
        return Err(Error::Precondition("segment length h must be at least 1".into()));
    }
    let len = h + 1;
    Ok(logset
        .flights
        .iter()
        .flat_map(|f| {
            f.entries.chunks_exact(len).enumerate().map(move |(k, chunk)| Segment {
                flight: f.id,
                start: k * len,
                contexts: chunk.iter().map(|e| e.context).collect(),
            })
        })
        .collect())
}
