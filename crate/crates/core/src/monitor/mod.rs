//! Unstable-state detectors, the pre-arm check, and verdict classification.
//!
//! Every detector is a pure function of a [`FlightTrace`]. Thresholds live in
//! [`Thresholds`]; the defaults are the values the validation stage uses.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::paramspec::{Configuration, ParameterTable};
use crate::simkernel::{FlightTrace, Phase, TraceEntry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VerdictLabel {
    Correct,
    Freeze,
    Deviation,
    Crash,
    ThrustLoss,
    Tackling,
}

impl VerdictLabel {
    pub const ALL: [VerdictLabel; 6] = [
        VerdictLabel::Correct,
        VerdictLabel::Freeze,
        VerdictLabel::Deviation,
        VerdictLabel::Crash,
        VerdictLabel::ThrustLoss,
        VerdictLabel::Tackling,
    ];

    pub fn is_incorrect(self) -> bool {
        self != VerdictLabel::Correct
    }

    pub fn as_str(self) -> &'static str {
        match self {
            VerdictLabel::Correct => "Correct",
            VerdictLabel::Freeze => "Freeze",
            VerdictLabel::Deviation => "Deviation",
            VerdictLabel::Crash => "Crash",
            VerdictLabel::ThrustLoss => "ThrustLoss",
            VerdictLabel::Tackling => "Tackling",
        }
    }
}

impl std::str::FromStr for VerdictLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        VerdictLabel::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| format!("unknown verdict `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Detector {
    Freeze,
    Deviation,
    Crash,
    ThrustLoss,
    /// Simulation produced non-finite state; reported as a crash.
    Diverged,
}

/// Why a detector fired: the time window, what was measured, and the bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub detector: Detector,
    pub t_start: f64,
    pub t_end: f64,
    pub measured: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub label: VerdictLabel,
    pub evidence: Option<Evidence>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub freeze_window: f64,
    pub freeze_distance: f64,
    pub deviation_distance: f64,
    pub deviation_count: usize,
    pub deviation_sample_period: f64,
    pub crash_impact_speed: f64,
    pub crash_attitude_deg: f64,
    pub crash_altitude: f64,
    pub thrust_loss_duration: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            freeze_window: 15.0,
            freeze_distance: 0.5,
            deviation_distance: 1.5,
            deviation_count: 15,
            deviation_sample_period: 1.0,
            crash_impact_speed: 2.0,
            crash_attitude_deg: 90.0,
            crash_altitude: 1.0,
            thrust_loss_duration: 2.0,
        }
    }
}

const TIME_EPS: f64 = 1e-9;

fn horizontal_distance(a: &TraceEntry, b: &TraceEntry) -> f64 {
    (a.position[0] - b.position[0]).hypot(a.position[1] - b.position[1])
}

/// Some window of `freeze_window` seconds, entirely inside movement phases,
/// in which the vehicle never strays `freeze_distance` from where it started.
pub fn detect_freeze(trace: &FlightTrace, th: &Thresholds) -> Option<Evidence> {
    let e = &trace.entries;
    let mut i = 0;
    while i < e.len() {
        if !e[i].phase.commands_movement() {
            i += 1;
            continue;
        }
        let mut run_end = i;
        while run_end + 1 < e.len() && e[run_end + 1].phase.commands_movement() {
            run_end += 1;
        }
        for start in i..=run_end {
            let t_stop = e[start].t + th.freeze_window;
            if e[run_end].t + TIME_EPS < t_stop {
                break;
            }
            let mut max_d: f64 = 0.0;
            let mut j = start;
            while j <= run_end && e[j].t <= t_stop + TIME_EPS {
                max_d = max_d.max(horizontal_distance(&e[start], &e[j]));
                if max_d >= th.freeze_distance {
                    break;
                }
                j += 1;
            }
            if max_d < th.freeze_distance {
                return Some(Evidence {
                    detector: Detector::Freeze,
                    t_start: e[start].t,
                    t_end: t_stop,
                    measured: max_d,
                    threshold: th.freeze_distance,
                });
            }
        }
        i = run_end + 1;
    }
    None
}

/// At least `deviation_count` consecutive 1 Hz samples farther than
/// `deviation_distance` from the reference leg.
pub fn detect_deviation(trace: &FlightTrace, th: &Thresholds) -> Option<Evidence> {
    if trace.entries.is_empty() || trace.log_dt <= 0.0 {
        return None;
    }
    let stride = ((th.deviation_sample_period / trace.log_dt).round() as usize).max(1);
    let mut run = 0usize;
    let mut run_start = 0.0;
    let mut run_max: f64 = 0.0;
    for entry in trace.entries.iter().step_by(stride) {
        let dev = entry
            .leg
            .and_then(|l| trace.legs.get(l))
            .filter(|_| entry.phase != Phase::Ground)
            .map(|leg| leg.cross_track(&entry.position));
        match dev {
            Some(d) if d > th.deviation_distance => {
                if run == 0 {
                    run_start = entry.t;
                    run_max = 0.0;
                }
                run += 1;
                run_max = run_max.max(d);
                if run >= th.deviation_count {
                    return Some(Evidence {
                        detector: Detector::Deviation,
                        t_start: run_start,
                        t_end: entry.t,
                        measured: run_max,
                        threshold: th.deviation_distance,
                    });
                }
            }
            _ => run = 0,
        }
    }
    None
}

/// Hard ground contact, or an inverted attitude close to the ground.
pub fn detect_crash(trace: &FlightTrace, th: &Thresholds) -> Option<Evidence> {
    for e in trace.entries.iter().filter(|e| e.phase != Phase::Ground) {
        if e.altitude() <= 0.0 && e.descent_speed() > th.crash_impact_speed {
            return Some(Evidence {
                detector: Detector::Crash,
                t_start: e.t,
                t_end: e.t,
                measured: e.descent_speed(),
                threshold: th.crash_impact_speed,
            });
        }
        let tilt = e.state.roll.abs().max(e.state.pitch.abs());
        if e.altitude() < th.crash_altitude && tilt > th.crash_attitude_deg {
            return Some(Evidence {
                detector: Detector::Crash,
                t_start: e.t,
                t_end: e.t,
                measured: tilt,
                threshold: th.crash_attitude_deg,
            });
        }
    }
    None
}

fn altitude_error(e: &TraceEntry) -> f64 {
    (e.target_altitude() - e.altitude()).abs()
}

fn attitude_error(e: &TraceEntry) -> f64 {
    (e.reference.roll - e.state.roll).abs() + (e.reference.pitch - e.state.pitch).abs()
}

/// All four pre-clamp motor commands at or above full throttle for
/// `thrust_loss_duration` seconds while the tracking error grows.
pub fn detect_thrust_loss(trace: &FlightTrace, th: &Thresholds) -> Option<Evidence> {
    let e = &trace.entries;
    let saturated = |x: &TraceEntry| x.motor_raw.iter().all(|&m| m >= 1.0);
    let mut i = 0;
    while i < e.len() {
        if !saturated(&e[i]) {
            i += 1;
            continue;
        }
        let mut j = i;
        while j + 1 < e.len() && saturated(&e[j + 1]) {
            j += 1;
            if e[j].t - e[i].t + TIME_EPS >= th.thrust_loss_duration
                && (altitude_error(&e[j]) > altitude_error(&e[i]) || attitude_error(&e[j]) > attitude_error(&e[i]))
            {
                return Some(Evidence {
                    detector: Detector::ThrustLoss,
                    t_start: e[i].t,
                    t_end: e[j].t,
                    measured: e[j].t - e[i].t,
                    threshold: th.thrust_loss_duration,
                });
            }
        }
        i = j + 1;
    }
    None
}

/// One parameter sanity rule; either bound may be absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrearmRule {
    pub parameter: String,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub rule_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrearmResult {
    pub accepted: bool,
    /// (parameter name, rule id)
    pub reasons: Vec<(String, String)>,
}

impl PrearmResult {
    pub fn accept() -> Self {
        Self {
            accepted: true,
            reasons: Vec::new(),
        }
    }
}

pub const BUILTIN_PREARM_CSV: &str = "\
parameter,min,max,rule_id
ATC_ANG_RLL_P,0.5,,ANG_RLL_P_FLOOR
ATC_ANG_PIT_P,0.5,,ANG_PIT_P_FLOOR
ATC_ANG_YAW_P,0.5,,ANG_YAW_P_FLOOR
ATC_RAT_RLL_P,0.02,,RAT_RLL_P_FLOOR
ATC_RAT_PIT_P,0.02,,RAT_PIT_P_FLOOR
ATC_RAT_YAW_P,0.02,,RAT_YAW_P_FLOOR
";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrearmRules {
    pub rules: Vec<PrearmRule>,
}

impl PrearmRules {
    pub fn builtin() -> Self {
        Self::from_csv_reader(BUILTIN_PREARM_CSV.as_bytes(), "<builtin>").expect("built-in rules are valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_reader(file, &path.display().to_string())
    }

    pub fn from_csv_reader(reader: impl Read, origin: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut rules = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let row = i + 2;
            let err = |message: String| Error::Parse {
                path: origin.to_string(),
                row,
                message,
            };
            let rec = rec.map_err(|e| err(e.to_string()))?;
            if rec.len() != 4 {
                return Err(err(format!("expected 4 fields, got {}", rec.len())));
            }
            let bound = |s: &str| -> Result<Option<f64>> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    s.parse().map(Some).map_err(|e| err(format!("`{s}`: {e}")))
                }
            };
            rules.push(PrearmRule {
                parameter: rec[0].to_string(),
                min: bound(&rec[1])?,
                max: bound(&rec[2])?,
                rule_id: rec[3].to_string(),
            });
        }
        Ok(Self { rules })
    }

    /// Rules naming parameters the table lacks are ignored.
    pub fn check(&self, table: &ParameterTable, config: &Configuration) -> PrearmResult {
        let mut reasons = Vec::new();
        for rule in &self.rules {
            let Some(idx) = table.index_of(&rule.parameter) else {
                continue;
            };
            let v = config.values()[idx];
            let low = rule.min.is_some_and(|m| v < m);
            let high = rule.max.is_some_and(|m| v > m);
            if low || high {
                reasons.push((rule.parameter.clone(), rule.rule_id.clone()));
            }
        }
        PrearmResult {
            accepted: reasons.is_empty(),
            reasons,
        }
    }
}

pub fn prearm_check(table: &ParameterTable, config: &Configuration, rules: &PrearmRules) -> PrearmResult {
    rules.check(table, config)
}

/// Runs every detector; the first hit in Crash > ThrustLoss > Deviation >
/// Freeze order decides the label. A rejected configuration that was
/// injected in flight and then misbehaves is labelled Tackling instead.
pub fn classify(trace: &FlightTrace, prearm: &PrearmResult, injected: bool, th: &Thresholds) -> Verdict {
    let fired = first_firing(trace, th);
    match fired {
        None => Verdict {
            label: VerdictLabel::Correct,
            evidence: None,
        },
        Some((label, evidence)) => {
            let label = if !prearm.accepted && injected {
                VerdictLabel::Tackling
            } else {
                label
            };
            Verdict {
                label,
                evidence: Some(evidence),
            }
        }
    }
}

fn first_firing(trace: &FlightTrace, th: &Thresholds) -> Option<(VerdictLabel, Evidence)> {
    if let crate::simkernel::Termination::Diverged { last_finite_time } = trace.termination {
        return Some((
            VerdictLabel::Crash,
            Evidence {
                detector: Detector::Diverged,
                t_start: last_finite_time,
                t_end: last_finite_time,
                measured: 0.0,
                threshold: 0.0,
            },
        ));
    }
    detect_crash(trace, th)
        .map(|e| (VerdictLabel::Crash, e))
        .or_else(|| detect_thrust_loss(trace, th).map(|e| (VerdictLabel::ThrustLoss, e)))
        .or_else(|| detect_deviation(trace, th).map(|e| (VerdictLabel::Deviation, e)))
        .or_else(|| detect_freeze(trace, th).map(|e| (VerdictLabel::Freeze, e)))
}

pub mod fixtures;

#[cfg(test)]
mod tests;
