//! Hand-built flight traces, each shaped to trip a specific detector (or none).

use super::{Detector, PrearmResult, VerdictLabel};
use crate::paramspec::Configuration;
use crate::simkernel::{FlightTrace, Leg, Phase, SensorUnit, StateUnit, Termination, TraceEntry};

pub const LOG_DT: f64 = 0.04;
const CRUISE_ALT: f64 = 10.0;

/// Kinematic sample produced by a fixture script at time `t`.
#[derive(Debug, Clone, Copy)]
pub struct Sample {
    /// north, east, altitude (up)
    pub position: [f64; 3],
    pub velocity: [f64; 3],
    pub roll: f64,
    pub pitch: f64,
    pub motor_raw: [f64; 4],
    pub reference: StateUnit,
    pub target_altitude: f64,
    pub phase: Phase,
}

impl Sample {
    pub fn cruise(north: f64, east: f64) -> Self {
        Self {
            position: [north, east, CRUISE_ALT],
            velocity: [0.0; 3],
            roll: 0.0,
            pitch: 0.0,
            motor_raw: [0.5; 4],
            reference: StateUnit::default(),
            target_altitude: CRUISE_ALT,
            phase: Phase::Waypoint(0),
        }
    }
}

/// Builds a trace over `[0, duration]` along a single 1 km leg heading north
/// at cruise altitude.
pub fn scripted_trace(duration: f64, script: impl Fn(f64) -> Sample) -> FlightTrace {
    let n = (duration / LOG_DT).round() as usize;
    let entries = (0..=n)
        .map(|k| {
            let t = k as f64 * LOG_DT;
            let s = script(t);
            TraceEntry {
                t,
                state: StateUnit {
                    roll: s.roll,
                    pitch: s.pitch,
                    ..StateUnit::default()
                },
                sensors: SensorUnit::default(),
                position: [s.position[0], s.position[1], -s.position[2]],
                velocity: s.velocity,
                motor_raw: s.motor_raw,
                motor: s.motor_raw.map(|m| m.clamp(0.0, 1.0)),
                reference: s.reference,
                target_position: [s.position[0], 0.0, -s.target_altitude],
                phase: s.phase,
                leg: Some(0),
            }
        })
        .collect();
    FlightTrace {
        entries,
        config: Configuration(Vec::new()),
        injected: None,
        events: Vec::new(),
        legs: vec![Leg {
            start: [0.0, 0.0, -CRUISE_ALT],
            end: [1000.0, 0.0, -CRUISE_ALT],
        }],
        log_dt: LOG_DT,
        termination: Termination::Completed,
    }
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub name: &'static str,
    pub trace: FlightTrace,
    pub prearm: PrearmResult,
    pub injected: bool,
    pub expected: VerdictLabel,
    /// Exactly the detectors that must fire.
    pub fires: Vec<Detector>,
}

fn rejected() -> PrearmResult {
    PrearmResult {
        accepted: false,
        reasons: vec![("ATC_ANG_RLL_P".into(), "ANG_RLL_P_FLOOR".into())],
    }
}

fn fixture(name: &'static str, trace: FlightTrace, expected: VerdictLabel, fires: Vec<Detector>) -> Fixture {
    Fixture {
        name,
        trace,
        prearm: PrearmResult::accept(),
        injected: false,
        expected,
        fires,
    }
}

/// Offset across the leg that ramps in at `t0` and out at `t1`.
fn offset(t: f64, t0: f64, t1: f64, d: f64) -> f64 {
    if t >= t0 && t < t1 {
        d
    } else {
        0.1
    }
}

pub fn suite() -> Vec<Fixture> {
    use Detector as D;
    use VerdictLabel as V;

    let clean = scripted_trace(60.0, |t| Sample::cruise(2.0 * t, 0.0));

    let hover_only = scripted_trace(60.0, |_| Sample {
        phase: Phase::Hover,
        ..Sample::cruise(5.0, 0.0)
    });

    // creeps 0.3 m over 20 s, then resumes
    let freeze = scripted_trace(60.0, |t| {
        let north = if t < 20.0 {
            2.0 * t
        } else if t < 40.0 {
            40.0 + 0.015 * (t - 20.0)
        } else {
            40.3 + 2.0 * (t - 40.0)
        };
        Sample::cruise(north, 0.0)
    });

    // bobs back and forth over 1.2 m, so every 15 s window spans more than 0.5 m
    let jitter = scripted_trace(60.0, |t| {
        let north = if t < 20.0 {
            2.0 * t
        } else if t < 40.0 {
            40.0 + 1.2 * ((t - 20.0) * 0.5).sin().abs()
        } else {
            40.0 + 2.0 * (t - 40.0)
        };
        Sample::cruise(north, 0.0)
    });

    let deviation = scripted_trace(60.0, |t| Sample::cruise(2.0 * t, offset(t, 10.0, 30.0, 2.0)));

    // 14 samples at 2 m then back on track
    let near_deviation = scripted_trace(60.0, |t| Sample::cruise(2.0 * t, offset(t, 9.5, 23.5, 2.0)));

    let impact = scripted_trace(30.0, |t| {
        if t < 20.0 {
            Sample::cruise(2.0 * t, 0.0)
        } else {
            let alt = (CRUISE_ALT - 5.0 * (t - 20.0)).max(0.0);
            Sample {
                velocity: [0.0, 0.0, 5.0],
                ..Sample {
                    position: [40.0, 0.0, alt],
                    ..Sample::cruise(40.0, 0.0)
                }
            }
        }
    });
    let impact = FlightTrace {
        termination: Termination::GroundImpact,
        entries: impact.entries.into_iter().take_while(|e| e.t <= 22.0 + 1e-9).collect(),
        ..impact
    };

    let rollover = scripted_trace(30.0, |t| {
        let mut s = Sample::cruise(2.0 * t, 0.0);
        if t >= 20.0 {
            s.position[2] = 0.5;
            s.roll = 120.0;
        }
        s
    });

    let landing = scripted_trace(40.0, |t| {
        let alt = (CRUISE_ALT - 0.3 * t).max(0.0);
        Sample {
            position: [0.0, 0.0, alt],
            velocity: [0.0, 0.0, 0.3],
            target_altitude: alt - 0.2,
            phase: Phase::Land,
            ..Sample::cruise(0.0, 0.0)
        }
    });
    let landing = FlightTrace {
        legs: vec![Leg {
            start: [0.0, 0.0, -CRUISE_ALT],
            end: [0.0, 0.0, 1.0],
        }],
        ..landing
    };

    let saturated = |t: f64, from: f64, to: f64| t >= from && t < to;

    // 3 s of full saturation while altitude sags away from the target
    let thrust_loss = scripted_trace(40.0, |t| {
        let mut s = Sample::cruise(2.0 * t, 0.0);
        if saturated(t, 20.0, 23.0) {
            s.motor_raw = [1.2; 4];
            s.position[2] = CRUISE_ALT - 0.5 * (t - 20.0);
        }
        s
    });

    let blip = scripted_trace(40.0, |t| {
        let mut s = Sample::cruise(2.0 * t, 0.0);
        if saturated(t, 20.0, 20.2) {
            s.motor_raw = [1.1; 4];
        }
        s
    });

    // saturated for 3 s but recovering toward the target altitude
    let recovering = scripted_trace(40.0, |t| {
        let mut s = Sample::cruise(2.0 * t, 0.0);
        if saturated(t, 20.0, 23.0) {
            s.motor_raw = [1.1; 4];
            s.position[2] = CRUISE_ALT - 1.5 + 0.4 * (t - 20.0);
        }
        s
    });

    let crash_and_deviation = scripted_trace(40.0, |t| {
        let mut s = Sample::cruise(2.0 * t, offset(t, 5.0, 30.0, 3.0));
        if t >= 30.0 {
            s.position[2] = 0.4;
            s.roll = 150.0;
        }
        s
    });

    let mut tackling = fixture(
        "injected rejected config deviates",
        deviation.clone(),
        V::Tackling,
        vec![D::Deviation],
    );
    tackling.prearm = rejected();
    tackling.injected = true;

    let mut rejected_clean = fixture(
        "injected rejected config stays clean",
        clean.clone(),
        V::Correct,
        vec![],
    );
    rejected_clean.prearm = rejected();
    rejected_clean.injected = true;

    vec![
        fixture("clean cruise", clean, V::Correct, vec![]),
        fixture("hover phase only", hover_only, V::Correct, vec![]),
        fixture("freeze en route", freeze, V::Freeze, vec![D::Freeze]),
        fixture("jitter above freeze distance", jitter, V::Correct, vec![]),
        fixture("sustained deviation", deviation, V::Deviation, vec![D::Deviation]),
        fixture("deviation one sample short", near_deviation, V::Correct, vec![]),
        fixture("ground impact", impact, V::Crash, vec![D::Crash]),
        fixture("rollover near ground", rollover, V::Crash, vec![D::Crash]),
        fixture("nominal landing", landing, V::Correct, vec![]),
        fixture("thrust loss", thrust_loss, V::ThrustLoss, vec![D::ThrustLoss]),
        fixture("momentary saturation", blip, V::Correct, vec![]),
        fixture("saturation while recovering", recovering, V::Correct, vec![]),
        fixture(
            "crash outranks deviation",
            crash_and_deviation,
            V::Crash,
            vec![D::Crash, D::Deviation],
        ),
        tackling,
        rejected_clean,
    ]
}
