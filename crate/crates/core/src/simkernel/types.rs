use serde::{Deserialize, Serialize};

use crate::paramspec::Configuration;

/// Attitude (degrees) and body rates (degrees/second).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StateUnit {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
    pub roll_rate: f64,
    pub pitch_rate: f64,
    pub yaw_rate: f64,
}

/// Gyro (degrees/second) and accelerometer (m/s^2) in the body frame.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SensorUnit {
    pub gyro_x: f64,
    pub gyro_y: f64,
    pub gyro_z: f64,
    pub accel_x: f64,
    pub accel_y: f64,
    pub accel_z: f64,
}

impl StateUnit {
    pub const LEN: usize = 6;

    pub fn to_array(&self) -> [f64; 6] {
        [
            self.roll,
            self.pitch,
            self.yaw,
            self.roll_rate,
            self.pitch_rate,
            self.yaw_rate,
        ]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self {
            roll: v[0],
            pitch: v[1],
            yaw: v[2],
            roll_rate: v[3],
            pitch_rate: v[4],
            yaw_rate: v[5],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

impl SensorUnit {
    pub const LEN: usize = 6;

    pub fn to_array(&self) -> [f64; 6] {
        [
            self.gyro_x,
            self.gyro_y,
            self.gyro_z,
            self.accel_x,
            self.accel_y,
            self.accel_z,
        ]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self {
            gyro_x: v[0],
            gyro_y: v[1],
            gyro_z: v[2],
            accel_x: v[3],
            accel_y: v[4],
            accel_z: v[5],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// Flight phase reported by the navigator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "phase", content = "leg")]
pub enum Phase {
    Ground,
    Takeoff,
    Waypoint(usize),
    Land,
    Hover,
}

impl Phase {
    /// Phases in which the vehicle is commanded to travel horizontally.
    pub fn commands_movement(self) -> bool {
        matches!(self, Phase::Waypoint(_))
    }
}

/// Straight reference path flown during one navigator phase (NED, meters).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Leg {
    pub start: [f64; 3],
    pub end: [f64; 3],
}

impl Leg {
    /// Distance from `p` to the closed segment.
    pub fn cross_track(&self, p: &[f64; 3]) -> f64 {
        let d: Vec<f64> = (0..3).map(|i| self.end[i] - self.start[i]).collect();
        let w: Vec<f64> = (0..3).map(|i| p[i] - self.start[i]).collect();
        let len2: f64 = d.iter().map(|x| x * x).sum();
        let s = if len2 > 0.0 {
            (d.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        (0..3).map(|i| (w[i] - s * d[i]).powi(2)).sum::<f64>().sqrt()
    }
}

/// Snapshot at one log tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub t: f64,
    pub state: StateUnit,
    pub sensors: SensorUnit,
    /// NED position and velocity, meters and m/s.
    pub position: [f64; 3],
    pub velocity: [f64; 3],
    /// Mixer output before and after clamping to [0, 1].
    pub motor_raw: [f64; 4],
    pub motor: [f64; 4],
    pub reference: StateUnit,
    pub target_position: [f64; 3],
    pub phase: Phase,
    /// Index into [`FlightTrace::legs`] of the reference path being flown.
    pub leg: Option<usize>,
}

impl TraceEntry {
    pub fn altitude(&self) -> f64 {
        -self.position[2]
    }

    pub fn target_altitude(&self) -> f64 {
        -self.target_position[2]
    }

    /// Downward speed, m/s.
    pub fn descent_speed(&self) -> f64 {
        self.velocity[2]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventTag {
    TakeoffComplete,
    WaypointReached(usize),
    ConfigInjected,
    GroundImpact,
    Touchdown,
    Diverged,
    DurationCap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    pub tag: EventTag,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Completed,
    GroundImpact,
    DurationCap,
    Diverged { last_finite_time: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlightTrace {
    pub entries: Vec<TraceEntry>,
    pub config: Configuration,
    /// Configuration swapped in mid-flight, with its activation time.
    pub injected: Option<(f64, Configuration)>,
    pub events: Vec<Event>,
    pub legs: Vec<Leg>,
    /// Spacing of `entries`, seconds.
    pub log_dt: f64,
    pub termination: Termination,
}

impl FlightTrace {
    pub fn has_event(&self, pred: impl Fn(&EventTag) -> bool) -> bool {
        self.events.iter().any(|e| pred(&e.tag))
    }

    pub fn diverged(&self) -> bool {
        matches!(self.termination, Termination::Diverged { .. })
    }

    pub fn duration(&self) -> f64 {
        self.entries.last().map_or(0.0, |e| e.t)
    }
}
