//! Quadrotor plant, cascaded controller and waypoint navigator.

pub mod controller;
pub mod mission;
pub mod plant;
pub mod types;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

pub use controller::{ControlOutput, ControllerMemory, FlightParams, Setpoint};
pub use mission::Mission;
pub use plant::{PlantState, SensorNoise};
pub use types::{Event, EventTag, FlightTrace, Leg, Phase, SensorUnit, StateUnit, Termination, TraceEntry};

use crate::error::{Error, Result};
use crate::paramspec::{Configuration, ParameterTable};
use crate::rng;

pub const DEFAULT_DT: f64 = 0.0025;
pub const DEFAULT_LOG_DT: f64 = 0.04;
pub const DEFAULT_DURATION_CAP: f64 = 300.0;
pub const MAX_DT: f64 = 0.05;
/// Descent rate cap for the landing leg, m/s.
pub const LAND_SPEED: f64 = 0.5;
/// Carrot acceleration on purely vertical legs, m/s^2.
pub const VERTICAL_ACCEL: f64 = 1.0;
/// Share of the waypoint acceleration the carrot may use along track; the
/// rest is left to the position controller for corrections.
pub const CARROT_ACCEL_SHARE: f64 = 0.5;
/// The landing target sits this far below ground so touchdown is reached.
const LAND_OVERSHOOT: f64 = 1.0;
const LEASH_MIN: f64 = 2.0;
const AIRBORNE_ALTITUDE: f64 = 0.3;
/// Ground contact faster than this is an impact.
pub const IMPACT_SPEED: f64 = 2.0;
const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub seed: u64,
    pub dt: f64,
    pub log_dt: f64,
    pub duration_cap: f64,
    pub noise: SensorNoise,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            dt: DEFAULT_DT,
            log_dt: DEFAULT_LOG_DT,
            duration_cap: DEFAULT_DURATION_CAP,
            noise: SensorNoise::default(),
        }
    }
}

impl SimOptions {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    fn log_every(&self) -> usize {
        ((self.log_dt / self.dt).round() as usize).max(1)
    }
}

/// Mid-flight configuration swap.
#[derive(Debug, Clone, PartialEq)]
pub struct Injection {
    pub time: f64,
    pub config: Configuration,
}

fn check_dt(dt: f64) -> Result<()> {
    if !(dt > 0.0 && dt <= MAX_DT) {
        return Err(Error::Precondition(format!("dt must lie in (0, {MAX_DT}], got {dt}")));
    }
    Ok(())
}

/// One controller update followed by one plant integration step, using the
/// noiseless body rates as the gyro measurement.
///
/// Returns the new plant state, the updated controller memory and the
/// clamped actuator commands.
pub fn step(
    plant: &PlantState,
    memory: &ControllerMemory,
    params: &FlightParams,
    setpoint: &Setpoint,
    dt: f64,
) -> Result<(PlantState, ControllerMemory, [f64; 4])> {
    check_dt(dt)?;
    let mut next = plant.clone();
    let mut mem = memory.clone();
    let out = mem.update(plant, &plant.body_rates, setpoint, params, dt);
    next.integrate(&out.motor_raw, dt);
    if !next.is_finite() {
        return Err(Error::SimulationDiverged { last_finite_time: 0.0 });
    }
    let commands = next.motor_commands;
    Ok((next, mem, commands))
}

/// Moves a target point ("carrot") along straight legs with a trapezoidal
/// speed profile, stopping at each waypoint.
struct Navigator {
    legs: Vec<Leg>,
    phases: Vec<Phase>,
    idx: usize,
    progress: f64,
    speed: f64,
    acceptance_radius: f64,
}

impl Navigator {
    fn new(mission: &Mission) -> Self {
        let mut legs = Vec::new();
        let mut phases = Vec::new();
        let home = [0.0, 0.0, 0.0];
        let mut cursor = [0.0, 0.0, -mission.takeoff_altitude];
        legs.push(Leg {
            start: home,
            end: cursor,
        });
        phases.push(Phase::Takeoff);
        for (i, wp) in mission.waypoints.iter().enumerate() {
            let end = [wp[0], wp[1], -wp[2]];
            legs.push(Leg { start: cursor, end });
            phases.push(Phase::Waypoint(i));
            cursor = end;
        }
        if mission.land {
            legs.push(Leg {
                start: cursor,
                end: [cursor[0], cursor[1], LAND_OVERSHOOT],
            });
            phases.push(Phase::Land);
        }
        Self {
            legs,
            phases,
            idx: 0,
            progress: 0.0,
            speed: 0.0,
            acceptance_radius: mission.acceptance_radius,
        }
    }

    fn phase(&self) -> Phase {
        self.phases.get(self.idx).copied().unwrap_or(Phase::Hover)
    }

    fn finished(&self) -> bool {
        self.idx >= self.legs.len()
    }

    fn hold_point(&self) -> Vector3<f64> {
        let leg = self.legs[self.idx.min(self.legs.len() - 1)];
        Vector3::from(leg.end)
    }

    fn leg_limits(&self, leg: &Leg, params: &FlightParams) -> (f64, f64) {
        let d = Vector3::from(leg.end) - Vector3::from(leg.start);
        let len = d.norm().max(1e-9);
        let horiz = d.xy().norm() / len;
        let vert = d.z / len;
        let mut vmax = f64::INFINITY;
        if horiz > 1e-9 {
            vmax = vmax.min(params.wp_speed / horiz);
        }
        if vert < -1e-9 {
            vmax = vmax.min(params.speed_up / -vert);
        } else if vert > 1e-9 {
            let down = if self.phase() == Phase::Land {
                params.speed_dn.min(LAND_SPEED)
            } else {
                params.speed_dn
            };
            vmax = vmax.min(down / vert);
        }
        let accel = if horiz > 0.5 {
            CARROT_ACCEL_SHARE * params.wp_accel
        } else {
            VERTICAL_ACCEL
        };
        (vmax, accel)
    }

    /// Advances the carrot and returns the setpoint plus any waypoint event.
    fn update(&mut self, position: &Vector3<f64>, params: &FlightParams, dt: f64) -> (Setpoint, Option<EventTag>) {
        if self.finished() {
            return (Setpoint::hold(self.hold_point()), None);
        }
        let leg = self.legs[self.idx];
        let start = Vector3::from(leg.start);
        let delta = Vector3::from(leg.end) - start;
        let len = delta.norm();
        let dir = if len > 0.0 { delta / len } else { Vector3::zeros() };
        let (vmax, accel) = self.leg_limits(&leg, params);

        let carrot = start + dir * self.progress;
        let leash = LEASH_MIN.max(params.wp_speed / params.pos_xy_p.max(1e-3));
        if (carrot - position).norm() > leash {
            self.speed = (self.speed - accel * dt).max(0.0);
        } else {
            let stop = (2.0 * accel * (len - self.progress).max(0.0)).sqrt();
            self.speed = (self.speed + accel * dt).min(vmax).min(stop);
        }
        self.progress = (self.progress + self.speed * dt).min(len);
        let carrot = start + dir * self.progress;
        let setpoint = Setpoint {
            position: carrot,
            velocity: dir * self.speed,
            yaw: 0.0,
        };

        let mut event = None;
        let at_end = self.progress >= len - 1e-9;
        let phase = self.phase();
        if at_end && phase != Phase::Land && (Vector3::from(leg.end) - position).norm() < self.acceptance_radius {
            event = Some(match phase {
                Phase::Takeoff => EventTag::TakeoffComplete,
                Phase::Waypoint(i) => EventTag::WaypointReached(i),
                _ => unreachable!("only takeoff and waypoint legs complete by radius"),
            });
            self.idx += 1;
            self.progress = 0.0;
            self.speed = 0.0;
        }
        (setpoint, event)
    }
}

/// Flies `mission` with `config` from a standstill on the ground.
///
/// Divergence is not an error: the partial trace is returned with a
/// [`Termination::Diverged`] marker and a matching event.
pub fn run_mission(
    table: &ParameterTable,
    config: &Configuration,
    mission: &Mission,
    injection: Option<&Injection>,
    opts: &SimOptions,
) -> Result<FlightTrace> {
    check_dt(opts.dt)?;
    table.check_dim(config)?;
    if !(opts.duration_cap > 0.0) {
        return Err(Error::Precondition("duration cap must be positive".into()));
    }
    let mut params = FlightParams::from_config(table, config);
    if let Some(inj) = injection {
        table.check_dim(&inj.config)?;
        let takeoff_estimate = mission.takeoff_altitude / params.speed_up.max(1e-3);
        if !(inj.time > takeoff_estimate) {
            return Err(Error::Precondition(format!(
                "injection at t = {} s precedes estimated takeoff completion ({takeoff_estimate:.1} s)",
                inj.time
            )));
        }
    }

    let mut rng = rng::stream(opts.seed, &[0x51u64]);
    let mut nav = Navigator::new(mission);
    let mut plant = PlantState::default();
    let mut memory = ControllerMemory::default();
    let log_every = opts.log_every();
    let max_steps = (opts.duration_cap / opts.dt).round() as usize;

    let mut trace = FlightTrace {
        entries: Vec::with_capacity(max_steps / log_every + 2),
        config: config.clone(),
        injected: injection.map(|i| (i.time, i.config.clone())),
        events: Vec::new(),
        legs: nav.legs.clone(),
        log_dt: opts.dt * log_every as f64,
        termination: Termination::DurationCap,
    };
    let mut injected = false;
    let mut airborne = false;
    // set after touchdown/impact: log one more tick with the plant frozen, then stop
    let mut stop_at_next_tick: Option<Termination> = None;
    let mut last_finite = 0.0;

    for k in 0..=max_steps {
        let t = k as f64 * opts.dt;
        if let Some(inj) = injection {
            if !injected && t >= inj.time {
                params = FlightParams::from_config(table, &inj.config);
                injected = true;
                trace.events.push(Event {
                    t,
                    tag: EventTag::ConfigInjected,
                });
            }
        }

        let sensors = plant::read_sensors(&plant, &params.imu_z, opts.noise, &mut rng);
        let log_tick = k % log_every == 0;

        if let Some(term) = stop_at_next_tick {
            if log_tick {
                let phase = if nav.finished() { Phase::Ground } else { nav.phase() };
                let reference = plant.state_unit();
                trace.entries.push(snapshot(
                    t,
                    &plant,
                    sensors,
                    plant.motor_commands,
                    reference,
                    nav.hold_point(),
                    phase,
                    None,
                ));
                trace.termination = term;
                return Ok(trace);
            }
            continue;
        }

        let phase = if !airborne && nav.phase() == Phase::Takeoff && plant.altitude() < AIRBORNE_ALTITUDE {
            Phase::Ground
        } else {
            nav.phase()
        };
        let leg_index = (!nav.finished()).then_some(nav.idx);
        let (setpoint, nav_event) = nav.update(&plant.position, &params, opts.dt);
        if let Some(tag) = nav_event {
            trace.events.push(Event { t, tag });
        }

        let gyro = Vector3::new(sensors.gyro_x, sensors.gyro_y, sensors.gyro_z).map(f64::to_radians);
        let grounded = !airborne;
        if grounded {
            memory.reset_integrators();
        }
        let out = memory.update(&plant, &gyro, &setpoint, &params, opts.dt);

        if log_tick {
            trace.entries.push(snapshot(
                t,
                &plant,
                sensors,
                out.motor_raw,
                out.reference,
                setpoint.position,
                phase,
                leg_index,
            ));
        }

        if nav.finished() {
            trace.termination = Termination::Completed;
            return Ok(trace);
        }

        plant.integrate(&out.motor_raw, opts.dt);

        if !plant.is_finite() || plant.position.norm() > DIVERGENCE_LIMIT || plant.body_rates.norm() > DIVERGENCE_LIMIT
        {
            trace.events.push(Event {
                t,
                tag: EventTag::Diverged,
            });
            trace.termination = Termination::Diverged {
                last_finite_time: last_finite,
            };
            return Ok(trace);
        }
        last_finite = t + opts.dt;

        if plant.altitude() > AIRBORNE_ALTITUDE {
            airborne = true;
        }
        if plant.altitude() <= 0.0 {
            let descent = plant.velocity.z;
            if !airborne {
                // resting on the ground before liftoff
                plant.position.z = 0.0;
                plant.velocity = Vector3::zeros();
                plant.body_rates = Vector3::zeros();
                plant.attitude = nalgebra::UnitQuaternion::identity();
            } else if nav.phase() == Phase::Land && descent <= IMPACT_SPEED {
                trace.events.push(Event {
                    t: t + opts.dt,
                    tag: EventTag::Touchdown,
                });
                plant.position.z = 0.0;
                stop_at_next_tick = Some(Termination::Completed);
                nav.idx = nav.legs.len();
            } else {
                trace.events.push(Event {
                    t: t + opts.dt,
                    tag: EventTag::GroundImpact,
                });
                plant.position.z = 0.0;
                stop_at_next_tick = Some(Termination::GroundImpact);
            }
        }
    }

    trace.events.push(Event {
        t: max_steps as f64 * opts.dt,
        tag: EventTag::DurationCap,
    });
    trace.termination = Termination::DurationCap;
    Ok(trace)
}

#[allow(clippy::too_many_arguments)]
fn snapshot(
    t: f64,
    plant: &PlantState,
    sensors: SensorUnit,
    motor_raw: [f64; 4],
    reference: StateUnit,
    target: Vector3<f64>,
    phase: Phase,
    leg: Option<usize>,
) -> TraceEntry {
    TraceEntry {
        t,
        state: plant.state_unit(),
        sensors,
        position: plant.position.into(),
        velocity: plant.velocity.into(),
        motor_raw,
        motor: motor_raw.map(|m| m.clamp(0.0, 1.0)),
        reference,
        target_position: target.into(),
        phase,
        leg,
    }
}

#[cfg(test)]
mod tests;
