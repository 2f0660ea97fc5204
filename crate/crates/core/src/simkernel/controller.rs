//! Cascaded position/velocity/attitude/rate controller.
//!
//! position P -> velocity setpoint (capped at the waypoint speeds)
//! velocity P -> acceleration (capped at the waypoint acceleration)
//! acceleration -> lean angles (capped at the maximum lean angle)
//! angle P -> body-rate setpoint
//! rate PID -> roll/pitch/yaw outputs -> motor mix

use std::sync::OnceLock;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::plant::{self, PlantState, GRAVITY, HOVER_THROTTLE};
use super::types::StateUnit;
use crate::paramspec::{Configuration, ParameterTable};

/// Fixed vertical-velocity gain (1/s); not part of the searched parameter set.
pub const VEL_Z_P: f64 = 5.0;
pub const MAX_VERTICAL_ACCEL: f64 = 0.5 * GRAVITY;
pub const MAX_BODY_RATE: f64 = 6.0 * std::f64::consts::PI;
pub const RATE_I_MAX: f64 = 0.5;
pub const RATE_D_FILTER_HZ: f64 = 20.0;
/// Low-pass cutoff applied to the gyro before the rate loop.
pub const GYRO_FILTER_HZ: f64 = 20.0;
/// Lower bound on the tilt factor used for throttle compensation.
pub const MIN_TILT_FACTOR: f64 = 0.2;

/// Configuration converted to SI units, with fallbacks for parameters the
/// active table does not define.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlightParams {
    pub pos_xy_p: f64,
    pub vel_xy_p: f64,
    pub pos_z_p: f64,
    /// roll, pitch, yaw
    pub ang_p: [f64; 3],
    pub rate_p: [f64; 3],
    pub rate_i: [f64; 3],
    pub rate_d: [f64; 3],
    /// m/s
    pub wp_speed: f64,
    pub speed_up: f64,
    pub speed_dn: f64,
    /// m/s^2
    pub wp_accel: f64,
    /// radians
    pub angle_max: f64,
    /// IMU z offsets, meters
    pub imu_z: [f64; 3],
}

fn builtin_table() -> &'static ParameterTable {
    static TABLE: OnceLock<ParameterTable> = OnceLock::new();
    TABLE.get_or_init(ParameterTable::builtin)
}

impl FlightParams {
    pub fn from_config(table: &ParameterTable, config: &Configuration) -> Self {
        let builtin = builtin_table();
        let v = |name: &str| {
            let fallback = builtin.get(name).map_or(0.0, |s| s.default);
            table.value_or(config, name, fallback)
        };
        Self {
            pos_xy_p: v("PSC_POSXY_P"),
            vel_xy_p: v("PSC_VELXY_P"),
            pos_z_p: v("PSC_POSZ_P"),
            ang_p: [v("ATC_ANG_RLL_P"), v("ATC_ANG_PIT_P"), v("ATC_ANG_YAW_P")],
            rate_p: [v("ATC_RAT_RLL_P"), v("ATC_RAT_PIT_P"), v("ATC_RAT_YAW_P")],
            rate_i: [v("ATC_RAT_RLL_I"), v("ATC_RAT_PIT_I"), v("ATC_RAT_YAW_I")],
            rate_d: [v("ATC_RAT_RLL_D"), v("ATC_RAT_PIT_D"), v("ATC_RAT_YAW_D")],
            wp_speed: v("WPNAV_SPEED") / 100.0,
            speed_up: v("WPNAV_SPEED_UP") / 100.0,
            speed_dn: v("WPNAV_SPEED_DN") / 100.0,
            wp_accel: v("WPNAV_ACCEL") / 100.0,
            angle_max: (v("ANGLE_MAX") / 100.0).to_radians(),
            imu_z: [v("INS_POS1_Z"), v("INS_POS2_Z"), v("INS_POS3_Z")],
        }
    }

    pub fn defaults() -> Self {
        let t = builtin_table();
        Self::from_config(t, &t.default_configuration())
    }
}

/// Position/velocity target for the controller (NED).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Setpoint {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub yaw: f64,
}

impl Setpoint {
    pub fn hold(position: Vector3<f64>) -> Self {
        Self {
            position,
            velocity: Vector3::zeros(),
            yaw: 0.0,
        }
    }
}

/// Rate-loop integrator and derivative-filter state.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ControllerMemory {
    gyro_filtered: [f64; 3],
    integrator: [f64; 3],
    prev_error: [f64; 3],
    d_filtered: [f64; 3],
    primed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlOutput {
    /// Mixer output before clamping.
    pub motor_raw: [f64; 4],
    pub reference: StateUnit,
}

impl ControllerMemory {
    pub fn reset_integrators(&mut self) {
        self.integrator = [0.0; 3];
    }

    /// Runs the full cascade once. `gyro` is the measured body rate in rad/s.
    pub fn update(
        &mut self,
        plant: &PlantState,
        gyro: &Vector3<f64>,
        setpoint: &Setpoint,
        params: &FlightParams,
        dt: f64,
    ) -> ControlOutput {
        let (roll, pitch, yaw) = plant.euler();

        // horizontal position and velocity loops
        let pos_err = (setpoint.position - plant.position).xy();
        let mut vel_des = setpoint.velocity.xy() + params.pos_xy_p * pos_err;
        cap_norm(&mut vel_des, params.wp_speed);
        let mut acc_des = params.vel_xy_p * (vel_des - plant.velocity.xy());
        cap_norm(&mut acc_des, params.wp_accel);

        // lean angles in the heading frame
        let (sy, cy) = yaw.sin_cos();
        let a_fwd = cy * acc_des.x + sy * acc_des.y;
        let a_right = -sy * acc_des.x + cy * acc_des.y;
        let mut pitch_des = (-a_fwd / GRAVITY).atan();
        let mut roll_des = (a_right * pitch_des.cos() / GRAVITY).atan();
        let lean = roll_des.hypot(pitch_des);
        if lean > params.angle_max {
            let k = params.angle_max / lean;
            roll_des *= k;
            pitch_des *= k;
        }

        // vertical loop (climb positive up)
        let alt_err = plant.position.z - setpoint.position.z;
        let climb_ff = -setpoint.velocity.z;
        let climb_des = (climb_ff + params.pos_z_p * alt_err).clamp(-params.speed_dn, params.speed_up);
        let climb = -plant.velocity.z;
        let accel_up = (VEL_Z_P * (climb_des - climb)).clamp(-MAX_VERTICAL_ACCEL, MAX_VERTICAL_ACCEL);
        let tilt = (roll.cos() * pitch.cos()).max(MIN_TILT_FACTOR);
        let throttle = HOVER_THROTTLE * (1.0 + accel_up / GRAVITY) / tilt;

        // attitude loop
        let yaw_des = setpoint.yaw;
        let angle_err = [roll_des - roll, pitch_des - pitch, plant::wrap_rad(yaw_des - yaw)];
        let mut rate_des = [0.0; 3];
        for i in 0..3 {
            rate_des[i] = (params.ang_p[i] * angle_err[i]).clamp(-MAX_BODY_RATE, MAX_BODY_RATE);
        }

        // rate loop
        let lowpass = |hz: f64| dt / (dt + 1.0 / (2.0 * std::f64::consts::PI * hz));
        let (k_gyro, k_d) = (lowpass(GYRO_FILTER_HZ), lowpass(RATE_D_FILTER_HZ));
        let mut out = [0.0; 3];
        for i in 0..3 {
            if self.primed {
                self.gyro_filtered[i] += (gyro[i] - self.gyro_filtered[i]) * k_gyro;
            } else {
                self.gyro_filtered[i] = gyro[i];
            }
            let e = rate_des[i] - self.gyro_filtered[i];
            self.integrator[i] = (self.integrator[i] + params.rate_i[i] * e * dt).clamp(-RATE_I_MAX, RATE_I_MAX);
            let d_raw = if self.primed {
                (e - self.prev_error[i]) / dt
            } else {
                0.0
            };
            self.d_filtered[i] += (d_raw - self.d_filtered[i]) * k_d;
            self.prev_error[i] = e;
            out[i] =
                (params.rate_p[i] * e + self.integrator[i] + params.rate_d[i] * self.d_filtered[i]).clamp(-1.0, 1.0);
        }
        self.primed = true;

        ControlOutput {
            motor_raw: plant::mix(throttle, out[0], out[1], out[2]),
            reference: StateUnit {
                roll: roll_des.to_degrees(),
                pitch: pitch_des.to_degrees(),
                yaw: plant::wrap_deg(yaw_des.to_degrees()),
                roll_rate: rate_des[0].to_degrees(),
                pitch_rate: rate_des[1].to_degrees(),
                yaw_rate: rate_des[2].to_degrees(),
            },
        }
    }
}

fn cap_norm(v: &mut nalgebra::Vector2<f64>, max: f64) {
    let n = v.norm();
    if n > max && n > 0.0 {
        *v *= max / n;
    }
}
