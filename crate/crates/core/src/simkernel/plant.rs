//! X-configuration quadrotor rigid body, NED world frame, FRD body frame.

use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::types::{SensorUnit, StateUnit};

pub const GRAVITY: f64 = 9.81;
pub const MASS: f64 = 1.5;
pub const ARM_LENGTH: f64 = 0.25;
pub const INERTIA: [f64; 3] = [0.02, 0.02, 0.04];
pub const MOTOR_TIME_CONSTANT: f64 = 0.05;
/// Per-motor thrust at full command; hover sits at half throttle.
pub const MAX_MOTOR_THRUST: f64 = 2.0 * MASS * GRAVITY / 4.0;
/// Reaction torque per newton of rotor thrust.
pub const YAW_TORQUE_COEFF: f64 = 0.05;
pub const LINEAR_DRAG: f64 = 0.15;
pub const HOVER_THROTTLE: f64 = MASS * GRAVITY / (4.0 * MAX_MOTOR_THRUST);
pub const ACCEL_SATURATION: f64 = 4.0 * GRAVITY;

pub const GYRO_NOISE_DEG: f64 = 0.05;
pub const ACCEL_NOISE: f64 = 0.05;

/// Motor geometry: (x, y) in body frame and yaw reaction sign.
/// Order: front-right, rear-left, front-left, rear-right.
const MOTOR_LAYOUT: [(f64, f64, f64); 4] = [(1.0, 1.0, 1.0), (-1.0, -1.0, 1.0), (1.0, -1.0, -1.0), (-1.0, 1.0, -1.0)];

/// Mixer factors per motor for (roll, pitch, yaw) commands.
pub fn mix(throttle: f64, roll: f64, pitch: f64, yaw: f64) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (o, &(x, y, s)) in out.iter_mut().zip(&MOTOR_LAYOUT) {
        // positive roll torque lifts the left (y < 0) side
        *o = throttle - y * roll + x * pitch + s * yaw;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub attitude: UnitQuaternion<f64>,
    /// Body rates, rad/s.
    pub body_rates: Vector3<f64>,
    /// Last applied motor commands after clamping to [0, 1].
    pub motor_commands: [f64; 4],
    /// Realized rotor thrust fractions (first-order lag of the commands).
    pub motor_output: [f64; 4],
    /// World-frame acceleration and body angular acceleration of the last step.
    pub last_accel: Vector3<f64>,
    pub last_angular_accel: Vector3<f64>,
}

impl Default for PlantState {
    fn default() -> Self {
        Self::at_rest(Vector3::zeros())
    }
}

impl PlantState {
    pub fn at_rest(position: Vector3<f64>) -> Self {
        Self {
            position,
            velocity: Vector3::zeros(),
            attitude: UnitQuaternion::identity(),
            body_rates: Vector3::zeros(),
            motor_commands: [0.0; 4],
            motor_output: [0.0; 4],
            last_accel: Vector3::zeros(),
            last_angular_accel: Vector3::zeros(),
        }
    }

    /// Airborne at `position` with rotors already spun to hover.
    pub fn hovering(position: Vector3<f64>) -> Self {
        Self {
            motor_commands: [HOVER_THROTTLE; 4],
            motor_output: [HOVER_THROTTLE; 4],
            ..Self::at_rest(position)
        }
    }

    pub fn altitude(&self) -> f64 {
        -self.position.z
    }

    /// Roll, pitch, yaw (ZYX) in radians.
    pub fn euler(&self) -> (f64, f64, f64) {
        self.attitude.euler_angles()
    }

    pub fn state_unit(&self) -> StateUnit {
        let (r, p, y) = self.euler();
        StateUnit {
            roll: wrap_deg(r.to_degrees()),
            pitch: p.to_degrees(),
            yaw: wrap_deg(y.to_degrees()),
            roll_rate: self.body_rates.x.to_degrees(),
            pitch_rate: self.body_rates.y.to_degrees(),
            yaw_rate: self.body_rates.z.to_degrees(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.velocity.iter().all(|v| v.is_finite())
            && self.body_rates.iter().all(|v| v.is_finite())
            && self.attitude.coords.iter().all(|v| v.is_finite())
    }

    /// One semi-implicit Euler step with clamped `commands`.
    pub fn integrate(&mut self, commands: &[f64; 4], dt: f64) {
        let alpha = (dt / MOTOR_TIME_CONSTANT).min(1.0);
        for i in 0..4 {
            let c = commands[i].clamp(0.0, 1.0);
            self.motor_commands[i] = c;
            self.motor_output[i] += (c - self.motor_output[i]) * alpha;
        }

        let l = ARM_LENGTH * std::f64::consts::FRAC_1_SQRT_2;
        let mut thrust = 0.0;
        let mut torque = Vector3::zeros();
        for (&m, &(x, y, s)) in self.motor_output.iter().zip(&MOTOR_LAYOUT) {
            let t = m * MAX_MOTOR_THRUST;
            thrust += t;
            // r x F with F = (0, 0, -t)
            torque += Vector3::new(-y * l * t, x * l * t, s * YAW_TORQUE_COEFF * t);
        }

        let rot = self.attitude.to_rotation_matrix();
        let force = rot * Vector3::new(0.0, 0.0, -thrust) - LINEAR_DRAG * self.velocity;
        let accel = force / MASS + Vector3::new(0.0, 0.0, GRAVITY);

        let inertia = Matrix3::from_diagonal(&Vector3::from(INERTIA));
        let w = self.body_rates;
        let gyroscopic = w.cross(&(inertia * w));
        let ang_accel = Vector3::new(
            (torque.x - gyroscopic.x) / INERTIA[0],
            (torque.y - gyroscopic.y) / INERTIA[1],
            (torque.z - gyroscopic.z) / INERTIA[2],
        );

        self.velocity += accel * dt;
        self.position += self.velocity * dt;
        self.body_rates += ang_accel * dt;
        let dq = UnitQuaternion::from_scaled_axis(self.body_rates * dt);
        self.attitude = UnitQuaternion::new_normalize((self.attitude * dq).into_inner());
        self.last_accel = accel;
        self.last_angular_accel = ang_accel;
    }
}

/// Specific force seen by an accelerometer mounted `offset` meters from the
/// center of gravity (body frame).
pub fn specific_force(plant: &PlantState, offset: &Vector3<f64>) -> Vector3<f64> {
    let rot = plant.attitude.to_rotation_matrix();
    let cg = rot.transpose() * (plant.last_accel - Vector3::new(0.0, 0.0, GRAVITY));
    let w = plant.body_rates;
    cg + plant.last_angular_accel.cross(offset) + w.cross(&w.cross(offset))
}

/// Noise levels for [`read_sensors`]; zero disables the noise draw entirely.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorNoise {
    pub gyro_deg: f64,
    pub accel: f64,
}

impl Default for SensorNoise {
    fn default() -> Self {
        Self {
            gyro_deg: GYRO_NOISE_DEG,
            accel: ACCEL_NOISE,
        }
    }
}

impl SensorNoise {
    pub const NONE: SensorNoise = SensorNoise {
        gyro_deg: 0.0,
        accel: 0.0,
    };
}

/// Gyro and blended accelerometer reading. The three IMUs sit on the body
/// z axis at `imu_z` meters; their readings are averaged.
pub fn read_sensors<R: Rng + ?Sized>(
    plant: &PlantState,
    imu_z: &[f64; 3],
    noise: SensorNoise,
    rng: &mut R,
) -> SensorUnit {
    let mut accel = Vector3::zeros();
    for &z in imu_z {
        accel += specific_force(plant, &Vector3::new(0.0, 0.0, z));
    }
    accel /= imu_z.len() as f64;

    let mut gyro = plant.body_rates.map(f64::to_degrees);
    if noise.gyro_deg > 0.0 {
        let n = Normal::new(0.0, noise.gyro_deg).expect("positive sigma");
        gyro.iter_mut().for_each(|g| *g += n.sample(rng));
    }
    if noise.accel > 0.0 {
        let n = Normal::new(0.0, noise.accel).expect("positive sigma");
        accel.iter_mut().for_each(|a| *a += n.sample(rng));
    }
    let sat = |a: f64| a.clamp(-ACCEL_SATURATION, ACCEL_SATURATION);
    SensorUnit {
        gyro_x: gyro.x,
        gyro_y: gyro.y,
        gyro_z: gyro.z,
        accel_x: sat(accel.x),
        accel_y: sat(accel.y),
        accel_z: sat(accel.z),
    }
}

pub fn wrap_deg(mut a: f64) -> f64 {
    a %= 360.0;
    if a > 180.0 {
        a -= 360.0;
    } else if a <= -180.0 {
        a += 360.0;
    }
    a
}

pub fn wrap_rad(a: f64) -> f64 {
    wrap_deg(a.to_degrees()).to_radians()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn stationary_accelerometer_reads_gravity() {
        let plant = PlantState::hovering(Vector3::new(0.0, 0.0, -5.0));
        let s = read_sensors(&plant, &[0.0; 3], SensorNoise::NONE, &mut rng::stream(0, &[]));
        assert_eq!((s.gyro_x, s.gyro_y, s.gyro_z), (0.0, 0.0, 0.0));
        assert!((s.accel_x).abs() < 1e-12 && (s.accel_y).abs() < 1e-12);
        assert!((s.accel_z + GRAVITY).abs() < 1e-12);
    }

    #[test]
    fn lever_arm_centripetal_term() {
        // 100 deg/s about body x, IMU 1 at z = 5 m: w x (w x r) = -w^2 r along z.
        let mut plant = PlantState::hovering(Vector3::zeros());
        let w = 100f64.to_radians();
        plant.body_rates = Vector3::new(w, 0.0, 0.0);
        let r = Vector3::new(0.0, 0.0, 5.0);
        let f = specific_force(&plant, &r) - specific_force(&plant, &Vector3::zeros());
        let by_hand = -w * w * 5.0;
        assert!((f.z - by_hand).abs() < 1e-12, "{} vs {by_hand}", f.z);
        assert!(f.x.abs() < 1e-12 && f.y.abs() < 1e-12);

        let mut r0 = rng::stream(0, &[]);
        let blended = read_sensors(&plant, &[5.0, 0.0, 0.0], SensorNoise::NONE, &mut r0);
        let centered = read_sensors(&plant, &[0.0; 3], SensorNoise::NONE, &mut r0);
        assert!((blended.accel_z - centered.accel_z - by_hand / 3.0).abs() < 1e-12);
    }

    #[test]
    fn no_thrust_never_climbs() {
        let mut plant = PlantState::at_rest(Vector3::new(0.0, 0.0, -20.0));
        let mut alt = plant.altitude();
        for _ in 0..2000 {
            plant.integrate(&[0.0; 4], 0.0025);
            assert!(plant.altitude() <= alt);
            alt = plant.altitude();
        }
        assert!(alt < 20.0);
    }

    #[test]
    fn hover_thrust_balances_gravity() {
        let mut plant = PlantState::hovering(Vector3::new(0.0, 0.0, -5.0));
        for _ in 0..400 {
            plant.integrate(&[HOVER_THROTTLE; 4], 0.0025);
        }
        assert!(plant.velocity.norm() < 1e-9);
        assert!(plant.body_rates.norm() < 1e-12);
    }

    #[test]
    fn mixer_torque_signs() {
        // pure roll command must produce positive roll acceleration
        let mut plant = PlantState::hovering(Vector3::new(0.0, 0.0, -5.0));
        let cmd = mix(HOVER_THROTTLE, 0.1, 0.0, 0.0);
        for _ in 0..40 {
            plant.integrate(&cmd, 0.0025);
        }
        assert!(plant.body_rates.x > 0.0);
        assert!(plant.body_rates.y.abs() < 1e-9 && plant.body_rates.z.abs() < 1e-9);

        let mut plant = PlantState::hovering(Vector3::new(0.0, 0.0, -5.0));
        let cmd = mix(HOVER_THROTTLE, 0.0, 0.1, 0.0);
        for _ in 0..40 {
            plant.integrate(&cmd, 0.0025);
        }
        assert!(plant.body_rates.y > 0.0);

        let mut plant = PlantState::hovering(Vector3::new(0.0, 0.0, -5.0));
        let cmd = mix(HOVER_THROTTLE, 0.0, 0.0, 0.1);
        for _ in 0..40 {
            plant.integrate(&cmd, 0.0025);
        }
        assert!(plant.body_rates.z > 0.0);
    }

    #[test]
    fn angle_wrapping() {
        assert_eq!(wrap_deg(180.0), 180.0);
        assert_eq!(wrap_deg(-180.0), 180.0);
        assert_eq!(wrap_deg(190.0), -170.0);
        assert_eq!(wrap_deg(-540.0), 180.0);
    }
}
