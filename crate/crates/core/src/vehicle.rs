//! Ground-truth vehicle: kinematic bicycle about the rear axle with the
//! low-level steering and velocity loops modeled as rate-limited first-order
//! lags.

use crate::error::{ensure_finite, Error, Result};
use crate::geometry::{wrap_angle, Pose2};
use crate::rng::SimRng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Below this speed error the velocity loop is considered settled.
const VELOCITY_DEADBAND: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleParams {
    pub wheelbase: f64,
    pub body_width: f64,
    /// Sensor point, forward of the rear axle.
    pub sensor_offset: f64,
    pub max_steering: f64,
    pub max_steering_rate: f64,
    pub max_accel: f64,
    pub max_decel: f64,
    pub steering_lag_tau: f64,
    pub velocity_lag_tau: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            wheelbase: 1.9,
            body_width: 1.6,
            sensor_offset: 1.9,
            max_steering: 0.6,
            max_steering_rate: 1.0,
            max_accel: 2.0,
            max_decel: 4.0,
            steering_lag_tau: 0.15,
            velocity_lag_tau: 0.4,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        ensure_finite(
            "vehicle params",
            &[
                self.wheelbase,
                self.body_width,
                self.sensor_offset,
                self.max_steering,
                self.max_steering_rate,
                self.max_accel,
                self.max_decel,
                self.steering_lag_tau,
                self.velocity_lag_tau,
            ],
        )?;
        let positive = [
            self.wheelbase,
            self.body_width,
            self.max_steering_rate,
            self.max_accel,
            self.max_decel,
            self.steering_lag_tau,
            self.velocity_lag_tau,
        ];
        if positive.iter().any(|&v| v <= 0.0) {
            return Err(Error::Validation("vehicle lengths, limits and lags must be > 0".into()));
        }
        if !(self.max_steering > 0.0 && self.max_steering < std::f64::consts::FRAC_PI_2) {
            return Err(Error::Validation("max_steering must lie in (0, pi/2)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
    pub steering_angle: f64,
    pub timestamp: f64,
}

impl VehicleState {
    pub fn at_pose(pose: Pose2) -> Self {
        Self { x: pose.x, y: pose.y, heading: wrap_angle(pose.heading), ..Default::default() }
    }

    pub fn pose(&self) -> Pose2 {
        Pose2 { x: self.x, y: self.y, heading: self.heading }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ActuatorCommand {
    pub steering_ref: f64,
    pub velocity_ref: f64,
    pub emergency: bool,
}

/// Advance the vehicle by `dt`. Actuators are updated first, then the pose is
/// integrated over the step with the new speed and steering angle held
/// constant (exact arc for the kinematic model).
pub fn step_dynamics(
    state: &VehicleState,
    cmd: &ActuatorCommand,
    params: &VehicleParams,
    dt: f64,
) -> Result<VehicleState> {
    ensure_finite(
        "vehicle state",
        &[state.x, state.y, state.heading, state.speed, state.steering_angle, state.timestamp],
    )?;
    ensure_finite("actuator command", &[cmd.steering_ref, cmd.velocity_ref])?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Validation(format!("dt must be positive, got {dt}")));
    }

    // steering loop: first-order lag, rate limited, never frozen by emergencies
    let steer_ref = cmd.steering_ref.clamp(-params.max_steering, params.max_steering);
    let steer_gain = 1.0 - (-dt / params.steering_lag_tau).exp();
    let max_dsteer = params.max_steering_rate * dt;
    let dsteer = ((steer_ref - state.steering_angle) * steer_gain).clamp(-max_dsteer, max_dsteer);
    let steering_angle =
        (state.steering_angle + dsteer).clamp(-params.max_steering, params.max_steering);

    let speed = if cmd.emergency {
        let v = state.speed - params.max_decel * dt;
        // absorb round-off so the ramp lands exactly on zero
        if v <= 1e-9 { 0.0 } else { v }
    } else {
        let v_ref = cmd.velocity_ref.max(0.0);
        let err = v_ref - state.speed;
        if err.abs() < VELOCITY_DEADBAND {
            v_ref
        } else {
            let gain = 1.0 - (-dt / params.velocity_lag_tau).exp();
            let dv = (err * gain).clamp(-params.max_decel * dt, params.max_accel * dt);
            (state.speed + dv).max(0.0)
        }
    };

    let yaw_rate = speed * steering_angle.tan() / params.wheelbase;
    let dtheta = yaw_rate * dt;
    let (x, y) = if dtheta.abs() < 1e-9 {
        let h = state.heading + 0.5 * dtheta;
        (state.x + speed * dt * h.cos(), state.y + speed * dt * h.sin())
    } else {
        let r = speed / yaw_rate;
        let h1 = state.heading + dtheta;
        (
            state.x + r * (h1.sin() - state.heading.sin()),
            state.y - r * (h1.cos() - state.heading.cos()),
        )
    };

    Ok(VehicleState {
        x,
        y,
        heading: wrap_angle(state.heading + dtheta),
        speed,
        steering_angle,
        timestamp: state.timestamp + dt,
    })
}

/// Velocity of the sensor point (front axle) in the body frame.
pub fn body_velocity_at_sensor(state: &VehicleState, params: &VehicleParams) -> (f64, f64) {
    let vx = state.speed;
    let vy = state.speed * (params.sensor_offset / params.wheelbase) * state.steering_angle.tan();
    (vx, vy)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OdometryNoise {
    /// Per-wheel speed noise, m/s.
    pub wheel_speed_std: f64,
    /// Steering encoder noise, rad.
    pub steering_std: f64,
}

/// Raw rear-wheel speeds plus steering encoder reading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdometrySample {
    pub rear_left: f64,
    pub rear_right: f64,
    pub steering: f64,
    pub track_width: f64,
    pub wheelbase: f64,
}

/// Planar twist of the rear axle.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BodyTwist {
    pub vx: f64,
    pub vy: f64,
    pub yaw_rate: f64,
}

impl OdometrySample {
    /// Inverse kinematics: wheel speeds and steering to body twist.
    pub fn twist(&self) -> BodyTwist {
        let v = 0.5 * (self.rear_left + self.rear_right);
        BodyTwist { vx: v, vy: 0.0, yaw_rate: v * self.steering.tan() / self.wheelbase }
    }
}

pub fn wheel_odometry(
    state: &VehicleState,
    params: &VehicleParams,
    noise: &OdometryNoise,
    rng: &mut SimRng,
) -> OdometrySample {
    let v = state.speed;
    let half_track = 0.5 * params.body_width;
    let yaw_rate = v * state.steering_angle.tan() / params.wheelbase;
    let mut left = v - yaw_rate * half_track;
    let mut right = v + yaw_rate * half_track;
    let mut steering = state.steering_angle;
    // always draw so the stream stays aligned regardless of the std values
    let n = Normal::new(0.0, 1.0).expect("unit normal");
    let (a, b, c): (f64, f64, f64) = (n.sample(rng), n.sample(rng), n.sample(rng));
    left += a * noise.wheel_speed_std;
    right += b * noise.wheel_speed_std;
    steering += c * noise.steering_std;
    OdometrySample {
        rear_left: left,
        rear_right: right,
        steering,
        track_width: params.body_width,
        wheelbase: params.wheelbase,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn straight(speed: f64) -> VehicleState {
        VehicleState { speed, ..Default::default() }
    }

    #[test]
    fn straight_line_step() {
        let p = VehicleParams::default();
        let cmd = ActuatorCommand { steering_ref: 0.0, velocity_ref: 1.0, emergency: false };
        let s = step_dynamics(&straight(1.0), &cmd, &p, 0.1).unwrap();
        assert!((s.x - 0.1).abs() < 1e-12);
        assert_eq!(s.y, 0.0);
        assert_eq!(s.heading, 0.0);
    }

    #[test]
    fn closes_onto_circle() {
        // tan(delta) = L / R  =>  circle of radius R about (0, R)
        let p = VehicleParams::default();
        let r = 20.0;
        let delta = (p.wheelbase / r).atan();
        let v = 5.0;
        let mut s = VehicleState { speed: v, steering_angle: delta, ..Default::default() };
        let cmd = ActuatorCommand { steering_ref: delta, velocity_ref: v, emergency: false };
        let dt = 0.005;
        let steps = (2.0 * std::f64::consts::PI * r / (v * dt)).round() as usize;
        let mut worst: f64 = 0.0;
        for _ in 0..steps {
            s = step_dynamics(&s, &cmd, &p, dt).unwrap();
            worst = worst.max((s.x.hypot(s.y - r) - r).abs());
        }
        assert!(worst < 1e-6, "radial deviation {worst}");
        assert!(s.x.hypot(s.y) < 0.05, "did not close: ({}, {})", s.x, s.y);
    }

    #[test]
    fn emergency_ramp_reaches_zero() {
        let p = VehicleParams { max_decel: 4.0, ..Default::default() };
        let cmd = ActuatorCommand { steering_ref: 0.0, velocity_ref: 9.0, emergency: true };
        let mut s = straight(5.0);
        for i in 1..=250 {
            let prev = s.speed;
            s = step_dynamics(&s, &cmd, &p, 0.005).unwrap();
            let analytic = (5.0 - 4.0 * 0.005 * i as f64).max(0.0);
            assert!((s.speed - analytic).abs() < 1e-9);
            assert!(s.speed <= prev);
        }
        assert_eq!(s.speed, 0.0);
    }

    #[test]
    fn steering_tracks_during_emergency() {
        let p = VehicleParams::default();
        let cmd = ActuatorCommand { steering_ref: 0.3, velocity_ref: 0.0, emergency: true };
        let mut s = straight(5.0);
        let mut prev_gap = 0.3;
        for _ in 0..100 {
            s = step_dynamics(&s, &cmd, &p, 0.005).unwrap();
            let gap = 0.3 - s.steering_angle;
            assert!(gap < prev_gap);
            prev_gap = gap;
        }
    }

    #[test]
    fn rejects_non_finite() {
        let p = VehicleParams::default();
        let cmd = ActuatorCommand { steering_ref: f64::NAN, velocity_ref: 1.0, emergency: false };
        assert!(matches!(step_dynamics(&straight(1.0), &cmd, &p, 0.005), Err(Error::Validation(_))));
        let cmd = ActuatorCommand::default();
        assert!(step_dynamics(&straight(1.0), &cmd, &p, 0.0).is_err());
    }

    #[test]
    fn steering_clamped_to_limit() {
        let p = VehicleParams::default();
        let cmd = ActuatorCommand { steering_ref: 3.0, velocity_ref: 1.0, emergency: false };
        let mut s = straight(1.0);
        for _ in 0..2000 {
            s = step_dynamics(&s, &cmd, &p, 0.005).unwrap();
            assert!(s.steering_angle.abs() <= p.max_steering);
        }
        assert!((s.steering_angle - p.max_steering).abs() < 1e-9);
    }

    #[test]
    fn sensor_velocity() {
        let p = VehicleParams { wheelbase: 1.9, sensor_offset: 1.9, ..Default::default() };
        let s = VehicleState { speed: 5.0, steering_angle: 0.2, ..Default::default() };
        let (vx, vy) = body_velocity_at_sensor(&s, &p);
        assert_eq!(vx, 5.0);
        // 5 * tan(0.2) = 1.0135501...
        assert!((vy - 1.013_550_177_543_4).abs() < 1e-12);
        assert_eq!(body_velocity_at_sensor(&straight(5.0), &p).1, 0.0);
        assert_eq!(body_velocity_at_sensor(&straight(0.0), &p), (0.0, 0.0));
    }

    #[test]
    fn noiseless_odometry_round_trip() {
        let p = VehicleParams::default();
        let s = VehicleState { speed: 3.0, steering_angle: 0.1, ..Default::default() };
        let tw = wheel_odometry(&s, &p, &OdometryNoise::default(), &mut seeded(1)).twist();
        assert!((tw.vx - 3.0).abs() < 1e-12);
        assert_eq!(tw.vy, 0.0);
        assert!((tw.yaw_rate - 3.0 / 1.9 * 0.1f64.tan()).abs() < 1e-12);
    }

    #[test]
    fn odometry_deterministic_and_unbiased() {
        let p = VehicleParams::default();
        let s = VehicleState { speed: 3.0, ..Default::default() };
        let noise = OdometryNoise { wheel_speed_std: 0.05, steering_std: 0.0 };
        let run = |seed| {
            let mut rng = seeded(seed);
            (0..10_000).map(|_| wheel_odometry(&s, &p, &noise, &mut rng)).collect::<Vec<_>>()
        };
        let a = run(11);
        assert_eq!(a, run(11));
        let n = a.len() as f64;
        let mean_left = a.iter().map(|o| o.rear_left).sum::<f64>() / n;
        assert!((mean_left - 3.0).abs() < 3.0 * 0.05 / n.sqrt());
    }
}
