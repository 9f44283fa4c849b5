//! Abstract localization: noisy fixes while the vehicle stays inside the
//! map's lateral/heading envelope, odometry dead reckoning outside it, and a
//! terminal LOST state once the fix has been missing for too long.

use crate::geometry::Pose2;
use crate::path::closest_point_near;
use crate::rng::SimRng;
use crate::teach::{SubMap, TeachPath};
use crate::vehicle::{BodyTwist, VehicleState};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LocalizationMode {
    Localized,
    DeadReckoning,
    Lost,
}

impl LocalizationMode {
    pub fn as_str(self) -> &'static str {
        match self {
            LocalizationMode::Localized => "LOCALIZED",
            LocalizationMode::DeadReckoning => "DEAD_RECKONING",
            LocalizationMode::Lost => "LOST",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "LOCALIZED" => Some(Self::Localized),
            "DEAD_RECKONING" => Some(Self::DeadReckoning),
            "LOST" => Some(Self::Lost),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalizationEstimate {
    pub pose: Pose2,
    pub mode: LocalizationMode,
    pub time_since_fix: f64,
    /// Lateral offset of the vehicle from the map path at the last fix attempt.
    pub lateral_error_to_path: f64,
}

impl LocalizationEstimate {
    pub fn localized(pose: Pose2) -> Self {
        Self { pose, mode: LocalizationMode::Localized, time_since_fix: 0.0, lateral_error_to_path: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalizationConfig {
    pub lateral_limit: f64,
    /// Radians.
    pub heading_limit: f64,
    pub dead_reckoning_limit: f64,
    pub sigma_xy: f64,
    /// Radians.
    pub sigma_heading: f64,
    pub rate_hz: f64,
    pub search_window: f64,
}

impl Default for LocalizationConfig {
    fn default() -> Self {
        Self {
            lateral_limit: 2.0,
            heading_limit: 20f64.to_radians(),
            dead_reckoning_limit: 2.0,
            sigma_xy: 0.05,
            sigma_heading: 0.5f64.to_radians(),
            rate_hz: 20.0,
            search_window: 30.0,
        }
    }
}

pub fn in_envelope(lateral_error: f64, heading_error: f64, cfg: &LocalizationConfig) -> bool {
    lateral_error.abs() <= cfg.lateral_limit && heading_error.abs() <= cfg.heading_limit
}

/// Mode as a function of the envelope test and the time without a fix.
pub fn mode_for(inside: bool, time_since_fix: f64, cfg: &LocalizationConfig) -> LocalizationMode {
    if time_since_fix + TIME_EPS >= cfg.dead_reckoning_limit {
        LocalizationMode::Lost
    } else if inside {
        LocalizationMode::Localized
    } else {
        LocalizationMode::DeadReckoning
    }
}

/// One fix attempt against the map path. `fix_available` models the
/// camera pipeline producing a result at all (scripted dropouts clear it).
pub fn estimate_pose(
    prev: &LocalizationEstimate,
    truth: &VehicleState,
    path: &TeachPath,
    hint: usize,
    fix_available: bool,
    cfg: &LocalizationConfig,
    rng: &mut SimRng,
) -> LocalizationEstimate {
    let n = Normal::new(0.0, 1.0).expect("unit normal");
    let noise: (f64, f64, f64) = (n.sample(rng), n.sample(rng), n.sample(rng));
    if prev.mode == LocalizationMode::Lost {
        return *prev;
    }
    let q = closest_point_near(path, &truth.pose(), hint, cfg.search_window);
    let inside = fix_available && in_envelope(q.lateral_error, q.heading_error, cfg);
    let time_since_fix = if inside && prev.time_since_fix + TIME_EPS < cfg.dead_reckoning_limit {
        0.0
    } else {
        prev.time_since_fix
    };
    match mode_for(inside, time_since_fix, cfg) {
        LocalizationMode::Localized => LocalizationEstimate {
            pose: Pose2::new(
                truth.x + noise.0 * cfg.sigma_xy,
                truth.y + noise.1 * cfg.sigma_xy,
                truth.heading + noise.2 * cfg.sigma_heading,
            ),
            mode: LocalizationMode::Localized,
            time_since_fix: 0.0,
            lateral_error_to_path: q.lateral_error,
        },
        mode => LocalizationEstimate {
            pose: prev.pose,
            mode,
            time_since_fix,
            lateral_error_to_path: q.lateral_error,
        },
    }
}

/// Integrate one odometry step over `dt` (exact arc for a constant twist).
pub fn integrate_twist(pose: &Pose2, twist: &BodyTwist, dt: f64) -> Pose2 {
    let dtheta = twist.yaw_rate * dt;
    let (dx, dy) = if dtheta.abs() < 1e-9 {
        (twist.vx * dt, twist.vy * dt)
    } else {
        let (s, c) = dtheta.sin_cos();
        let k = 1.0 / twist.yaw_rate;
        (
            k * (twist.vx * s + twist.vy * (c - 1.0)),
            k * (twist.vx * (1.0 - c) + twist.vy * s),
        )
    };
    let (x, y) = pose.to_world(dx, dy);
    Pose2::new(x, y, pose.heading + dtheta)
}

/// Advance a dead-reckoning estimate by one odometry step. Reaching the
/// dead-reckoning limit turns the estimate LOST.
pub fn dead_reckon(
    prev: &LocalizationEstimate,
    twist: &BodyTwist,
    dt: f64,
    cfg: &LocalizationConfig,
) -> LocalizationEstimate {
    let time_since_fix = prev.time_since_fix + dt;
    let mode = match prev.mode {
        LocalizationMode::Localized => LocalizationMode::Localized,
        _ => mode_for(false, time_since_fix, cfg),
    };
    LocalizationEstimate {
        pose: integrate_twist(&prev.pose, twist, dt),
        mode,
        time_since_fix: if mode == LocalizationMode::Localized { 0.0 } else { time_since_fix },
        lateral_error_to_path: prev.lateral_error_to_path,
    }
}

/// Localization owned by the engine: fixes at the camera rate, odometry
/// integration every control tick.
#[derive(Debug, Clone)]
pub struct Localizer {
    pub cfg: LocalizationConfig,
    estimate: LocalizationEstimate,
    /// Last fix propagated with odometry.
    odom_pose: Pose2,
    rng: SimRng,
}

impl Localizer {
    pub fn new(cfg: LocalizationConfig, initial: Pose2, rng: SimRng) -> Self {
        Self { cfg, estimate: LocalizationEstimate::localized(initial), odom_pose: initial, rng }
    }

    pub fn estimate(&self) -> &LocalizationEstimate {
        &self.estimate
    }

    /// Odometry step, called once per control tick.
    pub fn propagate(&mut self, twist: &BodyTwist, dt: f64) {
        self.odom_pose = integrate_twist(&self.odom_pose, twist, dt);
        if self.estimate.mode == LocalizationMode::Localized {
            self.estimate.pose = self.odom_pose;
        } else {
            let mut next = dead_reckon(&self.estimate, twist, dt, &self.cfg);
            next.pose = self.odom_pose;
            self.estimate = next;
        }
    }

    /// Fix attempt, called at the localization rate.
    pub fn fix(&mut self, truth: &VehicleState, path: &TeachPath, hint: usize, fix_available: bool) {
        let prev = if self.estimate.mode == LocalizationMode::Localized {
            LocalizationEstimate { pose: self.odom_pose, ..self.estimate }
        } else {
            self.estimate
        };
        let next = estimate_pose(&prev, truth, path, hint, fix_available, &self.cfg, &mut self.rng);
        if next.mode == LocalizationMode::Localized {
            self.odom_pose = next.pose;
        }
        self.estimate = next;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubmapConfig {
    pub max_len: f64,
    /// Simulated map load time, seconds per kilometer of the next sub-map.
    pub load_rate_s_per_km: f64,
    /// Distance before a sub-map end at which the stop-and-reload begins.
    pub end_window: f64,
}

impl Default for SubmapConfig {
    fn default() -> Self {
        Self { max_len: 3300.0, load_rate_s_per_km: 0.5, end_window: 5.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TransitionPlan {
    /// Stop, wait `load_delay` seconds, then continue on `next`.
    Reload { next: SubMap, load_delay: f64 },
    EndOfMission,
}

pub fn submap_transition(next: Option<&SubMap>, cfg: &SubmapConfig) -> TransitionPlan {
    match next {
        Some(n) => TransitionPlan::Reload {
            next: *n,
            load_delay: cfg.load_rate_s_per_km * n.length / 1000.0,
        },
        None => TransitionPlan::EndOfMission,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::vehicle::{step_dynamics, ActuatorCommand, VehicleParams};

    fn straight_path() -> TeachPath {
        let poses: Vec<_> = (0..400).map(|i| (Pose2::new(i as f64 * 0.5, 0.0, 0.0), 5.0)).collect();
        TeachPath::from_poses(&poses).unwrap()
    }

    fn truth(x: f64, y: f64, h: f64) -> VehicleState {
        VehicleState { x, y, heading: h, speed: 3.0, ..Default::default() }
    }

    fn attempt(state: &VehicleState) -> LocalizationEstimate {
        let cfg = LocalizationConfig::default();
        let prev = LocalizationEstimate::localized(state.pose());
        estimate_pose(&prev, state, &straight_path(), 20, true, &cfg, &mut seeded(3))
    }

    #[test]
    fn envelope_rules() {
        assert_eq!(attempt(&truth(10.0, 0.0, 0.0)).mode, LocalizationMode::Localized);
        assert_eq!(attempt(&truth(10.0, 2.5, 0.0)).mode, LocalizationMode::DeadReckoning);
        assert_eq!(attempt(&truth(10.0, 0.0, 25f64.to_radians())).mode, LocalizationMode::DeadReckoning);
        assert_eq!(attempt(&truth(10.0, -1.99, 19f64.to_radians())).mode, LocalizationMode::Localized);
    }

    fn run_dropout(dropout: f64) -> (LocalizationMode, f64, f64) {
        let cfg = LocalizationConfig { sigma_xy: 0.0, sigma_heading: 0.0, ..Default::default() };
        let params = VehicleParams::default();
        let path = straight_path();
        let dt = 0.005;
        let mut state = truth(5.0, 0.0, 0.0);
        let mut loc = Localizer::new(cfg, state.pose(), seeded(9));
        let cmd = ActuatorCommand { steering_ref: 0.02, velocity_ref: 3.0, emergency: false };
        let mut worst: f64 = 0.0;
        let dropout_ticks = (dropout / dt).round() as u64;
        for tick in 0..=dropout_ticks + 20 {
            let t = tick as f64 * dt;
            if tick % 10 == 0 {
                loc.fix(&state, &path, 0, tick >= dropout_ticks);
            }
            if loc.estimate().mode == LocalizationMode::Lost {
                return (LocalizationMode::Lost, t, worst);
            }
            if loc.estimate().mode == LocalizationMode::Localized && tick > 0 && tick >= dropout_ticks {
                return (LocalizationMode::Localized, loc.estimate().time_since_fix, worst);
            }
            state = step_dynamics(&state, &cmd, &params, dt).unwrap();
            let odo = crate::vehicle::wheel_odometry(&state, &params, &Default::default(), &mut seeded(0));
            loc.propagate(&odo.twist(), dt);
            let e = loc.estimate();
            worst = worst.max(e.pose.distance_to(state.x, state.y));
        }
        (loc.estimate().mode, loc.estimate().time_since_fix, worst)
    }

    #[test]
    fn noiseless_dead_reckoning_tracks_truth() {
        let (mode, tsf, worst) = run_dropout(1.5);
        assert_eq!(mode, LocalizationMode::Localized);
        assert_eq!(tsf, 0.0);
        assert!(worst < 1e-9, "dead reckoning drift {worst}");
    }

    #[test]
    fn regained_before_limit() {
        assert_eq!(run_dropout(1.9).0, LocalizationMode::Localized);
    }

    #[test]
    fn two_second_dropout_is_lost() {
        let (mode, _, _) = run_dropout(2.0);
        assert_eq!(mode, LocalizationMode::Lost);
    }

    #[test]
    fn dead_reckon_counts_time() {
        let cfg = LocalizationConfig::default();
        let mut e = LocalizationEstimate {
            mode: LocalizationMode::DeadReckoning,
            ..LocalizationEstimate::localized(Pose2::default())
        };
        let tw = BodyTwist { vx: 1.0, vy: 0.0, yaw_rate: 0.0 };
        for _ in 0..399 {
            e = dead_reckon(&e, &tw, 0.005, &cfg);
        }
        assert_eq!(e.mode, LocalizationMode::DeadReckoning);
        e = dead_reckon(&e, &tw, 0.005, &cfg);
        assert_eq!(e.mode, LocalizationMode::Lost);
        assert!((e.pose.x - 2.0).abs() < 1e-9);
    }

    #[test]
    fn load_delay_scales_with_length() {
        let next = SubMap { id: 1, start: 10, end: 20, length: 1700.0 };
        match submap_transition(Some(&next), &SubmapConfig::default()) {
            TransitionPlan::Reload { load_delay, .. } => assert!((load_delay - 0.85).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
        assert_eq!(submap_transition(None, &SubmapConfig::default()), TransitionPlan::EndOfMission);
    }
}
