//! Scenario files: road, vehicle, world, controller settings and scripted
//! events for one teach/repeat experiment. JSON, SI units, radians.

use crate::analyzer::AnalyzerConfig;
use crate::error::{Error, Result};
use crate::geometry::Pose2;
use crate::guard::GuardThresholds;
use crate::lidar::{BoxObstacle, ClassifierConfig, Ground, LidarConfig, World};
use crate::localization::{LocalizationConfig, SubmapConfig};
use crate::steering::SteeringConfig;
use crate::teach::{RecordConfig, TeachPath};
use crate::vehicle::{OdometryNoise, VehicleParams};
use crate::velocity::{PenalizationConfig, VelocityConfig};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum RoadSegment {
    Straight(f64),
    /// Signed turn angle, positive to the left.
    Arc { radius: f64, angle: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoadSpec {
    pub start: Pose2,
    pub segments: Vec<RoadSegment>,
    /// Explicit centerline; replaces `segments` when non-empty.
    pub points: Vec<(f64, f64)>,
    pub width: f64,
    pub ground: Ground,
    /// Centerline sampling step.
    pub spacing: f64,
}

impl Default for RoadSpec {
    fn default() -> Self {
        Self {
            start: Pose2::default(),
            segments: vec![RoadSegment::Straight(100.0)],
            points: Vec::new(),
            width: 8.0,
            ground: Ground::default(),
            spacing: 0.25,
        }
    }
}

impl RoadSpec {
    /// Centerline sampled every `spacing` metres (exactly on segment ends).
    pub fn centerline(&self) -> Result<Vec<Pose2>> {
        if !(self.spacing > 0.0) {
            return Err(Error::Scenario("road spacing must be > 0".into()));
        }
        if !self.points.is_empty() {
            return self.centerline_from_points();
        }
        let mut out = vec![self.start];
        let mut cur = self.start;
        for seg in &self.segments {
            let (len, curvature) = match *seg {
                RoadSegment::Straight(l) => (l, 0.0),
                RoadSegment::Arc { radius, angle } => {
                    if !(radius > 0.0) {
                        return Err(Error::Scenario("arc radius must be > 0".into()));
                    }
                    (radius * angle.abs(), angle.signum() / radius)
                }
            };
            if !(len > 0.0 && len.is_finite()) {
                return Err(Error::Scenario("road segments must have positive length".into()));
            }
            let n = (len / self.spacing).ceil() as usize;
            let start = cur;
            for k in 1..=n {
                let s = len * k as f64 / n as f64;
                cur = advance(&start, s, curvature);
                out.push(cur);
            }
        }
        Ok(out)
    }

    fn centerline_from_points(&self) -> Result<Vec<Pose2>> {
        let p = &self.points;
        if p.len() < 2 {
            return Err(Error::Scenario("road points need at least two entries".into()));
        }
        let mut out = Vec::new();
        for w in p.windows(2) {
            let (a, b) = (w[0], w[1]);
            let len = (b.0 - a.0).hypot(b.1 - a.1);
            if len == 0.0 {
                continue;
            }
            let heading = (b.1 - a.1).atan2(b.0 - a.0);
            let n = (len / self.spacing).ceil() as usize;
            let first = if out.is_empty() { 0 } else { 1 };
            for k in first..=n {
                let t = k as f64 / n as f64;
                out.push(Pose2::new(a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1), heading));
            }
        }
        if out.len() < 2 {
            return Err(Error::Scenario("road points are all identical".into()));
        }
        Ok(out)
    }
}

fn advance(p: &Pose2, s: f64, curvature: f64) -> Pose2 {
    if curvature == 0.0 {
        return Pose2::new(p.x + s * p.heading.cos(), p.y + s * p.heading.sin(), p.heading);
    }
    let r = 1.0 / curvature;
    let h1 = p.heading + s * curvature;
    Pose2::new(p.x + r * (h1.sin() - p.heading.sin()), p.y - r * (h1.cos() - p.heading.cos()), h1)
}

/// Scripted demonstration driver: pure pursuit on the road centerline at a
/// target speed, braking to a stop at the end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TeachDriver {
    pub speed: f64,
    pub lookahead: f64,
    pub brake_decel: f64,
    pub max_time: f64,
}

impl Default for TeachDriver {
    fn default() -> Self {
        Self { speed: 5.0, lookahead: 4.0, brake_decel: 1.5, max_time: 1200.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSpec {
    pub max_time: f64,
    /// Enables the simulated LiDAR and grid analysis.
    pub perception: bool,
    /// Ticks between a scan and the delivery of its grid.
    pub grid_delay_ticks: u64,
    /// Along-path window (m) around an apex within which ticks count as apex ticks.
    pub apex_window: f64,
    /// Curvature above which a stretch of path counts as a curve.
    pub apex_min_curvature: f64,
}

impl Default for RunSpec {
    fn default() -> Self {
        Self { max_time: 900.0, perception: true, grid_delay_ticks: 4, apex_window: 2.0, apex_min_curvature: 1.0 / 150.0 }
    }
}

/// LiDAR or localization producer for watchdog faults.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Producer {
    Lidar,
    Localization,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Event {
    /// The localization pipeline produces no fix in `[start, start + duration)`.
    LocalizationDropout { start: f64, duration: f64 },
    SteeringTorque { start: f64, duration: f64, torque: f64 },
    StopRequest { time: f64 },
    InterfaceFailure { time: f64 },
    /// A producer stops publishing in `[start, start + duration)`.
    WatchdogFault { start: f64, duration: f64, producer: Producer },
    /// A detection `distance` metres ahead along the path, reported to the
    /// analyzer every tick in `[time, time + duration)`.
    ObstacleInjection { time: f64, distance: f64, duration: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub dt: f64,
    pub road: RoadSpec,
    pub vehicle: VehicleParams,
    /// Start pose for both phases; the road start when absent.
    pub initial_pose: Option<Pose2>,
    pub obstacles: Vec<BoxObstacle>,
    pub teach: TeachDriver,
    pub record: RecordConfig,
    pub run: RunSpec,
    pub steering: SteeringConfig,
    pub velocity: VelocityConfig,
    pub penalization: PenalizationConfig,
    pub localization: LocalizationConfig,
    pub submap: SubmapConfig,
    pub odometry: OdometryNoise,
    pub lidar: LidarConfig,
    pub classifier: ClassifierConfig,
    pub analyzer: AnalyzerConfig,
    pub guard: GuardThresholds,
    pub events: Vec<Event>,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            name: "unnamed".into(),
            seed: 1,
            dt: 0.005,
            road: RoadSpec::default(),
            vehicle: VehicleParams::default(),
            initial_pose: None,
            obstacles: Vec::new(),
            teach: TeachDriver::default(),
            record: RecordConfig::default(),
            run: RunSpec::default(),
            steering: SteeringConfig::default(),
            velocity: VelocityConfig::default(),
            penalization: PenalizationConfig::default(),
            localization: LocalizationConfig::default(),
            submap: SubmapConfig::default(),
            odometry: OdometryNoise { wheel_speed_std: 0.02, steering_std: 0.002 },
            lidar: LidarConfig::default(),
            classifier: ClassifierConfig::default(),
            analyzer: AnalyzerConfig::default(),
            guard: GuardThresholds::default(),
            events: Vec::new(),
        }
    }
}

/// Keys `set_param` may change while a run is being served.
pub const LIVE_PARAM_WHITELIST: &[&str] = &[
    "velocity.max_abs_vel",
    "velocity.v_freedom",
    "steering.gain",
    "analyzer.hold_time",
    "analyzer.creep_speed",
    "penalization.obstacle_standoff",
];

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| Error::Scenario(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Scenario("dt must be > 0".into()));
        }
        if !(self.road.width > self.vehicle.body_width) {
            return Err(Error::Scenario("road must be wider than the vehicle".into()));
        }
        self.vehicle.validate()?;
        self.steering.validate()?;
        self.velocity.validate()?;
        self.penalization.validate()?;
        self.lidar.validate()?;
        self.analyzer.validate()?;
        self.guard.validate()?;
        if !(self.teach.speed >= 0.0 && self.teach.lookahead > 0.0 && self.teach.brake_decel > 0.0) {
            return Err(Error::Scenario("teach driver speed, lookahead and braking must be positive".into()));
        }
        self.road.centerline()?;
        Ok(())
    }

    pub fn start_pose(&self) -> Result<Pose2> {
        match self.initial_pose {
            Some(p) => Ok(p),
            None => Ok(self.road.centerline()?[0]),
        }
    }

    pub fn world(&self) -> World {
        World { ground: self.road.ground, obstacles: self.obstacles.clone() }
    }

    /// Set a dotted key such as `velocity.max_abs_vel` from its text form.
    /// The value is read as JSON when it parses, otherwise as a string.
    pub fn apply_param(&mut self, key: &str, raw: &str) -> Result<()> {
        let value = serde_json::from_str::<Value>(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        self.apply_value(key, value)
    }

    pub fn apply_value(&mut self, key: &str, value: Value) -> Result<()> {
        let mut doc = serde_json::to_value(&*self)?;
        let pointer = format!("/{}", key.replace('.', "/"));
        match doc.pointer_mut(&pointer) {
            Some(slot) if !key.is_empty() => *slot = value,
            _ => return Err(Error::UnknownKey(key.to_string())),
        }
        let updated: Scenario =
            serde_json::from_value(doc).map_err(|e| Error::Validation(format!("{key}: {e}")))?;
        updated.validate()?;
        *self = updated;
        Ok(())
    }

    /// Parse and apply `key=value`.
    pub fn apply_override(&mut self, kv: &str) -> Result<()> {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Validation(format!("expected key=value, got `{kv}`")))?;
        self.apply_param(k.trim(), v.trim())
    }

    /// A stored path must start within the localization envelope of the
    /// scenario's start pose and stay on the scenario road.
    pub fn check_path(&self, path: &TeachPath) -> Result<()> {
        let start = self.start_pose()?;
        let first = path.first().pose;
        let d = first.distance_to(start.x, start.y);
        let dh = crate::geometry::angle_diff(first.heading, start.heading).abs();
        if d > self.localization.lateral_limit || dh > self.localization.heading_limit {
            return Err(Error::PathMismatch(format!(
                "path starts {d:.2} m / {:.1} deg from the scenario start pose",
                dh.to_degrees()
            )));
        }
        let poses: Vec<(Pose2, f64)> = self.road.centerline()?.into_iter().map(|p| (p, 0.0)).collect();
        let center = TeachPath::from_poses(&poses)?;
        let mut hint = 0;
        for p in path.points() {
            let q = crate::path::closest_point_near(&center, &p.pose, hint, 30.0);
            hint = q.closest_index;
            if q.lateral_error.abs() > 0.5 * self.road.width {
                return Err(Error::PathMismatch(format!(
                    "path leaves the scenario road at ({:.2}, {:.2})",
                    p.pose.x, p.pose.y
                )));
            }
        }
        Ok(())
    }
}
