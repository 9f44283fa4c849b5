//! Fixed-step orchestration of the teach and repeat phases.
//!
//! The repeat loop runs at the vehicle interface rate. Localization fixes
//! arrive every `1 / rate_hz`, LiDAR scans every `1 / lidar.rate_hz` with
//! their grid delivered a fixed number of ticks later. Within one tick the
//! order is: sensors, localization, path query, grid analysis, guard,
//! controllers, penalizations and overrides, actuators, dynamics.

use crate::analyzer::{
    blocking_distance_direct, critical_limit, zone_horizon, ObstacleReport, ObstacleTracker,
};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::geometry::{angle_diff, Pose2};
use crate::guard::{guard_step, GuardDecision, GuardInputs};
use crate::lidar::{perceive, scan_dump_csv, scan_seed, simulate_scan, BoxObstacle, OccupancyGrid, World};
use crate::localization::{submap_transition, LocalizationEstimate, LocalizationMode, Localizer, TransitionPlan};
use crate::metrics::{summarize, Summary};
use crate::path::{closest_point_near, curve_radius, lookahead_point, PathQueryResult};
use crate::rng::{stream, tags, SimRng};
use crate::scenario::{Event, Producer, Scenario, LIVE_PARAM_WHITELIST};
use crate::steering::{pure_pursuit_angle, steering_command};
use crate::teach::{split_into_submaps, SubMap, TeachPath, TeachRecorder};
use crate::telemetry::TelemetryRecord;
use crate::vehicle::{step_dynamics, wheel_odometry, ActuatorCommand, VehicleState};
use crate::velocity::{
    apply_penalizations, lookahead_distance_vel, physical_velocity, reference_velocity, PenaltyInputs,
};
use std::collections::VecDeque;
use std::fmt::Write as _;
use std::path::PathBuf;

const TIME_EPS: f64 = 1e-9;
/// Speed at which the vehicle is treated as standing still.
const STOPPED: f64 = 1e-3;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub exec: Exec,
    /// Write every labeled scan here as `scan_NNNNN.csv`.
    pub scan_dump_dir: Option<PathBuf>,
}

pub(crate) fn ticks_per_period(rate_hz: f64, dt: f64) -> u64 {
    ((1.0 / (rate_hz * dt)).round() as u64).max(1)
}

/// Road centerline as a path, for the scripted driver and the corridor check.
fn centerline_path(sc: &Scenario) -> Result<TeachPath> {
    let poses: Vec<(Pose2, f64)> = sc.road.centerline()?.into_iter().map(|p| (p, sc.teach.speed)).collect();
    TeachPath::from_poses(&poses)
}

pub const TEACH_TRACE_HEADER: &str = "time,x,y,heading,speed,steering_angle";

#[derive(Debug, Clone)]
pub struct TeachOutcome {
    pub path: TeachPath,
    /// Per-tick trace CSV of the demonstration drive.
    pub trace: String,
    pub duration: f64,
}

/// Demonstration drive. Commands come from the scripted driver or from an
/// operator; every tick's true pose goes to the recorder.
#[derive(Debug, Clone)]
pub struct TeachSim {
    sc: Scenario,
    center: TeachPath,
    state: VehicleState,
    recorder: TeachRecorder,
    hint: usize,
    tick: u64,
    moved: bool,
    trace: String,
}

impl TeachSim {
    pub fn new(sc: Scenario) -> Result<Self> {
        sc.validate()?;
        let center = centerline_path(&sc)?;
        let state = VehicleState::at_pose(sc.start_pose()?);
        let mut trace = String::from(TEACH_TRACE_HEADER);
        trace.push('\n');
        let mut recorder = TeachRecorder::new(sc.record);
        recorder.push(state.pose(), state.speed);
        Ok(Self { sc, center, state, recorder, hint: 0, tick: 0, moved: false, trace })
    }

    pub fn state(&self) -> &VehicleState {
        &self.state
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 * self.sc.dt
    }

    pub fn recorded_distance(&self) -> f64 {
        self.recorder.distance()
    }

    fn centerline_query(&mut self) -> PathQueryResult {
        let q = closest_point_near(&self.center, &self.state.pose(), self.hint, 30.0);
        self.hint = q.closest_index;
        q
    }

    /// Scripted driver: pure pursuit on the centerline at the teach speed,
    /// braking to a stop at its end.
    pub fn scripted_command(&mut self) -> ActuatorCommand {
        let q = self.centerline_query();
        let pose = self.state.pose();
        let target = self.center.point(lookahead_point(&self.center, q.closest_index, self.sc.teach.lookahead)).pose;
        let (lx, ly) = pose.to_local(target.x, target.y);
        let dist = lx.hypot(ly);
        let steering_ref = if dist > 1e-6 {
            pure_pursuit_angle(ly.atan2(lx), dist, self.sc.vehicle.wheelbase, 1.0)
        } else {
            self.state.steering_angle
        };
        let brake = (2.0 * self.sc.teach.brake_decel * (q.remaining_distance - 0.3).max(0.0)).sqrt();
        let mut v = self.sc.teach.speed.min(brake);
        if v < 0.05 {
            v = 0.0;
        }
        ActuatorCommand { steering_ref, velocity_ref: v, emergency: false }
    }

    /// Advance one tick under `cmd`. Fails if the vehicle leaves the road.
    pub fn step(&mut self, cmd: &ActuatorCommand) -> Result<()> {
        let next = step_dynamics(&self.state, cmd, &self.sc.vehicle, self.sc.dt)?;
        self.tick += 1;
        self.state = VehicleState { timestamp: self.time(), ..next };
        self.moved |= self.state.speed > 0.0;
        let q = self.centerline_query();
        if q.lateral_error.abs() > 0.5 * self.sc.road.width {
            return Err(Error::TeachAborted(format!(
                "left the road corridor at t={:.3} s, {:.2} m from the centerline",
                self.time(),
                q.lateral_error.abs()
            )));
        }
        self.recorder.push(self.state.pose(), self.state.speed);
        let s = &self.state;
        let _ = writeln!(
            self.trace,
            "{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            s.timestamp, s.x, s.y, s.heading, s.speed, s.steering_angle
        );
        Ok(())
    }

    /// The scripted drive has reached the end of the road and stopped.
    pub fn scripted_done(&mut self) -> bool {
        let q = self.centerline_query();
        self.moved && self.state.speed <= STOPPED && q.remaining_distance < 1.0
    }

    pub fn finish(self) -> Result<TeachOutcome> {
        let duration = self.time();
        let path = self.recorder.finish()?;
        Ok(TeachOutcome { path, trace: self.trace, duration })
    }
}

/// Run the scripted demonstration drive over the scenario road.
pub fn run_teach(sc: &Scenario) -> Result<TeachOutcome> {
    let mut sim = TeachSim::new(sc.clone())?;
    let max_ticks = (sc.teach.max_time / sc.dt).ceil() as u64;
    while sim.tick < max_ticks {
        let cmd = sim.scripted_command();
        if cmd.velocity_ref == 0.0 && !sim.moved {
            break;
        }
        sim.step(&cmd)?;
        if sim.scripted_done() {
            break;
        }
    }
    if sim.moved && !sim.scripted_done() {
        return Err(Error::TeachAborted(format!("did not reach the road end within {} s", sc.teach.max_time)));
    }
    sim.finish()
}

/// Stations of curve apexes: the centre of each stretch whose curvature
/// stays near its peak.
pub fn apex_stations(path: &TeachPath, min_curvature: f64) -> Vec<f64> {
    let pts = path.points();
    let n = pts.len();
    if n < 3 {
        return Vec::new();
    }
    let raw: Vec<f64> = (0..n)
        .map(|i| {
            let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
            let ds = pts[b].arclength - pts[a].arclength;
            if ds > 0.0 { angle_diff(pts[b].pose.heading, pts[a].pose.heading) / ds } else { 0.0 }
        })
        .collect();
    // smooth over +-2 m
    let kappa: Vec<f64> = (0..n)
        .map(|i| {
            let s = pts[i].arclength;
            let (mut sum, mut cnt) = (0.0, 0.0);
            let mut j = i;
            while j > 0 && s - pts[j - 1].arclength <= 2.0 {
                j -= 1;
            }
            while j < n && pts[j].arclength - s <= 2.0 {
                sum += raw[j];
                cnt += 1.0;
                j += 1;
            }
            sum / cnt
        })
        .collect();
    let mut apexes = Vec::new();
    let mut i = 0;
    while i < n {
        if kappa[i].abs() < min_curvature {
            i += 1;
            continue;
        }
        let sign = kappa[i].signum();
        let mut j = i;
        while j < n && kappa[j].abs() >= min_curvature && kappa[j].signum() == sign {
            j += 1;
        }
        let peak = kappa[i..j].iter().map(|k| k.abs()).fold(0.0, f64::max);
        let near: Vec<f64> =
            (i..j).filter(|&k| kappa[k].abs() >= 0.9 * peak).map(|k| pts[k].arclength).collect();
        if pts[j - 1].arclength - pts[i].arclength >= 5.0 {
            apexes.push(near.iter().sum::<f64>() / near.len() as f64);
        }
        i = j;
    }
    apexes
}

#[derive(Debug, Clone)]
pub struct RepeatOutcome {
    pub records: Vec<TelemetryRecord>,
    pub summary: Summary,
}

impl RepeatOutcome {
    pub fn telemetry_csv(&self) -> String {
        crate::telemetry::to_csv(&self.records)
    }
}

/// One autonomous repeat run, advanced tick by tick.
pub struct RepeatSim {
    sc: Scenario,
    opts: RunOptions,
    world: World,
    full_path: TeachPath,
    submaps: Vec<SubMap>,
    active: usize,
    active_path: TeachPath,
    active_offset: f64,
    apexes: Vec<f64>,
    state: VehicleState,
    localizer: Localizer,
    odo_rng: SimRng,
    lidar_seed: u64,
    scans: u64,
    pending: VecDeque<(u64, OccupancyGrid)>,
    latest_grid: Option<OccupancyGrid>,
    tracker: ObstacleTracker,
    report: ObstacleReport,
    decision: GuardDecision,
    hint: usize,
    true_hint: usize,
    steering_prev: f64,
    tick: u64,
    loc_period: u64,
    lidar_period: u64,
    last_loc_tick: u64,
    last_grid_tick: u64,
    reload_until: Option<f64>,
    stop_request: Option<f64>,
    ui_torque: Option<f64>,
    injected: Vec<Option<f64>>,
    records: Vec<TelemetryRecord>,
    done: bool,
}

impl RepeatSim {
    pub fn new(sc: Scenario, path: TeachPath, opts: RunOptions) -> Result<Self> {
        sc.validate()?;
        sc.check_path(&path)?;
        let submaps = split_into_submaps(&path, sc.submap.max_len);
        let first = submaps[0];
        let active_path = if submaps.len() == 1 { path.clone() } else { path.slice(first.start, first.end)? };
        let start = sc.start_pose()?;
        let localizer = Localizer::new(sc.localization.clone(), start, stream(sc.seed, tags::LOCALIZATION));
        let apexes = apex_stations(&path, sc.run.apex_min_curvature);
        Ok(Self {
            world: sc.world(),
            loc_period: ticks_per_period(sc.localization.rate_hz, sc.dt),
            lidar_period: ticks_per_period(sc.lidar.rate_hz, sc.dt),
            tracker: ObstacleTracker::new(sc.analyzer.clone()),
            odo_rng: stream(sc.seed, tags::ODOMETRY),
            lidar_seed: crate::rng::derive_seed(sc.seed, tags::LIDAR),
            injected: vec![None; sc.events.len()],
            state: VehicleState::at_pose(start),
            full_path: path,
            submaps,
            active: 0,
            active_path,
            active_offset: 0.0,
            apexes,
            localizer,
            scans: 0,
            pending: VecDeque::new(),
            latest_grid: None,
            report: ObstacleReport::default(),
            decision: GuardDecision::initial(),
            hint: 0,
            true_hint: 0,
            steering_prev: 0.0,
            tick: 0,
            last_loc_tick: 0,
            last_grid_tick: 0,
            reload_until: None,
            stop_request: None,
            ui_torque: None,
            records: Vec::new(),
            done: false,
            opts,
            sc,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.sc
    }

    pub fn state(&self) -> &VehicleState {
        &self.state
    }

    pub fn estimate(&self) -> &LocalizationEstimate {
        self.localizer.estimate()
    }

    pub fn decision(&self) -> &GuardDecision {
        &self.decision
    }

    pub fn report(&self) -> &ObstacleReport {
        &self.report
    }

    pub fn latest_grid(&self) -> Option<&OccupancyGrid> {
        self.latest_grid.as_ref()
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn path(&self) -> &TeachPath {
        &self.full_path
    }

    pub fn records(&self) -> &[TelemetryRecord] {
        &self.records
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 * self.sc.dt
    }

    pub fn creep_phases(&self) -> u32 {
        self.tracker.creep_phases()
    }

    /// Add or replace (by id) a box in the world.
    pub fn place_obstacle(&mut self, b: BoxObstacle) {
        self.world.obstacles.retain(|o| o.id != b.id);
        self.world.obstacles.push(b);
    }

    pub fn remove_obstacle(&mut self, id: &str) -> bool {
        let before = self.world.obstacles.len();
        self.world.obstacles.retain(|o| o.id != id);
        before != self.world.obstacles.len()
    }

    pub fn request_stop(&mut self) {
        if self.stop_request.is_none() {
            self.stop_request = Some(self.time());
        }
    }

    /// Operator steering torque; replaces scripted torque events while set.
    pub fn set_torque(&mut self, torque: f64) {
        self.ui_torque = Some(torque);
    }

    /// Change a whitelisted parameter during the run.
    pub fn set_param(&mut self, key: &str, value: serde_json::Value) -> Result<()> {
        if !LIVE_PARAM_WHITELIST.contains(&key) {
            return Err(Error::UnknownKey(key.to_string()));
        }
        self.sc.apply_value(key, value)?;
        self.tracker.set_config(self.sc.analyzer.clone());
        Ok(())
    }

    fn in_window(t: f64, start: f64, duration: f64) -> bool {
        t + TIME_EPS >= start && t + TIME_EPS < start + duration
    }

    fn fix_available(&self, t: f64) -> bool {
        !self.sc.events.iter().any(|e| matches!(*e, Event::LocalizationDropout { start, duration } if Self::in_window(t, start, duration)))
    }

    fn stalled(&self, producer: Producer, t: f64) -> bool {
        self.sc.events.iter().any(|e| {
            matches!(*e, Event::WatchdogFault { start, duration, producer: p } if p == producer && Self::in_window(t, start, duration))
        })
    }

    fn torque(&self, t: f64) -> f64 {
        if let Some(tq) = self.ui_torque {
            return tq;
        }
        self.sc
            .events
            .iter()
            .filter_map(|e| match *e {
                Event::SteeringTorque { start, duration, torque } if Self::in_window(t, start, duration) => Some(torque),
                _ => None,
            })
            .fold(0.0, |a: f64, b: f64| if b.abs() > a.abs() { b } else { a })
    }

    fn interface_ok(&self, t: f64) -> bool {
        !self.sc.events.iter().any(|e| matches!(*e, Event::InterfaceFailure { time } if t + TIME_EPS >= time))
    }

    fn scripted_stop(&self, t: f64) -> Option<f64> {
        self.sc
            .events
            .iter()
            .filter_map(|e| match *e {
                Event::StopRequest { time } if t + TIME_EPS >= time => Some(time),
                _ => None,
            })
            .reduce(f64::min)
    }

    fn run_scan(&mut self, t: f64) -> Result<()> {
        let scan_state = VehicleState { timestamp: t, ..self.state };
        let seed = scan_seed(self.lidar_seed, self.scans);
        let scan = simulate_scan(&self.world, &scan_state, &self.sc.lidar, seed, self.opts.exec);
        let (labels, mut grid) = perceive(&scan, self.state.steering_angle, &self.sc.classifier, self.sc.lidar.range_max);
        if let Some(dir) = &self.opts.scan_dump_dir {
            std::fs::write(dir.join(format!("scan_{:05}.csv", self.scans)), scan_dump_csv(&scan, &labels))?;
        }
        // the grid is placed in the map with the estimated pose at scan time
        let est = self.localizer.estimate().pose;
        let (sx, sy) = est.to_world(self.sc.lidar.mount_x, self.sc.lidar.mount_y);
        grid.origin = Pose2::new(sx, sy, est.heading + self.sc.lidar.mount_yaw);
        self.pending.push_back((self.tick + self.sc.run.grid_delay_ticks, grid));
        self.scans += 1;
        Ok(())
    }

    fn abort(&mut self, reason: impl Into<String>) -> Error {
        self.done = true;
        Error::RunAborted { tick: self.tick, reason: reason.into() }
    }

    /// Advance one control tick. Returns the tick's record, or `None` once
    /// the run has ended.
    pub fn step(&mut self) -> Result<Option<&TelemetryRecord>> {
        if self.done {
            return Ok(None);
        }
        let k = self.tick;
        let t = self.time();
        let sc_dt = self.sc.dt;

        // sensors
        if k.is_multiple_of(self.loc_period) && !self.stalled(Producer::Localization, t) {
            let available = self.fix_available(t);
            let truth = VehicleState { timestamp: t, ..self.state };
            self.localizer.fix(&truth, &self.active_path, self.hint, available);
            self.last_loc_tick = k;
        }
        if self.sc.run.perception && k.is_multiple_of(self.lidar_period) && !self.stalled(Producer::Lidar, t) {
            self.run_scan(t)?;
        }
        let mut delivered = false;
        while self.pending.front().is_some_and(|(due, _)| *due <= k) {
            let (_, grid) = self.pending.pop_front().expect("front checked");
            self.latest_grid = Some(grid);
            self.last_grid_tick = k;
            delivered = true;
        }

        // localization and path query
        let est = *self.localizer.estimate();
        let q = closest_point_near(&self.active_path, &est.pose, self.hint, self.sc.localization.search_window);
        self.hint = q.closest_index;
        let s_full = q.station + self.active_offset;
        let v_abs = self.state.speed.abs();

        // grid analysis
        let mut detection: Option<Option<f64>> = None;
        if delivered {
            let grid = self.latest_grid.as_ref().expect("just delivered");
            let horizon = zone_horizon(
                lookahead_distance_vel(v_abs, &self.sc.velocity),
                v_abs,
                self.sc.vehicle.max_decel,
                &self.sc.analyzer,
            );
            let hw = self.sc.analyzer.half_width(self.sc.vehicle.body_width, q.lateral_error);
            detection = Some(blocking_distance_direct(grid, &self.active_path, q.station, q.closest_index, horizon, hw));
        }
        for (i, e) in self.sc.events.iter().enumerate() {
            if let Event::ObstacleInjection { time, distance, duration } = *e {
                if Self::in_window(t, time, duration) {
                    let station = *self.injected[i].get_or_insert(s_full + distance);
                    let d = (station - s_full).max(0.0);
                    detection = Some(Some(match detection.flatten() {
                        Some(g) => g.min(d),
                        None => d,
                    }));
                }
            }
        }
        if let Some(d) = detection {
            self.tracker.observe(d, s_full, t);
        }
        self.report = self.tracker.report(s_full, v_abs, t);

        // guard
        let is_last = self.active + 1 == self.submaps.len();
        if self.stop_request.is_none() {
            self.stop_request = self.scripted_stop(t);
        }
        let watchdog_ok = k - self.last_loc_tick <= 3 * self.loc_period
            && (!self.sc.run.perception || k - self.last_grid_tick <= 3 * self.lidar_period);
        let torque = self.torque(t);
        let inputs = GuardInputs {
            obstacle_critical: self.report.critical,
            tracking_error: q.lateral_error,
            orientation_error: q.heading_error,
            localization_mode: est.mode,
            watchdog_ok,
            steering_torque: torque,
            ui_stop_requested: self.stop_request.is_some(),
            interface_ok: self.interface_ok(t),
            speed: self.state.speed,
            end_of_mission: is_last && q.remaining_distance <= self.sc.submap.end_window,
        };
        self.decision = guard_step(&inputs, &self.decision, &self.sc.guard);

        // steering keeps running in every mode; a LOST estimate is still the
        // best dead-reckoned pose available
        let steer_est = if est.mode == LocalizationMode::Lost {
            LocalizationEstimate { mode: LocalizationMode::DeadReckoning, ..est }
        } else {
            est
        };
        let steering_ref = match steering_command(
            &steer_est,
            &self.active_path,
            q.closest_index,
            self.sc.localization.search_window,
            v_abs,
            &self.sc.steering,
            &self.sc.vehicle,
        ) {
            Ok(o) if !o.hold => o.steering_ref,
            _ => self.steering_prev,
        };

        // velocity
        let vc = &self.sc.velocity;
        let fit = curve_radius(&self.active_path, q.closest_index, lookahead_distance_vel(v_abs, vc));
        let v_phys = physical_velocity(vc.mu, vc.g_earth, fit.radius)?;
        let v_teach = self.active_path.point(q.closest_index).teach_velocity;
        let v_unpenalized = reference_velocity(v_phys, v_teach, vc);
        let pin = PenaltyInputs {
            obstacle_distance: self.report.blocking_distance,
            critical_limit: critical_limit(v_abs),
            lateral_error: q.lateral_error,
            remaining_distance: q.remaining_distance,
            shutdown_elapsed: self.stop_request.map(|t0| (t - t0).max(0.0)),
        };
        let mut v_ref = apply_penalizations(v_unpenalized, &pin, &self.sc.penalization);
        if self.report.creep {
            v_ref = v_ref.min(self.tracker.creep_speed());
        }
        let threshold = if self.state.speed <= STOPPED { vc.start_threshold } else { vc.stop_threshold };
        if (!self.report.creep && v_ref < threshold) || self.reload_until.is_some() {
            v_ref = 0.0;
        }
        if let Some(o) = self.decision.velocity_override {
            v_ref = v_ref.min(o);
        }
        if !(steering_ref.is_finite() && v_ref.is_finite()) {
            return Err(self.abort("controller produced a non-finite command"));
        }
        self.steering_prev = steering_ref;

        // actuators
        let cmd = ActuatorCommand { steering_ref, velocity_ref: v_ref, emergency: self.decision.emergency_brake };
        let tq = closest_point_near(&self.full_path, &self.state.pose(), self.true_hint, self.sc.localization.search_window);
        self.true_hint = tq.closest_index;
        let apex = self.apexes.iter().any(|a| (tq.station - a).abs() <= self.sc.run.apex_window);
        let s = &self.state;
        self.records.push(TelemetryRecord {
            tick: k,
            time: t,
            x: s.x,
            y: s.y,
            heading: s.heading,
            speed: s.speed,
            steering_angle: s.steering_angle,
            est_x: est.pose.x,
            est_y: est.pose.y,
            est_heading: est.pose.heading,
            loc_mode: est.mode,
            time_since_fix: est.time_since_fix,
            lateral_error: tq.lateral_error,
            heading_error: tq.heading_error,
            station: tq.station,
            submap: self.active,
            steering_ref,
            v_ref,
            emergency: cmd.emergency,
            obst_dist: self.report.blocking_distance,
            obst_critical: self.report.critical,
            obst_held: self.report.held,
            creep_active: self.report.creep,
            mode: self.decision.mode,
            reason: self.decision.reason,
            led: self.decision.led,
            velocity_override: self.decision.velocity_override,
            torque,
            apex,
        });

        // dynamics and odometry
        let odo = wheel_odometry(&self.state, &self.sc.vehicle, &self.sc.odometry, &mut self.odo_rng);
        let next = match step_dynamics(&self.state, &cmd, &self.sc.vehicle, sc_dt) {
            Ok(n) => n,
            Err(e) => return Err(self.abort(e.to_string())),
        };
        self.tick += 1;
        self.state = VehicleState { timestamp: self.time(), ..next };
        self.localizer.propagate(&odo.twist(), sc_dt);

        // sub-map stop and reload
        if !is_last && self.reload_until.is_none() && q.remaining_distance <= self.sc.submap.end_window && self.state.speed <= STOPPED {
            if let TransitionPlan::Reload { load_delay, .. } = submap_transition(self.submaps.get(self.active + 1), &self.sc.submap) {
                self.reload_until = Some(self.time() + load_delay);
            }
        }
        if self.reload_until.is_some_and(|u| self.time() + TIME_EPS >= u) {
            self.reload_until = None;
            self.active += 1;
            let m = self.submaps[self.active];
            self.active_path = self.full_path.slice(m.start, m.end)?;
            self.active_offset = self.full_path.station(m.start);
            self.hint = 0;
        }

        let ended = self.decision.is_terminal() && self.state.speed <= STOPPED;
        if ended || self.time() + TIME_EPS >= self.sc.run.max_time {
            self.done = true;
        }
        Ok(self.records.last())
    }

    pub fn finish(self) -> RepeatOutcome {
        let summary = summarize(&self.records);
        RepeatOutcome { records: self.records, summary }
    }
}

/// Autonomous repeat of `path` under the scenario.
pub fn run_repeat(sc: &Scenario, path: &TeachPath, opts: RunOptions) -> Result<RepeatOutcome> {
    let mut sim = RepeatSim::new(sc.clone(), path.clone(), opts)?;
    while sim.step()?.is_some() {}
    Ok(sim.finish())
}

/// Teach then repeat on the same scenario.
pub fn run_teach_and_repeat(sc: &Scenario, opts: RunOptions) -> Result<(TeachOutcome, RepeatOutcome)> {
    let teach = run_teach(sc)?;
    let repeat = run_repeat(sc, &teach.path, opts)?;
    Ok((teach, repeat))
}
