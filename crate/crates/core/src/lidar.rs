//! Simulated multi-ring LiDAR and the ring-based road/obstacle classifier.
//!
//! Each ring (one beam elevation) traces a circle on flat ground, or an
//! ellipse on a graded road. Within the frontal sector the classifier finds
//! the modal ground distance of every ring, seeds road points from it and
//! sweeps azimuth neighbours outward: a small `|dx| + |dz|` step keeps the
//! road label, a jump marks an obstacle. The `y` coordinate is never used.

use crate::exec::Exec;
use crate::geometry::{wrap_angle, Pose2};
use crate::rng::{derive_seed, stream};
use crate::vehicle::VehicleState;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LidarConfig {
    /// Beam elevations in radians, ascending.
    pub ring_elevations: Vec<f64>,
    pub azimuth_step: f64,
    pub range_max: f64,
    pub mount_height: f64,
    /// Mount position forward/left of the rear axle and yaw offset.
    pub mount_x: f64,
    pub mount_y: f64,
    pub mount_yaw: f64,
    pub range_noise_std: f64,
    pub rate_hz: f64,
}

impl Default for LidarConfig {
    fn default() -> Self {
        Self {
            ring_elevations: (0..16).map(|i| (-15.0 + 2.0 * i as f64).to_radians()).collect(),
            azimuth_step: 0.4f64.to_radians(),
            range_max: 60.0,
            mount_height: 1.6,
            mount_x: 1.0,
            mount_y: 0.0,
            mount_yaw: 0.0,
            range_noise_std: 0.02,
            rate_hz: 10.0,
        }
    }
}

impl LidarConfig {
    pub fn validate(&self) -> crate::Result<()> {
        let sorted = self.ring_elevations.windows(2).all(|w| w[1] > w[0]);
        if !sorted || self.ring_elevations.is_empty() {
            return Err(crate::Error::Validation("ring elevations must be non-empty and ascending".into()));
        }
        if !(self.azimuth_step > 0.0 && self.range_max > 0.0 && self.mount_height > 0.0 && self.rate_hz > 0.0)
            || !(self.range_noise_std >= 0.0)
        {
            return Err(crate::Error::Validation("lidar step, range, height and rate must be > 0".into()));
        }
        Ok(())
    }

    pub fn azimuth_count(&self) -> usize {
        (2.0 * PI / self.azimuth_step).round() as usize
    }

    /// World pose of the sensor for a vehicle state.
    pub fn sensor_pose(&self, state: &VehicleState) -> Pose2 {
        let (x, y) = state.pose().to_world(self.mount_x, self.mount_y);
        Pose2::new(x, y, state.heading + self.mount_yaw)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    /// Half-angle of the frontal sector around the steering direction.
    pub frontal_half_angle: f64,
    pub bin_width: f64,
    pub min_points: usize,
    /// Limit on `|dx| + |dz|` between azimuth neighbours on the road.
    pub adjacency_tolerance: f64,
    /// Steepest road grade (radians) a ring's road distance is checked against.
    pub max_grade: f64,
    /// Height above the road plane fitted through lower rings that separates
    /// road from obstacle points.
    pub ground_tolerance: f64,
    pub grid_resolution: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            frontal_half_angle: 45f64.to_radians(),
            bin_width: 0.25,
            min_points: 20,
            adjacency_tolerance: 0.5,
            max_grade: 0.08,
            ground_tolerance: 0.1,
            grid_resolution: 0.2,
        }
    }
}

/// Road surface: plane `z = grade_x * x + grade_y * y`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ground {
    pub grade_x: f64,
    pub grade_y: f64,
}

impl Ground {
    pub fn height(&self, x: f64, y: f64) -> f64 {
        self.grade_x * x + self.grade_y * y
    }
}

/// Static axis-aligned box standing on the road, with optional visibility window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxObstacle {
    pub id: String,
    pub x: f64,
    pub y: f64,
    /// Extent along world x.
    pub length: f64,
    /// Extent along world y.
    pub width: f64,
    pub height: f64,
    pub spawn: Option<f64>,
    pub despawn: Option<f64>,
    /// Alternate visible/hidden every `flicker_period` seconds.
    pub flicker_period: Option<f64>,
}

impl BoxObstacle {
    pub fn visible_at(&self, t: f64) -> bool {
        if self.spawn.is_some_and(|s| t < s) || self.despawn.is_some_and(|d| t >= d) {
            return false;
        }
        match self.flicker_period {
            Some(p) if p > 0.0 => {
                let since = t - self.spawn.unwrap_or(0.0);
                ((since / p + 1e-9).floor() as i64) % 2 == 0
            }
            _ => true,
        }
    }

    fn bounds(&self, ground: &Ground) -> [f64; 6] {
        let z0 = ground.height(self.x, self.y);
        [
            self.x - 0.5 * self.length,
            self.x + 0.5 * self.length,
            self.y - 0.5 * self.width,
            self.y + 0.5 * self.width,
            z0,
            z0 + self.height,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct World {
    pub ground: Ground,
    pub obstacles: Vec<BoxObstacle>,
}

/// What a ray actually hit; simulation truth, never read by the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Surface {
    Ground,
    Obstacle(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RingPoint {
    /// Sensor-frame azimuth.
    pub azimuth: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub surface: Surface,
    /// True height of the hit above the road surface.
    pub hit_height: f64,
}

impl RingPoint {
    pub fn planar_range(&self) -> f64 {
        self.x.hypot(self.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ring {
    pub elevation: f64,
    /// Sorted by azimuth.
    pub points: Vec<RingPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RingScan {
    pub rings: Vec<Ring>,
    pub timestamp: f64,
    /// Sensor pose in the world at scan time.
    pub sensor_pose: Pose2,
    pub mount_yaw: f64,
    pub mount_height: f64,
}

impl RingScan {
    pub fn point_count(&self) -> usize {
        self.rings.iter().map(|r| r.points.len()).sum()
    }
}

fn ray_box(o: [f64; 3], d: [f64; 3], b: &[f64; 6]) -> Option<f64> {
    let mut t0 = f64::NEG_INFINITY;
    let mut t1 = f64::INFINITY;
    for k in 0..3 {
        let (lo, hi) = (b[2 * k], b[2 * k + 1]);
        if d[k].abs() < 1e-12 {
            if o[k] < lo || o[k] > hi {
                return None;
            }
        } else {
            let a = (lo - o[k]) / d[k];
            let c = (hi - o[k]) / d[k];
            t0 = t0.max(a.min(c));
            t1 = t1.min(a.max(c));
        }
    }
    (t1 >= t0 && t0 > 1e-9).then_some(t0)
}

/// Ray-cast one full revolution. Deterministic for a fixed `seed`; each ring
/// draws noise from its own stream so the rings can be cast in parallel.
pub fn simulate_scan(
    world: &World,
    state: &VehicleState,
    cfg: &LidarConfig,
    seed: u64,
    exec: Exec,
) -> RingScan {
    let sensor = cfg.sensor_pose(state);
    let origin_z = world.ground.height(sensor.x, sensor.y) + cfg.mount_height;
    let o = [sensor.x, sensor.y, origin_z];
    let visible: Vec<(u32, [f64; 6])> = world
        .obstacles
        .iter()
        .enumerate()
        .filter(|(_, b)| b.visible_at(state.timestamp))
        .filter(|(_, b)| {
            let reach = cfg.range_max + 0.5 * b.length.hypot(b.width);
            sensor.distance_to(b.x, b.y) <= reach
        })
        .map(|(i, b)| (i as u32, b.bounds(&world.ground)))
        .collect();
    let n_az = cfg.azimuth_count();
    let g = world.ground;
    let rings = exec.map_range(cfg.ring_elevations.len(), |ri| {
        let elevation = cfg.ring_elevations[ri];
        let mut rng = stream(seed, ri as u64);
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let (se, ce) = elevation.sin_cos();
        let mut points = Vec::new();
        for k in 0..n_az {
            let noise: f64 = normal.sample(&mut rng);
            let az = -PI + k as f64 * cfg.azimuth_step;
            let (sa, ca) = (sensor.heading + az).sin_cos();
            let d = [ce * ca, ce * sa, se];
            let mut best: Option<(f64, Surface)> = None;
            let denom = d[2] - g.grade_x * d[0] - g.grade_y * d[1];
            if denom.abs() > 1e-12 {
                let t = (g.grade_x * o[0] + g.grade_y * o[1] - o[2]) / denom;
                if t > 0.0 {
                    best = Some((t, Surface::Ground));
                }
            }
            for (id, b) in &visible {
                if let Some(t) = ray_box(o, d, b) {
                    if best.is_none_or(|(bt, _)| t < bt) {
                        best = Some((t, Surface::Obstacle(*id)));
                    }
                }
            }
            let Some((t, surface)) = best else { continue };
            if t > cfg.range_max {
                continue;
            }
            let hit_height = match surface {
                Surface::Ground => 0.0,
                Surface::Obstacle(_) => {
                    let (hx, hy, hz) = (o[0] + t * d[0], o[1] + t * d[1], o[2] + t * d[2]);
                    hz - g.height(hx, hy)
                }
            };
            let r = (t + noise * cfg.range_noise_std).clamp(0.0, cfg.range_max);
            let (saz, caz) = az.sin_cos();
            points.push(RingPoint {
                azimuth: az,
                x: r * ce * caz,
                y: r * ce * saz,
                z: r * se,
                surface,
                hit_height,
            });
        }
        Ring { elevation, points }
    });
    RingScan {
        rings,
        timestamp: state.timestamp,
        sensor_pose: sensor,
        mount_yaw: cfg.mount_yaw,
        mount_height: cfg.mount_height,
    }
}

/// Seed for scan number `index` of a run.
pub fn scan_seed(run_seed: u64, index: u64) -> u64 {
    derive_seed(run_seed, index)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PointLabel {
    Road,
    Obstacle,
    Ignored,
}

impl PointLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            PointLabel::Road => "ROAD",
            PointLabel::Obstacle => "OBSTACLE",
            PointLabel::Ignored => "IGNORED",
        }
    }
}

/// Labels parallel to `RingScan::rings[r].points`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledScan {
    pub labels: Vec<Vec<PointLabel>>,
}

impl LabeledScan {
    pub fn count(&self, label: PointLabel) -> usize {
        self.labels.iter().flatten().filter(|&&l| l == label).count()
    }
}

/// Indices of the points inside the frontal sector, per ring.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontalSelection {
    pub retained: Vec<Vec<usize>>,
}

/// Keep points ahead of the vehicle whose vehicle-frame azimuth is within the
/// sector half-angle of the current steering angle.
pub fn frontal_filter(scan: &RingScan, steering_angle: f64, cfg: &ClassifierConfig) -> FrontalSelection {
    let retained = scan
        .rings
        .iter()
        .map(|ring| {
            ring.points
                .iter()
                .enumerate()
                .filter(|(_, p)| in_frontal_sector(p, scan.mount_yaw, steering_angle, cfg.frontal_half_angle))
                .map(|(i, _)| i)
                .collect()
        })
        .collect();
    FrontalSelection { retained }
}

pub fn in_frontal_sector(p: &RingPoint, mount_yaw: f64, steering_angle: f64, half_angle: f64) -> bool {
    let az = wrap_angle(p.y.atan2(p.x) + mount_yaw);
    az.abs() < 0.5 * PI && wrap_angle(az - steering_angle).abs() <= half_angle + 1e-12
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoadInterval {
    pub lo: f64,
    pub hi: f64,
    pub mode_center: f64,
    pub mode_count: usize,
}

impl RoadInterval {
    pub fn contains(&self, r: f64) -> bool {
        r >= self.lo && r <= self.hi
    }
}

/// Modal planar distance of a ring: histogram with bins centred on multiples
/// of `bin_width`, interval = modal bin centre +- one bin width.
pub fn road_distance(ranges: &[f64], cfg: &ClassifierConfig) -> Option<RoadInterval> {
    if ranges.len() < cfg.min_points.max(1) {
        return None;
    }
    let w = cfg.bin_width;
    let mut bins: Vec<i64> = ranges.iter().map(|r| (r / w).round() as i64).collect();
    bins.sort_unstable();
    let (mut best_bin, mut best_count) = (bins[0], 0usize);
    let mut i = 0;
    while i < bins.len() {
        let j = i + bins[i..].partition_point(|&b| b == bins[i]);
        if j - i > best_count {
            best_count = j - i;
            best_bin = bins[i];
        }
        i = j;
    }
    let c = best_bin as f64 * w;
    Some(RoadInterval { lo: c - w, hi: c + w, mode_center: c, mode_count: best_count })
}

/// Planar road distances a ring can see on a road whose grade stays within
/// `max_grade`.
pub fn plausible_road_band(elevation: f64, mount_height: f64, max_grade: f64) -> Option<(f64, f64)> {
    let down = (-elevation).tan();
    let g = max_grade.tan();
    if down + g <= 0.0 {
        return None;
    }
    let lo = mount_height / (down + g);
    let hi = if down > g { mount_height / (down - g) } else { f64::INFINITY };
    Some((lo, hi))
}

fn is_zero_ring(elevation: f64) -> bool {
    elevation.abs() < 1e-6
}

/// Road interval for one ring after the frontal filter, or `None` when the
/// ring is skipped (too few points, or a modal distance no road could produce).
pub fn ring_road_interval(
    ring: &Ring,
    retained: &[usize],
    mount_height: f64,
    cfg: &ClassifierConfig,
) -> Option<RoadInterval> {
    if is_zero_ring(ring.elevation) {
        return None;
    }
    let ranges: Vec<f64> = retained.iter().map(|&i| ring.points[i].planar_range()).collect();
    let interval = road_distance(&ranges, cfg)?;
    let (lo, hi) = plausible_road_band(ring.elevation, mount_height, cfg.max_grade)?;
    (interval.mode_center >= lo - cfg.bin_width && interval.mode_center <= hi + cfg.bin_width)
        .then_some(interval)
}

fn adjacent_delta(a: &RingPoint, b: &RingPoint) -> f64 {
    (a.x - b.x).abs() + (a.z - b.z).abs()
}

/// Ring labels from the seed interval and the two neighbour sweeps. Points
/// neither sweep reaches are returned separately, provisionally OBSTACLE.
fn classify_ring(ring: &Ring, retained: &[usize], seeds: &[bool], tol: f64) -> (Vec<PointLabel>, Vec<usize>) {
    let mut labels = vec![PointLabel::Ignored; ring.points.len()];
    if is_zero_ring(ring.elevation) {
        for &i in retained {
            labels[i] = PointLabel::Obstacle;
        }
        return (labels, Vec::new());
    }
    let n = retained.len();
    let mut local: Vec<Option<PointLabel>> = seeds.iter().map(|&s| s.then_some(PointLabel::Road)).collect();
    let step = |local: &mut Vec<Option<PointLabel>>, from: usize, to: usize| {
        if local[to].is_some() {
            return;
        }
        let d = adjacent_delta(&ring.points[retained[from]], &ring.points[retained[to]]);
        local[to] = match local[from] {
            Some(PointLabel::Road) if d <= tol => Some(PointLabel::Road),
            Some(PointLabel::Road) => Some(PointLabel::Obstacle),
            Some(PointLabel::Obstacle) if d <= tol => Some(PointLabel::Obstacle),
            _ => None,
        };
    };
    for k in 1..n {
        step(&mut local, k - 1, k);
    }
    for k in (0..n.saturating_sub(1)).rev() {
        step(&mut local, k + 1, k);
    }
    let mut unreached = Vec::new();
    for (k, &i) in retained.iter().enumerate() {
        labels[i] = local[k].unwrap_or_else(|| {
            unreached.push(i);
            PointLabel::Obstacle
        });
    }
    (labels, unreached)
}

/// Least-squares plane `z = a x + b y + c` through the points, or `None`
/// when they do not span a plane.
pub fn fit_plane(points: impl IntoIterator<Item = (f64, f64, f64)>) -> Option<[f64; 3]> {
    // normal equations, centred for conditioning
    let pts: Vec<(f64, f64, f64)> = points.into_iter().collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let (mx, my, mz) = pts.iter().fold((0.0, 0.0, 0.0), |a, p| (a.0 + p.0 / n, a.1 + p.1 / n, a.2 + p.2 / n));
    let (mut sxx, mut sxy, mut syy, mut sxz, mut syz) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(x, y, z) in &pts {
        let (dx, dy, dz) = (x - mx, y - my, z - mz);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
        sxz += dx * dz;
        syz += dy * dz;
    }
    let det = sxx * syy - sxy * sxy;
    if !(det > 1e-9 * (sxx * syy).max(1e-300)) || !(sxx > 0.0 && syy > 0.0) {
        return None;
    }
    let a = (sxz * syy - syz * sxy) / det;
    let b = (syz * sxx - sxz * sxy) / det;
    Some([a, b, mz - a * mx - b * my])
}

fn height_above(plane: &[f64; 3], p: &RingPoint) -> f64 {
    p.z - (plane[0] * p.x + plane[1] * p.y + plane[2])
}

/// Seed points of a ring: those inside its modal road interval. Once lower
/// rings have produced a road plane, a modal interval lying off that plane
/// (a wall face that outnumbers the road on a sloped ring) is replaced by
/// the points on the plane.
fn ring_seeds(ring: &Ring, retained: &[usize], mount_height: f64, plane: Option<&[f64; 3]>, cfg: &ClassifierConfig) -> Vec<bool> {
    let interval = ring_road_interval(ring, retained, mount_height, cfg);
    let modal: Vec<bool> = retained
        .iter()
        .map(|&i| interval.is_some_and(|iv| iv.contains(ring.points[i].planar_range())))
        .collect();
    let Some(plane) = plane else { return modal };
    let mut heights: Vec<f64> =
        retained.iter().zip(&modal).filter(|(_, &m)| m).map(|(&i, _)| height_above(plane, &ring.points[i])).collect();
    if !heights.is_empty() {
        heights.sort_by(f64::total_cmp);
        if heights[heights.len() / 2].abs() <= cfg.ground_tolerance {
            return modal;
        }
    }
    retained.iter().map(|&i| height_above(plane, &ring.points[i]).abs() <= cfg.ground_tolerance).collect()
}

/// Label every point of the scan. Points outside the frontal sector are
/// IGNORED; points on a 0-degree ring are always OBSTACLE.
///
/// Rings are processed from the lowest upwards, each one refining a plane
/// fitted through the road points found so far. Points that no neighbour
/// sweep reaches are finally judged by their height above that plane, or
/// stay OBSTACLE when no plane could be fitted.
pub fn classify(scan: &RingScan, selection: &FrontalSelection, cfg: &ClassifierConfig) -> LabeledScan {
    let mut labels = Vec::with_capacity(scan.rings.len());
    let mut unreached = Vec::with_capacity(scan.rings.len());
    let mut road: Vec<(f64, f64, f64)> = Vec::new();
    let mut plane: Option<[f64; 3]> = None;
    for (ring, retained) in scan.rings.iter().zip(&selection.retained) {
        let seeds = ring_seeds(ring, retained, scan.mount_height, plane.as_ref(), cfg);
        let (mut ls, mut un) = classify_ring(ring, retained, &seeds, cfg.adjacency_tolerance);
        if let (Some(pl), false) = (plane.as_ref(), is_zero_ring(ring.elevation)) {
            // the road plane of the lower rings overrules the neighbour sweeps
            for &i in retained {
                let h = height_above(pl, &ring.points[i]);
                if h.abs() <= cfg.ground_tolerance {
                    ls[i] = PointLabel::Road;
                } else if h > cfg.ground_tolerance {
                    ls[i] = PointLabel::Obstacle;
                }
            }
            un.clear();
        }
        let before = road.len();
        road.extend(ring.points.iter().zip(&ls).filter(|(_, l)| **l == PointLabel::Road).map(|(p, _)| (p.x, p.y, p.z)));
        if road.len() > before {
            plane = fit_plane(road.iter().copied()).or(plane);
        }
        labels.push(ls);
        unreached.push(un);
    }
    if let Some(plane) = plane {
        for (ri, idx) in unreached.iter().enumerate() {
            for &i in idx {
                if height_above(&plane, &scan.rings[ri].points[i]) <= cfg.ground_tolerance {
                    labels[ri][i] = PointLabel::Road;
                }
            }
        }
    }
    LabeledScan { labels }
}

/// Occupancy grid in the sensor frame at scan time (x forward, y left).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyGrid {
    pub resolution: f64,
    /// Cells span indices `[-half_cells, half_cells)` on both axes.
    pub half_cells: i32,
    pub origin: Pose2,
    pub timestamp: f64,
    /// Sorted, deduplicated occupied cells.
    occupied: Vec<(i32, i32)>,
}

impl OccupancyGrid {
    pub fn empty(resolution: f64, range_max: f64, origin: Pose2, timestamp: f64) -> Self {
        Self {
            resolution,
            half_cells: (range_max / resolution).ceil() as i32,
            origin,
            timestamp,
            occupied: Vec::new(),
        }
    }

    pub fn cell_of(&self, x: f64, y: f64) -> (i32, i32) {
        ((x / self.resolution).floor() as i32, (y / self.resolution).floor() as i32)
    }

    pub fn in_bounds(&self, c: (i32, i32)) -> bool {
        let h = self.half_cells;
        (-h..h).contains(&c.0) && (-h..h).contains(&c.1)
    }

    pub fn cell_center(&self, c: (i32, i32)) -> (f64, f64) {
        ((c.0 as f64 + 0.5) * self.resolution, (c.1 as f64 + 0.5) * self.resolution)
    }

    pub fn cell_center_world(&self, c: (i32, i32)) -> (f64, f64) {
        let (x, y) = self.cell_center(c);
        self.origin.to_world(x, y)
    }

    pub fn mark(&mut self, c: (i32, i32)) {
        if !self.in_bounds(c) {
            return;
        }
        if let Err(pos) = self.occupied.binary_search(&c) {
            self.occupied.insert(pos, c);
        }
    }

    pub fn is_occupied(&self, c: (i32, i32)) -> bool {
        self.occupied.binary_search(&c).is_ok()
    }

    pub fn occupied(&self) -> &[(i32, i32)] {
        &self.occupied
    }
}

pub fn project_to_grid(scan: &RingScan, labels: &LabeledScan, cfg: &ClassifierConfig, range_max: f64) -> OccupancyGrid {
    let mut grid = OccupancyGrid::empty(cfg.grid_resolution, range_max, scan.sensor_pose, scan.timestamp);
    let mut cells: Vec<(i32, i32)> = Vec::new();
    for (ring, ring_labels) in scan.rings.iter().zip(&labels.labels) {
        for (p, l) in ring.points.iter().zip(ring_labels) {
            if *l == PointLabel::Obstacle {
                cells.push(grid.cell_of(p.x, p.y));
            }
        }
    }
    cells.sort_unstable();
    cells.dedup();
    cells.retain(|c| grid.in_bounds(*c));
    grid.occupied = cells;
    grid
}

/// Full perception chain for one scan.
pub fn perceive(scan: &RingScan, steering_angle: f64, cfg: &ClassifierConfig, range_max: f64) -> (LabeledScan, OccupancyGrid) {
    let sel = frontal_filter(scan, steering_angle, cfg);
    let labels = classify(scan, &sel, cfg);
    let grid = project_to_grid(scan, &labels, cfg, range_max);
    (labels, grid)
}

/// `ring,azimuth,x,y,z,label` rows for offline inspection.
pub fn scan_dump_csv(scan: &RingScan, labels: &LabeledScan) -> String {
    let mut out = String::from("ring,azimuth,x,y,z,label\n");
    for (ri, (ring, ls)) in scan.rings.iter().zip(&labels.labels).enumerate() {
        for (p, l) in ring.points.iter().zip(ls) {
            let _ = writeln!(out, "{ri},{:.6},{:.6},{:.6},{:.6},{}", p.azimuth, p.x, p.y, p.z, l.as_str());
        }
    }
    out
}
