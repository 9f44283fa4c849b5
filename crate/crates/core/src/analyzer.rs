//! Occupancy-grid analysis against the upcoming reference path: dangerous
//! zone, along-path blocking distance, criticality and the disappearance
//! hold with its creep-forward recheck.

use crate::geometry::segment_projection;
use crate::lidar::OccupancyGrid;
use crate::teach::TeachPath;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzerConfig {
    /// Zone widening per metre of tracking error.
    pub k_tol: f64,
    pub tol_min: f64,
    /// Added to the larger of look-ahead and stopping distance.
    pub horizon_margin: f64,
    pub hold_time: f64,
    pub creep_time: f64,
    pub creep_speed: f64,
    /// Speed at or below which the vehicle counts as stopped.
    pub stopped_speed: f64,
}

impl Default for AnalyzerConfig {
    fn default() -> Self {
        Self {
            k_tol: 1.0,
            tol_min: 0.2,
            horizon_margin: 5.0,
            hold_time: 2.0,
            creep_time: 3.0,
            creep_speed: 0.5,
            stopped_speed: 0.05,
        }
    }
}

impl AnalyzerConfig {
    pub fn validate(&self) -> crate::Result<()> {
        let ok = [self.k_tol, self.tol_min, self.horizon_margin, self.hold_time, self.creep_time, self.creep_speed, self.stopped_speed]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0);
        if ok {
            Ok(())
        } else {
            Err(crate::Error::Validation("analyzer parameters must be finite and >= 0".into()))
        }
    }

    pub fn half_width(&self, body_width: f64, tracking_error: f64) -> f64 {
        0.5 * body_width + self.k_tol * tracking_error.abs() + self.tol_min
    }
}

/// Zone length: the larger of the velocity look-ahead and the braking
/// distance, plus a margin.
pub fn zone_horizon(velocity_lookahead: f64, v_abs: f64, max_decel: f64, cfg: &AnalyzerConfig) -> f64 {
    velocity_lookahead.max(v_abs * v_abs / (2.0 * max_decel)) + cfg.horizon_margin
}

/// Upper end of the critical interval, `(v * 3.6 / 10)^2` metres.
pub fn critical_limit(v_abs: f64) -> f64 {
    let k = v_abs.abs() * 3.6 / 10.0;
    k * k
}

/// Closed interval `[0, critical_limit]`.
pub fn criticality(distance: Option<f64>, v_abs: f64) -> bool {
    distance.is_some_and(|d| d >= 0.0 && d <= critical_limit(v_abs))
}

/// Path segments covered by a zone, as world-frame endpoints with the
/// along-path distance of their start measured from the vehicle.
#[derive(Debug, Clone, PartialEq)]
struct ZoneSegment {
    a: (f64, f64),
    b: (f64, f64),
    s_a: f64,
    len: f64,
}

fn zone_segments(path: &TeachPath, station: f64, closest_index: usize, horizon: f64) -> Vec<ZoneSegment> {
    let pts = path.points();
    let mut out = Vec::new();
    let mut i = closest_index.saturating_sub(1);
    while i + 1 < pts.len() {
        let (p, q) = (&pts[i], &pts[i + 1]);
        let s_a = p.arclength - station;
        if s_a > horizon {
            break;
        }
        out.push(ZoneSegment {
            a: (p.pose.x, p.pose.y),
            b: (q.pose.x, q.pose.y),
            s_a,
            len: q.arclength - p.arclength,
        });
        i += 1;
    }
    out
}

/// Along-path distance of the path point nearest to `(x, y)`, or `None` if
/// that point is farther than `half_width` or outside `[0, horizon]`.
fn along_path_if_inside(segs: &[ZoneSegment], x: f64, y: f64, half_width: f64, horizon: f64) -> Option<f64> {
    let mut best: Option<(f64, f64)> = None;
    for s in segs {
        let (d, t, _) = segment_projection(s.a, s.b, (x, y));
        let along = s.s_a + t * s.len;
        if best.is_none_or(|(bd, _)| d.abs() < bd) {
            best = Some((d.abs(), along));
        }
    }
    best.filter(|&(d, along)| d <= half_width && (0.0..=horizon).contains(&along)).map(|(_, along)| along)
}

/// Grid cells whose centres lie within `half_width` of the path over the
/// next `horizon` metres, each with its along-path distance.
#[derive(Debug, Clone, PartialEq)]
pub struct DangerZone {
    pub half_width: f64,
    pub horizon: f64,
    pub cells: BTreeMap<(i32, i32), f64>,
}

impl DangerZone {
    pub fn contains(&self, c: (i32, i32)) -> bool {
        self.cells.contains_key(&c)
    }
}

/// `station` is the vehicle's projected arclength on the path.
pub fn build_danger_zone(
    grid: &OccupancyGrid,
    path: &TeachPath,
    station: f64,
    closest_index: usize,
    horizon: f64,
    half_width: f64,
) -> DangerZone {
    let segs = zone_segments(path, station, closest_index, horizon);
    let mut cells = BTreeMap::new();
    for s in &segs {
        let (ax, ay) = grid.origin.to_local(s.a.0, s.a.1);
        let (bx, by) = grid.origin.to_local(s.b.0, s.b.1);
        let lo = grid.cell_of(ax.min(bx) - half_width, ay.min(by) - half_width);
        let hi = grid.cell_of(ax.max(bx) + half_width, ay.max(by) + half_width);
        for i in lo.0..=hi.0 {
            for j in lo.1..=hi.1 {
                if !grid.in_bounds((i, j)) || cells.contains_key(&(i, j)) {
                    continue;
                }
                let (wx, wy) = grid.cell_center_world((i, j));
                if let Some(along) = along_path_if_inside(&segs, wx, wy, half_width, horizon) {
                    cells.insert((i, j), along);
                }
            }
        }
    }
    DangerZone { half_width, horizon, cells }
}

/// Shortest along-path distance to an occupied cell inside the zone.
pub fn blocking_distance(grid: &OccupancyGrid, zone: &DangerZone) -> Option<f64> {
    zone.cells
        .iter()
        .filter(|(c, _)| grid.is_occupied(**c))
        .map(|(_, &d)| d)
        .min_by(f64::total_cmp)
}

/// Same result as building the zone and intersecting it, computed from the
/// occupied cells only.
pub fn blocking_distance_direct(
    grid: &OccupancyGrid,
    path: &TeachPath,
    station: f64,
    closest_index: usize,
    horizon: f64,
    half_width: f64,
) -> Option<f64> {
    let segs = zone_segments(path, station, closest_index, horizon);
    grid.occupied()
        .iter()
        .filter_map(|&c| {
            let (wx, wy) = grid.cell_center_world(c);
            along_path_if_inside(&segs, wx, wy, half_width, horizon)
        })
        .min_by(f64::total_cmp)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ObstacleReport {
    pub blocking_distance: Option<f64>,
    pub critical: bool,
    pub held: bool,
    pub creep: bool,
    pub timestamp: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
enum Phase {
    Clear,
    Present,
    Held,
    Creep { since: f64 },
}

/// Disappearance hold. Detections arrive with each grid; the report is
/// refreshed every tick so a held distance shrinks as the vehicle advances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstacleTracker {
    cfg: AnalyzerConfig,
    phase: Phase,
    obstacle_station: f64,
    last_seen: f64,
    creep_phases: u32,
}

impl ObstacleTracker {
    pub fn new(cfg: AnalyzerConfig) -> Self {
        Self { cfg, phase: Phase::Clear, obstacle_station: 0.0, last_seen: f64::NEG_INFINITY, creep_phases: 0 }
    }

    /// Ingest the blocking distance measured on a fresh grid.
    pub fn observe(&mut self, detection: Option<f64>, station: f64, now: f64) {
        match detection {
            Some(d) => {
                self.obstacle_station = station + d;
                self.last_seen = now;
                self.phase = Phase::Present;
            }
            None => {
                if self.phase == Phase::Present {
                    self.phase = Phase::Held;
                }
            }
        }
    }

    /// Advance timers and produce this tick's report.
    pub fn report(&mut self, station: f64, v_abs: f64, now: f64) -> ObstacleReport {
        const EPS: f64 = 1e-9;
        if self.phase == Phase::Held && now - self.last_seen >= self.cfg.hold_time - EPS {
            self.phase = if v_abs <= self.cfg.stopped_speed {
                self.creep_phases += 1;
                Phase::Creep { since: now }
            } else {
                Phase::Clear
            };
        }
        if let Phase::Creep { since } = self.phase {
            if now - since >= self.cfg.creep_time - EPS {
                self.phase = Phase::Clear;
            }
        }
        let blocking_distance = match self.phase {
            Phase::Present | Phase::Held => Some((self.obstacle_station - station).max(0.0)),
            Phase::Clear | Phase::Creep { .. } => None,
        };
        ObstacleReport {
            blocking_distance,
            critical: criticality(blocking_distance, v_abs),
            held: self.phase == Phase::Held,
            creep: matches!(self.phase, Phase::Creep { .. }),
            timestamp: now,
        }
    }

    pub fn set_config(&mut self, cfg: AnalyzerConfig) {
        self.cfg = cfg;
    }

    /// Number of creep phases started so far.
    pub fn creep_phases(&self) -> u32 {
        self.creep_phases
    }

    pub fn creep_speed(&self) -> f64 {
        self.cfg.creep_speed
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose2;

    fn straight(len: f64) -> TeachPath {
        let n = (len / 0.5) as usize;
        let poses: Vec<(Pose2, f64)> = (0..=n).map(|i| (Pose2::new(i as f64 * 0.5, 0.0, 0.0), 5.0)).collect();
        TeachPath::from_poses(&poses).unwrap()
    }

    fn grid_at_origin() -> OccupancyGrid {
        OccupancyGrid::empty(0.2, 60.0, Pose2::default(), 0.0)
    }

    #[test]
    fn half_widths() {
        let cfg = AnalyzerConfig::default();
        assert!((cfg.half_width(1.6, 0.0) - 1.0).abs() < 1e-12);
        assert!((cfg.half_width(1.6, -0.5) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn critical_interval() {
        let v = 30.0 / 3.6;
        assert!((critical_limit(v) - 9.0).abs() < 1e-12);
        assert!(criticality(Some(8.0), v));
        assert!(criticality(Some(9.0), v));
        assert!(!criticality(Some(10.0), v));
        assert!(!criticality(Some(0.1), 0.0));
        assert!(criticality(Some(0.0), 0.0));
        assert!(!criticality(None, v));
    }

    #[test]
    fn blocking_on_straight_path() {
        let path = straight(60.0);
        let mut grid = grid_at_origin();
        assert_eq!(blocking_distance_direct(&grid, &path, 0.0, 0, 30.0, 1.0), None);
        grid.mark(grid.cell_of(12.0, 0.1));
        grid.mark(grid.cell_of(8.0, 3.0));
        let zone = build_danger_zone(&grid, &path, 0.0, 0, 30.0, 1.0);
        let d = blocking_distance(&grid, &zone).unwrap();
        assert!((d - 12.0).abs() <= 0.2, "{d}");
        assert_eq!(blocking_distance_direct(&grid, &path, 0.0, 0, 30.0, 1.0), Some(d));
        // lateral 3 m only
        let mut side = grid_at_origin();
        side.mark(side.cell_of(8.0, 3.0));
        assert_eq!(blocking_distance_direct(&side, &path, 0.0, 0, 30.0, 1.0), None);
    }

    #[test]
    fn zone_follows_curve() {
        let r = 20.0;
        let poses: Vec<(Pose2, f64)> = (0..=80)
            .map(|i| {
                let a = i as f64 * 0.025;
                (Pose2::new(r * a.sin(), r - r * a.cos(), a), 5.0)
            })
            .collect();
        let path = TeachPath::from_poses(&poses).unwrap();
        let grid = grid_at_origin();
        let zone = build_danger_zone(&grid, &path, 0.0, 0, 30.0, 1.0);
        // a point on the inside chord, far from the arc
        let chord = grid.cell_of(15.0, 4.0);
        assert!(!zone.contains(chord));
        let on_arc = grid.cell_of(r * 0.6f64.sin(), r - r * 0.6f64.cos());
        assert!(zone.contains(on_arc));
    }

    #[test]
    fn hold_then_clear_while_moving() {
        let mut t = ObstacleTracker::new(AnalyzerConfig::default());
        t.observe(Some(20.0), 0.0, 0.0);
        for k in 1..20 {
            let now = k as f64 * 0.1;
            t.observe(None, 0.0, now);
            let r = t.report(0.0, 3.0, now);
            assert!(r.held && r.blocking_distance == Some(20.0), "t={now}");
        }
        let r = t.report(1.0, 3.0, 2.0);
        assert_eq!(r.blocking_distance, None);
        assert_eq!(t.creep_phases(), 0);
    }

    #[test]
    fn creep_after_stopped_hold() {
        let mut t = ObstacleTracker::new(AnalyzerConfig::default());
        t.observe(Some(5.0), 10.0, 0.0);
        t.observe(None, 10.0, 0.1);
        assert!(t.report(10.0, 0.0, 1.99).held);
        let r = t.report(10.0, 0.0, 2.0);
        assert!(r.creep && r.blocking_distance.is_none());
        assert!(t.report(11.0, 0.5, 4.99).creep);
        let r = t.report(11.5, 0.5, 5.0);
        assert!(!r.creep && r.blocking_distance.is_none());
        assert_eq!(t.creep_phases(), 1);
    }

    #[test]
    fn reappearance_during_creep_restores_hold() {
        let mut t = ObstacleTracker::new(AnalyzerConfig::default());
        t.observe(Some(5.0), 0.0, 0.0);
        t.observe(None, 0.0, 0.1);
        assert!(t.report(0.0, 0.0, 2.0).creep);
        t.observe(Some(3.5), 1.0, 3.0);
        let r = t.report(1.0, 0.4, 3.0);
        assert!(!r.creep && r.blocking_distance == Some(3.5));
    }
}
