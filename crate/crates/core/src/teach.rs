//! Teach-phase recording: the stored pose path the repeat phase tracks, its
//! on-disk format, and the split into bounded-length sub-maps.

use crate::error::{Error, Result};
use crate::geometry::{angle_diff, wrap_angle, Pose2};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

pub const TEACH_PATH_VERSION_LINE: &str = "# tnr teach path v1";
pub const TEACH_PATH_HEADER: &str = "arclength,x,y,heading,teach_velocity";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    pub pose: Pose2,
    pub teach_velocity: f64,
    /// Cumulative distance from the path start.
    pub arclength: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeachPath {
    points: Vec<PathPoint>,
    total_length: f64,
}

impl TeachPath {
    /// Build from points whose arclength is already filled in.
    pub fn from_points(points: Vec<PathPoint>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::PathTooShort(points.len()));
        }
        for w in points.windows(2) {
            if !(w[1].arclength > w[0].arclength) {
                return Err(Error::Validation("path arclength must be strictly increasing".into()));
            }
        }
        if points.iter().any(|p| p.teach_velocity < 0.0 || !p.teach_velocity.is_finite()) {
            return Err(Error::Validation("teach velocity must be finite and >= 0".into()));
        }
        let total_length = points.last().unwrap().arclength - points[0].arclength;
        Ok(Self { points, total_length })
    }

    /// Build from poses and speeds, computing arclength from Euclidean spacing.
    pub fn from_poses(poses: &[(Pose2, f64)]) -> Result<Self> {
        let mut points = Vec::with_capacity(poses.len());
        let mut s = 0.0;
        for (i, &(pose, v)) in poses.iter().enumerate() {
            if i > 0 {
                let prev = poses[i - 1].0;
                s += prev.distance_to(pose.x, pose.y);
            }
            points.push(PathPoint { pose, teach_velocity: v, arclength: s });
        }
        Self::from_points(points)
    }

    pub fn points(&self) -> &[PathPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn total_length(&self) -> f64 {
        self.total_length
    }

    pub fn point(&self, i: usize) -> &PathPoint {
        &self.points[i]
    }

    pub fn first(&self) -> &PathPoint {
        &self.points[0]
    }

    pub fn last(&self) -> &PathPoint {
        self.points.last().expect("path has >= 2 points")
    }

    /// Arclength relative to the first point.
    pub fn station(&self, i: usize) -> f64 {
        self.points[i].arclength - self.points[0].arclength
    }

    pub fn max_spacing(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| w[0].pose.distance_to(w[1].pose.x, w[1].pose.y))
            .fold(0.0, f64::max)
    }

    /// Contiguous slice `[start, end]` rebased so its arclength starts at 0.
    pub fn slice(&self, start: usize, end: usize) -> Result<TeachPath> {
        if end >= self.points.len() || end <= start {
            return Err(Error::Validation(format!("bad slice [{start}, {end}]")));
        }
        let s0 = self.points[start].arclength;
        let pts = self.points[start..=end]
            .iter()
            .map(|p| PathPoint { arclength: p.arclength - s0, ..*p })
            .collect();
        TeachPath::from_points(pts)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.points.len() + 2));
        out.push_str(TEACH_PATH_VERSION_LINE);
        out.push('\n');
        out.push_str(TEACH_PATH_HEADER);
        out.push('\n');
        for p in &self.points {
            let _ = writeln!(
                out,
                "{:.6},{:.6},{:.6},{:.6},{:.6}",
                p.arclength, p.pose.x, p.pose.y, p.pose.heading, p.teach_velocity
            );
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(l) if l.trim() == TEACH_PATH_VERSION_LINE => {}
            other => {
                return Err(Error::Format(format!(
                    "expected `{TEACH_PATH_VERSION_LINE}`, found {:?}",
                    other.unwrap_or("")
                )))
            }
        }
        match lines.next() {
            Some(l) if l.trim() == TEACH_PATH_HEADER => {}
            _ => return Err(Error::Format("missing teach path header".into())),
        }
        let mut points = Vec::new();
        for (n, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<f64> = line
                .split(',')
                .map(|c| c.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Format(format!("row {}: {e}", n + 3)))?;
            if cols.len() != 5 {
                return Err(Error::Format(format!("row {}: expected 5 columns", n + 3)));
            }
            points.push(PathPoint {
                arclength: cols[0],
                pose: Pose2 { x: cols[1], y: cols[2], heading: wrap_angle(cols[3]) },
                teach_velocity: cols[4],
            });
        }
        TeachPath::from_points(points)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecordConfig {
    pub min_spacing: f64,
    pub max_spacing: f64,
}

impl Default for RecordConfig {
    fn default() -> Self {
        Self { min_spacing: 0.2, max_spacing: 0.5 }
    }
}

/// Incremental teach recorder: downsamples a time-ordered pose stream so
/// consecutive points are between `min_spacing` and `max_spacing` apart,
/// interpolating across gaps.
#[derive(Debug, Clone)]
pub struct TeachRecorder {
    cfg: RecordConfig,
    kept: Vec<(Pose2, f64)>,
    latest: Option<(Pose2, f64)>,
}

impl TeachRecorder {
    pub fn new(cfg: RecordConfig) -> Self {
        Self { cfg, kept: Vec::new(), latest: None }
    }

    pub fn push(&mut self, pose: Pose2, speed: f64) {
        self.latest = Some((pose, speed));
        let Some(&(last, last_v)) = self.kept.last() else {
            self.kept.push((pose, speed));
            return;
        };
        let d = last.distance_to(pose.x, pose.y);
        if d < self.cfg.min_spacing {
            return;
        }
        if d > self.cfg.max_spacing {
            let n = (d / self.cfg.max_spacing).ceil() as usize;
            let dh = angle_diff(pose.heading, last.heading);
            for k in 1..n {
                let t = k as f64 / n as f64;
                self.kept.push((
                    Pose2 {
                        x: last.x + t * (pose.x - last.x),
                        y: last.y + t * (pose.y - last.y),
                        heading: wrap_angle(last.heading + t * dh),
                    },
                    last_v + t * (speed - last_v),
                ));
            }
        }
        self.kept.push((pose, speed));
    }

    pub fn distance(&self) -> f64 {
        self.kept
            .windows(2)
            .map(|w| w[0].0.distance_to(w[1].0.x, w[1].0.y))
            .sum()
    }

    pub fn finish(mut self) -> Result<TeachPath> {
        if let (Some(latest), Some(&(last, _))) = (self.latest, self.kept.last()) {
            if last.distance_to(latest.0.x, latest.0.y) > 1e-6 {
                self.kept.push(latest);
            }
        }
        if self.kept.len() < 2 {
            return Err(Error::PathTooShort(self.kept.len()));
        }
        TeachPath::from_poses(&self.kept)
    }
}

pub fn record_teach<I>(samples: I, cfg: RecordConfig) -> Result<TeachPath>
where
    I: IntoIterator<Item = (Pose2, f64)>,
{
    let mut rec = TeachRecorder::new(cfg);
    for (pose, v) in samples {
        rec.push(pose, v);
    }
    rec.finish()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubMap {
    pub id: usize,
    /// First point index in the full path (inclusive).
    pub start: usize,
    /// Last point index in the full path (inclusive); shared with the next sub-map.
    pub end: usize,
    pub length: f64,
}

/// Greedy split by arclength. Consecutive sub-maps share their boundary point.
pub fn split_into_submaps(path: &TeachPath, max_len: f64) -> Vec<SubMap> {
    const EPS: f64 = 1e-9;
    let pts = path.points();
    let mut maps = Vec::new();
    let mut start = 0;
    while start < pts.len() - 1 {
        let s0 = pts[start].arclength;
        let mut end = start + 1;
        while end + 1 < pts.len() && pts[end + 1].arclength - s0 <= max_len + EPS {
            end += 1;
        }
        maps.push(SubMap { id: maps.len(), start, end, length: pts[end].arclength - s0 });
        start = end;
    }
    maps
}

pub fn submap_index_text(maps: &[SubMap]) -> String {
    maps.iter().map(|m| format!("{}\n", m.start)).collect()
}

/// Rebuild sub-maps from a stored start-index list.
pub fn submaps_from_index(path: &TeachPath, text: &str) -> Result<Vec<SubMap>> {
    let starts: Vec<usize> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.trim().parse::<usize>().map_err(|e| Error::Format(format!("submap index: {e}"))))
        .collect::<Result<_>>()?;
    if starts.first() != Some(&0) || starts.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Format("submap starts must begin at 0 and increase".into()));
    }
    let last = path.len() - 1;
    if *starts.last().unwrap() >= last {
        return Err(Error::Format("submap start beyond path end".into()));
    }
    Ok(starts
        .iter()
        .enumerate()
        .map(|(id, &start)| {
            let end = starts.get(id + 1).copied().unwrap_or(last);
            SubMap { id, start, end, length: path.point(end).arclength - path.point(start).arclength }
        })
        .collect())
}
