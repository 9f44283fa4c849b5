//! Geometric queries against a teach path.

use crate::geometry::{angle_diff, segment_projection, Pose2};
use crate::teach::TeachPath;
use serde::{Deserialize, Serialize};

/// Fitted radii above this are reported as a straight road.
pub const STRAIGHT_RADIUS: f64 = 1e4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathQueryResult {
    pub closest_index: usize,
    /// Signed distance to the path polyline near the closest point, left positive.
    pub lateral_error: f64,
    pub heading_error: f64,
    /// Along-path position of the projection, from the path start.
    pub station: f64,
    pub remaining_distance: f64,
}

/// Exhaustive closest-point search. Ties go to the larger index.
pub fn closest_point(path: &TeachPath, pose: &Pose2) -> PathQueryResult {
    closest_in_range(path, pose, 0, path.len() - 1)
}

/// Closest-point search restricted to points within `window` meters of
/// arclength around `hint`.
pub fn closest_point_near(path: &TeachPath, pose: &Pose2, hint: usize, window: f64) -> PathQueryResult {
    let hint = hint.min(path.len() - 1);
    let s_hint = path.station(hint);
    let mut lo = hint;
    while lo > 0 && s_hint - path.station(lo - 1) <= window {
        lo -= 1;
    }
    let mut hi = hint;
    while hi + 1 < path.len() && path.station(hi + 1) - s_hint <= window {
        hi += 1;
    }
    closest_in_range(path, pose, lo, hi)
}

fn closest_in_range(path: &TeachPath, pose: &Pose2, lo: usize, hi: usize) -> PathQueryResult {
    let pts = path.points();
    let mut best = lo;
    let mut best_d2 = f64::INFINITY;
    for (i, p) in pts.iter().enumerate().take(hi + 1).skip(lo) {
        let dx = p.pose.x - pose.x;
        let dy = p.pose.y - pose.y;
        let d2 = dx * dx + dy * dy;
        if d2 <= best_d2 {
            best_d2 = d2;
            best = i;
        }
    }
    project_at(path, pose, best)
}

/// Lateral/heading error and station of `pose` against the segments adjacent
/// to point `idx`.
pub fn project_at(path: &TeachPath, pose: &Pose2, idx: usize) -> PathQueryResult {
    let pts = path.points();
    let p = (pose.x, pose.y);
    let candidates = [idx.checked_sub(1), if idx + 1 < pts.len() { Some(idx) } else { None }];
    let mut best: Option<(f64, f64, f64, usize)> = None;
    for a in candidates.into_iter().flatten() {
        let pa = &pts[a].pose;
        let pb = &pts[a + 1].pose;
        let (d, t, len) = segment_projection((pa.x, pa.y), (pb.x, pb.y), p);
        if best.is_none_or(|b| d.abs() < b.0.abs()) {
            best = Some((d, t, len, a));
        }
    }
    let (lateral, t, len, seg) = best.expect("path has at least one segment");
    let a = &pts[seg].pose;
    let b = &pts[seg + 1].pose;
    let tangent = (b.y - a.y).atan2(b.x - a.x);
    let station = (path.station(seg) + t * len).min(path.total_length());
    PathQueryResult {
        closest_index: idx,
        lateral_error: lateral,
        heading_error: angle_diff(pose.heading, tangent),
        station,
        remaining_distance: (path.total_length() - station).max(0.0),
    }
}

/// First point whose along-path distance from `start` reaches `lookahead`,
/// summing segment lengths. Returns the last point if the path ends first.
pub fn lookahead_point(path: &TeachPath, start: usize, lookahead: f64) -> usize {
    let pts = path.points();
    let mut acc = 0.0;
    let mut i = start.min(pts.len() - 1);
    while i + 1 < pts.len() {
        let a = &pts[i].pose;
        let b = &pts[i + 1].pose;
        acc += a.distance_to(b.x, b.y);
        i += 1;
        if acc >= lookahead {
            break;
        }
    }
    i
}

pub fn remaining_distance(path: &TeachPath, index: usize) -> f64 {
    path.total_length() - path.station(index)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveFit {
    /// Fitted radius in meters; `f64::INFINITY` for straight or degenerate windows.
    pub radius: f64,
    /// Fewer than three points were available.
    pub degenerate: bool,
    pub center: Option<(f64, f64)>,
}

/// Algebraic (Kasa) least-squares circle fit over the points within `window`
/// meters of arclength ahead of `start`.
pub fn curve_radius(path: &TeachPath, start: usize, window: f64) -> CurveFit {
    let s0 = path.station(start.min(path.len() - 1));
    let xy: Vec<(f64, f64)> = path.points()[start.min(path.len() - 1)..]
        .iter()
        .take_while(|p| p.arclength - path.first().arclength - s0 <= window + 1e-9)
        .map(|p| (p.pose.x, p.pose.y))
        .collect();
    fit_circle_kasa(&xy)
}

pub fn fit_circle_kasa(xy: &[(f64, f64)]) -> CurveFit {
    let straight = |degenerate| CurveFit { radius: f64::INFINITY, degenerate, center: None };
    if xy.len() < 3 {
        return straight(true);
    }
    let n = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / n;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut suu, mut suv, mut svv, mut szu, mut szv, mut sz) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for &(x, y) in xy {
        let u = x - mx;
        let v = y - my;
        let z = u * u + v * v;
        suu += u * u;
        suv += u * v;
        svv += v * v;
        szu += z * u;
        szv += z * v;
        sz += z;
    }
    let det = suu * svv - suv * suv;
    let scale = suu * svv;
    if scale <= 0.0 || det.abs() <= 1e-12 * scale {
        return straight(false);
    }
    // [suu suv; suv svv] [D E]^T = -[szu szv]^T, F = -sz / n
    let d = (-szu * svv + szv * suv) / det;
    let e = (-szv * suu + szu * suv) / det;
    let f = -sz / n;
    let cu = -0.5 * d;
    let cv = -0.5 * e;
    let r2 = cu * cu + cv * cv - f;
    if !(r2 > 0.0) {
        return straight(false);
    }
    let radius = r2.sqrt();
    if radius > STRAIGHT_RADIUS || !radius.is_finite() {
        return straight(false);
    }
    CurveFit { radius, degenerate: false, center: Some((cu + mx, cv + my)) }
}
