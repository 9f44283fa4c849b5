use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Planar pose: position in meters, heading in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self { x, y, heading: wrap_angle(heading) }
    }

    pub fn distance_to(&self, x: f64, y: f64) -> f64 {
        (x - self.x).hypot(y - self.y)
    }

    /// Express a world point in this pose's frame (x forward, y left).
    pub fn to_local(&self, x: f64, y: f64) -> (f64, f64) {
        let (s, c) = self.heading.sin_cos();
        let dx = x - self.x;
        let dy = y - self.y;
        (c * dx + s * dy, -s * dx + c * dy)
    }

    /// Inverse of [`Pose2::to_local`].
    pub fn to_world(&self, x: f64, y: f64) -> (f64, f64) {
        let (s, c) = self.heading.sin_cos();
        (self.x + c * x - s * y, self.y + s * x + c * y)
    }
}

/// Wrap an angle to (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let mut r = (a + PI).rem_euclid(2.0 * PI) - PI;
    if r <= -PI {
        r += 2.0 * PI;
    }
    r
}

/// Shortest signed difference `a - b`.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    wrap_angle(a - b)
}

/// Signed distance from `p` to segment `a -> b` (left positive) and the
/// projection parameter clamped to [0, 1].
pub(crate) fn segment_projection(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> (f64, f64, f64) {
    let dx = b.0 - a.0;
    let dy = b.1 - a.1;
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let qx = a.0 + t * dx;
    let qy = a.1 + t * dy;
    let dist = (p.0 - qx).hypot(p.1 - qy);
    let cross = dx * (p.1 - a.1) - dy * (p.0 - a.0);
    (if cross >= 0.0 { dist } else { -dist }, t, len2.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_keeps_half_open_interval() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(0.5 + 4.0 * PI) - 0.5).abs() < 1e-12);
        assert!((angle_diff(-3.0, 3.0) - (2.0 * PI - 6.0)).abs() < 1e-12);
    }

    #[test]
    fn local_world_round_trip() {
        let p = Pose2::new(3.0, -2.0, 0.7);
        let (lx, ly) = p.to_local(5.0, 1.0);
        let (wx, wy) = p.to_world(lx, ly);
        assert!((wx - 5.0).abs() < 1e-12 && (wy - 1.0).abs() < 1e-12);
    }

    #[test]
    fn projection_sign_is_left_positive() {
        let (d, t, _) = segment_projection((0.0, 0.0), (1.0, 0.0), (0.5, 0.3));
        assert!((d - 0.3).abs() < 1e-12);
        assert!((t - 0.5).abs() < 1e-12);
        let (d, _, _) = segment_projection((0.0, 0.0), (1.0, 0.0), (0.5, -0.3));
        assert!((d + 0.3).abs() < 1e-12);
    }
}
