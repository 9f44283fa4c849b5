//! Modified Pure Pursuit: velocity-scaled, clamped look-ahead distance summed
//! along the path, and a scaled geometric steering law.

use crate::error::{Error, Result};
use crate::localization::{LocalizationEstimate, LocalizationMode};
use crate::path::{closest_point_near, lookahead_point, PathQueryResult};
use crate::teach::TeachPath;
use crate::vehicle::VehicleParams;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SteeringConfig {
    /// Dynamic look-ahead gain, seconds.
    pub k1_lad_s: f64,
    /// Static look-ahead offset, meters.
    pub k2_lad_s: f64,
    pub lad_min: f64,
    pub lad_max: f64,
    /// Scale applied to the conventional pure pursuit angle.
    pub gain: f64,
}

impl Default for SteeringConfig {
    fn default() -> Self {
        Self { k1_lad_s: 0.45, k2_lad_s: 2.0, lad_min: 3.5, lad_max: 13.0, gain: 0.8 }
    }
}

impl SteeringConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = [self.k1_lad_s, self.k2_lad_s, self.lad_min, self.lad_max]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0)
            && self.lad_min <= self.lad_max
            && self.gain > 0.0
            && self.gain <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Validation("steering config out of range".into()))
        }
    }
}

pub fn lookahead_distance_steer(v_abs: f64, cfg: &SteeringConfig) -> f64 {
    (cfg.k2_lad_s + cfg.k1_lad_s * v_abs).clamp(cfg.lad_min, cfg.lad_max)
}

/// `gain * atan(2 L sin(alpha) / l_d)`.
pub fn pure_pursuit_angle(alpha: f64, lookahead: f64, wheelbase: f64, gain: f64) -> f64 {
    gain * (2.0 * wheelbase * alpha.sin() / lookahead).atan()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteeringOutput {
    pub steering_ref: f64,
    pub query: PathQueryResult,
    pub target_index: usize,
    pub lookahead: f64,
    /// The target is the final path point and the vehicle is close to it; the
    /// previous command should be held.
    pub hold: bool,
}

/// Full steering pipeline for one control tick. `hint` is the previous
/// closest index, `search_window` the hinted search radius in meters.
pub fn steering_command(
    estimate: &LocalizationEstimate,
    path: &TeachPath,
    hint: usize,
    search_window: f64,
    v_abs: f64,
    cfg: &SteeringConfig,
    params: &VehicleParams,
) -> Result<SteeringOutput> {
    if estimate.mode == LocalizationMode::Lost {
        return Err(Error::LocalizationLost);
    }
    let pose = estimate.pose;
    let query = closest_point_near(path, &pose, hint, search_window);
    let lookahead = lookahead_distance_steer(v_abs, cfg);
    let target_index = lookahead_point(path, query.closest_index, lookahead);
    let target = path.point(target_index).pose;
    let (lx, ly) = pose.to_local(target.x, target.y);
    let dist = lx.hypot(ly);
    let at_end = target_index == path.len() - 1 && query.remaining_distance < cfg.lad_min;
    if dist < 1e-6 {
        return Ok(SteeringOutput { steering_ref: 0.0, query, target_index, lookahead, hold: true });
    }
    let alpha = ly.atan2(lx);
    let delta = pure_pursuit_angle(alpha, dist, params.wheelbase, cfg.gain)
        .clamp(-params.max_steering, params.max_steering);
    Ok(SteeringOutput { steering_ref: delta, query, target_index, lookahead, hold: at_end })
}
