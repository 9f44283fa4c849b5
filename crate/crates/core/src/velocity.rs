//! Reference velocity: friction-limited cornering speed over a fitted curve
//! radius, bounded by the teach and user limits, then scaled by four
//! penalization factors.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VelocityConfig {
    pub mu: f64,
    pub g_earth: f64,
    pub v_freedom: f64,
    pub max_abs_vel: f64,
    pub k1_lad_v: f64,
    pub k2_lad_v: f64,
    pub lad_v_min: f64,
    pub lad_v_max: f64,
    /// Penalized references below this are commanded as a full stop.
    pub stop_threshold: f64,
    /// From standstill the vehicle only pulls away once the reference
    /// reaches this value.
    pub start_threshold: f64,
}

impl Default for VelocityConfig {
    fn default() -> Self {
        Self {
            mu: 0.8,
            g_earth: 9.81,
            v_freedom: 1.0,
            max_abs_vel: 10.0,
            k1_lad_v: 0.8,
            k2_lad_v: 4.0,
            lad_v_min: 3.5,
            lad_v_max: 40.0,
            stop_threshold: 0.1,
            start_threshold: 0.4,
        }
    }
}

impl VelocityConfig {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            self.g_earth,
            self.v_freedom,
            self.max_abs_vel,
            self.k1_lad_v,
            self.k2_lad_v,
            self.lad_v_min,
            self.lad_v_max,
            self.stop_threshold,
            self.start_threshold,
        ]
        .iter()
        .all(|v| v.is_finite() && *v >= 0.0);
        if nonneg && self.mu > 0.0 && self.mu <= 1.5 && self.lad_v_min <= self.lad_v_max {
            Ok(())
        } else {
            Err(Error::Validation("velocity config out of range".into()))
        }
    }
}

/// Cornering speed from Coulomb friction, `sqrt(mu g R)`. Infinite radius
/// gives an infinite limit.
pub fn physical_velocity(mu: f64, g: f64, radius: f64) -> Result<f64> {
    if !(radius > 0.0) {
        return Err(Error::Validation(format!("curve radius must be > 0, got {radius}")));
    }
    if radius.is_infinite() {
        return Ok(if mu > 0.0 { f64::INFINITY } else { 0.0 });
    }
    Ok((mu * g * radius).sqrt())
}

/// Length of the curve-fitting window ahead of the vehicle.
pub fn lookahead_distance_vel(v_abs: f64, cfg: &VelocityConfig) -> f64 {
    (cfg.k2_lad_v + cfg.k1_lad_v * v_abs).clamp(cfg.lad_v_min, cfg.lad_v_max)
}

pub fn reference_velocity(v_phys: f64, v_teach: f64, cfg: &VelocityConfig) -> f64 {
    v_phys.min(v_teach + cfg.v_freedom).min(cfg.max_abs_vel).max(0.0)
}

/// Piecewise-linear map with flat extrapolation, output clamped to [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PiecewiseLinear {
    pub breakpoints: Vec<(f64, f64)>,
}

impl PiecewiseLinear {
    pub fn new(breakpoints: Vec<(f64, f64)>) -> Result<Self> {
        let pl = Self { breakpoints };
        pl.validate()?;
        Ok(pl)
    }

    pub fn validate(&self) -> Result<()> {
        if self.breakpoints.is_empty() {
            return Err(Error::Validation("breakpoint list is empty".into()));
        }
        if self.breakpoints.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::Validation("breakpoints must be strictly increasing".into()));
        }
        if self.breakpoints.iter().any(|&(x, y)| !x.is_finite() || !(0.0..=1.0).contains(&y)) {
            return Err(Error::Validation("breakpoint factors must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn is_nondecreasing(&self) -> bool {
        self.breakpoints.windows(2).all(|w| w[1].1 >= w[0].1)
    }

    pub fn is_nonincreasing(&self) -> bool {
        self.breakpoints.windows(2).all(|w| w[1].1 <= w[0].1)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let bp = &self.breakpoints;
        let y = if x <= bp[0].0 {
            bp[0].1
        } else if x >= bp[bp.len() - 1].0 {
            bp[bp.len() - 1].1
        } else {
            let i = bp.partition_point(|p| p.0 <= x);
            let (x0, y0) = bp[i - 1];
            let (x1, y1) = bp[i];
            y0 + (y1 - y0) * (x - x0) / (x1 - x0)
        };
        y.clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PenalizationConfig {
    /// Factor over the clearance `d - d_crit - obstacle_standoff`.
    pub obstacle: PiecewiseLinear,
    /// Extra distance in front of the critical interval at which the obstacle
    /// factor is already zero.
    pub obstacle_standoff: f64,
    /// Factor over |lateral error|.
    pub lateral: PiecewiseLinear,
    /// Factor over the remaining path distance.
    pub path_end: PiecewiseLinear,
    /// Factor over seconds since a stop request.
    pub shutdown: PiecewiseLinear,
}

impl Default for PenalizationConfig {
    fn default() -> Self {
        Self {
            obstacle: PiecewiseLinear { breakpoints: vec![(0.0, 0.0), (15.0, 1.0)] },
            obstacle_standoff: 4.0,
            lateral: PiecewiseLinear { breakpoints: vec![(0.3, 1.0), (2.0, 0.0)] },
            path_end: PiecewiseLinear { breakpoints: vec![(0.0, 0.0), (10.0, 1.0)] },
            shutdown: PiecewiseLinear { breakpoints: vec![(0.0, 1.0), (3.0, 0.0)] },
        }
    }
}

impl PenalizationConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, map) in [
            ("obstacle", &self.obstacle),
            ("lateral", &self.lateral),
            ("path_end", &self.path_end),
            ("shutdown", &self.shutdown),
        ] {
            map.validate().map_err(|e| Error::Validation(format!("penalize.{name}: {e}")))?;
        }
        let monotone = self.obstacle.is_nondecreasing()
            && self.lateral.is_nonincreasing()
            && self.path_end.is_nondecreasing()
            && self.shutdown.is_nonincreasing();
        if !monotone {
            return Err(Error::Validation("penalization maps must be monotone in the safe direction".into()));
        }
        if !(self.obstacle_standoff >= 0.0) {
            return Err(Error::Validation("obstacle_standoff must be >= 0".into()));
        }
        Ok(())
    }

    /// Obstacle factor; zero inside the critical interval plus standoff.
    pub fn obstacle_factor(&self, distance: Option<f64>, critical_limit: f64) -> f64 {
        match distance {
            None => 1.0,
            Some(d) if d <= critical_limit + self.obstacle_standoff => 0.0,
            Some(d) => self.obstacle.eval(d - critical_limit - self.obstacle_standoff),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PenaltyInputs {
    pub obstacle_distance: Option<f64>,
    pub critical_limit: f64,
    pub lateral_error: f64,
    pub remaining_distance: f64,
    /// Seconds since a stop request, if one is active.
    pub shutdown_elapsed: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyFactors {
    pub obstacle: f64,
    pub lateral: f64,
    pub path_end: f64,
    pub shutdown: f64,
}

impl PenaltyFactors {
    pub fn product(&self) -> f64 {
        self.obstacle * self.lateral * self.path_end * self.shutdown
    }
}

pub fn penalty_factors(inputs: &PenaltyInputs, pcfg: &PenalizationConfig) -> PenaltyFactors {
    PenaltyFactors {
        obstacle: pcfg.obstacle_factor(inputs.obstacle_distance, inputs.critical_limit),
        lateral: pcfg.lateral.eval(inputs.lateral_error.abs()),
        path_end: pcfg.path_end.eval(inputs.remaining_distance),
        shutdown: inputs.shutdown_elapsed.map_or(1.0, |t| pcfg.shutdown.eval(t)),
    }
}

pub fn apply_penalizations(v_ref: f64, inputs: &PenaltyInputs, pcfg: &PenalizationConfig) -> f64 {
    v_ref.max(0.0) * penalty_factors(inputs, pcfg).product()
}
