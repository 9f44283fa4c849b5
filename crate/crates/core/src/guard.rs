//! Safety supervisor. Runs every tick after perception and before the
//! controllers; it never fails, and anything it cannot make sense of
//! resolves to an emergency stop.

use crate::localization::LocalizationMode;
use serde::{Deserialize, Serialize};

/// Ticks (at 200 Hz) allowed between an emergency-mandating event and the
/// emergency flag reaching the actuators.
pub const MAX_EMERGENCY_LATENCY_TICKS: u64 = 4;

pub fn latency_contract(event_tick: u64, decision_tick: u64) -> bool {
    decision_tick >= event_tick && decision_tick - event_tick <= MAX_EMERGENCY_LATENCY_TICKS
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuardInputs {
    pub obstacle_critical: bool,
    pub tracking_error: f64,
    pub orientation_error: f64,
    pub localization_mode: LocalizationMode,
    pub watchdog_ok: bool,
    pub steering_torque: f64,
    pub ui_stop_requested: bool,
    pub interface_ok: bool,
    pub speed: f64,
    /// The vehicle has reached the end of the reference path.
    pub end_of_mission: bool,
}

impl GuardInputs {
    pub fn nominal() -> Self {
        Self {
            obstacle_critical: false,
            tracking_error: 0.0,
            orientation_error: 0.0,
            localization_mode: LocalizationMode::Localized,
            watchdog_ok: true,
            steering_torque: 0.0,
            ui_stop_requested: false,
            interface_ok: true,
            speed: 0.0,
            end_of_mission: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GuardThresholds {
    /// Trips strictly above this magnitude.
    pub torque_limit: f64,
    pub tracking_limit: f64,
    pub orientation_limit: f64,
    pub stopped_speed: f64,
}

impl Default for GuardThresholds {
    fn default() -> Self {
        Self { torque_limit: 7.5, tracking_limit: 2.0, orientation_limit: 20f64.to_radians(), stopped_speed: 1e-3 }
    }
}

impl GuardThresholds {
    pub fn validate(&self) -> crate::Result<()> {
        let ok = [self.torque_limit, self.tracking_limit, self.orientation_limit, self.stopped_speed]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0);
        if ok {
            Ok(())
        } else {
            Err(crate::Error::Validation("guard thresholds must be finite and > 0".into()))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum GuardMode {
    Autonomous,
    EmergencyStopping,
    Manual,
    MissionComplete,
}

impl GuardMode {
    pub fn as_str(self) -> &'static str {
        match self {
            GuardMode::Autonomous => "AUTONOMOUS",
            GuardMode::EmergencyStopping => "EMERGENCY_STOPPING",
            GuardMode::Manual => "MANUAL",
            GuardMode::MissionComplete => "MISSION_COMPLETE",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Self::Autonomous, Self::EmergencyStopping, Self::Manual, Self::MissionComplete]
            .into_iter()
            .find(|m| m.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Reason {
    None,
    CriticalObstacle,
    TorqueIntervention,
    InterfaceFailure,
    WatchdogFailure,
    LocalizationLost,
    TrackingError,
    OrientationError,
    InvalidInput,
    StopRequested,
    EndOfPath,
}

impl Reason {
    pub fn as_str(self) -> &'static str {
        match self {
            Reason::None => "NONE",
            Reason::CriticalObstacle => "CRITICAL_OBSTACLE",
            Reason::TorqueIntervention => "TORQUE_INTERVENTION",
            Reason::InterfaceFailure => "INTERFACE_FAILURE",
            Reason::WatchdogFailure => "WATCHDOG_FAILURE",
            Reason::LocalizationLost => "LOCALIZATION_LOST",
            Reason::TrackingError => "TRACKING_ERROR",
            Reason::OrientationError => "ORIENTATION_ERROR",
            Reason::InvalidInput => "INVALID_INPUT",
            Reason::StopRequested => "STOP_REQUESTED",
            Reason::EndOfPath => "END_OF_PATH",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        use Reason::*;
        [
            None, CriticalObstacle, TorqueIntervention, InterfaceFailure, WatchdogFailure, LocalizationLost,
            TrackingError, OrientationError, InvalidInput, StopRequested, EndOfPath,
        ]
        .into_iter()
        .find(|r| r.as_str() == s)
    }

    /// Emergencies after which the vehicle resumes on its own once stopped.
    pub fn auto_resumes(self) -> bool {
        matches!(self, Reason::CriticalObstacle)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Led {
    Blue,
    Green,
}

impl Led {
    pub fn as_str(self) -> &'static str {
        match self {
            Led::Blue => "BLUE",
            Led::Green => "GREEN",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuardDecision {
    pub mode: GuardMode,
    pub velocity_override: Option<f64>,
    pub emergency_brake: bool,
    pub led: Led,
    pub reason: Reason,
}

impl GuardDecision {
    pub fn initial() -> Self {
        Self::autonomous()
    }

    fn autonomous() -> Self {
        Self { mode: GuardMode::Autonomous, velocity_override: None, emergency_brake: false, led: Led::Blue, reason: Reason::None }
    }

    fn stopped_mode(mode: GuardMode, reason: Reason, moving: bool) -> Self {
        Self { mode, velocity_override: Some(0.0), emergency_brake: moving, led: Led::Green, reason }
    }

    fn emergency(reason: Reason) -> Self {
        Self::stopped_mode(GuardMode::EmergencyStopping, reason, true)
    }

    /// Autonomy has ended for this run.
    pub fn is_terminal(&self) -> bool {
        matches!(self.mode, GuardMode::Manual | GuardMode::MissionComplete)
    }
}

fn fault(inputs: &GuardInputs, th: &GuardThresholds) -> Option<Reason> {
    let finite = [inputs.tracking_error, inputs.orientation_error, inputs.speed].iter().all(|v| v.is_finite());
    if !finite {
        return Some(Reason::InvalidInput);
    }
    if !inputs.interface_ok {
        Some(Reason::InterfaceFailure)
    } else if !inputs.watchdog_ok {
        Some(Reason::WatchdogFailure)
    } else if inputs.localization_mode == LocalizationMode::Lost {
        Some(Reason::LocalizationLost)
    } else if inputs.tracking_error.abs() > th.tracking_limit {
        Some(Reason::TrackingError)
    } else if inputs.orientation_error.abs() > th.orientation_limit {
        Some(Reason::OrientationError)
    } else if inputs.obstacle_critical {
        Some(Reason::CriticalObstacle)
    } else {
        None
    }
}

/// One supervisory decision. `prev` is the previous tick's decision.
pub fn guard_step(inputs: &GuardInputs, prev: &GuardDecision, th: &GuardThresholds) -> GuardDecision {
    let stopped = inputs.speed.is_finite() && inputs.speed.abs() <= th.stopped_speed;
    if prev.is_terminal() {
        return GuardDecision::stopped_mode(prev.mode, prev.reason, !stopped);
    }
    // NaN torque fails this comparison and is caught as invalid input below.
    if inputs.steering_torque.abs() > th.torque_limit {
        return GuardDecision::stopped_mode(GuardMode::Manual, Reason::TorqueIntervention, !stopped);
    }
    let current = if inputs.steering_torque.is_finite() { fault(inputs, th) } else { Some(Reason::InvalidInput) };
    if prev.mode == GuardMode::EmergencyStopping {
        // A terminal cause outranks an obstacle stop already in progress.
        let reason = match current {
            Some(r) if !r.auto_resumes() => r,
            _ => prev.reason,
        };
        if !stopped {
            return GuardDecision::emergency(reason);
        }
        if !reason.auto_resumes() {
            return GuardDecision::stopped_mode(GuardMode::Manual, reason, false);
        }
    }
    if let Some(r) = current {
        return GuardDecision::emergency(r);
    }
    if stopped && (inputs.end_of_mission || inputs.ui_stop_requested) {
        let reason = if inputs.ui_stop_requested { Reason::StopRequested } else { Reason::EndOfPath };
        return GuardDecision::stopped_mode(GuardMode::MissionComplete, reason, false);
    }
    GuardDecision::autonomous()
}
