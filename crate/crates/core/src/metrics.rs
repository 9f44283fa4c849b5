//! Run summary recomputed from telemetry alone, so a stored CSV yields the
//! same numbers as the live run.

use crate::guard::{GuardMode, Reason};
use crate::localization::LocalizationMode;
use crate::telemetry::TelemetryRecord;
use serde::{Deserialize, Serialize};

/// Width of the speed bins, km/h.
pub const SPEED_BIN_KMH: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedBin {
    /// Bin label such as `20-25` (km/h).
    pub bin: String,
    pub lo_kmh: f64,
    pub hi_kmh: f64,
    pub ticks: usize,
    pub median_lateral_error: f64,
    pub max_lateral_error: f64,
    pub apex_ticks: usize,
    /// Mean |lateral error| over apex ticks; absent without apex ticks.
    pub apex_mean_lateral_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub status: String,
    pub ticks: usize,
    pub duration: f64,
    pub localized_ticks: usize,
    pub median_lateral_error: f64,
    pub mean_lateral_error: f64,
    pub max_lateral_error: f64,
    pub max_speed: f64,
    pub stop_events: usize,
    pub emergency_events: usize,
    pub speed_bins: Vec<SpeedBin>,
}

impl Summary {
    pub fn bin(&self, lo_kmh: f64) -> Option<&SpeedBin> {
        self.speed_bins.iter().find(|b| (b.lo_kmh - lo_kmh).abs() < 1e-9)
    }
}

/// Median of the values; mean of the two middle ones for even counts.
pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Final status of a run from its last record.
pub fn run_status(last: Option<&TelemetryRecord>) -> &'static str {
    match last {
        Some(r) if r.mode == GuardMode::MissionComplete => "MISSION_COMPLETE",
        Some(r) if r.mode == GuardMode::Manual && r.reason == Reason::LocalizationLost => "LOST",
        Some(r) if r.mode == GuardMode::Manual => "MANUAL",
        _ => "INCOMPLETE",
    }
}

/// Stops after the vehicle has moved faster than this count as a new event.
const MOVING_SPEED: f64 = 0.5;
const STOPPED_SPEED: f64 = 1e-3;

/// Number of times the vehicle came to a standstill after moving, not
/// counting a final stop it never leaves.
pub fn count_stops(records: &[TelemetryRecord]) -> usize {
    let mut stops = 0;
    let mut moving = false;
    let mut last_stop_final = false;
    for r in records {
        if r.speed > MOVING_SPEED {
            moving = true;
            last_stop_final = false;
        } else if moving && r.speed <= STOPPED_SPEED {
            moving = false;
            stops += 1;
            last_stop_final = true;
        }
    }
    if last_stop_final {
        stops -= 1;
    }
    stops
}

pub fn count_emergencies(records: &[TelemetryRecord]) -> usize {
    let mut prev = GuardMode::Autonomous;
    let mut n = 0;
    for r in records {
        if r.mode == GuardMode::EmergencyStopping && prev != GuardMode::EmergencyStopping {
            n += 1;
        }
        prev = r.mode;
    }
    n
}

pub fn summarize(records: &[TelemetryRecord]) -> Summary {
    let localized: Vec<&TelemetryRecord> =
        records.iter().filter(|r| r.loc_mode == LocalizationMode::Localized).collect();
    let mut errs: Vec<f64> = localized.iter().map(|r| r.lateral_error.abs()).collect();
    let mean = if errs.is_empty() { 0.0 } else { errs.iter().sum::<f64>() / errs.len() as f64 };
    let max = errs.iter().copied().fold(0.0, f64::max);
    let med = median(&mut errs);

    let mut bins: Vec<SpeedBin> = Vec::new();
    let mut by_bin: std::collections::BTreeMap<i64, Vec<&TelemetryRecord>> = Default::default();
    for r in &localized {
        let k = (r.speed * 3.6 / SPEED_BIN_KMH).floor() as i64;
        by_bin.entry(k).or_default().push(r);
    }
    for (k, rs) in by_bin {
        let lo = k as f64 * SPEED_BIN_KMH;
        let mut e: Vec<f64> = rs.iter().map(|r| r.lateral_error.abs()).collect();
        let apex: Vec<f64> = rs.iter().filter(|r| r.apex).map(|r| r.lateral_error.abs()).collect();
        bins.push(SpeedBin {
            bin: format!("{}-{}", lo, lo + SPEED_BIN_KMH),
            lo_kmh: lo,
            hi_kmh: lo + SPEED_BIN_KMH,
            ticks: rs.len(),
            max_lateral_error: e.iter().copied().fold(0.0, f64::max),
            median_lateral_error: median(&mut e),
            apex_ticks: apex.len(),
            apex_mean_lateral_error: (!apex.is_empty()).then(|| apex.iter().sum::<f64>() / apex.len() as f64),
        });
    }

    Summary {
        status: run_status(records.last()).to_string(),
        ticks: records.len(),
        duration: records.last().map_or(0.0, |r| r.time),
        localized_ticks: localized.len(),
        median_lateral_error: med,
        mean_lateral_error: mean,
        max_lateral_error: max,
        max_speed: records.iter().map(|r| r.speed).fold(0.0, f64::max),
        stop_events: count_stops(records),
        emergency_events: count_emergencies(records),
        speed_bins: bins,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn medians() {
        assert_eq!(median(&mut [0.1; 7]), 0.1);
        assert_eq!(median(&mut [3.0, 1.0, 2.0, 4.0]), 2.5);
        let mut u: Vec<f64> = (0..=100).map(|i| 0.05 + 0.001 * i as f64).collect();
        assert!((median(&mut u) - 0.10).abs() < 1e-12);
    }
}
