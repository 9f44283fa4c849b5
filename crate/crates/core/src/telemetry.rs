//! Per-tick telemetry: one CSV row per control tick under a fixed header.
//! Floats are written in shortest round-trip form so a stored file parses
//! back to the exact values. Parsing accepts a file cut off mid-row and
//! reports it.

use crate::error::{Error, Result};
use crate::guard::{GuardMode, Led, Reason};
use crate::localization::LocalizationMode;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

pub const TELEMETRY_HEADER: &str = "tick,time,x,y,heading,speed,steering_angle,est_x,est_y,est_heading,\
loc_mode,time_since_fix,lateral_error,heading_error,station,submap,steering_ref,v_ref,emergency,\
obst_dist,obst_critical,obst_held,creep_active,mode,reason,led,velocity_override,torque,apex";

const COLUMNS: usize = 29;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryRecord {
    pub tick: u64,
    pub time: f64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
    pub steering_angle: f64,
    pub est_x: f64,
    pub est_y: f64,
    pub est_heading: f64,
    pub loc_mode: LocalizationMode,
    pub time_since_fix: f64,
    /// True signed lateral offset from the teach path, left positive.
    pub lateral_error: f64,
    pub heading_error: f64,
    pub station: f64,
    pub submap: usize,
    pub steering_ref: f64,
    pub v_ref: f64,
    pub emergency: bool,
    pub obst_dist: Option<f64>,
    pub obst_critical: bool,
    pub obst_held: bool,
    pub creep_active: bool,
    pub mode: GuardMode,
    pub reason: Reason,
    pub led: Led,
    pub velocity_override: Option<f64>,
    pub torque: f64,
    /// Tick lies within the apex window of a curve.
    pub apex: bool,
}

fn b(v: bool) -> u8 {
    v as u8
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl TelemetryRecord {
    pub fn write_row(&self, out: &mut String) {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.tick,
            self.time,
            self.x,
            self.y,
            self.heading,
            self.speed,
            self.steering_angle,
            self.est_x,
            self.est_y,
            self.est_heading,
            self.loc_mode.as_str(),
            self.time_since_fix,
            self.lateral_error,
            self.heading_error,
            self.station,
            self.submap,
            self.steering_ref,
            self.v_ref,
            b(self.emergency),
            opt(self.obst_dist),
            b(self.obst_critical),
            b(self.obst_held),
            b(self.creep_active),
            self.mode.as_str(),
            self.reason.as_str(),
            self.led.as_str(),
            opt(self.velocity_override),
            self.torque,
            b(self.apex),
        );
    }

    fn parse_row(line: &str, lineno: usize) -> Result<Self> {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != COLUMNS {
            return Err(Error::Format(format!("line {lineno}: expected {COLUMNS} fields, got {}", f.len())));
        }
        let err = |col: &str| Error::Format(format!("line {lineno}: bad `{col}`"));
        let num = |i: usize, col: &str| f[i].parse::<f64>().map_err(|_| err(col));
        let flag = |i: usize, col: &str| match f[i] {
            "0" => Ok(false),
            "1" => Ok(true),
            _ => Err(err(col)),
        };
        let optnum = |i: usize, col: &str| if f[i].is_empty() { Ok(None) } else { num(i, col).map(Some) };
        Ok(Self {
            tick: f[0].parse().map_err(|_| err("tick"))?,
            time: num(1, "time")?,
            x: num(2, "x")?,
            y: num(3, "y")?,
            heading: num(4, "heading")?,
            speed: num(5, "speed")?,
            steering_angle: num(6, "steering_angle")?,
            est_x: num(7, "est_x")?,
            est_y: num(8, "est_y")?,
            est_heading: num(9, "est_heading")?,
            loc_mode: LocalizationMode::parse(f[10]).ok_or_else(|| err("loc_mode"))?,
            time_since_fix: num(11, "time_since_fix")?,
            lateral_error: num(12, "lateral_error")?,
            heading_error: num(13, "heading_error")?,
            station: num(14, "station")?,
            submap: f[15].parse().map_err(|_| err("submap"))?,
            steering_ref: num(16, "steering_ref")?,
            v_ref: num(17, "v_ref")?,
            emergency: flag(18, "emergency")?,
            obst_dist: optnum(19, "obst_dist")?,
            obst_critical: flag(20, "obst_critical")?,
            obst_held: flag(21, "obst_held")?,
            creep_active: flag(22, "creep_active")?,
            mode: GuardMode::parse(f[23]).ok_or_else(|| err("mode"))?,
            reason: Reason::parse(f[24]).ok_or_else(|| err("reason"))?,
            led: match f[25] {
                "BLUE" => Led::Blue,
                "GREEN" => Led::Green,
                _ => return Err(err("led")),
            },
            velocity_override: optnum(26, "velocity_override")?,
            torque: num(27, "torque")?,
            apex: flag(28, "apex")?,
        })
    }
}

pub fn to_csv(records: &[TelemetryRecord]) -> String {
    let mut out = String::with_capacity(256 * (records.len() + 1));
    out.push_str(TELEMETRY_HEADER);
    out.push('\n');
    for r in records {
        r.write_row(&mut out);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedTelemetry {
    pub records: Vec<TelemetryRecord>,
    /// The last row was incomplete and has been dropped.
    pub truncated: bool,
}

/// Parse a telemetry CSV. A malformed final row without a line terminator
/// is treated as truncation; any other bad row is an error.
pub fn parse_csv(text: &str) -> Result<ParsedTelemetry> {
    let mut lines = text.split_inclusive('\n').enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end() == TELEMETRY_HEADER => {}
        _ => return Err(Error::Format("missing or unexpected telemetry header".into())),
    }
    let mut records = Vec::new();
    let mut truncated = false;
    for (i, raw) in lines {
        let line = raw.trim_end_matches(['\n', '\r']);
        if line.is_empty() {
            continue;
        }
        match TelemetryRecord::parse_row(line, i + 1) {
            Ok(r) => records.push(r),
            Err(_) if !raw.ends_with('\n') => truncated = true,
            Err(e) => return Err(e),
        }
    }
    Ok(ParsedTelemetry { records, truncated })
}
