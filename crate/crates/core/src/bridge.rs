//! Operator bridge: newline-delimited JSON frames over one TCP connection.
//!
//! Every frame is a JSON object with a `type` and the protocol version `v`.
//! A frame with any other version is answered with a `version_mismatch`
//! error and the connection is closed.
//!
//! Server to client: `hello`, `state` (every `frame_ticks` ticks, 20 Hz of
//! sim time by default), `ack`, `error`, `teach_done`, `done`.
//! Client to server: `hello`, `drive`, `finish_teach`, `place_obstacle`,
//! `remove_obstacle`, `request_stop`, `steer_torque`, `set_param`, `step`.
//!
//! Without a teach path the session starts in the teach phase, driven by
//! `drive` frames; `finish_teach` records the path and switches to repeat.
//! In lockstep pacing the simulation only advances on `step` frames, one
//! state frame per requested frame; realtime pacing advances one frame per
//! wall-clock frame period and never waits for the client.

use crate::engine::{ticks_per_period, RepeatOutcome, RepeatSim, RunOptions, TeachOutcome, TeachSim};
use crate::error::{Error, Result};
use crate::lidar::BoxObstacle;
use crate::scenario::Scenario;
use crate::teach::TeachPath;
use crate::vehicle::ActuatorCommand;
use serde::Deserialize;
use serde_json::{json, Value};
use std::io::{BufRead, BufReader, Write};
use std::net::{Shutdown, TcpListener, TcpStream, ToSocketAddrs};
use std::path::PathBuf;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::time::{Duration, Instant};

pub const PROTOCOL_VERSION: u64 = 1;
/// Rate of outbound state frames in sim time.
pub const STATE_RATE_HZ: f64 = 20.0;
/// Occupied cells listed per state frame; the count is always exact.
pub const MAX_GRID_CELLS: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Pacing {
    #[default]
    Lockstep,
    Realtime,
}

#[derive(Debug, Clone, Default)]
pub struct BridgeConfig {
    pub pacing: Pacing,
    pub run: RunOptions,
    /// Where to save the path recorded in the teach phase.
    pub path_out: Option<PathBuf>,
}

#[derive(Debug, Default)]
pub struct BridgeOutcome {
    pub teach: Option<TeachOutcome>,
    pub repeat: Option<RepeatOutcome>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Inbound {
    Hello,
    Drive {
        #[serde(default)]
        throttle: f64,
        #[serde(default)]
        steer: f64,
    },
    FinishTeach,
    PlaceObstacle { obstacle: BoxObstacle },
    RemoveObstacle { id: String },
    RequestStop,
    SteerTorque { torque: f64 },
    SetParam { key: String, value: Value },
    Step {
        #[serde(default = "one")]
        frames: u64,
    },
}

fn one() -> u64 {
    1
}

enum Msg {
    Line(String),
    Closed,
}

enum Phase {
    Teach { sim: Box<TeachSim>, cmd: ActuatorCommand, driven: f64 },
    Repeat(Box<RepeatSim>),
    Done,
}

impl Phase {
    fn name(&self) -> &'static str {
        match self {
            Phase::Teach { .. } => "teach",
            Phase::Repeat(_) => "repeat",
            Phase::Done => "done",
        }
    }
}

struct Session {
    sc: Scenario,
    cfg: BridgeConfig,
    out: TcpStream,
    rx: Receiver<Msg>,
    frame_ticks: u64,
    phase: Phase,
    outcome: BridgeOutcome,
}

impl Drop for Session {
    fn drop(&mut self) {
        // the reader thread holds a clone of the socket; close both halves
        let _ = self.out.shutdown(Shutdown::Both);
    }
}

/// What the main loop should do after handling inbound frames.
enum Next {
    Advance(u64),
    FinishTeach,
}

/// Accept one connection and run a session on it.
pub fn serve(listener: &TcpListener, sc: Scenario, path: Option<TeachPath>, cfg: BridgeConfig) -> Result<BridgeOutcome> {
    let (stream, _) = listener.accept()?;
    serve_connection(stream, sc, path, cfg)
}

/// Run a bridge session on an accepted connection. Returns when the repeat
/// run ends; a disconnect or a fatal protocol error is returned as an error.
pub fn serve_connection(stream: TcpStream, sc: Scenario, path: Option<TeachPath>, cfg: BridgeConfig) -> Result<BridgeOutcome> {
    sc.validate()?;
    stream.set_nodelay(true)?;
    let reader = stream.try_clone()?;
    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        for line in BufReader::new(reader).lines() {
            match line {
                Ok(l) if l.trim().is_empty() => continue,
                Ok(l) => {
                    if tx.send(Msg::Line(l)).is_err() {
                        return;
                    }
                }
                Err(_) => break,
            }
        }
        let _ = tx.send(Msg::Closed);
    });
    let phase = match path {
        Some(p) => Phase::Repeat(Box::new(RepeatSim::new(sc.clone(), p, cfg.run.clone())?)),
        None => Phase::Teach { sim: Box::new(TeachSim::new(sc.clone())?), cmd: ActuatorCommand::default(), driven: 0.0 },
    };
    let frame_ticks = ticks_per_period(STATE_RATE_HZ, sc.dt);
    let s = Session { sc, cfg, out: stream, rx, frame_ticks, phase, outcome: BridgeOutcome::default() };
    s.run()
}

impl Session {
    fn send(&mut self, v: &Value) -> Result<()> {
        let mut line = serde_json::to_string(v)?;
        line.push('\n');
        self.out.write_all(line.as_bytes())?;
        Ok(())
    }

    fn send_error(&mut self, code: &str, message: impl Into<String>) -> Result<()> {
        self.send(&json!({"type": "error", "v": PROTOCOL_VERSION, "code": code, "message": message.into()}))
    }

    fn hello(&mut self) -> Result<()> {
        let path: Option<Vec<[f64; 2]>> = match &self.phase {
            Phase::Repeat(sim) => Some(sim.path().points().iter().map(|p| [p.pose.x, p.pose.y]).collect()),
            _ => None,
        };
        let v = json!({
            "type": "hello",
            "v": PROTOCOL_VERSION,
            "phase": self.phase.name(),
            "scenario": self.sc.name,
            "dt": self.sc.dt,
            "frame_ticks": self.frame_ticks,
            "path": path,
        });
        self.send(&v)
    }

    fn run(mut self) -> Result<BridgeOutcome> {
        self.hello()?;
        let mut deadline = Instant::now();
        let period = Duration::from_secs_f64(self.frame_ticks as f64 * self.sc.dt);
        loop {
            let next = match self.cfg.pacing {
                Pacing::Lockstep => self.pump(None)?,
                Pacing::Realtime => {
                    deadline += period;
                    self.pump(Some(deadline))?
                }
            };
            match next {
                Next::FinishTeach => self.finish_teach()?,
                Next::Advance(frames) => {
                    for _ in 0..frames {
                        if !self.advance_frame()? {
                            return Ok(std::mem::take(&mut self.outcome));
                        }
                    }
                }
            }
        }
    }

    /// Handle inbound frames until the loop should move on. Lockstep waits
    /// for a `step`; realtime drains until `deadline`.
    fn pump(&mut self, deadline: Option<Instant>) -> Result<Next> {
        loop {
            let msg = match deadline {
                None => self.rx.recv().unwrap_or(Msg::Closed),
                Some(d) => match self.rx.recv_timeout(d.saturating_duration_since(Instant::now())) {
                    Ok(m) => m,
                    Err(RecvTimeoutError::Timeout) => return Ok(Next::Advance(1)),
                    Err(RecvTimeoutError::Disconnected) => Msg::Closed,
                },
            };
            let line = match msg {
                Msg::Line(l) => l,
                Msg::Closed => {
                    return Err(Error::Protocol(format!("client disconnected, {} aborted", self.phase.name())));
                }
            };
            if let Some(next) = self.handle(&line)? {
                if deadline.is_none() || matches!(next, Next::FinishTeach) {
                    return Ok(next);
                }
            }
        }
    }

    fn handle(&mut self, line: &str) -> Result<Option<Next>> {
        let raw: Value = match serde_json::from_str(line) {
            Ok(v) => v,
            Err(e) => {
                self.send_error("bad_frame", e.to_string())?;
                return Ok(None);
            }
        };
        let version = raw.get("v").and_then(Value::as_u64);
        if version != Some(PROTOCOL_VERSION) {
            let msg = format!("expected protocol version {PROTOCOL_VERSION}, got {}", raw.get("v").unwrap_or(&Value::Null));
            self.send_error("version_mismatch", msg.clone())?;
            return Err(Error::Protocol(msg));
        }
        let frame: Inbound = match serde_json::from_value(raw) {
            Ok(f) => f,
            Err(e) => {
                self.send_error("bad_frame", e.to_string())?;
                return Ok(None);
            }
        };
        match (frame, &mut self.phase) {
            (Inbound::Hello, _) => Ok(None),
            (Inbound::Step { frames }, _) => Ok(Some(Next::Advance(frames))),
            (Inbound::Drive { throttle, steer }, Phase::Teach { cmd, .. }) => {
                if !(throttle.is_finite() && steer.is_finite()) {
                    self.send_error("bad_frame", "non-finite drive input")?;
                    return Ok(None);
                }
                cmd.velocity_ref = throttle.clamp(0.0, 1.0) * self.sc.velocity.max_abs_vel;
                cmd.steering_ref = steer.clamp(-1.0, 1.0) * self.sc.vehicle.max_steering;
                Ok(None)
            }
            (Inbound::FinishTeach, Phase::Teach { .. }) => Ok(Some(Next::FinishTeach)),
            (Inbound::PlaceObstacle { obstacle }, Phase::Repeat(sim)) => {
                let id = obstacle.id.clone();
                sim.place_obstacle(obstacle);
                self.send(&json!({"type": "ack", "v": PROTOCOL_VERSION, "of": "place_obstacle", "id": id}))?;
                Ok(None)
            }
            (Inbound::RemoveObstacle { id }, Phase::Repeat(sim)) => {
                let removed = sim.remove_obstacle(&id);
                self.send(&json!({"type": "ack", "v": PROTOCOL_VERSION, "of": "remove_obstacle", "id": id, "removed": removed}))?;
                Ok(None)
            }
            (Inbound::RequestStop, Phase::Repeat(sim)) => {
                sim.request_stop();
                self.send(&json!({"type": "ack", "v": PROTOCOL_VERSION, "of": "request_stop"}))?;
                Ok(None)
            }
            (Inbound::SteerTorque { torque }, Phase::Repeat(sim)) => {
                sim.set_torque(torque);
                Ok(None)
            }
            (Inbound::SetParam { key, value }, Phase::Repeat(sim)) => {
                match sim.set_param(&key, value) {
                    Ok(()) => self.send(&json!({"type": "ack", "v": PROTOCOL_VERSION, "of": "set_param", "key": key}))?,
                    Err(e) => self.send_error("rejected_param", e.to_string())?,
                }
                Ok(None)
            }
            (_, phase) => {
                let msg = format!("frame not accepted in the {} phase", phase.name());
                self.send_error("wrong_phase", msg)?;
                Ok(None)
            }
        }
    }

    /// Run `frame_ticks` ticks and publish one state frame. Returns false
    /// once the repeat run has ended.
    fn advance_frame(&mut self) -> Result<bool> {
        let mut ended = false;
        match &mut self.phase {
            Phase::Teach { sim, cmd, driven } => {
                for _ in 0..self.frame_ticks {
                    let (x0, y0) = (sim.state().x, sim.state().y);
                    if let Err(e) = sim.step(cmd) {
                        let msg = e.to_string();
                        self.send_error("teach_aborted", msg)?;
                        return Err(e);
                    }
                    *driven += (sim.state().x - x0).hypot(sim.state().y - y0);
                }
            }
            Phase::Repeat(sim) => {
                for _ in 0..self.frame_ticks {
                    match sim.step() {
                        Ok(Some(_)) => {}
                        Ok(None) => {
                            ended = true;
                            break;
                        }
                        Err(e) => {
                            let msg = e.to_string();
                            self.send_error("run_aborted", msg)?;
                            return Err(e);
                        }
                    }
                }
            }
            Phase::Done => return Ok(false),
        }
        let frame = self.state_frame();
        self.send(&frame)?;
        if ended {
            let Phase::Repeat(sim) = std::mem::replace(&mut self.phase, Phase::Done) else {
                unreachable!("only the repeat phase ends")
            };
            let outcome = sim.finish();
            self.send(&json!({"type": "done", "v": PROTOCOL_VERSION, "summary": outcome.summary}))?;
            self.outcome.repeat = Some(outcome);
            return Ok(false);
        }
        Ok(true)
    }

    fn finish_teach(&mut self) -> Result<()> {
        let Phase::Teach { sim, driven, .. } = std::mem::replace(&mut self.phase, Phase::Done) else {
            unreachable!("finish_teach is only produced in the teach phase")
        };
        let outcome = match sim.finish() {
            Ok(o) => o,
            Err(e) => {
                let code = if matches!(e, Error::PathTooShort(_)) { "path_too_short" } else { "teach_aborted" };
                let msg = e.to_string();
                self.send_error(code, msg)?;
                return Err(e);
            }
        };
        if let Some(p) = &self.cfg.path_out {
            outcome.path.save(p)?;
        }
        self.send(&json!({
            "type": "teach_done",
            "v": PROTOCOL_VERSION,
            "length": outcome.path.total_length(),
            "points": outcome.path.len(),
            "driven_distance": driven,
            "duration": outcome.duration,
        }))?;
        let repeat = RepeatSim::new(self.sc.clone(), outcome.path.clone(), self.cfg.run.clone())?;
        self.outcome.teach = Some(outcome);
        self.phase = Phase::Repeat(Box::new(repeat));
        self.hello()
    }

    fn state_frame(&self) -> Value {
        match &self.phase {
            Phase::Teach { sim, driven, .. } => {
                let s = sim.state();
                json!({
                    "type": "state",
                    "v": PROTOCOL_VERSION,
                    "phase": "teach",
                    "time": sim.time(),
                    "pose": {"x": s.x, "y": s.y, "heading": s.heading},
                    "speed": s.speed,
                    "steering_angle": s.steering_angle,
                    "driven_distance": driven,
                    "recorded_distance": sim.recorded_distance(),
                })
            }
            Phase::Repeat(sim) => {
                let s = sim.state();
                let est = sim.estimate();
                let d = sim.decision();
                let r = sim.report();
                let rec = sim.records().last();
                let grid = sim.latest_grid().map(|g| {
                    let cells: Vec<[f64; 2]> = g
                        .occupied()
                        .iter()
                        .take(MAX_GRID_CELLS)
                        .map(|&c| {
                            let (x, y) = g.cell_center_world(c);
                            [x, y]
                        })
                        .collect();
                    json!({
                        "timestamp": g.timestamp,
                        "resolution": g.resolution,
                        "origin": g.origin,
                        "occupied_count": g.occupied().len(),
                        "cells": cells,
                    })
                });
                let obstacles: Vec<&str> = sim.world().obstacles.iter().map(|o| o.id.as_str()).collect();
                json!({
                    "type": "state",
                    "v": PROTOCOL_VERSION,
                    "phase": "repeat",
                    "time": sim.time(),
                    "pose": {"x": s.x, "y": s.y, "heading": s.heading},
                    "speed": s.speed,
                    "steering_angle": s.steering_angle,
                    "estimate": {"x": est.pose.x, "y": est.pose.y, "heading": est.pose.heading, "mode": est.mode},
                    "guard": {"mode": d.mode, "reason": d.reason, "led": d.led, "velocity_override": d.velocity_override},
                    "v_ref": rec.map(|r| r.v_ref),
                    "steering_ref": rec.map(|r| r.steering_ref),
                    "lateral_error": rec.map(|r| r.lateral_error),
                    "station": rec.map(|r| r.station),
                    "obstacle": {
                        "blocking_distance": r.blocking_distance,
                        "critical": r.critical,
                        "held": r.held,
                        "creep": r.creep,
                    },
                    "grid": grid,
                    "obstacles": obstacles,
                })
            }
            Phase::Done => Value::Null,
        }
    }
}

/// Minimal blocking client for scripted sessions and tests.
pub struct BridgeClient {
    writer: TcpStream,
    reader: BufReader<TcpStream>,
}

impl BridgeClient {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self> {
        let writer = TcpStream::connect(addr)?;
        writer.set_nodelay(true)?;
        let reader = BufReader::new(writer.try_clone()?);
        Ok(Self { writer, reader })
    }

    /// Send a frame; `v` is filled in when absent.
    pub fn send(&mut self, mut frame: Value) -> Result<()> {
        if let Some(obj) = frame.as_object_mut() {
            obj.entry("v").or_insert(json!(PROTOCOL_VERSION));
        }
        let mut line = serde_json::to_string(&frame)?;
        line.push('\n');
        self.writer.write_all(line.as_bytes())?;
        Ok(())
    }

    /// Next frame, or `None` once the server has closed the connection.
    pub fn recv(&mut self) -> Result<Option<Value>> {
        let mut line = String::new();
        if self.reader.read_line(&mut line)? == 0 {
            return Ok(None);
        }
        Ok(Some(serde_json::from_str(&line)?))
    }

    /// Skip frames until one of type `kind` arrives.
    pub fn recv_type(&mut self, kind: &str) -> Result<Value> {
        loop {
            match self.recv()? {
                Some(v) if v["type"] == kind => return Ok(v),
                Some(_) => {}
                None => return Err(Error::Protocol(format!("connection closed while waiting for `{kind}`"))),
            }
        }
    }
}
