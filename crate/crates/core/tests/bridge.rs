use serde_json::{json, Value};
use std::net::TcpListener;
use std::thread::JoinHandle;
use tnr_core::bridge::{serve, BridgeClient, BridgeConfig, BridgeOutcome, PROTOCOL_VERSION};
use tnr_core::engine::run_teach;
use tnr_core::scenario::Scenario;
use tnr_core::teach::TeachPath;
use tnr_core::Result;

fn straight(len: f64) -> Scenario {
    Scenario::from_json(&format!(
        r#"{{"name": "straight", "seed": 4, "road": {{"segments": [{{"straight": {len}}}]}}, "run": {{"max_time": 120.0}}}}"#
    ))
    .unwrap()
}

fn start(sc: Scenario, path: Option<TeachPath>) -> (BridgeClient, JoinHandle<Result<BridgeOutcome>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let server = std::thread::spawn(move || serve(&listener, sc, path, BridgeConfig::default()));
    let mut client = BridgeClient::connect(addr).unwrap();
    client.send(json!({"type": "hello"})).unwrap();
    (client, server)
}

fn step(c: &mut BridgeClient) -> Value {
    c.send(json!({"type": "step"})).unwrap();
    c.recv_type("state").unwrap()
}

fn step_n(c: &mut BridgeClient, n: u64) -> Value {
    c.send(json!({"type": "step", "frames": n})).unwrap();
    (0..n).map(|_| c.recv_type("state").unwrap()).last().unwrap()
}

fn repeat_session(len: f64) -> (BridgeClient, JoinHandle<Result<BridgeOutcome>>) {
    let sc = straight(len);
    let path = run_teach(&sc).unwrap().path;
    let (mut c, server) = start(sc, Some(path));
    let hello = c.recv_type("hello").unwrap();
    assert_eq!(hello["phase"], "repeat");
    assert_eq!(hello["v"], PROTOCOL_VERSION);
    (c, server)
}

#[test]
fn scripted_teach_drive_records_driven_length() {
    let (mut c, server) = start(straight(200.0), None);
    assert_eq!(c.recv_type("hello").unwrap()["phase"], "teach");
    c.send(json!({"type": "drive", "throttle": 0.5, "steer": 0.0})).unwrap();
    step_n(&mut c, 200);
    c.send(json!({"type": "drive", "throttle": 0.5, "steer": 0.02})).unwrap();
    step_n(&mut c, 40);
    c.send(json!({"type": "drive", "throttle": 0.0, "steer": 0.0})).unwrap();
    let mut last = Value::Null;
    for _ in 0..200 {
        last = step(&mut c);
        if last["speed"].as_f64().unwrap() == 0.0 {
            break;
        }
    }
    assert_eq!(last["speed"], 0.0, "{last}");
    c.send(json!({"type": "finish_teach"})).unwrap();
    let done = c.recv_type("teach_done").unwrap();
    let length = done["length"].as_f64().unwrap();
    let driven = done["driven_distance"].as_f64().unwrap();
    assert!(driven > 50.0, "{driven}");
    assert!((length - driven).abs() <= 0.02 * driven, "recorded {length} vs driven {driven}");
    // the session moves on to repeating the recorded path
    let hello = c.recv_type("hello").unwrap();
    assert_eq!(hello["phase"], "repeat");
    assert!(hello["path"].as_array().unwrap().len() > 100);
    drop(c);
    assert!(server.join().unwrap().is_err());
}

#[test]
fn finishing_without_driving_reports_short_path() {
    let (mut c, server) = start(straight(100.0), None);
    c.send(json!({"type": "finish_teach"})).unwrap();
    let err = c.recv_type("error").unwrap();
    assert_eq!(err["code"], "path_too_short");
    assert!(server.join().unwrap().is_err());
}

#[test]
fn disconnect_mid_teach_aborts() {
    let (mut c, server) = start(straight(100.0), None);
    c.send(json!({"type": "drive", "throttle": 0.3})).unwrap();
    step(&mut c);
    drop(c);
    let err = server.join().unwrap().unwrap_err();
    assert!(err.to_string().contains("teach aborted"), "{err}");
}

#[test]
fn torque_above_limit_shows_manual_on_next_frame() {
    let (mut c, server) = repeat_session(150.0);
    for _ in 0..40 {
        step(&mut c);
    }
    c.send(json!({"type": "steer_torque", "torque": 7.5})).unwrap();
    assert_eq!(step(&mut c)["guard"]["mode"], "AUTONOMOUS");
    c.send(json!({"type": "steer_torque", "torque": 8.0})).unwrap();
    let s = step(&mut c);
    assert_eq!(s["guard"]["mode"], "MANUAL");
    assert_eq!(s["guard"]["reason"], "TORQUE_INTERVENTION");
    assert_eq!(s["guard"]["led"], "GREEN");
    // MANUAL ends the repeat run once the vehicle stands still
    c.send(json!({"type": "step", "frames": 400})).unwrap();
    let done = c.recv_type("done").unwrap();
    assert_eq!(done["summary"]["status"], "MANUAL");
    server.join().unwrap().unwrap();
}

#[test]
fn placed_obstacle_slows_vehicle_and_removal_resumes() {
    let (mut c, server) = repeat_session(300.0);
    let mut s = Value::Null;
    for _ in 0..200 {
        s = step(&mut c);
    }
    let v0 = s["speed"].as_f64().unwrap();
    let x0 = s["pose"]["x"].as_f64().unwrap();
    let t0 = s["time"].as_f64().unwrap();
    assert!(v0 > 4.0, "{v0}");
    let obstacle = json!({"id": "box", "x": x0 + 14.0, "y": 0.0, "length": 1.0, "width": 1.5, "height": 1.0,
                          "spawn": null, "despawn": null, "flicker_period": null});
    c.send(json!({"type": "place_obstacle", "obstacle": obstacle.clone()})).unwrap();
    c.send(json!({"type": "place_obstacle", "obstacle": obstacle})).unwrap();
    assert_eq!(c.recv_type("ack").unwrap()["id"], "box");
    assert_eq!(c.recv_type("ack").unwrap()["id"], "box");
    let mut slowed_at = None;
    for _ in 0..20 {
        s = step(&mut c);
        assert_eq!(s["obstacles"].as_array().unwrap().len(), 1);
        if slowed_at.is_none() && s["speed"].as_f64().unwrap() < v0 - 1e-6 {
            slowed_at = Some(s["time"].as_f64().unwrap());
        }
    }
    let slowed_at = slowed_at.expect("vehicle never slowed down");
    assert!(slowed_at - t0 <= 0.5 + 1e-9, "deceleration after {} s", slowed_at - t0);
    assert!(s["obstacle"]["blocking_distance"].is_number());
    assert!(s["grid"]["occupied_count"].as_u64().unwrap() > 0);
    // stand still in front of it, then take it away
    for _ in 0..200 {
        s = step(&mut c);
    }
    assert!(s["speed"].as_f64().unwrap() < 0.05);
    assert!(s["pose"]["x"].as_f64().unwrap() < x0 + 14.0 - 0.5);
    c.send(json!({"type": "remove_obstacle", "id": "box"})).unwrap();
    assert_eq!(c.recv_type("ack").unwrap()["removed"], true);
    for _ in 0..200 {
        s = step(&mut c);
    }
    assert!(s["speed"].as_f64().unwrap() > 2.0, "{s}");
    c.send(json!({"type": "request_stop"})).unwrap();
    c.send(json!({"type": "step", "frames": 400})).unwrap();
    let done = c.recv_type("done").unwrap();
    assert_eq!(done["summary"]["status"], "MISSION_COMPLETE");
    let outcome = server.join().unwrap().unwrap();
    assert!(outcome.repeat.is_some());
}

#[test]
fn mismatched_version_is_rejected() {
    let (mut c, server) = repeat_session(100.0);
    c.send(json!({"type": "step", "v": 2})).unwrap();
    let err = c.recv_type("error").unwrap();
    assert_eq!(err["code"], "version_mismatch");
    assert!(c.recv().unwrap().is_none(), "connection stays open");
    assert!(server.join().unwrap().is_err());
}

#[test]
fn bad_and_misplaced_frames_get_errors() {
    let (mut c, server) = repeat_session(100.0);
    c.send(json!({"type": "drive", "throttle": 1.0})).unwrap();
    assert_eq!(c.recv_type("error").unwrap()["code"], "wrong_phase");
    c.send(json!({"type": "warp"})).unwrap();
    assert_eq!(c.recv_type("error").unwrap()["code"], "bad_frame");
    c.send(json!({"type": "set_param", "key": "vehicle.wheelbase", "value": 3.0})).unwrap();
    assert_eq!(c.recv_type("error").unwrap()["code"], "rejected_param");
    c.send(json!({"type": "set_param", "key": "velocity.max_abs_vel", "value": 3.0})).unwrap();
    assert_eq!(c.recv_type("ack").unwrap()["key"], "velocity.max_abs_vel");
    let mut s = Value::Null;
    for _ in 0..200 {
        s = step(&mut c);
    }
    assert!(s["speed"].as_f64().unwrap() <= 3.0 + 1e-9);
    drop(c);
    assert!(server.join().unwrap().is_err());
}
