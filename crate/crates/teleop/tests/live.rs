mod common;

use std::net::SocketAddr;
use std::time::Duration;

use common::{connect, steer_target, Ws};
use futures_util::{SinkExt, StreamExt};
use hapdrive_core::experiment::{run_trial, Condition, TrialId, TrialInput, TrialRole};
use hapdrive_core::geometry::{build_default_track, OBSTACLE_COUNT};
use hapdrive_core::sim::LeadCache;
use hapdrive_teleop::protocol::{PauseReason, Phase, ServerMessage, SUBPROTOCOL};
use hapdrive_teleop::{serve_trial, ServerConfig, SessionConfig};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio_tungstenite::tungstenite::Message;

fn local() -> SocketAddr {
    "127.0.0.1:0".parse().unwrap()
}

fn config(speed: f64, kp: f64) -> ServerConfig {
    ServerConfig {
        session: SessionConfig {
            condition: Condition::new(speed, kp).unwrap(),
            obstacle_seed: 6,
            ..SessionConfig::default()
        },
        ..ServerConfig::default()
    }
}

async fn http_get(addr: SocketAddr, path: &str) -> String {
    let mut s = tokio::net::TcpStream::connect(addr).await.unwrap();
    let req = format!("GET {path} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n");
    s.write_all(req.as_bytes()).await.unwrap();
    let mut out = String::new();
    s.read_to_string(&mut out).await.unwrap();
    out
}

async fn next_msg(ws: &mut Ws) -> ServerMessage {
    loop {
        let m = tokio::time::timeout(Duration::from_secs(10), ws.next())
            .await
            .expect("server went quiet")
            .unwrap()
            .unwrap();
        if let Message::Text(t) = m {
            return serde_json::from_str(&t).unwrap();
        }
    }
}

async fn wait_phase(ws: &mut Ws, phase: Phase) {
    loop {
        if let ServerMessage::State(f) = next_msg(ws).await {
            if f.phase == phase {
                return;
            }
        }
    }
}

async fn send(ws: &mut Ws, v: serde_json::Value) {
    ws.send(Message::Text(v.to_string())).await.unwrap();
}

#[tokio::test]
async fn serves_the_cockpit_page_and_layout() {
    let h = serve_trial(config(10.0, 0.0), local()).await.unwrap();
    let page = http_get(h.addr, "/").await;
    assert!(page.starts_with("HTTP/1.1 200"));
    assert!(page.contains(SUBPROTOCOL));
    let layout = http_get(h.addr, "/layout").await;
    let body = &layout[layout.find("\r\n\r\n").unwrap() + 4..];
    let v: serde_json::Value = serde_json::from_str(body).unwrap();
    assert_eq!(v["obstacle_seed"], 6);
    assert_eq!(v["obstacles"].as_array().unwrap().len(), OBSTACLE_COUNT);
    assert!(v["centerline"].as_array().unwrap().len() > 400);
    h.shutdown().await;
}

#[tokio::test]
async fn serves_a_static_directory_when_configured() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<p>custom cockpit</p>").unwrap();
    std::fs::write(dir.path().join("app.js"), "console.log(1)").unwrap();
    let cfg = ServerConfig {
        static_dir: Some(dir.path().to_path_buf()),
        ..config(10.0, 0.0)
    };
    let h = serve_trial(cfg, local()).await.unwrap();
    assert!(http_get(h.addr, "/").await.contains("custom cockpit"));
    assert!(http_get(h.addr, "/app.js").await.contains("console.log"));
    assert!(http_get(h.addr, "/missing.js")
        .await
        .starts_with("HTTP/1.1 404"));
    h.shutdown().await;
}

#[tokio::test]
async fn port_in_use_is_an_error() {
    let h = serve_trial(config(10.0, 0.0), local()).await.unwrap();
    assert!(serve_trial(config(10.0, 0.0), h.addr).await.is_err());
    h.shutdown().await;
}

#[tokio::test]
async fn state_frames_follow_start_pause_and_reset() {
    let h = serve_trial(config(12.5, 500.0), local()).await.unwrap();
    let mut ws = connect(h.addr).await;
    match next_msg(&mut ws).await {
        ServerMessage::State(f) => {
            assert_eq!(f.phase, Phase::Waiting);
            assert_eq!(f.condition.kp, 500.0);
        }
        m => panic!("unexpected {m:?}"),
    }
    send(
        &mut ws,
        serde_json::json!({"type": "control", "action": "start"}),
    )
    .await;
    let mut last = None;
    let mut running = 0;
    while running < 40 {
        if let ServerMessage::State(f) = next_msg(&mut ws).await {
            if f.phase != Phase::Running || f.tick == 0 {
                continue;
            }
            assert!(f.feedback_force.abs() <= 7.0);
            assert_eq!(f.tick % 4, 0);
            if let Some(prev) = last {
                assert!(f.tick > prev);
            }
            last = Some(f.tick);
            running += 1;
        }
    }
    send(
        &mut ws,
        serde_json::json!({"type": "control", "action": "pause"}),
    )
    .await;
    wait_phase(&mut ws, Phase::Paused(PauseReason::Requested)).await;
    send(
        &mut ws,
        serde_json::json!({"type": "control", "action": "reset"}),
    )
    .await;
    loop {
        if let ServerMessage::State(f) = next_msg(&mut ws).await {
            if f.session == 1 {
                assert_eq!((f.tick, f.phase), (0, Phase::Waiting));
                break;
            }
        }
    }
    h.shutdown().await;
}

#[tokio::test]
async fn stale_input_pauses_and_fresh_input_resumes() {
    let h = serve_trial(config(10.0, 200.0), local()).await.unwrap();
    let mut ws = connect(h.addr).await;
    send(
        &mut ws,
        serde_json::json!({"type": "control", "action": "start"}),
    )
    .await;
    send(
        &mut ws,
        serde_json::json!({"type": "input", "client_time": 0.0, "target": 0.1}),
    )
    .await;
    wait_phase(&mut ws, Phase::Running).await;
    // no more input: paused once the latched value is 200 ms old
    wait_phase(&mut ws, Phase::Paused(PauseReason::StaleInput)).await;
    let paused_at = h.stats().ticks;
    tokio::time::sleep(Duration::from_millis(100)).await;
    assert_eq!(h.stats().ticks, paused_at);
    send(
        &mut ws,
        serde_json::json!({"type": "input", "client_time": 1.0, "target": 0.1}),
    )
    .await;
    wait_phase(&mut ws, Phase::Running).await;
    h.shutdown().await;
}

#[tokio::test]
async fn tokens_and_ranges_are_enforced() {
    let cfg = ServerConfig {
        token: Some("secret".into()),
        ..config(10.0, 0.0)
    };
    let h = serve_trial(cfg, local()).await.unwrap();
    let mut ws = connect(h.addr).await;
    send(
        &mut ws,
        serde_json::json!({"type": "control", "action": "start", "token": "wrong"}),
    )
    .await;
    send(
        &mut ws,
        serde_json::json!({"type": "control", "action": "start"}),
    )
    .await;
    tokio::time::sleep(Duration::from_millis(100)).await;
    assert_eq!(h.stats().ticks, 0);
    send(
        &mut ws,
        serde_json::json!({"type": "control", "action": "start", "token": "secret"}),
    )
    .await;
    wait_phase(&mut ws, Phase::Running).await;
    h.shutdown().await;
}

#[tokio::test]
async fn driver_disconnect_pauses_until_restarted() {
    let cfg = ServerConfig {
        stale_after_ms: None,
        ..config(10.0, 0.0)
    };
    let h = serve_trial(cfg, local()).await.unwrap();
    let mut ws = connect(h.addr).await;
    send(
        &mut ws,
        serde_json::json!({"type": "control", "action": "start"}),
    )
    .await;
    send(
        &mut ws,
        serde_json::json!({"type": "input", "client_time": 0.0, "target": 0.0}),
    )
    .await;
    wait_phase(&mut ws, Phase::Running).await;
    ws.close(None).await.unwrap();
    drop(ws);
    let mut ws = connect(h.addr).await;
    wait_phase(&mut ws, Phase::Paused(PauseReason::ClientDisconnected)).await;
    send(
        &mut ws,
        serde_json::json!({"type": "control", "action": "start"}),
    )
    .await;
    wait_phase(&mut ws, Phase::Running).await;
    h.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn live_lap_matches_headless_replay_of_its_latched_inputs() {
    let cfg = ServerConfig {
        speedup: 10,
        stale_after_ms: None,
        ..config(10.0, 500.0)
    };
    let mut h = serve_trial(cfg.clone(), local()).await.unwrap();
    let track = build_default_track();
    let (mut tx, mut rx) = connect(h.addr).await.split();
    tx.send(Message::Text(
        serde_json::json!({"type": "control", "action": "start"}).to_string(),
    ))
    .await
    .unwrap();
    let mut inputs = 0;
    let mut end = None;
    while let Some(Ok(m)) = rx.next().await {
        let Message::Text(t) = m else { continue };
        match serde_json::from_str::<ServerMessage>(&t).unwrap() {
            ServerMessage::State(f) => {
                let target = steer_target(&track, f.rear.x, f.rear.y, f.rear.phi);
                let msg = serde_json::json!({"type": "input", "client_time": inputs as f64, "target": target});
                tx.send(Message::Text(msg.to_string())).await.unwrap();
                inputs += 1;
            }
            ServerMessage::End(e) => {
                end = Some(e);
                break;
            }
        }
    }
    let end = end.expect("trial ended");
    assert_eq!(end.reason, "lap_complete");
    let record = h.wait_record().await.unwrap();
    record.check().unwrap();
    assert!(record.subject_tag.starts_with("live-human"));
    assert!(record.metrics.as_ref().unwrap().max_feedback_force <= 7.0);
    let back = hapdrive_core::TrialRecord::from_json(&record.to_json().unwrap()).unwrap();
    assert_eq!(back, record);

    let TrialInput::PositionLog { positions } = &record.input else {
        panic!("live input log expected")
    };
    let mut trial = cfg.session.trial.clone();
    trial.keep_series = true;
    let headless = run_trial(
        &track,
        &mut LeadCache::new(),
        TrialId {
            subject: 0,
            block: 0,
            trial: 0,
        },
        "replay".into(),
        TrialRole::Task,
        record.condition,
        record.obstacle_seed,
        TrialInput::PositionLog {
            positions: positions.clone(),
        },
        &trial,
    );
    assert_eq!(headless.series, record.series);
    assert_eq!(headless.metrics, record.metrics);
    h.shutdown().await;
}
