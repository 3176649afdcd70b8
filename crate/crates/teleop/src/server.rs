//! HTTP side: `/trial` WebSocket, `/layout` JSON and the static cockpit.
//!
//! One ticker task owns the [`Session`]. Socket readers talk to it only through
//! mailboxes: a watch cell holding the latest input (latest value wins) and a
//! command queue. Outgoing frames go through a broadcast channel, so a slow client
//! never holds up a tick.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::{Html, IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use futures_util::{SinkExt, StreamExt};
use hapdrive_core::experiment::TrialRecord;
use serde::{Deserialize, Serialize};
use tokio::sync::{broadcast, mpsc, oneshot, watch};
use tokio::task::JoinHandle;
use tokio::time::{Instant, MissedTickBehavior};
use tower_http::services::ServeDir;

use crate::protocol::{
    ClientMessage, ControlAction, PauseReason, Phase, ServerMessage, SUBPROTOCOL,
};
use crate::session::{end_frame, record_live_trial, Session, SessionConfig, TeleopError};

const INDEX_HTML: &str = include_str!("../web/index.html");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServerConfig {
    pub session: SessionConfig,
    /// Simulated ticks per wall-clock tick; 1 is real time.
    pub speedup: u32,
    /// Ticks the loop may run late before it drops the backlog.
    pub max_catch_up: u32,
    /// Pause when the newest input is older than this; `None` disables.
    pub stale_after_ms: Option<u64>,
    /// Inputs and controls must carry this token when set.
    pub token: Option<String>,
    pub auto_start: bool,
    /// Serve the cockpit from here instead of the built-in page.
    pub static_dir: Option<PathBuf>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            session: SessionConfig::default(),
            speedup: 1,
            max_catch_up: 5,
            stale_after_ms: Some(200),
            token: None,
            auto_start: false,
            static_dir: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stats {
    pub ticks: u64,
    pub frames: u64,
    pub overruns: u64,
}

#[derive(Default)]
struct Counters {
    ticks: AtomicU64,
    frames: AtomicU64,
    overruns: AtomicU64,
}

#[derive(Clone, Copy, Debug)]
struct Latched {
    seq: u64,
    target: f64,
    at: Instant,
}

#[derive(Debug)]
enum Command {
    Control(ControlAction),
    Disconnected { driver: bool },
}

struct App {
    token: Option<String>,
    frames: broadcast::Sender<Arc<str>>,
    latest: watch::Receiver<Arc<str>>,
    input: watch::Sender<Option<Latched>>,
    commands: mpsc::Sender<Command>,
    layout: serde_json::Value,
}

pub struct ServerHandle {
    pub addr: SocketAddr,
    records: watch::Receiver<Option<TrialRecord>>,
    counters: Arc<Counters>,
    shutdown: Option<oneshot::Sender<()>>,
    tasks: Vec<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn stats(&self) -> Stats {
        Stats {
            ticks: self.counters.ticks.load(Ordering::Relaxed),
            frames: self.counters.frames.load(Ordering::Relaxed),
            overruns: self.counters.overruns.load(Ordering::Relaxed),
        }
    }

    /// Waits for the next completed trial.
    pub async fn wait_record(&mut self) -> Option<TrialRecord> {
        self.records
            .wait_for(|r| r.is_some())
            .await
            .ok()
            .and_then(|r| r.clone())
    }

    pub async fn shutdown(mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        for t in self.tasks.drain(..) {
            let _ = t.await;
        }
    }
}

fn encode(msg: &ServerMessage) -> Arc<str> {
    serde_json::to_string(msg).expect("frames serialize").into()
}

fn layout_json(session: &Session) -> serde_json::Value {
    let t = session.track();
    let n = t.total_length.ceil() as usize;
    let centerline: Vec<[f64; 2]> = (0..=n).map(|i| t.frenet_to_xy(i as f64, 0.0)).collect();
    serde_json::json!({
        "obstacle_seed": session.cfg.obstacle_seed,
        "obstacles": session.obstacles(),
        "centerline": centerline,
        "half_width": t.half_width,
        "lane_offset": session.cfg.trial.sim.lane_offset,
    })
}

/// Binds `addr` and runs one live trial session until shut down.
pub async fn serve_trial(cfg: ServerConfig, addr: SocketAddr) -> Result<ServerHandle, TeleopError> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|source| TeleopError::Bind {
            addr: addr.to_string(),
            source,
        })?;
    let addr = listener.local_addr().map_err(|source| TeleopError::Bind {
        addr: addr.to_string(),
        source,
    })?;

    let mut session = Session::new(cfg.session.clone(), 0)?;
    if cfg.auto_start {
        session.start();
    }
    let (frames, _) = broadcast::channel(1024);
    let (latest_tx, latest) =
        watch::channel(encode(&ServerMessage::State(session.current_frame()?)));
    let (input, input_rx) = watch::channel(None);
    let (commands, commands_rx) = mpsc::channel(64);
    let (records_tx, records) = watch::channel(None);
    let (shutdown_tx, shutdown_rx) = oneshot::channel();
    let counters = Arc::new(Counters::default());

    let app = Arc::new(App {
        token: cfg.token.clone(),
        frames: frames.clone(),
        latest,
        input,
        commands,
        layout: layout_json(&session),
    });
    let mut router = Router::new()
        .route("/trial", get(ws_handler))
        .route("/layout", get(layout_handler));
    router = match &cfg.static_dir {
        Some(dir) => router.fallback_service(ServeDir::new(dir)),
        None => router.route("/", get(|| async { Html(INDEX_HTML) })),
    };
    let router = router.with_state(app);

    let (stop_http_tx, stop_http_rx) = oneshot::channel::<()>();
    let http = tokio::spawn(async move {
        let _ = axum::serve(listener, router)
            .with_graceful_shutdown(async {
                let _ = stop_http_rx.await;
            })
            .await;
    });
    let ticker = Ticker {
        cfg,
        session,
        frames,
        latest: latest_tx,
        input: input_rx,
        commands: commands_rx,
        records: records_tx,
        counters: counters.clone(),
    };
    let tick = tokio::spawn(async move {
        ticker.run(shutdown_rx).await;
        let _ = stop_http_tx.send(());
    });
    Ok(ServerHandle {
        addr,
        records,
        counters,
        shutdown: Some(shutdown_tx),
        tasks: vec![tick, http],
    })
}

struct Ticker {
    cfg: ServerConfig,
    session: Session,
    frames: broadcast::Sender<Arc<str>>,
    latest: watch::Sender<Arc<str>>,
    input: watch::Receiver<Option<Latched>>,
    commands: mpsc::Receiver<Command>,
    records: watch::Sender<Option<TrialRecord>>,
    counters: Arc<Counters>,
}

impl Ticker {
    fn publish(&self, msg: ServerMessage) {
        let text = encode(&msg);
        if matches!(msg, ServerMessage::State(_)) {
            self.counters.frames.fetch_add(1, Ordering::Relaxed);
            self.latest.send_replace(text.clone());
        }
        // no receivers is fine
        let _ = self.frames.send(text);
    }

    fn publish_current(&mut self) {
        match self.session.current_frame() {
            Ok(f) => self.publish(ServerMessage::State(f)),
            Err(e) => log::error!("cannot build state frame: {e}"),
        }
    }

    async fn run(mut self, mut shutdown: oneshot::Receiver<()>) {
        let period = Duration::from_secs_f64(self.cfg.session.trial.sim.tick);
        let mut clock = tokio::time::interval(period);
        clock.set_missed_tick_behavior(MissedTickBehavior::Skip);
        let speedup = u64::from(self.cfg.speedup.max(1));
        let max_due = (1 + u64::from(self.cfg.max_catch_up)) * speedup;
        let stale = self.cfg.stale_after_ms.map(Duration::from_millis);
        let mut origin = Instant::now();
        let mut done: u64 = 0;
        let mut seen_seq = 0;
        let mut last_input: Option<Instant> = None;

        loop {
            tokio::select! {
                _ = clock.tick() => {}
                _ = &mut shutdown => break,
            }
            let now = Instant::now();
            let was_running = self.session.phase() == Phase::Running;

            while let Ok(cmd) = self.commands.try_recv() {
                match cmd {
                    Command::Control(ControlAction::Start) => {
                        last_input = None;
                        self.session.start();
                    }
                    Command::Control(ControlAction::Pause) => {
                        self.session.pause(PauseReason::Requested)
                    }
                    Command::Control(ControlAction::Reset) => {
                        let id = self.session.id + 1;
                        match Session::new(self.cfg.session.clone(), id) {
                            Ok(s) => {
                                self.session = s;
                                last_input = None;
                                if self.cfg.auto_start {
                                    self.session.start();
                                }
                            }
                            Err(e) => log::error!("reset failed: {e}"),
                        }
                    }
                    Command::Disconnected { driver: true } => {
                        self.session.pause(PauseReason::ClientDisconnected)
                    }
                    Command::Disconnected { driver: false } => {}
                }
                self.publish_current();
            }

            let newest = *self.input.borrow_and_update();
            if let Some(l) = newest {
                if l.seq != seen_seq {
                    seen_seq = l.seq;
                    self.session.latch(l.target);
                    last_input = Some(l.at);
                    if self.session.phase() == Phase::Paused(PauseReason::StaleInput) {
                        self.session.start();
                        self.publish_current();
                    }
                }
            }
            if let (Some(limit), Some(at)) = (stale, last_input) {
                if self.session.phase() == Phase::Running && now.duration_since(at) > limit {
                    log::warn!("input stale for {:?}, pausing", now.duration_since(at));
                    self.session.pause(PauseReason::StaleInput);
                    self.publish_current();
                }
            }

            if self.session.phase() != Phase::Running {
                continue;
            }
            if !was_running {
                origin = now;
                done = 0;
            }
            let elapsed =
                (now.duration_since(origin).as_secs_f64() / period.as_secs_f64()).floor() as u64;
            let target = (elapsed + 1) * speedup;
            let mut due = target.saturating_sub(done);
            if due > max_due {
                self.counters.overruns.fetch_add(1, Ordering::Relaxed);
                log::warn!("clock overrun: {due} ticks behind, dropping backlog");
                due = max_due;
                done = target - due;
            }
            for _ in 0..due {
                match self.session.step() {
                    Ok(frame) => {
                        done += 1;
                        self.counters.ticks.fetch_add(1, Ordering::Relaxed);
                        if let Some(f) = frame {
                            self.publish(ServerMessage::State(f));
                        }
                    }
                    Err(e) => {
                        log::error!("simulation failed: {e}");
                        self.session.pause(PauseReason::Requested);
                        self.publish(ServerMessage::End(end_frame(
                            &self.session,
                            None,
                            &e.to_string(),
                        )));
                        break;
                    }
                }
                if self.session.phase() == Phase::Finished {
                    let record = record_live_trial(&self.session).ok();
                    self.publish(ServerMessage::End(end_frame(
                        &self.session,
                        record.as_ref(),
                        "lap_complete",
                    )));
                    self.records.send_replace(record);
                    break;
                }
            }
        }
    }
}

async fn layout_handler(State(app): State<Arc<App>>) -> impl IntoResponse {
    Json(app.layout.clone())
}

async fn ws_handler(ws: WebSocketUpgrade, State(app): State<Arc<App>>) -> Response {
    ws.protocols([SUBPROTOCOL])
        .on_upgrade(move |socket| connection(socket, app))
}

async fn connection(socket: WebSocket, app: Arc<App>) {
    let (mut tx, mut rx) = socket.split();
    let mut frames = app.frames.subscribe();
    let first = app.latest.borrow().clone();
    if tx.send(Message::Text(first.to_string())).await.is_err() {
        return;
    }
    let writer = tokio::spawn(async move {
        loop {
            match frames.recv().await {
                Ok(text) => {
                    if tx.send(Message::Text(text.to_string())).await.is_err() {
                        break;
                    }
                }
                Err(broadcast::error::RecvError::Lagged(n)) => {
                    log::warn!("client lagged, {n} frames dropped")
                }
                Err(broadcast::error::RecvError::Closed) => break,
            }
        }
    });

    let authorized = |token: &Option<String>| app.token.is_none() || token == &app.token;
    let mut driver = false;
    while let Some(Ok(msg)) = rx.next().await {
        let text = match msg {
            Message::Text(t) => t,
            Message::Close(_) => break,
            _ => continue,
        };
        match serde_json::from_str::<ClientMessage>(&text) {
            Ok(ClientMessage::Input(f)) if authorized(&f.token) && f.is_valid() => {
                driver = true;
                let at = Instant::now();
                app.input.send_modify(|l| {
                    let seq = l.map_or(1, |l| l.seq + 1);
                    *l = Some(Latched {
                        seq,
                        target: f.target,
                        at,
                    });
                });
            }
            Ok(ClientMessage::Control(c)) if authorized(&c.token) => {
                let _ = app.commands.send(Command::Control(c.action)).await;
            }
            Ok(_) => log::debug!("rejected message: {text}"),
            Err(e) => log::debug!("unparseable message ({e}): {text}"),
        }
    }
    writer.abort();
    let _ = app.commands.send(Command::Disconnected { driver }).await;
}
