//! Websocket session server. One engine session per connection over shared
//! read-only tables; every accepted step is appended to that session's trace
//! file as it happens.

use std::future::Future;
use std::io;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Query, State};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use intentgrid_core::protocol::{ProtocolSession, ServerMessage, PROTOCOL_VERSION};
use intentgrid_core::trace::{TraceHeader, TraceWriter};
use intentgrid_core::{HmmParams, Planner, Pose, Session, StepMode};
use serde::Deserialize;
use tokio::net::TcpListener;
use tokio::sync::{watch, Notify};
use tower_http::services::ServeDir;

const PLACEHOLDER_UI: &str = include_str!("../assets/index.html");
const DRAIN_TIMEOUT: Duration = Duration::from_secs(5);

/// Per-session defaults; a client may override seed and mode in the query string.
#[derive(Debug, Clone)]
pub struct SessionSettings {
    pub hmm: HmmParams,
    pub start: Pose,
    pub mode: StepMode,
    pub seed: u64,
    pub trace_dir: PathBuf,
    pub ui_dir: Option<PathBuf>,
}

#[derive(Clone)]
struct AppState {
    planner: Arc<Planner>,
    settings: Arc<SessionSettings>,
    map_hash: Arc<str>,
    run_id: u64,
    next_session: Arc<AtomicU64>,
    live: Arc<LiveSessions>,
    shutdown: watch::Receiver<bool>,
}

/// Counts open sessions so shutdown can wait for their traces.
#[derive(Default)]
struct LiveSessions {
    count: AtomicUsize,
    drained: Notify,
}

struct LiveGuard(Arc<LiveSessions>);

impl LiveGuard {
    fn enter(live: &Arc<LiveSessions>) -> Self {
        live.count.fetch_add(1, Ordering::SeqCst);
        LiveGuard(live.clone())
    }
}

impl Drop for LiveGuard {
    fn drop(&mut self) {
        if self.0.count.fetch_sub(1, Ordering::SeqCst) == 1 {
            self.0.drained.notify_waiters();
        }
    }
}

pub struct Server {
    listener: TcpListener,
    state: AppState,
    shutdown: watch::Sender<bool>,
}

impl Server {
    pub async fn bind(addr: &str, planner: Arc<Planner>, settings: SessionSettings) -> io::Result<Self> {
        std::fs::create_dir_all(&settings.trace_dir)?;
        let listener = TcpListener::bind(addr).await?;
        let (shutdown, shutdown_rx) = watch::channel(false);
        let run_id = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0);
        let state = AppState {
            map_hash: planner.map().hash().into(),
            planner,
            settings: Arc::new(settings),
            run_id,
            next_session: Arc::new(AtomicU64::new(1)),
            live: Arc::default(),
            shutdown: shutdown_rx,
        };
        Ok(Self { listener, state, shutdown })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.listener.local_addr().expect("bound listener has an address")
    }

    /// Serves until `signal` resolves, then closes every session and waits
    /// for their trace files.
    pub async fn run(self, signal: impl Future<Output = ()> + Send + 'static) -> io::Result<()> {
        let live = self.state.live.clone();
        let router = router(self.state);
        let notify = self.shutdown;
        axum::serve(self.listener, router)
            .with_graceful_shutdown(async move {
                signal.await;
                let _ = notify.send(true);
            })
            .await?;
        let _ = tokio::time::timeout(DRAIN_TIMEOUT, async {
            loop {
                let drained = live.drained.notified();
                if live.count.load(Ordering::SeqCst) == 0 {
                    break;
                }
                drained.await;
            }
        })
        .await;
        Ok(())
    }
}

fn router(state: AppState) -> Router {
    let app = Router::new().route("/ws", get(ws_handler)).route("/health", get(health));
    let app = match &state.settings.ui_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app.route("/", get(|| async { Html(PLACEHOLDER_UI) })),
    };
    app.with_state(state)
}

/// Resolves on Ctrl-C or, on Unix, SIGTERM.
pub async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
}

async fn health(State(app): State<AppState>) -> impl IntoResponse {
    Json(serde_json::json!({
        "status": "ok",
        "protocol": PROTOCOL_VERSION,
        "version": env!("CARGO_PKG_VERSION"),
        "map_hash": &*app.map_hash,
        "sessions": app.live.count.load(Ordering::SeqCst),
    }))
}

#[derive(Debug, Deserialize)]
struct SessionQuery {
    seed: Option<u64>,
    mode: Option<StepMode>,
}

async fn ws_handler(ws: WebSocketUpgrade, Query(q): Query<SessionQuery>, State(app): State<AppState>) -> Response {
    let seed = q.seed.unwrap_or(app.settings.seed);
    let mode = q.mode.unwrap_or(app.settings.mode);
    let guard = LiveGuard::enter(&app.live);
    ws.on_upgrade(move |socket| async move {
        run_session(socket, app, seed, mode).await;
        drop(guard);
    })
}

/// Trace file of one session; a reset starts a new segment.
struct SessionTrace {
    dir: PathBuf,
    stem: String,
    segment: u32,
    writer: Option<TraceWriter<io::BufWriter<std::fs::File>>>,
}

impl SessionTrace {
    fn open(dir: &Path, stem: String, session: &Session) -> Self {
        let mut t = Self { dir: dir.to_owned(), stem, segment: 0, writer: None };
        t.start(session);
        t
    }

    fn path(&self) -> PathBuf {
        self.dir.join(format!("{}-{}.jsonl", self.stem, self.segment))
    }

    fn start(&mut self, session: &Session) {
        let path = self.path();
        let opened = std::fs::File::create(&path).map_err(|e| e.to_string()).and_then(|f| {
            TraceWriter::new(io::BufWriter::new(f), &TraceHeader::for_session(session)).map_err(|e| e.to_string())
        });
        self.writer = match opened {
            Ok(w) => Some(w),
            Err(e) => {
                eprintln!("trace {}: {e}; this session is not recorded", path.display());
                None
            }
        };
    }

    fn restart(&mut self, session: &Session) {
        self.segment += 1;
        self.start(session);
    }

    fn append(&mut self, record: &intentgrid_core::StepRecord) {
        if let Some(w) = &mut self.writer {
            if let Err(e) = w.append(record) {
                eprintln!("trace {}: {e}; recording stops", self.path().display());
                self.writer = None;
            }
        }
    }
}

async fn send(socket: &mut WebSocket, msg: &ServerMessage) -> bool {
    socket.send(Message::Text(msg.to_json().into())).await.is_ok()
}

async fn run_session(mut socket: WebSocket, app: AppState, seed: u64, mode: StepMode) {
    let id = app.next_session.fetch_add(1, Ordering::SeqCst);
    let session = match Session::new(app.planner.clone(), app.settings.hmm, app.settings.start, mode, seed) {
        Ok(s) => s,
        Err(e) => {
            let msg = ServerMessage::Error { message: e.to_string(), fatal: true };
            send(&mut socket, &msg).await;
            let _ = socket.send(Message::Close(None)).await;
            return;
        }
    };
    let mut trace = SessionTrace::open(&app.settings.trace_dir, format!("session-{}-{id}", app.run_id), &session);
    let mut proto = ProtocolSession::new(session);
    let mut shutdown = app.shutdown.clone();

    for msg in proto.open() {
        if !send(&mut socket, &msg).await {
            return;
        }
    }
    loop {
        let incoming = tokio::select! {
            m = socket.recv() => m,
            _ = shutdown.wait_for(|stop| *stop) => break,
        };
        let text = match incoming {
            Some(Ok(Message::Text(t))) => t,
            Some(Ok(Message::Binary(_))) => {
                let msg = ServerMessage::Error { message: "binary frames are not supported".into(), fatal: false };
                if !send(&mut socket, &msg).await {
                    return;
                }
                continue;
            }
            Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return,
            Some(Ok(_)) => continue,
        };
        let reply = proto.handle_text(text.as_str());
        if let Some(record) = &reply.record {
            trace.append(record);
        }
        if reply.reset {
            trace.restart(proto.session());
        }
        for msg in &reply.messages {
            if !send(&mut socket, msg).await {
                return;
            }
        }
        if reply.close {
            break;
        }
    }
    let _ = socket.send(Message::Close(None)).await;
}
