//! Serve mode: the teleop simulation paced by the wall clock and exposed
//! to operators over a websocket (`/ops`, JSON) and raw PTX1 frames (TCP).
//!
//! Three kinds of actor talk over channels only. The engine owns the
//! [`OpsGateway`]; socket tasks send it requests and receive its events
//! from a broadcast channel.

use std::net::SocketAddr;
use std::time::{Duration, Instant};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::{Json, Router};
use futures::{SinkExt, StreamExt};
use serde::{Deserialize, Serialize};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{broadcast, mpsc, oneshot};
use tokio::task::JoinHandle;

use ptxlink_core::metrics::experiment::{MetricKind, MetricSample};
use ptxlink_core::metrics::{summarize, BoxStats};
use ptxlink_core::netemu::clock::Micros;
use ptxlink_core::protocol::command::{CommandCaps, CommandMessage, CommandReply};
use ptxlink_core::protocol::frame::{decode_frame, encode_frame, frame_len, Flags, MsgType, HEADER_LEN};
use ptxlink_core::protocol::session::{AuthMessage, SessionId, SIGNED_COMMAND_LEN};
use ptxlink_core::scenario::ops::rejection;
use ptxlink_core::scenario::{ops_schema, OpsEvent, OpsGateway, OpsRequest, ScenarioError, TeleopConfig, TeleopSim};

/// Engine step when no request arrives.
pub const TICK: Duration = Duration::from_millis(10);

/// Command RTTs seen by the gateway. These are real-socket round trips,
/// not transmission latencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServeReport {
    pub local_link: String,
    pub samples: Vec<MetricSample>,
    pub rtt_ms: Option<BoxStats>,
    pub uptime_s: f64,
}

enum Inbound {
    Request(OpsRequest),
    Snapshot(oneshot::Sender<ServeReport>),
}

#[derive(Clone)]
struct AppState {
    requests: mpsc::Sender<Inbound>,
    events: broadcast::Sender<OpsEvent>,
}

pub struct Server {
    pub http_addr: SocketAddr,
    pub frames_addr: Option<SocketAddr>,
    stop: oneshot::Sender<()>,
    engine: JoinHandle<ServeReport>,
    tasks: Vec<JoinHandle<()>>,
}

impl Server {
    /// Stop every actor and return the final report.
    pub async fn shutdown(self) -> ServeReport {
        let _ = self.stop.send(());
        let report = self.engine.await.expect("engine task");
        for t in self.tasks {
            t.abort();
        }
        report
    }
}

fn report(gw: &OpsGateway, started: Instant) -> ServeReport {
    let link = gw.sim.cfg.local_link.clone();
    let samples = gw
        .rtt_ms
        .iter()
        .enumerate()
        .map(|(i, v)| MetricSample {
            run: i as u64,
            kind: MetricKind::RttMs,
            network: link.clone(),
            deployment: "jump_host".into(),
            payload_bytes: SIGNED_COMMAND_LEN,
            value_ms: *v,
        })
        .collect();
    ServeReport {
        local_link: link,
        samples,
        rtt_ms: summarize(&gw.rtt_ms).ok(),
        uptime_s: started.elapsed().as_secs_f64(),
    }
}

async fn engine(
    mut gw: OpsGateway,
    mut rx: mpsc::Receiver<Inbound>,
    tx: broadcast::Sender<OpsEvent>,
    mut stop: oneshot::Receiver<()>,
) -> ServeReport {
    let started = Instant::now();
    let origin = gw.sim.now();
    let virt = |at: Instant| -> Micros { origin + at.duration_since(started).as_micros() as Micros };
    let mut tick = tokio::time::interval(TICK);
    tick.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Skip);
    let publish = |evs: Vec<OpsEvent>| {
        for e in evs {
            // No subscribers is fine.
            let _ = tx.send(e);
        }
    };
    loop {
        tokio::select! {
            _ = &mut stop => break,
            msg = rx.recv() => {
                let Some(msg) = msg else { break };
                let t = virt(Instant::now());
                match gw.advance(t) {
                    Ok(evs) => publish(evs),
                    Err(e) => publish(vec![rejection(e.to_string())]),
                }
                match msg {
                    Inbound::Request(r) => match gw.apply(r) {
                        Ok(evs) => publish(evs),
                        Err(e) => publish(vec![rejection(e.to_string())]),
                    },
                    Inbound::Snapshot(reply) => { let _ = reply.send(report(&gw, started)); }
                }
            }
            _ = tick.tick() => {
                match gw.advance(virt(Instant::now())) {
                    Ok(evs) => publish(evs),
                    Err(e) => publish(vec![rejection(e.to_string())]),
                }
            }
        }
    }
    report(&gw, started)
}

async fn schema() -> impl IntoResponse {
    Json(ops_schema())
}

async fn metrics(State(st): State<AppState>) -> impl IntoResponse {
    let (tx, rx) = oneshot::channel();
    if st.requests.send(Inbound::Snapshot(tx)).await.is_err() {
        return Err(axum::http::StatusCode::SERVICE_UNAVAILABLE);
    }
    rx.await.map(Json).map_err(|_| axum::http::StatusCode::SERVICE_UNAVAILABLE)
}

async fn ops(ws: WebSocketUpgrade, State(st): State<AppState>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| ops_client(socket, st))
}

async fn ops_client(socket: WebSocket, st: AppState) {
    let (mut sink, mut stream) = socket.split();
    let mut sub = st.events.subscribe();
    let (direct_tx, mut direct_rx) = mpsc::channel::<OpsEvent>(16);
    let writer = tokio::spawn(async move {
        loop {
            let ev = tokio::select! {
                ev = sub.recv() => match ev {
                    Ok(e) => e,
                    Err(broadcast::error::RecvError::Lagged(_)) => continue,
                    Err(broadcast::error::RecvError::Closed) => break,
                },
                ev = direct_rx.recv() => match ev {
                    Some(e) => e,
                    None => break,
                },
            };
            let text = serde_json::to_string(&ev).expect("event serializes");
            if sink.send(Message::Text(text.into())).await.is_err() {
                break;
            }
        }
    });
    while let Some(Ok(msg)) = stream.next().await {
        match msg {
            Message::Text(t) => match OpsRequest::parse(t.as_str()) {
                Ok(r) => {
                    if st.requests.send(Inbound::Request(r)).await.is_err() {
                        break;
                    }
                }
                Err(e) => {
                    let _ = direct_tx.send(rejection(format!("bad request: {e}"))).await;
                }
            },
            Message::Close(_) => break,
            _ => {}
        }
    }
    writer.abort();
}

/// Translate one inbound frame into a gateway request.
pub fn frame_request(msg_type: MsgType, payload: &[u8], caps: &CommandCaps) -> Result<OpsRequest, String> {
    match msg_type {
        MsgType::Auth => match AuthMessage::decode(payload) {
            Ok(AuthMessage::Request { token }) => Ok(OpsRequest::Auth {
                token: String::from_utf8(token).map_err(|_| "token is not UTF-8".to_string())?,
            }),
            _ => Err("expected an AUTH request".into()),
        },
        MsgType::Command => {
            let c = CommandMessage::decode(payload, caps).map_err(|e| e.to_string())?;
            Ok(OpsRequest::Cmd {
                gait: c.gait,
                vx: c.vx,
                vy: c.vy,
                yaw_rate: c.yaw_rate,
                duration_ms: c.duration_ms,
                client_ts: None,
            })
        }
        other => Err(format!("{} frames are not accepted here", other.as_str())),
    }
}

/// Frame carrying an event back to a frame client, if it has one.
pub fn event_frame(ev: &OpsEvent) -> Option<(MsgType, Vec<u8>)> {
    match ev {
        OpsEvent::Auth {
            ok: true,
            session: Some(s),
            issued_at_us: Some(i),
            expires_at_us: Some(x),
            ..
        } => {
            let id = u64::from_str_radix(s, 16).ok()?;
            let m = AuthMessage::Granted {
                session: SessionId(id),
                issued_at: *i,
                expires_at: *x,
            };
            Some((MsgType::Auth, m.encode()))
        }
        OpsEvent::Auth { ok: false, reason, .. } => {
            let m = AuthMessage::Rejected {
                reason: reason.clone().unwrap_or_default(),
            };
            Some((MsgType::Auth, m.encode()))
        }
        OpsEvent::Cmd {
            command_id,
            accepted,
            reason,
            ..
        } => {
            let r = CommandReply {
                command_id: *command_id,
                accepted: *accepted,
                reason: reason.clone(),
            };
            Some((MsgType::Ack, r.encode()))
        }
        OpsEvent::Metric { .. } => Some((MsgType::Metric, serde_json::to_vec(ev).expect("json"))),
        _ => None,
    }
}

async fn read_frame(sock: &mut tokio::net::tcp::OwnedReadHalf) -> std::io::Result<Option<Vec<u8>>> {
    let mut buf = vec![0u8; HEADER_LEN];
    match sock.read_exact(&mut buf).await {
        Ok(_) => {}
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let total = frame_len(&buf).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
    buf.resize(total, 0);
    sock.read_exact(&mut buf[HEADER_LEN..]).await?;
    Ok(Some(buf))
}

async fn frames_client(sock: TcpStream, st: AppState, started: Instant) {
    let caps = CommandCaps::default();
    let (mut rd, mut wr) = sock.into_split();
    let mut sub = st.events.subscribe();
    let (direct_tx, mut direct_rx) = mpsc::channel::<OpsEvent>(16);
    let writer = tokio::spawn(async move {
        let mut seq = 0u32;
        loop {
            let ev = tokio::select! {
                ev = sub.recv() => match ev {
                    Ok(e) => e,
                    Err(broadcast::error::RecvError::Lagged(_)) => continue,
                    Err(broadcast::error::RecvError::Closed) => break,
                },
                ev = direct_rx.recv() => match ev {
                    Some(e) => e,
                    None => break,
                },
            };
            let Some((t, payload)) = event_frame(&ev) else { continue };
            let ts = started.elapsed().as_micros() as u64;
            let flags = Flags::default().with(Flags::END_OF_MESSAGE);
            let bytes = encode_frame(t, flags, seq, ts, &payload).expect("small payload");
            seq = seq.wrapping_add(1);
            if wr.write_all(&bytes).await.is_err() {
                break;
            }
        }
    });
    // A stream that stops framing correctly cannot be resynchronised.
    while let Ok(Some(bytes)) = read_frame(&mut rd).await {
        let d = match decode_frame(&bytes) {
            Ok(d) if !d.crc_failed => d,
            _ => continue,
        };
        match frame_request(d.frame.msg_type, &d.frame.payload, &caps) {
            Ok(r) => {
                if st.requests.send(Inbound::Request(r)).await.is_err() {
                    break;
                }
            }
            Err(e) => {
                let _ = direct_tx.send(rejection(e)).await;
            }
        }
    }
    writer.abort();
}

fn router(st: AppState) -> Router {
    Router::new()
        .route("/ops", get(ops))
        .route("/schema", get(schema))
        .route("/metrics", get(metrics))
        .with_state(st)
}

/// Bind the listeners and start all actors.
pub async fn start(cfg: TeleopConfig, http: SocketAddr, frames: Option<SocketAddr>) -> Result<Server, ServeError> {
    let sim = TeleopSim::new(cfg)?;
    let gw = OpsGateway::new(sim);
    let (req_tx, req_rx) = mpsc::channel(256);
    let (ev_tx, _) = broadcast::channel(4096);
    let (stop_tx, stop_rx) = oneshot::channel();
    let st = AppState {
        requests: req_tx,
        events: ev_tx.clone(),
    };
    let started = Instant::now();
    let engine = tokio::spawn(engine(gw, req_rx, ev_tx, stop_rx));

    let listener = TcpListener::bind(http).await?;
    let http_addr = listener.local_addr()?;
    let app = router(st.clone());
    let mut tasks = vec![tokio::spawn(async move {
        let _ = axum::serve(listener, app).await;
    })];

    let mut frames_addr = None;
    if let Some(addr) = frames {
        let l = TcpListener::bind(addr).await?;
        frames_addr = Some(l.local_addr()?);
        let st = st.clone();
        tasks.push(tokio::spawn(async move {
            while let Ok((sock, _)) = l.accept().await {
                tokio::spawn(frames_client(sock, st.clone(), started));
            }
        }));
    }
    Ok(Server {
        http_addr,
        frames_addr,
        stop: stop_tx,
        engine,
        tasks,
    })
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
