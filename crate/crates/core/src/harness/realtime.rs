//! Wall-clock paced cue session. The simulation loop runs on the calling
//! thread; one network thread owns the websocket. They talk through bounded
//! channels and the loop never blocks on the network.

use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{sync_channel, Receiver, SyncSender, TryRecvError};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use tungstenite::{Message, WebSocket};

use super::protocol::{finite, ClientMessage, Event, EventKind, Hello, ServerMessage, Telemetry, PROTOCOL_VERSION};
use super::scenario::{Mode, Scenario};
use super::sim::{ClosedLoop, FrameInput, Setup};
use super::trace::{SimTrace, TraceRecord};
use crate::error::{Error, Result};

/// Hold the last stick this long after a disconnect, then go neutral.
pub const HOLD_AFTER_DISCONNECT: f64 = 0.5;

/// A frame is late when it overruns the step by more than this fraction.
pub const JITTER_TOLERANCE: f64 = 0.1;

const QUEUE_DEPTH: usize = 256;

#[derive(Clone, Debug)]
pub struct ServeOptions {
    pub bind: String,
    pub port: u16,
    pub cue_gain: f64,
    /// Telemetry is sent every this many control frames.
    pub telemetry_every: usize,
    /// Session length; the scenario duration when absent.
    pub duration: Option<f64>,
    /// Wait this long for a client before starting the clock.
    pub wait_for_client: Duration,
}

impl Default for ServeOptions {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1".into(),
            port: 8765,
            cue_gain: 1.0,
            telemetry_every: 2,
            duration: None,
            wait_for_client: Duration::ZERO,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Session {
    pub trace: SimTrace,
    pub events: Vec<Event>,
    pub deadline_misses: usize,
    pub telemetry_dropped: usize,
}

impl Session {
    /// Events as JSON lines.
    pub fn events_jsonl(&self) -> String {
        self.events
            .iter()
            .map(|e| serde_json::to_string(e).expect("plain data") + "\n")
            .collect()
    }
}

enum NetEvent {
    Connected(SocketAddr),
    Disconnected,
    Message(ClientMessage),
    Invalid(String),
}

pub struct RealtimeServer {
    listener: TcpListener,
    opts: ServeOptions,
}

impl RealtimeServer {
    pub fn bind(opts: ServeOptions) -> Result<Self> {
        let listener = TcpListener::bind((opts.bind.as_str(), opts.port))?;
        listener.set_nonblocking(true)?;
        Ok(Self { listener, opts })
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        Ok(self.listener.local_addr()?)
    }

    pub fn run(self, sc: &Scenario) -> Result<Session> {
        if sc.mode != Mode::Cue {
            return Err(Error::InvalidParam("real-time sessions require mode = cue".into()));
        }
        let mut sc = sc.clone();
        sc.cue_gain = self.opts.cue_gain;
        let setup = Setup::build(&sc)?;
        let hello = ServerMessage::Hello(Hello {
            schema_version: PROTOCOL_VERSION,
            scenario: sc.name.clone(),
            dt_ctrl: setup.fcs.dt_ctrl,
            telemetry_period: setup.fcs.dt_ctrl * self.opts.telemetry_every.max(1) as f64,
            cue_gain: sc.cue_gain,
            axis: setup.fcs.axis.clone(),
            input_labels: setup.params.input_labels.clone(),
            y_max: finite(setup.mpc.y_max),
        })
        .to_line();

        let stop = Arc::new(AtomicBool::new(false));
        let (out_tx, out_rx) = sync_channel::<String>(QUEUE_DEPTH);
        let (in_tx, in_rx) = sync_channel::<NetEvent>(QUEUE_DEPTH);
        let net = {
            let stop = stop.clone();
            let listener = self.listener;
            thread::spawn(move || network_loop(listener, hello, out_rx, in_tx, stop))
        };
        let result = paced_loop(&setup, &sc, &self.opts, &out_tx, &in_rx);
        // let the network thread flush what is queued and say goodbye
        if let Ok(s) = &result {
            let _ = out_tx.try_send(ServerMessage::End { frames: s.trace.len() }.to_line());
        }
        thread::sleep(Duration::from_millis(20));
        stop.store(true, Ordering::SeqCst);
        drop(out_tx);
        let _ = net.join();
        result
    }
}

pub fn serve_realtime(sc: &Scenario, opts: ServeOptions) -> Result<Session> {
    RealtimeServer::bind(opts)?.run(sc)
}

struct Inputs {
    latest: Vec<f64>,
    connected: bool,
    ever_connected: bool,
    disconnected_at: Option<f64>,
    neutral_logged: bool,
    cue_on: bool,
    y_max: f64,
}

fn paced_loop(setup: &Setup, sc: &Scenario, opts: &ServeOptions, out: &SyncSender<String>, input: &Receiver<NetEvent>) -> Result<Session> {
    let labels = &setup.params.input_labels;
    let dt = setup.fcs.dt_ctrl;
    let duration = opts.duration.unwrap_or(sc.duration);
    let n_frames = (duration / dt - 1e-9).ceil().max(0.0) as usize;
    let mut lp = ClosedLoop::new(setup, sc)?.with_deadline(Duration::from_secs_f64(dt));
    let mut trace = SimTrace::new(setup.params.state_labels.clone(), labels.clone());
    let mut events = Vec::new();
    let mut st = Inputs {
        latest: vec![0.0; labels.len()],
        connected: false,
        ever_connected: false,
        disconnected_at: None,
        neutral_logged: false,
        cue_on: true,
        y_max: setup.mpc.y_max,
    };

    let wait_until = Instant::now() + opts.wait_for_client;
    while !st.ever_connected && Instant::now() < wait_until {
        drain(input, &mut st, &mut events, labels, 0.0);
        thread::sleep(Duration::from_millis(2));
    }

    let idx = |l: &str| setup.state_index(l).ok();
    let (iq, ith, ivx) = (idx(&setup.fcs.rate_state), idx(&setup.fcs.attitude_state), idx("vx"));
    let axis = setup.inversion.axis;
    let every = opts.telemetry_every.max(1);
    let mut dropped = 0;
    let mut misses = 0;
    let mut sent = 0;
    let start = Instant::now();
    for k in 0..n_frames {
        let t = k as f64 * dt;
        let frame_start = Instant::now();
        drain(input, &mut st, &mut events, labels, t);
        let stick = if !st.ever_connected {
            sc.stick_at(t, labels)
        } else if st.connected {
            st.latest.clone()
        } else if st.disconnected_at.is_some_and(|d| t - d <= HOLD_AFTER_DISCONNECT) {
            st.latest.clone()
        } else {
            if !st.neutral_logged {
                events.push(event(t, EventKind::NeutralStick, None));
                st.neutral_logged = true;
            }
            st.latest.fill(0.0);
            vec![0.0; labels.len()]
        };
        let rec = lp.step(&FrameInput {
            stick,
            y_max: st.y_max,
            stale: false,
            cue_on: st.cue_on,
        })?;
        let busy = frame_start.elapsed().as_secs_f64();
        if rec.stale {
            events.push(event(t, EventKind::StaleMargin, None));
        }
        if busy > dt * (1.0 + JITTER_TOLERANCE) {
            misses += 1;
            events.push(event(t, EventKind::DeadlineMiss, Some(format!("{:.2} ms", busy * 1e3))));
        }
        if k % every == 0 {
            let msg = ServerMessage::Telemetry(telemetry(k, &rec, axis, [iq, ith, ivx])).to_line();
            if out.try_send(msg).is_err() {
                dropped += 1;
            }
        }
        for e in &events[sent..] {
            // events are rare; a full queue drops them like telemetry
            let _ = out.try_send(ServerMessage::Event(e.clone()).to_line());
        }
        sent = events.len();
        trace.records.push(rec);
        let target = start + Duration::from_secs_f64((k + 1) as f64 * dt);
        let now = Instant::now();
        if target > now {
            thread::sleep(target - now);
        }
    }
    Ok(Session {
        trace,
        events,
        deadline_misses: misses,
        telemetry_dropped: dropped,
    })
}

fn event(t: f64, kind: EventKind, detail: Option<String>) -> Event {
    Event { t, kind, detail }
}

/// Applies every queued network event; the last stick per axis wins.
fn drain(input: &Receiver<NetEvent>, st: &mut Inputs, events: &mut Vec<Event>, labels: &[String], t: f64) {
    loop {
        match input.try_recv() {
            Ok(NetEvent::Connected(addr)) => {
                st.connected = true;
                st.ever_connected = true;
                st.disconnected_at = None;
                st.neutral_logged = false;
                events.push(event(t, EventKind::ClientConnected, Some(addr.to_string())));
            }
            Ok(NetEvent::Disconnected) => {
                st.connected = false;
                st.disconnected_at = Some(t);
                events.push(event(t, EventKind::ClientDisconnected, None));
            }
            Ok(NetEvent::Message(ClientMessage::Stick { axis, value })) => match labels.iter().position(|l| *l == axis) {
                Some(i) => st.latest[i] = value,
                None => events.push(event(t, EventKind::ProtocolError, Some(format!("unknown axis {axis:?}")))),
            },
            Ok(NetEvent::Message(ClientMessage::CueToggle { on })) => {
                if on != st.cue_on {
                    st.cue_on = on;
                    events.push(event(t, if on { EventKind::CueOn } else { EventKind::CueOff }, None));
                }
            }
            Ok(NetEvent::Message(ClientMessage::SetLimit { y_max })) => {
                st.y_max = y_max;
                events.push(event(t, EventKind::LimitChanged, Some(y_max.to_string())));
            }
            Ok(NetEvent::Invalid(msg)) => events.push(event(t, EventKind::ProtocolError, Some(msg))),
            Err(TryRecvError::Empty) | Err(TryRecvError::Disconnected) => break,
        }
    }
}

fn telemetry(frame: usize, r: &TraceRecord, axis: usize, idx: [Option<usize>; 3]) -> Telemetry {
    let x = |i: Option<usize>| i.map_or(f64::NAN, |i| r.x[i]);
    Telemetry {
        schema_version: PROTOCOL_VERSION,
        frame,
        t: r.t,
        cm: finite(r.cm[axis]),
        cue_height: finite(r.cue_height),
        y_1rev_exact: finite(r.y_1rev_exact),
        y_1rev_predicted: finite(r.y_1rev_predicted),
        y_max: finite(r.y_max),
        stick: r.stick[axis],
        u_pilot: r.u_pilot[axis],
        u_ext: finite(r.u_ext[axis]),
        pitch_rate: x(idx[0]),
        attitude: x(idx[1]),
        airspeed: x(idx[2]),
        margin_valid: r.margin_valid,
        stale: r.stale,
        cue_on: r.cue_on,
    }
}

fn network_loop(listener: TcpListener, hello: String, out: Receiver<String>, input: SyncSender<NetEvent>, stop: Arc<AtomicBool>) {
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, addr)) => {
                if let Ok(ws) = handshake(stream) {
                    let _ = input.try_send(NetEvent::Connected(addr));
                    serve_client(ws, &hello, &out, &input, &stop);
                    let _ = input.try_send(NetEvent::Disconnected);
                }
            }
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                // telemetry produced while nobody listens is discarded
                while out.try_recv().is_ok() {}
                thread::sleep(Duration::from_millis(5));
            }
            Err(_) => thread::sleep(Duration::from_millis(5)),
        }
    }
}

fn handshake(stream: TcpStream) -> Result<WebSocket<TcpStream>> {
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true)?;
    let ws = tungstenite::accept(stream).map_err(|e| Error::WebSocket(e.to_string()))?;
    ws.get_ref().set_read_timeout(Some(Duration::from_millis(2)))?;
    Ok(ws)
}

fn serve_client(mut ws: WebSocket<TcpStream>, hello: &str, out: &Receiver<String>, input: &SyncSender<NetEvent>, stop: &AtomicBool) {
    if ws.send(Message::text(hello)).is_err() {
        return;
    }
    loop {
        loop {
            match out.try_recv() {
                Ok(line) => {
                    if ws.send(Message::text(line)).is_err() {
                        return;
                    }
                }
                Err(TryRecvError::Empty) => break,
                Err(TryRecvError::Disconnected) => {
                    let _ = ws.close(None);
                    let _ = ws.flush();
                    return;
                }
            }
        }
        if stop.load(Ordering::SeqCst) {
            let _ = ws.close(None);
            let _ = ws.flush();
            return;
        }
        match ws.read() {
            Ok(Message::Text(text)) => {
                for m in super::protocol::parse_client_frame(text.as_str()) {
                    let ev = match m {
                        Ok(m) => NetEvent::Message(m),
                        Err(e) => NetEvent::Invalid(e.to_string()),
                    };
                    let _ = input.try_send(ev);
                }
            }
            Ok(Message::Close(_)) => return,
            Ok(_) => {}
            Err(tungstenite::Error::Io(e)) if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) => {}
            Err(_) => return,
        }
    }
}
