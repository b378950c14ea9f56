//! Live game service for one display client. Network I/O, the game command
//! queue and the recorder run as separate tasks joined by channels.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context};
use futures_util::{SinkExt, StreamExt};
use gwap_core::game::{
    BarrelEffect, GameCommand, GameConfig, GameEngine, GameError, GameEvent, GameMode, PowerUp,
    SwapCommand,
};
use gwap_core::minigames::{
    build_mi_trial, build_nback_sequence, build_rsvp_sequence, evaluate_mi_trial, score_nback,
    score_rsvp, score_ssvep, ExecutionMode, MiTrial, MiVerdicts, MinigameKind, MinigameScheduler,
    ModeAlternator, NBackTrial, RsvpConfig, SsvepGenerator, SsvepTrial, StimulusSchedule,
    RSVP_WINDOW,
};
use gwap_core::session::{derive_seed, SessionConfig, GAME_STREAM, UI_CLOCK, UI_STREAM};
use gwap_core::timeline::{
    estimate_clock_offset, write_session_archive, ClockOffset, MarkerEvent, Recorder, RoundTrip,
    StreamHeader, Timestamp, HOST_CLOCK,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use tokio::net::TcpListener;
use tokio::sync::{mpsc, watch};
use tokio_tungstenite::tungstenite::protocol::frame::coding::CloseCode;
use tokio_tungstenite::tungstenite::protocol::CloseFrame;
use tokio_tungstenite::tungstenite::Message;

use crate::protocol::{
    Envelope, FlipReport, MessageType, MinigameDone, MoveRequest, ProtocolError, ResponseInput,
    TimeSync, PROTOCOL_VERSION,
};

const TAG_TASKS: u64 = 3;
const TAG_GAME: u64 = 1 << 32;
/// A mini-game the client never reports on is scored after this much
/// extra time.
const TRIAL_GRACE: Duration = Duration::from_secs(5);
const CLOSE_WAIT: Duration = Duration::from_secs(2);

#[derive(Debug, Clone, PartialEq)]
pub struct ServeOutcome {
    pub record: PathBuf,
    pub session_id: String,
    pub events: usize,
    pub end_reason: String,
}

enum Outbound {
    Frame(Envelope),
    Close(CloseCode, String),
}

enum RecordCmd {
    Event(MarkerEvent),
    Trip(RoundTrip),
}

enum Inbound {
    Frame { env: Envelope, recv_ns: i64 },
    Violation(ProtocolError),
}

#[derive(Debug, Clone, Copy)]
struct HostClock(Instant);

impl HostClock {
    fn now(self) -> i64 {
        self.0.elapsed().as_nanos() as i64
    }

    fn instant(self, t_ns: i64) -> tokio::time::Instant {
        tokio::time::Instant::from_std(self.0 + Duration::from_nanos(t_ns.max(0) as u64))
    }
}

/// Accepts one client on `listener`, plays the configured rounds with it and
/// writes the recording to `record`, which must be empty or absent. The
/// recording is written however the connection ends.
pub async fn serve_game(
    listener: TcpListener,
    cfg: SessionConfig,
    record: &Path,
) -> anyhow::Result<ServeOutcome> {
    cfg.validate()?;
    if record.exists()
        && std::fs::read_dir(record)
            .with_context(|| format!("reading {}", record.display()))?
            .next()
            .is_some()
    {
        bail!("record directory {} is not empty", record.display());
    }
    let (tcp, peer) = listener.accept().await?;
    log::info!("client connected from {peer}");
    let ws = tokio_tungstenite::accept_async(tcp).await?;
    let (sink, mut stream) = ws.split();
    let clock = HostClock(Instant::now());
    let unix = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    let session_id = format!("live-{unix}");

    let (out_tx, out_rx) = mpsc::unbounded_channel();
    let (state_tx, state_rx) = watch::channel(None);
    let (rec_tx, rec_rx) = mpsc::unbounded_channel();
    let (in_tx, in_rx) = mpsc::unbounded_channel();

    let writer = tokio::spawn(write_frames(sink, out_rx, state_rx));
    let recorder = tokio::spawn(record_session(
        rec_rx,
        record.to_owned(),
        session_id.clone(),
        serde_json::to_value(&cfg)?,
    ));
    let live = Live::new(
        cfg,
        clock,
        session_id.clone(),
        record,
        out_tx.clone(),
        state_tx,
        rec_tx.clone(),
    )?;
    let game = tokio::spawn(live.run(in_rx));

    drop(out_tx);
    drop(rec_tx);
    let reader = tokio::spawn(async move {
        while let Some(frame) = stream.next().await {
            let recv_ns = clock.now();
            let violation = match frame {
                Ok(Message::Text(text)) => match Envelope::parse(text.as_str()) {
                    Ok(env) => {
                        if in_tx.send(Inbound::Frame { env, recv_ns }).is_err() {
                            break;
                        }
                        continue;
                    }
                    Err(e) => e,
                },
                Ok(Message::Binary(_)) => ProtocolError::Binary,
                Ok(Message::Close(_)) | Err(_) => break,
                Ok(_) => continue,
            };
            let _ = in_tx.send(Inbound::Violation(violation));
            break;
        }
    });

    let end_reason = game.await?;
    if tokio::time::timeout(CLOSE_WAIT, writer).await.is_err() {
        log::warn!("writer did not finish closing");
    }
    if tokio::time::timeout(CLOSE_WAIT, reader).await.is_err() {
        log::warn!("client did not complete the close handshake");
    }
    let events = recorder.await??;
    Ok(ServeOutcome {
        record: record.to_owned(),
        session_id,
        events,
        end_reason,
    })
}

async fn write_frames<S>(
    mut sink: S,
    mut out: mpsc::UnboundedReceiver<Outbound>,
    mut state: watch::Receiver<Option<Envelope>>,
) where
    S: futures_util::Sink<Message> + Unpin,
{
    let mut state_open = true;
    loop {
        let msg = tokio::select! {
            biased;
            o = out.recv() => match o {
                Some(Outbound::Frame(env)) => Message::text(env.to_text()),
                Some(Outbound::Close(code, mut reason)) => {
                    // control frames carry at most 123 bytes of reason
                    let mut cut = reason.len().min(123);
                    while !reason.is_char_boundary(cut) {
                        cut -= 1;
                    }
                    reason.truncate(cut);
                    let _ = sink
                        .send(Message::Close(Some(CloseFrame { code, reason: reason.into() })))
                        .await;
                    return;
                }
                None => {
                    let _ = sink.send(Message::Close(None)).await;
                    return;
                }
            },
            changed = state.changed(), if state_open => {
                if changed.is_err() {
                    state_open = false;
                    continue;
                }
                // only the newest snapshot matters; older ones are dropped
                match state.borrow_and_update().clone() {
                    Some(env) => Message::text(env.to_text()),
                    None => continue,
                }
            }
        };
        if sink.send(msg).await.is_err() {
            return;
        }
    }
}

async fn record_session(
    mut rx: mpsc::UnboundedReceiver<RecordCmd>,
    dir: PathBuf,
    session_id: String,
    config: Value,
) -> anyhow::Result<usize> {
    let mut rec = Recorder::new();
    rec.register_stream(StreamHeader::markers(GAME_STREAM, HOST_CLOCK))?;
    rec.register_stream(StreamHeader::markers(UI_STREAM, UI_CLOCK))?;
    let mut trips = Vec::new();
    while let Some(cmd) = rx.recv().await {
        match cmd {
            RecordCmd::Event(e) => {
                if let Err(err) = rec.append_event(e) {
                    log::error!("dropped event: {err}");
                }
            }
            RecordCmd::Trip(t) => trips.push(t),
        }
    }
    if let Ok(offset) = estimate_clock_offset(&trips) {
        rec.set_clock_offset(UI_CLOCK, offset);
    }
    let archive = rec.into_archive(&session_id, config);
    let n = archive.events.len();
    write_session_archive(&dir, &archive)?;
    log::info!("recorded {n} events to {}", dir.display());
    Ok(n)
}

enum TrialSpec {
    Rsvp(StimulusSchedule, u8),
    Ssvep(SsvepTrial),
    Nback(NBackTrial),
    Motor(MiTrial),
}

struct Started {
    task: &'static str,
    schedule: StimulusSchedule,
    extra: Value,
}

struct Active {
    trial: u32,
    spec: TrialSpec,
    t0: i64,
    deadline: i64,
    /// Host-clock press times.
    responses: Vec<(i64, ResponseInput)>,
}

struct Live {
    cfg: SessionConfig,
    clock: HostClock,
    session_id: String,
    record: String,
    seq: u64,
    out: mpsc::UnboundedSender<Outbound>,
    state: watch::Sender<Option<Envelope>>,
    rec: mpsc::UnboundedSender<RecordCmd>,
    round: usize,
    round_end: i64,
    games: u64,
    engine: Option<GameEngine>,
    turn_started: i64,
    next_sync: i64,
    scheduler: MinigameScheduler,
    task_rng: ChaCha8Rng,
    ssvep: SsvepGenerator,
    alternator: ModeAlternator,
    trials: u32,
    started: HashMap<u32, Started>,
    active: Option<Active>,
    trips: Vec<RoundTrip>,
    offset: Option<ClockOffset>,
}

fn ns(seconds: f64) -> i64 {
    (seconds * 1e9).round() as i64
}

impl Live {
    fn new(
        cfg: SessionConfig,
        clock: HostClock,
        session_id: String,
        record: &Path,
        out: mpsc::UnboundedSender<Outbound>,
        state: watch::Sender<Option<Envelope>>,
        rec: mpsc::UnboundedSender<RecordCmd>,
    ) -> anyhow::Result<Self> {
        Ok(Self {
            task_rng: ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, TAG_TASKS)),
            ssvep: SsvepGenerator::new(cfg.display_rate, cfg.ssvep_flash_duration)?,
            cfg,
            clock,
            session_id,
            record: record.display().to_string(),
            seq: 0,
            out,
            state,
            rec,
            round: 0,
            round_end: 0,
            games: 0,
            engine: None,
            turn_started: 0,
            next_sync: 0,
            scheduler: MinigameScheduler::default(),
            alternator: ModeAlternator::default(),
            trials: 0,
            started: HashMap::new(),
            active: None,
            trips: Vec::new(),
            offset: None,
        })
    }

    fn send(&mut self, kind: MessageType, payload: Value) {
        self.seq += 1;
        let env = Envelope::new(kind, self.seq, self.clock.now(), payload);
        let _ = self.out.send(Outbound::Frame(env));
    }

    fn send_state(&mut self) {
        let Some(engine) = &self.engine else {
            return;
        };
        let s = engine.state();
        let payload = json!({
            "round": self.round,
            "mode": s.mode,
            "rows": s.board.rows(),
            "cols": s.board.cols(),
            "cells": s.board.cells(),
            "player_hp": s.player_hp,
            "enemy_hp": s.enemy_hp,
            "score": s.score,
            "shot_clock": s.shot_clock,
            "moves_made": s.moves_made,
            "moves_until_attack": s.moves_until_attack,
            "moves_until_minigame": s.moves_until_minigame,
            "powerups": s.powerups,
            "minigame_pending": s.minigame_pending,
            "ended": engine.ended(),
        });
        self.seq += 1;
        let env = Envelope::new(MessageType::State, self.seq, self.clock.now(), payload);
        self.state.send_replace(Some(env));
    }

    fn host(&self, kind: &str, t_ns: i64, payload: Value) {
        let _ = self.rec.send(RecordCmd::Event(MarkerEvent::new(
            t_ns,
            GAME_STREAM,
            kind,
            payload,
        )));
    }

    fn ui(&self, kind: &str, t_ns: i64, payload: Value) {
        let _ = self.rec.send(RecordCmd::Event(MarkerEvent::new(
            t_ns, UI_STREAM, kind, payload,
        )));
    }

    fn log_game(&self, events: &[GameEvent]) {
        for e in events {
            if matches!(
                e,
                GameEvent::MinigameDue { .. } | GameEvent::MinigameComplete { .. }
            ) {
                continue;
            }
            let payload = serde_json::to_value(e).expect("event serializes");
            self.host(e.kind(), e.t_ns(), payload);
        }
    }

    fn to_host(&self, remote_ns: i64) -> i64 {
        self.offset
            .map_or(remote_ns, |o| o.to_host(Timestamp(remote_ns)).0)
    }

    fn ping(&mut self) {
        let t = self.clock.now();
        self.send(
            MessageType::TimePing,
            serde_json::to_value(TimeSync {
                t_send: t,
                t_remote_recv: None,
                t_remote_send: None,
            })
            .expect("ping serializes"),
        );
    }

    async fn run(mut self, mut inbox: mpsc::UnboundedReceiver<Inbound>) -> String {
        let now = self.clock.now();
        self.send(
            MessageType::Hello,
            json!({
                "protocol_version": PROTOCOL_VERSION,
                "session_id": self.session_id,
                "host_t_ns": now,
                "config": self.cfg,
                "streams": [
                    StreamHeader::markers(GAME_STREAM, HOST_CLOCK),
                    StreamHeader::markers(UI_STREAM, UI_CLOCK),
                ],
            }),
        );
        for _ in 0..self.cfg.sync_burst {
            self.ping();
        }
        self.next_sync = now + ns(self.cfg.sync_interval);
        if let Err(e) = self.start_round(0, now) {
            return self.finish(e.to_string(), CloseCode::Error);
        }

        loop {
            let deadline = self.clock.instant(self.next_deadline());
            let step = tokio::select! {
                msg = inbox.recv() => match msg {
                    Some(m) => self.handle(m),
                    None => Ok(Some("disconnected".to_owned())),
                },
                _ = tokio::time::sleep_until(deadline) => self.on_timer(),
            };
            match step {
                Ok(None) => {}
                Ok(Some(reason)) => return self.finish(reason, CloseCode::Normal),
                Err(e) => {
                    let code = if e.is::<ProtocolError>() {
                        CloseCode::Protocol
                    } else {
                        CloseCode::Error
                    };
                    log::warn!("closing session: {e}");
                    return self.finish(e.to_string(), code);
                }
            }
        }
    }

    fn next_deadline(&self) -> i64 {
        let mut d = self.next_sync.min(self.round_end);
        if let Some(a) = &self.active {
            d = d.min(a.deadline);
        } else if let Some(t) = self.shot_clock_deadline() {
            d = d.min(t);
        }
        d
    }

    fn shot_clock_deadline(&self) -> Option<i64> {
        let s = self.engine.as_ref()?.state();
        (s.mode == GameMode::ShotClock && !s.minigame_pending)
            .then(|| self.turn_started + ns(s.shot_clock))
    }

    fn on_timer(&mut self) -> anyhow::Result<Option<String>> {
        let now = self.clock.now();
        if now >= self.next_sync {
            self.ping();
            self.next_sync += ns(self.cfg.sync_interval);
        }
        if now >= self.round_end {
            return self.end_round(now);
        }
        if self.active.as_ref().is_some_and(|a| now >= a.deadline) {
            self.complete_trial(now, None)?;
        } else if self.active.is_none() && self.shot_clock_deadline().is_some_and(|d| now >= d) {
            self.submit(GameCommand::Timeout { at_ns: now })?;
            self.turn_started = now;
            self.send_state();
        }
        self.after_game(now)
    }

    fn start_round(&mut self, round: usize, now: i64) -> anyhow::Result<()> {
        self.round = round;
        let spec = self.cfg.rounds[round];
        self.round_end = now + ns(spec.duration);
        self.start_game(now)
    }

    fn start_game(&mut self, now: i64) -> anyhow::Result<()> {
        let spec = self.cfg.rounds[self.round];
        let left = (self.round_end - now) as f64 * 1e-9;
        let config = GameConfig {
            mode_round_duration: left,
            shot_clock_round_duration: left,
            ..self.cfg.game.clone()
        };
        let game = self.games;
        self.games += 1;
        self.engine = Some(GameEngine::new(
            config,
            spec.mode,
            derive_seed(self.cfg.seed, TAG_GAME + game),
            now,
        )?);
        self.turn_started = now;
        self.host(
            "mode_start",
            now,
            json!({"round": self.round, "mode": spec.mode, "game": game}),
        );
        self.send_state();
        Ok(())
    }

    fn end_round(&mut self, now: i64) -> anyhow::Result<Option<String>> {
        if self.active.is_some() {
            self.complete_trial(now, None)?;
        }
        if let Some(engine) = self.engine.as_mut() {
            if engine.ended().is_none() {
                let ev = engine.submit(GameCommand::Tick { at_ns: now })?;
                self.log_game(&ev);
                let score = self.engine.as_ref().map_or(0, |e| e.state().score);
                self.host(
                    "mode_end",
                    now,
                    json!({"round": self.round, "game": self.games - 1, "reason": "round_over", "score": score}),
                );
            }
        }
        if self.round + 1 >= self.cfg.rounds.len() {
            return Ok(Some("rounds_complete".to_owned()));
        }
        self.start_round(self.round + 1, now)?;
        Ok(None)
    }

    /// A game that ended before its round did is replaced by a fresh one.
    fn after_game(&mut self, now: i64) -> anyhow::Result<Option<String>> {
        if self.engine.as_ref().is_some_and(|e| e.ended().is_some()) && self.active.is_none() {
            self.start_game(now)?;
        }
        Ok(None)
    }

    fn submit(&mut self, cmd: GameCommand) -> Result<Vec<GameEvent>, GameError> {
        let engine = self.engine.as_mut().expect("game running");
        let ev = engine.submit(cmd)?;
        self.log_game(&ev);
        Ok(ev)
    }

    fn handle(&mut self, msg: Inbound) -> anyhow::Result<Option<String>> {
        let (env, recv_ns) = match msg {
            Inbound::Frame { env, recv_ns } => (env, recv_ns),
            Inbound::Violation(e) => return Err(e.into()),
        };
        let result = match env.kind {
            MessageType::TimePing => {
                let p: TimeSync = env.payload_as()?;
                let now = self.clock.now();
                self.send(
                    MessageType::TimePong,
                    serde_json::to_value(TimeSync {
                        t_send: p.t_send,
                        t_remote_recv: Some(recv_ns),
                        t_remote_send: Some(now),
                    })?,
                );
                None
            }
            MessageType::TimePong => {
                let p: TimeSync = env.payload_as()?;
                let (Some(r), Some(s)) = (p.t_remote_recv, p.t_remote_send) else {
                    return Err(ProtocolError::Unexpected(MessageType::TimePong).into());
                };
                let trip = RoundTrip::new(p.t_send, r + (s - r) / 2, recv_ns);
                self.host(
                    "time_sync",
                    recv_ns,
                    json!({"t_send": p.t_send, "t_remote_recv": r, "t_remote_send": s, "t_recv": recv_ns}),
                );
                let _ = self.rec.send(RecordCmd::Trip(trip));
                self.trips.push(trip);
                self.offset = estimate_clock_offset(&self.trips).ok();
                None
            }
            MessageType::Move => {
                let m: MoveRequest = env.payload_as()?;
                self.ui("move", env.t_ns, serde_json::to_value(m)?);
                self.on_move(m, recv_ns)?;
                self.after_game(recv_ns)?
            }
            MessageType::CheatReport => {
                self.ui("cheat_report", env.t_ns, json!({}));
                self.on_cheat_report(recv_ns)?;
                self.after_game(recv_ns)?
            }
            MessageType::Response => {
                let r: ResponseInput = env.payload_as()?;
                self.on_response(r, env.t_ns);
                None
            }
            MessageType::StimulusFlipReport => {
                let r: FlipReport = env.payload_as()?;
                self.on_flip_report(r);
                None
            }
            MessageType::MinigameResult => {
                let d: MinigameDone = env.payload_as()?;
                if self.active.as_ref().is_some_and(|a| a.trial == d.trial) {
                    self.complete_trial(recv_ns, d.window_verdicts)?;
                }
                self.after_game(recv_ns)?
            }
            MessageType::End => Some("client_end".to_owned()),
            other => return Err(ProtocolError::Unexpected(other).into()),
        };
        Ok(result)
    }

    fn on_move(&mut self, m: MoveRequest, now: i64) -> anyhow::Result<()> {
        let events = match self.submit(GameCommand::Swap(SwapCommand::new(m.a, m.b, now))) {
            Ok(ev) => ev,
            Err(e) => {
                self.send(
                    MessageType::MoveResult,
                    json!({"accepted": false, "error": e.to_string()}),
                );
                return Ok(());
            }
        };
        self.turn_started = now;
        let mut payload = json!({"accepted": true});
        for e in &events {
            match e {
                GameEvent::Move { .. } | GameEvent::Attack { .. } | GameEvent::ModeEnd { .. } => {
                    let key = e.kind();
                    payload[key] = serde_json::to_value(e)?;
                }
                _ => {}
            }
        }
        self.send(MessageType::MoveResult, payload);
        self.send_state();
        if events
            .iter()
            .any(|e| matches!(e, GameEvent::MinigameDue { .. }))
        {
            self.start_minigame(now)?;
        }
        Ok(())
    }

    fn on_cheat_report(&mut self, now: i64) -> anyhow::Result<()> {
        let events = match self.submit(GameCommand::CheatReport { at_ns: now }) {
            Ok(ev) => ev,
            Err(e) => {
                self.send(
                    MessageType::CheatReport,
                    json!({"accepted": false, "error": e.to_string()}),
                );
                return Ok(());
            }
        };
        let mut payload = json!({"accepted": true});
        if let Some(e) = events
            .iter()
            .find(|e| matches!(e, GameEvent::CheatReport { .. }))
        {
            payload["result"] = serde_json::to_value(e)?;
        }
        self.send(MessageType::CheatReport, payload);
        self.send_state();
        if events
            .iter()
            .any(|e| matches!(e, GameEvent::MinigameDue { .. }))
        {
            self.start_minigame(now)?;
        }
        Ok(())
    }

    fn on_response(&mut self, r: ResponseInput, t_ui: i64) {
        let task = self.started.get(&r.trial).map_or("unknown", |s| s.task);
        let mut payload = serde_json::to_value(&r).expect("response serializes");
        payload["task"] = json!(task);
        self.ui("response", t_ui, payload);
        let host = self.to_host(t_ui);
        if let Some(a) = self.active.as_mut().filter(|a| a.trial == r.trial) {
            a.responses.push((host, r));
        }
    }

    fn on_flip_report(&mut self, r: FlipReport) {
        let frame_ns = 1_000_000_000 / i64::from(self.cfg.display_rate.max(1));
        let last = r.actual_ns.last().copied().unwrap_or(0);
        self.ui(
            "flip_report",
            last,
            json!({"trial": r.trial, "scheduled_ns": r.scheduled_ns, "actual_ns": r.actual_ns, "missed": r.missed(frame_ns)}),
        );
        let Some(s) = self.started.get(&r.trial) else {
            return;
        };
        for (i, (it, &t)) in s.schedule.items.iter().zip(&r.actual_ns).enumerate() {
            let mut p = json!({
                "trial": r.trial,
                "task": s.task,
                "index": i,
                "stimulus": it.stimulus,
                "is_target": it.is_target,
                "side": it.side,
            });
            if let (Some(p), Value::Object(e)) = (p.as_object_mut(), s.extra.clone()) {
                p.extend(e);
            }
            self.ui("stimulus_onset", t, p);
        }
    }

    fn start_minigame(&mut self, now: i64) -> anyhow::Result<()> {
        let sel = self.scheduler.next(&mut self.task_rng);
        self.trials += 1;
        let trial = self.trials;
        let t0 = now + ns(self.cfg.minigame_gap);
        let (spec, task, extra, length) = match sel.kind {
            MinigameKind::Rsvp => {
                let c = sel.coherence.unwrap_or(1);
                let rcfg = RsvpConfig::random_targets(&mut self.task_rng, c);
                let s = build_rsvp_sequence(&rcfg, &mut self.task_rng)?;
                let length = s.items.len() as f64 * s.soa + RSVP_WINDOW.1;
                (
                    TrialSpec::Rsvp(s, c),
                    "rsvp",
                    json!({"coherence": c}),
                    length,
                )
            }
            MinigameKind::Ssvep => {
                let st = self.ssvep.next_trial(&mut self.task_rng);
                let extra = json!({
                    "frequency": st.target_frequency(),
                    "box_frequencies": st.box_frequencies,
                    "duration": st.flash_duration,
                    "toggle_times": st.toggle_times,
                });
                let length = st.flash_duration;
                (TrialSpec::Ssvep(st), "ssvep", extra, length)
            }
            MinigameKind::Nback => {
                let n = sel.n.unwrap_or(1);
                let nt = build_nback_sequence(n, &mut self.task_rng)?;
                let length = nt.duration();
                (TrialSpec::Nback(nt), "nback", json!({"n": n}), length)
            }
            MinigameKind::MiMe => {
                let mt = build_mi_trial(&mut self.task_rng, &mut self.alternator);
                let task = match mt.execution_mode {
                    ExecutionMode::Imagery => "mi",
                    ExecutionMode::Execution => "me",
                };
                let length = mt.duration;
                let extra = json!({"direction": mt.direction});
                (TrialSpec::Motor(mt), task, extra, length)
            }
        };
        let schedule = match &spec {
            TrialSpec::Rsvp(s, _) => s.clone(),
            TrialSpec::Ssvep(st) => st.to_schedule(),
            TrialSpec::Nback(nt) => nt.to_schedule(),
            TrialSpec::Motor(mt) => mt.to_schedule(),
        };
        let mut payload = json!({"trial": trial, "task": task, "schedule": schedule});
        if let (Some(p), Value::Object(e)) = (payload.as_object_mut(), extra.clone()) {
            p.extend(e);
        }
        self.host("minigame_start", t0, payload.clone());
        payload["t0_ns"] = json!(t0);
        self.send(MessageType::MinigameStart, payload);
        self.started.insert(
            trial,
            Started {
                task,
                schedule,
                extra,
            },
        );
        self.active = Some(Active {
            trial,
            spec,
            t0,
            deadline: t0 + ns(length) + TRIAL_GRACE.as_nanos() as i64,
            responses: Vec::new(),
        });
        Ok(())
    }

    fn complete_trial(&mut self, now: i64, verdicts: Option<Vec<bool>>) -> anyhow::Result<()> {
        let Some(a) = self.active.take() else {
            return Ok(());
        };
        let rel = |t: i64| (t - a.t0) as f64 * 1e-9;
        let (task, powerups, barrel, mut result): (
            &str,
            Vec<PowerUp>,
            Option<BarrelEffect>,
            Value,
        ) = match &a.spec {
            TrialSpec::Rsvp(s, c) => {
                let resp: Vec<_> = a
                    .responses
                    .iter()
                    .filter_map(|(t, r)| r.side.map(|side| (rel(*t), side)))
                    .collect();
                let score = score_rsvp(s, &resp);
                let p = score.powerups.clone();
                ("rsvp", p, None, json!({"score": score, "coherence": c}))
            }
            TrialSpec::Ssvep(st) => {
                let click = a
                    .responses
                    .iter()
                    .find_map(|(t, r)| r.box_index.map(|b| (rel(*t), b)));
                let score = score_ssvep(st, click);
                let p = score.powerups.clone();
                let f = st.target_frequency();
                ("ssvep", p, None, json!({"score": score, "frequency": f}))
            }
            TrialSpec::Nback(nt) => {
                let clicks: Vec<f64> = a.responses.iter().map(|(t, _)| rel(*t)).collect();
                let score = score_nback(nt, &clicks);
                let p = score.powerups.clone();
                ("nback", p, None, json!({"score": score, "n": nt.n}))
            }
            TrialSpec::Motor(mt) => {
                let windows = mt.window_count();
                let v = match mt.execution_mode {
                    ExecutionMode::Imagery => {
                        let mut flags = verdicts.unwrap_or_default();
                        flags.resize(windows, false);
                        MiVerdicts::Classifier(flags)
                    }
                    ExecutionMode::Execution => {
                        let mut sq = vec![0u32; windows];
                        for (t, r) in &a.responses {
                            let k = r
                                .window
                                .unwrap_or((rel(*t) / mt.window_length).floor().max(0.0) as usize);
                            if k < windows {
                                sq[k] += 1;
                            }
                        }
                        MiVerdicts::Squeezes(sq)
                    }
                };
                let o = evaluate_mi_trial(mt, &v)?;
                let task = if mt.execution_mode == ExecutionMode::Imagery {
                    "mi"
                } else {
                    "me"
                };
                let result = json!({
                    "passed": o.passed,
                    "feedback": o.feedback,
                    "window_verdicts": o.window_verdicts,
                    "direction": mt.direction,
                    "execution_mode": mt.execution_mode,
                });
                (task, o.powerups, o.barrel, result)
            }
        };
        result["trial"] = json!(a.trial);
        result["task"] = json!(task);
        result["powerups"] = json!(powerups);
        self.host("minigame_end", now, result.clone());
        let ev = self.submit(GameCommand::MinigameComplete {
            at_ns: now,
            powerups,
            barrel,
        })?;
        if let Some(GameEvent::MinigameComplete { damage, healed, .. }) = ev.first() {
            result["damage"] = json!(damage);
            result["healed"] = json!(healed);
        }
        self.send(MessageType::MinigameResult, result);
        self.turn_started = now;
        self.send_state();
        Ok(())
    }

    fn finish(mut self, reason: String, code: CloseCode) -> String {
        let now = self.clock.now();
        if self.active.is_some() {
            if let Err(e) = self.complete_trial(now, None) {
                log::warn!("could not score the open trial: {e}");
            }
        }
        self.host(
            "mode_end",
            now,
            json!({"round": self.round, "reason": "session_end", "detail": reason}),
        );
        self.send(
            MessageType::End,
            json!({"reason": reason, "session_id": self.session_id, "record": self.record}),
        );
        let _ = self.out.send(Outbound::Close(code, reason.clone()));
        reason
    }
}
