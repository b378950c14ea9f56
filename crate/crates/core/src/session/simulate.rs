use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use super::{io_err, SessionConfig, SessionError};
use crate::dsp::{band_features, mi_train_features, EegData, MiModel};
use crate::game::{
    Board, GameCommand, GameConfig, GameEngine, GameEvent, GameMode, Pos, SwapCommand,
};
use crate::minigames::{
    build_mi_trial, build_nback_sequence, build_rsvp_sequence, evaluate_mi_trial, score_nback,
    score_rsvp, score_ssvep, ExecutionMode, MiVerdicts, MinigameKind, MinigameScheduler,
    ModeAlternator, RsvpConfig, Selection, Side, SsvepGenerator, StimulusSchedule, TaskScore,
    RSVP_WINDOW,
};
use crate::synth::{SynthEvent, SynthEventKind, Synthesizer};
use crate::timeline::{
    estimate_clock_offset, write_session_archive, Recorder, RoundTrip, SessionArchive,
    StreamHeader, Timestamp, HOST_CLOCK,
};

pub const GAME_STREAM: &str = "game";
pub const UI_STREAM: &str = "ui";
pub const EEG_STREAM: &str = "eeg";
pub const UI_CLOCK: &str = "ui";

const TAG_SYNTH: u64 = 1;
const TAG_PLAYER: u64 = 2;
const TAG_TASKS: u64 = 3;
const TAG_LINK: u64 = 4;
const TAG_GAME: u64 = 1 << 32;
/// Spacing of the ping burst at connection time.
const BURST_SPACING: f64 = 0.05;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent sub-seed for one consumer of the master seed.
pub fn derive_seed(master: u64, tag: u64) -> u64 {
    splitmix(master ^ splitmix(tag))
}

fn ns(t: f64) -> i64 {
    (t * 1e9).round() as i64
}

/// Runs a session and writes its archive to `out`, which must be empty or
/// absent.
pub fn simulate_session(cfg: &SessionConfig, out: &Path) -> Result<SessionArchive, SessionError> {
    cfg.validate()?;
    if out.exists() {
        let mut entries = fs::read_dir(out).map_err(io_err(out))?;
        if entries.next().is_some() {
            return Err(SessionError::OutputNotEmpty(out.to_owned()));
        }
    }
    let archive = run_session(cfg)?;
    write_session_archive(out, &archive)?;
    Ok(archive)
}

/// Runs a session in memory.
pub fn run_session(cfg: &SessionConfig) -> Result<SessionArchive, SessionError> {
    cfg.validate()?;
    let mut sim = Sim::new(cfg)?;
    sim.time_sync_burst(0.0);
    let mut t = sim.calibrate(0.0)?;
    for (i, round) in cfg.rounds.iter().enumerate() {
        t = sim.play_round(i, round.mode, t, t + round.duration)?;
    }
    sim.finish(t)
}

struct Sim<'a> {
    cfg: &'a SessionConfig,
    rec: Recorder,
    synth: Synthesizer,
    eeg: Vec<f32>,
    labels: Vec<String>,
    player_rng: ChaCha8Rng,
    task_rng: ChaCha8Rng,
    link_rng: ChaCha8Rng,
    trips: Vec<RoundTrip>,
    next_sync: f64,
    scheduler: MinigameScheduler,
    quota_left: Option<[u32; 4]>,
    ssvep: SsvepGenerator,
    alternator: ModeAlternator,
    mi_model: Option<MiModel>,
    pairs: Vec<(Pos, Pos)>,
    trials: u32,
    games: u64,
}

impl<'a> Sim<'a> {
    fn new(cfg: &'a SessionConfig) -> Result<Self, SessionError> {
        let mut synth_cfg = cfg.synth.clone();
        synth_cfg.seed = derive_seed(cfg.seed, TAG_SYNTH);
        let labels = synth_cfg.channels.clone();
        let label_refs: Vec<&str> = labels.iter().map(String::as_str).collect();
        let mut rec = Recorder::new();
        rec.register_stream(StreamHeader::markers(GAME_STREAM, HOST_CLOCK))?;
        rec.register_stream(StreamHeader::markers(UI_STREAM, UI_CLOCK))?;
        rec.register_stream(StreamHeader::samples(
            EEG_STREAM,
            &label_refs,
            synth_cfg.sample_rate,
            0,
        ))?;
        let rng = |tag| ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, tag));
        let (rows, cols) = (cfg.game.board_rows, cfg.game.board_cols);
        let n = rows * cols;
        let pairs = (0..n)
            .flat_map(|i| {
                (i + 1..n)
                    .map(move |j| (Pos::new(i / cols, i % cols), Pos::new(j / cols, j % cols)))
            })
            .collect();
        Ok(Self {
            cfg,
            rec,
            synth: Synthesizer::new(synth_cfg, &[])?,
            eeg: Vec::new(),
            labels,
            player_rng: rng(TAG_PLAYER),
            task_rng: rng(TAG_TASKS),
            link_rng: rng(TAG_LINK),
            trips: Vec::new(),
            next_sync: cfg.sync_interval,
            scheduler: MinigameScheduler::default(),
            quota_left: cfg.quota.map(|q| {
                let mut left = [0; 4];
                left[MinigameKind::Rsvp as usize] = q.rsvp;
                left[MinigameKind::Ssvep as usize] = q.ssvep;
                left[MinigameKind::MiMe as usize] = q.mi_me;
                left[MinigameKind::Nback as usize] = q.nback;
                left
            }),
            ssvep: SsvepGenerator::new(cfg.display_rate, cfg.ssvep_flash_duration)?,
            alternator: ModeAlternator::default(),
            mi_model: None,
            pairs,
            trials: 0,
            games: 0,
        })
    }

    fn host(&mut self, kind: &str, t: f64, payload: Value) -> Result<(), SessionError> {
        self.rec
            .append(GAME_STREAM, kind, payload, Some(Timestamp(ns(t))))?;
        Ok(())
    }

    /// Stamps on the display client's clock.
    fn ui(&mut self, kind: &str, t: f64, payload: Value) -> Result<(), SessionError> {
        let stamp = ns(t) + self.cfg.ui_clock_offset_ns;
        self.rec
            .append(UI_STREAM, kind, payload, Some(Timestamp(stamp)))?;
        Ok(())
    }

    fn round_trip(&mut self, t: f64) -> Result<(), SessionError> {
        let (d, j) = (self.cfg.link_delay, self.cfg.link_jitter);
        let up = d + self.link_rng.random_range(0.0..=j);
        let down = d + self.link_rng.random_range(0.0..=j);
        let trip = RoundTrip::new(
            ns(t),
            ns(t + up) + self.cfg.ui_clock_offset_ns,
            ns(t + up + down),
        );
        self.host(
            "time_sync",
            t + up + down,
            json!({
                "t_send": trip.t_send.0,
                "t_remote_recv": trip.t_remote.0,
                "t_remote_send": trip.t_remote.0,
                "t_recv": trip.t_recv.0,
            }),
        )?;
        self.trips.push(trip);
        Ok(())
    }

    fn time_sync_burst(&mut self, t: f64) {
        for k in 0..self.cfg.sync_burst {
            self.round_trip(t + k as f64 * BURST_SPACING)
                .expect("registered stream");
        }
    }

    fn sync_until(&mut self, t: f64) -> Result<(), SessionError> {
        while self.next_sync <= t {
            self.round_trip(self.next_sync)?;
            self.next_sync += self.cfg.sync_interval;
        }
        Ok(())
    }

    fn push(&mut self, t: f64, kind: SynthEventKind) {
        self.synth.push_event(SynthEvent::new(t, kind));
    }

    fn render_until(&mut self, t: f64) {
        let fs = self.synth.config().sample_rate;
        let target = (t * fs).round() as u64;
        let have = self.synth.frames_rendered();
        if target > have {
            let chunk = self.synth.render((target - have) as usize);
            self.eeg.extend_from_slice(&chunk);
        }
    }

    /// One-second window starting at frame `start`.
    fn window(&self, start: usize) -> EegData {
        let fs = self.synth.config().sample_rate;
        let n = fs.round() as usize;
        let nch = self.labels.len();
        EegData::from_frames(
            self.labels.clone(),
            fs,
            &self.eeg[start * nch..(start + n) * nch],
        )
    }

    fn frame_of(&self, t: f64) -> usize {
        (t * self.synth.config().sample_rate).round() as usize
    }

    /// Left/right imagery blocks used to train the online classifier.
    fn calibrate(&mut self, t0: f64) -> Result<f64, SessionError> {
        let n = self.cfg.mi_calibration_trials;
        if n == 0 {
            return Ok(t0);
        }
        let win = self.cfg.mi_calibration_window;
        let mut sides: Vec<Side> = (0..n)
            .map(|i| if i % 2 == 0 { Side::Left } else { Side::Right })
            .collect();
        sides.shuffle(&mut self.task_rng);
        let trial = self.next_trial();
        let mut t = t0 + self.cfg.minigame_gap;
        self.host(
            "minigame_start",
            t,
            json!({"trial": trial, "task": "mi_calibration", "trials": n, "window": win}),
        )?;
        let mut onsets = Vec::with_capacity(n);
        for (i, &side) in sides.iter().enumerate() {
            self.push(
                t,
                SynthEventKind::MotorWindow {
                    side,
                    duration: win,
                },
            );
            self.ui(
                "stimulus_onset",
                t,
                json!({"trial": trial, "task": "mi_calibration", "index": i, "side": side, "duration": win}),
            )?;
            onsets.push((t, side));
            t += win + self.cfg.mi_calibration_rest;
        }
        self.render_until(t);
        let fs = self.synth.config().sample_rate;
        let per = win.floor() as usize;
        let mut feats = Vec::with_capacity(n * per);
        let mut labels = Vec::with_capacity(n * per);
        for &(on, side) in &onsets {
            for k in 0..per {
                let start = self.frame_of(on) + k * fs.round() as usize;
                feats.push(band_features(&self.window(start))?);
                labels.push(side);
            }
        }
        self.mi_model = match mi_train_features(&feats, &labels) {
            Ok(m) => Some(m),
            Err(e) => {
                log::warn!("motor-imagery calibration failed ({e}); imagery trials use the stub");
                None
            }
        };
        self.host(
            "minigame_end",
            t,
            json!({"trial": trial, "task": "mi_calibration", "model": self.mi_model}),
        )?;
        self.sync_until(t)?;
        Ok(t)
    }

    fn next_trial(&mut self) -> u32 {
        self.trials += 1;
        self.trials
    }

    fn play_round(
        &mut self,
        round: usize,
        mode: GameMode,
        mut t: f64,
        end: f64,
    ) -> Result<f64, SessionError> {
        while t < end {
            let game = self.games;
            self.games += 1;
            let config = GameConfig {
                mode_round_duration: end - t,
                shot_clock_round_duration: end - t,
                ..self.cfg.game.clone()
            };
            let mut engine = GameEngine::new(
                config,
                mode,
                derive_seed(self.cfg.seed, TAG_GAME + game),
                ns(t),
            )?;
            self.host(
                "mode_start",
                t,
                json!({"round": round, "mode": mode, "game": game}),
            )?;
            t = self.play_game(&mut engine, t, end)?;
            if engine.ended().is_none() {
                self.host("mode_end", end, json!({"round": round, "game": game, "reason": "round_over", "score": engine.state().score}))?;
                t = end;
            }
        }
        Ok(end)
    }

    fn pick_swap(&mut self, board: &Board, valid: bool) -> Option<(Pos, Pos)> {
        let n = self.pairs.len();
        let start = self.player_rng.random_range(0..n);
        (0..n).map(|k| self.pairs[(start + k) % n]).find(|&(a, b)| {
            let m = board.forms_match(a, b);
            if valid {
                m
            } else {
                !m && board.get(a) != board.get(b)
            }
        })
    }

    fn play_game(
        &mut self,
        engine: &mut GameEngine,
        mut t: f64,
        end: f64,
    ) -> Result<f64, SessionError> {
        let player = self.cfg.player.clone();
        loop {
            let think = player.time_to_move(&mut self.player_rng);
            let timeout =
                engine.state().mode == GameMode::ShotClock && think > engine.state().shot_clock;
            let ta = t + if timeout {
                engine.state().shot_clock
            } else {
                think
            };
            if ta >= end {
                let ev = engine.submit(GameCommand::Tick { at_ns: ns(end) })?;
                self.log_game(&ev)?;
                return Ok(end);
            }
            self.sync_until(ta)?;
            let cmd = if timeout {
                GameCommand::Timeout { at_ns: ns(ta) }
            } else {
                let invalid = player.attempts_invalid_swap(&mut self.player_rng);
                let swap = self
                    .pick_swap(&engine.state().board, !invalid)
                    .or_else(|| self.pick_swap(&engine.state().board, invalid))
                    .expect("board has at least one swap");
                GameCommand::Swap(SwapCommand::new(swap.0, swap.1, ns(ta)))
            };
            let events = engine.submit(cmd)?;
            self.log_game(&events)?;
            t = ta;
            if engine.ended().is_some() {
                return Ok(t);
            }
            if events
                .iter()
                .any(|e| matches!(e, GameEvent::Injection { .. }))
                && player.notices_injection(&mut self.player_rng)
            {
                self.push(ta, SynthEventKind::ErrorNoticed);
                let tc = ta + player.response_time(&mut self.player_rng);
                if tc >= end {
                    continue;
                }
                self.sync_until(tc)?;
                let ev = engine.submit(GameCommand::CheatReport { at_ns: ns(tc) })?;
                self.log_game(&ev)?;
                t = tc;
                if engine.ended().is_some() {
                    return Ok(t);
                }
            }
            if engine.state().minigame_pending {
                t = self.minigame(engine, t, end)?;
                if engine.ended().is_some() {
                    return Ok(t);
                }
            }
        }
    }

    fn log_game(&mut self, events: &[GameEvent]) -> Result<(), SessionError> {
        for e in events {
            let kind = match e {
                GameEvent::MinigameDue { .. } | GameEvent::MinigameComplete { .. } => continue,
                other => other.kind(),
            };
            let payload = serde_json::to_value(e)?;
            self.rec
                .append(GAME_STREAM, kind, payload, Some(Timestamp(e.t_ns())))?;
        }
        Ok(())
    }

    fn choose(&mut self) -> Option<Selection> {
        let Some(left) = self.quota_left.as_mut() else {
            return Some(self.scheduler.next(&mut self.task_rng));
        };
        let total: u32 = left.iter().sum();
        if total == 0 {
            return None;
        }
        let mut r = self.task_rng.random_range(0..total);
        let kind = MinigameKind::ALL
            .into_iter()
            .find(|&k| {
                let n = left[k as usize];
                if r < n {
                    true
                } else {
                    r -= n;
                    false
                }
            })
            .expect("draw below the quota total");
        Some(self.scheduler.complete(kind, &mut self.task_rng))
    }

    fn expected_length(&self, kind: MinigameKind) -> f64 {
        match kind {
            MinigameKind::Rsvp => {
                let c = RsvpConfig::default();
                c.length as f64 * c.soa() + RSVP_WINDOW.1
            }
            MinigameKind::Ssvep => self.cfg.ssvep_flash_duration + 2.0,
            MinigameKind::MiMe => 6.0,
            MinigameKind::Nback => 22.0 * 2.3,
        }
    }

    /// Plays the due mini-game, or skips it when none is left in the quota
    /// or it would not finish inside the round.
    fn minigame(&mut self, engine: &mut GameEngine, t: f64, end: f64) -> Result<f64, SessionError> {
        let gap = self.cfg.minigame_gap;
        let sel = self.choose();
        let fits = sel.is_some_and(|s| t + 2.0 * gap + self.expected_length(s.kind) < end);
        let Some(sel) = sel.filter(|_| fits) else {
            let ev = engine.submit(GameCommand::MinigameComplete {
                at_ns: ns(t),
                powerups: vec![],
                barrel: None,
            })?;
            self.log_game(&ev)?;
            return Ok(t);
        };
        let kind = sel.kind;
        if let Some(left) = self.quota_left.as_mut() {
            left[kind as usize] -= 1;
        }
        let t0 = t + gap;
        self.sync_until(t0)?;
        let trial = self.next_trial();
        let player = self.cfg.player.clone();
        let (t_end, powerups, barrel, result) = match kind {
            MinigameKind::Rsvp => {
                let c = sel.coherence.unwrap_or(1);
                let rcfg = RsvpConfig::random_targets(&mut self.task_rng, c);
                let schedule = build_rsvp_sequence(&rcfg, &mut self.task_rng)?;
                self.start_trial(trial, "rsvp", t0, &schedule, json!({"coherence": c}))?;
                for it in &schedule.items {
                    self.push(
                        t0 + it.onset,
                        SynthEventKind::VisualOnset {
                            target: it.is_target,
                        },
                    );
                }
                let responses = player.rsvp_responses(&schedule, c, &mut self.player_rng);
                for &(rt, side) in &responses {
                    self.ui(
                        "response",
                        t0 + rt,
                        json!({"trial": trial, "task": "rsvp", "side": side}),
                    )?;
                }
                let score = score_rsvp(&schedule, &responses);
                let t_end = t0 + schedule.items.len() as f64 * schedule.soa + RSVP_WINDOW.1;
                (
                    t_end,
                    score.powerups.clone(),
                    None,
                    json!({"score": score, "coherence": c}),
                )
            }
            MinigameKind::Ssvep => {
                let st = self.ssvep.next_trial(&mut self.task_rng);
                let schedule = st.to_schedule();
                let f = st.target_frequency();
                self.start_trial(
                    trial,
                    "ssvep",
                    t0,
                    &schedule,
                    json!({"frequency": f, "box_frequencies": st.box_frequencies, "duration": st.flash_duration}),
                )?;
                self.push(
                    t0,
                    SynthEventKind::SsvepFlash {
                        toggles: st.toggles_of(st.target_box).collect(),
                        duration: st.flash_duration,
                    },
                );
                let click = player.ssvep_click(&st, &mut self.player_rng);
                self.ui(
                    "response",
                    t0 + click.0,
                    json!({"trial": trial, "task": "ssvep", "box": click.1}),
                )?;
                let score = score_ssvep(&st, Some(click));
                (
                    t0 + click.0,
                    score.powerups.clone(),
                    None,
                    json!({"score": score, "frequency": f}),
                )
            }
            MinigameKind::Nback => {
                let n = sel.n.unwrap_or(1);
                let nt = build_nback_sequence(n, &mut self.task_rng)?;
                let schedule = nt.to_schedule();
                self.start_trial(trial, "nback", t0, &schedule, json!({"n": n}))?;
                for it in &schedule.items {
                    self.push(
                        t0 + it.onset,
                        SynthEventKind::VisualOnset {
                            target: it.is_target,
                        },
                    );
                }
                let clicks = player.nback_clicks(&nt, &mut self.player_rng);
                for &c in &clicks {
                    self.ui("response", t0 + c, json!({"trial": trial, "task": "nback"}))?;
                }
                let score = score_nback(&nt, &clicks);
                (
                    t0 + nt.duration(),
                    score.powerups.clone(),
                    None,
                    json!({"score": score, "n": n}),
                )
            }
            MinigameKind::MiMe => {
                let mt = build_mi_trial(&mut self.task_rng, &mut self.alternator);
                let schedule = mt.to_schedule();
                let task = match mt.execution_mode {
                    ExecutionMode::Imagery => "mi",
                    ExecutionMode::Execution => "me",
                };
                self.start_trial(
                    trial,
                    task,
                    t0,
                    &schedule,
                    json!({"direction": mt.direction}),
                )?;
                self.push(
                    t0,
                    SynthEventKind::MotorWindow {
                        side: mt.direction,
                        duration: mt.duration,
                    },
                );
                let t_end = t0 + mt.duration;
                let (verdicts, decisions) = match (mt.execution_mode, self.mi_model) {
                    (ExecutionMode::Imagery, Some(model)) => {
                        self.render_until(t_end);
                        let fs = self.synth.config().sample_rate.round() as usize;
                        let mut flags = Vec::new();
                        let mut sides = Vec::new();
                        for k in 0..mt.window_count() {
                            let d = model
                                .decide(&band_features(&self.window(self.frame_of(t0) + k * fs))?);
                            flags.push(d.side == mt.direction);
                            sides.push(d.side);
                        }
                        (MiVerdicts::Classifier(flags), json!(sides))
                    }
                    (ExecutionMode::Imagery, None) => (
                        MiVerdicts::Classifier(player.mi_stub_verdicts(&mt, &mut self.player_rng)),
                        Value::Null,
                    ),
                    (ExecutionMode::Execution, _) => {
                        let sq = player.me_squeezes(&mt, &mut self.player_rng);
                        for (k, &n) in sq.iter().enumerate() {
                            for _ in 0..n {
                                self.ui(
                                    "response",
                                    t0 + k as f64 + 0.5,
                                    json!({"trial": trial, "task": "me", "window": k}),
                                )?;
                            }
                        }
                        (MiVerdicts::Squeezes(sq), Value::Null)
                    }
                };
                let outcome = evaluate_mi_trial(&mt, &verdicts)?;
                let result = json!({
                    "passed": outcome.passed,
                    "feedback": outcome.feedback,
                    "window_verdicts": outcome.window_verdicts,
                    "decisions": decisions,
                    "direction": mt.direction,
                    "execution_mode": mt.execution_mode,
                });
                (t_end, outcome.powerups, outcome.barrel, result)
            }
        };
        let mut payload = result;
        payload["trial"] = json!(trial);
        payload["task"] = json!(task_name(kind, &payload));
        payload["powerups"] = json!(powerups);
        self.sync_until(t_end)?;
        self.host("minigame_end", t_end, payload)?;
        let tc = t_end + gap;
        self.sync_until(tc)?;
        let ev = engine.submit(GameCommand::MinigameComplete {
            at_ns: ns(tc),
            powerups,
            barrel,
        })?;
        self.log_game(&ev)?;
        Ok(tc)
    }

    fn start_trial(
        &mut self,
        trial: u32,
        task: &str,
        t0: f64,
        schedule: &StimulusSchedule,
        extra: Value,
    ) -> Result<(), SessionError> {
        let mut payload = json!({"trial": trial, "task": task, "schedule": schedule});
        if let (Some(p), Value::Object(e)) = (payload.as_object_mut(), extra.clone()) {
            p.extend(e);
        }
        self.host("minigame_start", t0, payload)?;
        let mut flips = Vec::with_capacity(schedule.items.len());
        for (i, it) in schedule.items.iter().enumerate() {
            let mut p = json!({
                "trial": trial,
                "task": task,
                "index": i,
                "stimulus": it.stimulus,
                "is_target": it.is_target,
                "side": it.side,
            });
            if let (Some(p), Value::Object(e)) = (p.as_object_mut(), extra.clone()) {
                p.extend(e);
            }
            self.ui("stimulus_onset", t0 + it.onset, p)?;
            flips.push(ns(t0 + it.onset) + self.cfg.ui_clock_offset_ns);
        }
        // the simulated display never misses a frame
        self.ui(
            "flip_report",
            t0 + schedule.items.last().map_or(0.0, |i| i.onset),
            json!({"trial": trial, "scheduled_ns": flips, "actual_ns": flips, "missed": 0}),
        )
    }

    fn finish(mut self, t: f64) -> Result<SessionArchive, SessionError> {
        self.sync_until(t)?;
        self.render_until(t);
        let eeg = std::mem::take(&mut self.eeg);
        self.rec.push_frames(EEG_STREAM, &eeg)?;
        let offset = estimate_clock_offset(&self.trips)?;
        self.rec.set_clock_offset(UI_CLOCK, offset);
        let id = format!("sim-{:016x}", self.cfg.seed);
        let config = serde_json::to_value(self.cfg)?;
        Ok(self.rec.into_archive(&id, config))
    }
}

fn task_name(kind: MinigameKind, payload: &Value) -> String {
    match kind {
        MinigameKind::MiMe => {
            if payload["execution_mode"] == json!(ExecutionMode::Imagery) {
                "mi".into()
            } else {
                "me".into()
            }
        }
        k => k.name().into(),
    }
}

/// Pulls the task score out of a `minigame_end` payload.
pub(crate) fn end_score(payload: &Value) -> Option<TaskScore> {
    serde_json::from_value(payload.get("score")?.clone()).ok()
}
