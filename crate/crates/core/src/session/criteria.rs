use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::analyze::{analyze_archive, ReportBundle};
use super::config::SessionConfig;
use super::simulate::{derive_seed, run_session};
use super::{io_err, SessionError};
use crate::dsp::{
    band_features, bandpass_filter, extract_epochs, filtfilt, grand_average, mi_train_features,
    mirror, remove_blink_component, EegData, EpochWindow, FilterSpec, IcaConfig, MiModel,
};
use crate::game::{GameCommand, GameConfig, GameEngine, GameEvent, GameMode, SwapCommand};
use crate::minigames::{
    build_nback_sequence, build_rsvp_sequence, score_nback, MinigameScheduler, RsvpConfig, Side,
};
use crate::synth::{
    synthesize_recording, SimulatedPlayer, SynthConfig, SynthEvent, SynthEventKind,
};
use crate::timeline::{read_session_archive, write_session_archive, TimelineError};

pub const VALIDATION_SEED: u64 = 20_240_901;
pub const RESULTS_JSON: &str = "results.json";
pub const RESULTS_CSV: &str = "results.csv";
pub const CRITERIA: [&str; 10] = [
    "errp_injection",
    "rsvp_statistics",
    "shot_clock",
    "p300_round_trip",
    "ssvep_round_trip",
    "errp_round_trip",
    "mi_chain",
    "nback",
    "dsp_bounds",
    "determinism_and_format",
];

/// Outcome of one acceptance check with the numbers it was decided on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionResult {
    pub name: String,
    pub passed: bool,
    pub measurements: BTreeMap<String, f64>,
    pub detail: String,
}

impl CriterionResult {
    fn new(name: &str) -> Self {
        Self {
            name: name.to_owned(),
            passed: true,
            measurements: BTreeMap::new(),
            detail: String::new(),
        }
    }

    fn measure(&mut self, key: &str, v: f64) -> f64 {
        self.measurements.insert(key.to_owned(), v);
        v
    }

    /// Records a failed condition; the criterion passes only if none fail.
    fn check(&mut self, ok: bool, what: impl Into<String>) {
        if !ok {
            self.passed = false;
            if !self.detail.is_empty() {
                self.detail.push_str("; ");
            }
            self.detail.push_str(&what.into());
        }
    }

    fn failed(name: &str, why: impl std::fmt::Display) -> Self {
        let mut r = Self::new(name);
        r.check(false, why.to_string());
        r
    }

    pub fn line(&self) -> String {
        let m: Vec<String> = self
            .measurements
            .iter()
            .map(|(k, v)| format!("{k}={v:.4}"))
            .collect();
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        let mut s = format!("{verdict} {}: {}", self.name, m.join(" "));
        if !self.detail.is_empty() {
            s.push_str(&format!(" ({})", self.detail));
        }
        s
    }
}

/// Runs the acceptance criteria; the simulated validation session and its
/// report bundle are built once on first use.
pub struct Criteria {
    seed: u64,
    work: PathBuf,
    errp_probability: f64,
    bundle: OnceLock<Result<ReportBundle, String>>,
}

impl Criteria {
    pub fn new(seed: u64, work: &Path) -> Self {
        Self {
            seed,
            work: work.to_owned(),
            errp_probability: GameConfig::default().errp_probability,
            bundle: OnceLock::new(),
        }
    }

    /// Overrides the substitution probability the injection check drives
    /// the engine with.
    pub fn with_errp_probability(mut self, p: f64) -> Self {
        self.errp_probability = p;
        self
    }

    fn bundle(&self) -> Result<&ReportBundle, String> {
        self.bundle
            .get_or_init(|| {
                let cfg = SessionConfig {
                    seed: self.seed,
                    ..SessionConfig::validation()
                };
                let archive = run_session(&cfg).map_err(|e| e.to_string())?;
                analyze_archive(&archive, &self.work.join("validation_report"))
                    .map_err(|e| e.to_string())
            })
            .as_ref()
            .map_err(Clone::clone)
    }

    fn metrics(&self, analysis: &str) -> Result<&Value, String> {
        let b = self.bundle()?;
        b.metrics(analysis).ok_or_else(|| {
            let entry = &b.summary["analyses"][analysis];
            let status = entry["status"].as_str().unwrap_or("missing");
            match entry["reason"].as_str() {
                Some(r) => format!("{analysis} produced no metrics: {status} ({r})"),
                None => format!("{analysis} produced no metrics: {status}"),
            }
        })
    }

    pub fn errp_injection(&self) -> CriterionResult {
        errp_injection_rate(self.errp_probability, 100_000, derive_seed(self.seed, 10))
    }

    pub fn rsvp_statistics(&self) -> CriterionResult {
        rsvp_statistics(10_000, derive_seed(self.seed, 11))
    }

    pub fn shot_clock(&self) -> CriterionResult {
        shot_clock(300.0, derive_seed(self.seed, 12))
    }

    pub fn p300(&self) -> CriterionResult {
        const NAME: &str = "p300_round_trip";
        let m = match self.metrics("rsvp_erp") {
            Ok(m) => m,
            Err(e) => return CriterionResult::failed(NAME, e),
        };
        let mut r = CriterionResult::new(NAME);
        let n = r.measure("targets", num(m, "targets"));
        r.check(n >= 150.0, format!("{n} targets, need 150"));
        let lat = r.measure("peak_latency_ms", num(m, "peak_latency_ms"));
        r.check((300.0..=450.0).contains(&lat), format!("peak at {lat} ms"));
        let d = r.measure("window_difference_uv", num(m, "window_difference_uv"));
        r.check(d >= 2.0, format!("target excess {d} uV"));
        let f = r.measure("nontarget_dominant_hz", num(m, "nontarget_dominant_hz"));
        r.check(
            (f - 5.0).abs() <= 0.5,
            format!("non-target periodicity {f} Hz"),
        );
        r
    }

    pub fn ssvep(&self) -> CriterionResult {
        const NAME: &str = "ssvep_round_trip";
        let m = match self.metrics("ssvep_psd") {
            Ok(m) => m,
            Err(e) => return CriterionResult::failed(NAME, e),
        };
        let mut r = CriterionResult::new(NAME);
        for f in [7, 9, 11, 13] {
            let s = &m[format!("{f}hz")];
            let db = r.measure(&format!("prominence_db_{f}"), num(s, "prominence_db"));
            r.check(
                s["flag"] == true && db >= 6.0,
                format!("{f} Hz not flagged ({db} dB)"),
            );
            let c = r.measure(
                &format!("control_10hz_db_{f}"),
                num(s, "control_10hz_prominence_db"),
            );
            r.check(
                s["control_10hz_flag"] == false,
                format!("10 Hz flagged in the {f} Hz run ({c} dB)"),
            );
        }
        let h = r.measure("harmonic_db_7", num(&m["7hz"], "harmonic_prominence_db"));
        r.check(
            m["7hz"]["harmonic_flag"] == true,
            format!("14 Hz not flagged ({h} dB)"),
        );
        r
    }

    pub fn errp_round_trip(&self) -> CriterionResult {
        const NAME: &str = "errp_round_trip";
        let m = match self.metrics("errp_contrast") {
            Ok(m) => m,
            Err(e) => return CriterionResult::failed(NAME, e),
        };
        let mut r = CriterionResult::new(NAME);
        let n = r.measure("caught", num(m, "caught"));
        r.check(n >= 50.0, format!("{n} caught substitutions, need 50"));
        for (key, target, negative) in [
            ("n1", 287.0, true),
            ("p", 367.0, false),
            ("n2", 486.0, true),
        ] {
            let lat = r.measure(
                &format!("{key}_latency_ms"),
                num(m, &format!("{key}_latency_ms")),
            );
            let uv = r.measure(&format!("{key}_uv"), num(m, &format!("{key}_uv")));
            r.check((lat - target).abs() <= 25.0, format!("{key} at {lat} ms"));
            r.check(
                if negative { uv < 0.0 } else { uv > 0.0 },
                format!("{key} has the wrong sign ({uv} uV)"),
            );
        }
        r
    }

    pub fn mi_chain(&self) -> CriterionResult {
        mi_chain(derive_seed(self.seed, 13))
            .unwrap_or_else(|e| CriterionResult::failed("mi_chain", e))
    }

    pub fn nback(&self) -> CriterionResult {
        let mut r = nback_statistics(1_000, derive_seed(self.seed, 14));
        match self.metrics("nback_erp") {
            Ok(m) => {
                let t = r.measure("pz_target_peak_uv", num(m, "target_peak_uv"));
                let n = r.measure("pz_nontarget_at_peak_uv", num(m, "nontarget_at_peak_uv"));
                r.check(
                    t > n,
                    format!("Pz target {t} uV not above non-target {n} uV"),
                );
            }
            Err(e) => r.check(false, e),
        }
        r
    }

    pub fn dsp_bounds(&self) -> CriterionResult {
        dsp_bounds(derive_seed(self.seed, 15))
            .unwrap_or_else(|e| CriterionResult::failed("dsp_bounds", e))
    }

    pub fn determinism(&self) -> CriterionResult {
        determinism(&self.work.join("determinism"))
            .unwrap_or_else(|e| CriterionResult::failed("determinism_and_format", e))
    }

    pub fn run(&self, name: &str) -> Option<CriterionResult> {
        Some(match name {
            "errp_injection" => self.errp_injection(),
            "rsvp_statistics" => self.rsvp_statistics(),
            "shot_clock" => self.shot_clock(),
            "p300_round_trip" => self.p300(),
            "ssvep_round_trip" => self.ssvep(),
            "errp_round_trip" => self.errp_round_trip(),
            "mi_chain" => self.mi_chain(),
            "nback" => self.nback(),
            "dsp_bounds" => self.dsp_bounds(),
            "determinism_and_format" => self.determinism(),
            _ => return None,
        })
    }

    pub fn all(&self) -> Vec<CriterionResult> {
        CRITERIA.iter().filter_map(|n| self.run(n)).collect()
    }
}

fn num(v: &Value, key: &str) -> f64 {
    v[key].as_f64().unwrap_or(f64::NAN)
}

/// Runs every criterion with the fixed seed, writing the results table and
/// the intermediate artifacts under `out`.
pub fn run_validation(out: &Path) -> Result<Vec<CriterionResult>, SessionError> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    let results = Criteria::new(VALIDATION_SEED, out).all();
    write_results(out, &results)?;
    Ok(results)
}

/// Writes the results table as JSON and CSV.
pub fn write_results(out: &Path, results: &[CriterionResult]) -> Result<(), SessionError> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    let path = out.join(RESULTS_JSON);
    let mut text = serde_json::to_string_pretty(results)?;
    text.push('\n');
    fs::write(&path, text).map_err(io_err(&path))?;
    let mut w = csv::Writer::from_path(out.join(RESULTS_CSV))?;
    w.write_record(["criterion", "passed", "measurements", "detail"])?;
    for r in results {
        let m: Vec<String> = r
            .measurements
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        w.write_record([
            r.name.as_str(),
            if r.passed { "true" } else { "false" },
            &m.join(";"),
            &r.detail,
        ])?;
    }
    w.flush().map_err(io_err(out))?;
    Ok(())
}

/// Drives the engine with always-valid swaps picked by a cyclic scan until
/// `eligible` injection-eligible moves were made.
pub fn errp_injection_rate(p: f64, eligible: usize, seed: u64) -> CriterionResult {
    const NAME: &str = "errp_injection";
    let cfg = GameConfig {
        player_hp: u32::MAX,
        enemy_hp: u32::MAX,
        enemy_attack_damage: 0,
        minigame_period: u32::MAX,
        errp_probability: p,
        ..GameConfig::default()
    };
    let mut engine = match GameEngine::new(cfg, GameMode::Normal, seed, 0) {
        Ok(e) => e,
        Err(e) => return CriterionResult::failed(NAME, e),
    };
    let (mut seen, mut injected, mut consecutive, mut prev) = (0usize, 0usize, 0usize, false);
    let mut k = 0usize;
    while seen < eligible {
        let was_eligible = engine.state().injection_eligible();
        let swaps = engine.state().board.valid_swaps();
        let (a, b) = swaps[k % swaps.len()];
        k += 1;
        let events = match engine.submit(GameCommand::Swap(SwapCommand::new(
            a,
            b,
            k as i64 * 1_000_000,
        ))) {
            Ok(e) => e,
            Err(e) => return CriterionResult::failed(NAME, e),
        };
        for e in events {
            if let GameEvent::Move {
                valid: true,
                injected: inj,
                ..
            } = e
            {
                if was_eligible {
                    seen += 1;
                    injected += inj as usize;
                }
                consecutive += (inj && prev) as usize;
                prev = inj;
            }
        }
    }
    let mut r = CriterionResult::new(NAME);
    r.measure("probability", p);
    r.measure("eligible_moves", seen as f64);
    let rate = r.measure("rate", injected as f64 / seen as f64);
    r.measure("consecutive", consecutive as f64);
    r.check(
        (rate - 0.15).abs() <= 0.005,
        format!("rate {rate:.4} outside 0.15 +/- 0.005"),
    );
    r.check(
        consecutive == 0,
        format!("{consecutive} back-to-back injections"),
    );
    r
}

pub fn rsvp_statistics(sequences: usize, seed: u64) -> CriterionResult {
    let mut r = CriterionResult::new("rsvp_statistics");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scheduler = MinigameScheduler::default();
    let (mut targets, mut items, mut short_tti) = (0usize, 0usize, 0usize);
    let mut min_tti = f64::INFINITY;
    let mut counts = [0u32; 4];
    let mut worst_spread = 0u32;
    for _ in 0..sequences {
        let sel = scheduler.complete(crate::minigames::MinigameKind::Rsvp, &mut rng);
        let c = sel.coherence.unwrap_or(1);
        counts[(c - 1) as usize] += 1;
        worst_spread =
            worst_spread.max(counts.iter().max().unwrap() - counts.iter().min().unwrap());
        let cfg = RsvpConfig::random_targets(&mut rng, c);
        let s = match build_rsvp_sequence(&cfg, &mut rng) {
            Ok(s) => s,
            Err(e) => return CriterionResult::failed("rsvp_statistics", e),
        };
        let onsets: Vec<f64> = s
            .items
            .iter()
            .filter(|i| i.is_target)
            .map(|i| i.onset)
            .collect();
        for w in onsets.windows(2) {
            let tti = w[1] - w[0];
            min_tti = min_tti.min(tti);
            short_tti += (tti < cfg.tti_min - 1e-9) as usize;
        }
        targets += onsets.len();
        items += s.items.len();
    }
    r.measure("sequences", sequences as f64);
    r.measure("min_tti_s", min_tti);
    let frac = r.measure("target_fraction", targets as f64 / items as f64);
    r.measure("coherence_spread", worst_spread as f64);
    r.check(
        short_tti == 0,
        format!("{short_tti} target intervals below 0.8 s"),
    );
    r.check(
        (frac - 0.13).abs() <= 0.01,
        format!("target fraction {frac:.4}"),
    );
    r.check(
        worst_spread <= 1,
        format!("coherence counts drifted apart by {worst_spread}"),
    );
    r
}

/// The player moves successfully exactly when its time-to-move beats the
/// clock, otherwise the move times out.
pub fn shot_clock(duration: f64, seed: u64) -> CriterionResult {
    const NAME: &str = "shot_clock";
    let player = SimulatedPlayer::default();
    let cfg = GameConfig {
        player_hp: u32::MAX,
        enemy_hp: u32::MAX,
        minigame_period: u32::MAX,
        errp_probability: 0.0,
        shot_clock_round_duration: duration,
        ..GameConfig::default()
    };
    let mut engine = match GameEngine::new(cfg, GameMode::ShotClock, seed, 0) {
        Ok(e) => e,
        Err(e) => return CriterionResult::failed(NAME, e),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut t, mut k) = (0.0f64, 0usize);
    let mut outcomes: Vec<bool> = Vec::new();
    let mut bad_deltas = 0usize;
    while engine.ended().is_none() {
        let clock = engine.state().shot_clock;
        let think = player.time_to_move(&mut rng);
        let success = think < clock;
        t += if success { think } else { clock };
        let at = (t * 1e9).round() as i64;
        let cmd = if success {
            let swaps = engine.state().board.valid_swaps();
            k += 1;
            let (a, b) = swaps[k % swaps.len()];
            GameCommand::Swap(SwapCommand::new(a, b, at))
        } else {
            GameCommand::Timeout { at_ns: at }
        };
        if let Err(e) = engine.submit(cmd) {
            return CriterionResult::failed(NAME, e);
        }
        if engine.ended().is_some() {
            break;
        }
        let delta = ((engine.state().shot_clock - clock) * 1000.0).round() as i64;
        bad_deltas += (delta != if success { -100 } else { 100 }) as usize;
        outcomes.push(success);
    }
    let mut r = CriterionResult::new(NAME);
    r.measure("moves", outcomes.len() as f64);
    let tail = &outcomes[outcomes.len().saturating_sub(100)..];
    let acc = r.measure(
        "accuracy_last_100",
        tail.iter().filter(|s| **s).count() as f64 / tail.len().max(1) as f64,
    );
    r.measure("bad_deltas", bad_deltas as f64);
    r.measure("final_clock_s", engine.state().shot_clock);
    r.check(
        outcomes.len() >= 100,
        format!("only {} moves", outcomes.len()),
    );
    r.check((0.4..=0.6).contains(&acc), format!("accuracy {acc:.2}"));
    r.check(
        bad_deltas == 0,
        format!("{bad_deltas} clock changes not exactly 0.1 s"),
    );
    r
}

/// Trains on 200 one-second windows from 50 lateralized motor windows and
/// tests on fresh motor windows and on background without any movement.
pub fn mi_chain(seed: u64) -> Result<CriterionResult, SessionError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let synth = SynthConfig {
        seed: derive_seed(seed, 1),
        ..SynthConfig::default()
    };
    let (train_trials, test_trials, rest_windows) = (50usize, 100usize, 400usize);
    let mut sides: Vec<Side> = (0..train_trials + test_trials)
        .map(|i| if i % 2 == 0 { Side::Left } else { Side::Right })
        .collect();
    sides[..train_trials].shuffle(&mut rng);
    sides[train_trials..].shuffle(&mut rng);
    let (win, rest) = (4.0, 2.0);
    let lead = 2.0;
    let events: Vec<SynthEvent> = sides
        .iter()
        .enumerate()
        .map(|(i, &side)| {
            SynthEvent::new(
                lead + i as f64 * (win + rest),
                SynthEventKind::MotorWindow {
                    side,
                    duration: win,
                },
            )
        })
        .collect();
    let motor_end = lead + sides.len() as f64 * (win + rest);
    let duration = motor_end + rest_windows as f64 + 1.0;
    let rec = synthesize_recording(&events, &synth, duration, 0)?;
    let data = EegData::from_recording(&rec);
    let fs = data.sample_rate;
    let n1 = fs.round() as usize;
    let window_at = |t: f64| data.slice((t * fs).round() as usize, n1);

    let mut feats = Vec::new();
    let mut labels = Vec::new();
    let mut held_out = Vec::new();
    for (i, &side) in sides.iter().enumerate() {
        for k in 0..win as usize {
            let w = window_at(lead + i as f64 * (win + rest) + k as f64);
            if i < train_trials {
                feats.push(band_features(&w)?);
                labels.push(side);
            } else {
                held_out.push((w, side));
            }
        }
    }
    let model: MiModel = mi_train_features(&feats, &labels)?;
    let mut r = CriterionResult::new("mi_chain");
    r.measure("train_windows", feats.len() as f64);
    let mut correct = 0usize;
    let mut mirror_breaks = 0usize;
    for (w, side) in &held_out {
        let d = model.decide(&band_features(w)?);
        correct += (d.side == *side) as usize;
        let m = model.decide(&band_features(&mirror(w))?);
        let flipped = (m.score + d.score).abs() <= 1e-9 * d.score.abs().max(1.0)
            && (d.score == 0.0 || m.side != d.side);
        mirror_breaks += (!flipped) as usize;
    }
    let acc = r.measure("held_out_accuracy", correct as f64 / held_out.len() as f64);
    let mut right = 0usize;
    for k in 0..rest_windows {
        let d = model.decide(&band_features(&window_at(motor_end + 0.5 + k as f64))?);
        right += (d.side == Side::Right) as usize;
    }
    let bg = r.measure(
        "background_right_fraction",
        right as f64 / rest_windows as f64,
    );
    r.measure("mirror_failures", mirror_breaks as f64);
    r.check(
        feats.len() == 200,
        format!("{} calibration windows", feats.len()),
    );
    r.check(acc >= 0.85, format!("held-out accuracy {acc:.3}"));
    r.check(
        (bg - 0.5).abs() <= 0.05,
        format!("background split {bg:.3}"),
    );
    r.check(
        mirror_breaks == 0,
        format!("{mirror_breaks} mirrored windows did not flip"),
    );
    Ok(r)
}

pub fn nback_statistics(trials: usize, seed: u64) -> CriterionResult {
    const NAME: &str = "nback";
    let mut r = CriterionResult::new(NAME);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let player = SimulatedPlayer::default();
    let mut rates = Vec::new();
    let mut bad = 0usize;
    for n in 1..=4usize {
        let (mut hits, mut total) = (0u32, 0u32);
        for _ in 0..trials {
            let trial = match build_nback_sequence(n, &mut rng) {
                Ok(t) => t,
                Err(e) => return CriterionResult::failed(NAME, e),
            };
            let repeats: Vec<usize> = (n..trial.items.len())
                .filter(|&i| trial.items[i] == trial.items[i - n])
                .collect();
            bad += (repeats != trial.target_indices || repeats.len() != 5) as usize;
            let s = score_nback(&trial, &player.nback_clicks(&trial, &mut rng));
            hits += s.hits;
            total += s.hits + s.misses;
        }
        rates.push(r.measure(&format!("hit_rate_n{n}"), hits as f64 / total as f64));
    }
    r.measure("malformed_trials", bad as f64);
    r.check(
        bad == 0,
        format!("{bad} trials without exactly five lag-n repeats"),
    );
    r.check(
        rates.windows(2).all(|w| w[1] < w[0]),
        format!("hit rates not decreasing: {rates:?}"),
    );
    r
}

fn sine(f: f64, fs: f64, seconds: f64) -> Vec<f64> {
    let n = (seconds * fs) as usize;
    (0..n)
        .map(|i| (2.0 * std::f64::consts::PI * f * i as f64 / fs).sin())
        .collect()
}

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

/// Variance of a channel within 0.4 s after each blink onset.
fn blink_variance(x: &[f64], onsets: &[f64], fs: f64) -> f64 {
    let mut v = Vec::new();
    for &t in onsets {
        let a = ((t * fs) as usize).min(x.len());
        let b = (a + (0.4 * fs) as usize).min(x.len());
        v.extend_from_slice(&x[a..b]);
    }
    v.iter().map(|s| s * s).sum::<f64>() / v.len().max(1) as f64
}

pub fn dsp_bounds(seed: u64) -> Result<CriterionResult, SessionError> {
    let mut r = CriterionResult::new("dsp_bounds");
    let fs = 256.0;
    let spec = FilterSpec::default();
    let sections = spec.sections(fs)?;
    let pad = (6.0 * fs / spec.low_cut) as usize;
    let gain_at = |f: f64, seconds: f64| {
        let x = sine(f, fs, seconds);
        let y = filtfilt(&sections, &x, pad);
        let q = x.len() / 4;
        rms(&y[q..3 * q]) / rms(&x[q..3 * q])
    };
    let g11 = r.measure("gain_11hz", gain_at(11.0, 20.0));
    let a02 = r.measure("atten_0_2hz_db", -20.0 * gain_at(0.2, 200.0).log10());
    let a55 = r.measure("atten_55hz_db", -20.0 * gain_at(55.0, 20.0).log10());
    r.check((g11 - 1.0).abs() <= 0.05, format!("11 Hz gain {g11:.4}"));
    r.check(a02 >= 20.0, format!("0.2 Hz attenuation {a02:.1} dB"));
    r.check(a55 >= 20.0, format!("55 Hz attenuation {a55:.1} dB"));

    // a smooth 10 Hz burst; zero-phase filtering keeps its envelope peak in place
    let n = 2048usize;
    let c = 1000usize;
    let burst: Vec<f64> = (0..n)
        .map(|i| {
            let t = (i as f64 - c as f64) / fs;
            (-t * t / (2.0 * 0.05f64.powi(2))).exp() * (2.0 * std::f64::consts::PI * 10.0 * t).cos()
        })
        .collect();
    let y = filtfilt(&sections, &burst, pad);
    let peak = (0..n).max_by(|&a, &b| y[a].total_cmp(&y[b])).unwrap_or(0);
    let shift = r.measure("peak_shift_samples", (peak as f64 - c as f64).abs());
    r.check(shift < 1.0, format!("peak moved {shift} samples"));

    // oddball recording with blinks
    let synth = SynthConfig {
        seed,
        ..SynthConfig::default()
    };
    let mut events = Vec::new();
    let mut marks = Vec::new();
    let duration = 600.0;
    let (mut t, mut i) = (1.5, 0usize);
    while t < duration - 1.5 {
        let target = i % 5 == 2;
        events.push(SynthEvent::new(t, SynthEventKind::VisualOnset { target }));
        marks.push((
            (t * fs).round() as usize,
            if target { "target" } else { "nontarget" }.to_owned(),
        ));
        t += 0.9 + 0.05 * (i % 3) as f64;
        i += 1;
    }
    let rec = synthesize_recording(&events, &synth, duration, 0)?;
    let filtered = bandpass_filter(&EegData::from_recording(&rec), &spec)?;
    let epochs = extract_epochs(&filtered, &marks, &EpochWindow::default())?;
    let nb = (-EpochWindow::default().start * fs).round() as usize;
    let mut worst = 0.0f64;
    for e in 0..epochs.len() {
        for ch in 0..epochs.channels() {
            let tr = epochs.trace(e, ch);
            worst = worst.max((tr[..nb].iter().sum::<f64>() / nb as f64).abs());
        }
    }
    r.measure("max_baseline_mean_uv", worst);
    r.check(worst <= 1e-9, format!("baseline mean {worst:e} uV"));

    let clean = remove_blink_component(&filtered, &IcaConfig::default())?;
    let fp1 = filtered.index("Fp1")?;
    let before = blink_variance(&filtered.channels[fp1], &rec.blink_onsets, fs);
    let after = blink_variance(&clean.cleaned.channels[fp1], &rec.blink_onsets, fs);
    let reduction = r.measure("fp1_blink_variance_reduction", 1.0 - after / before);
    r.check(
        reduction >= 0.8,
        format!("blink variance reduced by {reduction:.3}"),
    );
    let pz_peak = |d: &EegData| -> Result<f64, SessionError> {
        let ep = extract_epochs(d, &marks, &EpochWindow::default())?;
        let avg = grand_average(&ep, "target")?;
        Ok(avg
            .mean_trace(ep.channel_index("Pz")?)
            .into_iter()
            .fold(f64::MIN, f64::max))
    };
    let (pa, pb) = (pz_peak(&filtered)?, pz_peak(&clean.cleaned)?);
    let change = r.measure("pz_p300_change", (pb - pa).abs() / pa.abs());
    r.check(change <= 0.1, format!("P300 changed by {change:.3}"));
    Ok(r)
}

fn digest_dir(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, SessionError> {
    let mut out = Vec::new();
    let mut entries: Vec<_> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .collect::<Result<Vec<_>, _>>()
        .map_err(io_err(dir))?;
    entries.sort_by_key(|e| e.file_name());
    for e in entries {
        let p = e.path();
        if p.is_file() {
            out.push((
                e.file_name().to_string_lossy().into_owned(),
                fs::read(&p).map_err(io_err(&p))?,
            ));
        }
    }
    Ok(out)
}

pub fn determinism(work: &Path) -> Result<CriterionResult, SessionError> {
    let mut r = CriterionResult::new("determinism_and_format");
    if work.exists() {
        fs::remove_dir_all(work).map_err(io_err(work))?;
    }
    let cfg = SessionConfig::smoke();
    let mut digests = Vec::new();
    let mut archives = Vec::new();
    for run in ["a", "b"] {
        let archive = run_session(&cfg)?;
        let dir = work.join(run);
        write_session_archive(&dir.join("archive"), &archive)?;
        analyze_archive(&archive, &dir.join("report"))?;
        digests.push((
            digest_dir(&dir.join("archive"))?,
            digest_dir(&dir.join("report"))?,
        ));
        archives.push((archive, dir));
    }
    let archive_same = digests[0].0 == digests[1].0;
    let report_same = digests[0].1 == digests[1].1;
    r.measure("archive_files", digests[0].0.len() as f64);
    r.measure("report_files", digests[0].1.len() as f64);
    r.check(archive_same, "archives differ between identical runs");
    r.check(report_same, "report bundles differ between identical runs");

    let (archive, dir) = &archives[0];
    let back = read_session_archive(&dir.join("archive"))?;
    r.check(&back == archive, "archive did not round-trip");

    let blob = dir.join("archive").join("eeg.f32");
    let mut bytes = fs::read(&blob).map_err(io_err(&blob))?;
    let keep = bytes.len() - 3;
    bytes.truncate(keep);
    fs::write(&blob, &bytes).map_err(io_err(&blob))?;
    let frame = 4 * archive
        .header(super::EEG_STREAM)
        .map_or(1, |h| h.channels()) as u64;
    let expected = keep as u64 / frame * frame;
    match read_session_archive(&dir.join("archive")) {
        Err(TimelineError::Parse { offset, .. }) => {
            r.measure("truncation_offset", offset as f64);
            r.check(
                offset == expected,
                format!("truncation reported at byte {offset}, expected {expected}"),
            );
        }
        other => r.check(
            false,
            format!("truncated blob not detected: {:?}", other.err()),
        ),
    }
    Ok(r)
}
