use serde::{Deserialize, Serialize};

use super::SessionError;
use crate::game::{GameConfig, GameMode};
use crate::synth::{SimulatedPlayer, SynthConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundSpec {
    pub mode: GameMode,
    /// Wall-clock length of the round, seconds.
    pub duration: f64,
}

impl RoundSpec {
    pub fn new(mode: GameMode, duration: f64) -> Self {
        Self { mode, duration }
    }
}

/// Three 15-minute rounds, each followed by five minutes of shot clock.
pub fn standard_rounds() -> Vec<RoundSpec> {
    let mut out = Vec::new();
    for mode in [
        GameMode::Normal,
        GameMode::TimeLimited,
        GameMode::MoveLimited,
    ] {
        out.push(RoundSpec::new(mode, 900.0));
        out.push(RoundSpec::new(GameMode::ShotClock, 300.0));
    }
    out
}

/// Fixed numbers of each mini-game. Once all are used up, due mini-games
/// are skipped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinigameQuota {
    pub rsvp: u32,
    pub ssvep: u32,
    pub nback: u32,
    pub mi_me: u32,
}

impl MinigameQuota {
    pub fn total(&self) -> u32 {
        self.rsvp + self.ssvep + self.nback + self.mi_me
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub seed: u64,
    pub game: GameConfig,
    pub synth: SynthConfig,
    pub player: SimulatedPlayer,
    pub rounds: Vec<RoundSpec>,
    /// Without a quota the balanced shuffled-bag scheduler runs throughout.
    pub quota: Option<MinigameQuota>,
    /// Left/right motor-imagery calibration trials recorded before play.
    pub mi_calibration_trials: usize,
    pub mi_calibration_window: f64,
    pub mi_calibration_rest: f64,
    pub display_rate: u32,
    pub ssvep_flash_duration: f64,
    /// Pause between the board and a mini-game, both ways.
    pub minigame_gap: f64,
    /// True offset of the display client's clock, remote = host + offset.
    pub ui_clock_offset_ns: i64,
    /// One-way network delay and its uniform jitter, seconds.
    pub link_delay: f64,
    pub link_jitter: f64,
    pub sync_interval: f64,
    pub sync_burst: usize,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            game: GameConfig::default(),
            synth: SynthConfig::default(),
            player: SimulatedPlayer::default(),
            rounds: standard_rounds(),
            quota: None,
            mi_calibration_trials: 50,
            mi_calibration_window: 4.0,
            mi_calibration_rest: 2.0,
            display_rate: 60,
            ssvep_flash_duration: 4.0,
            minigame_gap: 1.0,
            ui_clock_offset_ns: 123_456_789,
            link_delay: 0.0025,
            link_jitter: 0.003,
            sync_interval: 10.0,
            sync_burst: 8,
        }
    }
}

impl SessionConfig {
    /// Standard round structure with mini-game counts sized to the pilot study's
    /// per-task stimulus time.
    pub fn pilot() -> Self {
        Self {
            quota: Some(MinigameQuota {
                rsvp: 38,
                ssvep: 75,
                nback: 14,
                mi_me: 50,
            }),
            ..Self::default()
        }
    }

    /// The session the acceptance suite analyzes: enough trials of each
    /// paradigm and caught substitutions for every round-trip check.
    pub fn validation() -> Self {
        Self {
            seed: 20_240_901,
            rounds: vec![
                RoundSpec::new(GameMode::Normal, 1500.0),
                RoundSpec::new(GameMode::ShotClock, 300.0),
                RoundSpec::new(GameMode::TimeLimited, 600.0),
            ],
            quota: Some(MinigameQuota {
                rsvp: 36,
                ssvep: 40,
                nback: 8,
                mi_me: 12,
            }),
            ..Self::default()
        }
    }

    /// One minute of play with every mini-game kind.
    pub fn smoke() -> Self {
        Self {
            rounds: vec![RoundSpec::new(GameMode::Normal, 60.0)],
            quota: Some(MinigameQuota {
                rsvp: 1,
                ssvep: 1,
                nback: 0,
                mi_me: 1,
            }),
            mi_calibration_trials: 0,
            game: GameConfig {
                minigame_period: 3,
                ..GameConfig::default()
            },
            ..Self::default()
        }
    }

    pub fn calibration_duration(&self) -> f64 {
        if self.mi_calibration_trials == 0 {
            0.0
        } else {
            self.minigame_gap
                + self.mi_calibration_trials as f64
                    * (self.mi_calibration_window + self.mi_calibration_rest)
        }
    }

    pub fn total_duration(&self) -> f64 {
        self.calibration_duration() + self.rounds.iter().map(|r| r.duration).sum::<f64>()
    }

    pub fn validate(&self) -> Result<(), SessionError> {
        let mut bad = Vec::new();
        if let Err(crate::game::GameError::Config(v)) = self.game.validate() {
            bad.extend(v.into_iter().map(|m| format!("game.{m}")));
        }
        if let Err(crate::synth::SynthError::Config(v)) = self.synth.validate() {
            bad.extend(v.into_iter().map(|m| format!("synth.{m}")));
        }
        if let Err(m) = self.player.validate() {
            bad.push(format!("player: {m}"));
        }
        if self.rounds.is_empty() {
            bad.push("rounds: at least one round is required".into());
        }
        for (i, r) in self.rounds.iter().enumerate() {
            if !(r.duration > 0.0 && r.duration.is_finite()) {
                bad.push(format!(
                    "rounds[{i}].duration = {} (must be positive)",
                    r.duration
                ));
            }
        }
        if !self.mi_calibration_trials.is_multiple_of(2) {
            bad.push(format!(
                "mi_calibration_trials = {} (must be even, half per hand)",
                self.mi_calibration_trials
            ));
        }
        if self.mi_calibration_trials > 0 && !(self.mi_calibration_window >= 1.0) {
            bad.push(format!(
                "mi_calibration_window = {} (must hold at least one 1 s window)",
                self.mi_calibration_window
            ));
        }
        if self.mi_calibration_rest < 0.0 || self.minigame_gap < 0.0 {
            bad.push("mi_calibration_rest and minigame_gap must be >= 0".into());
        }
        if self.display_rate < 26 {
            bad.push(format!(
                "display_rate = {} (must be >= 26)",
                self.display_rate
            ));
        }
        if !(self.ssvep_flash_duration >= 2.0) {
            bad.push(format!(
                "ssvep_flash_duration = {} (must be >= 2 s for the spectral analysis)",
                self.ssvep_flash_duration
            ));
        }
        if !(self.link_delay >= 0.0 && self.link_jitter >= 0.0) {
            bad.push("link_delay and link_jitter must be >= 0".into());
        }
        if !(self.sync_interval > 0.0) || self.sync_burst < 3 {
            bad.push("sync_interval must be > 0 and sync_burst >= 3".into());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(SessionError::Config(bad))
        }
    }
}
