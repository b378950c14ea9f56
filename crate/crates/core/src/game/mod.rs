//! Deterministic match-three engine.
//!
//! The board, the per-move damage/score economy, the enemy attack cadence,
//! move substitution for error-potential elicitation, power-up effects and the
//! four play modes all live here. Every mutation goes through
//! [`GameEngine::submit`], which serializes commands and emits an event log.

mod board;
mod engine;
mod state;

pub use board::{Board, MatchSet, Pos};
pub use engine::{GameCommand, GameEngine, GameEvent};
pub use state::{
    error_injection_decision, score_resolution, shot_clock_update, AttackOutcome, BarrelEffect,
    CheatOutcome, EndReason, GameState, ModeStatus, MoveKind, PowerUps, SwapCommand,
    SwapResolution,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GameError {
    #[error("invalid game configuration: {}", .0.join("; "))]
    Config(Vec<String>),
    #[error("cell ({row}, {col}) is outside the {rows}x{cols} board")]
    OutOfBounds {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },
    #[error("swap must involve two distinct cells")]
    SameCell,
    #[error("a mini-game is active; board commands are rejected until it completes")]
    MinigameActive,
    #[error("the game has ended ({0:?})")]
    GameOver(EndReason),
}

/// The four play modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GameMode {
    Normal,
    TimeLimited,
    MoveLimited,
    ShotClock,
}

/// Power-ups earned in mini-games.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerUp {
    Attack,
    Defense,
    Agility,
    Vitality,
}

impl PowerUp {
    pub const ALL: [PowerUp; 4] = [
        PowerUp::Attack,
        PowerUp::Defense,
        PowerUp::Agility,
        PowerUp::Vitality,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GameConfig {
    pub board_rows: usize,
    pub board_cols: usize,
    pub gem_kinds: u8,
    pub player_hp: u32,
    pub enemy_hp: u32,
    /// Moves between enemy attacks.
    pub enemy_attack_period: u32,
    pub enemy_attack_damage: u32,
    /// Valid player matches between mini-games.
    pub minigame_period: u32,
    pub errp_probability: f64,
    pub shot_clock_start: f64,
    pub shot_clock_step: f64,
    pub shot_clock_floor: f64,
    /// Round length of the time-limited mode, seconds.
    pub mode_round_duration: f64,
    pub shot_clock_round_duration: f64,
    /// Swap budget of the move-limited mode.
    pub move_limit: u32,
}

impl Default for GameConfig {
    fn default() -> Self {
        Self {
            board_rows: 8,
            board_cols: 8,
            gem_kinds: 7,
            player_hp: 100,
            enemy_hp: 100,
            enemy_attack_period: 8,
            enemy_attack_damage: 10,
            minigame_period: 5,
            errp_probability: 0.15,
            shot_clock_start: 3.0,
            shot_clock_step: 0.1,
            shot_clock_floor: 0.3,
            mode_round_duration: 900.0,
            shot_clock_round_duration: 300.0,
            move_limit: 100,
        }
    }
}

impl GameConfig {
    /// Checks every invariant and reports all offending fields at once.
    pub fn validate(&self) -> Result<(), GameError> {
        let mut bad = Vec::new();
        if self.board_rows < 3 {
            bad.push(format!("board_rows = {} (must be >= 3)", self.board_rows));
        }
        if self.board_cols < 3 {
            bad.push(format!("board_cols = {} (must be >= 3)", self.board_cols));
        }
        if self.gem_kinds < 4 || self.gem_kinds == u8::MAX {
            bad.push(format!(
                "gem_kinds = {} (must be in [4, 254])",
                self.gem_kinds
            ));
        }
        if !(0.0..=1.0).contains(&self.errp_probability) {
            bad.push(format!(
                "errp_probability = {} (must be in [0, 1])",
                self.errp_probability
            ));
        }
        if !(self.shot_clock_floor > 0.0 && self.shot_clock_floor < self.shot_clock_start) {
            bad.push(format!(
                "shot_clock_floor = {} (must be positive and below shot_clock_start = {})",
                self.shot_clock_floor, self.shot_clock_start
            ));
        }
        if self.shot_clock_step <= 0.0 {
            bad.push(format!(
                "shot_clock_step = {} (must be > 0)",
                self.shot_clock_step
            ));
        }
        if self.enemy_attack_period == 0 {
            bad.push("enemy_attack_period = 0 (must be >= 1)".into());
        }
        if self.minigame_period == 0 {
            bad.push("minigame_period = 0 (must be >= 1)".into());
        }
        if self.player_hp == 0 || self.enemy_hp == 0 {
            bad.push("player_hp and enemy_hp must be positive".into());
        }
        if self.mode_round_duration <= 0.0 || self.shot_clock_round_duration <= 0.0 {
            bad.push("round durations must be positive".into());
        }
        if self.move_limit == 0 {
            bad.push("move_limit = 0 (must be >= 1)".into());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(GameError::Config(bad))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        GameConfig::default().validate().unwrap();
    }

    #[test]
    fn validation_lists_every_offending_field() {
        let cfg = GameConfig {
            board_rows: 2,
            gem_kinds: 3,
            errp_probability: 1.5,
            shot_clock_floor: 4.0,
            ..GameConfig::default()
        };
        match cfg.validate() {
            Err(GameError::Config(fields)) => assert_eq!(fields.len(), 4, "{fields:?}"),
            other => panic!("expected config error, got {other:?}"),
        }
    }
}
