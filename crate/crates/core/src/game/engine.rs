use serde::{Deserialize, Serialize};

use super::board::Pos;
use super::state::{
    shot_clock_update, AttackOutcome, BarrelEffect, CheatOutcome, EndReason, GameState, ModeStatus,
    MoveKind, PowerUps, SwapCommand,
};
use super::{GameConfig, GameError, GameMode, PowerUp};

/// Everything that can change the game. Timestamps are host nanoseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "cmd", rename_all = "snake_case")]
pub enum GameCommand {
    Swap(SwapCommand),
    /// The shot clock ran out before the player moved.
    Timeout {
        at_ns: i64,
    },
    CheatReport {
        at_ns: i64,
    },
    /// Advances the game clock without a move (time-limited modes).
    Tick {
        at_ns: i64,
    },
    MinigameComplete {
        at_ns: i64,
        powerups: Vec<PowerUp>,
        barrel: Option<BarrelEffect>,
    },
}

impl GameCommand {
    pub fn at_ns(&self) -> i64 {
        match self {
            GameCommand::Swap(s) => s.issued_at,
            GameCommand::Timeout { at_ns }
            | GameCommand::CheatReport { at_ns }
            | GameCommand::Tick { at_ns }
            | GameCommand::MinigameComplete { at_ns, .. } => *at_ns,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GameEvent {
    Move {
        t_ns: i64,
        a: Pos,
        b: Pos,
        valid: bool,
        injected: bool,
        substituted: Option<(Pos, Pos)>,
        cascades: usize,
        points: u32,
        damage: u32,
        shot_clock: f64,
    },
    /// A valid move was replaced by a no-match swap.
    Injection {
        t_ns: i64,
        intended: (Pos, Pos),
    },
    Timeout {
        t_ns: i64,
        shot_clock: f64,
    },
    CheatReport {
        t_ns: i64,
        confirmed: bool,
        injection_t_ns: Option<i64>,
        points: u32,
        damage: u32,
        awarded: Vec<PowerUp>,
    },
    Attack {
        t_ns: i64,
        outcome: AttackOutcome,
    },
    MinigameDue {
        t_ns: i64,
    },
    MinigameComplete {
        t_ns: i64,
        awarded: Vec<PowerUp>,
        damage: u32,
        healed: u32,
    },
    ModeEnd {
        t_ns: i64,
        reason: EndReason,
    },
}

impl GameEvent {
    pub fn t_ns(&self) -> i64 {
        match self {
            GameEvent::Move { t_ns, .. }
            | GameEvent::Injection { t_ns, .. }
            | GameEvent::Timeout { t_ns, .. }
            | GameEvent::CheatReport { t_ns, .. }
            | GameEvent::Attack { t_ns, .. }
            | GameEvent::MinigameDue { t_ns }
            | GameEvent::MinigameComplete { t_ns, .. }
            | GameEvent::ModeEnd { t_ns, .. } => *t_ns,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            GameEvent::Move { .. } => "move",
            GameEvent::Injection { .. } => "injection",
            GameEvent::Timeout { .. } => "timeout",
            GameEvent::CheatReport { .. } => "cheat_report",
            GameEvent::Attack { .. } => "attack",
            GameEvent::MinigameDue { .. } => "minigame_due",
            GameEvent::MinigameComplete { .. } => "minigame_complete",
            GameEvent::ModeEnd { .. } => "mode_end",
        }
    }
}

/// Single owner of a [`GameState`]. Commands are applied strictly in
/// submission order, so a seed plus a command list replays exactly.
#[derive(Debug, Clone)]
pub struct GameEngine {
    state: GameState,
    log: Vec<GameEvent>,
    ended: Option<EndReason>,
}

impl GameEngine {
    pub fn new(
        config: GameConfig,
        mode: GameMode,
        seed: u64,
        started_at: i64,
    ) -> Result<Self, GameError> {
        Ok(Self {
            state: GameState::new(config, mode, seed, started_at)?,
            log: Vec::new(),
            ended: None,
        })
    }

    pub fn state(&self) -> &GameState {
        &self.state
    }

    pub fn events(&self) -> &[GameEvent] {
        &self.log
    }

    pub fn ended(&self) -> Option<EndReason> {
        self.ended
    }

    pub fn powerups(&self) -> PowerUps {
        self.state.powerups
    }

    /// Applies one command and returns the events it produced.
    pub fn submit(&mut self, cmd: GameCommand) -> Result<Vec<GameEvent>, GameError> {
        if let Some(reason) = self.ended {
            return Err(GameError::GameOver(reason));
        }
        let t = cmd.at_ns();
        let mut out = Vec::new();
        match cmd {
            GameCommand::Swap(swap) => {
                let res = self.state.apply_swap_and_resolve(swap)?;
                self.state.advance_clock(t);
                self.state.moves_made += 1;
                if res.valid && !res.injected {
                    self.state.count_match();
                }
                self.state.shot_clock =
                    shot_clock_update(self.state.shot_clock, res.valid, &self.state.config);
                out.push(GameEvent::Move {
                    t_ns: t,
                    a: swap.a,
                    b: swap.b,
                    valid: res.valid,
                    injected: res.injected,
                    substituted: res.substituted,
                    cascades: res.cascade_levels.len(),
                    points: res.points,
                    damage: res.damage,
                    shot_clock: self.state.shot_clock,
                });
                if res.injected {
                    out.push(GameEvent::Injection {
                        t_ns: t,
                        intended: (swap.a, swap.b),
                    });
                }
                let kind = if res.valid {
                    MoveKind::Valid
                } else {
                    MoveKind::Invalid
                };
                self.push_attack(t, kind, &mut out);
                if self.state.minigame_pending && res.valid && !res.injected {
                    out.push(GameEvent::MinigameDue { t_ns: t });
                }
            }
            GameCommand::Timeout { .. } => {
                if self.state.minigame_pending {
                    return Err(GameError::MinigameActive);
                }
                self.state.advance_clock(t);
                self.state.moves_made += 1;
                self.state.attack_suppressed = true;
                self.state.shot_clock =
                    shot_clock_update(self.state.shot_clock, false, &self.state.config);
                out.push(GameEvent::Timeout {
                    t_ns: t,
                    shot_clock: self.state.shot_clock,
                });
                self.push_attack(t, MoveKind::TimedOut, &mut out);
            }
            GameCommand::CheatReport { .. } => {
                self.state.advance_clock(t);
                let was_pending = self.state.minigame_pending;
                match self.state.handle_cheat_report() {
                    CheatOutcome::Executed {
                        injection_at,
                        resolution,
                        awarded,
                    } => {
                        if resolution.valid && !was_pending {
                            self.state.count_match();
                        }
                        out.push(GameEvent::CheatReport {
                            t_ns: t,
                            confirmed: true,
                            injection_t_ns: Some(injection_at),
                            points: resolution.points,
                            damage: resolution.damage,
                            awarded,
                        });
                        if self.state.minigame_pending && !was_pending {
                            out.push(GameEvent::MinigameDue { t_ns: t });
                        }
                    }
                    CheatOutcome::FalseReport => out.push(GameEvent::CheatReport {
                        t_ns: t,
                        confirmed: false,
                        injection_t_ns: None,
                        points: 0,
                        damage: 0,
                        awarded: Vec::new(),
                    }),
                }
            }
            GameCommand::Tick { .. } => self.state.advance_clock(t),
            GameCommand::MinigameComplete {
                powerups, barrel, ..
            } => {
                self.state.advance_clock(t);
                let (damage, healed) = self.state.complete_minigame(&powerups, barrel);
                out.push(GameEvent::MinigameComplete {
                    t_ns: t,
                    awarded: powerups,
                    damage,
                    healed,
                });
            }
        }
        if let ModeStatus::End(reason) = self.state.mode_status() {
            self.ended = Some(reason);
            out.push(GameEvent::ModeEnd { t_ns: t, reason });
        }
        self.log.extend(out.iter().cloned());
        Ok(out)
    }

    fn push_attack(&mut self, t: i64, kind: MoveKind, out: &mut Vec<GameEvent>) {
        let outcome = self.state.advance_enemy(kind);
        if outcome != AttackOutcome::NoAttack {
            out.push(GameEvent::Attack { t_ns: t, outcome });
        }
    }
}
