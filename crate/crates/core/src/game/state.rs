use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::board::{Board, MatchSet, Pos};
use super::{GameConfig, GameError, GameMode, PowerUp};

/// Points per removed gem beyond the second, per cascade level.
const POINTS_PER_EXTRA_GEM: u32 = 25;
const DAMAGE_PER_EXTRA_GEM: u32 = 5;
/// Moves removed from the mini-game countdown by a Vitality power-up.
const VITALITY_MOVES: u32 = 2;
/// Power-ups awarded for a confirmed cheat report.
const CHEAT_REWARD: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwapCommand {
    pub a: Pos,
    pub b: Pos,
    /// Host monotonic time in nanoseconds.
    pub issued_at: i64,
}

impl SwapCommand {
    pub fn new(a: Pos, b: Pos, issued_at: i64) -> Self {
        Self { a, b, issued_at }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwapResolution {
    pub valid: bool,
    /// The intended move was replaced by `substituted` and not executed.
    pub injected: bool,
    pub substituted: Option<(Pos, Pos)>,
    pub cascade_levels: Vec<Vec<MatchSet>>,
    pub refilled: bool,
    pub points: u32,
    /// Damage actually taken off the enemy.
    pub damage: u32,
}

impl SwapResolution {
    fn invalid() -> Self {
        Self {
            valid: false,
            injected: false,
            substituted: None,
            cascade_levels: Vec::new(),
            refilled: false,
            points: 0,
            damage: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PowerUps {
    pub attack: u32,
    pub defense: u32,
    pub agility: u32,
    pub vitality: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MoveKind {
    Valid,
    Invalid,
    TimedOut,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum AttackOutcome {
    NoAttack,
    Dodged,
    Hit { damage: u32, defended: bool },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum CheatOutcome {
    Executed {
        injection_at: i64,
        resolution: SwapResolution,
        awarded: Vec<PowerUp>,
    },
    FalseReport,
}

/// Outcome of a passed motor task: the barrel rolls toward one robot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "effect", content = "amount", rename_all = "snake_case")]
pub enum BarrelEffect {
    HealPlayer(u32),
    DamageEnemy(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndReason {
    PlayerDefeated,
    EnemyDefeated,
    TimeUp,
    MovesExhausted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeStatus {
    Continue,
    End(EndReason),
}

/// Complete game situation. Mutated only through the engine's command queue.
#[derive(Debug, Clone, PartialEq)]
pub struct GameState {
    pub config: GameConfig,
    pub board: Board,
    pub mode: GameMode,
    pub player_hp: u32,
    pub enemy_hp: u32,
    pub moves_made: u32,
    pub moves_until_attack: u32,
    pub moves_until_minigame: u32,
    pub powerups: PowerUps,
    pub powerups_collected: u32,
    pub pending_attack_buff: bool,
    pub last_move_injected: bool,
    pub pending_injected_swap: Option<SwapCommand>,
    /// Blocks injection on the valid move right after one, even when a cheat
    /// report has already consumed the pending swap.
    pub injection_cooldown: bool,
    /// Set by a shot-clock timeout: the next damaging move deals nothing.
    pub attack_suppressed: bool,
    pub minigame_pending: bool,
    pub false_reports: u32,
    pub shot_clock: f64,
    pub score: u64,
    pub damage_dealt: u64,
    pub started_at: i64,
    pub elapsed: f64,
    rng: ChaCha8Rng,
}

impl GameState {
    pub fn new(
        config: GameConfig,
        mode: GameMode,
        seed: u64,
        started_at: i64,
    ) -> Result<Self, GameError> {
        let board = Board::new(&config, seed)?;
        Ok(Self {
            player_hp: config.player_hp,
            enemy_hp: config.enemy_hp,
            moves_until_attack: config.enemy_attack_period,
            moves_until_minigame: config.minigame_period,
            shot_clock: config.shot_clock_start,
            config,
            board,
            mode,
            moves_made: 0,
            powerups: PowerUps::default(),
            powerups_collected: 0,
            pending_attack_buff: false,
            last_move_injected: false,
            pending_injected_swap: None,
            injection_cooldown: false,
            attack_suppressed: false,
            minigame_pending: false,
            false_reports: 0,
            score: 0,
            damage_dealt: 0,
            started_at,
            elapsed: 0.0,
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x9E37_79B9_7F4A_7C15),
        })
    }

    /// Whether the next valid move may be substituted.
    pub fn injection_eligible(&self) -> bool {
        !(self.last_move_injected || self.injection_cooldown)
    }

    pub(crate) fn advance_clock(&mut self, at: i64) {
        let t = (at - self.started_at) as f64 * 1e-9;
        if t > self.elapsed {
            self.elapsed = t;
        }
    }

    fn check_cmd(&self, cmd: &SwapCommand) -> Result<(), GameError> {
        for p in [cmd.a, cmd.b] {
            if !self.board.contains(p) {
                return Err(GameError::OutOfBounds {
                    row: p.row,
                    col: p.col,
                    rows: self.board.rows(),
                    cols: self.board.cols(),
                });
            }
        }
        if cmd.a == cmd.b {
            return Err(GameError::SameCell);
        }
        Ok(())
    }

    /// Applies a player swap. Invalid swaps leave the board untouched; valid
    /// ones either cascade or, when injection fires, are replaced by a
    /// uniformly chosen no-match swap and parked for a cheat report.
    pub fn apply_swap_and_resolve(
        &mut self,
        cmd: SwapCommand,
    ) -> Result<SwapResolution, GameError> {
        self.check_cmd(&cmd)?;
        if self.minigame_pending {
            return Err(GameError::MinigameActive);
        }
        if !self.board.forms_match(cmd.a, cmd.b) {
            return Ok(SwapResolution::invalid());
        }
        let mut rng = self.rng.clone();
        let inject = error_injection_decision(self, &mut rng);
        let substituted = if inject {
            let candidates = self.board.invalid_swaps();
            if candidates.is_empty() {
                None
            } else {
                Some(candidates[rng.random_range(0..candidates.len())])
            }
        } else {
            None
        };
        self.rng = rng;

        if let Some(sub) = substituted {
            self.last_move_injected = true;
            self.pending_injected_swap = Some(cmd);
            self.injection_cooldown = true;
            return Ok(SwapResolution {
                valid: true,
                injected: true,
                substituted: Some(sub),
                cascade_levels: Vec::new(),
                refilled: false,
                points: 0,
                damage: 0,
            });
        }

        self.last_move_injected = false;
        self.pending_injected_swap = None;
        self.injection_cooldown = false;
        Ok(self.execute(cmd))
    }

    fn execute(&mut self, cmd: SwapCommand) -> SwapResolution {
        self.board.swap(cmd.a, cmd.b);
        let levels = self.board.resolve_cascades();
        if !self.board.has_valid_swap() {
            self.board.reshuffle();
        }

        let (points, damage) = if self.attack_suppressed {
            self.attack_suppressed = false;
            (score_resolution(&levels, false).0, 0)
        } else {
            if !self.pending_attack_buff && self.powerups.attack > 0 {
                self.powerups.attack -= 1;
                self.pending_attack_buff = true;
            }
            let scored = score_resolution(&levels, self.pending_attack_buff);
            self.pending_attack_buff = false;
            scored
        };
        let applied = damage.min(self.enemy_hp);
        self.enemy_hp -= applied;
        self.damage_dealt += applied as u64;
        self.score += points as u64;
        SwapResolution {
            valid: true,
            injected: false,
            substituted: None,
            refilled: !levels.is_empty(),
            cascade_levels: levels,
            points,
            damage: applied,
        }
    }

    /// Executes the parked intended move (never substituted a second time)
    /// and awards two random power-ups. Without a parked move the report is
    /// logged as false and nothing else changes.
    pub fn handle_cheat_report(&mut self) -> CheatOutcome {
        let Some(cmd) = self.pending_injected_swap.take() else {
            self.false_reports += 1;
            return CheatOutcome::FalseReport;
        };
        self.last_move_injected = false;
        let resolution = if self.board.forms_match(cmd.a, cmd.b) {
            self.execute(cmd)
        } else {
            SwapResolution::invalid()
        };
        let awarded: Vec<PowerUp> = (0..CHEAT_REWARD)
            .map(|_| PowerUp::ALL[self.rng.random_range(0..PowerUp::ALL.len())])
            .collect();
        self.award_powerups(&awarded);
        CheatOutcome::Executed {
            injection_at: cmd.issued_at,
            resolution,
            awarded,
        }
    }

    /// Adds power-ups to the inventory. Vitality takes effect immediately.
    pub fn award_powerups(&mut self, kinds: &[PowerUp]) {
        for &k in kinds {
            self.powerups_collected += 1;
            match k {
                PowerUp::Attack => self.powerups.attack += 1,
                PowerUp::Defense => self.powerups.defense += 1,
                PowerUp::Agility => self.powerups.agility += 1,
                PowerUp::Vitality => {
                    self.moves_until_minigame = self
                        .moves_until_minigame
                        .saturating_sub(VITALITY_MOVES)
                        .max(1);
                }
            }
        }
    }

    /// Counts down to the next enemy attack. Invalid swaps count double.
    /// Agility dodges outright; otherwise one Defense halves the hit.
    pub fn advance_enemy(&mut self, kind: MoveKind) -> AttackOutcome {
        let step = if kind == MoveKind::Invalid { 2 } else { 1 };
        self.moves_until_attack = self.moves_until_attack.saturating_sub(step);
        if self.moves_until_attack > 0 {
            return AttackOutcome::NoAttack;
        }
        self.moves_until_attack = self.config.enemy_attack_period;
        if self.powerups.agility > 0 {
            self.powerups.agility -= 1;
            return AttackOutcome::Dodged;
        }
        let mut damage = self.config.enemy_attack_damage;
        let defended = self.powerups.defense > 0;
        if defended {
            self.powerups.defense -= 1;
            damage /= 2;
        }
        let applied = damage.min(self.player_hp);
        self.player_hp -= applied;
        AttackOutcome::Hit {
            damage: applied,
            defended,
        }
    }

    /// Counts a valid player match toward the next mini-game.
    pub(crate) fn count_match(&mut self) {
        self.moves_until_minigame = self.moves_until_minigame.saturating_sub(1);
        if self.moves_until_minigame == 0 {
            self.minigame_pending = true;
        }
    }

    /// Closes an active mini-game: applies awards and the barrel effect and
    /// restarts the countdown. Returns (damage dealt, hp healed).
    pub fn complete_minigame(
        &mut self,
        awarded: &[PowerUp],
        barrel: Option<BarrelEffect>,
    ) -> (u32, u32) {
        self.minigame_pending = false;
        self.moves_until_minigame = self.config.minigame_period;
        self.award_powerups(awarded);
        match barrel {
            Some(BarrelEffect::DamageEnemy(d)) => {
                let applied = d.min(self.enemy_hp);
                self.enemy_hp -= applied;
                self.damage_dealt += applied as u64;
                (applied, 0)
            }
            Some(BarrelEffect::HealPlayer(h)) => {
                let healed = h.min(self.config.player_hp - self.player_hp);
                self.player_hp += healed;
                (0, healed)
            }
            None => (0, 0),
        }
    }

    /// Terminal check. Defeat of either robot ends every mode; otherwise the
    /// mode's own limit applies.
    pub fn mode_status(&self) -> ModeStatus {
        if self.enemy_hp == 0 {
            return ModeStatus::End(EndReason::EnemyDefeated);
        }
        if self.player_hp == 0 {
            return ModeStatus::End(EndReason::PlayerDefeated);
        }
        match self.mode {
            GameMode::Normal => ModeStatus::Continue,
            GameMode::TimeLimited if self.elapsed >= self.config.mode_round_duration => {
                ModeStatus::End(EndReason::TimeUp)
            }
            GameMode::ShotClock if self.elapsed >= self.config.shot_clock_round_duration => {
                ModeStatus::End(EndReason::TimeUp)
            }
            GameMode::MoveLimited if self.moves_made >= self.config.move_limit => {
                ModeStatus::End(EndReason::MovesExhausted)
            }
            _ => ModeStatus::Continue,
        }
    }
}

/// Points and damage for a cascade: each set of size `n` at 1-based level
/// `l` is worth `25 (n-2) l` points and `5 (n-2) l` damage. An armed Attack
/// buff multiplies the damage by 1.5, rounded down.
pub fn score_resolution(levels: &[Vec<MatchSet>], attack_buff: bool) -> (u32, u32) {
    let weight: u32 = levels
        .iter()
        .enumerate()
        .map(|(i, sets)| {
            let level = i as u32 + 1;
            sets.iter()
                .map(|s| (s.len() as u32).saturating_sub(2) * level)
                .sum::<u32>()
        })
        .sum();
    let points = POINTS_PER_EXTRA_GEM * weight;
    let mut damage = DAMAGE_PER_EXTRA_GEM * weight;
    if attack_buff {
        damage = damage * 3 / 2;
    }
    (points, damage)
}

/// Draws whether a valid move gets substituted. Never fires on the move
/// right after a substitution; does not consume randomness in that case.
pub fn error_injection_decision<R: Rng + ?Sized>(state: &GameState, rng: &mut R) -> bool {
    if !state.injection_eligible() {
        return false;
    }
    rng.random_bool(state.config.errp_probability)
}

/// Adaptive per-move time limit: one step shorter after a success, one step
/// longer after a failure, clamped to `[floor, start]`. Arithmetic is done in
/// whole milliseconds so repeated steps stay exact.
pub fn shot_clock_update(clock: f64, success: bool, config: &GameConfig) -> f64 {
    let ms = |s: f64| (s * 1000.0).round() as i64;
    let step = ms(config.shot_clock_step);
    let next = ms(clock) + if success { -step } else { step };
    next.clamp(ms(config.shot_clock_floor), ms(config.shot_clock_start)) as f64 / 1000.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state() -> GameState {
        GameState::new(GameConfig::default(), GameMode::Normal, 7, 0).unwrap()
    }

    fn set(n: usize) -> MatchSet {
        (0..n).map(|c| Pos::new(0, c)).collect()
    }

    fn fixture_state(cells: Vec<u8>, seed: u64) -> GameState {
        let mut s = state();
        s.board = Board::from_cells(4, 4, 9, cells, seed).unwrap();
        s.config.errp_probability = 0.0;
        s
    }

    #[test]
    fn single_three_set_scores_base_case() {
        assert_eq!(score_resolution(&[vec![set(3)]], false), (25, 5));
    }

    #[test]
    fn four_set_then_cascade_three_set() {
        // 25*2*1 + 25*1*2 = 100 points; 5*2*1 + 5*1*2 = 20 damage
        assert_eq!(
            score_resolution(&[vec![set(4)], vec![set(3)]], false),
            (100, 20)
        );
    }

    #[test]
    fn attack_buff_rounds_down() {
        assert_eq!(score_resolution(&[vec![set(3)]], true), (25, 7));
    }

    #[test]
    fn swap_completing_one_run_resolves_single_level() {
        #[rustfmt::skip]
        let mut s = fixture_state(vec![
            1, 2, 3, 4,
            5, 6, 7, 8,
            0, 0, 5, 1,
            2, 3, 0, 4,
        ], 3);
        let res = s
            .apply_swap_and_resolve(SwapCommand::new(Pos::new(2, 2), Pos::new(3, 2), 0))
            .unwrap();
        assert!(res.valid && !res.injected);
        assert!(res.refilled);
        assert_eq!(res.cascade_levels[0].len(), 1);
        assert_eq!(
            res.cascade_levels[0][0],
            vec![Pos::new(2, 0), Pos::new(2, 1), Pos::new(2, 2)]
        );
        assert!(s.board.find_matches().is_empty());
    }

    #[test]
    fn gravity_created_match_is_a_second_level() {
        #[rustfmt::skip]
        let mut s = fixture_state(vec![
            1, 4, 3, 6,
            2, 5, 5, 7,
            0, 0, 3, 5,
            8, 6, 0, 4,
        ], 5);
        assert!(s.board.find_matches().is_empty());
        // row 2 becomes 0 0 0 and is removed; the 5s of row 1 fall next to
        // the 5 at (2, 3)
        let res = s
            .apply_swap_and_resolve(SwapCommand::new(Pos::new(2, 2), Pos::new(3, 2), 0))
            .unwrap();
        assert_eq!(
            res.cascade_levels[0],
            vec![vec![Pos::new(2, 0), Pos::new(2, 1), Pos::new(2, 2)]]
        );
        assert!(res.cascade_levels.len() >= 2);
        assert!(res.cascade_levels[1].iter().any(|m| [
            Pos::new(2, 1),
            Pos::new(2, 2),
            Pos::new(2, 3)
        ]
        .iter()
        .all(|p| m.contains(p))));
        assert_eq!(
            (res.points, res.damage),
            score_resolution(&res.cascade_levels, false)
        );
        assert!(res.points >= 25 + 25 * 2);
    }

    #[test]
    fn swapping_identical_kinds_is_invalid() {
        let mut s = state();
        let b = s.board.clone();
        let cells = b.cells();
        let (i, j) = (0..cells.len())
            .flat_map(|i| (i + 1..cells.len()).map(move |j| (i, j)))
            .find(|&(i, j)| cells[i] == cells[j])
            .unwrap();
        let cols = b.cols();
        let cmd = SwapCommand::new(
            Pos::new(i / cols, i % cols),
            Pos::new(j / cols, j % cols),
            0,
        );
        let res = s.apply_swap_and_resolve(cmd).unwrap();
        assert!(!res.valid);
        assert_eq!(s.board, b);
    }

    #[test]
    fn out_of_bounds_and_same_cell_rejected() {
        let mut s = state();
        assert!(matches!(
            s.apply_swap_and_resolve(SwapCommand::new(Pos::new(0, 0), Pos::new(8, 0), 0)),
            Err(GameError::OutOfBounds { .. })
        ));
        assert_eq!(
            s.apply_swap_and_resolve(SwapCommand::new(Pos::new(1, 1), Pos::new(1, 1), 0)),
            Err(GameError::SameCell)
        );
    }

    #[test]
    fn injection_blocked_after_injection() {
        let mut s = state();
        s.last_move_injected = true;
        s.config.errp_probability = 1.0;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(!error_injection_decision(&s, &mut rng));
        s.last_move_injected = false;
        assert!(error_injection_decision(&s, &mut rng));
        s.injection_cooldown = true;
        assert!(!error_injection_decision(&s, &mut rng));
    }

    #[test]
    fn zero_probability_never_injects() {
        let mut s = state();
        s.config.errp_probability = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!((0..10_000).all(|_| !error_injection_decision(&s, &mut rng)));
    }

    #[test]
    fn injection_rate_monte_carlo() {
        let s = state();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 100_000;
        let hits = (0..n)
            .filter(|_| error_injection_decision(&s, &mut rng))
            .count();
        let rate = hits as f64 / n as f64;
        assert!((0.145..=0.155).contains(&rate), "{rate}");
    }

    fn inject_once(s: &mut GameState) -> SwapCommand {
        s.config.errp_probability = 1.0;
        let (a, b) = s.board.valid_swaps()[0];
        let cmd = SwapCommand::new(a, b, 1_000);
        let res = s.apply_swap_and_resolve(cmd).unwrap();
        assert!(res.injected);
        assert_eq!((res.points, res.damage), (0, 0));
        let (sa, sb) = res.substituted.unwrap();
        assert!(!s.board.forms_match(sa, sb));
        cmd
    }

    #[test]
    fn cheat_report_executes_parked_move_and_awards_two() {
        let mut s = state();
        let board_before = s.board.clone();
        inject_once(&mut s);
        assert_eq!(s.board, board_before);
        assert!(s.last_move_injected && s.pending_injected_swap.is_some());
        let before = s.powerups_collected;
        match s.handle_cheat_report() {
            CheatOutcome::Executed {
                resolution,
                awarded,
                injection_at,
            } => {
                assert!(!resolution.cascade_levels.is_empty());
                assert_eq!(awarded.len(), 2);
                assert_eq!(injection_at, 1_000);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(s.powerups_collected, before + 2);
        assert!(!s.last_move_injected && s.pending_injected_swap.is_none());
    }

    #[test]
    fn cheat_report_without_injection_is_false_report() {
        let mut s = state();
        let before = s.clone();
        assert_eq!(s.handle_cheat_report(), CheatOutcome::FalseReport);
        assert_eq!(s.false_reports, 1);
        s.false_reports = 0;
        assert_eq!(s, before);
    }

    #[test]
    fn second_report_after_one_injection_is_false() {
        let mut s = state();
        inject_once(&mut s);
        assert!(matches!(
            s.handle_cheat_report(),
            CheatOutcome::Executed { .. }
        ));
        assert_eq!(s.handle_cheat_report(), CheatOutcome::FalseReport);
        assert_eq!(s.false_reports, 1);
    }

    #[test]
    fn no_injection_right_after_cheat_report() {
        let mut s = state();
        inject_once(&mut s);
        s.handle_cheat_report();
        let (a, b) = s.board.valid_swaps()[0];
        let res = s
            .apply_swap_and_resolve(SwapCommand::new(a, b, 2_000))
            .unwrap();
        assert!(!res.injected);
    }

    #[test]
    fn agility_dodges_attack() {
        let mut s = state();
        s.moves_until_attack = 1;
        s.powerups.agility = 1;
        s.powerups.defense = 1;
        assert_eq!(s.advance_enemy(MoveKind::Valid), AttackOutcome::Dodged);
        assert_eq!(s.powerups.agility, 0);
        assert_eq!(s.powerups.defense, 1);
        assert_eq!(s.player_hp, 100);
    }

    #[test]
    fn defense_halves_attack() {
        let mut s = state();
        s.moves_until_attack = 1;
        s.powerups.defense = 1;
        assert_eq!(
            s.advance_enemy(MoveKind::Valid),
            AttackOutcome::Hit {
                damage: 5,
                defended: true
            }
        );
        assert_eq!(s.player_hp, 95);
        assert_eq!(s.moves_until_attack, 8);
    }

    #[test]
    fn countdown_without_attack() {
        let mut s = state();
        s.moves_until_attack = 3;
        assert_eq!(s.advance_enemy(MoveKind::Valid), AttackOutcome::NoAttack);
        assert_eq!(s.moves_until_attack, 2);
    }

    #[test]
    fn invalid_move_accelerates_attack() {
        let mut s = state();
        s.moves_until_attack = 2;
        assert!(matches!(
            s.advance_enemy(MoveKind::Invalid),
            AttackOutcome::Hit { damage: 10, .. }
        ));
    }

    #[test]
    fn shot_clock_steps() {
        let cfg = GameConfig::default();
        assert_eq!(shot_clock_update(3.0, true, &cfg), 2.9);
        assert_eq!(shot_clock_update(0.3, true, &cfg), 0.3);
        assert_eq!(shot_clock_update(3.0, false, &cfg), 3.0);
        let mut c = 3.0;
        for i in 0..10 {
            c = shot_clock_update(c, i % 2 == 0, &cfg);
        }
        assert_eq!(c, 3.0);
    }

    #[test]
    fn mode_terminal_conditions() {
        let mut s = state();
        s.enemy_hp = 0;
        assert_eq!(s.mode_status(), ModeStatus::End(EndReason::EnemyDefeated));

        let mut t = GameState::new(GameConfig::default(), GameMode::TimeLimited, 1, 0).unwrap();
        t.elapsed = 900.0;
        assert_eq!(t.mode_status(), ModeStatus::End(EndReason::TimeUp));

        let mut m = GameState::new(GameConfig::default(), GameMode::MoveLimited, 1, 0).unwrap();
        m.moves_made = 99;
        assert_eq!(m.mode_status(), ModeStatus::Continue);
        m.moves_made = 100;
        assert_eq!(m.mode_status(), ModeStatus::End(EndReason::MovesExhausted));

        let mut sc = GameState::new(GameConfig::default(), GameMode::ShotClock, 1, 0).unwrap();
        sc.elapsed = 299.9;
        assert_eq!(sc.mode_status(), ModeStatus::Continue);
        sc.elapsed = 300.0;
        assert_eq!(sc.mode_status(), ModeStatus::End(EndReason::TimeUp));
    }

    #[test]
    fn vitality_shortens_minigame_countdown() {
        let mut s = state();
        s.award_powerups(&[PowerUp::Vitality]);
        assert_eq!(s.moves_until_minigame, 3);
        s.award_powerups(&[PowerUp::Vitality, PowerUp::Vitality]);
        assert_eq!(s.moves_until_minigame, 1);
    }

    #[test]
    fn attack_powerup_boosts_next_damage_once() {
        #[rustfmt::skip]
        let cells = vec![
            1, 2, 3, 4,
            5, 6, 7, 8,
            0, 0, 5, 1,
            2, 3, 0, 4,
        ];
        let mut s = fixture_state(cells, 3);
        s.powerups.attack = 1;
        let res = s
            .apply_swap_and_resolve(SwapCommand::new(Pos::new(2, 2), Pos::new(3, 2), 0))
            .unwrap();
        assert_eq!(res.cascade_levels.len(), 1);
        assert_eq!(res.damage, 7);
        assert_eq!(s.powerups.attack, 0);
        assert!(!s.pending_attack_buff);
    }
}
