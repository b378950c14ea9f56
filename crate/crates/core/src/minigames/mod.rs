//! Stimulus generation and scoring for the mini-games, plus the balanced
//! scheduler that picks which one comes next.

mod bag;
mod motor;
mod nback;
mod rsvp;
mod scheduler;
mod ssvep;

pub use bag::ShuffledBag;
pub use motor::{
    build_mi_trial, evaluate_mi_trial, ExecutionMode, MiOutcome, MiTrial, MiVerdicts,
    ModeAlternator,
};
pub use nback::{
    build_nback_sequence, score_nback, NBackTrial, NBACK_HIT_WINDOW, NBACK_LENGTH, NBACK_TARGETS,
};
pub use rsvp::{build_rsvp_sequence, score_rsvp, RsvpConfig, RSVP_WINDOW};
pub use scheduler::{MinigameKind, MinigameScheduler, Selection};
pub use ssvep::{score_ssvep, toggle_schedule, SsvepGenerator, SsvepTrial, SSVEP_FREQUENCIES};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::PowerUp;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MinigameError {
    #[error("{targets} targets with minimum gap {gap} do not fit in {length} items")]
    Infeasible {
        targets: usize,
        length: usize,
        gap: usize,
    },
    #[error("invalid mini-game parameter: {0}")]
    Config(String),
    #[error("expected {expected} window verdicts, got {got}")]
    VerdictCount { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialKind {
    Rsvp,
    Ssvep,
    Mi,
    Me,
    Nback,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", content = "id", rename_all = "snake_case")]
pub enum Stimulus {
    Gem(u8),
    PowerUp(PowerUp),
    /// One of the four SSVEP boxes.
    Box(u8),
    /// The MI/ME barrel with its direction arrow.
    Barrel(Side),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StimulusItem {
    /// Seconds from trial start.
    pub onset: f64,
    pub stimulus: Stimulus,
    pub is_target: bool,
    pub side: Option<Side>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StimulusSchedule {
    pub items: Vec<StimulusItem>,
    pub soa: f64,
    pub trial_kind: TrialKind,
}

impl StimulusSchedule {
    pub fn target_count(&self) -> usize {
        self.items.iter().filter(|i| i.is_target).count()
    }

    pub fn target_indices(&self) -> Vec<usize> {
        (0..self.items.len())
            .filter(|&i| self.items[i].is_target)
            .collect()
    }

    /// Fixed-rate schedules: onset i is exactly `i * soa`.
    pub fn is_fixed_rate(&self) -> bool {
        self.items
            .iter()
            .enumerate()
            .all(|(i, it)| it.onset == i as f64 * self.soa)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskScore {
    pub hits: u32,
    pub misses: u32,
    pub false_alarms: u32,
    /// Mean response time over hits, seconds.
    pub mean_rt: Option<f64>,
    pub powerups: Vec<PowerUp>,
    /// Schedule indices of the targets that were hit.
    pub hit_targets: Vec<usize>,
}

impl TaskScore {
    pub fn hit_rate(&self) -> f64 {
        let n = self.hits + self.misses;
        if n == 0 {
            0.0
        } else {
            self.hits as f64 / n as f64
        }
    }
}

/// Power-ups for detection tasks: two for a hit rate of at least 0.8 with at
/// most one false alarm, one for at least 0.5 with at most three.
pub fn detection_reward(hits: u32, targets: u32, false_alarms: u32) -> u32 {
    let rate = if targets == 0 {
        1.0
    } else {
        hits as f64 / targets as f64
    };
    if rate >= 0.8 && false_alarms <= 1 {
        2
    } else if rate >= 0.5 && false_alarms <= 3 {
        1
    } else {
        0
    }
}

/// Greedy matching of sorted response times to target windows
/// `(onset + lo, onset + hi]`. Each target claims at most one response; the
/// earliest open window wins, which is optimal for equal-length windows.
/// Returns (hit target indices with their response times, false alarms).
pub(crate) fn match_responses<F>(
    targets: &[(usize, f64)],
    responses: &[f64],
    lo: f64,
    hi: f64,
    mut eligible: F,
) -> (Vec<(usize, f64)>, u32)
where
    F: FnMut(usize, usize) -> bool,
{
    let mut order: Vec<usize> = (0..responses.len()).collect();
    order.sort_by(|&a, &b| responses[a].total_cmp(&responses[b]));
    let mut claimed = vec![false; targets.len()];
    let mut hits = Vec::new();
    let mut fa = 0;
    for ri in order {
        let t = responses[ri];
        let slot = (0..targets.len()).find(|&k| {
            let onset = targets[k].1;
            !claimed[k] && t > onset + lo && t <= onset + hi && eligible(k, ri)
        });
        match slot {
            Some(k) => {
                claimed[k] = true;
                hits.push((targets[k].0, t - targets[k].1));
            }
            None => fa += 1,
        }
    }
    hits.sort_by_key(|h| h.0);
    (hits, fa)
}

pub(crate) fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}
