use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    detection_reward, match_responses, mean, MinigameError, Side, Stimulus, StimulusItem,
    StimulusSchedule, TaskScore, TrialKind,
};
use crate::game::PowerUp;

/// Response window after a target onset, seconds, open at the low end.
pub const RSVP_WINDOW: (f64, f64) = (0.15, 1.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RsvpConfig {
    pub rate_hz: f64,
    pub target_ratio: f64,
    /// Minimum target-to-target interval, seconds.
    pub tti_min: f64,
    pub length: usize,
    pub coherence_level: u8,
    /// The two target power-ups and the grasp switch each maps to.
    pub target_kinds: [(PowerUp, Side); 2],
    /// Number of gem images used as non-targets.
    pub gem_kinds: u8,
}

impl Default for RsvpConfig {
    fn default() -> Self {
        Self {
            rate_hz: 5.0,
            target_ratio: 0.13,
            tti_min: 0.8,
            length: 48,
            coherence_level: 1,
            target_kinds: [
                (PowerUp::Attack, Side::Left),
                (PowerUp::Vitality, Side::Right),
            ],
            gem_kinds: 7,
        }
    }
}

impl RsvpConfig {
    /// Default parameters with two distinct target power-ups drawn at random,
    /// the first on the left switch.
    pub fn random_targets<R: Rng + ?Sized>(rng: &mut R, coherence_level: u8) -> Self {
        let picks = index::sample(rng, PowerUp::ALL.len(), 2);
        Self {
            coherence_level,
            target_kinds: [
                (PowerUp::ALL[picks.index(0)], Side::Left),
                (PowerUp::ALL[picks.index(1)], Side::Right),
            ],
            ..Self::default()
        }
    }

    pub fn soa(&self) -> f64 {
        1.0 / self.rate_hz
    }

    /// Minimum index distance between consecutive targets.
    pub fn min_gap(&self) -> usize {
        (self.tti_min * self.rate_hz).round() as usize
    }

    pub fn target_count(&self) -> usize {
        (self.target_ratio * self.length as f64).round() as usize
    }

    fn validate(&self) -> Result<(), MinigameError> {
        let err = |m: String| Err(MinigameError::Config(m));
        if self.length < 8 {
            return err(format!("length {} below 8", self.length));
        }
        if !(self.rate_hz > 0.0) {
            return err(format!("rate_hz {}", self.rate_hz));
        }
        if !(0.0..=1.0).contains(&self.target_ratio) {
            return err(format!("target_ratio {}", self.target_ratio));
        }
        if !(1..=4).contains(&self.coherence_level) {
            return err(format!("coherence_level {}", self.coherence_level));
        }
        let [(k0, s0), (k1, s1)] = self.target_kinds;
        if k0 == k1 || s0 == s1 {
            return err("target kinds and sides must be distinct".into());
        }
        if self.gem_kinds == 0 {
            return err("gem_kinds 0".into());
        }
        Ok(())
    }
}

/// Target positions with pairwise index distance >= `gap`, uniform over all
/// such placements: draw `k` distinct values from the compressed range
/// `len - (k-1)(gap-1)` and spread the i-th by `i (gap-1)`.
fn place_targets<R: Rng + ?Sized>(
    rng: &mut R,
    len: usize,
    k: usize,
    gap: usize,
) -> Result<Vec<usize>, MinigameError> {
    if k == 0 {
        return Ok(Vec::new());
    }
    let gap = gap.max(1);
    if len < (k - 1) * gap + 1 {
        return Err(MinigameError::Infeasible {
            targets: k,
            length: len,
            gap,
        });
    }
    let span = len - (k - 1) * (gap - 1);
    let mut picks = index::sample(rng, span, k).into_vec();
    picks.sort_unstable();
    Ok(picks
        .into_iter()
        .enumerate()
        .map(|(i, p)| p + i * (gap - 1))
        .collect())
}

pub fn build_rsvp_sequence<R: Rng + ?Sized>(
    config: &RsvpConfig,
    rng: &mut R,
) -> Result<StimulusSchedule, MinigameError> {
    config.validate()?;
    let k = config.target_count();
    let positions = place_targets(rng, config.length, k, config.min_gap())?;

    // split as evenly as possible, the odd one out going to a random kind
    let mut kinds: Vec<usize> = (0..k).map(|i| i % 2).collect();
    if k % 2 == 1 && rng.random_bool(0.5) {
        kinds[k - 1] = 1;
    }
    kinds.shuffle(rng);

    let soa = config.soa();
    let mut items = Vec::with_capacity(config.length);
    let mut next_target = 0;
    for i in 0..config.length {
        let onset = i as f64 * soa;
        if next_target < k && positions[next_target] == i {
            let (kind, side) = config.target_kinds[kinds[next_target]];
            items.push(StimulusItem {
                onset,
                stimulus: Stimulus::PowerUp(kind),
                is_target: true,
                side: Some(side),
            });
            next_target += 1;
        } else {
            items.push(StimulusItem {
                onset,
                stimulus: Stimulus::Gem(rng.random_range(0..config.gem_kinds)),
                is_target: false,
                side: None,
            });
        }
    }
    Ok(StimulusSchedule {
        items,
        soa,
        trial_kind: TrialKind::Rsvp,
    })
}

/// Scores grasp-switch responses `(time, side)` on the trial clock.
/// Power-up kinds are the two target kinds, left first.
pub fn score_rsvp(schedule: &StimulusSchedule, responses: &[(f64, Side)]) -> TaskScore {
    let targets: Vec<(usize, f64)> = schedule
        .items
        .iter()
        .enumerate()
        .filter(|(_, it)| it.is_target)
        .map(|(i, it)| (i, it.onset))
        .collect();
    let times: Vec<f64> = responses.iter().map(|r| r.0).collect();
    let (hits, fa) = match_responses(&targets, &times, RSVP_WINDOW.0, RSVP_WINDOW.1, |k, r| {
        schedule.items[targets[k].0].side == Some(responses[r].1)
    });
    let n_hits = hits.len() as u32;
    let reward = detection_reward(n_hits, targets.len() as u32, fa);

    let mut kinds: Vec<(Side, PowerUp)> = schedule
        .items
        .iter()
        .filter_map(|it| match (it.stimulus, it.side) {
            (Stimulus::PowerUp(p), Some(s)) if it.is_target => Some((s, p)),
            _ => None,
        })
        .collect();
    kinds.sort_by_key(|(s, _)| *s == Side::Right);
    kinds.dedup();
    TaskScore {
        hits: n_hits,
        misses: targets.len() as u32 - n_hits,
        false_alarms: fa,
        mean_rt: mean(hits.iter().map(|h| h.1)),
        powerups: kinds
            .iter()
            .map(|k| k.1)
            .cycle()
            .take(reward as usize)
            .collect(),
        hit_targets: hits.iter().map(|h| h.0).collect(),
    }
}
