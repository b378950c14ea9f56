use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    MinigameError, ShuffledBag, Stimulus, StimulusItem, StimulusSchedule, TaskScore, TrialKind,
};
use crate::game::PowerUp;

pub const SSVEP_FREQUENCIES: [u32; 4] = [7, 9, 11, 13];
const RT_TWO: f64 = 0.4;
const RT_ONE: f64 = 0.7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsvepTrial {
    /// Flicker frequency of each box, Hz.
    pub box_frequencies: [u32; 4],
    pub target_box: usize,
    pub flash_duration: f64,
    pub frame_rate: u32,
    /// Visibility changes per box, in frame-quantized seconds from onset.
    pub toggle_times: Vec<(usize, f64)>,
    /// Power-up shown in the target box.
    pub prize: PowerUp,
}

impl SsvepTrial {
    pub fn target_frequency(&self) -> u32 {
        self.box_frequencies[self.target_box]
    }

    pub fn toggles_of(&self, b: usize) -> impl Iterator<Item = f64> + '_ {
        self.toggle_times
            .iter()
            .filter(move |t| t.0 == b)
            .map(|t| t.1)
    }

    pub fn to_schedule(&self) -> StimulusSchedule {
        StimulusSchedule {
            items: vec![StimulusItem {
                onset: 0.0,
                stimulus: Stimulus::Box(self.target_box as u8),
                is_target: true,
                side: None,
            }],
            soa: self.flash_duration,
            trial_kind: TrialKind::Ssvep,
        }
    }
}

/// Frame-locked flicker: on frame `n` the box is visible iff
/// `floor(2 f n / frame_rate)` is even. Returns the times at which
/// visibility changes within `duration`.
pub fn toggle_schedule(freq_hz: u32, frame_rate: u32, duration: f64) -> Vec<f64> {
    let frames = (duration * frame_rate as f64).round() as u64;
    let phase = |n: u64| (2 * freq_hz as u64 * n / frame_rate as u64) % 2;
    (1..=frames)
        .filter(|&n| phase(n) != phase(n - 1))
        .map(|n| n as f64 / frame_rate as f64)
        .collect()
}

/// Draws target frequencies from a shuffled bag so each is the target
/// equally often; the remaining frequencies are shuffled over the other boxes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SsvepGenerator {
    bag: ShuffledBag<u32>,
    pub frame_rate: u32,
    pub flash_duration: f64,
}

impl SsvepGenerator {
    pub fn new(frame_rate: u32, flash_duration: f64) -> Result<Self, MinigameError> {
        let max = *SSVEP_FREQUENCIES.iter().max().unwrap();
        if frame_rate < 2 * max {
            return Err(MinigameError::Config(format!(
                "frame rate {frame_rate} below twice the highest flicker frequency {max}"
            )));
        }
        if !(flash_duration > 0.0) {
            return Err(MinigameError::Config(format!(
                "flash duration {flash_duration}"
            )));
        }
        Ok(Self {
            bag: ShuffledBag::new(SSVEP_FREQUENCIES.to_vec()),
            frame_rate,
            flash_duration,
        })
    }

    pub fn next_trial<R: Rng + ?Sized>(&mut self, rng: &mut R) -> SsvepTrial {
        let target = self.bag.draw(rng);
        let mut freqs = SSVEP_FREQUENCIES;
        freqs.shuffle(rng);
        let target_box = freqs.iter().position(|&f| f == target).unwrap();
        let mut toggle_times: Vec<(usize, f64)> = (0..4)
            .flat_map(|b| {
                toggle_schedule(freqs[b], self.frame_rate, self.flash_duration)
                    .into_iter()
                    .map(move |t| (b, t))
            })
            .collect();
        toggle_times.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        SsvepTrial {
            box_frequencies: freqs,
            target_box,
            flash_duration: self.flash_duration,
            frame_rate: self.frame_rate,
            toggle_times,
            prize: PowerUp::ALL[rng.random_range(0..4)],
        }
    }
}

impl Default for SsvepGenerator {
    fn default() -> Self {
        Self::new(60, 4.0).expect("defaults are valid")
    }
}

/// Scores the single click `(time, box)` on the trial clock. Clicking before
/// the flicker stops or on the wrong box earns nothing.
pub fn score_ssvep(trial: &SsvepTrial, click: Option<(f64, usize)>) -> TaskScore {
    let Some((t, b)) = click else {
        return TaskScore {
            misses: 1,
            ..TaskScore::default()
        };
    };
    if t < trial.flash_duration || b != trial.target_box {
        return TaskScore {
            misses: 1,
            false_alarms: 1,
            ..TaskScore::default()
        };
    }
    let rt = t - trial.flash_duration;
    let reward = if rt < RT_TWO {
        2
    } else if rt < RT_ONE {
        1
    } else {
        0
    };
    TaskScore {
        hits: 1,
        misses: 0,
        false_alarms: 0,
        mean_rt: Some(rt),
        powerups: vec![trial.prize; reward],
        hit_targets: vec![0],
    }
}
