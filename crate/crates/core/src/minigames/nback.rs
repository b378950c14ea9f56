use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    detection_reward, match_responses, mean, MinigameError, Stimulus, StimulusItem,
    StimulusSchedule, TaskScore, TrialKind,
};
use crate::game::PowerUp;

pub const NBACK_LENGTH: usize = 22;
pub const NBACK_TARGETS: usize = 5;
/// Clicks count for a target within this many seconds after its onset.
pub const NBACK_HIT_WINDOW: f64 = 1.8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NBackTrial {
    pub n: usize,
    pub items: Vec<PowerUp>,
    pub presentation: f64,
    pub isi: f64,
    pub target_indices: Vec<usize>,
}

impl NBackTrial {
    pub fn soa(&self) -> f64 {
        self.presentation + self.isi
    }

    pub fn onset(&self, i: usize) -> f64 {
        i as f64 * self.soa()
    }

    pub fn duration(&self) -> f64 {
        self.items.len() as f64 * self.soa()
    }

    pub fn to_schedule(&self) -> StimulusSchedule {
        StimulusSchedule {
            items: self
                .items
                .iter()
                .enumerate()
                .map(|(i, &p)| StimulusItem {
                    onset: self.onset(i),
                    stimulus: Stimulus::PowerUp(p),
                    is_target: self.target_indices.binary_search(&i).is_ok(),
                    side: None,
                })
                .collect(),
            soa: self.soa(),
            trial_kind: TrialKind::Nback,
        }
    }
}

/// Plants exactly five lag-`n` repeats among 22 power-up images; every other
/// position past the first `n` differs from the item `n` back.
pub fn build_nback_sequence<R: Rng + ?Sized>(
    n: usize,
    rng: &mut R,
) -> Result<NBackTrial, MinigameError> {
    if !(1..=4).contains(&n) {
        return Err(MinigameError::Config(format!("n = {n} outside [1, 4]")));
    }
    let mut targets: Vec<usize> = index::sample(rng, NBACK_LENGTH - n, NBACK_TARGETS)
        .into_iter()
        .map(|i| i + n)
        .collect();
    targets.sort_unstable();
    let kinds = PowerUp::ALL.len();
    let mut items: Vec<PowerUp> = Vec::with_capacity(NBACK_LENGTH);
    for i in 0..NBACK_LENGTH {
        let item = if targets.binary_search(&i).is_ok() {
            items[i - n]
        } else if i >= n {
            let back = PowerUp::ALL
                .iter()
                .position(|&p| p == items[i - n])
                .unwrap();
            let k = rng.random_range(0..kinds - 1);
            PowerUp::ALL[if k >= back { k + 1 } else { k }]
        } else {
            PowerUp::ALL[rng.random_range(0..kinds)]
        };
        items.push(item);
    }
    Ok(NBackTrial {
        n,
        items,
        presentation: 0.8,
        isi: 1.5,
        target_indices: targets,
    })
}

/// Scores mouse clicks on the trial clock. Rewarded kinds are the images of
/// the first targets.
pub fn score_nback(trial: &NBackTrial, clicks: &[f64]) -> TaskScore {
    let targets: Vec<(usize, f64)> = trial
        .target_indices
        .iter()
        .map(|&i| (i, trial.onset(i)))
        .collect();
    let (hits, fa) = match_responses(&targets, clicks, 0.0, NBACK_HIT_WINDOW, |_, _| true);
    let n_hits = hits.len() as u32;
    let reward = detection_reward(n_hits, targets.len() as u32, fa);
    TaskScore {
        hits: n_hits,
        misses: targets.len() as u32 - n_hits,
        false_alarms: fa,
        mean_rt: mean(hits.iter().map(|h| h.1)),
        powerups: trial
            .target_indices
            .iter()
            .take(reward as usize)
            .map(|&i| trial.items[i])
            .collect(),
        hit_targets: hits.iter().map(|h| h.0).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn lag_repeats(items: &[PowerUp], n: usize) -> Vec<usize> {
        (n..items.len())
            .filter(|&i| items[i] == items[i - n])
            .collect()
    }

    #[test]
    fn exhaustive_lag_scan_over_1000_seeds() {
        for n in 1..=4 {
            for seed in 0..1000 {
                let t = build_nback_sequence(n, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
                assert_eq!(t.items.len(), 22);
                assert_eq!(
                    lag_repeats(&t.items, n),
                    t.target_indices,
                    "n={n} seed={seed}"
                );
                assert!(t.target_indices.iter().all(|&i| i >= n));
            }
        }
    }

    #[test]
    fn n_out_of_range_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(build_nback_sequence(0, &mut rng).is_err());
        assert!(build_nback_sequence(5, &mut rng).is_err());
    }

    #[test]
    fn soa_and_schedule() {
        let t = build_nback_sequence(2, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert!((t.soa() - 2.3).abs() < 1e-12);
        let s = t.to_schedule();
        assert!(s.is_fixed_rate());
        assert_eq!(s.target_indices(), t.target_indices);
    }

    #[test]
    fn clicks_after_each_target() {
        let t = build_nback_sequence(2, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let clicks: Vec<f64> = t.target_indices.iter().map(|&i| t.onset(i) + 0.6).collect();
        let s = score_nback(&t, &clicks);
        assert_eq!((s.hits, s.misses, s.false_alarms), (5, 0, 0));
        assert_eq!(s.powerups.len(), 2);
    }

    #[test]
    fn click_on_non_target_is_false_alarm() {
        let t = build_nback_sequence(3, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let non = (0..22).find(|i| !t.target_indices.contains(i)).unwrap();
        let s = score_nback(&t, &[t.onset(non) + 0.5]);
        assert_eq!((s.hits, s.false_alarms), (0, 1));
    }

    #[test]
    fn silence_misses_all() {
        let t = build_nback_sequence(1, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        let s = score_nback(&t, &[]);
        assert_eq!((s.hits, s.misses), (0, 5));
        assert!(s.powerups.is_empty());
    }

    proptest! {
        #[test]
        fn always_five_targets(n in 1usize..=4, seed in any::<u64>()) {
            let t = build_nback_sequence(n, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            prop_assert_eq!(t.target_indices.len(), 5);
            prop_assert_eq!(lag_repeats(&t.items, n), t.target_indices.clone());
        }
    }
}
