use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{MinigameError, Side, Stimulus, StimulusItem, StimulusSchedule, TrialKind};
use crate::game::{BarrelEffect, PowerUp};

const WINDOWS: usize = 6;
const PASS_THRESHOLD: usize = 4;
const BARREL_AMOUNT: u32 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecutionMode {
    Imagery,
    Execution,
}

/// Strict ME/MI interleave, starting with execution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeAlternator {
    next: ExecutionMode,
}

impl Default for ModeAlternator {
    fn default() -> Self {
        Self {
            next: ExecutionMode::Execution,
        }
    }
}

impl ModeAlternator {
    pub fn advance(&mut self) -> ExecutionMode {
        let mode = self.next;
        self.next = match mode {
            ExecutionMode::Imagery => ExecutionMode::Execution,
            ExecutionMode::Execution => ExecutionMode::Imagery,
        };
        mode
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiTrial {
    pub direction: Side,
    pub execution_mode: ExecutionMode,
    pub duration: f64,
    pub window_length: f64,
    pub pass_threshold: usize,
    pub window_verdicts: Vec<bool>,
    pub prize: PowerUp,
}

impl MiTrial {
    pub fn window_count(&self) -> usize {
        (self.duration / self.window_length).round() as usize
    }

    pub fn trial_kind(&self) -> TrialKind {
        match self.execution_mode {
            ExecutionMode::Imagery => TrialKind::Mi,
            ExecutionMode::Execution => TrialKind::Me,
        }
    }

    pub fn to_schedule(&self) -> StimulusSchedule {
        StimulusSchedule {
            items: (0..self.window_count())
                .map(|i| StimulusItem {
                    onset: i as f64 * self.window_length,
                    stimulus: Stimulus::Barrel(self.direction),
                    is_target: true,
                    side: Some(self.direction),
                })
                .collect(),
            soa: self.window_length,
            trial_kind: self.trial_kind(),
        }
    }
}

pub fn build_mi_trial<R: Rng + ?Sized>(rng: &mut R, alternator: &mut ModeAlternator) -> MiTrial {
    let direction = if rng.random_bool(0.5) {
        Side::Left
    } else {
        Side::Right
    };
    MiTrial {
        direction,
        execution_mode: alternator.advance(),
        duration: WINDOWS as f64,
        window_length: 1.0,
        pass_threshold: PASS_THRESHOLD,
        window_verdicts: Vec::new(),
        prize: PowerUp::ALL[rng.random_range(0..4)],
    }
}

/// Per-window evidence: classifier correctness for imagery, grasp-switch
/// squeeze counts for execution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "windows", rename_all = "snake_case")]
pub enum MiVerdicts {
    Classifier(Vec<bool>),
    Squeezes(Vec<u32>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiOutcome {
    pub passed: bool,
    /// Running success fraction after each window; drives the arrow shade.
    pub feedback: Vec<f64>,
    pub barrel: Option<BarrelEffect>,
    pub powerups: Vec<PowerUp>,
    pub window_verdicts: Vec<bool>,
}

pub fn evaluate_mi_trial(
    trial: &MiTrial,
    verdicts: &MiVerdicts,
) -> Result<MiOutcome, MinigameError> {
    let flags: Vec<bool> = match verdicts {
        MiVerdicts::Classifier(v) => v.clone(),
        MiVerdicts::Squeezes(c) => c.iter().map(|&n| n >= 1).collect(),
    };
    let expected = trial.window_count();
    if flags.len() != expected {
        return Err(MinigameError::VerdictCount {
            expected,
            got: flags.len(),
        });
    }
    let mut successes = 0usize;
    let feedback = flags
        .iter()
        .enumerate()
        .map(|(k, &ok)| {
            successes += ok as usize;
            successes as f64 / (k + 1) as f64
        })
        .collect();
    let passed = successes >= trial.pass_threshold;
    let barrel = passed.then_some(match trial.direction {
        Side::Left => BarrelEffect::HealPlayer(BARREL_AMOUNT),
        Side::Right => BarrelEffect::DamageEnemy(BARREL_AMOUNT),
    });
    Ok(MiOutcome {
        passed,
        feedback,
        barrel,
        powerups: if passed {
            vec![trial.prize]
        } else {
            Vec::new()
        },
        window_verdicts: flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn trial(direction: Side) -> MiTrial {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        MiTrial {
            direction,
            ..build_mi_trial(&mut rng, &mut ModeAlternator::default())
        }
    }

    #[test]
    fn modes_alternate() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut alt = ModeAlternator::default();
        let modes: Vec<_> = (0..10)
            .map(|_| build_mi_trial(&mut rng, &mut alt).execution_mode)
            .collect();
        assert!(modes.windows(2).all(|w| w[0] != w[1]));
    }

    #[test]
    fn direction_is_balanced() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut alt = ModeAlternator::default();
        let left = (0..1000)
            .filter(|_| build_mi_trial(&mut rng, &mut alt).direction == Side::Left)
            .count();
        assert!((450..=550).contains(&left), "{left}");
    }

    #[test]
    fn six_windows() {
        let t = trial(Side::Left);
        assert_eq!(t.window_count(), 6);
        assert_eq!(t.to_schedule().items.len(), 6);
    }

    #[test]
    fn four_of_six_passes() {
        let t = trial(Side::Right);
        let out = evaluate_mi_trial(
            &t,
            &MiVerdicts::Classifier(vec![true, true, true, true, false, false]),
        )
        .unwrap();
        assert!(out.passed);
        assert_eq!(out.barrel, Some(BarrelEffect::DamageEnemy(10)));
        assert_eq!(out.powerups.len(), 1);
        assert_eq!(out.feedback, vec![1.0, 1.0, 1.0, 1.0, 0.8, 4.0 / 6.0]);
    }

    #[test]
    fn three_of_six_fails() {
        let t = trial(Side::Left);
        let out = evaluate_mi_trial(
            &t,
            &MiVerdicts::Classifier(vec![false, true, false, true, false, true]),
        )
        .unwrap();
        assert!(!out.passed);
        assert_eq!(out.barrel, None);
        assert!(out.powerups.is_empty());
    }

    #[test]
    fn all_false_fails() {
        let out =
            evaluate_mi_trial(&trial(Side::Left), &MiVerdicts::Classifier(vec![false; 6])).unwrap();
        assert!(!out.passed && out.barrel.is_none());
    }

    #[test]
    fn squeeze_every_window_passes_and_heals_on_left() {
        let out = evaluate_mi_trial(
            &trial(Side::Left),
            &MiVerdicts::Squeezes(vec![2, 1, 3, 1, 2, 4]),
        )
        .unwrap();
        assert!(out.passed);
        assert_eq!(out.barrel, Some(BarrelEffect::HealPlayer(10)));
    }

    #[test]
    fn wrong_verdict_count_is_error() {
        assert_eq!(
            evaluate_mi_trial(&trial(Side::Left), &MiVerdicts::Classifier(vec![true; 5])),
            Err(MinigameError::VerdictCount {
                expected: 6,
                got: 5
            })
        );
    }
}
