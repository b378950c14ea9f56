use rand::Rng;
use rand_distr::{Distribution, LogNormal, Poisson};
use serde::{Deserialize, Serialize};

use crate::minigames::{MiTrial, NBackTrial, Side, SsvepTrial, StimulusSchedule};

/// Behavioral model standing in for a participant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulatedPlayer {
    /// Target hit probability for RSVP coherence levels 1 to 4.
    pub rsvp_hit_prob: [f64; 4],
    pub rt_median: f64,
    pub rt_sigma_log: f64,
    pub false_alarm_rate_per_min: f64,
    /// Hit probability for n = 1 to 4.
    pub nback_hit_prob: [f64; 4],
    /// Logistic time-to-move: P(move done before t) = 1 / (1 + exp(-slope (t - midpoint))).
    pub move_midpoint: f64,
    pub move_slope: f64,
    pub cheat_detection_prob: f64,
    /// Chance a move attempt is a swap that makes no match.
    pub invalid_swap_prob: f64,
    /// Grasp-switch squeezes per second during motor execution.
    pub squeeze_rate_hz: f64,
    /// Window accuracy used when no EEG classifier is in the loop.
    pub mi_stub_accuracy: f64,
}

impl Default for SimulatedPlayer {
    fn default() -> Self {
        Self {
            rsvp_hit_prob: [0.95, 0.85, 0.70, 0.50],
            rt_median: 0.5,
            rt_sigma_log: 0.3,
            false_alarm_rate_per_min: 1.0,
            nback_hit_prob: [0.95, 0.85, 0.70, 0.55],
            move_midpoint: 1.5,
            move_slope: 4.0,
            cheat_detection_prob: 0.8,
            invalid_swap_prob: 0.05,
            squeeze_rate_hz: 3.0,
            mi_stub_accuracy: 0.8,
        }
    }
}

impl SimulatedPlayer {
    pub fn validate(&self) -> Result<(), String> {
        let probs = self
            .rsvp_hit_prob
            .iter()
            .chain(&self.nback_hit_prob)
            .chain([
                &self.cheat_detection_prob,
                &self.invalid_swap_prob,
                &self.mi_stub_accuracy,
            ]);
        for p in probs {
            if !(0.0..=1.0).contains(p) {
                return Err(format!("probability {p} outside [0, 1]"));
            }
        }
        if !(self.rt_median > 0.0 && self.rt_sigma_log >= 0.0 && self.move_slope > 0.0) {
            return Err("response-time and capability parameters must be positive".into());
        }
        Ok(())
    }

    pub fn response_time<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        LogNormal::new(self.rt_median.ln(), self.rt_sigma_log)
            .expect("validated")
            .sample(rng)
    }

    /// Spontaneous responses over `duration` seconds, sorted.
    pub fn false_alarm_times<R: Rng + ?Sized>(&self, duration: f64, rng: &mut R) -> Vec<f64> {
        let lambda = self.false_alarm_rate_per_min * duration / 60.0;
        let n = if lambda > 0.0 {
            Poisson::new(lambda).expect("positive").sample(rng) as usize
        } else {
            0
        };
        let mut t: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..duration)).collect();
        t.sort_by(f64::total_cmp);
        t
    }

    pub fn rsvp_responses<R: Rng + ?Sized>(
        &self,
        schedule: &StimulusSchedule,
        coherence: u8,
        rng: &mut R,
    ) -> Vec<(f64, Side)> {
        let p = self.rsvp_hit_prob[(coherence.clamp(1, 4) - 1) as usize];
        let mut out = Vec::new();
        for it in schedule.items.iter().filter(|i| i.is_target) {
            if rng.random_bool(p) {
                out.push((
                    it.onset + self.response_time(rng),
                    it.side.unwrap_or(Side::Left),
                ));
            }
        }
        let duration = schedule.items.len() as f64 * schedule.soa;
        for t in self.false_alarm_times(duration, rng) {
            let side = if rng.random_bool(0.5) {
                Side::Left
            } else {
                Side::Right
            };
            out.push((t, side));
        }
        out.sort_by(|a, b| a.0.total_cmp(&b.0));
        out
    }

    pub fn nback_clicks<R: Rng + ?Sized>(&self, trial: &NBackTrial, rng: &mut R) -> Vec<f64> {
        let p = self.nback_hit_prob[trial.n.clamp(1, 4) - 1];
        let mut out: Vec<f64> = Vec::new();
        for &i in &trial.target_indices {
            if rng.random_bool(p) {
                out.push(trial.onset(i) + self.response_time(rng));
            }
        }
        out.extend(self.false_alarm_times(trial.duration(), rng));
        out.sort_by(f64::total_cmp);
        out
    }

    /// Clicks the attended box one response time after the flicker stops.
    pub fn ssvep_click<R: Rng + ?Sized>(&self, trial: &SsvepTrial, rng: &mut R) -> (f64, usize) {
        (
            trial.flash_duration + self.response_time(rng),
            trial.target_box,
        )
    }

    pub fn mi_stub_verdicts<R: Rng + ?Sized>(&self, trial: &MiTrial, rng: &mut R) -> Vec<bool> {
        (0..trial.window_count())
            .map(|_| rng.random_bool(self.mi_stub_accuracy))
            .collect()
    }

    pub fn me_squeezes<R: Rng + ?Sized>(&self, trial: &MiTrial, rng: &mut R) -> Vec<u32> {
        let lambda = self.squeeze_rate_hz * trial.window_length;
        (0..trial.window_count())
            .map(|_| {
                if lambda > 0.0 {
                    Poisson::new(lambda).expect("positive").sample(rng) as u32
                } else {
                    0
                }
            })
            .collect()
    }

    /// Probability of completing a move within `clock` seconds.
    pub fn move_success_prob(&self, clock: f64) -> f64 {
        1.0 / (1.0 + (-self.move_slope * (clock - self.move_midpoint)).exp())
    }

    /// Inverse-CDF draw from the logistic time-to-move distribution,
    /// floored at 50 ms.
    pub fn time_to_move<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random_range(1e-12..1.0 - 1e-12);
        (self.move_midpoint + (u / (1.0 - u)).ln() / self.move_slope).max(0.05)
    }

    pub fn notices_injection<R: Rng + ?Sized>(&self, rng: &mut R) -> bool {
        rng.random_bool(self.cheat_detection_prob)
    }

    pub fn attempts_invalid_swap<R: Rng + ?Sized>(&self, rng: &mut R) -> bool {
        rng.random_bool(self.invalid_swap_prob)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minigames::{
        build_nback_sequence, build_rsvp_sequence, score_nback, score_rsvp, RsvpConfig,
    };
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn defaults_valid() {
        SimulatedPlayer::default().validate().unwrap();
        let bad = SimulatedPlayer {
            cheat_detection_prob: 1.2,
            ..SimulatedPlayer::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn coherence_one_hit_rate() {
        let p = SimulatedPlayer {
            false_alarm_rate_per_min: 0.0,
            rt_sigma_log: 0.0,
            ..SimulatedPlayer::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = RsvpConfig::default();
        let (mut hits, mut n) = (0, 0);
        while n < 1002 {
            let s = build_rsvp_sequence(&cfg, &mut rng).unwrap();
            let score = score_rsvp(&s, &p.rsvp_responses(&s, 1, &mut rng));
            hits += score.hits;
            n += score.hits + score.misses;
        }
        let rate = hits as f64 / n as f64;
        assert!((0.93..=0.97).contains(&rate), "{rate}");
    }

    #[test]
    fn nback_performance_falls_with_n() {
        let p = SimulatedPlayer::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rates: Vec<f64> = (1..=4)
            .map(|n| {
                let (mut h, mut t) = (0u32, 0u32);
                for _ in 0..1000 {
                    let tr = build_nback_sequence(n, &mut rng).unwrap();
                    let s = score_nback(&tr, &p.nback_clicks(&tr, &mut rng));
                    h += s.hits;
                    t += s.hits + s.misses;
                }
                h as f64 / t as f64
            })
            .collect();
        assert!(rates.windows(2).all(|w| w[0] > w[1]), "{rates:?}");
    }

    #[test]
    fn capability_at_three_seconds() {
        let p = SimulatedPlayer::default();
        let expected = 1.0 / (1.0 + (-6.0f64).exp());
        assert!((p.move_success_prob(3.0) - expected).abs() < 1e-12);
        assert!((p.move_success_prob(1.5) - 0.5).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100_000;
        let within = (0..n).filter(|_| p.time_to_move(&mut rng) < 3.0).count();
        assert!((within as f64 / n as f64 - expected).abs() < 0.002);
    }

    #[test]
    fn response_time_median() {
        let p = SimulatedPlayer::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut rts: Vec<f64> = (0..20_001).map(|_| p.response_time(&mut rng)).collect();
        rts.sort_by(f64::total_cmp);
        assert!((rts[10_000] - 0.5).abs() < 0.01);
    }
}
