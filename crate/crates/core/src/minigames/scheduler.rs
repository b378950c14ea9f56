use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ShuffledBag;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MinigameKind {
    Rsvp,
    Ssvep,
    MiMe,
    Nback,
}

impl MinigameKind {
    pub const ALL: [MinigameKind; 4] = [
        MinigameKind::Rsvp,
        MinigameKind::Ssvep,
        MinigameKind::MiMe,
        MinigameKind::Nback,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MinigameKind::Rsvp => "rsvp",
            MinigameKind::Ssvep => "ssvep",
            MinigameKind::MiMe => "mi_me",
            MinigameKind::Nback => "nback",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    pub kind: MinigameKind,
    /// RSVP coherence level, 1 to 4.
    pub coherence: Option<u8>,
    /// n-back load, 1 to 4.
    pub n: Option<usize>,
}

/// Independent shuffled bags for the task, the RSVP coherence level and the
/// n-back load, so each is balanced on its own.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MinigameScheduler {
    tasks: ShuffledBag<MinigameKind>,
    coherence: ShuffledBag<u8>,
    nback: ShuffledBag<usize>,
    pub counts: [u32; 4],
}

impl Default for MinigameScheduler {
    fn default() -> Self {
        Self {
            tasks: ShuffledBag::new(MinigameKind::ALL.to_vec()),
            coherence: ShuffledBag::new(vec![1, 2, 3, 4]),
            nback: ShuffledBag::new(vec![1, 2, 3, 4]),
            counts: [0; 4],
        }
    }
}

impl MinigameScheduler {
    pub fn next<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Selection {
        let kind = self.tasks.draw(rng);
        self.counts[kind as usize] += 1;
        self.complete(kind, rng)
    }

    /// Parameters for an externally chosen task.
    pub fn complete<R: Rng + ?Sized>(&mut self, kind: MinigameKind, rng: &mut R) -> Selection {
        Selection {
            kind,
            coherence: (kind == MinigameKind::Rsvp).then(|| self.coherence.draw(rng)),
            n: (kind == MinigameKind::Nback).then(|| self.nback.draw(rng)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn eight_selections_cover_each_task_twice_for_100_seeds() {
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut s = MinigameScheduler::default();
            let mut counts = [0; 4];
            for _ in 0..8 {
                counts[s.next(&mut rng).kind as usize] += 1;
            }
            assert_eq!(counts, [2; 4], "seed {seed}");
            assert_eq!(s.counts, [2; 4]);
        }
    }

    #[test]
    fn four_rsvp_selections_cover_each_coherence() {
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut s = MinigameScheduler::default();
            let mut levels: Vec<u8> = std::iter::from_fn(|| Some(s.next(&mut rng)))
                .filter_map(|sel| sel.coherence)
                .take(4)
                .collect();
            levels.sort_unstable();
            assert_eq!(levels, vec![1, 2, 3, 4]);
        }
    }

    #[test]
    fn only_rsvp_gets_coherence_and_only_nback_gets_n() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut s = MinigameScheduler::default();
        for _ in 0..40 {
            let sel = s.next(&mut rng);
            assert_eq!(sel.coherence.is_some(), sel.kind == MinigameKind::Rsvp);
            assert_eq!(sel.n.is_some(), sel.kind == MinigameKind::Nback);
        }
    }
}
