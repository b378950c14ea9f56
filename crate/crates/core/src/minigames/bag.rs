use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Draws without replacement from a fixed set, refilling and reshuffling
/// when empty. After any `k * len` draws every item has come up `k` times.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShuffledBag<T> {
    items: Vec<T>,
    remaining: Vec<T>,
}

impl<T: Clone> ShuffledBag<T> {
    pub fn new(items: Vec<T>) -> Self {
        assert!(!items.is_empty(), "shuffled bag needs at least one item");
        Self {
            items,
            remaining: Vec::new(),
        }
    }

    pub fn draw<R: Rng + ?Sized>(&mut self, rng: &mut R) -> T {
        if self.remaining.is_empty() {
            self.remaining = self.items.clone();
            self.remaining.shuffle(rng);
        }
        self.remaining.pop().expect("bag refilled above")
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn remaining(&self) -> usize {
        self.remaining.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    proptest! {
        #[test]
        fn full_cycles_are_balanced(seed in any::<u64>(), cycles in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut bag = ShuffledBag::new(vec![0u8, 1, 2, 3, 4]);
            let mut counts = [0usize; 5];
            for _ in 0..cycles * 5 {
                counts[bag.draw(&mut rng) as usize] += 1;
            }
            prop_assert!(counts.iter().all(|&c| c == cycles));
        }
    }
}
