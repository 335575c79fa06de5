//! Fixed-capacity experience replay.

use rand::seq::index;
use rand::Rng;

use super::Experience;
use crate::error::{Error, Result};

/// Ring buffer that overwrites its oldest entry once full.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    entries: Vec<Experience>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            entries: Vec::with_capacity(capacity.min(1 << 16)),
            next: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() == self.capacity
    }

    pub fn push(&mut self, exp: Experience) {
        if self.capacity == 0 {
            return;
        }
        if self.entries.len() < self.capacity {
            self.entries.push(exp);
        } else {
            self.entries[self.next] = exp;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// Entries from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &Experience> {
        let split = if self.is_full() { self.next } else { 0 };
        self.entries[split..].iter().chain(&self.entries[..split])
    }

    /// `size` distinct entries drawn uniformly.
    pub fn sample<R: Rng + ?Sized>(&self, size: usize, rng: &mut R) -> Result<Vec<&Experience>> {
        if size > self.entries.len() || size == 0 {
            return Err(Error::BufferTooSmall {
                len: self.entries.len(),
                needed: size,
            });
        }
        Ok(index::sample(rng, self.entries.len(), size).into_iter().map(|i| &self.entries[i]).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dqn::{Action, MdpState};
    use crate::rng::{substream, Stream};
    use proptest::prelude::*;

    fn exp(tag: f64) -> Experience {
        Experience {
            state: MdpState::new(vec![tag]),
            action: Action(1),
            reward: tag,
            next_state: MdpState::new(vec![tag]),
            terminal: false,
        }
    }

    #[test]
    fn sampling_errors_and_determinism() {
        let mut b = ReplayBuffer::new(10);
        assert!(matches!(b.sample(1, &mut substream(0, Stream::Replay)), Err(Error::BufferTooSmall { .. })));
        for i in 0..8 {
            b.push(exp(i as f64));
        }
        let r1: Vec<f64> = b.sample(4, &mut substream(1, Stream::Replay)).unwrap().iter().map(|e| e.reward).collect();
        let r2: Vec<f64> = b.sample(4, &mut substream(1, Stream::Replay)).unwrap().iter().map(|e| e.reward).collect();
        assert_eq!(r1, r2);
    }

    proptest! {
        #[test]
        fn keeps_newest(capacity in 1usize..20, pushes in 0usize..60) {
            let mut b = ReplayBuffer::new(capacity);
            for i in 0..pushes {
                b.push(exp(i as f64));
                prop_assert!(b.len() <= capacity);
            }
            let kept: Vec<f64> = b.iter().map(|e| e.reward).collect();
            let first = pushes.saturating_sub(capacity);
            let want: Vec<f64> = (first..pushes).map(|i| i as f64).collect();
            prop_assert_eq!(kept, want);
        }
    }
}
