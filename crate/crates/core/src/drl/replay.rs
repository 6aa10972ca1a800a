//! Fixed-capacity experience replay with FIFO eviction.

use rand::Rng;

use super::state::Observation;

#[derive(Debug, Clone, PartialEq)]
pub struct Experience {
    pub s: Observation,
    pub a: usize,
    pub r: f64,
    pub s_next: Observation,
    pub terminal: bool,
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    entries: Vec<Experience>,
    /// Slot overwritten next once full.
    head: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        ReplayBuffer { capacity, entries: Vec::new(), head: 0 }
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

    pub fn push(&mut self, e: Experience) {
        if self.entries.len() < self.capacity {
            self.entries.push(e);
        } else {
            self.entries[self.head] = e;
            self.head = (self.head + 1) % self.capacity;
        }
    }

    /// Entries from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &Experience> {
        self.entries[self.head..].iter().chain(&self.entries[..self.head])
    }

    /// Uniform sample without replacement; `None` if fewer than `n` entries.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Option<Vec<&Experience>> {
        if self.entries.len() < n {
            return None;
        }
        Some(rand::seq::index::sample(rng, self.entries.len(), n).iter().map(|i| &self.entries[i]).collect())
    }
}
