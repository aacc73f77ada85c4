use rand::{Rng, RngCore};

use crate::mdp::Transition;

/// Fixed-capacity ring buffer of transitions with uniform sampling.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            next: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Stores `t`, overwriting the oldest transition once full.
    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// `m` transitions drawn uniformly with replacement.
    pub fn sample_into(&self, m: usize, rng: &mut dyn RngCore, out: &mut Vec<Transition>) {
        out.clear();
        if self.items.is_empty() {
            return;
        }
        let n = self.items.len();
        out.extend((0..m).map(|_| self.items[rng.random_range(0..n)]));
    }

    pub fn sample(&self, m: usize, rng: &mut dyn RngCore) -> Vec<Transition> {
        let mut out = Vec::with_capacity(m);
        self.sample_into(m, rng, &mut out);
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }
}
