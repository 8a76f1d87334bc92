//! Fixed-capacity FIFO replay buffer with uniform sampling.

use rand::Rng;
use serde::{Deserialize, Serialize};

/// One long-term-goal decision and its outcome. Map tensors are stored as
/// 0/1 bytes, plane-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub obs: Vec<u8>,
    pub enc: Vec<f32>,
    pub action: [f32; 2],
    pub reward: f64,
    /// Primitive steps the decision lasted; the bootstrap is discounted by γ^steps.
    pub steps: u32,
    pub next_obs: Vec<u8>,
    pub next_enc: Vec<f32>,
    pub done: bool,
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    head: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self { capacity, items: Vec::new(), head: 0 }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.head] = t;
            self.head = (self.head + 1) % self.capacity;
        }
    }

    /// `i`-th oldest stored transition.
    pub fn get(&self, i: usize) -> Option<&Transition> {
        (i < self.items.len()).then(|| &self.items[(self.head + i) % self.items.len()])
    }

    /// Uniform draw with replacement.
    pub fn sample<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<&Transition> {
        if self.items.is_empty() {
            return Vec::new();
        }
        (0..n).map(|_| &self.items[rng.random_range(0..self.items.len())]).collect()
    }
}
