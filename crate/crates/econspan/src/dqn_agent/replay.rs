//! FIFO experience replay.

use std::collections::VecDeque;

use rand::Rng;

use super::AgentError;

/// Bounded queue of experience items; pushing beyond capacity evicts the
/// single oldest entry.
#[derive(Debug, Clone)]
pub struct ReplayBuffer<T> {
    items: VecDeque<T>,
    capacity: usize,
}

impl<T: Clone> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            items: VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    pub fn push(&mut self, item: T) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(item);
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

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.items.iter()
    }

    /// Uniform sample with replacement.
    pub fn sample(&self, batch_size: usize, rng: &mut impl Rng) -> Result<Vec<T>, AgentError> {
        if self.items.len() < batch_size {
            return Err(AgentError::BufferUnderfull {
                have: self.items.len(),
                need: batch_size,
            });
        }
        Ok((0..batch_size)
            .map(|_| self.items[rng.random_range(0..self.items.len())].clone())
            .collect())
    }
}
