//! Uniform experience replay over a fixed-capacity ring.

use rand::seq::index::sample;
use rand::Rng;

use crate::num::Scalar;

/// Minibatch in flat row-major arrays.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Batch<T> {
    pub states: Vec<T>,
    /// `size × J` sub-actions.
    pub actions: Vec<usize>,
    pub rewards: Vec<T>,
    pub next_states: Vec<T>,
    pub terminal: Vec<bool>,
}

impl<T> Batch<T> {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer<T> {
    capacity: usize,
    state_dim: usize,
    action_dim: usize,
    states: Vec<T>,
    next_states: Vec<T>,
    actions: Vec<usize>,
    rewards: Vec<T>,
    terminal: Vec<bool>,
    /// Slot overwritten by the next push once full.
    head: usize,
}

impl<T: Scalar> ReplayBuffer<T> {
    /// Storage grows on demand up to `capacity`.
    pub fn new(capacity: usize, state_dim: usize, action_dim: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            state_dim,
            action_dim,
            states: Vec::new(),
            next_states: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            terminal: Vec::new(),
            head: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Stores a transition, overwriting the oldest once at capacity.
    pub fn push(&mut self, state: &[T], action: &[usize], reward: T, next: &[T], terminal: bool) {
        assert_eq!(state.len(), self.state_dim, "state width");
        assert_eq!(next.len(), self.state_dim, "next-state width");
        assert_eq!(action.len(), self.action_dim, "action width");
        if self.len() < self.capacity {
            self.states.extend_from_slice(state);
            self.next_states.extend_from_slice(next);
            self.actions.extend_from_slice(action);
            self.rewards.push(reward);
            self.terminal.push(terminal);
        } else {
            let i = self.head;
            let (d, a) = (self.state_dim, self.action_dim);
            self.states[i * d..(i + 1) * d].copy_from_slice(state);
            self.next_states[i * d..(i + 1) * d].copy_from_slice(next);
            self.actions[i * a..(i + 1) * a].copy_from_slice(action);
            self.rewards[i] = reward;
            self.terminal[i] = terminal;
            self.head = (self.head + 1) % self.capacity;
        }
    }

    /// Uniform minibatch without replacement; `size` is capped at the
    /// buffer length.
    pub fn sample<R: Rng + ?Sized>(&self, size: usize, rng: &mut R, out: &mut Batch<T>) {
        let idx = sample(rng, self.len(), size.min(self.len()));
        let (d, a) = (self.state_dim, self.action_dim);
        out.states.clear();
        out.next_states.clear();
        out.actions.clear();
        out.rewards.clear();
        out.terminal.clear();
        for i in idx.iter() {
            out.states.extend_from_slice(&self.states[i * d..(i + 1) * d]);
            out.next_states.extend_from_slice(&self.next_states[i * d..(i + 1) * d]);
            out.actions.extend_from_slice(&self.actions[i * a..(i + 1) * a]);
            out.rewards.push(self.rewards[i]);
            out.terminal.push(self.terminal[i]);
        }
    }

    /// Reward of the `i`-th stored transition (storage order).
    pub fn reward(&self, i: usize) -> T {
        self.rewards[i]
    }
}
