//! Exploration schedule and ε-greedy action selection.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::num::Scalar;
use crate::rl::net::Bdq;

/// Linear decay from `start` to `end` over `decay_steps`, then flat.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_steps: u64,
}

impl EpsilonSchedule {
    pub fn value(&self, step: u64) -> f64 {
        if self.decay_steps == 0 || step >= self.decay_steps {
            return self.end;
        }
        let frac = step as f64 / self.decay_steps as f64;
        self.start + (self.end - self.start) * frac
    }
}

/// With probability ε every branch draws a uniform sub-action; otherwise
/// every branch is greedy (ties to the lowest index).
pub fn act_epsilon_greedy<T: Scalar, R: Rng + ?Sized>(net: &Bdq<T>, state: &[T], epsilon: f64, rng: &mut R) -> Result<Vec<usize>> {
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        Ok(net.spec().branches.iter().map(|&j| rng.random_range(0..j)).collect())
    } else {
        net.greedy(state)
    }
}
