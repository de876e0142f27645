use super::policy::{RawAction, RecurrentState};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: RawAction,
    pub log_prob: f64,
    pub reward: f64,
    pub value: f64,
    /// The episode ended with this transition.
    pub done: bool,
    /// This transition is the first of its episode.
    pub episode_start: bool,
    /// Memory before processing `obs` (recurrent policies only).
    pub hidden: Option<RecurrentState>,
}

/// Fixed-capacity on-policy storage for one environment.
#[derive(Clone, Debug)]
pub struct RolloutBuffer {
    capacity: usize,
    items: Vec<Transition>,
    last_value: Option<f64>,
}

impl RolloutBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            items: Vec::with_capacity(capacity),
            last_value: None,
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

    pub fn is_full(&self) -> bool {
        self.items.len() == self.capacity
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.items
    }

    pub fn push(&mut self, t: Transition) -> Result<()> {
        if self.is_full() {
            return Err(Error::Config(format!("rollout buffer full ({})", self.capacity)));
        }
        self.items.push(t);
        Ok(())
    }

    /// Stores the value estimate of the state following the last transition.
    pub fn finish(&mut self, last_value: f64) {
        self.last_value = Some(last_value);
    }

    pub fn clear(&mut self) {
        self.items.clear();
        self.last_value = None;
    }

    /// Generalized advantage estimates and returns (`advantage + value`).
    pub fn compute_gae(&self, gamma: f64, lambda: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        if self.items.is_empty() {
            return Err(Error::Config("empty rollout buffer".into()));
        }
        if !self.is_full() {
            return Err(Error::Config(format!(
                "rollout buffer holds {} of {} steps",
                self.items.len(),
                self.capacity
            )));
        }
        let last_value = self
            .last_value
            .ok_or_else(|| Error::Config("rollout buffer has no bootstrap value".into()))?;
        let n = self.items.len();
        let mut adv = vec![0.0; n];
        let mut next_adv = 0.0;
        for t in (0..n).rev() {
            let tr = &self.items[t];
            let next_value = if t + 1 < n { self.items[t + 1].value } else { last_value };
            let live = if tr.done { 0.0 } else { 1.0 };
            let delta = tr.reward + gamma * live * next_value - tr.value;
            next_adv = delta + gamma * lambda * live * next_adv;
            adv[t] = next_adv;
        }
        let ret = adv.iter().zip(&self.items).map(|(a, t)| a + t.value).collect();
        Ok((adv, ret))
    }
}
