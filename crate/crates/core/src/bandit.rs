//! Discounted UCB over actions.
//!
//! Each action is an arm. Statistics decay geometrically with factor `γ̃`:
//!
//! ```text
//! N(a) ← γ̃ N(a) + 1{a = selected}
//! S(a) ← γ̃ S(a) + reward · 1{a = selected}
//! ```
//!
//! and the arm with the largest `S/N + c sqrt(log t / N)` is played, where
//! `t = Σ_a N(a)`. Arms that were never pulled score `+∞`, so the first
//! `|A|` selections visit every arm in index order.

use crate::error::{Error, Result};

pub const DEFAULT_EXPLORATION: f64 = 0.5;
pub const DEFAULT_DISCOUNT: f64 = 0.99;

#[derive(Clone, Debug, PartialEq)]
pub struct DUcbState {
    discounted_counts: Vec<f64>,
    discounted_sums: Vec<f64>,
    gamma_tilde: f64,
    c: f64,
    pulled: Vec<bool>,
}

impl DUcbState {
    pub fn new(num_arms: usize, gamma_tilde: f64, c: f64) -> Result<Self> {
        if num_arms == 0 {
            return Err(Error::Contract("bandit needs at least one arm".into()));
        }
        if !(gamma_tilde > 0.0 && gamma_tilde <= 1.0) {
            return Err(Error::Contract(format!("bandit discount must lie in (0, 1], got {gamma_tilde}")));
        }
        if !(c >= 0.0 && c.is_finite()) {
            return Err(Error::Contract(format!("exploration coefficient must be >= 0, got {c}")));
        }
        Ok(Self {
            discounted_counts: vec![0.0; num_arms],
            discounted_sums: vec![0.0; num_arms],
            gamma_tilde,
            c,
            pulled: vec![false; num_arms],
        })
    }

    pub fn with_defaults(num_arms: usize) -> Self {
        Self::new(num_arms, DEFAULT_DISCOUNT, DEFAULT_EXPLORATION).expect("defaults are valid")
    }

    pub fn num_arms(&self) -> usize {
        self.discounted_counts.len()
    }

    pub fn discounted_counts(&self) -> &[f64] {
        &self.discounted_counts
    }

    pub fn discounted_sums(&self) -> &[f64] {
        &self.discounted_sums
    }

    /// `t(γ̃) = Σ_a N(a)`.
    pub fn total_count(&self) -> f64 {
        self.discounted_counts.iter().sum()
    }

    /// Every arm has been pulled at least once.
    pub fn initialized(&self) -> bool {
        self.pulled.iter().all(|p| *p)
    }

    /// `μ(a) = S(a) / N(a)`, `None` for an arm never pulled.
    pub fn mean(&self, arm: usize) -> Option<f64> {
        if !self.pulled[arm] {
            return None;
        }
        let n = self.discounted_counts[arm];
        // N(a) only underflows to 0 after ~70k unselected rounds at γ̃ = 0.99.
        Some(if n > 0.0 { self.discounted_sums[arm] / n } else { 0.0 })
    }

    pub fn means(&self) -> Vec<Option<f64>> {
        (0..self.num_arms()).map(|a| self.mean(a)).collect()
    }

    /// Upper confidence index of `arm`; `+∞` until the arm is pulled.
    pub fn index(&self, arm: usize) -> f64 {
        let n = self.discounted_counts[arm];
        match self.mean(arm) {
            Some(mu) if n > 0.0 => {
                let log_t = self.total_count().ln().max(0.0);
                mu + self.c * (log_t / n).sqrt()
            }
            _ => f64::INFINITY,
        }
    }

    /// Arm maximizing the index, lowest index on ties.
    pub fn select_arm(&self) -> usize {
        let mut best = 0;
        let mut best_index = self.index(0);
        for arm in 1..self.num_arms() {
            let idx = self.index(arm);
            if idx > best_index {
                best = arm;
                best_index = idx;
            }
        }
        best
    }

    pub fn update(&mut self, selected: usize, reward: f64) -> Result<()> {
        if selected >= self.num_arms() {
            return Err(Error::Contract(format!("arm {selected} out of range")));
        }
        if !reward.is_finite() {
            return Err(Error::NonFinite("bandit reward".into()));
        }
        for (n, s) in self.discounted_counts.iter_mut().zip(self.discounted_sums.iter_mut()) {
            *n *= self.gamma_tilde;
            *s *= self.gamma_tilde;
        }
        self.discounted_counts[selected] += 1.0;
        self.discounted_sums[selected] += reward;
        self.pulled[selected] = true;
        Ok(())
    }
}

/// Running min-max rescaling of bandit rewards into `[0, 1]`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RewardNormalizer {
    bounds: Option<(f64, f64)>,
}

impl RewardNormalizer {
    pub fn normalize(&mut self, reward: f64) -> f64 {
        let (lo, hi) = match self.bounds {
            None => (reward, reward),
            Some((lo, hi)) => (lo.min(reward), hi.max(reward)),
        };
        self.bounds = Some((lo, hi));
        if hi > lo {
            (reward - lo) / (hi - lo)
        } else {
            0.5
        }
    }
}
