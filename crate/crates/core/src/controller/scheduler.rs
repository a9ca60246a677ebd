use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// When to move from target `(0, j)` to `(0, j + 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwitchPolicy {
    /// Intermediate targets switch as soon as `τ` reaches this value.
    pub tau_switch: f64,
    /// Stall window `W`, in control intervals.
    pub window: usize,
    /// Relative improvement below which the windowed maximum counts as stalled.
    pub eps_sat: f64,
}

impl Default for SwitchPolicy {
    fn default() -> Self {
        Self { tau_switch: 0.95, window: 200, eps_sat: 1e-4 }
    }
}

impl SwitchPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::Config("scheduler window must be at least 1".into()));
        }
        if !(self.eps_sat >= 0.0 && self.tau_switch.is_finite()) {
            return Err(Error::Config("invalid scheduler thresholds".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SwitchEvent {
    None,
    /// The target moved on to the next site.
    Advanced,
    /// The last target `(0, n − 1)` saturated; the run is complete.
    Completed,
}

/// Target sequencing for one run.
///
/// The last `W` values of `τ` sit in a ring buffer; values leaving it feed
/// `best_before`. The target counts as stalled once more than `W` values were
/// seen and `max(window) − best_before < ε_sat · |max(window, best_before)|`.
/// Intermediate targets switch on the threshold or on a stall, the final
/// target completes on a stall only.
#[derive(Clone, Debug)]
pub struct SchedulerState {
    n: usize,
    target: usize,
    policy: SwitchPolicy,
    recent: VecDeque<f64>,
    best_before: f64,
    seen: usize,
    completed: bool,
    switch_times: Vec<f64>,
    switch_intervals: Vec<usize>,
}

impl SchedulerState {
    pub fn new(n: usize, policy: SwitchPolicy) -> Result<Self> {
        if n < 2 {
            return Err(Error::ChainTooShort(n));
        }
        policy.validate()?;
        Ok(Self {
            n,
            target: 1,
            policy,
            recent: VecDeque::with_capacity(policy.window + 1),
            best_before: f64::NEG_INFINITY,
            seen: 0,
            completed: false,
            switch_times: Vec::new(),
            switch_intervals: Vec::new(),
        })
    }

    /// Current target site `j` (zero-based; the pair is `(0, j)`).
    pub fn target(&self) -> usize {
        self.target
    }

    pub fn is_completed(&self) -> bool {
        self.completed
    }

    pub fn policy(&self) -> SwitchPolicy {
        self.policy
    }

    pub fn switch_times(&self) -> &[f64] {
        &self.switch_times
    }

    pub fn switch_intervals(&self) -> &[usize] {
        &self.switch_intervals
    }

    fn stalled(&self) -> bool {
        if self.seen <= self.policy.window {
            return false;
        }
        let wmax = self.recent.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let scale = wmax.max(self.best_before).abs();
        wmax - self.best_before < self.policy.eps_sat * scale
    }

    /// Feeds the value of `τ` measured at the end of `interval` (ending at `t`).
    pub fn advance(&mut self, tau_now: f64, t: f64, interval: usize) -> SwitchEvent {
        if self.completed {
            return SwitchEvent::None;
        }
        self.recent.push_back(tau_now);
        self.seen += 1;
        if self.recent.len() > self.policy.window {
            let old = self.recent.pop_front().unwrap();
            self.best_before = self.best_before.max(old);
        }
        let last = self.target + 1 == self.n;
        let stalled = self.stalled();
        let fire = if last { stalled } else { stalled || tau_now >= self.policy.tau_switch };
        if !fire {
            return SwitchEvent::None;
        }
        self.switch_times.push(t);
        self.switch_intervals.push(interval);
        self.recent.clear();
        self.best_before = f64::NEG_INFINITY;
        self.seen = 0;
        if last {
            self.completed = true;
            SwitchEvent::Completed
        } else {
            self.target += 1;
            SwitchEvent::Advanced
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rising_tau_does_not_switch() {
        let mut s = SchedulerState::new(5, SwitchPolicy::default()).unwrap();
        for k in 0..1000 {
            assert_eq!(s.advance(0.9 * k as f64 / 1000.0, k as f64, k), SwitchEvent::None);
        }
        assert_eq!(s.target(), 1);
    }

    #[test]
    fn threshold_switches() {
        let mut s = SchedulerState::new(5, SwitchPolicy::default()).unwrap();
        assert_eq!(s.advance(0.999, 0.001, 0), SwitchEvent::Advanced);
        assert_eq!(s.target(), 2);
        assert_eq!(s.switch_times(), &[0.001]);
    }

    #[test]
    fn flat_tau_stalls() {
        let policy = SwitchPolicy { window: 10, ..Default::default() };
        let mut s = SchedulerState::new(4, policy).unwrap();
        let mut fired = None;
        for k in 0..20 {
            if s.advance(0.5, k as f64, k) == SwitchEvent::Advanced {
                fired = Some(k);
                break;
            }
        }
        assert_eq!(fired, Some(10));
    }

    #[test]
    fn final_target_ignores_threshold() {
        let policy = SwitchPolicy { window: 5, ..Default::default() };
        let mut s = SchedulerState::new(2, policy).unwrap();
        assert_eq!(s.advance(0.99, 0.0, 0), SwitchEvent::None);
        let mut k = 1;
        while !s.is_completed() {
            s.advance(0.99, k as f64, k);
            k += 1;
        }
        assert_eq!(s.switch_intervals().len(), 1);
        assert_eq!(s.advance(1.0, 99.0, 99), SwitchEvent::None);
    }
}
