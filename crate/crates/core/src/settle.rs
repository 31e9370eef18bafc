use serde::{Deserialize, Serialize};

use crate::actuator::positive;
use crate::error::Result;

/// A response counts as settled once `|θ'| < tolerance` has held
/// continuously for `window` seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SettleCriterion {
    /// rad/s
    pub tolerance: f64,
    /// s
    pub window: f64,
    /// Longest simulated time before giving up, s.
    pub horizon: f64,
}

impl Default for SettleCriterion {
    fn default() -> Self {
        Self {
            tolerance: 1e-4,
            window: 1.0,
            horizon: 120.0,
        }
    }
}

impl SettleCriterion {
    pub fn validate(&self) -> Result<()> {
        positive("tolerance", self.tolerance)?;
        positive("window", self.window)?;
        positive("horizon", self.horizon)
    }

    pub fn window_steps(&self, dt: f64) -> usize {
        ((self.window / dt) - 1e-9).ceil().max(1.0) as usize
    }

    pub fn horizon_steps(&self, dt: f64) -> usize {
        (self.horizon / dt).round() as usize
    }
}

/// Counts consecutive quiet steps.
#[derive(Debug, Clone)]
pub struct SettleTracker {
    tolerance: f64,
    needed: usize,
    quiet: usize,
}

impl SettleTracker {
    pub fn new(criterion: &SettleCriterion, dt: f64) -> Self {
        Self {
            tolerance: criterion.tolerance,
            needed: criterion.window_steps(dt),
            quiet: 0,
        }
    }

    /// Feeds one step's angular velocity; true once the window is full.
    pub fn observe(&mut self, theta_dot: f64) -> bool {
        if theta_dot.abs() < self.tolerance {
            self.quiet += 1;
        } else {
            self.quiet = 0;
        }
        self.is_settled()
    }

    pub fn is_settled(&self) -> bool {
        self.quiet >= self.needed
    }

    pub fn reset(&mut self) {
        self.quiet = 0;
    }
}
