//! Oracle-cost accounting.

use std::ops::AddAssign;

/// Monotone oracle-access counters for one run.
///
/// `sfo` counts every stochastic-gradient evaluation the code performs: a
/// differential advance with `S2` samples evaluates each sampled component
/// at two points and is charged `2 * S2`. `sfo_samples` follows the textbook
/// convention in which the same advance is charged `S2`, which is the
/// convention the closed-form cost bounds are written in.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CostLedger {
    pub sfo: u64,
    pub sfo_samples: u64,
    pub izo: u64,
    pub hvp: u64,
}

impl CostLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Charge `evals` gradient evaluations, counted as `samples` under the
    /// textbook convention.
    #[inline]
    pub fn charge_sfo(&mut self, evals: u64, samples: u64) {
        self.sfo += evals;
        self.sfo_samples += samples;
    }

    #[inline]
    pub fn charge_izo(&mut self, evals: u64) {
        self.izo += evals;
    }

    #[inline]
    pub fn charge_hvp(&mut self, evals: u64) {
        self.hvp += evals;
    }

    /// Total first-order accesses, Hessian-vector products included.
    pub fn first_order_total(&self) -> u64 {
        self.sfo + self.hvp
    }

    /// True when every counter of `self` is at least the one in `earlier`.
    pub fn dominates(&self, earlier: &CostLedger) -> bool {
        self.sfo >= earlier.sfo
            && self.sfo_samples >= earlier.sfo_samples
            && self.izo >= earlier.izo
            && self.hvp >= earlier.hvp
    }
}

impl AddAssign for CostLedger {
    fn add_assign(&mut self, rhs: Self) {
        self.sfo += rhs.sfo;
        self.sfo_samples += rhs.sfo_samples;
        self.izo += rhs.izo;
        self.hvp += rhs.hvp;
    }
}
