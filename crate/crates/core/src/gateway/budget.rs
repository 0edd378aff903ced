use serde::{Deserialize, Serialize};
use std::fmt;
use std::ops::{Add, AddAssign};

/// Monetary amount in millionths of a cost unit.
///
/// Integer storage keeps budget arithmetic exact, so the spent total always
/// equals the sum of the per-call costs that produced it.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct CostUnits(pub u64);

impl CostUnits {
    pub const ZERO: CostUnits = CostUnits(0);
    const SCALE: f64 = 1_000_000.0;

    /// Rounds to the nearest micro-unit; negative and NaN inputs clamp to zero.
    pub fn from_f64(value: f64) -> Self {
        if !value.is_finite() || value <= 0.0 {
            return CostUnits(0);
        }
        CostUnits((value * Self::SCALE).round() as u64)
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / Self::SCALE
    }
}

impl Add for CostUnits {
    type Output = CostUnits;
    fn add(self, rhs: CostUnits) -> CostUnits {
        CostUnits(self.0.saturating_add(rhs.0))
    }
}

impl AddAssign for CostUnits {
    fn add_assign(&mut self, rhs: CostUnits) {
        *self = *self + rhs;
    }
}

impl std::iter::Sum for CostUnits {
    fn sum<I: Iterator<Item = CostUnits>>(iter: I) -> Self {
        iter.fold(CostUnits::ZERO, |a, b| a + b)
    }
}

impl fmt::Display for CostUnits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6}", self.as_f64())
    }
}

/// Cost of one or more backend calls.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostRecord {
    pub calls: u64,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub amount: CostUnits,
}

impl CostRecord {
    pub fn single_call(input_tokens: u64, output_tokens: u64, amount: CostUnits) -> Self {
        CostRecord {
            calls: 1,
            input_tokens,
            output_tokens,
            amount,
        }
    }
}

impl AddAssign for CostRecord {
    fn add_assign(&mut self, rhs: CostRecord) {
        self.calls += rhs.calls;
        self.input_tokens += rhs.input_tokens;
        self.output_tokens += rhs.output_tokens;
        self.amount += rhs.amount;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpendOutcome {
    /// Debited; both caps still have headroom.
    Debited,
    /// Debited and a cap was reached exactly; further calls are refused.
    Exhausted,
    /// Not debited: applying the cost would overshoot a cap.
    Refused,
}

/// Call and cost caps for one evolution process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    pub max_cost: CostUnits,
    pub max_calls: u64,
    pub spent_cost: CostUnits,
    pub spent_calls: u64,
}

impl Default for Budget {
    fn default() -> Self {
        // Roughly what one 30-cycle run cost against a frontier model.
        Budget::new(CostUnits::from_f64(15.0), 100_000)
    }
}

impl Budget {
    pub fn new(max_cost: CostUnits, max_calls: u64) -> Self {
        Budget {
            max_cost,
            max_calls,
            spent_cost: CostUnits::ZERO,
            spent_calls: 0,
        }
    }

    pub fn is_exhausted(&self) -> bool {
        self.spent_calls >= self.max_calls || self.spent_cost >= self.max_cost
    }

    pub fn remaining_calls(&self) -> u64 {
        self.max_calls.saturating_sub(self.spent_calls)
    }

    pub fn remaining_cost(&self) -> CostUnits {
        CostUnits(self.max_cost.0.saturating_sub(self.spent_cost.0))
    }

    /// Applies `cost` unless doing so would push spending past a cap.
    pub fn spend(&mut self, cost: &CostRecord) -> SpendOutcome {
        let calls = self.spent_calls.saturating_add(cost.calls);
        let amount = self.spent_cost + cost.amount;
        if calls > self.max_calls || amount > self.max_cost {
            return SpendOutcome::Refused;
        }
        self.spent_calls = calls;
        self.spent_cost = amount;
        if self.is_exhausted() && (cost.calls > 0 || cost.amount > CostUnits::ZERO) {
            SpendOutcome::Exhausted
        } else {
            SpendOutcome::Debited
        }
    }
}
