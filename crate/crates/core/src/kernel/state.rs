use serde::{Deserialize, Serialize};
use std::fmt;

use super::trace::TraceEvent;
use crate::gateway::Budget;
use crate::registry::SourceMap;
use crate::tasks::UtilityReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    /// Call, cost, or cycle budget ran out.
    BudgetExhausted,
    /// The decision step stopped asking for further improvement.
    Converged,
    /// The improvement loop broke itself (or an error went unhandled).
    AccidentalTermination,
    UserStop,
    /// The decision backend could not be reached.
    BackendUnavailable,
}

impl fmt::Display for TerminationReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TerminationReason::BudgetExhausted => "budget_exhausted",
            TerminationReason::Converged => "converged",
            TerminationReason::AccidentalTermination => "accidental_termination",
            TerminationReason::UserStop => "user_stop",
            TerminationReason::BackendUnavailable => "backend_unavailable",
        })
    }
}

/// Robustness events derived from the validation score sequence.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventFlags {
    /// Some validation score fell below the one before it.
    pub temporary_drop: bool,
    /// The last validation score is below the initial one.
    pub optimization_failure: bool,
}

impl EventFlags {
    /// Single definition shared by the kernel and the harness.
    pub fn from_scores(initial: f64, cycle_scores: &[f64]) -> Self {
        let mut prev = initial;
        let mut temporary_drop = false;
        for &s in cycle_scores {
            if s < prev {
                temporary_drop = true;
            }
            prev = s;
        }
        let last = cycle_scores.last().copied().unwrap_or(initial);
        EventFlags {
            temporary_drop,
            optimization_failure: last < initial,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestSnapshot {
    pub version: u64,
    pub score: f64,
}

/// Remaining headroom, as shown to the decision step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetView {
    pub remaining_calls: u64,
    pub remaining_cost: f64,
    pub remaining_cycles: usize,
}

impl BudgetView {
    pub fn new(budget: &Budget, remaining_cycles: usize) -> Self {
        BudgetView {
            remaining_calls: budget.remaining_calls(),
            remaining_cost: budget.remaining_cost().as_f64(),
            remaining_cycles,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvolutionState {
    pub depth: usize,
    pub step: u64,
    pub current_score: UtilityReport,
    pub best_snapshot: BestSnapshot,
    pub history: Vec<TraceEvent>,
    pub budget: BudgetView,
    /// Validation scores of the active policy, one per evaluation.
    pub validation_scores: Vec<f64>,
    /// Full source map captured by the latest self_inspect, shown to the
    /// next decision and then cleared.
    pub inspected: Option<SourceMap>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvolutionResult {
    pub final_policy_version: u64,
    pub initial_score: UtilityReport,
    pub validation_scores: Vec<f64>,
    pub best_snapshot: BestSnapshot,
    /// Test-split report of the restored policy.
    pub final_score: UtilityReport,
    pub trace: Vec<TraceEvent>,
    pub termination_reason: TerminationReason,
    pub event_flags: EventFlags,
    pub spent_calls: u64,
    pub spent_cost: f64,
}

impl EvolutionResult {
    pub fn final_validation_score(&self) -> f64 {
        self.validation_scores
            .last()
            .copied()
            .unwrap_or(self.initial_score.mean_score)
    }
}
