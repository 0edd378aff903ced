//! Statistics over runs: confidence intervals, action counts, robustness
//! events, progression curves and ablation batches.

pub mod bootstrap;
pub mod plot;
pub mod report;

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

use crate::kernel::{
    AblationMask, EventFlags, EvolutionResult, TerminationReason, TraceEvent, TraceKind,
};

pub use bootstrap::bootstrap_ci;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarnessError {
    #[error("empty input")]
    EmptyInput,
    #[error("{0}")]
    InvalidArgument(String),
}

/// Count of trace events per kind; every kind is present.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionStats(pub BTreeMap<TraceKind, usize>);

impl ActionStats {
    pub fn get(&self, kind: TraceKind) -> usize {
        self.0.get(&kind).copied().unwrap_or(0)
    }

    pub fn total(&self) -> usize {
        self.0.values().sum()
    }

    pub fn merge(&mut self, other: &ActionStats) {
        for (k, v) in &other.0 {
            *self.0.entry(*k).or_insert(0) += v;
        }
    }
}

impl Default for ActionStats {
    fn default() -> Self {
        ActionStats(TraceKind::ALL.into_iter().map(|k| (k, 0)).collect())
    }
}

pub fn action_stats(trace: &[TraceEvent]) -> ActionStats {
    let mut stats = ActionStats::default();
    for e in trace {
        *stats.0.entry(e.action_kind).or_insert(0) += 1;
    }
    stats
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub seed: u64,
    pub initial_score: f64,
    /// Validation score after each interact, in order.
    pub validation_scores: Vec<f64>,
    pub final_test_score: f64,
    pub termination_reason: TerminationReason,
    pub event_flags: EventFlags,
    #[serde(default)]
    pub spent_calls: u64,
    #[serde(default)]
    pub spent_cost: f64,
    #[serde(default)]
    pub actions: ActionStats,
}

impl RunRecord {
    pub fn from_result(run_id: impl Into<String>, seed: u64, result: &EvolutionResult) -> Self {
        RunRecord {
            run_id: run_id.into(),
            seed,
            initial_score: result.initial_score.mean_score,
            validation_scores: result.validation_scores.clone(),
            final_test_score: result.final_score.mean_score,
            termination_reason: result.termination_reason,
            event_flags: result.event_flags,
            spent_calls: result.spent_calls,
            spent_cost: result.spent_cost,
            actions: action_stats(&result.trace),
        }
    }

    /// Stored flags agree with the flags recomputed from the scores.
    pub fn flags_consistent(&self) -> bool {
        EventFlags::from_scores(self.initial_score, &self.validation_scores) == self.event_flags
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessSummary {
    pub n_runs: usize,
    pub pct_accidental_termination: f64,
    pub pct_temporary_drop: f64,
    pub pct_optimization_failure: f64,
}

fn pct(count: usize, n: usize) -> f64 {
    count as f64 * 100.0 / n as f64
}

pub fn robustness_stats(runs: &[RunRecord]) -> Result<RobustnessSummary, HarnessError> {
    if runs.is_empty() {
        return Err(HarnessError::EmptyInput);
    }
    let n = runs.len();
    let count = |f: &dyn Fn(&RunRecord) -> bool| runs.iter().filter(|r| f(r)).count();
    Ok(RobustnessSummary {
        n_runs: n,
        pct_accidental_termination: pct(
            count(&|r| r.termination_reason == TerminationReason::AccidentalTermination),
            n,
        ),
        pct_temporary_drop: pct(count(&|r| r.event_flags.temporary_drop), n),
        pct_optimization_failure: pct(count(&|r| r.event_flags.optimization_failure), n),
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProgressionCurve {
    /// (cycle, score) with cycles counted from 1.
    pub points: Vec<(usize, f64)>,
    pub best_so_far: Vec<f64>,
}

pub fn progression_from_scores(scores: &[f64]) -> ProgressionCurve {
    let mut best = f64::NEG_INFINITY;
    ProgressionCurve {
        points: scores
            .iter()
            .enumerate()
            .map(|(i, s)| (i + 1, *s))
            .collect(),
        best_so_far: scores
            .iter()
            .map(|s| {
                best = best.max(*s);
                best
            })
            .collect(),
    }
}

pub fn progression_curve(run: &RunRecord) -> ProgressionCurve {
    progression_from_scores(&run.validation_scores)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub mask: AblationMask,
    pub label: String,
    pub seeds: Vec<u64>,
    pub runs: Vec<RunRecord>,
    /// Runs that failed to produce a record.
    pub errors: Vec<String>,
}

impl AblationRow {
    pub fn mean_final_score(&self) -> Option<f64> {
        (!self.runs.is_empty()).then(|| {
            self.runs.iter().map(|r| r.final_test_score).sum::<f64>() / self.runs.len() as f64
        })
    }

    pub fn count(&self, reason: TerminationReason) -> usize {
        self.runs
            .iter()
            .filter(|r| r.termination_reason == reason)
            .count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn render(&self) -> String {
        let mut out = format!(
            "{:<32} {:>6} {:>12} {:>10} {:>10}\n",
            "configuration", "runs", "final score", "converged", "accidental"
        );
        for row in &self.rows {
            let score = row
                .mean_final_score()
                .map_or("-".to_string(), |s| format!("{:.1}", 100.0 * s));
            out.push_str(&format!(
                "{:<32} {:>6} {:>12} {:>10} {:>10}\n",
                row.label,
                row.runs.len(),
                score,
                row.count(TerminationReason::Converged),
                row.count(TerminationReason::AccidentalTermination),
            ));
            for e in &row.errors {
                out.push_str(&format!("    error: {e}\n"));
            }
        }
        out
    }
}

/// One batch per mask, every batch over the same seeds.
pub fn run_ablation<F>(
    masks: &[AblationMask],
    seeds: &[u64],
    mut run: F,
) -> Result<AblationTable, HarnessError>
where
    F: FnMut(&AblationMask, u64) -> Result<RunRecord, String>,
{
    if masks.is_empty() {
        return Err(HarnessError::InvalidArgument(
            "no ablation masks given".into(),
        ));
    }
    if seeds.is_empty() {
        return Err(HarnessError::InvalidArgument("no seeds given".into()));
    }
    let rows = masks
        .iter()
        .map(|mask| {
            let mut row = AblationRow {
                mask: mask.clone(),
                label: mask.label(),
                seeds: seeds.to_vec(),
                runs: Vec::new(),
                errors: Vec::new(),
            };
            for &seed in seeds {
                match run(mask, seed) {
                    Ok(r) => row.runs.push(r),
                    Err(e) => row.errors.push(format!("seed {seed}: {e}")),
                }
            }
            row
        })
        .collect();
    Ok(AblationTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(reason: TerminationReason, initial: f64, scores: &[f64]) -> RunRecord {
        RunRecord {
            run_id: "r".into(),
            seed: 0,
            initial_score: initial,
            validation_scores: scores.to_vec(),
            final_test_score: scores.last().copied().unwrap_or(initial),
            termination_reason: reason,
            event_flags: EventFlags::from_scores(initial, scores),
            spent_calls: 0,
            spent_cost: 0.0,
            actions: ActionStats::default(),
        }
    }

    #[test]
    fn empty_trace_counts_are_zero() {
        let s = action_stats(&[]);
        assert_eq!(s.0.len(), TraceKind::ALL.len());
        assert_eq!(s.total(), 0);
    }

    #[test]
    fn robustness_percentages() {
        let mut runs: Vec<_> = (0..96)
            .map(|_| record(TerminationReason::Converged, 0.2, &[0.3, 0.4]))
            .collect();
        runs.extend((0..4).map(|_| record(TerminationReason::AccidentalTermination, 0.2, &[])));
        let s = robustness_stats(&runs).unwrap();
        assert_eq!(s.pct_accidental_termination, 4.0);
        assert_eq!(s.pct_temporary_drop, 0.0);
        let single = [record(TerminationReason::Converged, 0.5, &[0.4])];
        assert_eq!(
            robustness_stats(&single).unwrap().pct_optimization_failure,
            100.0
        );
        assert_eq!(robustness_stats(&[]), Err(HarnessError::EmptyInput));
    }

    #[test]
    fn progression_tracks_running_max() {
        let c = progression_from_scores(&[0.2, 0.5, 0.4, 0.6]);
        assert_eq!(c.best_so_far, vec![0.2, 0.5, 0.5, 0.6]);
        assert_eq!(c.points[0], (1, 0.2));
        assert_eq!(progression_from_scores(&[]), ProgressionCurve::default());
    }

    #[test]
    fn ablation_uses_same_seeds_per_mask() {
        let masks = AblationMask::canonical();
        let mut seen = Vec::new();
        let table = run_ablation(&masks, &[1, 2], |m, s| {
            seen.push((m.clone(), s));
            Ok(record(TerminationReason::Converged, 0.1, &[0.2]))
        })
        .unwrap();
        assert_eq!(table.rows.len(), 4);
        assert!(table.rows.iter().all(|r| r.seeds == vec![1, 2]));
        assert_eq!(seen.len(), 8);
        assert!(run_ablation(&[], &[1], |_, _| Err("x".into())).is_err());
    }
}
