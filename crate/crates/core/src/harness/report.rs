use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;

use super::{
    progression_curve, robustness_stats, AblationTable, ActionStats, HarnessError,
    ProgressionCurve, RobustnessSummary, RunRecord,
};
use crate::kernel::TraceKind;

/// Hex SHA-256 of a canonical config rendering.
pub fn config_hash(canonical: &str) -> String {
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

/// Machine-readable results of one batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub config_hash: String,
    pub task: String,
    pub runs: Vec<RunRecord>,
    pub robustness: RobustnessSummary,
    pub actions: ActionStats,
    pub progression: Vec<ProgressionCurve>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ablation: Option<AblationTable>,
}

impl BatchReport {
    pub fn new(
        config_hash: String,
        task: impl Into<String>,
        runs: Vec<RunRecord>,
    ) -> Result<Self, HarnessError> {
        let robustness = robustness_stats(&runs)?;
        let mut actions = ActionStats::default();
        for r in &runs {
            actions.merge(&r.actions);
        }
        Ok(BatchReport {
            config_hash,
            task: task.into(),
            progression: runs.iter().map(progression_curve).collect(),
            runs,
            robustness,
            actions,
            ablation: None,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize") + "\n"
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "task: {}", self.task);
        let _ = writeln!(out, "config: {}", self.config_hash);
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "{:<10} {:>8} {:>8} {:>8} {:>8} {:>7}  termination",
            "run", "initial", "best", "last", "test", "calls"
        );
        for r in &self.runs {
            let best = r
                .validation_scores
                .iter()
                .copied()
                .fold(r.initial_score, f64::max);
            let last = r
                .validation_scores
                .last()
                .copied()
                .unwrap_or(r.initial_score);
            let _ = writeln!(
                out,
                "{:<10} {:>8.1} {:>8.1} {:>8.1} {:>8.1} {:>7}  {}",
                r.run_id,
                100.0 * r.initial_score,
                100.0 * best,
                100.0 * last,
                100.0 * r.final_test_score,
                r.spent_calls,
                r.termination_reason
            );
        }
        let s = &self.robustness;
        let _ = writeln!(out);
        let _ = writeln!(out, "events over {} runs:", s.n_runs);
        let _ = writeln!(
            out,
            "  accidental termination  {:>5.1}%",
            s.pct_accidental_termination
        );
        let _ = writeln!(
            out,
            "  temporary drop          {:>5.1}%",
            s.pct_temporary_drop
        );
        let _ = writeln!(
            out,
            "  optimization failure    {:>5.1}%",
            s.pct_optimization_failure
        );
        let _ = writeln!(out);
        let _ = writeln!(out, "actions ({} total):", self.actions.total());
        for kind in TraceKind::ALL {
            let n = self.actions.get(kind);
            if n > 0 {
                let _ = writeln!(out, "  {:<18} {n}", kind.name());
            }
        }
        if let Some(table) = &self.ablation {
            let _ = writeln!(out);
            out.push_str(&table.render());
        }
        out
    }
}
