//! Append-only step log.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};
use thiserror::Error;

use super::action::ActionKind;

/// Kind of a trace record: an executed action, or a kernel-initiated event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceKind {
    SelfInspect,
    Interact,
    SelfUpdate,
    ContinueImprove,
    Think,
    RunCode,
    CallLlm,
    Evaluate,
    /// The decision unit itself failed.
    Decide,
    /// The kernel restored an earlier version.
    Rollback,
}

impl TraceKind {
    pub const ALL: [TraceKind; 10] = [
        TraceKind::SelfInspect,
        TraceKind::Interact,
        TraceKind::SelfUpdate,
        TraceKind::ContinueImprove,
        TraceKind::Think,
        TraceKind::RunCode,
        TraceKind::CallLlm,
        TraceKind::Evaluate,
        TraceKind::Decide,
        TraceKind::Rollback,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TraceKind::Decide => "decide",
            TraceKind::Rollback => "rollback",
            other => other.as_action().map(ActionKind::name).unwrap_or("?"),
        }
    }

    pub fn as_action(self) -> Option<ActionKind> {
        Some(match self {
            TraceKind::SelfInspect => ActionKind::SelfInspect,
            TraceKind::Interact => ActionKind::Interact,
            TraceKind::SelfUpdate => ActionKind::SelfUpdate,
            TraceKind::ContinueImprove => ActionKind::ContinueImprove,
            TraceKind::Think => ActionKind::Think,
            TraceKind::RunCode => ActionKind::RunCode,
            TraceKind::CallLlm => ActionKind::CallLlm,
            TraceKind::Evaluate => ActionKind::Evaluate,
            TraceKind::Decide | TraceKind::Rollback => return None,
        })
    }
}

impl From<ActionKind> for TraceKind {
    fn from(kind: ActionKind) -> Self {
        match kind {
            ActionKind::SelfInspect => TraceKind::SelfInspect,
            ActionKind::Interact => TraceKind::Interact,
            ActionKind::SelfUpdate => TraceKind::SelfUpdate,
            ActionKind::ContinueImprove => TraceKind::ContinueImprove,
            ActionKind::Think => TraceKind::Think,
            ActionKind::RunCode => TraceKind::RunCode,
            ActionKind::CallLlm => TraceKind::CallLlm,
            ActionKind::Evaluate => TraceKind::Evaluate,
        }
    }
}

impl fmt::Display for TraceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub step: u64,
    pub depth: usize,
    pub action_kind: TraceKind,
    pub unit_touched: Option<String>,
    pub score_before: Option<f64>,
    pub score_after: Option<f64>,
    pub error_text: Option<String>,
    /// Cost units spent while this step ran.
    pub cost_delta: f64,
    pub timestamp: u64,
    /// Active registry version after the step.
    pub version: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_before: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_after: Option<String>,
}

impl TraceEvent {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("trace events always serialize")
    }

    /// One-line summary used in decision prompts and replays.
    pub fn summary(&self) -> String {
        let mut s = format!(
            "[step {} depth {}] {}",
            self.step, self.depth, self.action_kind
        );
        if let Some(unit) = &self.unit_touched {
            s.push_str(&format!(" {unit}"));
        }
        match (self.score_before, self.score_after) {
            (Some(b), Some(a)) => s.push_str(&format!(" score {:.3} -> {:.3}", b, a)),
            (None, Some(a)) => s.push_str(&format!(" score {:.3}", a)),
            _ => {}
        }
        s.push_str(&format!(" (v{})", self.version));
        if let Some(err) = &self.error_text {
            s.push_str(&format!(" ERROR: {err}"));
        }
        if let Some(detail) = &self.detail {
            s.push_str(&format!(" | {detail}"));
        }
        s
    }
}

/// Source of trace timestamps.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Clock {
    /// Timestamp equals the step number; traces are reproducible byte for byte.
    #[default]
    Logical,
    /// Milliseconds since the Unix epoch.
    Wall,
}

impl Clock {
    pub fn stamp(self, step: u64) -> u64 {
        match self {
            Clock::Logical => step,
            Clock::Wall => SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis() as u64)
                .unwrap_or(0),
        }
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt trace record on line {line}: {message}")]
    Corrupt { line: usize, message: String },
}

/// Writes events as line-delimited JSON, flushing after each record.
pub struct TraceWriter {
    out: BufWriter<File>,
}

impl TraceWriter {
    pub fn create(path: &Path) -> Result<Self, TraceError> {
        Ok(TraceWriter {
            out: BufWriter::new(File::create(path)?),
        })
    }

    pub fn append(&mut self, event: &TraceEvent) -> Result<(), TraceError> {
        writeln!(self.out, "{}", event.to_line())?;
        self.out.flush()?;
        Ok(())
    }
}

pub fn write_trace(path: &Path, events: &[TraceEvent]) -> Result<(), TraceError> {
    let mut w = TraceWriter::create(path)?;
    for e in events {
        w.append(e)?;
    }
    Ok(())
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceEvent>, TraceError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let event = serde_json::from_str(&line).map_err(|e| TraceError::Corrupt {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(event);
    }
    Ok(out)
}

/// Serializes a whole trace to the on-disk text form.
pub fn trace_text(events: &[TraceEvent]) -> String {
    events.iter().map(|e| e.to_line() + "\n").collect()
}
