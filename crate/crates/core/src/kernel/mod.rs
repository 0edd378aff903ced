//! The recursive self-improvement loop.
//!
//! `decide`, `execute_action` and `handle_error` are registry units and are
//! looked up afresh on every call, so a patch to any of them changes the
//! loop from its next invocation on. `execute_action` returns a directive
//! map (`op` plus payload) which the host carries out; registry mutation,
//! evaluation and subprocesses therefore stay outside the script engine.

pub mod action;
pub mod goal;
pub mod replay;
pub mod seed;
pub mod state;
pub mod trace;

use rhai::{Dynamic, Map};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use thiserror::Error;

use crate::gateway::{CostUnits, Gateway, LlmCall, Tier};
use crate::policies::SolverAnswer;
use crate::registry::{Provenance, Registry};
use crate::runtime::{actions_from_dynamic, display, to_json, Agent, DecisionSettings};
use crate::sandbox::{run_code, SandboxConfig};
use crate::tasks::{evaluate_policy, Environment, Split, TaskError, UtilityReport};

pub use action::{AblationMask, Action, ActionKind, Capability};
pub use goal::GoalPrompt;
pub use state::{
    BestSnapshot, BudgetView, EventFlags, EvolutionResult, EvolutionState, TerminationReason,
};
pub use trace::{read_trace, write_trace, Clock, TraceEvent, TraceKind, TraceWriter};

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("policy unit {0:?} is not registered")]
    UnknownPolicy(String),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Trace(#[from] trace::TraceError),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EvolutionConfig {
    /// Unit scored by interact and by the final test evaluation.
    pub policy_unit: String,
    /// Improvement cycles: the first decision plus one per recursion.
    pub max_cycles: usize,
    /// Trace events shown to each decision.
    pub history_window: usize,
    pub ablation: AblationMask,
    /// A validation score below this fraction of the best triggers an
    /// immediate rollback to the best version.
    pub collapse_ratio: f64,
    pub decision: DecisionSettings,
    /// Solver-side model calls always use the weak tier.
    pub constrained: bool,
    pub sandbox: SandboxConfig,
    pub clock: Clock,
    /// Stream events here as they happen.
    #[serde(skip)]
    pub trace_path: Option<PathBuf>,
    #[serde(skip)]
    pub stop: Option<Arc<AtomicBool>>,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        EvolutionConfig {
            policy_unit: "solver".into(),
            max_cycles: 30,
            history_window: 20,
            ablation: AblationMask::none(),
            collapse_ratio: 0.5,
            decision: DecisionSettings::default(),
            constrained: false,
            sandbox: SandboxConfig::default(),
            clock: Clock::Logical,
            trace_path: None,
            stop: None,
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<(), KernelError> {
        if self.policy_unit.trim().is_empty() {
            return Err(KernelError::InvalidConfig("policy_unit is empty".into()));
        }
        if !(0.0..=1.0).contains(&self.collapse_ratio) {
            return Err(KernelError::InvalidConfig(format!(
                "collapse_ratio {} outside [0, 1]",
                self.collapse_ratio
            )));
        }
        if self.sandbox.timeout_secs <= 0.0 {
            return Err(KernelError::InvalidConfig(
                "sandbox timeout must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// What the host does for one action, as chosen by `execute_action`.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
enum Directive {
    SelfInspect,
    Evaluate {
        #[serde(default)]
        split: Option<Split>,
        #[serde(default)]
        unit: Option<String>,
    },
    ApplyPatch {
        unit: String,
        source: String,
    },
    Recurse,
    Record {
        #[serde(default)]
        text: String,
    },
    RunCode {
        command: String,
        #[serde(default)]
        interpreter: Option<String>,
    },
    CallLlm {
        request: LlmCall,
    },
}

impl Directive {
    fn capability(&self) -> Option<Capability> {
        match self {
            Directive::Record { .. } => Some(Capability::Thinking),
            Directive::RunCode { .. } => Some(Capability::CodeRunning),
            Directive::CallLlm { .. } => Some(Capability::LlmCalling),
            _ => None,
        }
    }
}

enum Flow {
    Next,
    Stop(TerminationReason),
}

/// A failed action, before `handle_error` has seen it.
#[derive(Default)]
struct Failure {
    message: String,
    unit: Option<String>,
    source_before: Option<String>,
    source_after: Option<String>,
    score_after: Option<f64>,
}

impl Failure {
    fn new(message: impl Into<String>) -> Self {
        Failure {
            message: message.into(),
            ..Default::default()
        }
    }
}

/// Fields of a new trace event; the kernel fills in step, time, cost and version.
#[derive(Default)]
struct EventDraft {
    unit_touched: Option<String>,
    score_before: Option<f64>,
    score_after: Option<f64>,
    error_text: Option<String>,
    detail: Option<String>,
    source_before: Option<String>,
    source_after: Option<String>,
}

struct Kernel<'a> {
    env: &'a Environment,
    registry: &'a Registry,
    agent: Agent,
    goal: &'a GoalPrompt,
    config: &'a EvolutionConfig,
    writer: Option<TraceWriter>,
    write_error: Option<trace::TraceError>,
    cost_marker: CostUnits,
    cycles: usize,
}

/// Runs the loop on `registry` until it converges, runs out of budget or
/// breaks itself, then restores the best validated version and scores it on
/// the test split.
pub fn run_evolution(
    env: &Environment,
    registry: &Registry,
    gateway: Arc<Gateway>,
    goal: &GoalPrompt,
    config: &EvolutionConfig,
) -> Result<EvolutionResult, KernelError> {
    config.validate()?;
    if !registry.has_unit(&config.policy_unit) {
        return Err(KernelError::UnknownPolicy(config.policy_unit.clone()));
    }
    let agent = Agent::new(gateway, config.constrained, config.decision);
    let writer = match &config.trace_path {
        Some(path) => Some(TraceWriter::create(path)?),
        None => None,
    };
    let mut kernel = Kernel {
        env,
        registry,
        agent,
        goal,
        config,
        writer,
        write_error: None,
        cost_marker: CostUnits::ZERO,
        cycles: 0,
    };

    let initial = kernel.evaluate(&config.policy_unit, Split::Validation)?;
    let _ = kernel.agent.take_flags();
    registry
        .record_score(registry.version(), initial.mean_score)
        .expect("active version exists");
    kernel.cost_marker = kernel.agent.gateway().budget().spent_cost;
    let mut st = EvolutionState {
        depth: 0,
        step: 0,
        best_snapshot: BestSnapshot {
            version: registry.version(),
            score: initial.mean_score,
        },
        current_score: initial.clone(),
        history: Vec::new(),
        budget: BudgetView::new(&kernel.agent.gateway().budget(), config.max_cycles),
        validation_scores: Vec::new(),
        inspected: None,
    };

    let termination = if config.max_cycles == 0 {
        TerminationReason::BudgetExhausted
    } else {
        kernel.cycles = 1;
        match kernel.self_improve(&mut st, 0) {
            Flow::Next => TerminationReason::Converged,
            Flow::Stop(reason) => reason,
        }
    };

    let best = st.best_snapshot.clone();
    let best_hash = registry
        .snapshot(best.version)
        .map(|m| m.source_hash())
        .ok();
    if best_hash.is_some_and(|h| h != registry.source_hash()) {
        registry
            .rollback_with(
                best.version,
                Provenance::step(st.step, "restore best version"),
            )
            .expect("best version exists");
        kernel.push(
            &mut st,
            0,
            TraceKind::Rollback,
            EventDraft {
                score_after: Some(best.score),
                detail: Some(format!("end of run: restored version {}", best.version)),
                ..Default::default()
            },
        );
    }
    let final_score = kernel.evaluate(&config.policy_unit, Split::Test)?;
    if let Some(e) = kernel.write_error.take() {
        return Err(e.into());
    }
    let budget = kernel.agent.gateway().budget();
    Ok(EvolutionResult {
        final_policy_version: registry.version(),
        event_flags: EventFlags::from_scores(initial.mean_score, &st.validation_scores),
        initial_score: initial,
        validation_scores: st.validation_scores,
        best_snapshot: best,
        final_score,
        trace: st.history,
        termination_reason: termination,
        spent_calls: budget.spent_calls,
        spent_cost: budget.spent_cost.as_f64(),
    })
}

fn err_map(action: &str, message: &str, unit: Option<&str>) -> Dynamic {
    let mut m = Map::new();
    m.insert("action".into(), action.into());
    m.insert("message".into(), message.into());
    m.insert(
        "unit".into(),
        unit.map_or(Dynamic::UNIT, |u| Dynamic::from(u.to_string())),
    );
    Dynamic::from_map(m)
}

impl Kernel<'_> {
    fn evaluate(&self, unit: &str, split: Split) -> Result<UtilityReport, TaskError> {
        let solve = |input: &str| {
            self.registry
                .call(unit, (self.agent.clone(), input.to_string()))
                .map(SolverAnswer::from_dynamic)
        };
        evaluate_policy(self.env, &solve, split)
    }

    fn push(&mut self, st: &mut EvolutionState, depth: usize, kind: TraceKind, draft: EventDraft) {
        let spent = self.agent.gateway().budget().spent_cost;
        let delta = CostUnits(spent.0.saturating_sub(self.cost_marker.0));
        self.cost_marker = spent;
        let event = TraceEvent {
            step: st.step,
            depth,
            action_kind: kind,
            unit_touched: draft.unit_touched,
            score_before: draft.score_before,
            score_after: draft.score_after,
            error_text: draft.error_text,
            cost_delta: delta.as_f64(),
            timestamp: self.config.clock.stamp(st.step),
            version: self.registry.version(),
            detail: draft.detail,
            source_before: draft.source_before,
            source_after: draft.source_after,
        };
        if let Some(w) = &mut self.writer {
            if let Err(e) = w.append(&event) {
                self.write_error.get_or_insert(e);
            }
        }
        tracing::debug!("{}", event.summary());
        st.step += 1;
        st.history.push(event);
    }

    fn stopped(&self) -> bool {
        self.config
            .stop
            .as_ref()
            .is_some_and(|s| s.load(Ordering::SeqCst))
    }

    fn self_improve(&mut self, st: &mut EvolutionState, depth: usize) -> Flow {
        if self.stopped() {
            return Flow::Stop(TerminationReason::UserStop);
        }
        if self.agent.gateway().budget().is_exhausted() {
            return Flow::Stop(TerminationReason::BudgetExhausted);
        }
        st.depth = depth;
        st.budget = BudgetView::new(
            &self.agent.gateway().budget(),
            self.config.max_cycles.saturating_sub(self.cycles),
        );
        let actions = match self.decide(st, depth) {
            Ok(actions) => actions,
            Err(reason) => return Flow::Stop(reason),
        };
        let actions: Vec<Action> = actions
            .into_iter()
            .filter(|a| self.config.ablation.allows(a.kind()))
            .collect();
        for action in actions {
            if self.stopped() {
                return Flow::Stop(TerminationReason::UserStop);
            }
            let kind = action.kind();
            match self.execute(st, depth, action) {
                Ok(Flow::Next) => {}
                Ok(stop) => return stop,
                Err(failure) => return self.fail(st, depth, kind, failure),
            }
        }
        Flow::Next
    }

    /// Starts the next improvement cycle one level deeper.
    fn recurse(&mut self, st: &mut EvolutionState, depth: usize) -> Flow {
        if self.cycles >= self.config.max_cycles {
            return Flow::Stop(TerminationReason::BudgetExhausted);
        }
        self.cycles += 1;
        self.self_improve(st, depth + 1)
    }

    /// Records a failed action, lets `handle_error` annotate it, and moves on
    /// to a fresh decision. The rest of the current sequence is dropped.
    fn fail(
        &mut self,
        st: &mut EvolutionState,
        depth: usize,
        kind: ActionKind,
        failure: Failure,
    ) -> Flow {
        let mut draft = EventDraft {
            unit_touched: failure.unit.clone(),
            score_before: None,
            score_after: failure.score_after,
            error_text: Some(failure.message.clone()),
            detail: None,
            source_before: failure.source_before,
            source_after: failure.source_after,
        };
        if self.config.ablation.disables(Capability::ErrorHandling) {
            draft.detail = Some("error handling disabled; run terminated".into());
            self.push(st, depth, kind.into(), draft);
            return Flow::Stop(TerminationReason::AccidentalTermination);
        }
        let err = err_map(kind.name(), &failure.message, failure.unit.as_deref());
        match self
            .registry
            .call("handle_error", (self.agent.clone(), err))
        {
            Ok(note) => {
                draft.detail = Some(display(&note));
                self.push(st, depth, kind.into(), draft);
                if let Some(reason) = self.host_stop() {
                    return Flow::Stop(reason);
                }
                self.recurse(st, depth)
            }
            Err(e) => {
                draft.detail = Some(format!("handle_error failed: {e}"));
                self.push(st, depth, kind.into(), draft);
                Flow::Stop(TerminationReason::AccidentalTermination)
            }
        }
    }

    /// Budget or backend conditions raised inside host calls since the last check.
    fn host_stop(&self) -> Option<TerminationReason> {
        let flags = self.agent.take_flags();
        if flags.budget_exhausted {
            Some(TerminationReason::BudgetExhausted)
        } else if flags.backend_unavailable.is_some() {
            Some(TerminationReason::BackendUnavailable)
        } else {
            None
        }
    }

    fn render_context(&mut self, st: &mut EvolutionState) -> String {
        let s = &st.current_score;
        let mut out = format!(
            "Active version: {}\nValidation score of `{}`: {:.4} (95% CI {:.1}-{:.1}, n={})\nBest so far: version {} with {:.4}\n",
            self.registry.version(),
            self.config.policy_unit,
            s.mean_score,
            s.ci_low,
            s.ci_high,
            s.n,
            st.best_snapshot.version,
            st.best_snapshot.score,
        );
        out.push_str(&format!(
            "Budget left: {} calls, {:.4} cost units, {} cycles\n",
            st.budget.remaining_calls, st.budget.remaining_cost, st.budget.remaining_cycles
        ));
        let worst = s.worst(3);
        if !worst.is_empty() {
            out.push_str("Examples it got wrong:\n");
            for o in worst {
                let input = self
                    .env
                    .validation
                    .iter()
                    .find(|e| e.id == o.example_id)
                    .map(|e| e.input.as_str())
                    .unwrap_or("");
                out.push_str(&format!("- input: {input} | answer: {:?}", o.answer));
                if let Some(e) = &o.error {
                    out.push_str(&format!(" | error: {e}"));
                }
                out.push('\n');
            }
        }
        let window = self.config.history_window;
        let older = st.history.len().saturating_sub(window);
        if older > 0 {
            let errors = st.history[..older]
                .iter()
                .filter(|e| e.error_text.is_some())
                .count();
            out.push_str(&format!(
                "Earlier: {older} steps, {errors} of them failed.\n"
            ));
        }
        if older < st.history.len() {
            out.push_str("Recent steps:\n");
            for e in &st.history[older..] {
                out.push_str(&e.summary());
                out.push('\n');
            }
        }
        if let Some(map) = st.inspected.take() {
            out.push_str("\nCurrent code:\n");
            out.push_str(&map.render());
        }
        out
    }

    fn decide(
        &mut self,
        st: &mut EvolutionState,
        depth: usize,
    ) -> Result<Vec<Action>, TerminationReason> {
        let mut view = Map::new();
        view.insert("goal".into(), self.goal.render().into());
        view.insert("context".into(), self.render_context(st).into());
        view.insert("depth".into(), (depth as i64).into());
        let result = self
            .registry
            .call("decide", (self.agent.clone(), Dynamic::from_map(view)));
        let flags = self.agent.take_flags();
        if flags.budget_exhausted {
            return Err(TerminationReason::BudgetExhausted);
        }
        let message = match result.map(actions_from_dynamic) {
            Ok(Ok(actions)) if actions.is_empty() && flags.backend_unavailable.is_some() => {
                let msg = flags.backend_unavailable.unwrap_or_default();
                self.push(
                    st,
                    depth,
                    TraceKind::Decide,
                    EventDraft {
                        error_text: Some(format!("backend unavailable: {msg}")),
                        ..Default::default()
                    },
                );
                return Err(TerminationReason::BackendUnavailable);
            }
            Ok(Ok(actions)) => return Ok(actions),
            Ok(Err(e)) => e,
            Err(e) => e,
        };
        if self.agent.gateway().budget().is_exhausted() {
            return Err(TerminationReason::BudgetExhausted);
        }
        self.push(
            st,
            depth,
            TraceKind::Decide,
            EventDraft {
                unit_touched: Some("decide".into()),
                error_text: Some(message),
                ..Default::default()
            },
        );
        Err(TerminationReason::AccidentalTermination)
    }

    fn execute(
        &mut self,
        st: &mut EvolutionState,
        depth: usize,
        action: Action,
    ) -> Result<Flow, Failure> {
        let kind = action.kind();
        let arg = rhai::serde::to_dynamic(&action).map_err(|e| Failure::new(e.to_string()))?;
        let raw = self
            .registry
            .call("execute_action", (self.agent.clone(), arg))
            .map_err(Failure::new)?;
        let json =
            to_json(&raw).map_err(|e| Failure::new(format!("execute_action returned {e}")))?;
        let directive: Directive = serde_json::from_value(json).map_err(|e| {
            Failure::new(format!("execute_action returned an invalid directive: {e}"))
        })?;
        if let Some(cap) = directive.capability() {
            if self.config.ablation.disables(cap) {
                return Err(Failure::new(format!(
                    "capability {} is disabled",
                    cap.name()
                )));
            }
        }
        match directive {
            Directive::SelfInspect => {
                let map = self.registry.self_inspect();
                let detail = format!("{} units at version {}", map.units.len(), map.version);
                st.inspected = Some(map);
                self.push(
                    st,
                    depth,
                    kind.into(),
                    EventDraft {
                        detail: Some(detail),
                        ..Default::default()
                    },
                );
                Ok(Flow::Next)
            }
            Directive::Evaluate { split, unit } => self.interact(st, depth, kind, split, unit),
            Directive::ApplyPatch { unit, source } => {
                let before = self.registry.self_inspect().source(&unit).map(String::from);
                let res = self.registry.apply_patch_with(
                    &unit,
                    &source,
                    Provenance::step(st.step, format!("self_update {unit}")),
                );
                if !res.accepted {
                    return Err(Failure {
                        message: res.diagnostic.unwrap_or_else(|| "patch rejected".into()),
                        unit: Some(unit),
                        source_before: before,
                        source_after: Some(source),
                        score_after: None,
                    });
                }
                self.push(
                    st,
                    depth,
                    kind.into(),
                    EventDraft {
                        unit_touched: Some(unit),
                        source_before: before,
                        source_after: Some(source),
                        ..Default::default()
                    },
                );
                Ok(Flow::Next)
            }
            Directive::Recurse => {
                self.push(st, depth, kind.into(), EventDraft::default());
                Ok(self.recurse(st, depth))
            }
            Directive::Record { text } => {
                self.push(
                    st,
                    depth,
                    kind.into(),
                    EventDraft {
                        detail: Some(text),
                        ..Default::default()
                    },
                );
                Ok(Flow::Next)
            }
            Directive::RunCode {
                command,
                interpreter,
            } => {
                let interp = interpreter.unwrap_or_else(|| "sh".into());
                let out = run_code(&command, &interp, &self.config.sandbox)
                    .map_err(|e| Failure::new(format!("run_code: {e}")))?;
                if !out.success() {
                    return Err(Failure::new(format!("run_code: {}", out.summary())));
                }
                self.push(
                    st,
                    depth,
                    kind.into(),
                    EventDraft {
                        detail: Some(out.summary()),
                        ..Default::default()
                    },
                );
                Ok(Flow::Next)
            }
            Directive::CallLlm { request } => {
                let resp = self.agent.call_llm(request, Tier::Weak);
                if let Some(reason) = self.host_stop() {
                    return Ok(Flow::Stop(reason));
                }
                let resp = resp.map_err(|e| Failure::new(format!("call_llm: {e}")))?;
                let detail = serde_json::to_string(&resp.records).expect("records serialize");
                self.push(
                    st,
                    depth,
                    kind.into(),
                    EventDraft {
                        detail: Some(detail),
                        ..Default::default()
                    },
                );
                Ok(Flow::Next)
            }
        }
    }

    fn interact(
        &mut self,
        st: &mut EvolutionState,
        depth: usize,
        kind: ActionKind,
        split: Option<Split>,
        unit: Option<String>,
    ) -> Result<Flow, Failure> {
        if split == Some(Split::Test) {
            return Err(Failure::new(
                "the test split is reserved for the final evaluation",
            ));
        }
        let unit = unit.unwrap_or_else(|| self.config.policy_unit.clone());
        if !self.registry.has_unit(&unit) {
            return Err(Failure {
                message: format!("unknown unit `{unit}`"),
                unit: Some(unit),
                ..Default::default()
            });
        }
        let report = self
            .evaluate(&unit, Split::Validation)
            .map_err(|e| Failure::new(e.to_string()))?;
        if let Some(reason) = self.host_stop() {
            self.push(
                st,
                depth,
                kind.into(),
                EventDraft {
                    unit_touched: Some(unit),
                    error_text: Some(format!("evaluation interrupted: {reason}")),
                    ..Default::default()
                },
            );
            return Ok(Flow::Stop(reason));
        }
        let worst: Vec<String> = report
            .worst(3)
            .iter()
            .map(|o| o.example_id.clone())
            .collect();
        let detail = if worst.is_empty() {
            format!("n={}", report.n)
        } else {
            format!("n={} lowest: {}", report.n, worst.join(", "))
        };
        if unit != self.config.policy_unit {
            self.push(
                st,
                depth,
                kind.into(),
                EventDraft {
                    unit_touched: Some(unit),
                    score_after: Some(report.mean_score),
                    detail: Some(detail),
                    ..Default::default()
                },
            );
            return Ok(Flow::Next);
        }
        let version = self.registry.version();
        let before = st.current_score.mean_score;
        let score = report.mean_score;
        self.registry
            .record_score(version, score)
            .expect("active version exists");
        st.validation_scores.push(score);
        st.current_score = report;
        if score > st.best_snapshot.score {
            st.best_snapshot = BestSnapshot { version, score };
        }
        self.push(
            st,
            depth,
            kind.into(),
            EventDraft {
                unit_touched: Some(unit),
                score_before: Some(before),
                score_after: Some(score),
                detail: Some(detail),
                ..Default::default()
            },
        );
        let best = st.best_snapshot.clone();
        if score < self.config.collapse_ratio * best.score {
            self.registry
                .rollback_with(best.version, Provenance::step(st.step, "score collapse"))
                .expect("best version exists");
            self.push(
                st,
                depth,
                TraceKind::Rollback,
                EventDraft {
                    score_before: Some(score),
                    score_after: Some(best.score),
                    detail: Some(format!(
                        "score collapsed; restored version {}",
                        best.version
                    )),
                    ..Default::default()
                },
            );
        }
        Ok(Flow::Next)
    }
}
