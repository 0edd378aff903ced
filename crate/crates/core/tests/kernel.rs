mod common;

use std::sync::atomic::AtomicBool;
use std::sync::Arc;

use common::{scenario, search_source, with_solver};
use reflexive::gateway::{Budget, Gateway, OnExhausted, ScriptEntry, ScriptFile};
use reflexive::kernel::{run_evolution, EvolutionConfig, GoalPrompt, TerminationReason, TraceKind};
use reflexive::tasks::Environment;
use serde_json::json;

fn decisions(steps: Vec<serde_json::Value>) -> ScriptFile {
    ScriptFile {
        on_exhausted: OnExhausted::Raise,
        decision: steps
            .into_iter()
            .map(|a| ScriptEntry::record(json!({ "actions": a })))
            .collect(),
        solver: vec![ScriptEntry::record(json!({"answer": "1 + 2 + 3 + 4"}))],
    }
}

fn run(
    script: ScriptFile,
    solver: &str,
    config: EvolutionConfig,
) -> (
    reflexive::kernel::EvolutionResult,
    reflexive::registry::Registry,
) {
    let env = Environment::game24(3, 6, 6).unwrap();
    let registry = with_solver(solver);
    let gateway = Arc::new(Gateway::scripted(script, Budget::default()));
    let result = run_evolution(&env, &registry, gateway, &GoalPrompt::default(), &config).unwrap();
    (result, registry)
}

const ZERO: &str = "fn solver(agent, task) { \"0\" }";

#[test]
fn zero_cycles_is_a_no_op() {
    let mut s = scenario("game24_search");
    s.config.max_cycles = 0;
    let r = s.run();
    assert_eq!(r.termination_reason, TerminationReason::BudgetExhausted);
    assert!(r.trace.is_empty());
    assert_eq!(r.final_policy_version, 0);
    assert!(r.validation_scores.is_empty());
    assert_eq!(s.registry.version(), 0);
}

#[test]
fn breaking_the_decide_unit_terminates_the_run() {
    let script = decisions(vec![json!([
        {"kind": "self_update", "unit": "decide", "source": "fn decide(agent, view) { throw \"gone\" }"},
        {"kind": "continue_improve"}
    ])]);
    let (r, reg) = run(script, ZERO, EvolutionConfig::default());
    assert_eq!(
        r.termination_reason,
        TerminationReason::AccidentalTermination
    );
    let failed = r
        .trace
        .iter()
        .find(|e| e.action_kind == TraceKind::Decide)
        .unwrap();
    assert!(failed.error_text.as_deref().unwrap().contains("gone"));
    // The never-scored broken loop is not kept as the final version.
    assert_eq!(r.trace.last().unwrap().action_kind, TraceKind::Rollback);
    assert_eq!(reg.source_hash(), reg.snapshot(0).unwrap().source_hash());
}

#[test]
fn a_patched_error_handler_annotates_later_errors() {
    let script = decisions(vec![
        json!([{"kind": "self_update", "unit": "handle_error",
                "source": "fn handle_error(agent, err) { `custom: ${err.action}` }"},
               {"kind": "self_update", "unit": "solver", "source": "fn solver(agent, task) {"}]),
        json!([{"kind": "think", "text": "done"}]),
    ]);
    let (r, reg) = run(script, ZERO, EvolutionConfig::default());
    assert_eq!(r.termination_reason, TerminationReason::Converged);
    let err = r.trace.iter().find(|e| e.error_text.is_some()).unwrap();
    assert_eq!(err.detail.as_deref(), Some("custom: self_update"));
    assert!(reg
        .snapshot(1)
        .unwrap()
        .source("handle_error")
        .unwrap()
        .contains("custom"));
}

#[test]
fn the_protected_unit_cannot_be_patched() {
    let script = decisions(vec![
        json!([{"kind": "self_update", "unit": "apply_patch", "source": "fn apply_patch(a, b) { 1 }"}]),
        json!([{"kind": "think", "text": "ok"}]),
    ]);
    let (r, reg) = run(script, ZERO, EvolutionConfig::default());
    assert!(r.trace[0].error_text.is_some());
    assert_eq!(reg.version(), 0);
}

#[test]
fn test_split_is_off_limits_during_evolution() {
    let script = decisions(vec![
        json!([{"kind": "evaluate", "split": "test"}]),
        json!([{"kind": "think", "text": "ok"}]),
    ]);
    let (r, _) = run(script, ZERO, EvolutionConfig::default());
    assert_eq!(r.trace[0].action_kind, TraceKind::Evaluate);
    assert!(r.trace[0].error_text.is_some());
    assert_eq!(r.termination_reason, TerminationReason::Converged);
}

#[test]
fn helper_units_can_be_added_and_scored() {
    let script = decisions(vec![json!([
        {"kind": "self_update", "unit": "search_solver", "source": search_source().replace("fn solver(", "fn search_solver(")},
        {"kind": "evaluate", "unit": "search_solver"},
        {"kind": "interact"}
    ])]);
    let (r, reg) = run(script, ZERO, EvolutionConfig::default());
    assert!(reg.snapshot(1).unwrap().units.contains_key("search_solver"));
    let eval = &r.trace[1];
    assert_eq!(eval.score_after, Some(1.0));
    // Scoring a helper does not count as a policy validation score.
    assert_eq!(r.validation_scores, [0.0]);
}

#[test]
fn call_llm_and_run_code_are_recorded() {
    let script = decisions(vec![json!([
        {"kind": "call_llm", "request": {"prompt": "say hi", "return_keys": ["answer"]}},
        {"kind": "run_code", "command": "echo hello"}
    ])]);
    let (r, _) = run(script, ZERO, EvolutionConfig::default());
    assert_eq!(r.termination_reason, TerminationReason::Converged);
    assert_eq!(r.trace[0].action_kind, TraceKind::CallLlm);
    assert!(r.trace[0].error_text.is_none(), "{:?}", r.trace[0]);
    assert_eq!(r.trace[1].action_kind, TraceKind::RunCode);
    assert!(r.trace[1].detail.as_deref().unwrap().contains("hello"));
}

#[test]
fn masked_actions_are_skipped() {
    let script = decisions(vec![json!([
        {"kind": "run_code", "command": "echo hello"},
        {"kind": "think", "text": "kept"}
    ])]);
    let config = EvolutionConfig {
        ablation: "code_running".parse().unwrap(),
        ..Default::default()
    };
    let (r, _) = run(script, ZERO, config);
    let kinds: Vec<_> = r.trace.iter().map(|e| e.action_kind).collect();
    assert_eq!(kinds, [TraceKind::Think]);
}

#[test]
fn a_raised_stop_flag_ends_with_user_stop() {
    let stop = Arc::new(AtomicBool::new(true));
    let config = EvolutionConfig {
        stop: Some(stop),
        ..Default::default()
    };
    let (r, _) = run(
        decisions(vec![json!([{"kind": "think", "text": "x"}])]),
        ZERO,
        config,
    );
    assert_eq!(r.termination_reason, TerminationReason::UserStop);
}

#[test]
fn the_think_gate_changes_the_outcome() {
    let full = scenario("think_gated").run();
    assert_eq!(full.final_validation_score(), 1.0);
    let mut masked = scenario("think_gated");
    masked.config.ablation = "thinking".parse().unwrap();
    let r = masked.run();
    assert_eq!(r.final_validation_score(), 0.0);
    assert!(r.trace.iter().all(|e| e.action_kind != TraceKind::Think));
}
