//! Version-0 units: the improvement loop and the seed policies.

use crate::policies::{policy_units, solver_entry, PolicyParams};
use crate::registry::{LogicUnit, RoleTag};

pub const DECIDE: &str = r#"fn decide(agent, view) {
    agent.request_actions(view)
}
"#;

/// Maps an action to a directive the host carries out.
pub const EXECUTE_ACTION: &str = r#"fn execute_action(agent, action) {
    switch action.kind {
        "self_inspect" => #{ op: "self_inspect" },
        "interact" => #{ op: "evaluate", split: "validation" },
        "evaluate" => #{ op: "evaluate", split: action.split ?? "validation", unit: action.unit },
        "self_update" => #{ op: "apply_patch", unit: action.unit, source: action.source },
        "continue_improve" => #{ op: "recurse" },
        "think" => #{ op: "record", text: action.text },
        "run_code" => #{ op: "run_code", command: action.command, interpreter: action.interpreter },
        "call_llm" => #{ op: "call_llm", request: action.request },
        _ => throw `no handler for action ${action.kind}`
    }
}
"#;

pub const HANDLE_ERROR: &str = r#"fn handle_error(agent, err) {
    `${err.action} failed: ${err.message}. The remaining actions were skipped.`
}
"#;

pub fn learner_units() -> Vec<LogicUnit> {
    vec![
        LogicUnit::new("decide", RoleTag::Learner, DECIDE),
        LogicUnit::new("execute_action", RoleTag::Learner, EXECUTE_ACTION),
        LogicUnit::new("handle_error", RoleTag::Learner, HANDLE_ERROR),
    ]
}

/// Everything registered at version 0, with `solver` delegating to `initial`.
pub fn seed_units(initial: &str, params: &PolicyParams) -> Vec<LogicUnit> {
    let mut units = learner_units();
    units.extend(policy_units(params));
    units.push(solver_entry(initial));
    units
}
