//! Seed policies against a scripted model: majority voting over samples and
//! the role ensemble.

use std::sync::Arc;

use reflexive::gateway::{Budget, Gateway, OnExhausted, ScriptEntry, ScriptFile};
use reflexive::policies::{choice_vote, majority_vote, role_ensemble_solve, sc_majority_solve};
use reflexive::runtime::{Agent, DecisionSettings};
use serde_json::json;

fn main() -> anyhow::Result<()> {
    println!(
        "majority of [7, 9, 7, 9, 8]: {}",
        majority_vote(&["7", "9", "7", "9", "8"])?
    );
    println!(
        "choice vote: {:?}",
        choice_vote(&["(B)", "answer: C", "B is right", "no idea"])
    );

    let answers = ["12", "12", "15", "12", "15"];
    let script = ScriptFile {
        on_exhausted: OnExhausted::RepeatLast,
        decision: vec![],
        solver: answers
            .iter()
            .map(|a| ScriptEntry::record(json!({"reasoning": "...", "answer": a})))
            .collect(),
    };
    let gateway = Arc::new(Gateway::scripted(script, Budget::default()));
    let agent = Agent::new(gateway.clone(), false, DecisionSettings::default());
    let sc = sc_majority_solve(&agent, "What is 3 * 4?", 5)?;
    println!("self-consistency over {answers:?}: {}", sc.answer);
    let roles = role_ensemble_solve(
        &agent,
        "What is 3 * 4?",
        &["Math Professor", "Careful Student"],
        1,
    )?;
    println!(
        "role ensemble: {} ({} calls so far)",
        roles.answer,
        gateway.budget().spent_calls
    );
    Ok(())
}
