//! Run the scripted search solver over every solvable hand and check each
//! answer with the exact verifier.

use std::time::Instant;

use reflexive::gateway::ScriptFile;
use reflexive::registry::{LogicUnit, Registry, RoleTag};
use reflexive::tasks::game24::{all_hands, hand_input};
use reflexive::tasks::{game24_solve_bruteforce, game24_verify};

fn main() -> anyhow::Result<()> {
    let path = concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/fixtures/scripts/game24_search.toml"
    );
    let script = ScriptFile::load(path.as_ref())?;
    let source = script.decision[0]
        .record
        .as_ref()
        .and_then(|r| r["actions"][2]["source"].as_str())
        .unwrap_or_default();
    let registry = Registry::new([LogicUnit::new("solver", RoleTag::Solver, source)])?;
    let start = Instant::now();
    let mut solved = 0;
    let hands: Vec<_> = all_hands()
        .into_iter()
        .filter(|h| game24_solve_bruteforce(h).is_some())
        .collect();
    for hand in &hands {
        let out = registry
            .call("solver", ((), hand_input(hand)))
            .map_err(anyhow::Error::msg)?;
        let answer = reflexive::policies::SolverAnswer::from_dynamic(out).answer;
        if game24_verify(hand, &answer).valid {
            solved += 1;
        }
    }
    println!(
        "{solved}/{} solvable hands solved in {:.1?}",
        hands.len(),
        start.elapsed()
    );
    Ok(())
}
