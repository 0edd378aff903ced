//! A full self-improvement run against the frozen script: think, inspect,
//! patch the solver to exhaustive search, measure. Prints the replay.

use std::sync::Arc;

use reflexive::gateway::{Budget, Gateway, ScriptFile};
use reflexive::kernel::replay::render_replay;
use reflexive::kernel::seed::seed_units;
use reflexive::kernel::{run_evolution, EvolutionConfig, GoalPrompt};
use reflexive::policies::PolicyParams;
use reflexive::registry::Registry;
use reflexive::tasks::Environment;

fn main() -> anyhow::Result<()> {
    let path = concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/fixtures/scripts/game24_search.toml"
    );
    let gateway = Arc::new(Gateway::scripted(
        ScriptFile::load(path.as_ref())?,
        Budget::default(),
    ));
    let registry = Registry::new(seed_units("cot", &PolicyParams::default()))?;
    let env = Environment::game24(7, 32, 32)?;
    let result = run_evolution(
        &env,
        &registry,
        gateway,
        &GoalPrompt::default(),
        &EvolutionConfig::default(),
    )?;

    print!("{}", render_replay(&result.trace));
    println!(
        "initial {:.3} -> validation {:.3}, test {:.3}, best v{}, {}",
        result.initial_score.mean_score,
        result.final_validation_score(),
        result.final_score.mean_score,
        result.best_snapshot.version,
        result.termination_reason
    );
    Ok(())
}
