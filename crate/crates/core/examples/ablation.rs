//! Ablation over capabilities with a script whose patch depends on the
//! thinking step.

use std::sync::Arc;

use reflexive::gateway::{Budget, Gateway, ScriptFile};
use reflexive::harness::{run_ablation, RunRecord};
use reflexive::kernel::seed::seed_units;
use reflexive::kernel::{run_evolution, AblationMask, Capability, EvolutionConfig, GoalPrompt};
use reflexive::policies::PolicyParams;
use reflexive::registry::Registry;
use reflexive::tasks::Environment;

fn main() -> anyhow::Result<()> {
    let path = concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/fixtures/scripts/think_gated.toml"
    );
    let script = ScriptFile::load(path.as_ref())?;
    let masks = [
        AblationMask::none(),
        AblationMask::of([Capability::Thinking]),
        AblationMask::of([Capability::ErrorHandling]),
    ];
    let table = run_ablation(&masks, &[1, 2], |mask, seed| {
        let env = Environment::game24(seed, 16, 16).map_err(|e| e.to_string())?;
        let registry = Registry::new(seed_units("cot", &PolicyParams::default()))
            .map_err(|e| e.to_string())?;
        let gateway = Arc::new(Gateway::scripted(script.clone(), Budget::default()));
        let config = EvolutionConfig {
            ablation: mask.clone(),
            ..Default::default()
        };
        let goal = GoalPrompt::default().with_ablation(mask.clone());
        let result =
            run_evolution(&env, &registry, gateway, &goal, &config).map_err(|e| e.to_string())?;
        Ok(RunRecord::from_result(
            format!("seed-{seed}"),
            seed,
            &result,
        ))
    })?;
    print!("{}", table.render());
    Ok(())
}
