#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use reflexive::gateway::{Budget, CostUnits, Gateway, ScriptFile};
use reflexive::kernel::seed::{learner_units, seed_units};
use reflexive::kernel::{run_evolution, EvolutionConfig, EvolutionResult, GoalPrompt};
use reflexive::policies::PolicyParams;
use reflexive::registry::{LogicUnit, Registry, RoleTag};
use reflexive::tasks::{load_dataset, Environment, Scorer, SplitSpec};

pub const GOLDEN: [&str; 5] = [
    "game24_search",
    "broken_patch",
    "budget_cap",
    "drop_recover",
    "numeric_regression",
];

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(rel)
}

pub fn script(name: &str) -> ScriptFile {
    ScriptFile::load(&fixture(&format!("scripts/{name}.toml"))).expect("fixture script loads")
}

/// The search solver carried by the game24_search script.
pub fn search_source() -> String {
    let s = script("game24_search");
    let record = s.decision[0].record.as_ref().unwrap();
    record["actions"][2]["source"].as_str().unwrap().to_string()
}

pub struct Scenario {
    pub env: Environment,
    pub registry: Registry,
    pub gateway: Arc<Gateway>,
    pub goal: GoalPrompt,
    pub config: EvolutionConfig,
}

impl Scenario {
    pub fn run(&self) -> EvolutionResult {
        run_evolution(
            &self.env,
            &self.registry,
            self.gateway.clone(),
            &self.goal,
            &self.config,
        )
        .expect("evolution runs")
    }
}

pub fn with_solver(source: &str) -> Registry {
    let mut units = learner_units();
    units.push(LogicUnit::new("solver", RoleTag::Solver, source));
    Registry::new(units).unwrap()
}

pub fn seeded() -> Registry {
    Registry::new(seed_units("cot", &PolicyParams::default())).unwrap()
}

/// Builds a named scenario. Game of 24 scenarios use `n` hands per split.
pub fn scenario_sized(name: &str, n: usize) -> Scenario {
    let game24 = || Environment::game24(7, n, n).unwrap();
    let mut budget = Budget::default();
    let (env, registry) = match name {
        "game24_search" | "broken_patch" | "drop_recover" | "think_gated" => (game24(), seeded()),
        "budget_cap" => {
            budget = Budget::new(CostUnits::from_f64(100.0), 5);
            (
                Environment::game24(7, 4, 4).unwrap(),
                with_solver("fn solver(agent, task) { \"0\" }"),
            )
        }
        "numeric_regression" => {
            let spec = SplitSpec {
                val_n: 10,
                test_n: 10,
                seed: 7,
            };
            let env =
                load_dataset(&fixture("datasets/numbers.jsonl"), Scorer::Numeric, spec, 1).unwrap();
            (env, with_solver("fn solver(agent, task) { task }"))
        }
        other => panic!("unknown scenario {other}"),
    };
    Scenario {
        env,
        registry,
        gateway: Arc::new(Gateway::scripted(script(name), budget)),
        goal: GoalPrompt::default(),
        config: EvolutionConfig::default(),
    }
}

pub fn scenario(name: &str) -> Scenario {
    scenario_sized(name, 16)
}
