//! One evolution run against an OpenAI-compatible endpoint.
//!
//! Needs OPENAI_API_KEY; OPENAI_BASE_URL and MODEL are optional. Exits with
//! code 2 when the backend cannot be reached.

use reflexive::cli::{cmd_evolve, BackendConfig, RunConfig, TaskConfig};

fn main() {
    let mut cfg = RunConfig::default();
    let model = std::env::var("MODEL").unwrap_or_else(|_| "gpt-4o-mini".into());
    cfg.backend = BackendConfig::Live {
        base_url: std::env::var("OPENAI_BASE_URL")
            .unwrap_or_else(|_| "https://api.openai.com/v1".into()),
        api_key_env: "OPENAI_API_KEY".into(),
        strong_model: model.clone(),
        weak_model: model,
        timeout_secs: 60,
        prices: Default::default(),
    };
    cfg.task = TaskConfig::Game24 {
        val_n: 8,
        test_n: 16,
    };
    cfg.budget.runs = 1;
    cfg.budget.max_cycles = 3;
    cfg.budget.max_cost = 0.5;
    cfg.out = std::env::temp_dir().join("reflexive-live");
    match cmd_evolve(&cfg) {
        Ok(outcome) => {
            print!("{}", outcome.report.render_text());
            std::process::exit(outcome.exit_code);
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
