//! Golden traces. Set UPDATE_GOLDEN=1 to rewrite them.

mod common;

use std::fs;

use common::{fixture, scenario, GOLDEN};
use reflexive::kernel::replay::render_replay;
use reflexive::kernel::trace::trace_text;
use reflexive::kernel::EvolutionResult;

fn check(path: &std::path::Path, actual: &str) {
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(path, actual).unwrap();
        return;
    }
    let expected = fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(actual, expected, "{} drifted", path.display());
}

#[test]
fn scenarios_match_golden_files() {
    for name in GOLDEN {
        let result = scenario(name).run();
        check(
            &fixture(&format!("golden/{name}.trace.jsonl")),
            &trace_text(&result.trace),
        );
        check(
            &fixture(&format!("golden/{name}.replay.txt")),
            &render_replay(&result.trace),
        );
        let json = serde_json::to_string_pretty(&result).unwrap() + "\n";
        check(&fixture(&format!("golden/{name}.result.json")), &json);
        let back: EvolutionResult = serde_json::from_str(&json).unwrap();
        assert_eq!(back.trace, result.trace);
    }
}
