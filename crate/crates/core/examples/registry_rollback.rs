//! Patching, rejection and rollback on the versioned unit registry.

use reflexive::registry::{LogicUnit, Registry, RoleTag};

fn main() -> anyhow::Result<()> {
    let registry = Registry::new([LogicUnit::new(
        "solver",
        RoleTag::Solver,
        "fn solver(agent, task) { \"v0\" }",
    )])?;
    let answer = |r: &Registry| r.call("solver", ((), String::new())).map(|d| d.to_string());

    let ok = registry.apply_patch(
        "solver",
        "fn solver(agent, task) { helper() }\nfn helper() { \"v1\" }",
    );
    println!(
        "patch 1 accepted={} version={:?} -> {:?}",
        ok.accepted,
        ok.new_version,
        answer(&registry)
    );

    let bad = registry.apply_patch("solver", "fn solver(agent, task) { missing() }");
    println!(
        "patch 2 accepted={} {:?}: {}",
        bad.accepted,
        bad.rejection,
        bad.diagnostic.unwrap_or_default()
    );

    let hash = registry.source_hash();
    registry.rollback(0)?;
    println!(
        "rolled back: {:?}, hash changed: {}",
        answer(&registry),
        hash != registry.source_hash()
    );

    for node in registry.lineage().nodes {
        println!("v{} parent={:?} {}", node.version, node.parent, node.note);
    }
    Ok(())
}
