//! Versioned store of logic units.
//!
//! Units are script source compiled into one program per version. A patch
//! compiles the whole candidate unit set before anything changes, so a
//! rejected patch leaves no trace beyond its diagnostic.

mod compile;
pub mod snapshot;

use rhai::{Dynamic, Engine, FuncArgs, Scope, AST};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::{Arc, RwLock};
use thiserror::Error;

use crate::runtime::{build_engine, EngineLimits};

/// The compile-and-swap primitive. It lives in the host and cannot be patched.
pub const PROTECTED_UNIT: &str = "apply_patch";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoleTag {
    Solver,
    Learner,
    Tool,
    Helper,
}

impl RoleTag {
    /// Required parameter count of the unit's entry function, if fixed.
    pub fn arity(self) -> Option<usize> {
        match self {
            RoleTag::Solver | RoleTag::Learner => Some(2),
            RoleTag::Tool | RoleTag::Helper => None,
        }
    }
}

impl fmt::Display for RoleTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RoleTag::Solver => "solver",
            RoleTag::Learner => "learner",
            RoleTag::Tool => "tool",
            RoleTag::Helper => "helper",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogicUnit {
    pub name: String,
    pub source: String,
    pub role_tag: RoleTag,
    pub created_at_version: u64,
}

impl LogicUnit {
    pub fn new(name: impl Into<String>, role_tag: RoleTag, source: impl Into<String>) -> Self {
        LogicUnit {
            name: name.into(),
            source: source.into(),
            role_tag,
            created_at_version: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceMap {
    pub version: u64,
    pub parent_version: Option<u64>,
    pub units: BTreeMap<String, LogicUnit>,
    pub lineage_note: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_by_step: Option<u64>,
}

impl SourceMap {
    /// SHA-256 over unit names, roles and sources. Versions and notes are excluded.
    pub fn source_hash(&self) -> String {
        let mut h = Sha256::new();
        for unit in self.units.values() {
            h.update(unit.name.as_bytes());
            h.update([0]);
            h.update(unit.role_tag.to_string().as_bytes());
            h.update([0]);
            h.update(unit.source.as_bytes());
            h.update([0]);
        }
        hex::encode(h.finalize())
    }

    pub fn source(&self, unit: &str) -> Option<&str> {
        self.units.get(unit).map(|u| u.source.as_str())
    }

    /// All units rendered as one listing, as shown to the decision step.
    pub fn render(&self) -> String {
        let mut out = format!("# version {}\n", self.version);
        for unit in self.units.values() {
            out.push_str(&format!(
                "\n## unit {} ({})\n{}\n",
                unit.name,
                unit.role_tag,
                unit.source.trim_end()
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rejection {
    EmptySource,
    ForbiddenUnit,
    RejectedCompile,
    RejectedValidation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchResult {
    pub accepted: bool,
    pub new_version: Option<u64>,
    pub diagnostic: Option<String>,
    pub rejection: Option<Rejection>,
}

impl PatchResult {
    fn rejected(kind: Rejection, diagnostic: String) -> Self {
        PatchResult {
            accepted: false,
            new_version: None,
            diagnostic: Some(diagnostic),
            rejection: Some(kind),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegistryError {
    #[error("unknown version {0}")]
    UnknownVersion(u64),
    #[error("unknown unit {0}")]
    UnknownUnit(String),
    #[error("initial units do not compile: {0}")]
    InvalidInitial(String),
    #[error("snapshot error: {0}")]
    Snapshot(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineageNode {
    pub version: u64,
    pub parent: Option<u64>,
    pub note: String,
    pub created_by_step: Option<u64>,
    pub validation_score: Option<f64>,
}

/// Parent-pointer tree of every version ever created.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lineage {
    pub nodes: Vec<LineageNode>,
    pub active: u64,
}

impl Lineage {
    pub fn children(&self, version: u64) -> Vec<u64> {
        self.nodes
            .iter()
            .filter(|n| n.parent == Some(version))
            .map(|n| n.version)
            .collect()
    }
}

struct Node {
    map: Arc<SourceMap>,
    program: Arc<AST>,
    score: Option<f64>,
}

struct State {
    nodes: Vec<Node>,
    active: usize,
}

/// How a patch came about, recorded in the new version's lineage entry.
#[derive(Debug, Clone, Default)]
pub struct Provenance {
    pub step: Option<u64>,
    pub note: String,
}

impl Provenance {
    pub fn step(step: u64, note: impl Into<String>) -> Self {
        Provenance {
            step: Some(step),
            note: note.into(),
        }
    }
}

pub struct Registry {
    engine: Arc<Engine>,
    natives: BTreeSet<String>,
    state: RwLock<State>,
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl Registry {
    /// A registry whose version 0 holds `units`.
    pub fn new(units: impl IntoIterator<Item = LogicUnit>) -> Result<Self, RegistryError> {
        Self::with_engine(Arc::new(build_engine(EngineLimits::default())), units)
    }

    pub fn with_engine(
        engine: Arc<Engine>,
        units: impl IntoIterator<Item = LogicUnit>,
    ) -> Result<Self, RegistryError> {
        let units: BTreeMap<String, LogicUnit> = units
            .into_iter()
            .map(|mut u| {
                u.created_at_version = 0;
                (u.name.clone(), u)
            })
            .collect();
        let map = SourceMap {
            version: 0,
            parent_version: None,
            units,
            lineage_note: "initial".into(),
            created_by_step: None,
        };
        Self::from_source_map_with(engine, map)
    }

    /// Rebuilds a registry from a self_inspect result. The map becomes version 0.
    pub fn from_source_map(map: SourceMap) -> Result<Self, RegistryError> {
        Self::from_source_map_with(Arc::new(build_engine(EngineLimits::default())), map)
    }

    pub fn from_source_map_with(
        engine: Arc<Engine>,
        mut map: SourceMap,
    ) -> Result<Self, RegistryError> {
        let natives = compile::native_names(&engine);
        for unit in map.units.values() {
            if unit.name == PROTECTED_UNIT {
                return Err(RegistryError::InvalidInitial(format!(
                    "{PROTECTED_UNIT} is reserved"
                )));
            }
        }
        let program = compile::compile_units(&engine, &natives, &map.units)
            .map_err(|(_, msg)| RegistryError::InvalidInitial(msg))?;
        map.version = 0;
        map.parent_version = None;
        for u in map.units.values_mut() {
            u.created_at_version = 0;
        }
        Ok(Registry {
            engine,
            natives,
            state: RwLock::new(State {
                nodes: vec![Node {
                    map: Arc::new(map),
                    program: Arc::new(program),
                    score: None,
                }],
                active: 0,
            }),
        })
    }

    pub fn engine(&self) -> &Arc<Engine> {
        &self.engine
    }

    fn read(&self) -> std::sync::RwLockReadGuard<'_, State> {
        self.state.read().expect("registry lock poisoned")
    }

    /// The complete active source map, learner units included.
    pub fn self_inspect(&self) -> SourceMap {
        let st = self.read();
        (*st.nodes[st.active].map).clone()
    }

    pub fn version(&self) -> u64 {
        let st = self.read();
        st.nodes[st.active].map.version
    }

    pub fn source_hash(&self) -> String {
        let st = self.read();
        st.nodes[st.active].map.source_hash()
    }

    pub fn has_unit(&self, name: &str) -> bool {
        let st = self.read();
        st.nodes[st.active].map.units.contains_key(name)
    }

    pub fn snapshot(&self, version: u64) -> Result<SourceMap, RegistryError> {
        let st = self.read();
        st.nodes
            .get(version as usize)
            .map(|n| (*n.map).clone())
            .ok_or(RegistryError::UnknownVersion(version))
    }

    /// Every stored version, oldest first.
    pub fn snapshots(&self) -> Vec<SourceMap> {
        self.read().nodes.iter().map(|n| (*n.map).clone()).collect()
    }

    /// Replaces or creates one unit.
    pub fn apply_patch(&self, unit: &str, source: &str) -> PatchResult {
        self.apply_patch_with(unit, source, Provenance::default())
    }

    pub fn apply_patch_with(&self, unit: &str, source: &str, origin: Provenance) -> PatchResult {
        if source.trim().is_empty() {
            return PatchResult::rejected(
                Rejection::EmptySource,
                format!("patch for `{unit}` has empty source"),
            );
        }
        if unit == PROTECTED_UNIT {
            return PatchResult::rejected(
                Rejection::ForbiddenUnit,
                format!("`{PROTECTED_UNIT}` is the swap primitive and cannot be patched"),
            );
        }
        if !is_identifier(unit) {
            return PatchResult::rejected(
                Rejection::RejectedValidation,
                format!("`{unit}` is not a valid unit name"),
            );
        }
        let mut st = self.state.write().expect("registry lock poisoned");
        let current = Arc::clone(&st.nodes[st.active].map);
        let version = st.nodes.len() as u64;
        let mut units = current.units.clone();
        let role_tag = units
            .get(unit)
            .map(|u| u.role_tag)
            .unwrap_or(RoleTag::Helper);
        units.insert(
            unit.to_string(),
            LogicUnit {
                name: unit.to_string(),
                source: source.to_string(),
                role_tag,
                created_at_version: version,
            },
        );
        let program = match compile::compile_units(&self.engine, &self.natives, &units) {
            Ok(p) => p,
            Err((kind, msg)) => return PatchResult::rejected(kind, msg),
        };
        let note = if origin.note.is_empty() {
            format!("patch {unit}")
        } else {
            origin.note
        };
        st.nodes.push(Node {
            map: Arc::new(SourceMap {
                version,
                parent_version: Some(current.version),
                units,
                lineage_note: note,
                created_by_step: origin.step,
            }),
            program: Arc::new(program),
            score: None,
        });
        st.active = version as usize;
        PatchResult {
            accepted: true,
            new_version: Some(version),
            diagnostic: None,
            rejection: None,
        }
    }

    /// Makes `target` active again by appending a copy of it as a new version.
    pub fn rollback(&self, target: u64) -> Result<SourceMap, RegistryError> {
        self.rollback_with(target, Provenance::default())
    }

    pub fn rollback_with(
        &self,
        target: u64,
        origin: Provenance,
    ) -> Result<SourceMap, RegistryError> {
        let mut st = self.state.write().expect("registry lock poisoned");
        let node = st
            .nodes
            .get(target as usize)
            .ok_or(RegistryError::UnknownVersion(target))?;
        let version = st.nodes.len() as u64;
        let map = SourceMap {
            version,
            parent_version: Some(target),
            units: node.map.units.clone(),
            lineage_note: if origin.note.is_empty() {
                format!("rollback to {target}")
            } else {
                origin.note
            },
            created_by_step: origin.step,
        };
        let program = Arc::clone(&node.program);
        let score = node.score;
        st.nodes.push(Node {
            map: Arc::new(map.clone()),
            program,
            score,
        });
        st.active = version as usize;
        Ok(map)
    }

    pub fn lineage(&self) -> Lineage {
        let st = self.read();
        Lineage {
            nodes: st
                .nodes
                .iter()
                .map(|n| LineageNode {
                    version: n.map.version,
                    parent: n.map.parent_version,
                    note: n.map.lineage_note.clone(),
                    created_by_step: n.map.created_by_step,
                    validation_score: n.score,
                })
                .collect(),
            active: st.nodes[st.active].map.version,
        }
    }

    /// Attaches a validation score to a version.
    pub fn record_score(&self, version: u64, score: f64) -> Result<(), RegistryError> {
        let mut st = self.state.write().expect("registry lock poisoned");
        let node = st
            .nodes
            .get_mut(version as usize)
            .ok_or(RegistryError::UnknownVersion(version))?;
        node.score = Some(score);
        Ok(())
    }

    /// Calls the entry function of `unit` in the active program.
    ///
    /// The program is captured at call time, so a patch applied while the
    /// call runs takes effect on the next invocation.
    pub fn call(&self, unit: &str, args: impl FuncArgs) -> Result<Dynamic, String> {
        let program = {
            let st = self.read();
            if !st.nodes[st.active].map.units.contains_key(unit) {
                return Err(format!("unknown unit `{unit}`"));
            }
            Arc::clone(&st.nodes[st.active].program)
        };
        let mut scope = Scope::new();
        self.engine
            .call_fn::<Dynamic>(&mut scope, &program, unit, args)
            .map_err(|e| format!("{unit}: {e}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seed() -> Registry {
        Registry::new([
            LogicUnit::new(
                "solver",
                RoleTag::Solver,
                "fn solver(agent, task) { double(task) }",
            ),
            LogicUnit::new("double", RoleTag::Helper, "fn double(x) { x * 2 }"),
            LogicUnit::new("decide", RoleTag::Learner, "fn decide(agent, view) { [] }"),
        ])
        .unwrap()
    }

    #[test]
    fn fresh_registry_is_version_zero() {
        let r = seed();
        let map = r.self_inspect();
        assert_eq!(map.version, 0);
        assert!(map.units.contains_key("decide"));
        assert_eq!(r.lineage().nodes.len(), 1);
        assert_eq!(
            r.call("solver", ((), 21_i64)).unwrap().as_int().unwrap(),
            42
        );
    }

    #[test]
    fn accepted_patch_bumps_version_and_swaps_code() {
        let r = seed();
        let before = r.self_inspect();
        let res = r.apply_patch("solver", "fn solver(agent, task) { double(task) + 1 }");
        assert!(res.accepted, "{res:?}");
        assert_eq!(res.new_version, Some(1));
        let after = r.self_inspect();
        assert_eq!(after.parent_version, Some(0));
        let changed: Vec<_> = after
            .units
            .keys()
            .filter(|k| after.units[*k].source != before.units[*k].source)
            .collect();
        assert_eq!(changed, vec!["solver"]);
        assert_eq!(r.call("solver", ((), 1_i64)).unwrap().as_int().unwrap(), 3);
    }

    #[test]
    fn rejected_patches_leave_state_untouched() {
        let r = seed();
        let hash = r.source_hash();
        let cases = [
            (
                "solver",
                "fn solver(agent, task) { task +* }",
                Rejection::RejectedCompile,
            ),
            (
                "solver",
                "fn solver(task) { task }",
                Rejection::RejectedValidation,
            ),
            (
                "solver",
                "fn solver(agent, task) { missing_helper(task) }",
                Rejection::RejectedCompile,
            ),
            ("solver", "   ", Rejection::EmptySource),
            (
                PROTECTED_UNIT,
                "fn apply_patch(a, b) { 1 }",
                Rejection::ForbiddenUnit,
            ),
            (
                "solver",
                "fn solver(agent, task) { 1 } fn double(x) { x }",
                Rejection::RejectedValidation,
            ),
            (
                "double",
                "fn triple(x) { x * 3 }",
                Rejection::RejectedValidation,
            ),
        ];
        for (unit, src, kind) in cases {
            let res = r.apply_patch(unit, src);
            assert!(!res.accepted, "{src}");
            assert_eq!(res.rejection, Some(kind), "{src}: {:?}", res.diagnostic);
            assert!(res.diagnostic.is_some());
            assert_eq!(r.source_hash(), hash);
            assert_eq!(r.version(), 0);
        }
        assert_eq!(r.lineage().nodes.len(), 1);
    }

    #[test]
    fn unknown_name_creates_helper() {
        let r = seed();
        let res = r.apply_patch("verify_expression", "fn verify_expression(e) { e == 24 }");
        assert!(res.accepted);
        assert_eq!(
            r.self_inspect().units["verify_expression"].role_tag,
            RoleTag::Helper
        );
        assert!(
            r.apply_patch(
                "solver",
                "fn solver(agent, task) { verify_expression(task) }"
            )
            .accepted
        );
        assert!(r.call("solver", ((), 24_i64)).unwrap().as_bool().unwrap());
    }

    #[test]
    fn rollback_appends_node_and_restores_sources() {
        let r = seed();
        let v0 = r.self_inspect();
        assert!(
            r.apply_patch("solver", "fn solver(agent, task) { 1 }")
                .accepted
        );
        assert!(
            r.apply_patch("solver", "fn solver(agent, task) { 2 }")
                .accepted
        );
        let restored = r.rollback(0).unwrap();
        assert_eq!(restored.version, 3);
        assert_eq!(restored.units, v0.units);
        let lineage = r.lineage();
        let parents: Vec<_> = lineage.nodes.iter().map(|n| n.parent).collect();
        assert_eq!(parents, vec![None, Some(0), Some(1), Some(0)]);
        assert_eq!(r.call("solver", ((), 5_i64)).unwrap().as_int().unwrap(), 10);
        assert_eq!(
            r.rollback(999).unwrap_err(),
            RegistryError::UnknownVersion(999)
        );
    }

    #[test]
    fn scores_attach_to_versions() {
        let r = seed();
        r.record_score(0, 0.25).unwrap();
        assert_eq!(r.lineage().nodes[0].validation_score, Some(0.25));
        assert!(r.record_score(7, 1.0).is_err());
    }
}
