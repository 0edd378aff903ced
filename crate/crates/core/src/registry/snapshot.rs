//! On-disk snapshots: one directory per version holding a plain-text file per
//! unit and a `manifest.json`.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::{LogicUnit, Registry, RegistryError, RoleTag, SourceMap};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestUnit {
    pub name: String,
    pub role_tag: RoleTag,
    pub created_at_version: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u64,
    pub parent: Option<u64>,
    pub created_by_step: Option<u64>,
    pub validation_score: Option<f64>,
    pub lineage_note: String,
    pub units: Vec<ManifestUnit>,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> RegistryError {
    RegistryError::Snapshot(format!("{}: {e}", path.display()))
}

pub fn version_dir(root: &Path, version: u64) -> PathBuf {
    root.join(format!("v{version:04}"))
}

/// Writes one snapshot directory.
pub fn write_snapshot(
    dir: &Path,
    map: &SourceMap,
    score: Option<f64>,
) -> Result<(), RegistryError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    for unit in map.units.values() {
        let path = dir.join(&unit.name);
        fs::write(&path, &unit.source).map_err(|e| io_err(&path, e))?;
    }
    let manifest = Manifest {
        version: map.version,
        parent: map.parent_version,
        created_by_step: map.created_by_step,
        validation_score: score,
        lineage_note: map.lineage_note.clone(),
        units: map
            .units
            .values()
            .map(|u| ManifestUnit {
                name: u.name.clone(),
                role_tag: u.role_tag,
                created_at_version: u.created_at_version,
            })
            .collect(),
    };
    let path = dir.join(MANIFEST);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text + "\n").map_err(|e| io_err(&path, e))
}

/// Writes every version of `registry` under `root`.
pub fn write_all(registry: &Registry, root: &Path) -> Result<(), RegistryError> {
    let lineage = registry.lineage();
    for (map, node) in registry.snapshots().iter().zip(&lineage.nodes) {
        write_snapshot(&version_dir(root, map.version), map, node.validation_score)?;
    }
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, RegistryError> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    serde_json::from_str(&text).map_err(|e| io_err(&path, e))
}

/// Loads one snapshot directory back into a source map.
pub fn load_snapshot(dir: &Path) -> Result<SourceMap, RegistryError> {
    let manifest = read_manifest(dir)?;
    let mut units = BTreeMap::new();
    for entry in manifest.units {
        let path = dir.join(&entry.name);
        let source = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        units.insert(
            entry.name.clone(),
            LogicUnit {
                name: entry.name,
                source,
                role_tag: entry.role_tag,
                created_at_version: entry.created_at_version,
            },
        );
    }
    Ok(SourceMap {
        version: manifest.version,
        parent_version: manifest.parent,
        units,
        lineage_note: manifest.lineage_note,
        created_by_step: manifest.created_by_step,
    })
}
