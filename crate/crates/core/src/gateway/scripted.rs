//! Deterministic backend that replays a queue of canned responses.

use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::Mutex;

use super::{Backend, BackendError, ChatRequest, Completion, GatewayError};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OnExhausted {
    /// Keep returning the final entry.
    #[default]
    RepeatLast,
    /// Fail with `backend_unavailable`.
    Raise,
}

/// One canned response.
///
/// Exactly one of `text` (raw model output) or `record` (an object that is
/// serialized to JSON text) should be set. When `when_contains` is present
/// the entry only applies if the request transcript contains that string;
/// otherwise `otherwise` is used, or the entry is skipped if there is none.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record: Option<serde_json::Map<String, serde_json::Value>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost: Option<f64>,
    #[serde(default)]
    pub input_tokens: u64,
    #[serde(default)]
    pub output_tokens: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub when_contains: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub otherwise: Option<Box<ScriptEntry>>,
}

impl ScriptEntry {
    pub fn text(text: impl Into<String>) -> Self {
        ScriptEntry {
            text: Some(text.into()),
            ..Default::default()
        }
    }

    pub fn record(value: serde_json::Value) -> Self {
        let record = match value {
            serde_json::Value::Object(map) => map,
            other => {
                let mut map = serde_json::Map::new();
                map.insert("answer".into(), other);
                map
            }
        };
        ScriptEntry {
            record: Some(record),
            ..Default::default()
        }
    }

    pub fn with_cost(mut self, cost: f64) -> Self {
        self.cost = Some(cost);
        self
    }

    fn body(&self) -> String {
        match (&self.text, &self.record) {
            (Some(text), _) => text.clone(),
            (None, Some(record)) => serde_json::Value::Object(record.clone()).to_string(),
            (None, None) => String::new(),
        }
    }

    /// Resolves conditional entries against the request transcript.
    fn resolve(&self, transcript: &str) -> Option<&ScriptEntry> {
        match &self.when_contains {
            Some(needle) if !transcript.contains(needle.as_str()) => self
                .otherwise
                .as_deref()
                .and_then(|e| e.resolve(transcript)),
            _ => Some(self),
        }
    }

    fn completion(&self) -> Completion {
        Completion {
            text: self.body(),
            input_tokens: self.input_tokens,
            output_tokens: self.output_tokens,
            cost: self.cost,
        }
    }
}

/// On-disk script: one queue per model tier.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScriptFile {
    #[serde(default)]
    pub on_exhausted: OnExhausted,
    /// Responses for improvement-loop calls (strong tier).
    #[serde(default)]
    pub decision: Vec<ScriptEntry>,
    /// Responses for solver calls (weak tier).
    #[serde(default)]
    pub solver: Vec<ScriptEntry>,
}

impl ScriptFile {
    /// Loads a TOML or JSON script, chosen by file extension.
    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path).map_err(|e| GatewayError::Script {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let parsed = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| e.to_string())
        } else {
            toml::from_str(&text).map_err(|e| e.to_string())
        };
        parsed.map_err(|message| GatewayError::Script {
            path: path.display().to_string(),
            message,
        })
    }
}

struct Cursor {
    position: usize,
    last: Option<ScriptEntry>,
}

pub struct ScriptedBackend {
    entries: Vec<ScriptEntry>,
    on_exhausted: OnExhausted,
    cursor: Mutex<Cursor>,
}

/// Builds a backend that pops `script` in order.
pub fn script_backend(script: Vec<ScriptEntry>, on_exhausted: OnExhausted) -> ScriptedBackend {
    ScriptedBackend {
        entries: script,
        on_exhausted,
        cursor: Mutex::new(Cursor {
            position: 0,
            last: None,
        }),
    }
}

impl ScriptedBackend {
    pub fn remaining(&self) -> usize {
        let cursor = self.cursor.lock().expect("script cursor poisoned");
        self.entries.len().saturating_sub(cursor.position)
    }

    fn next(&self, cursor: &mut Cursor, transcript: &str) -> Result<Completion, BackendError> {
        while cursor.position < self.entries.len() {
            let entry = &self.entries[cursor.position];
            cursor.position += 1;
            if let Some(resolved) = entry.resolve(transcript) {
                cursor.last = Some(resolved.clone());
                return Ok(resolved.completion());
            }
        }
        match (self.on_exhausted, &cursor.last) {
            (OnExhausted::RepeatLast, Some(last)) => Ok(last.completion()),
            _ => Err(BackendError::Unavailable("script exhausted".into())),
        }
    }
}

impl Backend for ScriptedBackend {
    fn complete(&self, req: &ChatRequest, n: usize) -> Result<Vec<Completion>, BackendError> {
        let transcript = req.transcript();
        let mut cursor = self.cursor.lock().expect("script cursor poisoned");
        (0..n)
            .map(|_| self.next(&mut cursor, &transcript))
            .collect()
    }
}
