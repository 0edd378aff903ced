use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use crate::gateway::LlmCall;
use crate::tasks::Split;

/// A request produced by the decision step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Action {
    /// Read every logic unit, including the improvement loop's own.
    SelfInspect,
    /// Score the active policy on the validation split.
    Interact,
    /// Replace (or create) one logic unit.
    SelfUpdate { unit: String, source: String },
    /// Ask the decision step for a fresh action sequence one level deeper.
    ContinueImprove,
    /// Record analysis before acting.
    Think { text: String },
    /// Run a command in a sandboxed subprocess.
    RunCode {
        command: String,
        #[serde(default = "default_interpreter")]
        interpreter: String,
    },
    /// Ask a model directly and keep the answer in history.
    CallLlm { request: LlmCall },
    /// Score a named unit (default: the active policy) on a split.
    Evaluate {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        split: Option<Split>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        unit: Option<String>,
    },
}

fn default_interpreter() -> String {
    "sh".into()
}

impl Action {
    pub fn kind(&self) -> ActionKind {
        match self {
            Action::SelfInspect => ActionKind::SelfInspect,
            Action::Interact => ActionKind::Interact,
            Action::SelfUpdate { .. } => ActionKind::SelfUpdate,
            Action::ContinueImprove => ActionKind::ContinueImprove,
            Action::Think { .. } => ActionKind::Think,
            Action::RunCode { .. } => ActionKind::RunCode,
            Action::CallLlm { .. } => ActionKind::CallLlm,
            Action::Evaluate { .. } => ActionKind::Evaluate,
        }
    }

    /// Payload checks serde cannot express.
    pub fn validate(&self) -> Result<(), String> {
        match self {
            Action::SelfUpdate { unit, source } => {
                if unit.trim().is_empty() {
                    return Err("self_update must name a unit".into());
                }
                if source.trim().is_empty() {
                    return Err("self_update source is empty".into());
                }
                Ok(())
            }
            Action::RunCode { command, .. } if command.trim().is_empty() => {
                Err("run_code command is empty".into())
            }
            _ => Ok(()),
        }
    }

    /// Parses a JSON list of actions. An empty list is an error.
    pub fn parse_list(text: &str) -> Result<Vec<Action>, String> {
        let value: serde_json::Value = serde_json::from_str(text.trim())
            .map_err(|e| format!("actions are not valid JSON: {e}"))?;
        Self::from_json_list(value)
    }

    pub fn from_json_list(value: serde_json::Value) -> Result<Vec<Action>, String> {
        let items = match value {
            serde_json::Value::Array(items) => items,
            single @ serde_json::Value::Object(_) => vec![single],
            other => return Err(format!("expected a list of actions, got {other}")),
        };
        if items.is_empty() {
            return Err("action list is empty".into());
        }
        items
            .into_iter()
            .enumerate()
            .map(|(i, item)| {
                let action: Action =
                    serde_json::from_value(item).map_err(|e| format!("action {i}: {e}"))?;
                action.validate().map_err(|e| format!("action {i}: {e}"))?;
                Ok(action)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    SelfInspect,
    Interact,
    SelfUpdate,
    ContinueImprove,
    Think,
    RunCode,
    CallLlm,
    Evaluate,
}

impl ActionKind {
    pub const ALL: [ActionKind; 8] = [
        ActionKind::SelfInspect,
        ActionKind::Interact,
        ActionKind::SelfUpdate,
        ActionKind::ContinueImprove,
        ActionKind::Think,
        ActionKind::RunCode,
        ActionKind::CallLlm,
        ActionKind::Evaluate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ActionKind::SelfInspect => "self_inspect",
            ActionKind::Interact => "interact",
            ActionKind::SelfUpdate => "self_update",
            ActionKind::ContinueImprove => "continue_improve",
            ActionKind::Think => "think",
            ActionKind::RunCode => "run_code",
            ActionKind::CallLlm => "call_llm",
            ActionKind::Evaluate => "evaluate",
        }
    }

    /// The optional tool that provides this action, if any.
    pub fn capability(self) -> Option<Capability> {
        match self {
            ActionKind::Think => Some(Capability::Thinking),
            ActionKind::RunCode => Some(Capability::CodeRunning),
            ActionKind::CallLlm => Some(Capability::LlmCalling),
            _ => None,
        }
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Auxiliary tools that can be switched off for ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Capability {
    Thinking,
    ErrorHandling,
    CodeRunning,
    LlmCalling,
}

impl Capability {
    pub const ALL: [Capability; 4] = [
        Capability::Thinking,
        Capability::ErrorHandling,
        Capability::CodeRunning,
        Capability::LlmCalling,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Capability::Thinking => "thinking",
            Capability::ErrorHandling => "error_handling",
            Capability::CodeRunning => "code_running",
            Capability::LlmCalling => "llm_calling",
        }
    }
}

impl FromStr for Capability {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Capability::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown capability {s:?} (thinking, error_handling, code_running, llm_calling)"))
    }
}

/// Set of disabled capabilities.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AblationMask(pub BTreeSet<Capability>);

impl AblationMask {
    pub fn none() -> Self {
        AblationMask::default()
    }

    pub fn of(caps: impl IntoIterator<Item = Capability>) -> Self {
        AblationMask(caps.into_iter().collect())
    }

    pub fn disables(&self, cap: Capability) -> bool {
        self.0.contains(&cap)
    }

    pub fn allows(&self, kind: ActionKind) -> bool {
        kind.capability().is_none_or(|c| !self.disables(c))
    }

    /// The four single-tool ablations.
    pub fn canonical() -> Vec<AblationMask> {
        Capability::ALL
            .into_iter()
            .map(|c| AblationMask::of([c]))
            .collect()
    }

    pub fn label(&self) -> String {
        if self.0.is_empty() {
            "full".into()
        } else {
            let names: Vec<_> = self.0.iter().map(|c| c.name()).collect();
            format!("w/o {}", names.join("+"))
        }
    }
}

impl FromStr for AblationMask {
    type Err = String;
    /// Comma-separated capability names; "" or "none" is the empty mask.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() || s == "none" || s == "full" {
            return Ok(AblationMask::none());
        }
        s.split(',')
            .map(|p| p.trim().parse::<Capability>())
            .collect::<Result<BTreeSet<_>, _>>()
            .map(AblationMask)
    }
}
