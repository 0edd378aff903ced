use serde::{Deserialize, Serialize};

use super::action::{AblationMask, ActionKind, Capability};

/// Objective and tool descriptions shown to the decision step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalPrompt {
    pub goal_text: String,
    #[serde(default)]
    pub capability_notes: Vec<String>,
    #[serde(default)]
    pub ablation_mask: AblationMask,
}

const DEFAULT_GOAL: &str = "\
You are an agent that can read and rewrite its own code while it runs. \
Your code is a set of named logic units. The unit `solver` answers task \
inputs; the units `decide`, `execute_action` and `handle_error` make up the \
loop that is improving `solver` right now, and you may rewrite them too. \
Raise the validation score of `solver` as far as you can. Look at what it \
gets wrong, change it, then measure the change before building on it.";

impl Default for GoalPrompt {
    fn default() -> Self {
        GoalPrompt {
            goal_text: DEFAULT_GOAL.into(),
            capability_notes: Vec::new(),
            ablation_mask: AblationMask::none(),
        }
    }
}

fn describe(kind: ActionKind) -> &'static str {
    match kind {
        ActionKind::SelfInspect => {
            r#"{"kind":"self_inspect"}: show the full source of every unit, including the improvement loop."#
        }
        ActionKind::Interact => {
            r#"{"kind":"interact"}: score the current `solver` on the validation split."#
        }
        ActionKind::SelfUpdate => {
            r#"{"kind":"self_update","unit":NAME,"source":CODE}: replace unit NAME, or add it as a helper if it is new. CODE must define `fn NAME(...)`; solver and learner units take (agent, input). The change applies from the next call on."#
        }
        ActionKind::ContinueImprove => {
            r#"{"kind":"continue_improve"}: start another round of improvement with a fresh decision."#
        }
        ActionKind::Think => r#"{"kind":"think","text":TEXT}: write down analysis or a plan."#,
        ActionKind::RunCode => {
            r#"{"kind":"run_code","command":TEXT,"interpreter":"sh"|"python3"}: run code in a sandbox and read its output."#
        }
        ActionKind::CallLlm => {
            r#"{"kind":"call_llm","request":{"prompt":TEXT}}: ask a model a question and read the answer."#
        }
        ActionKind::Evaluate => {
            r#"{"kind":"evaluate","unit":NAME}: score any solver-shaped unit on the validation split."#
        }
    }
}

impl GoalPrompt {
    pub fn new(goal_text: impl Into<String>, ablation_mask: AblationMask) -> Result<Self, String> {
        let goal_text = goal_text.into();
        if goal_text.trim().is_empty() {
            return Err("goal text is empty".into());
        }
        Ok(GoalPrompt {
            goal_text,
            capability_notes: Vec::new(),
            ablation_mask,
        })
    }

    pub fn with_ablation(mut self, mask: AblationMask) -> Self {
        self.ablation_mask = mask;
        self
    }

    /// The system message for the decision step. Masked tools are omitted.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(self.goal_text.trim());
        out.push_str("\n\nActions (reply with a JSON list of them, executed in order):\n");
        for kind in ActionKind::ALL {
            if self.ablation_mask.allows(kind) {
                out.push_str("- ");
                out.push_str(describe(kind));
                out.push('\n');
            }
        }
        out.push_str(
            "\nInside units, `agent.llm(#{prompt: TEXT})` samples a model and returns a list of maps \
             with keys \"reasoning\" and \"answer\"; `agent.majority_vote(list)` picks the most common answer.\n",
        );
        if self.ablation_mask.disables(Capability::ErrorHandling) {
            out.push_str("\nAny failing action ends the run.\n");
        } else {
            out.push_str("\nIf an action fails, the rest of its list is skipped and the error is shown to you next.\n");
        }
        for note in &self.capability_notes {
            out.push_str(note.trim());
            out.push('\n');
        }
        out
    }
}
