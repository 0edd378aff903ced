//! Script engine and the host functions visible to logic units.
//!
//! Every unit receives an `Agent` handle as its first argument. Through it a
//! unit can sample the models (`agent.llm(request)`), vote over answers, and
//! (for the decision unit) ask the strong model for the next action list.

use rhai::{Array, Dynamic, Engine, EvalAltResult, Map, Position};
use serde::{Deserialize, Serialize};
use std::sync::{Arc, Mutex};

use crate::gateway::{Gateway, GatewayError, LlmCall, Message, Tier};
use crate::kernel::action::Action;
use crate::policies;

/// Resource caps applied to every unit invocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineLimits {
    pub max_operations: u64,
    pub max_call_levels: usize,
}

impl Default for EngineLimits {
    fn default() -> Self {
        EngineLimits {
            max_operations: 50_000_000,
            max_call_levels: 64,
        }
    }
}

/// Builds the engine shared by a registry.
pub fn build_engine(limits: EngineLimits) -> Engine {
    let mut engine = Engine::new();
    engine.set_max_operations(limits.max_operations);
    engine.set_max_call_levels(limits.max_call_levels);
    engine.set_max_expr_depths(256, 256);
    engine.set_max_string_size(4 << 20);
    engine.set_max_array_size(1 << 20);
    engine.set_max_map_size(1 << 16);
    engine.disable_symbol("eval");
    engine.on_print(|text| tracing::debug!(target: "unit", "{text}"));
    engine.register_type_with_name::<Agent>("Agent");
    engine.register_fn("llm", Agent::llm);
    engine.register_fn("majority_vote", Agent::majority_vote);
    engine.register_fn("choice_vote", Agent::choice_vote);
    engine.register_fn("request_actions", Agent::request_actions);
    engine
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionSettings {
    /// Re-asks after a malformed action list before degrading to `think`.
    pub retries: usize,
    /// Responses sampled per decision; the first parseable one is used.
    pub samples: usize,
    pub temperature_milli: u32,
}

impl Default for DecisionSettings {
    fn default() -> Self {
        DecisionSettings {
            retries: 2,
            samples: 1,
            temperature_milli: 0,
        }
    }
}

/// Conditions raised inside host functions that the kernel must see even
/// when a (possibly patched) unit swallows or rewrites the error.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HostFlags {
    pub budget_exhausted: bool,
    pub backend_unavailable: Option<String>,
}

pub struct HostContext {
    pub gateway: Arc<Gateway>,
    /// Constrained mode: solver calls always use the weak tier.
    pub pin_solver_tier: bool,
    pub decision: DecisionSettings,
    flags: Mutex<HostFlags>,
}

#[derive(Clone)]
pub struct Agent {
    ctx: Arc<HostContext>,
}

fn script_error(msg: impl Into<String>) -> Box<EvalAltResult> {
    Box::new(EvalAltResult::ErrorRuntime(
        Dynamic::from(msg.into()),
        Position::NONE,
    ))
}

fn dynamic_to_string(d: &Dynamic) -> String {
    if d.is_string() {
        d.clone().into_string().unwrap_or_default()
    } else if d.is_unit() {
        String::new()
    } else {
        d.to_string()
    }
}

impl Agent {
    pub fn new(gateway: Arc<Gateway>, pin_solver_tier: bool, decision: DecisionSettings) -> Self {
        Agent {
            ctx: Arc::new(HostContext {
                gateway,
                pin_solver_tier,
                decision,
                flags: Mutex::new(HostFlags::default()),
            }),
        }
    }

    pub fn gateway(&self) -> &Arc<Gateway> {
        &self.ctx.gateway
    }

    /// Returns and clears the conditions raised since the last call.
    pub fn take_flags(&self) -> HostFlags {
        std::mem::take(&mut *self.ctx.flags.lock().expect("host flags poisoned"))
    }

    fn note_gateway_error(&self, err: &GatewayError) {
        let mut flags = self.ctx.flags.lock().expect("host flags poisoned");
        match err {
            GatewayError::BudgetExhausted => flags.budget_exhausted = true,
            GatewayError::BackendUnavailable(m) => flags.backend_unavailable = Some(m.clone()),
            _ => {}
        }
    }

    /// Samples structured records; the model tier defaults to weak.
    pub fn call_llm(
        &self,
        call: LlmCall,
        default_tier: Tier,
    ) -> Result<crate::gateway::DecisionResponse, GatewayError> {
        let pin = (self.ctx.pin_solver_tier && default_tier == Tier::Weak).then_some(Tier::Weak);
        let req = call.into_request(self.ctx.gateway.tiers(), default_tier, pin)?;
        self.ctx
            .gateway
            .call_json_llm(&req)
            .inspect_err(|e| self.note_gateway_error(e))
    }

    fn llm(agent: &mut Agent, request: Map) -> Result<Array, Box<EvalAltResult>> {
        let value: serde_json::Value = rhai::serde::from_dynamic(&Dynamic::from_map(request))?;
        let call: LlmCall = serde_json::from_value(value)
            .map_err(|e| script_error(format!("bad llm request: {e}")))?;
        let resp = agent
            .call_llm(call, Tier::Weak)
            .map_err(|e| script_error(format!("llm call failed: {e}")))?;
        Ok(resp
            .records
            .into_iter()
            .map(|r| {
                let mut m = Map::new();
                for (k, v) in r.fields {
                    m.insert(k.into(), v.into());
                }
                let missing: Array = r.missing.into_iter().map(Dynamic::from).collect();
                m.insert("_missing".into(), missing.into());
                Dynamic::from_map(m)
            })
            .collect())
    }

    fn majority_vote(_: &mut Agent, answers: Array) -> Result<String, Box<EvalAltResult>> {
        let answers: Vec<String> = answers.iter().map(dynamic_to_string).collect();
        policies::majority_vote(&answers).map_err(|e| script_error(e.to_string()))
    }

    fn choice_vote(_: &mut Agent, answers: Array) -> String {
        let answers: Vec<String> = answers.iter().map(dynamic_to_string).collect();
        policies::choice_vote(&answers).unwrap_or_default()
    }

    /// Asks the strong model for the next action list.
    ///
    /// `view.goal` becomes the system message and `view.context` the user
    /// message. Malformed lists are re-asked; after the retries run out a
    /// single `think` action carrying the parse diagnostic is returned. An
    /// unreachable backend yields an empty list.
    fn request_actions(agent: &mut Agent, view: Map) -> Result<Array, Box<EvalAltResult>> {
        let text = |key: &str| view.get(key).map(dynamic_to_string).unwrap_or_default();
        let settings = agent.ctx.decision;
        let call = LlmCall {
            messages: vec![
                Message::system(text("goal")),
                Message::user(text("context")),
            ],
            role: Some("self-improving agent".into()),
            return_keys: vec!["actions".into()],
            requirements: Some(
                "\"actions\" must be a JSON list of action objects, each with a \"kind\" field."
                    .into(),
            ),
            temperature: Some(settings.temperature_milli as f64 / 1000.0),
            n: Some(settings.samples.max(1)),
            model: Some("strong".into()),
            prompt: None,
        };
        let mut diagnostic = String::new();
        for _ in 0..=settings.retries {
            let resp = match agent.call_llm(call.clone(), Tier::Strong) {
                Ok(r) => r,
                Err(GatewayError::BackendUnavailable(_)) => return Ok(Array::new()),
                Err(e) => return Err(script_error(format!("decision call failed: {e}"))),
            };
            for record in &resp.records {
                match Action::parse_list(record.get("actions")) {
                    Ok(actions) => return actions_to_dynamic(&actions),
                    Err(e) => diagnostic = e,
                }
            }
        }
        let fallback = Action::Think {
            text: format!(
                "decision output could not be parsed after {} attempts: {diagnostic}",
                settings.retries + 1
            ),
        };
        actions_to_dynamic(&[fallback])
    }
}

pub fn actions_to_dynamic(actions: &[Action]) -> Result<Array, Box<EvalAltResult>> {
    actions.iter().map(rhai::serde::to_dynamic).collect()
}

/// Converts a unit's return value into actions.
pub fn actions_from_dynamic(value: Dynamic) -> Result<Vec<Action>, String> {
    if value.is_array() {
        let arr = value.cast::<Array>();
        if arr.is_empty() {
            return Ok(Vec::new());
        }
        let json: serde_json::Value =
            rhai::serde::from_dynamic(&Dynamic::from_array(arr)).map_err(|e| e.to_string())?;
        Action::from_json_list(json)
    } else if value.is_string() {
        Action::parse_list(&dynamic_to_string(&value))
    } else {
        Err(format!(
            "decision unit returned {} instead of an action list",
            value.type_name()
        ))
    }
}

pub fn to_json(value: &Dynamic) -> Result<serde_json::Value, String> {
    rhai::serde::from_dynamic(value).map_err(|e| e.to_string())
}

pub fn from_json(value: &serde_json::Value) -> Dynamic {
    rhai::serde::to_dynamic(value).unwrap_or(Dynamic::UNIT)
}

pub(crate) fn display(value: &Dynamic) -> String {
    dynamic_to_string(value)
}
