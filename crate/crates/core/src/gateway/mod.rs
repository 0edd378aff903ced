//! Uniform access to model backends with structured-output coercion and
//! budget accounting.
//!
//! Two tiers exist: a strong model for improvement-loop decisions and a weak
//! model for solver calls. Each tier is backed either by a live
//! chat-completion endpoint or by a deterministic script.

pub mod budget;
pub mod coerce;
pub mod live;
pub mod scripted;

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};
use thiserror::Error;

pub use budget::{Budget, CostRecord, CostUnits, SpendOutcome};
pub use scripted::{script_backend, OnExhausted, ScriptEntry, ScriptFile, ScriptedBackend};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GatewayError {
    #[error("budget exhausted")]
    BudgetExhausted,
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("cannot load script {path}: {message}")]
    Script { path: String, message: String },
    #[error("environment variable {0} is not set")]
    MissingApiKey(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("{0}")]
    Unavailable(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: String,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Message {
            role: "system".into(),
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Message {
            role: "user".into(),
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Message {
            role: "assistant".into(),
            content: content.into(),
        }
    }
}

/// A structured request: sample `num_of_response` records with `return_keys`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRequest {
    pub model_id: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub num_of_response: usize,
    pub persona_role: String,
    pub return_keys: Vec<String>,
    pub requirements: String,
}

impl DecisionRequest {
    pub const MAX_TEMPERATURE: f64 = 2.0;

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.messages.is_empty() {
            return Err(GatewayError::InvalidRequest("messages are empty".into()));
        }
        if self.return_keys.is_empty() {
            return Err(GatewayError::InvalidRequest("return_keys are empty".into()));
        }
        if !(0.0..=Self::MAX_TEMPERATURE).contains(&self.temperature) {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature {} outside [0, {}]",
                self.temperature,
                Self::MAX_TEMPERATURE
            )));
        }
        if self.num_of_response == 0 {
            return Err(GatewayError::InvalidRequest(
                "num_of_response must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Key-to-string map for one sampled response.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Record {
    pub fields: BTreeMap<String, String>,
    /// Requested keys that were absent (their field holds "").
    pub missing: Vec<String>,
}

impl Record {
    pub fn get(&self, key: &str) -> &str {
        self.fields.get(key).map(String::as_str).unwrap_or("")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionResponse {
    pub records: Vec<Record>,
    pub raw_texts: Vec<String>,
    pub cost: CostRecord,
}

/// What a backend sees: a fully assembled chat.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
}

impl ChatRequest {
    pub fn transcript(&self) -> String {
        self.messages
            .iter()
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
    /// Explicit cost; when absent the price table is used.
    pub cost: Option<f64>,
}

pub trait Backend: Send + Sync {
    fn complete(&self, req: &ChatRequest, n: usize) -> Result<Vec<Completion>, BackendError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Strong,
    Weak,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelTiers {
    pub strong: String,
    pub weak: String,
}

impl Default for ModelTiers {
    fn default() -> Self {
        ModelTiers {
            strong: "strong".into(),
            weak: "weak".into(),
        }
    }
}

impl ModelTiers {
    pub fn model(&self, tier: Tier) -> &str {
        match tier {
            Tier::Strong => &self.strong,
            Tier::Weak => &self.weak,
        }
    }
}

/// Per-1000-token prices for one model.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelPrice {
    pub input_per_1k: f64,
    pub output_per_1k: f64,
}

pub type PriceTable = BTreeMap<String, ModelPrice>;

/// Loose request shape used by logic units and `call_llm` actions.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LlmCall {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub messages: Vec<Message>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub return_keys: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requirements: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// A model id, or the tier names "strong" / "weak".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
}

impl LlmCall {
    /// Resolves defaults. With `pin_tier` set the requested model is ignored.
    pub fn into_request(
        self,
        tiers: &ModelTiers,
        default_tier: Tier,
        pin_tier: Option<Tier>,
    ) -> Result<DecisionRequest, GatewayError> {
        let mut messages = self.messages;
        if let Some(prompt) = self.prompt {
            messages.push(Message::user(prompt));
        }
        let model_id = match (pin_tier, self.model.as_deref()) {
            (Some(tier), _) => tiers.model(tier).to_string(),
            (None, None) => tiers.model(default_tier).to_string(),
            (None, Some("strong")) => tiers.strong.clone(),
            (None, Some("weak")) => tiers.weak.clone(),
            (None, Some(other)) => other.to_string(),
        };
        let return_keys = if self.return_keys.is_empty() {
            vec!["reasoning".to_string(), "answer".to_string()]
        } else {
            self.return_keys
        };
        let req = DecisionRequest {
            model_id,
            messages,
            temperature: self.temperature.unwrap_or(0.0),
            num_of_response: self.n.unwrap_or(1),
            persona_role: self.role.unwrap_or_else(|| "helpful assistant".into()),
            return_keys,
            requirements: self.requirements.unwrap_or_default(),
        };
        req.validate()?;
        Ok(req)
    }
}

pub struct Gateway {
    strong: Arc<dyn Backend>,
    weak: Arc<dyn Backend>,
    tiers: ModelTiers,
    prices: PriceTable,
    budget: Mutex<Budget>,
    parse_retries: usize,
}

impl Gateway {
    pub fn new(
        strong: Arc<dyn Backend>,
        weak: Arc<dyn Backend>,
        tiers: ModelTiers,
        prices: PriceTable,
        budget: Budget,
    ) -> Self {
        Gateway {
            strong,
            weak,
            tiers,
            prices,
            budget: Mutex::new(budget),
            parse_retries: 2,
        }
    }

    /// Gateway over a loaded script file with the default tier names.
    pub fn scripted(script: ScriptFile, budget: Budget) -> Self {
        let strong = Arc::new(script_backend(script.decision, script.on_exhausted));
        let weak = Arc::new(script_backend(script.solver, script.on_exhausted));
        Gateway::new(
            strong,
            weak,
            ModelTiers::default(),
            PriceTable::new(),
            budget,
        )
    }

    pub fn tiers(&self) -> &ModelTiers {
        &self.tiers
    }

    pub fn budget(&self) -> Budget {
        *self.budget.lock().expect("budget lock poisoned")
    }

    fn backend_for(&self, model_id: &str) -> &Arc<dyn Backend> {
        if model_id == self.tiers.strong {
            &self.strong
        } else {
            &self.weak
        }
    }

    fn price(&self, model: &str, c: &Completion) -> CostUnits {
        if let Some(explicit) = c.cost {
            return CostUnits::from_f64(explicit);
        }
        let p = self.prices.get(model).copied().unwrap_or_default();
        CostUnits::from_f64(
            c.input_tokens as f64 / 1000.0 * p.input_per_1k
                + c.output_tokens as f64 / 1000.0 * p.output_per_1k,
        )
    }

    /// One backend call, debited as a single call.
    fn metered(
        &self,
        chat: &ChatRequest,
        n: usize,
    ) -> Result<(Vec<Completion>, CostRecord), GatewayError> {
        if self.budget().is_exhausted() {
            return Err(GatewayError::BudgetExhausted);
        }
        let completions = self
            .backend_for(&chat.model)
            .complete(chat, n)
            .map_err(|BackendError::Unavailable(m)| GatewayError::BackendUnavailable(m))?;
        let mut cost = CostRecord {
            calls: 1,
            ..Default::default()
        };
        for c in &completions {
            cost.input_tokens += c.input_tokens;
            cost.output_tokens += c.output_tokens;
            cost.amount += self.price(&chat.model, c);
        }
        let outcome = self
            .budget
            .lock()
            .expect("budget lock poisoned")
            .spend(&cost);
        match outcome {
            SpendOutcome::Refused => Err(GatewayError::BudgetExhausted),
            SpendOutcome::Debited | SpendOutcome::Exhausted => Ok((completions, cost)),
        }
    }

    /// Samples `num_of_response` structured records.
    ///
    /// Unparseable outputs are re-asked up to two times each; a record that
    /// still fails comes back with every key empty and flagged missing.
    pub fn call_json_llm(&self, req: &DecisionRequest) -> Result<DecisionResponse, GatewayError> {
        req.validate()?;
        let mut messages = vec![Message::system(coerce::system_prompt(req))];
        messages.extend(req.messages.iter().cloned());
        let chat = ChatRequest {
            model: req.model_id.clone(),
            messages,
            temperature: req.temperature,
        };
        let (completions, mut cost) = self.metered(&chat, req.num_of_response)?;
        let mut records = Vec::with_capacity(completions.len());
        let mut raw_texts = Vec::with_capacity(completions.len());
        for completion in completions {
            let mut text = completion.text;
            let mut parsed = coerce::extract_object(&text);
            let mut attempts = 0;
            while parsed.is_none() && attempts < self.parse_retries {
                attempts += 1;
                match self.metered(&chat, 1) {
                    Ok((mut again, extra)) => {
                        cost += extra;
                        if let Some(c) = again.pop() {
                            text = c.text;
                            parsed = coerce::extract_object(&text);
                        }
                    }
                    Err(_) => break,
                }
            }
            records.push(match parsed {
                Some(obj) => coerce::to_record(&obj, &req.return_keys),
                None => coerce::empty_record(&req.return_keys),
            });
            raw_texts.push(text);
        }
        Ok(DecisionResponse {
            records,
            raw_texts,
            cost,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn request(n: usize, keys: &[&str]) -> DecisionRequest {
        DecisionRequest {
            model_id: "weak".into(),
            messages: vec![Message::user("task")],
            temperature: 0.5,
            num_of_response: n,
            persona_role: "reasoning expert".into(),
            return_keys: keys.iter().map(|k| k.to_string()).collect(),
            requirements: String::new(),
        }
    }

    fn gateway(solver: Vec<ScriptEntry>, budget: Budget) -> Gateway {
        Gateway::scripted(
            ScriptFile {
                on_exhausted: OnExhausted::Raise,
                decision: vec![],
                solver,
            },
            budget,
        )
    }

    #[test]
    fn five_deep_queue_returns_records_in_order() {
        let entries = (0..5)
            .map(|i| ScriptEntry::record(json!({"reasoning": "r", "answer": i.to_string()})))
            .collect();
        let gw = gateway(entries, Budget::default());
        let resp = gw
            .call_json_llm(&request(5, &["reasoning", "answer"]))
            .unwrap();
        let answers: Vec<_> = resp
            .records
            .iter()
            .map(|r| r.get("answer").to_string())
            .collect();
        assert_eq!(answers, vec!["0", "1", "2", "3", "4"]);
        assert_eq!(resp.cost.calls, 1);
        assert_eq!(gw.budget().spent_calls, 1);
    }

    #[test]
    fn missing_key_is_flagged() {
        let gw = gateway(
            vec![ScriptEntry::record(json!({"answer": "3"}))],
            Budget::default(),
        );
        let resp = gw
            .call_json_llm(&request(1, &["reasoning", "answer"]))
            .unwrap();
        assert_eq!(resp.records[0].get("reasoning"), "");
        assert_eq!(resp.records[0].missing, vec!["reasoning".to_string()]);
    }

    #[test]
    fn second_call_over_cost_cap_is_refused() {
        let entries = vec![
            ScriptEntry::record(json!({"answer": "a"})).with_cost(0.4),
            ScriptEntry::record(json!({"answer": "b"})).with_cost(0.4),
        ];
        let gw = gateway(entries, Budget::new(CostUnits::from_f64(0.5), 100));
        assert!(gw.call_json_llm(&request(1, &["answer"])).is_ok());
        assert_eq!(
            gw.call_json_llm(&request(1, &["answer"])),
            Err(GatewayError::BudgetExhausted)
        );
        assert_eq!(gw.budget().spent_cost, CostUnits::from_f64(0.4));
    }

    #[test]
    fn unparseable_output_is_reasked_then_flagged() {
        let entries = vec![
            ScriptEntry::text("not json"),
            ScriptEntry::text("still not json"),
            ScriptEntry::text("{\"answer\": \"ok\"}"),
            ScriptEntry::text("garbage"),
            ScriptEntry::text("garbage"),
            ScriptEntry::text("garbage"),
        ];
        let gw = gateway(entries, Budget::default());
        let resp = gw.call_json_llm(&request(1, &["answer"])).unwrap();
        assert_eq!(resp.records[0].get("answer"), "ok");
        assert_eq!(resp.cost.calls, 3);
        let resp = gw.call_json_llm(&request(1, &["answer"])).unwrap();
        assert_eq!(resp.records[0].missing, vec!["answer".to_string()]);
        assert_eq!(resp.cost.calls, 3);
        assert_eq!(gw.budget().spent_calls, 6);
    }

    #[test]
    fn request_validation() {
        let mut r = request(1, &["answer"]);
        r.messages.clear();
        assert!(r.validate().is_err());
        let mut r = request(1, &[]);
        assert!(r.validate().is_err());
        r = request(0, &["a"]);
        assert!(r.validate().is_err());
        r = request(1, &["a"]);
        r.temperature = -0.1;
        assert!(r.validate().is_err());
    }

    #[test]
    fn pinned_tier_overrides_requested_model() {
        let call = LlmCall {
            prompt: Some("x".into()),
            model: Some("strong".into()),
            ..Default::default()
        };
        let tiers = ModelTiers::default();
        let req = call.clone().into_request(&tiers, Tier::Weak, None).unwrap();
        assert_eq!(req.model_id, "strong");
        let req = call
            .into_request(&tiers, Tier::Weak, Some(Tier::Weak))
            .unwrap();
        assert_eq!(req.model_id, "weak");
        assert_eq!(req.return_keys, vec!["reasoning", "answer"]);
    }
}
