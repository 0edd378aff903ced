//! Chat-completion client for OpenAI-compatible endpoints.

use serde::Deserialize;
use serde_json::json;
use std::time::Duration;

use super::{Backend, BackendError, ChatRequest, Completion};

pub struct LiveBackend {
    client: reqwest::blocking::Client,
    base_url: String,
    api_key: String,
    retries: usize,
}

impl LiveBackend {
    pub fn new(base_url: &str, api_key: String, timeout: Duration) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| BackendError::Unavailable(e.to_string()))?;
        Ok(LiveBackend {
            client,
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key,
            retries: 2,
        })
    }

    fn post_once(&self, body: &serde_json::Value) -> Result<ChatResponse, BackendError> {
        let resp = self
            .client
            .post(format!("{}/chat/completions", self.base_url))
            .bearer_auth(&self.api_key)
            .json(body)
            .send()
            .map_err(|e| BackendError::Unavailable(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            return Err(BackendError::Unavailable(format!("HTTP {status}: {text}")));
        }
        resp.json::<ChatResponse>()
            .map_err(|e| BackendError::Unavailable(format!("bad response body: {e}")))
    }
}

pub(crate) fn request_body(req: &ChatRequest, n: usize) -> serde_json::Value {
    let messages: Vec<_> = req
        .messages
        .iter()
        .map(|m| json!({"role": m.role, "content": m.content}))
        .collect();
    json!({
        "model": req.model,
        "messages": messages,
        "temperature": req.temperature,
        "n": n,
    })
}

#[derive(Debug, Deserialize)]
pub(crate) struct ChatResponse {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Debug, Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
struct Usage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

/// Usage is reported once per request; it is attributed to the first choice.
pub(crate) fn completions(resp: ChatResponse) -> Vec<Completion> {
    let usage = resp.usage.unwrap_or_default();
    resp.choices
        .into_iter()
        .enumerate()
        .map(|(i, c)| Completion {
            text: c.message.content.unwrap_or_default(),
            input_tokens: if i == 0 { usage.prompt_tokens } else { 0 },
            output_tokens: if i == 0 { usage.completion_tokens } else { 0 },
            cost: None,
        })
        .collect()
}

impl Backend for LiveBackend {
    fn complete(&self, req: &ChatRequest, n: usize) -> Result<Vec<Completion>, BackendError> {
        let body = request_body(req, n);
        let mut last = None;
        for attempt in 0..=self.retries {
            match self.post_once(&body) {
                Ok(resp) => return Ok(completions(resp)),
                Err(e) => {
                    tracing::warn!(attempt, error = %e, "chat completion failed");
                    last = Some(e);
                }
            }
        }
        Err(last.unwrap_or_else(|| BackendError::Unavailable("no attempt made".into())))
    }
}
