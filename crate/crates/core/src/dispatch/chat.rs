//! Chat-completion clients: an HTTP client for OpenAI-compatible endpoints
//! and a scripted client for tests and offline runs.

use std::collections::VecDeque;
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use base64::Engine;
use serde::Deserialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::bev::RgbImage;

pub const ENDPOINT_VAR: &str = "AMOD_MODEL_ENDPOINT";
pub const MODEL_VAR: &str = "AMOD_MODEL_NAME";
pub const API_KEY_VAR: &str = "AMOD_MODEL_API_KEY";
pub const SCRIPT_VAR: &str = "AMOD_MODEL_SCRIPT";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    User,
    Assistant,
}

impl Role {
    fn as_str(self) -> &'static str {
        match self {
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatTurn {
    pub role: Role,
    pub text: String,
    pub image: Option<RgbImage>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ChatRequest {
    pub system: String,
    pub turns: Vec<ChatTurn>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChatError {
    #[error("chat request timed out")]
    Timeout,
    #[error("chat transport failed: {0}")]
    Transport(String),
    #[error("unexpected chat response: {0}")]
    Protocol(String),
    #[error("chat client misconfigured: {0}")]
    Config(String),
    #[error("scripted responses exhausted")]
    Exhausted,
}

/// One request/response exchange with a language model.
pub trait ChatClient: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, ChatError>;
}

/// OpenAI-style `messages` array; images travel as PNG data URLs.
pub fn request_body(model: &str, request: &ChatRequest) -> Result<Value, ChatError> {
    let mut messages = vec![json!({"role": "system", "content": request.system})];
    for turn in &request.turns {
        let content = match &turn.image {
            None => json!(turn.text),
            Some(img) => {
                let png = img.to_png().map_err(|e| ChatError::Protocol(e.to_string()))?;
                let url = format!(
                    "data:image/png;base64,{}",
                    base64::engine::general_purpose::STANDARD.encode(png)
                );
                json!([
                    {"type": "text", "text": turn.text},
                    {"type": "image_url", "image_url": {"url": url}},
                ])
            }
        };
        messages.push(json!({"role": turn.role.as_str(), "content": content}));
    }
    Ok(json!({"model": model, "messages": messages}))
}

#[derive(Debug, Clone)]
pub struct HttpChatClient {
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
}

impl HttpChatClient {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key: None,
            timeout: Duration::from_secs(60),
        }
    }

    /// Endpoint and model name are required; the API key is optional.
    pub fn from_env() -> Result<Self, ChatError> {
        let var = |name: &str| std::env::var(name).map_err(|_| ChatError::Config(format!("{name} is not set")));
        let mut c = Self::new(var(ENDPOINT_VAR)?, var(MODEL_VAR)?);
        c.api_key = std::env::var(API_KEY_VAR).ok();
        Ok(c)
    }
}

impl ChatClient for HttpChatClient {
    fn complete(&self, request: &ChatRequest) -> Result<String, ChatError> {
        let body = request_body(&self.model, request)?;
        let client = reqwest::blocking::Client::builder()
            .timeout(self.timeout)
            .build()
            .map_err(|e| ChatError::Transport(e.to_string()))?;
        let mut req = client.post(&self.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                ChatError::Timeout
            } else {
                ChatError::Transport(e.to_string())
            }
        })?;
        let status = resp.status();
        let text = resp.text().map_err(|e| ChatError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(ChatError::Transport(format!("HTTP {status}: {text}")));
        }
        let value: Value = serde_json::from_str(&text).map_err(|e| ChatError::Protocol(e.to_string()))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| ChatError::Protocol("missing choices[0].message.content".into()))
    }
}

/// A canned reply: either response text or a named failure.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(untagged)]
pub enum ScriptedResponse {
    Text { text: String },
    Error { error: String },
}

#[derive(Deserialize)]
struct Script {
    responses: Vec<ScriptedResponse>,
}

/// Replays responses in order and records every request it receives.
#[derive(Debug, Default)]
pub struct ScriptedChatClient {
    responses: Mutex<VecDeque<ScriptedResponse>>,
    received: Mutex<Vec<ChatRequest>>,
}

impl ScriptedChatClient {
    pub fn new(responses: impl IntoIterator<Item = ScriptedResponse>) -> Self {
        Self {
            responses: Mutex::new(responses.into_iter().collect()),
            received: Mutex::default(),
        }
    }

    pub fn texts<S: Into<String>>(texts: impl IntoIterator<Item = S>) -> Self {
        Self::new(texts.into_iter().map(|t| ScriptedResponse::Text { text: t.into() }))
    }

    /// Parses `{"responses": [{"text": ...}, {"error": "timeout"}, ...]}`.
    pub fn from_json(text: &str) -> Result<Self, ChatError> {
        let script: Script = serde_json::from_str(text).map_err(|e| ChatError::Config(e.to_string()))?;
        Ok(Self::new(script.responses))
    }

    pub fn from_file(path: &Path) -> Result<Self, ChatError> {
        let text = std::fs::read_to_string(path).map_err(|e| ChatError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn received(&self) -> Vec<ChatRequest> {
        self.received.lock().expect("lock").clone()
    }

    pub fn remaining(&self) -> usize {
        self.responses.lock().expect("lock").len()
    }
}

impl ChatClient for ScriptedChatClient {
    fn complete(&self, request: &ChatRequest) -> Result<String, ChatError> {
        self.received.lock().expect("lock").push(request.clone());
        match self.responses.lock().expect("lock").pop_front() {
            Some(ScriptedResponse::Text { text }) => Ok(text),
            Some(ScriptedResponse::Error { error }) if error == "timeout" => Err(ChatError::Timeout),
            Some(ScriptedResponse::Error { error }) => Err(ChatError::Transport(error)),
            None => Err(ChatError::Exhausted),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn script_replays_in_order() {
        let c = ScriptedChatClient::from_json(r#"{"responses":[{"text":"a"},{"error":"timeout"},{"error":"boom"}]}"#).unwrap();
        let req = ChatRequest::default();
        assert_eq!(c.complete(&req), Ok("a".into()));
        assert_eq!(c.complete(&req), Err(ChatError::Timeout));
        assert_eq!(c.complete(&req), Err(ChatError::Transport("boom".into())));
        assert_eq!(c.complete(&req), Err(ChatError::Exhausted));
        assert_eq!(c.received().len(), 4);
    }

    #[test]
    fn body_embeds_images_as_data_urls() {
        let req = ChatRequest {
            system: "sys".into(),
            turns: vec![
                ChatTurn { role: Role::User, text: "look".into(), image: Some(RgbImage::new(2, 2, [1, 2, 3])) },
                ChatTurn { role: Role::Assistant, text: "ok".into(), image: None },
            ],
        };
        let body = request_body("m", &req).unwrap();
        assert_eq!(body["messages"][0]["role"], "system");
        let url = body["messages"][1]["content"][1]["image_url"]["url"].as_str().unwrap();
        assert!(url.starts_with("data:image/png;base64,"));
        assert_eq!(body["messages"][2]["content"], "ok");
    }
}
