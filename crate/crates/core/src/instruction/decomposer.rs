//! Client for an external instruction decomposer (typically an LLM behind a
//! chat-completions style endpoint).

use super::{InstructionIR, IrError};
use crate::http::{HttpTransport, Transport, TransportError};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use std::time::Duration;
use thiserror::Error;

/// Prompt shipped with the crate; used when no template path is configured.
pub const DEFAULT_PROMPT: &str = include_str!("../../assets/decomposer_prompt.txt");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecomposerConfig {
    pub endpoint: String,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: Option<String>,
    pub prompt_template: Option<PathBuf>,
    pub model: Option<String>,
    pub timeout_secs: f64,
}

impl Default for DecomposerConfig {
    fn default() -> Self {
        Self {
            endpoint: String::new(),
            api_key_env: None,
            prompt_template: None,
            model: None,
            timeout_secs: 30.0,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecomposeError {
    #[error("decomposer not configured: {0}")]
    Config(String),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("malformed decomposer reply: {0}")]
    MalformedReply(String),
    #[error("decomposer returned invalid IR: {0}")]
    InvalidIr(IrError),
}

pub struct DecomposerClient<T: Transport = HttpTransport> {
    config: DecomposerConfig,
    prompt: String,
    transport: T,
}

impl DecomposerClient<HttpTransport> {
    pub fn new(config: DecomposerConfig) -> Result<Self, DecomposeError> {
        Self::with_transport(config, HttpTransport)
    }
}

impl<T: Transport> DecomposerClient<T> {
    pub fn with_transport(config: DecomposerConfig, transport: T) -> Result<Self, DecomposeError> {
        if config.endpoint.trim().is_empty() {
            return Err(DecomposeError::Config("endpoint is empty".into()));
        }
        if !(config.timeout_secs > 0.0) {
            return Err(DecomposeError::Config("timeout_secs must be positive".into()));
        }
        let prompt = match &config.prompt_template {
            Some(path) => std::fs::read_to_string(path).map_err(|e| {
                DecomposeError::Config(format!("prompt template {}: {e}", path.display()))
            })?,
            None => DEFAULT_PROMPT.to_string(),
        };
        Ok(Self {
            config,
            prompt,
            transport,
        })
    }

    fn request_body(&self, text: &str) -> serde_json::Value {
        let mut body = serde_json::json!({
            "messages": [
                {"role": "system", "content": self.prompt},
                {"role": "user", "content": text},
            ],
            "temperature": 0,
        });
        if let Some(model) = &self.config.model {
            body["model"] = serde_json::Value::String(model.clone());
        }
        body
    }

    fn token(&self) -> Result<Option<String>, DecomposeError> {
        match &self.config.api_key_env {
            None => Ok(None),
            Some(var) => std::env::var(var)
                .map(Some)
                .map_err(|_| DecomposeError::Config(format!("environment variable {var} is not set"))),
        }
    }
}

/// Pulls the IR object out of a reply: either the IR itself, or a chat
/// completion whose first message content holds it (optionally fenced).
fn extract_ir_value(reply: &str) -> Result<serde_json::Value, DecomposeError> {
    let parsed: serde_json::Value = serde_json::from_str(reply.trim())
        .map_err(|e| DecomposeError::MalformedReply(format!("reply is not JSON: {e}")))?;
    if parsed.get("waypoints").is_some() {
        return Ok(parsed);
    }
    let content = parsed
        .pointer("/choices/0/message/content")
        .and_then(|c| c.as_str())
        .ok_or_else(|| {
            DecomposeError::MalformedReply("reply holds neither IR nor choices[0].message.content".into())
        })?;
    let inner = strip_fence(content);
    serde_json::from_str(inner)
        .map_err(|e| DecomposeError::MalformedReply(format!("message content is not JSON: {e}")))
}

fn strip_fence(content: &str) -> &str {
    let t = content.trim();
    match t.strip_prefix("```") {
        Some(rest) => {
            let rest = rest.strip_prefix("json").unwrap_or(rest);
            rest.trim_end().strip_suffix("```").unwrap_or(rest).trim()
        }
        None => t,
    }
}

/// Sends `text` to the remote decomposer and returns validated IR.
///
/// One request, no retries. Callers fall back to
/// [`parse_constrained`](super::parse_constrained) on error.
pub fn decompose_remote<T: Transport>(
    text: &str,
    client: &DecomposerClient<T>,
) -> Result<InstructionIR, DecomposeError> {
    let token = client.token()?;
    let reply = client.transport.post_json(
        &client.config.endpoint,
        token.as_deref(),
        &client.request_body(text),
        Duration::from_secs_f64(client.config.timeout_secs),
    )?;
    let mut value = extract_ir_value(&reply)?;
    if let Some(obj) = value.as_object_mut() {
        obj.entry("raw_text")
            .or_insert_with(|| serde_json::Value::String(text.to_string()));
    }
    let ir: InstructionIR = serde_json::from_value(value)
        .map_err(|e| DecomposeError::InvalidIr(IrError::Schema(e.to_string())))?;
    ir.validate().map_err(DecomposeError::InvalidIr)?;
    Ok(ir)
}
