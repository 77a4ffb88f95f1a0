use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::http::{HttpError, JsonClient};

/// Environment variable that overrides the remote LLM endpoint.
pub const ENDPOINT_ENV: &str = "LAWFUSE_LLM_ENDPOINT";

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("invalid prompt: {0}")]
    InvalidInput(String),
    #[error("LLM backend unavailable (retryable): {0}")]
    Retryable(String),
    #[error("LLM backend protocol error: {0}")]
    Protocol(String),
}

/// Prompt in, text out.
pub trait LlmBackend: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, prompt: &str) -> Result<String, BackendError>;
}

/// Deterministic stand-in: replies with a digest of the prompt followed by
/// its first `preview_chars` characters.
#[derive(Debug, Clone)]
pub struct MockBackend {
    preview_chars: usize,
}

impl MockBackend {
    pub const DEFAULT_PREVIEW: usize = 48;

    pub fn new(preview_chars: usize) -> Self {
        Self { preview_chars }
    }
}

impl Default for MockBackend {
    fn default() -> Self {
        Self::new(Self::DEFAULT_PREVIEW)
    }
}

impl LlmBackend for MockBackend {
    fn name(&self) -> &str {
        "mock"
    }

    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        mock_backend(prompt, self.preview_chars)
    }
}

pub fn mock_backend(prompt: &str, preview_chars: usize) -> Result<String, BackendError> {
    if prompt.is_empty() {
        return Err(BackendError::InvalidInput("prompt is empty".into()));
    }
    let digest = Sha256::digest(prompt.as_bytes());
    let hex: String = digest[..8].iter().map(|b| format!("{b:02x}")).collect();
    let preview: String = prompt.chars().take(preview_chars).collect();
    Ok(format!("[mock {hex}] {preview}"))
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    prompt: &'a str,
}

#[derive(Deserialize)]
struct CompletionResponse {
    text: String,
}

/// `POST {prompt} -> {text}`, one request per call.
pub struct RemoteBackend {
    client: JsonClient,
}

impl RemoteBackend {
    pub fn new(endpoint: &str, timeout: Duration) -> Result<Self, BackendError> {
        let client = JsonClient::new(endpoint, timeout).map_err(|e| BackendError::Protocol(e.to_string()))?;
        Ok(Self { client })
    }
}

impl LlmBackend for RemoteBackend {
    fn name(&self) -> &str {
        "remote"
    }

    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        if prompt.is_empty() {
            return Err(BackendError::InvalidInput("prompt is empty".into()));
        }
        let resp: CompletionResponse = self
            .client
            .post(&CompletionRequest { prompt })
            .map_err(|e| match e {
                HttpError::Transport(_) => BackendError::Retryable(e.to_string()),
                _ => BackendError::Protocol(e.to_string()),
            })?;
        Ok(resp.text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mock_is_deterministic_and_distinguishing() {
        let m = MockBackend::new(10);
        assert_eq!(m.complete("hello world").unwrap(), m.complete("hello world").unwrap());
        assert_ne!(m.complete("hello world").unwrap(), m.complete("hello world!").unwrap());
        assert!(m.complete("hello world").unwrap().ends_with("] hello worl"));
        assert!(matches!(m.complete(""), Err(BackendError::InvalidInput(_))));
    }

    #[test]
    fn preview_counts_characters_not_bytes() {
        let reply = mock_backend("民法典第一条", 3).unwrap();
        assert!(reply.ends_with("] 民法典"));
    }
}
