//! Blocking JSON POST shared by the remote embedder, extractor, and LLM backend.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug)]
pub(crate) enum HttpError {
    /// Connection, timeout, or other failure before a status was received.
    Transport(String),
    Status(u16),
    Decode(String),
}

impl std::fmt::Display for HttpError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            HttpError::Transport(m) => write!(f, "transport failure: {m}"),
            HttpError::Status(s) => write!(f, "unexpected HTTP status {s}"),
            HttpError::Decode(m) => write!(f, "malformed response body: {m}"),
        }
    }
}

pub(crate) struct JsonClient {
    client: reqwest::blocking::Client,
    endpoint: String,
}

impl JsonClient {
    pub(crate) fn new(endpoint: &str, timeout: Duration) -> Result<Self, HttpError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| HttpError::Transport(e.to_string()))?;
        Ok(Self {
            client,
            endpoint: endpoint.to_owned(),
        })
    }

    pub(crate) fn endpoint(&self) -> &str {
        &self.endpoint
    }

    pub(crate) fn post<Req: Serialize, Resp: DeserializeOwned>(
        &self,
        body: &Req,
    ) -> Result<Resp, HttpError> {
        let resp = self
            .client
            .post(&self.endpoint)
            .json(body)
            .send()
            .map_err(|e| HttpError::Transport(e.to_string()))?;
        let status = resp.status();
        if status != reqwest::StatusCode::OK {
            return Err(HttpError::Status(status.as_u16()));
        }
        let bytes = resp
            .bytes()
            .map_err(|e| HttpError::Transport(e.to_string()))?;
        serde_json::from_slice(&bytes).map_err(|e| HttpError::Decode(e.to_string()))
    }
}
