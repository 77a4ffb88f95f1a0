use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{validate_batch, EmbedError, Embedder, EmbeddingVector};
use crate::http::{HttpError, JsonClient};

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
    dim: usize,
}

/// Client for `POST {texts} -> {vectors, dim}`. One request per batch, no
/// hidden concurrency.
pub struct RemoteEmbedder {
    client: JsonClient,
    dim: usize,
}

impl RemoteEmbedder {
    pub fn new(endpoint: &str, dim: usize, timeout: Duration) -> Result<Self, EmbedError> {
        let client = JsonClient::new(endpoint, timeout).map_err(map_http)?;
        Ok(Self { client, dim })
    }
}

fn map_http(e: HttpError) -> EmbedError {
    match e {
        HttpError::Transport(_) => EmbedError::Retryable(e.to_string()),
        HttpError::Status(_) | HttpError::Decode(_) => EmbedError::Protocol(e.to_string()),
    }
}

impl Embedder for RemoteEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn fingerprint(&self) -> String {
        format!("remote:dim={}:{}", self.dim, self.client.endpoint())
    }

    fn embed_text(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let mut out = self.embed_batch(&[text])?;
        Ok(out.remove(0))
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        validate_batch(texts)?;
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let resp: EmbedResponse = self.client.post(&EmbedRequest { texts }).map_err(map_http)?;
        if resp.dim != self.dim {
            return Err(EmbedError::Protocol(format!(
                "server reported dim {}, expected {}",
                resp.dim, self.dim
            )));
        }
        if resp.vectors.len() != texts.len() {
            return Err(EmbedError::Protocol(format!(
                "server returned {} vectors for {} texts",
                resp.vectors.len(),
                texts.len()
            )));
        }
        resp.vectors
            .into_iter()
            .enumerate()
            .map(|(i, v)| {
                if v.len() != self.dim {
                    return Err(EmbedError::Protocol(format!(
                        "vector {i} has dim {}, expected {}",
                        v.len(),
                        self.dim
                    )));
                }
                EmbeddingVector::new(v).map_err(|e| EmbedError::Protocol(format!("vector {i}: {e}")))
            })
            .collect()
    }
}
