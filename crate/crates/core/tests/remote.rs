//! Remote clients against a minimal loopback HTTP/1.1 server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use lawfuse::embedding::{CachedEmbedder, EmbedError, Embedder, RemoteEmbedder};
use lawfuse::keywords::{ExtractorConfig, ExtractorKind, KeywordError, KeywordExtractor};
use lawfuse::pipeline::{BackendError, LlmBackend, RemoteBackend};
use serde_json::{json, Value};

type Handler = dyn Fn(&Value) -> (u16, String) + Send + Sync;

struct FakeServer {
    url: String,
    hits: Arc<AtomicUsize>,
}

/// Serves every connection with `handler`, one request per connection.
fn serve(handler: Box<Handler>) -> FakeServer {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = hits.clone();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut content_length = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 {
                    break;
                }
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                if let Some((k, v)) = line.split_once(':') {
                    if k.eq_ignore_ascii_case("content-length") {
                        content_length = v.trim().parse().unwrap();
                    }
                }
            }
            let mut body = vec![0; content_length];
            reader.read_exact(&mut body).unwrap();
            counter.fetch_add(1, Ordering::SeqCst);
            let request: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
            let (status, reply) = handler(&request);
            let _ = write!(
                stream,
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{reply}",
                reply.len()
            );
        }
    });
    FakeServer { url, hits }
}

/// A URL nothing is listening on.
fn dead_url() -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    format!("http://{addr}/v1")
}

const T: Duration = Duration::from_secs(5);

fn echo_embedding(dim: usize) -> Box<Handler> {
    Box::new(move |req| {
        let texts = req["texts"].as_array().unwrap();
        let vectors: Vec<Vec<f64>> = texts
            .iter()
            .map(|t| {
                let n = t.as_str().unwrap().chars().count() as f64;
                (0..dim).map(|i| n + i as f64).collect()
            })
            .collect();
        (200, json!({"vectors": vectors, "dim": dim}).to_string())
    })
}

#[test]
fn remote_embedder_batches() {
    let server = serve(echo_embedding(3));
    let e = RemoteEmbedder::new(&server.url, 3, T).unwrap();
    let out = e.embed_batch(&["ab", "abcd"]).unwrap();
    assert_eq!(out[0].values(), [2.0, 3.0, 4.0]);
    assert_eq!(out[1].values(), [4.0, 5.0, 6.0]);
    assert_eq!(server.hits.load(Ordering::SeqCst), 1);
}

#[test]
fn remote_embedder_dim_mismatch_is_protocol_error() {
    let server = serve(echo_embedding(4));
    let e = RemoteEmbedder::new(&server.url, 3, T).unwrap();
    let err = e.embed_text("x").unwrap_err();
    assert!(matches!(err, EmbedError::Protocol(_)), "{err}");
    assert!(!err.is_retryable());
}

#[test]
fn remote_embedder_count_mismatch_is_protocol_error() {
    let server = serve(Box::new(|_| (200, json!({"vectors": [[1.0, 2.0]], "dim": 2}).to_string())));
    let e = RemoteEmbedder::new(&server.url, 2, T).unwrap();
    assert!(matches!(e.embed_batch(&["a", "b"]), Err(EmbedError::Protocol(_))));
}

#[test]
fn remote_embedder_non_200_is_protocol_error() {
    let server = serve(Box::new(|_| (503, "{}".into())));
    let e = RemoteEmbedder::new(&server.url, 2, T).unwrap();
    assert!(matches!(e.embed_text("a"), Err(EmbedError::Protocol(_))));
}

#[test]
fn remote_embedder_transport_failure_is_retryable() {
    let e = RemoteEmbedder::new(&dead_url(), 2, T).unwrap();
    let err = e.embed_text("a").unwrap_err();
    assert!(err.is_retryable(), "{err}");
}

#[test]
fn cache_spares_the_backend() {
    let server = serve(echo_embedding(2));
    let e = CachedEmbedder::new(RemoteEmbedder::new(&server.url, 2, T).unwrap(), 16);
    let first = e.embed_batch(&["a", "bb", "a"]).unwrap();
    let second = e.embed_batch(&["bb", "a"]).unwrap();
    assert_eq!(first[1], second[0]);
    assert_eq!(server.hits.load(Ordering::SeqCst), 1);
}

fn remote_extractor(url: &str, max_keywords: usize) -> KeywordExtractor {
    KeywordExtractor::new(ExtractorConfig {
        kind: ExtractorKind::Remote,
        endpoint: Some(url.to_owned()),
        max_keywords,
        ..Default::default()
    })
    .unwrap()
}

#[test]
fn remote_extractor_cleans_reply() {
    let server = serve(Box::new(|req| {
        assert_eq!(req["max_keywords"], 2);
        (200, json!({"keywords": [" debt ", "", "debt", "limitation", "court"]}).to_string())
    }));
    let kw = remote_extractor(&server.url, 2).extract("debt limitation court").unwrap();
    assert_eq!(kw.as_slice(), ["debt", "limitation"]);
}

#[test]
fn remote_extractor_empty_reply_falls_back_to_query() {
    let server = serve(Box::new(|_| (200, json!({"keywords": []}).to_string())));
    let kw = remote_extractor(&server.url, 4).extract("  whole question ").unwrap();
    assert_eq!(kw.as_slice(), ["whole question"]);
}

#[test]
fn remote_extractor_errors() {
    let server = serve(Box::new(|_| (500, "oops".into())));
    assert!(matches!(remote_extractor(&server.url, 4).extract("q"), Err(KeywordError::Protocol(_))));
    assert!(matches!(remote_extractor(&dead_url(), 4).extract("q"), Err(KeywordError::Retryable(_))));
}

#[test]
fn remote_llm_roundtrip_and_errors() {
    let server = serve(Box::new(|req| {
        let prompt = req["prompt"].as_str().unwrap();
        (200, json!({"text": format!("answer to {prompt}")}).to_string())
    }));
    let b = RemoteBackend::new(&server.url, T).unwrap();
    assert_eq!(b.complete("q1").unwrap(), "answer to q1");
    assert!(matches!(b.complete(""), Err(BackendError::InvalidInput(_))));

    let bad = serve(Box::new(|_| (200, json!({"txt": "wrong field"}).to_string())));
    assert!(matches!(RemoteBackend::new(&bad.url, T).unwrap().complete("q"), Err(BackendError::Protocol(_))));
    assert!(matches!(RemoteBackend::new(&dead_url(), T).unwrap().complete("q"), Err(BackendError::Retryable(_))));
}
