use std::num::NonZeroUsize;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use lru::LruCache;

use super::{validate_batch, validate_text, EmbedError, Embedder, EmbeddingVector};

type Key = (String, String);

/// LRU cache in front of any embedder, keyed by (config fingerprint, text).
/// Results are identical to the uncached embedder.
pub struct CachedEmbedder<E> {
    inner: E,
    fingerprint: String,
    cache: Mutex<LruCache<Key, EmbeddingVector>>,
    backend_calls: AtomicU64,
}

impl<E: Embedder> CachedEmbedder<E> {
    pub fn new(inner: E, capacity: usize) -> Self {
        let capacity = NonZeroUsize::new(capacity).unwrap_or(NonZeroUsize::MIN);
        Self {
            fingerprint: inner.fingerprint(),
            inner,
            cache: Mutex::new(LruCache::new(capacity)),
            backend_calls: AtomicU64::new(0),
        }
    }

    /// Number of calls forwarded to the wrapped embedder (single or batch).
    pub fn backend_calls(&self) -> u64 {
        self.backend_calls.load(Ordering::Relaxed)
    }

    pub fn cached_entries(&self) -> usize {
        self.cache.lock().expect("cache lock poisoned").len()
    }

    fn key(&self, text: &str) -> Key {
        (self.fingerprint.clone(), text.to_owned())
    }
}

impl<E: Embedder> Embedder for CachedEmbedder<E> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn fingerprint(&self) -> String {
        self.fingerprint.clone()
    }

    fn embed_text(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        validate_text(text)?;
        let key = self.key(text);
        if let Some(v) = self.cache.lock().expect("cache lock poisoned").get(&key) {
            return Ok(v.clone());
        }
        self.backend_calls.fetch_add(1, Ordering::Relaxed);
        let v = self.inner.embed_text(text)?;
        self.cache
            .lock()
            .expect("cache lock poisoned")
            .put(key, v.clone());
        Ok(v)
    }

    /// Misses are deduplicated and sent to the backend as one batch.
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        validate_batch(texts)?;
        let mut out: Vec<Option<EmbeddingVector>> = Vec::with_capacity(texts.len());
        let mut misses: Vec<&str> = Vec::new();
        {
            let mut cache = self.cache.lock().expect("cache lock poisoned");
            for t in texts {
                let hit = cache.get(&self.key(t)).cloned();
                if hit.is_none() && !misses.contains(t) {
                    misses.push(t);
                }
                out.push(hit);
            }
        }
        if !misses.is_empty() {
            self.backend_calls.fetch_add(1, Ordering::Relaxed);
            let fetched = self.inner.embed_batch(&misses)?;
            let mut cache = self.cache.lock().expect("cache lock poisoned");
            for (slot, t) in out.iter_mut().zip(texts) {
                if slot.is_none() {
                    let i = misses.iter().position(|m| m == t).expect("miss recorded");
                    *slot = Some(fetched[i].clone());
                }
            }
            for (t, v) in misses.iter().zip(fetched) {
                cache.put(self.key(t), v);
            }
        }
        Ok(out.into_iter().map(|v| v.expect("filled")).collect())
    }
}
