use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

use serde::Deserialize;

use super::{validate_text, EmbedError, Embedder, EmbeddingVector};

#[derive(Deserialize)]
struct SidecarLine {
    key: String,
    vector: Vec<f64>,
}

/// Serves vectors produced offline, keyed by the exact text they embed.
#[derive(Debug, Clone)]
pub struct FileEmbedder {
    dim: usize,
    vectors: HashMap<String, EmbeddingVector>,
    source: String,
}

impl FileEmbedder {
    pub fn open(path: &Path, expected_dim: Option<usize>) -> Result<Self, EmbedError> {
        let file = std::fs::File::open(path)?;
        Self::from_reader(
            std::io::BufReader::new(file),
            expected_dim,
            path.display().to_string(),
        )
    }

    /// Reads `{ "key": string, "vector": [number...] }` lines. All vectors must
    /// share one dimension (and match `expected_dim` when given); later
    /// duplicates of a key are rejected.
    pub fn from_reader<R: BufRead>(
        reader: R,
        expected_dim: Option<usize>,
        source: String,
    ) -> Result<Self, EmbedError> {
        let mut dim = expected_dim;
        let mut vectors = HashMap::new();
        for (i, line) in reader.lines().enumerate() {
            let line_no = i + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let err = |reason: String| EmbedError::Sidecar { line: line_no, reason };
            let parsed: SidecarLine = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
            let vector = EmbeddingVector::new(parsed.vector).map_err(|e| err(e.to_string()))?;
            match dim {
                Some(d) if d != vector.dim() => {
                    return Err(err(format!("vector has dim {}, expected {d}", vector.dim())))
                }
                None => dim = Some(vector.dim()),
                _ => {}
            }
            if vectors.insert(parsed.key.clone(), vector).is_some() {
                return Err(err(format!("duplicate key {:?}", parsed.key)));
            }
        }
        let dim = dim.ok_or_else(|| EmbedError::Config("empty sidecar and no dim given".into()))?;
        Ok(Self { dim, vectors, source })
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

impl Embedder for FileEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn fingerprint(&self) -> String {
        format!("file:dim={}:{}", self.dim, self.source)
    }

    fn embed_text(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        validate_text(text)?;
        self.vectors
            .get(text)
            .cloned()
            .ok_or_else(|| EmbedError::MissingKey(text.to_owned()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loads_and_serves() {
        let src = "{\"key\":\"debt\",\"vector\":[1,0,0]}\n\n{\"key\":\"loan\",\"vector\":[0.5,0.5,0]}\n";
        let e = FileEmbedder::from_reader(src.as_bytes(), None, "mem".into()).unwrap();
        assert_eq!(e.dim(), 3);
        assert_eq!(e.len(), 2);
        assert_eq!(e.embed_text("loan").unwrap().values(), &[0.5, 0.5, 0.0]);
        assert!(matches!(e.embed_text("tort"), Err(EmbedError::MissingKey(_))));
    }

    #[test]
    fn rejects_bad_sidecars() {
        let mixed = "{\"key\":\"a\",\"vector\":[1,0]}\n{\"key\":\"b\",\"vector\":[1]}\n";
        assert!(matches!(
            FileEmbedder::from_reader(mixed.as_bytes(), None, "m".into()),
            Err(EmbedError::Sidecar { line: 2, .. })
        ));
        let dup = "{\"key\":\"a\",\"vector\":[1]}\n{\"key\":\"a\",\"vector\":[2]}\n";
        assert!(FileEmbedder::from_reader(dup.as_bytes(), None, "m".into()).is_err());
        let wrong_dim = "{\"key\":\"a\",\"vector\":[1]}\n";
        assert!(FileEmbedder::from_reader(wrong_dim.as_bytes(), Some(4), "m".into()).is_err());
    }
}
