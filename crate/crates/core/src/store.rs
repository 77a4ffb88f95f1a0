//! Statute corpus: ingestion from line-delimited JSON, lookup, and snapshots.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("line {line}: duplicate statute id {id:?} (first seen on line {first_line})")]
    DuplicateId {
        id: String,
        line: usize,
        first_line: usize,
    },
    #[error("line {line}: field `{field}` is missing or empty")]
    MissingField { field: &'static str, line: usize },
    #[error("line {line}: malformed record: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("statute {0:?} not found")]
    NotFound(String),
    #[error("snapshot parse error at byte {offset}: {reason}")]
    Snapshot { offset: u64, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One retrievable unit of the legal database.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatuteRecord {
    pub id: String,
    #[serde(default)]
    pub title: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tags: Vec<String>,
}

#[derive(Deserialize)]
struct RawRecord {
    id: Option<String>,
    title: Option<String>,
    text: Option<String>,
    #[serde(default)]
    tags: Vec<String>,
}

/// Immutable, insertion-ordered statute collection with unique ids.
#[derive(Debug, Clone, Default)]
pub struct StatuteCorpus {
    records: Vec<StatuteRecord>,
    by_id: HashMap<String, usize>,
}

impl PartialEq for StatuteCorpus {
    fn eq(&self, other: &Self) -> bool {
        self.records == other.records
    }
}

impl Eq for StatuteCorpus {}

impl StatuteCorpus {
    /// Builds a corpus from already-parsed records, enforcing the same
    /// invariants as [`ingest_corpus`]. Line numbers in errors are 1-based
    /// positions in `records`.
    pub fn from_records(records: Vec<StatuteRecord>) -> Result<Self, StoreError> {
        let mut corpus = StatuteCorpus::default();
        for (i, record) in records.into_iter().enumerate() {
            corpus.push(record, i + 1)?;
        }
        Ok(corpus)
    }

    fn push(&mut self, record: StatuteRecord, line: usize) -> Result<(), StoreError> {
        if record.id.trim().is_empty() {
            return Err(StoreError::MissingField { field: "id", line });
        }
        if record.text.trim().is_empty() {
            return Err(StoreError::MissingField { field: "text", line });
        }
        if let Some(&prev) = self.by_id.get(&record.id) {
            return Err(StoreError::DuplicateId {
                id: record.id,
                line,
                first_line: prev + 1,
            });
        }
        self.by_id.insert(record.id.clone(), self.records.len());
        self.records.push(record);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[StatuteRecord] {
        &self.records
    }

    pub fn iter(&self) -> std::slice::Iter<'_, StatuteRecord> {
        self.records.iter()
    }

    pub fn get(&self, id: &str) -> Result<&StatuteRecord, StoreError> {
        self.position(id)
            .map(|i| &self.records[i])
            .ok_or_else(|| StoreError::NotFound(id.to_owned()))
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    /// SHA-256 over every field of every record, in order. Binds an index to
    /// the exact corpus it was built from.
    pub fn fingerprint(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        hasher.update((self.records.len() as u64).to_le_bytes());
        let mut field = |bytes: &[u8]| {
            hasher.update((bytes.len() as u64).to_le_bytes());
            hasher.update(bytes);
        };
        for r in &self.records {
            field(r.id.as_bytes());
            field(r.title.as_bytes());
            field(r.text.as_bytes());
            field(&(r.tags.len() as u64).to_le_bytes());
            for tag in &r.tags {
                field(tag.as_bytes());
            }
        }
        hasher.finalize().into()
    }
}

impl<'a> IntoIterator for &'a StatuteCorpus {
    type Item = &'a StatuteRecord;
    type IntoIter = std::slice::Iter<'a, StatuteRecord>;

    fn into_iter(self) -> Self::IntoIter {
        self.records.iter()
    }
}

/// Parses a line-delimited corpus file. Blank lines are skipped; the first
/// invalid line aborts ingestion.
pub fn ingest_corpus<R: BufRead>(source: R) -> Result<StatuteCorpus, StoreError> {
    let mut corpus = StatuteCorpus::default();
    for (i, line) in source.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(&line).map_err(|e| StoreError::Malformed {
            line: line_no,
            reason: e.to_string(),
        })?;
        let id = raw.id.unwrap_or_default();
        if id.trim().is_empty() {
            return Err(StoreError::MissingField {
                field: "id",
                line: line_no,
            });
        }
        let record = StatuteRecord {
            id,
            title: raw.title.unwrap_or_default(),
            text: raw.text.unwrap_or_default(),
            tags: raw.tags,
        };
        corpus.push(record, line_no)?;
    }
    Ok(corpus)
}

pub fn get_statute<'a>(corpus: &'a StatuteCorpus, id: &str) -> Result<&'a StatuteRecord, StoreError> {
    corpus.get(id)
}

const SNAPSHOT_FORMAT: &str = "lawfuse-corpus";
const SNAPSHOT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct SnapshotHeader {
    format: String,
    version: u32,
    records: usize,
}

/// Writes a snapshot: a header line carrying the record count, then one
/// record per line. The count makes truncation at a line boundary detectable.
pub fn save_corpus<W: Write>(corpus: &StatuteCorpus, mut out: W) -> Result<(), StoreError> {
    let header = SnapshotHeader {
        format: SNAPSHOT_FORMAT.to_owned(),
        version: SNAPSHOT_VERSION,
        records: corpus.len(),
    };
    serde_json::to_writer(&mut out, &header).map_err(std::io::Error::from)?;
    out.write_all(b"\n")?;
    for record in corpus {
        serde_json::to_writer(&mut out, record).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_corpus<R: BufRead>(mut source: R) -> Result<StatuteCorpus, StoreError> {
    let mut offset = 0u64;
    let mut buf = String::new();

    let snapshot_err = |offset: u64, reason: String| StoreError::Snapshot { offset, reason };
    let json_err = |line_start: u64, e: serde_json::Error| {
        // serde_json columns are 1-based within the line.
        snapshot_err(line_start + e.column().saturating_sub(1) as u64, e.to_string())
    };

    let n = source.read_line(&mut buf)?;
    if n == 0 {
        return Err(snapshot_err(0, "empty stream, missing header".into()));
    }
    let header: SnapshotHeader = serde_json::from_str(buf.trim_end()).map_err(|e| json_err(0, e))?;
    if header.format != SNAPSHOT_FORMAT || header.version != SNAPSHOT_VERSION {
        return Err(snapshot_err(
            0,
            format!("unsupported snapshot {} v{}", header.format, header.version),
        ));
    }
    offset += n as u64;

    let mut corpus = StatuteCorpus::default();
    for i in 0..header.records {
        buf.clear();
        let n = source.read_line(&mut buf)?;
        if n == 0 || !buf.ends_with('\n') {
            return Err(snapshot_err(
                offset + n as u64,
                format!("truncated: expected {} records, got {i}", header.records),
            ));
        }
        let record: StatuteRecord =
            serde_json::from_str(&buf[..n - 1]).map_err(|e| json_err(offset, e))?;
        corpus
            .push(record, i + 1)
            .map_err(|e| snapshot_err(offset, e.to_string()))?;
        offset += n as u64;
    }
    buf.clear();
    if source.read_line(&mut buf)? != 0 {
        return Err(snapshot_err(offset, "trailing data after last record".into()));
    }
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, text: &str) -> StatuteRecord {
        StatuteRecord {
            id: id.into(),
            title: format!("title {id}"),
            text: text.into(),
            tags: vec![],
        }
    }

    #[test]
    fn ingests_in_file_order() {
        let src = r#"{"id":"L1","title":"a","text":"first"}
{"id":"L2","title":"b","text":"second","tags":["civil"]}
{"id":"L3","title":"c","text":"third"}
"#;
        let c = ingest_corpus(src.as_bytes()).unwrap();
        assert_eq!(c.len(), 3);
        let ids: Vec<_> = c.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, ["L1", "L2", "L3"]);
        assert_eq!(c.records()[1].tags, ["civil"]);
    }

    #[test]
    fn duplicate_id_names_id_and_line() {
        let src = "{\"id\":\"L1\",\"title\":\"a\",\"text\":\"x\"}\n{\"id\":\"L1\",\"title\":\"b\",\"text\":\"y\"}\n";
        let err = ingest_corpus(src.as_bytes()).unwrap_err();
        match &err {
            StoreError::DuplicateId { id, line, .. } => {
                assert_eq!(id, "L1");
                assert_eq!(*line, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.to_string().contains("L1"));
    }

    #[test]
    fn empty_text_cites_line() {
        let src = "{\"id\":\"L1\",\"title\":\"a\",\"text\":\"x\"}\n{\"id\":\"L2\",\"title\":\"b\",\"text\":\"  \"}\n";
        let err = ingest_corpus(src.as_bytes()).unwrap_err();
        assert!(matches!(err, StoreError::MissingField { field: "text", line: 2 }));
    }

    #[test]
    fn missing_id_and_malformed_lines() {
        let err = ingest_corpus("{\"title\":\"a\",\"text\":\"x\"}\n".as_bytes()).unwrap_err();
        assert!(matches!(err, StoreError::MissingField { field: "id", line: 1 }));
        let err = ingest_corpus("{\"id\":\"a\",\"text\":\"x\"}\nnot json\n".as_bytes()).unwrap_err();
        assert!(matches!(err, StoreError::Malformed { line: 2, .. }));
    }

    #[test]
    fn lookup() {
        let c = StatuteCorpus::from_records(vec![rec("L1", "a"), rec("L2", "b")]).unwrap();
        assert_eq!(get_statute(&c, "L2").unwrap().id, "L2");
        assert!(matches!(get_statute(&c, "L9"), Err(StoreError::NotFound(_))));
        let empty = StatuteCorpus::default();
        assert!(matches!(empty.get("L1"), Err(StoreError::NotFound(_))));
    }

    #[test]
    fn snapshot_roundtrip_and_empty() {
        let c = StatuteCorpus::from_records(vec![rec("L1", "a b"), rec("L2", "民法典 第一条")]).unwrap();
        let mut bytes = Vec::new();
        save_corpus(&c, &mut bytes).unwrap();
        assert_eq!(load_corpus(bytes.as_slice()).unwrap(), c);

        let mut bytes = Vec::new();
        save_corpus(&StatuteCorpus::default(), &mut bytes).unwrap();
        assert!(load_corpus(bytes.as_slice()).unwrap().is_empty());
    }

    #[test]
    fn truncated_snapshot_reports_offset() {
        let c = StatuteCorpus::from_records(vec![rec("L1", "a"), rec("L2", "b")]).unwrap();
        let mut bytes = Vec::new();
        save_corpus(&c, &mut bytes).unwrap();
        for cut in [0, 5, bytes.len() - 1, bytes.len() - 10] {
            let err = load_corpus(&bytes[..cut]).unwrap_err();
            assert!(matches!(err, StoreError::Snapshot { .. }), "cut {cut}: {err:?}");
        }
        // Cut exactly at a line boundary: still caught by the record count.
        let first_nl = bytes.iter().position(|&b| b == b'\n').unwrap();
        let second_nl = first_nl + 1 + bytes[first_nl + 1..].iter().position(|&b| b == b'\n').unwrap();
        match load_corpus(&bytes[..=second_nl]).unwrap_err() {
            StoreError::Snapshot { offset, .. } => assert_eq!(offset, second_nl as u64 + 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn fingerprint_tracks_content() {
        let a = StatuteCorpus::from_records(vec![rec("L1", "a")]).unwrap();
        let b = StatuteCorpus::from_records(vec![rec("L1", "b")]).unwrap();
        assert_eq!(a.fingerprint(), a.clone().fingerprint());
        assert_ne!(a.fingerprint(), b.fingerprint());
    }
}
