use std::io::{Read, Write};

use super::FusionError;
use crate::embedding::Embedder;
use crate::scalar::l2_norm;
use crate::store::StatuteCorpus;
use crate::Scalar;

pub const INDEX_MAGIC: [u8; 8] = *b"LAWFIDX\0";
pub const INDEX_VERSION: u32 = 1;

const HEADER_LEN: u64 = 8 + 4 + 8 + 8 + 32;
const EMBED_CHUNK: usize = 256;
/// Stored and recomputed norms must agree to this relative tolerance; looser
/// than f64 precision so an f32 matrix can be reloaded as f64.
const NORM_TOLERANCE: f64 = 1e-5;

/// Row-major statute embeddings with precomputed norms, bound to the corpus
/// they were built from.
#[derive(Debug, Clone, PartialEq)]
pub struct LawMatrix<T = f64> {
    data: Vec<T>,
    norms: Vec<T>,
    dim: usize,
    fingerprint: [u8; 32],
}

impl<T: Scalar> LawMatrix<T> {
    /// Every row must have `dim` finite entries and a positive norm.
    pub fn from_rows<R: AsRef<[T]>>(
        rows: &[R],
        dim: usize,
        fingerprint: [u8; 32],
    ) -> Result<Self, FusionError> {
        if dim == 0 {
            return Err(FusionError::InvalidInput("dim must be at least 1".into()));
        }
        let mut data = Vec::with_capacity(rows.len() * dim);
        let mut norms = Vec::with_capacity(rows.len());
        for (j, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(FusionError::DimensionMismatch {
                    what: format!("law row {j}"),
                    expected: dim,
                    found: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(FusionError::InvalidInput(format!("law row {j} has a non-finite entry")));
            }
            let n = l2_norm(row);
            if !(n > T::zero() && n.is_finite()) {
                return Err(FusionError::ZeroNorm(format!("law row {j}")));
            }
            data.extend_from_slice(row);
            norms.push(n);
        }
        Ok(Self {
            data,
            norms,
            dim,
            fingerprint,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of statutes, M.
    pub fn len(&self) -> usize {
        self.norms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.norms.is_empty()
    }

    pub fn row(&self, j: usize) -> &[T] {
        &self.data[j * self.dim..(j + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, T> {
        self.data.chunks_exact(self.dim)
    }

    pub fn norm(&self, j: usize) -> T {
        self.norms[j]
    }

    pub fn norms(&self) -> &[T] {
        &self.norms
    }

    pub fn fingerprint(&self) -> &[u8; 32] {
        &self.fingerprint
    }

    pub fn fingerprint_hex(&self) -> String {
        hex(&self.fingerprint)
    }

    pub fn check_corpus(&self, corpus: &StatuteCorpus) -> Result<(), FusionError> {
        let current = corpus.fingerprint();
        if current != self.fingerprint || corpus.len() != self.len() {
            return Err(FusionError::StaleIndex {
                index: hex(&self.fingerprint),
                corpus: hex(&current),
            });
        }
        Ok(())
    }

    /// Header, then `M×d` row-major little-endian f64 values, then `M` norms.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<(), FusionError> {
        out.write_all(&INDEX_MAGIC)?;
        out.write_all(&INDEX_VERSION.to_le_bytes())?;
        out.write_all(&(self.dim as u64).to_le_bytes())?;
        out.write_all(&(self.len() as u64).to_le_bytes())?;
        out.write_all(&self.fingerprint)?;
        let mut buf = Vec::with_capacity(self.dim * 8);
        for row in self.rows() {
            buf.clear();
            for v in row {
                buf.extend_from_slice(&v.to_f64_lossy().to_le_bytes());
            }
            out.write_all(&buf)?;
        }
        for n in &self.norms {
            out.write_all(&n.to_f64_lossy().to_le_bytes())?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(source: R) -> Result<Self, FusionError> {
        let mut r = CountingReader { inner: source, offset: 0 };
        let mut magic = [0u8; 8];
        r.fill(&mut magic, "magic")?;
        if magic != INDEX_MAGIC {
            return Err(FusionError::Parse { offset: 0, reason: "bad magic bytes".into() });
        }
        let version = u32::from_le_bytes(r.array("version")?);
        if version != INDEX_VERSION {
            return Err(r.error(format!("unsupported index version {version}")));
        }
        let dim = u64::from_le_bytes(r.array("dim")?);
        let rows = u64::from_le_bytes(r.array("row count")?);
        let mut fingerprint = [0u8; 32];
        r.fill(&mut fingerprint, "fingerprint")?;
        debug_assert_eq!(r.offset, HEADER_LEN);
        if dim == 0 {
            return Err(r.error("dim is zero".into()));
        }
        let dim = usize::try_from(dim).map_err(|_| r.error("dim too large".into()))?;
        let rows = usize::try_from(rows).map_err(|_| r.error("row count too large".into()))?;
        let total = rows
            .checked_mul(dim)
            .filter(|n| n.checked_mul(8).is_some())
            .ok_or_else(|| r.error("matrix size overflows".into()))?;

        // Grows as data arrives so a corrupt header cannot force a huge allocation.
        let mut data: Vec<T> = Vec::with_capacity(total.min(1 << 20));
        let mut row_buf = vec![0u8; dim * 8];
        for _ in 0..rows {
            r.fill(&mut row_buf, "matrix data")?;
            data.extend(row_buf.chunks_exact(8).map(|c| {
                T::from_f64_lossy(f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            }));
        }
        let data_end = r.offset;
        let mut norms = Vec::with_capacity(rows.min(1 << 20));
        for _ in 0..rows {
            norms.push(T::from_f64_lossy(f64::from_le_bytes(r.array("norms")?)));
        }
        let mut probe = [0u8; 1];
        if r.inner.read(&mut probe)? != 0 {
            return Err(r.error("trailing bytes after norms".into()));
        }

        let matrix = Self { data, norms, dim, fingerprint };
        for (j, (row, &stored)) in matrix.rows().zip(&matrix.norms).enumerate() {
            let offset = data_end + 8 * j as u64;
            if row.iter().any(|v| !v.is_finite()) {
                return Err(FusionError::Parse {
                    offset: HEADER_LEN + (j * dim * 8) as u64,
                    reason: format!("row {j} has a non-finite entry"),
                });
            }
            let recomputed = l2_norm(row).to_f64_lossy();
            let stored = stored.to_f64_lossy();
            if !(stored > 0.0 && stored.is_finite())
                || (stored - recomputed).abs() > NORM_TOLERANCE * recomputed
            {
                return Err(FusionError::Parse {
                    offset,
                    reason: format!("norm of row {j} is {stored}, data gives {recomputed}"),
                });
            }
        }
        Ok(matrix)
    }
}

/// Embeds every statute text in corpus order. A statute whose embedding is
/// the zero vector is an error, since no cosine can be taken against it.
pub fn build_index<T: Scalar, E: Embedder + ?Sized>(
    corpus: &StatuteCorpus,
    embedder: &E,
) -> Result<LawMatrix<T>, FusionError> {
    let dim = embedder.dim();
    let records = corpus.records();
    let mut rows: Vec<Vec<T>> = Vec::with_capacity(records.len());
    for chunk in records.chunks(EMBED_CHUNK) {
        let texts: Vec<&str> = chunk.iter().map(|r| r.text.as_str()).collect();
        let vectors = embedder.embed_batch(&texts).map_err(|source| {
            let id = match &source {
                crate::embedding::EmbedError::InvalidInput { index: Some(i), .. } => {
                    chunk[*i].id.clone()
                }
                _ => format!("{}..{}", chunk[0].id, chunk[chunk.len() - 1].id),
            };
            FusionError::Embedding { id, source }
        })?;
        for (record, v) in chunk.iter().zip(vectors) {
            if v.dim() != dim {
                return Err(FusionError::DimensionMismatch {
                    what: format!("embedding of statute {:?}", record.id),
                    expected: dim,
                    found: v.dim(),
                });
            }
            let row: Vec<T> = v.cast::<T>().into_values();
            if l2_norm(&row).is_zero() {
                return Err(FusionError::ZeroNormStatute { id: record.id.clone() });
            }
            rows.push(row);
        }
    }
    LawMatrix::from_rows(&rows, dim, corpus.fingerprint())
}

pub fn save_index<T: Scalar, W: Write>(matrix: &LawMatrix<T>, out: W) -> Result<(), FusionError> {
    matrix.write_to(out)
}

/// Reads an index snapshot and checks it was built from `corpus`.
pub fn load_index<T: Scalar, R: Read>(
    source: R,
    corpus: &StatuteCorpus,
) -> Result<LawMatrix<T>, FusionError> {
    let matrix = LawMatrix::read_from(source)?;
    matrix.check_corpus(corpus)?;
    Ok(matrix)
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

struct CountingReader<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> CountingReader<R> {
    fn fill(&mut self, buf: &mut [u8], what: &str) -> Result<(), FusionError> {
        let mut filled = 0;
        while filled < buf.len() {
            match self.inner.read(&mut buf[filled..]) {
                Ok(0) => {
                    return Err(FusionError::Parse {
                        offset: self.offset + filled as u64,
                        reason: format!("truncated while reading {what}"),
                    })
                }
                Ok(n) => filled += n,
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
        self.offset += buf.len() as u64;
        Ok(())
    }

    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N], FusionError> {
        let mut a = [0u8; N];
        self.fill(&mut a, what)?;
        Ok(a)
    }

    fn error(&self, reason: String) -> FusionError {
        FusionError::Parse { offset: self.offset, reason }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::ReferenceEmbedder;
    use crate::store::StatuteRecord;

    fn corpus(texts: &[&str]) -> StatuteCorpus {
        StatuteCorpus::from_records(
            texts
                .iter()
                .enumerate()
                .map(|(i, t)| StatuteRecord {
                    id: format!("L{}", i + 1),
                    title: String::new(),
                    text: t.to_string(),
                    tags: vec![],
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn build_shape_and_determinism() {
        let c = corpus(&["contract breach damages", "debt limitation period", "tort negligence"]);
        let e = ReferenceEmbedder::new(8, 0).unwrap();
        let m: LawMatrix<f64> = build_index(&c, &e).unwrap();
        assert_eq!((m.len(), m.dim()), (3, 8));
        assert!(m.norms().iter().all(|&n| n > 0.0));
        assert_eq!(m, build_index(&c, &e).unwrap());
        assert_eq!(m.row(1), e.embed_text("debt limitation period").unwrap().values());
    }

    #[test]
    fn zero_embedding_statute_is_named() {
        let c = corpus(&["contract", "§ — …"]);
        let e = ReferenceEmbedder::new(8, 0).unwrap();
        match build_index::<f64, _>(&c, &e).unwrap_err() {
            FusionError::ZeroNormStatute { id } => assert_eq!(id, "L2"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn snapshot_roundtrip_and_stale_detection() {
        let c = corpus(&["contract breach", "debt limitation"]);
        let e = ReferenceEmbedder::new(16, 5).unwrap();
        let m: LawMatrix<f64> = build_index(&c, &e).unwrap();
        let mut bytes = Vec::new();
        save_index(&m, &mut bytes).unwrap();
        assert_eq!(bytes.len() as u64, HEADER_LEN + 2 * 16 * 8 + 2 * 8);
        assert_eq!(load_index::<f64, _>(bytes.as_slice(), &c).unwrap(), m);

        let edited = corpus(&["contract breach", "debt limitations"]);
        assert!(matches!(
            load_index::<f64, _>(bytes.as_slice(), &edited),
            Err(FusionError::StaleIndex { .. })
        ));
    }

    #[test]
    fn truncation_and_corruption() {
        let c = corpus(&["contract breach", "debt limitation"]);
        let m: LawMatrix<f64> = build_index(&c, &ReferenceEmbedder::new(4, 1).unwrap()).unwrap();
        let mut bytes = Vec::new();
        m.write_to(&mut bytes).unwrap();
        for cut in [0, 7, 30, bytes.len() - 1] {
            match LawMatrix::<f64>::read_from(&bytes[..cut]) {
                Err(FusionError::Parse { offset, .. }) => assert!(offset <= cut as u64),
                other => panic!("cut {cut}: {other:?}"),
            }
        }
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(LawMatrix::<f64>::read_from(extra.as_slice()).is_err());
        let mut flipped = bytes.clone();
        flipped[HEADER_LEN as usize + 7] ^= 0x40; // exponent byte of the first value
        assert!(LawMatrix::<f64>::read_from(flipped.as_slice()).is_err());
        let mut magic = bytes;
        magic[0] = b'X';
        assert!(matches!(
            LawMatrix::<f64>::read_from(magic.as_slice()),
            Err(FusionError::Parse { offset: 0, .. })
        ));
    }

    #[test]
    fn f32_matrix_roundtrips_through_f64_file() {
        let c = corpus(&["contract breach", "debt limitation"]);
        let m: LawMatrix<f32> = build_index(&c, &ReferenceEmbedder::new(8, 2).unwrap()).unwrap();
        let mut bytes = Vec::new();
        m.write_to(&mut bytes).unwrap();
        assert_eq!(LawMatrix::<f32>::read_from(bytes.as_slice()).unwrap(), m);
        assert!(LawMatrix::<f64>::read_from(bytes.as_slice()).is_ok());
    }

    #[test]
    fn from_rows_validation() {
        let fp = [0u8; 32];
        assert!(LawMatrix::<f64>::from_rows(&[vec![1.0, 0.0], vec![0.0]], 2, fp).is_err());
        assert!(matches!(
            LawMatrix::<f64>::from_rows(&[vec![0.0, 0.0]], 2, fp),
            Err(FusionError::ZeroNorm(_))
        ));
        assert!(LawMatrix::<f64>::from_rows(&[vec![f64::NAN, 1.0]], 2, fp).is_err());
    }
}
