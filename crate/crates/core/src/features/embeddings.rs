//! `MMEB1` binary embedding container (little-endian):
//!
//! ```text
//! magic "MMEB1" | version u8 = 1 | dim u32 | record count u64
//! per record:
//!   id_len u16, id utf-8
//!   token_count u32
//!   per token: text_len u16, text utf-8, dim × f32
//!   pooled: dim × f32
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use indexmap::IndexMap;
use thiserror::Error;

pub const MAGIC: &[u8; 5] = b"MMEB1";
pub const VERSION: u8 = 1;
/// Allowed per-component gap between the stored pooled vector and the token mean.
pub const POOLING_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("not an MMEB1 file")]
    BadMagic,
    #[error("unsupported MMEB version {0}")]
    UnsupportedVersion(u8),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("record {0}: pooled vector is not the mean of its token vectors")]
    PoolingMismatch(String),
    #[error("cannot pool an empty token list")]
    EmptyTokenList,
    #[error("duplicate embedding record {0}")]
    DuplicateRecord(String),
    #[error("string field longer than 65535 bytes")]
    FieldTooLong,
    #[error("file truncated")]
    Truncated,
    #[error("invalid utf-8 in string field")]
    InvalidUtf8,
    #[error(transparent)]
    Io(std::io::Error),
}

impl From<std::io::Error> for EmbeddingError {
    fn from(e: std::io::Error) -> Self {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            EmbeddingError::Truncated
        } else {
            EmbeddingError::Io(e)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TokenEmbedding {
    pub text: String,
    pub vector: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub id: String,
    pub tokens: Vec<TokenEmbedding>,
    pub pooled: Vec<f32>,
}

impl EmbeddingRecord {
    /// Record whose pooled vector is the f32-rounded token mean.
    pub fn from_tokens(id: impl Into<String>, tokens: Vec<TokenEmbedding>, dim: usize) -> Self {
        let pooled = if tokens.is_empty() {
            vec![0.0; dim]
        } else {
            let rows: Vec<Vec<f64>> = tokens
                .iter()
                .map(|t| t.vector.iter().map(|&v| f64::from(v)).collect())
                .collect();
            pool_tokens(&rows)
                .expect("nonempty")
                .into_iter()
                .map(|v| v as f32)
                .collect()
        };
        Self {
            id: id.into(),
            tokens,
            pooled,
        }
    }

    /// Checks vector lengths against `dim` and the pooling invariant.
    pub fn validate(&self, dim: usize) -> Result<(), EmbeddingError> {
        for v in self.tokens.iter().map(|t| &t.vector).chain([&self.pooled]) {
            if v.len() != dim {
                return Err(EmbeddingError::DimensionMismatch {
                    expected: dim,
                    got: v.len(),
                });
            }
        }
        let mean = if self.tokens.is_empty() {
            vec![0.0; dim]
        } else {
            let rows: Vec<Vec<f64>> = self
                .tokens
                .iter()
                .map(|t| t.vector.iter().map(|&v| f64::from(v)).collect())
                .collect();
            pool_tokens(&rows)?
        };
        let ok = mean
            .iter()
            .zip(&self.pooled)
            .all(|(m, &p)| (m - f64::from(p)).abs() <= POOLING_TOLERANCE);
        if !ok {
            return Err(EmbeddingError::PoolingMismatch(self.id.clone()));
        }
        Ok(())
    }
}

/// Loaded embedding file: header dimension plus records in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub dim: usize,
    pub records: IndexMap<String, EmbeddingRecord>,
}

impl EmbeddingTable {
    pub fn get(&self, id: &str) -> Option<&EmbeddingRecord> {
        self.records.get(id)
    }
}

/// Componentwise arithmetic mean.
pub fn pool_tokens(tokens: &[Vec<f64>]) -> Result<Vec<f64>, EmbeddingError> {
    let first = tokens.first().ok_or(EmbeddingError::EmptyTokenList)?;
    let dim = first.len();
    let mut out = vec![0.0; dim];
    for t in tokens {
        if t.len() != dim {
            return Err(EmbeddingError::DimensionMismatch {
                expected: dim,
                got: t.len(),
            });
        }
        for (o, v) in out.iter_mut().zip(t) {
            *o += v;
        }
    }
    let n = tokens.len() as f64;
    out.iter_mut().for_each(|v| *v /= n);
    Ok(out)
}

fn write_str<W: Write>(w: &mut W, s: &str) -> Result<(), EmbeddingError> {
    let len = u16::try_from(s.len()).map_err(|_| EmbeddingError::FieldTooLong)?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn write_vec<W: Write>(w: &mut W, v: &[f32]) -> Result<(), EmbeddingError> {
    for x in v {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_embeddings_to<W: Write>(
    mut w: W,
    dim: usize,
    records: &[EmbeddingRecord],
) -> Result<(), EmbeddingError> {
    for r in records {
        for v in r.tokens.iter().map(|t| &t.vector).chain([&r.pooled]) {
            if v.len() != dim {
                return Err(EmbeddingError::DimensionMismatch {
                    expected: dim,
                    got: v.len(),
                });
            }
        }
    }
    w.write_all(MAGIC)?;
    w.write_all(&[VERSION])?;
    w.write_all(&(dim as u32).to_le_bytes())?;
    w.write_all(&(records.len() as u64).to_le_bytes())?;
    for r in records {
        write_str(&mut w, &r.id)?;
        w.write_all(&(r.tokens.len() as u32).to_le_bytes())?;
        for t in &r.tokens {
            write_str(&mut w, &t.text)?;
            write_vec(&mut w, &t.vector)?;
        }
        write_vec(&mut w, &r.pooled)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_embeddings(
    path: &Path,
    dim: usize,
    records: &[EmbeddingRecord],
) -> Result<(), EmbeddingError> {
    let file = BufWriter::new(File::create(path)?);
    write_embeddings_to(file, dim, records)
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N], EmbeddingError> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn read_str<R: Read>(r: &mut R) -> Result<String, EmbeddingError> {
    let len = u16::from_le_bytes(read_array(r)?) as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| EmbeddingError::InvalidUtf8)
}

fn read_vec<R: Read>(r: &mut R, dim: usize) -> Result<Vec<f32>, EmbeddingError> {
    let mut buf = vec![0u8; dim * 4];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

/// Parses and validates an embedding stream.
pub fn read_embeddings<R: Read>(mut r: R) -> Result<EmbeddingTable, EmbeddingError> {
    let magic: [u8; 5] = read_array(&mut r).map_err(|_| EmbeddingError::BadMagic)?;
    if &magic != MAGIC {
        return Err(EmbeddingError::BadMagic);
    }
    let [version] = read_array(&mut r)?;
    if version != VERSION {
        return Err(EmbeddingError::UnsupportedVersion(version));
    }
    let dim = u32::from_le_bytes(read_array(&mut r)?) as usize;
    let count = u64::from_le_bytes(read_array(&mut r)?);

    let mut records = IndexMap::new();
    for _ in 0..count {
        let id = read_str(&mut r)?;
        let n_tokens = u32::from_le_bytes(read_array(&mut r)?);
        let mut tokens = Vec::with_capacity(n_tokens.min(4096) as usize);
        for _ in 0..n_tokens {
            let text = read_str(&mut r)?;
            let vector = read_vec(&mut r, dim)?;
            tokens.push(TokenEmbedding { text, vector });
        }
        let pooled = read_vec(&mut r, dim)?;
        let record = EmbeddingRecord { id, tokens, pooled };
        record.validate(dim)?;
        if records.contains_key(&record.id) {
            return Err(EmbeddingError::DuplicateRecord(record.id));
        }
        records.insert(record.id.clone(), record);
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(EmbeddingError::Io(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            "trailing bytes after last record",
        )));
    }
    Ok(EmbeddingTable { dim, records })
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingTable, EmbeddingError> {
    read_embeddings(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn token(text: &str, vector: Vec<f32>) -> TokenEmbedding {
        TokenEmbedding {
            text: text.into(),
            vector,
        }
    }

    fn roundtrip(dim: usize, records: &[EmbeddingRecord]) -> Result<EmbeddingTable, EmbeddingError> {
        let mut buf = Vec::new();
        write_embeddings_to(&mut buf, dim, records)?;
        read_embeddings(buf.as_slice())
    }

    #[test]
    fn single_token_pooled_equals_token() {
        let v = vec![0.25f32, -1.5, 3.0];
        let rec = EmbeddingRecord::from_tokens("a", vec![token("hi", v.clone())], 3);
        assert_eq!(rec.pooled, v);
        let table = roundtrip(3, &[rec]).unwrap();
        assert_eq!(table.get("a").unwrap().pooled, v);
    }

    #[test]
    fn wrong_vector_length_is_dimension_mismatch() {
        let rec = EmbeddingRecord {
            id: "a".into(),
            tokens: vec![token("x", vec![0.0; 512])],
            pooled: vec![0.0; 768],
        };
        match roundtrip(768, &[rec]).unwrap_err() {
            EmbeddingError::DimensionMismatch { expected, got } => {
                assert_eq!((expected, got), (768, 512));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_magic() {
        let err = read_embeddings(&b"NOPE1\x01\x00\x00\x00\x00"[..]).unwrap_err();
        assert!(matches!(err, EmbeddingError::BadMagic));
        assert!(matches!(read_embeddings(&b""[..]).unwrap_err(), EmbeddingError::BadMagic));
    }

    #[test]
    fn tampered_pooled_vector_rejected() {
        let mut rec = EmbeddingRecord::from_tokens(
            "a",
            vec![token("x", vec![1.0, 2.0]), token("y", vec![3.0, 4.0])],
            2,
        );
        rec.pooled[1] += 0.01;
        let mut buf = Vec::new();
        write_embeddings_to(&mut buf, 2, &[rec]).unwrap();
        assert!(matches!(
            read_embeddings(buf.as_slice()).unwrap_err(),
            EmbeddingError::PoolingMismatch(id) if id == "a"
        ));
    }

    #[test]
    fn truncated_file() {
        let rec = EmbeddingRecord::from_tokens("a", vec![token("x", vec![1.0, 2.0])], 2);
        let mut buf = Vec::new();
        write_embeddings_to(&mut buf, 2, &[rec]).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(matches!(read_embeddings(buf.as_slice()).unwrap_err(), EmbeddingError::Truncated));
    }

    #[test]
    fn empty_token_list_needs_zero_pooled() {
        let rec = EmbeddingRecord::from_tokens("e", vec![], 4);
        assert_eq!(rec.pooled, vec![0.0; 4]);
        assert!(rec.validate(4).is_ok());
    }

    #[test]
    fn pool_basics() {
        let v = vec![1.0, -2.0, 0.5];
        assert_eq!(pool_tokens(std::slice::from_ref(&v)).unwrap(), v);
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        assert_eq!(pool_tokens(&[v, neg]).unwrap(), vec![0.0; 3]);
        assert!(matches!(pool_tokens(&[]), Err(EmbeddingError::EmptyTokenList)));
    }

    #[test]
    fn header_layout() {
        let mut buf = Vec::new();
        write_embeddings_to(&mut buf, 768, &[]).unwrap();
        assert_eq!(&buf[..5], b"MMEB1");
        assert_eq!(buf[5], 1);
        assert_eq!(u32::from_le_bytes(buf[6..10].try_into().unwrap()), 768);
        assert_eq!(u64::from_le_bytes(buf[10..18].try_into().unwrap()), 0);
        assert_eq!(buf.len(), 18);
    }
}
