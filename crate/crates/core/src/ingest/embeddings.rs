//! `FAIREMB1` embedding files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! offset  size  field
//! 0       8     magic  "FAIREMB1"
//! 8       4     version (u32) = 1
//! 12      4     n (u32)  rows
//! 16      4     d (u32)  columns
//! 20      4*n*d payload, f32 LE, row-major
//! ```
//!
//! Row ids live in a sidecar UTF-8 text file, one id per line, no BOM.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{EmbeddingMatrix, Validate};

pub const MAGIC: &[u8; 8] = b"FAIREMB1";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmbeddingFileHeader {
    pub version: u32,
    pub n: u32,
    pub d: u32,
}

impl EmbeddingFileHeader {
    pub fn encode(&self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        out[..8].copy_from_slice(MAGIC);
        out[8..12].copy_from_slice(&self.version.to_le_bytes());
        out[12..16].copy_from_slice(&self.n.to_le_bytes());
        out[16..20].copy_from_slice(&self.d.to_le_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> std::result::Result<Self, String> {
        if bytes.len() < HEADER_LEN {
            return Err(format!("file is {} bytes, shorter than the header", bytes.len()));
        }
        if &bytes[..8] != MAGIC {
            return Err("bad magic".into());
        }
        let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
        let header = Self {
            version: word(8),
            n: word(12),
            d: word(16),
        };
        if header.version != VERSION {
            return Err(format!("unsupported version {}", header.version));
        }
        Ok(header)
    }

    pub fn payload_len(&self) -> usize {
        4 * self.n as usize * self.d as usize
    }
}

/// Decodes a matrix file and its ids from memory. `path` is only used in errors.
pub fn decode_embeddings(path: &Path, bytes: &[u8], ids_text: &str) -> Result<EmbeddingMatrix> {
    let header = EmbeddingFileHeader::decode(bytes).map_err(|m| Error::format(path, m))?;
    let expected_len = HEADER_LEN + header.payload_len();
    if bytes.len() != expected_len {
        return Err(Error::format(
            path,
            format!(
                "size mismatch: header implies {expected_len} bytes, file has {}",
                bytes.len()
            ),
        ));
    }
    if header.d == 0 {
        return Err(Error::format(path, "d must be positive"));
    }
    let ids = parse_ids(ids_text)?;
    if ids.len() != header.n as usize {
        return Err(Error::IdCountMismatch {
            expected: header.n as usize,
            found: ids.len(),
        });
    }
    let d = header.d as usize;
    let mut values = Vec::with_capacity(header.n as usize * d);
    for (i, chunk) in bytes[HEADER_LEN..].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::format(
                path,
                format!("values[{}][{}] not finite", i / d, i % d),
            ));
        }
        values.push(v);
    }
    let m = EmbeddingMatrix::from_raw(ids, d, values);
    let violations = m.validate();
    if violations.is_empty() {
        Ok(m)
    } else {
        Err(Error::Invalid(violations))
    }
}

fn parse_ids(text: &str) -> Result<Vec<String>> {
    if text.starts_with('\u{feff}') {
        return Err(Error::Malformed {
            line: 1,
            message: "ids file starts with a byte-order mark".into(),
        });
    }
    if text.is_empty() {
        return Ok(Vec::new());
    }
    let body = text.strip_suffix('\n').unwrap_or(text);
    body.split('\n')
        .enumerate()
        .map(|(i, line)| {
            let id = line.strip_suffix('\r').unwrap_or(line);
            if id.is_empty() {
                Err(Error::Malformed {
                    line: i + 1,
                    message: "empty id".into(),
                })
            } else {
                Ok(id.to_string())
            }
        })
        .collect()
}

pub fn read_embeddings(matrix_path: &Path, ids_path: &Path) -> Result<EmbeddingMatrix> {
    let bytes = fs::read(matrix_path).map_err(|e| Error::io(matrix_path, e))?;
    let ids = fs::read(ids_path).map_err(|e| Error::io(ids_path, e))?;
    let ids = String::from_utf8(ids).map_err(|_| Error::format(ids_path, "ids file is not UTF-8"))?;
    decode_embeddings(matrix_path, &bytes, &ids)
}

/// Serializes to (matrix bytes, ids text).
pub fn encode_embeddings(matrix: &EmbeddingMatrix) -> Result<(Vec<u8>, String)> {
    let header = EmbeddingFileHeader {
        version: VERSION,
        n: u32::try_from(matrix.len())
            .map_err(|_| Error::InvalidArgument("too many rows for FAIREMB1".into()))?,
        d: u32::try_from(matrix.dim())
            .map_err(|_| Error::InvalidArgument("dimension too large for FAIREMB1".into()))?,
    };
    let mut bytes = Vec::with_capacity(HEADER_LEN + header.payload_len());
    bytes.extend_from_slice(&header.encode());
    for v in matrix.values() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let mut ids = String::new();
    for id in matrix.ids() {
        if id.is_empty() || id.contains(['\n', '\r']) {
            return Err(Error::InvalidArgument(format!("id {id:?} cannot be written one-per-line")));
        }
        ids.push_str(id);
        ids.push('\n');
    }
    Ok((bytes, ids))
}

pub fn write_embeddings(matrix: &EmbeddingMatrix, matrix_path: &Path, ids_path: &Path) -> Result<()> {
    let (bytes, ids) = encode_embeddings(matrix)?;
    fs::write(matrix_path, bytes).map_err(|e| Error::io(matrix_path, e))?;
    fs::write(ids_path, ids).map_err(|e| Error::io(ids_path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn raw(n: u32, d: u32, payload: &[f32]) -> Vec<u8> {
        let mut b = EmbeddingFileHeader { version: 1, n, d }.encode().to_vec();
        for v in payload {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b
    }

    fn decode(bytes: &[u8], ids: &str) -> Result<EmbeddingMatrix> {
        decode_embeddings(Path::new("m.emb"), bytes, ids)
    }

    #[test]
    fn reads_two_unit_rows() {
        let m = decode(&raw(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]), "a\nb").unwrap();
        assert_eq!(m.ids(), ["a", "b"]);
        assert_eq!(m.row(0), [1.0, 0.0, 0.0]);
        assert_eq!(m.row(1), [0.0, 1.0, 0.0]);
    }

    #[test]
    fn id_count_mismatch() {
        let err = decode(&raw(2, 3, &[0.0; 6]), "a\nb\nc\n").unwrap_err();
        assert!(matches!(err, Error::IdCountMismatch { expected: 2, found: 3 }));
        assert!(err.to_string().contains("id-count mismatch"));
    }

    #[test]
    fn header_errors() {
        let mut b = raw(1, 1, &[1.0]);
        b[0] = b'X';
        assert!(decode(&b, "a").unwrap_err().to_string().contains("bad magic"));
        let mut b = raw(1, 1, &[1.0]);
        b[8] = 2;
        assert!(decode(&b, "a").unwrap_err().to_string().contains("version"));
        let b = raw(2, 1, &[1.0]);
        assert!(decode(&b, "a\nb").unwrap_err().to_string().contains("size mismatch"));
        assert!(decode(&b[..10], "").is_err());
    }

    #[test]
    fn rejects_non_finite() {
        let err = decode(&raw(1, 2, &[1.0, f32::INFINITY]), "a").unwrap_err();
        assert!(err.to_string().contains("values[0][1] not finite"));
    }

    #[test]
    fn rejects_bom_and_blank_ids() {
        assert!(decode(&raw(1, 1, &[1.0]), "\u{feff}a").is_err());
        assert!(decode(&raw(2, 1, &[1.0, 2.0]), "a\n\n").is_err());
        assert!(matches!(
            decode(&raw(2, 1, &[1.0, 2.0]), "a\na\n"),
            Err(Error::Invalid(_))
        ));
    }

    #[test]
    fn crlf_ids_accepted() {
        let m = decode(&raw(2, 1, &[1.0, 2.0]), "a\r\nb\r\n").unwrap();
        assert_eq!(m.ids(), ["a", "b"]);
    }

    #[test]
    fn empty_matrix_is_header_only() {
        let m = EmbeddingMatrix::new(vec![], 4, vec![]).unwrap();
        let (bytes, ids) = encode_embeddings(&m).unwrap();
        assert_eq!(bytes.len(), 20);
        assert!(ids.is_empty());
        assert_eq!(decode(&bytes, &ids).unwrap(), m);
    }

    #[test]
    fn wide_single_row_length() {
        let m = EmbeddingMatrix::new(vec!["x".into()], 2048, vec![0.5; 2048]).unwrap();
        let (bytes, _) = encode_embeddings(&m).unwrap();
        assert_eq!(bytes.len(), 20 + 8192);
    }

    #[test]
    fn file_round_trip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let (mp, ip) = (dir.path().join("m.emb"), dir.path().join("m.ids"));
        let m = EmbeddingMatrix::new(vec!["a".into(), "b".into()], 2, vec![0.1, -2.5, 3.0, 1e-30]).unwrap();
        write_embeddings(&m, &mp, &ip).unwrap();
        let first = (fs::read(&mp).unwrap(), fs::read(&ip).unwrap());
        let back = read_embeddings(&mp, &ip).unwrap();
        assert_eq!(back, m);
        write_embeddings(&back, &mp, &ip).unwrap();
        assert_eq!((fs::read(&mp).unwrap(), fs::read(&ip).unwrap()), first);
    }

    #[test]
    fn missing_file_is_io() {
        let err = read_embeddings(Path::new("/nonexistent/x.emb"), Path::new("/nonexistent/x.ids"))
            .unwrap_err();
        assert!(err.is_io());
    }

    proptest! {
        #[test]
        fn encode_decode_identity(
            n in 0usize..6,
            d in 1usize..5,
            seed in proptest::collection::vec(-1e6f32..1e6, 30),
        ) {
            let ids: Vec<String> = (0..n).map(|i| format!("id{i}")).collect();
            let values: Vec<f32> = seed.iter().cycle().take(n * d).copied().collect();
            let m = EmbeddingMatrix::new(ids, d, values).unwrap();
            let (bytes, ids) = encode_embeddings(&m).unwrap();
            let back = decode(&bytes, &ids).unwrap();
            prop_assert_eq!(&back, &m);
            prop_assert_eq!(encode_embeddings(&back).unwrap().0, bytes);
        }
    }
}
