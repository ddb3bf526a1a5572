//! Streaming reader for JSON-lines prediction dumps.
//!
//! Each non-blank line is `{"id": ..., "preds": [{"label": ..., "score": ...}, ...]}`.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{PredictionRecord, Validate};

pub struct PredictionReader<R> {
    reader: R,
    line: usize,
    buf: String,
    seen: HashSet<String>,
    failed: bool,
}

impl<R: BufRead> PredictionReader<R> {
    pub fn new(reader: R) -> Self {
        Self {
            reader,
            line: 0,
            buf: String::new(),
            seen: HashSet::new(),
            failed: false,
        }
    }

    fn parse_line(&mut self) -> Result<PredictionRecord> {
        let line = self.line;
        let record: PredictionRecord =
            serde_json::from_str(self.buf.trim()).map_err(|e| Error::Malformed {
                line,
                message: e.to_string(),
            })?;
        if let Some(v) = record.validate().into_iter().next() {
            return Err(Error::Malformed {
                line,
                message: v.to_string(),
            });
        }
        if !self.seen.insert(record.image_id.clone()) {
            return Err(Error::DuplicateId {
                line,
                id: record.image_id,
            });
        }
        Ok(record)
    }
}

impl<R: BufRead> Iterator for PredictionReader<R> {
    type Item = Result<PredictionRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        loop {
            self.buf.clear();
            self.line += 1;
            match self.reader.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) if self.buf.trim().is_empty() => continue,
                Ok(_) => {
                    let out = self.parse_line();
                    self.failed = out.is_err();
                    return Some(out);
                }
                Err(e) => {
                    self.failed = true;
                    let message = if e.kind() == std::io::ErrorKind::InvalidData {
                        "line is not valid UTF-8".to_string()
                    } else {
                        e.to_string()
                    };
                    return Some(Err(Error::Malformed {
                        line: self.line,
                        message,
                    }));
                }
            }
        }
    }
}

pub fn read_predictions(path: &Path) -> Result<PredictionReader<BufReader<File>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(PredictionReader::new(BufReader::new(file)))
}

pub fn load_predictions(path: &Path) -> Result<Vec<PredictionRecord>> {
    read_predictions(path)?.collect()
}

pub fn write_predictions<W: Write>(out: &mut W, records: &[PredictionRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut *out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
