use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::DataError;

/// One parsed JSON Lines entry with its 1-based line number.
#[derive(Debug)]
pub struct JsonlLine<T> {
    pub line: usize,
    pub value: Result<T, String>,
}

/// Reads a JSON Lines file, skipping blank lines. Per-line parse errors are
/// returned in place so callers can decide between strict and lenient handling.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<JsonlLine<T>>, DataError> {
    let io = |source| DataError::Io {
        path: path.display().to_string(),
        source,
    };
    let reader = BufReader::new(File::open(path).map_err(io)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(JsonlLine {
            line: i + 1,
            value: serde_json::from_str(&line).map_err(|e| e.to_string()),
        });
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), DataError> {
    let io = |source| DataError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    for item in items {
        let line = serde_json::to_string(item).map_err(|e| DataError::Config(e.to_string()))?;
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)
}
