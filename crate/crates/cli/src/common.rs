//! Error mapping, file helpers and output manifests shared by subcommands.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use geovl::data_engine::{config_hash, read_jsonl, CocoDataset, DetectionRecord, SourceRecord};
use geovl::geometry::DegeneratePolicy;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

/// Failure classes with their process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags or flag combinations (exit 1).
    Usage(String),
    /// Unreadable, malformed or invalid input (exit 2).
    Data(anyhow::Error),
    /// A library invariant was violated (exit 3).
    Internal(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Data(e) => write!(f, "{e:#}"),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Data(e)
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub fn data(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Data(e.into())
}

/// JSON Lines with per-line diagnostics. In strict mode any bad line fails the
/// whole read; otherwise bad lines are skipped and reported.
pub fn load_jsonl<T: DeserializeOwned>(path: &Path, strict: bool) -> CliResult<(Vec<T>, Vec<String>)> {
    let mut ok = Vec::new();
    let mut diags = Vec::new();
    for line in read_jsonl::<T>(path).map_err(data)? {
        match line.value {
            Ok(v) => ok.push(v),
            Err(e) => diags.push(format!("{}:{}: {e}", path.display(), line.line)),
        }
    }
    if strict && !diags.is_empty() {
        return Err(data(anyhow::anyhow!(
            "{} malformed line(s):\n{}",
            diags.len(),
            diags.join("\n")
        )));
    }
    for d in &diags {
        log::warn!("skipping {d}");
    }
    Ok((ok, diags))
}

#[derive(serde::Deserialize)]
#[serde(untagged)]
enum DetectionLine {
    Tagged(SourceRecord),
    Plain(DetectionRecord),
}

/// Detection records from COCO JSON (`.json`) or JSON Lines.
pub fn read_detection_records(
    path: &Path,
    policy: DegeneratePolicy,
    strict: bool,
) -> CliResult<(Vec<DetectionRecord>, Vec<String>)> {
    if path.extension().is_some_and(|e| e == "json") {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))
            .map_err(data)?;
        let coco: CocoDataset = serde_json::from_str(&text)
            .with_context(|| format!("parsing COCO file {}", path.display()))
            .map_err(data)?;
        return Ok((coco.to_records(policy).map_err(data)?, Vec::new()));
    }
    let (lines, mut diags) = load_jsonl::<DetectionLine>(path, strict)?;
    let mut out = Vec::with_capacity(lines.len());
    for l in lines {
        match l {
            DetectionLine::Plain(d) | DetectionLine::Tagged(SourceRecord::Detection(d)) => out.push(d),
            DetectionLine::Tagged(other) => {
                let msg = format!("{}: record {:?} is not a detection record", path.display(), other.id());
                if strict {
                    return Err(data(anyhow::anyhow!(msg)));
                }
                diags.push(msg);
            }
        }
    }
    Ok((out, diags))
}

/// Reads a TOML file, or JSON when the extension is `.json`.
pub fn read_config<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(data)?;
    if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text)
            .with_context(|| format!("parsing {}", path.display()))
            .map_err(data)
    } else {
        toml::from_str(&text)
            .with_context(|| format!("parsing {}", path.display()))
            .map_err(data)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let file = File::create(path)
        .with_context(|| format!("creating {}", path.display()))
        .map_err(data)?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(data)?;
    writeln!(w).map_err(data)?;
    w.flush().map_err(data)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> CliResult<()> {
    geovl::data_engine::write_jsonl(path, items).map_err(data)
}

pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    output.with_file_name(name)
}

/// Writes `<output>.manifest.json` echoing the effective configuration, its
/// hash and the seed next to the produced file.
pub fn write_manifest<C: Serialize>(
    output: &Path,
    command: &str,
    config: &C,
    seed: Option<u64>,
    extra: Value,
) -> CliResult<()> {
    let mut m = json!({
        "command": command,
        "tool_version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "config_hash": config_hash(config),
        "seed": seed,
        "output": output.display().to_string(),
    });
    if let (Some(obj), Value::Object(more)) = (m.as_object_mut(), extra) {
        obj.extend(more);
    }
    write_json(&manifest_path(output), &m)
}
