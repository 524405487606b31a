//! Run configuration: subsets, weights, augmentation policy and protocol.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::geometry::DegeneratePolicy;
use crate::metrics::ApNcProtocol;

use super::augment::{AugmentationPolicy, TaskKind};
use super::coco::CocoDataset;
use super::io::read_jsonl;
use super::records::{unify_boxes, RawRecord, SourceRecord, UnifiedRecord};
use super::sampler::SubsetUnit;
use super::DataError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubsetFormat {
    /// JSON Lines of unified records.
    #[default]
    Records,
    /// JSON Lines of raw records, unified on load.
    Raw,
    /// COCO-style detection JSON.
    Coco,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubsetConfig {
    pub name: String,
    pub task: TaskKind,
    pub weight: f64,
    pub path: PathBuf,
    #[serde(default)]
    pub format: SubsetFormat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub subsets: Vec<SubsetConfig>,
    #[serde(default)]
    pub policy: AugmentationPolicy,
    /// Optional lexicon file (JSON object of word to replacements) merged into the policy.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synonyms_file: Option<PathBuf>,
    #[serde(default)]
    pub degenerate: DegeneratePolicy,
    #[serde(default)]
    pub metrics: ApNcProtocol,
}

impl RunConfig {
    /// Parses TOML, or JSON when the path ends in `.json`. Relative paths
    /// inside the file resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg: RunConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| DataError::Config(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| DataError::Config(format!("{}: {e}", path.display())))?
        };
        let base = path.parent().unwrap_or(Path::new("."));
        for s in &mut cfg.subsets {
            if s.path.is_relative() {
                s.path = base.join(&s.path);
            }
        }
        if let Some(f) = &cfg.synonyms_file {
            let f = if f.is_relative() { base.join(f) } else { f.clone() };
            let text = std::fs::read_to_string(&f).map_err(|source| DataError::Io {
                path: f.display().to_string(),
                source,
            })?;
            let lex: BTreeMap<String, Vec<String>> =
                serde_json::from_str(&text).map_err(|e| DataError::Config(format!("{}: {e}", f.display())))?;
            for (k, v) in lex {
                cfg.policy.synonyms.entry(k.to_lowercase()).or_default().extend(v);
            }
            cfg.synonyms_file = Some(f);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.subsets.is_empty() {
            return Err(DataError::Config("no subsets declared".into()));
        }
        let mut names: Vec<&str> = self.subsets.iter().map(|s| s.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(DataError::Config("subset names must be unique".into()));
        }
        self.policy.validate()
    }
}

/// SHA-256 over the canonical JSON form of any serializable configuration.
pub fn config_hash<T: Serialize>(cfg: &T) -> String {
    let value = serde_json::to_value(cfg).expect("config serializes");
    let bytes = serde_json::to_vec(&value).expect("value serializes");
    hex::encode(Sha256::digest(&bytes))
}

fn load_records(s: &SubsetConfig, policy: DegeneratePolicy) -> Result<Vec<SourceRecord>, DataError> {
    let path = s.path.display().to_string();
    let schema = |line: usize, msg: String| DataError::Schema {
        path: path.clone(),
        line,
        msg,
    };
    let records = match s.format {
        SubsetFormat::Coco => {
            let text = std::fs::read_to_string(&s.path).map_err(|source| DataError::Io {
                path: path.clone(),
                source,
            })?;
            let coco: CocoDataset = serde_json::from_str(&text).map_err(|e| schema(0, e.to_string()))?;
            coco.to_records(policy)?
                .into_iter()
                .map(SourceRecord::Detection)
                .collect()
        }
        SubsetFormat::Records => read_jsonl::<SourceRecord>(&s.path)?
            .into_iter()
            .map(|l| l.value.map_err(|e| schema(l.line, e)))
            .collect::<Result<Vec<_>, _>>()?,
        SubsetFormat::Raw => {
            let mut out = Vec::new();
            for l in read_jsonl::<RawRecord>(&s.path)? {
                let raw = l.value.map_err(|e| schema(l.line, e))?;
                out.push(match unify_boxes(&raw, policy)? {
                    UnifiedRecord::Detection(d) => SourceRecord::Detection(d),
                    UnifiedRecord::Grounding(g) => SourceRecord::Grounding(g),
                });
            }
            out
        }
    };
    for r in &records {
        let kind_ok = matches!(
            (s.task, r),
            (TaskKind::Detection, SourceRecord::Detection(_))
                | (TaskKind::Grounding, SourceRecord::Grounding(_))
                | (TaskKind::Conversation, SourceRecord::Conversation(_))
        );
        if !kind_ok {
            return Err(DataError::InvalidRecord {
                id: r.id().to_string(),
                msg: format!("record kind does not match subset {:?} task {:?}", s.name, s.task),
            });
        }
    }
    Ok(records)
}

/// Loads every declared subset into memory.
pub fn load_units(cfg: &RunConfig) -> Result<Vec<SubsetUnit>, DataError> {
    cfg.subsets
        .iter()
        .map(|s| {
            Ok(SubsetUnit {
                name: s.name.clone(),
                task: s.task,
                weight: s.weight,
                records: load_records(s, cfg.degenerate)?,
            })
        })
        .collect()
}
