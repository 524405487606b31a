//! Record unification, text cleaning, and the weighted multi-subset sampler.

mod augment;
mod coco;
mod config;
mod io;
mod records;
mod sampler;
mod text;

use thiserror::Error;

pub use augment::{augment, AugmentationPolicy, TaskKind, TrainingSample};
pub use coco::{CocoAnnotation, CocoCategory, CocoDataset, CocoImage};
pub use config::{config_hash, load_units, RunConfig, SubsetConfig, SubsetFormat};
pub use io::{read_jsonl, write_jsonl, JsonlLine};
pub use records::{
    unify_boxes, ContentPart, ConversationRecord, DetectionRecord, GroundingRecord, ImageRef, Message, RawAnnotation,
    RawBox, RawRecord, Role, SourceRecord, UnifiedRecord,
};
pub use sampler::{derive_rng, generate_samples, Provenance, StridedSampler, SubsetUnit, WeightedSampler};
pub use text::{clean_text, DescriptorStripper, TypoTable};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("record {id}: {msg}")]
    InvalidRecord { id: String, msg: String },
    #[error("invalid sampling weights: {0}")]
    InvalidWeights(String),
    #[error("invalid augmentation policy: {0}")]
    InvalidPolicy(String),
    #[error("invalid typo table: {0}")]
    InvalidTypoTable(String),
    #[error("config: {0}")]
    Config(String),
    #[error("{path}:{line}: {msg}")]
    Schema { path: String, line: usize, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
