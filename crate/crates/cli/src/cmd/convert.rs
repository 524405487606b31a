use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, ValueEnum};
use geovl::data_engine::{
    clean_text, unify_boxes, CocoDataset, ContentPart, DescriptorStripper, RawRecord, Role, SourceRecord, TypoTable,
    UnifiedRecord,
};
use geovl::geometry::DegeneratePolicy;
use serde::Serialize;
use serde_json::json;

use crate::common::{
    data, load_jsonl, read_detection_records, usage, write_json, write_jsonl, write_manifest, CliResult,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum InFormat {
    /// COCO-style detection JSON.
    Coco,
    /// JSON Lines of unified records.
    Records,
    /// JSON Lines of raw records with mixed box types.
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OutFormat {
    Coco,
    Records,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Degenerate {
    Drop,
    Error,
}

#[derive(Debug, Args, Serialize)]
pub struct ConvertArgs {
    #[arg(long = "from", value_enum)]
    pub from: InFormat,
    #[arg(long = "to", value_enum)]
    pub to: OutFormat,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Remove task descriptor tags from prompts and expressions.
    #[arg(long)]
    pub strip_descriptors: bool,
    /// JSON object mapping each descriptor tag to its prompt pool.
    #[arg(long)]
    pub descriptor_pools: Option<PathBuf>,
    /// Collapse spaces and repeated punctuation in prompts and expressions.
    #[arg(long)]
    pub clean: bool,
    /// JSON object of typo substitutions applied by --clean.
    #[arg(long)]
    pub typos: Option<PathBuf>,
    /// Fail on the first malformed line instead of skipping it.
    #[arg(long)]
    pub strict: bool,
    #[arg(long, value_enum, default_value = "drop")]
    pub degenerate: Degenerate,
}

fn read_map<T: serde::de::DeserializeOwned>(path: &PathBuf) -> CliResult<T> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(data)?;
    serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", path.display()))
        .map_err(data)
}

struct TextRules {
    stripper: Option<DescriptorStripper>,
    typos: Option<TypoTable>,
}

impl TextRules {
    fn apply(&self, s: &str) -> String {
        let mut out = s.to_string();
        if let Some(st) = &self.stripper {
            out = st.strip(&out);
        }
        if let Some(t) = &self.typos {
            out = clean_text(&out, t);
        }
        out
    }

    fn active(&self) -> bool {
        self.stripper.is_some() || self.typos.is_some()
    }

    fn record(&self, rec: &mut SourceRecord) {
        match rec {
            SourceRecord::Grounding(g) => g.expression = self.apply(&g.expression),
            SourceRecord::Conversation(c) => {
                for m in c.messages.iter_mut().filter(|m| m.role == Role::User) {
                    for part in &mut m.content {
                        if let ContentPart::Text { text } = part {
                            *text = self.apply(text);
                        }
                    }
                }
            }
            SourceRecord::Detection(_) => {}
        }
    }
}

pub fn run(args: ConvertArgs) -> CliResult<()> {
    let policy = match args.degenerate {
        Degenerate::Drop => DegeneratePolicy::DropWithWarning,
        Degenerate::Error => DegeneratePolicy::HardError,
    };
    if args.descriptor_pools.is_some() && !args.strip_descriptors {
        return Err(usage("--descriptor-pools requires --strip-descriptors"));
    }
    if args.typos.is_some() && !args.clean {
        return Err(usage("--typos requires --clean"));
    }
    let rules = TextRules {
        stripper: if args.strip_descriptors {
            Some(match &args.descriptor_pools {
                Some(p) => DescriptorStripper::new(read_map::<BTreeMap<String, Vec<String>>>(p)?).map_err(data)?,
                None => DescriptorStripper::default(),
            })
        } else {
            None
        },
        typos: if args.clean {
            Some(match &args.typos {
                Some(p) => TypoTable::new(read_map(p)?).map_err(data)?,
                None => TypoTable::default(),
            })
        } else {
            None
        },
    };

    let (mut records, mut diags): (Vec<SourceRecord>, Vec<String>) = match args.from {
        InFormat::Coco => {
            let (recs, d) = read_detection_records(&args.input, policy, args.strict)?;
            (recs.into_iter().map(SourceRecord::Detection).collect(), d)
        }
        InFormat::Records => load_jsonl::<SourceRecord>(&args.input, args.strict)?,
        InFormat::Raw => {
            let (raw, d) = load_jsonl::<RawRecord>(&args.input, args.strict)?;
            let mut out = Vec::with_capacity(raw.len());
            for r in &raw {
                out.push(match unify_boxes(r, policy).map_err(data)? {
                    UnifiedRecord::Detection(d) => SourceRecord::Detection(d),
                    UnifiedRecord::Grounding(g) => SourceRecord::Grounding(g),
                });
            }
            (out, d)
        }
    };

    let mut valid = Vec::with_capacity(records.len());
    for mut rec in records.drain(..) {
        if rules.active() {
            rules.record(&mut rec);
        }
        let check = match &rec {
            SourceRecord::Conversation(c) => c.validate(),
            SourceRecord::Detection(d) => d.validate(),
            SourceRecord::Grounding(g) => g.validate(),
        };
        match check {
            Ok(()) => valid.push(rec),
            Err(e) if args.strict => return Err(data(e)),
            Err(e) => {
                log::warn!("skipping invalid record: {e}");
                diags.push(e.to_string());
            }
        }
    }

    match args.to {
        OutFormat::Records => write_jsonl(&args.output, &valid)?,
        OutFormat::Coco => {
            let mut dets = Vec::with_capacity(valid.len());
            for r in &valid {
                match r {
                    SourceRecord::Detection(d) => dets.push(d.clone()),
                    other => {
                        return Err(data(anyhow::anyhow!(
                            "record {:?} is not a detection record and cannot be written as COCO",
                            other.id()
                        )))
                    }
                }
            }
            write_json(&args.output, &CocoDataset::from_records(&dets))?;
        }
    }
    write_manifest(
        &args.output,
        "convert",
        &args,
        None,
        json!({ "records_out": valid.len(), "skipped": diags.len(), "diagnostics": diags }),
    )
}
