use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use geovl::geometry::DegeneratePolicy;
use geovl::zoomchain::{generate, generate_external, ingest_external_qa, Recipe, ZoomConfig, ZoomError};
use serde::Serialize;
use serde_json::json;

use crate::common::{
    data, read_config, read_detection_records, usage, write_jsonl, write_manifest, CliError, CliResult,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RecipeArg {
    Counting,
    Comparison,
    Mcq,
    External,
}

#[derive(Debug, Args)]
pub struct ZoomgenArgs {
    /// Detection records (COCO `.json` or JSON Lines), or external QA JSON Lines.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub recipe: RecipeArg,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Zoom configuration file (TOML, or JSON by extension).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub density_threshold: Option<usize>,
    #[arg(long)]
    pub padding: Option<f64>,
    #[arg(long)]
    pub min_crop_side: Option<u32>,
    /// External recipe only: turn lines with distractors into multiple choice.
    #[arg(long)]
    pub mcq: bool,
    #[arg(long)]
    pub strict: bool,
}

/// Inputs are validated before generation, so a bad sample here is a bug.
fn invariant(e: ZoomError) -> CliError {
    match e {
        ZoomError::InvalidConfig(m) => usage(m),
        other => CliError::Internal(other.to_string()),
    }
}

pub fn run(args: ZoomgenArgs) -> CliResult<()> {
    let mut cfg: ZoomConfig = match &args.config {
        Some(p) => read_config(p)?,
        None => ZoomConfig::default(),
    };
    if let Some(v) = args.density_threshold {
        cfg.density_threshold = v;
    }
    if let Some(v) = args.padding {
        cfg.padding = v;
    }
    if let Some(v) = args.min_crop_side {
        cfg.min_crop_side = v;
    }
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    if args.mcq && args.recipe != RecipeArg::External {
        return Err(usage(
            "--mcq applies to the external recipe; use --recipe mcq for counting questions",
        ));
    }
    let out = if args.recipe == RecipeArg::External {
        let ingest = ingest_external_qa(&args.input, &cfg)
            .with_context(|| format!("reading {}", args.input.display()))
            .map_err(data)?;
        if args.strict && !ingest.errors.is_empty() {
            let msgs: Vec<String> = ingest.errors.iter().map(|e| e.to_string()).collect();
            return Err(data(anyhow::anyhow!(
                "{} invalid line(s):\n{}",
                msgs.len(),
                msgs.join("\n")
            )));
        }
        generate_external(&ingest, &cfg, args.seed, args.mcq).map_err(invariant)?
    } else {
        let recipe = match args.recipe {
            RecipeArg::Counting => Recipe::Counting,
            RecipeArg::Comparison => Recipe::Comparison,
            _ => Recipe::Mcq,
        };
        let (records, _) = read_detection_records(&args.input, DegeneratePolicy::DropWithWarning, args.strict)?;
        for r in &records {
            r.validate().map_err(data)?;
        }
        generate(&records, recipe, &cfg, args.seed, args.jobs).map_err(invariant)?
    };
    write_jsonl(&args.output, &out.conversations)?;
    write_manifest(
        &args.output,
        "zoomgen",
        &json!({ "recipe": args.recipe, "mcq": args.mcq, "zoom": cfg }),
        Some(args.seed),
        json!({ "generation": out.manifest, "exclusions": out.exclusions }),
    )
}
