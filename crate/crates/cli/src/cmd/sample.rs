use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;
use geovl::data_engine::{generate_samples, load_units, RunConfig};
use serde_json::json;

use crate::common::{data, write_jsonl, write_manifest, CliResult};

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// Run configuration (TOML, or JSON by extension).
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: u64,
    /// Number of samples to draw.
    #[arg(short = 'n', long = "count")]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub output: PathBuf,
}

pub fn run(args: SampleArgs) -> CliResult<()> {
    let cfg = RunConfig::load(&args.config).map_err(data)?;
    let units = load_units(&cfg).map_err(data)?;
    let weights: BTreeMap<String, f64> = units.iter().map(|u| (u.name.clone(), u.weight)).collect();
    let sizes: BTreeMap<String, usize> = units.iter().map(|u| (u.name.clone(), u.records.len())).collect();
    let samples = generate_samples(units, &cfg.policy, args.seed, args.n, args.jobs).map_err(data)?;
    let mut histogram: BTreeMap<&str, usize> = BTreeMap::new();
    for s in &samples {
        *histogram.entry(s.provenance.subset.as_str()).or_default() += 1;
    }
    write_jsonl(&args.output, &samples)?;
    write_manifest(
        &args.output,
        "sample",
        &cfg,
        Some(args.seed),
        json!({
            "count": args.n,
            "weights": weights,
            "subset_sizes": sizes,
            "provenance_histogram": histogram,
        }),
    )
}
