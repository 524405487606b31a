use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::Args;
use geovl::data_engine::DetectionRecord;
use geovl::geometry::LabeledDetection;
use geovl::resolution::ImageGeometry;
use geovl::tiling::{
    clip_annotations, merge_windows, plan_windows, window_manifest, TileWindow, TilingSpec, WindowEntry,
};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::common::{data, load_jsonl, usage, write_jsonl, write_manifest, CliResult};

type WindowGroup = (ImageGeometry, Vec<(TileWindow, Vec<LabeledDetection>)>);

#[derive(Debug, Args, Serialize)]
pub struct TileArgs {
    /// Image manifest (split mode) or shard file (merge mode), JSON Lines.
    #[arg(long)]
    pub input: PathBuf,
    /// Split mode: output directory for windows.jsonl and shards.jsonl.
    /// Merge mode: merged records file.
    #[arg(long)]
    pub output: PathBuf,
    /// Merge window shards back into full-image records.
    #[arg(long)]
    pub merge: bool,
    #[arg(long, default_value_t = 512)]
    pub length: u32,
    #[arg(long, default_value_t = 100)]
    pub overlap: u32,
    /// Minimum fraction of a box's area inside a window for it to be kept.
    #[arg(long, default_value_t = 0.7)]
    pub keep_ratio: f64,
    /// Same-category IoU at which merged boxes count as duplicates.
    #[arg(long, default_value_t = 0.5)]
    pub dedup_iou: f64,
    #[arg(long)]
    pub strict: bool,
}

/// Image manifest entry. Geometry is read from the image header when absent.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ImageEntry {
    image: String,
    #[serde(default)]
    height: Option<u32>,
    #[serde(default)]
    width: Option<u32>,
    #[serde(default)]
    annotations: Vec<LabeledDetection>,
}

#[derive(Debug, Serialize, Deserialize)]
struct WindowsLine {
    image: String,
    #[serde(flatten)]
    geometry: ImageGeometry,
    windows: Vec<WindowEntry>,
}

/// Window-local annotations for one window of one image.
#[derive(Debug, Serialize, Deserialize)]
struct Shard {
    image: String,
    #[serde(flatten)]
    geometry: ImageGeometry,
    window: WindowEntry,
    annotations: Vec<LabeledDetection>,
}

fn geometry_of(entry: &ImageEntry, base: &Path) -> CliResult<ImageGeometry> {
    let (h, w) = match (entry.height, entry.width) {
        (Some(h), Some(w)) => (h, w),
        (None, None) => {
            let path = base.join(&entry.image);
            let (w, h) = image::image_dimensions(&path)
                .with_context(|| format!("reading image header of {}", path.display()))
                .map_err(data)?;
            (h, w)
        }
        _ => return Err(data(anyhow!("{}: give both height and width, or neither", entry.image))),
    };
    ImageGeometry::new(h, w).map_err(data)
}

fn split(args: &TileArgs, spec: &TilingSpec) -> CliResult<()> {
    let (entries, diags) = load_jsonl::<ImageEntry>(&args.input, args.strict)?;
    let base = args.input.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(&args.output)
        .with_context(|| format!("creating {}", args.output.display()))
        .map_err(data)?;
    let mut windows_out = Vec::with_capacity(entries.len());
    let mut shards = Vec::new();
    for e in &entries {
        let geometry = geometry_of(e, base)?;
        let wins = plan_windows(geometry, spec);
        let entries = window_manifest(&wins);
        for w in &entries {
            shards.push(Shard {
                image: e.image.clone(),
                geometry,
                window: w.clone(),
                annotations: clip_annotations(&e.annotations, &w.window, args.keep_ratio),
            });
        }
        windows_out.push(WindowsLine {
            image: e.image.clone(),
            geometry,
            windows: entries,
        });
    }
    let windows_path = args.output.join("windows.jsonl");
    write_jsonl(&windows_path, &windows_out)?;
    write_jsonl(&args.output.join("shards.jsonl"), &shards)?;
    write_manifest(
        &windows_path,
        "tile",
        args,
        None,
        json!({ "images": windows_out.len(), "windows": shards.len(), "skipped": diags }),
    )
}

fn merge(args: &TileArgs) -> CliResult<()> {
    let (shards, diags) = load_jsonl::<Shard>(&args.input, args.strict)?;
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<String, WindowGroup> = BTreeMap::new();
    for s in shards {
        let g = groups.entry(s.image.clone()).or_insert_with(|| {
            order.push(s.image.clone());
            (s.geometry, Vec::new())
        });
        if g.0 != s.geometry {
            return Err(data(anyhow!("shards of {} disagree on image geometry", s.image)));
        }
        g.1.push((s.window.window, s.annotations));
    }
    let records: Vec<DetectionRecord> = order
        .into_iter()
        .map(|image| {
            let (geometry, per_window) = groups.remove(&image).expect("grouped");
            DetectionRecord {
                annotations: merge_windows(&per_window, args.dedup_iou),
                image,
                geometry,
            }
        })
        .collect();
    write_jsonl(&args.output, &records)?;
    write_manifest(
        &args.output,
        "tile-merge",
        args,
        None,
        json!({ "images": records.len(), "skipped": diags }),
    )
}

pub fn run(args: TileArgs) -> CliResult<()> {
    let spec = TilingSpec::new(args.length, args.overlap).map_err(|e| usage(e.to_string()))?;
    if !(0.0..=1.0).contains(&args.keep_ratio) {
        return Err(usage("--keep-ratio must be in [0, 1]"));
    }
    if args.merge {
        merge(&args)
    } else {
        split(&args, &spec)
    }
}
