use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Args, ValueEnum};
use geovl::codec::{parse_detections, parse_hbox, ParseOptions};
use geovl::data_engine::DetectionRecord;
use geovl::geometry::{DegeneratePolicy, HBox, LabeledDetection};
use geovl::metrics::{
    ap_nc, choice_accuracy, classification_accuracy, grounding_accuracy, lrsvqa_average_accuracy, mean_f1,
    score_answer, threshold_sweep, AliasMap, ApNcProtocol, EvalReport, ImageDetections, ImageScoredDetections,
    Interpolation, LrsVqaRecord, ScoredDetection, SweepMetric,
};
use geovl::resolution::{from_model_space, ImageGeometry, ResizePlan};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::common::{
    data, load_jsonl, read_config, read_detection_records, usage, write_json, write_manifest, CliResult,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalKind {
    Detection,
    Grounding,
    Classification,
    Vqa,
    Lrsvqa,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum InterpArg {
    #[value(name = "voc07")]
    Voc07,
    #[value(name = "all-points")]
    AllPoints,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum SweepArg {
    #[value(name = "ap50")]
    Ap50,
    #[value(name = "ap75")]
    Ap75,
    #[value(name = "ap50-95")]
    Ap50_95,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long, value_enum)]
    pub kind: EvalKind,
    #[arg(long)]
    pub preds: PathBuf,
    #[arg(long)]
    pub gts: PathBuf,
    /// Seed for the random-score trials (required for detection).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Protocol file (TOML, or JSON by extension); flags below override it.
    #[arg(long)]
    pub protocol: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub interpolation: Option<InterpArg>,
    /// Comma-separated IoU thresholds.
    #[arg(long, value_delimiter = ',')]
    pub iou_thresholds: Option<Vec<f64>>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Reject prediction categories outside the protocol's category set.
    #[arg(long)]
    pub strict_categories: bool,
    /// IoU threshold for the mF1 block of the detection report.
    #[arg(long, default_value_t = 0.5)]
    pub f1_iou: f64,
    /// Also sweep score thresholds 0.00..0.95 (predictions must carry scores).
    #[arg(long)]
    pub sweep: bool,
    #[arg(long, value_enum, default_value = "ap50")]
    pub sweep_metric: SweepArg,
    /// JSON object of label to accepted synonyms (classification, vqa, lrsvqa).
    #[arg(long)]
    pub aliases: Option<PathBuf>,
    /// Fail on malformed lines instead of skipping them.
    #[arg(long)]
    pub strict: bool,
    /// Report path; printed to stdout when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Per-class (detection) or per-group summary rows as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

/// Detection prediction line: raw model text or structured boxes.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectionPred {
    image: String,
    #[serde(default)]
    response: Option<String>,
    #[serde(default)]
    detections: Option<Vec<StructuredDet>>,
    /// Frame the coordinates are expressed in, when not native.
    #[serde(default)]
    model_geometry: Option<ImageGeometry>,
}

#[derive(Debug, Deserialize)]
struct StructuredDet {
    #[serde(flatten)]
    det: LabeledDetection,
    #[serde(default)]
    score: Option<f64>,
}

#[derive(Debug, Deserialize)]
struct IdAnswer {
    id: String,
    #[serde(default)]
    answer: Option<String>,
    #[serde(default)]
    response: Option<String>,
    #[serde(default)]
    bbox: Option<HBox>,
}

#[derive(Debug, Deserialize)]
struct LrsGt {
    id: String,
    answer: String,
    source: String,
    task: String,
}

fn protocol_of(args: &EvalArgs) -> CliResult<ApNcProtocol> {
    let mut p: ApNcProtocol = match &args.protocol {
        Some(path) => read_config(path)?,
        None => ApNcProtocol::default(),
    };
    if let Some(i) = args.interpolation {
        p.interpolation = match i {
            InterpArg::Voc07 => Interpolation::Voc07,
            InterpArg::AllPoints => Interpolation::AllPoints,
        };
    }
    if let Some(t) = &args.iou_thresholds {
        if t.is_empty() || t.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(usage("--iou-thresholds must be values in [0, 1]"));
        }
        p.iou_thresholds = t.clone();
    }
    if let Some(n) = args.trials {
        p.trials_random = n;
    }
    if args.strict_categories {
        p.strict_categories = true;
    }
    p.seed = args
        .seed
        .ok_or_else(|| usage("--seed is required for detection evaluation"))?;
    Ok(p)
}

struct DetectionInputs {
    gts: ImageDetections,
    preds: ImageDetections,
    scored: Option<ImageScoredDetections>,
    diagnostics: usize,
    skipped_lines: usize,
}

fn load_detection(args: &EvalArgs, protocol: &ApNcProtocol) -> CliResult<DetectionInputs> {
    let (gt_records, gt_diags) = read_detection_records(&args.gts, DegeneratePolicy::DropWithWarning, args.strict)?;
    let geometry: BTreeMap<String, ImageGeometry> = gt_records.iter().map(|r| (r.image.clone(), r.geometry)).collect();
    let gts: ImageDetections = gt_records
        .into_iter()
        .map(|DetectionRecord { image, annotations, .. }| (image, annotations))
        .collect();
    let (lines, pred_diags) = load_jsonl::<DetectionPred>(&args.preds, args.strict)?;
    let mut preds: ImageDetections = gts.keys().map(|k| (k.clone(), Vec::new())).collect();
    let mut scored: ImageScoredDetections = gts.keys().map(|k| (k.clone(), Vec::new())).collect();
    let mut all_scored = true;
    let mut diagnostics = 0;
    for line in lines {
        let native = *geometry
            .get(&line.image)
            .ok_or_else(|| data(anyhow!("prediction for unknown image {:?}", line.image)))?;
        let mut dets: Vec<(LabeledDetection, Option<f64>)> = match (&line.response, line.detections) {
            (Some(text), None) => {
                let opts = ParseOptions {
                    categories: protocol.categories.as_ref(),
                    strict: args.strict,
                    ..ParseOptions::default()
                };
                let parsed = parse_detections(text, &opts)
                    .with_context(|| format!("response for {}", line.image))
                    .map_err(data)?;
                diagnostics += parsed.diagnostics.len();
                parsed.response.detections.into_iter().map(|d| (d, None)).collect()
            }
            (None, Some(ds)) => ds.into_iter().map(|d| (d.det, d.score)).collect(),
            _ => {
                return Err(data(anyhow!(
                    "prediction for {:?} needs exactly one of \"response\" or \"detections\"",
                    line.image
                )))
            }
        };
        if let Some(model) = line.model_geometry {
            let plan = ResizePlan::between(native, model);
            for (d, _) in &mut dets {
                *d = from_model_space(d, &plan)
                    .with_context(|| format!("mapping {} predictions to native pixels", line.image))
                    .map_err(data)?;
            }
        }
        for (d, s) in dets {
            match s {
                Some(score) => scored
                    .get_mut(&line.image)
                    .expect("known image")
                    .push(ScoredDetection { det: d.clone(), score }),
                None => all_scored = false,
            }
            preds.get_mut(&line.image).expect("known image").push(d);
        }
    }
    Ok(DetectionInputs {
        gts,
        preds,
        scored: all_scored.then_some(scored),
        diagnostics,
        skipped_lines: gt_diags.len() + pred_diags.len(),
    })
}

fn detection_csv(path: &Path, report: &EvalReport) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(data)?;
    w.write_record(["class", "n_gt", "n_pred", "ap_nc50", "ap_nc75", "ap_nc50_95"])
        .map_err(data)?;
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    for (name, c) in &report.per_class {
        w.write_record([
            name.clone(),
            c.n_gt.to_string(),
            c.n_pred.to_string(),
            opt(c.ap_nc50),
            opt(c.ap_nc75),
            c.ap_nc50_95.to_string(),
        ])
        .map_err(data)?;
    }
    w.flush().map_err(data)
}

fn summary_csv(path: &Path, rows: &[(String, usize, usize, f64)]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(data)?;
    w.write_record(["group", "correct", "total", "accuracy"])
        .map_err(data)?;
    for (g, c, t, a) in rows {
        w.write_record([g.clone(), c.to_string(), t.to_string(), a.to_string()])
            .map_err(data)?;
    }
    w.flush().map_err(data)
}

fn read_aliases(path: &Option<PathBuf>) -> CliResult<AliasMap> {
    match path {
        Some(p) => read_config(p),
        None => Ok(AliasMap::new()),
    }
}

/// Joins predictions to ground truth by id, in ground-truth order. Missing
/// predictions are `None`.
fn join<G>(gts: &[G], gt_id: impl Fn(&G) -> &str, preds: Vec<IdAnswer>) -> CliResult<Vec<(&G, Option<IdAnswer>)>> {
    let mut by_id: BTreeMap<String, IdAnswer> = BTreeMap::new();
    for p in preds {
        let id = p.id.clone();
        if by_id.insert(id.clone(), p).is_some() {
            return Err(data(anyhow!("duplicate prediction id {id:?}")));
        }
    }
    let mut out = Vec::with_capacity(gts.len());
    for g in gts {
        out.push((g, by_id.remove(gt_id(g))));
    }
    if let Some(extra) = by_id.keys().next() {
        log::warn!("{} prediction(s) without ground truth, e.g. {extra:?}", by_id.len());
    }
    Ok(out)
}

fn answer_text(p: &IdAnswer) -> Option<&str> {
    p.answer.as_deref().or(p.response.as_deref())
}

pub fn run(args: EvalArgs) -> CliResult<()> {
    if args.sweep && args.kind != EvalKind::Detection {
        return Err(usage("--sweep applies to detection only"));
    }
    let (report, seed): (Value, Option<u64>) = match args.kind {
        EvalKind::Detection => {
            let protocol = protocol_of(&args)?;
            let inputs = load_detection(&args, &protocol)?;
            let ap = ap_nc(&inputs.preds, &inputs.gts, &protocol).map_err(data)?;
            let f1 = mean_f1(&inputs.preds, &inputs.gts, args.f1_iou);
            let sweep = if args.sweep {
                let scored = inputs
                    .scored
                    .as_ref()
                    .ok_or_else(|| data(anyhow!("--sweep needs a score on every predicted box")))?;
                let metric = match args.sweep_metric {
                    SweepArg::Ap50 => SweepMetric::ApNc50,
                    SweepArg::Ap75 => SweepMetric::ApNc75,
                    SweepArg::Ap50_95 => SweepMetric::ApNc50_95,
                };
                Some(threshold_sweep(scored, &inputs.gts, &protocol, metric).map_err(data)?)
            } else {
                None
            };
            if let Some(p) = &args.csv {
                detection_csv(p, &ap)?;
            }
            let v = json!({
                "kind": "detection",
                "ap_nc": ap,
                "mf1": f1,
                "sweep": sweep,
                "parse_diagnostics": inputs.diagnostics,
                "skipped_lines": inputs.skipped_lines,
            });
            (v, Some(protocol.seed))
        }
        EvalKind::Grounding => {
            let (gts, _) = load_jsonl::<IdAnswer>(&args.gts, args.strict)?;
            let mut targets = Vec::with_capacity(gts.len());
            for g in &gts {
                targets.push(
                    g.bbox
                        .ok_or_else(|| data(anyhow!("ground truth {:?} has no bbox", g.id)))?,
                );
            }
            let (preds, _) = load_jsonl::<IdAnswer>(&args.preds, args.strict)?;
            let joined = join(&gts, |g| &g.id, preds)?;
            let boxes: Vec<Option<HBox>> = joined
                .iter()
                .map(|(_, p)| {
                    p.as_ref().and_then(|p| match (p.bbox, answer_text(p)) {
                        (Some(b), _) => Some(b),
                        (None, Some(text)) => parse_hbox(text).ok(),
                        (None, None) => None,
                    })
                })
                .collect();
            let acc = grounding_accuracy(&boxes, &targets).map_err(data)?;
            if let Some(p) = &args.csv {
                summary_csv(p, &[("all".into(), acc.correct, acc.total, acc.accuracy)])?;
            }
            (json!({ "kind": "grounding", "acc_at_0_5": acc }), None)
        }
        EvalKind::Classification | EvalKind::Vqa => {
            let aliases = read_aliases(&args.aliases)?;
            let (gts, _) = load_jsonl::<IdAnswer>(&args.gts, args.strict)?;
            let mut gold = Vec::with_capacity(gts.len());
            for g in &gts {
                gold.push(
                    answer_text(g)
                        .ok_or_else(|| data(anyhow!("ground truth {:?} has no answer", g.id)))?
                        .to_string(),
                );
            }
            let (preds, _) = load_jsonl::<IdAnswer>(&args.preds, args.strict)?;
            let answers: Vec<String> = join(&gts, |g| &g.id, preds)?
                .iter()
                .map(|(_, p)| p.as_ref().and_then(answer_text).unwrap_or("").to_string())
                .collect();
            let acc = if args.kind == EvalKind::Classification {
                classification_accuracy(&answers, &gold, &aliases)
            } else {
                choice_accuracy(&answers, &gold, &aliases)
            }
            .map_err(data)?;
            if let Some(p) = &args.csv {
                summary_csv(p, &[("all".into(), acc.correct, acc.total, acc.accuracy)])?;
            }
            let kind = if args.kind == EvalKind::Vqa {
                "vqa"
            } else {
                "classification"
            };
            (json!({ "kind": kind, "accuracy": acc }), None)
        }
        EvalKind::Lrsvqa => {
            let aliases = read_aliases(&args.aliases)?;
            let (gts, _) = load_jsonl::<LrsGt>(&args.gts, args.strict)?;
            let (preds, _) = load_jsonl::<IdAnswer>(&args.preds, args.strict)?;
            let records: Vec<LrsVqaRecord> = join(&gts, |g| &g.id, preds)?
                .into_iter()
                .map(|(g, p)| LrsVqaRecord {
                    source: g.source.clone(),
                    task: g.task.clone(),
                    correct: p
                        .as_ref()
                        .and_then(answer_text)
                        .is_some_and(|a| score_answer(a, &g.answer, &aliases)),
                })
                .collect();
            let rep = lrsvqa_average_accuracy(&records);
            if let Some(p) = &args.csv {
                let rows: Vec<(String, usize, usize, f64)> = rep
                    .sources
                    .iter()
                    .flat_map(|(s, acc)| {
                        acc.tasks
                            .iter()
                            .map(move |(t, a)| (format!("{s}/{t}"), a.correct, a.total, a.accuracy))
                    })
                    .collect();
                summary_csv(p, &rows)?;
            }
            (json!({ "kind": "lrsvqa", "report": rep }), None)
        }
    };
    match &args.output {
        Some(out) => {
            write_json(out, &report)?;
            write_manifest(out, "eval", &args, seed, json!({}))
        }
        None => {
            println!("{}", serde_json::to_string_pretty(&report).map_err(data)?);
            Ok(())
        }
    }
}
