//! Batch synthesis recipes with per-record seeds.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data_engine::{ConversationRecord, DetectionRecord};
use crate::geometry::{hbox_envelope, CategorySet, HBox, QuadBox};
use crate::resolution::{smart_resize, ImageGeometry, ResizePlan};

use super::mcq::{convert_to_mcq, counting_distractors};
use super::qa::{gen_comparison_qa, gen_counting_qa, ExternalIngest};
use super::{build_zoom_conversation, expand_axis, ZoomConfig, ZoomError, ZoomSample};

type RecordOutput = Result<(Vec<ConversationRecord>, Vec<String>), ZoomError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Recipe {
    Counting,
    Comparison,
    /// Counting questions converted to four-option multiple choice.
    Mcq,
    /// Externally generated QA over coarse regions.
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoomManifest {
    pub generator: String,
    pub recipe: Recipe,
    pub seed: u64,
    pub config: ZoomConfig,
    pub inputs: usize,
    pub produced: usize,
    pub excluded: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZoomOutput {
    pub conversations: Vec<ConversationRecord>,
    /// Reasons for every excluded item, in input order.
    pub exclusions: Vec<String>,
    pub manifest: ZoomManifest,
}

/// `seed` mixed with a hash of the record id.
pub fn record_seed(seed: u64, id: &str) -> u64 {
    let digest = Sha256::digest(id.as_bytes());
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    seed ^ u64::from_le_bytes(head)
}

fn first_turn_plan(native: ImageGeometry, cfg: &ZoomConfig) -> Result<ResizePlan, ZoomError> {
    smart_resize(native, &cfg.first_turn).map_err(|e| ZoomError::InvalidConfig(e.to_string()))
}

/// Native region to an integer ROI in the downsampled frame.
fn downsampled_roi(native_roi: &HBox, plan: &ResizePlan, cfg: &ZoomConfig) -> HBox {
    let (sw, sh) = (f64::from(plan.source.width), f64::from(plan.source.height));
    let (tw, th) = (f64::from(plan.target.width), f64::from(plan.target.height));
    let x1 = (native_roi.x1 * tw / sw).floor().clamp(0.0, tw);
    let y1 = (native_roi.y1 * th / sh).floor().clamp(0.0, th);
    let x2 = (native_roi.x2 * tw / sw).ceil().clamp(0.0, tw);
    let y2 = (native_roi.y2 * th / sh).ceil().clamp(0.0, th);
    let min = cfg.min_roi_side.max(1.0).ceil();
    let (x1, x2) = expand_axis(x1, x2, min, tw);
    let (y1, y2) = expand_axis(y1, y2, min, th);
    HBox {
        x1: x1.floor(),
        y1: y1.floor(),
        x2: x2.ceil().min(tw),
        y2: y2.ceil().min(th),
    }
}

fn envelope(quads: &[QuadBox]) -> Option<HBox> {
    quads.iter().map(hbox_envelope).reduce(|a, b| HBox {
        x1: a.x1.min(b.x1),
        y1: a.y1.min(b.y1),
        x2: a.x2.max(b.x2),
        y2: a.y2.max(b.y2),
    })
}

struct Item {
    question: String,
    answer: String,
    native_roi: HBox,
}

fn items_for(rec: &DetectionRecord, recipe: Recipe, cfg: &ZoomConfig, seed: u64, excl: &mut Vec<String>) -> Vec<Item> {
    let mut items = Vec::new();
    match recipe {
        Recipe::Counting | Recipe::Mcq => {
            for (k, qa) in gen_counting_qa(rec, cfg.density_threshold).into_iter().enumerate() {
                let native_roi = match qa.region {
                    Some(r) => r.bounds(rec.geometry),
                    None => envelope(&qa.evidence).expect("counting QA has evidence"),
                };
                if recipe == Recipe::Counting {
                    items.push(Item {
                        question: qa.question,
                        answer: qa.answer,
                        native_roi,
                    });
                    continue;
                }
                let mcq = counting_distractors(&qa.answer).and_then(|d| {
                    convert_to_mcq(
                        &qa.question,
                        &qa.answer,
                        &d,
                        record_seed(seed, &rec.image).wrapping_add(k as u64),
                    )
                });
                match mcq {
                    Ok(m) => items.push(Item {
                        question: m.prompt(),
                        answer: m.answer.to_string(),
                        native_roi,
                    }),
                    Err(e) => excl.push(format!("{}: {}: {e}", rec.image, qa.question)),
                }
            }
        }
        Recipe::Comparison => {
            let mut names: Vec<&str> = rec.annotations.iter().map(|a| a.category.as_str()).collect();
            names.sort_unstable();
            names.dedup();
            let cats = CategorySet::new(names.iter().copied()).expect("deduplicated names");
            for (i, a) in names.iter().enumerate() {
                for b in &names[i + 1..] {
                    match gen_comparison_qa(rec, a, b, &cats) {
                        Ok(qa) => items.push(Item {
                            native_roi: envelope(&qa.evidence).expect("both categories are present"),
                            question: qa.question,
                            answer: qa.answer,
                        }),
                        Err(e) => excl.push(format!("{}: {a} vs {b}: {e}", rec.image)),
                    }
                }
            }
        }
        Recipe::External => {}
    }
    items
}

fn manifest(
    recipe: Recipe,
    seed: u64,
    cfg: &ZoomConfig,
    inputs: usize,
    out: &[ConversationRecord],
    excl: &[String],
) -> ZoomManifest {
    ZoomManifest {
        generator: format!(
            "zoomchain/{}",
            serde_json::to_value(recipe).expect("recipe").as_str().unwrap_or("")
        ),
        recipe,
        seed,
        config: cfg.clone(),
        inputs,
        produced: out.len(),
        excluded: excl.len(),
    }
}

fn conversations(
    id_base: &str,
    image: &str,
    native: ImageGeometry,
    items: Vec<Item>,
    cfg: &ZoomConfig,
) -> Result<Vec<ConversationRecord>, ZoomError> {
    let plan = first_turn_plan(native, cfg)?;
    items
        .into_iter()
        .enumerate()
        .map(|(k, it)| {
            let sample = ZoomSample {
                id: format!("{id_base}#{k}"),
                image: image.to_string(),
                native,
                plan,
                question: it.question,
                roi: downsampled_roi(&it.native_roi, &plan, cfg),
                final_answer: it.answer,
            };
            build_zoom_conversation(&sample, cfg)
        })
        .collect()
}

/// Runs a detection-based recipe over `records` on `jobs` workers. The output
/// is independent of `jobs`.
pub fn generate(
    records: &[DetectionRecord],
    recipe: Recipe,
    cfg: &ZoomConfig,
    seed: u64,
    jobs: usize,
) -> Result<ZoomOutput, ZoomError> {
    cfg.validate()?;
    if recipe == Recipe::External {
        return Err(ZoomError::InvalidConfig("use generate_external for external QA".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| ZoomError::InvalidConfig(e.to_string()))?;
    let per_record: Vec<RecordOutput> = pool.install(|| {
        records
            .par_iter()
            .map(|rec| {
                let mut excl = Vec::new();
                let items = items_for(rec, recipe, cfg, seed, &mut excl);
                let id = format!(
                    "{}/{}",
                    rec.image,
                    serde_json::to_value(recipe).expect("recipe").as_str().unwrap_or("")
                );
                Ok((conversations(&id, &rec.image, rec.geometry, items, cfg)?, excl))
            })
            .collect()
    });
    let mut out = Vec::new();
    let mut exclusions = Vec::new();
    for r in per_record {
        let (c, e) = r?;
        out.extend(c);
        exclusions.extend(e);
    }
    Ok(ZoomOutput {
        manifest: manifest(recipe, seed, cfg, records.len(), &out, &exclusions),
        conversations: out,
        exclusions,
    })
}

/// Builds conversations from ingested external QA. With `mcq`, lines carrying
/// three distractors become multiple-choice items; others are excluded.
pub fn generate_external(
    ingest: &ExternalIngest,
    cfg: &ZoomConfig,
    seed: u64,
    mcq: bool,
) -> Result<ZoomOutput, ZoomError> {
    cfg.validate()?;
    let mut out = Vec::new();
    let mut exclusions: Vec<String> = ingest.errors.iter().map(|e| e.to_string()).collect();
    for qa in &ingest.records {
        let id = format!("{}/external/{}", qa.image, qa.line);
        let (question, answer) = if mcq {
            let Some(d) = &qa.distractors else {
                exclusions.push(format!("line {}: no distractors", qa.line));
                continue;
            };
            match convert_to_mcq(&qa.question, &qa.answer, d, record_seed(seed, &id)) {
                Ok(m) => (m.prompt(), m.answer.to_string()),
                Err(e) => {
                    exclusions.push(format!("line {}: {e}", qa.line));
                    continue;
                }
            }
        } else {
            (qa.question.clone(), qa.answer.clone())
        };
        let item = Item {
            question,
            answer,
            native_roi: qa.region,
        };
        let mut c = conversations(&id, &qa.image, qa.geometry, vec![item], cfg)?;
        out.append(&mut c);
    }
    Ok(ZoomOutput {
        manifest: manifest(
            Recipe::External,
            seed,
            cfg,
            ingest.records.len() + ingest.errors.len(),
            &out,
            &exclusions,
        ),
        conversations: out,
        exclusions,
    })
}
