//! Confidence-free detection metrics and the accuracy family.
//!
//! AP without confidence (AP_nc) replaces model scores with injected ones:
//! `trials_random` draws of uniform(0, 1) scores, each from its own seeded
//! generator, plus optionally one constant-score trial whose evaluation order
//! is the stable input order. Every trial runs ordinary greedy matching and
//! average precision; the report gives per-metric mean and standard deviation
//! across trials.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{parse_choice, Choice};
use crate::geometry::{quad_iou_detailed, CategorySet, HBox, LabeledDetection};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("prediction category {0:?} is not in the category set")]
    CategoryMismatch(String),
    #[error("{preds} predictions but {gts} ground truths")]
    LengthMismatch { preds: usize, gts: usize },
}

/// Per-image detections keyed by image id.
pub type ImageDetections = BTreeMap<String, Vec<LabeledDetection>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredDetection {
    #[serde(flatten)]
    pub det: LabeledDetection,
    pub score: f64,
}

pub type ImageScoredDetections = BTreeMap<String, Vec<ScoredDetection>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Interpolation {
    #[default]
    #[serde(rename = "voc07_11point")]
    Voc07,
    #[serde(rename = "all_points")]
    AllPoints,
}

/// IoU thresholds 0.50, 0.55, ..., 0.95.
pub fn default_iou_thresholds() -> Vec<f64> {
    (0..10).map(|i| f64::from(50 + 5 * i) / 100.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ApNcProtocol {
    pub iou_thresholds: Vec<f64>,
    pub trials_random: usize,
    pub include_constant_trial: bool,
    pub seed: u64,
    pub interpolation: Interpolation,
    /// Fail on prediction categories outside `categories` instead of ignoring them.
    pub strict_categories: bool,
    /// Active category set; the sorted union of observed categories when absent.
    pub categories: Option<CategorySet>,
}

impl Default for ApNcProtocol {
    fn default() -> Self {
        Self {
            iou_thresholds: default_iou_thresholds(),
            trials_random: 10,
            include_constant_trial: true,
            seed: 0,
            interpolation: Interpolation::Voc07,
            strict_categories: false,
            categories: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MatchResult {
    /// True positive flag per prediction, in input order.
    pub tp: Vec<bool>,
    /// Matched ground-truth index per prediction.
    pub matched_gt: Vec<Option<usize>>,
}

/// Claims the unmatched ground truth of maximal IoU in `row` if that IoU
/// reaches `thr`. Ties go to the lower index.
fn claim(row: &[f64], matched: &mut [bool], thr: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (g, &iou) in row.iter().enumerate() {
        if matched[g] || iou < thr {
            continue;
        }
        if best.is_none_or(|(_, b)| iou > b) {
            best = Some((g, iou));
        }
    }
    let (g, _) = best?;
    matched[g] = true;
    Some(g)
}

fn safe_iou(a: &LabeledDetection, b: &LabeledDetection) -> (f64, bool) {
    match quad_iou_detailed(&a.quad, &b.quad) {
        Ok(o) => (o.iou, o.hull_substituted),
        Err(_) => (0.0, false),
    }
}

/// Greedy same-category matching of `preds` (in evaluation order) against `gts`.
pub fn match_detections(preds: &[LabeledDetection], gts: &[LabeledDetection], iou_thr: f64) -> MatchResult {
    let ious: Vec<Vec<f64>> = preds
        .iter()
        .map(|p| {
            gts.iter()
                .map(|g| {
                    if g.category == p.category {
                        safe_iou(p, g).0
                    } else {
                        -1.0
                    }
                })
                .collect()
        })
        .collect();
    let mut matched = vec![false; gts.len()];
    let matched_gt: Vec<Option<usize>> = ious.iter().map(|row| claim(row, &mut matched, iou_thr)).collect();
    MatchResult {
        tp: matched_gt.iter().map(Option::is_some).collect(),
        matched_gt,
    }
}

/// Average precision of TP/FP flags in evaluation order.
///
/// `None` when there is nothing to score (no ground truth and no predictions);
/// `Some(0.0)` for predictions without any ground truth.
pub fn average_precision(flags: &[bool], n_gt: usize, interpolation: Interpolation) -> Option<f64> {
    if n_gt == 0 {
        return if flags.is_empty() { None } else { Some(0.0) };
    }
    let mut tp = 0usize;
    let mut recall = Vec::with_capacity(flags.len());
    let mut precision = Vec::with_capacity(flags.len());
    for (i, &f) in flags.iter().enumerate() {
        tp += usize::from(f);
        recall.push(tp as f64 / n_gt as f64);
        precision.push(tp as f64 / (i + 1) as f64);
    }
    let ap = match interpolation {
        Interpolation::Voc07 => {
            let sum: f64 = (0..=10)
                .map(|i| {
                    let t = f64::from(i) / 10.0;
                    recall
                        .iter()
                        .zip(&precision)
                        .filter(|(r, _)| **r >= t)
                        .map(|(_, p)| *p)
                        .fold(0.0, f64::max)
                })
                .sum();
            sum / 11.0
        }
        Interpolation::AllPoints => {
            let mut mrec = Vec::with_capacity(recall.len() + 2);
            mrec.push(0.0);
            mrec.extend_from_slice(&recall);
            mrec.push(1.0);
            let mut mpre = Vec::with_capacity(precision.len() + 2);
            mpre.push(0.0);
            mpre.extend_from_slice(&precision);
            mpre.push(0.0);
            for i in (0..mpre.len() - 1).rev() {
                mpre[i] = mpre[i].max(mpre[i + 1]);
            }
            (0..mrec.len() - 1)
                .filter(|&i| mrec[i + 1] != mrec[i])
                .map(|i| (mrec[i + 1] - mrec[i]) * mpre[i + 1])
                .sum()
        }
    };
    Some(ap)
}

/// Mean and spread of one metric across trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialStats {
    pub mean: Option<f64>,
    /// Population standard deviation over all trials.
    pub std: Option<f64>,
    pub random_mean: Option<f64>,
    pub random_std: Option<f64>,
    pub constant: Option<f64>,
    /// One value per trial: the random trials in seed order, then the constant one.
    pub trials: Vec<Option<f64>>,
}

fn mean_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (Some(mean), Some(var.sqrt()))
}

fn trial_stats(trials: Vec<Option<f64>>, n_random: usize, has_constant: bool) -> TrialStats {
    let all: Vec<f64> = trials.iter().flatten().copied().collect();
    let random: Vec<f64> = trials[..n_random].iter().flatten().copied().collect();
    let (mean, std) = mean_std(&all);
    let (random_mean, random_std) = mean_std(&random);
    TrialStats {
        mean,
        std,
        random_mean,
        random_std,
        constant: if has_constant { trials[n_random] } else { None },
        trials,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAp {
    pub n_gt: usize,
    pub n_pred: usize,
    /// Trial-mean AP per IoU threshold, aligned with the protocol thresholds.
    pub per_threshold: Vec<f64>,
    pub ap_nc50: Option<f64>,
    pub ap_nc75: Option<f64>,
    pub ap_nc50_95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub protocol: ApNcProtocol,
    pub trial_seeds: Vec<u64>,
    pub classes: Vec<String>,
    /// Classes with neither ground truth nor predictions, excluded from means.
    pub skipped_classes: Vec<String>,
    pub per_class: BTreeMap<String, ClassAp>,
    pub ap_nc50: Option<TrialStats>,
    pub ap_nc75: Option<TrialStats>,
    /// Mean over all configured IoU thresholds.
    pub ap_nc50_95: TrialStats,
    pub unknown_category_predictions: usize,
    pub hull_substituted_pairs: usize,
}

struct ImageBuckets {
    /// Per class slot: global prediction ids and the IoU matrix against that class's GT.
    classes: Vec<(Vec<usize>, Vec<Vec<f64>>, usize)>,
    hull_pairs: usize,
}

fn threshold_index(thresholds: &[f64], t: f64) -> Option<usize> {
    thresholds.iter().position(|&x| (x - t).abs() < 1e-9)
}

/// AP_nc over a set of images.
pub fn ap_nc(
    preds: &ImageDetections,
    gts: &ImageDetections,
    protocol: &ApNcProtocol,
) -> Result<EvalReport, MetricsError> {
    let classes: Vec<String> = match &protocol.categories {
        Some(set) => set.sorted().into_iter().map(str::to_string).collect(),
        None => {
            let all: BTreeSet<&str> = gts
                .values()
                .chain(preds.values())
                .flatten()
                .map(|d| d.category.as_str())
                .collect();
            all.into_iter().map(str::to_string).collect()
        }
    };
    let class_index: BTreeMap<&str, usize> = classes.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();

    let mut unknown = 0usize;
    for d in preds.values().flatten() {
        if !class_index.contains_key(d.category.as_str()) {
            if protocol.strict_categories {
                return Err(MetricsError::CategoryMismatch(d.category.clone()));
            }
            unknown += 1;
        }
    }

    let image_ids: Vec<&String> = gts
        .keys()
        .chain(preds.keys())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let empty = Vec::new();
    // Global prediction ids follow image-id order, then input order.
    let mut offsets = Vec::with_capacity(image_ids.len());
    let mut total_preds = 0usize;
    for id in &image_ids {
        offsets.push(total_preds);
        total_preds += preds.get(*id).map_or(0, Vec::len);
    }

    let n_classes = classes.len();
    let buckets: Vec<ImageBuckets> = image_ids
        .par_iter()
        .zip(offsets.par_iter())
        .map(|(id, &offset)| {
            let p = preds.get(*id).unwrap_or(&empty);
            let g = gts.get(*id).unwrap_or(&empty);
            let mut classes = vec![(Vec::new(), Vec::new(), 0usize); n_classes];
            let mut gt_by_class: Vec<Vec<&LabeledDetection>> = vec![Vec::new(); n_classes];
            for d in g {
                if let Some(&c) = class_index.get(d.category.as_str()) {
                    gt_by_class[c].push(d);
                }
            }
            let mut hull_pairs = 0;
            for (c, slot) in classes.iter_mut().enumerate() {
                slot.2 = gt_by_class[c].len();
            }
            for (i, d) in p.iter().enumerate() {
                let Some(&c) = class_index.get(d.category.as_str()) else {
                    continue;
                };
                let row: Vec<f64> = gt_by_class[c]
                    .iter()
                    .map(|gt| {
                        let (iou, hull) = safe_iou(d, gt);
                        hull_pairs += usize::from(hull);
                        iou
                    })
                    .collect();
                classes[c].0.push(offset + i);
                classes[c].1.push(row);
            }
            ImageBuckets { classes, hull_pairs }
        })
        .collect();

    // owner[global id] = (image slot, class, row within that class slot)
    let mut owner = vec![(0usize, 0usize, 0usize); total_preds];
    let mut is_known = vec![false; total_preds];
    let mut n_gt = vec![0usize; n_classes];
    let mut n_pred = vec![0usize; n_classes];
    for (img, b) in buckets.iter().enumerate() {
        for (c, (ids, _, gt_count)) in b.classes.iter().enumerate() {
            n_gt[c] += gt_count;
            n_pred[c] += ids.len();
            for (row, &gid) in ids.iter().enumerate() {
                owner[gid] = (img, c, row);
                is_known[gid] = true;
            }
        }
    }
    let evaluable: Vec<bool> = (0..n_classes).map(|c| n_gt[c] > 0 || n_pred[c] > 0).collect();

    let mut trial_seeds = Vec::new();
    let mut orders: Vec<Vec<usize>> = Vec::new();
    for k in 0..protocol.trials_random {
        let seed = protocol.seed.wrapping_add(k as u64);
        trial_seeds.push(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scores: Vec<f64> = (0..total_preds).map(|_| rng.random::<f64>()).collect();
        let mut order: Vec<usize> = (0..total_preds).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
        orders.push(order);
    }
    if protocol.include_constant_trial {
        orders.push((0..total_preds).collect());
    }

    let thresholds = &protocol.iou_thresholds;
    let n_thr = thresholds.len();
    // ap[trial][class][threshold]
    let ap: Vec<Vec<Vec<Option<f64>>>> = orders
        .par_iter()
        .map(|order| {
            let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
            for &gid in order {
                if is_known[gid] {
                    by_class[owner[gid].1].push(gid);
                }
            }
            (0..n_classes)
                .map(|c| {
                    thresholds
                        .iter()
                        .map(|&thr| {
                            let mut matched: Vec<Vec<bool>> =
                                buckets.iter().map(|b| vec![false; b.classes[c].2]).collect();
                            let flags: Vec<bool> = by_class[c]
                                .iter()
                                .map(|&gid| {
                                    let (img, _, row) = owner[gid];
                                    let ious = &buckets[img].classes[c].1[row];
                                    claim(ious, &mut matched[img], thr).is_some()
                                })
                                .collect();
                            average_precision(&flags, n_gt[c], protocol.interpolation)
                        })
                        .collect()
                })
                .collect()
        })
        .collect();

    let class_mean = |trial: usize, t: usize| -> Option<f64> {
        let vals: Vec<f64> = (0..n_classes).filter_map(|c| ap[trial][c][t]).collect();
        if vals.is_empty() {
            None
        } else {
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    };
    let n_trials = orders.len();
    let stats_at = |t: usize| {
        trial_stats(
            (0..n_trials).map(|k| class_mean(k, t)).collect(),
            protocol.trials_random,
            protocol.include_constant_trial,
        )
    };
    let overall: Vec<Option<f64>> = (0..n_trials)
        .map(|k| {
            let per_t: Vec<f64> = (0..n_thr).filter_map(|t| class_mean(k, t)).collect();
            if per_t.is_empty() || per_t.len() != n_thr {
                None
            } else {
                Some(per_t.iter().sum::<f64>() / n_thr as f64)
            }
        })
        .collect();

    let i50 = threshold_index(thresholds, 0.5);
    let i75 = threshold_index(thresholds, 0.75);
    let mut per_class = BTreeMap::new();
    let mut skipped = Vec::new();
    for (c, name) in classes.iter().enumerate() {
        if !evaluable[c] {
            skipped.push(name.clone());
            continue;
        }
        let per_threshold: Vec<f64> = (0..n_thr)
            .map(|t| (0..n_trials).filter_map(|k| ap[k][c][t]).sum::<f64>() / n_trials.max(1) as f64)
            .collect();
        let ap_nc50_95 = if n_thr == 0 {
            0.0
        } else {
            per_threshold.iter().sum::<f64>() / n_thr as f64
        };
        per_class.insert(
            name.clone(),
            ClassAp {
                n_gt: n_gt[c],
                n_pred: n_pred[c],
                ap_nc50: i50.map(|i| per_threshold[i]),
                ap_nc75: i75.map(|i| per_threshold[i]),
                ap_nc50_95,
                per_threshold,
            },
        );
    }

    Ok(EvalReport {
        protocol: protocol.clone(),
        trial_seeds,
        classes,
        skipped_classes: skipped,
        per_class,
        ap_nc50: i50.map(stats_at),
        ap_nc75: i75.map(stats_at),
        ap_nc50_95: trial_stats(overall, protocol.trials_random, protocol.include_constant_trial),
        unknown_category_predictions: unknown,
        hull_substituted_pairs: buckets.iter().map(|b| b.hull_pairs).sum(),
    })
}

/// Which aggregate the threshold sweep maximizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMetric {
    #[default]
    ApNc50,
    ApNc75,
    ApNc50_95,
}

impl SweepMetric {
    pub fn read(&self, r: &EvalReport) -> f64 {
        let s = match self {
            SweepMetric::ApNc50 => r.ap_nc50.as_ref(),
            SweepMetric::ApNc75 => r.ap_nc75.as_ref(),
            SweepMetric::ApNc50_95 => Some(&r.ap_nc50_95),
        };
        s.and_then(|s| s.mean).unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub threshold: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub metric: SweepMetric,
    pub best_threshold: f64,
    pub best_value: f64,
    pub curve: Vec<SweepPoint>,
}

/// Score thresholds 0.00, 0.05, ..., 0.95.
pub fn sweep_thresholds() -> Vec<f64> {
    (0..20).map(|i| f64::from(5 * i) / 100.0).collect()
}

/// Keeps predictions whose score reaches `threshold`, dropping the scores.
pub fn filter_by_score(scored: &ImageScoredDetections, threshold: f64) -> ImageDetections {
    scored
        .iter()
        .map(|(id, dets)| {
            (
                id.clone(),
                dets.iter()
                    .filter(|d| d.score >= threshold)
                    .map(|d| d.det.clone())
                    .collect(),
            )
        })
        .collect()
}

/// Picks the score cutoff that maximizes AP_nc. Ties go to the smaller cutoff.
pub fn threshold_sweep(
    scored: &ImageScoredDetections,
    gts: &ImageDetections,
    protocol: &ApNcProtocol,
    metric: SweepMetric,
) -> Result<SweepResult, MetricsError> {
    let mut curve = Vec::new();
    for t in sweep_thresholds() {
        let report = ap_nc(&filter_by_score(scored, t), gts, protocol)?;
        curve.push(SweepPoint {
            threshold: t,
            value: metric.read(&report),
        });
    }
    let best = curve
        .iter()
        .fold(&curve[0], |best, p| if p.value > best.value { p } else { best });
    Ok(SweepResult {
        metric,
        best_threshold: best.threshold,
        best_value: best.value,
        curve: curve.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassF1 {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Report {
    pub iou_threshold: f64,
    pub per_class: BTreeMap<String, ClassF1>,
    pub mean_f1: Option<f64>,
    pub no_classes_evaluable: bool,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Mean F1 over classes, matching in input order.
pub fn mean_f1(preds: &ImageDetections, gts: &ImageDetections, iou_thr: f64) -> F1Report {
    let mut counts: BTreeMap<String, (usize, usize, usize)> = BTreeMap::new();
    let empty = Vec::new();
    let ids: BTreeSet<&String> = preds.keys().chain(gts.keys()).collect();
    for id in ids {
        let p = preds.get(id).unwrap_or(&empty);
        let g = gts.get(id).unwrap_or(&empty);
        let m = match_detections(p, g, iou_thr);
        for (d, tp) in p.iter().zip(&m.tp) {
            let e = counts.entry(d.category.clone()).or_default();
            if *tp {
                e.0 += 1;
            } else {
                e.1 += 1;
            }
        }
        let mut hit = vec![false; g.len()];
        for gi in m.matched_gt.iter().flatten() {
            hit[*gi] = true;
        }
        for (d, h) in g.iter().zip(hit) {
            let e = counts.entry(d.category.clone()).or_default();
            if !h {
                e.2 += 1;
            }
        }
    }
    let per_class: BTreeMap<String, ClassF1> = counts
        .into_iter()
        .map(|(c, (tp, fp, fn_))| {
            let precision = ratio(tp, tp + fp);
            let recall = ratio(tp, tp + fn_);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            (
                c,
                ClassF1 {
                    tp,
                    fp,
                    fn_,
                    precision,
                    recall,
                    f1,
                },
            )
        })
        .collect();
    let mean_f1 = if per_class.is_empty() {
        None
    } else {
        Some(per_class.values().map(|c| c.f1).sum::<f64>() / per_class.len() as f64)
    };
    F1Report {
        iou_threshold: iou_thr,
        no_classes_evaluable: per_class.is_empty(),
        per_class,
        mean_f1,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

impl AccuracyReport {
    fn new(correct: usize, total: usize) -> Self {
        Self {
            correct,
            total,
            accuracy: ratio(correct, total),
        }
    }
}

/// Acc@0.5: a prediction succeeds when its IoU with the target is strictly above 0.5.
pub fn grounding_accuracy(preds: &[Option<HBox>], gts: &[HBox]) -> Result<AccuracyReport, MetricsError> {
    if preds.len() != gts.len() {
        return Err(MetricsError::LengthMismatch {
            preds: preds.len(),
            gts: gts.len(),
        });
    }
    let correct = preds
        .iter()
        .zip(gts)
        .filter(|(p, g)| p.is_some_and(|p| p.iou(g) > 0.5))
        .count();
    Ok(AccuracyReport::new(correct, gts.len()))
}

/// Case-folds, trims and collapses internal whitespace.
pub fn normalize_answer(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Label to accepted synonyms.
pub type AliasMap = BTreeMap<String, Vec<String>>;

pub fn answer_matches(pred: &str, gt: &str, aliases: &AliasMap) -> bool {
    let p = normalize_answer(pred);
    let g = normalize_answer(gt);
    if p == g {
        return true;
    }
    aliases
        .iter()
        .filter(|(k, _)| normalize_answer(k) == g)
        .flat_map(|(_, v)| v)
        .any(|a| normalize_answer(a) == p)
}

pub fn classification_accuracy(
    preds: &[String],
    gts: &[String],
    aliases: &AliasMap,
) -> Result<AccuracyReport, MetricsError> {
    if preds.len() != gts.len() {
        return Err(MetricsError::LengthMismatch {
            preds: preds.len(),
            gts: gts.len(),
        });
    }
    let correct = preds
        .iter()
        .zip(gts)
        .filter(|(p, g)| answer_matches(p, g, aliases))
        .count();
    Ok(AccuracyReport::new(correct, gts.len()))
}

/// Answer scoring that understands option letters: when the ground truth is a
/// single letter A to D, the letter is extracted from the prediction first.
pub fn score_answer(pred: &str, gt: &str, aliases: &AliasMap) -> bool {
    let g = gt.trim();
    if let Some(letter) = single_letter(g) {
        return parse_choice(pred).is_ok_and(|c| c == letter);
    }
    answer_matches(pred, gt, aliases)
}

fn single_letter(s: &str) -> Option<Choice> {
    let mut cs = s.chars();
    match (cs.next(), cs.next()) {
        (Some(c), None) => Choice::from_letter(c),
        _ => None,
    }
}

/// Letter-aware accuracy for multiple-choice and free-form VQA.
pub fn choice_accuracy(preds: &[String], gts: &[String], aliases: &AliasMap) -> Result<AccuracyReport, MetricsError> {
    if preds.len() != gts.len() {
        return Err(MetricsError::LengthMismatch {
            preds: preds.len(),
            gts: gts.len(),
        });
    }
    let correct = preds
        .iter()
        .zip(gts)
        .filter(|(p, g)| score_answer(p, g, aliases))
        .count();
    Ok(AccuracyReport::new(correct, gts.len()))
}

/// Normalized exact-match accuracy.
pub fn vqa_accuracy(preds: &[String], gts: &[String]) -> Result<AccuracyReport, MetricsError> {
    classification_accuracy(preds, gts, &AliasMap::new())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrsVqaRecord {
    pub source: String,
    pub task: String,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceAccuracy {
    pub tasks: BTreeMap<String, AccuracyReport>,
    pub average_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrsVqaReport {
    pub sources: BTreeMap<String, SourceAccuracy>,
    pub overall: Option<f64>,
}

/// Accuracy per (source, task); per-source average over tasks; overall
/// average over sources. All means are unweighted.
pub fn lrsvqa_average_accuracy(records: &[LrsVqaRecord]) -> LrsVqaReport {
    let mut cells: BTreeMap<&str, BTreeMap<&str, (usize, usize)>> = BTreeMap::new();
    for r in records {
        let c = cells.entry(&r.source).or_default().entry(&r.task).or_default();
        c.0 += usize::from(r.correct);
        c.1 += 1;
    }
    let sources: BTreeMap<String, SourceAccuracy> = cells
        .into_iter()
        .map(|(s, tasks)| {
            let tasks: BTreeMap<String, AccuracyReport> = tasks
                .into_iter()
                .map(|(t, (c, n))| (t.to_string(), AccuracyReport::new(c, n)))
                .collect();
            let aa = tasks.values().map(|a| a.accuracy).sum::<f64>() / tasks.len() as f64;
            (
                s.to_string(),
                SourceAccuracy {
                    tasks,
                    average_accuracy: aa,
                },
            )
        })
        .collect();
    let overall = if sources.is_empty() {
        None
    } else {
        Some(sources.values().map(|s| s.average_accuracy).sum::<f64>() / sources.len() as f64)
    };
    LrsVqaReport { sources, overall }
}
