//! Online prompt and resolution randomization.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::codec::{canonical_response, render_detections, render_hbox, round_coord, ResponseMode};
use crate::geometry::HBox;
use crate::resolution::{smart_resize, to_model_space, ImageGeometry, PatchSpec, ResizePlan};

use super::records::{ContentPart, ConversationRecord, ImageRef, Message, Role, SourceRecord};
use super::sampler::Provenance;
use super::DataError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Detection,
    Grounding,
    Conversation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentationPolicy {
    pub prompts: BTreeMap<TaskKind, Vec<String>>,
    pub json_mode_probability: f64,
    /// Appended to the instruction when the answer is rendered as JSON.
    pub json_instruction: String,
    pub synonym_probability: f64,
    /// Lower-case word to its replacements.
    pub synonyms: BTreeMap<String, Vec<String>>,
    /// Words never replaced, in addition to category names.
    pub protected_words: Vec<String>,
    pub scale_range: [f64; 2],
    pub patch: PatchSpec,
}

impl Default for AugmentationPolicy {
    fn default() -> Self {
        let prompts = [
            (
                TaskKind::Detection,
                vec![
                    "Detect all objects in the image and give their quadrilateral coordinates.".to_string(),
                    "Find every object in this image and output its oriented bounding box.".to_string(),
                ],
            ),
            (
                TaskKind::Grounding,
                vec![
                    "Output the bounding box of the object described below.".to_string(),
                    "Locate the following object and give its bounding box.".to_string(),
                ],
            ),
        ]
        .into_iter()
        .collect();
        Self {
            prompts,
            json_mode_probability: 0.5,
            json_instruction: "Answer in JSON format.".into(),
            synonym_probability: 0.1,
            synonyms: BTreeMap::new(),
            protected_words: Vec::new(),
            scale_range: [0.5, 2.0],
            patch: PatchSpec::default(),
        }
    }
}

impl AugmentationPolicy {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: String| Err(DataError::InvalidPolicy(m));
        for (name, p) in [
            ("json_mode_probability", self.json_mode_probability),
            ("synonym_probability", self.synonym_probability),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} = {p} is outside [0, 1]"));
            }
        }
        let [lo, hi] = self.scale_range;
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
            return bad(format!("scale_range [{lo}, {hi}] must be positive and ordered"));
        }
        for task in [TaskKind::Detection, TaskKind::Grounding] {
            if self.prompts.get(&task).is_none_or(|p| p.is_empty()) {
                return bad(format!("no prompts for {task:?}"));
            }
        }
        if let Some((w, _)) = self.synonyms.iter().find(|(_, alts)| alts.is_empty()) {
            return bad(format!("synonym entry {w:?} has no replacements"));
        }
        self.patch
            .validate()
            .map_err(|e| DataError::InvalidPolicy(e.to_string()))
    }
}

/// One augmented conversation with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub provenance: Provenance,
    pub task: TaskKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub response_mode: Option<ResponseMode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plan: Option<ResizePlan>,
    pub record: ConversationRecord,
}

static WORD: OnceLock<Regex> = OnceLock::new();

fn word_re() -> &'static Regex {
    WORD.get_or_init(|| Regex::new(r"[A-Za-z]+").unwrap())
}

fn replace_synonyms(
    text: &str,
    policy: &AugmentationPolicy,
    protected: &BTreeSet<String>,
    rng: &mut ChaCha8Rng,
) -> String {
    if policy.synonyms.is_empty() || policy.synonym_probability == 0.0 {
        return text.to_string();
    }
    word_re()
        .replace_all(text, |c: &regex::Captures<'_>| {
            let w = &c[0];
            let key = w.to_lowercase();
            let is_letter_option = w.len() == 1 && matches!(w, "A" | "B" | "C" | "D");
            let Some(alts) = policy.synonyms.get(&key) else {
                return w.to_string();
            };
            if is_letter_option || protected.contains(&key) || !rng.random_bool(policy.synonym_probability) {
                return w.to_string();
            }
            let alt = &alts[rng.random_range(0..alts.len())];
            if w.chars().next().is_some_and(char::is_uppercase) {
                let mut cs = alt.chars();
                cs.next()
                    .map(|f| f.to_uppercase().chain(cs).collect())
                    .unwrap_or_default()
            } else {
                alt.clone()
            }
        })
        .into_owned()
}

fn protected_set<'a>(policy: &AugmentationPolicy, categories: impl Iterator<Item = &'a str>) -> BTreeSet<String> {
    let mut set: BTreeSet<String> = policy.protected_words.iter().map(|w| w.to_lowercase()).collect();
    for c in categories {
        set.extend(word_re().find_iter(c).map(|m| m.as_str().to_lowercase()));
    }
    set
}

fn scaled_plan(
    native: ImageGeometry,
    policy: &AugmentationPolicy,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, ResizePlan), DataError> {
    let [lo, hi] = policy.scale_range;
    let s = if lo == hi { lo } else { rng.random_range(lo..=hi) };
    let area = native.area() as f64;
    let s_min = (policy.patch.min_pixels as f64 / area).sqrt();
    let s_max = (policy.patch.max_pixels as f64 / area).sqrt();
    let s = s.clamp(s_min.min(s_max), s_max);
    let dim = |d: u32| ((f64::from(d) * s).round() as u32).max(1);
    let scaled = ImageGeometry::new(dim(native.height), dim(native.width))
        .map_err(|e| DataError::InvalidPolicy(e.to_string()))?;
    let inner = smart_resize(scaled, &policy.patch).map_err(|e| DataError::InvalidPolicy(e.to_string()))?;
    Ok((s, ResizePlan::between(native, inner.target)))
}

fn pick_prompt<'a>(policy: &'a AugmentationPolicy, task: TaskKind, rng: &mut ChaCha8Rng) -> &'a str {
    let pool = &policy.prompts[&task];
    &pool[rng.random_range(0..pool.len())]
}

fn instruction(prompt: &str, extra: Option<&str>, json: bool, policy: &AugmentationPolicy) -> String {
    let mut s = prompt.to_string();
    if let Some(e) = extra {
        s.push(' ');
        s.push_str(e);
    }
    if json {
        s.push(' ');
        s.push_str(&policy.json_instruction);
    }
    s
}

fn render_grounding(b: &HBox, label: &str, mode: ResponseMode) -> String {
    match mode {
        ResponseMode::Plain => render_hbox(b),
        ResponseMode::Json => {
            let c = [b.x1, b.y1, b.x2, b.y2].map(|v| round_coord(v) as i64);
            serde_json::json!([{ "bbox_2d": c, "label": label }]).to_string()
        }
    }
}

/// Runs the augmentation pipeline: prompt choice, answer mode, synonym
/// replacement, random rescale, and rendering in model-input coordinates.
pub fn augment(
    record: &SourceRecord,
    task: TaskKind,
    policy: &AugmentationPolicy,
    provenance: Provenance,
    rng: &mut ChaCha8Rng,
) -> Result<TrainingSample, DataError> {
    let id = format!("{}/{}#{}", provenance.subset, provenance.record_id, provenance.draw);
    let bad = |msg: String| DataError::InvalidRecord {
        id: provenance.record_id.clone(),
        msg,
    };
    match record {
        SourceRecord::Conversation(c) => {
            let protected = protected_set(policy, std::iter::empty());
            let mut out = c.clone();
            out.id = id;
            for m in out.messages.iter_mut().filter(|m| m.role == Role::User) {
                for part in &mut m.content {
                    if let ContentPart::Text { text } = part {
                        *text = replace_synonyms(text, policy, &protected, rng);
                    }
                }
            }
            out.validate()?;
            Ok(TrainingSample {
                provenance,
                task,
                response_mode: None,
                scale: None,
                plan: None,
                record: out,
            })
        }
        SourceRecord::Detection(d) => {
            d.validate()?;
            let prompt = pick_prompt(policy, TaskKind::Detection, rng);
            let json = rng.random_bool(policy.json_mode_probability);
            let mode = if json { ResponseMode::Json } else { ResponseMode::Plain };
            let protected = protected_set(policy, d.annotations.iter().map(|a| a.category.as_str()));
            let prompt = replace_synonyms(prompt, policy, &protected, rng);
            let (scale, plan) = scaled_plan(d.geometry, policy, rng)?;
            let mapped = d
                .annotations
                .iter()
                .map(|a| to_model_space(a, &plan))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| bad(e.to_string()))?;
            let answer = render_detections(&canonical_response(&mapped), mode).map_err(|e| bad(e.to_string()))?;
            let record = single_turn(
                id,
                &d.image,
                d.geometry,
                plan.target,
                instruction(&prompt, None, json, policy),
                answer,
            );
            record.validate()?;
            Ok(TrainingSample {
                provenance,
                task,
                response_mode: Some(mode),
                scale: Some(scale),
                plan: Some(plan),
                record,
            })
        }
        SourceRecord::Grounding(g) => {
            g.validate()?;
            let prompt = pick_prompt(policy, TaskKind::Grounding, rng);
            let json = rng.random_bool(policy.json_mode_probability);
            let mode = if json { ResponseMode::Json } else { ResponseMode::Plain };
            let protected = protected_set(policy, std::iter::empty());
            let prompt = replace_synonyms(prompt, policy, &protected, rng);
            let expression = replace_synonyms(&g.expression, policy, &protected, rng);
            let (scale, plan) = scaled_plan(g.geometry, policy, rng)?;
            let (tw, th) = (f64::from(plan.target.width), f64::from(plan.target.height));
            let t = &g.target;
            let mapped = HBox::new(
                (t.x1 * plan.sx).clamp(0.0, tw),
                (t.y1 * plan.sy).clamp(0.0, th),
                (t.x2 * plan.sx).clamp(0.0, tw),
                (t.y2 * plan.sy).clamp(0.0, th),
            )
            .map_err(|e| bad(e.to_string()))?;
            let answer = render_grounding(&mapped, &g.expression, mode);
            let text = instruction(&prompt, Some(&expression), json, policy);
            let record = single_turn(id, &g.image, g.geometry, plan.target, text, answer);
            record.validate()?;
            Ok(TrainingSample {
                provenance,
                task,
                response_mode: Some(mode),
                scale: Some(scale),
                plan: Some(plan),
                record,
            })
        }
    }
}

fn single_turn(
    id: String,
    image: &str,
    native: ImageGeometry,
    target: ImageGeometry,
    instruction: String,
    answer: String,
) -> ConversationRecord {
    let image_ref = ImageRef {
        path: image.to_string(),
        crop: None,
        resize: Some(target),
    };
    ConversationRecord {
        id,
        messages: vec![
            Message::user(vec![ContentPart::image(image_ref), ContentPart::text(instruction)]),
            Message::assistant(answer),
        ],
        images: [(image.to_string(), native)].into_iter().collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{parse_detections, ParseOptions};
    use crate::data_engine::records::DetectionRecord;
    use crate::data_engine::sampler::derive_rng;
    use crate::geometry::{LabeledDetection, QuadBox};

    fn det_record() -> SourceRecord {
        SourceRecord::Detection(DetectionRecord {
            image: "d.png".into(),
            geometry: ImageGeometry::new(448, 448).unwrap(),
            annotations: vec![
                LabeledDetection::new(
                    "ship",
                    QuadBox::from_coords([10.0, 10.0, 60.0, 10.0, 60.0, 30.0, 10.0, 30.0]),
                ),
                LabeledDetection::new(
                    "harbor",
                    QuadBox::from_coords([100.0, 100.0, 200.0, 100.0, 200.0, 200.0, 100.0, 200.0]),
                ),
            ],
        })
    }

    fn prov() -> Provenance {
        Provenance {
            draw: 0,
            subset: "s".into(),
            record_id: "d.png".into(),
            pass: 0,
        }
    }

    #[test]
    fn pass_through_policy() {
        let mut policy = AugmentationPolicy {
            json_mode_probability: 0.0,
            synonym_probability: 0.0,
            scale_range: [1.0, 1.0],
            ..AugmentationPolicy::default()
        };
        policy.prompts.insert(TaskKind::Detection, vec!["Detect.".into()]);
        let s = augment(
            &det_record(),
            TaskKind::Detection,
            &policy,
            prov(),
            &mut derive_rng(1, 1),
        )
        .unwrap();
        assert_eq!(s.record.messages[0].text(), "Detect.");
        assert_eq!(
            s.record.messages[1].text(),
            "harbor: (100,100,200,100,200,200,100,200)\nship: (10,10,60,10,60,30,10,30)"
        );
        assert_eq!(s.plan.unwrap().target, ImageGeometry::new(448, 448).unwrap());
    }

    #[test]
    fn json_mode_round_trips() {
        let policy = AugmentationPolicy {
            json_mode_probability: 1.0,
            ..AugmentationPolicy::default()
        };
        let s = augment(
            &det_record(),
            TaskKind::Detection,
            &policy,
            prov(),
            &mut derive_rng(3, 1),
        )
        .unwrap();
        assert_eq!(s.response_mode, Some(ResponseMode::Json));
        let text = s.record.messages[1].text();
        let parsed = parse_detections(&text, &ParseOptions::default()).unwrap();
        assert_eq!(parsed.mode, ResponseMode::Json);
        assert_eq!(parsed.response.detections.len(), 2);
        assert!(s.record.messages[0].text().ends_with("Answer in JSON format."));
    }

    #[test]
    fn synonyms_skip_categories_and_letters() {
        let policy = AugmentationPolicy {
            synonym_probability: 1.0,
            synonyms: [
                ("ship".to_string(), vec!["vessel".to_string()]),
                ("object".to_string(), vec!["target".to_string()]),
                ("a".to_string(), vec!["one".to_string()]),
            ]
            .into_iter()
            .collect(),
            ..AugmentationPolicy::default()
        };
        let protected = protected_set(&policy, ["ship"].into_iter());
        let out = replace_synonyms("Object A: a ship, option A", &policy, &protected, &mut derive_rng(0, 0));
        assert_eq!(out, "Target A: one ship, option A");
    }
}
