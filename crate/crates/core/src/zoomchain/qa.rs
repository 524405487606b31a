//! Template counting/comparison QA and external QA ingestion.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data_engine::DetectionRecord;
use crate::geometry::{CategorySet, HBox, QuadBox};
use crate::resolution::ImageGeometry;

use super::{GridRegion, ZoomConfig, ZoomError};

/// Human-readable plural of a category name (`small-vehicle` -> `small vehicles`).
pub fn display_plural(category: &str) -> String {
    let name = category.replace(['-', '_'], " ");
    let lower = name.to_lowercase();
    let consonant_y = lower.ends_with('y') && !lower[..lower.len() - 1].ends_with(|c: char| "aeiou".contains(c));
    if consonant_y {
        format!("{}ies", &name[..name.len() - 1])
    } else if ["s", "x", "z", "ch", "sh"].iter().any(|s| lower.ends_with(s)) {
        format!("{name}es")
    } else {
        format!("{name}s")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountingQa {
    pub category: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub region: Option<GridRegion>,
    pub question: String,
    pub answer: String,
    /// Native-frame boxes of the counted instances.
    pub evidence: Vec<QuadBox>,
}

/// Counting questions per category: one total-count question, or one question
/// per non-empty grid cell when the category has more than
/// `density_threshold` instances. Membership is by quad centroid.
pub fn gen_counting_qa(rec: &DetectionRecord, density_threshold: usize) -> Vec<CountingQa> {
    let mut by_cat: BTreeMap<&str, Vec<&QuadBox>> = BTreeMap::new();
    for a in &rec.annotations {
        by_cat.entry(a.category.as_str()).or_default().push(&a.quad);
    }
    let mut out = Vec::new();
    for (cat, quads) in by_cat {
        let plural = display_plural(cat);
        if quads.len() <= density_threshold {
            out.push(CountingQa {
                category: cat.to_string(),
                region: None,
                question: format!("How many {plural} are there in the image?"),
                answer: quads.len().to_string(),
                evidence: quads.into_iter().copied().collect(),
            });
            continue;
        }
        let mut cells: BTreeMap<GridRegion, Vec<QuadBox>> = BTreeMap::new();
        for q in quads {
            cells
                .entry(GridRegion::of_point(q.centroid(), rec.geometry))
                .or_default()
                .push(*q);
        }
        for (region, evidence) in cells {
            out.push(CountingQa {
                category: cat.to_string(),
                region: Some(region),
                question: format!(
                    "How many {plural} are there in the {} region of the image?",
                    region.name()
                ),
                answer: evidence.len().to_string(),
                evidence,
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonQa {
    pub question: String,
    pub answer: String,
    pub evidence: Vec<QuadBox>,
}

/// Asks which of two categories is more numerous; equal counts answer `equal`.
pub fn gen_comparison_qa(
    rec: &DetectionRecord,
    cat_a: &str,
    cat_b: &str,
    categories: &CategorySet,
) -> Result<ComparisonQa, ZoomError> {
    for c in [cat_a, cat_b] {
        if !categories.contains(c) {
            return Err(ZoomError::UnknownCategory(c.to_string()));
        }
    }
    if cat_a == cat_b {
        return Err(ZoomError::Validation("comparison needs two distinct categories".into()));
    }
    let pick = |c: &str| -> Vec<QuadBox> {
        rec.annotations
            .iter()
            .filter(|a| a.category == c)
            .map(|a| a.quad)
            .collect()
    };
    let (a, b) = (pick(cat_a), pick(cat_b));
    let (pa, pb) = (display_plural(cat_a), display_plural(cat_b));
    let answer = match a.len().cmp(&b.len()) {
        std::cmp::Ordering::Greater => pa.clone(),
        std::cmp::Ordering::Less => pb.clone(),
        std::cmp::Ordering::Equal => "equal".to_string(),
    };
    Ok(ComparisonQa {
        question: format!("Are there more {pa} or {pb} in the image? Answer \"equal\" if the counts are the same."),
        answer,
        evidence: a.into_iter().chain(b).collect(),
    })
}

/// One line of an external QA file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExternalLine {
    image: String,
    height: u32,
    width: u32,
    question: String,
    answer: String,
    region: [f64; 4],
    #[serde(default)]
    distractors: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalQa {
    pub line: usize,
    pub image: String,
    pub geometry: ImageGeometry,
    pub question: String,
    pub answer: String,
    /// Padded, clamped coarse region in the native frame.
    pub region: HBox,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distractors: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExternalIngest {
    pub records: Vec<ExternalQa>,
    pub errors: Vec<ZoomError>,
}

/// Validates one line: pads the region by `padding` of its size per side and
/// clamps it to the image.
pub fn parse_external_line(text: &str, line: usize, padding: f64) -> Result<ExternalQa, ZoomError> {
    let err = |msg: String| ZoomError::Schema { line, msg };
    let l: ExternalLine = serde_json::from_str(text).map_err(|e| err(e.to_string()))?;
    let geometry = ImageGeometry::new(l.height, l.width).map_err(|e| err(e.to_string()))?;
    if l.image.trim().is_empty() || l.question.trim().is_empty() || l.answer.trim().is_empty() {
        return Err(err("image, question and answer must be non-empty".into()));
    }
    let [x1, y1, x2, y2] = l.region;
    if !l.region.iter().all(|v| v.is_finite()) || x1 >= x2 || y1 >= y2 {
        return Err(err(format!("invalid region {:?}", l.region)));
    }
    let (w, h) = (f64::from(l.width), f64::from(l.height));
    if x2 <= 0.0 || y2 <= 0.0 || x1 >= w || y1 >= h {
        return Err(err(format!(
            "region {:?} does not overlap the {}x{} image",
            l.region, l.height, l.width
        )));
    }
    if x1 < 0.0 || y1 < 0.0 || x2 > w || y2 > h {
        log::warn!("line {line}: region {:?} exceeds the image and is clamped", l.region);
    }
    let (px, py) = ((x2 - x1) * padding, (y2 - y1) * padding);
    let region = HBox {
        x1: (x1 - px).clamp(0.0, w),
        y1: (y1 - py).clamp(0.0, h),
        x2: (x2 + px).clamp(0.0, w),
        y2: (y2 + py).clamp(0.0, h),
    };
    Ok(ExternalQa {
        line,
        image: l.image,
        geometry,
        question: l.question,
        answer: l.answer,
        region,
        distractors: l.distractors,
    })
}

/// Reads an external QA JSON Lines file. Bad lines are collected, not fatal.
pub fn ingest_external_qa(path: &Path, cfg: &ZoomConfig) -> std::io::Result<ExternalIngest> {
    let text = std::fs::read_to_string(path)?;
    let mut out = ExternalIngest::default();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match parse_external_line(line, i + 1, cfg.padding) {
            Ok(r) => out.records.push(r),
            Err(e) => out.errors.push(e),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::LabeledDetection;

    fn rec(cats: &[(&str, usize)]) -> DetectionRecord {
        let mut annotations = Vec::new();
        for (cat, n) in cats {
            for i in 0..*n {
                let x = 10.0 + 20.0 * i as f64;
                annotations.push(LabeledDetection::new(
                    *cat,
                    QuadBox::from_coords([x, 450.0, x + 10.0, 450.0, x + 10.0, 460.0, x, 460.0]),
                ));
            }
        }
        DetectionRecord {
            image: "r.png".into(),
            geometry: ImageGeometry::new(900, 900).unwrap(),
            annotations,
        }
    }

    #[test]
    fn plurals() {
        assert_eq!(display_plural("ship"), "ships");
        assert_eq!(display_plural("small-vehicle"), "small vehicles");
        assert_eq!(display_plural("ferry"), "ferries");
        assert_eq!(display_plural("bus"), "buses");
        assert_eq!(display_plural("runway"), "runways");
    }

    #[test]
    fn sparse_counting() {
        let qa = gen_counting_qa(&rec(&[("ship", 1)]), 10);
        assert_eq!(qa.len(), 1);
        assert_eq!(qa[0].answer, "1");
        assert!(qa[0].region.is_none());
        assert!(gen_counting_qa(&rec(&[]), 10).is_empty());
    }

    #[test]
    fn dense_counting_uses_regions() {
        let qa = gen_counting_qa(&rec(&[("car", 40)]), 10);
        assert!(qa.iter().all(|q| q.region.is_some()));
        let total: usize = qa.iter().map(|q| q.answer.parse::<usize>().unwrap()).sum();
        assert_eq!(total, 40);
    }

    #[test]
    fn comparison() {
        let cats = CategorySet::new(["ship", "plane", "car"]).unwrap();
        let r = rec(&[("ship", 5), ("plane", 2)]);
        assert_eq!(gen_comparison_qa(&r, "ship", "plane", &cats).unwrap().answer, "ships");
        let r = rec(&[("ship", 3), ("plane", 3)]);
        assert_eq!(gen_comparison_qa(&r, "ship", "plane", &cats).unwrap().answer, "equal");
        assert!(gen_comparison_qa(&r, "ship", "tank", &cats).is_err());
    }

    #[test]
    fn external_lines() {
        let ok = r#"{"image":"a.png","height":100,"width":200,"question":"q?","answer":"a","region":[10,10,60,30]}"#;
        let r = parse_external_line(ok, 1, 0.1).unwrap();
        assert_eq!(r.region, HBox::new(5.0, 8.0, 65.0, 32.0).unwrap());
        let over =
            r#"{"image":"a.png","height":100,"width":200,"question":"q?","answer":"a","region":[150,50,260,120]}"#;
        let r = parse_external_line(over, 2, 0.1).unwrap();
        assert_eq!(r.region, HBox::new(139.0, 43.0, 200.0, 100.0).unwrap());
        for bad in [
            r#"{"image":"a.png","height":100,"width":200,"question":"","answer":"a","region":[1,1,2,2]}"#,
            r#"{"image":"a.png","height":100,"width":200,"question":"q","answer":"a","region":[5,1,2,2]}"#,
            r#"{"image":"a.png","height":100,"width":200,"question":"q","answer":"a","region":[300,1,400,2]}"#,
            r#"{"image":"a.png","height":0,"width":200,"question":"q","answer":"a","region":[1,1,2,2]}"#,
            r#"{"image":"a.png","question":"q","answer":"a","region":[1,1,2,2]}"#,
            "not json",
        ] {
            assert!(matches!(
                parse_external_line(bad, 3, 0.1),
                Err(ZoomError::Schema { line: 3, .. })
            ));
        }
    }
}
