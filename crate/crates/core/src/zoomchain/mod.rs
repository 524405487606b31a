//! Two-turn zoom-in conversations and synthesis of region-grounded QA.
//!
//! Turn one asks for a region of interest on a downsampled view; turn two
//! supplies the native-resolution crop of that region and asks for the answer.

mod mcq;
mod qa;
mod recipe;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::render_hbox;
use crate::data_engine::{ContentPart, ConversationRecord, ImageRef, Message};
use crate::geometry::{HBox, Point2D};
use crate::resolution::{ImageGeometry, PatchSpec, ResizePlan};

pub use mcq::{convert_to_mcq, counting_distractors, McqItem};
pub use qa::{
    display_plural, gen_comparison_qa, gen_counting_qa, ingest_external_qa, parse_external_line, ComparisonQa,
    CountingQa, ExternalIngest, ExternalQa,
};
pub use recipe::{generate, generate_external, record_seed, Recipe, ZoomManifest, ZoomOutput};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ZoomError {
    #[error("roi {roi:?} is outside the {width}x{height} downsampled frame")]
    RoiOutOfBounds { roi: [f64; 4], width: u32, height: u32 },
    #[error("roi side {side} is below the minimum {min}")]
    RoiTooSmall { side: f64, min: f64 },
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("line {line}: {msg}")]
    Schema { line: usize, msg: String },
    #[error("unknown category {0:?}")]
    UnknownCategory(String),
    #[error("invalid zoom config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ZoomConfig {
    /// Minimum native crop side in pixels.
    pub min_crop_side: u32,
    /// Minimum ROI side in the downsampled frame.
    pub min_roi_side: f64,
    /// Fraction of the region size added to each side of external regions.
    pub padding: f64,
    /// Instances per category above which counting switches to per-region questions.
    pub density_threshold: usize,
    /// Planner bounds for the first-turn view.
    pub first_turn: PatchSpec,
    pub prompt: String,
}

impl Default for ZoomConfig {
    fn default() -> Self {
        Self {
            min_crop_side: 224,
            min_roi_side: 1.0,
            padding: 0.1,
            density_threshold: 10,
            first_turn: PatchSpec::default(),
            prompt: "First output the bounding box of the region needed to answer the question, \
                     then answer it from the zoomed-in view."
                .into(),
        }
    }
}

impl ZoomConfig {
    pub fn validate(&self) -> Result<(), ZoomError> {
        if self.min_crop_side == 0 {
            return Err(ZoomError::InvalidConfig("min_crop_side must be positive".into()));
        }
        if !(self.min_roi_side.is_finite() && self.min_roi_side >= 0.0) {
            return Err(ZoomError::InvalidConfig("min_roi_side must be non-negative".into()));
        }
        if !(self.padding.is_finite() && self.padding >= 0.0) {
            return Err(ZoomError::InvalidConfig("padding must be non-negative".into()));
        }
        self.first_turn
            .validate()
            .map_err(|e| ZoomError::InvalidConfig(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoomSample {
    pub id: String,
    pub image: String,
    pub native: ImageGeometry,
    pub plan: ResizePlan,
    pub question: String,
    /// Region of interest in the downsampled frame.
    pub roi: HBox,
    pub final_answer: String,
}

impl ZoomSample {
    pub fn validate(&self, cfg: &ZoomConfig) -> Result<(), ZoomError> {
        let (w, h) = (self.plan.target.width, self.plan.target.height);
        let frame = HBox {
            x1: 0.0,
            y1: 0.0,
            x2: f64::from(w),
            y2: f64::from(h),
        };
        if !frame.contains_box(&self.roi) {
            return Err(ZoomError::RoiOutOfBounds {
                roi: self.roi.into(),
                width: w,
                height: h,
            });
        }
        let side = self.roi.width().min(self.roi.height());
        if side < cfg.min_roi_side || side <= 0.0 {
            return Err(ZoomError::RoiTooSmall {
                side,
                min: cfg.min_roi_side,
            });
        }
        Ok(())
    }
}

fn expand_axis(lo: f64, hi: f64, min_side: f64, bound: f64) -> (f64, f64) {
    if hi - lo >= min_side {
        return (lo, hi);
    }
    let side = min_side.min(bound);
    let c = (lo + hi) / 2.0;
    let lo = (c - side / 2.0).clamp(0.0, bound - side);
    (lo, lo + side)
}

/// Maps a downsampled-frame ROI to a native-frame crop: unscale, clamp,
/// expand symmetrically to `min_side` (shifting inward at borders), then
/// snap outward to integers.
pub fn compute_crop(roi: &HBox, plan: &ResizePlan, min_side: u32) -> HBox {
    let (sw, sh) = (f64::from(plan.source.width), f64::from(plan.source.height));
    let (tw, th) = (f64::from(plan.target.width), f64::from(plan.target.height));
    let x1 = (roi.x1 * sw / tw).clamp(0.0, sw);
    let x2 = (roi.x2 * sw / tw).clamp(0.0, sw);
    let y1 = (roi.y1 * sh / th).clamp(0.0, sh);
    let y2 = (roi.y2 * sh / th).clamp(0.0, sh);
    let m = f64::from(min_side);
    let (x1, x2) = expand_axis(x1, x2, m, sw);
    let (y1, y2) = expand_axis(y1, y2, m, sh);
    HBox {
        x1: x1.floor().max(0.0),
        y1: y1.floor().max(0.0),
        x2: x2.ceil().min(sw),
        y2: y2.ceil().min(sh),
    }
}

/// Integer crop rectangle for an image reference.
fn crop_pixels(b: &HBox) -> [u32; 4] {
    [b.x1, b.y1, b.x2, b.y2].map(|v| v as u32)
}

/// Builds the two-turn conversation. Only the two assistant turns are trainable.
pub fn build_zoom_conversation(sample: &ZoomSample, cfg: &ZoomConfig) -> Result<ConversationRecord, ZoomError> {
    sample.validate(cfg)?;
    let crop = compute_crop(&sample.roi, &sample.plan, cfg.min_crop_side);
    let overview = ImageRef {
        path: sample.image.clone(),
        crop: None,
        resize: Some(sample.plan.target),
    };
    let zoomed = ImageRef {
        path: sample.image.clone(),
        crop: Some(crop_pixels(&crop)),
        resize: None,
    };
    let rec = ConversationRecord {
        id: sample.id.clone(),
        messages: vec![
            Message::user(vec![
                ContentPart::text(cfg.prompt.clone()),
                ContentPart::image(overview),
                ContentPart::text(sample.question.clone()),
            ]),
            Message::assistant(render_hbox(&sample.roi)),
            Message::tool(vec![ContentPart::image(zoomed)]),
            Message::assistant(sample.final_answer.clone()),
        ],
        images: [(sample.image.clone(), sample.native)].into_iter().collect(),
    };
    rec.validate().map_err(|e| ZoomError::Validation(e.to_string()))?;
    Ok(rec)
}

/// Cell of the 3x3 grid, numbered row-major from the top-left.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct GridRegion(u8);

const REGION_NAMES: [&str; 9] = [
    "top-left",
    "top-center",
    "top-right",
    "middle-left",
    "center",
    "middle-right",
    "bottom-left",
    "bottom-center",
    "bottom-right",
];

impl TryFrom<u8> for GridRegion {
    type Error = String;

    fn try_from(i: u8) -> Result<Self, String> {
        GridRegion::new(i).ok_or_else(|| format!("grid index {i} out of range"))
    }
}

impl From<GridRegion> for u8 {
    fn from(r: GridRegion) -> u8 {
        r.0
    }
}

fn split_points(dim: u32) -> [u32; 4] {
    [0, dim / 3, 2 * dim / 3, dim]
}

fn band(v: f64, dim: u32) -> u8 {
    let [_, a, b, _] = split_points(dim);
    if v < f64::from(a) {
        0
    } else if v < f64::from(b) {
        1
    } else {
        2
    }
}

impl GridRegion {
    pub fn new(index: u8) -> Option<Self> {
        (index < 9).then_some(Self(index))
    }

    pub fn all() -> impl Iterator<Item = GridRegion> {
        (0..9).map(GridRegion)
    }

    pub fn index(self) -> u8 {
        self.0
    }

    pub fn name(self) -> &'static str {
        REGION_NAMES[usize::from(self.0)]
    }

    /// Half-open pixel bounds, split at `dim / 3` and `2 * dim / 3` (floor).
    pub fn bounds(self, g: ImageGeometry) -> HBox {
        let xs = split_points(g.width);
        let ys = split_points(g.height);
        let (r, c) = (usize::from(self.0 / 3), usize::from(self.0 % 3));
        HBox {
            x1: f64::from(xs[c]),
            y1: f64::from(ys[r]),
            x2: f64::from(xs[c + 1]),
            y2: f64::from(ys[r + 1]),
        }
    }

    /// Region containing `p`; points on the far image edge fall in the last band.
    pub fn of_point(p: Point2D, g: ImageGeometry) -> Self {
        Self(band(p.y, g.height) * 3 + band(p.x, g.width))
    }
}
