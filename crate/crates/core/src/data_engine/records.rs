//! Unified record types and their JSON forms.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::geometry::{
    canonicalize_quad, hbox_envelope, obox_to_quad, DegeneratePolicy, GeometryError, HBox, LabeledDetection, OBox,
    QuadBox,
};
use crate::resolution::ImageGeometry;

use super::DataError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Assistant,
    Tool,
}

/// Reference to an image, optionally a crop of it and/or resized.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRef {
    pub path: String,
    /// Integer crop `[x1, y1, x2, y2]` in native pixels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crop: Option<[u32; 4]>,
    /// Shape the (cropped) image is resized to before encoding.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resize: Option<ImageGeometry>,
}

impl ImageRef {
    pub fn new(path: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            crop: None,
            resize: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ContentPart {
    Text { text: String },
    Image { image: ImageRef },
}

impl ContentPart {
    pub fn text(t: impl Into<String>) -> Self {
        ContentPart::Text { text: t.into() }
    }

    pub fn image(r: ImageRef) -> Self {
        ContentPart::Image { image: r }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: Vec<ContentPart>,
    /// Whether the message contributes to the training loss.
    #[serde(default)]
    pub trainable: bool,
}

impl Message {
    pub fn user(content: Vec<ContentPart>) -> Self {
        Self {
            role: Role::User,
            content,
            trainable: false,
        }
    }

    pub fn tool(content: Vec<ContentPart>) -> Self {
        Self {
            role: Role::Tool,
            content,
            trainable: false,
        }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: vec![ContentPart::text(text)],
            trainable: true,
        }
    }

    /// Concatenated text parts.
    pub fn text(&self) -> String {
        self.content
            .iter()
            .filter_map(|p| match p {
                ContentPart::Text { text } => Some(text.as_str()),
                ContentPart::Image { .. } => None,
            })
            .collect::<Vec<_>>()
            .join("")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversationRecord {
    pub id: String,
    pub messages: Vec<Message>,
    /// Native geometry of every referenced image, keyed by path.
    #[serde(default)]
    pub images: BTreeMap<String, ImageGeometry>,
}

impl ConversationRecord {
    pub fn validate(&self) -> Result<(), DataError> {
        let fail = |msg: String| {
            Err(DataError::InvalidRecord {
                id: self.id.clone(),
                msg,
            })
        };
        let mut prev: Option<Role> = None;
        for (i, m) in self.messages.iter().enumerate() {
            if m.trainable && m.role != Role::Assistant {
                return fail(format!("message {i} is a trainable {:?} turn", m.role));
            }
            if m.role == Role::Assistant && prev == Some(Role::Assistant) {
                return fail(format!("consecutive assistant turns at message {i}"));
            }
            for part in &m.content {
                if let ContentPart::Image { image } = part {
                    let Some(g) = self.images.get(&image.path) else {
                        return fail(format!("unresolved image {:?}", image.path));
                    };
                    if let Some([x1, y1, x2, y2]) = image.crop {
                        if x1 >= x2 || y1 >= y2 || x2 > g.width || y2 > g.height {
                            return fail(format!("crop {:?} outside {}x{}", image.crop, g.height, g.width));
                        }
                    }
                }
            }
            prev = Some(m.role);
        }
        Ok(())
    }

    pub fn trainable_count(&self) -> usize {
        self.messages.iter().filter(|m| m.trainable).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub image: String,
    #[serde(flatten)]
    pub geometry: ImageGeometry,
    pub annotations: Vec<LabeledDetection>,
}

impl DetectionRecord {
    pub fn validate(&self) -> Result<(), DataError> {
        let (w, h) = (f64::from(self.geometry.width), f64::from(self.geometry.height));
        for a in &self.annotations {
            let c = canonicalize_quad(&a.quad).map_err(|e| DataError::InvalidRecord {
                id: self.image.clone(),
                msg: format!("{}: {e}", a.category),
            })?;
            if c != a.quad {
                return Err(DataError::InvalidRecord {
                    id: self.image.clone(),
                    msg: format!("{} box is not canonical", a.category),
                });
            }
            if a.quad
                .vertices
                .iter()
                .any(|p| p.x < 0.0 || p.y < 0.0 || p.x > w || p.y > h)
            {
                return Err(DataError::InvalidRecord {
                    id: self.image.clone(),
                    msg: format!(
                        "{} box outside {}x{}",
                        a.category, self.geometry.height, self.geometry.width
                    ),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingRecord {
    pub image: String,
    #[serde(flatten)]
    pub geometry: ImageGeometry,
    pub expression: String,
    #[serde(rename = "bbox")]
    pub target: HBox,
}

impl GroundingRecord {
    pub fn validate(&self) -> Result<(), DataError> {
        let frame = HBox {
            x1: 0.0,
            y1: 0.0,
            x2: f64::from(self.geometry.width),
            y2: f64::from(self.geometry.height),
        };
        if !frame.contains_box(&self.target) {
            return Err(DataError::InvalidRecord {
                id: self.image.clone(),
                msg: "grounding target outside the image".into(),
            });
        }
        Ok(())
    }
}

/// Any record a subset can hold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SourceRecord {
    Conversation(ConversationRecord),
    Detection(DetectionRecord),
    Grounding(GroundingRecord),
}

impl SourceRecord {
    pub fn id(&self) -> &str {
        match self {
            SourceRecord::Conversation(c) => &c.id,
            SourceRecord::Detection(d) => &d.image,
            SourceRecord::Grounding(g) => &g.image,
        }
    }
}

/// Box as found in heterogeneous source annotations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RawBox {
    #[serde(rename = "hbox")]
    HBox([f64; 4]),
    #[serde(rename = "obox")]
    OBox {
        cx: f64,
        cy: f64,
        w: f64,
        h: f64,
        angle: f64,
    },
    Quad([f64; 8]),
}

impl RawBox {
    pub fn to_quad(&self) -> Result<QuadBox, GeometryError> {
        let q = match *self {
            RawBox::HBox([x1, y1, x2, y2]) => QuadBox::from_hbox(&HBox::new(x1, y1, x2, y2)?),
            RawBox::OBox { cx, cy, w, h, angle } => obox_to_quad(&OBox::normalized(cx, cy, w, h, angle)?),
            RawBox::Quad(c) => QuadBox::from_coords(c),
        };
        canonicalize_quad(&q)
    }

    pub fn to_hbox(&self) -> Result<HBox, GeometryError> {
        match *self {
            RawBox::HBox([x1, y1, x2, y2]) => HBox::new(x1, y1, x2, y2),
            _ => Ok(hbox_envelope(&self.to_quad()?)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawAnnotation {
    pub label: String,
    #[serde(rename = "box")]
    pub bbox: RawBox,
}

/// Source record before box unification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "lowercase")]
pub enum RawRecord {
    Detection {
        image: String,
        height: u32,
        width: u32,
        annotations: Vec<RawAnnotation>,
    },
    Grounding {
        image: String,
        height: u32,
        width: u32,
        expression: String,
        #[serde(rename = "box")]
        bbox: RawBox,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum UnifiedRecord {
    Detection(DetectionRecord),
    Grounding(GroundingRecord),
}

fn geometry_of(image: &str, height: u32, width: u32) -> Result<ImageGeometry, DataError> {
    ImageGeometry::new(height, width).map_err(|e| DataError::InvalidRecord {
        id: image.to_string(),
        msg: e.to_string(),
    })
}

/// Brings every box to its task's representation: canonical quads for
/// detection, axis-aligned envelopes for grounding.
pub fn unify_boxes(raw: &RawRecord, policy: DegeneratePolicy) -> Result<UnifiedRecord, DataError> {
    match raw {
        RawRecord::Detection {
            image,
            height,
            width,
            annotations,
        } => {
            let geometry = geometry_of(image, *height, *width)?;
            let mut out = Vec::with_capacity(annotations.len());
            for a in annotations {
                match a.bbox.to_quad() {
                    Ok(quad) => out.push(LabeledDetection::new(a.label.clone(), quad)),
                    Err(e @ GeometryError::ZeroAreaQuad(_)) if policy == DegeneratePolicy::DropWithWarning => {
                        log::warn!("{image}: dropping {} annotation: {e}", a.label);
                    }
                    Err(e) => {
                        return Err(DataError::InvalidRecord {
                            id: image.clone(),
                            msg: format!("{}: {e}", a.label),
                        })
                    }
                }
            }
            Ok(UnifiedRecord::Detection(DetectionRecord {
                image: image.clone(),
                geometry,
                annotations: out,
            }))
        }
        RawRecord::Grounding {
            image,
            height,
            width,
            expression,
            bbox,
        } => {
            let geometry = geometry_of(image, *height, *width)?;
            let target = bbox.to_hbox().map_err(|e| DataError::InvalidRecord {
                id: image.clone(),
                msg: e.to_string(),
            })?;
            Ok(UnifiedRecord::Grounding(GroundingRecord {
                image: image.clone(),
                geometry,
                expression: expression.clone(),
                target,
            }))
        }
    }
}
