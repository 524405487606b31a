//! Text formats for model responses.
//!
//! Detection responses come in two modes. Plain:
//!
//! ```text
//! response  = "There is none." | block , { "\n" , block } ;
//! block     = category , ": " , box , { "; " , box } ;
//! box       = "(" , int , 7 * ( "," , int ) , ")" ;
//! ```
//!
//! Json: one array of `{"label": <category>, "poly": [x1,y1,...,x4,y4]}`
//! objects with no insignificant whitespace.
//!
//! Categories are emitted in ascending byte order; within a category, boxes
//! are ordered by their start vertex `(y, x)`. Coordinates are integers,
//! rounded half-up.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{canonicalize_quad, CategorySet, HBox, LabeledDetection, QuadBox};

pub const NONE_MARKER: &str = "There is none.";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodecError {
    #[error("detections are not in canonical response order at index {index}")]
    UncanonicalInput { index: usize },
    #[error("negative coordinate {0} cannot be rendered")]
    NegativeCoordinate(f64),
    #[error("strict parse failed: {0}")]
    StrictParseError(String),
    #[error("malformed box: {0}")]
    MalformedBox(String),
    #[error("no option letter found")]
    NoChoiceFound,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResponseMode {
    #[default]
    Plain,
    Json,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DetectionResponse {
    pub detections: Vec<LabeledDetection>,
    pub empty_marker: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticKind {
    /// Fragment that looked like a box or block but did not parse.
    Malformed,
    /// Parsed, but the category is not in the active set.
    UnknownCategory,
    /// Parsed, but the box has zero area.
    DegenerateBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub fragment: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParsedDetections {
    pub response: DetectionResponse,
    pub mode: ResponseMode,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Debug, Clone, Default)]
pub struct ParseOptions<'a> {
    pub mode_hint: Option<ResponseMode>,
    pub categories: Option<&'a CategorySet>,
    /// Turn any diagnostic into [`CodecError::StrictParseError`].
    pub strict: bool,
}

/// Half-up rounding to the integer grid used in responses.
pub fn round_coord(v: f64) -> f64 {
    (v + 0.5).floor()
}

fn int_coords(q: &QuadBox) -> Result<[i64; 8], CodecError> {
    let mut out = [0i64; 8];
    for (o, c) in out.iter_mut().zip(q.coords()) {
        let r = round_coord(c);
        if r < 0.0 {
            return Err(CodecError::NegativeCoordinate(c));
        }
        *o = r as i64;
    }
    Ok(out)
}

fn response_order(a: &LabeledDetection, b: &LabeledDetection) -> Ordering {
    let start = |d: &LabeledDetection| {
        let v = d.quad.vertices[0];
        (round_coord(v.y), round_coord(v.x))
    };
    let (ay, ax) = start(a);
    let (by, bx) = start(b);
    a.category
        .cmp(&b.category)
        .then(ay.total_cmp(&by))
        .then(ax.total_cmp(&bx))
}

/// Rounds, canonicalizes and sorts detections into response order.
/// Boxes that become degenerate on the integer grid are dropped.
pub fn canonical_response(dets: &[LabeledDetection]) -> Vec<LabeledDetection> {
    let mut out: Vec<LabeledDetection> = dets
        .iter()
        .filter_map(|d| {
            let rounded = QuadBox::from_coords(d.quad.coords().map(round_coord));
            match canonicalize_quad(&rounded) {
                Ok(quad) => Some(LabeledDetection {
                    category: d.category.clone(),
                    quad,
                }),
                Err(e) => {
                    log::warn!("dropping {} box from response: {e}", d.category);
                    None
                }
            }
        })
        .collect();
    out.sort_by(response_order);
    out
}

#[derive(Serialize, Deserialize)]
struct JsonDetection<'a> {
    #[serde(borrow)]
    label: std::borrow::Cow<'a, str>,
    poly: [i64; 8],
}

/// Renders detections that are already in response order.
pub fn render_detections(dets: &[LabeledDetection], mode: ResponseMode) -> Result<String, CodecError> {
    if dets.is_empty() {
        return Ok(NONE_MARKER.to_string());
    }
    for (i, w) in dets.windows(2).enumerate() {
        if response_order(&w[0], &w[1]) == Ordering::Greater {
            return Err(CodecError::UncanonicalInput { index: i + 1 });
        }
    }
    let coords: Vec<[i64; 8]> = dets.iter().map(|d| int_coords(&d.quad)).collect::<Result<_, _>>()?;
    match mode {
        ResponseMode::Json => {
            let items: Vec<JsonDetection> = dets
                .iter()
                .zip(&coords)
                .map(|(d, c)| JsonDetection {
                    label: d.category.as_str().into(),
                    poly: *c,
                })
                .collect();
            Ok(serde_json::to_string(&items).expect("serializing plain data"))
        }
        ResponseMode::Plain => {
            let mut out = String::new();
            let mut current: Option<&str> = None;
            for (d, c) in dets.iter().zip(&coords) {
                if current == Some(d.category.as_str()) {
                    out.push_str("; ");
                } else {
                    if current.is_some() {
                        out.push('\n');
                    }
                    out.push_str(&d.category);
                    out.push_str(": ");
                    current = Some(&d.category);
                }
                let _ = write!(
                    out,
                    "({},{},{},{},{},{},{},{})",
                    c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]
                );
            }
            Ok(out)
        }
    }
}

static FENCE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?s)```(?:json)?\s*(.*?)\s*```").unwrap());
static GROUP: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\(([^()]*)\)").unwrap());
static INT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^-?\d+$").unwrap());
static JSON_OBJECT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\{[^{}]*\}").unwrap());

fn is_none_marker(text: &str) -> bool {
    text.trim() == NONE_MARKER
}

fn detect_mode(text: &str) -> ResponseMode {
    let t = text.trim_start();
    if t.starts_with('[') || t.starts_with("```") {
        ResponseMode::Json
    } else {
        ResponseMode::Plain
    }
}

/// Extracts every well-formed `(category, 8 integers)` group from untrusted text.
pub fn parse_detections(text: &str, opts: &ParseOptions<'_>) -> Result<ParsedDetections, CodecError> {
    let mode = opts.mode_hint.unwrap_or_else(|| detect_mode(text));
    let mut parsed = ParsedDetections {
        mode,
        ..Default::default()
    };
    if is_none_marker(text) {
        parsed.response.empty_marker = true;
        return Ok(parsed);
    }
    let mut raw: Vec<(String, [i64; 8])> = Vec::new();
    match mode {
        ResponseMode::Plain => parse_plain(text, &mut raw, &mut parsed.diagnostics),
        ResponseMode::Json => parse_json(text, &mut raw, &mut parsed.diagnostics),
    }
    for (category, c) in raw {
        let fragment = || format!("{category}: {c:?}");
        if let Some(set) = opts.categories {
            if !set.contains(&category) {
                parsed.diagnostics.push(Diagnostic {
                    kind: DiagnosticKind::UnknownCategory,
                    fragment: fragment(),
                });
            }
        }
        let quad = QuadBox::from_coords(c.map(|v| v as f64));
        let quad = match canonicalize_quad(&quad) {
            Ok(q) => q,
            Err(_) => {
                parsed.diagnostics.push(Diagnostic {
                    kind: DiagnosticKind::DegenerateBox,
                    fragment: fragment(),
                });
                quad
            }
        };
        parsed.response.detections.push(LabeledDetection { category, quad });
    }
    parsed.response.detections.sort_by(response_order);
    if opts.strict && !parsed.diagnostics.is_empty() {
        let msg = parsed
            .diagnostics
            .iter()
            .map(|d| format!("{:?}: {}", d.kind, d.fragment))
            .collect::<Vec<_>>()
            .join("; ");
        return Err(CodecError::StrictParseError(msg));
    }
    Ok(parsed)
}

fn parse_ints(body: &str) -> Option<[i64; 8]> {
    let parts: Vec<&str> = body.split(',').map(str::trim).collect();
    if parts.len() != 8 || !parts.iter().all(|p| INT.is_match(p)) {
        return None;
    }
    let mut out = [0i64; 8];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p.parse().ok()?;
    }
    Some(out)
}

fn parse_plain(text: &str, out: &mut Vec<(String, [i64; 8])>, diags: &mut Vec<Diagnostic>) {
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let Some((category, rest)) = line.split_once(':') else {
            diags.push(Diagnostic {
                kind: DiagnosticKind::Malformed,
                fragment: line.to_string(),
            });
            continue;
        };
        let category = category.trim();
        let mut found = false;
        for cap in GROUP.captures_iter(rest) {
            found = true;
            match parse_ints(&cap[1]) {
                Some(c) if !category.is_empty() => out.push((category.to_string(), c)),
                _ => diags.push(Diagnostic {
                    kind: DiagnosticKind::Malformed,
                    fragment: format!("{category}: {}", &cap[0]),
                }),
            }
        }
        if !found {
            diags.push(Diagnostic {
                kind: DiagnosticKind::Malformed,
                fragment: line.to_string(),
            });
        }
    }
}

fn json_item(v: &serde_json::Value) -> Option<(String, [i64; 8])> {
    let obj = v.as_object()?;
    let label = obj.get("label")?.as_str()?.trim();
    let poly = obj.get("poly")?.as_array()?;
    if poly.len() != 8 || label.is_empty() {
        return None;
    }
    let mut c = [0i64; 8];
    for (o, p) in c.iter_mut().zip(poly) {
        *o = p.as_i64()?;
    }
    Some((label.to_string(), c))
}

fn parse_json(text: &str, out: &mut Vec<(String, [i64; 8])>, diags: &mut Vec<Diagnostic>) {
    let body = FENCE
        .captures(text)
        .map(|c| c.get(1).unwrap().as_str())
        .unwrap_or(text)
        .trim();
    let items: Vec<serde_json::Value> = match serde_json::from_str::<Vec<serde_json::Value>>(body) {
        Ok(items) => items,
        // truncated or otherwise broken array: salvage the flat objects
        Err(_) => {
            let mut salvaged = Vec::new();
            for m in JSON_OBJECT.find_iter(body) {
                match serde_json::from_str(m.as_str()) {
                    Ok(v) => salvaged.push(v),
                    Err(_) => diags.push(Diagnostic {
                        kind: DiagnosticKind::Malformed,
                        fragment: m.as_str().to_string(),
                    }),
                }
            }
            if salvaged.is_empty() && !body.is_empty() {
                diags.push(Diagnostic {
                    kind: DiagnosticKind::Malformed,
                    fragment: body.chars().take(80).collect(),
                });
            }
            salvaged
        }
    };
    for v in &items {
        match json_item(v) {
            Some(item) => out.push(item),
            None => diags.push(Diagnostic {
                kind: DiagnosticKind::Malformed,
                fragment: v.to_string(),
            }),
        }
    }
}

/// Renders a grounding box as `[x1, y1, x2, y2]`.
pub fn render_hbox(b: &HBox) -> String {
    format!(
        "[{}, {}, {}, {}]",
        round_coord(b.x1) as i64,
        round_coord(b.y1) as i64,
        round_coord(b.x2) as i64,
        round_coord(b.y2) as i64
    )
}

static HBOX: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\[\s*(-?\d+)\s*,\s*(-?\d+)\s*,\s*(-?\d+)\s*,\s*(-?\d+)\s*\]").unwrap());

/// Parses the first `[x1, y1, x2, y2]` in `text`, requiring each side to be at
/// least one pixel.
pub fn parse_hbox(text: &str) -> Result<HBox, CodecError> {
    parse_hbox_min(text, 1.0)
}

pub fn parse_hbox_min(text: &str, min_side: f64) -> Result<HBox, CodecError> {
    let cap = HBOX
        .captures(text)
        .ok_or_else(|| CodecError::MalformedBox(text.chars().take(80).collect()))?;
    let v: Vec<f64> = (1..=4)
        .map(|i| cap[i].parse::<i64>().map(|v| v as f64))
        .collect::<Result<_, _>>()
        .map_err(|e| CodecError::MalformedBox(e.to_string()))?;
    let b = HBox::new(v[0], v[1], v[2], v[3]).map_err(|e| CodecError::MalformedBox(e.to_string()))?;
    if b.width() < min_side || b.height() < min_side {
        return Err(CodecError::MalformedBox(format!(
            "{} is smaller than {min_side} px",
            &cap[0]
        )));
    }
    Ok(b)
}

/// Multiple-choice option letter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Choice {
    A,
    B,
    C,
    D,
}

impl Choice {
    pub const ALL: [Choice; 4] = [Choice::A, Choice::B, Choice::C, Choice::D];

    pub fn letter(self) -> char {
        match self {
            Choice::A => 'A',
            Choice::B => 'B',
            Choice::C => 'C',
            Choice::D => 'D',
        }
    }

    pub fn from_letter(c: char) -> Option<Self> {
        match c {
            'A' => Some(Choice::A),
            'B' => Some(Choice::B),
            'C' => Some(Choice::C),
            'D' => Some(Choice::D),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl std::fmt::Display for Choice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.letter())
    }
}

// Tried in order; the first pattern with a match wins.
static CHOICE_PATTERNS: LazyLock<Vec<Regex>> = LazyLock::new(|| {
    [
        r"^\s*\(?([A-Da-d])\)?\s*[.:)]?\s*$",
        r"(?i:answer|choice|option)\s*(?::|=|\bis\b)\s*[\(\[]?([a-d])[\)\]]?\s*[.)]?\s*$",
        r"(?i:answer|choice|option)(?:\s+(?i:is|would\s+be|should\s+be))?\s*(?::|=|-)?\s*(?i:option\s+)?[\(\[]?([A-D])\b",
        r"[\(\[]([A-D])[\)\]]",
        r"(?m)^\s*([A-D])\s*[.:)]",
        r"\b([A-D])\s*[.:)](?:\s|$)",
        r"\b([B-D])\b",
        r"\b(A)\b(?:\s*$|\s+[^a-z\s])",
    ]
    .iter()
    .map(|p| Regex::new(p).unwrap())
    .collect()
});

/// Extracts the chosen option letter from a free-form answer.
pub fn parse_choice(text: &str) -> Result<Choice, CodecError> {
    for re in CHOICE_PATTERNS.iter() {
        if let Some(cap) = re.captures(text) {
            let c = cap[1]
                .chars()
                .next()
                .and_then(|c| Choice::from_letter(c.to_ascii_uppercase()));
            if let Some(c) = c {
                return Ok(c);
            }
        }
    }
    Err(CodecError::NoChoiceFound)
}
