//! Quadrilateral, horizontal and oriented boxes.
//!
//! All coordinates are pixels in image space with the y axis pointing down.
//! A quad is canonical when its vertices run clockwise on screen (positive
//! shoelace sum in y-down coordinates) and vertex 0 is the top-most vertex,
//! ties broken by the left-most one.

use std::cmp::Ordering;
use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Shoelace areas below this value (px²) are treated as degenerate.
pub const AREA_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("quadrilateral has zero area (|area| = {0:e} px²)")]
    ZeroAreaQuad(f64),
    #[error("quadrilateral is not convex")]
    NonConvexQuad,
    #[error("non-finite coordinate")]
    NonFinite,
    #[error("invalid horizontal box ({x1}, {y1}, {x2}, {y2})")]
    InvalidHBox { x1: f64, y1: f64, x2: f64, y2: f64 },
    #[error("invalid oriented box: {0}")]
    InvalidOBox(String),
}

/// What to do with a degenerate (zero-area) quad.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DegeneratePolicy {
    /// Skip the annotation and log a warning.
    #[default]
    DropWithWarning,
    /// Propagate [`GeometryError::ZeroAreaQuad`].
    HardError,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2D {
    pub x: f64,
    pub y: f64,
}

impl Point2D {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    fn sub(self, o: Point2D) -> Point2D {
        Point2D::new(self.x - o.x, self.y - o.y)
    }

    fn cross(self, o: Point2D) -> f64 {
        self.x * o.y - self.y * o.x
    }

    /// Total order used to pick the start vertex: smaller y first, then smaller x.
    fn start_order(&self, o: &Point2D) -> Ordering {
        self.y.total_cmp(&o.y).then(self.x.total_cmp(&o.x))
    }
}

/// Four vertices in storage order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 8]", into = "[f64; 8]")]
pub struct QuadBox {
    pub vertices: [Point2D; 4],
}

impl From<[f64; 8]> for QuadBox {
    fn from(c: [f64; 8]) -> Self {
        QuadBox::from_coords(c)
    }
}

impl From<QuadBox> for [f64; 8] {
    fn from(q: QuadBox) -> Self {
        q.coords()
    }
}

impl QuadBox {
    pub const fn new(vertices: [Point2D; 4]) -> Self {
        Self { vertices }
    }

    /// Builds a quad from `[x1, y1, x2, y2, x3, y3, x4, y4]`.
    pub fn from_coords(c: [f64; 8]) -> Self {
        Self {
            vertices: [
                Point2D::new(c[0], c[1]),
                Point2D::new(c[2], c[3]),
                Point2D::new(c[4], c[5]),
                Point2D::new(c[6], c[7]),
            ],
        }
    }

    pub fn coords(&self) -> [f64; 8] {
        let v = &self.vertices;
        [v[0].x, v[0].y, v[1].x, v[1].y, v[2].x, v[2].y, v[3].x, v[3].y]
    }

    /// Axis-aligned quad covering `hbox`, already canonical.
    pub fn from_hbox(h: &HBox) -> Self {
        Self::from_coords([h.x1, h.y1, h.x2, h.y1, h.x2, h.y2, h.x1, h.y2])
    }

    pub fn is_finite(&self) -> bool {
        self.vertices.iter().all(Point2D::is_finite)
    }

    /// Shoelace sum divided by two. Positive means clockwise on screen.
    pub fn signed_area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    pub fn area(&self) -> f64 {
        quad_area(self)
    }

    pub fn is_canonical(&self) -> bool {
        canonicalize_quad(self).map(|c| c == *self).unwrap_or(false)
    }

    /// Convex in either orientation, allowing collinear vertices.
    pub fn is_convex(&self) -> bool {
        let v = &self.vertices;
        let mut sign = 0.0_f64;
        for i in 0..4 {
            let a = v[i];
            let b = v[(i + 1) % 4];
            let c = v[(i + 2) % 4];
            let z = b.sub(a).cross(c.sub(b));
            if z.abs() <= AREA_EPS {
                continue;
            }
            if sign == 0.0 {
                sign = z.signum();
            } else if z.signum() != sign {
                return false;
            }
        }
        true
    }

    /// Vertex average.
    pub fn centroid(&self) -> Point2D {
        let (sx, sy) = self
            .vertices
            .iter()
            .fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
        Point2D::new(sx / 4.0, sy / 4.0)
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        let mut out = *self;
        for p in &mut out.vertices {
            p.x += dx;
            p.y += dy;
        }
        out
    }

    pub fn scale(&self, sx: f64, sy: f64) -> Self {
        let mut out = *self;
        for p in &mut out.vertices {
            p.x *= sx;
            p.y *= sy;
        }
        out
    }
}

/// Axis-aligned box `[x1, y1, x2, y2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct HBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl TryFrom<[f64; 4]> for HBox {
    type Error = GeometryError;

    fn try_from(c: [f64; 4]) -> Result<Self, Self::Error> {
        HBox::new(c[0], c[1], c[2], c[3])
    }
}

impl From<HBox> for [f64; 4] {
    fn from(h: HBox) -> Self {
        [h.x1, h.y1, h.x2, h.y2]
    }
}

impl HBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self, GeometryError> {
        if ![x1, y1, x2, y2].iter().all(|v| v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        if x1 > x2 || y1 > y2 {
            return Err(GeometryError::InvalidHBox { x1, y1, x2, y2 });
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Plain interval IoU. Zero when the union is empty.
    pub fn iou(&self, o: &HBox) -> f64 {
        let iw = (self.x2.min(o.x2) - self.x1.max(o.x1)).max(0.0);
        let ih = (self.y2.min(o.y2) - self.y1.max(o.y1)).max(0.0);
        let inter = iw * ih;
        let union = self.area() + o.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            (inter / union).clamp(0.0, 1.0)
        }
    }

    /// Clamps the box into `[0, width] x [0, height]`.
    pub fn clamp_to(&self, width: f64, height: f64) -> HBox {
        HBox {
            x1: self.x1.clamp(0.0, width),
            y1: self.y1.clamp(0.0, height),
            x2: self.x2.clamp(0.0, width),
            y2: self.y2.clamp(0.0, height),
        }
    }

    pub fn contains_box(&self, o: &HBox) -> bool {
        o.x1 >= self.x1 && o.y1 >= self.y1 && o.x2 <= self.x2 && o.y2 <= self.y2
    }
}

/// Rotated rectangle, long-edge convention: `w >= h`, angle in `[-pi/2, pi/2)`.
///
/// The angle rotates the `w` axis from +x towards +y (clockwise on screen).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
    pub angle: f64,
}

impl OBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64, angle: f64) -> Result<Self, GeometryError> {
        if ![cx, cy, w, h, angle].iter().all(|v| v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        if w <= 0.0 || h <= 0.0 {
            return Err(GeometryError::InvalidOBox(format!("non-positive size {w} x {h}")));
        }
        if !(-FRAC_PI_2..FRAC_PI_2).contains(&angle) {
            return Err(GeometryError::InvalidOBox(format!(
                "angle {angle} outside [-pi/2, pi/2)"
            )));
        }
        Ok(Self { cx, cy, w, h, angle })
    }

    /// Brings an arbitrary `(w, h, angle)` triple into the long-edge range.
    pub fn normalized(cx: f64, cy: f64, w: f64, h: f64, angle: f64) -> Result<Self, GeometryError> {
        let (mut w, mut h, mut angle) = (w, h, angle);
        if h > w {
            std::mem::swap(&mut w, &mut h);
            angle += FRAC_PI_2;
        }
        angle = (angle + FRAC_PI_2).rem_euclid(std::f64::consts::PI) - FRAC_PI_2;
        if angle >= FRAC_PI_2 {
            angle -= std::f64::consts::PI;
        }
        Self::new(cx, cy, w, h, angle)
    }
}

/// Ordered list of distinct category names.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct CategorySet {
    names: Vec<String>,
}

impl TryFrom<Vec<String>> for CategorySet {
    type Error = String;

    fn try_from(names: Vec<String>) -> Result<Self, Self::Error> {
        CategorySet::new(names)
    }
}

impl From<CategorySet> for Vec<String> {
    fn from(c: CategorySet) -> Self {
        c.names
    }
}

impl CategorySet {
    pub fn new<I, S>(names: I) -> Result<Self, String>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        let mut seen = std::collections::BTreeSet::new();
        for n in &names {
            if !seen.insert(n.as_str()) {
                return Err(format!("duplicate category {n:?}"));
            }
        }
        Ok(Self { names })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn contains(&self, name: &str) -> bool {
        self.names.iter().any(|n| n == name)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn sorted(&self) -> Vec<&str> {
        let mut v: Vec<&str> = self.names.iter().map(String::as_str).collect();
        v.sort_unstable();
        v
    }
}

/// A category name plus a quadrilateral footprint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDetection {
    #[serde(rename = "label")]
    pub category: String,
    #[serde(rename = "poly")]
    pub quad: QuadBox,
}

impl LabeledDetection {
    pub fn new(category: impl Into<String>, quad: QuadBox) -> Self {
        Self {
            category: category.into(),
            quad,
        }
    }
}

fn signed_area(v: &[Point2D]) -> f64 {
    let n = v.len();
    let mut s = 0.0;
    for i in 0..n {
        let a = v[i];
        let b = v[(i + 1) % n];
        s += a.x * b.y - b.x * a.y;
    }
    s / 2.0
}

/// Reorders `q` clockwise (y down) starting from the top-most, then left-most vertex.
pub fn canonicalize_quad(q: &QuadBox) -> Result<QuadBox, GeometryError> {
    if !q.is_finite() {
        return Err(GeometryError::NonFinite);
    }
    let area = q.signed_area();
    if area.abs() < AREA_EPS {
        return Err(GeometryError::ZeroAreaQuad(area.abs()));
    }
    let mut v = q.vertices;
    if area < 0.0 {
        v.reverse();
    }
    let start = (1..4).fold(0, |best, i| {
        if v[i].start_order(&v[best]) == Ordering::Less {
            i
        } else {
            best
        }
    });
    v.rotate_left(start);
    Ok(QuadBox::new(v))
}

pub fn quad_area(q: &QuadBox) -> f64 {
    q.signed_area().abs()
}

/// Result of an IoU computation that may have substituted convex hulls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IouOutcome {
    pub iou: f64,
    /// Set when either input was non-convex and replaced by its hull.
    pub hull_substituted: bool,
}

/// IoU of two quads by convex polygon clipping.
pub fn quad_iou(a: &QuadBox, b: &QuadBox) -> Result<f64, GeometryError> {
    quad_iou_detailed(a, b).map(|o| o.iou)
}

pub fn quad_iou_detailed(a: &QuadBox, b: &QuadBox) -> Result<IouOutcome, GeometryError> {
    let (pa, hull_a) = convex_ccw(a)?;
    let (pb, hull_b) = convex_ccw(b)?;
    // Fixed operand order keeps the result bit-identical under swapping.
    let (first, second) = if cmp_polys(&pa, &pb) == Ordering::Greater {
        (&pb, &pa)
    } else {
        (&pa, &pb)
    };
    let area_a = signed_area(first);
    let area_b = signed_area(second);
    let inter = signed_area(&clip_convex(first, second)).max(0.0);
    let union = area_a + area_b - inter;
    let iou = if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    };
    Ok(IouOutcome {
        iou,
        hull_substituted: hull_a || hull_b,
    })
}

fn cmp_polys(a: &[Point2D], b: &[Point2D]) -> Ordering {
    for (p, q) in a.iter().zip(b) {
        let o = p.x.total_cmp(&q.x).then(p.y.total_cmp(&q.y));
        if o != Ordering::Equal {
            return o;
        }
    }
    a.len().cmp(&b.len())
}

/// Canonical vertex list with positive signed area; non-convex input becomes its hull.
fn convex_ccw(q: &QuadBox) -> Result<(Vec<Point2D>, bool), GeometryError> {
    let c = canonicalize_quad(q)?;
    if c.is_convex() {
        return Ok((c.vertices.to_vec(), false));
    }
    let hull = convex_hull(&c.vertices);
    let area = signed_area(&hull);
    if area < AREA_EPS {
        return Err(GeometryError::ZeroAreaQuad(area));
    }
    Ok((hull, true))
}

/// Andrew's monotone chain. Returns vertices with positive signed area.
pub fn convex_hull(points: &[Point2D]) -> Vec<Point2D> {
    let mut pts: Vec<Point2D> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Point2D> = Vec::with_capacity(pts.len() * 2);
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Point2D>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 {
                let a = hull[hull.len() - 2];
                let b = hull[hull.len() - 1];
                if b.sub(a).cross(p.sub(b)) <= 0.0 {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// Sutherland-Hodgman clipping of convex `subject` by convex `clip`,
/// both with positive signed area.
pub(crate) fn clip_convex(subject: &[Point2D], clip: &[Point2D]) -> Vec<Point2D> {
    let mut output: Vec<Point2D> = subject.to_vec();
    let n = clip.len();
    for i in 0..n {
        if output.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % n];
        let edge = b.sub(a);
        let side = |p: Point2D| edge.cross(p.sub(a));
        let input = std::mem::take(&mut output);
        let m = input.len();
        for j in 0..m {
            let cur = input[j];
            let prev = input[(j + m - 1) % m];
            let sc = side(cur);
            let sp = side(prev);
            if sc >= 0.0 {
                if sp < 0.0 {
                    output.push(intersect(prev, cur, sp, sc));
                }
                output.push(cur);
            } else if sp >= 0.0 {
                output.push(intersect(prev, cur, sp, sc));
            }
        }
    }
    output
}

fn intersect(p: Point2D, q: Point2D, sp: f64, sq: f64) -> Point2D {
    let t = sp / (sp - sq);
    Point2D::new(p.x + t * (q.x - p.x), p.y + t * (q.y - p.y))
}

/// Minimal axis-aligned box containing every vertex.
pub fn hbox_envelope(q: &QuadBox) -> HBox {
    let v = &q.vertices;
    let (mut x1, mut y1, mut x2, mut y2) = (v[0].x, v[0].y, v[0].x, v[0].y);
    for p in &v[1..] {
        x1 = x1.min(p.x);
        y1 = y1.min(p.y);
        x2 = x2.max(p.x);
        y2 = y2.max(p.y);
    }
    HBox { x1, y1, x2, y2 }
}

pub fn obox_to_quad(o: &OBox) -> QuadBox {
    let (sin, cos) = o.angle.sin_cos();
    let (hw, hh) = (o.w / 2.0, o.h / 2.0);
    let corner = |dx: f64, dy: f64| Point2D::new(o.cx + dx * cos - dy * sin, o.cy + dx * sin + dy * cos);
    let q = QuadBox::new([corner(-hw, -hh), corner(hw, -hh), corner(hw, hh), corner(-hw, hh)]);
    // w, h > 0 so the rectangle always has positive area
    canonicalize_quad(&q).unwrap_or(q)
}

/// Multiplies every coordinate by `(sx, sy)`.
pub fn scale_detections(dets: &[LabeledDetection], sx: f64, sy: f64) -> Vec<LabeledDetection> {
    dets.iter()
        .map(|d| {
            let scaled = d.quad.scale(sx, sy);
            let quad = if sx == sy {
                scaled
            } else {
                canonicalize_quad(&scaled).unwrap_or(scaled)
            };
            LabeledDetection {
                category: d.category.clone(),
                quad,
            }
        })
        .collect()
}

/// Minimum-area enclosing rectangle of a point set (rotating calipers over hull edges).
pub fn min_area_rect(points: &[Point2D]) -> Option<QuadBox> {
    let hull = convex_hull(points);
    if hull.len() < 3 {
        return None;
    }
    let mut best: Option<(f64, QuadBox)> = None;
    let n = hull.len();
    for i in 0..n {
        let a = hull[i];
        let b = hull[(i + 1) % n];
        let e = b.sub(a);
        let len = e.x.hypot(e.y);
        if len == 0.0 {
            continue;
        }
        let u = Point2D::new(e.x / len, e.y / len);
        let nrm = Point2D::new(-u.y, u.x);
        let (mut umin, mut umax, mut nmin, mut nmax) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for p in &hull {
            let d = p.sub(a);
            let pu = d.x * u.x + d.y * u.y;
            let pn = d.x * nrm.x + d.y * nrm.y;
            umin = umin.min(pu);
            umax = umax.max(pu);
            nmin = nmin.min(pn);
            nmax = nmax.max(pn);
        }
        let area = (umax - umin) * (nmax - nmin);
        if best.as_ref().is_none_or(|(ba, _)| area < *ba) {
            let at = |s: f64, t: f64| Point2D::new(a.x + u.x * s + nrm.x * t, a.y + u.y * s + nrm.y * t);
            let q = QuadBox::new([at(umin, nmin), at(umax, nmin), at(umax, nmax), at(umin, nmax)]);
            best = Some((area, q));
        }
    }
    best.and_then(|(_, q)| canonicalize_quad(&q).ok())
}
