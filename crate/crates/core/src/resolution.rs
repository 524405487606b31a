//! Dynamic-resolution planning.
//!
//! An image of `H x W` pixels is wrapped by the tightest patch-aligned shape
//! `(ceil(H / L) * L, ceil(W / L) * L)`. Images whose wrapped area falls
//! outside `[min_pixels, max_pixels]` are first rescaled by a uniform factor.
//!
//! The wrapped area is a step function of the scale factor `s`, constant on
//! the half-open intervals between breakpoints `k * L / H` and `k * L / W`.
//! The planner therefore only evaluates breakpoints, with exact integer
//! arithmetic.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{LabeledDetection, QuadBox};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ResolutionError {
    #[error("invalid image geometry {height}x{width}")]
    InvalidGeometry { height: u32, width: u32 },
    #[error("invalid patch spec: {0}")]
    InvalidPatchSpec(String),
    #[error("no patch-aligned shape of {height}x{width} fits within [{min_pixels}, {max_pixels}] px")]
    Unsatisfiable {
        height: u32,
        width: u32,
        min_pixels: u64,
        max_pixels: u64,
    },
    #[error("coordinate {value} exceeds bound {bound} by more than 1 px")]
    OutOfBounds { value: f64, bound: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageGeometry {
    pub height: u32,
    pub width: u32,
}

impl ImageGeometry {
    pub fn new(height: u32, width: u32) -> Result<Self, ResolutionError> {
        if height == 0 || width == 0 {
            return Err(ResolutionError::InvalidGeometry { height, width });
        }
        Ok(Self { height, width })
    }

    pub fn area(&self) -> u64 {
        u64::from(self.height) * u64::from(self.width)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PatchSpec {
    /// Pixels per patch edge.
    pub patch: u32,
    pub min_pixels: u64,
    pub max_pixels: u64,
}

impl Default for PatchSpec {
    fn default() -> Self {
        Self {
            patch: 28,
            min_pixels: 224 * 224,
            max_pixels: 1008 * 1008,
        }
    }
}

impl PatchSpec {
    pub fn validate(&self) -> Result<(), ResolutionError> {
        if self.patch == 0 {
            return Err(ResolutionError::InvalidPatchSpec("patch must be >= 1".into()));
        }
        if self.min_pixels == 0 || self.min_pixels > self.max_pixels {
            return Err(ResolutionError::InvalidPatchSpec(format!(
                "need 0 < min_pixels ({}) <= max_pixels ({})",
                self.min_pixels, self.max_pixels
            )));
        }
        Ok(())
    }
}

/// Source and target geometry plus the per-axis scale `target / source`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResizePlan {
    pub source: ImageGeometry,
    pub target: ImageGeometry,
    pub sx: f64,
    pub sy: f64,
}

impl ResizePlan {
    pub fn identity(g: ImageGeometry) -> Self {
        Self::between(g, g)
    }

    pub fn between(source: ImageGeometry, target: ImageGeometry) -> Self {
        Self {
            source,
            target,
            sx: f64::from(target.width) / f64::from(source.width),
            sy: f64::from(target.height) / f64::from(source.height),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScaleClass {
    Small,
    Regular,
    #[serde(rename = "UHR")]
    Uhr,
}

/// How the planner picks the target area.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlanMode {
    /// Tightest wrap, rescaling only when out of bounds.
    #[default]
    Tight,
    /// Largest patch-aligned shape within `max_pixels`, up- or downscaling.
    Max,
}

/// Scale factor `num / den`, with `den` a pixel dimension.
#[derive(Debug, Clone, Copy)]
struct Breakpoint {
    num: u64,
    den: u64,
}

impl Breakpoint {
    fn cmp(&self, o: &Breakpoint) -> Ordering {
        (u128::from(self.num) * u128::from(o.den)).cmp(&(u128::from(o.num) * u128::from(self.den)))
    }

    /// Patch count along an axis of `dim` pixels at this scale.
    fn patches(&self, dim: u32, patch: u32) -> u64 {
        let n = u128::from(dim) * u128::from(self.num);
        let d = u128::from(self.den) * u128::from(patch);
        n.div_ceil(d) as u64
    }
}

fn wrap(dim: u32, patch: u32) -> u64 {
    u64::from(dim).div_ceil(u64::from(patch)) * u64::from(patch)
}

fn to_u32(v: u64) -> Option<u32> {
    u32::try_from(v).ok()
}

/// Breakpoints `k * L / dim` for both axes with scale at most `s_hi`, sorted.
fn breakpoints(g: ImageGeometry, patch: u32, s_hi: f64) -> Vec<Breakpoint> {
    let mut out = Vec::new();
    for dim in [g.height, g.width] {
        let kmax = (f64::from(dim) * s_hi / f64::from(patch)).ceil().max(1.0) as u64 + 1;
        out.extend((1..=kmax).map(|k| Breakpoint {
            num: k * u64::from(patch),
            den: u64::from(dim),
        }));
    }
    out.sort_by(Breakpoint::cmp);
    out.dedup_by(|a, b| a.cmp(b) == Ordering::Equal);
    out
}

fn shape_at(g: ImageGeometry, patch: u32, b: &Breakpoint) -> (u64, u64) {
    (
        b.patches(g.height, patch) * u64::from(patch),
        b.patches(g.width, patch) * u64::from(patch),
    )
}

fn finish(g: ImageGeometry, p: &PatchSpec, (h, w): (u64, u64)) -> Result<ResizePlan, ResolutionError> {
    let unsat = || ResolutionError::Unsatisfiable {
        height: g.height,
        width: g.width,
        min_pixels: p.min_pixels,
        max_pixels: p.max_pixels,
    };
    let area = h.checked_mul(w).ok_or_else(unsat)?;
    if area < p.min_pixels || area > p.max_pixels {
        return Err(unsat());
    }
    let target = ImageGeometry {
        height: to_u32(h).ok_or_else(unsat)?,
        width: to_u32(w).ok_or_else(unsat)?,
    };
    Ok(ResizePlan::between(g, target))
}

/// Largest-scale shape whose area stays within `max_pixels`.
fn largest_fit(g: ImageGeometry, p: &PatchSpec) -> Result<ResizePlan, ResolutionError> {
    // Beyond this scale the unwrapped area alone exceeds max_pixels.
    let s_hi = (p.max_pixels as f64 / g.area() as f64).sqrt() + 1e-9;
    let best = breakpoints(g, p.patch, s_hi)
        .iter()
        .map(|b| shape_at(g, p.patch, b))
        .take_while(|(h, w)| h * w <= p.max_pixels)
        .last();
    match best {
        Some(shape) => finish(g, p, shape),
        None => finish(g, p, (u64::from(p.patch), u64::from(p.patch))),
    }
}

/// Smallest-scale shape whose area reaches `min_pixels`.
fn smallest_fill(g: ImageGeometry, p: &PatchSpec) -> Result<ResizePlan, ResolutionError> {
    let s_hi = (p.min_pixels as f64 / g.area() as f64).sqrt() + 1e-9;
    let bps = breakpoints(g, p.patch, s_hi.max(1.0));
    let shape = bps
        .iter()
        .map(|b| shape_at(g, p.patch, b))
        .find(|(h, w)| h * w >= p.min_pixels);
    match shape {
        Some(shape) => finish(g, p, shape),
        None => Err(ResolutionError::Unsatisfiable {
            height: g.height,
            width: g.width,
            min_pixels: p.min_pixels,
            max_pixels: p.max_pixels,
        }),
    }
}

/// Plans the model-input shape for an image.
pub fn smart_resize(g: ImageGeometry, p: &PatchSpec) -> Result<ResizePlan, ResolutionError> {
    plan_resize(g, p, PlanMode::Tight)
}

pub fn plan_resize(g: ImageGeometry, p: &PatchSpec, mode: PlanMode) -> Result<ResizePlan, ResolutionError> {
    ImageGeometry::new(g.height, g.width)?;
    p.validate()?;
    if mode == PlanMode::Max {
        return largest_fit(g, p);
    }
    let wrapped = (wrap(g.height, p.patch), wrap(g.width, p.patch));
    let area = wrapped.0 * wrapped.1;
    if area < p.min_pixels {
        smallest_fill(g, p)
    } else if area > p.max_pixels {
        largest_fit(g, p)
    } else {
        finish(g, p, wrapped)
    }
}

pub fn classify_scale(g: ImageGeometry, p: &PatchSpec) -> ScaleClass {
    let a = g.area();
    if a < p.min_pixels {
        ScaleClass::Small
    } else if a > p.max_pixels {
        ScaleClass::Uhr
    } else {
        ScaleClass::Regular
    }
}

fn map_quad(q: &QuadBox, fx: f64, fy: f64, bound_w: f64, bound_h: f64) -> Result<QuadBox, ResolutionError> {
    let mut out = q.scale(fx, fy);
    for p in &mut out.vertices {
        p.x = clamp_coord(p.x, bound_w)?;
        p.y = clamp_coord(p.y, bound_h)?;
    }
    Ok(out)
}

fn clamp_coord(v: f64, bound: f64) -> Result<f64, ResolutionError> {
    if v < -1.0 || v > bound + 1.0 || !v.is_finite() {
        return Err(ResolutionError::OutOfBounds { value: v, bound });
    }
    if v < 0.0 || v > bound {
        log::warn!("coordinate {v} clamped into [0, {bound}]");
        return Ok(v.clamp(0.0, bound));
    }
    Ok(v)
}

/// Native pixel frame to model-input frame.
pub fn to_model_space(det: &LabeledDetection, plan: &ResizePlan) -> Result<LabeledDetection, ResolutionError> {
    Ok(LabeledDetection {
        category: det.category.clone(),
        quad: map_quad(
            &det.quad,
            plan.sx,
            plan.sy,
            f64::from(plan.target.width),
            f64::from(plan.target.height),
        )?,
    })
}

/// Model-input frame back to native pixels.
pub fn from_model_space(det: &LabeledDetection, plan: &ResizePlan) -> Result<LabeledDetection, ResolutionError> {
    Ok(LabeledDetection {
        category: det.category.clone(),
        quad: map_quad(
            &det.quad,
            1.0 / plan.sx,
            1.0 / plan.sy,
            f64::from(plan.source.width),
            f64::from(plan.source.height),
        )?,
    })
}
