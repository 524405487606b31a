//! Overlapping window splits for large images, annotation clipping, and
//! score-free merging of per-window detections.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    canonicalize_quad, clip_convex, convex_hull, min_area_rect, quad_area, quad_iou, LabeledDetection, Point2D, QuadBox,
};
use crate::resolution::ImageGeometry;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TilingError {
    #[error("invalid tiling spec: length {length}, overlap {overlap}")]
    InvalidSpec { length: u32, overlap: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TilingSpec {
    pub length: u32,
    pub overlap: u32,
}

impl Default for TilingSpec {
    fn default() -> Self {
        Self {
            length: 512,
            overlap: 100,
        }
    }
}

impl TilingSpec {
    pub fn new(length: u32, overlap: u32) -> Result<Self, TilingError> {
        let s = Self { length, overlap };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), TilingError> {
        if self.length == 0 || self.overlap >= self.length {
            return Err(TilingError::InvalidSpec {
                length: self.length,
                overlap: self.overlap,
            });
        }
        Ok(())
    }

    pub fn stride(&self) -> u32 {
        self.length - self.overlap
    }
}

/// A window in the global frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileWindow {
    pub x0: u32,
    pub y0: u32,
    #[serde(rename = "width")]
    pub w: u32,
    #[serde(rename = "height")]
    pub h: u32,
}

impl TileWindow {
    pub fn full(g: ImageGeometry) -> Self {
        Self {
            x0: 0,
            y0: 0,
            w: g.width,
            h: g.height,
        }
    }

    fn polygon(&self) -> [Point2D; 4] {
        let (x0, y0) = (f64::from(self.x0), f64::from(self.y0));
        let (x1, y1) = (x0 + f64::from(self.w), y0 + f64::from(self.h));
        [
            Point2D::new(x0, y0),
            Point2D::new(x1, y0),
            Point2D::new(x1, y1),
            Point2D::new(x0, y1),
        ]
    }
}

/// Window start offsets along one axis.
pub fn axis_starts(dim: u32, spec: &TilingSpec) -> Vec<u32> {
    if dim <= spec.length {
        return vec![0];
    }
    let mut starts = Vec::new();
    let mut start = 0u32;
    loop {
        if start + spec.length >= dim {
            let last = dim - spec.length;
            if starts.last() != Some(&last) {
                starts.push(last);
            }
            break;
        }
        starts.push(start);
        start += spec.stride();
    }
    starts
}

/// Row-major windows covering the whole image.
pub fn plan_windows(g: ImageGeometry, spec: &TilingSpec) -> Vec<TileWindow> {
    let ys = axis_starts(g.height, spec);
    let xs = axis_starts(g.width, spec);
    let (w, h) = (g.width.min(spec.length), g.height.min(spec.length));
    ys.iter()
        .flat_map(|&y0| xs.iter().map(move |&x0| TileWindow { x0, y0, w, h }))
        .collect()
}

/// Window manifest entry for external croppers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowEntry {
    pub id: usize,
    #[serde(flatten)]
    pub window: TileWindow,
}

pub fn window_manifest(windows: &[TileWindow]) -> Vec<WindowEntry> {
    windows
        .iter()
        .enumerate()
        .map(|(id, &window)| WindowEntry { id, window })
        .collect()
}

/// Clips global-frame detections to `win` and returns the kept ones in the
/// window-local frame.
///
/// A detection is kept when at least `keep_ratio` of its area lies inside the
/// window. Partially clipped footprints that are no longer quadrilaterals are
/// refit with their minimum-area enclosing rectangle.
pub fn clip_annotations(dets: &[LabeledDetection], win: &TileWindow, keep_ratio: f64) -> Vec<LabeledDetection> {
    let rect = win.polygon();
    let (dx, dy) = (-f64::from(win.x0), -f64::from(win.y0));
    let (ww, wh) = (f64::from(win.w), f64::from(win.h));
    let mut out = Vec::new();
    for det in dets {
        let Ok(canon) = canonicalize_quad(&det.quad) else {
            log::warn!("skipping degenerate {} box while clipping", det.category);
            continue;
        };
        let area = quad_area(&canon);
        let subject = if canon.is_convex() {
            canon.vertices.to_vec()
        } else {
            convex_hull(&canon.vertices)
        };
        let clipped = clip_convex(&subject, &rect);
        let inside = polygon_area(&clipped);
        if inside / area < keep_ratio || inside <= 0.0 {
            continue;
        }
        let fitted = if clipped_is_whole(&subject, inside, area) {
            Some(canon)
        } else {
            refit(&clipped)
        };
        let Some(quad) = fitted else { continue };
        let mut local = quad.translate(dx, dy);
        for p in &mut local.vertices {
            p.x = p.x.clamp(0.0, ww);
            p.y = p.y.clamp(0.0, wh);
        }
        if let Ok(quad) = canonicalize_quad(&local) {
            out.push(LabeledDetection {
                category: det.category.clone(),
                quad,
            });
        }
    }
    out
}

fn clipped_is_whole(subject: &[Point2D], inside: f64, area: f64) -> bool {
    subject.len() == 4 && (area - inside).abs() <= 1e-9 * area.max(1.0)
}

fn refit(clipped: &[Point2D]) -> Option<QuadBox> {
    let mut pts: Vec<Point2D> = clipped.to_vec();
    pts.dedup_by(|a, b| (a.x - b.x).abs() < 1e-12 && (a.y - b.y).abs() < 1e-12);
    if pts.len() > 1 && pts.first() == pts.last() {
        pts.pop();
    }
    if pts.len() == 4 {
        return canonicalize_quad(&QuadBox::new([pts[0], pts[1], pts[2], pts[3]])).ok();
    }
    min_area_rect(&pts)
}

fn polygon_area(v: &[Point2D]) -> f64 {
    if v.len() < 3 {
        return 0.0;
    }
    let n = v.len();
    let s: f64 = (0..n)
        .map(|i| v[i].x * v[(i + 1) % n].y - v[(i + 1) % n].x * v[i].y)
        .sum();
    s.abs() / 2.0
}

/// Translates per-window detections to the global frame and suppresses
/// duplicates from window overlaps: a detection is dropped when a same-category
/// detection already kept from another window overlaps it with IoU >= `dedup_iou`.
/// Detections within one window are never merged with each other.
pub fn merge_windows(per_window: &[(TileWindow, Vec<LabeledDetection>)], dedup_iou: f64) -> Vec<LabeledDetection> {
    let mut kept: Vec<(usize, LabeledDetection)> = Vec::new();
    for (w, (win, dets)) in per_window.iter().enumerate() {
        let (dx, dy) = (f64::from(win.x0), f64::from(win.y0));
        for det in dets {
            let global = LabeledDetection {
                category: det.category.clone(),
                quad: det.quad.translate(dx, dy),
            };
            let duplicate = kept.iter().any(|(kw, k)| {
                *kw != w
                    && k.category == global.category
                    && quad_iou(&k.quad, &global.quad).is_ok_and(|iou| iou >= dedup_iou)
            });
            if !duplicate {
                kept.push((w, global));
            }
        }
    }
    kept.into_iter().map(|(_, d)| d).collect()
}
