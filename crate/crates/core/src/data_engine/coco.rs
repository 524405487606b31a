//! COCO-style detection JSON with quadrilateral segmentations.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::geometry::{hbox_envelope, DegeneratePolicy, LabeledDetection, QuadBox};
use crate::resolution::ImageGeometry;

use super::records::DetectionRecord;
use super::DataError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoImage {
    pub id: u64,
    pub file_name: String,
    pub height: u32,
    pub width: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoAnnotation {
    pub id: u64,
    pub image_id: u64,
    pub category_id: u64,
    /// One polygon of four vertices.
    pub segmentation: Vec<Vec<f64>>,
    pub bbox: [f64; 4],
    pub area: f64,
    #[serde(default)]
    pub iscrowd: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoCategory {
    pub id: u64,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoDataset {
    pub images: Vec<CocoImage>,
    pub annotations: Vec<CocoAnnotation>,
    pub categories: Vec<CocoCategory>,
}

impl CocoDataset {
    /// Builds a dataset with sorted category ids starting at 1 and images in input order.
    pub fn from_records(records: &[DetectionRecord]) -> Self {
        let mut names: Vec<&str> = records
            .iter()
            .flat_map(|r| r.annotations.iter().map(|a| a.category.as_str()))
            .collect();
        names.sort_unstable();
        names.dedup();
        let cat_id: BTreeMap<&str, u64> = names.iter().enumerate().map(|(i, n)| (*n, i as u64 + 1)).collect();
        let mut images = Vec::with_capacity(records.len());
        let mut annotations = Vec::new();
        for (i, r) in records.iter().enumerate() {
            let image_id = i as u64 + 1;
            images.push(CocoImage {
                id: image_id,
                file_name: r.image.clone(),
                height: r.geometry.height,
                width: r.geometry.width,
            });
            for a in &r.annotations {
                let env = hbox_envelope(&a.quad);
                annotations.push(CocoAnnotation {
                    id: annotations.len() as u64 + 1,
                    image_id,
                    category_id: cat_id[a.category.as_str()],
                    segmentation: vec![a.quad.coords().to_vec()],
                    bbox: [env.x1, env.y1, env.width(), env.height()],
                    area: a.quad.area(),
                    iscrowd: 0,
                });
            }
        }
        let categories = names
            .iter()
            .enumerate()
            .map(|(i, n)| CocoCategory {
                id: i as u64 + 1,
                name: n.to_string(),
            })
            .collect();
        Self {
            images,
            annotations,
            categories,
        }
    }

    /// Splits the dataset back into per-image records, in image order.
    ///
    /// Annotations without a 4-vertex polygon fall back to their `bbox`.
    pub fn to_records(&self, policy: DegeneratePolicy) -> Result<Vec<DetectionRecord>, DataError> {
        let names: BTreeMap<u64, &str> = self.categories.iter().map(|c| (c.id, c.name.as_str())).collect();
        let mut slot: BTreeMap<u64, usize> = BTreeMap::new();
        let mut out = Vec::with_capacity(self.images.len());
        for img in &self.images {
            let geometry = ImageGeometry::new(img.height, img.width).map_err(|e| DataError::InvalidRecord {
                id: img.file_name.clone(),
                msg: e.to_string(),
            })?;
            slot.insert(img.id, out.len());
            out.push(DetectionRecord {
                image: img.file_name.clone(),
                geometry,
                annotations: Vec::new(),
            });
        }
        for a in &self.annotations {
            let bad = |msg: String| DataError::InvalidRecord {
                id: format!("annotation {}", a.id),
                msg,
            };
            let &i = slot
                .get(&a.image_id)
                .ok_or_else(|| bad(format!("unknown image {}", a.image_id)))?;
            let name = names
                .get(&a.category_id)
                .ok_or_else(|| bad(format!("unknown category {}", a.category_id)))?;
            let quad = match a.segmentation.first() {
                Some(poly) if poly.len() == 8 => {
                    let mut c = [0.0; 8];
                    c.copy_from_slice(poly);
                    QuadBox::from_coords(c)
                }
                _ => {
                    let [x, y, w, h] = a.bbox;
                    QuadBox::from_coords([x, y, x + w, y, x + w, y + h, x, y + h])
                }
            };
            match crate::geometry::canonicalize_quad(&quad) {
                Ok(q) => out[i].annotations.push(LabeledDetection::new(*name, q)),
                Err(e) if policy == DegeneratePolicy::DropWithWarning => {
                    log::warn!("annotation {}: dropped: {e}", a.id);
                }
                Err(e) => return Err(bad(e.to_string())),
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_stable() {
        let rec = DetectionRecord {
            image: "a.png".into(),
            geometry: ImageGeometry::new(100, 200).unwrap(),
            annotations: vec![
                LabeledDetection::new("ship", QuadBox::from_coords([1.0, 1.0, 5.0, 1.0, 5.0, 4.0, 1.0, 4.0])),
                LabeledDetection::new(
                    "plane",
                    QuadBox::from_coords([10.0, 10.0, 20.0, 12.0, 18.0, 20.0, 9.0, 18.0]),
                ),
            ],
        };
        let coco = CocoDataset::from_records(std::slice::from_ref(&rec));
        assert_eq!(coco.categories[0].name, "plane");
        let back = coco.to_records(DegeneratePolicy::HardError).unwrap();
        assert_eq!(back, vec![rec]);
        let again = CocoDataset::from_records(&back);
        assert_eq!(
            serde_json::to_string(&again).unwrap(),
            serde_json::to_string(&coco).unwrap()
        );
    }

    #[test]
    fn bbox_fallback() {
        let coco: CocoDataset = serde_json::from_str(
            r#"{"images":[{"id":7,"file_name":"x.png","height":50,"width":50}],
                "annotations":[{"id":1,"image_id":7,"category_id":3,"segmentation":[],"bbox":[1,2,3,4],"area":12}],
                "categories":[{"id":3,"name":"car"}]}"#,
        )
        .unwrap();
        let recs = coco.to_records(DegeneratePolicy::HardError).unwrap();
        assert_eq!(
            recs[0].annotations[0].quad.coords(),
            [1.0, 2.0, 4.0, 2.0, 4.0, 6.0, 1.0, 6.0]
        );
    }
}
