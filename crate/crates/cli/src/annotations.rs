//! COCO-style box annotations: the `images` / `annotations` subset this tool reads.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use boxseg_core::{BBox, BinaryMask};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::rle::{self, Rle};

#[derive(Debug, Serialize, Deserialize)]
struct RawImage {
    id: u64,
    file_name: String,
    height: usize,
    width: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawAnnotation {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<u64>,
    image_id: u64,
    bbox: [f64; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    category_id: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    segmentation: Option<Rle>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawSet {
    images: Vec<RawImage>,
    #[serde(default)]
    annotations: Vec<RawAnnotation>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageInfo {
    pub id: u64,
    pub file_name: String,
    pub height: usize,
    pub width: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Annotation {
    /// Taken from the file, or the annotation's position when absent.
    pub id: u64,
    pub image_id: u64,
    pub bbox: BBox,
    pub category_id: Option<u64>,
    /// Ground-truth mask, when the file carries one.
    pub segmentation: Option<BinaryMask>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnnotationSet {
    pub images: Vec<ImageInfo>,
    pub annotations: Vec<Annotation>,
}

/// `[x, y, w, h]` to a half-open box: corners rounded outwards, then clipped to the image.
pub fn bbox_from_xywh(xywh: [f64; 4], width: usize, height: usize) -> std::result::Result<BBox, String> {
    let [x, y, w, h] = xywh;
    if xywh.iter().any(|v| !v.is_finite()) {
        return Err(format!("non-finite bbox {xywh:?}"));
    }
    if w <= 0.0 || h <= 0.0 {
        return Err(format!("bbox {xywh:?} has no area"));
    }
    let x0 = x.floor().clamp(0.0, width as f64) as usize;
    let y0 = y.floor().clamp(0.0, height as f64) as usize;
    let x1 = (x + w).ceil().clamp(0.0, width as f64) as usize;
    let y1 = (y + h).ceil().clamp(0.0, height as f64) as usize;
    if x1 <= x0 || y1 <= y0 {
        return Err(format!("bbox {xywh:?} lies outside the {width}x{height} image"));
    }
    Ok(BBox::new(x0, y0, x1, y1))
}

impl AnnotationSet {
    pub fn from_json_str(text: &str) -> std::result::Result<Self, Vec<String>> {
        let raw: RawSet = serde_json::from_str(text).map_err(|e| vec![e.to_string()])?;
        let mut errors = Vec::new();
        let mut by_id = BTreeMap::new();
        for (i, im) in raw.images.iter().enumerate() {
            if im.height == 0 || im.width == 0 {
                errors.push(format!(
                    "image {} ({}) is {}x{}",
                    im.id, im.file_name, im.height, im.width
                ));
            }
            if by_id.insert(im.id, i).is_some() {
                errors.push(format!("duplicate image id {}", im.id));
            }
        }
        let mut seen = BTreeSet::new();
        let mut annotations = Vec::with_capacity(raw.annotations.len());
        for (i, a) in raw.annotations.into_iter().enumerate() {
            let id = a.id.unwrap_or(i as u64);
            if !seen.insert(id) {
                errors.push(format!("annotation {id}: duplicate id"));
            }
            let Some(&img) = by_id.get(&a.image_id) else {
                errors.push(format!("annotation {id}: unknown image id {}", a.image_id));
                continue;
            };
            let info = &raw.images[img];
            let bbox = match bbox_from_xywh(a.bbox, info.width, info.height) {
                Ok(b) => b,
                Err(e) => {
                    errors.push(format!("annotation {id}: {e}"));
                    continue;
                }
            };
            let segmentation = match a.segmentation {
                None => None,
                Some(r) if r.size != [info.height, info.width] => {
                    errors.push(format!(
                        "annotation {id}: segmentation is {:?} but image {} is [{}, {}]",
                        r.size, info.id, info.height, info.width
                    ));
                    continue;
                }
                Some(r) => match rle::decode(&r) {
                    Ok(m) => Some(m),
                    Err(e) => {
                        errors.push(format!("annotation {id}: {e}"));
                        continue;
                    }
                },
            };
            annotations.push(Annotation {
                id,
                image_id: a.image_id,
                bbox,
                category_id: a.category_id,
                segmentation,
            });
        }
        if !errors.is_empty() {
            return Err(errors);
        }
        let images = raw
            .images
            .into_iter()
            .map(|im| ImageInfo {
                id: im.id,
                file_name: im.file_name,
                height: im.height,
                width: im.width,
            })
            .collect();
        Ok(Self { images, annotations })
    }

    pub fn to_json_string(&self) -> String {
        let raw = RawSet {
            images: self
                .images
                .iter()
                .map(|im| RawImage {
                    id: im.id,
                    file_name: im.file_name.clone(),
                    height: im.height,
                    width: im.width,
                })
                .collect(),
            annotations: self
                .annotations
                .iter()
                .map(|a| RawAnnotation {
                    id: Some(a.id),
                    image_id: a.image_id,
                    bbox: [
                        a.bbox.x0 as f64,
                        a.bbox.y0 as f64,
                        a.bbox.width() as f64,
                        a.bbox.height() as f64,
                    ],
                    category_id: a.category_id,
                    segmentation: a.segmentation.as_ref().map(rle::encode),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&raw).expect("annotation set serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        Self::from_json_str(&text).map_err(|errs| {
            CliError::Annotations(errs.into_iter().map(|e| format!("{}: {e}", path.display())).collect())
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json_string()).map_err(CliError::io(path))
    }

    /// Annotations of one image, in file order.
    pub fn for_image(&self, image_id: u64) -> impl Iterator<Item = &Annotation> {
        self.annotations.iter().filter(move |a| a.image_id == image_id)
    }
}
