//! `eval`: score predicted masks against ground-truth masks.
//!
//! Either side may be a results file (top-level `instances`) or an annotation
//! set with `segmentation` fields (top-level `images`). Masks are grouped by
//! image id. Within an image, predictions are paired with ground truths by
//! annotation id when every ground truth has a prediction with its id, and by
//! greedy best overlap otherwise.

use std::collections::BTreeMap;
use std::path::Path;

use boxseg_core::{evaluate_grouped, BinaryMask, Metrics, Pairing};
use serde_json::Value;

use crate::annotations::AnnotationSet;
use crate::batch::Results;
use crate::error::{CliError, Result};
use crate::rle;

/// `(annotation id, mask)` lists keyed by image id.
pub type MaskSet = BTreeMap<u64, Vec<(u64, BinaryMask)>>;

fn format_error(path: &Path, msg: impl Into<String>) -> CliError {
    CliError::Format {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

pub fn parse_masks(path: &Path, text: &str) -> Result<MaskSet> {
    let value: Value = serde_json::from_str(text).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = MaskSet::new();
    if value.get("instances").is_some() {
        let results: Results = serde_json::from_value(value).map_err(|source| CliError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        for r in results.instances {
            let mask = rle::decode(&r.segmentation)
                .map_err(|e| format_error(path, format!("annotation {}: {e}", r.annotation_id)))?;
            out.entry(r.image_id).or_default().push((r.annotation_id, mask));
        }
    } else if value.get("images").is_some() {
        let set = AnnotationSet::from_json_str(text).map_err(|errs| {
            CliError::Annotations(errs.into_iter().map(|e| format!("{}: {e}", path.display())).collect())
        })?;
        for im in &set.images {
            out.entry(im.id).or_default();
        }
        for a in set.annotations {
            if let Some(m) = a.segmentation {
                out.entry(a.image_id).or_default().push((a.id, m));
            }
        }
    } else {
        return Err(format_error(path, "expected an `instances` or an `images` array"));
    }
    Ok(out)
}

pub fn load_masks(path: &Path) -> Result<MaskSet> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    parse_masks(path, &text)
}

pub fn score(preds: &MaskSet, gts: &MaskSet) -> Result<Metrics> {
    let empty = Vec::new();
    let mut aligned = Vec::new();
    let mut greedy = Vec::new();
    for (image, gt) in gts {
        let pred = preds.get(image).unwrap_or(&empty);
        let by_id: BTreeMap<u64, &BinaryMask> = pred.iter().map(|(id, m)| (*id, m)).collect();
        let g: Vec<BinaryMask> = gt.iter().map(|(_, m)| m.clone()).collect();
        if gt.iter().all(|(id, _)| by_id.contains_key(id)) {
            let p = gt.iter().map(|(id, _)| by_id[id].clone()).collect();
            aligned.push((p, g));
        } else {
            greedy.push((pred.iter().map(|(_, m)| m.clone()).collect::<Vec<_>>(), g));
        }
    }
    // Predictions on images without ground truth still count as predictions.
    let extra: usize = preds
        .iter()
        .filter(|(image, _)| !gts.contains_key(image))
        .map(|(_, p)| p.len())
        .sum();
    let a = evaluate_grouped(&refs(&aligned), Pairing::Aligned);
    let b = evaluate_grouped(&refs(&greedy), Pairing::GreedyBestOverlap);
    let mut m = match (a, b) {
        (Ok(a), Ok(b)) => merge(&a, &b),
        (Ok(m), Err(_)) | (Err(_), Ok(m)) => m,
        (Err(e), Err(_)) => return Err(e.into()),
    };
    m.num_pred += extra;
    Ok(m)
}

fn merge(a: &Metrics, b: &Metrics) -> Metrics {
    let (na, nb) = (a.num_gt as f64, b.num_gt as f64);
    let pool = |x: f64, y: f64| (x * na + y * nb) / (na + nb);
    Metrics {
        mean_iou: pool(a.mean_iou, b.mean_iou),
        abo: pool(a.abo, b.abo),
        ap: a
            .ap
            .iter()
            .zip(&b.ap)
            .map(|(&(t, x), &(_, y))| (t, pool(x, y)))
            .collect(),
        num_gt: a.num_gt + b.num_gt,
        num_pred: a.num_pred + b.num_pred,
    }
}

type Group = (Vec<BinaryMask>, Vec<BinaryMask>);

fn refs(v: &[Group]) -> Vec<(&[BinaryMask], &[BinaryMask])> {
    v.iter().map(|(p, g)| (&p[..], &g[..])).collect()
}

pub fn report(m: &Metrics) -> String {
    let mut s = format!("mean IoU {:.4}\nABO {:.4}\n", m.mean_iou, m.abo);
    for (t, v) in &m.ap {
        s += &format!("AP@{t:.2} {v:.4}\n");
    }
    s += &format!("ground truths {}\npredictions {}\n", m.num_gt, m.num_pred);
    s
}
