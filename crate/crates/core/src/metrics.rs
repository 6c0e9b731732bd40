//! Mask overlap metrics: mean IoU, average best overlap and AP at fixed IoU thresholds.

use crate::error::{Error, Result};
use crate::grid::BinaryMask;

pub const AP_THRESHOLDS: [f64; 4] = [0.25, 0.50, 0.70, 0.75];

/// How predictions are paired with ground truths for the mean IoU.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pairing {
    /// Prediction `i` belongs to ground truth `i`.
    Aligned,
    /// Repeatedly pair the highest-IoU remaining prediction and ground truth.
    GreedyBestOverlap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub mean_iou: f64,
    pub abo: f64,
    /// `(threshold, fraction of ground truths whose best IoU reaches it)`.
    pub ap: Vec<(f64, f64)>,
    pub num_gt: usize,
    pub num_pred: usize,
}

impl Metrics {
    pub fn ap_at(&self, threshold: f64) -> Option<f64> {
        self.ap.iter().find(|(t, _)| *t == threshold).map(|&(_, v)| v)
    }
}

/// `|a & b| / |a | b|`; two empty masks overlap perfectly.
pub fn iou(a: &BinaryMask, b: &BinaryMask) -> f64 {
    assert_eq!(
        (a.height(), a.width()),
        (b.height(), b.width()),
        "masks must share a plane"
    );
    let (mut inter, mut union) = (0usize, 0usize);
    for (&p, &q) in a.bits().iter().zip(b.bits()) {
        inter += (p & q) as usize;
        union += (p | q) as usize;
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

pub fn evaluate(preds: &[BinaryMask], gts: &[BinaryMask], pairing: Pairing) -> Result<Metrics> {
    evaluate_grouped(&[(preds, gts)], pairing)
}

/// Per-ground-truth best IoUs and the paired IoU sum of one plane.
fn score_group(preds: &[BinaryMask], gts: &[BinaryMask], pairing: Pairing) -> Result<(Vec<f64>, f64)> {
    for m in preds.iter().chain(gts) {
        if (m.height(), m.width()) != (gts[0].height(), gts[0].width()) {
            return Err(Error::ShapeMismatch("prediction and ground-truth planes differ".into()));
        }
    }
    let table: Vec<Vec<f64>> = gts.iter().map(|g| preds.iter().map(|p| iou(p, g)).collect()).collect();
    let best = table
        .iter()
        .map(|row| row.iter().copied().fold(0.0, f64::max))
        .collect();
    let paired = match pairing {
        Pairing::Aligned => {
            if preds.len() != gts.len() {
                return Err(Error::ShapeMismatch(format!(
                    "aligned evaluation needs equal counts, got {} predictions for {} ground truths",
                    preds.len(),
                    gts.len()
                )));
            }
            (0..gts.len()).map(|i| table[i][i]).sum::<f64>()
        }
        Pairing::GreedyBestOverlap => {
            let mut pairs: Vec<(f64, usize, usize)> = table
                .iter()
                .enumerate()
                .flat_map(|(g, row)| row.iter().enumerate().map(move |(p, &v)| (v, g, p)))
                .collect();
            pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
            let mut used_g = vec![false; gts.len()];
            let mut used_p = vec![false; preds.len()];
            let mut sum = 0.0;
            for (v, g, p) in pairs {
                if !used_g[g] && !used_p[p] {
                    used_g[g] = true;
                    used_p[p] = true;
                    sum += v;
                }
            }
            // unmatched ground truths contribute zero
            sum
        }
    };
    Ok((best, paired))
}

/// Metrics pooled over several planes (images); pairing happens within each plane only.
pub fn evaluate_grouped(groups: &[(&[BinaryMask], &[BinaryMask])], pairing: Pairing) -> Result<Metrics> {
    let mut best = Vec::new();
    let mut paired = 0.0;
    let mut num_pred = 0;
    for (preds, gts) in groups {
        num_pred += preds.len();
        if gts.is_empty() {
            continue;
        }
        let (b, p) = score_group(preds, gts, pairing)?;
        best.extend(b);
        paired += p;
    }
    if best.is_empty() {
        return Err(Error::EmptyGroundTruth);
    }
    let n = best.len() as f64;
    let ap = AP_THRESHOLDS
        .iter()
        .map(|&t| (t, best.iter().filter(|&&b| b >= t).count() as f64 / n))
        .collect();
    Ok(Metrics {
        mean_iou: paired / n,
        abo: best.iter().sum::<f64>() / n,
        ap,
        num_gt: best.len(),
        num_pred,
    })
}
