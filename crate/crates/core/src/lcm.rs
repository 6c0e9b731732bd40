//! Local consistency: affinity kernels over a dilated 8-neighbourhood and
//! k-step propagation of the level set through them.

use crate::grid::{Grid, LevelSetField};

/// Neighbour offsets `(dy, dx)` in units of the dilation, in storage order.
pub const OFFSETS: [(isize, isize); 8] = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)];

const SIGMA_FLOOR: f64 = 1e-6;

/// Per-pixel neighbour values with a validity bit per neighbour.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighbourField {
    height: usize,
    width: usize,
    dilation: usize,
    weights: Vec<[f64; 8]>,
    valid: Vec<u8>,
}

/// Softmax-normalized neighbour weights; each pixel's valid weights sum to 1.
pub type AffinityField = NeighbourField;

impl NeighbourField {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dilation(&self) -> usize {
        self.dilation
    }

    /// The eight entries of pixel `(y, x)`; invalid neighbours hold 0.
    pub fn at(&self, y: usize, x: usize) -> &[f64; 8] {
        &self.weights[y * self.width + x]
    }

    pub fn is_valid(&self, y: usize, x: usize, k: usize) -> bool {
        self.valid[y * self.width + x] & (1 << k) != 0
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64; 8]> {
        self.weights.iter()
    }
}

fn neighbour(y: usize, x: usize, k: usize, d: usize, h: usize, w: usize) -> Option<(usize, usize)> {
    let (dy, dx) = OFFSETS[k];
    let ny = y as isize + dy * d as isize;
    let nx = x as isize + dx * d as isize;
    (ny >= 0 && nx >= 0 && (ny as usize) < h && (nx as usize) < w).then(|| (ny as usize, nx as usize))
}

fn validity(h: usize, w: usize, d: usize) -> Vec<u8> {
    let mut valid = vec![0u8; h * w];
    for y in 0..h {
        for x in 0..w {
            for k in 0..8 {
                if neighbour(y, x, k, d, h, w).is_some() {
                    valid[y * w + x] |= 1 << k;
                }
            }
        }
    }
    valid
}

/// Local spread of the pixel vectors over the dilated 3x3 window, centre included.
fn local_sigma(data: &Grid, y: usize, x: usize, d: usize) -> f64 {
    let (h, w, ch) = (data.height(), data.width(), data.channels());
    let mut samples = vec![(y, x)];
    samples.extend((0..8).filter_map(|k| neighbour(y, x, k, d, h, w)));
    let n = samples.len() as f64;
    let mut var = 0.0;
    for c in 0..ch {
        let mean = samples.iter().map(|&(sy, sx)| data.get(c, sy, sx)).sum::<f64>() / n;
        var += samples
            .iter()
            .map(|&(sy, sx)| (data.get(c, sy, sx) - mean).powi(2))
            .sum::<f64>()
            / n;
    }
    var.sqrt().max(SIGMA_FLOOR)
}

/// Raw intensity affinities `-(|p - q| / sigma)^2` towards each dilated neighbour.
pub fn pixel_affinity(data: &Grid, dilation: usize) -> NeighbourField {
    assert!(dilation >= 1, "dilation must be at least 1");
    let (h, w) = (data.height(), data.width());
    let valid = validity(h, w, dilation);
    let mut weights = vec![[0.0; 8]; h * w];
    for y in 0..h {
        for x in 0..w {
            let sigma = local_sigma(data, y, x, dilation);
            let row = &mut weights[y * w + x];
            for (k, slot) in row.iter_mut().enumerate() {
                if let Some((ny, nx)) = neighbour(y, x, k, dilation, h, w) {
                    let dist2: f64 = data
                        .pixel(y, x)
                        .zip(data.pixel(ny, nx))
                        .map(|(a, b)| (a - b).powi(2))
                        .sum();
                    *slot = -dist2 / (sigma * sigma);
                }
            }
        }
    }
    NeighbourField {
        height: h,
        width: w,
        dilation,
        weights,
        valid,
    }
}

/// Raw spatial template: the same kernel on neighbour offsets, with the
/// bandwidth equal to the dilation. Axis neighbours get -1, diagonals -2.
pub fn spatial_affinity(dilation: usize) -> [f64; 8] {
    assert!(dilation >= 1, "dilation must be at least 1");
    let sigma = dilation as f64;
    OFFSETS.map(|(dy, dx)| {
        let dist2 = ((dy * dy + dx * dx) as usize * dilation * dilation) as f64;
        -dist2 / (sigma * sigma)
    })
}

/// The spatial template broadcast over an `h x w` window.
pub fn spatial_field(height: usize, width: usize, dilation: usize) -> NeighbourField {
    let valid = validity(height, width, dilation);
    let template = spatial_affinity(dilation);
    let weights = valid
        .iter()
        .map(|&bits| {
            let mut row = [0.0; 8];
            for k in 0..8 {
                if bits & (1 << k) != 0 {
                    row[k] = template[k];
                }
            }
            row
        })
        .collect();
    NeighbourField {
        height,
        width,
        dilation,
        weights,
        valid,
    }
}

/// Softmax over the valid neighbours of every pixel.
pub fn normalize_affinity(raw: &NeighbourField) -> AffinityField {
    let weights = raw
        .weights
        .iter()
        .zip(&raw.valid)
        .map(|(row, &bits)| {
            let mut out = [0.0; 8];
            if bits == 0 {
                return out;
            }
            let max = (0..8)
                .filter(|k| bits & (1 << k) != 0)
                .map(|k| row[k])
                .fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for k in 0..8 {
                if bits & (1 << k) != 0 {
                    out[k] = (row[k] - max).exp();
                    sum += out[k];
                }
            }
            for v in &mut out {
                *v /= sum;
            }
            out
        })
        .collect();
    NeighbourField { weights, ..raw.clone() }
}

/// `(pixel + eta * spatial) / (1 + eta)`.
pub fn combined_affinity(pixel: &AffinityField, spatial: &AffinityField, eta: f64) -> AffinityField {
    assert_eq!(pixel.dilation, spatial.dilation, "affinities must share a dilation");
    assert_eq!((pixel.height, pixel.width), (spatial.height, spatial.width));
    let norm = 1.0 + eta;
    let weights = pixel
        .weights
        .iter()
        .zip(&spatial.weights)
        .map(|(p, s)| {
            let mut out = [0.0; 8];
            for k in 0..8 {
                out[k] = (p[k] + eta * s[k]) / norm;
            }
            out
        })
        .collect();
    NeighbourField {
        weights,
        ..pixel.clone()
    }
}

/// Full affinity for a normalized image window.
pub fn affinity_for(data: &Grid, dilation: usize, eta: f64) -> AffinityField {
    let pixel = normalize_affinity(&pixel_affinity(data, dilation));
    let spatial = normalize_affinity(&spatial_field(data.height(), data.width(), dilation));
    combined_affinity(&pixel, &spatial, eta)
}

/// Replace each value by the affinity-weighted sum of its neighbours, `k` times.
pub fn propagate(phi: &LevelSetField, affinity: &AffinityField, k: usize) -> LevelSetField {
    let (h, w) = (phi.height(), phi.width());
    assert_eq!(
        (h, w),
        (affinity.height, affinity.width),
        "affinity must cover the level-set window"
    );
    let d = affinity.dilation;
    let mut cur = phi.values().to_vec();
    let mut next = vec![0.0; cur.len()];
    for _ in 0..k {
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let bits = affinity.valid[i];
                if bits == 0 {
                    next[i] = cur[i];
                    continue;
                }
                let row = &affinity.weights[i];
                let mut acc = 0.0;
                for (kk, &wt) in row.iter().enumerate() {
                    if bits & (1 << kk) != 0 {
                        let (ny, nx) = neighbour(y, x, kk, d, h, w).expect("valid bit implies in-window");
                        acc += wt * cur[ny * w + nx];
                    }
                }
                // convex weights can still round a hair outside the neighbour range
                let (lo, hi) = (0..8)
                    .filter(|kk| bits & (1 << kk) != 0)
                    .filter_map(|kk| neighbour(y, x, kk, d, h, w))
                    .map(|(ny, nx)| cur[ny * w + nx])
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
                next[i] = acc.clamp(lo, hi);
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }
    phi.with_values(cur)
}

/// Mean absolute difference between `phi` and its propagated target.
pub fn consistency_penalty(phi: &LevelSetField, target: &LevelSetField) -> f64 {
    crate::chanvese::l1_consistency(phi, target)
}
