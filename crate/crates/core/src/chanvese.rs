//! Box-constrained Chan-Vese energy with a sigmoid characteristic function.
//!
//! The data grid handed to these functions is the integration domain: it is
//! already cropped to the region the energy is summed over, and the level-set
//! field covers exactly the same pixels. The box projection term is the one
//! exception, it works on a field spanning a larger window around the box.

use crate::error::{Error, Region, Result};
use crate::grid::{axis_projection, dice_1d, sigmoid, sigmoid_field, Axis, BBox, Grid, LevelSetField, SoftMask};

/// Regularizer inside `|grad|` for both the length term and the curvature.
pub const GRADIENT_EPS: f64 = 1e-8;

const REGION_FLOOR: f64 = 1e-12;

/// Per-channel soft region means.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMeans {
    pub inside: Vec<f64>,
    pub outside: Vec<f64>,
}

/// The three Chan-Vese terms for one data source, unweighted except for `gamma` on `length`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChanVeseEnergy {
    pub data_inside: f64,
    pub data_outside: f64,
    pub length: f64,
}

impl ChanVeseEnergy {
    pub fn total(&self) -> f64 {
        self.data_inside + self.data_outside + self.length
    }
}

/// Weighted parts of the per-instance objective.
///
/// `data_inside`, `data_outside` and `length` already carry the data-source
/// weights. `box_projection` and `lcm_consistency` are the raw term values;
/// `total` applies their weights.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnergyBreakdown {
    pub data_inside: f64,
    pub data_outside: f64,
    pub length: f64,
    pub box_projection: f64,
    pub lcm_consistency: f64,
    pub total: f64,
}

fn check_aligned(data: &Grid, phi: &LevelSetField) -> Result<()> {
    if data.height() != phi.height() || data.width() != phi.width() {
        return Err(Error::ShapeMismatch(format!(
            "data is {}x{} but the level set is {}x{}",
            data.height(),
            data.width(),
            phi.height(),
            phi.width()
        )));
    }
    Ok(())
}

pub fn region_means(data: &Grid, phi: &LevelSetField) -> Result<RegionMeans> {
    check_aligned(data, phi)?;
    let weights: Vec<f64> = phi.values().iter().map(|&v| sigmoid(v)).collect();
    let w_in: f64 = weights.iter().sum();
    let w_out: f64 = weights.iter().map(|w| 1.0 - w).sum();
    if w_in < REGION_FLOOR {
        return Err(Error::DegenerateRegion(Region::Inside));
    }
    if w_out < REGION_FLOOR {
        return Err(Error::DegenerateRegion(Region::Outside));
    }
    let mut inside = Vec::with_capacity(data.channels());
    let mut outside = Vec::with_capacity(data.channels());
    for c in 0..data.channels() {
        let (mut s_in, mut s_out) = (0.0, 0.0);
        for (&v, &w) in data.channel(c).iter().zip(&weights) {
            s_in += v * w;
            s_out += v * (1.0 - w);
        }
        inside.push(s_in / w_in);
        outside.push(s_out / w_out);
    }
    Ok(RegionMeans { inside, outside })
}

fn data_terms(data: &Grid, phi: &LevelSetField, means: &RegionMeans) -> (f64, f64) {
    let (mut e_in, mut e_out) = (0.0, 0.0);
    let n = data.plane_len();
    for (i, &p) in phi.values().iter().enumerate() {
        let s = sigmoid(p);
        let (mut r_in, mut r_out) = (0.0, 0.0);
        for c in 0..data.channels() {
            let v = data.values()[c * n + i];
            r_in += (v - means.inside[c]).powi(2);
            r_out += (v - means.outside[c]).powi(2);
        }
        e_in += r_in * s;
        e_out += r_out * (1.0 - s);
    }
    (e_in, e_out)
}

/// Forward differences with zero flux past the last row and column.
fn forward_gradient(u: &[f64], h: usize, w: usize) -> (Vec<f64>, Vec<f64>) {
    let mut gx = vec![0.0; h * w];
    let mut gy = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if x + 1 < w {
                gx[i] = u[i + 1] - u[i];
            }
            if y + 1 < h {
                gy[i] = u[i + w] - u[i];
            }
        }
    }
    (gx, gy)
}

/// Discrete total variation `sum(sqrt(|grad u|^2 + eps^2) - eps)`.
fn total_variation(u: &[f64], h: usize, w: usize) -> f64 {
    let (gx, gy) = forward_gradient(u, h, w);
    gx.iter()
        .zip(&gy)
        .map(|(a, b)| (a * a + b * b + GRADIENT_EPS * GRADIENT_EPS).sqrt() - GRADIENT_EPS)
        .sum()
}

/// Backward divergence of the normalized forward gradient of `u`.
///
/// This is the exact negative derivative of [`total_variation`] with respect to
/// `u`, i.e. the curvature of the level lines of `u` on the discrete grid.
pub fn tv_curvature(u: &[f64], h: usize, w: usize) -> Vec<f64> {
    let (mut px, mut py) = forward_gradient(u, h, w);
    for (a, b) in px.iter_mut().zip(py.iter_mut()) {
        let n = (*a * *a + *b * *b + GRADIENT_EPS * GRADIENT_EPS).sqrt();
        *a /= n;
        *b /= n;
    }
    let mut div = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let left = if x > 0 { px[i - 1] } else { 0.0 };
            let up = if y > 0 { py[i - w] } else { 0.0 };
            div[i] = (px[i] - left) + (py[i] - up);
        }
    }
    div
}

pub fn chan_vese_energy(data: &Grid, phi: &LevelSetField, gamma: f64) -> Result<ChanVeseEnergy> {
    let means = region_means(data, phi)?;
    chan_vese_energy_with_means(data, phi, &means, gamma)
}

/// Energy with the region means held at `means`.
pub fn chan_vese_energy_with_means(
    data: &Grid,
    phi: &LevelSetField,
    means: &RegionMeans,
    gamma: f64,
) -> Result<ChanVeseEnergy> {
    check_aligned(data, phi)?;
    let (data_inside, data_outside) = data_terms(data, phi, means);
    let u = sigmoid_field(phi);
    let length = gamma * total_variation(u.values(), phi.height(), phi.width());
    Ok(ChanVeseEnergy {
        data_inside,
        data_outside,
        length,
    })
}

/// Mean curvature `div(grad phi / |grad phi|)` by central differences with replicated borders.
pub fn curvature(phi: &LevelSetField) -> Vec<f64> {
    let (h, w) = (phi.height(), phi.width());
    let at = |y: isize, x: isize| -> f64 {
        let yy = y.clamp(0, h as isize - 1) as usize;
        let xx = x.clamp(0, w as isize - 1) as usize;
        phi.get(yy, xx)
    };
    let eps2 = GRADIENT_EPS * GRADIENT_EPS;
    let mut out = vec![0.0; h * w];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let c = at(y, x);
            let fx = (at(y, x + 1) - at(y, x - 1)) / 2.0;
            let fy = (at(y + 1, x) - at(y - 1, x)) / 2.0;
            let fxx = at(y, x + 1) - 2.0 * c + at(y, x - 1);
            let fyy = at(y + 1, x) - 2.0 * c + at(y - 1, x);
            let fxy = (at(y + 1, x + 1) - at(y + 1, x - 1) - at(y - 1, x + 1) + at(y - 1, x - 1)) / 4.0;
            let g2 = fx * fx + fy * fy + eps2;
            out[y as usize * w + x as usize] =
                (fxx * (fy * fy + eps2) - 2.0 * fx * fy * fxy + fyy * (fx * fx + eps2)) / g2.powf(1.5);
        }
    }
    out
}

pub fn energy_gradient(data: &Grid, phi: &LevelSetField, gamma: f64) -> Result<Vec<f64>> {
    let means = region_means(data, phi)?;
    energy_gradient_with_means(data, phi, &means, gamma)
}

/// `dF/dphi = s'(phi) [ sum_c (I - c1)^2 - (I - c2)^2 - gamma * kappa ]` with the means frozen.
pub fn energy_gradient_with_means(
    data: &Grid,
    phi: &LevelSetField,
    means: &RegionMeans,
    gamma: f64,
) -> Result<Vec<f64>> {
    check_aligned(data, phi)?;
    let (h, w) = (phi.height(), phi.width());
    let n = h * w;
    let u = sigmoid_field(phi);
    let kappa = if gamma != 0.0 {
        tv_curvature(u.values(), h, w)
    } else {
        vec![0.0; n]
    };
    let grad = (0..n)
        .map(|i| {
            let s = u.values()[i];
            let mut fit = 0.0;
            for c in 0..data.channels() {
                let v = data.values()[c * n + i];
                fit += (v - means.inside[c]).powi(2) - (v - means.outside[c]).powi(2);
            }
            s * (1.0 - s) * (fit - gamma * kappa[i])
        })
        .collect();
    Ok(grad)
}

/// Projection cost of `mask` against the indicator of `bbox` (mask coordinates).
///
/// Returns `(1 - dice_x) + (1 - dice_y)`, a value in `[0, 2]`.
pub fn box_projection_cost(mask: &SoftMask, bbox: BBox) -> f64 {
    let (gx, gy) = box_indicator_projections(mask.height(), mask.width(), bbox);
    let px = axis_projection(mask, Axis::X);
    let py = axis_projection(mask, Axis::Y);
    let dx = dice_1d(&px, &gx).expect("projection lengths match");
    let dy = dice_1d(&py, &gy).expect("projection lengths match");
    (1.0 - dx) + (1.0 - dy)
}

fn box_indicator_projections(h: usize, w: usize, b: BBox) -> (Vec<f64>, Vec<f64>) {
    let gx = (0..w)
        .map(|x| (x >= b.x0 && x < b.x1 && b.y0 < b.y1.min(h)) as u8 as f64)
        .collect();
    let gy = (0..h)
        .map(|y| (y >= b.y0 && y < b.y1 && b.x0 < b.x1.min(w)) as u8 as f64)
        .collect();
    (gx, gy)
}

/// d(1 - dice(p, g)) / dp.
fn dice_loss_gradient(p: &[f64], g: &[f64]) -> Vec<f64> {
    let pg: f64 = p.iter().zip(g).map(|(a, b)| a * b).sum();
    let s: f64 = p.iter().map(|a| a * a).sum::<f64>() + g.iter().map(|b| b * b).sum::<f64>();
    if s == 0.0 {
        return vec![0.0; p.len()];
    }
    p.iter()
        .zip(g)
        .map(|(&pi, &gi)| -(2.0 * gi / s - 4.0 * pg * pi / (s * s)))
        .collect()
}

/// Subgradient of [`box_projection_cost`] of `sigmoid(phi)` with respect to `phi`.
///
/// `bbox` is in image coordinates and must lie inside the field's window. Each
/// projected maximum routes its gradient to a single arg-max pixel, the first
/// one in scan order along the line.
pub fn box_projection_gradient(phi: &LevelSetField, bbox: BBox) -> Vec<f64> {
    let local = bbox.relative_to(&phi.window());
    let (h, w) = (phi.height(), phi.width());
    let v = phi.values();
    let (gx, gy) = box_indicator_projections(h, w, local);

    let mut col_arg = vec![0usize; w];
    for x in 0..w {
        let mut best = 0;
        for y in 1..h {
            if v[y * w + x] > v[best * w + x] {
                best = y;
            }
        }
        col_arg[x] = best * w + x;
    }
    let mut row_arg = vec![0usize; h];
    for y in 0..h {
        let mut best = 0;
        for x in 1..w {
            if v[y * w + x] > v[y * w + best] {
                best = x;
            }
        }
        row_arg[y] = y * w + best;
    }
    // sigmoid is monotone, so the arg-max of phi is the arg-max of the mask
    let px: Vec<f64> = col_arg.iter().map(|&i| sigmoid(v[i])).collect();
    let py: Vec<f64> = row_arg.iter().map(|&i| sigmoid(v[i])).collect();

    let mut grad = vec![0.0; h * w];
    for (x, d) in dice_loss_gradient(&px, &gx).into_iter().enumerate() {
        let s = px[x];
        grad[col_arg[x]] += d * s * (1.0 - s);
    }
    for (y, d) in dice_loss_gradient(&py, &gy).into_iter().enumerate() {
        let s = py[y];
        grad[row_arg[y]] += d * s * (1.0 - s);
    }
    grad
}

/// Weights of the per-instance objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveWeights {
    /// Length weight inside each Chan-Vese term.
    pub gamma: f64,
    /// Image data term.
    pub lambda1: f64,
    /// Feature data term.
    pub lambda2: f64,
    /// Box projection term.
    pub alpha: f64,
    /// L1 consistency with the propagated level set.
    pub mu_lcm: f64,
}

impl Default for ObjectiveWeights {
    fn default() -> Self {
        Self {
            gamma: 1e-4,
            lambda1: 0.05,
            lambda2: 5.0,
            alpha: 3.0,
            mu_lcm: 1.0,
        }
    }
}

/// Inputs of the per-instance objective.
///
/// `phi` fields passed alongside span `window`; `image` and `features` are
/// cropped to `data_region`, which must lie inside the window.
#[derive(Debug, Clone, Copy)]
pub struct ObjectiveInputs<'a> {
    pub image: &'a Grid,
    pub features: Option<&'a Grid>,
    pub data_region: BBox,
    pub gt_box: BBox,
    /// Propagated level set the L1 term pulls towards (no gradient flows through it).
    /// Its window may be any sub-window of the level set; the term covers only that part.
    pub lcm_target: Option<&'a LevelSetField>,
}

/// Region means for every data source, computed once per descent step.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenMeans {
    pub image: RegionMeans,
    pub features: Option<RegionMeans>,
}

fn feature_term<'a>(inputs: &ObjectiveInputs<'a>, weights: &ObjectiveWeights) -> Option<&'a Grid> {
    inputs.features.filter(|_| weights.lambda2 != 0.0)
}

pub fn frozen_means(phi: &LevelSetField, inputs: &ObjectiveInputs, weights: &ObjectiveWeights) -> Result<FrozenMeans> {
    let inner = phi.crop(inputs.data_region)?;
    let image = region_means(inputs.image, &inner)?;
    let features = feature_term(inputs, weights)
        .map(|f| region_means(f, &inner))
        .transpose()?;
    Ok(FrozenMeans { image, features })
}

/// Mean absolute difference between two fields over the same window.
pub fn l1_consistency(phi: &LevelSetField, target: &LevelSetField) -> f64 {
    let n = phi.values().len() as f64;
    phi.values()
        .iter()
        .zip(target.values())
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / n
}

pub fn combined_objective(
    phi: &LevelSetField,
    inputs: &ObjectiveInputs,
    weights: &ObjectiveWeights,
) -> Result<EnergyBreakdown> {
    let means = frozen_means(phi, inputs, weights)?;
    combined_objective_with_means(phi, inputs, weights, &means)
}

pub fn combined_objective_with_means(
    phi: &LevelSetField,
    inputs: &ObjectiveInputs,
    weights: &ObjectiveWeights,
    means: &FrozenMeans,
) -> Result<EnergyBreakdown> {
    let inner = phi.crop(inputs.data_region)?;
    let mut out = EnergyBreakdown::default();
    let mut total = 0.0;

    let gt_local = inputs.gt_box.relative_to(&phi.window());
    out.box_projection = box_projection_cost(&sigmoid_field(phi), gt_local);
    if weights.alpha != 0.0 {
        total += weights.alpha * out.box_projection;
    }

    let img = chan_vese_energy_with_means(inputs.image, &inner, &means.image, weights.gamma)?;
    out.data_inside = weights.lambda1 * img.data_inside;
    out.data_outside = weights.lambda1 * img.data_outside;
    out.length = weights.lambda1 * img.length;
    total += weights.lambda1 * img.total();

    if let (Some(f), Some(m)) = (feature_term(inputs, weights), means.features.as_ref()) {
        let feat = chan_vese_energy_with_means(f, &inner, m, weights.gamma)?;
        out.data_inside += weights.lambda2 * feat.data_inside;
        out.data_outside += weights.lambda2 * feat.data_outside;
        out.length += weights.lambda2 * feat.length;
        total += weights.lambda2 * feat.total();
    }

    if let Some(target) = inputs.lcm_target {
        out.lcm_consistency = l1_consistency(&phi.crop(target.window())?, target);
        if weights.mu_lcm != 0.0 {
            total += weights.mu_lcm * out.lcm_consistency;
        }
    }
    out.total = total;
    Ok(out)
}

/// Gradient of [`combined_objective_with_means`] over the whole window.
pub fn combined_gradient_with_means(
    phi: &LevelSetField,
    inputs: &ObjectiveInputs,
    weights: &ObjectiveWeights,
    means: &FrozenMeans,
) -> Result<Vec<f64>> {
    let window = phi.window();
    let w = window.width();
    let n = window.area();
    let mut grad = vec![0.0; n];

    if weights.alpha != 0.0 {
        for (g, b) in grad.iter_mut().zip(box_projection_gradient(phi, inputs.gt_box)) {
            *g += weights.alpha * b;
        }
    }

    let inner = phi.crop(inputs.data_region)?;
    let region = inputs.data_region.relative_to(&window);
    let mut scatter = |local: Vec<f64>, weight: f64| {
        let rw = region.width();
        for (k, v) in local.into_iter().enumerate() {
            let (y, x) = (region.y0 + k / rw, region.x0 + k % rw);
            grad[y * w + x] += weight * v;
        }
    };
    if weights.lambda1 != 0.0 {
        scatter(
            energy_gradient_with_means(inputs.image, &inner, &means.image, weights.gamma)?,
            weights.lambda1,
        );
    }
    if let (Some(f), Some(m)) = (feature_term(inputs, weights), means.features.as_ref()) {
        scatter(
            energy_gradient_with_means(f, &inner, m, weights.gamma)?,
            weights.lambda2,
        );
    }

    if let (Some(target), true) = (inputs.lcm_target, weights.mu_lcm != 0.0) {
        let sub = phi.crop(target.window())?;
        let region = target.window().relative_to(&window);
        let scale = weights.mu_lcm / target.values().len() as f64;
        let rw = region.width();
        for (k, (a, b)) in sub.values().iter().zip(target.values()).enumerate() {
            let d = a - b;
            if d != 0.0 {
                grad[(region.y0 + k / rw) * w + region.x0 + k % rw] += scale * d.signum();
            }
        }
    }
    Ok(grad)
}
