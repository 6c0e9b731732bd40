//! Pixel grids, boxes, level-set fields and masks.
//!
//! All planes are row-major. Multi-channel grids store whole channels
//! back to back, so the value of channel `c` at `(y, x)` lives at
//! `c * height * width + y * width + x`.

use crate::error::{Error, Result};

/// Multi-channel real-valued pixel grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    height: usize,
    width: usize,
    channels: usize,
    values: Vec<f64>,
}

/// Low-level data term: the input image.
pub type ImageGrid = Grid;
/// High-level data term: feature channels aligned with the image.
pub type FeatureStack = Grid;

impl Grid {
    pub fn new(height: usize, width: usize, channels: usize, values: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::EmptyGrid {
                height,
                width,
                channels,
            });
        }
        let expected = height * width * channels;
        if values.len() != expected {
            return Err(Error::BufferLength {
                expected,
                actual: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self {
            height,
            width,
            channels,
            values,
        })
    }

    /// Single-channel grid from a closure over `(y, x)`.
    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                values.push(f(y, x));
            }
        }
        Self::new(height, width, 1, values)
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.plane_len();
        &self.values[c * n..(c + 1) * n]
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.values[c * self.plane_len() + y * self.width + x]
    }

    /// Channel vector at one pixel.
    pub fn pixel(&self, y: usize, x: usize) -> impl Iterator<Item = f64> + '_ {
        let n = self.plane_len();
        let i = y * self.width + x;
        (0..self.channels).map(move |c| self.values[c * n + i])
    }

    /// Copy of the pixels covered by `window`.
    pub fn crop(&self, window: BBox) -> Result<Self> {
        window.check_within(self.width, self.height)?;
        let (h, w) = (window.height(), window.width());
        let mut values = Vec::with_capacity(h * w * self.channels);
        for c in 0..self.channels {
            let plane = self.channel(c);
            for y in window.y0..window.y1 {
                values.extend_from_slice(&plane[y * self.width + window.x0..y * self.width + window.x1]);
            }
        }
        Self::new(h, w, self.channels, values)
    }

    /// Channel-wise concatenation of two spatially aligned grids.
    pub fn concat(&self, other: &Grid) -> Result<Self> {
        if self.height != other.height || self.width != other.width {
            return Err(Error::ShapeMismatch(format!(
                "cannot concatenate {}x{} with {}x{}",
                self.height, self.width, other.height, other.width
            )));
        }
        let mut values = self.values.clone();
        values.extend_from_slice(&other.values);
        Self::new(self.height, self.width, self.channels + other.channels, values)
    }

    pub(crate) fn from_parts_unchecked(height: usize, width: usize, channels: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), height * width * channels);
        Self {
            height,
            width,
            channels,
            values,
        }
    }
}

/// Half-open integer pixel rectangle `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl BBox {
    pub fn new(x0: usize, y0: usize, x1: usize, y1: usize) -> Self {
        Self { x0, y0, x1, y1 }
    }

    /// Box with the plane check applied.
    pub fn within(x0: usize, y0: usize, x1: usize, y1: usize, width: usize, height: usize) -> Result<Self> {
        let b = Self::new(x0, y0, x1, y1);
        b.check_within(width, height)?;
        Ok(b)
    }

    pub fn check_within(&self, width: usize, height: usize) -> Result<()> {
        if self.x0 < self.x1 && self.y0 < self.y1 && self.x1 <= width && self.y1 <= height {
            Ok(())
        } else {
            Err(Error::InvalidBox {
                x0: self.x0,
                y0: self.y0,
                x1: self.x1,
                y1: self.y1,
                width,
                height,
            })
        }
    }

    pub fn width(&self) -> usize {
        self.x1 - self.x0
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0
    }

    pub fn area(&self) -> usize {
        self.width() * self.height()
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    pub fn contains_box(&self, other: &BBox) -> bool {
        other.x0 >= self.x0 && other.x1 <= self.x1 && other.y0 >= self.y0 && other.y1 <= self.y1
    }

    /// Grow by `fraction` of the box size on each side (rounded up), clipped to the plane.
    pub fn dilate(&self, fraction: f64, width: usize, height: usize) -> BBox {
        let mx = (fraction * self.width() as f64).ceil() as usize;
        let my = (fraction * self.height() as f64).ceil() as usize;
        BBox {
            x0: self.x0.saturating_sub(mx),
            y0: self.y0.saturating_sub(my),
            x1: (self.x1 + mx).min(width),
            y1: (self.y1 + my).min(height),
        }
    }

    /// Coordinates of `self` relative to the origin of `outer`.
    pub fn relative_to(&self, outer: &BBox) -> BBox {
        BBox {
            x0: self.x0 - outer.x0,
            y0: self.y0 - outer.y0,
            x1: self.x1 - outer.x0,
            y1: self.y1 - outer.y0,
        }
    }
}

/// Real field over a box window of the image plane.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSetField {
    window: BBox,
    phi: Vec<f64>,
}

impl LevelSetField {
    pub fn new(window: BBox, phi: Vec<f64>) -> Result<Self> {
        if window.x1 <= window.x0 || window.y1 <= window.y0 {
            return Err(Error::InvalidBox {
                x0: window.x0,
                y0: window.y0,
                x1: window.x1,
                y1: window.y1,
                width: window.x1,
                height: window.y1,
            });
        }
        if phi.len() != window.area() {
            return Err(Error::BufferLength {
                expected: window.area(),
                actual: phi.len(),
            });
        }
        if let Some(i) = phi.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { window, phi })
    }

    pub fn filled(window: BBox, value: f64) -> Result<Self> {
        Self::new(window, vec![value; window.area()])
    }

    /// Field from a closure over window-local `(y, x)`.
    pub fn from_fn(window: BBox, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut phi = Vec::with_capacity(window.area());
        for y in 0..window.height() {
            for x in 0..window.width() {
                phi.push(f(y, x));
            }
        }
        Self::new(window, phi)
    }

    pub fn window(&self) -> BBox {
        self.window
    }

    pub fn height(&self) -> usize {
        self.window.height()
    }

    pub fn width(&self) -> usize {
        self.window.width()
    }

    pub fn values(&self) -> &[f64] {
        &self.phi
    }

    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.phi[y * self.width() + x]
    }

    /// Sub-field over `sub`, given in image coordinates.
    pub fn crop(&self, sub: BBox) -> Result<Self> {
        if !self.window.contains_box(&sub) {
            return Err(Error::ShapeMismatch(format!("{sub:?} is not inside {:?}", self.window)));
        }
        let local = sub.relative_to(&self.window);
        let w = self.width();
        let mut phi = Vec::with_capacity(sub.area());
        for y in local.y0..local.y1 {
            phi.extend_from_slice(&self.phi[y * w + local.x0..y * w + local.x1]);
        }
        Ok(Self { window: sub, phi })
    }

    pub(crate) fn with_values(&self, phi: Vec<f64>) -> Self {
        debug_assert_eq!(phi.len(), self.phi.len());
        Self {
            window: self.window,
            phi,
        }
    }
}

/// Binary mask, one byte per pixel holding 0 or 1.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    bits: Vec<u8>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, bits: Vec<u8>) -> Result<Self> {
        if bits.len() != height * width {
            return Err(Error::BufferLength {
                expected: height * width,
                actual: bits.len(),
            });
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::ShapeMismatch("binary mask values must be 0 or 1".into()));
        }
        Ok(Self { height, width, bits })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            bits: vec![0; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(y, x) as u8);
            }
        }
        Self { height, width, bits }
    }

    /// Indicator of `bbox` on a `height x width` plane.
    pub fn from_box(height: usize, width: usize, bbox: BBox) -> Self {
        Self::from_fn(height, width, |y, x| bbox.contains(x, y))
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.bits[y * self.width + x] != 0
    }

    pub fn set(&mut self, y: usize, x: usize, on: bool) {
        self.bits[y * self.width + x] = on as u8;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum()
    }

    pub fn to_soft(&self) -> SoftMask {
        SoftMask {
            height: self.height,
            width: self.width,
            values: self.bits.iter().map(|&b| b as f64).collect(),
        }
    }
}

/// Soft foreground probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftMask {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl SoftMask {
    /// Soft mask with values in `[0, 1]`.
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::EmptyGrid {
                height,
                width,
                channels: 1,
            });
        }
        if values.len() != height * width {
            return Err(Error::BufferLength {
                expected: height * width,
                actual: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::OutOfUnitRange(i));
        }
        Ok(Self { height, width, values })
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                values.push(f(y, x));
            }
        }
        Self::new(height, width, values)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.values[y * self.width + x]
    }

    /// Pixels strictly above `threshold`.
    pub fn threshold(&self, threshold: f64) -> BinaryMask {
        BinaryMask {
            height: self.height,
            width: self.width,
            bits: self.values.iter().map(|&v| (v > threshold) as u8).collect(),
        }
    }
}

#[inline]
pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Derivative of the sigmoid, `s (1 - s)`.
#[inline]
pub fn sigmoid_prime(v: f64) -> f64 {
    let s = sigmoid(v);
    s * (1.0 - s)
}

/// Soft mask `1 / (1 + exp(-phi))` over the field's window.
pub fn sigmoid_field(phi: &LevelSetField) -> SoftMask {
    SoftMask {
        height: phi.height(),
        width: phi.width(),
        values: phi.values().iter().map(|&v| sigmoid(v)).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// One entry per column.
    X,
    /// One entry per row.
    Y,
}

/// Max-pooling of the mask onto one axis.
pub fn axis_projection(mask: &SoftMask, axis: Axis) -> Vec<f64> {
    let (h, w) = (mask.height, mask.width);
    match axis {
        Axis::X => {
            let mut out = vec![f64::NEG_INFINITY; w];
            for row in mask.values.chunks_exact(w) {
                for (o, &v) in out.iter_mut().zip(row) {
                    *o = o.max(v);
                }
            }
            out
        }
        Axis::Y => (0..h)
            .map(|y| {
                mask.values[y * w..(y + 1) * w]
                    .iter()
                    .copied()
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect(),
    }
}

/// Soft dice `2 sum(p g) / (sum(p^2) + sum(g^2))`, with the empty pair defined as 1.
pub fn dice_1d(p: &[f64], g: &[f64]) -> Result<f64> {
    Ok(dice_1d_flagged(p, g)?.0)
}

/// Like [`dice_1d`], also reporting whether both inputs were all-zero.
pub fn dice_1d_flagged(p: &[f64], g: &[f64]) -> Result<(f64, bool)> {
    if p.len() != g.len() {
        return Err(Error::ShapeMismatch(format!(
            "dice over vectors of length {} and {}",
            p.len(),
            g.len()
        )));
    }
    let (mut pg, mut pp, mut gg) = (0.0, 0.0, 0.0);
    for (&a, &b) in p.iter().zip(g) {
        pg += a * b;
        pp += a * a;
        gg += b * b;
    }
    let denom = pp + gg;
    if denom == 0.0 {
        return Ok((1.0, true));
    }
    Ok((2.0 * pg / denom, false))
}

/// Per-channel min-max normalization using the statistics of the pixels inside `region`.
///
/// The whole grid is mapped with the region's affine transform and clamped
/// to `[0, 1]`. A channel that is constant inside the region maps to 0.5.
pub fn normalize(grid: &Grid, region: BBox) -> Result<Grid> {
    region.check_within(grid.width, grid.height)?;
    let mut values = Vec::with_capacity(grid.values.len());
    for c in 0..grid.channels {
        let plane = grid.channel(c);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for y in region.y0..region.y1 {
            for &v in &plane[y * grid.width + region.x0..y * grid.width + region.x1] {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        let range = hi - lo;
        if range > 0.0 {
            values.extend(plane.iter().map(|&v| ((v - lo) / range).clamp(0.0, 1.0)));
        } else {
            values.extend(std::iter::repeat(0.5).take(plane.len()));
        }
    }
    Ok(Grid::from_parts_unchecked(
        grid.height,
        grid.width,
        grid.channels,
        values,
    ))
}

/// [`normalize`] over the whole plane.
pub fn normalize_full(grid: &Grid) -> Grid {
    let all = BBox::new(0, 0, grid.width, grid.height);
    normalize(grid, all).expect("full-plane box is always valid")
}
