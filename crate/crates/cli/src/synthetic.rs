//! Synthetic 64x64 scenes with known ground truth, shared by `selftest`, `bench` and the tests.

use boxseg_core::{BBox, BinaryMask, Grid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SIZE: usize = 64;

#[derive(Debug, Clone)]
pub struct Scene {
    pub name: String,
    pub image: Grid,
    pub features: Option<Grid>,
    pub boxes: Vec<BBox>,
    /// One per box; `None` when the scene only checks convergence.
    pub truth: Vec<Option<BinaryMask>>,
}

fn disk_at(y: usize, x: usize) -> bool {
    (x as f64 - 31.5).powi(2) + (y as f64 - 31.5).powi(2) <= 144.0
}

pub fn bright_square() -> Scene {
    let sq = BBox::new(20, 20, 44, 44);
    Scene {
        name: "bright square".into(),
        image: Grid::from_fn(SIZE, SIZE, |y, x| sq.contains(x, y) as u8 as f64).unwrap(),
        features: None,
        boxes: vec![BBox::new(16, 16, 48, 48)],
        truth: vec![Some(BinaryMask::from_box(SIZE, SIZE, sq))],
    }
}

pub fn bright_disk() -> Scene {
    Scene {
        name: "bright disk".into(),
        image: Grid::from_fn(SIZE, SIZE, |y, x| disk_at(y, x) as u8 as f64).unwrap(),
        features: None,
        boxes: vec![BBox::new(16, 16, 48, 48)],
        truth: vec![Some(BinaryMask::from_fn(SIZE, SIZE, disk_at))],
    }
}

/// A vertical step edge at column `split` inside a wide box.
pub fn two_regions(split: usize) -> Scene {
    Scene {
        name: format!("two regions at x={split}"),
        image: Grid::from_fn(SIZE, SIZE, |_, x| if x < split { 0.2 } else { 0.8 }).unwrap(),
        features: None,
        boxes: vec![BBox::new(8, 8, 56, 56)],
        truth: vec![None],
    }
}

pub fn two_squares() -> Scene {
    let a = BBox::new(6, 8, 26, 28);
    let b = BBox::new(36, 34, 58, 56);
    Scene {
        name: "two instances".into(),
        image: Grid::from_fn(
            SIZE,
            SIZE,
            |y, x| if a.contains(x, y) || b.contains(x, y) { 0.9 } else { 0.1 },
        )
        .unwrap(),
        features: None,
        boxes: vec![BBox::new(3, 5, 29, 31), BBox::new(33, 31, 61, 59)],
        truth: vec![
            Some(BinaryMask::from_box(SIZE, SIZE, a)),
            Some(BinaryMask::from_box(SIZE, SIZE, b)),
        ],
    }
}

/// Random 0.2/0.8 texture everywhere, so object and background share one mean;
/// only the feature channel marks the object.
pub fn camouflage(seed: u64) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let obj = BBox::new(22, 22, 42, 42);
    let img: Vec<f64> = (0..SIZE * SIZE)
        .map(|_| if rng.gen_bool(0.5) { 0.8 } else { 0.2 })
        .collect();
    let feat: Vec<f64> = (0..SIZE * SIZE)
        .map(|i| obj.contains(i % SIZE, i / SIZE) as u8 as f64 + 0.1 * rng.gen_range(-1.0..1.0))
        .collect();
    Scene {
        name: format!("camouflage seed {seed}"),
        image: Grid::new(SIZE, SIZE, 1, img).unwrap(),
        features: Some(Grid::new(SIZE, SIZE, 1, feat).unwrap()),
        boxes: vec![BBox::new(18, 18, 46, 46)],
        truth: vec![Some(BinaryMask::from_box(SIZE, SIZE, obj))],
    }
}

/// Scenes whose every run must descend and converge.
pub fn convergence_suite() -> Vec<Scene> {
    let mut v = vec![bright_square(), bright_disk(), two_squares()];
    v.extend([20, 32, 44].map(two_regions));
    v
}

/// A noisy bright square of side `size / 2` centred in a `size` x `size` image.
pub fn noisy_square(size: usize, seed: u64) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = size / 4;
    let sq = BBox::new(q, q, size - q, size - q);
    let vals = (0..size * size)
        .map(|i| sq.contains(i % size, i / size) as u8 as f64 * 0.6 + 0.2 + 0.1 * rng.gen_range(-1.0..1.0))
        .collect();
    let m = q / 2;
    Scene {
        name: format!("noisy square {size}"),
        image: Grid::new(size, size, 1, vals).unwrap(),
        features: None,
        boxes: vec![BBox::new(q - m, q - m, size - q + m, size - q + m)],
        truth: vec![Some(BinaryMask::from_box(size, size, sq))],
    }
}
