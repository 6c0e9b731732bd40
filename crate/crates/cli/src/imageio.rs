use std::path::Path;

use boxseg_core::{BinaryMask, Grid};
use image::{DynamicImage, GrayImage, Luma};

use crate::error::{CliError, Result};

/// Grayscale images give one channel, everything else three (RGB), scaled to `[0, 1]`.
pub fn to_grid(img: &DynamicImage) -> Result<Grid> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let grid = if img.color().has_color() {
        let rgb = img.to_rgb32f();
        let mut values = vec![0.0; 3 * h * w];
        for (x, y, p) in rgb.enumerate_pixels() {
            for c in 0..3 {
                values[c * h * w + y as usize * w + x as usize] = p.0[c] as f64;
            }
        }
        Grid::new(h, w, 3, values)?
    } else {
        let luma = img.to_luma32f();
        Grid::new(h, w, 1, luma.pixels().map(|p| p.0[0] as f64).collect())?
    };
    Ok(grid)
}

pub fn load(path: &Path) -> Result<Grid> {
    let img = image::open(path).map_err(|source| CliError::Image {
        path: path.to_path_buf(),
        source,
    })?;
    to_grid(&img)
}

pub fn save_mask(path: &Path, mask: &BinaryMask) -> Result<()> {
    let img = GrayImage::from_fn(mask.width() as u32, mask.height() as u32, |x, y| {
        Luma([if mask.get(y as usize, x as usize) { 255 } else { 0 }])
    });
    img.save(path).map_err(|source| CliError::Image {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.png");
        let mask = BinaryMask::from_fn(5, 7, |y, x| (x + y) % 3 == 0);
        save_mask(&path, &mask).unwrap();
        let grid = load(&path).unwrap();
        assert_eq!(grid.channels(), 1);
        assert_eq!((grid.height(), grid.width()), (5, 7));
        for y in 0..5 {
            for x in 0..7 {
                assert_eq!(grid.get(0, y, x), mask.get(y, x) as u8 as f64);
            }
        }
    }

    #[test]
    fn rgb_images_have_three_channels() {
        let img = DynamicImage::ImageRgb8(image::RgbImage::from_fn(3, 2, |x, _| {
            image::Rgb([255, 0, (x * 100) as u8])
        }));
        let g = to_grid(&img).unwrap();
        assert_eq!(g.channels(), 3);
        assert_eq!(g.get(0, 1, 2), 1.0);
        assert_eq!(g.get(1, 0, 0), 0.0);
        assert!((g.get(2, 0, 1) - 100.0 / 255.0).abs() < 1e-6);
    }
}
