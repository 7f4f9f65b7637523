//! 8-bit PNG via the `image` crate; grayscale and RGB only.

use crate::error::{Error, Result};
use crate::grid::PixelGrid;
use image::{DynamicImage, ImageBuffer, Luma, Rgb};
use std::path::Path;

pub fn read_png(path: &Path) -> Result<PixelGrid> {
    let img = image::open(path).map_err(|e| Error::format(format!("{}: {e}", path.display())))?;
    match img {
        DynamicImage::ImageLuma8(g) => {
            let (w, h) = (g.width() as usize, g.height() as usize);
            PixelGrid::from_vec(w, h, 1, g.into_raw().into_iter().map(f64::from).collect())
        }
        other => {
            // Anything with color or alpha funnels through RGB8.
            let rgb = other.to_rgb8();
            let (w, h) = (rgb.width() as usize, rgb.height() as usize);
            PixelGrid::from_vec(w, h, 3, rgb.into_raw().into_iter().map(f64::from).collect())
        }
    }
}

/// Writes a 1- or 3-channel grid as 8-bit PNG; values are rounded and
/// clamped to `[0, 255]`.
pub fn write_png(path: &Path, grid: &PixelGrid) -> Result<()> {
    let quantize = |v: f64| v.round().clamp(0.0, 255.0) as u8;
    let (w, h) = (grid.width() as u32, grid.height() as u32);
    let result = match grid.channels() {
        1 => {
            let raw: Vec<u8> = grid.data().iter().map(|&v| quantize(v)).collect();
            ImageBuffer::<Luma<u8>, _>::from_raw(w, h, raw)
                .expect("sized buffer")
                .save(path)
        }
        3 => {
            let raw: Vec<u8> = grid.data().iter().map(|&v| quantize(v)).collect();
            ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, raw)
                .expect("sized buffer")
                .save(path)
        }
        c => {
            return Err(Error::domain(format!(
                "PNG output supports 1 or 3 channels, got {c}"
            )))
        }
    };
    result.map_err(|e| Error::format(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn roundtrip_gray() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("g.png");
        let g = PixelGrid::from_vec(4, 2, 1, (0..8).map(|i| (i * 30) as f64).collect()).unwrap();
        write_png(&path, &g).unwrap();
        assert_eq!(read_png(&path).unwrap(), g);
    }

    #[test]
    fn roundtrip_rgb() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("c.png");
        let g = PixelGrid::from_vec(2, 2, 3, (0..12).map(|i| (i * 20) as f64).collect()).unwrap();
        write_png(&path, &g).unwrap();
        assert_eq!(read_png(&path).unwrap(), g);
    }
}
