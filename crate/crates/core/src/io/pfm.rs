//! PFM reader/writer in the Middlebury convention: `Pf`/`PF` magic,
//! whitespace-separated dimensions, a scale whose sign encodes endianness
//! (negative = little-endian), then rows of `f32` samples stored
//! bottom-to-top. Disparity maps use non-finite samples for missing pixels.

use crate::error::{Error, Result};
use crate::grid::{DisparityMap, PixelGrid, INVALID_DISPARITY};
use std::fs;
use std::io::Write;
use std::path::Path;

/// Writes a 1- or 3-channel grid as little-endian PFM (scale -1.0).
pub fn write_pfm(path: &Path, grid: &PixelGrid) -> Result<()> {
    let channels = grid.channels();
    let magic = match channels {
        1 => "Pf",
        3 => "PF",
        c => {
            return Err(Error::domain(format!(
                "PFM supports 1 or 3 channels, got {c}"
            )))
        }
    };
    let mut buf = Vec::with_capacity(32 + grid.data().len() * 4);
    write!(buf, "{}\n{} {}\n-1.0\n", magic, grid.width(), grid.height())?;
    // Bottom row first.
    for y in (0..grid.height()).rev() {
        for x in 0..grid.width() {
            for c in 0..channels {
                buf.extend_from_slice(&(grid.get(x, y, c) as f32).to_le_bytes());
            }
        }
    }
    fs::write(path, buf)?;
    Ok(())
}

pub fn read_pfm(path: &Path) -> Result<PixelGrid> {
    let bytes = fs::read(path)?;
    parse_pfm(&bytes).map_err(|e| Error::format(format!("{}: {e}", path.display())))
}

fn parse_pfm(bytes: &[u8]) -> std::result::Result<PixelGrid, String> {
    let mut pos = 0usize;
    let mut token = |expect: &str| -> std::result::Result<String, String> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(format!("missing {expect} in PFM header"));
        }
        // Exactly one whitespace byte terminates the last header token before
        // the raster starts.
        pos += 1;
        String::from_utf8(bytes[start..pos - 1].to_vec()).map_err(|_| "non-ASCII header".into())
    };

    let magic = token("magic")?;
    let channels = match magic.as_str() {
        "Pf" => 1usize,
        "PF" => 3usize,
        m => return Err(format!("bad PFM magic {m:?}")),
    };
    let width: usize = token("width")?.parse().map_err(|_| "bad width")?;
    let height: usize = token("height")?.parse().map_err(|_| "bad height")?;
    let scale: f64 = token("scale")?.parse().map_err(|_| "bad scale")?;
    if width == 0 || height == 0 {
        return Err("zero dimension".into());
    }
    let little_endian = scale < 0.0;

    let expected = width * height * channels * 4;
    let raster = &bytes[pos..];
    if raster.len() < expected {
        return Err(format!(
            "raster too short: {} bytes, expected {expected}",
            raster.len()
        ));
    }

    let mut grid = PixelGrid::new(width, height, channels).map_err(|e| e.to_string())?;
    let mut off = 0usize;
    for y in (0..height).rev() {
        for x in 0..width {
            for c in 0..channels {
                let raw: [u8; 4] = raster[off..off + 4].try_into().unwrap();
                let v = if little_endian {
                    f32::from_le_bytes(raw)
                } else {
                    f32::from_be_bytes(raw)
                };
                grid.set(x, y, c, v as f64);
                off += 4;
            }
        }
    }
    Ok(grid)
}

/// Writes a disparity map; invalid pixels become `+inf` samples, which is how
/// Middlebury ground truth marks unknown disparity.
pub fn write_disparity_pfm(path: &Path, d: &DisparityMap) -> Result<()> {
    let grid = d.grid().map(|v| if v >= 0.0 { v } else { f64::INFINITY });
    write_pfm(path, &grid)
}

/// Reads a disparity PFM; non-finite or negative samples map to the invalid
/// sentinel.
pub fn read_disparity_pfm(path: &Path) -> Result<DisparityMap> {
    let grid = read_pfm(path)?;
    if grid.channels() != 1 {
        return Err(Error::format(format!(
            "{}: disparity PFM must be grayscale",
            path.display()
        )));
    }
    DisparityMap::new(grid.map(|v| if v.is_finite() && v >= 0.0 { v } else { INVALID_DISPARITY }))
}
