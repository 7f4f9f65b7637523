//! Binary (`P5`) PGM with 8- or 16-bit samples; 16-bit samples are big-endian
//! per the format. Values pass through unscaled.

use crate::error::{Error, Result};
use crate::grid::PixelGrid;
use std::fs;
use std::io::Write;
use std::path::Path;

/// Writes a single-channel grid; `maxval <= 255` selects 8-bit storage.
/// Values are rounded and clamped to `[0, maxval]`.
pub fn write_pgm(path: &Path, grid: &PixelGrid, maxval: u16) -> Result<()> {
    if grid.channels() != 1 {
        return Err(Error::domain("PGM requires a single-channel grid"));
    }
    if maxval == 0 {
        return Err(Error::domain("PGM maxval must be >= 1"));
    }
    let mut buf = Vec::with_capacity(32 + grid.data().len() * 2);
    write!(buf, "P5\n{} {}\n{}\n", grid.width(), grid.height(), maxval)?;
    for &v in grid.data() {
        let q = v.round().clamp(0.0, maxval as f64) as u16;
        if maxval <= 255 {
            buf.push(q as u8);
        } else {
            buf.extend_from_slice(&q.to_be_bytes());
        }
    }
    fs::write(path, buf)?;
    Ok(())
}

pub fn read_pgm(path: &Path) -> Result<PixelGrid> {
    let bytes = fs::read(path)?;
    parse_pgm(&bytes).map_err(|e| Error::format(format!("{}: {e}", path.display())))
}

fn parse_pgm(bytes: &[u8]) -> std::result::Result<PixelGrid, String> {
    let mut pos = 0usize;
    let mut token = || -> std::result::Result<String, String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated PGM header".into());
        }
        pos += 1; // single whitespace after the last header token
        String::from_utf8(bytes[start..pos - 1].to_vec()).map_err(|_| "non-ASCII header".into())
    };

    if token()? != "P5" {
        return Err("only binary (P5) PGM is supported".into());
    }
    let width: usize = token()?.parse().map_err(|_| "bad width")?;
    let height: usize = token()?.parse().map_err(|_| "bad height")?;
    let maxval: u32 = token()?.parse().map_err(|_| "bad maxval")?;
    if width == 0 || height == 0 || maxval == 0 || maxval > 65535 {
        return Err("bad PGM dimensions or maxval".into());
    }
    let wide = maxval > 255;
    let expected = width * height * if wide { 2 } else { 1 };
    let raster = &bytes[pos..];
    if raster.len() < expected {
        return Err(format!(
            "raster too short: {} bytes, expected {expected}",
            raster.len()
        ));
    }
    let mut grid = PixelGrid::new(width, height, 1).map_err(|e| e.to_string())?;
    for i in 0..width * height {
        let v = if wide {
            u16::from_be_bytes([raster[2 * i], raster[2 * i + 1]]) as f64
        } else {
            raster[i] as f64
        };
        grid.data_mut()[i] = v;
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn roundtrip_8bit() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("a.pgm");
        let g = PixelGrid::from_vec(3, 2, 1, vec![0.0, 10.0, 255.0, 7.0, 128.0, 64.0]).unwrap();
        write_pgm(&path, &g, 255).unwrap();
        assert_eq!(read_pgm(&path).unwrap(), g);
    }

    #[test]
    fn roundtrip_16bit() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("b.pgm");
        let g = PixelGrid::from_vec(2, 2, 1, vec![0.0, 1000.0, 65535.0, 300.0]).unwrap();
        write_pgm(&path, &g, 65535).unwrap();
        assert_eq!(read_pgm(&path).unwrap(), g);
    }

    #[test]
    fn values_clamp_on_write() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("c.pgm");
        let g = PixelGrid::from_vec(2, 1, 1, vec![-5.0, 300.0]).unwrap();
        write_pgm(&path, &g, 255).unwrap();
        assert_eq!(read_pgm(&path).unwrap().data(), &[0.0, 255.0]);
    }

    #[test]
    fn comments_skipped() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("d.pgm");
        std::fs::write(&path, b"P5\n# comment\n2 1\n255\n\x05\x09").unwrap();
        assert_eq!(read_pgm(&path).unwrap().data(), &[5.0, 9.0]);
    }
}
