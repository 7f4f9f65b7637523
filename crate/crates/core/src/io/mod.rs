//! Image and geometry file formats: binary PGM (8/16-bit), 8-bit PNG, PFM in
//! the Middlebury disparity convention, and PLY point clouds.

mod pfm;
mod pgm;
mod ply;
mod png;

pub use pfm::{read_disparity_pfm, read_pfm, write_disparity_pfm, write_pfm};
pub use pgm::{read_pgm, write_pgm};
pub use ply::{write_ply, PlyFormat, PlyVertex};
pub use png::{read_png, write_png};

use crate::error::{Error, Result};
use crate::grid::PixelGrid;
use std::path::Path;

/// Reads an image by extension (`.png`, `.pgm`); values come back as raw
/// sample values (`0..255` for 8-bit data).
pub fn read_image(path: &Path) -> Result<PixelGrid> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("png") => read_png(path),
        Some("pgm") => read_pgm(path),
        other => Err(Error::format(format!(
            "unsupported image extension {:?} for {}",
            other,
            path.display()
        ))),
    }
}
