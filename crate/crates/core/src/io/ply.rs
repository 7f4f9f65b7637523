//! PLY point-cloud writer, ASCII or binary little-endian, with per-vertex
//! color — the standard payload for inspecting disparity edges in 3D.

use crate::error::Result;
use std::fs;
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlyVertex {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub r: u8,
    pub g: u8,
    pub b: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

pub fn write_ply(path: &Path, vertices: &[PlyVertex], format: PlyFormat) -> Result<()> {
    let mut buf = Vec::with_capacity(128 + vertices.len() * 27);
    let fmt = match format {
        PlyFormat::Ascii => "ascii",
        PlyFormat::BinaryLittleEndian => "binary_little_endian",
    };
    write!(
        buf,
        "ply\nformat {fmt} 1.0\nelement vertex {}\n\
         property float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\n\
         end_header\n",
        vertices.len()
    )?;
    for v in vertices {
        match format {
            PlyFormat::Ascii => {
                writeln!(buf, "{} {} {} {} {} {}", v.x as f32, v.y as f32, v.z as f32, v.r, v.g, v.b)?;
            }
            PlyFormat::BinaryLittleEndian => {
                buf.extend_from_slice(&(v.x as f32).to_le_bytes());
                buf.extend_from_slice(&(v.y as f32).to_le_bytes());
                buf.extend_from_slice(&(v.z as f32).to_le_bytes());
                buf.extend_from_slice(&[v.r, v.g, v.b]);
            }
        }
    }
    fs::write(path, buf)?;
    Ok(())
}
