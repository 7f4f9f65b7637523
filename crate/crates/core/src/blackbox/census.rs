//! Census transform: each pixel becomes a bit pattern of intensity
//! comparisons against its window neighbors; matching cost is then the
//! Hamming distance between patterns, which is robust to radiometric
//! differences between the two cameras.

use crate::error::{Error, Result};
use crate::grid::PixelGrid;

/// Per-pixel census codes. Border pixels whose window exits the image carry
/// no code and are flagged invalid.
#[derive(Debug, Clone)]
pub struct CensusGrid {
    width: usize,
    height: usize,
    window: usize,
    codes: Vec<u64>,
    valid: Vec<bool>,
}

impl CensusGrid {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// Number of comparison bits per code: window area minus the center.
    pub fn bits(&self) -> usize {
        self.window * self.window - 1
    }

    #[inline]
    pub fn code(&self, x: usize, y: usize) -> u64 {
        self.codes[y * self.width + x]
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.valid[y * self.width + x]
    }
}

#[inline]
pub fn hamming(a: u64, b: u64) -> u32 {
    (a ^ b).count_ones()
}

/// Computes census codes over an odd `window`. Bits are laid out row-major
/// over the window excluding the center, first comparison in the highest
/// used bit; a bit is set iff the neighbor is strictly darker than the
/// center.
pub fn census_transform(image: &PixelGrid, window: usize) -> Result<CensusGrid> {
    if image.channels() != 1 {
        return Err(Error::domain(
            "census transform expects a grayscale image",
        ));
    }
    if window % 2 == 0 || window < 3 {
        return Err(Error::domain(format!(
            "census window must be odd and >= 3, got {window}"
        )));
    }
    if window > 7 {
        return Err(Error::domain(format!(
            "census window {window} exceeds the 64-bit code capacity (max 7)"
        )));
    }
    let (w, h) = (image.width(), image.height());
    let r = window / 2;
    let bits = window * window - 1;
    let mut codes = vec![0u64; w * h];
    let mut valid = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            if x < r || y < r || x + r >= w || y + r >= h {
                continue;
            }
            let center = image.get(x, y, 0);
            let mut code = 0u64;
            let mut bit = bits;
            for dy in 0..window {
                for dx in 0..window {
                    if dx == r && dy == r {
                        continue;
                    }
                    bit -= 1;
                    let neighbor = image.get(x + dx - r, y + dy - r, 0);
                    if neighbor < center {
                        code |= 1 << bit;
                    }
                }
            }
            codes[y * w + x] = code;
            valid[y * w + x] = true;
        }
    }
    Ok(CensusGrid {
        width: w,
        height: h,
        window,
        codes,
        valid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_all_zero_codes() {
        let img = PixelGrid::from_vec(5, 5, 1, vec![7.0; 25]).unwrap();
        let c = census_transform(&img, 3).unwrap();
        for y in 1..4 {
            for x in 1..4 {
                assert!(c.is_valid(x, y));
                assert_eq!(c.code(x, y), 0);
            }
        }
    }

    #[test]
    fn hand_evaluated_center_code() {
        // Neighbors of the center value 5 in row-major order: 1,2,3,4,6,7,8,9.
        let img =
            PixelGrid::from_vec(3, 3, 1, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0])
                .unwrap();
        let c = census_transform(&img, 3).unwrap();
        assert_eq!(c.code(1, 1), 0b1111_0000);
    }

    #[test]
    fn borders_flagged_invalid() {
        let img = PixelGrid::new(6, 6, 1).unwrap();
        let c = census_transform(&img, 5).unwrap();
        assert!(!c.is_valid(0, 0));
        assert!(!c.is_valid(1, 3));
        assert!(c.is_valid(2, 2));
        assert!(c.is_valid(3, 3));
        assert!(!c.is_valid(4, 3));
        assert_eq!(c.bits(), 24);
    }

    #[test]
    fn matches_naive_oracle_on_random_image() {
        let mut state = 0x12345678u64;
        let mut next = || {
            // xorshift, good enough for a fixture
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state % 256) as f64
        };
        let img = PixelGrid::from_vec(16, 16, 1, (0..256).map(|_| next()).collect()).unwrap();
        let c = census_transform(&img, 3).unwrap();
        for y in 1..15 {
            for x in 1..15 {
                // Oracle: build the bit string by explicit neighbor listing.
                let center = img.get(x, y, 0);
                let neighbors = [
                    (x - 1, y - 1), (x, y - 1), (x + 1, y - 1),
                    (x - 1, y), (x + 1, y),
                    (x - 1, y + 1), (x, y + 1), (x + 1, y + 1),
                ];
                let mut code = 0u64;
                for (i, &(nx, ny)) in neighbors.iter().enumerate() {
                    if img.get(nx, ny, 0) < center {
                        code |= 1 << (7 - i);
                    }
                }
                assert_eq!(c.code(x, y), code, "mismatch at ({x},{y})");
            }
        }
    }

    #[test]
    fn rejects_even_window() {
        let img = PixelGrid::new(8, 8, 1).unwrap();
        assert!(census_transform(&img, 4).is_err());
        assert!(census_transform(&img, 1).is_err());
        assert!(census_transform(&img, 9).is_err());
    }

    #[test]
    fn hamming_popcount() {
        assert_eq!(hamming(0b1010, 0b0110), 2);
        assert_eq!(hamming(0, 0), 0);
        assert_eq!(hamming(u64::MAX, 0), 64);
    }
}
