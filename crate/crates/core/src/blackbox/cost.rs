//! Matching-cost volumes: census Hamming distance or the blended AD-census
//! cost. Correspondences that fall outside the right image — and pixels whose
//! census window exits the frame — carry a large sentinel cost so that
//! winner-take-all can recognize them as unmatched.

use super::census::{census_transform, hamming};
use crate::error::{Error, Result};
use crate::grid::StereoPair;
use rayon::prelude::*;

/// Cost assigned to correspondences that cannot be evaluated. Must dominate
/// every achievable aggregated cost: with default SGM penalties the largest
/// in-frame aggregated cost is `num_paths * (cost_max + P2)`, well below this.
pub const OUT_OF_FRAME_COST: f64 = 1e4;

/// Exponential-normalization constants for the AD-census blend, with
/// intensities on a [0, 255] scale.
pub const AD_CENSUS_LAMBDA_AD: f64 = 1.0;
pub const AD_CENSUS_LAMBDA_CENSUS: f64 = 1.0;
pub const AD_CENSUS_SIGMA_AD: f64 = 10.0;
pub const AD_CENSUS_SIGMA_CENSUS: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostMode {
    Census,
    AdCensus,
}

impl std::str::FromStr for CostMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "census" => Ok(CostMode::Census),
            "ad-census" | "ad_census" => Ok(CostMode::AdCensus),
            other => Err(Error::config(format!("unknown cost mode {other:?}"))),
        }
    }
}

/// `W x H x (d_max + 1)` matching-cost tensor, disparity fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct CostVolume {
    width: usize,
    height: usize,
    d_max: usize,
    costs: Vec<f64>,
}

impl CostVolume {
    pub fn new(width: usize, height: usize, d_max: usize) -> Result<Self> {
        if width == 0 || height == 0 || d_max == 0 {
            return Err(Error::domain(format!(
                "cost volume dimensions must be positive, got {width}x{height}, d_max {d_max}"
            )));
        }
        Ok(CostVolume {
            width,
            height,
            d_max,
            costs: vec![0.0; width * height * (d_max + 1)],
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn d_max(&self) -> usize {
        self.d_max
    }

    /// Number of disparity hypotheses, `d_max + 1`.
    pub fn d_len(&self) -> usize {
        self.d_max + 1
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, d: usize) -> f64 {
        self.costs[(y * self.width + x) * (self.d_max + 1) + d]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, d: usize, v: f64) {
        self.costs[(y * self.width + x) * (self.d_max + 1) + d] = v;
    }

    /// All hypotheses of one pixel.
    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let base = (y * self.width + x) * (self.d_max + 1);
        &self.costs[base..base + self.d_max + 1]
    }

    pub fn data(&self) -> &[f64] {
        &self.costs
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.costs
    }
}

/// Builds the cost volume for an equal-size pair. Images are converted to
/// grayscale internally; AD-census assumes a [0, 255] intensity scale.
pub fn matching_cost(
    pair: &StereoPair,
    d_max: usize,
    mode: CostMode,
    census_window: usize,
) -> Result<CostVolume> {
    if !pair.is_balanced() {
        return Err(Error::domain(format!(
            "matching_cost requires equal image sizes, got {}x{} vs {}x{}",
            pair.left.width(),
            pair.left.height(),
            pair.right.width(),
            pair.right.height()
        )));
    }
    if d_max == 0 {
        return Err(Error::domain("d_max must be >= 1"));
    }
    let left = pair.left.to_gray()?;
    let right = pair.right.to_gray()?;
    let census_l = census_transform(&left, census_window)?;
    let census_r = census_transform(&right, census_window)?;

    let (w, h) = (left.width(), left.height());
    let mut volume = CostVolume::new(w, h, d_max)?;
    let d_len = d_max + 1;
    let row_stride = w * d_len;
    volume
        .data_mut()
        .par_chunks_mut(row_stride)
        .enumerate()
        .for_each(|(y, row)| {
            for x in 0..w {
                for d in 0..d_len {
                    let cost = if d > x || !census_l.is_valid(x, y) || !census_r.is_valid(x - d.min(x), y) {
                        OUT_OF_FRAME_COST
                    } else {
                        let xr = x - d;
                        let census_cost = hamming(census_l.code(x, y), census_r.code(xr, y)) as f64;
                        match mode {
                            CostMode::Census => census_cost,
                            CostMode::AdCensus => {
                                let ad = (left.get(x, y, 0) - right.get(xr, y, 0)).abs();
                                AD_CENSUS_LAMBDA_AD * (1.0 - (-ad / AD_CENSUS_SIGMA_AD).exp())
                                    + AD_CENSUS_LAMBDA_CENSUS
                                        * (1.0 - (-census_cost / AD_CENSUS_SIGMA_CENSUS).exp())
                            }
                        }
                    };
                    row[x * d_len + d] = cost;
                }
            }
        });
    Ok(volume)
}
