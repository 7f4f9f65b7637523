//! Traditional stereo matchers that produce the noisy disparity maps the
//! refinement network consumes: census / AD-census costs, semi-global
//! aggregation, winner-take-all and the unbalanced-pair wrapper.

mod census;
mod cost;
mod sgm;

pub use census::{census_transform, hamming, CensusGrid};
pub use cost::{
    matching_cost, CostMode, CostVolume, AD_CENSUS_LAMBDA_AD, AD_CENSUS_LAMBDA_CENSUS,
    AD_CENSUS_SIGMA_AD, AD_CENSUS_SIGMA_CENSUS, OUT_OF_FRAME_COST,
};
pub use sgm::{
    aggregate_path, lr_consistency, path_directions, right_view_volume, sgm_aggregate, wta,
    SgmParams,
};

use crate::error::Result;
use crate::grid::{resize_bilinear, resize_nearest, scale_disparity_values, DisparityMap, StereoPair};

#[derive(Debug, Clone, PartialEq)]
pub struct BlackboxConfig {
    pub sgm: SgmParams,
    pub mode: CostMode,
    /// Largest disparity hypothesis, in pixels at the resolution the matcher
    /// actually runs at (the right image's resolution for unbalanced pairs).
    pub d_max: usize,
    pub census_window: usize,
}

impl Default for BlackboxConfig {
    fn default() -> Self {
        BlackboxConfig {
            sgm: SgmParams::default(),
            mode: CostMode::Census,
            d_max: 32,
            census_window: 5,
        }
    }
}

/// Full matcher on an equal-size pair: cost volume, SGM aggregation, WTA and
/// (optionally) the left-right consistency check.
fn match_balanced(pair: &StereoPair, config: &BlackboxConfig) -> Result<DisparityMap> {
    let volume = matching_cost(pair, config.d_max, config.mode, config.census_window)?;
    let aggregated = sgm_aggregate(&volume, &config.sgm)?;
    let left = wta(&aggregated);
    if !config.sgm.lr_check {
        return Ok(left);
    }
    let right = wta(&right_view_volume(&aggregated));
    lr_consistency(&left, &right, config.sgm.lr_threshold)
}

/// Runs the stereo blackbox and returns a disparity map at the *left* image
/// resolution, in left-image pixel units.
///
/// Balanced pairs go straight through the matcher. For unbalanced pairs
/// (`kappa > 1`) the left image is bilinearly downsampled to the right
/// image's size, the matcher runs there, and the low-resolution result is
/// upsampled back by nearest neighbor with its values multiplied by `kappa`.
pub fn run_blackbox(pair: &StereoPair, config: &BlackboxConfig) -> Result<DisparityMap> {
    if pair.is_balanced() {
        return match_balanced(pair, config);
    }
    let (wr, hr) = (pair.right.width(), pair.right.height());
    let left_down = resize_bilinear(&pair.left, wr, hr)?;
    let low_pair = StereoPair::new(left_down, pair.right.clone())?;
    let low = match_balanced(&low_pair, config)?;
    let up = resize_nearest(low.grid(), pair.left.width(), pair.left.height())?;
    scale_disparity_values(&DisparityMap::new(up)?, pair.kappa())
}
