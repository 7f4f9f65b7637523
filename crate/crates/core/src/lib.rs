//! Disparity refinement for arbitrary-resolution stereo.
//!
//! A traditional matcher (census or AD-census cost, semi-global aggregation,
//! winner-take-all) produces a noisy disparity map, and a coordinate-based
//! refinement network re-predicts disparity at any continuous location of the
//! reference image, so the refined map can be rendered at any output
//! resolution — including above the input one, which is what makes unbalanced
//! (different-resolution) stereo pairs work.
//!
//! Modules:
//! - [`grid`]: rasters, continuous-coordinate sampling, resizing
//! - [`io`]: PGM / PNG / PFM / PLY readers and writers
//! - [`blackbox`]: the traditional stereo matchers
//! - [`autodiff`]: reverse-mode tape, Adam, checkpoints
//! - [`net`]: the refinement network itself
//! - [`train`]: loss, synthetic scenes, training loop
//! - [`eval`]: EPE / bad-th / SEE metrics and point-cloud export
//! - [`cli`]: the `stereo-refine` command-line frontend

pub mod autodiff;
pub mod blackbox;
pub mod cli;
pub mod config;
pub mod error;
pub mod eval;
pub mod grid;
pub mod io;
pub mod net;
pub mod train;

pub use error::{Error, Result};
pub use grid::{
    bilinear_sample, resize_bilinear, resize_nearest, scale_disparity_values, ContinuousCoord,
    DisparityMap, PixelGrid, StereoPair, INVALID_DISPARITY,
};
