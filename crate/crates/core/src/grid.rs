//! Raster containers and the continuous-coordinate sampling primitives used
//! everywhere else: images, disparity maps and feature planes are all
//! [`PixelGrid`]s of `f64` scalars.
//!
//! Coordinate convention: pixel centers sit at integer coordinates, so a
//! `W x H` grid spans `[0, W-1] x [0, H-1]` and resizing aligns the corner
//! pixels of source and output ("align corners").

use crate::error::{Error, Result};

/// Sentinel value marking disparity pixels with no estimate.
pub const INVALID_DISPARITY: f64 = -1.0;

/// Row-major, channel-interleaved raster of `f64` scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelGrid {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl PixelGrid {
    /// Zero-filled grid.
    pub fn new(width: usize, height: usize, channels: usize) -> Result<Self> {
        if width == 0 || height == 0 || channels == 0 {
            return Err(Error::domain(format!(
                "grid dimensions must be positive, got {width}x{height}x{channels}"
            )));
        }
        Ok(PixelGrid {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        })
    }

    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || channels == 0 {
            return Err(Error::domain(format!(
                "grid dimensions must be positive, got {width}x{height}x{channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::domain(format!(
                "data length {} does not match {width}x{height}x{channels}",
                data.len()
            )));
        }
        Ok(PixelGrid {
            width,
            height,
            channels,
            data,
        })
    }

    /// Single-channel grid computed per pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        PixelGrid {
            width,
            height,
            channels: 1,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    fn idx(&self, x: usize, y: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        debug_assert!(x < self.width && y < self.height && c < self.channels);
        self.data[self.idx(x, y, c)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        let i = self.idx(x, y, c);
        self.data[i] = v;
    }

    /// All channels of one pixel (contiguous by layout).
    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let i = self.idx(x, y, 0);
        &self.data[i..i + self.channels]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Grayscale luma (`0.299 R + 0.587 G + 0.114 B`); single-channel grids
    /// are returned unchanged.
    pub fn to_gray(&self) -> Result<PixelGrid> {
        match self.channels {
            1 => Ok(self.clone()),
            3 => {
                let mut out = PixelGrid::new(self.width, self.height, 1)?;
                for y in 0..self.height {
                    for x in 0..self.width {
                        let p = self.pixel(x, y);
                        out.set(x, y, 0, 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]);
                    }
                }
                Ok(out)
            }
            c => Err(Error::domain(format!(
                "cannot convert {c}-channel grid to grayscale"
            ))),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> PixelGrid {
        PixelGrid {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// A real-valued location in a grid's pixel frame, bounded by
/// `[0, width-1] x [0, height-1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuousCoord {
    pub x: f64,
    pub y: f64,
}

impl ContinuousCoord {
    pub fn new(x: f64, y: f64) -> Self {
        ContinuousCoord { x, y }
    }
}

/// Single-channel disparity raster; values are pixels at the map's own
/// resolution, invalid pixels carry exactly [`INVALID_DISPARITY`].
#[derive(Debug, Clone, PartialEq)]
pub struct DisparityMap {
    grid: PixelGrid,
}

impl DisparityMap {
    pub fn new(grid: PixelGrid) -> Result<Self> {
        if grid.channels() != 1 {
            return Err(Error::domain(format!(
                "disparity map must be single-channel, got {}",
                grid.channels()
            )));
        }
        Ok(DisparityMap { grid })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        let mut grid = PixelGrid::new(width, height, 1)?;
        grid.data_mut().fill(value);
        DisparityMap::new(grid)
    }

    pub fn width(&self) -> usize {
        self.grid.width()
    }

    pub fn height(&self) -> usize {
        self.grid.height()
    }

    pub fn grid(&self) -> &PixelGrid {
        &self.grid
    }

    pub fn grid_mut(&mut self) -> &mut PixelGrid {
        &mut self.grid
    }

    pub fn into_grid(self) -> PixelGrid {
        self.grid
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.grid.get(x, y, 0)
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.grid.set(x, y, 0, v);
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.get(x, y) >= 0.0
    }

    #[inline]
    pub fn set_invalid(&mut self, x: usize, y: usize) {
        self.set(x, y, INVALID_DISPARITY);
    }

    pub fn valid_count(&self) -> usize {
        self.grid.data().iter().filter(|&&v| v >= 0.0).count()
    }

    /// Checks that every valid value lies in `[0, d_max]` and every other
    /// pixel carries exactly the sentinel.
    pub fn validate(&self, d_max: f64) -> Result<()> {
        for (i, &v) in self.grid.data().iter().enumerate() {
            if v >= 0.0 {
                if !(v <= d_max) {
                    return Err(Error::domain(format!(
                        "disparity {v} at index {i} exceeds d_max {d_max}"
                    )));
                }
            } else if v != INVALID_DISPARITY {
                return Err(Error::domain(format!(
                    "pixel {i} holds {v}, expected the invalid sentinel {INVALID_DISPARITY}"
                )));
            }
        }
        Ok(())
    }
}

/// Rectified image pair; the unbalance factor `kappa = w_l / w_r` is 1 for
/// the classical balanced setup.
#[derive(Debug, Clone)]
pub struct StereoPair {
    pub left: PixelGrid,
    pub right: PixelGrid,
    kappa: f64,
}

impl StereoPair {
    pub fn new(left: PixelGrid, right: PixelGrid) -> Result<Self> {
        let (wl, hl) = (left.width() as f64, left.height() as f64);
        let (wr, hr) = (right.width() as f64, right.height() as f64);
        let ar_l = wl / hl;
        let ar_r = wr / hr;
        if (ar_l - ar_r).abs() > 1e-6 * ar_l.max(ar_r) {
            return Err(Error::domain(format!(
                "aspect ratios differ: left {wl}x{hl}, right {wr}x{hr}"
            )));
        }
        let kappa = wl / wr;
        if kappa < 1.0 {
            return Err(Error::domain(format!(
                "unbalance factor must be >= 1 (left at least as large as right), got {kappa}"
            )));
        }
        Ok(StereoPair { left, right, kappa })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn is_balanced(&self) -> bool {
        self.left.width() == self.right.width() && self.left.height() == self.right.height()
    }
}

fn check_coord(grid: &PixelGrid, coord: ContinuousCoord) -> Result<()> {
    let (w, h) = (grid.width() as f64, grid.height() as f64);
    if !coord.x.is_finite() || !coord.y.is_finite() {
        return Err(Error::domain(format!(
            "non-finite coordinate ({}, {})",
            coord.x, coord.y
        )));
    }
    if coord.x < 0.0 || coord.x > w - 1.0 || coord.y < 0.0 || coord.y > h - 1.0 {
        return Err(Error::domain(format!(
            "coordinate ({}, {}) outside [0, {}] x [0, {}]",
            coord.x,
            coord.y,
            w - 1.0,
            h - 1.0
        )));
    }
    Ok(())
}

/// Weights and corner indices of the bilinear blend at `coord`.
#[inline]
pub(crate) fn bilinear_setup(w: usize, h: usize, x: f64, y: f64) -> (usize, usize, usize, usize, f64, f64) {
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    (x0, y0, x1, y1, fx, fy)
}

/// Samples all channels at a continuous location by blending the four
/// surrounding pixel centers; exact at integer coordinates.
pub fn bilinear_sample(grid: &PixelGrid, coord: ContinuousCoord) -> Result<Vec<f64>> {
    check_coord(grid, coord)?;
    let (x0, y0, x1, y1, fx, fy) = bilinear_setup(grid.width(), grid.height(), coord.x, coord.y);
    let mut out = Vec::with_capacity(grid.channels());
    for c in 0..grid.channels() {
        let p00 = grid.get(x0, y0, c);
        let p10 = grid.get(x1, y0, c);
        let p01 = grid.get(x0, y1, c);
        let p11 = grid.get(x1, y1, c);
        out.push(
            p00 * (1.0 - fx) * (1.0 - fy)
                + p10 * fx * (1.0 - fy)
                + p01 * (1.0 - fx) * fy
                + p11 * fx * fy,
        );
    }
    Ok(out)
}

/// Single-channel fast path of [`bilinear_sample`].
pub fn bilinear_sample_channel(grid: &PixelGrid, coord: ContinuousCoord, c: usize) -> Result<f64> {
    check_coord(grid, coord)?;
    if c >= grid.channels() {
        return Err(Error::domain(format!(
            "channel {c} out of range ({} channels)",
            grid.channels()
        )));
    }
    let (x0, y0, x1, y1, fx, fy) = bilinear_setup(grid.width(), grid.height(), coord.x, coord.y);
    Ok(grid.get(x0, y0, c) * (1.0 - fx) * (1.0 - fy)
        + grid.get(x1, y0, c) * fx * (1.0 - fy)
        + grid.get(x0, y1, c) * (1.0 - fx) * fy
        + grid.get(x1, y1, c) * fx * fy)
}

/// Maps an output index to its source coordinate under align-corners
/// semantics; a degenerate output dimension of 1 samples the center.
#[inline]
pub(crate) fn resize_src_coord(i: usize, out_dim: usize, src_dim: usize) -> f64 {
    if out_dim == 1 {
        (src_dim - 1) as f64 / 2.0
    } else {
        i as f64 * (src_dim - 1) as f64 / (out_dim - 1) as f64
    }
}

fn check_resize(out_w: usize, out_h: usize) -> Result<()> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::domain(format!(
            "output dimensions must be >= 1, got {out_w}x{out_h}"
        )));
    }
    Ok(())
}

pub fn resize_bilinear(grid: &PixelGrid, out_w: usize, out_h: usize) -> Result<PixelGrid> {
    check_resize(out_w, out_h)?;
    if out_w == grid.width() && out_h == grid.height() {
        return Ok(grid.clone());
    }
    let mut out = PixelGrid::new(out_w, out_h, grid.channels())?;
    for j in 0..out_h {
        let sy = resize_src_coord(j, out_h, grid.height());
        for i in 0..out_w {
            let sx = resize_src_coord(i, out_w, grid.width());
            let (x0, y0, x1, y1, fx, fy) = bilinear_setup(grid.width(), grid.height(), sx, sy);
            for c in 0..grid.channels() {
                let v = grid.get(x0, y0, c) * (1.0 - fx) * (1.0 - fy)
                    + grid.get(x1, y0, c) * fx * (1.0 - fy)
                    + grid.get(x0, y1, c) * (1.0 - fx) * fy
                    + grid.get(x1, y1, c) * fx * fy;
                out.set(i, j, c, v);
            }
        }
    }
    Ok(out)
}

/// Nearest-neighbor resize under the same coordinate mapping as
/// [`resize_bilinear`]; ties round toward the lower index and values are
/// copied verbatim (sentinels survive).
pub fn resize_nearest(grid: &PixelGrid, out_w: usize, out_h: usize) -> Result<PixelGrid> {
    check_resize(out_w, out_h)?;
    if out_w == grid.width() && out_h == grid.height() {
        return Ok(grid.clone());
    }
    let nearest = |coord: f64| -> usize {
        let lo = coord.floor();
        if coord - lo > 0.5 {
            lo as usize + 1
        } else {
            lo as usize
        }
    };
    let mut out = PixelGrid::new(out_w, out_h, grid.channels())?;
    for j in 0..out_h {
        let sy = nearest(resize_src_coord(j, out_h, grid.height()));
        for i in 0..out_w {
            let sx = nearest(resize_src_coord(i, out_w, grid.width()));
            for c in 0..grid.channels() {
                out.set(i, j, c, grid.get(sx, sy, c));
            }
        }
    }
    Ok(out)
}

/// Multiplies every valid value by `s`, leaving invalid pixels untouched.
/// Used both for training augmentation and for expressing an upsampled
/// low-resolution map in reference-image pixel units.
pub fn scale_disparity_values(d: &DisparityMap, s: f64) -> Result<DisparityMap> {
    if !(s > 0.0) {
        return Err(Error::domain(format!("scale factor must be > 0, got {s}")));
    }
    let mut out = d.clone();
    for v in out.grid_mut().data_mut() {
        if *v >= 0.0 {
            *v *= s;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    /// Independent double-loop interpolation oracle: accumulates the four
    /// corner contributions through explicit axis weight functions.
    fn oracle_bilinear(grid: &PixelGrid, x: f64, y: f64, c: usize) -> f64 {
        let weight = |center: isize, t: f64| -> f64 {
            let d = (t - center as f64).abs();
            if d < 1.0 {
                1.0 - d
            } else {
                0.0
            }
        };
        let clamp = |v: isize, hi: usize| v.clamp(0, hi as isize - 1) as usize;
        let mut acc = 0.0;
        let x0 = x.floor() as isize;
        let y0 = y.floor() as isize;
        for dy in 0..2isize {
            for dx in 0..2isize {
                let px = clamp(x0 + dx, grid.width());
                let py = clamp(y0 + dy, grid.height());
                // On a clamped edge the folded corner has weight 0 under the
                // exact coordinate, so re-derive weights from the unclamped
                // lattice position.
                let wx = weight(x0 + dx, x);
                let wy = weight(y0 + dy, y);
                acc += grid.get(px, py, c) * wx * wy;
            }
        }
        acc
    }

    #[test]
    fn bilinear_identity_at_grid_points() {
        let g = PixelGrid::from_vec(2, 2, 1, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let v = bilinear_sample(&g, ContinuousCoord::new(0.0, 0.0)).unwrap();
        assert_eq!(v, vec![0.0]);
        let v = bilinear_sample(&g, ContinuousCoord::new(1.0, 1.0)).unwrap();
        assert_eq!(v, vec![3.0]);
    }

    #[test]
    fn bilinear_center_is_mean_of_corners() {
        let g = PixelGrid::from_vec(2, 2, 1, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let v = bilinear_sample(&g, ContinuousCoord::new(0.5, 0.5)).unwrap();
        assert!((v[0] - 1.5).abs() < 1e-15);
    }

    #[test]
    fn bilinear_matches_oracle_on_random_coords() {
        let mut rng = StdRng::seed_from_u64(7);
        let g = PixelGrid::from_vec(4, 4, 1, (0..16).map(|_| rng.random::<f64>()).collect())
            .unwrap();
        for _ in 0..100 {
            let x = rng.random::<f64>() * 3.0;
            let y = rng.random::<f64>() * 3.0;
            let got = bilinear_sample(&g, ContinuousCoord::new(x, y)).unwrap()[0];
            let want = oracle_bilinear(&g, x, y, 0);
            assert!((got - want).abs() < 1e-9, "({x},{y}): {got} vs {want}");
        }
    }

    #[test]
    fn bilinear_rejects_out_of_bounds() {
        let g = PixelGrid::new(3, 3, 1).unwrap();
        assert!(bilinear_sample(&g, ContinuousCoord::new(-0.1, 0.0)).is_err());
        assert!(bilinear_sample(&g, ContinuousCoord::new(0.0, 2.01)).is_err());
        assert!(bilinear_sample(&g, ContinuousCoord::new(f64::NAN, 0.0)).is_err());
    }

    #[test]
    fn resize_bilinear_identity_is_bitwise() {
        let mut rng = StdRng::seed_from_u64(3);
        let g = PixelGrid::from_vec(5, 4, 2, (0..40).map(|_| rng.random::<f64>()).collect())
            .unwrap();
        let r = resize_bilinear(&g, 5, 4).unwrap();
        assert_eq!(g, r);
    }

    #[test]
    fn resize_bilinear_linear_midpoints() {
        let g = PixelGrid::from_vec(2, 1, 1, vec![0.0, 2.0]).unwrap();
        let r = resize_bilinear(&g, 3, 1).unwrap();
        assert_eq!(r.data(), &[0.0, 1.0, 2.0]);
    }

    #[test]
    fn resize_bilinear_matches_sampling_the_source() {
        let mut rng = StdRng::seed_from_u64(11);
        let g = PixelGrid::from_vec(8, 8, 1, (0..64).map(|_| rng.random::<f64>()).collect())
            .unwrap();
        let r = resize_bilinear(&g, 5, 5).unwrap();
        for j in 0..5 {
            for i in 0..5 {
                let sx = resize_src_coord(i, 5, 8);
                let sy = resize_src_coord(j, 5, 8);
                let want = oracle_bilinear(&g, sx, sy, 0);
                assert!((r.get(i, j, 0) - want).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn resize_nearest_examples() {
        let g = PixelGrid::from_vec(2, 1, 1, vec![5.0, 9.0]).unwrap();
        let r = resize_nearest(&g, 4, 1).unwrap();
        assert_eq!(r.data(), &[5.0, 5.0, 9.0, 9.0]);

        let identity = resize_nearest(&g, 2, 1).unwrap();
        assert_eq!(identity, g);
    }

    #[test]
    fn resize_nearest_ties_round_down() {
        // Mapping 2 -> 3 puts the middle output exactly between the sources.
        let g = PixelGrid::from_vec(3, 1, 1, vec![1.0, 2.0, 4.0]).unwrap();
        let r = resize_nearest(&g, 5, 1).unwrap();
        // src coords: 0, 0.5, 1, 1.5, 2 -> indices 0, 0, 1, 1, 2
        assert_eq!(r.data(), &[1.0, 1.0, 2.0, 2.0, 4.0]);
    }

    #[test]
    fn resize_nearest_copies_sentinels_verbatim() {
        let mut d = DisparityMap::filled(2, 2, 3.0).unwrap();
        d.set_invalid(1, 0);
        let up = resize_nearest(d.grid(), 4, 4).unwrap();
        let mut seen_sentinel = false;
        for &v in up.data() {
            assert!(v == 3.0 || v == INVALID_DISPARITY);
            seen_sentinel |= v == INVALID_DISPARITY;
        }
        assert!(seen_sentinel);
    }

    #[test]
    fn scale_disparity_basics() {
        let mut d = DisparityMap::filled(2, 1, 10.0).unwrap();
        d.set_invalid(1, 0);
        let s = scale_disparity_values(&d, 0.5).unwrap();
        assert_eq!(s.get(0, 0), 5.0);
        assert_eq!(s.get(1, 0), INVALID_DISPARITY);

        let same = scale_disparity_values(&d, 1.0).unwrap();
        assert_eq!(same, d);

        assert!(scale_disparity_values(&d, 0.0).is_err());
        assert!(scale_disparity_values(&d, -2.0).is_err());
    }

    #[test]
    fn stereo_pair_invariants() {
        let l = PixelGrid::new(8, 4, 1).unwrap();
        let r = PixelGrid::new(4, 2, 1).unwrap();
        let p = StereoPair::new(l.clone(), r).unwrap();
        assert_eq!(p.kappa(), 2.0);

        let r_bad = PixelGrid::new(4, 3, 1).unwrap();
        assert!(StereoPair::new(l.clone(), r_bad).is_err());

        let bigger_right = PixelGrid::new(16, 8, 1).unwrap();
        assert!(StereoPair::new(l, bigger_right).is_err());
    }

    #[test]
    fn disparity_validate() {
        let mut d = DisparityMap::filled(2, 2, 3.0).unwrap();
        d.set_invalid(0, 1);
        d.validate(4.0).unwrap();
        assert!(d.validate(2.0).is_err());
        d.set(1, 1, -0.5);
        assert!(d.validate(4.0).is_err());
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn nearest_output_values_subset_of_input(
                w in 1usize..6, h in 1usize..6, ow in 1usize..9, oh in 1usize..9,
                seed in 0u64..1000
            ) {
                let mut rng = StdRng::seed_from_u64(seed);
                let g = PixelGrid::from_vec(
                    w, h, 1, (0..w * h).map(|_| rng.random::<f64>()).collect(),
                ).unwrap();
                let r = resize_nearest(&g, ow, oh).unwrap();
                for v in r.data() {
                    prop_assert!(g.data().contains(v));
                }
            }

            #[test]
            fn scale_roundtrip(seed in 0u64..1000, s in 0.05f64..20.0) {
                let mut rng = StdRng::seed_from_u64(seed);
                let mut d = DisparityMap::filled(4, 3, 0.0).unwrap();
                for y in 0..3 {
                    for x in 0..4 {
                        if rng.random::<f64>() < 0.2 {
                            d.set_invalid(x, y);
                        } else {
                            d.set(x, y, rng.random::<f64>() * 50.0);
                        }
                    }
                }
                let back = scale_disparity_values(
                    &scale_disparity_values(&d, s).unwrap(), 1.0 / s,
                ).unwrap();
                for y in 0..3 {
                    for x in 0..4 {
                        if d.is_valid(x, y) {
                            prop_assert!((back.get(x, y) - d.get(x, y)).abs() < 1e-9);
                        } else {
                            prop_assert_eq!(back.get(x, y), INVALID_DISPARITY);
                        }
                    }
                }
            }

            #[test]
            fn bilinear_linear_along_axes(seed in 0u64..500, t in 0.0f64..1.0) {
                let mut rng = StdRng::seed_from_u64(seed);
                let g = PixelGrid::from_vec(
                    3, 3, 1, (0..9).map(|_| rng.random::<f64>()).collect(),
                ).unwrap();
                // Along a row between adjacent centers the sample is affine in t.
                let a = bilinear_sample(&g, ContinuousCoord::new(1.0, 1.0)).unwrap()[0];
                let b = bilinear_sample(&g, ContinuousCoord::new(2.0, 1.0)).unwrap()[0];
                let v = bilinear_sample(&g, ContinuousCoord::new(1.0 + t, 1.0)).unwrap()[0];
                prop_assert!((v - (a * (1.0 - t) + b * t)).abs() < 1e-12);
            }
        }
    }
}
