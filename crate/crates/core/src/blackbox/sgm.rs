//! Semi-global matching: dynamic-programming cost aggregation along straight
//! scanline paths with small/large jump penalties, winner-take-all disparity
//! selection and the left-right consistency check.

use super::cost::{CostVolume, OUT_OF_FRAME_COST};
use crate::error::{Error, Result};
use crate::grid::DisparityMap;
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgmParams {
    /// Penalty for +-1 disparity jumps between neighbors along a path.
    pub p1: f64,
    /// Penalty for larger jumps; must dominate `p1`.
    pub p2: f64,
    /// 4 (horizontal/vertical) or 8 (plus diagonals).
    pub num_paths: usize,
    pub lr_check: bool,
    /// Maximum left/right disagreement in pixels before a pixel is
    /// invalidated.
    pub lr_threshold: f64,
}

impl Default for SgmParams {
    fn default() -> Self {
        SgmParams {
            p1: 10.0,
            p2: 120.0,
            num_paths: 8,
            lr_check: true,
            lr_threshold: 1.0,
        }
    }
}

impl SgmParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.p1 >= 0.0 && self.p2 >= self.p1) {
            return Err(Error::domain(format!(
                "SGM penalties must satisfy 0 <= P1 <= P2, got P1={} P2={}",
                self.p1, self.p2
            )));
        }
        if self.num_paths != 4 && self.num_paths != 8 {
            return Err(Error::domain(format!(
                "SGM path count must be 4 or 8, got {}",
                self.num_paths
            )));
        }
        if self.lr_threshold < 0.0 {
            return Err(Error::domain("lr_threshold must be >= 0"));
        }
        Ok(())
    }
}

const PATHS_8: [(i32, i32); 8] = [
    (1, 0),
    (-1, 0),
    (0, 1),
    (0, -1),
    (1, 1),
    (-1, -1),
    (1, -1),
    (-1, 1),
];

pub fn path_directions(num_paths: usize) -> &'static [(i32, i32)] {
    match num_paths {
        4 => &PATHS_8[..4],
        _ => &PATHS_8,
    }
}

/// Aggregates the volume along one path direction `(dx, dy)`:
/// `L(p,d) = C(p,d) + min(L(q,d), L(q,d+-1)+P1, min_k L(q,k)+P2) - min_k L(q,k)`
/// with `q = p - (dx,dy)`; pixels without an in-frame predecessor start the
/// recursion at `L = C`.
pub fn aggregate_path(volume: &CostVolume, dir: (i32, i32), p1: f64, p2: f64) -> CostVolume {
    let (w, h, d_len) = (volume.width(), volume.height(), volume.d_len());
    let mut out = CostVolume::new(w, h, volume.d_max()).expect("same dims");
    let (dx, dy) = dir;

    // Visit pixels so the predecessor along the path is already aggregated.
    let ys: Vec<usize> = if dy >= 0 {
        (0..h).collect()
    } else {
        (0..h).rev().collect()
    };
    let xs: Vec<usize> = if dx >= 0 {
        (0..w).collect()
    } else {
        (0..w).rev().collect()
    };

    let mut prev_row = vec![0.0f64; d_len];
    for &y in &ys {
        for &x in &xs {
            let px = x as i64 - dx as i64;
            let py = y as i64 - dy as i64;
            let in_frame =
                px >= 0 && py >= 0 && (px as usize) < w && (py as usize) < h;
            if !in_frame {
                for d in 0..d_len {
                    out.set(x, y, d, volume.get(x, y, d));
                }
                continue;
            }
            let (px, py) = (px as usize, py as usize);
            prev_row.copy_from_slice(out.pixel(px, py));
            let min_prev = prev_row.iter().cloned().fold(f64::INFINITY, f64::min);
            for d in 0..d_len {
                let mut best = prev_row[d];
                if d > 0 {
                    best = best.min(prev_row[d - 1] + p1);
                }
                if d + 1 < d_len {
                    best = best.min(prev_row[d + 1] + p1);
                }
                best = best.min(min_prev + p2);
                out.set(x, y, d, volume.get(x, y, d) + best - min_prev);
            }
        }
    }
    out
}

/// Sums [`aggregate_path`] over the configured path directions.
pub fn sgm_aggregate(volume: &CostVolume, params: &SgmParams) -> Result<CostVolume> {
    params.validate()?;
    let dirs = path_directions(params.num_paths);
    let per_path: Vec<CostVolume> = dirs
        .par_iter()
        .map(|&dir| aggregate_path(volume, dir, params.p1, params.p2))
        .collect();
    let mut total = CostVolume::new(volume.width(), volume.height(), volume.d_max())?;
    // Fixed summation order over paths keeps the result deterministic.
    for path_volume in &per_path {
        for (acc, v) in total.data_mut().iter_mut().zip(path_volume.data()) {
            *acc += v;
        }
    }
    Ok(total)
}

/// Winner-take-all: per pixel the lowest-cost disparity, lowest index on
/// ties. Pixels whose *best* cost still carries the out-of-frame sentinel
/// have no usable correspondence and come back invalid.
pub fn wta(volume: &CostVolume) -> DisparityMap {
    let mut out = DisparityMap::filled(volume.width(), volume.height(), 0.0).expect("dims");
    for y in 0..volume.height() {
        for x in 0..volume.width() {
            let costs = volume.pixel(x, y);
            let mut best_d = 0usize;
            let mut best = costs[0];
            for (d, &c) in costs.iter().enumerate().skip(1) {
                if c < best {
                    best = c;
                    best_d = d;
                }
            }
            if best >= OUT_OF_FRAME_COST {
                out.set_invalid(x, y);
            } else {
                out.set(x, y, best_d as f64);
            }
        }
    }
    out
}

/// Re-indexes a left-view volume so WTA yields the right-view disparity map:
/// the cost of right pixel `(x, y)` at disparity `d` is the left cost at
/// `(x + d, y, d)`.
pub fn right_view_volume(volume: &CostVolume) -> CostVolume {
    let (w, h) = (volume.width(), volume.height());
    let mut out = CostVolume::new(w, h, volume.d_max()).expect("dims");
    for y in 0..h {
        for x in 0..w {
            for d in 0..volume.d_len() {
                let v = if x + d < w {
                    volume.get(x + d, y, d)
                } else {
                    OUT_OF_FRAME_COST
                };
                out.set(x, y, d, v);
            }
        }
    }
    out
}

/// Invalidates left pixels whose right-view counterpart disagrees by more
/// than `threshold` pixels or projects out of frame.
pub fn lr_consistency(
    left_disp: &DisparityMap,
    right_disp: &DisparityMap,
    threshold: f64,
) -> Result<DisparityMap> {
    if left_disp.width() != right_disp.width() || left_disp.height() != right_disp.height() {
        return Err(Error::domain(format!(
            "left/right disparity sizes differ: {}x{} vs {}x{}",
            left_disp.width(),
            left_disp.height(),
            right_disp.width(),
            right_disp.height()
        )));
    }
    let mut out = left_disp.clone();
    for y in 0..left_disp.height() {
        for x in 0..left_disp.width() {
            if !left_disp.is_valid(x, y) {
                continue;
            }
            let dl = left_disp.get(x, y);
            let xr = x as i64 - dl.round() as i64;
            if xr < 0 || xr as usize >= left_disp.width() {
                out.set_invalid(x, y);
                continue;
            }
            let xr = xr as usize;
            if !right_disp.is_valid(xr, y)
                || (dl - right_disp.get(xr, y)).abs() > threshold
            {
                out.set_invalid(x, y);
            }
        }
    }
    Ok(out)
}


#[cfg(test)]
mod tests {
    use super::oracle::{aggregate_path_oracle, random_volume};
    use super::*;

    #[test]
    fn zero_penalties_collapse_to_scaled_volume() {
        let v = random_volume(1, 6, 5, 4);
        let params = SgmParams {
            p1: 0.0,
            p2: 0.0,
            ..SgmParams::default()
        };
        let agg = sgm_aggregate(&v, &params).unwrap();
        for i in 0..v.data().len() {
            assert_eq!(agg.data()[i], 8.0 * v.data()[i]);
        }
    }

    #[test]
    fn single_scanline_matches_oracle() {
        let mut v = CostVolume::new(5, 1, 3).unwrap();
        let costs = [
            [3.0, 1.0, 4.0, 1.0],
            [5.0, 9.0, 2.0, 6.0],
            [5.0, 3.0, 5.0, 8.0],
            [9.0, 7.0, 9.0, 3.0],
            [2.0, 3.0, 8.0, 4.0],
        ];
        for (x, row) in costs.iter().enumerate() {
            for (d, &c) in row.iter().enumerate() {
                v.set(x, 0, d, c);
            }
        }
        let got = aggregate_path(&v, (1, 0), 2.0, 5.0);
        let want = aggregate_path_oracle(&v, (1, 0), 2.0, 5.0);
        assert_eq!(got.data(), want.data());
        // Hand check of the second pixel: prev L = C(0) = [3,1,4,1], min 1.
        // d=0: 3-off best = min(3, 1+2, 1+5) = 3 -> 5 + 3 - 1 = 7.
        assert_eq!(got.get(1, 0, 0), 7.0);
    }

    #[test]
    fn all_paths_match_oracle_on_random_volume() {
        let v = random_volume(77, 8, 8, 7);
        for &dir in path_directions(8) {
            let got = aggregate_path(&v, dir, 10.0, 40.0);
            let want = aggregate_path_oracle(&v, dir, 10.0, 40.0);
            assert_eq!(got.data(), want.data(), "direction {dir:?}");
        }
        let agg = sgm_aggregate(&v, &SgmParams::default()).unwrap();
        let mut sum = vec![0.0; v.data().len()];
        for &dir in path_directions(8) {
            let p = aggregate_path_oracle(&v, dir, 10.0, 120.0);
            for (s, c) in sum.iter_mut().zip(p.data()) {
                *s += c;
            }
        }
        assert_eq!(agg.data(), &sum[..]);
    }

    #[test]
    fn wta_basics() {
        let mut v = CostVolume::new(2, 1, 5).unwrap();
        for d in 0..=5 {
            v.set(0, 0, d, if d == 3 { 1.0 } else { 2.0 });
            // tie between d = 2 and d = 5
            v.set(1, 0, d, if d == 2 || d == 5 { 1.0 } else { 2.0 });
        }
        let disp = wta(&v);
        assert_eq!(disp.get(0, 0), 3.0);
        assert_eq!(disp.get(1, 0), 2.0);
    }

    #[test]
    fn wta_matches_argmin_oracle() {
        let v = random_volume(9, 7, 6, 5);
        let disp = wta(&v);
        for y in 0..6 {
            for x in 0..7 {
                let costs = v.pixel(x, y);
                let mut best = 0usize;
                for d in 1..costs.len() {
                    if costs[d] < costs[best] {
                        best = d;
                    }
                }
                assert_eq!(disp.get(x, y), best as f64);
            }
        }
    }

    #[test]
    fn wta_sentinel_minimum_is_invalid() {
        let mut v = CostVolume::new(1, 1, 2).unwrap();
        for d in 0..=2 {
            v.set(0, 0, d, OUT_OF_FRAME_COST + d as f64);
        }
        assert!(!wta(&v).is_valid(0, 0));
    }

    #[test]
    fn wta_argmin_invariant_under_positive_rescale() {
        // The SGM recurrence is homogeneous in (C, P1, P2) jointly, so
        // rescaling the volume together with the penalties leaves every
        // argmin unchanged; plain WTA is invariant under V -> aV alone.
        let v = random_volume(33, 8, 8, 6);
        let a = 2.5;
        let mut scaled = v.clone();
        for c in scaled.data_mut() {
            *c *= a;
        }
        assert_eq!(wta(&v), wta(&scaled));

        let params = SgmParams::default();
        let scaled_params = SgmParams {
            p1: params.p1 * a,
            p2: params.p2 * a,
            ..params
        };
        let base = sgm_aggregate(&v, &params).unwrap();
        let rescaled = sgm_aggregate(&scaled, &scaled_params).unwrap();
        for (x, y) in base.data().iter().zip(rescaled.data()) {
            assert!((x * a - y).abs() < 1e-9);
        }
        assert_eq!(wta(&base), wta(&rescaled));
    }

    #[test]
    fn aggregation_shifts_with_per_pixel_constants() {
        // Adding a constant c(p) to all hypotheses of each pixel shifts the
        // per-path result by the same constant pattern.
        let v = random_volume(55, 6, 4, 5);
        let mut shifted = v.clone();
        let mut offsets = vec![0.0; 24];
        for (i, o) in offsets.iter_mut().enumerate() {
            *o = (i % 5) as f64 * 3.0;
        }
        for y in 0..4 {
            for x in 0..6 {
                for d in 0..=5 {
                    shifted.set(x, y, d, v.get(x, y, d) + offsets[y * 6 + x]);
                }
            }
        }
        for &dir in path_directions(8) {
            let a = aggregate_path(&v, dir, 7.0, 30.0);
            let b = aggregate_path(&shifted, dir, 7.0, 30.0);
            for y in 0..4 {
                for x in 0..6 {
                    for d in 0..=5 {
                        let want = a.get(x, y, d) + offsets[y * 6 + x];
                        assert!((b.get(x, y, d) - want).abs() < 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn lr_consistency_rules() {
        // Perfect agreement keeps everything.
        let mut left = DisparityMap::filled(4, 1, 1.0).unwrap();
        let right = DisparityMap::filled(4, 1, 1.0).unwrap();
        let checked = lr_consistency(&left, &right, 1.0).unwrap();
        // x=0 projects to x-1 -> out of frame -> invalid; others survive.
        assert!(!checked.is_valid(0, 0));
        for x in 1..4 {
            assert!(checked.is_valid(x, 0));
        }

        // A disagreement beyond the threshold invalidates exactly the
        // corresponding left pixel.
        let mut right_bad = right.clone();
        right_bad.set(1, 0, 3.5);
        let checked = lr_consistency(&left, &right_bad, 1.0).unwrap();
        assert!(!checked.is_valid(2, 0), "left x=2 projects to right x=1");
        assert!(checked.is_valid(1, 0));
        assert!(checked.is_valid(3, 0));

        // Invalid left pixels stay untouched.
        left.set_invalid(3, 0);
        let checked = lr_consistency(&left, &right, 1.0).unwrap();
        assert!(!checked.is_valid(3, 0));
    }
}
