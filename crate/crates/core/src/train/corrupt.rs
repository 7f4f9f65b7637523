//! Ground-truth corruption: the third raw-disparity source used in training.
//! A random composition of additive Gaussian noise, rectangular hole
//! invalidation, integer quantization and constant-bias patches turns exact
//! ground truth into the kind of damaged map a matcher might emit.

use crate::grid::DisparityMap;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchRect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

/// One sampled corruption recipe; [`CorruptionDraw::none`] is the identity.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorruptionDraw {
    pub gaussian_sigma: Option<f64>,
    pub holes: Vec<PatchRect>,
    pub quantize: bool,
    pub bias_patches: Vec<(PatchRect, f64)>,
}

impl CorruptionDraw {
    pub fn none() -> Self {
        CorruptionDraw::default()
    }

    pub fn sample(rng: &mut StdRng, width: usize, height: usize) -> Self {
        let mut draw = CorruptionDraw::none();
        if rng.random::<f64>() < 0.7 {
            draw.gaussian_sigma = Some(0.25 + rng.random::<f64>() * 1.75);
        }
        if rng.random::<f64>() < 0.5 {
            // Up to 20% of the area across a few rectangles.
            let budget = (width * height) / 5;
            let mut used = 0usize;
            let n = 1 + (rng.random::<u32>() % 4) as usize;
            for _ in 0..n {
                let rect = random_rect(rng, width, height, 0.05, 0.35);
                let area = (rect.x1 - rect.x0) * (rect.y1 - rect.y0);
                if used + area > budget {
                    continue;
                }
                used += area;
                draw.holes.push(rect);
            }
        }
        draw.quantize = rng.random::<f64>() < 0.3;
        if rng.random::<f64>() < 0.4 {
            let n = 1 + (rng.random::<u32>() % 3) as usize;
            for _ in 0..n {
                let rect = random_rect(rng, width, height, 0.1, 0.4);
                let bias = (rng.random::<f64>() - 0.5) * 6.0;
                draw.bias_patches.push((rect, bias));
            }
        }
        draw
    }
}

fn random_rect(rng: &mut StdRng, width: usize, height: usize, lo: f64, hi: f64) -> PatchRect {
    let rw = (((lo + rng.random::<f64>() * (hi - lo)) * width as f64) as usize).max(1);
    let rh = (((lo + rng.random::<f64>() * (hi - lo)) * height as f64) as usize).max(1);
    let x0 = (rng.random::<u32>() as usize) % (width - rw + 1);
    let y0 = (rng.random::<u32>() as usize) % (height - rh + 1);
    PatchRect {
        x0,
        y0,
        x1: x0 + rw,
        y1: y0 + rh,
    }
}

/// Applies a specific recipe; `noise_seed` drives only the Gaussian term.
pub fn corrupt_gt_with(d: &DisparityMap, draw: &CorruptionDraw, noise_seed: u64) -> DisparityMap {
    let mut out = d.clone();
    let (w, h) = (out.width(), out.height());

    for &(rect, bias) in &draw.bias_patches {
        for y in rect.y0..rect.y1.min(h) {
            for x in rect.x0..rect.x1.min(w) {
                if out.is_valid(x, y) {
                    out.set(x, y, (out.get(x, y) + bias).max(0.0));
                }
            }
        }
    }

    if let Some(sigma) = draw.gaussian_sigma {
        let mut rng = StdRng::seed_from_u64(noise_seed);
        let normal = Normal::new(0.0, sigma).expect("sigma > 0");
        for y in 0..h {
            for x in 0..w {
                if out.is_valid(x, y) {
                    let v = out.get(x, y) + normal.sample(&mut rng);
                    out.set(x, y, v.max(0.0));
                }
            }
        }
    }

    if draw.quantize {
        for y in 0..h {
            for x in 0..w {
                if out.is_valid(x, y) {
                    out.set(x, y, out.get(x, y).round());
                }
            }
        }
    }

    for rect in &draw.holes {
        for y in rect.y0..rect.y1.min(h) {
            for x in rect.x0..rect.x1.min(w) {
                out.set_invalid(x, y);
            }
        }
    }
    out
}

/// Samples a recipe from the seed and applies it.
pub fn corrupt_gt(d: &DisparityMap, seed: u64) -> DisparityMap {
    let mut rng = StdRng::seed_from_u64(seed);
    let draw = CorruptionDraw::sample(&mut rng, d.width(), d.height());
    corrupt_gt_with(d, &draw, rng.random::<u64>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::INVALID_DISPARITY;

    #[test]
    fn empty_draw_is_identity() {
        let mut d = DisparityMap::filled(16, 12, 5.0).unwrap();
        d.set_invalid(3, 4);
        let out = corrupt_gt_with(&d, &CorruptionDraw::none(), 1);
        assert_eq!(out, d);
    }

    #[test]
    fn gaussian_mad_matches_half_normal_expectation() {
        let d = DisparityMap::filled(200, 200, 10.0).unwrap();
        let draw = CorruptionDraw {
            gaussian_sigma: Some(1.0),
            ..CorruptionDraw::none()
        };
        let out = corrupt_gt_with(&d, &draw, 42);
        let mad: f64 = out
            .grid()
            .data()
            .iter()
            .map(|&v| (v - 10.0).abs())
            .sum::<f64>()
            / (200.0 * 200.0);
        let expected = (2.0 / std::f64::consts::PI).sqrt();
        assert!(
            (mad - expected).abs() < 0.1 * expected,
            "MAD {mad} vs half-normal {expected}"
        );
    }

    #[test]
    fn holes_carry_the_sentinel() {
        let d = DisparityMap::filled(20, 20, 3.0).unwrap();
        let draw = CorruptionDraw {
            holes: vec![PatchRect { x0: 2, y0: 3, x1: 8, y1: 9 }],
            ..CorruptionDraw::none()
        };
        let out = corrupt_gt_with(&d, &draw, 1);
        for y in 0..20 {
            for x in 0..20 {
                let inside = (2..8).contains(&x) && (3..9).contains(&y);
                if inside {
                    assert_eq!(out.get(x, y), INVALID_DISPARITY);
                } else {
                    assert_eq!(out.get(x, y), 3.0);
                }
            }
        }
    }

    #[test]
    fn quantize_rounds_to_integers() {
        let mut d = DisparityMap::filled(4, 4, 0.0).unwrap();
        for (i, v) in d.grid_mut().data_mut().iter_mut().enumerate() {
            *v = i as f64 * 0.37;
        }
        let draw = CorruptionDraw {
            quantize: true,
            ..CorruptionDraw::none()
        };
        let out = corrupt_gt_with(&d, &draw, 1);
        for (&orig, &q) in d.grid().data().iter().zip(out.grid().data()) {
            assert_eq!(q, orig.round());
        }
    }

    #[test]
    fn values_never_go_negative_except_sentinel() {
        let d = DisparityMap::filled(30, 30, 0.3).unwrap();
        for seed in 0..20u64 {
            let out = corrupt_gt(&d, seed);
            for &v in out.grid().data() {
                assert!(v >= 0.0 || v == INVALID_DISPARITY);
            }
        }
    }

    #[test]
    fn seeded_corruption_is_deterministic() {
        let d = DisparityMap::filled(24, 18, 6.0).unwrap();
        assert_eq!(corrupt_gt(&d, 9), corrupt_gt(&d, 9));
    }
}
