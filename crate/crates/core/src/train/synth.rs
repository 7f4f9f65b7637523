//! Layered synthetic stereo scenes with dense exact ground truth: textured
//! rectangles and ellipses floating at constant or linearly sloped
//! disparities over a textured background. The right view is rendered from
//! the same continuous textures by solving the per-layer correspondence, so
//! geometry and photometry stay exactly consistent, and the occlusion mask
//! falls out of the same visibility competition.

use crate::error::{Error, Result};
use crate::grid::{DisparityMap, PixelGrid};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

#[derive(Debug, Clone)]
pub struct SynthParams {
    pub width: usize,
    pub height: usize,
    /// Largest disparity any layer may take, in pixels.
    pub d_max: usize,
    pub layers_min: usize,
    pub layers_max: usize,
    /// Probability that a foreground layer gets a sloped (sub-pixel)
    /// disparity instead of a constant integer one. Scenes rendered with
    /// slope 0 satisfy the exact warp-reconstruction identity.
    pub slope_prob: f64,
}

impl SynthParams {
    pub fn new(width: usize, height: usize, d_max: usize) -> Self {
        SynthParams {
            width,
            height,
            d_max,
            layers_min: 3,
            layers_max: 8,
            slope_prob: 0.3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthScene {
    pub left: PixelGrid,
    pub right: PixelGrid,
    pub gt: DisparityMap,
    /// Per left pixel (row-major): true when the scene point is not visible
    /// in the right view (including projections out of frame).
    pub occlusion: Vec<bool>,
}

#[derive(Debug, Clone, Copy)]
enum LayerShape {
    Full,
    Rect { x0: f64, y0: f64, x1: f64, y1: f64 },
    Ellipse { cx: f64, cy: f64, rx: f64, ry: f64 },
}

impl LayerShape {
    fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            LayerShape::Full => true,
            LayerShape::Rect { x0, y0, x1, y1 } => x >= x0 && x <= x1 && y >= y0 && y <= y1,
            LayerShape::Ellipse { cx, cy, rx, ry } => {
                let dx = (x - cx) / rx;
                let dy = (y - cy) / ry;
                dx * dx + dy * dy <= 1.0
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Texture {
    base: f64,
    noise_amp: f64,
    wave_amp: f64,
    fx: f64,
    fy: f64,
    phase: f64,
    salt: u64,
}

fn hash01(x: i64, y: i64, salt: u64) -> f64 {
    let mut v = (x as u64).wrapping_mul(0x9E3779B97F4A7C15)
        ^ (y as u64).wrapping_mul(0xC2B2AE3D27D4EB4F)
        ^ salt;
    v ^= v >> 33;
    v = v.wrapping_mul(0xFF51AFD7ED558CCD);
    v ^= v >> 33;
    v = v.wrapping_mul(0xC4CEB9FE1A85EC53);
    v ^= v >> 33;
    (v >> 11) as f64 / (1u64 << 53) as f64
}

impl Texture {
    /// Continuous texture: smooth waves plus value noise interpolated from a
    /// hash lattice; exact lattice values at integer coordinates.
    fn eval(&self, x: f64, y: f64) -> f64 {
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let (xi, yi) = (x0 as i64, y0 as i64);
        let n00 = hash01(xi, yi, self.salt);
        let n10 = hash01(xi + 1, yi, self.salt);
        let n01 = hash01(xi, yi + 1, self.salt);
        let n11 = hash01(xi + 1, yi + 1, self.salt);
        let noise = n00 * (1.0 - fx) * (1.0 - fy)
            + n10 * fx * (1.0 - fy)
            + n01 * (1.0 - fx) * fy
            + n11 * fx * fy;
        let wave = (self.fx * x + self.phase).sin() * (self.fy * y + 0.7 * self.phase).cos();
        (self.base + self.wave_amp * wave + self.noise_amp * (2.0 * noise - 1.0))
            .clamp(0.0, 255.0)
    }
}

/// Disparity as a function of the *left* x coordinate: `d(x) = a + b x`.
#[derive(Debug, Clone, Copy)]
struct DispFn {
    a: f64,
    b: f64,
}

impl DispFn {
    fn at(&self, x: f64) -> f64 {
        self.a + self.b * x
    }

    /// Left x whose projection lands on right-frame `x_r`:
    /// solves `x - (a + b x) = x_r`.
    fn left_x_for(&self, x_r: f64) -> f64 {
        (x_r + self.a) / (1.0 - self.b)
    }
}

#[derive(Debug, Clone, Copy)]
struct Layer {
    shape: LayerShape,
    disp: DispFn,
    tex: Texture,
}

/// Winner of the visibility competition among layers at a continuous
/// position; larger disparity (nearer surface) wins, earlier layer on ties.
fn left_winner(layers: &[Layer], x: f64, y: f64) -> (usize, f64) {
    let mut best = usize::MAX;
    let mut best_d = f64::NEG_INFINITY;
    for (i, layer) in layers.iter().enumerate() {
        if layer.shape.contains(x, y) {
            let d = layer.disp.at(x);
            if d > best_d {
                best_d = d;
                best = i;
            }
        }
    }
    (best, best_d)
}

/// Same competition seen from a right-frame column: each layer contributes
/// the unique left point projecting there.
fn right_winner(layers: &[Layer], x_r: f64, y: f64) -> (usize, f64, f64) {
    let mut best = usize::MAX;
    let mut best_d = f64::NEG_INFINITY;
    let mut best_xl = 0.0;
    for (i, layer) in layers.iter().enumerate() {
        let xl = layer.disp.left_x_for(x_r);
        if layer.shape.contains(xl, y) {
            let d = layer.disp.at(xl);
            if d > best_d {
                best_d = d;
                best = i;
                best_xl = xl;
            }
        }
    }
    (best, best_d, best_xl)
}

fn render(layers: &[Layer], width: usize, height: usize) -> SynthScene {
    let mut left = PixelGrid::new(width, height, 1).expect("dims");
    let mut right = PixelGrid::new(width, height, 1).expect("dims");
    let mut gt = DisparityMap::filled(width, height, 0.0).expect("dims");
    let mut occlusion = vec![false; width * height];

    for y in 0..height {
        let yf = y as f64;
        for x in 0..width {
            let xf = x as f64;
            let (i, d) = left_winner(layers, xf, yf);
            left.set(x, y, 0, layers[i].tex.eval(xf, yf));
            gt.set(x, y, d);

            let x_r = xf - d;
            if x_r < 0.0 || x_r > (width - 1) as f64 {
                occlusion[y * width + x] = true;
            } else {
                let (j, dj, xl) = right_winner(layers, x_r, yf);
                occlusion[y * width + x] = !(j == i && (xl - xf).abs() < 1e-9 && dj == d);
            }
        }
        for x_r in 0..width {
            let (j, _, xl) = right_winner(layers, x_r as f64, yf);
            right.set(x_r, y, 0, layers[j].tex.eval(xl, yf));
        }
    }
    SynthScene {
        left,
        right,
        gt,
        occlusion,
    }
}

fn random_texture(rng: &mut StdRng) -> Texture {
    Texture {
        base: 60.0 + rng.random::<f64>() * 140.0,
        noise_amp: 15.0 + rng.random::<f64>() * 25.0,
        wave_amp: 10.0 + rng.random::<f64>() * 15.0,
        fx: 0.05 + rng.random::<f64>() * 0.45,
        fy: 0.05 + rng.random::<f64>() * 0.45,
        phase: rng.random::<f64>() * std::f64::consts::TAU,
        salt: rng.random::<u64>(),
    }
}

/// Generates a scene. The background plane always covers the frame (its
/// texture extends beyond it, so the right view has no holes), and
/// foreground layers draw disparities from `(background, d_max]`.
pub fn synth_scene(seed: u64, params: &SynthParams) -> Result<SynthScene> {
    if params.width < 8 || params.height < 8 {
        return Err(Error::domain(format!(
            "scene must be at least 8x8, got {}x{}",
            params.width, params.height
        )));
    }
    if params.d_max * 4 >= params.width {
        return Err(Error::domain(format!(
            "d_max {} too large for width {} (need d_max < width/4)",
            params.d_max, params.width
        )));
    }
    if params.layers_min > params.layers_max || params.d_max < 2 {
        return Err(Error::domain("bad layer count or d_max".to_string()));
    }
    let mut rng = StdRng::seed_from_u64(seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(1));
    let (w, h) = (params.width as f64, params.height as f64);

    let background = Layer {
        shape: LayerShape::Full,
        disp: DispFn {
            a: (rng.random::<u32>() % 3) as f64,
            b: 0.0,
        },
        tex: random_texture(&mut rng),
    };
    let mut layers = vec![background];

    // Distinct integer disparities for the constant layers avoid visibility
    // ties.
    let span = params.layers_max - params.layers_min + 1;
    let n_layers = params.layers_min + (rng.random::<u32>() as usize) % span;
    let mut available: Vec<usize> = (3..=params.d_max).collect();
    for _ in 0..n_layers {
        let shape = if rng.random::<bool>() {
            let lw = (0.15 + rng.random::<f64>() * 0.35) * w;
            let lh = (0.15 + rng.random::<f64>() * 0.35) * h;
            let x0 = rng.random::<f64>() * (w - lw);
            let y0 = rng.random::<f64>() * (h - lh);
            LayerShape::Rect {
                x0,
                y0,
                x1: x0 + lw,
                y1: y0 + lh,
            }
        } else {
            LayerShape::Ellipse {
                cx: rng.random::<f64>() * w,
                cy: rng.random::<f64>() * h,
                rx: (0.08 + rng.random::<f64>() * 0.22) * w,
                ry: (0.08 + rng.random::<f64>() * 0.22) * h,
            }
        };
        let disp = if rng.random::<f64>() < params.slope_prob {
            // Slope kept small; the intercept is chosen so the disparity
            // stays inside (2, d_max) across the whole frame.
            let b = (rng.random::<f64>() - 0.5) * 0.1;
            let reach = b.abs() * (w - 1.0);
            let lo = 2.0 + reach;
            let hi = params.d_max as f64 - reach;
            let a = lo + rng.random::<f64>() * (hi - lo).max(0.1);
            DispFn { a, b }
        } else {
            if available.is_empty() {
                available = (3..=params.d_max).collect();
            }
            let pick = (rng.random::<u32>() as usize) % available.len();
            DispFn {
                a: available.swap_remove(pick) as f64,
                b: 0.0,
            }
        };
        layers.push(Layer {
            shape,
            disp,
            tex: random_texture(&mut rng),
        });
    }
    Ok(render(&layers, params.width, params.height))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blackbox::{run_blackbox, BlackboxConfig};
    use crate::grid::{bilinear_sample, ContinuousCoord, StereoPair};

    #[test]
    fn single_plane_is_a_shifted_copy() {
        let layers = [Layer {
            shape: LayerShape::Full,
            disp: DispFn { a: 4.0, b: 0.0 },
            tex: Texture {
                base: 120.0,
                noise_amp: 30.0,
                wave_amp: 10.0,
                fx: 0.2,
                fy: 0.3,
                phase: 1.0,
                salt: 99,
            },
        }];
        let scene = render(&layers, 32, 16);
        for y in 0..16 {
            for x in 0..32 {
                assert_eq!(scene.gt.get(x, y), 4.0);
                let occluded = scene.occlusion[y * 32 + x];
                assert_eq!(occluded, x < 4, "({x},{y})");
                if x >= 4 {
                    assert_eq!(
                        scene.left.get(x, y, 0),
                        scene.right.get(x - 4, y, 0),
                        "shifted copy at ({x},{y})"
                    );
                }
            }
        }
    }

    #[test]
    fn warp_reconstruction_identity_on_integer_scenes() {
        let params = SynthParams {
            slope_prob: 0.0,
            ..SynthParams::new(48, 32, 10)
        };
        for seed in 0..5u64 {
            let scene = synth_scene(seed, &params).unwrap();
            for y in 0..32 {
                for x in 0..48 {
                    if scene.occlusion[y * 48 + x] {
                        continue;
                    }
                    let d = scene.gt.get(x, y);
                    assert_eq!(d.fract(), 0.0, "slope-free scenes have integer gt");
                    let warped = bilinear_sample(
                        &scene.right,
                        ContinuousCoord::new(x as f64 - d, y as f64),
                    )
                    .unwrap()[0];
                    assert_eq!(
                        warped,
                        scene.left.get(x, y, 0),
                        "seed {seed} pixel ({x},{y})"
                    );
                }
            }
        }
    }

    #[test]
    fn scenes_are_deterministic_and_dense() {
        let params = SynthParams::new(40, 30, 9);
        let a = synth_scene(7, &params).unwrap();
        let b = synth_scene(7, &params).unwrap();
        assert_eq!(a.left, b.left);
        assert_eq!(a.right, b.right);
        assert_eq!(a.gt, b.gt);
        assert_eq!(a.occlusion, b.occlusion);
        assert_eq!(a.gt.valid_count(), 40 * 30);
        assert!(a.left.all_finite() && a.right.all_finite());
        for &v in a.gt.grid().data() {
            assert!((0.0..=9.0).contains(&v));
        }
        let c = synth_scene(8, &params).unwrap();
        assert_ne!(a.left, c.left);
    }

    #[test]
    fn sloped_layers_produce_fractional_gt() {
        let params = SynthParams {
            slope_prob: 1.0,
            layers_min: 4,
            layers_max: 6,
            ..SynthParams::new(64, 40, 12)
        };
        let scene = synth_scene(3, &params).unwrap();
        let fractional = scene
            .gt
            .grid()
            .data()
            .iter()
            .filter(|v| v.fract() != 0.0)
            .count();
        assert!(fractional > 100, "only {fractional} fractional gt pixels");
    }

    #[test]
    fn rejects_oversized_disparity_range() {
        assert!(synth_scene(0, &SynthParams::new(32, 32, 8)).is_err());
        assert!(synth_scene(0, &SynthParams::new(33, 32, 8)).is_ok());
    }

    #[test]
    fn scenes_are_matchable_by_the_blackbox() {
        // Empirical floor from bring-up: where the matcher commits to an
        // estimate it is mostly right (bad3 < 25% over valid pixels), and it
        // commits to well over half the frame. The invalid remainder is
        // structural (census border, occlusions, left-right check) and is
        // exactly what refinement is for.
        let params = SynthParams::new(64, 48, 14);
        let config = BlackboxConfig {
            d_max: 16,
            ..BlackboxConfig::default()
        };
        for seed in [11u64, 12, 13] {
            let scene = synth_scene(seed, &params).unwrap();
            let pair = StereoPair::new(scene.left.clone(), scene.right.clone()).unwrap();
            let disp = run_blackbox(&pair, &config).unwrap();
            let mut bad = 0usize;
            let mut valid = 0usize;
            for y in 0..48 {
                for x in 0..64 {
                    if disp.is_valid(x, y) {
                        valid += 1;
                        if (disp.get(x, y) - scene.gt.get(x, y)).abs() > 3.0 {
                            bad += 1;
                        }
                    }
                }
            }
            let coverage = valid as f64 / (64.0 * 48.0);
            let bad3 = bad as f64 / valid as f64;
            assert!(coverage > 0.6, "seed {seed}: coverage {coverage:.3}");
            assert!(bad3 < 0.25, "seed {seed}: bad3 = {bad3:.3}");
        }
    }
}
