//! Training: synthetic scenes, noisy-disparity sources, the two-term loss,
//! and the Adam loop. Every step is seeded from `(run seed, step index)`, so
//! runs are reproducible regardless of logging or checkpoint cadence.

mod corrupt;
mod loss;
mod synth;

pub use corrupt::{corrupt_gt, corrupt_gt_with, CorruptionDraw, PatchRect};
pub use loss::{
    gaussian_target, mean_target_entropy, refinement_loss, refinement_loss_batch, target_entropy,
    LossBreakdown, DEFAULT_SIGMA,
};
pub use synth::{synth_scene, SynthParams, SynthScene};

use crate::autodiff::{adam_step, AdamState, Tape};
use crate::blackbox::{run_blackbox, BlackboxConfig, CostMode};
use crate::error::{Error, Result};
use crate::grid::{
    bilinear_sample_channel, resize_bilinear, scale_disparity_values, ContinuousCoord,
    DisparityMap, PixelGrid, StereoPair,
};
use crate::net::{disparity_input_chw, image_to_chw, refine_grid, RefinementModel};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use std::io::Write as _;
use std::path::PathBuf;

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub steps: usize,
    pub crop_w: usize,
    pub crop_h: usize,
    /// Continuous locations sampled per crop per step.
    pub n_coords: usize,
    pub lr: f64,
    /// Fraction of the run after which the learning rate is halved.
    pub lr_halve_at: f64,
    /// Gaussian width of the classification target.
    pub sigma: f64,
    pub scale_min: f64,
    pub scale_max: f64,
    pub seed: u64,
    /// Largest scene disparity, in left-image pixels.
    pub scene_d_max: usize,
    /// Unbalance factors drawn per step for the blackbox sources; crop
    /// dimensions must be divisible by each.
    pub kappa_choices: Vec<u32>,
    pub blackbox: BlackboxConfig,
    /// Held-out scenes for the periodic validation EPE (0 disables).
    pub val_scenes: usize,
    pub val_every: usize,
    pub log_every: usize,
    /// Checkpoint cadence in steps (0 = only the final model).
    pub checkpoint_every: usize,
    /// When set, metrics CSV, resolved config and checkpoints land here.
    pub out_dir: Option<PathBuf>,
    /// Debug/overfit mode: reuse the sample drawn from this seed at every
    /// step instead of drawing fresh ones.
    pub fixed_sample_seed: Option<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 4000,
            crop_w: 64,
            crop_h: 64,
            n_coords: 2048,
            lr: 1e-4,
            lr_halve_at: 0.8,
            sigma: DEFAULT_SIGMA,
            scale_min: 0.2,
            scale_max: 3.0,
            seed: 0,
            scene_d_max: 14,
            kappa_choices: vec![1, 2],
            blackbox: BlackboxConfig::default(),
            val_scenes: 0,
            val_every: 0,
            log_every: 50,
            checkpoint_every: 0,
            out_dir: None,
            fixed_sample_seed: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 && self.out_dir.is_none() {
            // steps = 0 is allowed: it writes an untouched checkpoint.
        }
        if self.n_coords == 0 {
            return Err(Error::config("n_coords must be >= 1".to_string()));
        }
        if !(self.lr >= 0.0) || !(self.lr_halve_at > 0.0 && self.lr_halve_at <= 1.0) {
            return Err(Error::config("bad learning-rate schedule".to_string()));
        }
        if !(self.scale_min > 0.0 && self.scale_max >= self.scale_min) {
            return Err(Error::config(format!(
                "bad scale range [{}, {}]",
                self.scale_min, self.scale_max
            )));
        }
        if self.kappa_choices.is_empty() {
            return Err(Error::config("kappa_choices must not be empty".to_string()));
        }
        for &k in &self.kappa_choices {
            if k == 0 || self.crop_w % k as usize != 0 || self.crop_h % k as usize != 0 {
                return Err(Error::config(format!(
                    "crop {}x{} not divisible by kappa {k}",
                    self.crop_w, self.crop_h
                )));
            }
        }
        if self.scene_d_max * 4 >= self.crop_w {
            return Err(Error::config(format!(
                "scene_d_max {} too large for crop width {}",
                self.scene_d_max, self.crop_w
            )));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        format!(
            "[train]\nsteps = {}\ncrop_w = {}\ncrop_h = {}\nn_coords = {}\nlr = {}\n\
             lr_halve_at = {}\nsigma = {}\nscale_min = {}\nscale_max = {}\nseed = {}\n\
             scene_d_max = {}\nkappa_choices = {}\nval_scenes = {}\nval_every = {}\n\
             log_every = {}\ncheckpoint_every = {}\n",
            self.steps,
            self.crop_w,
            self.crop_h,
            self.n_coords,
            self.lr,
            self.lr_halve_at,
            self.sigma,
            self.scale_min,
            self.scale_max,
            self.seed,
            self.scene_d_max,
            self.kappa_choices
                .iter()
                .map(|k| k.to_string())
                .collect::<Vec<_>>()
                .join(","),
            self.val_scenes,
            self.val_every,
            self.log_every,
            self.checkpoint_every,
        )
    }
}

/// One training sample: the stereo crop, a noisy raw disparity, exact ground
/// truth, and the sampled continuous locations with their targets.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub left: PixelGrid,
    pub right: PixelGrid,
    pub d_raw: DisparityMap,
    pub d_gt: DisparityMap,
    pub coords: Vec<(f64, f64)>,
    pub gt_at_coords: Vec<f64>,
}

fn mix_seed(seed: u64, step: u64) -> u64 {
    // splitmix64 over (seed, step)
    let mut z = seed ^ step.wrapping_mul(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Samples dense ground truth at a continuous coordinate, resampling when
/// any of the four surrounding pixels is invalid (bounded retries).
fn sample_gt(
    gt: &DisparityMap,
    rng: &mut StdRng,
    w: usize,
    h: usize,
) -> Result<((f64, f64), f64)> {
    for _ in 0..100 {
        let x = rng.random::<f64>() * (w - 1) as f64;
        let y = rng.random::<f64>() * (h - 1) as f64;
        let (x0, y0) = (x.floor() as usize, y.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
        if gt.is_valid(x0, y0) && gt.is_valid(x1, y0) && gt.is_valid(x0, y1) && gt.is_valid(x1, y1)
        {
            let v = bilinear_sample_channel(gt.grid(), ContinuousCoord::new(x, y), 0)?;
            return Ok(((x, y), v));
        }
    }
    Err(Error::domain(
        "could not sample a coordinate with valid ground truth".to_string(),
    ))
}

/// Draws one full training sample: scene, raw-disparity source (the two
/// blackbox matchers or corrupted ground truth, uniformly), the joint
/// disparity-scaling augmentation, and the continuous coordinate batch.
/// Targets are recomputed from the scaled ground truth, never cached.
pub fn make_train_sample(seed: u64, config: &TrainConfig) -> Result<TrainSample> {
    let mut rng = StdRng::seed_from_u64(seed);
    let params = SynthParams::new(config.crop_w, config.crop_h, config.scene_d_max);
    let scene = synth_scene(rng.random::<u64>(), &params)?;

    let kappa = config.kappa_choices[(rng.random::<u32>() as usize) % config.kappa_choices.len()];
    let source = rng.random::<u32>() % 3;
    let d_raw = if source == 2 {
        corrupt_gt(&scene.gt, rng.random::<u64>())
    } else {
        let mode = if source == 0 {
            CostMode::Census
        } else {
            CostMode::AdCensus
        };
        let bb = BlackboxConfig {
            mode,
            d_max: (config.scene_d_max as f64 / kappa as f64).ceil().max(2.0) as usize,
            ..config.blackbox.clone()
        };
        let pair = if kappa == 1 {
            StereoPair::new(scene.left.clone(), scene.right.clone())?
        } else {
            let right_low = resize_bilinear(
                &scene.right,
                config.crop_w / kappa as usize,
                config.crop_h / kappa as usize,
            )?;
            StereoPair::new(scene.left.clone(), right_low)?
        };
        run_blackbox(&pair, &bb)?
    };

    let scale = config.scale_min + rng.random::<f64>() * (config.scale_max - config.scale_min);
    let d_raw = scale_disparity_values(&d_raw, scale)?;
    let d_gt = scale_disparity_values(&scene.gt, scale)?;

    let mut coords = Vec::with_capacity(config.n_coords);
    let mut gt_at_coords = Vec::with_capacity(config.n_coords);
    for _ in 0..config.n_coords {
        let (c, v) = sample_gt(&d_gt, &mut rng, config.crop_w, config.crop_h)?;
        coords.push(c);
        gt_at_coords.push(v);
    }
    Ok(TrainSample {
        left: scene.left,
        right: scene.right,
        d_raw,
        d_gt,
        coords,
        gt_at_coords,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct StepLog {
    pub step: usize,
    pub total: f64,
    pub ce: f64,
    pub offset: f64,
    pub masked_fraction: f64,
    pub val_epe: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub steps_run: usize,
    pub final_loss: f64,
    pub logs: Vec<StepLog>,
}

/// One forward/backward/Adam pass on a prepared sample. Exposed so tests can
/// drive single steps; returns the loss breakdown.
pub fn train_step(
    model: &mut RefinementModel,
    state: &mut AdamState,
    sample: &TrainSample,
    sigma: f64,
    lr: f64,
) -> Result<LossBreakdown> {
    let net = model.config.clone();
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape, true)?;

    let img = sample.left.to_gray()?.map(|v| (v / 255.0).clamp(0.0, 1.0));
    let img_in = image_to_chw(&mut tape, &img)?;
    let disp_in = disparity_input_chw(&mut tape, &sample.d_raw, net.max_disp)?;
    let levels = bound.pyramids(&mut tape, img_in, disp_in)?;
    let outputs = bound.forward_points(&mut tape, &levels, &sample.coords)?;

    // Bin-unit targets from ground truth in pixels, clamped into range.
    let bins_per_px = (net.d_bins - 1) as f64 / net.max_disp as f64;
    let d_stars: Vec<f64> = sample
        .gt_at_coords
        .iter()
        .map(|&g| (g * bins_per_px).clamp(0.0, (net.d_bins - 1) as f64))
        .collect();
    let (total, breakdown) = refinement_loss_batch(&mut tape, &outputs.head, &d_stars, sigma)?;
    if !breakdown.total.is_finite() {
        return Err(Error::Diverged(format!(
            "loss became {} at Adam step {}",
            breakdown.total,
            state.step_count()
        )));
    }
    tape.backward(total)?;

    let grads: Vec<Vec<f64>> = bound
        .bound
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            tape.grad(v)
                .map(|g| g.to_vec())
                .unwrap_or_else(|| vec![0.0; model.params.by_index(i).values.len()])
        })
        .collect();
    adam_step(&mut model.params, &grads, state, lr)?;
    Ok(breakdown)
}

/// Validation: mean refined EPE over held-out balanced scenes with the
/// census-SGM blackbox.
fn validation_epe(model: &RefinementModel, config: &TrainConfig) -> Result<f64> {
    let params = SynthParams::new(config.crop_w, config.crop_h, config.scene_d_max);
    let bb = BlackboxConfig {
        d_max: config.scene_d_max,
        ..config.blackbox.clone()
    };
    let mut acc = 0.0;
    for i in 0..config.val_scenes {
        let scene = synth_scene(mix_seed(config.seed ^ 0x5EED_0FF5, i as u64), &params)?;
        let pair = StereoPair::new(scene.left.clone(), scene.right.clone())?;
        let raw = run_blackbox(&pair, &bb)?;
        let refined = refine_grid(&pair, &raw, model, config.crop_w, config.crop_h)?;
        acc += crate::eval::epe(&refined, &scene.gt)?;
    }
    Ok(acc / config.val_scenes as f64)
}

/// Runs the full training loop, mutating the model in place.
pub fn train_epochs(model: &mut RefinementModel, config: &TrainConfig) -> Result<TrainReport> {
    config.validate()?;
    if let Some(dir) = &config.out_dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(
            dir.join("run_config.txt"),
            format!("{}{}", config.to_text(), model.config.to_card()),
        )?;
    }
    let mut csv: Option<std::fs::File> = match &config.out_dir {
        Some(dir) => {
            let mut f = std::fs::File::create(dir.join("metrics.csv"))?;
            writeln!(f, "step,total,ce,offset,masked_fraction,val_epe")?;
            Some(f)
        }
        None => None,
    };

    let mut state = AdamState::new(&model.params);
    let mut logs = Vec::new();
    let mut final_loss = f64::NAN;
    let fixed_sample = match config.fixed_sample_seed {
        Some(s) => Some(make_train_sample(s, config)?),
        None => None,
    };

    for step in 0..config.steps {
        let sample = match &fixed_sample {
            Some(s) => s.clone(),
            None => make_train_sample(mix_seed(config.seed, step as u64), config)?,
        };
        let lr = if (step as f64) < config.lr_halve_at * config.steps as f64 {
            config.lr
        } else {
            config.lr / 2.0
        };
        let breakdown = train_step(model, &mut state, &sample, config.sigma, lr)?;
        final_loss = breakdown.total;

        let want_log = config.log_every > 0
            && (step % config.log_every == 0 || step + 1 == config.steps);
        let want_val = config.val_every > 0
            && config.val_scenes > 0
            && (step + 1) % config.val_every == 0;
        if want_log || want_val {
            let val = if want_val {
                Some(validation_epe(model, config)?)
            } else {
                None
            };
            let entry = StepLog {
                step,
                total: breakdown.total,
                ce: breakdown.ce_term,
                offset: breakdown.offset_term,
                masked_fraction: breakdown.masked_fraction,
                val_epe: val,
            };
            if let Some(f) = csv.as_mut() {
                writeln!(
                    f,
                    "{},{:.6},{:.6},{:.6},{:.4},{}",
                    entry.step,
                    entry.total,
                    entry.ce,
                    entry.offset,
                    entry.masked_fraction,
                    entry.val_epe.map_or(String::new(), |v| format!("{v:.6}")),
                )?;
            }
            logs.push(entry);
        }
        if config.checkpoint_every > 0
            && (step + 1) % config.checkpoint_every == 0
            && config.out_dir.is_some()
        {
            let dir = config.out_dir.as_ref().unwrap();
            model.save(&dir.join(format!("ckpt_{:06}.ckpt", step + 1)))?;
        }
    }
    if let Some(dir) = &config.out_dir {
        model.save(&dir.join("model.ckpt"))?;
    }
    Ok(TrainReport {
        steps_run: config.steps,
        final_loss,
        logs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{HeadKind, NetConfig};

    fn tiny_net() -> NetConfig {
        NetConfig {
            levels: 3,
            channels: vec![6, 8, 12],
            d_bins: 13,
            mlp_hidden: vec![16, 16],
            max_disp: 12,
            img_channels: 1,
            head: HeadKind::ClassOffset,
        }
    }

    fn tiny_train() -> TrainConfig {
        TrainConfig {
            steps: 2,
            crop_w: 32,
            crop_h: 32,
            n_coords: 64,
            scene_d_max: 7,
            kappa_choices: vec![1, 2],
            log_every: 1,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn sample_generation_is_deterministic_and_consistent() {
        let config = tiny_train();
        let a = make_train_sample(42, &config).unwrap();
        let b = make_train_sample(42, &config).unwrap();
        assert_eq!(a.left, b.left);
        assert_eq!(a.d_raw, b.d_raw);
        assert_eq!(a.coords, b.coords);
        assert_eq!(a.gt_at_coords, b.gt_at_coords);
        assert_eq!(a.coords.len(), 64);

        // Targets come from the scaled ground truth.
        for (&(x, y), &g) in a.coords.iter().zip(&a.gt_at_coords) {
            let direct = bilinear_sample_channel(a.d_gt.grid(), ContinuousCoord::new(x, y), 0)
                .unwrap();
            assert_eq!(g, direct);
        }
    }

    #[test]
    fn zero_lr_leaves_parameters_unchanged() {
        let mut model = RefinementModel::init(tiny_net(), 1).unwrap();
        let before = model.params.clone();
        let mut config = tiny_train();
        config.lr = 0.0;
        config.steps = 3;
        train_epochs(&mut model, &config).unwrap();
        assert_eq!(model.params, before);
    }

    #[test]
    fn training_is_deterministic_given_seed() {
        let run = || {
            let mut model = RefinementModel::init(tiny_net(), 5).unwrap();
            let config = tiny_train();
            train_epochs(&mut model, &config).unwrap();
            model.params
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn single_sample_overfit_reaches_entropy_floor() {
        // 2000 steps on one fixed crop must push the total loss below the
        // target-entropy floor plus a small margin, and the smoothed loss
        // must decrease monotonically.
        let mut model = RefinementModel::init(tiny_net(), 7).unwrap();
        let config = TrainConfig {
            steps: 2000,
            crop_w: 32,
            crop_h: 32,
            n_coords: 256,
            scene_d_max: 7,
            kappa_choices: vec![1],
            lr: 3e-4,
            log_every: 1,
            fixed_sample_seed: Some(11),
            ..TrainConfig::default()
        };
        let sample = make_train_sample(11, &config).unwrap();
        let bins_per_px = (model.config.d_bins - 1) as f64 / model.config.max_disp as f64;
        let d_stars: Vec<f64> = sample
            .gt_at_coords
            .iter()
            .map(|&g| (g * bins_per_px).clamp(0.0, (model.config.d_bins - 1) as f64))
            .collect();
        let entropy = mean_target_entropy(&d_stars, config.sigma, model.config.d_bins).unwrap();

        let report = train_epochs(&mut model, &config).unwrap();
        assert!(
            report.final_loss < entropy + 0.05,
            "final loss {} vs entropy floor {entropy}",
            report.final_loss
        );

        // Windowed means (50 steps) should be non-increasing up to a tiny
        // tolerance for optimizer noise.
        let totals: Vec<f64> = report.logs.iter().map(|l| l.total).collect();
        let windows: Vec<f64> = totals
            .chunks(50)
            .filter(|c| c.len() == 50)
            .map(|c| c.iter().sum::<f64>() / c.len() as f64)
            .collect();
        for pair in windows.windows(2) {
            assert!(
                pair[1] <= pair[0] + 0.02,
                "smoothed loss increased: {} -> {}",
                pair[0],
                pair[1]
            );
        }
    }

    #[test]
    fn config_validation() {
        let mut c = tiny_train();
        c.kappa_choices = vec![3]; // 32 not divisible
        assert!(c.validate().is_err());
        let mut c = tiny_train();
        c.scale_min = 0.0;
        assert!(c.validate().is_err());
        let mut c = tiny_train();
        c.scene_d_max = 8; // 8*4 = 32 = crop width
        assert!(c.validate().is_err());
    }
}
