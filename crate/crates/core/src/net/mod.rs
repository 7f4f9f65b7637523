//! The continuous disparity refinement network: two convolutional encoders
//! (reference image and noisy disparity), a merging decoder, bilinear feature
//! interpolation at continuous coordinates, and two point-wise MLP heads —
//! one classifying an integer disparity bin, one regressing a sub-pixel
//! offset in [-1, 1] — whose sum is the predicted disparity.

mod forward;

pub use forward::{
    disparity_input_chw, image_to_chw, predict_point, refine_grid, BoundModel, HeadOutputs,
    LevelFeat, PointOutputs,
};

use crate::autodiff::{load_checkpoint, save_checkpoint, ParamSet};
use crate::error::{Error, Result};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use std::path::Path;

/// Output head variant: the paper's classification-plus-offset formulation,
/// or a plain L1 regression head for the ablation baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadKind {
    ClassOffset,
    L1,
}

impl std::fmt::Display for HeadKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            HeadKind::ClassOffset => write!(f, "class_offset"),
            HeadKind::L1 => write!(f, "l1"),
        }
    }
}

impl std::str::FromStr for HeadKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "class_offset" => Ok(HeadKind::ClassOffset),
            "l1" => Ok(HeadKind::L1),
            other => Err(Error::config(format!("unknown head kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetConfig {
    /// Encoder/decoder depth; level 0 is full input resolution and each
    /// further level halves the previous one.
    pub levels: usize,
    /// Feature width per level; length must equal `levels`.
    pub channels: Vec<usize>,
    /// Classification bins, `max_disp + 1` in the default setups.
    pub d_bins: usize,
    pub mlp_hidden: Vec<usize>,
    /// Normalization constant for disparity inputs and the bin-index
    /// conditioning of the offset head.
    pub max_disp: usize,
    /// 1 (grayscale) or 3 (RGB) reference-image channels.
    pub img_channels: usize,
    pub head: HeadKind,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig::desk_default()
    }
}

impl NetConfig {
    /// Desk-scale defaults: small enough to train on a CPU in minutes.
    pub fn desk_default() -> Self {
        NetConfig {
            levels: 4,
            channels: vec![16, 32, 64, 96],
            d_bins: 33,
            mlp_hidden: vec![64, 64, 64],
            max_disp: 32,
            img_channels: 1,
            head: HeadKind::ClassOffset,
        }
    }

    /// Configuration mirroring the full-scale setup (VGG-width encoders,
    /// 256-pixel disparity range). Provided as a named preset; training it
    /// is far outside CPU budgets.
    pub fn paper_scale() -> Self {
        NetConfig {
            levels: 5,
            channels: vec![64, 128, 256, 512, 512],
            d_bins: 257,
            mlp_hidden: vec![256, 256, 256],
            max_disp: 256,
            img_channels: 3,
            head: HeadKind::ClassOffset,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels < 2 {
            return Err(Error::config(format!("levels must be >= 2, got {}", self.levels)));
        }
        if self.channels.len() != self.levels {
            return Err(Error::config(format!(
                "channels list has {} entries for {} levels",
                self.channels.len(),
                self.levels
            )));
        }
        if self.channels.iter().any(|&c| c == 0) {
            return Err(Error::config("channel widths must be positive".to_string()));
        }
        if self.d_bins < 2 {
            return Err(Error::config(format!("d_bins must be >= 2, got {}", self.d_bins)));
        }
        if self.mlp_hidden.is_empty() || self.mlp_hidden.iter().any(|&c| c == 0) {
            return Err(Error::config("mlp_hidden must be non-empty and positive".to_string()));
        }
        if self.max_disp == 0 {
            return Err(Error::config("max_disp must be >= 1".to_string()));
        }
        if self.img_channels != 1 && self.img_channels != 3 {
            return Err(Error::config(format!(
                "img_channels must be 1 or 3, got {}",
                self.img_channels
            )));
        }
        Ok(())
    }

    /// Total width of the concatenated per-point features.
    pub fn point_feature_len(&self) -> usize {
        self.channels.iter().sum()
    }

    /// Pixels per classification bin step (1 when `d_bins = max_disp + 1`).
    pub fn bin_to_px(&self) -> f64 {
        self.max_disp as f64 / (self.d_bins - 1) as f64
    }

    /// Serializes into the model-card key-value form.
    pub fn to_card(&self) -> String {
        format!(
            "[net]\nlevels = {}\nchannels = {}\nd_bins = {}\nmlp_hidden = {}\nmax_disp = {}\nimg_channels = {}\nhead = {}\n",
            self.levels,
            join(&self.channels),
            self.d_bins,
            join(&self.mlp_hidden),
            self.max_disp,
            self.img_channels,
            self.head,
        )
    }

    pub fn from_card(text: &str) -> Result<Self> {
        let mut config = NetConfig::desk_default();
        let mut seen_section = false;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line == "[net]" {
                seen_section = true;
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("model card line {}: {raw:?}", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "levels" => config.levels = parse(key, value)?,
                "channels" => config.channels = parse_list(key, value)?,
                "d_bins" => config.d_bins = parse(key, value)?,
                "mlp_hidden" => config.mlp_hidden = parse_list(key, value)?,
                "max_disp" => config.max_disp = parse(key, value)?,
                "img_channels" => config.img_channels = parse(key, value)?,
                "head" => config.head = value.parse()?,
                other => {
                    return Err(Error::config(format!("unknown model card key {other:?}")))
                }
            }
        }
        if !seen_section {
            return Err(Error::config("model card missing [net] section".to_string()));
        }
        config.validate()?;
        Ok(config)
    }
}

fn join(list: &[usize]) -> String {
    list.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn parse(key: &str, value: &str) -> Result<usize> {
    value
        .parse()
        .map_err(|_| Error::config(format!("bad value for {key}: {value:?}")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    value
        .split(',')
        .map(|v| parse(key, v.trim()))
        .collect()
}

/// Parameter set plus the configuration that shapes it.
#[derive(Debug, Clone)]
pub struct RefinementModel {
    pub config: NetConfig,
    pub params: ParamSet,
}

/// Uniform init bound for a sine-activated layer, following the sinusoidal-
/// network scheme: the input layer uses 1/fan_in, deeper layers
/// sqrt(6/fan_in) (frequency multiplier 1).
fn sine_limit(fan_in: usize, first: bool) -> f64 {
    if first {
        1.0 / fan_in as f64
    } else {
        (6.0 / fan_in as f64).sqrt()
    }
}

impl RefinementModel {
    pub fn init(config: NetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = StdRng::seed_from_u64(seed);
        let mut params = ParamSet::new();

        let uniform = |n: usize, limit: f64, rng: &mut StdRng| -> Vec<f64> {
            (0..n).map(|_| (rng.random::<f64>() * 2.0 - 1.0) * limit).collect()
        };

        let conv = |params: &mut ParamSet,
                        rng: &mut StdRng,
                        name: String,
                        c_out: usize,
                        c_in: usize,
                        k: usize|
         -> Result<()> {
            let fan_in = c_in * k * k;
            let limit = (6.0 / fan_in as f64).sqrt();
            params.add(
                &format!("{name}.weight"),
                vec![c_out, c_in, k, k],
                uniform(c_out * c_in * k * k, limit, rng),
            )?;
            params.add(&format!("{name}.bias"), vec![c_out], vec![0.0; c_out])?;
            Ok(())
        };

        for (enc, in_ch) in [("enc_img", config.img_channels), ("enc_disp", 2)] {
            for l in 0..config.levels {
                let c_in = if l == 0 { in_ch } else { config.channels[l - 1] };
                conv(
                    &mut params,
                    &mut rng,
                    format!("{enc}.l{l}.conv"),
                    config.channels[l],
                    c_in,
                    3,
                )?;
            }
        }

        let deepest = config.levels - 1;
        for l in (0..config.levels).rev() {
            // 1x1 projection of the encoder sum to the width arriving from
            // the deeper decoder level.
            let arriving = if l == deepest {
                config.channels[l]
            } else {
                config.channels[l + 1]
            };
            conv(
                &mut params,
                &mut rng,
                format!("decoder.l{l}.proj"),
                arriving,
                config.channels[l],
                1,
            )?;
            conv(
                &mut params,
                &mut rng,
                format!("decoder.l{l}.conv"),
                config.channels[l],
                arriving,
                3,
            )?;
        }

        let feat = config.point_feature_len();
        let mlp = |params: &mut ParamSet,
                       rng: &mut StdRng,
                       name: &str,
                       in_dim: usize,
                       out_dim: usize|
         -> Result<()> {
            let mut dims = vec![in_dim];
            dims.extend_from_slice(&config.mlp_hidden);
            dims.push(out_dim);
            for (l, pair) in dims.windows(2).enumerate() {
                let limit = sine_limit(pair[0], l == 0);
                params.add(
                    &format!("{name}.l{l}.weight"),
                    vec![pair[0], pair[1]],
                    uniform(pair[0] * pair[1], limit, rng),
                )?;
                params.add(&format!("{name}.l{l}.bias"), vec![pair[1]], vec![0.0; pair[1]])?;
            }
            Ok(())
        };
        match config.head {
            HeadKind::ClassOffset => {
                mlp(&mut params, &mut rng, "mlp_c", feat, config.d_bins)?;
                mlp(&mut params, &mut rng, "mlp_o", feat + 1, 1)?;
            }
            HeadKind::L1 => {
                mlp(&mut params, &mut rng, "mlp_c", feat, 1)?;
            }
        }

        Ok(RefinementModel { config, params })
    }

    /// Writes the checkpoint plus a `<path>.card` text file recording the
    /// configuration.
    pub fn save(&self, path: &Path) -> Result<()> {
        save_checkpoint(path, &self.params)?;
        std::fs::write(card_path(path), self.config.to_card())?;
        Ok(())
    }

    /// Loads a checkpoint and its model card, validating that the parameters
    /// match the configuration's shapes.
    pub fn load(path: &Path) -> Result<Self> {
        let card = std::fs::read_to_string(card_path(path)).map_err(|e| {
            Error::config(format!(
                "missing model card {}: {e}",
                card_path(path).display()
            ))
        })?;
        let config = NetConfig::from_card(&card)?;
        let params = load_checkpoint(path)?;
        let expected = RefinementModel::init(config.clone(), 0)?;
        if expected.params.len() != params.len() {
            return Err(Error::config(format!(
                "checkpoint has {} parameters, config expects {}",
                params.len(),
                expected.params.len()
            )));
        }
        for (got, want) in params.iter().zip(expected.params.iter()) {
            if got.name != want.name || got.shape != want.shape {
                return Err(Error::config(format!(
                    "checkpoint parameter {:?} {:?} does not match config ({:?} {:?})",
                    got.name, got.shape, want.name, want.shape
                )));
            }
        }
        Ok(RefinementModel { config, params })
    }
}

fn card_path(ckpt: &Path) -> std::path::PathBuf {
    let mut os = ckpt.as_os_str().to_os_string();
    os.push(".card");
    std::path::PathBuf::from(os)
}

/// One network prediction at a continuous location.
#[derive(Debug, Clone)]
pub struct PointPrediction {
    /// Pre-softmax classification outputs, one per bin.
    pub logits: Vec<f64>,
    /// Winning bin (argmax of `logits`, lowest index on ties).
    pub bin: usize,
    /// Sub-pixel offset in [-1, 1].
    pub offset: f64,
    /// `bin + offset`, in bin units; multiply by [`NetConfig::bin_to_px`]
    /// for reference-resolution pixels.
    pub disparity_bins: f64,
}
