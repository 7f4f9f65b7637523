//! Run configuration: a flat key-value text format with `[section]` headers.
//! Unknown keys are rejected, every key has a documented default, and every
//! key can be overridden from the command line as `--set section.key=value`.

use crate::blackbox::{BlackboxConfig, CostMode};
use crate::error::{Error, Result};
use crate::net::NetConfig;
use crate::train::TrainConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub bad_thresholds: Vec<f64>,
    pub see_patch: usize,
    pub see_edge_range: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            bad_thresholds: crate::eval::DEFAULT_BAD_THRESHOLDS.to_vec(),
            see_patch: crate::eval::DEFAULT_SEE_PATCH,
            see_edge_range: crate::eval::DEFAULT_SEE_EDGE_RANGE,
        }
    }
}

/// Everything a run needs: matcher parameters, network shape, training
/// schedule and metric settings.
#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    pub blackbox: BlackboxConfig,
    pub net: NetConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn from_text(text: &str) -> Result<Self> {
        let mut config = RunConfig::default();
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(format!("line {}: expected key = value, got {raw:?}", lineno + 1))
            })?;
            config.set(&section, key.trim(), value.trim())?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_text(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }

    /// Applies a `section.key=value` command-line override.
    pub fn apply_override(&mut self, spec: &str) -> Result<()> {
        let (path, value) = spec
            .split_once('=')
            .ok_or_else(|| Error::config(format!("override {spec:?} is not section.key=value")))?;
        let (section, key) = path
            .trim()
            .split_once('.')
            .ok_or_else(|| Error::config(format!("override key {path:?} is not section.key")))?;
        self.set(section, key, value.trim())
    }

    pub fn validate(&self) -> Result<()> {
        self.blackbox.sgm.validate()?;
        self.net.validate()?;
        self.train.validate()?;
        if self.eval.see_patch % 2 == 0 || self.eval.see_patch < 3 {
            return Err(Error::config("eval.see_patch must be odd and >= 3".to_string()));
        }
        Ok(())
    }

    fn set(&mut self, section: &str, key: &str, value: &str) -> Result<()> {
        let unknown = || Error::config(format!("unknown config key {section}.{key}"));
        match section {
            "blackbox" => match key {
                "p1" => self.blackbox.sgm.p1 = parse(section, key, value)?,
                "p2" => self.blackbox.sgm.p2 = parse(section, key, value)?,
                "num_paths" => self.blackbox.sgm.num_paths = parse(section, key, value)?,
                "lr_check" => self.blackbox.sgm.lr_check = parse_bool(section, key, value)?,
                "lr_threshold" => self.blackbox.sgm.lr_threshold = parse(section, key, value)?,
                "mode" => self.blackbox.mode = value.parse()?,
                "d_max" => self.blackbox.d_max = parse(section, key, value)?,
                "census_window" => self.blackbox.census_window = parse(section, key, value)?,
                _ => return Err(unknown()),
            },
            "net" => match key {
                "levels" => self.net.levels = parse(section, key, value)?,
                "channels" => self.net.channels = parse_list(section, key, value)?,
                "d_bins" => self.net.d_bins = parse(section, key, value)?,
                "mlp_hidden" => self.net.mlp_hidden = parse_list(section, key, value)?,
                "max_disp" => self.net.max_disp = parse(section, key, value)?,
                "img_channels" => self.net.img_channels = parse(section, key, value)?,
                "head" => self.net.head = value.parse()?,
                "preset" => {
                    self.net = match value {
                        "desk" => NetConfig::desk_default(),
                        "paper-scale" => NetConfig::paper_scale(),
                        other => {
                            return Err(Error::config(format!("unknown net preset {other:?}")))
                        }
                    }
                }
                _ => return Err(unknown()),
            },
            "train" => match key {
                "steps" => self.train.steps = parse(section, key, value)?,
                "crop_w" => self.train.crop_w = parse(section, key, value)?,
                "crop_h" => self.train.crop_h = parse(section, key, value)?,
                "n_coords" => self.train.n_coords = parse(section, key, value)?,
                "lr" => self.train.lr = parse(section, key, value)?,
                "lr_halve_at" => self.train.lr_halve_at = parse(section, key, value)?,
                "sigma" => self.train.sigma = parse(section, key, value)?,
                "scale_min" => self.train.scale_min = parse(section, key, value)?,
                "scale_max" => self.train.scale_max = parse(section, key, value)?,
                "seed" => self.train.seed = parse(section, key, value)?,
                "scene_d_max" => self.train.scene_d_max = parse(section, key, value)?,
                "kappa_choices" => self.train.kappa_choices = parse_list(section, key, value)?,
                "val_scenes" => self.train.val_scenes = parse(section, key, value)?,
                "val_every" => self.train.val_every = parse(section, key, value)?,
                "log_every" => self.train.log_every = parse(section, key, value)?,
                "checkpoint_every" => self.train.checkpoint_every = parse(section, key, value)?,
                _ => return Err(unknown()),
            },
            "eval" => match key {
                "bad_thresholds" => self.eval.bad_thresholds = parse_list(section, key, value)?,
                "see_patch" => self.eval.see_patch = parse(section, key, value)?,
                "see_edge_range" => self.eval.see_edge_range = parse(section, key, value)?,
                _ => return Err(unknown()),
            },
            other => {
                return Err(Error::config(format!("unknown config section {other:?}")))
            }
        }
        Ok(())
    }

    /// Resolved configuration in the same format `from_text` parses.
    pub fn to_text(&self) -> String {
        let bb = &self.blackbox;
        let ev = &self.eval;
        let mut out = format!(
            "[blackbox]\np1 = {}\np2 = {}\nnum_paths = {}\nlr_check = {}\nlr_threshold = {}\n\
             mode = {}\nd_max = {}\ncensus_window = {}\n\n",
            bb.sgm.p1,
            bb.sgm.p2,
            bb.sgm.num_paths,
            bb.sgm.lr_check,
            bb.sgm.lr_threshold,
            match bb.mode {
                CostMode::Census => "census",
                CostMode::AdCensus => "ad-census",
            },
            bb.d_max,
            bb.census_window,
        );
        out.push_str(&self.net.to_card());
        out.push('\n');
        out.push_str(&self.train.to_text());
        out.push_str(&format!(
            "\n[eval]\nbad_thresholds = {}\nsee_patch = {}\nsee_edge_range = {}\n",
            ev.bad_thresholds
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(","),
            ev.see_patch,
            ev.see_edge_range,
        ));
        out
    }
}

fn parse<T: std::str::FromStr>(section: &str, key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(format!("bad value for {section}.{key}: {value:?}")))
}

fn parse_bool(section: &str, key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::config(format!(
            "bad boolean for {section}.{key}: {value:?}"
        ))),
    }
}

fn parse_list<T: std::str::FromStr>(section: &str, key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(|v| parse(section, key, v.trim()))
        .collect()
}
