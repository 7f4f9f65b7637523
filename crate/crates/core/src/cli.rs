//! The `stereo-refine` command-line frontend: matching, refinement,
//! training, evaluation, scene synthesis and point-cloud export.
//!
//! Exit codes: 0 success, 2 input error (missing/unreadable/misformatted
//! files), 3 configuration or contract error, 4 numeric divergence.

use crate::blackbox::{run_blackbox, CostMode};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::eval::{
    compare_report, export_pointcloud, metric_report, CameraModel, MetricReport,
};
use crate::grid::{DisparityMap, StereoPair};
use crate::io::{
    read_disparity_pfm, read_image, write_disparity_pfm, write_png, PlyFormat,
};
use crate::net::{refine_grid, RefinementModel};
use crate::train::{synth_scene, train_epochs, SynthParams};
use clap::{ArgAction, Args, Parser, Subcommand};
use std::path::PathBuf;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) | Error::Format(_) => 2,
        Error::Config(_) | Error::Domain(_) => 3,
        Error::Diverged(_) => 4,
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "stereo-refine",
    about = "Stereo matching and continuous-coordinate disparity refinement",
    version
)]
pub struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Default)]
pub struct ConfigArgs {
    /// Configuration file (flat key-value with [sections]).
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Override one configuration key, e.g. --set train.steps=500
    /// (repeatable; applied after the file).
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    pub overrides: Vec<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        for o in &self.overrides {
            config.apply_override(o)?;
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run the traditional stereo blackbox and write a raw disparity PFM at
    /// the left image's resolution.
    Match {
        #[arg(long)]
        left: PathBuf,
        #[arg(long)]
        right: PathBuf,
        /// Output PFM path.
        #[arg(long)]
        out: PathBuf,
        /// Largest disparity hypothesis, at the matcher's processing
        /// resolution (the right image's for unbalanced pairs).
        #[arg(long)]
        dmax: Option<usize>,
        /// census | ad-census
        #[arg(long)]
        mode: Option<CostMode>,
        /// Allow unbalanced pairs: downsample the left image to the right
        /// image's size, match there, upsample the disparity back. With
        /// --kappa-aware=false, differing sizes are an error.
        #[arg(long, default_value_t = true, action = ArgAction::Set)]
        kappa_aware: bool,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Refine a raw disparity map at an arbitrary output resolution.
    Refine {
        #[arg(long)]
        left: PathBuf,
        /// Unused by the network (it refines from the reference view); kept
        /// so match/refine pipelines can share an argument list.
        #[arg(long)]
        right: Option<PathBuf>,
        /// Raw disparity PFM at the left image's resolution (any blackbox).
        #[arg(long)]
        raw: PathBuf,
        /// Checkpoint path; `<ckpt>.card` must sit beside it.
        #[arg(long)]
        ckpt: PathBuf,
        /// Output width (defaults to the left image's).
        #[arg(long)]
        out_w: Option<usize>,
        /// Output height (defaults to the left image's).
        #[arg(long)]
        out_h: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the refinement network on synthetic scenes.
    Train {
        /// Metrics, resolved config and checkpoints are written here.
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Start from an existing checkpoint instead of fresh init.
        #[arg(long)]
        init_ckpt: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Compare predictions against ground truth (optionally with the raw
    /// map for a raw/refined/delta report).
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        raw: Option<PathBuf>,
        /// CSV output path (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print a human-readable table to stdout as well.
        #[arg(long)]
        text: bool,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Generate synthetic stereo scenes with dense exact ground truth.
    Synth {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 64)]
        width: usize,
        #[arg(long, default_value_t = 64)]
        height: usize,
        #[arg(long, default_value_t = 14)]
        dmax: usize,
        /// Number of scenes (seeds seed, seed+1, ...).
        #[arg(long, default_value_t = 1)]
        count: usize,
    },
    /// Reproject a disparity map into a colored PLY point cloud.
    ExportPly {
        #[arg(long)]
        disp: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Focal length in pixels.
        #[arg(long)]
        focal: f64,
        /// Stereo baseline in meters.
        #[arg(long)]
        baseline: f64,
        /// Principal point x (defaults to the image center).
        #[arg(long)]
        cx: Option<f64>,
        /// Principal point y (defaults to the image center).
        #[arg(long)]
        cy: Option<f64>,
        /// Write binary little-endian instead of ASCII.
        #[arg(long)]
        binary: bool,
    },
}

impl clap::builder::ValueParserFactory for CostMode {
    type Parser = clap::builder::ValueParser;

    fn value_parser() -> Self::Parser {
        clap::builder::ValueParser::new(|s: &str| {
            s.parse::<CostMode>().map_err(|e| e.to_string())
        })
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let verbose = cli.verbose;
    let log = |msg: String| {
        if verbose > 0 {
            eprintln!("{msg}");
        }
    };
    match cli.command {
        Command::Match {
            left,
            right,
            out,
            dmax,
            mode,
            kappa_aware,
            config,
        } => {
            let mut run_config = config.resolve()?;
            if let Some(d) = dmax {
                run_config.blackbox.d_max = d;
            }
            if let Some(m) = mode {
                run_config.blackbox.mode = m;
            }
            let left_img = read_image(&left)?;
            let right_img = read_image(&right)?;
            let pair = StereoPair::new(left_img, right_img)?;
            if !kappa_aware && !pair.is_balanced() {
                return Err(Error::domain(format!(
                    "images differ in size (kappa = {}) and --kappa-aware is off",
                    pair.kappa()
                )));
            }
            log(format!(
                "matching {}x{} vs {}x{} (kappa {}), d_max {}",
                pair.left.width(),
                pair.left.height(),
                pair.right.width(),
                pair.right.height(),
                pair.kappa(),
                run_config.blackbox.d_max
            ));
            let disp = run_blackbox(&pair, &run_config.blackbox)?;
            write_disparity_pfm(&out, &disp)?;
            log(format!("wrote {}", out.display()));
            Ok(())
        }
        Command::Refine {
            left,
            right,
            raw,
            ckpt,
            out_w,
            out_h,
            out,
        } => {
            let left_img = read_image(&left)?;
            let right_img = match right {
                Some(path) => read_image(&path)?,
                None => left_img.clone(),
            };
            let pair = StereoPair::new(left_img, right_img)?;
            let d_raw = read_disparity_pfm(&raw)?;
            let model = RefinementModel::load(&ckpt)?;
            let w = out_w.unwrap_or(pair.left.width());
            let h = out_h.unwrap_or(pair.left.height());
            log(format!(
                "refining {}x{} raw map to {w}x{h}",
                d_raw.width(),
                d_raw.height()
            ));
            let refined = refine_grid(&pair, &d_raw, &model, w, h)?;
            write_disparity_pfm(&out, &refined)?;
            log(format!("wrote {}", out.display()));
            Ok(())
        }
        Command::Train {
            out_dir,
            steps,
            seed,
            init_ckpt,
            config,
        } => {
            let mut run_config = config.resolve()?;
            if let Some(s) = steps {
                run_config.train.steps = s;
            }
            if let Some(s) = seed {
                run_config.train.seed = s;
            }
            run_config.train.out_dir = Some(out_dir.clone());
            run_config.train.blackbox = run_config.blackbox.clone();
            run_config.validate()?;
            let mut model = match init_ckpt {
                Some(path) => RefinementModel::load(&path)?,
                None => RefinementModel::init(run_config.net.clone(), run_config.train.seed)?,
            };
            log(format!(
                "training {} steps on {}x{} crops (seed {})",
                run_config.train.steps,
                run_config.train.crop_w,
                run_config.train.crop_h,
                run_config.train.seed
            ));
            let report = train_epochs(&mut model, &run_config.train)?;
            log(format!(
                "done: {} steps, final loss {:.4}; model at {}",
                report.steps_run,
                report.final_loss,
                out_dir.join("model.ckpt").display()
            ));
            Ok(())
        }
        Command::Eval {
            pred,
            gt,
            raw,
            out,
            text,
            config,
        } => {
            let run_config = config.resolve()?;
            let ev = &run_config.eval;
            let pred_map = read_disparity_pfm(&pred)?;
            let gt_map = read_disparity_pfm(&gt)?;
            let csv = match raw {
                Some(raw_path) => {
                    let raw_map = read_disparity_pfm(&raw_path)?;
                    let report = compare_report(&raw_map, &pred_map, &gt_map)?;
                    if text {
                        print!("{}", report.to_text());
                    }
                    report.to_csv()
                }
                None => {
                    let report = metric_report(
                        &pred_map,
                        &gt_map,
                        &ev.bad_thresholds,
                        ev.see_patch,
                        ev.see_edge_range,
                    )?;
                    if text {
                        print!("{}", format_single(&report));
                    }
                    single_csv(&report)
                }
            };
            match out {
                Some(path) => std::fs::write(path, csv)?,
                None => print!("{csv}"),
            }
            Ok(())
        }
        Command::Synth {
            seed,
            out_dir,
            width,
            height,
            dmax,
            count,
        } => {
            std::fs::create_dir_all(&out_dir)?;
            let params = SynthParams::new(width, height, dmax);
            for i in 0..count {
                let s = seed + i as u64;
                let scene = synth_scene(s, &params)?;
                let dir = if count == 1 {
                    out_dir.clone()
                } else {
                    let d = out_dir.join(format!("scene_{s}"));
                    std::fs::create_dir_all(&d)?;
                    d
                };
                write_png(&dir.join("left.png"), &scene.left)?;
                write_png(&dir.join("right.png"), &scene.right)?;
                write_disparity_pfm(&dir.join("gt.pfm"), &scene.gt)?;
                log(format!("scene {s} -> {}", dir.display()));
            }
            Ok(())
        }
        Command::ExportPly {
            disp,
            image,
            out,
            focal,
            baseline,
            cx,
            cy,
            binary,
        } => {
            let d = read_disparity_pfm(&disp)?;
            let rgb = read_image(&image)?;
            let cam = CameraModel {
                focal,
                baseline,
                cx: cx.unwrap_or((d.width() as f64 - 1.0) / 2.0),
                cy: cy.unwrap_or((d.height() as f64 - 1.0) / 2.0),
            };
            let format = if binary {
                PlyFormat::BinaryLittleEndian
            } else {
                PlyFormat::Ascii
            };
            let n = export_pointcloud(&d, &rgb, &cam, &out, format)?;
            log(format!("wrote {n} vertices to {}", out.display()));
            Ok(())
        }
    }
}

fn single_csv(r: &MetricReport) -> String {
    let header: String = r.bad.iter().map(|(t, _)| format!("bad{t:.0},")).collect();
    let cells: String = r
        .bad
        .iter()
        .map(|(_, v)| format!("{v:.4},"))
        .collect();
    format!(
        "{header}epe,see,valid,edges\n{cells}{:.4},{},{},{}\n",
        r.epe,
        r.see.map_or(String::new(), |s| format!("{s:.4}")),
        r.valid_count,
        r.edge_count
    )
}

fn format_single(r: &MetricReport) -> String {
    let mut out = String::new();
    for (t, v) in &r.bad {
        out.push_str(&format!("bad{t:<4.1} {v:>8.3}%\n"));
    }
    out.push_str(&format!("epe    {:>8.4} px\n", r.epe));
    out.push_str(&format!(
        "see    {:>8}\n",
        r.see.map_or("n/a".to_string(), |s| format!("{s:.4}"))
    ));
    out.push_str(&format!(
        "pixels {} valid, {} on edges\n",
        r.valid_count, r.edge_count
    ));
    out
}

/// Kept separate from `DisparityMap` so the CLI can surface read problems
/// with the right exit code; re-exported for integration tests.
pub fn read_raw_disparity(path: &std::path::Path) -> Result<DisparityMap> {
    read_disparity_pfm(path)
}
