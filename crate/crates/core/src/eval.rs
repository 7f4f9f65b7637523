//! Disparity evaluation: end-point error, bad-th percentages, the soft edge
//! error near depth boundaries, comparison reports, and point-cloud export
//! for visual inspection of edge bleeding.
//!
//! All metrics run over pixels with *valid ground truth*; predictions are
//! scored verbatim, so a prediction hole (sentinel value) simply counts as a
//! grossly wrong estimate.

use crate::error::{Error, Result};
use crate::grid::{DisparityMap, PixelGrid};
use crate::io::{write_ply, PlyFormat, PlyVertex};
use std::fmt::Write as _;
use std::path::Path;

/// Table-style thresholds reported by default.
pub const DEFAULT_BAD_THRESHOLDS: [f64; 4] = [2.0, 3.0, 4.0, 5.0];
/// Ground-truth patch side for the soft edge error.
pub const DEFAULT_SEE_PATCH: usize = 5;
/// Disparity range a ground-truth patch must span to count as an edge.
pub const DEFAULT_SEE_EDGE_RANGE: f64 = 2.0;

fn check_dims(pred: &DisparityMap, gt: &DisparityMap) -> Result<()> {
    if pred.width() != gt.width() || pred.height() != gt.height() {
        return Err(Error::domain(format!(
            "prediction {}x{} vs ground truth {}x{}",
            pred.width(),
            pred.height(),
            gt.width(),
            gt.height()
        )));
    }
    Ok(())
}

/// Mean absolute disparity error over valid ground-truth pixels.
pub fn epe(pred: &DisparityMap, gt: &DisparityMap) -> Result<f64> {
    check_dims(pred, gt)?;
    let mut acc = 0.0;
    let mut count = 0usize;
    for (p, g) in pred.grid().data().iter().zip(gt.grid().data()) {
        if *g >= 0.0 {
            acc += (p - g).abs();
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::domain("ground truth has no valid pixels".to_string()));
    }
    Ok(acc / count as f64)
}

/// Percentage of valid ground-truth pixels with error above `threshold`.
pub fn bad(pred: &DisparityMap, gt: &DisparityMap, threshold: f64) -> Result<f64> {
    check_dims(pred, gt)?;
    let mut over = 0usize;
    let mut count = 0usize;
    for (p, g) in pred.grid().data().iter().zip(gt.grid().data()) {
        if *g >= 0.0 {
            count += 1;
            if (p - g).abs() > threshold {
                over += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::domain("ground truth has no valid pixels".to_string()));
    }
    Ok(100.0 * over as f64 / count as f64)
}

/// Edge mask: pixels whose valid ground-truth values within the patch span
/// more than `edge_range_th`.
fn is_edge(gt: &DisparityMap, x: usize, y: usize, r: usize, edge_range_th: f64) -> bool {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for ny in y.saturating_sub(r)..=(y + r).min(gt.height() - 1) {
        for nx in x.saturating_sub(r)..=(x + r).min(gt.width() - 1) {
            let v = gt.get(nx, ny);
            if v >= 0.0 {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
    }
    hi - lo > edge_range_th
}

/// Soft edge error: over edge pixels with valid ground truth, the minimum
/// absolute difference between the prediction and *any* valid ground-truth
/// value in the surrounding patch, averaged. `None` when the edge mask is
/// empty.
pub fn see(
    pred: &DisparityMap,
    gt: &DisparityMap,
    patch: usize,
    edge_range_th: f64,
) -> Result<Option<f64>> {
    check_dims(pred, gt)?;
    if patch % 2 == 0 || patch < 3 {
        return Err(Error::domain(format!("patch must be odd and >= 3, got {patch}")));
    }
    let r = patch / 2;
    let mut acc = 0.0;
    let mut count = 0usize;
    for y in 0..gt.height() {
        for x in 0..gt.width() {
            if !gt.is_valid(x, y) || !is_edge(gt, x, y, r, edge_range_th) {
                continue;
            }
            let p = pred.get(x, y);
            let mut best = f64::INFINITY;
            for ny in y.saturating_sub(r)..=(y + r).min(gt.height() - 1) {
                for nx in x.saturating_sub(r)..=(x + r).min(gt.width() - 1) {
                    let g = gt.get(nx, ny);
                    if g >= 0.0 {
                        best = best.min((p - g).abs());
                    }
                }
            }
            acc += best;
            count += 1;
        }
    }
    Ok((count > 0).then(|| acc / count as f64))
}

/// All metrics of one prediction against one ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub epe: f64,
    /// `(threshold, percentage)` pairs, in threshold order.
    pub bad: Vec<(f64, f64)>,
    /// Absent when the scene has no depth edges.
    pub see: Option<f64>,
    pub valid_count: usize,
    pub edge_count: usize,
}

pub fn metric_report(
    pred: &DisparityMap,
    gt: &DisparityMap,
    thresholds: &[f64],
    patch: usize,
    edge_range_th: f64,
) -> Result<MetricReport> {
    let epe_v = epe(pred, gt)?;
    let mut bads = Vec::with_capacity(thresholds.len());
    for &t in thresholds {
        bads.push((t, bad(pred, gt, t)?));
    }
    let see_v = see(pred, gt, patch, edge_range_th)?;
    let r = patch / 2;
    let mut edge_count = 0usize;
    let mut valid_count = 0usize;
    for y in 0..gt.height() {
        for x in 0..gt.width() {
            if gt.is_valid(x, y) {
                valid_count += 1;
                if is_edge(gt, x, y, r, edge_range_th) {
                    edge_count += 1;
                }
            }
        }
    }
    Ok(MetricReport {
        epe: epe_v,
        bad: bads,
        see: see_v,
        valid_count,
        edge_count,
    })
}

/// Raw-vs-refined comparison; deltas are refined minus raw.
#[derive(Debug, Clone)]
pub struct CompareReport {
    pub raw: MetricReport,
    pub refined: MetricReport,
}

pub fn compare_report(
    raw: &DisparityMap,
    refined: &DisparityMap,
    gt: &DisparityMap,
) -> Result<CompareReport> {
    Ok(CompareReport {
        raw: metric_report(
            raw,
            gt,
            &DEFAULT_BAD_THRESHOLDS,
            DEFAULT_SEE_PATCH,
            DEFAULT_SEE_EDGE_RANGE,
        )?,
        refined: metric_report(
            refined,
            gt,
            &DEFAULT_BAD_THRESHOLDS,
            DEFAULT_SEE_PATCH,
            DEFAULT_SEE_EDGE_RANGE,
        )?,
    })
}

fn fmt_see(v: Option<f64>) -> String {
    v.map_or("n/a".to_string(), |s| format!("{s:.4}"))
}

impl MetricReport {
    fn csv_cells(&self) -> String {
        let bads = self
            .bad
            .iter()
            .map(|(_, v)| format!("{v:.4}"))
            .collect::<Vec<_>>()
            .join(",");
        format!(
            "{bads},{:.4},{}",
            self.epe,
            self.see.map_or(String::new(), |s| format!("{s:.4}"))
        )
    }
}

impl CompareReport {
    /// CSV with the usual column set (`bad2..bad5`, `epe`, `see`), one row
    /// per map plus a signed-delta row.
    ///
    /// The `see` column follows this crate's operationalization: mean
    /// patch-minimum absolute error over pixels whose 5x5 ground-truth
    /// neighborhood spans more than the edge threshold.
    pub fn to_csv(&self) -> String {
        let header: String = self
            .raw
            .bad
            .iter()
            .map(|(t, _)| format!("bad{t:.0},"))
            .collect();
        let mut out = format!("map,{header}epe,see\n");
        let _ = writeln!(out, "raw,{}", self.raw.csv_cells());
        let _ = writeln!(out, "refined,{}", self.refined.csv_cells());
        let deltas: Vec<String> = self
            .raw
            .bad
            .iter()
            .zip(&self.refined.bad)
            .map(|((_, r), (_, f))| format!("{:.4}", f - r))
            .collect();
        let delta_see = match (self.raw.see, self.refined.see) {
            (Some(r), Some(f)) => format!("{:.4}", f - r),
            _ => String::new(),
        };
        let _ = writeln!(
            out,
            "delta,{},{:.4},{delta_see}",
            deltas.join(","),
            self.refined.epe - self.raw.epe
        );
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:>9} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9}",
            "map", "bad2%", "bad3%", "bad4%", "bad5%", "EPE", "SEE"
        );
        for (name, r) in [("raw", &self.raw), ("refined", &self.refined)] {
            let _ = writeln!(
                out,
                "{:>9} {:>9.3} {:>9.3} {:>9.3} {:>9.3} {:>9.4} {:>9}",
                name,
                r.bad[0].1,
                r.bad[1].1,
                r.bad[2].1,
                r.bad[3].1,
                r.epe,
                fmt_see(r.see)
            );
        }
        out
    }
}

/// Pinhole camera for reprojecting disparity into 3D.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraModel {
    /// Focal length in pixels.
    pub focal: f64,
    /// Stereo baseline in meters.
    pub baseline: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.focal > 0.0 && self.baseline > 0.0) {
            return Err(Error::domain(format!(
                "focal and baseline must be positive, got {} / {}",
                self.focal, self.baseline
            )));
        }
        Ok(())
    }
}

/// Disparities at or below this contribute no point (depth would explode).
pub const PLY_MIN_DISPARITY: f64 = 1e-3;

/// Reprojects valid pixels to colored vertices and writes a PLY file;
/// returns the vertex count. `z = focal * baseline / d`.
pub fn export_pointcloud(
    d: &DisparityMap,
    rgb: &PixelGrid,
    cam: &CameraModel,
    path: &Path,
    format: PlyFormat,
) -> Result<usize> {
    cam.validate()?;
    if rgb.width() != d.width() || rgb.height() != d.height() {
        return Err(Error::domain(format!(
            "image {}x{} does not match disparity {}x{}",
            rgb.width(),
            rgb.height(),
            d.width(),
            d.height()
        )));
    }
    let mut vertices = Vec::new();
    for v in 0..d.height() {
        for u in 0..d.width() {
            let disp = d.get(u, v);
            if disp <= PLY_MIN_DISPARITY {
                continue;
            }
            let z = cam.focal * cam.baseline / disp;
            let x = (u as f64 - cam.cx) * z / cam.focal;
            let y = (v as f64 - cam.cy) * z / cam.focal;
            let px = rgb.pixel(u, v);
            let quant = |c: f64| c.round().clamp(0.0, 255.0) as u8;
            let (r, g, b) = match px.len() {
                3 => (quant(px[0]), quant(px[1]), quant(px[2])),
                _ => (quant(px[0]), quant(px[0]), quant(px[0])),
            };
            vertices.push(PlyVertex { x, y, z, r, g, b });
        }
    }
    write_ply(path, &vertices, format)?;
    Ok(vertices.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn map_from(values: &[f64], w: usize, h: usize) -> DisparityMap {
        let mut d = DisparityMap::filled(w, h, 0.0).unwrap();
        d.grid_mut().data_mut().copy_from_slice(values);
        d
    }

    #[test]
    fn epe_and_bad_basics() {
        let pred = map_from(&[1.0, 2.0, 3.0], 3, 1);
        let gt = map_from(&[1.0, 2.0, 5.0], 3, 1);
        assert!((epe(&pred, &gt).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        let b1 = bad(&pred, &gt, 1.0).unwrap();
        assert!((b1 - 100.0 / 3.0).abs() < 1e-9);
        assert_eq!(bad(&pred, &gt, 2.5).unwrap(), 0.0);

        assert_eq!(epe(&gt, &gt).unwrap(), 0.0);
        for th in [0.5, 1.0, 3.0] {
            assert_eq!(bad(&gt, &gt, th).unwrap(), 0.0);
        }
    }

    #[test]
    fn metrics_ignore_invalid_gt_and_reject_empty() {
        let pred = map_from(&[1.0, 9.0], 2, 1);
        let mut gt = map_from(&[1.0, 4.0], 2, 1);
        gt.set_invalid(1, 0);
        assert_eq!(epe(&pred, &gt).unwrap(), 0.0);

        let mut empty = gt.clone();
        empty.set_invalid(0, 0);
        assert!(epe(&pred, &empty).is_err());
        assert!(bad(&pred, &empty, 1.0).is_err());
    }

    #[test]
    fn metrics_match_bruteforce_on_random_maps() {
        let mut rng = StdRng::seed_from_u64(5);
        for _ in 0..20 {
            let (w, h) = (9usize, 7usize);
            let mut pred = DisparityMap::filled(w, h, 0.0).unwrap();
            let mut gt = DisparityMap::filled(w, h, 0.0).unwrap();
            for y in 0..h {
                for x in 0..w {
                    pred.set(x, y, rng.random::<f64>() * 16.0);
                    if rng.random::<f64>() < 0.15 {
                        gt.set_invalid(x, y);
                    } else {
                        gt.set(x, y, rng.random::<f64>() * 16.0);
                    }
                }
            }
            let mut acc = 0.0;
            let mut n = 0usize;
            let mut over = 0usize;
            for y in 0..h {
                for x in 0..w {
                    if gt.is_valid(x, y) {
                        n += 1;
                        let e = (pred.get(x, y) - gt.get(x, y)).abs();
                        acc += e;
                        if e > 2.0 {
                            over += 1;
                        }
                    }
                }
            }
            assert_eq!(epe(&pred, &gt).unwrap(), acc / n as f64);
            assert_eq!(bad(&pred, &gt, 2.0).unwrap(), 100.0 * over as f64 / n as f64);
        }
    }

    #[test]
    fn see_patch_minimum() {
        // Strong edge everywhere; center prediction 10 against patch values
        // {2, 10.4, 12} contributes min = 0.4.
        let mut gt = DisparityMap::filled(5, 5, 2.0).unwrap();
        gt.set(2, 2, 10.4);
        gt.set(3, 2, 12.0);
        let mut pred = gt.clone();
        pred.set(2, 2, 10.0);
        let s = see(&pred, &gt, 5, 2.0).unwrap().unwrap();
        // All other pixels predict a value present in their own patch.
        assert!((s - 0.4 / 25.0).abs() < 1e-12);

        assert_eq!(see(&gt, &gt, 5, 2.0).unwrap().unwrap(), 0.0);
    }

    #[test]
    fn see_empty_edge_mask_is_absent() {
        let gt = DisparityMap::filled(6, 6, 4.0).unwrap();
        let pred = DisparityMap::filled(6, 6, 9.0).unwrap();
        assert_eq!(see(&pred, &gt, 5, 2.0).unwrap(), None);
        assert!(see(&pred, &gt, 4, 2.0).is_err());
    }

    #[test]
    fn see_matches_bruteforce_and_bounds_epe_on_edges() {
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..10 {
            let (w, h) = (10usize, 8usize);
            let mut pred = DisparityMap::filled(w, h, 0.0).unwrap();
            let mut gt = DisparityMap::filled(w, h, 0.0).unwrap();
            for y in 0..h {
                for x in 0..w {
                    pred.set(x, y, rng.random::<f64>() * 12.0);
                    if rng.random::<f64>() < 0.1 {
                        gt.set_invalid(x, y);
                    } else {
                        gt.set(x, y, rng.random::<f64>() * 12.0);
                    }
                }
            }
            let mut acc = 0.0;
            let mut edge_epe = 0.0;
            let mut n = 0usize;
            for y in 0..h {
                for x in 0..w {
                    if !gt.is_valid(x, y) {
                        continue;
                    }
                    let mut lo = f64::INFINITY;
                    let mut hi = f64::NEG_INFINITY;
                    let mut best = f64::INFINITY;
                    for ny in y.saturating_sub(2)..=(y + 2).min(h - 1) {
                        for nx in x.saturating_sub(2)..=(x + 2).min(w - 1) {
                            let g = gt.get(nx, ny);
                            if g >= 0.0 {
                                lo = lo.min(g);
                                hi = hi.max(g);
                                best = best.min((pred.get(x, y) - g).abs());
                            }
                        }
                    }
                    if hi - lo > 2.0 {
                        acc += best;
                        edge_epe += (pred.get(x, y) - gt.get(x, y)).abs();
                        n += 1;
                    }
                }
            }
            let got = see(&pred, &gt, 5, 2.0).unwrap();
            if n == 0 {
                assert_eq!(got, None);
            } else {
                let want = acc / n as f64;
                assert_eq!(got.unwrap(), want);
                // Patch minimum can only reduce the error on the edge mask.
                assert!(want <= edge_epe / n as f64 + 1e-12);
            }
        }
    }

    #[test]
    fn bad_is_monotone_in_threshold() {
        let mut rng = StdRng::seed_from_u64(13);
        let pred = map_from(
            &(0..40).map(|_| rng.random::<f64>() * 10.0).collect::<Vec<_>>(),
            8,
            5,
        );
        let gt = map_from(
            &(0..40).map(|_| rng.random::<f64>() * 10.0).collect::<Vec<_>>(),
            8,
            5,
        );
        let mut prev = f64::INFINITY;
        for th in [0.5, 1.0, 2.0, 3.0, 5.0] {
            let b = bad(&pred, &gt, th).unwrap();
            assert!(b <= prev);
            prev = b;
        }
    }

    #[test]
    fn compare_report_zero_rows() {
        let mut rng = StdRng::seed_from_u64(17);
        let mut gt = DisparityMap::filled(12, 10, 0.0).unwrap();
        for y in 0..10 {
            for x in 0..12 {
                gt.set(x, y, if x > 6 { 9.0 } else { 2.0 });
            }
        }
        let mut raw = gt.clone();
        for y in 0..10 {
            for x in 0..12 {
                raw.set(x, y, (raw.get(x, y) + rng.random::<f64>() * 4.0).max(0.0));
            }
        }
        let report = compare_report(&raw, &gt, &gt).unwrap();
        assert_eq!(report.refined.epe, 0.0);
        for &(_, b) in &report.refined.bad {
            assert_eq!(b, 0.0);
        }
        assert_eq!(report.refined.see, Some(0.0));

        let same = compare_report(&raw, &raw, &gt).unwrap();
        assert_eq!(same.raw.epe, same.refined.epe);
        let csv = same.to_csv();
        let delta_line = csv.lines().last().unwrap();
        assert!(delta_line.starts_with("delta,0.0000,0.0000,0.0000,0.0000,0.0000"));
        assert!(csv.lines().next().unwrap().contains("bad2,bad3,bad4,bad5,epe,see"));
    }

    #[test]
    fn pointcloud_geometry() {
        use tempfile::tempdir;
        let dir = tempdir().unwrap();
        let cam = CameraModel {
            focal: 100.0,
            baseline: 0.5,
            cx: 2.0,
            cy: 1.5,
        };
        let mut d = DisparityMap::filled(4, 3, 5.0).unwrap();
        d.set_invalid(1, 1);
        d.set(2, 1, 0.0); // below the epsilon, skipped
        let rgb = PixelGrid::new(4, 3, 1).unwrap();

        let path = dir.path().join("cloud.ply");
        let n = export_pointcloud(&d, &rgb, &cam, &path, PlyFormat::Ascii).unwrap();
        assert_eq!(n, 4 * 3 - 2);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains(&format!("element vertex {n}")));
        // Constant disparity plane: constant depth 100 * 0.5 / 5 = 10.
        for line in text.lines().skip(10) {
            let z: f64 = line.split_whitespace().nth(2).unwrap().parse().unwrap();
            assert_eq!(z, 10.0);
        }

        // Doubling disparity halves depth per point.
        let d2 = crate::grid::scale_disparity_values(&d, 2.0).unwrap();
        let path2 = dir.path().join("cloud2.ply");
        export_pointcloud(&d2, &rgb, &cam, &path2, PlyFormat::Ascii).unwrap();
        let text2 = std::fs::read_to_string(&path2).unwrap();
        for line in text2.lines().skip(10) {
            let z: f64 = line.split_whitespace().nth(2).unwrap().parse().unwrap();
            assert_eq!(z, 5.0);
        }

        assert!(export_pointcloud(
            &d,
            &rgb,
            &CameraModel { focal: 0.0, ..cam },
            &path,
            PlyFormat::Ascii
        )
        .is_err());
    }
}
