//! The two-term refinement loss: cross-entropy of the classification head
//! against a Gaussian centered on the ground-truth disparity, plus an L1
//! term steering the offset head toward the sub-bin residual. The residual
//! term only applies when the classification is within one bin of the truth
//! (`|D*_s| <= 1`); otherwise it is masked to exactly zero.

use crate::autodiff::{Tape, Value};
use crate::error::{Error, Result};
use crate::net::HeadOutputs;

/// Default Gaussian width for the classification target.
pub const DEFAULT_SIGMA: f64 = std::f64::consts::SQRT_2;

/// Loss terms of one evaluation; `total = ce_term + offset_term` and the
/// cross-entropy is bounded below by the target distribution's entropy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub ce_term: f64,
    pub offset_term: f64,
    pub total: f64,
    /// Fraction of samples whose offset term was masked out.
    pub masked_fraction: f64,
}

/// Discrete Gaussian over the bin lattice, centered at `d_star` (bin units)
/// and normalized to sum 1.
pub fn gaussian_target(d_star: f64, sigma: f64, d_bins: usize) -> Result<Vec<f64>> {
    if !(sigma > 0.0) {
        return Err(Error::domain(format!("sigma must be > 0, got {sigma}")));
    }
    if d_bins < 2 {
        return Err(Error::domain(format!("d_bins must be >= 2, got {d_bins}")));
    }
    if !(d_star >= 0.0 && d_star <= (d_bins - 1) as f64) {
        return Err(Error::domain(format!(
            "d_star {d_star} outside the bin range [0, {}]",
            d_bins - 1
        )));
    }
    // Shift exponents by their maximum so degenerate sigmas cannot
    // underflow the whole lattice to zero; the shift cancels in the
    // normalization.
    let exponents: Vec<f64> = (0..d_bins)
        .map(|d| {
            let z = d as f64 - d_star;
            -z * z / (2.0 * sigma * sigma)
        })
        .collect();
    let max = exponents.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut weights: Vec<f64> = exponents.iter().map(|&e| (e - max).exp()).collect();
    let sum: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= sum;
    }
    Ok(weights)
}

/// Entropy of a target distribution, the cross-entropy's lower bound.
pub fn target_entropy(target: &[f64]) -> f64 {
    -target
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>()
}

/// Mean target entropy over a batch of ground-truth values.
pub fn mean_target_entropy(d_stars: &[f64], sigma: f64, d_bins: usize) -> Result<f64> {
    let mut acc = 0.0;
    for &d in d_stars {
        acc += target_entropy(&gaussian_target(d, sigma, d_bins)?);
    }
    Ok(acc / d_stars.len() as f64)
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0usize;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn stable_log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = logits.iter().map(|&l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|&l| l - max - log_sum).collect()
}

/// Single-point loss evaluation (no graph); `d_star` is in bin units.
pub fn refinement_loss(
    logits: &[f64],
    offset: f64,
    d_star: f64,
    sigma: f64,
) -> Result<LossBreakdown> {
    let target = gaussian_target(d_star, sigma, logits.len())?;
    let log_probs = stable_log_softmax(logits);
    let ce_term: f64 = -target
        .iter()
        .zip(&log_probs)
        .map(|(&t, &lp)| t * lp)
        .sum::<f64>();
    let residual = d_star - argmax(logits) as f64;
    let masked = residual.abs() > 1.0;
    let offset_term = if masked { 0.0 } else { (offset - residual).abs() };
    Ok(LossBreakdown {
        ce_term,
        offset_term,
        total: ce_term + offset_term,
        masked_fraction: if masked { 1.0 } else { 0.0 },
    })
}

/// Graph form of the loss over a batch of points, averaged over the batch.
/// Masked offset residuals contribute exactly zero, to the value and to the
/// gradient both. Returns the scalar loss node plus the evaluated breakdown.
pub fn refinement_loss_batch(
    tape: &mut Tape,
    head: &HeadOutputs,
    d_stars: &[f64],
    sigma: f64,
) -> Result<(Value, LossBreakdown)> {
    match head {
        HeadOutputs::L1 { disparity } => {
            let n = d_stars.len();
            if tape.shape(*disparity) != [n, 1] {
                return Err(Error::domain(format!(
                    "L1 head output shaped {:?}, expected [{n}, 1]",
                    tape.shape(*disparity)
                )));
            }
            let target = tape.constant(&[n, 1], d_stars.to_vec())?;
            let diff = tape.sub(*disparity, target)?;
            let absdiff = tape.abs(diff);
            let total = tape.mean(absdiff);
            let value = tape.values(total)[0];
            Ok((
                total,
                LossBreakdown {
                    ce_term: 0.0,
                    offset_term: value,
                    total: value,
                    masked_fraction: 0.0,
                },
            ))
        }
        HeadOutputs::ClassOffset {
            logits,
            bins,
            offsets,
        } => {
            let n = d_stars.len();
            let d_bins = tape.shape(*logits)[1];
            if tape.shape(*logits)[0] != n || bins.len() != n {
                return Err(Error::domain(format!(
                    "logits shaped {:?} for {n} ground-truth values",
                    tape.shape(*logits)
                )));
            }
            let mut targets = Vec::with_capacity(n * d_bins);
            for &d in d_stars {
                targets.extend(gaussian_target(d, sigma, d_bins)?);
            }
            let targets = tape.constant(&[n, d_bins], targets)?;
            let probs = tape.softmax(*logits, 1)?;
            let log_probs = tape.log(probs);
            let weighted = tape.mul(targets, log_probs)?;
            let ce_sum = tape.sum(weighted);
            let ce = tape.mul_scalar(ce_sum, -1.0 / n as f64);

            let mut residuals = Vec::with_capacity(n);
            let mut mask = Vec::with_capacity(n);
            let mut masked_count = 0usize;
            for (&d, &b) in d_stars.iter().zip(bins) {
                let r = d - b as f64;
                if r.abs() > 1.0 {
                    residuals.push(0.0);
                    mask.push(0.0);
                    masked_count += 1;
                } else {
                    residuals.push(r);
                    mask.push(1.0);
                }
            }
            let residuals = tape.constant(&[n, 1], residuals)?;
            let mask = tape.constant(&[n, 1], mask)?;
            let diff = tape.sub(*offsets, residuals)?;
            let absdiff = tape.abs(diff);
            let masked = tape.mul(absdiff, mask)?;
            let off_sum = tape.sum(masked);
            let off = tape.mul_scalar(off_sum, 1.0 / n as f64);

            let total = tape.add(ce, off)?;
            Ok((
                total,
                LossBreakdown {
                    ce_term: tape.values(ce)[0],
                    offset_term: tape.values(off)[0],
                    total: tape.values(total)[0],
                    masked_fraction: masked_count as f64 / n as f64,
                },
            ))
        }
    }
}
