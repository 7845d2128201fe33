//! Correlation estimates with block error bars and the mode-overlap fit.

use rayon::prelude::*;

use crate::error::{check_range, Error, Result};
use crate::model::{self, DetectorChannel, SourceParams};

/// Mean correlation over equal-size blocks with its across-block spread.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrEstimate {
    pub mean_corr: f64,
    /// One standard deviation of the per-block correlations.
    pub std_dev: f64,
    pub n_blocks: usize,
}

impl CorrEstimate {
    pub fn new(mean_corr: f64, std_dev: f64, n_blocks: usize) -> Result<Self> {
        check_range("mean_corr", mean_corr, mean_corr.abs() <= 1.0, "|r| <= 1")?;
        check_range("corr_std", std_dev, std_dev >= 0.0, "std >= 0")?;
        if n_blocks == 0 {
            return Err(Error::Empty("correlation estimate needs at least one block"));
        }
        Ok(Self {
            mean_corr,
            std_dev,
            n_blocks,
        })
    }

    /// Standard error of `mean_corr`.
    pub fn standard_error(&self) -> f64 {
        self.std_dev / (self.n_blocks as f64).sqrt()
    }
}

/// A [`CorrEstimate`] together with the per-block values it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockedCorrelation {
    pub estimate: CorrEstimate,
    pub block_size: usize,
    /// Trailing samples that did not fill a block and were ignored.
    pub dropped: usize,
    pub per_block: Vec<f64>,
}

/// Pearson correlation coefficient of two equally long columns.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(format!(
            "columns have {} and {} entries",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::UndefinedCorrelation(
            "need at least two samples".into(),
        ));
    }
    let n = x.len() as f64;
    let mean_x = x.iter().sum::<f64>() / n;
    let mean_y = y.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let dx = a - mean_x;
        let dy = b - mean_y;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation(
            "a column has zero variance".into(),
        ));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Sample mean and standard deviation (n - 1 denominator; 0 for one value).
pub fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Splits both columns into `n_blocks` equal blocks, correlates each block,
/// and summarizes the block values by their mean and standard deviation.
pub fn blocked_correlation(x: &[f64], y: &[f64], n_blocks: usize) -> Result<BlockedCorrelation> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(format!(
            "columns have {} and {} entries",
            x.len(),
            y.len()
        )));
    }
    if n_blocks == 0 {
        return Err(Error::Empty("n_blocks must be at least 1"));
    }
    if x.len() < n_blocks {
        return Err(Error::LengthMismatch(format!(
            "{} samples cannot fill {n_blocks} blocks",
            x.len()
        )));
    }
    let block_size = x.len() / n_blocks;
    let per_block = x
        .par_chunks_exact(block_size)
        .zip(y.par_chunks_exact(block_size))
        .take(n_blocks)
        .map(|(bx, by)| pearson(bx, by))
        .collect::<Result<Vec<f64>>>()?;
    let (mean, std) = mean_and_std(&per_block);
    Ok(BlockedCorrelation {
        estimate: CorrEstimate::new(mean.clamp(-1.0, 1.0), std, n_blocks)?,
        block_size,
        dropped: x.len() - block_size * n_blocks,
        per_block,
    })
}

/// One measured point of the correlation-versus-photon-number curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitPoint {
    pub n0: f64,
    pub estimate: CorrEstimate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Standard deviations below this value are raised to it before weighting.
    pub std_floor: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { std_floor: 1e-6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitResult {
    /// Fitted mode overlap, clamped to [0, 1].
    pub a_hat: f64,
    /// Least-squares solution before clamping.
    pub unclamped: f64,
    pub clamped: bool,
    /// Standard error of `a_hat` from the block standard errors of the points.
    pub standard_error: f64,
    /// Weighted sum of squared residuals at `a_hat`.
    pub residual_norm: f64,
    pub n_points: usize,
}

impl FitResult {
    /// Model correlation at photon number `n0` for the fitted overlap.
    pub fn model_corr(
        &self,
        n0: f64,
        alice: &DetectorChannel,
        bob: &DetectorChannel,
        total_attenuation: f64,
    ) -> Result<f64> {
        Ok(self.a_hat * overlap_sensitivity(n0, alice, bob, total_attenuation)?)
    }
}

/// Predicted correlation at unit mode overlap; the model is this times `a`.
pub fn overlap_sensitivity(
    n0: f64,
    alice: &DetectorChannel,
    bob: &DetectorChannel,
    total_attenuation: f64,
) -> Result<f64> {
    model::predicted_correlation(&SourceParams::new(n0, 1.0)?, alice, bob, total_attenuation)
}

/// Weighted least-squares estimate of the mode overlap.
///
/// The predicted correlation is `a * g(n0)`, so minimizing
/// `sum w_i (r_i - a g_i)^2` with `w_i = 1 / std_i^2` has the closed form
/// `a = sum w g r / sum w g^2`.
pub fn fit_mode_overlap(
    points: &[FitPoint],
    alice: &DetectorChannel,
    bob: &DetectorChannel,
    total_attenuation: f64,
    options: FitOptions,
) -> Result<FitResult> {
    if points.len() < 2 {
        return Err(Error::Unidentifiable(format!(
            "need at least two points, got {}",
            points.len()
        )));
    }
    check_range("std_floor", options.std_floor, options.std_floor > 0.0, "floor > 0")?;
    let mut rows = Vec::with_capacity(points.len());
    for p in points {
        let g = overlap_sensitivity(p.n0, alice, bob, total_attenuation)?;
        let std = p.estimate.std_dev.max(options.std_floor);
        let se = std / (p.estimate.n_blocks as f64).sqrt();
        rows.push((g, p.estimate.mean_corr, 1.0 / (std * std), se));
    }
    let information: f64 = rows.iter().map(|(g, _, w, _)| w * g * g).sum();
    if !(information > 0.0) {
        return Err(Error::Unidentifiable(
            "model does not depend on the overlap at any point (all n0 zero?)".into(),
        ));
    }
    let unclamped = rows.iter().map(|(g, r, w, _)| w * g * r).sum::<f64>() / information;
    let a_hat = unclamped.clamp(0.0, 1.0);
    let variance = rows
        .iter()
        .map(|(g, _, w, se)| (w * g * se).powi(2))
        .sum::<f64>()
        / (information * information);
    let residual_norm = rows
        .iter()
        .map(|(g, r, w, _)| w * (r - a_hat * g).powi(2))
        .sum();
    Ok(FitResult {
        a_hat,
        unclamped,
        clamped: a_hat != unclamped,
        standard_error: variance.sqrt(),
        residual_norm,
        n_points: points.len(),
    })
}

/// Central value and one-standard-deviation interval of `I_AB`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MutualInfoInterval {
    pub central: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Largest correlation magnitude allowed when mapping interval endpoints.
const MAX_ENDPOINT_CORR: f64 = 1.0 - f64::EPSILON;

/// Maps a correlation estimate to mutual information, sending the endpoints
/// `|r| -/+ std` (clamped to [0, 1)) through the same monotone map.
pub fn empirical_mutual_info(estimate: &CorrEstimate) -> Result<MutualInfoInterval> {
    let r = estimate.mean_corr;
    check_range("mean_corr", r, r.abs() < 1.0, "|r| < 1")?;
    let magnitude = r.abs();
    let lo = (magnitude - estimate.std_dev).clamp(0.0, MAX_ENDPOINT_CORR);
    let hi = (magnitude + estimate.std_dev).clamp(0.0, MAX_ENDPOINT_CORR);
    Ok(MutualInfoInterval {
        central: model::mutual_info_from_corr(magnitude)?,
        lower: model::mutual_info_from_corr(lo)?,
        upper: model::mutual_info_from_corr(hi)?,
    })
}

/// Mean of the elementwise product of two columns (raw second moment).
pub fn mean_product(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / x.len() as f64
}
