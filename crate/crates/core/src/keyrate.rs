//! Asymptotic secret key rate for heterodyne detection with reverse
//! reconciliation, `R = f I_AB - chi_BE`.
//!
//! All rates are in bits per channel use. The state-preparation excess noise
//! of the passive scheme is charged to the channel (`chi_line`), i.e. it is
//! conservatively treated as if Eve had caused it. Bob's detector noise is
//! trusted.
//!
//! The symplectic eigenvalues come from two quadratics in `lambda^2`. Near
//! `lambda = 1` the textbook root formulas lose most of their digits to
//! cancellation, which can push `chi_BE` below zero for weak modulation. This
//! module solves the same quadratics for `lambda^2 - 1` using coefficients
//! expanded into sums of nonnegative terms, so every eigenvalue and every
//! `G((lambda - 1) / 2)` keeps full relative precision.

use std::f64::consts::LN_2;

use rayon::prelude::*;

use crate::error::{check_non_negative, check_open_unit, check_range, Error, Result};
use crate::estimation::{empirical_mutual_info, CorrEstimate, MutualInfoInterval};
use crate::model::{linear_to_db, ChannelParams, DetectorChannel, SystemConfig};

pub use crate::model::transmittance_from_length;

/// Relative tolerance on a negative discriminant before it is treated as an error.
pub const DISCRIMINANT_TOLERANCE: f64 = 1e-9;

/// Allowed mismatch between `eta0 * T` and a measured total attenuation.
pub const SPLIT_TOLERANCE_DB: f64 = 0.05;

/// Noise added by Bob's conjugate homodyne receiver, referred to its input:
/// `[1 + (1 - eta) + 2 v] / eta`.
pub fn heterodyne_noise(bob: &DetectorChannel) -> f64 {
    1.0 + heterodyne_excess(bob)
}

/// `chi_het - 1`, evaluated without cancellation.
fn heterodyne_excess(bob: &DetectorChannel) -> f64 {
    let eta = bob.efficiency();
    (2.0 * (1.0 - eta) + 2.0 * bob.noise_variance()) / eta
}

/// Channel-added noise referred to the channel input: `1/T - 1 + eps_A`.
pub fn line_noise(transmittance: f64, excess_noise: f64) -> Result<f64> {
    let t = check_open_unit("transmittance", transmittance)?;
    let eps = check_non_negative("excess_noise", excess_noise)?;
    Ok((1.0 - t) / t + eps)
}

/// Overall noise `chi_line + chi_het / T`.
pub fn total_noise(line_noise: f64, heterodyne_noise: f64, transmittance: f64) -> Result<f64> {
    let t = check_open_unit("transmittance", transmittance)?;
    Ok(line_noise + heterodyne_noise / t)
}

/// Alice-Bob mutual information over both quadratures,
/// `log2((V + chi_tot) / (1 + chi_tot))`.
pub fn mutual_info_key(v: f64, total_noise: f64) -> f64 {
    ((v - 1.0) / (1.0 + total_noise)).ln_1p() / LN_2
}

/// Entropy function `G(x) = (x + 1) log2(x + 1) - x log2(x)`, with `G(0) = 0`.
pub fn entropy_g(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    ((x + 1.0) * x.ln_1p() - x * x.ln()) / LN_2
}

/// Noise figures of one operating point, all in shot-noise units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseBudget {
    /// `V_A`
    pub modulation_variance: f64,
    /// `V = V_A + 1`
    pub v: f64,
    /// `eps_A`
    pub excess_noise: f64,
    pub transmittance: f64,
    pub chi_het: f64,
    pub chi_line: f64,
    pub chi_tot: f64,
    /// `chi_het - 1`, kept separately for precision.
    chi_het_excess: f64,
}

impl NoiseBudget {
    pub fn new(
        modulation_variance: f64,
        excess_noise: f64,
        transmittance: f64,
        bob: &DetectorChannel,
    ) -> Result<Self> {
        let v_a = check_non_negative("modulation_variance", modulation_variance)?;
        let chi_line = line_noise(transmittance, excess_noise)?;
        let chi_het = heterodyne_noise(bob);
        Ok(Self {
            modulation_variance: v_a,
            v: v_a + 1.0,
            excess_noise,
            transmittance,
            chi_het,
            chi_line,
            chi_tot: total_noise(chi_line, chi_het, transmittance)?,
            chi_het_excess: heterodyne_excess(bob),
        })
    }

    /// Budget of the X quadrature of `config`, with `eps_A` from the passive
    /// preparation model.
    pub fn from_config(config: &SystemConfig) -> Result<Self> {
        Self::new(
            config.modulation_variance(),
            config.excess_noise()?,
            config.transmittance(),
            &config.bob_detector.x,
        )
    }

    /// `I_AB` from the noise model.
    pub fn mutual_info(&self) -> f64 {
        (self.modulation_variance / (1.0 + self.chi_tot)).ln_1p() / LN_2
    }
}

/// Holevo bound together with the quantities it was assembled from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HolevoBound {
    pub chi_be: f64,
    /// Symplectic eigenvalues; `lambdas[4]` is always exactly 1.
    pub lambdas: [f64; 5],
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

/// Roots of `z^2 - sum z + product = 0` for `z = lambda^2 - 1`, larger first.
fn shifted_roots(sum: f64, product: f64, scale: f64, label: &str) -> Result<(f64, f64)> {
    let discriminant = sum * sum - 4.0 * product;
    if discriminant < -DISCRIMINANT_TOLERANCE * scale.max(1.0) {
        return Err(Error::Numerical(format!(
            "{label}: discriminant {discriminant:e} is negative beyond tolerance"
        )));
    }
    let large = (sum + discriminant.max(0.0).sqrt()) / 2.0;
    let small = if large > 0.0 { product / large } else { 0.0 };
    Ok((large, small.max(0.0)))
}

/// `(lambda - 1) / 2` from `lambda^2 - 1`.
fn half_excess(shifted: f64) -> f64 {
    shifted / (2.0 * ((1.0 + shifted).sqrt() + 1.0))
}

/// Holevo information between Eve and Bob's heterodyne outcomes.
pub fn holevo_bound(budget: &NoiseBudget) -> Result<HolevoBound> {
    let va = budget.modulation_variance;
    let eps = budget.excess_noise;
    let t = budget.transmittance;
    let k = budget.chi_het_excess;
    let h = budget.chi_het;
    let u = 1.0 - t;

    // lambda_{1,2}^2 - 1: sum A - 2 and product B - A + 1.
    let sum_ab = va * u * (va * u + 2.0) + t * eps * (2.0 + 2.0 * t * va + t * eps);
    let prod_ab = t * va * eps * (va + 2.0) * (t * eps + 2.0 * u);
    let a = sum_ab + 2.0;
    let sqrt_b = t * (budget.v * budget.chi_line + 1.0);
    let b = sqrt_b * sqrt_b;

    // lambda_{3,4}^2 - 1: sum C - 2 and product D - C + 1.
    let scale = t * va + t * eps + h + 1.0;
    let scale2 = scale * scale;
    let va2 = va * va;
    let t2 = t * t;
    let numerator = va2 * eps * eps * t2
        + 2.0 * va2 * eps * k * t
        + 2.0 * va2 * eps * t * (2.0 - t)
        + va2 * k * k * u * u
        + 2.0 * va2 * k * (2.0 - t) * u
        + 4.0 * va2 * u
        + 2.0 * va * eps * eps * t2
        + 2.0 * va * eps * k * k * t2
        + 4.0 * va * eps * k * t * (1.0 + t)
        + 4.0 * va * eps * t * (2.0 - t)
        + 2.0 * va * k * k * u
        + 8.0 * va * k * u
        + 8.0 * va * u
        + eps * eps * k * k * t2
        + 2.0 * eps * eps * k * t2
        + 2.0 * eps * k * k * t
        + 4.0 * eps * k * t;
    let sum_cd = numerator / scale2;
    let prod_cd = t * va * eps * (va + 2.0) * k * (h + 1.0) * (t * eps + 2.0 * u) / scale2;
    let c = sum_cd + 2.0;
    let d = 1.0 + sum_cd + prod_cd;

    let (p1, p2) = shifted_roots(sum_ab, prod_ab, a * a, "lambda_1,2")?;
    let (p3, p4) = shifted_roots(sum_cd, prod_cd, c * c, "lambda_3,4")?;
    let shifted = [p1, p2, p3, p4, 0.0];
    let lambdas = shifted.map(|p| (1.0 + p).sqrt());
    let g = shifted.map(|p| entropy_g(half_excess(p)));
    let chi_be = g[0] + g[1] - g[2] - g[3] - g[4];
    if !chi_be.is_finite() {
        return Err(Error::Numerical(format!("chi_BE is not finite for {budget:?}")));
    }
    Ok(HolevoBound {
        chi_be,
        lambdas,
        a,
        b,
        c,
        d,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecretKeyRate {
    /// `f I_AB - chi_BE`; negative values are kept as-is.
    pub rate: f64,
    /// True when the rate is strictly positive.
    pub positive: bool,
}

pub fn secure_key_rate(efficiency: f64, mutual_info: f64, chi_be: f64) -> Result<SecretKeyRate> {
    let f = check_open_unit("reconciliation_efficiency", efficiency)?;
    check_non_negative("I_AB", mutual_info)?;
    check_non_negative("chi_BE", chi_be)?;
    let rate = f * mutual_info - chi_be;
    Ok(SecretKeyRate {
        rate,
        positive: rate > 0.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyRateResult {
    pub budget: NoiseBudget,
    pub efficiency: f64,
    pub i_ab: f64,
    pub holevo: HolevoBound,
    pub rate: f64,
    pub positive: bool,
}

impl KeyRateResult {
    pub fn chi_be(&self) -> f64 {
        self.holevo.chi_be
    }

    pub fn lambdas(&self) -> [f64; 5] {
        self.holevo.lambdas
    }
}

/// Key rate with an externally supplied `I_AB`.
pub fn key_rate_with_mutual_info(
    budget: &NoiseBudget,
    mutual_info: f64,
    efficiency: f64,
) -> Result<KeyRateResult> {
    let holevo = holevo_bound(budget)?;
    let key = secure_key_rate(efficiency, mutual_info, holevo.chi_be)?;
    Ok(KeyRateResult {
        budget: *budget,
        efficiency,
        i_ab: mutual_info,
        holevo,
        rate: key.rate,
        positive: key.positive,
    })
}

/// Key rate of the operating point in `config`, `I_AB` from the noise model.
pub fn key_rate(config: &SystemConfig, efficiency: f64) -> Result<KeyRateResult> {
    let budget = NoiseBudget::from_config(config)?;
    key_rate_with_mutual_info(&budget, budget.mutual_info(), efficiency)
}

/// Key rate computed from a measured Alice-Bob correlation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasuredKeyRate {
    pub mutual_info: MutualInfoInterval,
    pub central: KeyRateResult,
    /// Rates at the correlation `-/+` one standard deviation.
    pub rate_lower: f64,
    pub rate_upper: f64,
}

/// Replaces the modelled `I_AB` by `log2(1/(1 - r^2))` of a measured
/// correlation, while `chi_BE` still follows the noise model at the declared
/// `(eta0, T)` split held in `config`.
///
/// The split must reproduce `measured_total_attenuation` to within
/// [`SPLIT_TOLERANCE_DB`].
pub fn key_rate_from_measurement(
    estimate: &CorrEstimate,
    measured_total_attenuation: f64,
    config: &SystemConfig,
    efficiency: f64,
) -> Result<MeasuredKeyRate> {
    check_range(
        "measured_total_attenuation",
        measured_total_attenuation,
        measured_total_attenuation > 0.0 && measured_total_attenuation <= 1.0,
        "0 < eta_tot <= 1",
    )?;
    let product = config.total_attenuation();
    let product_db = linear_to_db(product);
    let measured_db = linear_to_db(measured_total_attenuation);
    if !((product_db - measured_db).abs() <= SPLIT_TOLERANCE_DB) {
        return Err(Error::InconsistentSplit {
            product,
            product_db,
            measured: measured_total_attenuation,
            measured_db,
        });
    }
    let mutual_info = empirical_mutual_info(estimate)?;
    let budget = NoiseBudget::from_config(config)?;
    let central = key_rate_with_mutual_info(&budget, mutual_info.central, efficiency)?;
    let f = efficiency;
    Ok(MeasuredKeyRate {
        mutual_info,
        central,
        rate_lower: f * mutual_info.lower - central.holevo.chi_be,
        rate_upper: f * mutual_info.upper - central.holevo.chi_be,
    })
}

/// How Alice's attenuation is chosen at each distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AttenuationPolicy {
    /// Use the attenuation stored in the base configuration.
    Fixed,
    /// Maximize the key rate over `eta0` in `[min_attenuation, 1]`.
    Optimize { min_attenuation: f64 },
}

impl Default for AttenuationPolicy {
    fn default() -> Self {
        AttenuationPolicy::Optimize {
            min_attenuation: 1e-6,
        }
    }
}

const OPTIMIZER_GRID: usize = 97;
const GOLDEN_ITERATIONS: usize = 80;

/// Maximizes the key rate over Alice's attenuation with the source fixed.
///
/// A log-spaced scan locates the best grid cell, which golden-section search
/// then refines. Returns the optimal `eta0` and the rate there.
pub fn optimize_alice_attenuation(
    config: &SystemConfig,
    efficiency: f64,
    min_attenuation: f64,
) -> Result<(f64, KeyRateResult)> {
    check_open_unit("min_attenuation", min_attenuation)?;
    let eval = |log_eta: f64| -> Result<(f64, KeyRateResult)> {
        let eta0 = log_eta.exp().min(1.0);
        let r = key_rate(&config.with_alice_attenuation(eta0)?, efficiency)?;
        Ok((eta0, r))
    };
    let lo = min_attenuation.ln();
    let step = -lo / (OPTIMIZER_GRID - 1) as f64;
    let grid = (0..OPTIMIZER_GRID)
        .map(|i| eval(lo + step * i as f64))
        .collect::<Result<Vec<_>>>()?;
    let best = grid
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .1.rate.total_cmp(&b.1 .1.rate))
        .map(|(i, _)| i)
        .unwrap_or(0);

    let mut left = lo + step * best.saturating_sub(1) as f64;
    let mut right = (lo + step * (best + 1).min(OPTIMIZER_GRID - 1) as f64).min(0.0);
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = right - ratio * (right - left);
    let mut x2 = left + ratio * (right - left);
    let mut f1 = eval(x1)?;
    let mut f2 = eval(x2)?;
    for _ in 0..GOLDEN_ITERATIONS {
        if f1.1.rate < f2.1.rate {
            left = x1;
            x1 = x2;
            f1 = f2;
            x2 = left + ratio * (right - left);
            f2 = eval(x2)?;
        } else {
            right = x2;
            x2 = x1;
            f2 = f1;
            x1 = right - ratio * (right - left);
            f1 = eval(x1)?;
        }
    }
    let refined = if f1.1.rate >= f2.1.rate { f1 } else { f2 };
    let grid_best = grid[best];
    Ok(if refined.1.rate >= grid_best.1.rate {
        refined
    } else {
        grid_best
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistancePoint {
    pub length_km: f64,
    pub transmittance: f64,
    pub alice_attenuation: f64,
    pub result: KeyRateResult,
}

/// Key rate as a function of fiber length for a fixed source and receivers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiberLink {
    pub base: SystemConfig,
    pub loss_db_per_km: f64,
    pub efficiency: f64,
    pub policy: AttenuationPolicy,
}

impl FiberLink {
    pub fn at_length(&self, length_km: f64) -> Result<DistancePoint> {
        let channel = ChannelParams::Fiber {
            length_km,
            attenuation_db_per_km: self.loss_db_per_km,
        };
        let config = self.base.with_channel(channel)?;
        let (alice_attenuation, result) = match self.policy {
            AttenuationPolicy::Fixed => (config.alice_attenuation(), key_rate(&config, self.efficiency)?),
            AttenuationPolicy::Optimize { min_attenuation } => {
                optimize_alice_attenuation(&config, self.efficiency, min_attenuation)?
            }
        };
        Ok(DistancePoint {
            length_km,
            transmittance: config.transmittance(),
            alice_attenuation,
            result,
        })
    }

    pub fn rate_at(&self, length_km: f64) -> Result<f64> {
        self.at_length(length_km).map(|p| p.result.rate)
    }

    /// Evaluates every length in parallel; output keeps the input order.
    pub fn curve(&self, lengths_km: &[f64]) -> Result<Vec<DistancePoint>> {
        lengths_km
            .par_iter()
            .map(|&l| self.at_length(l))
            .collect()
    }

    /// Bisects for the length where the rate changes sign within
    /// `[short_km, long_km]`. `None` unless the rate is positive at
    /// `short_km` and non-positive at `long_km`.
    pub fn locate_cutoff(&self, short_km: f64, long_km: f64, tolerance_km: f64) -> Result<Option<f64>> {
        let (mut lo, mut hi) = (short_km, long_km);
        if !(self.rate_at(lo)? > 0.0) || self.rate_at(hi)? > 0.0 {
            return Ok(None);
        }
        while hi - lo > tolerance_km {
            let mid = 0.5 * (lo + hi);
            if self.rate_at(mid)? > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(Some(0.5 * (lo + hi)))
    }
}

/// Number of sign changes (positive to non-positive or back) along a sequence.
pub fn sign_changes(values: &[f64]) -> usize {
    values
        .windows(2)
        .filter(|w| (w[0] > 0.0) != (w[1] > 0.0))
        .count()
}
