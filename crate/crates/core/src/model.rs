//! Closed-form noise model of passive state preparation.
//!
//! Everything here is expressed in shot-noise units: the vacuum quadrature
//! variance is 1, a thermal mode with mean photon number `n0` has quadrature
//! variance `2 n0 + 1`. The broadband source is treated as exactly thermal in
//! both the mode Bob measures and the orthogonal mode that leaks into Alice's
//! detection through imperfect mode overlap.
//!
//! Only the X quadrature is written out. The P quadrature obeys identical
//! formulas with the P-channel detector parameters, so every function takes
//! a single [`DetectorChannel`] and callers pick `x` or `p`.
//!
//! Two topologies appear:
//!
//! * the measurement topology (source, balanced splitter, Alice's attenuator,
//!   channel, Bob) used to estimate the mode overlap, and
//! * the beam-splitting attack, where the channel loss is a beam splitter
//!   whose other port goes to an eavesdropper with ideal heterodyne detectors.

use crate::error::{check_non_negative, check_open_unit, check_range, check_unit, Error, Result};

/// Efficiency and additive electronic noise of one homodyne quadrature channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorChannel {
    efficiency: f64,
    noise_variance: f64,
}

impl DetectorChannel {
    pub fn new(efficiency: f64, noise_variance: f64) -> Result<Self> {
        Ok(Self {
            efficiency: check_open_unit("efficiency", efficiency)?,
            noise_variance: check_non_negative("noise_variance", noise_variance)?,
        })
    }

    /// Lossless, noiseless channel.
    pub fn ideal() -> Self {
        Self {
            efficiency: 1.0,
            noise_variance: 0.0,
        }
    }

    pub fn efficiency(&self) -> f64 {
        self.efficiency
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }
}

/// A conjugate homodyne (heterodyne) receiver: one channel per quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConjugateDetector {
    pub x: DetectorChannel,
    pub p: DetectorChannel,
}

impl ConjugateDetector {
    pub fn new(x: DetectorChannel, p: DetectorChannel) -> Self {
        Self { x, p }
    }

    pub fn ideal() -> Self {
        Self::new(DetectorChannel::ideal(), DetectorChannel::ideal())
    }

    /// Same detector with the X and P channels exchanged.
    pub fn swapped(&self) -> Self {
        Self::new(self.p, self.x)
    }
}

/// Thermal source strength and the overlap between Alice's and Bob's modes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceParams {
    n0: f64,
    mode_overlap: f64,
}

impl SourceParams {
    pub fn new(n0: f64, mode_overlap: f64) -> Result<Self> {
        Ok(Self {
            n0: check_non_negative("n0", n0)?,
            mode_overlap: check_unit("mode_overlap_a", mode_overlap)?,
        })
    }

    /// Mean photon number per mode at the source.
    pub fn n0(&self) -> f64 {
        self.n0
    }

    /// Overlap amplitude `a` of Alice's mode with Bob's mode.
    pub fn mode_overlap(&self) -> f64 {
        self.mode_overlap
    }

    /// Amplitude of the orthogonal mode in Alice's detection, `sqrt(1 - a^2)`.
    pub fn orthogonal_amplitude(&self) -> f64 {
        mismatch_fraction(self.mode_overlap).sqrt()
    }

    /// Copy with a different photon number, keeping the overlap.
    pub fn with_n0(&self, n0: f64) -> Result<Self> {
        Self::new(n0, self.mode_overlap)
    }
}

/// `1 - a^2`, written to stay accurate when `a` is close to 1.
fn mismatch_fraction(a: f64) -> f64 {
    ((1.0 - a) * (1.0 + a)).max(0.0)
}

/// Quantum channel between Alice and Bob.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChannelParams {
    Transmittance(f64),
    Fiber {
        length_km: f64,
        attenuation_db_per_km: f64,
    },
}

impl ChannelParams {
    pub fn transmittance(&self) -> Result<f64> {
        match *self {
            ChannelParams::Transmittance(t) => check_unit("transmittance", t),
            ChannelParams::Fiber {
                length_km,
                attenuation_db_per_km,
            } => transmittance_from_length(length_km, attenuation_db_per_km),
        }
    }

    fn validate(&self) -> Result<()> {
        self.transmittance().map(|_| ())
    }
}

/// Fiber transmittance `10^(-gamma L / 10)`.
pub fn transmittance_from_length(length_km: f64, attenuation_db_per_km: f64) -> Result<f64> {
    check_non_negative("fiber_length_km", length_km)?;
    check_non_negative("attenuation_db_per_km", attenuation_db_per_km)?;
    Ok(10f64.powf(-attenuation_db_per_km * length_km / 10.0))
}

/// Converts a power ratio in decibels (negative for loss) to a linear fraction.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

/// Whether the simulated link includes the tapped beam splitter and Eve's receiver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Topology {
    /// Source, Alice, channel loss and Bob only.
    #[default]
    Direct,
    /// Channel loss replaced by a beam splitter whose reflected port Eve measures.
    BeamSplittingAttack,
}

/// Complete parameter set for one operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemConfig {
    pub source: SourceParams,
    alice_attenuation: f64,
    pub channel: ChannelParams,
    pub alice_detector: ConjugateDetector,
    pub bob_detector: ConjugateDetector,
    pub topology: Topology,
}

impl SystemConfig {
    pub fn new(
        source: SourceParams,
        alice_attenuation: f64,
        channel: ChannelParams,
        alice_detector: ConjugateDetector,
        bob_detector: ConjugateDetector,
    ) -> Result<Self> {
        check_open_unit("alice_attenuation_eta0", alice_attenuation)?;
        channel.validate()?;
        let config = Self {
            source,
            alice_attenuation,
            channel,
            alice_detector,
            bob_detector,
            topology: Topology::Direct,
        };
        check_range(
            "modulation_variance",
            config.modulation_variance(),
            true,
            "finite",
        )?;
        Ok(config)
    }

    pub fn with_topology(mut self, topology: Topology) -> Self {
        self.topology = topology;
        self
    }

    pub fn with_alice_attenuation(&self, alice_attenuation: f64) -> Result<Self> {
        Self::new(
            self.source,
            alice_attenuation,
            self.channel,
            self.alice_detector,
            self.bob_detector,
        )
        .map(|c| c.with_topology(self.topology))
    }

    pub fn with_channel(&self, channel: ChannelParams) -> Result<Self> {
        Self::new(
            self.source,
            self.alice_attenuation,
            channel,
            self.alice_detector,
            self.bob_detector,
        )
        .map(|c| c.with_topology(self.topology))
    }

    pub fn with_source(&self, source: SourceParams) -> Result<Self> {
        Self::new(
            source,
            self.alice_attenuation,
            self.channel,
            self.alice_detector,
            self.bob_detector,
        )
        .map(|c| c.with_topology(self.topology))
    }

    /// Exchanges the X and P channels of both detectors.
    pub fn with_swapped_quadratures(&self) -> Self {
        Self {
            alice_detector: self.alice_detector.swapped(),
            bob_detector: self.bob_detector.swapped(),
            ..*self
        }
    }

    /// Transmittance `eta0` of Alice's trusted attenuator.
    pub fn alice_attenuation(&self) -> f64 {
        self.alice_attenuation
    }

    pub fn transmittance(&self) -> f64 {
        // validated at construction
        self.channel.transmittance().unwrap_or(0.0)
    }

    /// `eta_tot = eta0 * T`, the attenuation between source splitter and Bob.
    pub fn total_attenuation(&self) -> f64 {
        self.alice_attenuation * self.transmittance()
    }

    pub fn modulation_variance(&self) -> f64 {
        self.alice_attenuation * self.source.n0()
    }

    /// Excess noise of state preparation on the X quadrature.
    pub fn excess_noise(&self) -> Result<f64> {
        passive_prep_excess_noise(
            self.modulation_variance(),
            self.alice_attenuation,
            &self.alice_detector.x,
            self.source.mode_overlap(),
        )
    }
}

/// Effective modulation variance `V_A = eta0 * n0` of the outgoing mode.
pub fn modulation_variance(alice_attenuation: f64, n0: f64) -> Result<f64> {
    check_open_unit("alice_attenuation_eta0", alice_attenuation)?;
    check_non_negative("n0", n0)?;
    Ok(alice_attenuation * n0)
}

/// Scaling `alpha_A = <x1 x2> / <x2^2>` that turns Alice's local measurement
/// into her optimal linear estimate of the outgoing quadrature.
///
/// With `a = 1` this is the perfect-overlap coefficient.
pub fn alice_scaling_factor(
    source: &SourceParams,
    alice_attenuation: f64,
    alice: &DetectorChannel,
) -> Result<f64> {
    check_open_unit("alice_attenuation_eta0", alice_attenuation)?;
    let n0 = source.n0();
    let eta = alice.efficiency();
    let denominator = n0 * eta + 2.0 * alice.noise_variance() + 2.0;
    Ok(n0 * source.mode_overlap() * (2.0 * alice_attenuation * eta).sqrt() / denominator)
}

/// Excess noise `eps_A` from passive state preparation, referred to the
/// channel input.
///
/// The first numerator term is the finite-attenuation penalty and vanishes as
/// `eta0 -> 0` at fixed `V_A`; the second is the mode-mismatch floor
/// `V_A^2 eta (1 - a^2)`, which attenuation cannot remove.
pub fn passive_prep_excess_noise(
    modulation_variance: f64,
    alice_attenuation: f64,
    alice: &DetectorChannel,
    mode_overlap: f64,
) -> Result<f64> {
    let v_a = check_non_negative("modulation_variance", modulation_variance)?;
    let eta0 = check_open_unit("alice_attenuation_eta0", alice_attenuation)?;
    check_unit("mode_overlap_a", mode_overlap)?;
    if v_a == 0.0 {
        return Ok(0.0);
    }
    let eta = alice.efficiency();
    let noise = alice.noise_variance() + 1.0;
    let numerator =
        2.0 * v_a * eta0 * noise + v_a * v_a * eta * mismatch_fraction(mode_overlap);
    let denominator = v_a * eta + 2.0 * eta0 * noise;
    if denominator == 0.0 {
        return Ok(0.0);
    }
    Ok(numerator / denominator)
}

/// Alice's residual uncertainty `V_{x1|x2} = eps_A + 1` on the outgoing quadrature.
pub fn conditional_uncertainty(
    modulation_variance: f64,
    alice_attenuation: f64,
    alice: &DetectorChannel,
    mode_overlap: f64,
) -> Result<f64> {
    passive_prep_excess_noise(modulation_variance, alice_attenuation, alice, mode_overlap)
        .map(|eps| eps + 1.0)
}

/// Second moments of Alice's (`x2`) and Bob's (`x3`) homodyne outputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecondMoments {
    /// `<x2^2>`
    pub alice: f64,
    /// `<x3^2>`
    pub bob: f64,
    /// `<x2 x3>`
    pub cross: f64,
}

impl SecondMoments {
    pub fn correlation(&self) -> f64 {
        self.cross / (self.alice * self.bob).sqrt()
    }
}

/// Analytic `<x2^2>`, `<x3^2>` and `<x2 x3>`.
///
/// All loss between the source splitter and Bob (Alice's attenuator and the
/// channel) enters only through `total_attenuation`, which scales Bob's
/// efficiency.
pub fn second_moments(
    source: &SourceParams,
    alice: &DetectorChannel,
    bob: &DetectorChannel,
    total_attenuation: f64,
) -> Result<SecondMoments> {
    let eta_tot = check_unit("total_attenuation", total_attenuation)?;
    let n0 = source.n0();
    let eta_a = alice.efficiency();
    let eta_b = eta_tot * bob.efficiency();
    Ok(SecondMoments {
        alice: eta_a * n0 / 2.0 + alice.noise_variance() + 1.0,
        bob: eta_b * n0 / 2.0 + bob.noise_variance() + 1.0,
        cross: (eta_a * eta_b).sqrt() * n0 * source.mode_overlap() / 2.0,
    })
}

/// Predicted Pearson correlation between Alice's and Bob's X outcomes.
///
/// Increases with `n0` towards the mode overlap `a`, so fitting measured
/// correlations against this curve identifies `a`.
pub fn predicted_correlation(
    source: &SourceParams,
    alice: &DetectorChannel,
    bob: &DetectorChannel,
    total_attenuation: f64,
) -> Result<f64> {
    let eta_tot = check_unit("total_attenuation", total_attenuation)?;
    let n0 = source.n0();
    let eta_a = alice.efficiency();
    let eta_b = eta_tot * bob.efficiency();
    let alice_var = eta_a * n0 + 2.0 * alice.noise_variance() + 2.0;
    let bob_var = eta_b * n0 + 2.0 * bob.noise_variance() + 2.0;
    Ok(n0 * (eta_a * eta_b).sqrt() / (alice_var * bob_var).sqrt() * source.mode_overlap())
}

/// Bob-side variances under the beam-splitting attack (perfect mode overlap).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamSplittingVariances {
    /// `V_B|A`: Bob's variance conditioned on Alice's optimal estimate.
    pub bob_given_alice: f64,
    /// `V_B`: Bob's unconditional variance.
    pub bob: f64,
    /// `V_B|E`: Bob's variance conditioned on Eve's tapped mode.
    pub bob_given_eve: f64,
}

pub fn beam_splitting_variances(
    modulation_variance: f64,
    alice_attenuation: f64,
    transmittance: f64,
    alice: &DetectorChannel,
    bob: &DetectorChannel,
) -> Result<BeamSplittingVariances> {
    let v_a = check_non_negative("modulation_variance", modulation_variance)?;
    let eta0 = check_open_unit("alice_attenuation_eta0", alice_attenuation)?;
    let t = check_unit("transmittance", transmittance)?;
    let eta_a = alice.efficiency();
    let noise_a = alice.noise_variance() + 1.0;
    let eta_b = bob.efficiency();
    let floor = bob.noise_variance() + 1.0;
    let signal = v_a * t * eta_b;
    Ok(BeamSplittingVariances {
        bob_given_alice: signal * noise_a / ((eta_a / eta0) * v_a + 2.0 * noise_a) + floor,
        bob: signal / 2.0 + floor,
        bob_given_eve: signal / (v_a * (1.0 - t) + 2.0) + floor,
    })
}

/// Relative slack allowed when `V_B` and a conditional variance coincide
/// analytically but differ by rounding.
const ORDERING_SLACK: f64 = 1e-12;

fn log2_variance_ratio(
    unconditional: f64,
    conditional: f64,
    label: &'static str,
) -> Result<f64> {
    if !(conditional > 0.0) || !unconditional.is_finite() {
        return Err(Error::ModelInconsistency(format!(
            "{label}: conditional variance {conditional} must be positive and V_B {unconditional} finite"
        )));
    }
    let excess = unconditional - conditional;
    if excess < -ORDERING_SLACK * conditional {
        return Err(Error::ModelInconsistency(format!(
            "{label}: V_B = {unconditional} is smaller than the conditional variance {conditional}"
        )));
    }
    Ok((excess.max(0.0) / conditional).ln_1p() / std::f64::consts::LN_2)
}

/// `I_AB = log2(V_B / V_B|A)`, counting both quadratures.
pub fn mutual_info_ab(bob_variance: f64, bob_given_alice: f64) -> Result<f64> {
    log2_variance_ratio(bob_variance, bob_given_alice, "I_AB")
}

/// `I_BE = log2(V_B / V_B|E)` under the beam-splitting attack.
pub fn mutual_info_be(bob_variance: f64, bob_given_eve: f64) -> Result<f64> {
    log2_variance_ratio(bob_variance, bob_given_eve, "I_BE")
}

/// `I_AB = log2(1 / (1 - r^2))` from a correlation coefficient.
pub fn mutual_info_from_corr(corr: f64) -> Result<f64> {
    check_range("correlation", corr, corr.abs() < 1.0, "|r| < 1")?;
    Ok(-(-corr * corr).ln_1p() / std::f64::consts::LN_2)
}

/// Upper bound on Alice's attenuation below which `V_B|A < V_B|E`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SecurityThreshold {
    /// Secure for `eta0` strictly below this value; may exceed 1.
    Bounded(f64),
    /// Lossless channel: the beam splitter sends Eve nothing.
    Unbounded,
}

impl SecurityThreshold {
    /// Whether `alice_attenuation` lies strictly inside the secure region.
    pub fn admits(&self, alice_attenuation: f64) -> bool {
        match *self {
            SecurityThreshold::Bounded(limit) => alice_attenuation < limit,
            SecurityThreshold::Unbounded => true,
        }
    }

    pub fn value(&self) -> Option<f64> {
        match *self {
            SecurityThreshold::Bounded(limit) => Some(limit),
            SecurityThreshold::Unbounded => None,
        }
    }
}

/// `eta_a / ((v_a + 1)(1 - T))`.
pub fn attenuation_security_threshold(
    transmittance: f64,
    alice: &DetectorChannel,
) -> Result<SecurityThreshold> {
    let t = check_unit("transmittance", transmittance)?;
    if t == 1.0 {
        return Ok(SecurityThreshold::Unbounded);
    }
    Ok(SecurityThreshold::Bounded(
        alice.efficiency() / ((alice.noise_variance() + 1.0) * (1.0 - t)),
    ))
}
