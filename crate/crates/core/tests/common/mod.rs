//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

pub mod oracle;

use pcvqkd::model::{ChannelParams, ConjugateDetector, DetectorChannel, SourceParams, SystemConfig};
use pcvqkd::reference;
use rand::Rng;

/// Reference detectors, reference overlap, and the given operating point.
pub fn reference_config(n0: f64, eta0: f64, transmittance: f64) -> SystemConfig {
    SystemConfig::new(
        SourceParams::new(n0, reference::MODE_OVERLAP).unwrap(),
        eta0,
        ChannelParams::Transmittance(transmittance),
        reference::alice_detector(),
        reference::bob_detector(),
    )
    .unwrap()
}

pub fn random_channel<R: Rng>(rng: &mut R) -> DetectorChannel {
    DetectorChannel::new(rng.random_range(0.05..=1.0), rng.random_range(0.0..1.0)).unwrap()
}

pub fn random_detector<R: Rng>(rng: &mut R) -> ConjugateDetector {
    ConjugateDetector::new(random_channel(rng), random_channel(rng))
}

/// Log-uniform draw on `[lo, hi]`.
pub fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..=hi.ln())).exp().clamp(lo, hi)
}

pub fn rel_err(actual: f64, expected: f64) -> f64 {
    if actual == expected {
        0.0
    } else {
        (actual - expected).abs() / expected.abs().max(f64::MIN_POSITIVE)
    }
}
