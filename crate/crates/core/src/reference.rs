//! Parameters of the reference experiment: detector calibration, mode
//! overlap, reconciliation efficiency and fiber loss.

use crate::model::{ConjugateDetector, DetectorChannel};

pub const MODE_OVERLAP: f64 = 0.96;
pub const RECONCILIATION_EFFICIENCY: f64 = 0.95;
pub const FIBER_LOSS_DB_PER_KM: f64 = 0.2;
pub const KEY_RATE_N0: f64 = 900.0;
pub const OVERLAP_FIT_N0: f64 = 880.0;

pub const ALICE_X: (f64, f64) = (0.43, 0.17);
pub const ALICE_P: (f64, f64) = (0.38, 0.19);
pub const BOB_X: (f64, f64) = (0.54, 0.24);
pub const BOB_P: (f64, f64) = (0.51, 0.23);

/// `(eta0, T, eta_tot in dB)` splits used to turn the two high-loss
/// correlation measurements into key-rate points.
pub const MEASURED_SPLITS: [(f64, f64, f64); 2] = [(0.0009, 0.69, -32.1), (0.0004, 0.15, -42.2)];

fn channel((efficiency, noise): (f64, f64)) -> DetectorChannel {
    DetectorChannel::new(efficiency, noise).expect("reference detector parameters are valid")
}

pub fn alice_detector() -> ConjugateDetector {
    ConjugateDetector::new(channel(ALICE_X), channel(ALICE_P))
}

pub fn bob_detector() -> ConjugateDetector {
    ConjugateDetector::new(channel(BOB_X), channel(BOB_P))
}
