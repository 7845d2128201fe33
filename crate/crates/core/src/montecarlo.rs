//! Seedable Gaussian Monte Carlo of the linear quadrature network.
//!
//! Each trial draws one thermal quadrature for Bob's mode, one for the
//! orthogonal mode seen only by Alice, the vacuum inputs of every beam
//! splitter and loss element, and the electronic noise of both receivers.
//! These are combined with the fixed linear coefficients of the optical
//! network, so every sample column is an exact linear function of
//! independent Gaussians and its moments follow the analytic model.
//!
//! Trials are generated in fixed-size chunks. Chunk `k` draws from the ChaCha
//! stream `k` of the run seed, which makes a batch independent of the number
//! of worker threads.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{DetectorChannel, SystemConfig, Topology};

pub const DEFAULT_BLOCKS: usize = 10;

const CHUNK_TRIALS: usize = 4096;

/// Sample count, seed and block layout of one Monte Carlo run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSpec {
    n_samples: usize,
    seed: u64,
    n_blocks: usize,
}

impl RunSpec {
    pub fn new(n_samples: usize, seed: u64, n_blocks: usize) -> Result<Self> {
        if n_samples == 0 {
            return Err(Error::Empty("n_samples must be at least 1"));
        }
        if n_blocks == 0 {
            return Err(Error::Empty("n_blocks must be at least 1"));
        }
        Ok(Self {
            n_samples,
            seed,
            n_blocks,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_blocks(&self) -> usize {
        self.n_blocks
    }

    pub fn block_size(&self) -> usize {
        self.n_samples / self.n_blocks
    }

    /// Trailing trials that do not fill a whole block.
    pub fn dropped_samples(&self) -> usize {
        self.n_samples % self.n_blocks
    }

    /// Run with an independent seed for sweep point `index`.
    pub fn substream(&self, index: u64) -> Self {
        Self {
            seed: derive_seed(self.seed, index),
            ..*self
        }
    }

    pub fn with_samples(&self, n_samples: usize) -> Result<Self> {
        Self::new(n_samples, self.seed, self.n_blocks)
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..*self }
    }
}

/// Mixes a base seed with an index (splitmix64 finalizer).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-trial outcomes of one quadrature across the network.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct QuadratureRecord {
    /// Outgoing mode after Alice's attenuator (not observable in an experiment).
    pub outgoing: Vec<f64>,
    /// Alice's homodyne output.
    pub alice: Vec<f64>,
    /// Bob's homodyne output.
    pub bob: Vec<f64>,
    /// Eve's ideal homodyne output; only under the beam-splitting attack.
    pub eve: Option<Vec<f64>>,
}

impl QuadratureRecord {
    fn with_capacity(n: usize, eve: bool) -> Result<Self> {
        let mut record = Self {
            eve: eve.then(Vec::new),
            ..Self::default()
        };
        let reserve = |v: &mut Vec<f64>| {
            v.try_reserve_exact(n).map_err(|e| Error::BatchSize {
                n_samples: n,
                reason: e.to_string(),
            })
        };
        reserve(&mut record.outgoing)?;
        reserve(&mut record.alice)?;
        reserve(&mut record.bob)?;
        if let Some(eve) = record.eve.as_mut() {
            reserve(eve)?;
        }
        Ok(record)
    }

    fn extend(&mut self, other: QuadratureRecord) {
        self.outgoing.extend(other.outgoing);
        self.alice.extend(other.alice);
        self.bob.extend(other.bob);
        if let (Some(eve), Some(more)) = (self.eve.as_mut(), other.eve) {
            eve.extend(more);
        }
    }

    pub fn len(&self) -> usize {
        self.alice.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alice.is_empty()
    }
}

/// Columnar record of a Monte Carlo run, one entry per trial.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SampleBatch {
    pub x: QuadratureRecord,
    pub p: QuadratureRecord,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn has_eve(&self) -> bool {
        self.x.eve.is_some()
    }

    /// Named columns in dump order: x1, x2, x3, [x4], p1, p2, p3, [p4].
    pub fn columns(&self) -> Vec<(&'static str, &[f64])> {
        let mut cols: Vec<(&'static str, &[f64])> = vec![
            ("x1", &self.x.outgoing),
            ("x2", &self.x.alice),
            ("x3", &self.x.bob),
        ];
        if let Some(eve) = &self.x.eve {
            cols.push(("x4", eve));
        }
        cols.extend([
            ("p1", self.p.outgoing.as_slice()),
            ("p2", self.p.alice.as_slice()),
            ("p3", self.p.bob.as_slice()),
        ]);
        if let Some(eve) = &self.p.eve {
            cols.push(("p4", eve));
        }
        cols
    }

    /// Writes the batch as CSV: header row, one trial per line.
    pub fn write_csv<W: Write + ?Sized>(&self, out: &mut W) -> io::Result<()> {
        let cols = self.columns();
        let header: Vec<&str> = cols.iter().map(|(name, _)| *name).collect();
        writeln!(out, "{}", header.join(","))?;
        let mut line = String::new();
        for i in 0..self.len() {
            line.clear();
            for (j, (_, col)) in cols.iter().enumerate() {
                if j > 0 {
                    line.push(',');
                }
                line.push_str(&crate::format_decimal(col[i]));
            }
            line.push('\n');
            out.write_all(line.as_bytes())?;
        }
        Ok(())
    }
}

/// One zero-mean Gaussian quadrature of a thermal mode with mean photon
/// number `n0`, variance `2 n0 + 1`.
pub fn draw_thermal_quadrature<R: Rng + ?Sized>(rng: &mut R, n0: f64) -> f64 {
    debug_assert!(n0 >= 0.0);
    let z: f64 = rng.sample(StandardNormal);
    (2.0 * n0 + 1.0).sqrt() * z
}

/// Independent inputs of one trial for one quadrature.
struct Inputs {
    /// Bob's mode of the source.
    source: f64,
    /// Mode orthogonal to Bob's, only seen by Alice.
    source_orth: f64,
    /// Vacuum at the source splitter, Bob's mode and the orthogonal mode.
    split: f64,
    split_orth: f64,
    /// Vacuum at Alice's heterodyne splitter.
    alice_het: f64,
    /// Vacuum entering through Alice's attenuator.
    attenuator: f64,
    /// Vacuum entering through the channel beam splitter.
    channel: f64,
    /// Vacuum at Bob's heterodyne splitter.
    bob_het: f64,
    /// Vacuum at Eve's heterodyne splitter.
    eve_het: f64,
    /// Vacuum entering through Alice's and Bob's detector losses.
    alice_loss: f64,
    bob_loss: f64,
    /// Electronic noise, unit variance before scaling.
    alice_electronic: f64,
    bob_electronic: f64,
}

impl Inputs {
    fn draw<R: Rng>(rng: &mut R, thermal_sd: f64) -> Self {
        let mut n = || -> f64 { rng.sample(StandardNormal) };
        Self {
            source: thermal_sd * n(),
            source_orth: thermal_sd * n(),
            split: n(),
            split_orth: n(),
            alice_het: n(),
            attenuator: n(),
            channel: n(),
            bob_het: n(),
            eve_het: n(),
            alice_loss: n(),
            bob_loss: n(),
            alice_electronic: n(),
            bob_electronic: n(),
        }
    }
}

/// Linear coefficients of the network for one quadrature.
#[derive(Debug, Clone, Copy)]
struct Propagation {
    thermal_sd: f64,
    // outgoing mode
    out_source: f64,
    out_attenuator: f64,
    // Alice
    alice_source: f64,
    alice_orth: f64,
    alice_het: f64,
    alice_loss: f64,
    alice_noise_sd: f64,
    // Bob
    bob_source: f64,
    bob_attenuator: f64,
    bob_channel: f64,
    bob_het: f64,
    bob_loss: f64,
    bob_noise_sd: f64,
    // Eve
    eve_source: f64,
    eve_attenuator: f64,
    eve_channel: f64,
    eve_het: f64,
}

impl Propagation {
    fn new(config: &SystemConfig, alice: &DetectorChannel, bob: &DetectorChannel) -> Self {
        let eta0 = config.alice_attenuation();
        let t = config.transmittance();
        let a = config.source.mode_overlap();
        let b = config.source.orthogonal_amplitude();
        let eta_a = alice.efficiency();
        let eta_b = bob.efficiency();
        Self {
            thermal_sd: (2.0 * config.source.n0() + 1.0).sqrt(),
            out_source: (eta0 / 2.0).sqrt(),
            out_attenuator: (1.0 - eta0).sqrt(),
            alice_source: eta_a.sqrt() / 2.0 * a,
            alice_orth: eta_a.sqrt() / 2.0 * b,
            alice_het: (eta_a / 2.0).sqrt(),
            alice_loss: (1.0 - eta_a).sqrt(),
            alice_noise_sd: alice.noise_variance().sqrt(),
            bob_source: (eta0 * t * eta_b).sqrt() / 2.0,
            bob_attenuator: ((1.0 - eta0) * t * eta_b / 2.0).sqrt(),
            bob_channel: ((1.0 - t) * eta_b / 2.0).sqrt(),
            bob_het: (eta_b / 2.0).sqrt(),
            bob_loss: (1.0 - eta_b).sqrt(),
            bob_noise_sd: bob.noise_variance().sqrt(),
            eve_source: (eta0 * (1.0 - t)).sqrt() / 2.0,
            eve_attenuator: ((1.0 - eta0) * (1.0 - t) / 2.0).sqrt(),
            eve_channel: (t / 2.0).sqrt(),
            eve_het: std::f64::consts::FRAC_1_SQRT_2,
        }
    }

    fn outgoing(&self, v: &Inputs) -> f64 {
        self.out_source * v.source - self.out_source * v.split - self.out_attenuator * v.attenuator
    }

    fn alice(&self, v: &Inputs) -> f64 {
        self.alice_source * v.source
            + self.alice_orth * v.source_orth
            + self.alice_source * v.split
            + self.alice_orth * v.split_orth
            + self.alice_het * v.alice_het
            - self.alice_loss * v.alice_loss
            + self.alice_noise_sd * v.alice_electronic
    }

    fn bob(&self, v: &Inputs) -> f64 {
        self.bob_source * v.source
            - self.bob_source * v.split
            - self.bob_attenuator * v.attenuator
            - self.bob_channel * v.channel
            + self.bob_het * v.bob_het
            - self.bob_loss * v.bob_loss
            + self.bob_noise_sd * v.bob_electronic
    }

    fn eve(&self, v: &Inputs) -> f64 {
        self.eve_source * v.source
            - self.eve_source * v.split
            - self.eve_attenuator * v.attenuator
            + self.eve_channel * v.channel
            + self.eve_het * v.eve_het
    }
}

fn simulate_chunk(
    x: &Propagation,
    p: &Propagation,
    seed: u64,
    chunk: usize,
    trials: usize,
    eve: bool,
) -> SampleBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk as u64);
    let record = || QuadratureRecord {
        outgoing: Vec::with_capacity(trials),
        alice: Vec::with_capacity(trials),
        bob: Vec::with_capacity(trials),
        eve: eve.then(|| Vec::with_capacity(trials)),
    };
    let mut batch = SampleBatch {
        x: record(),
        p: record(),
    };
    for _ in 0..trials {
        for (prop, rec) in [(x, &mut batch.x), (p, &mut batch.p)] {
            let v = Inputs::draw(&mut rng, prop.thermal_sd);
            rec.outgoing.push(prop.outgoing(&v));
            rec.alice.push(prop.alice(&v));
            rec.bob.push(prop.bob(&v));
            if let Some(e) = rec.eve.as_mut() {
                e.push(prop.eve(&v));
            }
        }
    }
    batch
}

/// Draws `spec.n_samples()` independent trials of the network in `config`.
///
/// Eve's columns are filled only for [`Topology::BeamSplittingAttack`].
/// The result depends only on `(config, spec)`.
pub fn simulate_batch(config: &SystemConfig, spec: &RunSpec) -> Result<SampleBatch> {
    let n = spec.n_samples();
    let eve = config.topology == Topology::BeamSplittingAttack;
    let columns = if eve { 8 } else { 6 };
    n.checked_mul(columns)
        .and_then(|v| v.checked_mul(std::mem::size_of::<f64>()))
        .filter(|&bytes| bytes <= isize::MAX as usize)
        .ok_or_else(|| Error::BatchSize {
            n_samples: n,
            reason: "requested size overflows the address space".into(),
        })?;
    let mut batch = SampleBatch {
        x: QuadratureRecord::with_capacity(n, eve)?,
        p: QuadratureRecord::with_capacity(n, eve)?,
    };

    let x = Propagation::new(config, &config.alice_detector.x, &config.bob_detector.x);
    let p = Propagation::new(config, &config.alice_detector.p, &config.bob_detector.p);
    let n_chunks = n.div_ceil(CHUNK_TRIALS);
    let chunks: Vec<SampleBatch> = (0..n_chunks)
        .into_par_iter()
        .map(|k| {
            let trials = CHUNK_TRIALS.min(n - k * CHUNK_TRIALS);
            simulate_chunk(&x, &p, spec.seed(), k, trials, eve)
        })
        .collect();
    for chunk in chunks {
        batch.x.extend(chunk.x);
        batch.p.extend(chunk.p);
    }
    Ok(batch)
}

/// Sample mean of `(x1 - scaling * x2)^2`: Alice's residual uncertainty on the
/// outgoing quadrature when she rescales her measurement by `scaling`.
pub fn conditional_variance_empirical(record: &QuadratureRecord, scaling: f64) -> Result<f64> {
    if record.is_empty() {
        return Err(Error::Empty("sample record has no trials"));
    }
    let sum: f64 = record
        .outgoing
        .iter()
        .zip(&record.alice)
        .map(|(o, a)| {
            let r = o - scaling * a;
            r * r
        })
        .sum();
    Ok(sum / record.len() as f64)
}
