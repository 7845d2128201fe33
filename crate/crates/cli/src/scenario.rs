//! JSON scenario files.
//!
//! Parsing walks the raw `serde_json::Value` rather than deriving, so that
//! every problem in a file is reported at once with its JSON path. Linear
//! fractions and decibel values are accepted only under distinct keys (`x`
//! versus `x_db`); giving both is an error.

use std::fmt;
use std::path::{Path, PathBuf};

use pcvqkd::keyrate::AttenuationPolicy;
use pcvqkd::model::{
    db_to_linear, ChannelParams, ConjugateDetector, DetectorChannel, SourceParams, SystemConfig,
    Topology,
};
use pcvqkd::montecarlo::{RunSpec, DEFAULT_BLOCKS};
use pcvqkd::reference;
use serde_json::{Map, Value};

pub const DEFAULT_SAMPLES: usize = 500_000;

/// Every constraint a scenario violates, one line each.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigErrors(pub Vec<String>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "invalid scenario ({} problem(s)):", self.0.len())?;
        for e in &self.0 {
            writeln!(f, "  - {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVariable {
    N0,
    TotalAttenuation,
    FiberLength,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::N0 => "n0",
            SweepVariable::TotalAttenuation => "eta_tot_db",
            SweepVariable::FiberLength => "fiber_length_km",
        }
    }
}

/// One sweep axis. Attenuation values are stored in dB.
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
}

/// Known parts of the system. Source and channel entries may be absent when
/// a command supplies them from its sweep axis.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    pub n0: Option<f64>,
    pub mode_overlap: f64,
    pub alice_attenuation: f64,
    pub channel: ChannelParams,
    pub alice: ConjugateDetector,
    pub bob: ConjugateDetector,
    pub topology: Topology,
}

impl SystemSpec {
    /// Builds the core configuration, with `n0` overriding the file value.
    pub fn config(&self, n0: Option<f64>) -> Result<SystemConfig, ConfigErrors> {
        let Some(n0) = n0.or(self.n0) else {
            return Err(ConfigErrors(vec!["system.n0: missing".into()]));
        };
        let source = SourceParams::new(n0, self.mode_overlap).map_err(core_error("system"))?;
        SystemConfig::new(source, self.alice_attenuation, self.channel, self.alice, self.bob)
            .map(|c| c.with_topology(self.topology))
            .map_err(core_error("system"))
    }
}

fn core_error(context: &'static str) -> impl Fn(pcvqkd::Error) -> ConfigErrors {
    move |e| ConfigErrors(vec![format!("{context}: {e}")])
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasuredPointSpec {
    pub eta_tot: f64,
    pub alice_attenuation: f64,
    pub transmittance: f64,
    /// Correlation estimate `(mean, std, n_blocks)`; simulated when absent.
    pub estimate: Option<(f64, f64, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeyRateSpec {
    pub efficiency: f64,
    pub loss_db_per_km: f64,
    pub policy: AttenuationPolicy,
    pub measured_points: Vec<MeasuredPointSpec>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Outputs {
    pub primary: Option<PathBuf>,
    pub secondary: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub system: SystemSpec,
    pub n_samples: usize,
    pub seed: u64,
    pub n_blocks: usize,
    pub sweep: Option<Sweep>,
    pub keyrate: KeyRateSpec,
    pub fit_points: Option<PathBuf>,
    pub std_floor: f64,
    pub outputs: Outputs,
}

impl Scenario {
    pub fn run_spec(&self) -> Result<RunSpec, ConfigErrors> {
        RunSpec::new(self.n_samples, self.seed, self.n_blocks).map_err(core_error("run"))
    }
}

/// Accumulates errors while walking the document.
struct Reader {
    errors: Vec<String>,
}

impl Reader {
    fn error(&mut self, path: &str, message: impl fmt::Display) {
        self.errors.push(format!("{path}: {message}"));
    }

    fn object<'a>(&mut self, value: &'a Value, path: &str) -> Option<&'a Map<String, Value>> {
        match value.as_object() {
            Some(m) => Some(m),
            None => {
                self.error(path, "expected an object");
                None
            }
        }
    }

    fn unknown_keys(&mut self, map: &Map<String, Value>, path: &str, known: &[&str]) {
        for key in map.keys() {
            if !known.contains(&key.as_str()) {
                self.error(&join(path, key), "unknown key");
            }
        }
    }

    fn number(&mut self, map: &Map<String, Value>, path: &str, key: &str) -> Option<f64> {
        let value = map.get(key)?;
        match value.as_f64() {
            Some(v) if v.is_finite() => Some(v),
            _ => {
                self.error(&join(path, key), "expected a number");
                None
            }
        }
    }

    fn required_number(&mut self, map: &Map<String, Value>, path: &str, key: &str) -> Option<f64> {
        if !map.contains_key(key) {
            self.error(&join(path, key), "missing");
            return None;
        }
        self.number(map, path, key)
    }

    fn integer(&mut self, map: &Map<String, Value>, path: &str, key: &str) -> Option<u64> {
        let value = map.get(key)?;
        match value.as_u64() {
            Some(v) => Some(v),
            None => {
                self.error(&join(path, key), "expected a non-negative integer");
                None
            }
        }
    }

    fn string<'a>(&mut self, map: &'a Map<String, Value>, path: &str, key: &str) -> Option<&'a str> {
        let value = map.get(key)?;
        match value.as_str() {
            Some(s) => Some(s),
            None => {
                self.error(&join(path, key), "expected a string");
                None
            }
        }
    }

    /// A fraction given either linearly under `key` or in dB under `key_db`.
    fn fraction(&mut self, map: &Map<String, Value>, path: &str, key: &str) -> Option<Option<f64>> {
        let db_key = format!("{key}_db");
        let linear = self.number(map, path, key);
        let db = self.number(map, path, &db_key);
        let value = match (map.contains_key(key), map.contains_key(&db_key)) {
            (true, true) => {
                self.error(path, format!("give only one of `{key}` and `{db_key}`"));
                return None;
            }
            (false, false) => return Some(None),
            (true, false) => linear?,
            (false, true) => {
                let db = db?;
                if db > 0.0 {
                    self.error(&join(path, &db_key), "decibel attenuation must be <= 0");
                    return None;
                }
                db_to_linear(db)
            }
        };
        if !(value > 0.0 && value <= 1.0) {
            self.error(&join(path, key), format!("{value} is outside (0, 1]"));
            return None;
        }
        Some(Some(value))
    }

    fn required_fraction(&mut self, map: &Map<String, Value>, path: &str, key: &str) -> Option<f64> {
        match self.fraction(map, path, key)? {
            Some(v) => Some(v),
            None => {
                self.error(&join(path, key), format!("missing (give `{key}` or `{key}_db`)"));
                None
            }
        }
    }

    fn detector_channel(&mut self, map: &Map<String, Value>, path: &str, key: &str) -> Option<DetectorChannel> {
        let here = join(path, key);
        let Some(value) = map.get(key) else {
            self.error(&here, "missing (all eight detector parameters are required)");
            return None;
        };
        let obj = self.object(value, &here)?;
        self.unknown_keys(obj, &here, &["efficiency", "efficiency_db", "noise_variance"]);
        let efficiency = self.required_fraction(obj, &here, "efficiency");
        let noise = self.required_number(obj, &here, "noise_variance");
        let (efficiency, noise) = (efficiency?, noise?);
        match DetectorChannel::new(efficiency, noise) {
            Ok(c) => Some(c),
            Err(e) => {
                self.error(&here, e);
                None
            }
        }
    }

    fn system(&mut self, value: &Value) -> Option<SystemSpec> {
        let path = "system";
        let map = self.object(value, path)?;
        self.unknown_keys(
            map,
            path,
            &[
                "n0",
                "mode_overlap_a",
                "alice_attenuation_eta0",
                "alice_attenuation_eta0_db",
                "channel",
                "detectors",
                "topology",
            ],
        );
        let n0 = self.number(map, path, "n0");
        if let Some(n0) = n0 {
            if n0 < 0.0 {
                self.error("system.n0", "must be >= 0");
            }
        }
        let overlap = self.required_number(map, path, "mode_overlap_a");
        if let Some(a) = overlap {
            if !(0.0..=1.0).contains(&a) {
                self.error("system.mode_overlap_a", format!("{a} is outside [0, 1]"));
            }
        }
        let eta0 = self.fraction(map, path, "alice_attenuation_eta0");
        let channel = match map.get("channel") {
            Some(v) => self.channel(v),
            None => Some(ChannelParams::Transmittance(1.0)),
        };
        let detectors = match map.get("detectors") {
            Some(v) => self.detectors(v),
            None => {
                self.error("system.detectors", "missing (all eight detector parameters are required)");
                None
            }
        };
        let topology = match self.string(map, path, "topology") {
            None => Some(Topology::Direct),
            Some("direct") => Some(Topology::Direct),
            Some("beam_splitting_attack") => Some(Topology::BeamSplittingAttack),
            Some(other) => {
                self.error(
                    "system.topology",
                    format!("unknown topology `{other}` (direct | beam_splitting_attack)"),
                );
                None
            }
        };
        let (alice, bob) = detectors?;
        Some(SystemSpec {
            n0,
            mode_overlap: overlap?,
            alice_attenuation: eta0?.unwrap_or(1.0),
            channel: channel?,
            alice,
            bob,
            topology: topology?,
        })
    }

    fn channel(&mut self, value: &Value) -> Option<ChannelParams> {
        let path = "system.channel";
        let map = self.object(value, path)?;
        self.unknown_keys(
            map,
            path,
            &["transmittance", "transmittance_db", "fiber_length_km", "attenuation_db_per_km"],
        );
        let t = self.fraction(map, path, "transmittance")?;
        let length = self.number(map, path, "fiber_length_km");
        let loss = self.number(map, path, "attenuation_db_per_km");
        match (t, map.contains_key("fiber_length_km")) {
            (Some(_), true) => {
                self.error(path, "give either a transmittance or a fiber length, not both");
                None
            }
            (Some(t), false) => Some(ChannelParams::Transmittance(t)),
            (None, true) => {
                let length = length?;
                let loss = loss.unwrap_or(reference::FIBER_LOSS_DB_PER_KM);
                if length < 0.0 || loss < 0.0 {
                    self.error(path, "fiber length and loss must be >= 0");
                    return None;
                }
                Some(ChannelParams::Fiber {
                    length_km: length,
                    attenuation_db_per_km: loss,
                })
            }
            (None, false) => Some(ChannelParams::Transmittance(1.0)),
        }
    }

    fn detectors(&mut self, value: &Value) -> Option<(ConjugateDetector, ConjugateDetector)> {
        let path = "system.detectors";
        let map = self.object(value, path)?;
        self.unknown_keys(map, path, &["alice_x", "alice_p", "bob_x", "bob_p"]);
        let ax = self.detector_channel(map, path, "alice_x");
        let ap = self.detector_channel(map, path, "alice_p");
        let bx = self.detector_channel(map, path, "bob_x");
        let bp = self.detector_channel(map, path, "bob_p");
        Some((ConjugateDetector::new(ax?, ap?), ConjugateDetector::new(bx?, bp?)))
    }

    fn sweep(&mut self, value: &Value) -> Option<Sweep> {
        let path = "sweep";
        let map = self.object(value, path)?;
        self.unknown_keys(map, path, &["variable", "values", "start", "stop", "step"]);
        let variable = match self.string(map, path, "variable") {
            Some("n0") => Some((SweepVariable::N0, false)),
            Some("eta_tot_db") => Some((SweepVariable::TotalAttenuation, false)),
            Some("eta_tot") => Some((SweepVariable::TotalAttenuation, true)),
            Some("fiber_length_km") => Some((SweepVariable::FiberLength, false)),
            Some(other) => {
                self.error(
                    "sweep.variable",
                    format!("unknown axis `{other}` (n0 | eta_tot | eta_tot_db | fiber_length_km)"),
                );
                None
            }
            None => {
                if !map.contains_key("variable") {
                    self.error("sweep.variable", "missing");
                }
                None
            }
        };
        let values = self.grid(map, path);
        let ((variable, linear), mut values) = (variable?, values?);
        if linear {
            // Stored in dB; the linear form is validated first.
            for (i, v) in values.iter_mut().enumerate() {
                if !(*v > 0.0 && *v <= 1.0) {
                    self.error(&format!("sweep.values[{i}]"), format!("{v} is outside (0, 1]"));
                }
                *v = pcvqkd::model::linear_to_db(*v);
            }
        }
        for (i, v) in values.iter().enumerate() {
            let bad = match variable {
                SweepVariable::N0 | SweepVariable::FiberLength => *v < 0.0,
                SweepVariable::TotalAttenuation => *v > 0.0,
            };
            if bad {
                let rule = match variable {
                    SweepVariable::TotalAttenuation => "must be <= 0 dB",
                    _ => "must be >= 0",
                };
                self.error(&format!("sweep.values[{i}]"), format!("{v} {rule}"));
            }
        }
        Some(Sweep { variable, values })
    }

    fn grid(&mut self, map: &Map<String, Value>, path: &str) -> Option<Vec<f64>> {
        if let Some(values) = map.get("values") {
            if ["start", "stop", "step"].iter().any(|k| map.contains_key(*k)) {
                self.error(path, "give either `values` or `start`/`stop`/`step`");
                return None;
            }
            let Some(items) = values.as_array() else {
                self.error("sweep.values", "expected an array of numbers");
                return None;
            };
            let mut out = Vec::with_capacity(items.len());
            for (i, item) in items.iter().enumerate() {
                match item.as_f64() {
                    Some(v) if v.is_finite() => out.push(v),
                    _ => self.error(&format!("sweep.values[{i}]"), "expected a number"),
                }
            }
            if items.is_empty() {
                self.error("sweep.values", "must not be empty");
            }
            return (out.len() == items.len() && !out.is_empty()).then_some(out);
        }
        let start = self.required_number(map, path, "start");
        let stop = self.required_number(map, path, "stop");
        let step = self.required_number(map, path, "step");
        let (start, stop, step) = (start?, stop?, step?);
        if step == 0.0 || (stop - start) / step < 0.0 {
            self.error("sweep.step", "does not move from start towards stop");
            return None;
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        if count > 1_000_000 {
            self.error("sweep", format!("{count} grid points is too many"));
            return None;
        }
        Some((0..count).map(|i| start + step * i as f64).collect())
    }

    fn keyrate(&mut self, value: Option<&Value>) -> Option<KeyRateSpec> {
        let mut spec = KeyRateSpec {
            efficiency: reference::RECONCILIATION_EFFICIENCY,
            loss_db_per_km: reference::FIBER_LOSS_DB_PER_KM,
            policy: AttenuationPolicy::default(),
            measured_points: Vec::new(),
        };
        let Some(value) = value else {
            return Some(spec);
        };
        let path = "keyrate";
        let map = self.object(value, path)?;
        self.unknown_keys(
            map,
            path,
            &[
                "reconciliation_efficiency",
                "attenuation_db_per_km",
                "alice_attenuation",
                "min_alice_attenuation",
                "measured_points",
            ],
        );
        let mut ok = true;
        if let Some(f) = self.number(map, path, "reconciliation_efficiency") {
            if f > 0.0 && f <= 1.0 {
                spec.efficiency = f;
            } else {
                self.error("keyrate.reconciliation_efficiency", format!("{f} is outside (0, 1]"));
                ok = false;
            }
        }
        if let Some(loss) = self.number(map, path, "attenuation_db_per_km") {
            if loss >= 0.0 {
                spec.loss_db_per_km = loss;
            } else {
                self.error("keyrate.attenuation_db_per_km", "must be >= 0");
                ok = false;
            }
        }
        let floor = self.number(map, path, "min_alice_attenuation");
        match self.string(map, path, "alice_attenuation") {
            None | Some("optimize") => {
                if let Some(floor) = floor {
                    if floor > 0.0 && floor <= 1.0 {
                        spec.policy = AttenuationPolicy::Optimize {
                            min_attenuation: floor,
                        };
                    } else {
                        self.error("keyrate.min_alice_attenuation", format!("{floor} is outside (0, 1]"));
                        ok = false;
                    }
                }
            }
            Some("fixed") => spec.policy = AttenuationPolicy::Fixed,
            Some(other) => {
                self.error("keyrate.alice_attenuation", format!("unknown policy `{other}` (optimize | fixed)"));
                ok = false;
            }
        }
        if let Some(points) = map.get("measured_points") {
            match points.as_array() {
                Some(items) => {
                    for (i, item) in items.iter().enumerate() {
                        match self.measured_point(item, &format!("keyrate.measured_points[{i}]")) {
                            Some(p) => spec.measured_points.push(p),
                            None => ok = false,
                        }
                    }
                }
                None => {
                    self.error("keyrate.measured_points", "expected an array");
                    ok = false;
                }
            }
        }
        ok.then_some(spec)
    }

    fn measured_point(&mut self, value: &Value, path: &str) -> Option<MeasuredPointSpec> {
        let map = self.object(value, path)?;
        self.unknown_keys(
            map,
            path,
            &[
                "eta_tot",
                "eta_tot_db",
                "alice_attenuation_eta0",
                "alice_attenuation_eta0_db",
                "transmittance",
                "transmittance_db",
                "corr_mean",
                "corr_std",
                "n_blocks",
            ],
        );
        let eta_tot = self.required_fraction(map, path, "eta_tot");
        let eta0 = self.required_fraction(map, path, "alice_attenuation_eta0");
        let t = self.required_fraction(map, path, "transmittance");
        let mean = self.number(map, path, "corr_mean");
        let std = self.number(map, path, "corr_std");
        let blocks = self.integer(map, path, "n_blocks");
        let estimate = match (map.contains_key("corr_mean"), map.contains_key("corr_std")) {
            (false, false) => {
                if map.contains_key("n_blocks") {
                    self.error(path, "`n_blocks` given without a correlation estimate");
                    return None;
                }
                None
            }
            (true, true) => {
                let (mean, std) = (mean?, std?);
                let blocks = blocks.unwrap_or(DEFAULT_BLOCKS as u64) as usize;
                if let Err(e) = pcvqkd::estimation::CorrEstimate::new(mean, std, blocks) {
                    self.error(path, e);
                    return None;
                }
                Some((mean, std, blocks))
            }
            _ => {
                self.error(path, "give both `corr_mean` and `corr_std`, or neither to simulate");
                return None;
            }
        };
        Some(MeasuredPointSpec {
            eta_tot: eta_tot?,
            alice_attenuation: eta0?,
            transmittance: t?,
            estimate,
        })
    }
}

fn join(path: &str, key: &str) -> String {
    format!("{path}.{key}")
}

/// Parses a scenario document, collecting every violated constraint.
pub fn parse(text: &str, base_dir: &Path) -> Result<Scenario, ConfigErrors> {
    let doc: Value = serde_json::from_str(text)
        .map_err(|e| ConfigErrors(vec![format!("scenario is not valid JSON: {e}")]))?;
    let mut r = Reader { errors: Vec::new() };
    let root = r.object(&doc, "scenario").ok_or_else(|| ConfigErrors(r.errors.clone()))?;
    r.unknown_keys(root, "scenario", &["system", "run", "sweep", "keyrate", "fit", "outputs"]);

    let system = match root.get("system") {
        Some(v) => r.system(v),
        None => {
            r.error("system", "missing");
            None
        }
    };

    let (mut n_samples, mut seed, mut n_blocks) = (DEFAULT_SAMPLES as u64, 0, DEFAULT_BLOCKS as u64);
    if let Some(run) = root.get("run") {
        if let Some(map) = r.object(run, "run") {
            r.unknown_keys(map, "run", &["n_samples", "seed", "n_blocks"]);
            n_samples = r.integer(map, "run", "n_samples").unwrap_or(n_samples);
            seed = r.integer(map, "run", "seed").unwrap_or(seed);
            n_blocks = r.integer(map, "run", "n_blocks").unwrap_or(n_blocks);
        }
    }

    let sweep = root.get("sweep").and_then(|v| r.sweep(v));
    let keyrate = r.keyrate(root.get("keyrate"));

    let (mut fit_points, mut std_floor) = (None, pcvqkd::estimation::FitOptions::default().std_floor);
    if let Some(fit) = root.get("fit") {
        if let Some(map) = r.object(fit, "fit") {
            r.unknown_keys(map, "fit", &["points_csv", "std_floor"]);
            fit_points = r.string(map, "fit", "points_csv").map(|p| base_dir.join(p));
            if let Some(floor) = r.number(map, "fit", "std_floor") {
                if floor > 0.0 {
                    std_floor = floor;
                } else {
                    r.error("fit.std_floor", "must be > 0");
                }
            }
        }
    }

    let mut outputs = Outputs::default();
    if let Some(out) = root.get("outputs") {
        if let Some(map) = r.object(out, "outputs") {
            r.unknown_keys(map, "outputs", &["primary", "secondary"]);
            outputs.primary = r.string(map, "outputs", "primary").map(|p| base_dir.join(p));
            outputs.secondary = r.string(map, "outputs", "secondary").map(|p| base_dir.join(p));
        }
    }

    match (system, keyrate, r.errors.is_empty()) {
        (Some(system), Some(keyrate), true) => Ok(Scenario {
            system,
            n_samples: n_samples as usize,
            seed,
            n_blocks: n_blocks as usize,
            sweep,
            keyrate,
            fit_points,
            std_floor,
            outputs,
        }),
        _ => Err(ConfigErrors(r.errors)),
    }
}
