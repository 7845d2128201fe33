//! The five subcommands. Each is a pure function of the scenario (with flag
//! overrides applied) and writes plot-ready CSV.

use std::fmt;
use std::io;
use std::path::{Path, PathBuf};

use pcvqkd::estimation::{blocked_correlation, fit_mode_overlap, mean_and_std, CorrEstimate, FitOptions, FitPoint};
use pcvqkd::keyrate::{key_rate_from_measurement, key_rate_with_mutual_info, FiberLink, NoiseBudget};
use pcvqkd::model::{self, db_to_linear, linear_to_db, ChannelParams, SourceParams, SystemConfig};
use pcvqkd::montecarlo::{derive_seed, simulate_batch, QuadratureRecord, RunSpec};
use rayon::prelude::*;

use crate::output::{Cell, Sink, Table};
use crate::scenario::{ConfigErrors, Scenario, Sweep, SweepVariable};

pub const DEFAULT_N0_GRID: [f64; 7] = [10.0, 25.0, 50.0, 100.0, 200.0, 400.0, 880.0];

/// Failure of a command, classified by exit code.
#[derive(Debug)]
pub enum CommandError {
    Config(ConfigErrors),
    Numerical(String),
    Io { path: Option<PathBuf>, source: io::Error },
}

impl CommandError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CommandError::Config(_) => 2,
            CommandError::Numerical(_) => 3,
            CommandError::Io { .. } => 4,
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        CommandError::Config(ConfigErrors(vec![message.into()]))
    }

    pub fn io(path: Option<&Path>, source: io::Error) -> Self {
        CommandError::Io {
            path: path.map(Path::to_path_buf),
            source,
        }
    }
}

impl fmt::Display for CommandError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CommandError::Config(e) => write!(f, "{e}"),
            CommandError::Numerical(e) => write!(f, "numerical error: {e}"),
            CommandError::Io { path: Some(p), source } => write!(f, "{}: {source}", p.display()),
            CommandError::Io { path: None, source } => write!(f, "{source}"),
        }
    }
}

impl From<ConfigErrors> for CommandError {
    fn from(e: ConfigErrors) -> Self {
        CommandError::Config(e)
    }
}

impl From<pcvqkd::Error> for CommandError {
    fn from(e: pcvqkd::Error) -> Self {
        if e.is_numerical() {
            CommandError::Numerical(e.to_string())
        } else {
            CommandError::config(e.to_string())
        }
    }
}

pub type CmdResult<T = ()> = Result<T, CommandError>;

/// Output locations after command-line overrides.
#[derive(Debug, Clone)]
pub struct Destinations {
    pub primary: Sink,
    pub secondary: Sink,
}

impl Destinations {
    fn write(sink: &Sink, table: &Table) -> CmdResult {
        sink.write_table(table).map_err(|e| CommandError::io(sink.path(), e))
    }
}

fn record_corr(record: &QuadratureRecord, n_blocks: usize) -> CmdResult<CorrEstimate> {
    Ok(blocked_correlation(&record.alice, &record.bob, n_blocks)?.estimate)
}

/// Monte Carlo correlation estimate of `config` on its own substream.
fn simulate_corr(config: &SystemConfig, spec: &RunSpec, index: u64) -> CmdResult<CorrEstimate> {
    let batch = simulate_batch(config, &spec.substream(index))?;
    record_corr(&batch.x, spec.n_blocks())
}

fn sweep_values(scenario: &Scenario, expected: SweepVariable, default: Vec<f64>) -> CmdResult<Vec<f64>> {
    let mut values = match &scenario.sweep {
        None => default,
        Some(Sweep { variable, values }) if *variable == expected => values.clone(),
        Some(Sweep { variable, .. }) => {
            return Err(CommandError::config(format!(
                "sweep.variable: this command sweeps `{}`, not `{}`",
                expected.name(),
                variable.name()
            )))
        }
    };
    // Rows are emitted in increasing axis order.
    values.sort_by(f64::total_cmp);
    values.dedup();
    Ok(values)
}

fn require_n0(scenario: &Scenario, command: &str) -> CmdResult<f64> {
    scenario
        .system
        .n0
        .ok_or_else(|| CommandError::config(format!("system.n0: missing (required by `{command}`)")))
}

/// Per-point correlation columns shared by both correlation sweeps.
fn corr_cells(model: f64, mc: Option<CorrEstimate>) -> Vec<Cell> {
    match mc {
        Some(est) => vec![
            model.into(),
            est.mean_corr.into(),
            est.std_dev.into(),
            est.standard_error().into(),
            est.n_blocks.into(),
        ],
        None => vec![model.into(), Cell::Missing, Cell::Missing, Cell::Missing, Cell::Missing],
    }
}

pub const SWEEP_N0_HEADER: [&str; 6] = ["n0", "corr_model", "corr_mc", "corr_std", "corr_se", "n_blocks"];

pub fn sweep_n0(scenario: &Scenario, analytic_only: bool, out: &Destinations) -> CmdResult {
    let grid = sweep_values(scenario, SweepVariable::N0, DEFAULT_N0_GRID.to_vec())?;
    let base = scenario.system.config(Some(grid.first().copied().unwrap_or(0.0)))?;
    let spec = scenario.run_spec()?;
    let eta_tot = base.total_attenuation();
    let rows: Vec<Vec<Cell>> = grid
        .par_iter()
        .enumerate()
        .map(|(i, &n0)| {
            let config = base.with_source(SourceParams::new(n0, base.source.mode_overlap())?)?;
            let corr = model::predicted_correlation(
                &config.source,
                &config.alice_detector.x,
                &config.bob_detector.x,
                eta_tot,
            )?;
            let mc = (!analytic_only)
                .then(|| simulate_corr(&config, &spec, i as u64))
                .transpose()?;
            let mut row = vec![Cell::from(n0)];
            row.extend(corr_cells(corr, mc));
            Ok(row)
        })
        .collect::<CmdResult<_>>()?;
    let mut table = Table::new("sweep-n0/v1", &SWEEP_N0_HEADER);
    rows.into_iter().for_each(|r| table.push(r));
    Destinations::write(&out.primary, &table)
}

pub const SWEEP_ATTENUATION_HEADER: [&str; 7] =
    ["eta_tot_db", "eta_tot", "corr_model", "corr_mc", "corr_std", "corr_se", "n_blocks"];

pub fn sweep_attenuation(scenario: &Scenario, analytic_only: bool, out: &Destinations) -> CmdResult {
    let n0 = require_n0(scenario, "sweep-attenuation")?;
    let default: Vec<f64> = (0..=9).map(|k| -5.0 * f64::from(k)).collect();
    let grid = sweep_values(scenario, SweepVariable::TotalAttenuation, default)?;
    let base = scenario.system.config(Some(n0))?;
    let spec = scenario.run_spec()?;
    let rows: Vec<Vec<Cell>> = grid
        .par_iter()
        .enumerate()
        .map(|(i, &db)| {
            let eta_tot = db_to_linear(db);
            // All loss before Bob enters through eta_tot alone, so the point
            // is simulated with the attenuation lumped at Alice's attenuator.
            let config = base
                .with_channel(ChannelParams::Transmittance(1.0))?
                .with_alice_attenuation(eta_tot)?;
            let corr = model::predicted_correlation(
                &config.source,
                &config.alice_detector.x,
                &config.bob_detector.x,
                eta_tot,
            )?;
            let mc = (!analytic_only)
                .then(|| simulate_corr(&config, &spec, i as u64))
                .transpose()?;
            let mut row = vec![Cell::from(db), Cell::from(eta_tot)];
            row.extend(corr_cells(corr, mc));
            Ok(row)
        })
        .collect::<CmdResult<_>>()?;
    let mut table = Table::new("sweep-attenuation/v1", &SWEEP_ATTENUATION_HEADER);
    rows.into_iter().for_each(|r| table.push(r));
    Destinations::write(&out.primary, &table)
}

pub const KEYRATE_HEADER: [&str; 9] = ["L_km", "T", "eta0", "V_A", "eps_A", "I_AB", "chi_BE", "R", "positive"];

pub const MEASURED_HEADER: [&str; 15] = [
    "eta_tot_db",
    "eta0",
    "T",
    "corr_mean",
    "corr_std",
    "n_blocks",
    "I_AB",
    "I_AB_lower",
    "I_AB_upper",
    "chi_BE",
    "R",
    "R_lower",
    "R_upper",
    "R_analytic",
    "positive",
];

/// Rate versus fiber length with its cutoff, then any measured points.
pub fn keyrate(scenario: &Scenario, out: &Destinations) -> CmdResult {
    let n0 = require_n0(scenario, "keyrate")?;
    let default: Vec<f64> = (0..=24).map(|k| 5.0 * f64::from(k)).collect();
    let grid = sweep_values(scenario, SweepVariable::FiberLength, default)?;
    let spec = &scenario.keyrate;
    let base = scenario.system.config(Some(n0))?;
    let link = FiberLink {
        base,
        loss_db_per_km: spec.loss_db_per_km,
        efficiency: spec.efficiency,
        policy: spec.policy,
    };
    let curve = link.curve(&grid)?;
    let mut table = Table::new("keyrate/v1", &KEYRATE_HEADER);
    for p in &curve {
        let r = &p.result;
        table.push(vec![
            p.length_km.into(),
            p.transmittance.into(),
            p.alice_attenuation.into(),
            r.budget.modulation_variance.into(),
            r.budget.excess_noise.into(),
            r.i_ab.into(),
            r.holevo.chi_be.into(),
            r.rate.into(),
            r.positive.into(),
        ]);
    }
    Destinations::write(&out.primary, &table)?;

    if let (Some(first), Some(last)) = (grid.first(), grid.last()) {
        match link.locate_cutoff(*first, *last, 1e-6)? {
            Some(cutoff) => eprintln!("rate changes sign at L = {cutoff:.4} km"),
            None => eprintln!("no sign change of the rate within [{first}, {last}] km"),
        }
    }

    if spec.measured_points.is_empty() {
        return Ok(());
    }
    let run = scenario.run_spec()?;
    // Measured points draw from their own family of substreams.
    let run = run.with_seed(derive_seed(run.seed(), u64::MAX));
    let rows: Vec<Vec<Cell>> = spec
        .measured_points
        .par_iter()
        .enumerate()
        .map(|(i, point)| {
            let split = base
                .with_alice_attenuation(point.alice_attenuation)?
                .with_channel(ChannelParams::Transmittance(point.transmittance))?;
            let predicted = model::predicted_correlation(
                &split.source,
                &split.alice_detector.x,
                &split.bob_detector.x,
                point.eta_tot,
            )?;
            let estimate = match point.estimate {
                Some((mean, std, blocks)) => CorrEstimate::new(mean, std, blocks)?,
                None => {
                    let lumped = split
                        .with_channel(ChannelParams::Transmittance(1.0))?
                        .with_alice_attenuation(point.eta_tot)?;
                    simulate_corr(&lumped, &run, i as u64)?
                }
            };
            let measured = key_rate_from_measurement(&estimate, point.eta_tot, &split, spec.efficiency)?;
            let budget = NoiseBudget::from_config(&split)?;
            let analytic = key_rate_with_mutual_info(&budget, model::mutual_info_from_corr(predicted)?, spec.efficiency)?;
            let c = &measured.central;
            Ok(vec![
                linear_to_db(point.eta_tot).into(),
                point.alice_attenuation.into(),
                point.transmittance.into(),
                estimate.mean_corr.into(),
                estimate.std_dev.into(),
                estimate.n_blocks.into(),
                measured.mutual_info.central.into(),
                measured.mutual_info.lower.into(),
                measured.mutual_info.upper.into(),
                c.holevo.chi_be.into(),
                c.rate.into(),
                measured.rate_lower.into(),
                measured.rate_upper.into(),
                analytic.rate.into(),
                c.positive.into(),
            ])
        })
        .collect::<CmdResult<_>>()?;
    let mut measured = Table::new("keyrate-measured/v1", &MEASURED_HEADER);
    rows.into_iter().for_each(|r| measured.push(r));
    Destinations::write(&out.secondary, &measured)
}

pub const FIT_HEADER: [&str; 6] = ["n0", "corr_mean", "corr_std", "n_blocks", "model_corr", "residual"];

/// Reads fit points. Accepts the `sweep-n0` output directly (`corr_mc`
/// stands in for `corr_mean`); `n_blocks` defaults to the run setting.
pub fn read_fit_points(path: &Path, default_blocks: usize) -> CmdResult<Vec<FitPoint>> {
    let text = std::fs::read_to_string(path).map_err(|e| CommandError::io(Some(path), e))?;
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let where_ = |line: Option<u64>| format!("{}:{}", path.display(), line.unwrap_or(0));
    let headers = reader
        .headers()
        .map_err(|e| CommandError::config(format!("{}: {e}", path.display())))?
        .clone();
    if headers.is_empty() {
        return Err(CommandError::config(format!("{}: file is empty", path.display())));
    }
    let find = |names: &[&str]| headers.iter().position(|h| names.contains(&h));
    let (Some(n0_col), Some(mean_col), Some(std_col)) =
        (find(&["n0"]), find(&["corr_mean", "corr_mc"]), find(&["corr_std"]))
    else {
        return Err(CommandError::config(format!(
            "{}: header must name n0, corr_mean (or corr_mc) and corr_std",
            path.display()
        )));
    };
    let blocks_col = find(&["n_blocks"]);

    let mut points = Vec::new();
    let mut errors = Vec::new();
    for record in reader.records() {
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                errors.push(format!("{}: {e}", path.display()));
                continue;
            }
        };
        let line = record.position().map(|p| p.line());
        let number = |col: usize, name: &str| -> Result<f64, String> {
            let raw = record.get(col).unwrap_or("");
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| format!("{}: {name} `{raw}` is not a number", where_(line)))
        };
        let blocks = match blocks_col.map(|c| record.get(c).unwrap_or("")) {
            None | Some("") => Ok(default_blocks),
            Some(raw) => raw
                .parse::<usize>()
                .map_err(|_| format!("{}: n_blocks `{raw}` is not a count", where_(line))),
        };
        match (number(n0_col, "n0"), number(mean_col, "corr_mean"), number(std_col, "corr_std"), blocks) {
            (Ok(n0), Ok(mean), Ok(std), Ok(blocks)) => {
                match (SourceParams::new(n0, 1.0), CorrEstimate::new(mean, std, blocks)) {
                    (Ok(_), Ok(estimate)) => points.push(FitPoint { n0, estimate }),
                    (Err(e), _) | (_, Err(e)) => errors.push(format!("{}: {e}", where_(line))),
                }
            }
            (n0, mean, std, blocks) => {
                errors.extend([n0.err(), mean.err(), std.err(), blocks.err()].into_iter().flatten())
            }
        }
    }
    if !errors.is_empty() {
        return Err(CommandError::Config(ConfigErrors(errors)));
    }
    if points.is_empty() {
        return Err(CommandError::config(format!("{}: no data rows", path.display())));
    }
    Ok(points)
}

pub fn fit(scenario: &Scenario, points_path: Option<&Path>, out: &Destinations) -> CmdResult {
    let path = points_path
        .or(scenario.fit_points.as_deref())
        .ok_or_else(|| CommandError::config("fit.points_csv: missing (or pass --points)"))?;
    let points = read_fit_points(path, scenario.n_blocks)?;
    let system = &scenario.system;
    let eta_tot = system.alice_attenuation * system.channel.transmittance()?;
    let (alice, bob) = (&system.alice.x, &system.bob.x);
    let options = FitOptions {
        std_floor: scenario.std_floor,
    };
    let result = fit_mode_overlap(&points, alice, bob, eta_tot, options)?;

    let mut table = Table::new("fit/v1", &FIT_HEADER);
    for p in &points {
        let model = result.model_corr(p.n0, alice, bob, eta_tot)?;
        table.push(vec![
            p.n0.into(),
            p.estimate.mean_corr.into(),
            p.estimate.std_dev.into(),
            p.estimate.n_blocks.into(),
            model.into(),
            (p.estimate.mean_corr - model).into(),
        ]);
    }
    Destinations::write(&out.primary, &table)?;
    eprintln!(
        "a_hat = {} +/- {} (residual_norm {}, {} points{})",
        pcvqkd::format_decimal(result.a_hat),
        pcvqkd::format_decimal(result.standard_error),
        pcvqkd::format_decimal(result.residual_norm),
        result.n_points,
        if result.clamped {
            format!(", clamped from {}", pcvqkd::format_decimal(result.unclamped))
        } else {
            String::new()
        }
    );
    Ok(())
}

pub const MOMENTS_HEADER: [&str; 6] = ["quantity", "quadrature", "sample", "model", "se", "z"];

/// Sample second moments of Alice's and Bob's outputs against the model.
fn moments_table(config: &SystemConfig, x: &QuadratureRecord, p: &QuadratureRecord) -> CmdResult<Table> {
    let mut table = Table::new("moments/v1", &MOMENTS_HEADER);
    let mut text_rows = Vec::new();
    for (label, record, alice, bob) in [
        ("x", x, &config.alice_detector.x, &config.bob_detector.x),
        ("p", p, &config.alice_detector.p, &config.bob_detector.p),
    ] {
        let m = model::second_moments(&config.source, alice, bob, config.total_attenuation())?;
        let n = record.len() as f64;
        for (name, u, v, expected) in [
            ("alice_var", &record.alice, &record.alice, m.alice),
            ("bob_var", &record.bob, &record.bob, m.bob),
            ("cross", &record.alice, &record.bob, m.cross),
        ] {
            let products: Vec<f64> = u.iter().zip(v.iter()).map(|(a, b)| a * b).collect();
            let (mean, std) = mean_and_std(&products);
            text_rows.push((name, label, mean, expected, std / n.sqrt()));
        }
        let r = record_corr(record, 1)?.mean_corr;
        let model_r = m.correlation();
        text_rows.push(("corr", label, r, model_r, (1.0 - model_r * model_r) / n.sqrt()));
    }
    for (name, label, sample, model, se) in text_rows {
        let z = if se > 0.0 { (sample - model) / se } else { 0.0 };
        table.push(vec![Cell::Text(name), Cell::Text(label), sample.into(), model.into(), se.into(), z.into()]);
    }
    Ok(table)
}

pub fn simulate(scenario: &Scenario, out: &Destinations) -> CmdResult {
    let n0 = require_n0(scenario, "simulate")?;
    let config = scenario.system.config(Some(n0))?;
    let spec = scenario.run_spec()?;
    let batch = simulate_batch(&config, &spec)?;
    let sink = &out.primary;
    sink.write_with(|w| {
        writeln!(w, "# schema: pcvqkd/samples/v1")?;
        batch.write_csv(w)
    })
    .map_err(|e| CommandError::io(sink.path(), e))?;
    let report = moments_table(&config, &batch.x, &batch.p)?;
    Destinations::write(&out.secondary, &report)
}
