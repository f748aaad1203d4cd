//! Replication cases, hyperparameter sweeps, and table/CSV emission.
//!
//! A [`CaseSpec`] bundles one training configuration with a repeat count and
//! base seed; repeat `i` runs with seed `base_seed + i` for both the weight
//! initialization and the input draw. Sweeps vary one axis of a template
//! spec while keeping the seed set fixed, so comparisons across the axis are
//! paired.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{DenormMode, Network, NetworkConfig};
use crate::sim::BodyPose;
use crate::train::{
    train, AngleTargets, GenerationRecord, InputPolicy, LrSchedule, TrainingConfig, TrainingRun,
};

/// Budget used by every preset and sweep unless overridden.
pub const DEFAULT_MAX_GENERATIONS: u64 = 20_000;

/// Generations reported in a paper-style table, besides the final one.
pub const REPORT_GENERATIONS: [u64; 12] = [1, 2, 3, 4, 5, 10, 15, 20, 30, 50, 75, 100];

/// One named experiment: a training configuration plus repeats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseSpec {
    pub name: String,
    pub hidden_size: usize,
    pub learning_rate: f64,
    pub lr_schedule: LrSchedule,
    pub tolerance_deg: f64,
    pub targets: AngleTargets,
    pub repeats: usize,
    pub base_seed: u64,
    pub denorm_mode: DenormMode,
    pub max_generations: u64,
    pub input_policy: InputPolicy,
}

impl CaseSpec {
    /// Replication case 1: 2 hidden neurons, rate 0.8, tolerance 1 degree.
    pub fn case1(base_seed: u64) -> Self {
        Self::named("case1", 2, 0.8, 1.0, base_seed)
    }

    /// Replication case 2: 2 hidden neurons, rate 0.5, tolerance 5 degrees.
    pub fn case2(base_seed: u64) -> Self {
        Self::named("case2", 2, 0.5, 5.0, base_seed)
    }

    /// The on-robot configuration: 20 hidden neurons, rate 0.3.
    pub fn hardware_replica(base_seed: u64) -> Self {
        Self::named("hardware-replica", 20, 0.3, 1.0, base_seed)
    }

    pub fn preset(name: &str, base_seed: u64) -> Result<Self> {
        match name {
            "case1" => Ok(Self::case1(base_seed)),
            "case2" => Ok(Self::case2(base_seed)),
            "hardware-replica" => Ok(Self::hardware_replica(base_seed)),
            other => Err(Error::InvalidConfig(format!(
                "unknown case {other:?} (expected case1, case2 or hardware-replica)"
            ))),
        }
    }

    fn named(
        name: &str,
        hidden_size: usize,
        learning_rate: f64,
        tolerance_deg: f64,
        base_seed: u64,
    ) -> Self {
        Self {
            name: name.to_string(),
            hidden_size,
            learning_rate,
            lr_schedule: LrSchedule::Constant,
            tolerance_deg,
            targets: reference_targets(),
            repeats: 1,
            base_seed,
            denorm_mode: DenormMode::PaperStated,
            max_generations: DEFAULT_MAX_GENERATIONS,
            input_policy: InputPolicy::FixedRandom,
        }
    }

    pub fn training_config(&self, seed: u64) -> TrainingConfig {
        TrainingConfig {
            learning_rate: self.learning_rate,
            lr_schedule: self.lr_schedule,
            tolerance_deg: self.tolerance_deg,
            max_generations: self.max_generations,
            input_policy: self.input_policy,
            denorm_mode: self.denorm_mode,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 {
            return Err(Error::InvalidConfig("repeats must be at least 1".into()));
        }
        NetworkConfig::new(self.hidden_size, self.base_seed)?;
        self.training_config(self.base_seed).validate()?;
        self.targets.validate(self.denorm_mode)?;
        Ok(())
    }
}

/// Outcome of one repeat: either a completed run or a divergence abort with
/// the records collected before it.
#[derive(Debug, Clone)]
pub enum RepeatRun {
    Completed(TrainingRun),
    Diverged {
        generation: u64,
        what: String,
        records: Vec<GenerationRecord>,
    },
}

impl RepeatRun {
    pub fn records(&self) -> &[GenerationRecord] {
        match self {
            RepeatRun::Completed(run) => &run.records,
            RepeatRun::Diverged { records, .. } => records,
        }
    }

    pub fn converged(&self) -> bool {
        match self {
            RepeatRun::Completed(run) => run.converged,
            RepeatRun::Diverged { .. } => false,
        }
    }

    pub fn generations(&self) -> u64 {
        match self {
            RepeatRun::Completed(run) => run.generations_used,
            RepeatRun::Diverged { generation, .. } => *generation,
        }
    }

    pub fn completed(&self) -> Option<&TrainingRun> {
        match self {
            RepeatRun::Completed(run) => Some(run),
            RepeatRun::Diverged { .. } => None,
        }
    }
}

/// All repeats of a case plus the paper-style table of the first repeat.
#[derive(Debug, Clone)]
pub struct CaseResult {
    pub spec: CaseSpec,
    pub runs: Vec<RepeatRun>,
    pub table: String,
}

fn run_repeats(spec: &CaseSpec) -> Result<Vec<RepeatRun>> {
    spec.validate()?;
    let mut runs = Vec::with_capacity(spec.repeats);
    for i in 0..spec.repeats {
        let seed = spec.base_seed + i as u64;
        let net = Network::init(&NetworkConfig::new(spec.hidden_size, seed)?)?;
        match train(net, &spec.training_config(seed), spec.targets) {
            Ok(run) => runs.push(RepeatRun::Completed(run)),
            Err(Error::Diverged {
                generation,
                what,
                records,
            }) => runs.push(RepeatRun::Diverged {
                generation,
                what,
                records,
            }),
            Err(other) => return Err(other),
        }
    }
    Ok(runs)
}

/// Run every repeat of a case. Divergence in a repeat is kept as that
/// repeat's outcome rather than failing the case.
pub fn run_case(spec: &CaseSpec) -> Result<CaseResult> {
    let runs = run_repeats(spec)?;
    let table = paper_table(runs[0].records());
    Ok(CaseResult {
        spec: spec.clone(),
        runs,
        table,
    })
}

/// Render records as the generation table: the fixed report generations that
/// precede the final one, then the final row, angles and errors to three
/// decimals.
pub fn paper_table(records: &[GenerationRecord]) -> String {
    let mut out =
        String::from("Generation  Servo 1 (deg)  Servo 2 (deg)  Error 1 (deg)  Error 2 (deg)\n");
    let Some(last) = records.last() else {
        return out;
    };
    let mut row = |rec: &GenerationRecord| {
        out.push_str(&format!(
            "{:>10}  {:>13.3}  {:>13.3}  {:>13.3}  {:>13.3}\n",
            rec.generation, rec.servo1_deg, rec.servo2_deg, rec.error1_deg, rec.error2_deg
        ));
    };
    for &g in REPORT_GENERATIONS.iter().filter(|&&g| g < last.generation) {
        if let Some(rec) = records.get(g as usize - 1) {
            debug_assert_eq!(rec.generation, g);
            row(rec);
        }
    }
    row(last);
    out
}

/// Number of sign changes of the servo-1 error across consecutive
/// generations; the overshoot proxy. Exact zeros are not crossings.
pub fn oscillation_count(records: &[GenerationRecord]) -> u64 {
    records
        .windows(2)
        .filter(|w| w[0].error1_deg * w[1].error1_deg < 0.0)
        .count() as u64
}

/// Per-repeat outcome of a sweep point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepeatOutcome {
    pub repeat: usize,
    pub converged: bool,
    pub generations: u64,
    pub oscillations: u64,
}

/// Aggregate for one sweep axis value.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub axis_value: f64,
    pub outcomes: Vec<RepeatOutcome>,
    /// Fraction of repeats that converged, in [0, 1].
    pub convergence_rate: f64,
    /// Median generations-to-converge over converged repeats only.
    pub median_generations: Option<f64>,
    /// Mean oscillation count over all repeats.
    pub mean_oscillations: f64,
}

fn summarize(axis_value: f64, runs: &[RepeatRun]) -> SweepResult {
    let outcomes: Vec<RepeatOutcome> = runs
        .iter()
        .enumerate()
        .map(|(repeat, run)| RepeatOutcome {
            repeat,
            converged: run.converged(),
            generations: run.generations(),
            oscillations: oscillation_count(run.records()),
        })
        .collect();
    let mut converged_gens: Vec<u64> = outcomes
        .iter()
        .filter(|o| o.converged)
        .map(|o| o.generations)
        .collect();
    converged_gens.sort_unstable();
    let median_generations = match converged_gens.len() {
        0 => None,
        n if n % 2 == 1 => Some(converged_gens[n / 2] as f64),
        n => Some((converged_gens[n / 2 - 1] + converged_gens[n / 2]) as f64 / 2.0),
    };
    SweepResult {
        axis_value,
        convergence_rate: converged_gens.len() as f64 / outcomes.len() as f64,
        median_generations,
        mean_oscillations: outcomes.iter().map(|o| o.oscillations as f64).sum::<f64>()
            / outcomes.len() as f64,
        outcomes,
    }
}

/// Sweep the hidden-layer size with a shared seed set per size.
pub fn sweep_hidden(sizes: &[usize], template: &CaseSpec) -> Result<Vec<SweepResult>> {
    if sizes.is_empty() {
        return Err(Error::Empty("sweep sizes"));
    }
    for &size in sizes {
        NetworkConfig::new(size, template.base_seed)?;
    }
    sizes
        .iter()
        .map(|&size| {
            let spec = CaseSpec {
                name: format!("hidden-{size}"),
                hidden_size: size,
                ..template.clone()
            };
            Ok(summarize(size as f64, &run_repeats(&spec)?))
        })
        .collect()
}

/// Sweep the learning rate with a shared seed set per rate.
pub fn sweep_lr(rates: &[f64], template: &CaseSpec) -> Result<Vec<SweepResult>> {
    if rates.is_empty() {
        return Err(Error::Empty("sweep rates"));
    }
    rates
        .iter()
        .map(|&rate| {
            let spec = CaseSpec {
                name: format!("lr-{rate}"),
                learning_rate: rate,
                ..template.clone()
            };
            Ok(summarize(rate, &run_repeats(&spec)?))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Emission
// ---------------------------------------------------------------------------

/// Write run records as CSV: `generation,servo1_deg,servo2_deg,error1_deg,
/// error2_deg,cost,lr_used`, values in round-trip precision.
pub fn write_run_csv<W: Write>(records: &[GenerationRecord], writer: W) -> Result<()> {
    if records.is_empty() {
        return Err(Error::Empty("run records"));
    }
    let mut w = csv::Writer::from_writer(writer);
    for rec in records {
        w.serialize(rec)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Parse a CSV written by [`write_run_csv`] back into records.
pub fn read_run_csv<R: Read>(reader: R) -> Result<Vec<GenerationRecord>> {
    let mut r = csv::Reader::from_reader(reader);
    let records: Vec<GenerationRecord> = r.deserialize().collect::<std::result::Result<_, _>>()?;
    if records.is_empty() {
        return Err(Error::Empty("run csv"));
    }
    Ok(records)
}

#[derive(Serialize)]
struct SweepCsvRow {
    axis_value: f64,
    repeat: usize,
    converged: bool,
    generations: u64,
    oscillations: u64,
}

/// Write sweep outcomes as CSV: `axis_value,repeat,converged,generations,
/// oscillations`, one row per repeat.
pub fn write_sweep_csv<W: Write>(results: &[SweepResult], writer: W) -> Result<()> {
    if results.is_empty() {
        return Err(Error::Empty("sweep results"));
    }
    let mut w = csv::Writer::from_writer(writer);
    for res in results {
        for o in &res.outcomes {
            w.serialize(SweepCsvRow {
                axis_value: res.axis_value,
                repeat: o.repeat,
                converged: o.converged,
                generations: o.generations,
                oscillations: o.oscillations,
            })?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[derive(Serialize)]
struct PlotCsvRow {
    generation: u64,
    error1_deg: f64,
    error2_deg: f64,
}

/// Write the two error series per generation, for external plotting.
pub fn write_plot_csv<W: Write>(records: &[GenerationRecord], writer: W) -> Result<()> {
    if records.is_empty() {
        return Err(Error::Empty("run records"));
    }
    let mut w = csv::Writer::from_writer(writer);
    for rec in records {
        w.serialize(PlotCsvRow {
            generation: rec.generation,
            error1_deg: rec.error1_deg,
            error2_deg: rec.error2_deg,
        })?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[derive(Serialize)]
struct TrajectoryCsvRow {
    generation: u64,
    x: f64,
    y: f64,
    heading_deg: f64,
}

/// Write a replayed trajectory: `generation,x,y,heading_deg`.
pub fn write_trajectory_csv<W: Write>(rows: &[(u64, BodyPose)], writer: W) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::Empty("trajectory"));
    }
    let mut w = csv::Writer::from_writer(writer);
    for (generation, pose) in rows {
        w.serialize(TrajectoryCsvRow {
            generation: *generation,
            x: pose.x,
            y: pose.y,
            heading_deg: pose.heading_deg,
        })?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

fn create_file(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).map_err(|e| Error::io(path, e))?,
    ))
}

pub fn write_run_csv_file(records: &[GenerationRecord], path: &Path) -> Result<()> {
    write_run_csv(records, create_file(path)?)
}

pub fn read_run_csv_file(path: &Path) -> Result<Vec<GenerationRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_run_csv(file)
}

pub fn write_sweep_csv_file(results: &[SweepResult], path: &Path) -> Result<()> {
    write_sweep_csv(results, create_file(path)?)
}

pub fn write_plot_csv_file(records: &[GenerationRecord], path: &Path) -> Result<()> {
    write_plot_csv(records, create_file(path)?)
}

pub fn write_trajectory_csv_file(rows: &[(u64, BodyPose)], path: &Path) -> Result<()> {
    write_trajectory_csv(rows, create_file(path)?)
}

// ---------------------------------------------------------------------------
// Reference generation tables
// ---------------------------------------------------------------------------

/// Committed reference generation table for case 1 (13 rows; servo-1 column
/// has gaps in the source data).
pub const CASE1_TABLE: &str = include_str!("../fixtures/case1_reference.csv");
/// Committed reference generation table for case 2 (13 complete rows).
pub const CASE2_TABLE: &str = include_str!("../fixtures/case2_reference.csv");

/// One row of a reference table. Missing servo readings stay missing; no
/// interpolation is attempted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub generation: u64,
    pub servo1_deg: Option<f64>,
    pub servo2_deg: Option<f64>,
    pub error1_deg: f64,
    pub error2_deg: f64,
}

/// Reference rows may disagree with a recovered target by at most this much;
/// the tables print three decimals.
pub const TABLE_PRINT_TOLERANCE_DEG: f64 = 0.01;

pub fn parse_reference_table(csv_text: &str) -> Result<Vec<ReferenceRow>> {
    let mut r = csv::Reader::from_reader(csv_text.as_bytes());
    let rows: Vec<ReferenceRow> = r.deserialize().collect::<std::result::Result<_, _>>()?;
    if rows.is_empty() {
        return Err(Error::Empty("reference table"));
    }
    Ok(rows)
}

/// Both committed tables, concatenated.
pub fn reference_rows() -> Result<Vec<ReferenceRow>> {
    let mut rows = parse_reference_table(CASE1_TABLE)?;
    rows.extend(parse_reference_table(CASE2_TABLE)?);
    Ok(rows)
}

/// Recover the angle targets from table rows via `target = servo + error`,
/// requiring every present pair to agree within print precision.
pub fn recover_targets(rows: &[ReferenceRow]) -> Result<AngleTargets> {
    let sums = |pick: fn(&ReferenceRow) -> Option<(f64, f64)>| -> Vec<(u64, f64)> {
        rows.iter()
            .filter_map(|r| pick(r).map(|(servo, err)| (r.generation, servo + err)))
            .collect()
    };
    let servo1 = sums(|r| r.servo1_deg.map(|s| (s, r.error1_deg)));
    let servo2 = sums(|r| r.servo2_deg.map(|s| (s, r.error2_deg)));

    let recover = |label: &str, sums: &[(u64, f64)]| -> Result<f64> {
        if sums.is_empty() {
            return Err(Error::TableInconsistent(format!(
                "no complete {label} readings to recover a target from"
            )));
        }
        let mut sorted: Vec<f64> = sums.iter().map(|&(_, s)| s).collect();
        sorted.sort_by(f64::total_cmp);
        let target = (sorted[sorted.len() / 2] * 1000.0).round() / 1000.0;
        for &(generation, sum) in sums {
            if (sum - target).abs() > TABLE_PRINT_TOLERANCE_DEG {
                return Err(Error::TableInconsistent(format!(
                    "{label} at generation {generation}: servo + error = {sum:.3}, expected {target} within {TABLE_PRINT_TOLERANCE_DEG}"
                )));
            }
        }
        Ok(target)
    };

    Ok(AngleTargets::new(
        recover("servo 1", &servo1)?,
        recover("servo 2", &servo2)?,
    ))
}

/// The targets the committed tables recover to; the default for replication
/// runs. Pinned here and re-derived from the tables in the test suite.
pub fn reference_targets() -> AngleTargets {
    AngleTargets::new(90.0, 120.0)
}

/// Outcome of checking the committed tables' target-recovery arithmetic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableReport {
    pub rows_total: usize,
    pub rows_consistent: usize,
    pub targets: AngleTargets,
}

/// Check every committed row against the recovered targets.
pub fn verify_reference_tables() -> Result<TableReport> {
    let rows = reference_rows()?;
    let targets = recover_targets(&rows)?;
    let consistent = |servo: Option<f64>, err: f64, target: f64| {
        servo.is_none_or(|s| (s + err - target).abs() <= TABLE_PRINT_TOLERANCE_DEG)
    };
    let rows_consistent = rows
        .iter()
        .filter(|r| {
            consistent(r.servo1_deg, r.error1_deg, targets.servo1_deg)
                && consistent(r.servo2_deg, r.error2_deg, targets.servo2_deg)
        })
        .count();
    Ok(TableReport {
        rows_total: rows.len(),
        rows_consistent,
        targets,
    })
}
