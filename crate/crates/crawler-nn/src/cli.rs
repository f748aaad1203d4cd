//! Command-line surface: train, sweeps, replay, table verification, and the
//! named replication cases. All randomness flows from `--seed`; identical
//! argv produces byte-identical stdout and output files.

use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crawler_nn::error::{Error, Result};
use crawler_nn::experiments::{
    self, run_case, sweep_hidden, sweep_lr, CaseSpec, RepeatRun, SweepResult,
    DEFAULT_MAX_GENERATIONS,
};
use crawler_nn::net::{DenormMode, Network, NetworkConfig};
use crawler_nn::sim::{self, ArmGeometry, BodyPose};
use crawler_nn::store;
use crawler_nn::train::{train, AngleTargets, InputPolicy, LrSchedule, TrainingConfig};

/// Crawl cycles applied when replaying a saved model's single learned pose.
const REPLAY_MODEL_CYCLES: u64 = 10;

#[derive(Parser)]
#[command(
    name = "crawler-nn",
    version,
    about = "Train a tiny sigmoid network to drive a simulated one-armed crawler",
    arg_required_else_help = true
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one training session and print its generation table.
    Train(TrainArgs),
    /// Sweep the hidden-layer size with paired seeds.
    SweepHidden(SweepHiddenArgs),
    /// Sweep the learning rate with paired seeds.
    SweepLr(SweepLrArgs),
    /// Replay a run or saved model through the crawler simulation.
    Replay(ReplayArgs),
    /// Check the committed reference tables' target-recovery arithmetic.
    VerifyTables,
    /// Run a named replication case: case1, case2 or hardware-replica.
    Case(CaseArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Hidden-layer size.
    #[arg(long, default_value_t = 2)]
    hidden: usize,
    /// Learning rate.
    #[arg(long, default_value_t = 0.8)]
    lr: f64,
    /// Per-servo convergence tolerance, degrees.
    #[arg(long, default_value_t = 1.0)]
    tolerance: f64,
    /// Generation budget.
    #[arg(long, default_value_t = DEFAULT_MAX_GENERATIONS)]
    max_gens: u64,
    /// Learning-rate schedule: constant | exp:FACTOR | step:FACTOR:EVERY.
    #[arg(long, default_value = "constant", value_parser = parse_schedule)]
    schedule: LrSchedule,
    /// Target servo angles, degrees: S1,S2.
    #[arg(long, default_value = "90,120", value_parser = parse_targets, allow_hyphen_values = true)]
    targets: AngleTargets,
    /// Angle mapping: paper-stated (0..180) or table-affine (-180..180).
    #[arg(long, default_value = "paper-stated", value_parser = DenormMode::from_str)]
    mode: DenormMode,
    /// Seed for weight initialization and the input draw.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Save the trained model here.
    #[arg(long)]
    out_model: Option<PathBuf>,
    /// Write the full per-generation CSV here.
    #[arg(long)]
    out_csv: Option<PathBuf>,
}

#[derive(Args)]
struct SweepHiddenArgs {
    /// Hidden-layer sizes to sweep.
    #[arg(long, value_delimiter = ',', default_value = "2,5,10,20,25,40")]
    sizes: Vec<usize>,
    /// Repeats per size; repeat i runs with seed base-seed + i at every size.
    #[arg(long, default_value_t = 50)]
    repeats: usize,
    #[arg(long, default_value_t = 0.8)]
    lr: f64,
    #[arg(long, default_value_t = 1.0)]
    tolerance: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_GENERATIONS)]
    max_gens: u64,
    #[arg(long, default_value = "90,120", value_parser = parse_targets, allow_hyphen_values = true)]
    targets: AngleTargets,
    #[arg(long, default_value = "paper-stated", value_parser = DenormMode::from_str)]
    mode: DenormMode,
    /// Base seed for the paired repeat seeds.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write per-repeat outcomes as CSV here.
    #[arg(long)]
    out_csv: Option<PathBuf>,
}

#[derive(Args)]
struct SweepLrArgs {
    /// Learning rates to sweep.
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.3,0.5,0.8,0.9")]
    rates: Vec<f64>,
    #[arg(long, default_value_t = 50)]
    repeats: usize,
    #[arg(long, default_value_t = 2)]
    hidden: usize,
    #[arg(long, default_value_t = 1.0)]
    tolerance: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_GENERATIONS)]
    max_gens: u64,
    #[arg(long, default_value = "90,120", value_parser = parse_targets, allow_hyphen_values = true)]
    targets: AngleTargets,
    #[arg(long, default_value = "paper-stated", value_parser = DenormMode::from_str)]
    mode: DenormMode,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_csv: Option<PathBuf>,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct ReplaySource {
    /// Replay a saved model's learned pose for a fixed number of cycles.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Replay every generation of an emitted run CSV.
    #[arg(long)]
    run_csv: Option<PathBuf>,
}

#[derive(Args)]
struct ReplayArgs {
    #[command(flatten)]
    source: ReplaySource,
    /// Arm geometry in cm: LINK1,LINK2,SHOULDER_HEIGHT.
    #[arg(long, default_value = "5,5,6", value_parser = parse_geometry)]
    geometry: ArmGeometry,
    /// Trajectory CSV destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CaseArgs {
    /// case1 (hidden 2, lr 0.8, tol 1), case2 (hidden 2, lr 0.5, tol 5)
    /// or hardware-replica (hidden 20, lr 0.3, tol 1).
    #[arg(long, value_parser = ["case1", "case2", "hardware-replica"])]
    name: String,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Save the trained model here.
    #[arg(long)]
    out_model: Option<PathBuf>,
    /// Write the full per-generation CSV here.
    #[arg(long)]
    out_csv: Option<PathBuf>,
}

fn parse_targets(text: &str) -> std::result::Result<AngleTargets, String> {
    let parts: Vec<&str> = text.split(',').collect();
    let [s1, s2] = parts.as_slice() else {
        return Err(format!(
            "expected S1,S2 (two angles in degrees), got {text:?}"
        ));
    };
    let parse = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| format!("invalid angle {s:?}"))
    };
    Ok(AngleTargets::new(parse(s1)?, parse(s2)?))
}

fn parse_geometry(text: &str) -> std::result::Result<ArmGeometry, String> {
    let parts: Vec<&str> = text.split(',').collect();
    let [l1, l2, h] = parts.as_slice() else {
        return Err(format!(
            "expected LINK1,LINK2,SHOULDER_HEIGHT in cm, got {text:?}"
        ));
    };
    let parse = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| format!("invalid length {s:?}"))
    };
    ArmGeometry::new(parse(l1)?, parse(l2)?, parse(h)?).map_err(|e| e.to_string())
}

fn parse_schedule(text: &str) -> std::result::Result<LrSchedule, String> {
    let parts: Vec<&str> = text.split(':').collect();
    match parts.as_slice() {
        ["constant"] => Ok(LrSchedule::Constant),
        ["exp", factor] => {
            let factor = factor
                .parse::<f64>()
                .map_err(|_| format!("invalid decay factor {factor:?}"))?;
            Ok(LrSchedule::ExponentialDecay { factor })
        }
        ["step", factor, every] => {
            let factor = factor
                .parse::<f64>()
                .map_err(|_| format!("invalid decay factor {factor:?}"))?;
            let every = every
                .parse::<u64>()
                .map_err(|_| format!("invalid interval {every:?}"))?;
            Ok(LrSchedule::StepDecay { factor, every })
        }
        _ => Err(format!(
            "expected constant, exp:FACTOR or step:FACTOR:EVERY, got {text:?}"
        )),
    }
}

fn schedule_text(schedule: LrSchedule) -> String {
    match schedule {
        LrSchedule::Constant => "constant".to_string(),
        LrSchedule::ExponentialDecay { factor } => format!("exp:{factor}"),
        LrSchedule::StepDecay { factor, every } => format!("step:{factor}:{every}"),
    }
}

pub fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::SweepHidden(args) => cmd_sweep_hidden(args),
        Command::SweepLr(args) => cmd_sweep_lr(args),
        Command::Replay(args) => cmd_replay(args),
        Command::VerifyTables => cmd_verify_tables(),
        Command::Case(args) => cmd_case(args),
    }
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let config = TrainingConfig {
        learning_rate: args.lr,
        lr_schedule: args.schedule,
        tolerance_deg: args.tolerance,
        max_generations: args.max_gens,
        input_policy: InputPolicy::FixedRandom,
        denorm_mode: args.mode,
        seed: args.seed,
    };
    let net = Network::init(&NetworkConfig::new(args.hidden, args.seed)?)?;
    println!(
        "train: hidden={} lr={} schedule={} tolerance={}deg mode={} targets=({}, {}) seed={} budget={}",
        args.hidden,
        args.lr,
        schedule_text(args.schedule),
        args.tolerance,
        args.mode,
        args.targets.servo1_deg,
        args.targets.servo2_deg,
        args.seed,
        args.max_gens
    );
    let run = train(net, &config, args.targets)?;
    print!("{}", experiments::paper_table(&run.records));
    if run.converged {
        println!("converged at generation {}", run.generations_used);
    } else {
        let last = run.records.last().expect("at least one generation ran");
        println!(
            "did not converge within {} generations (last errors {:.3}, {:.3})",
            run.generations_used, last.error1_deg, last.error2_deg
        );
    }
    if let Some(path) = &args.out_csv {
        experiments::write_run_csv_file(&run.records, path)?;
        println!("wrote run csv to {}", path.display());
    }
    if let Some(path) = &args.out_model {
        store::save_run(&run, path)?;
        println!("wrote model to {}", path.display());
    }
    Ok(())
}

fn sweep_summary_lines(label: &str, results: &[SweepResult]) -> String {
    let mut out = String::new();
    for r in results {
        let median = match r.median_generations {
            Some(m) => format!("{m}"),
            None => "n/a".to_string(),
        };
        out.push_str(&format!(
            "{label} {}: converged {}/{} ({:.1}%), median generations {}, mean oscillations {:.2}\n",
            r.axis_value,
            r.outcomes.iter().filter(|o| o.converged).count(),
            r.outcomes.len(),
            100.0 * r.convergence_rate,
            median,
            r.mean_oscillations
        ));
    }
    out
}

fn cmd_sweep_hidden(args: SweepHiddenArgs) -> Result<()> {
    let template = CaseSpec {
        name: "sweep-hidden".to_string(),
        hidden_size: 2,
        learning_rate: args.lr,
        lr_schedule: LrSchedule::Constant,
        tolerance_deg: args.tolerance,
        targets: args.targets,
        repeats: args.repeats,
        base_seed: args.seed,
        denorm_mode: args.mode,
        max_generations: args.max_gens,
        input_policy: InputPolicy::FixedRandom,
    };
    println!(
        "sweep-hidden: sizes={:?} lr={} tolerance={}deg mode={} targets=({}, {}) repeats={} base-seed={}",
        args.sizes,
        args.lr,
        args.tolerance,
        args.mode,
        args.targets.servo1_deg,
        args.targets.servo2_deg,
        args.repeats,
        args.seed
    );
    let results = sweep_hidden(&args.sizes, &template)?;
    print!("{}", sweep_summary_lines("hidden", &results));
    if let Some(path) = &args.out_csv {
        experiments::write_sweep_csv_file(&results, path)?;
        println!("wrote sweep csv to {}", path.display());
    }
    Ok(())
}

fn cmd_sweep_lr(args: SweepLrArgs) -> Result<()> {
    let template = CaseSpec {
        name: "sweep-lr".to_string(),
        hidden_size: args.hidden,
        learning_rate: 0.8,
        lr_schedule: LrSchedule::Constant,
        tolerance_deg: args.tolerance,
        targets: args.targets,
        repeats: args.repeats,
        base_seed: args.seed,
        denorm_mode: args.mode,
        max_generations: args.max_gens,
        input_policy: InputPolicy::FixedRandom,
    };
    println!(
        "sweep-lr: rates={:?} hidden={} tolerance={}deg mode={} targets=({}, {}) repeats={} base-seed={}",
        args.rates,
        args.hidden,
        args.tolerance,
        args.mode,
        args.targets.servo1_deg,
        args.targets.servo2_deg,
        args.repeats,
        args.seed
    );
    let results = sweep_lr(&args.rates, &template)?;
    print!("{}", sweep_summary_lines("lr", &results));
    if let Some(path) = &args.out_csv {
        experiments::write_sweep_csv_file(&results, path)?;
        println!("wrote sweep csv to {}", path.display());
    }
    Ok(())
}

fn cmd_replay(args: ReplayArgs) -> Result<()> {
    let rows: Vec<(u64, BodyPose)> = if let Some(path) = &args.source.run_csv {
        let records = experiments::read_run_csv_file(path)?;
        let poses = sim::replay_records(&records, &args.geometry, sim::DEFAULT_REST_POSE);
        records.iter().map(|r| r.generation).zip(poses).collect()
    } else {
        let path = args.source.model.as_ref().expect("clap enforces the group");
        let (net, meta) = store::load(path)?;
        // The training input is not stored; reconstruct the fixed-input
        // policy's draw from the stored seed.
        let input: f64 = ChaCha8Rng::seed_from_u64(meta.seed).random();
        let trace = net.feedforward(input);
        let theta1 = meta.denorm_mode.denormalize(trace.output[0])?;
        let theta2 = meta.denorm_mode.denormalize(trace.output[1])?;
        let mut pose = BodyPose::default();
        (1..=REPLAY_MODEL_CYCLES)
            .map(|cycle| {
                let (next, _) = sim::crawl_cycle(
                    &pose,
                    &args.geometry,
                    theta1,
                    theta2,
                    sim::DEFAULT_REST_POSE.0,
                    sim::DEFAULT_REST_POSE.1,
                );
                pose = next;
                (cycle, pose)
            })
            .collect()
    };
    match &args.out {
        Some(path) => experiments::write_trajectory_csv_file(&rows, path)?,
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            experiments::write_trajectory_csv(&rows, &mut lock)?;
            lock.flush().map_err(|e| Error::io("<stdout>", e))?;
        }
    }
    Ok(())
}

fn cmd_verify_tables() -> Result<()> {
    let report = experiments::verify_reference_tables()?;
    println!(
        "reference tables: {}/{} rows consistent with targets ({}, {})",
        report.rows_consistent,
        report.rows_total,
        report.targets.servo1_deg,
        report.targets.servo2_deg
    );
    Ok(())
}

fn cmd_case(args: CaseArgs) -> Result<()> {
    let spec = CaseSpec::preset(&args.name, args.seed)?;
    println!(
        "case {}: hidden={} lr={} tolerance={}deg mode={} targets=({}, {}) seed={} budget={}",
        spec.name,
        spec.hidden_size,
        spec.learning_rate,
        spec.tolerance_deg,
        spec.denorm_mode,
        spec.targets.servo1_deg,
        spec.targets.servo2_deg,
        args.seed,
        spec.max_generations
    );
    let result = run_case(&spec)?;
    print!("{}", result.table);
    match &result.runs[0] {
        RepeatRun::Completed(run) if run.converged => {
            println!("converged at generation {}", run.generations_used);
        }
        RepeatRun::Completed(run) => {
            println!(
                "did not converge within {} generations",
                run.generations_used
            );
        }
        RepeatRun::Diverged {
            generation, what, ..
        } => {
            println!("diverged at generation {generation}: {what}");
        }
    }
    if let Some(path) = &args.out_csv {
        experiments::write_run_csv_file(result.runs[0].records(), path)?;
        println!("wrote run csv to {}", path.display());
    }
    if let Some(path) = &args.out_model {
        match &result.runs[0] {
            RepeatRun::Completed(run) => {
                store::save_run(run, path)?;
                println!("wrote model to {}", path.display());
            }
            RepeatRun::Diverged { .. } => {
                return Err(Error::NonFinite(
                    "cannot save a diverged run's network".into(),
                ));
            }
        }
    }
    Ok(())
}
