//! `fwadv` command line: train the desk classifier, run white-box and
//! black-box attack experiments, reproduce the benchmark tables, and run a
//! fast self-check of the library's numerical invariants.
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime failure.
//! Diagnostics go to stderr; data goes to files or stdout.

mod config;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use fwadv_core::gradest::Sensing;
use fwadv_core::harness::{
    self, AttackerId, ExperimentPlan, ExperimentSpec, SummaryRow, TargetRule,
};
use fwadv_core::lincon::NormOrder;
use fwadv_core::models::{self, mnist, MlpModel, TrainConfig};
use fwadv_core::solvers::{AttackConfig, StepSchedule};

use config::{CliError, FileConfig};

#[derive(Parser)]
#[command(
    name = "fwadv",
    about = "Projection-free adversarial attack benchmark",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the MLP classifier on MNIST and save it as JSON.
    Train(TrainArgs),
    /// Run a white-box attack experiment (fw, fgsm, pgd, mi-fgsm).
    AttackWhite(AttackArgs),
    /// Run a black-box attack experiment (fw-sphere, fw-gaussian, nes-pgd).
    AttackBlack(AttackArgs),
    /// Run the full white + black benchmark and print the report tables.
    Bench(BenchArgs),
    /// Run the numerical invariant self-checks and print a pass/fail table.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Directory with the MNIST IDX files (gzipped archives are inflated).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output path for the model JSON.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Layer sizes, comma separated, input first.
    #[arg(long, default_value = "784,128,64,10")]
    arch: String,
    #[arg(long, default_value_t = 8)]
    epochs: usize,
    #[arg(long, default_value_t = 64)]
    batch: usize,
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    #[arg(long, default_value_t = 0.9)]
    momentum: f64,
    /// Training seed; falls back to FWADV_SEED, then 42.
    #[arg(long, env = "FWADV_SEED")]
    seed: Option<u64>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum WhiteAttacker {
    Fw,
    Fgsm,
    Pgd,
    MiFgsm,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BlackAttacker {
    FwSphere,
    FwGaussian,
    NesPgd,
}

#[derive(Args)]
struct AttackArgs {
    /// Declarative experiment config (TOML); flags override file values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Trained model JSON.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Directory with the MNIST IDX files.
    #[arg(long)]
    data: Option<PathBuf>,
    /// JSON Lines output path for the per-example records.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Summary JSON output path (printed to stdout when unset).
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Success-curve CSV output path (black-box runs).
    #[arg(long)]
    curve: Option<PathBuf>,
    /// White-box attacker (attack-white only).
    #[arg(long, value_enum)]
    attacker: Option<WhiteAttacker>,
    /// Black-box attacker (attack-black only).
    #[arg(long, value_enum)]
    black_attacker: Option<BlackAttacker>,
    /// Perturbation radius.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Ball norm order: a number >= 1 or "inf".
    #[arg(long)]
    p: Option<String>,
    /// Iteration cap.
    #[arg(long)]
    iters: Option<usize>,
    /// Momentum coefficient in [0, 1).
    #[arg(long)]
    beta: Option<f64>,
    /// Step size: constant gamma/eta for white-box, the c of c/sqrt(t+1)
    /// for black-box.
    #[arg(long)]
    step: Option<f64>,
    /// Estimator sample count per iteration (black-box).
    #[arg(long)]
    b: Option<usize>,
    /// Estimator probe radius delta (black-box).
    #[arg(long)]
    delta: Option<f64>,
    /// Sensing distribution (black-box).
    #[arg(long, value_enum)]
    sensing: Option<SensingArg>,
    /// Query budget (black-box).
    #[arg(long)]
    budget: Option<u64>,
    /// Number of examples to attack.
    #[arg(long)]
    n: Option<usize>,
    /// Experiment seed; falls back to FWADV_SEED, then 7.
    #[arg(long, env = "FWADV_SEED")]
    seed: Option<u64>,
    /// Worker pool width.
    #[arg(long)]
    threads: Option<usize>,
    /// Target rule: "random" or "fixed:<class>".
    #[arg(long)]
    targets: Option<String>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SensingArg {
    Sphere,
    Gaussian,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Directory for per-attacker records, summaries, and curves.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, env = "FWADV_SEED")]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, default_value_t = 50_000)]
    budget: u64,
    /// Skip the black-box half (much faster).
    #[arg(long)]
    white_only: bool,
}

#[derive(Args)]
struct VerifyArgs {
    /// Random seed for the sampled checks; falls back to FWADV_SEED.
    #[arg(long, env = "FWADV_SEED")]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => run_train(args),
        Command::AttackWhite(args) => run_attack(args, false),
        Command::AttackBlack(args) => run_attack(args, true),
        Command::Bench(args) => run_bench(args),
        Command::Verify(args) => verify::run(args.seed.unwrap_or(7)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn parse_arch(s: &str) -> Result<Vec<usize>, CliError> {
    let dims: Result<Vec<usize>, _> = s.split(',').map(|t| t.trim().parse::<usize>()).collect();
    dims.map_err(|_| CliError::Config(format!("--arch expects comma-separated sizes, got {s:?}")))
}

fn parse_norm(s: &str) -> Result<NormOrder, CliError> {
    if s.eq_ignore_ascii_case("inf") {
        return Ok(NormOrder::Inf);
    }
    let p: f64 = s
        .parse()
        .map_err(|_| CliError::Config(format!("--p expects a number >= 1 or \"inf\", got {s:?}")))?;
    NormOrder::P(p)
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))
}

fn parse_targets(s: &str) -> Result<TargetRule, CliError> {
    if s == "random" {
        return Ok(TargetRule::Random);
    }
    if let Some(k) = s.strip_prefix("fixed:") {
        let k: usize = k.parse().map_err(|_| {
            CliError::Config(format!("--targets fixed:<class> expects an integer, got {s:?}"))
        })?;
        return Ok(TargetRule::Fixed(k));
    }
    Err(CliError::Config(format!(
        "--targets expects \"random\" or \"fixed:<class>\", got {s:?}"
    )))
}

fn require_dir(path: Option<PathBuf>, flag: &str) -> Result<PathBuf, CliError> {
    let path =
        path.ok_or_else(|| CliError::Config(format!("missing {flag} (dataset directory)")))?;
    if !path.is_dir() {
        return Err(CliError::Config(format!(
            "{flag} path {} is not a directory",
            path.display()
        )));
    }
    Ok(path)
}

fn require_file(path: Option<PathBuf>, flag: &str) -> Result<PathBuf, CliError> {
    let path = path.ok_or_else(|| CliError::Config(format!("missing {flag}")))?;
    if !path.is_file() {
        return Err(CliError::Config(format!(
            "{flag} path {} is not a file",
            path.display()
        )));
    }
    Ok(path)
}

fn run_train(args: TrainArgs) -> Result<(), CliError> {
    let data_dir = require_dir(args.data, "--data")?;
    let out = args
        .out
        .ok_or_else(|| CliError::Config("missing --out (model JSON path)".into()))?;
    let arch = parse_arch(&args.arch)?;
    let cfg = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch,
        learning_rate: args.lr,
        momentum: args.momentum,
        seed: args.seed.unwrap_or(42),
    };
    eprintln!("loading MNIST from {}", data_dir.display());
    let train_data = mnist::load_split(&data_dir, true).map_err(CliError::runtime)?;
    let test_data = mnist::load_split(&data_dir, false).map_err(CliError::runtime)?;
    eprintln!(
        "training {:?} for {} epochs (seed {})",
        arch, cfg.epochs, cfg.seed
    );
    let model = models::train(&train_data, &arch, &cfg).map_err(CliError::runtime)?;
    let acc = model.accuracy(&test_data);
    eprintln!("test accuracy: {acc:.4}");
    model.save_json(&out).map_err(CliError::runtime)?;
    println!("{}", out.display());
    Ok(())
}

/// Flag values override file values; anything still unset falls to the
/// benchmark defaults.
fn build_plan(args: &AttackArgs, black: bool) -> Result<(ExperimentPlan, FileConfig), CliError> {
    let file = match &args.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let seed = args.seed.or(file.seed).unwrap_or(7);
    let attacker = if black {
        match args.black_attacker.unwrap_or(BlackAttacker::FwSphere) {
            BlackAttacker::FwSphere => AttackerId::FwBlackSphere,
            BlackAttacker::FwGaussian => AttackerId::FwBlackGaussian,
            BlackAttacker::NesPgd => AttackerId::NesPgd,
        }
    } else {
        match args.attacker.unwrap_or(WhiteAttacker::Fw) {
            WhiteAttacker::Fw => AttackerId::FwWhite,
            WhiteAttacker::Fgsm => AttackerId::Fgsm,
            WhiteAttacker::Pgd => AttackerId::Pgd,
            WhiteAttacker::MiFgsm => AttackerId::MiFgsm,
        }
    };

    let mut attack = if black {
        AttackConfig::black_default(0, seed)
    } else {
        AttackConfig::white_default(0)
    };
    // Baselines keep their own tuned defaults.
    match attacker {
        AttackerId::Pgd => {
            attack.step_schedule = StepSchedule::Constant(0.1);
            attack.momentum_beta = 0.0;
        }
        AttackerId::MiFgsm => {
            attack.step_schedule = StepSchedule::Constant(0.1);
            attack.momentum_beta = 0.9;
        }
        AttackerId::NesPgd => {
            attack.step_schedule = StepSchedule::Constant(0.02);
            attack.momentum_beta = 0.0;
        }
        _ => {}
    }

    if let Some(eps) = args.epsilon.or(file.epsilon) {
        attack.epsilon = eps;
    }
    if let Some(p) = args.p.clone().or(file.p.clone()) {
        attack.norm_p = parse_norm(&p)?;
    }
    if let Some(iters) = args.iters.or(file.iters) {
        attack.max_iters = iters;
    }
    if let Some(beta) = args.beta.or(file.beta) {
        attack.momentum_beta = beta;
    }
    if let Some(step) = args.step.or(file.step) {
        attack.step_schedule = if black && attacker != AttackerId::NesPgd {
            StepSchedule::InvSqrt(step)
        } else {
            StepSchedule::Constant(step)
        };
    }
    if black {
        if let Some(budget) = args.budget.or(file.budget) {
            attack.query_budget = Some(budget);
        }
        let est = attack
            .estimator
            .as_mut()
            .expect("black defaults carry an estimator");
        if let Some(b) = args.b.or(file.b) {
            est.samples_b = b;
        }
        if let Some(delta) = args.delta.or(file.delta) {
            est.probe_delta = delta;
        }
        if let Some(sensing) = args.sensing {
            est.sensing = match sensing {
                SensingArg::Sphere => Sensing::Sphere,
                SensingArg::Gaussian => Sensing::Gaussian,
            };
        } else if let Some(s) = &file.sensing {
            est.sensing = match s.as_str() {
                "sphere" => Sensing::Sphere,
                "gaussian" => Sensing::Gaussian,
                other => {
                    return Err(CliError::Config(format!(
                        "sensing must be \"sphere\" or \"gaussian\", got {other:?}"
                    )))
                }
            };
        }
    }
    attack
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))?;

    let targets = match args.targets.clone().or(file.targets.clone()) {
        Some(s) => parse_targets(&s)?,
        None => TargetRule::Random,
    };
    let plan = ExperimentPlan {
        attacker,
        attack,
        n_examples: args.n.or(file.n).unwrap_or(200),
        rng_seed: seed,
        targets,
        threads: args.threads.or(file.threads),
    };
    Ok((plan, file))
}

fn run_attack(args: AttackArgs, black: bool) -> Result<(), CliError> {
    if !black && args.black_attacker.is_some() {
        return Err(CliError::Config(
            "--black-attacker belongs to attack-black".into(),
        ));
    }
    if black && args.attacker.is_some() {
        return Err(CliError::Config(
            "--attacker belongs to attack-white".into(),
        ));
    }
    let (plan, file) = build_plan(&args, black)?;
    let model_path = require_file(args.model.clone().or(file.model.clone()), "--model")?;
    let data_dir = require_dir(args.data.clone().or(file.data.clone()), "--data")?;
    let spec = ExperimentSpec {
        model_path,
        data_dir,
        plan,
        records_out: args.out.clone().or(file.out.clone()),
        summary_out: args.summary.clone(),
        curve_out: args.curve.clone(),
        curve_grid: None,
    };
    eprintln!(
        "attacking {} examples with {} (seed {})",
        spec.plan.n_examples,
        spec.plan.attacker.name(),
        spec.plan.rng_seed
    );
    let (_, summary) = harness::run_experiment(&spec).map_err(CliError::runtime)?;
    if args.summary.is_none() {
        println!(
            "{}",
            serde_json::to_string_pretty(&summary).map_err(CliError::runtime)?
        );
    }
    Ok(())
}

fn print_table(rows: &[SummaryRow]) {
    println!(
        "{:<18} {:>6} {:>8} {:>8} {:>10} {:>12} {:>12} {:>9}",
        "attacker", "ASR%", "iters", "linf", "l2", "queries", "queries(s)", "ms"
    );
    for r in rows {
        println!(
            "{:<18} {:>6.1} {:>8.2} {:>8.4} {:>10.4} {:>12.1} {:>12.1} {:>9.2}",
            r.attacker,
            100.0 * r.success_rate,
            r.mean_iterations_success,
            r.mean_distortion_linf_success,
            r.mean_distortion_l2_success,
            r.mean_queries_all,
            r.mean_queries_success,
            r.mean_wall_time_ms,
        );
    }
}

fn run_bench(args: BenchArgs) -> Result<(), CliError> {
    let model_path = require_file(args.model, "--model")?;
    let data_dir = require_dir(args.data, "--data")?;
    let out_dir = args
        .out_dir
        .ok_or_else(|| CliError::Config("missing --out-dir".into()))?;
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", out_dir.display())))?;
    let seed = args.seed.unwrap_or(7);

    let model = MlpModel::load_json(&model_path).map_err(CliError::runtime)?;
    let data = mnist::load_split(&data_dir, false).map_err(CliError::runtime)?;

    let mut rows = Vec::new();
    let attackers: Vec<AttackerId> = if args.white_only {
        vec![
            AttackerId::Fgsm,
            AttackerId::Pgd,
            AttackerId::MiFgsm,
            AttackerId::FwWhite,
        ]
    } else {
        vec![
            AttackerId::Fgsm,
            AttackerId::Pgd,
            AttackerId::MiFgsm,
            AttackerId::FwWhite,
            AttackerId::NesPgd,
            AttackerId::FwBlackSphere,
            AttackerId::FwBlackGaussian,
        ]
    };
    for attacker in attackers {
        let mut attack = if attacker.is_black_box() {
            let mut a = AttackConfig::black_default(0, seed);
            a.query_budget = Some(args.budget);
            a
        } else {
            AttackConfig::white_default(0)
        };
        match attacker {
            AttackerId::Pgd => {
                attack.step_schedule = StepSchedule::Constant(0.1);
                attack.momentum_beta = 0.0;
            }
            AttackerId::MiFgsm => {
                attack.step_schedule = StepSchedule::Constant(0.1);
                attack.momentum_beta = 0.9;
            }
            AttackerId::NesPgd => {
                attack.step_schedule = StepSchedule::Constant(0.02);
                attack.momentum_beta = 0.0;
            }
            _ => {}
        }
        let plan = ExperimentPlan {
            attacker,
            attack,
            n_examples: args.n,
            rng_seed: seed,
            targets: TargetRule::Random,
            threads: args.threads,
        };
        eprintln!("bench: running {}", attacker.name());
        let (records, summary) =
            harness::run_experiment_loaded(&model, &data, &plan).map_err(CliError::runtime)?;
        let stem = out_dir.join(attacker.name());
        harness::write_records_jsonl(&stem.with_extension("jsonl"), &records)
            .map_err(CliError::runtime)?;
        harness::write_summary_json(&stem.with_extension("summary.json"), &summary)
            .map_err(CliError::runtime)?;
        if attacker.is_black_box() {
            let grid: Vec<u64> = (0..=100).map(|i| i * args.budget / 100).collect();
            harness::write_curve_csv(
                &stem.with_extension("curve.csv"),
                &harness::success_curve(&records, &grid),
            )
            .map_err(CliError::runtime)?;
        }
        rows.push(summary);
    }
    print_table(&rows);
    Ok(())
}
