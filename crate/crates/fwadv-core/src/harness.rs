//! Experiment orchestration: sample selection, target assignment, batched
//! attack execution on a worker pool, aggregation into report rows, and
//! convergence diagnostics on synthetic landscapes.
//!
//! Output formats: one JSON object per [`AttackRecord`] in a JSON Lines
//! file, a single JSON object per [`SummaryRow`], and a `queries,success`
//! CSV for success curves. Record output is a pure function of the plan,
//! model, and dataset; wall time lives only in the summary.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lincon::{DenseVector, LinconError, LpBallConstraint};
use crate::models::{mnist, AttackLoss, Dataset, MlpModel, ModelError};
use crate::oracles::TestLandscape;
use crate::oracles::{GradientOracle, QueryMeter, ValueOracle};
use crate::solvers::{self, AttackConfig, AttackRecord, SolverError, StepSchedule};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Lincon(#[from] LinconError),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("not enough attackable examples: wanted {wanted}, found {found}")]
    NotEnoughExamples { wanted: usize, found: usize },
    #[error("landscape is missing the constants needed for diagnostics")]
    MissingConstants,
}

/// Which attack drives the experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackerId {
    FwWhite,
    FwBlackSphere,
    FwBlackGaussian,
    Fgsm,
    Pgd,
    MiFgsm,
    NesPgd,
}

impl AttackerId {
    pub fn is_black_box(self) -> bool {
        matches!(
            self,
            AttackerId::FwBlackSphere | AttackerId::FwBlackGaussian | AttackerId::NesPgd
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            AttackerId::FwWhite => "fw-white",
            AttackerId::FwBlackSphere => "fw-black-sphere",
            AttackerId::FwBlackGaussian => "fw-black-gaussian",
            AttackerId::Fgsm => "fgsm",
            AttackerId::Pgd => "pgd",
            AttackerId::MiFgsm => "mi-fgsm",
            AttackerId::NesPgd => "nes-pgd",
        }
    }
}

/// Target-class assignment rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TargetRule {
    /// Uniform over the wrong classes, per example.
    Random,
    /// Always class k; examples whose true label is k are skipped.
    Fixed(usize),
}

/// A fully specified batch experiment over an in-memory model and dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub attacker: AttackerId,
    pub attack: AttackConfig,
    pub n_examples: usize,
    pub rng_seed: u64,
    pub targets: TargetRule,
    /// Worker-pool width; None uses the global pool.
    pub threads: Option<usize>,
}

/// One selected example: dataset index, true label, assigned target.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SelectedExample {
    pub index: usize,
    pub label: usize,
    pub target: usize,
}

/// Aggregate report row. Iteration and distortion means are over successful
/// attacks only; query means are reported both over all examples and over
/// successes only.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryRow {
    pub attacker: String,
    pub n_examples: usize,
    pub n_success: usize,
    pub success_rate: f64,
    pub mean_iterations_success: f64,
    pub mean_distortion_linf_success: f64,
    pub mean_distortion_l2_success: f64,
    pub mean_queries_all: f64,
    pub mean_queries_success: f64,
    pub mean_wall_time_ms: f64,
    /// Set when the plan selected zero examples; all means are 0, not NaN.
    pub empty: bool,
}

/// Picks `n` examples the model classifies correctly (seeded shuffle order)
/// and assigns each a target class per the rule.
pub fn select_examples(
    model: &MlpModel,
    data: &Dataset,
    n: usize,
    seed: u64,
    rule: TargetRule,
) -> Result<Vec<SelectedExample>, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let mut picked = Vec::with_capacity(n);
    for index in order {
        if picked.len() == n {
            break;
        }
        let label = data.label(index) as usize;
        if let TargetRule::Fixed(k) = rule {
            if label == k {
                continue;
            }
        }
        let x = DenseVector::new(data.image(index).to_vec())?;
        if model.predict(&x)? != label {
            continue;
        }
        let target = match rule {
            TargetRule::Fixed(k) => k,
            TargetRule::Random => {
                let mut t = rng.random_range(0..model.num_classes());
                while t == label {
                    t = rng.random_range(0..model.num_classes());
                }
                t
            }
        };
        picked.push(SelectedExample {
            index,
            label,
            target,
        });
    }
    if picked.len() < n {
        return Err(HarnessError::NotEnoughExamples {
            wanted: n,
            found: picked.len(),
        });
    }
    Ok(picked)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Per-example stream seed, independent of worker scheduling.
fn example_seed(run_seed: u64, position: usize) -> u64 {
    splitmix64(run_seed ^ splitmix64(position as u64 + 1))
}

/// Runs one attack on one example; solver failures come back as records
/// with `stop_reason = Failure` rather than aborting the batch.
fn attack_one(
    model: &MlpModel,
    data: &Dataset,
    plan: &ExperimentPlan,
    position: usize,
    example: SelectedExample,
) -> Result<AttackRecord, HarnessError> {
    let x_ori = DenseVector::new(data.image(example.index).to_vec())?;
    let constraint = LpBallConstraint::new(x_ori, plan.attack.epsilon, plan.attack.norm_p)?;
    let mut cfg = plan.attack.clone();
    cfg.target_label = example.target;
    let loss = AttackLoss::new(model, example.target);
    let target = example.target;

    let unwrap_failure = |res: Result<AttackRecord, SolverError>| match res {
        Ok(rec) => Ok(rec),
        Err(SolverError::NonFiniteGradient { partial, .. })
        | Err(SolverError::EstimationFailure { partial, .. }) => Ok(*partial),
        Err(e) => Err(HarnessError::from(e)),
    };

    if plan.attacker.is_black_box() {
        if let Some(est) = cfg.estimator.as_mut() {
            est.rng_seed = example_seed(plan.rng_seed, position);
            if plan.attacker == AttackerId::FwBlackGaussian {
                est.sensing = crate::gradest::Sensing::Gaussian;
            }
        }
        let meter = QueryMeter::new(cfg.query_budget);
        let oracle = ValueOracle::new(meter.clone(), |p: &DenseVector| loss.value(p));
        let probe_meter = meter.clone();
        let mut check = move |p: &DenseVector| {
            // One query per success probe: the same forward pass that
            // yields the loss also yields the prediction.
            probe_meter.charge(1)?;
            Ok(model.predict(p).expect("probe dim") == target)
        };
        let res = match plan.attacker {
            AttackerId::NesPgd => solvers::nes_pgd(&oracle, &constraint, &cfg, &mut check),
            _ => solvers::fw_black(&oracle, &constraint, &cfg, &mut check),
        };
        unwrap_failure(res)
    } else {
        let mut check = |p: &DenseVector| model.predict(p).expect("probe dim") == target;
        let res = match plan.attacker {
            AttackerId::Fgsm => solvers::fgsm(&loss, &constraint, &mut check),
            AttackerId::Pgd => solvers::pgd(&loss, &constraint, &cfg, &mut check),
            AttackerId::MiFgsm => solvers::mi_fgsm(&loss, &constraint, &cfg, &mut check),
            _ => solvers::fw_white(&loss, &constraint, &cfg, &mut check),
        };
        unwrap_failure(res)
    }
}

/// Runs the plan over the dataset: selection, parallel attacks, and
/// aggregation. Records come back ordered by selection position, so output
/// bytes are independent of worker scheduling.
pub fn run_experiment_loaded(
    model: &MlpModel,
    data: &Dataset,
    plan: &ExperimentPlan,
) -> Result<(Vec<AttackRecord>, SummaryRow), HarnessError> {
    plan.attack.validate().map_err(HarnessError::from)?;
    let selected = select_examples(model, data, plan.n_examples, plan.rng_seed, plan.targets)?;

    let run_all = || -> Result<Vec<(AttackRecord, f64)>, HarnessError> {
        selected
            .par_iter()
            .enumerate()
            .map(|(position, example)| {
                let start = Instant::now();
                let rec = attack_one(model, data, plan, position, *example)?;
                Ok((rec, start.elapsed().as_secs_f64() * 1e3))
            })
            .collect()
    };

    let outcomes = match plan.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .expect("worker pool")
            .install(run_all),
        None => run_all(),
    }?;

    let records: Vec<AttackRecord> = outcomes.iter().map(|(r, _)| r.clone()).collect();
    let mean_ms = if outcomes.is_empty() {
        0.0
    } else {
        outcomes.iter().map(|(_, ms)| ms).sum::<f64>() / outcomes.len() as f64
    };
    let summary = summarize(plan.attacker.name(), &records, mean_ms);
    Ok((records, summary))
}

/// Aggregates records into a [`SummaryRow`].
pub fn summarize(attacker: &str, records: &[AttackRecord], mean_wall_time_ms: f64) -> SummaryRow {
    let n = records.len();
    if n == 0 {
        return SummaryRow {
            attacker: attacker.to_string(),
            n_examples: 0,
            n_success: 0,
            success_rate: 0.0,
            mean_iterations_success: 0.0,
            mean_distortion_linf_success: 0.0,
            mean_distortion_l2_success: 0.0,
            mean_queries_all: 0.0,
            mean_queries_success: 0.0,
            mean_wall_time_ms: 0.0,
            empty: true,
        };
    }
    let succ: Vec<&AttackRecord> = records.iter().filter(|r| r.success).collect();
    let ns = succ.len();
    let mean_over = |f: &dyn Fn(&AttackRecord) -> f64, set: &[&AttackRecord]| -> f64 {
        if set.is_empty() {
            0.0
        } else {
            set.iter().map(|r| f(r)).sum::<f64>() / set.len() as f64
        }
    };
    let all: Vec<&AttackRecord> = records.iter().collect();
    SummaryRow {
        attacker: attacker.to_string(),
        n_examples: n,
        n_success: ns,
        success_rate: ns as f64 / n as f64,
        mean_iterations_success: mean_over(&|r| r.iterations_used as f64, &succ),
        mean_distortion_linf_success: mean_over(&|r| r.distortion_linf, &succ),
        mean_distortion_l2_success: mean_over(&|r| r.distortion_l2, &succ),
        mean_queries_all: mean_over(&|r| r.queries_used as f64, &all),
        mean_queries_success: mean_over(&|r| r.queries_used as f64, &succ),
        mean_wall_time_ms,
        empty: false,
    }
}

/// Cumulative success fraction at each query budget in the grid.
/// Nondecreasing; at any point past the true budget it equals the final
/// success rate.
pub fn success_curve(records: &[AttackRecord], query_grid: &[u64]) -> Vec<(u64, f64)> {
    let n = records.len().max(1);
    query_grid
        .iter()
        .map(|q| {
            let hits = records
                .iter()
                .filter(|r| r.success && r.queries_used <= *q)
                .count();
            (*q, hits as f64 / n as f64)
        })
        .collect()
}

/// Per-T outcome of a rate diagnostic run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RatePoint {
    pub t: usize,
    pub min_gap: f64,
    pub bound_rhs: f64,
    pub bound_ok: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateDiagnostics {
    /// Least-squares slope of log(min gap) against log T.
    pub slope: f64,
    pub points: Vec<RatePoint>,
}

/// Runs white-box Frank-Wolfe with the theory step size recomputed per T
/// and checks the min-gap bound `sqrt(2 C_b L D^2 (f(x0)-f*) / T)` at each
/// grid point. The landscape must expose its smoothness constant and an
/// interior minimizer for the given ball.
pub fn rate_diagnostics(
    landscape: &TestLandscape,
    constraint: &LpBallConstraint,
    beta: f64,
    t_grid: &[usize],
) -> Result<RateDiagnostics, HarnessError> {
    let smoothness = landscape
        .smoothness()
        .ok_or(HarnessError::MissingConstants)?;
    let minimizer = landscape
        .minimizer()
        .ok_or(HarnessError::MissingConstants)?;
    let f_star = landscape.value(&minimizer);
    let initial_gap = landscape.value(constraint.center()) - f_star;
    if initial_gap <= 0.0 {
        return Err(HarnessError::MissingConstants);
    }
    let diameter = solvers::l2_diameter(
        constraint.radius(),
        constraint.norm_order(),
        constraint.dim(),
    );
    let c_beta = (3.0 - beta) / (1.0 - beta);
    let mut points = Vec::with_capacity(t_grid.len());
    for &t_total in t_grid {
        let cfg = AttackConfig {
            max_iters: t_total,
            step_schedule: StepSchedule::Theory {
                smoothness,
                diameter,
                initial_gap,
            },
            momentum_beta: beta,
            epsilon: constraint.radius(),
            norm_p: constraint.norm_order(),
            estimator: None,
            query_budget: None,
            early_stop_on_success: false,
            target_label: 0,
        };
        let mut never = |_: &DenseVector| false;
        let rec = solvers::fw_white(landscape, constraint, &cfg, &mut never)?;
        let gaps = rec.gap_trace.expect("white-box runs trace gaps");
        // min over x_1..x_T; the trace also holds x_0 at the front.
        let min_gap = gaps[1..].iter().cloned().fold(f64::INFINITY, f64::min);
        let bound_rhs =
            (2.0 * c_beta * smoothness * diameter * diameter * initial_gap / t_total as f64)
                .sqrt();
        points.push(RatePoint {
            t: t_total,
            min_gap,
            bound_rhs,
            bound_ok: min_gap <= bound_rhs,
        });
    }
    let slope = log_log_slope(
        &points
            .iter()
            .map(|p| (p.t as f64, p.min_gap))
            .collect::<Vec<_>>(),
    );
    Ok(RateDiagnostics { slope, points })
}

/// Least-squares slope of ln y against ln x.
pub fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for (x, y) in points {
        let lx = x.ln();
        let ly = y.max(f64::MIN_POSITIVE).ln();
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// One JSON object per record, newline-delimited, stable field order.
pub fn write_records_jsonl(path: &Path, records: &[AttackRecord]) -> Result<(), HarnessError> {
    let mut out = Vec::new();
    for rec in records {
        serde_json::to_writer(&mut out, rec)?;
        out.push(b'\n');
    }
    std::fs::write(path, out).map_err(io_err(path))
}

pub fn write_summary_json(path: &Path, summary: &SummaryRow) -> Result<(), HarnessError> {
    let mut out = serde_json::to_vec_pretty(summary)?;
    out.push(b'\n');
    std::fs::write(path, out).map_err(io_err(path))
}

/// `queries,success_rate` CSV.
pub fn write_curve_csv(path: &Path, curve: &[(u64, f64)]) -> Result<(), HarnessError> {
    let mut out = String::from("queries,success_rate\n");
    for (q, s) in curve {
        out.push_str(&format!("{q},{s}\n"));
    }
    std::fs::write(path, out).map_err(io_err(path))
}

/// Path-level experiment description: where the model, data, and outputs
/// live. `run_experiment` loads everything, runs the plan, and writes the
/// configured outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub model_path: PathBuf,
    pub data_dir: PathBuf,
    pub plan: ExperimentPlan,
    pub records_out: Option<PathBuf>,
    pub summary_out: Option<PathBuf>,
    pub curve_out: Option<PathBuf>,
    /// Query grid for the curve output; defaults to 101 points up to the
    /// budget when unset.
    pub curve_grid: Option<Vec<u64>>,
}

impl ExperimentSpec {
    pub fn default_grid(&self) -> Vec<u64> {
        let budget = self.plan.attack.query_budget.unwrap_or(50_000);
        (0..=100).map(|i| i * budget / 100).collect()
    }
}

pub fn run_experiment(
    spec: &ExperimentSpec,
) -> Result<(Vec<AttackRecord>, SummaryRow), HarnessError> {
    let model = MlpModel::load_json(&spec.model_path)?;
    let data = mnist::load_split(&spec.data_dir, false).map_err(ModelError::from)?;
    let (records, summary) = run_experiment_loaded(&model, &data, &spec.plan)?;
    if let Some(path) = &spec.records_out {
        write_records_jsonl(path, &records)?;
    }
    if let Some(path) = &spec.summary_out {
        write_summary_json(path, &summary)?;
    }
    if let Some(path) = &spec.curve_out {
        let grid = spec.curve_grid.clone().unwrap_or_else(|| spec.default_grid());
        write_curve_csv(path, &success_curve(&records, &grid))?;
    }
    Ok((records, summary))
}
