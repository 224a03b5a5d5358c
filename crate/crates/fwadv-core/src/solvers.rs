//! Attack solvers sharing one step-loop skeleton: momentum Frank-Wolfe in
//! white-box and black-box form, plus the FGSM / PGD / MI-FGSM sign-step
//! baselines and a minimal NES-style black-box baseline.
//!
//! Frank-Wolfe iterates are built as convex combinations of the current
//! point and an LMO vertex, so they stay inside the constraint ball without
//! any projection; the ambient box is enforced by a clip after each full
//! update. The sign-step baselines need an explicit projection each step.

use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gradest::{grad_est_with_rng, EstimatorConfig, EstimatorError};
use crate::lincon::{sign, DenseVector, LinconError, LpBallConstraint, NormOrder};
use crate::oracles::{GradientOracle, OracleError, ValueOracle};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("non-finite gradient at iteration {iteration}")]
    NonFiniteGradient {
        iteration: usize,
        partial: Box<AttackRecord>,
    },
    #[error("gradient estimation failed at iteration {iteration}")]
    EstimationFailure {
        iteration: usize,
        partial: Box<AttackRecord>,
    },
    #[error("invalid attack config: {0}")]
    BadConfig(&'static str),
    #[error(transparent)]
    Lincon(#[from] LinconError),
}

/// Step-size schedule for the solvers' update loops.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepSchedule {
    /// gamma_t = gamma for all t.
    Constant(f64),
    /// gamma_t = c / sqrt(t + 1) with t zero-indexed.
    InvSqrt(f64),
    /// Constant step from the convergence analysis, computed from the
    /// smoothness constant, the L2 diameter of the feasible set, and
    /// f(x_0) - f*. White-box runs use sqrt(2 gap / (C_b L D^2 T)); the
    /// black-box variant drops the factor 2. Intended for test landscapes,
    /// where f* is known; attacks against models do not know f*.
    Theory {
        smoothness: f64,
        diameter: f64,
        initial_gap: f64,
    },
}

impl StepSchedule {
    fn validate(&self) -> Result<(), SolverError> {
        match *self {
            StepSchedule::Constant(g) if g > 0.0 && g.is_finite() => Ok(()),
            StepSchedule::InvSqrt(c) if c > 0.0 && c.is_finite() => Ok(()),
            StepSchedule::Theory {
                smoothness,
                diameter,
                initial_gap,
            } if smoothness > 0.0 && diameter > 0.0 && initial_gap > 0.0 => Ok(()),
            StepSchedule::Constant(_) => Err(SolverError::BadConfig("constant step must be > 0")),
            StepSchedule::InvSqrt(_) => Err(SolverError::BadConfig("inv_sqrt scale must be > 0")),
            StepSchedule::Theory { .. } => Err(SolverError::BadConfig(
                "theory step needs positive smoothness, diameter and initial gap",
            )),
        }
    }

    /// Raw step value; Frank-Wolfe callers clamp to (0, 1].
    fn value(&self, t: usize, total_iters: usize, beta: f64, black_box: bool) -> f64 {
        match *self {
            StepSchedule::Constant(g) => g,
            StepSchedule::InvSqrt(c) => c / ((t + 1) as f64).sqrt(),
            StepSchedule::Theory {
                smoothness,
                diameter,
                initial_gap,
            } => {
                let c_beta = (3.0 - beta) / (1.0 - beta);
                let numerator = if black_box { initial_gap } else { 2.0 * initial_gap };
                (numerator / (c_beta * smoothness * diameter * diameter * total_iters as f64))
                    .sqrt()
            }
        }
    }
}

/// All knobs of the attack loops. `epsilon` and `norm_p` describe the ball
/// the harness builds per example; the solvers themselves consume the
/// constraint object they are given.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackConfig {
    pub max_iters: usize,
    pub step_schedule: StepSchedule,
    pub momentum_beta: f64,
    pub epsilon: f64,
    pub norm_p: NormOrder,
    pub estimator: Option<EstimatorConfig>,
    pub query_budget: Option<u64>,
    pub early_stop_on_success: bool,
    pub target_label: usize,
}

impl AttackConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        if self.max_iters == 0 {
            return Err(SolverError::BadConfig("max_iters must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.momentum_beta) {
            return Err(SolverError::BadConfig("momentum_beta must be in [0, 1)"));
        }
        if !self.epsilon.is_finite() || self.epsilon <= 0.0 {
            return Err(SolverError::BadConfig("epsilon must be positive"));
        }
        self.step_schedule.validate()
    }

    /// White-box defaults for the desk benchmark: constant gamma 0.5,
    /// beta 0.5 (grid-tuned for the bundled MLP), epsilon 0.3 on the
    /// L-infinity ball.
    pub fn white_default(target_label: usize) -> Self {
        Self {
            max_iters: 300,
            step_schedule: StepSchedule::Constant(0.5),
            momentum_beta: 0.5,
            epsilon: 0.3,
            norm_p: NormOrder::Inf,
            estimator: None,
            query_budget: None,
            early_stop_on_success: true,
            target_label,
        }
    }

    /// Black-box defaults for the desk benchmark: gamma_t = 0.8/sqrt(t+1),
    /// beta 0.99, b = 25, delta = 0.01, budget 50,000.
    pub fn black_default(target_label: usize, rng_seed: u64) -> Self {
        Self {
            max_iters: 10_000,
            step_schedule: StepSchedule::InvSqrt(0.8),
            momentum_beta: 0.99,
            epsilon: 0.3,
            norm_p: NormOrder::Inf,
            estimator: Some(EstimatorConfig {
                samples_b: 25,
                probe_delta: 0.01,
                sensing: crate::gradest::Sensing::Sphere,
                rng_seed,
            }),
            query_budget: Some(50_000),
            early_stop_on_success: true,
            target_label,
        }
    }
}

/// Why an attack loop ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Success,
    MaxIters,
    BudgetExhausted,
    /// Set only on the partial record carried by a solver error.
    Failure,
}

/// Per-example attack outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackRecord {
    pub final_point: DenseVector,
    pub success: bool,
    pub iterations_used: usize,
    pub queries_used: u64,
    pub distortion_linf: f64,
    pub distortion_l2: f64,
    pub loss_trace: Vec<f64>,
    pub gap_trace: Option<Vec<f64>>,
    pub stop_reason: StopReason,
}

impl AttackRecord {
    #[allow(clippy::too_many_arguments)]
    fn from_state(
        c: &LpBallConstraint,
        x: DenseVector,
        success: bool,
        iterations_used: usize,
        queries_used: u64,
        loss_trace: Vec<f64>,
        gap_trace: Option<Vec<f64>>,
        stop_reason: StopReason,
    ) -> Self {
        let distortion_linf = x.linf_distance(c.center());
        let distortion_l2 = x.l2_distance(c.center());
        Self {
            final_point: x,
            success,
            iterations_used,
            queries_used,
            distortion_linf,
            distortion_l2,
            loss_trace,
            gap_trace,
            stop_reason,
        }
    }
}

/// Success probe for white-box attacks (free model access).
pub type WhiteSuccessCheck<'a> = dyn FnMut(&DenseVector) -> bool + 'a;

/// Success probe for black-box attacks. The probe may charge the run's
/// query meter, so budget exhaustion surfaces as an error.
pub type BlackSuccessCheck<'a> = dyn FnMut(&DenseVector) -> Result<bool, OracleError> + 'a;

/// Per-iteration view handed to observers: the state after the update at
/// step `t`.
pub struct IterationInfo<'a> {
    pub t: usize,
    /// Iterate after the update (and box clip).
    pub x: &'a DenseVector,
    /// Gradient (white-box) or gradient estimate (black-box) at the
    /// pre-update point.
    pub gradient: &'a DenseVector,
    /// Momentum vector used for the LMO call.
    pub momentum: &'a DenseVector,
    pub gamma: f64,
}

type Observer<'a> = dyn FnMut(&IterationInfo<'_>) + 'a;

/// x + gamma (v - x), exactly v when gamma == 1 so a full step lands on the
/// vertex bit-for-bit.
fn convex_step(x: &DenseVector, v: &DenseVector, gamma: f64) -> DenseVector {
    if gamma >= 1.0 {
        v.clone()
    } else {
        DenseVector::from(
            x.as_slice()
                .iter()
                .zip(v.as_slice())
                .map(|(xi, vi)| xi + gamma * (vi - xi))
                .collect::<Vec<_>>(),
        )
    }
}

/// Momentum Frank-Wolfe white-box attack.
///
/// Starts at the ball center, warm-starts the momentum with the exact
/// gradient, and iterates `m_t = beta m_{t-1} + (1-beta) grad f(x_t)`,
/// `v_t = lmo(m_t)`, `x_{t+1} = x_t + gamma_t (v_t - x_t)`, clipping to the
/// ambient box after each full update. Early-stops on the first successful
/// iterate when configured. The loss and gap traces cover every visited
/// iterate including the final one.
pub fn fw_white(
    f: &dyn GradientOracle,
    c: &LpBallConstraint,
    cfg: &AttackConfig,
    success_check: &mut WhiteSuccessCheck<'_>,
) -> Result<AttackRecord, SolverError> {
    fw_white_observed(f, c, cfg, success_check, &mut |_| {})
}

/// [`fw_white`] with a per-iteration observer for diagnostics.
pub fn fw_white_observed(
    f: &dyn GradientOracle,
    c: &LpBallConstraint,
    cfg: &AttackConfig,
    success_check: &mut WhiteSuccessCheck<'_>,
    observer: &mut Observer<'_>,
) -> Result<AttackRecord, SolverError> {
    cfg.validate()?;
    if cfg.estimator.is_some() {
        return Err(SolverError::BadConfig(
            "fw_white does not take an estimator; use fw_black",
        ));
    }
    let mut x = c.center().clone();
    let mut momentum: Option<DenseVector> = None;
    let mut loss_trace = Vec::new();
    let mut gap_trace = Vec::new();
    let mut iterations_used = 0;
    let mut success = false;
    let mut stop_reason = StopReason::MaxIters;

    for t in 0..cfg.max_iters {
        let (value, grad) = f.eval(&x);
        if !value.is_finite() || !grad.is_finite() {
            let partial = AttackRecord::from_state(
                c,
                x,
                false,
                iterations_used,
                0,
                loss_trace,
                Some(gap_trace),
                StopReason::Failure,
            );
            return Err(SolverError::NonFiniteGradient {
                iteration: t,
                partial: Box::new(partial),
            });
        }
        loss_trace.push(value);
        gap_trace.push(c.fw_gap(&x, &grad)?);

        // m_{-1} = grad f(x_0), so m_0 equals the plain gradient.
        let m = match momentum.take() {
            None => grad.clone(),
            Some(prev) => prev
                .scale(cfg.momentum_beta)
                .axpy(1.0 - cfg.momentum_beta, &grad),
        };
        let v = c.lmo(&m)?;
        let gamma = cfg
            .step_schedule
            .value(t, cfg.max_iters, cfg.momentum_beta, false)
            .min(1.0);
        x = c.box_clip_opt(convex_step(&x, &v, gamma))?;
        iterations_used = t + 1;
        observer(&IterationInfo {
            t,
            x: &x,
            gradient: &grad,
            momentum: &m,
            gamma,
        });
        momentum = Some(m);

        if cfg.early_stop_on_success && success_check(&x) {
            success = true;
            stop_reason = StopReason::Success;
            break;
        }
    }

    if !cfg.early_stop_on_success {
        success = success_check(&x);
        if success {
            stop_reason = StopReason::Success;
        }
    }
    // Close the traces at the final iterate.
    let (value, grad) = f.eval(&x);
    if value.is_finite() && grad.is_finite() {
        loss_trace.push(value);
        gap_trace.push(c.fw_gap(&x, &grad)?);
    }

    Ok(AttackRecord::from_state(
        c,
        x,
        success,
        iterations_used,
        0,
        loss_trace,
        Some(gap_trace),
        stop_reason,
    ))
}

/// Momentum Frank-Wolfe black-box attack driven by the two-point estimator.
///
/// The momentum is warm-started with one extra estimate at the start point,
/// so a full run without early stop consumes exactly `2 b (T + 1)` oracle
/// queries plus whatever the success probes charge. Budget exhaustion at any
/// point ends the run with `stop_reason = BudgetExhausted`. The loss trace
/// holds the mean probe value per iteration, a free estimate of the smoothed
/// loss; no true gap trace is available without gradients.
pub fn fw_black(
    f: &ValueOracle<'_>,
    c: &LpBallConstraint,
    cfg: &AttackConfig,
    success_check: &mut BlackSuccessCheck<'_>,
) -> Result<AttackRecord, SolverError> {
    fw_black_observed(f, c, cfg, success_check, &mut |_| {})
}

/// [`fw_black`] with a per-iteration observer for diagnostics.
pub fn fw_black_observed(
    f: &ValueOracle<'_>,
    c: &LpBallConstraint,
    cfg: &AttackConfig,
    success_check: &mut BlackSuccessCheck<'_>,
    observer: &mut Observer<'_>,
) -> Result<AttackRecord, SolverError> {
    cfg.validate()?;
    let est_cfg = cfg
        .estimator
        .as_ref()
        .ok_or(SolverError::BadConfig("fw_black requires an estimator"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(est_cfg.rng_seed);

    let mut x = c.center().clone();
    let mut loss_trace = Vec::new();
    let mut iterations_used = 0;
    let mut success = false;
    let mut stop_reason = StopReason::MaxIters;

    let finish = |x: DenseVector, success, iterations_used, trace: Vec<f64>, reason| {
        Ok(AttackRecord::from_state(
            c,
            x,
            success,
            iterations_used,
            f.queries_used(),
            trace,
            None,
            reason,
        ))
    };

    // m_{-1} = GRAD_EST(x_0, b, delta).
    let mut momentum = match grad_est_with_rng(est_cfg, f, &x, &mut rng) {
        Ok(est) => est.gradient,
        Err(EstimatorError::Oracle(OracleError::BudgetExhausted { .. })) => {
            return finish(x, false, 0, loss_trace, StopReason::BudgetExhausted);
        }
        Err(_) => {
            let partial = AttackRecord::from_state(
                c,
                x,
                false,
                0,
                f.queries_used(),
                loss_trace,
                None,
                StopReason::Failure,
            );
            return Err(SolverError::EstimationFailure {
                iteration: 0,
                partial: Box::new(partial),
            });
        }
    };

    for t in 0..cfg.max_iters {
        let estimate = match grad_est_with_rng(est_cfg, f, &x, &mut rng) {
            Ok(est) => est,
            Err(EstimatorError::Oracle(OracleError::BudgetExhausted { .. })) => {
                stop_reason = StopReason::BudgetExhausted;
                break;
            }
            Err(_) => {
                let partial = AttackRecord::from_state(
                    c,
                    x,
                    false,
                    iterations_used,
                    f.queries_used(),
                    loss_trace,
                    None,
                    StopReason::Failure,
                );
                return Err(SolverError::EstimationFailure {
                    iteration: t,
                    partial: Box::new(partial),
                });
            }
        };
        loss_trace.push(estimate.mean_value);
        momentum = momentum
            .scale(cfg.momentum_beta)
            .axpy(1.0 - cfg.momentum_beta, &estimate.gradient);
        let v = c.lmo(&momentum)?;
        let gamma = cfg
            .step_schedule
            .value(t, cfg.max_iters, cfg.momentum_beta, true)
            .min(1.0);
        x = c.box_clip_opt(convex_step(&x, &v, gamma))?;
        iterations_used = t + 1;
        observer(&IterationInfo {
            t,
            x: &x,
            gradient: &estimate.gradient,
            momentum: &momentum,
            gamma,
        });

        if cfg.early_stop_on_success {
            match success_check(&x) {
                Ok(true) => {
                    success = true;
                    stop_reason = StopReason::Success;
                    break;
                }
                Ok(false) => {}
                Err(OracleError::BudgetExhausted { .. }) => {
                    stop_reason = StopReason::BudgetExhausted;
                    break;
                }
                Err(OracleError::NonFiniteValue) => {
                    let partial = AttackRecord::from_state(
                        c,
                        x,
                        false,
                        iterations_used,
                        f.queries_used(),
                        loss_trace,
                        None,
                        StopReason::Failure,
                    );
                    return Err(SolverError::EstimationFailure {
                        iteration: t,
                        partial: Box::new(partial),
                    });
                }
            }
        }
    }

    if !cfg.early_stop_on_success && stop_reason == StopReason::MaxIters {
        if let Ok(true) = success_check(&x) {
            success = true;
            stop_reason = StopReason::Success;
        }
    }

    finish(x, success, iterations_used, loss_trace, stop_reason)
}

/// One-step sign attack: `box_clip(x_ori - eps sign(grad f(x_ori)))`.
/// Identical to [`fw_white`] with `T = 1` and `gamma = 1`.
pub fn fgsm(
    f: &dyn GradientOracle,
    c: &LpBallConstraint,
    success_check: &mut WhiteSuccessCheck<'_>,
) -> Result<AttackRecord, SolverError> {
    if c.norm_order() != NormOrder::Inf {
        return Err(SolverError::BadConfig("fgsm requires the L-infinity ball"));
    }
    let x0 = c.center();
    let (value, grad) = f.eval(x0);
    if !value.is_finite() || !grad.is_finite() {
        let partial = AttackRecord::from_state(
            c,
            x0.clone(),
            false,
            0,
            0,
            Vec::new(),
            None,
            StopReason::Failure,
        );
        return Err(SolverError::NonFiniteGradient {
            iteration: 0,
            partial: Box::new(partial),
        });
    }
    let x = c.box_clip_opt(c.lmo(&grad)?)?;
    let success = success_check(&x);
    let final_value = f.value(&x);
    Ok(AttackRecord::from_state(
        c,
        x,
        success,
        1,
        0,
        vec![value, final_value],
        None,
        if success {
            StopReason::Success
        } else {
            StopReason::MaxIters
        },
    ))
}

/// Projected sign descent (normalized steepest descent w.r.t. L-infinity):
/// `x_{t+1} = box_clip(project(x_t - eta sign(grad f(x_t))))`.
pub fn pgd(
    f: &dyn GradientOracle,
    c: &LpBallConstraint,
    cfg: &AttackConfig,
    success_check: &mut WhiteSuccessCheck<'_>,
) -> Result<AttackRecord, SolverError> {
    sign_descent(f, c, cfg, success_check, 0.0)
}

/// MI-FGSM: PGD with an L1-normalized gradient accumulator,
/// `g_t = mu g_{t-1} + grad f(x_t) / ||grad f(x_t)||_1`. A zero gradient
/// skips the normalization and just decays the accumulator.
pub fn mi_fgsm(
    f: &dyn GradientOracle,
    c: &LpBallConstraint,
    cfg: &AttackConfig,
    success_check: &mut WhiteSuccessCheck<'_>,
) -> Result<AttackRecord, SolverError> {
    sign_descent(f, c, cfg, success_check, cfg.momentum_beta)
}

fn sign_descent(
    f: &dyn GradientOracle,
    c: &LpBallConstraint,
    cfg: &AttackConfig,
    success_check: &mut WhiteSuccessCheck<'_>,
    mu: f64,
) -> Result<AttackRecord, SolverError> {
    cfg.validate()?;
    if c.norm_order() != NormOrder::Inf {
        return Err(SolverError::BadConfig(
            "sign-step baselines require the L-infinity ball",
        ));
    }
    let mut x = c.center().clone();
    let mut accum = DenseVector::zeros(c.dim());
    let mut loss_trace = Vec::new();
    let mut gap_trace = Vec::new();
    let mut iterations_used = 0;
    let mut success = false;
    let mut stop_reason = StopReason::MaxIters;

    for t in 0..cfg.max_iters {
        let (value, grad) = f.eval(&x);
        if !value.is_finite() || !grad.is_finite() {
            let partial = AttackRecord::from_state(
                c,
                x,
                false,
                iterations_used,
                0,
                loss_trace,
                Some(gap_trace),
                StopReason::Failure,
            );
            return Err(SolverError::NonFiniteGradient {
                iteration: t,
                partial: Box::new(partial),
            });
        }
        loss_trace.push(value);
        gap_trace.push(c.fw_gap(&x, &grad)?);

        let direction = if mu == 0.0 {
            grad
        } else {
            let l1 = grad.norm_l1();
            accum = if l1 > 0.0 {
                accum.scale(mu).axpy(1.0 / l1, &grad)
            } else {
                accum.scale(mu)
            };
            accum.clone()
        };
        let eta = cfg
            .step_schedule
            .value(t, cfg.max_iters, cfg.momentum_beta, false);
        let stepped = DenseVector::from(
            x.as_slice()
                .iter()
                .zip(direction.as_slice())
                .map(|(xi, gi)| xi - eta * sign(*gi))
                .collect::<Vec<_>>(),
        );
        x = c.box_clip_opt(c.project(&stepped)?)?;
        iterations_used = t + 1;

        if cfg.early_stop_on_success && success_check(&x) {
            success = true;
            stop_reason = StopReason::Success;
            break;
        }
    }

    if !cfg.early_stop_on_success {
        success = success_check(&x);
        if success {
            stop_reason = StopReason::Success;
        }
    }
    let (value, grad) = f.eval(&x);
    if value.is_finite() && grad.is_finite() {
        loss_trace.push(value);
        gap_trace.push(c.fw_gap(&x, &grad)?);
    }

    Ok(AttackRecord::from_state(
        c,
        x,
        success,
        iterations_used,
        0,
        loss_trace,
        Some(gap_trace),
        stop_reason,
    ))
}

/// Minimal NES-style black-box baseline: the two-point estimate feeds plain
/// projected sign steps, with no momentum and no LMO.
pub fn nes_pgd(
    f: &ValueOracle<'_>,
    c: &LpBallConstraint,
    cfg: &AttackConfig,
    success_check: &mut BlackSuccessCheck<'_>,
) -> Result<AttackRecord, SolverError> {
    cfg.validate()?;
    let est_cfg = cfg
        .estimator
        .as_ref()
        .ok_or(SolverError::BadConfig("nes_pgd requires an estimator"))?;
    if c.norm_order() != NormOrder::Inf {
        return Err(SolverError::BadConfig(
            "sign-step baselines require the L-infinity ball",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(est_cfg.rng_seed);
    let mut x = c.center().clone();
    let mut loss_trace = Vec::new();
    let mut iterations_used = 0;
    let mut success = false;
    let mut stop_reason = StopReason::MaxIters;

    for t in 0..cfg.max_iters {
        let estimate = match grad_est_with_rng(est_cfg, f, &x, &mut rng) {
            Ok(est) => est,
            Err(EstimatorError::Oracle(OracleError::BudgetExhausted { .. })) => {
                stop_reason = StopReason::BudgetExhausted;
                break;
            }
            Err(_) => {
                let partial = AttackRecord::from_state(
                    c,
                    x,
                    false,
                    iterations_used,
                    f.queries_used(),
                    loss_trace,
                    None,
                    StopReason::Failure,
                );
                return Err(SolverError::EstimationFailure {
                    iteration: t,
                    partial: Box::new(partial),
                });
            }
        };
        loss_trace.push(estimate.mean_value);
        let eta = cfg
            .step_schedule
            .value(t, cfg.max_iters, cfg.momentum_beta, true);
        let stepped = DenseVector::from(
            x.as_slice()
                .iter()
                .zip(estimate.gradient.as_slice())
                .map(|(xi, gi)| xi - eta * sign(*gi))
                .collect::<Vec<_>>(),
        );
        x = c.box_clip_opt(c.project(&stepped)?)?;
        iterations_used = t + 1;

        if cfg.early_stop_on_success {
            match success_check(&x) {
                Ok(true) => {
                    success = true;
                    stop_reason = StopReason::Success;
                    break;
                }
                Ok(false) => {}
                Err(_) => {
                    stop_reason = StopReason::BudgetExhausted;
                    break;
                }
            }
        }
    }

    Ok(AttackRecord::from_state(
        c,
        x,
        success,
        iterations_used,
        f.queries_used(),
        loss_trace,
        None,
        stop_reason,
    ))
}

/// L2 diameter of the Lp ball of the given radius in R^d; the box can only
/// shrink the feasible set, so this upper bound is safe for theory steps.
pub fn l2_diameter(radius: f64, p: NormOrder, dim: usize) -> f64 {
    let d = dim as f64;
    match p {
        NormOrder::Inf => 2.0 * radius * d.sqrt(),
        NormOrder::P(p) if p >= 2.0 => 2.0 * radius * d.powf(0.5 - 1.0 / p),
        NormOrder::P(_) => 2.0 * radius,
    }
}
