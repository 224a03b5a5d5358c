//! Fast self-check of the library's numerical invariants: LMO optimality
//! and feasibility, gap identities, gradient checks, estimator moments,
//! the momentum deviation bound, and the min-gap rate bound. Prints one
//! pass/fail line per check; any failure exits with code 2.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fwadv_core::gradest::{grad_est, EstimatorConfig, Sensing};
use fwadv_core::harness::rate_diagnostics;
use fwadv_core::lincon::{DenseVector, LpBallConstraint, NormOrder};
use fwadv_core::models::MlpModel;
use fwadv_core::oracles::{wrap_counting, GradientOracle, QueryMeter, TestLandscape, ValueOracle};
use fwadv_core::solvers::{self, l2_diameter, AttackConfig, StepSchedule};

use crate::config::CliError;

type Check = (&'static str, fn(u64) -> Result<(), String>);

pub fn run(seed: u64) -> Result<(), CliError> {
    let checks: Vec<Check> = vec![
        ("lmo-optimality", lmo_optimality),
        ("lmo-feasibility", lmo_feasibility),
        ("fw-gap-identity", fw_gap_identity),
        ("fgsm-special-case", fgsm_special_case),
        ("backprop-gradcheck", backprop_gradcheck),
        ("estimator-determinism", estimator_determinism),
        ("estimator-mean", estimator_mean),
        ("momentum-bound", momentum_bound),
        ("rate-slope", rate_slope),
        ("iterate-feasibility", iterate_feasibility),
    ];
    let mut failures = 0;
    for (name, check) in checks {
        match check(seed) {
            Ok(()) => println!("PASS {name}"),
            Err(msg) => {
                failures += 1;
                println!("FAIL {name}: {msg}");
            }
        }
    }
    if failures > 0 {
        Err(CliError::Runtime(format!("{failures} check(s) failed")))
    } else {
        Ok(())
    }
}

fn random_vec(rng: &mut ChaCha8Rng, d: usize, lo: f64, hi: f64) -> DenseVector {
    DenseVector::from((0..d).map(|_| rng.random_range(lo..hi)).collect::<Vec<_>>())
}

fn feasible_point(c: &LpBallConstraint, rng: &mut ChaCha8Rng) -> DenseVector {
    let w = random_vec(rng, c.dim(), -1.0, 1.0);
    let norm = w.norm_p(c.norm_order());
    if norm == 0.0 {
        return c.center().clone();
    }
    let t: f64 = rng.random_range(0.0..1.0);
    c.center().axpy(t * c.radius() / norm, &w)
}

fn lmo_optimality(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for p in [
        NormOrder::P(1.0),
        NormOrder::P(1.5),
        NormOrder::P(2.0),
        NormOrder::P(3.0),
        NormOrder::Inf,
    ] {
        for _ in 0..2000 {
            let d = rng.random_range(1..9);
            let c = LpBallConstraint::without_box(
                random_vec(&mut rng, d, -1.0, 1.0),
                rng.random_range(0.1..2.0),
                p,
            )
            .map_err(|e| e.to_string())?;
            let m = random_vec(&mut rng, d, -1.0, 1.0);
            let v = c.lmo(&m).map_err(|e| e.to_string())?;
            let x = feasible_point(&c, &mut rng);
            if v.dot(&m) > x.dot(&m) + 1e-9 {
                return Err(format!("sampled point beats LMO for p={p:?}"));
            }
        }
    }
    Ok(())
}

fn lmo_feasibility(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
    for p in [
        NormOrder::P(1.0),
        NormOrder::P(1.5),
        NormOrder::P(2.0),
        NormOrder::P(3.0),
        NormOrder::Inf,
    ] {
        for _ in 0..2000 {
            let d = rng.random_range(1..9);
            let radius = rng.random_range(0.1..2.0);
            let c = LpBallConstraint::without_box(random_vec(&mut rng, d, -1.0, 1.0), radius, p)
                .map_err(|e| e.to_string())?;
            let v = c.lmo(&random_vec(&mut rng, d, -1.0, 1.0)).map_err(|e| e.to_string())?;
            let norm = v.sub(c.center()).norm_p(p);
            if norm > radius + 1e-9 {
                return Err(format!("LMO point left the ball: {norm} > {radius} (p={p:?})"));
            }
        }
    }
    Ok(())
}

fn fw_gap_identity(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 2);
    for _ in 0..2000 {
        let d = rng.random_range(1..9);
        let eps = rng.random_range(0.1..1.5);
        let c = LpBallConstraint::without_box(random_vec(&mut rng, d, -1.0, 1.0), eps, NormOrder::Inf)
            .map_err(|e| e.to_string())?;
        let x = feasible_point(&c, &mut rng);
        let g = random_vec(&mut rng, d, -2.0, 2.0);
        let gap = c.fw_gap(&x, &g).map_err(|e| e.to_string())?;
        if gap < -1e-12 {
            return Err(format!("negative gap {gap}"));
        }
        let closed = eps * g.norm_l1() + x.sub(c.center()).dot(&g);
        if (gap - closed).abs() > 1e-10 {
            return Err(format!("gap {gap} differs from closed form {closed}"));
        }
    }
    Ok(())
}

fn fgsm_special_case(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 3);
    for k in 0..20 {
        let model = MlpModel::random_init(vec![12, 10, 4], seed ^ (k + 100)).map_err(|e| e.to_string())?;
        let x = random_vec(&mut rng, 12, 0.2, 0.8);
        let target = rng.random_range(0..4);
        let loss = fwadv_core::models::AttackLoss::new(&model, target);
        let c = LpBallConstraint::new(x, 0.2, NormOrder::Inf).map_err(|e| e.to_string())?;
        let mut never = |_: &DenseVector| false;
        let mut cfg = AttackConfig::white_default(target);
        cfg.max_iters = 1;
        cfg.step_schedule = StepSchedule::Constant(1.0);
        cfg.early_stop_on_success = false;
        let a = solvers::fw_white(&loss, &c, &cfg, &mut never).map_err(|e| e.to_string())?;
        let b = solvers::fgsm(&loss, &c, &mut never).map_err(|e| e.to_string())?;
        for (p, q) in a
            .final_point
            .as_slice()
            .iter()
            .zip(b.final_point.as_slice())
        {
            if p.to_bits() != q.to_bits() {
                return Err("one-step FW and FGSM disagree bitwise".into());
            }
        }
    }
    Ok(())
}

fn backprop_gradcheck(seed: u64) -> Result<(), String> {
    let model = MlpModel::random_init(vec![8, 12, 6, 3], seed ^ 4).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 5);
    let h = 1e-5;
    for _ in 0..20 {
        let x = random_vec(&mut rng, 8, -1.0, 1.0);
        let target = rng.random_range(0..3);
        let (_, grad) = model
            .loss_and_input_grad(&x, target)
            .map_err(|e| e.to_string())?;
        let mut fd = vec![0.0; 8];
        for (i, f) in fd.iter_mut().enumerate() {
            let mut plus = x.clone();
            plus.as_mut_slice()[i] += h;
            let mut minus = x.clone();
            minus.as_mut_slice()[i] -= h;
            *f = (model.loss(&plus, target).map_err(|e| e.to_string())?
                - model.loss(&minus, target).map_err(|e| e.to_string())?)
                / (2.0 * h);
        }
        let fd = DenseVector::from(fd);
        let rel = grad.sub(&fd).norm_l2() / fd.norm_l2().max(1e-12);
        if rel > 1e-4 {
            return Err(format!("gradcheck relative error {rel}"));
        }
    }
    Ok(())
}

fn estimator_determinism(seed: u64) -> Result<(), String> {
    let f = TestLandscape::make_quadratic(6, seed ^ 6);
    let x = DenseVector::from(vec![0.1; 6]);
    let cfg = EstimatorConfig {
        samples_b: 3,
        probe_delta: 0.01,
        sensing: Sensing::Sphere,
        rng_seed: seed,
    };
    let a = grad_est(&cfg, &wrap_counting(&f, None), &x).map_err(|e| e.to_string())?;
    let b = grad_est(&cfg, &wrap_counting(&f, None), &x).map_err(|e| e.to_string())?;
    for (p, q) in a.as_slice().iter().zip(b.as_slice()) {
        if p.to_bits() != q.to_bits() {
            return Err("same-seed estimates differ".into());
        }
    }
    Ok(())
}

fn estimator_mean(seed: u64) -> Result<(), String> {
    let d = 10;
    let a: Vec<f64> = (0..d).map(|i| 0.5 + (i as f64) * 0.1).collect();
    let a_dv = DenseVector::from(a.clone());
    let oracle = ValueOracle::new(QueryMeter::new(None), |x: &DenseVector| {
        x.as_slice().iter().zip(&a).map(|(p, q)| p * q).sum()
    });
    let cfg = EstimatorConfig {
        samples_b: 20_000,
        probe_delta: 0.05,
        sensing: Sensing::Sphere,
        rng_seed: seed ^ 7,
    };
    let est = grad_est(&cfg, &oracle, &DenseVector::zeros(d)).map_err(|e| e.to_string())?;
    let rel = est.sub(&a_dv).norm_l2() / a_dv.norm_l2();
    if rel > 0.05 {
        return Err(format!("estimator mean off by {rel}"));
    }
    Ok(())
}

fn momentum_bound(seed: u64) -> Result<(), String> {
    for beta in [0.0, 0.5, 0.9] {
        let f = TestLandscape::make_quadratic(10, seed ^ 8);
        let l = f.smoothness().ok_or("missing smoothness")?;
        let eps = 0.5;
        let c = LpBallConstraint::without_box(DenseVector::zeros(10), eps, NormOrder::Inf)
            .map_err(|e| e.to_string())?;
        let gamma = 0.25;
        let bound = gamma * l * l2_diameter(eps, NormOrder::Inf, 10) / (1.0 - beta);
        let mut cfg = AttackConfig::white_default(0);
        cfg.max_iters = 60;
        cfg.step_schedule = StepSchedule::Constant(gamma);
        cfg.momentum_beta = beta;
        cfg.epsilon = eps;
        cfg.early_stop_on_success = false;
        let mut never = |_: &DenseVector| false;
        let mut worst: f64 = 0.0;
        solvers::fw_white_observed(&f, &c, &cfg, &mut never, &mut |info| {
            worst = worst.max(info.gradient.sub(info.momentum).norm_l2());
        })
        .map_err(|e| e.to_string())?;
        if worst > bound + 1e-6 {
            return Err(format!("beta {beta}: deviation {worst} > bound {bound}"));
        }
    }
    Ok(())
}

fn rate_slope(seed: u64) -> Result<(), String> {
    // Mixed pinned/interior optimum: half the coordinates sit far outside
    // the ball, half dead center, which keeps the min-gap on its
    // step-size floor instead of converging geometrically.
    let t_grid = [64usize, 256, 1024];
    let dim = 20;
    let eps = 0.5;
    let mut means = vec![0.0; t_grid.len()];
    let suite = [seed ^ 9, seed ^ 10, seed ^ 11];
    for landscape_seed in suite {
        let f = TestLandscape::make_quadratic(dim, landscape_seed);
        let xmin = f.minimizer().ok_or("no minimizer")?;
        let offset = DenseVector::from(
            (0..dim)
                .map(|i| if i % 2 == 0 { 16.0 * eps } else { 0.0 })
                .collect::<Vec<_>>(),
        );
        let c = LpBallConstraint::without_box(xmin.add(&offset), eps, NormOrder::Inf)
            .map_err(|e| e.to_string())?;
        let diag = rate_diagnostics(&f, &c, 0.0, &t_grid).map_err(|e| e.to_string())?;
        for p in &diag.points {
            if !p.bound_ok {
                return Err(format!("min-gap bound violated at T={}", p.t));
            }
        }
        for (m, p) in means.iter_mut().zip(&diag.points) {
            *m += p.min_gap / suite.len() as f64;
        }
    }
    let pts: Vec<(f64, f64)> = t_grid
        .iter()
        .zip(&means)
        .map(|(t, m)| (*t as f64, *m))
        .collect();
    let slope = fwadv_core::harness::log_log_slope(&pts);
    if !(-1.0..=-0.2).contains(&slope) {
        return Err(format!("suspicious rate slope {slope}"));
    }
    Ok(())
}

fn iterate_feasibility(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 10);
    for k in 0..200 {
        let d = rng.random_range(2..12);
        let f = TestLandscape::make_quadratic(d, seed ^ (k + 300));
        let eps = rng.random_range(0.1..1.0);
        let center = random_vec(&mut rng, d, 0.3, 0.7);
        let c = LpBallConstraint::new(center, eps, NormOrder::Inf).map_err(|e| e.to_string())?;
        let mut cfg = AttackConfig::white_default(0);
        cfg.max_iters = 15;
        cfg.step_schedule = StepSchedule::Constant(rng.random_range(0.05..1.0));
        cfg.momentum_beta = rng.random_range(0.0..0.99);
        cfg.epsilon = eps;
        cfg.early_stop_on_success = false;
        let mut never = |_: &DenseVector| false;
        let mut bad = false;
        solvers::fw_white_observed(&f, &c, &cfg, &mut never, &mut |info| {
            if !c.is_feasible(info.x, 1e-9) {
                bad = true;
            }
        })
        .map_err(|e| e.to_string())?;
        if bad {
            return Err("iterate left the feasible set".into());
        }
    }
    Ok(())
}
