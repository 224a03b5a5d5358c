//! Acceptance suite for the attack library: numerical exactness of the
//! LMOs, estimator moment checks, momentum and rate bounds, desk-scale
//! benchmark orderings on the frozen MNIST classifier, and format/
//! determinism guarantees. Each criterion prints one pass/fail line.

use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fwadv_core::gradest::{grad_est_with_rng, EstimatorConfig, Sensing};
use fwadv_core::harness::{
    self, log_log_slope, rate_diagnostics, run_experiment_loaded, success_curve, AttackerId,
    ExperimentPlan, SummaryRow, TargetRule,
};
use fwadv_core::lincon::{DenseVector, LpBallConstraint, NormOrder};
use fwadv_core::models::{self, mnist, MlpModel, TrainConfig};
use fwadv_core::oracles::{wrap_counting, GradientOracle, TestLandscape};
use fwadv_core::solvers::{
    self, l2_diameter, AttackConfig, AttackRecord, StepSchedule,
};

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist")
}

fn model_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/desk-model.json")
}

/// The frozen desk classifier and the MNIST test split, shared across the
/// desk-scale criteria. Loads the checked-in model when present, otherwise
/// retrains it with the default seeded config.
fn desk() -> &'static (MlpModel, mnist::Dataset) {
    static DESK: OnceLock<(MlpModel, mnist::Dataset)> = OnceLock::new();
    DESK.get_or_init(|| {
        let test = mnist::load_split(&data_dir(), false).expect("MNIST test split");
        let model = if model_path().is_file() {
            MlpModel::load_json(&model_path()).expect("frozen model parses")
        } else {
            let train = mnist::load_split(&data_dir(), true).expect("MNIST train split");
            models::train(&train, &[784, 128, 64, 10], &TrainConfig::default())
                .expect("training converges")
        };
        (model, test)
    })
}

fn report(criterion: &str, pass: bool, detail: &str, started: Instant) {
    println!(
        "[acceptance] {criterion}: {} ({detail}; {:.1?})",
        if pass { "PASS" } else { "FAIL" },
        started.elapsed()
    );
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

/// C1: every Frank-Wolfe iterate stays inside the ball and box without any
/// projection, across randomized white- and black-box runs.
#[test]
fn c01_feasibility_invariant() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut steps_checked = 0u64;
    let mut violations = 0u64;

    // White-box half: random landscapes, radii, schedules, and momenta.
    for k in 0..250 {
        let d = rng.random_range(3..16);
        let f = TestLandscape::make_quadratic(d, 1000 + k);
        let eps = rng.random_range(0.05..0.8);
        let boxed = k % 2 == 0;
        let center = if boxed {
            random_vec(&mut rng, d, 0.2, 0.8)
        } else {
            random_vec(&mut rng, d, -1.0, 1.0)
        };
        let c = if boxed {
            LpBallConstraint::new(center, eps, NormOrder::Inf).unwrap()
        } else {
            LpBallConstraint::without_box(center, eps, NormOrder::Inf).unwrap()
        };
        let mut cfg = AttackConfig::white_default(0);
        cfg.max_iters = 20;
        cfg.step_schedule = StepSchedule::Constant(rng.random_range(0.05..1.0));
        cfg.momentum_beta = rng.random_range(0.0..0.999);
        cfg.epsilon = eps;
        cfg.early_stop_on_success = false;
        let mut never = |_: &DenseVector| false;
        solvers::fw_white_observed(&f, &c, &cfg, &mut never, &mut |info| {
            steps_checked += 1;
            if !c.is_feasible(info.x, 1e-9) {
                violations += 1;
            }
        })
        .unwrap();
    }

    // Black-box half: estimated gradients drive the same update.
    for k in 0..100 {
        let d = rng.random_range(3..12);
        let f = TestLandscape::make_quadratic(d, 5000 + k);
        let oracle = wrap_counting(&f, None);
        let eps = rng.random_range(0.05..0.8);
        let center = random_vec(&mut rng, d, 0.2, 0.8);
        let c = LpBallConstraint::new(center, eps, NormOrder::Inf).unwrap();
        let mut cfg = AttackConfig::black_default(0, 9000 + k);
        cfg.max_iters = 50;
        cfg.epsilon = eps;
        cfg.early_stop_on_success = false;
        if let Some(est) = cfg.estimator.as_mut() {
            est.samples_b = 5;
            est.sensing = if k % 2 == 0 {
                Sensing::Sphere
            } else {
                Sensing::Gaussian
            };
        }
        cfg.momentum_beta = rng.random_range(0.0..0.999);
        let mut never = |_: &DenseVector| Ok(false);
        solvers::fw_black_observed(&oracle, &c, &cfg, &mut never, &mut |info| {
            steps_checked += 1;
            if !c.is_feasible(info.x, 1e-9) {
                violations += 1;
            }
        })
        .unwrap();
    }

    let pass = steps_checked >= 10_000 && violations == 0;
    report(
        "C1 feasibility invariant",
        pass,
        &format!("{steps_checked} iterates, {violations} violations"),
        started,
    );
    assert!(steps_checked >= 10_000);
    assert_eq!(violations, 0);
}

/// C2: LMO optimality against random feasible points for every norm order,
/// plus closed forms matching a sampled brute-force optimum.
#[test]
fn c02_lmo_exactness() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let orders = [
        NormOrder::P(1.0),
        NormOrder::P(1.5),
        NormOrder::P(2.0),
        NormOrder::P(3.0),
        NormOrder::Inf,
    ];
    for p in orders {
        for _ in 0..10_000 {
            let d = rng.random_range(1..9);
            let c = LpBallConstraint::without_box(
                random_vec(&mut rng, d, -1.0, 1.0),
                rng.random_range(0.1..2.0),
                p,
            )
            .unwrap();
            let m = random_vec(&mut rng, d, -1.0, 1.0);
            let v = c.lmo(&m).unwrap();
            let x = feasible_point(&c, &mut rng);
            assert!(
                v.dot(&m) <= x.dot(&m) + 1e-9,
                "sampled point beats LMO for p={p:?}"
            );
            assert!(
                v.sub(c.center()).norm_p(p) <= c.radius() + 1e-9,
                "LMO left the ball for p={p:?}"
            );
        }
    }

    // Closed form vs brute force on the sphere of the ball, per order.
    for p in orders {
        let d = 4;
        let c = LpBallConstraint::without_box(DenseVector::zeros(d), 1.0, p).unwrap();
        let m = DenseVector::from(vec![0.9, -1.7, 0.3, 1.1]);
        let exact = c.lmo(&m).unwrap().dot(&m);
        let mut best = f64::INFINITY;
        for i in 0..1_000_000u32 {
            let w = random_vec(&mut rng, d, -1.0, 1.0);
            let norm = w.norm_p(p);
            if norm == 0.0 {
                continue;
            }
            let x = w.scale(1.0 / norm);
            best = best.min(x.dot(&m));
            // Also mix in corner-like sign points for the polytope orders.
            if i % 4 == 0 {
                let signs = DenseVector::from(
                    w.as_slice().iter().map(|v| v.signum()).collect::<Vec<_>>(),
                );
                let norm = signs.norm_p(p);
                if norm > 0.0 {
                    best = best.min(signs.scale(1.0 / norm).dot(&m));
                }
            }
        }
        assert!(
            exact <= best + 1e-6,
            "closed form {exact} beaten by sample {best} for p={p:?}"
        );
    }
    report("C2 LMO exactness", true, "5 orders x 10^4 trials + brute force", started);
}

/// C3: one full-step Frank-Wolfe iteration is bitwise FGSM.
#[test]
fn c03_fgsm_special_case() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    for k in 0..100 {
        let dims = vec![
            rng.random_range(6..30),
            rng.random_range(4..20),
            rng.random_range(2..10),
        ];
        let classes = dims[2];
        let model = MlpModel::random_init(dims, 31_000 + k).unwrap();
        let x = random_vec(&mut rng, model.input_dim(), 0.1, 0.9);
        let target = rng.random_range(0..classes);
        let loss = models::AttackLoss::new(&model, target);
        let c = LpBallConstraint::new(x, rng.random_range(0.05..0.3), NormOrder::Inf).unwrap();
        let mut cfg = AttackConfig::white_default(target);
        cfg.max_iters = 1;
        cfg.step_schedule = StepSchedule::Constant(1.0);
        cfg.momentum_beta = rng.random_range(0.0..0.999);
        cfg.early_stop_on_success = false;
        let mut never = |_: &DenseVector| false;
        let a = solvers::fw_white(&loss, &c, &cfg, &mut never).unwrap();
        let b = solvers::fgsm(&loss, &c, &mut never).unwrap();
        for (u, v) in a
            .final_point
            .as_slice()
            .iter()
            .zip(b.final_point.as_slice())
        {
            assert_eq!(u.to_bits(), v.to_bits(), "model {k}: FW(T=1) != FGSM");
        }
    }
    report("C3 FGSM special case", true, "100 bitwise-equal pairs", started);
}

/// C4: sphere-estimator moments on a seeded d=50 quadratic with known
/// constants; mean within 2 percent, variance under its moment bound.
#[test]
fn c04_estimator_moments() {
    let started = Instant::now();
    let d = 50;
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let diag: Vec<f64> = (0..d).map(|_| rng.random_range(0.5..1.5)).collect();
    let smoothness = diag.iter().cloned().fold(0.0f64, f64::max);
    let f = TestLandscape::diagonal_quadratic(diag.clone(), vec![0.0; d]);
    let eps = 0.5;
    // G = ||grad f(0)|| = 0; D is the L2 diameter of the eps ball at the
    // origin, and x on the ball surface satisfies ||x|| <= D/2.
    let g_const = 0.0;
    let diameter = l2_diameter(eps, NormOrder::Inf, d);
    let x = DenseVector::from(
        (0..d)
            .map(|i| if i % 2 == 0 { eps } else { -eps })
            .collect::<Vec<_>>(),
    );
    let truth = f.eval(&x).1;

    let b = 200;
    let repeats = 5000; // b * repeats = 1e6 sample pairs
    let delta = 0.01;
    let cfg = EstimatorConfig {
        samples_b: b,
        probe_delta: delta,
        sensing: Sensing::Sphere,
        rng_seed: 0,
    };
    let oracle = wrap_counting(&f, None);
    let mut stream = ChaCha8Rng::seed_from_u64(41);
    let mut estimates: Vec<DenseVector> = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        estimates.push(
            grad_est_with_rng(&cfg, &oracle, &x, &mut stream)
                .unwrap()
                .gradient,
        );
    }
    let mut mean = vec![0.0; d];
    for e in &estimates {
        for (m, v) in mean.iter_mut().zip(e.as_slice()) {
            *m += v / repeats as f64;
        }
    }
    let mean = DenseVector::from(mean);
    let rel = mean.sub(&truth).norm_l2() / truth.norm_l2();

    let mut var = 0.0;
    for e in &estimates {
        var += e.sub(&mean).dot(&e.sub(&mean)) / repeats as f64;
    }
    let var_bound = (1.0 / b as f64)
        * (2.0 * d as f64 * (g_const + smoothness * diameter).powi(2)
            + 0.5 * delta * delta * smoothness * smoothness * (d * d) as f64);

    let pass = rel < 0.02 && var <= var_bound * 1.1;
    report(
        "C4 estimator moments",
        pass,
        &format!("mean rel err {rel:.4}, var {var:.2} <= 1.1 x {var_bound:.2}"),
        started,
    );
    assert!(rel < 0.02, "estimator mean off by {rel}");
    assert!(var <= var_bound * 1.1, "variance {var} above bound {var_bound}");
}

/// C5: the momentum never deviates from the gradient by more than
/// gamma L D / (1 - beta) on the quadratic suite.
#[test]
fn c05_momentum_bound() {
    let started = Instant::now();
    for beta in [0.0, 0.5, 0.9] {
        for seed in [50u64, 51, 52] {
            let d = 12;
            let f = TestLandscape::make_quadratic(d, seed);
            let l = f.smoothness().unwrap();
            let eps = 0.5;
            let c =
                LpBallConstraint::without_box(DenseVector::zeros(d), eps, NormOrder::Inf).unwrap();
            let gamma = 0.3;
            let bound = gamma * l * l2_diameter(eps, NormOrder::Inf, d) / (1.0 - beta);
            let mut cfg = AttackConfig::white_default(0);
            cfg.max_iters = 100;
            cfg.step_schedule = StepSchedule::Constant(gamma);
            cfg.momentum_beta = beta;
            cfg.epsilon = eps;
            cfg.early_stop_on_success = false;
            let mut never = |_: &DenseVector| false;
            solvers::fw_white_observed(&f, &c, &cfg, &mut never, &mut |info| {
                let dev = info.gradient.sub(info.momentum).norm_l2();
                assert!(
                    dev <= bound + 1e-6,
                    "beta {beta} seed {seed}: deviation {dev} > bound {bound} at t={}",
                    info.t
                );
            })
            .unwrap();
        }
    }
    report(
        "C5 momentum deviation bound",
        true,
        "beta in {0, 0.5, 0.9}, 3 landscapes, every iterate",
        started,
    );
}

/// C6: the theory-step min-gap bound holds at every T, and the suite-mean
/// min-gap decays with a log-log slope in [-0.8, -0.3].
#[test]
fn c06_rate_bound_and_slope() {
    let started = Instant::now();
    let t_grid = [64usize, 256, 1024, 4096];
    let seeds = [7u64, 14, 41, 99, 123, 2024];
    let dim = 20;
    let eps = 0.5;
    let mut means = vec![0.0f64; t_grid.len()];
    for &seed in &seeds {
        let f = TestLandscape::make_quadratic(dim, seed);
        let xmin = f.minimizer().unwrap();
        // Half the coordinates pinned at the face, half interior: the
        // zigzag regime whose min gap rides the step-size floor.
        let offset = DenseVector::from(
            (0..dim)
                .map(|i| if i % 2 == 0 { 16.0 * eps } else { 0.0 })
                .collect::<Vec<_>>(),
        );
        let c = LpBallConstraint::without_box(xmin.add(&offset), eps, NormOrder::Inf).unwrap();
        // The bound must hold for every momentum setting.
        for beta in [0.0, 0.5, 0.9] {
            let diag = rate_diagnostics(&f, &c, beta, &t_grid).unwrap();
            for p in &diag.points {
                assert!(
                    p.bound_ok,
                    "seed {seed} beta {beta}: min gap {} above bound {} at T={}",
                    p.min_gap, p.bound_rhs, p.t
                );
            }
            if beta == 0.0 {
                for (m, p) in means.iter_mut().zip(&diag.points) {
                    *m += p.min_gap / seeds.len() as f64;
                }
            }
        }
    }
    let pts: Vec<(f64, f64)> = t_grid
        .iter()
        .zip(&means)
        .map(|(t, m)| (*t as f64, *m))
        .collect();
    let slope = log_log_slope(&pts);
    let pass = (-0.8..=-0.3).contains(&slope);
    report(
        "C6 rate bound and slope",
        pass,
        &format!("all bounds hold; suite slope {slope:.3}"),
        started,
    );
    assert!(pass, "slope {slope} outside [-0.8, -0.3]");
}

fn desk_plan(attacker: AttackerId, n: usize, seed: u64) -> ExperimentPlan {
    let mut attack = if attacker.is_black_box() {
        AttackConfig::black_default(0, seed)
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
    ExperimentPlan {
        attacker,
        attack,
        n_examples: n,
        rng_seed: seed,
        targets: TargetRule::Random,
        threads: None,
    }
}

fn run_desk(attacker: AttackerId, n: usize, seed: u64) -> (Vec<AttackRecord>, SummaryRow) {
    let (model, data) = desk();
    run_experiment_loaded(model, data, &desk_plan(attacker, n, seed)).unwrap()
}

/// C7: white-box orderings on the frozen classifier, 200 targeted examples
/// at epsilon 0.3: the momentum Frank-Wolfe attack wins on iterations and
/// distortion, FGSM stays under 60 percent success.
#[test]
fn c07_white_box_desk_ordering() {
    let started = Instant::now();
    let (model, data) = desk();
    let acc = model.accuracy(data);
    assert!(acc >= 0.97, "frozen model accuracy {acc} below 0.97");

    let n = 200;
    let seed = 7;
    let (fw_recs, fw) = run_desk(AttackerId::FwWhite, n, seed);
    let (pgd_recs, pgd) = run_desk(AttackerId::Pgd, n, seed);
    let (mi_recs, mi) = run_desk(AttackerId::MiFgsm, n, seed);
    let (fgsm_recs, fgsm) = run_desk(AttackerId::Fgsm, n, seed);

    // Every adversarial point respects the ball and the pixel box.
    for rec in fw_recs
        .iter()
        .chain(&pgd_recs)
        .chain(&mi_recs)
        .chain(&fgsm_recs)
    {
        assert!(rec.distortion_linf <= 0.3 + 1e-9);
        assert!(rec
            .final_point
            .as_slice()
            .iter()
            .all(|v| (-1e-9..=1.0 + 1e-9).contains(v)));
    }

    let detail = format!(
        "acc {acc:.4}; ASR fw {:.3} pgd {:.3} mi {:.3} fgsm {:.3}; iters {:.2}/{:.2}/{:.2}; dist {:.4}/{:.4}/{:.4}",
        fw.success_rate,
        pgd.success_rate,
        mi.success_rate,
        fgsm.success_rate,
        fw.mean_iterations_success,
        mi.mean_iterations_success,
        pgd.mean_iterations_success,
        fw.mean_distortion_linf_success,
        mi.mean_distortion_linf_success,
        pgd.mean_distortion_linf_success,
    );
    let pass = fw.success_rate == 1.0
        && pgd.success_rate == 1.0
        && mi.success_rate == 1.0
        && fgsm.success_rate < 0.6
        && fw.mean_distortion_linf_success < mi.mean_distortion_linf_success
        && fw.mean_distortion_linf_success < pgd.mean_distortion_linf_success
        && fw.mean_iterations_success <= mi.mean_iterations_success
        && mi.mean_iterations_success <= pgd.mean_iterations_success;
    report("C7 white-box desk ordering", pass, &detail, started);

    assert_eq!(fw.success_rate, 1.0, "FW white ASR");
    assert_eq!(pgd.success_rate, 1.0, "PGD ASR");
    assert_eq!(mi.success_rate, 1.0, "MI-FGSM ASR");
    assert!(fgsm.success_rate < 0.6, "FGSM ASR {}", fgsm.success_rate);
    assert!(
        fw.mean_distortion_linf_success < mi.mean_distortion_linf_success,
        "distortion: FW {} vs MI-FGSM {}",
        fw.mean_distortion_linf_success,
        mi.mean_distortion_linf_success
    );
    assert!(
        fw.mean_distortion_linf_success < pgd.mean_distortion_linf_success,
        "distortion: FW {} vs PGD {}",
        fw.mean_distortion_linf_success,
        pgd.mean_distortion_linf_success
    );
    assert!(
        fw.mean_iterations_success <= mi.mean_iterations_success,
        "iterations: FW {} vs MI-FGSM {}",
        fw.mean_iterations_success,
        mi.mean_iterations_success
    );
    assert!(
        mi.mean_iterations_success <= pgd.mean_iterations_success,
        "iterations: MI-FGSM {} vs PGD {}",
        mi.mean_iterations_success,
        pgd.mean_iterations_success
    );
}

/// C8: black-box desk benchmark at the standard MNIST settings (budget
/// 50,000, b=25, delta=0.01, gamma_t=0.8/sqrt(t+1), beta=0.99): both
/// sensing options reach >= 95 percent success under 10,000 mean queries,
/// and the success-vs-queries curve must dominate the NES-style baseline
/// at every grid point.
#[test]
fn c08_black_box_desk_scale() {
    let started = Instant::now();
    let n = 200;
    let seed = 7;
    let (sphere_recs, sphere) = run_desk(AttackerId::FwBlackSphere, n, seed);
    let (_, gaussian) = run_desk(AttackerId::FwBlackGaussian, n, seed);
    let (nes_recs, nes) = run_desk(AttackerId::NesPgd, n, seed);

    let grid: Vec<u64> = (0..=20).map(|i| i * 2500).collect();
    let fw_curve = success_curve(&sphere_recs, &grid);
    let nes_curve = success_curve(&nes_recs, &grid);
    let dominated: Vec<u64> = fw_curve
        .iter()
        .zip(&nes_curve)
        .filter(|(f, n)| f.1 < n.1)
        .map(|(f, _)| f.0)
        .collect();

    let detail = format!(
        "ASR sphere {:.3} gaussian {:.3} nes {:.3}; queries(succ) sphere {:.0} gaussian {:.0} nes {:.0}; FW below NES at {} of {} grid points",
        sphere.success_rate,
        gaussian.success_rate,
        nes.success_rate,
        sphere.mean_queries_success,
        gaussian.mean_queries_success,
        nes.mean_queries_success,
        dominated.len(),
        grid.len(),
    );
    let pass = sphere.success_rate >= 0.95
        && gaussian.success_rate >= 0.95
        && sphere.mean_queries_success < 10_000.0
        && gaussian.mean_queries_success < 10_000.0
        && dominated.is_empty();
    report("C8 black-box desk scale", pass, &detail, started);

    assert!(
        sphere.success_rate >= 0.95,
        "sphere ASR {}",
        sphere.success_rate
    );
    assert!(
        gaussian.success_rate >= 0.95,
        "gaussian ASR {}",
        gaussian.success_rate
    );
    assert!(
        sphere.mean_queries_success < 10_000.0,
        "sphere queries(succ) {}",
        sphere.mean_queries_success
    );
    assert!(
        gaussian.mean_queries_success < 10_000.0,
        "gaussian queries(succ) {}",
        gaussian.mean_queries_success
    );
    assert!(
        dominated.is_empty(),
        "FW success curve falls below the NES-style baseline at query budgets {dominated:?}; \
         the memoryless sign baseline needs ~4x fewer queries than momentum Frank-Wolfe on \
         this desk model at the pinned beta=0.99 settings"
    );
}

/// C9: backprop gradient fidelity against central finite differences and
/// the forward pass against an independent triple-loop reference.
#[test]
fn c09_model_gradient_fidelity() {
    let started = Instant::now();
    let model = MlpModel::random_init(vec![784, 32, 16, 10], 90).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(91);
    let h = 1e-5;
    let mut worst_rel = 0.0f64;
    for _ in 0..50 {
        let x = random_vec(&mut rng, 784, 0.0, 1.0);
        let target = rng.random_range(0..10);
        let (_, grad) = model.loss_and_input_grad(&x, target).unwrap();
        let mut fd = vec![0.0; 784];
        for (i, f) in fd.iter_mut().enumerate() {
            let mut plus = x.clone();
            plus.as_mut_slice()[i] += h;
            let mut minus = x.clone();
            minus.as_mut_slice()[i] -= h;
            *f = (model.loss(&plus, target).unwrap() - model.loss(&minus, target).unwrap())
                / (2.0 * h);
        }
        let fd = DenseVector::from(fd);
        let rel = grad.sub(&fd).norm_l2() / fd.norm_l2().max(1e-12);
        worst_rel = worst_rel.max(rel);
    }

    // Independent naive forward: three nested loops, no shared code path.
    let naive_forward = |m: &MlpModel, x: &[f64]| -> Vec<f64> {
        let dims = m.layer_dims();
        let mut act = x.to_vec();
        for l in 0..dims.len() - 1 {
            let (n_in, n_out) = (dims[l], dims[l + 1]);
            let mut next = vec![0.0; n_out];
            for o in 0..n_out {
                let mut s = 0.0;
                for i in 0..n_in {
                    s += m.weight(l, o, i) * act[i];
                }
                next[o] = s + m.bias(l, o);
            }
            if l + 2 < dims.len() {
                for v in next.iter_mut() {
                    *v = v.max(0.0);
                }
            }
            act = next;
        }
        act
    };
    let mut worst_fwd = 0.0f64;
    for _ in 0..20 {
        let x = random_vec(&mut rng, 784, 0.0, 1.0);
        let ours = model.forward(&x).unwrap();
        let reference = naive_forward(&model, x.as_slice());
        for (a, b) in ours.as_slice().iter().zip(&reference) {
            worst_fwd = worst_fwd.max((a - b).abs());
        }
    }

    let pass = worst_rel < 1e-4 && worst_fwd < 1e-12;
    report(
        "C9 gradient fidelity",
        pass,
        &format!("gradcheck rel {worst_rel:.2e}, forward diff {worst_fwd:.2e}"),
        started,
    );
    assert!(worst_rel < 1e-4);
    assert!(worst_fwd < 1e-12);
}

/// C10: byte-identical reruns, named IDX errors, bit-exact model JSON.
#[test]
fn c10_determinism_and_formats() {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let (model, data) = desk();

    // The real test split parses to its documented shape.
    assert_eq!(data.len(), 10_000);
    assert_eq!(data.dim(), 28 * 28);

    // Same plan + seed -> byte-identical JSON Lines, under different
    // worker-pool widths.
    let mut plan = desk_plan(AttackerId::FwWhite, 5, 99);
    plan.threads = Some(2);
    let (records_a, _) = run_experiment_loaded(model, data, &plan).unwrap();
    plan.threads = Some(1);
    let (records_b, _) = run_experiment_loaded(model, data, &plan).unwrap();
    let path_a = dir.path().join("a.jsonl");
    let path_b = dir.path().join("b.jsonl");
    harness::write_records_jsonl(&path_a, &records_a).unwrap();
    harness::write_records_jsonl(&path_b, &records_b).unwrap();
    let bytes_a = std::fs::read(&path_a).unwrap();
    assert_eq!(bytes_a, std::fs::read(&path_b).unwrap());

    // Corrupted IDX headers are rejected with named errors.
    let img = dir.path().join("images");
    std::fs::write(&img, 0xdeadbeefu32.to_be_bytes()).unwrap();
    match mnist::load_idx_images(&img) {
        Err(mnist::MnistError::BadMagic { found, .. }) => assert_eq!(found, 0xdeadbeef),
        other => panic!("expected BadMagic, got {other:?}"),
    }
    let mut truncated = Vec::new();
    truncated.extend_from_slice(&0x0000_0803u32.to_be_bytes());
    truncated.extend_from_slice(&100u32.to_be_bytes());
    truncated.extend_from_slice(&28u32.to_be_bytes());
    truncated.extend_from_slice(&28u32.to_be_bytes());
    truncated.extend_from_slice(&[0u8; 64]);
    std::fs::write(&img, truncated).unwrap();
    assert!(matches!(
        mnist::load_idx_images(&img),
        Err(mnist::MnistError::Truncated { .. })
    ));

    // Model JSON round-trips bit-exactly (on the real frozen model).
    let path = dir.path().join("model.json");
    model.save_json(&path).unwrap();
    let loaded = MlpModel::load_json(&path).unwrap();
    let dims = model.layer_dims();
    for l in 0..dims.len() - 1 {
        for o in 0..dims[l + 1] {
            assert_eq!(model.bias(l, o).to_bits(), loaded.bias(l, o).to_bits());
            for i in 0..dims[l] {
                assert_eq!(
                    model.weight(l, o, i).to_bits(),
                    loaded.weight(l, o, i).to_bits()
                );
            }
        }
    }

    report(
        "C10 determinism and formats",
        true,
        "byte-identical reruns, named IDX errors, bit-exact model JSON",
        started,
    );
}
