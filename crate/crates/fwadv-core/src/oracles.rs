//! Objective-function access: first-order oracles, value-only oracles with
//! query accounting and budgets, and synthetic smooth landscapes with known
//! constants for bound checks.

use std::cell::Cell;
use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::lincon::DenseVector;

/// Errors from value-oracle evaluation.
#[derive(Debug, Error)]
pub enum OracleError {
    #[error("query budget exhausted: {used} of {budget} queries used")]
    BudgetExhausted { used: u64, budget: u64 },
    #[error("oracle returned a non-finite value")]
    NonFiniteValue,
}

/// First-order access to the objective: one call yields value and gradient.
///
/// Implementations must return finite values and a gradient of the input's
/// dimension. Optional metadata exposes the smoothness constant `L` and the
/// gradient-norm bound `G = ||grad f(0)||_2` when they are known, for
/// theory-driven step sizes and bound checks.
pub trait GradientOracle {
    fn dim(&self) -> usize;

    fn eval(&self, x: &DenseVector) -> (f64, DenseVector);

    fn value(&self, x: &DenseVector) -> f64 {
        self.eval(x).0
    }

    /// Known smoothness constant, if any.
    fn smoothness(&self) -> Option<f64> {
        None
    }

    /// Known bound on `||grad f(0)||_2`, if any.
    fn grad_norm_at_origin(&self) -> Option<f64> {
        None
    }
}

/// Shared query counter with an optional hard budget.
///
/// Cloning produces a handle onto the same counter, so a success-probe
/// closure and the value oracle of one attack run charge the same meter.
/// Confined to a single thread per run.
#[derive(Debug, Clone)]
pub struct QueryMeter {
    used: Rc<Cell<u64>>,
    budget: Option<u64>,
}

impl QueryMeter {
    pub fn new(budget: Option<u64>) -> Self {
        Self {
            used: Rc::new(Cell::new(0)),
            budget,
        }
    }

    /// Records `n` queries, failing (without recording) once the budget
    /// would be exceeded.
    pub fn charge(&self, n: u64) -> Result<(), OracleError> {
        self.ensure_affordable(n)?;
        self.used.set(self.used.get() + n);
        Ok(())
    }

    /// Fails if `n` further queries would exceed the budget; charges nothing.
    pub fn ensure_affordable(&self, n: u64) -> Result<(), OracleError> {
        let used = self.used.get();
        if let Some(budget) = self.budget {
            if used + n > budget {
                return Err(OracleError::BudgetExhausted { used, budget });
            }
        }
        Ok(())
    }

    pub fn used(&self) -> u64 {
        self.used.get()
    }

    pub fn budget(&self) -> Option<u64> {
        self.budget
    }
}

/// Value-only, query-counted view of an objective. Each `eval` costs exactly
/// one query; evaluation past the budget fails before touching the function.
pub struct ValueOracle<'a> {
    eval_fn: Box<dyn Fn(&DenseVector) -> f64 + 'a>,
    meter: QueryMeter,
}

impl<'a> ValueOracle<'a> {
    pub fn new(meter: QueryMeter, eval_fn: impl Fn(&DenseVector) -> f64 + 'a) -> Self {
        Self {
            eval_fn: Box::new(eval_fn),
            meter,
        }
    }

    pub fn eval(&self, x: &DenseVector) -> Result<f64, OracleError> {
        self.meter.charge(1)?;
        Ok((self.eval_fn)(x))
    }

    pub fn queries_used(&self) -> u64 {
        self.meter.used()
    }

    /// Fails if `n` further queries would exceed the budget.
    pub fn ensure_affordable(&self, n: u64) -> Result<(), OracleError> {
        self.meter.ensure_affordable(n)
    }

    /// Handle onto this oracle's counter (for success probes).
    pub fn meter(&self) -> QueryMeter {
        self.meter.clone()
    }
}

/// Value-only view of a first-order oracle; the gradient is unreachable
/// through the returned handle.
pub fn wrap_counting<'a>(g: &'a dyn GradientOracle, budget: Option<u64>) -> ValueOracle<'a> {
    ValueOracle::new(QueryMeter::new(budget), move |x| g.value(x))
}

/// Synthetic smooth landscape with analytic gradient and, where available,
/// known smoothness constant and minimizer.
#[derive(Debug, Clone)]
pub enum TestLandscape {
    /// f(x) = 1/2 (x-shift)' A (x-shift) + b'(x-shift) + offset with A
    /// symmetric PSD stored dense row-major.
    Quadratic {
        matrix: Vec<f64>,
        linear: Vec<f64>,
        shift: Vec<f64>,
        dim: usize,
        smoothness: f64,
    },
    /// Coupled quartic chain: sum_i a (x_{i+1} - x_i^2)^2 + (1 - x_i)^2.
    /// Smooth but without a global smoothness constant.
    RosenbrockLike { dim: usize, a: f64 },
    /// Mean of softplus units: f(x) = (1/k) sum_j softplus(a_j'x + c_j),
    /// with L = lambda_max(sum_j a_j a_j') / (4k).
    LogisticMixture {
        directions: Vec<Vec<f64>>,
        offsets: Vec<f64>,
        dim: usize,
        smoothness: f64,
    },
}

/// Largest eigenvalue of a symmetric PSD matrix by power iteration,
/// converged to a fixed 1e-8 relative tolerance.
pub fn power_iteration_lmax(matrix: &[f64], dim: usize, seed: u64) -> f64 {
    assert_eq!(matrix.len(), dim * dim);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        v[0] = 1.0;
    } else {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    let mut lambda = 0.0f64;
    for _ in 0..100_000 {
        let mut av = vec![0.0; dim];
        for i in 0..dim {
            let row = &matrix[i * dim..(i + 1) * dim];
            av[i] = row.iter().zip(&v).map(|(a, b)| a * b).sum();
        }
        let next = v.iter().zip(&av).map(|(a, b)| a * b).sum::<f64>();
        let av_norm = av.iter().map(|x| x * x).sum::<f64>().sqrt();
        if av_norm == 0.0 {
            return 0.0;
        }
        av.iter_mut().for_each(|x| *x /= av_norm);
        v = av;
        if (next - lambda).abs() <= 1e-8 * next.abs().max(1.0) {
            return next.max(0.0);
        }
        lambda = next;
    }
    lambda.max(0.0)
}

impl TestLandscape {
    /// Reproducible random PSD quadratic: A = M'M / d with standard normal
    /// M entries, b standard normal, L from power iteration.
    pub fn make_quadratic(dim: usize, seed: u64) -> Self {
        assert!(dim >= 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m: Vec<f64> = (0..dim * dim)
            .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        let mut a = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in 0..=i {
                let mut s = 0.0;
                for k in 0..dim {
                    s += m[k * dim + i] * m[k * dim + j];
                }
                s /= dim as f64;
                a[i * dim + j] = s;
                a[j * dim + i] = s;
            }
        }
        let linear: Vec<f64> = (0..dim)
            .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        let smoothness = power_iteration_lmax(&a, dim, seed ^ 0x9e37_79b9);
        TestLandscape::Quadratic {
            matrix: a,
            linear,
            shift: vec![0.0; dim],
            dim,
            smoothness,
        }
    }

    /// Quadratic with explicit dense matrix and linear term (no shift).
    /// `smoothness` is taken on trust from the caller when known exactly,
    /// otherwise pass the power-iterated value.
    pub fn quadratic_from_parts(
        matrix: Vec<f64>,
        linear: Vec<f64>,
        smoothness: f64,
    ) -> Self {
        let dim = linear.len();
        assert_eq!(matrix.len(), dim * dim);
        TestLandscape::Quadratic {
            matrix,
            linear,
            shift: vec![0.0; dim],
            dim,
            smoothness,
        }
    }

    /// Diagonal quadratic centered at `minimizer`:
    /// f(x) = 1/2 sum_i a_i (x_i - min_i)^2, L = max a_i exactly.
    pub fn diagonal_quadratic(diag: Vec<f64>, minimizer: Vec<f64>) -> Self {
        assert_eq!(diag.len(), minimizer.len());
        let dim = diag.len();
        let smoothness = diag.iter().cloned().fold(0.0f64, f64::max);
        let mut matrix = vec![0.0; dim * dim];
        for i in 0..dim {
            matrix[i * dim + i] = diag[i];
        }
        TestLandscape::Quadratic {
            matrix,
            linear: vec![0.0; dim],
            shift: minimizer,
            dim,
            smoothness,
        }
    }

    pub fn rosenbrock_like(dim: usize, a: f64) -> Self {
        assert!(dim >= 2);
        TestLandscape::RosenbrockLike { dim, a }
    }

    /// Seeded softplus mixture of `k` random directions.
    pub fn logistic_mixture(dim: usize, k: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let directions: Vec<Vec<f64>> = (0..k)
            .map(|_| {
                (0..dim)
                    .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
                    .collect()
            })
            .collect();
        let offsets: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
        // Hessian = (1/k) sum sigma'(.) a a' with sigma' <= 1/4, so
        // lambda_max(sum a a') / (4k) is a valid global smoothness constant.
        let mut gram = vec![0.0; dim * dim];
        for a in &directions {
            for i in 0..dim {
                for j in 0..dim {
                    gram[i * dim + j] += a[i] * a[j];
                }
            }
        }
        let smoothness = power_iteration_lmax(&gram, dim, seed ^ 0x51f1) / (4.0 * k as f64);
        TestLandscape::LogisticMixture {
            directions,
            offsets,
            dim,
            smoothness,
        }
    }

    /// Known minimizer, when the landscape has a closed-form one.
    pub fn minimizer(&self) -> Option<DenseVector> {
        match self {
            TestLandscape::Quadratic {
                matrix,
                linear,
                shift,
                dim,
                ..
            } => {
                if linear.iter().all(|v| *v == 0.0) {
                    return Some(DenseVector::from(shift.clone()));
                }
                // Solve A y = -b by Gaussian elimination; the shifted
                // minimizer is shift + y. Singular A -> None.
                let n = *dim;
                let mut aug = vec![0.0; n * (n + 1)];
                for i in 0..n {
                    for j in 0..n {
                        aug[i * (n + 1) + j] = matrix[i * n + j];
                    }
                    aug[i * (n + 1) + n] = -linear[i];
                }
                for col in 0..n {
                    let mut pivot = col;
                    for r in col + 1..n {
                        if aug[r * (n + 1) + col].abs() > aug[pivot * (n + 1) + col].abs() {
                            pivot = r;
                        }
                    }
                    if aug[pivot * (n + 1) + col].abs() < 1e-12 {
                        return None;
                    }
                    if pivot != col {
                        for k in 0..=n {
                            aug.swap(col * (n + 1) + k, pivot * (n + 1) + k);
                        }
                    }
                    let p = aug[col * (n + 1) + col];
                    for r in 0..n {
                        if r == col {
                            continue;
                        }
                        let factor = aug[r * (n + 1) + col] / p;
                        for k in col..=n {
                            aug[r * (n + 1) + k] -= factor * aug[col * (n + 1) + k];
                        }
                    }
                }
                let y: Vec<f64> = (0..n)
                    .map(|i| aug[i * (n + 1) + n] / aug[i * (n + 1) + i])
                    .collect();
                Some(DenseVector::from(
                    y.iter().zip(shift).map(|(a, b)| a + b).collect::<Vec<_>>(),
                ))
            }
            _ => None,
        }
    }
}

fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl GradientOracle for TestLandscape {
    fn dim(&self) -> usize {
        match self {
            TestLandscape::Quadratic { dim, .. } => *dim,
            TestLandscape::RosenbrockLike { dim, .. } => *dim,
            TestLandscape::LogisticMixture { dim, .. } => *dim,
        }
    }

    fn eval(&self, x: &DenseVector) -> (f64, DenseVector) {
        match self {
            TestLandscape::Quadratic {
                matrix,
                linear,
                shift,
                dim,
                ..
            } => {
                let n = *dim;
                let z: Vec<f64> = x
                    .as_slice()
                    .iter()
                    .zip(shift)
                    .map(|(a, b)| a - b)
                    .collect();
                let mut az = vec![0.0; n];
                for i in 0..n {
                    let row = &matrix[i * n..(i + 1) * n];
                    az[i] = row.iter().zip(&z).map(|(a, b)| a * b).sum();
                }
                let value = 0.5 * z.iter().zip(&az).map(|(a, b)| a * b).sum::<f64>()
                    + linear.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>();
                let grad: Vec<f64> = az.iter().zip(linear).map(|(a, b)| a + b).collect();
                (value, DenseVector::from(grad))
            }
            TestLandscape::RosenbrockLike { dim, a } => {
                let x = x.as_slice();
                let n = *dim;
                let mut value = 0.0;
                let mut grad = vec![0.0; n];
                for i in 0..n - 1 {
                    let t = x[i + 1] - x[i] * x[i];
                    let u = 1.0 - x[i];
                    value += a * t * t + u * u;
                    grad[i] += -4.0 * a * t * x[i] - 2.0 * u;
                    grad[i + 1] += 2.0 * a * t;
                }
                (value, DenseVector::from(grad))
            }
            TestLandscape::LogisticMixture {
                directions,
                offsets,
                dim,
                ..
            } => {
                let n = *dim;
                let k = directions.len() as f64;
                let mut value = 0.0;
                let mut grad = vec![0.0; n];
                for (a, c) in directions.iter().zip(offsets) {
                    let t = a.iter().zip(x.as_slice()).map(|(p, q)| p * q).sum::<f64>() + c;
                    value += softplus(t);
                    let s = sigmoid(t);
                    for i in 0..n {
                        grad[i] += s * a[i];
                    }
                }
                value /= k;
                grad.iter_mut().for_each(|g| *g /= k);
                (value, DenseVector::from(grad))
            }
        }
    }

    fn smoothness(&self) -> Option<f64> {
        match self {
            TestLandscape::Quadratic { smoothness, .. } => Some(*smoothness),
            TestLandscape::RosenbrockLike { .. } => None,
            TestLandscape::LogisticMixture { smoothness, .. } => Some(*smoothness),
        }
    }

    fn grad_norm_at_origin(&self) -> Option<f64> {
        let origin = DenseVector::zeros(self.dim());
        Some(self.eval(&origin).1.norm_l2())
    }
}
