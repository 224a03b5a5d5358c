//! Zeroth-order gradient estimation from symmetric two-point probes.
//!
//! For `b` sensing directions `u_i` the estimator accumulates
//! `c_i * (f(x + delta u_i) - f(x - delta u_i)) * u_i`, where `c_i` is
//! `d / (2 delta b)` for unit-sphere sensing and `1 / (2 delta b)` for
//! standard Gaussian sensing. One call consumes exactly `2b` queries.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lincon::DenseVector;
use crate::oracles::{OracleError, ValueOracle};

/// Sensing-vector distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sensing {
    /// Uniform on the Euclidean unit sphere.
    Sphere,
    /// Standard multivariate Gaussian.
    Gaussian,
}

/// Knobs of the estimator: sample count `b`, probe radius `delta`, sensing
/// distribution, and the seed of the run's random stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub samples_b: usize,
    pub probe_delta: f64,
    pub sensing: Sensing,
    pub rng_seed: u64,
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<(), EstimatorError> {
        if self.samples_b == 0 {
            return Err(EstimatorError::BadConfig("samples_b must be >= 1"));
        }
        if !(self.probe_delta > 0.0 && self.probe_delta.is_finite()) {
            return Err(EstimatorError::BadConfig("probe_delta must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("invalid estimator config: {0}")]
    BadConfig(&'static str),
    #[error("oracle returned a non-finite value during estimation")]
    NonFiniteValue,
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

/// Uniform unit-sphere direction via a normalized standard Gaussian draw.
/// The (probability-zero) all-zero draw is redrawn.
pub fn sample_sphere(rng: &mut ChaCha8Rng, dim: usize) -> DenseVector {
    loop {
        let v: Vec<f64> = (0..dim)
            .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 && norm.is_finite() {
            return DenseVector::from(v.iter().map(|x| x / norm).collect::<Vec<_>>());
        }
    }
}

/// Standard Gaussian direction.
pub fn sample_gaussian(rng: &mut ChaCha8Rng, dim: usize) -> DenseVector {
    DenseVector::from(
        (0..dim)
            .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect::<Vec<_>>(),
    )
}

/// Gradient estimate plus the mean of the probe values, a free estimate of
/// the smoothed objective at `x`.
pub struct Estimate {
    pub gradient: DenseVector,
    pub mean_value: f64,
}

/// Core estimator driven by an external random stream, so a solver can run
/// one stream across all of its iterations. Draws are consumed in a fixed
/// order per sample i: direction u_i, then f(x + delta u_i), then
/// f(x - delta u_i).
pub fn grad_est_with_rng(
    cfg: &EstimatorConfig,
    f: &ValueOracle<'_>,
    x: &DenseVector,
    rng: &mut ChaCha8Rng,
) -> Result<Estimate, EstimatorError> {
    cfg.validate()?;
    let d = x.dim();
    let b = cfg.samples_b;
    // A call costs exactly 2b queries; refuse upfront rather than burn a
    // partial estimate against the budget.
    f.ensure_affordable(2 * b as u64)?;
    let delta = cfg.probe_delta;
    let coeff = match cfg.sensing {
        Sensing::Sphere => d as f64 / (2.0 * delta * b as f64),
        Sensing::Gaussian => 1.0 / (2.0 * delta * b as f64),
    };
    let mut q = vec![0.0; d];
    let mut value_sum = 0.0;
    for _ in 0..b {
        let u = match cfg.sensing {
            Sensing::Sphere => sample_sphere(rng, d),
            Sensing::Gaussian => sample_gaussian(rng, d),
        };
        let plus = f.eval(&x.axpy(delta, &u))?;
        let minus = f.eval(&x.axpy(-delta, &u))?;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(EstimatorError::NonFiniteValue);
        }
        let w = coeff * (plus - minus);
        for (qi, ui) in q.iter_mut().zip(u.as_slice()) {
            *qi += w * ui;
        }
        value_sum += 0.5 * (plus + minus);
    }
    Ok(Estimate {
        gradient: DenseVector::from(q),
        mean_value: value_sum / b as f64,
    })
}

/// Standalone estimate with a stream freshly seeded from the config; two
/// calls with the same config are bitwise identical.
pub fn grad_est(
    cfg: &EstimatorConfig,
    f: &ValueOracle<'_>,
    x: &DenseVector,
) -> Result<DenseVector, EstimatorError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    Ok(grad_est_with_rng(cfg, f, x, &mut rng)?.gradient)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::{wrap_counting, GradientOracle, QueryMeter, TestLandscape, ValueOracle};

    fn sphere_cfg(b: usize, delta: f64, seed: u64) -> EstimatorConfig {
        EstimatorConfig {
            samples_b: b,
            probe_delta: delta,
            sensing: Sensing::Sphere,
            rng_seed: seed,
        }
    }

    #[test]
    fn sphere_draws_are_unit_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let u = sample_sphere(&mut rng, 7);
            assert!((u.norm_l2() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sphere_dimension_one_is_plus_minus_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let u = sample_sphere(&mut rng, 1);
            assert!((u.as_slice()[0].abs() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn sphere_mean_vanishes() {
        // CLT bound: per-coordinate std of the mean over n draws on S^{d-1}
        // is 1/sqrt(d n); 0.005 is > 3 sigma for d=10, n=1e6.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = 10;
        let n = 1_000_000;
        let mut mean = vec![0.0; d];
        for _ in 0..n {
            let u = sample_sphere(&mut rng, d);
            for (m, ui) in mean.iter_mut().zip(u.as_slice()) {
                *m += ui;
            }
        }
        for m in &mut mean {
            *m /= n as f64;
            assert!(m.abs() < 0.005, "coordinate mean too large: {m}");
        }
    }

    #[test]
    fn linear_objective_sphere_estimator_recovers_gradient() {
        // For f = <a, x> the symmetric difference is exact per sample:
        // q = (d/b) sum <a, u_i> u_i, whose mean is a since E[d u u'] = I.
        let d = 20;
        let a: Vec<f64> = (0..d).map(|i| ((i as f64) * 0.37).sin() + 0.2).collect();
        let a_dv = DenseVector::from(a.clone());
        let meter = QueryMeter::new(None);
        let oracle = ValueOracle::new(meter, |x: &DenseVector| {
            x.as_slice().iter().zip(&a).map(|(p, q)| p * q).sum()
        });
        let x = DenseVector::zeros(d);
        let cfg = sphere_cfg(100_000, 0.1, 77);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
        let est = grad_est_with_rng(&cfg, &oracle, &x, &mut rng).unwrap();
        let rel = est.gradient.sub(&a_dv).norm_l2() / a_dv.norm_l2();
        assert!(rel < 0.02, "relative error {rel}");
    }

    #[test]
    fn gaussian_estimator_recovers_quadratic_gradient() {
        // f = ||x||^2/2 has grad = x, and smoothing leaves quadratic
        // gradients unchanged, so the Gaussian estimator mean is x.
        let d = 10;
        let eye: Vec<f64> = {
            let mut m = vec![0.0; d * d];
            for i in 0..d {
                m[i * d + i] = 1.0;
            }
            m
        };
        let f = TestLandscape::quadratic_from_parts(eye, vec![0.0; d], 1.0);
        let oracle = wrap_counting(&f, None);
        let x = DenseVector::from(vec![1.0; d]);
        let cfg = EstimatorConfig {
            samples_b: 100_000,
            probe_delta: 1e-3,
            sensing: Sensing::Gaussian,
            rng_seed: 4,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
        let est = grad_est_with_rng(&cfg, &oracle, &x, &mut rng).unwrap();
        let rel = est.gradient.sub(&x).norm_l2() / x.norm_l2();
        assert!(rel < 0.02, "relative error {rel}");
    }

    #[test]
    fn estimate_is_reproducible_bitwise() {
        let f = TestLandscape::make_quadratic(6, 9);
        let x = DenseVector::from(vec![0.3; 6]);
        let cfg = sphere_cfg(1, 0.01, 123);
        let a = grad_est(&cfg, &wrap_counting(&f, None), &x).unwrap();
        let b = grad_est(&cfg, &wrap_counting(&f, None), &x).unwrap();
        for (p, q) in a.as_slice().iter().zip(b.as_slice()) {
            assert_eq!(p.to_bits(), q.to_bits());
        }
    }

    #[test]
    fn query_cost_is_exactly_two_b() {
        let f = TestLandscape::make_quadratic(4, 9);
        let oracle = wrap_counting(&f, None);
        let x = DenseVector::zeros(4);
        for b in [1usize, 7, 25] {
            let before = oracle.queries_used();
            grad_est(&sphere_cfg(b, 0.01, 5), &oracle, &x).unwrap();
            assert_eq!(oracle.queries_used() - before, 2 * b as u64);
        }
    }

    #[test]
    fn budget_exhaustion_refuses_without_spending() {
        let f = TestLandscape::make_quadratic(4, 9);
        let oracle = wrap_counting(&f, Some(9));
        let x = DenseVector::zeros(4);
        // b=5 needs 10 queries; the call is refused before any probe.
        let err = grad_est(&sphere_cfg(5, 0.01, 5), &oracle, &x).unwrap_err();
        assert!(matches!(
            err,
            EstimatorError::Oracle(OracleError::BudgetExhausted { .. })
        ));
        assert_eq!(oracle.queries_used(), 0);
    }

    #[test]
    fn non_finite_values_abort_estimation() {
        let meter = QueryMeter::new(None);
        let oracle = ValueOracle::new(meter, |_: &DenseVector| f64::NAN);
        let x = DenseVector::zeros(3);
        let err = grad_est(&sphere_cfg(2, 0.01, 5), &oracle, &x).unwrap_err();
        assert!(matches!(err, EstimatorError::NonFiniteValue));
    }

    #[test]
    fn bias_bounded_by_delta_l_d_over_two() {
        // On a non-quadratic smooth landscape the smoothed gradient differs
        // from the true one; the gap must stay within delta*L*d/2 (plus the
        // Monte-Carlo error of estimating the mean, which the sample size
        // keeps well below the bound).
        let d = 20;
        let f = TestLandscape::logistic_mixture(d, 12, 7);
        let l = f.smoothness().unwrap();
        let x = DenseVector::from(vec![0.2; d]);
        let truth = f.eval(&x).1;
        let delta = 0.05;
        let bound = delta * l * d as f64 / 2.0;
        let oracle = wrap_counting(&f, None);
        let cfg = EstimatorConfig {
            samples_b: 100,
            probe_delta: delta,
            sensing: Sensing::Sphere,
            rng_seed: 0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let repeats = 3000;
        let mut mean = vec![0.0; d];
        for _ in 0..repeats {
            let est = grad_est_with_rng(&cfg, &oracle, &x, &mut rng).unwrap();
            for (m, g) in mean.iter_mut().zip(est.gradient.as_slice()) {
                *m += g / repeats as f64;
            }
        }
        let bias = DenseVector::from(mean).sub(&truth).norm_l2();
        assert!(
            bias <= bound,
            "empirical bias {bias} above delta*L*d/2 = {bound}"
        );
    }

    #[test]
    fn unbiased_for_smoothed_quadratic() {
        // Mean of many independent estimates converges to the true gradient
        // on quadratics (smoothing does not move quadratic gradients).
        let d = 8;
        let f = TestLandscape::make_quadratic(d, 33);
        let x = DenseVector::from(vec![0.25; d]);
        let truth = f.eval(&x).1;
        let oracle = wrap_counting(&f, None);
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let cfg = sphere_cfg(50, 0.01, 0);
        let repeats = 4000;
        let mut mean = vec![0.0; d];
        for _ in 0..repeats {
            let est = grad_est_with_rng(&cfg, &oracle, &x, &mut rng).unwrap();
            for (m, g) in mean.iter_mut().zip(est.gradient.as_slice()) {
                *m += g;
            }
        }
        mean.iter_mut().for_each(|m| *m /= repeats as f64);
        let mean = DenseVector::from(mean);
        let rel = mean.sub(&truth).norm_l2() / truth.norm_l2();
        assert!(rel < 0.02, "relative bias {rel}");
    }
}
