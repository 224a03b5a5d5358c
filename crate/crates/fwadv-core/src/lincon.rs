//! Constraint sets and exact linear minimization oracles for Lp balls.
//!
//! The feasible set is `{x : ||x - center||_p <= radius}`, optionally
//! intersected with an ambient box. The LMO solves `argmin <x, m>` over the
//! ball in closed form for any `p >= 1`; the Frank-Wolfe gap is derived from
//! it. Projections are provided for the `p = 2` and `p = infinity` cases
//! needed by the sign-step baselines.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised by constraint-set operations.
#[derive(Debug, Error)]
pub enum LinconError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite entry at index {index}")]
    NonFinite { index: usize },
    #[error("norm order must satisfy p >= 1, got {p}")]
    BadNormOrder { p: f64 },
    #[error("radius must be positive, got {radius}")]
    BadRadius { radius: f64 },
    #[error("center exits the ambient box [{lo}, {hi}] at index {index}")]
    CenterOutsideBox { index: usize, lo: f64, hi: f64 },
    #[error("point is infeasible: ||x - center||_p = {norm} > radius {radius}")]
    Infeasible { norm: f64, radius: f64 },
    #[error("projection is not implemented for p = {p}")]
    UnsupportedProjection { p: f64 },
    #[error("constraint has no ambient box")]
    MissingBox,
    #[error("empty vector")]
    Empty,
}

/// A flat, finite point of R^d. The universal iterate/gradient carrier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DenseVector {
    data: Vec<f64>,
}

impl DenseVector {
    /// Builds a vector, rejecting NaN/Inf entries and zero length.
    pub fn new(data: Vec<f64>) -> Result<Self, LinconError> {
        if data.is_empty() {
            return Err(LinconError::Empty);
        }
        for (index, v) in data.iter().enumerate() {
            if !v.is_finite() {
                return Err(LinconError::NonFinite { index });
            }
        }
        Ok(Self { data })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            data: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn dot(&self, other: &Self) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn norm_l1(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).sum()
    }

    pub fn norm_l2(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn norm_linf(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// `||self||_p` for the given order (including the limit cases).
    pub fn norm_p(&self, p: NormOrder) -> f64 {
        match p {
            NormOrder::Inf => self.norm_linf(),
            NormOrder::P(p) if p == 1.0 => self.norm_l1(),
            NormOrder::P(p) if p == 2.0 => self.norm_l2(),
            NormOrder::P(p) => self
                .data
                .iter()
                .map(|v| v.abs().powf(p))
                .sum::<f64>()
                .powf(1.0 / p),
        }
    }

    /// self + scale * other, elementwise.
    pub fn axpy(&self, scale: f64, other: &Self) -> Self {
        debug_assert_eq!(self.dim(), other.dim());
        Self {
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + scale * b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.axpy(-1.0, other)
    }

    pub fn add(&self, other: &Self) -> Self {
        self.axpy(1.0, other)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    /// Maximum absolute coordinate difference to `other`.
    pub fn linf_distance(&self, other: &Self) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |acc, (a, b)| acc.max((a - b).abs()))
    }

    pub fn l2_distance(&self, other: &Self) -> f64 {
        self.sub(other).norm_l2()
    }
}

impl From<Vec<f64>> for DenseVector {
    /// Infallible conversion for trusted data; debug builds still catch NaN.
    fn from(data: Vec<f64>) -> Self {
        debug_assert!(data.iter().all(|v| v.is_finite()));
        Self { data }
    }
}

/// Norm order of the constraint ball, with infinity as a distinguished value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NormOrder {
    P(f64),
    Inf,
}

impl NormOrder {
    pub fn validate(self) -> Result<Self, LinconError> {
        match self {
            NormOrder::Inf => Ok(self),
            NormOrder::P(p) if p.is_finite() && p >= 1.0 => Ok(self),
            NormOrder::P(p) => Err(LinconError::BadNormOrder { p }),
        }
    }

    fn as_f64(self) -> f64 {
        match self {
            NormOrder::Inf => f64::INFINITY,
            NormOrder::P(p) => p,
        }
    }
}

/// sign with sign(0) = 0; operands are finite by construction.
#[inline]
pub fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// The set `{x : ||x - center||_p <= radius}`, optionally intersected with
/// the ambient box `[lo, hi]^d`. The box defaults to `[0, 1]` (normalized
/// image inputs); use [`LpBallConstraint::without_box`] for unconstrained
/// ambient space.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LpBallConstraint {
    center: DenseVector,
    radius: f64,
    p: NormOrder,
    box_clip: Option<(f64, f64)>,
}

impl LpBallConstraint {
    /// Ball around `center` with the default `[0, 1]` ambient box.
    pub fn new(center: DenseVector, radius: f64, p: NormOrder) -> Result<Self, LinconError> {
        Self::with_box(center, radius, p, Some((0.0, 1.0)))
    }

    /// Ball with no ambient box (synthetic landscapes).
    pub fn without_box(
        center: DenseVector,
        radius: f64,
        p: NormOrder,
    ) -> Result<Self, LinconError> {
        Self::with_box(center, radius, p, None)
    }

    pub fn with_box(
        center: DenseVector,
        radius: f64,
        p: NormOrder,
        box_clip: Option<(f64, f64)>,
    ) -> Result<Self, LinconError> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(LinconError::BadRadius { radius });
        }
        let p = p.validate()?;
        if let Some((lo, hi)) = box_clip {
            for (index, v) in center.as_slice().iter().enumerate() {
                if *v < lo || *v > hi {
                    return Err(LinconError::CenterOutsideBox { index, lo, hi });
                }
            }
        }
        Ok(Self {
            center,
            radius,
            p,
            box_clip,
        })
    }

    pub fn center(&self) -> &DenseVector {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn norm_order(&self) -> NormOrder {
        self.p
    }

    pub fn box_bounds(&self) -> Option<(f64, f64)> {
        self.box_clip
    }

    pub fn dim(&self) -> usize {
        self.center.dim()
    }

    fn check_dim(&self, v: &DenseVector) -> Result<(), LinconError> {
        if v.dim() != self.dim() {
            return Err(LinconError::DimensionMismatch {
                expected: self.dim(),
                got: v.dim(),
            });
        }
        Ok(())
    }

    /// `||x - center||_p <= radius + tol`, box included when present.
    pub fn is_feasible(&self, x: &DenseVector, tol: f64) -> bool {
        if x.dim() != self.dim() {
            return false;
        }
        if x.sub(&self.center).norm_p(self.p) > self.radius + tol {
            return false;
        }
        if let Some((lo, hi)) = self.box_clip {
            if x.as_slice().iter().any(|v| *v < lo - tol || *v > hi + tol) {
                return false;
            }
        }
        true
    }

    /// Exact minimizer of `<x, m>` over the ball (the box is NOT applied
    /// here; solvers clip after the full update).
    ///
    /// Closed forms: `p = inf` flips every coordinate by `radius * sign(m_i)`
    /// with sign(0) = 0; `p = 2` steps radially against `m`; `p = 1` moves on
    /// the single largest-|m_i| coordinate (lowest index on ties); general
    /// `1 < p < inf` distributes the step as `|m_i|^{1/(p-1)}` normalized by
    /// the dual-norm sum. An all-zero `m` returns the center, which is
    /// optimal and has zero distortion.
    pub fn lmo(&self, m: &DenseVector) -> Result<DenseVector, LinconError> {
        self.check_dim(m)?;
        let c = self.center.as_slice();
        let eps = self.radius;
        let out = match self.p {
            NormOrder::Inf => m
                .as_slice()
                .iter()
                .zip(c)
                .map(|(mi, ci)| ci - eps * sign(*mi))
                .collect::<Vec<_>>(),
            NormOrder::P(p) if p == 1.0 => {
                let mut best = 0usize;
                let mut best_abs = 0.0f64;
                for (i, mi) in m.as_slice().iter().enumerate() {
                    if mi.abs() > best_abs {
                        best_abs = mi.abs();
                        best = i;
                    }
                }
                let mut out = c.to_vec();
                if best_abs > 0.0 {
                    out[best] -= eps * sign(m.as_slice()[best]);
                }
                out
            }
            NormOrder::P(p) if p == 2.0 => {
                let norm = m.norm_l2();
                if norm == 0.0 {
                    c.to_vec()
                } else {
                    m.as_slice()
                        .iter()
                        .zip(c)
                        .map(|(mi, ci)| ci - eps * mi / norm)
                        .collect()
                }
            }
            NormOrder::P(p) => {
                // q = p/(p-1) is the Holder conjugate; the optimal offset has
                // |h_i| proportional to |m_i|^{1/(p-1)} with ||h||_p = 1.
                let q = p / (p - 1.0);
                let denom = m
                    .as_slice()
                    .iter()
                    .map(|mi| mi.abs().powf(q))
                    .sum::<f64>()
                    .powf(1.0 / p);
                if denom == 0.0 {
                    c.to_vec()
                } else {
                    m.as_slice()
                        .iter()
                        .zip(c)
                        .map(|(mi, ci)| {
                            ci - eps * sign(*mi) * mi.abs().powf(1.0 / (p - 1.0)) / denom
                        })
                        .collect()
                }
            }
        };
        Ok(DenseVector::from(out))
    }

    /// Euclidean/entrywise projection onto the ball, implemented for
    /// `p = inf` (clamp) and `p = 2` (radial shrink).
    pub fn project(&self, x: &DenseVector) -> Result<DenseVector, LinconError> {
        self.check_dim(x)?;
        let c = self.center.as_slice();
        let eps = self.radius;
        match self.p {
            NormOrder::Inf => Ok(DenseVector::from(
                x.as_slice()
                    .iter()
                    .zip(c)
                    .map(|(xi, ci)| xi.clamp(ci - eps, ci + eps))
                    .collect::<Vec<_>>(),
            )),
            NormOrder::P(p) if p == 2.0 => {
                let diff = x.sub(&self.center);
                let norm = diff.norm_l2();
                if norm <= eps {
                    Ok(x.clone())
                } else {
                    Ok(self.center.axpy(eps / norm, &diff))
                }
            }
            p => Err(LinconError::UnsupportedProjection { p: p.as_f64() }),
        }
    }

    /// Entrywise clamp of `x` into the ambient box.
    pub fn box_clip(&self, x: &DenseVector) -> Result<DenseVector, LinconError> {
        self.check_dim(x)?;
        let (lo, hi) = self.box_clip.ok_or(LinconError::MissingBox)?;
        Ok(DenseVector::from(
            x.as_slice()
                .iter()
                .map(|v| v.clamp(lo, hi))
                .collect::<Vec<_>>(),
        ))
    }

    /// Clamp into the box when one is present, otherwise pass through.
    pub fn box_clip_opt(&self, x: DenseVector) -> Result<DenseVector, LinconError> {
        if self.box_clip.is_some() {
            self.box_clip(&x)
        } else {
            Ok(x)
        }
    }

    /// Frank-Wolfe gap `max_{x' in ball} <x - x', g>` at a feasible `x` for
    /// a gradient `g`, computed through the LMO. Zero exactly at constrained
    /// stationary points; tiny negatives (>= -1e-12) are float noise.
    pub fn fw_gap(&self, x: &DenseVector, g: &DenseVector) -> Result<f64, LinconError> {
        self.check_dim(x)?;
        self.check_dim(g)?;
        let norm = x.sub(&self.center).norm_p(self.p);
        if norm > self.radius + 1e-9 {
            return Err(LinconError::Infeasible {
                norm,
                radius: self.radius,
            });
        }
        let v_hat = self.lmo(g)?;
        Ok(x.sub(&v_hat).dot(g))
    }
}
