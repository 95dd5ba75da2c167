//! Gaussian fits of feature sets and the closed-form Fréchet distance
//! between them:
//!
//! ```text
//! d = |μa - μb|² + tr(Σa + Σb - 2 (Σa^½ Σb Σa^½)^½)
//! ```
//!
//! Both covariances are loaded with `eps * I` before use. The square root of
//! the (non-symmetric) product Σa Σb is taken through the similar symmetric
//! matrix Σa^½ Σb Σa^½, so only symmetric eigendecompositions are needed.
//! When Σa has a Cholesky factor L, Lᵀ Σb L is used in its place: it is
//! similar to the same product, so its spectrum (and the trace of its square
//! root) is identical, and it avoids a full eigenvector solve.

use log::warn;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_traits::Float;
use thiserror::Error;

use crate::motion::{FieldSelection, HistogramKind, MotionFeature};
use crate::scalar::LinalgScalar;

/// Diagonal loading applied to both covariances.
pub const DEFAULT_EPS: f64 = 1e-6;

/// Largest |M - Mᵀ| entry accepted by [`sqrtm_psd`], relative to max(1, max |M|).
pub const SYMMETRY_TOLERANCE: f64 = 1e-8;

/// Eigenvalues of a fitted covariance may dip this far below zero from rounding.
pub const PSD_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Error, PartialEq)]
pub enum FrechetError {
    #[error("need at least 2 samples to fit a Gaussian, got {0}")]
    TooFewSamples(usize),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("feature kind mismatch: {0} vs {1}")]
    KindMismatch(String, String),
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("matrix is not square: {0}x{1}")]
    NotSquare(usize, usize),
}

/// Empirical mean and unbiased covariance of a sample.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianStats<T: LinalgScalar> {
    mean: DVector<T>,
    cov: DMatrix<T>,
    samples: usize,
}

impl<T: LinalgScalar> GaussianStats<T> {
    /// Statistics given directly; the covariance is symmetrized.
    pub fn from_parts(mean: DVector<T>, cov: DMatrix<T>, samples: usize) -> Result<Self, FrechetError> {
        if cov.nrows() != cov.ncols() {
            return Err(FrechetError::NotSquare(cov.nrows(), cov.ncols()));
        }
        if cov.nrows() != mean.len() {
            return Err(FrechetError::DimensionMismatch(mean.len(), cov.nrows()));
        }
        if samples < 2 {
            return Err(FrechetError::TooFewSamples(samples));
        }
        let cov = symmetrize(cov);
        Ok(Self { mean, cov, samples })
    }

    pub fn mean(&self) -> &DVector<T> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<T> {
        &self.cov
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

fn symmetrize<T: LinalgScalar>(m: DMatrix<T>) -> DMatrix<T> {
    let half = T::lit(0.5);
    (&m + m.transpose()) * half
}

fn max_asymmetry<T: LinalgScalar>(m: &DMatrix<T>) -> (f64, f64) {
    let mut asym = 0.0f64;
    let mut scale = 0.0f64;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            asym = asym.max((m[(i, j)] - m[(j, i)]).as_f64().abs());
            scale = scale.max(m[(i, j)].as_f64().abs());
        }
    }
    (asym, scale)
}

/// Sum of `rows[lo..hi]`, split in halves down to small blocks so the rounding
/// pattern does not depend on how callers batch the input.
fn pairwise_sum<T: LinalgScalar>(rows: &[&[T]], dim: usize) -> Vec<T> {
    const BLOCK: usize = 8;
    if rows.len() <= BLOCK {
        let mut acc = vec![T::zero(); dim];
        for row in rows {
            for (a, &v) in acc.iter_mut().zip(row.iter()) {
                *a += v;
            }
        }
        return acc;
    }
    let (left, right) = rows.split_at(rows.len() / 2);
    let mut acc = pairwise_sum(left, dim);
    for (a, v) in acc.iter_mut().zip(pairwise_sum(right, dim)) {
        *a += v;
    }
    acc
}

/// Fits mean and unbiased (n - 1) covariance to equal-length sample rows.
pub fn fit_gaussian_rows<T: LinalgScalar>(rows: &[&[T]]) -> Result<GaussianStats<T>, FrechetError> {
    let n = rows.len();
    if n < 2 {
        return Err(FrechetError::TooFewSamples(n));
    }
    let d = rows[0].len();
    if let Some(bad) = rows.iter().find(|r| r.len() != d) {
        return Err(FrechetError::DimensionMismatch(d, bad.len()));
    }
    if n < d {
        warn!("fitting a {d}-dimensional Gaussian to {n} samples; the covariance is rank deficient");
    }
    let inv_n = T::one() / T::from_count(n);
    let mean = DVector::from_vec(pairwise_sum(rows, d)).map(|v| v * inv_n);
    let centered = DMatrix::from_fn(n, d, |i, j| rows[i][j] - mean[j]);
    let cov = centered.transpose() * &centered * (T::one() / T::from_count(n - 1));
    Ok(GaussianStats { mean, cov: symmetrize(cov), samples: n })
}

/// Fits a Gaussian to clip features, which must share length and kind.
pub fn fit_gaussian<T: LinalgScalar>(features: &[MotionFeature<T>]) -> Result<GaussianStats<T>, FrechetError> {
    if let Some(first) = features.first() {
        check_kinds(first.fields(), first.hist(), features)?;
    }
    let rows: Vec<&[T]> = features.iter().map(|f| f.data()).collect();
    fit_gaussian_rows(&rows)
}

fn kind_label(fields: FieldSelection, hist: HistogramKind) -> String {
    format!("{fields}-{hist}")
}

fn check_kinds<T: LinalgScalar>(
    fields: FieldSelection,
    hist: HistogramKind,
    features: &[MotionFeature<T>],
) -> Result<(), FrechetError> {
    match features.iter().find(|f| f.fields() != fields || f.hist() != hist) {
        Some(f) => Err(FrechetError::KindMismatch(kind_label(fields, hist), kind_label(f.fields(), f.hist()))),
        None => Ok(()),
    }
}

/// Principal square root of a symmetric PSD matrix: Q sqrt(max(Λ, 0)) Qᵀ.
pub fn sqrtm_psd<T: LinalgScalar>(m: &DMatrix<T>) -> Result<DMatrix<T>, FrechetError> {
    if m.nrows() != m.ncols() {
        return Err(FrechetError::NotSquare(m.nrows(), m.ncols()));
    }
    let (asym, scale) = max_asymmetry(m);
    if asym > SYMMETRY_TOLERANCE * scale.max(1.0) {
        return Err(FrechetError::NotSymmetric(asym));
    }
    let eig = SymmetricEigen::new(m.clone());
    let roots = eig.eigenvalues.map(|l| if l > T::zero() { Float::sqrt(l) } else { T::zero() });
    let scaled = DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| eig.eigenvectors[(i, j)] * roots[j]);
    Ok(symmetrize(&scaled * eig.eigenvectors.transpose()))
}

fn add_eps<T: LinalgScalar>(cov: &DMatrix<T>, eps: T) -> DMatrix<T> {
    let mut out = cov.clone();
    for i in 0..out.nrows() {
        out[(i, i)] += eps;
    }
    out
}

/// Fréchet distance between two fitted Gaussians.
#[derive(Clone, Debug, PartialEq)]
pub struct FvmdScore<T> {
    /// Distance, clamped at zero.
    pub value: T,
    /// Value before clamping.
    pub raw_value: T,
    pub dim: usize,
    pub n_gen: usize,
    pub n_ref: usize,
    pub eps: f64,
    /// Set when the clamp removed more than 1e-6 tr(Σa + Σb).
    pub numerical_warning: bool,
}

/// |μa - μb|² + tr(Σa + Σb - 2 sqrtm(Σa^½ Σb Σa^½)) with both Σ loaded by `eps * I`.
pub fn frechet_distance<T: LinalgScalar>(
    gen: &GaussianStats<T>,
    reference: &GaussianStats<T>,
    eps: f64,
) -> Result<FvmdScore<T>, FrechetError> {
    if gen.dim() != reference.dim() {
        return Err(FrechetError::DimensionMismatch(gen.dim(), reference.dim()));
    }
    let e = T::lit(eps);
    let cov_a = add_eps(&gen.cov, e);
    let cov_b = add_eps(&reference.cov, e);

    let diff = &gen.mean - &reference.mean;
    let mean_term = diff.dot(&diff);

    let inner = match cov_a.clone().cholesky() {
        Some(chol) => {
            let l = chol.unpack();
            symmetrize(l.transpose() * &cov_b * &l)
        }
        None => {
            let root_a = sqrtm_psd(&cov_a)?;
            symmetrize(&root_a * &cov_b * &root_a)
        }
    };
    // tr sqrtm(M) is the sum of the square roots of M's (clamped) eigenvalues.
    let cross_trace = inner
        .symmetric_eigenvalues()
        .iter()
        .fold(T::zero(), |acc, &l| if l > T::zero() { acc + Float::sqrt(l) } else { acc });

    let trace_sum = cov_a.trace() + cov_b.trace();
    let raw = mean_term + trace_sum - T::lit(2.0) * cross_trace;
    let value = if raw > T::zero() { raw } else { T::zero() };
    let clamped = (value - raw).as_f64();
    let numerical_warning = clamped > 1e-6 * trace_sum.as_f64();
    if numerical_warning {
        warn!("Fréchet distance clamped from {:e} to 0 (trace {:e})", raw.as_f64(), trace_sum.as_f64());
    }
    Ok(FvmdScore {
        value,
        raw_value: raw,
        dim: gen.dim(),
        n_gen: gen.samples,
        n_ref: reference.samples,
        eps,
        numerical_warning,
    })
}

/// Fits both feature sets and returns their Fréchet distance.
pub fn fvmd<T: LinalgScalar>(
    gen_features: &[MotionFeature<T>],
    ref_features: &[MotionFeature<T>],
    eps: f64,
) -> Result<FvmdScore<T>, FrechetError> {
    if let (Some(g), Some(r)) = (gen_features.first(), ref_features.first()) {
        if g.len() != r.len() {
            return Err(FrechetError::DimensionMismatch(g.len(), r.len()));
        }
        check_kinds(g.fields(), g.hist(), ref_features)?;
    }
    let gen = fit_gaussian(gen_features)?;
    let reference = fit_gaussian(ref_features)?;
    frechet_distance(&gen, &reference, eps)
}
