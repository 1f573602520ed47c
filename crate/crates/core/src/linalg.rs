//! Dense symmetric linear algebra: sample covariances, resolvents,
//! eigenvalues and norms. Every other module builds on these types.
//!
//! All types are immutable after construction and all operations are pure;
//! everything here is safe to call from any number of threads. The eigen
//! decomposition of an [`SpdMatrix`] is computed once on demand and published
//! through a `OnceLock`.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, DVectorView};

use crate::error::{Error, Result};

/// Absolute floor under which a shifted matrix is treated as singular.
pub const PD_FLOOR: f64 = 1e-12;

/// Relative tolerance for the PSD check (eigenvalues may undershoot zero by
/// round-off from `X X^T` accumulation).
pub const PSD_REL_TOL: f64 = 1e-10;

/// Relative tolerance for the symmetry check on construction.
const SYM_REL_TOL: f64 = 1e-12;

/// Neumaier-compensated sum; reductions over `d^2` terms at mixed magnitudes
/// would otherwise lose digits.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// `sum_ij a_ij * b_ij`; equals `tr(A B)` when both arguments are symmetric.
pub fn trace_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    debug_assert_eq!(a.shape(), b.shape());
    compensated_sum(a.iter().zip(b.iter()).map(|(x, y)| x * y))
}

/// `x^T A x` with compensated accumulation.
pub fn quadratic_form(a: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    let y = a * x;
    compensated_sum(x.iter().zip(y.iter()).map(|(u, v)| u * v))
}

/// Inverse of a symmetric positive-definite matrix through its Cholesky
/// factor. Fast path for one-shot inversions where the eigen cache would be
/// wasted; returns `None` when the factorization fails.
pub(crate) fn cholesky_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    nalgebra::Cholesky::new(m.clone()).map(|c| c.inverse())
}

fn check_finite(data: &DMatrix<f64>) -> Result<()> {
    for j in 0..data.ncols() {
        for i in 0..data.nrows() {
            if !data[(i, j)].is_finite() {
                return Err(Error::NonFinite { row: i, col: j });
            }
        }
    }
    Ok(())
}

/// A `d x n` matrix whose columns are samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    data: DMatrix<f64>,
}

impl SampleMatrix {
    /// Wraps a `d x n` matrix with `d >= 1`, `n >= 1` and finite entries.
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::InvalidInput(format!(
                "sample matrix must have d >= 1 and n >= 1 (got {} x {})",
                data.nrows(),
                data.ncols()
            )));
        }
        check_finite(&data)?;
        Ok(Self { data })
    }

    /// A matrix with `d` rows and no samples; concatenating it is a no-op.
    pub fn empty(d: usize) -> Self {
        assert!(d >= 1, "dimension must be at least 1");
        Self {
            data: DMatrix::zeros(d, 0),
        }
    }

    pub fn from_fn(d: usize, n: usize, f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        Self::new(DMatrix::from_fn(d, n, f))
    }

    /// Dimension `d` of each sample.
    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    /// Number of samples `n`.
    pub fn len(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.data.ncols() == 0
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn column(&self, j: usize) -> DVectorView<'_, f64> {
        self.data.column(j)
    }

    /// Column-wise concatenation `[self, other]`.
    pub fn concat(&self, other: &SampleMatrix) -> Result<SampleMatrix> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch(format!(
                "cannot concatenate samples of dimension {} with {}",
                self.dim(),
                other.dim()
            )));
        }
        let mut data = DMatrix::zeros(self.dim(), self.len() + other.len());
        data.columns_mut(0, self.len()).copy_from(&self.data);
        data.columns_mut(self.len(), other.len())
            .copy_from(&other.data);
        Ok(SampleMatrix { data })
    }

    /// Copy with column `j` zeroed (the sample count stays `n`).
    pub fn zero_column(&self, j: usize) -> Result<SampleMatrix> {
        if j >= self.len() {
            return Err(Error::InvalidInput(format!(
                "column index {j} out of range for n = {}",
                self.len()
            )));
        }
        let mut data = self.data.clone();
        data.column_mut(j).fill(0.0);
        Ok(SampleMatrix { data })
    }
}

/// Eigendecomposition of a symmetric matrix, eigenvalues ascending and
/// eigenvectors orthonormal in matching column order.
#[derive(Debug, Clone)]
pub struct EigenPair {
    values: DVector<f64>,
    vectors: DMatrix<f64>,
}

impl EigenPair {
    /// Eigenvalues in ascending order.
    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    /// Orthonormal eigenvectors, column `k` paired with `values()[k]`.
    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    /// Reassembles `V f(diag) V^T` for a scalar function of the eigenvalues.
    pub fn map_rebuild(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let d = self.values.len();
        let mut scaled = self.vectors.clone();
        for k in 0..d {
            let w = f(self.values[k]);
            scaled.column_mut(k).scale_mut(w);
        }
        scaled * self.vectors.transpose()
    }
}

/// A real symmetric positive semi-definite `d x d` matrix with a lazily
/// populated eigen cache.
#[derive(Debug)]
pub struct SpdMatrix {
    data: DMatrix<f64>,
    eigen: OnceLock<EigenPair>,
}

impl Clone for SpdMatrix {
    fn clone(&self) -> Self {
        let eigen = OnceLock::new();
        if let Some(e) = self.eigen.get() {
            let _ = eigen.set(e.clone());
        }
        Self {
            data: self.data.clone(),
            eigen,
        }
    }
}

impl PartialEq for SpdMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.data == other.data
    }
}

impl SpdMatrix {
    /// Accepts a square matrix that is symmetric up to round-off
    /// (`max |a_ij - a_ji| <= 1e-12 max |a|`) and stores `(A + A^T) / 2`.
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() != data.ncols() || data.nrows() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "expected a square matrix with d >= 1, got {} x {}",
                data.nrows(),
                data.ncols()
            )));
        }
        check_finite(&data)?;
        let scale = data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut asym = 0.0f64;
        for i in 0..data.nrows() {
            for j in (i + 1)..data.ncols() {
                asym = asym.max((data[(i, j)] - data[(j, i)]).abs());
            }
        }
        if asym > SYM_REL_TOL * scale.max(1e-300) {
            return Err(Error::NotSymmetric(asym));
        }
        Ok(Self::from_symmetric_unchecked(data))
    }

    /// Symmetrizes without the asymmetry gate; for matrices that are
    /// symmetric by construction (e.g. `X X^T`, `V D V^T`).
    pub(crate) fn from_symmetric_unchecked(data: DMatrix<f64>) -> Self {
        let sym = (&data + data.transpose()) * 0.5;
        Self {
            data: sym,
            eigen: OnceLock::new(),
        }
    }

    pub fn identity(d: usize) -> Self {
        Self::from_symmetric_unchecked(DMatrix::identity(d, d))
    }

    pub fn zeros(d: usize) -> Self {
        Self::from_symmetric_unchecked(DMatrix::zeros(d, d))
    }

    pub fn from_diagonal(diag: &DVector<f64>) -> Result<Self> {
        let m = DMatrix::from_diagonal(diag);
        check_finite(&m)?;
        Ok(Self::from_symmetric_unchecked(m))
    }

    pub fn scaled_identity(d: usize, s: f64) -> Self {
        Self::from_symmetric_unchecked(DMatrix::identity(d, d) * s)
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    /// Eigendecomposition, computed once and cached.
    pub fn eigen(&self) -> &EigenPair {
        self.eigen.get_or_init(|| {
            let se = nalgebra::SymmetricEigen::new(self.data.clone());
            let d = se.eigenvalues.len();
            let mut order: Vec<usize> = (0..d).collect();
            order.sort_by(|&a, &b| se.eigenvalues[a].total_cmp(&se.eigenvalues[b]));
            let values = DVector::from_iterator(d, order.iter().map(|&k| se.eigenvalues[k]));
            let mut vectors = DMatrix::zeros(d, d);
            for (dst, &src) in order.iter().enumerate() {
                vectors.column_mut(dst).copy_from(&se.eigenvectors.column(src));
            }
            EigenPair { values, vectors }
        })
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigen().values()[0]
    }

    pub fn max_eigenvalue(&self) -> f64 {
        let v = self.eigen().values();
        v[v.len() - 1]
    }

    /// Operator norm (largest eigenvalue magnitude).
    pub fn operator_norm(&self) -> f64 {
        self.min_eigenvalue().abs().max(self.max_eigenvalue().abs())
    }

    pub fn trace(&self) -> f64 {
        compensated_sum((0..self.dim()).map(|i| self.data[(i, i)]))
    }

    pub fn is_strictly_pd(&self) -> bool {
        self.min_eigenvalue() > PD_FLOOR
    }

    /// Checks the PSD invariant `lambda_min >= -1e-10 lambda_max`.
    pub fn validate_psd(&self) -> Result<()> {
        let min = self.min_eigenvalue();
        let max = self.max_eigenvalue().abs();
        if min < -PSD_REL_TOL * max.max(1.0) {
            return Err(Error::InvalidInput(format!(
                "matrix is not positive semi-definite (lambda_min = {min:.3e})"
            )));
        }
        Ok(())
    }

    /// Strict inverse; fails with `SingularSigma` below the PD floor.
    pub fn inverse(&self) -> Result<SpdMatrix> {
        let min = self.min_eigenvalue();
        if min <= PD_FLOOR {
            return Err(Error::SingularSigma(min));
        }
        Ok(Self::from_symmetric_unchecked(
            self.eigen().map_rebuild(|e| 1.0 / e),
        ))
    }

    /// PSD square root; eigenvalues below zero are clamped.
    pub fn sqrt(&self) -> SpdMatrix {
        Self::from_symmetric_unchecked(self.eigen().map_rebuild(|e| e.max(0.0).sqrt()))
    }

    /// `self + s * I`.
    pub fn add_scaled_identity(&self, s: f64) -> SpdMatrix {
        let mut m = self.data.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += s;
        }
        Self::from_symmetric_unchecked(m)
    }

    /// `a * self + b * other`.
    pub fn linear_combination(&self, a: f64, other: &SpdMatrix, b: f64) -> Result<SpdMatrix> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch(format!(
                "cannot combine {} x {} with {} x {}",
                self.dim(),
                self.dim(),
                other.dim(),
                other.dim()
            )));
        }
        Ok(Self::from_symmetric_unchecked(
            &self.data * a + &other.data * b,
        ))
    }
}

/// Scalar or matrix shift for [`resolvent`].
#[derive(Debug, Clone, Copy)]
pub enum Shift<'a> {
    Scalar(f64),
    Matrix(&'a SpdMatrix),
}

/// Sample covariance `X X^T / n`. An empty matrix yields the zero matrix.
pub fn sample_covariance(x: &SampleMatrix) -> SpdMatrix {
    let d = x.dim();
    if x.is_empty() {
        return SpdMatrix::zeros(d);
    }
    let n = x.len() as f64;
    let prod = x.data() * x.data().transpose();
    SpdMatrix::from_symmetric_unchecked(prod / n)
}

/// Pooled covariance `(X X^T + G G^T) / (n + m)` without materialising the
/// concatenated matrix.
pub fn pooled_covariance(x: &SampleMatrix, g: &SampleMatrix) -> Result<SpdMatrix> {
    if x.dim() != g.dim() {
        return Err(Error::DimensionMismatch(format!(
            "sample dimensions differ: {} vs {}",
            x.dim(),
            g.dim()
        )));
    }
    let total = x.len() + g.len();
    if total == 0 {
        return Ok(SpdMatrix::zeros(x.dim()));
    }
    let mut prod = x.data() * x.data().transpose();
    if !g.is_empty() {
        prod += g.data() * g.data().transpose();
    }
    Ok(SpdMatrix::from_symmetric_unchecked(prod / total as f64))
}

/// Resolvent `(C + shift)^{-1}` through the symmetric eigendecomposition of
/// `C` (scalar shift, so a lambda sweep reuses one factorization) or of
/// `C + D` (matrix shift).
pub fn resolvent(c: &SpdMatrix, shift: Shift<'_>) -> Result<SpdMatrix> {
    match shift {
        Shift::Scalar(lambda) => {
            let min = c.min_eigenvalue() + lambda;
            if min <= PD_FLOOR {
                return Err(Error::SingularShift {
                    min_eig: min,
                    tol: PD_FLOOR,
                });
            }
            Ok(SpdMatrix::from_symmetric_unchecked(
                c.eigen().map_rebuild(|e| 1.0 / (e + lambda)),
            ))
        }
        Shift::Matrix(d) => {
            let sum = c.linear_combination(1.0, d, 1.0)?;
            let min = sum.min_eigenvalue();
            if min <= PD_FLOOR {
                return Err(Error::SingularShift {
                    min_eig: min,
                    tol: PD_FLOOR,
                });
            }
            Ok(SpdMatrix::from_symmetric_unchecked(
                sum.eigen().map_rebuild(|e| 1.0 / e),
            ))
        }
    }
}

/// `(C + lambda I)^{-1}`.
pub fn resolvent_scalar(c: &SpdMatrix, lambda: f64) -> Result<SpdMatrix> {
    resolvent(c, Shift::Scalar(lambda))
}

/// Leave-one-out covariance: the covariance of `X` with column `j` zeroed,
/// i.e. `(X X^T - x_j x_j^T) / n`.
pub fn leave_one_out_covariance(x: &SampleMatrix, j: usize) -> Result<SpdMatrix> {
    if j >= x.len() {
        return Err(Error::InvalidInput(format!(
            "column index {j} out of range for n = {}",
            x.len()
        )));
    }
    let n = x.len() as f64;
    let c = sample_covariance(x);
    let xj = x.column(j);
    let mut m = c.data().clone();
    for a in 0..x.dim() {
        for b in 0..x.dim() {
            m[(a, b)] -= xj[a] * xj[b] / n;
        }
    }
    Ok(SpdMatrix::from_symmetric_unchecked(m))
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(a: &SpdMatrix) -> f64 {
    a.min_eigenvalue()
}

/// Squared Frobenius distance `sum_ij (a_ij - b_ij)^2`.
pub fn frobenius_sq_distance(a: &SpdMatrix, b: &SpdMatrix) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch(format!(
            "{} x {} vs {} x {}",
            a.dim(),
            a.dim(),
            b.dim(),
            b.dim()
        )));
    }
    Ok(compensated_sum(
        a.data()
            .iter()
            .zip(b.data().iter())
            .map(|(x, y)| (x - y) * (x - y)),
    ))
}

/// Squared Frobenius norm.
pub fn frobenius_norm_sq(a: &DMatrix<f64>) -> f64 {
    compensated_sum(a.iter().map(|v| v * v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{build_sigma, sample_data, NoiseSpec, RngStream, SigmaSpec};

    fn random_samples(d: usize, n: usize, seed: u64) -> SampleMatrix {
        let sigma = build_sigma(&SigmaSpec::Identity { d }).unwrap();
        sample_data(&sigma, n, &NoiseSpec::Gaussian, RngStream::new(seed, 0))
    }

    fn random_spd(d: usize, seed: u64) -> SpdMatrix {
        let x = random_samples(d, 3 * d, seed);
        sample_covariance(&x).add_scaled_identity(0.05)
    }

    #[test]
    fn covariance_of_identity_columns() {
        let x = SampleMatrix::new(DMatrix::identity(2, 2)).unwrap();
        let c = sample_covariance(&x);
        assert_eq!(c.data(), &(DMatrix::identity(2, 2) * 0.5));
    }

    #[test]
    fn covariance_of_single_column() {
        let a = 3.0;
        let x = SampleMatrix::new(DMatrix::from_column_slice(2, 1, &[a, 0.0])).unwrap();
        let c = sample_covariance(&x);
        assert_eq!(c.data()[(0, 0)], a * a);
        assert_eq!(c.data()[(0, 1)], 0.0);
        assert_eq!(c.data()[(1, 1)], 0.0);
    }

    #[test]
    fn covariance_matches_brute_force() {
        let x = random_samples(4, 7, 07);
        let c = sample_covariance(&x);
        // entry-wise double loop oracle
        for i in 0..4 {
            for j in 0..4 {
                let mut s = 0.0;
                for k in 0..7 {
                    s += x.data()[(i, k)] * x.data()[(j, k)];
                }
                s /= 7.0;
                assert!((c.data()[(i, j)] - s).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn resolvent_of_pure_shift() {
        let c = SpdMatrix::zeros(3);
        let r = resolvent_scalar(&c, 2.0).unwrap();
        for i in 0..3 {
            assert!((r.data()[(i, i)] - 0.5).abs() <= 1e-15);
        }
    }

    #[test]
    fn resolvent_of_identity() {
        let c = SpdMatrix::identity(4);
        let r = resolvent_scalar(&c, 1.0).unwrap();
        for i in 0..4 {
            assert!((r.data()[(i, i)] - 0.5).abs() <= 1e-15);
        }
    }

    #[test]
    fn resolvent_residual_is_small() {
        let c = random_spd(8, 11);
        let r = resolvent_scalar(&c, 0.1).unwrap();
        let shifted = c.add_scaled_identity(0.1);
        let residual = shifted.data() * r.data() - DMatrix::identity(8, 8);
        assert!(frobenius_norm_sq(&residual).sqrt() <= 1e-10);
    }

    #[test]
    fn resolvent_matrix_shift_matches_scalar() {
        let c = random_spd(5, 21);
        let d = SpdMatrix::scaled_identity(5, 0.7);
        let r1 = resolvent(&c, Shift::Matrix(&d)).unwrap();
        let r2 = resolvent_scalar(&c, 0.7).unwrap();
        assert!(frobenius_sq_distance(&r1, &r2).unwrap().sqrt() <= 1e-12);
    }

    #[test]
    fn resolvent_rejects_singular_shift() {
        let x = random_samples(6, 3, 5); // rank-deficient covariance
        let c = sample_covariance(&x);
        match resolvent_scalar(&c, 0.0) {
            Err(Error::SingularShift { .. }) => {}
            other => panic!("expected SingularShift, got {other:?}"),
        }
    }

    #[test]
    fn leave_one_out_identity_example() {
        let x = SampleMatrix::new(DMatrix::identity(2, 2)).unwrap();
        let c = leave_one_out_covariance(&x, 0).unwrap();
        assert_eq!(c.data()[(0, 0)], 0.0);
        assert_eq!(c.data()[(0, 1)], 0.0);
        assert!((c.data()[(1, 1)] - 0.5).abs() <= 1e-15);
    }

    #[test]
    fn leave_one_out_single_sample_is_zero() {
        let x = SampleMatrix::new(DMatrix::from_column_slice(2, 1, &[1.0, -2.0])).unwrap();
        let c = leave_one_out_covariance(&x, 0).unwrap();
        assert_eq!(frobenius_norm_sq(c.data()), 0.0);
    }

    #[test]
    fn leave_one_out_matches_zero_padded_covariance() {
        let x = random_samples(4, 9, 13);
        let loo = leave_one_out_covariance(&x, 0).unwrap();
        let padded = x.zero_column(0).unwrap();
        let direct = sample_covariance(&padded);
        assert!(frobenius_sq_distance(&loo, &direct).unwrap().sqrt() <= 1e-12);
    }

    #[test]
    fn leave_one_out_reassembles_covariance() {
        let x = random_samples(5, 8, 17);
        let loo = leave_one_out_covariance(&x, 0).unwrap();
        let x1 = DVector::from_column_slice(x.column(0).as_slice());
        let n = x.len() as f64;
        let rebuilt = loo.data() + &x1 * x1.transpose() / n;
        let c = sample_covariance(&x);
        let diff = rebuilt - c.data();
        assert!(frobenius_norm_sq(&diff).sqrt() <= 1e-12);
    }

    #[test]
    fn min_eigenvalue_examples() {
        assert!((SpdMatrix::identity(3).min_eigenvalue() - 1.0).abs() <= 1e-14);
        let diag =
            SpdMatrix::from_diagonal(&DVector::from_column_slice(&[3.0, 0.25, 7.0])).unwrap();
        assert!((diag.min_eigenvalue() - 0.25).abs() <= 1e-14);
    }

    #[test]
    fn min_eigenvalue_matches_inverse_power_iteration() {
        let c = random_spd(6, 29);
        let lam = c.min_eigenvalue();
        // inverse power iteration oracle on (C - s I) with s below lambda_min
        let shift = lam - 0.5 * c.max_eigenvalue().max(1.0);
        let shifted = c.add_scaled_identity(-shift);
        let inv = cholesky_inverse(shifted.data()).expect("shifted matrix should be PD");
        let mut v = DVector::from_element(6, 1.0).normalize();
        for _ in 0..200 {
            v = (&inv * &v).normalize();
        }
        let rayleigh = quadratic_form(c.data(), &v);
        assert!((rayleigh - lam).abs() <= 1e-8 * c.operator_norm().max(1.0));
    }

    #[test]
    fn frobenius_distance_examples() {
        let a = SpdMatrix::identity(2);
        assert_eq!(frobenius_sq_distance(&a, &a).unwrap(), 0.0);
        let z = SpdMatrix::zeros(2);
        assert!((frobenius_sq_distance(&a, &z).unwrap() - 2.0).abs() <= 1e-15);
    }

    #[test]
    fn frobenius_distance_matches_entry_loop() {
        let a = random_spd(5, 31);
        let b = random_spd(5, 37);
        let mut acc = 0.0;
        for i in 0..5 {
            for j in 0..5 {
                let d = a.data()[(i, j)] - b.data()[(i, j)];
                acc += d * d;
            }
        }
        assert!((frobenius_sq_distance(&a, &b).unwrap() - acc).abs() <= 1e-12);
    }

    #[test]
    fn frobenius_distance_rejects_dimension_mismatch() {
        let a = SpdMatrix::identity(2);
        let b = SpdMatrix::identity(3);
        assert!(matches!(
            frobenius_sq_distance(&a, &b),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn construction_rejects_asymmetry_and_nonfinite() {
        let mut m = DMatrix::identity(3, 3);
        m[(0, 1)] = 1e-3;
        assert!(matches!(SpdMatrix::new(m), Err(Error::NotSymmetric(_))));
        let mut m = DMatrix::identity(2, 2);
        m[(1, 1)] = f64::NAN;
        assert!(matches!(SpdMatrix::new(m), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn resolvent_is_loewner_monotone_in_lambda() {
        // R(l1) - R(l2) must be PSD for l1 < l2
        for seed in 0..20u64 {
            let c = random_spd(5, 100 + seed);
            let r1 = resolvent_scalar(&c, 0.3).unwrap();
            let r2 = resolvent_scalar(&c, 0.9).unwrap();
            let diff = r1.linear_combination(1.0, &r2, -1.0).unwrap();
            assert!(
                diff.min_eigenvalue() >= -1e-12,
                "seed {seed}: min eig {}",
                diff.min_eigenvalue()
            );
        }
    }

    #[test]
    fn eigen_cache_is_shared_across_threads() {
        let c = random_spd(16, 41);
        std::thread::scope(|s| {
            for _ in 0..4 {
                s.spawn(|| {
                    let e = c.eigen();
                    assert_eq!(e.values().len(), 16);
                });
            }
        });
    }
}
