//! The shrinkage (diagonal-loading) precision estimator `(C_X + lambda I)^{-1}`,
//! its data-only quadratic-error estimator, and the fixed-point deterministic
//! equivalent `(Sigma / b* + lambda I)^{-1}`.

use crate::error::{Error, Result};
use crate::linalg::{
    compensated_sum, leave_one_out_covariance, resolvent_scalar, sample_covariance, SampleMatrix,
    SpdMatrix, PD_FLOOR,
};

/// Whether the error estimate carries the `tr(Sigma^{-2}) / d` constant.
///
/// The constant does not depend on `lambda`, so `Relative` mode (data only)
/// suffices for tuning; `Oracle` mode adds it for validation against the true
/// error.
#[derive(Debug, Clone, Copy)]
pub enum EstimateMode<'a> {
    Relative,
    Oracle(&'a SpdMatrix),
}

/// The assembled terms of the shrinkage error estimate.
///
/// `total = tr_r2_term + loo_term + cross_term [+ constant_term]`, where
/// `loo_term` carries its negative sign and is zero whenever the conditioning
/// indicator fails.
#[derive(Debug, Clone)]
pub struct ShrinkageErrorParts {
    /// `tr(R_X(lambda)^2) / d`.
    pub tr_r2_term: f64,
    /// `-2 (1 - d/n) tr(R_X(0)) / (lambda d)`, gated by the indicator.
    pub loo_term: f64,
    /// `2 tr(R_X(lambda)) / (lambda b_hat d)`.
    pub cross_term: f64,
    /// `tr(Sigma^{-2}) / d`; present only in oracle mode.
    pub constant_term: Option<f64>,
    pub b_hat: f64,
    pub indicator: bool,
    /// Set when the indicator held but `C_X` was numerically singular; the
    /// leave-one-out term is then reported as zero instead of failing.
    pub loo_singular: bool,
}

impl ShrinkageErrorParts {
    pub fn total(&self) -> f64 {
        self.tr_r2_term + self.loo_term + self.cross_term + self.constant_term.unwrap_or(0.0)
    }
}

/// Converged dilation factor with diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct FixedPointResult {
    pub value: f64,
    pub iterations: usize,
    /// `|b - f_lambda(b)|` at the returned value.
    pub residual: f64,
}

/// Precomputed per-sample state shared by every quantity that depends only on
/// `C_X`: one eigendecomposition serves a whole lambda sweep.
#[derive(Debug, Clone)]
pub struct ShrinkageContext {
    cov: SpdMatrix,
    n: usize,
    loo_min_eig: f64,
}

impl ShrinkageContext {
    pub fn new(x: &SampleMatrix) -> Self {
        let cov = sample_covariance(x);
        // rank(C_X^-) <= n - 1, so d > n - 1 forces a zero eigenvalue exactly
        let loo_min_eig = if x.dim() > x.len().saturating_sub(1) {
            0.0
        } else {
            leave_one_out_covariance(x, 0)
                .expect("n >= 1 by construction")
                .min_eigenvalue()
        };
        Self {
            cov,
            n: x.len(),
            loo_min_eig,
        }
    }

    pub fn dim(&self) -> usize {
        self.cov.dim()
    }

    pub fn sample_count(&self) -> usize {
        self.n
    }

    pub fn covariance(&self) -> &SpdMatrix {
        &self.cov
    }

    /// Smallest eigenvalue of the leave-one-out covariance (exactly zero in
    /// the rank-deficient regime `d > n - 1`).
    pub fn loo_min_eigenvalue(&self) -> f64 {
        self.loo_min_eig
    }

    /// The conditioning indicator `lambda_min(C_X^-) >= eta`.
    pub fn indicator(&self, eta: f64) -> Result<bool> {
        if !(eta > 0.0) {
            return Err(Error::InvalidInput(format!(
                "eta must be positive, got {eta}"
            )));
        }
        Ok(self.loo_min_eig >= eta)
    }

    fn trace_resolvent(&self, lambda: f64) -> f64 {
        compensated_sum(self.cov.eigen().values().iter().map(|e| 1.0 / (e + lambda)))
    }

    fn trace_resolvent_sq(&self, lambda: f64) -> f64 {
        compensated_sum(
            self.cov
                .eigen()
                .values()
                .iter()
                .map(|e| 1.0 / ((e + lambda) * (e + lambda))),
        )
    }

    /// `1 / (1 - d/n + (lambda/n) tr R_X(lambda))`.
    pub fn b_hat(&self, lambda: f64) -> Result<f64> {
        if !(lambda > 0.0) {
            return Err(Error::InvalidInput(format!(
                "lambda must be positive, got {lambda}"
            )));
        }
        let d = self.dim() as f64;
        let n = self.n as f64;
        let denom = 1.0 - d / n + lambda / n * self.trace_resolvent(lambda);
        if denom <= PD_FLOOR {
            return Err(Error::DegenerateDenominator(denom));
        }
        Ok(1.0 / denom)
    }

    /// Assembles the shrinkage error estimate at one `lambda`.
    pub fn error_estimate(
        &self,
        lambda: f64,
        eta: f64,
        mode: EstimateMode<'_>,
    ) -> Result<ShrinkageErrorParts> {
        if !(lambda > 0.0) {
            return Err(Error::InvalidInput(format!(
                "lambda must be positive, got {lambda}"
            )));
        }
        let indicator = self.indicator(eta)?;
        let d = self.dim() as f64;
        let n = self.n as f64;
        let b_hat = self.b_hat(lambda)?;

        let tr_r2_term = self.trace_resolvent_sq(lambda) / d;
        let cross_term = 2.0 * self.trace_resolvent(lambda) / (lambda * b_hat * d);

        let mut loo_term = 0.0;
        let mut loo_singular = false;
        if indicator {
            // R_X(0) inverts the full covariance exactly; the indicator is the
            // guard, so a numerically singular C_X here is surfaced as a
            // flagged zero term rather than an error.
            if self.cov.min_eigenvalue() > PD_FLOOR {
                let tr_r0 =
                    compensated_sum(self.cov.eigen().values().iter().map(|e| 1.0 / e));
                loo_term = -2.0 * (1.0 - d / n) * tr_r0 / (lambda * d);
            } else {
                loo_singular = true;
            }
        }

        let constant_term = match mode {
            EstimateMode::Relative => None,
            EstimateMode::Oracle(sigma) => Some(inv_sq_trace_norm(sigma)?),
        };

        Ok(ShrinkageErrorParts {
            tr_r2_term,
            loo_term,
            cross_term,
            constant_term,
            b_hat,
            indicator,
            loo_singular,
        })
    }
}

/// `tr(Sigma^{-2}) / d` for a strictly PD `sigma`.
pub(crate) fn inv_sq_trace_norm(sigma: &SpdMatrix) -> Result<f64> {
    let min = sigma.min_eigenvalue();
    if min <= PD_FLOOR {
        return Err(Error::SingularSigma(min));
    }
    let d = sigma.dim() as f64;
    Ok(compensated_sum(sigma.eigen().values().iter().map(|e| 1.0 / (e * e))) / d)
}

/// `(C_X + lambda I)^{-1}`.
pub fn shrinkage_precision(x: &SampleMatrix, lambda: f64) -> Result<SpdMatrix> {
    if lambda < 0.0 {
        return Err(Error::InvalidInput(format!(
            "lambda must be non-negative, got {lambda}"
        )));
    }
    resolvent_scalar(&sample_covariance(x), lambda)
}

/// True iff `lambda_min(C_X^-) >= eta` with the first column left out.
pub fn indicator_eta(x: &SampleMatrix, eta: f64) -> Result<bool> {
    ShrinkageContext::new(x).indicator(eta)
}

/// Data-only dilation estimate `1 / (1 - d/n + (lambda/n) tr R_X(lambda))`.
pub fn b_hat(x: &SampleMatrix, lambda: f64) -> Result<f64> {
    ShrinkageContext::new(x).b_hat(lambda)
}

/// Shrinkage error estimate; see [`ShrinkageContext::error_estimate`].
pub fn error_estimate_shrinkage(
    x: &SampleMatrix,
    lambda: f64,
    eta: f64,
    mode: EstimateMode<'_>,
) -> Result<ShrinkageErrorParts> {
    ShrinkageContext::new(x).error_estimate(lambda, eta, mode)
}

const FIXED_POINT_MAX_ITER: usize = 500;
const FIXED_POINT_DAMPING: f64 = 0.5;
const DIVERGENCE_CAP: f64 = 1e15;

/// Solves `b = f_lambda(b) = 1 + tr(Sigma (Sigma/b + lambda I)^{-1}) / n` on
/// `[1, inf)` by damped fixed-point iteration with a bisection fallback.
pub fn solve_b_star(sigma: &SpdMatrix, n: usize, lambda: f64, tol: f64) -> Result<FixedPointResult> {
    let min = sigma.min_eigenvalue();
    if min <= PD_FLOOR {
        return Err(Error::SingularSigma(min));
    }
    if n == 0 {
        return Err(Error::InvalidInput("n must be >= 1".into()));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidInput(format!(
            "lambda must be a finite non-negative number, got {lambda}"
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!(
            "tolerance must be positive, got {tol}"
        )));
    }

    let spectrum: Vec<f64> = sigma.eigen().values().iter().copied().collect();
    let nf = n as f64;
    let f = |b: f64| -> f64 {
        1.0 + compensated_sum(spectrum.iter().map(|s| s * b / (s + lambda * b))) / nf
    };

    let mut b = 1.0f64;
    let mut residual = f64::INFINITY;
    let mut iterations = 0usize;
    for _ in 0..FIXED_POINT_MAX_ITER {
        iterations += 1;
        let fb = f(b);
        residual = (fb - b).abs();
        if residual <= tol {
            return Ok(FixedPointResult {
                value: b,
                iterations,
                residual,
            });
        }
        b = (1.0 - FIXED_POINT_DAMPING) * b + FIXED_POINT_DAMPING * fb;
        if !b.is_finite() || b > DIVERGENCE_CAP {
            return Err(Error::NoConvergence {
                iterations,
                residual,
            });
        }
    }

    // Bisection fallback on g(b) = f(b) - b; the fixed point is unique on
    // [1, inf) so a single sign change brackets it.
    let d = spectrum.len() as f64;
    let trace: f64 = compensated_sum(spectrum.iter().copied());
    let mut hi = if lambda > PD_FLOOR {
        1.0 + trace / (nf * lambda)
    } else if d < nf {
        1.0 / (1.0 - d / nf)
    } else {
        return Err(Error::NoConvergence {
            iterations,
            residual,
        });
    };
    hi = hi * (1.0 + 1e-9) + 1e-9;
    let mut lo = 1.0f64;
    let mut expand = 0;
    while f(hi) - hi > 0.0 {
        hi *= 2.0;
        expand += 1;
        if expand > 60 {
            return Err(Error::NoConvergence {
                iterations,
                residual,
            });
        }
    }
    for _ in 0..200 {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        if f(mid) - mid > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    let b = 0.5 * (lo + hi);
    let residual = (f(b) - b).abs();
    if residual <= tol {
        Ok(FixedPointResult {
            value: b,
            iterations,
            residual,
        })
    } else {
        Err(Error::NoConvergence {
            iterations,
            residual,
        })
    }
}

/// Deterministic equivalent `(Sigma / b*(lambda) + lambda I)^{-1}`.
pub fn det_equiv_shrinkage(sigma: &SpdMatrix, n: usize, lambda: f64) -> Result<SpdMatrix> {
    let fp = solve_b_star(sigma, n, lambda, 1e-12)?;
    let b = fp.value;
    let min = sigma.min_eigenvalue() / b + lambda;
    if min <= PD_FLOOR {
        return Err(Error::SingularShift {
            min_eig: min,
            tol: PD_FLOOR,
        });
    }
    Ok(SpdMatrix::from_symmetric_unchecked(
        sigma.eigen().map_rebuild(|s| 1.0 / (s / b + lambda)),
    ))
}

/// Largest admissible conditioning threshold times a safety factor:
/// `safety * lambda_min(Sigma) * (sqrt((n-1)/n) - sqrt(d/n))^2`.
pub fn suggest_eta(lambda_min_sigma: f64, n: usize, d: usize, safety: f64) -> Result<f64> {
    if !(lambda_min_sigma > 0.0) {
        return Err(Error::InvalidInput(format!(
            "lambda_min_sigma must be positive, got {lambda_min_sigma}"
        )));
    }
    if !(safety > 0.0 && safety <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "safety must lie in (0, 1], got {safety}"
        )));
    }
    if d >= n {
        return Err(Error::InvalidRegime { d, n });
    }
    let nf = n as f64;
    let gap = ((nf - 1.0) / nf).sqrt() - (d as f64 / nf).sqrt();
    if gap <= 0.0 {
        // d = n - 1 collapses the gap; a nonpositive eta is never returned
        return Err(Error::InvalidRegime { d, n });
    }
    Ok(safety * lambda_min_sigma * gap * gap)
}

/// Default `eta` policy: the smaller of the plug-in admissible bound and the
/// observed `lambda_min(C_X^-)`, so the indicator holds on the given sample.
/// Falls back to a small fixed threshold in regimes where neither candidate
/// is positive (the indicator is then false on any rank-deficient sample).
pub fn auto_eta(x: &SampleMatrix) -> f64 {
    const ETA_FALLBACK: f64 = 1e-8;
    let ctx = ShrinkageContext::new(x);
    let mut best = f64::INFINITY;
    if ctx.loo_min_eigenvalue() > PD_FLOOR {
        best = best.min(ctx.loo_min_eigenvalue());
    }
    let cov_min = ctx.covariance().min_eigenvalue();
    if cov_min > PD_FLOOR {
        if let Ok(s) = suggest_eta(cov_min, ctx.sample_count(), ctx.dim(), 0.5) {
            best = best.min(s);
        }
    }
    if best.is_finite() && best > 0.0 {
        best
    } else {
        ETA_FALLBACK
    }
}
