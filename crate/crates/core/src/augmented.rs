//! The augmented precision estimator, its Monte-Carlo dilation factors,
//! the phi functionals, the data-only error estimator, and the coupled
//! deterministic-equivalent solver.
//!
//! Conditional resolvent expectations have no closed form for a sampleable
//! augmentation, so the dilation factors average over `replicates` fresh
//! draws of `G`; replicate `k` consumes `stream.child(k)` and replicate
//! values are reduced in fixed order, so results are bit-stable regardless
//! of the thread count.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::augment::{moment_decomposition, sample_augmented, DaScheme};
use crate::error::{Error, Result};
use crate::linalg::{
    cholesky_inverse, compensated_sum, frobenius_norm_sq, leave_one_out_covariance,
    pooled_covariance, quadratic_form, resolvent_scalar, sample_covariance, trace_product,
    SampleMatrix, SpdMatrix, PD_FLOOR,
};
use crate::shrinkage::{inv_sq_trace_norm, EstimateMode, ShrinkageContext};
use crate::synth::RngStream;

/// Monte-Carlo controls for the dilation factors.
#[derive(Debug, Clone, Copy)]
pub struct McOptions {
    /// Number of independent `G` draws used for the conditional expectations.
    pub replicates: usize,
    /// Average the leave-one-out quadratic form over all columns instead of
    /// using the first column only. Each column's form is recovered exactly
    /// from the full resolvent through the rank-one downdate identity
    /// `x_i' R_{-i} x_i = q_i / (1 - q_i/(n+m))` with `q_i = x_i' R x_i`,
    /// so by exchangeability every term has the first-column distribution
    /// and the average only removes variance.
    pub variance_reduction: bool,
}

impl Default for McOptions {
    fn default() -> Self {
        Self {
            replicates: 64,
            variance_reduction: false,
        }
    }
}

/// Monte-Carlo estimates of the dilation factors with their spread.
#[derive(Debug, Clone, Copy)]
pub struct DilationFactors {
    pub a_x: f64,
    pub a_g: f64,
    pub mc_replicates: usize,
    pub stderr_a_x: f64,
    pub stderr_a_g: f64,
    /// Replicates dropped because the shifted pooled covariance was singular.
    pub dropped: usize,
}

/// The phi functionals with the indicator state they were computed under.
#[derive(Debug, Clone, Copy)]
pub struct PhiFunctionals {
    pub phi1: f64,
    pub phi2: f64,
    pub indicator: bool,
    pub loo_singular: bool,
}

/// Assembled augmented error estimate:
/// `total = tr_r2_term - 2 (phi1 - phi2) [+ constant_term]`.
#[derive(Debug, Clone)]
pub struct AugmentedErrorParts {
    /// `tr(R_Aug(lambda)^2) / d` on one concrete draw of `G`.
    pub tr_r2_term: f64,
    pub phi1: f64,
    pub phi2: f64,
    /// `tr(Sigma^{-2}) / d`; present only in oracle mode.
    pub constant_term: Option<f64>,
    pub dilation: DilationFactors,
    pub indicator: bool,
    pub loo_singular: bool,
}

impl AugmentedErrorParts {
    pub fn total(&self) -> f64 {
        self.tr_r2_term - 2.0 * (self.phi1 - self.phi2) + self.constant_term.unwrap_or(0.0)
    }
}

/// Output of the coupled deterministic-equivalent solver.
#[derive(Debug, Clone)]
pub struct AugmentedDetEquiv {
    pub a_x_star: f64,
    pub a_g_star: f64,
    pub d_bar: SpdMatrix,
    /// `(|a_x - F_x(a_x, a_g)|, |a_g - F_g(a_x, a_g)|)` at the solution.
    pub residuals: (f64, f64),
    pub iterations: usize,
}

/// `((n + m)^{-1} (X X^T + G G^T) + lambda I)^{-1}`. With `m = 0` this is
/// exactly the shrinkage estimator.
pub fn augmented_precision(x: &SampleMatrix, g: &SampleMatrix, lambda: f64) -> Result<SpdMatrix> {
    if lambda < 0.0 {
        return Err(Error::InvalidInput(format!(
            "lambda must be non-negative, got {lambda}"
        )));
    }
    let pooled = pooled_covariance(x, g)?;
    resolvent_scalar(&pooled, lambda)
}

/// Mean over columns of the exact per-column leave-one-out quadratic form,
/// recovered from the full-resolvent forms `q_i = x_i' y_i` (where
/// `y = R x`) by the rank-one downdate identity.
fn averaged_loo_quadratic_form(x: &DMatrix<f64>, y: &DMatrix<f64>, total: usize) -> f64 {
    let n = x.ncols();
    let t = total as f64;
    compensated_sum((0..n).map(|i| {
        let q = compensated_sum(x.column(i).iter().zip(y.column(i).iter()).map(|(a, b)| a * b));
        q / (1.0 - q / t)
    })) / n as f64
}

struct ReplicateStats {
    mean: f64,
    stderr: f64,
}

fn replicate_stats(values: &[f64]) -> ReplicateStats {
    let k = values.len();
    let mean = compensated_sum(values.iter().copied()) / k as f64;
    let stderr = if k >= 2 {
        let var =
            compensated_sum(values.iter().map(|v| (v - mean) * (v - mean))) / (k as f64 - 1.0);
        (var / k as f64).sqrt()
    } else {
        0.0
    };
    ReplicateStats { mean, stderr }
}

/// Estimates the dilation factors
/// `a_g = 1 + (alpha/m) tr((beta C_X + Lambda_G(X)) E[R_{X|G}(lambda) | X])`
/// and
/// `a_x = 1 + ((1 - (1 - beta/a_g) alpha)/n) X_1^T E[R_{X^-|G}(lambda) | X] X_1`
/// by Monte Carlo over `opts.replicates` fresh draws of `G`.
pub fn dilation_factors(
    x: &SampleMatrix,
    scheme: &DaScheme,
    m: usize,
    lambda: f64,
    opts: &McOptions,
    stream: RngStream,
) -> Result<DilationFactors> {
    let d = x.dim();
    let n = x.len();
    if n == 0 {
        return Err(Error::InvalidInput("X must contain samples".into()));
    }
    scheme.validate(d)?;
    if lambda < 0.0 {
        return Err(Error::InvalidInput(format!(
            "lambda must be non-negative, got {lambda}"
        )));
    }

    let x1 = x.column(0).into_owned();

    if m == 0 {
        // no augmentation: a_g = 1 and the X-factor reduces to the plain
        // leave-one-out quadratic form
        let q = if opts.variance_reduction {
            let c = sample_covariance(x);
            let r = resolvent_scalar(&c, lambda)?;
            averaged_loo_quadratic_form(x.data(), &(r.data() * x.data()), n)
        } else {
            let loo = leave_one_out_covariance(x, 0)?;
            let r = resolvent_scalar(&loo, lambda)?;
            quadratic_form(r.data(), &x1)
        };
        return Ok(DilationFactors {
            a_x: 1.0 + q / n as f64,
            a_g: 1.0,
            mc_replicates: 0,
            stderr_a_x: 0.0,
            stderr_a_g: 0.0,
            dropped: 0,
        });
    }

    if opts.replicates == 0 {
        return Err(Error::InvalidInput("replicates must be >= 1".into()));
    }

    let total = (n + m) as f64;
    let alpha = m as f64 / total;
    let scale = 1.0 / total;
    let dec = moment_decomposition(scheme, x)?;
    let c_x = sample_covariance(x);
    let m_dec = c_x.data() * dec.beta + dec.lambda_g.data();
    let prod_x = x.data() * x.data().transpose();
    let outer_x1 = &x1 * x1.transpose();

    // replicate k draws from stream.child(k); fixed-order reduction below
    let samples: Vec<Option<(f64, f64)>> = (0..opts.replicates)
        .into_par_iter()
        .map(|k| -> Result<Option<(f64, f64)>> {
            let g = sample_augmented(scheme, x, m, stream.child(k as u64))?;
            let mut a_full = &prod_x + g.data() * g.data().transpose();
            a_full *= scale;
            for i in 0..d {
                a_full[(i, i)] += lambda;
            }
            let a_loo = &a_full - &outer_x1 * scale;
            let chol_full = match nalgebra::Cholesky::new(a_full) {
                Some(c) => c,
                None => return Ok(None),
            };
            let r_full = chol_full.inverse();
            let t_g = trace_product(&m_dec, &r_full) * scale;
            let q = if opts.variance_reduction {
                let y = chol_full.solve(x.data());
                averaged_loo_quadratic_form(x.data(), &y, n + m)
            } else {
                let chol_loo = match nalgebra::Cholesky::new(a_loo) {
                    Some(c) => c,
                    None => return Ok(None),
                };
                let y = chol_loo.solve(&x1);
                compensated_sum(x1.iter().zip(y.iter()).map(|(a, b)| a * b))
            };
            Ok(Some((t_g, q)))
        })
        .collect::<Result<Vec<_>>>()?;

    let kept: Vec<(f64, f64)> = samples.iter().flatten().copied().collect();
    let dropped = opts.replicates - kept.len();
    if kept.is_empty() {
        // every replicate hit a singular shift; report the offending spectrum
        let g = sample_augmented(scheme, x, m, stream.child(0))?;
        let pooled = pooled_covariance(x, &g)?;
        return Err(Error::SingularShift {
            min_eig: pooled.min_eigenvalue() + lambda,
            tol: PD_FLOOR,
        });
    }

    let t_g: Vec<f64> = kept.iter().map(|(t, _)| *t).collect();
    let q: Vec<f64> = kept.iter().map(|(_, q)| *q).collect();
    let sg = replicate_stats(&t_g);
    let sq = replicate_stats(&q);
    let a_g = 1.0 + sg.mean;
    let prefactor = (1.0 - (1.0 - dec.beta / a_g) * alpha) / n as f64;
    Ok(DilationFactors {
        a_x: 1.0 + prefactor * sq.mean,
        a_g,
        mc_replicates: kept.len(),
        stderr_a_x: prefactor * sq.stderr,
        stderr_a_g: sg.stderr,
        dropped,
    })
}

fn phi_from_parts(
    ctx: &ShrinkageContext,
    dec_beta: f64,
    lambda_g: &SpdMatrix,
    m: usize,
    lambda: f64,
    a_x: f64,
    a_g: f64,
    eta: f64,
) -> Result<PhiFunctionals> {
    let d = ctx.dim();
    let n = ctx.sample_count();
    let df = d as f64;
    let nf = n as f64;
    let alpha = m as f64 / (n + m) as f64;

    // M = alpha Lambda_G / a_g + lambda I, inverted through the Lambda_G eigen
    let cg = alpha / a_g;
    let m_min = cg * lambda_g.min_eigenvalue() + lambda;
    if m_min <= PD_FLOOR {
        return Err(Error::SingularM {
            lambda,
            min_eig: m_min,
        });
    }
    let m_inv = lambda_g.eigen().map_rebuild(|l| 1.0 / (cg * l + lambda));

    let indicator = ctx.indicator(eta)?;
    let mut phi1 = 0.0;
    let mut loo_singular = false;
    if indicator {
        if ctx.covariance().min_eigenvalue() > PD_FLOOR {
            let r0 = ctx.covariance().eigen().map_rebuild(|e| 1.0 / e);
            phi1 = (1.0 - df / nf) / df * trace_product(&r0, &m_inv);
        } else {
            loo_singular = true;
        }
    }

    // conditional deterministic equivalent given X:
    // ((1 - alpha) C_X + alpha (Lambda_G + beta C_X) / a_g + lambda I)^{-1}
    let mut combo =
        ctx.covariance().data() * (1.0 - alpha + alpha * dec_beta / a_g) + lambda_g.data() * cg;
    for i in 0..d {
        combo[(i, i)] += lambda;
    }
    let d_gx = match cholesky_inverse(&combo) {
        Some(inv) => inv,
        None => {
            let spd = SpdMatrix::from_symmetric_unchecked(combo);
            return Err(Error::SingularShift {
                min_eig: spd.min_eigenvalue(),
                tol: PD_FLOOR,
            });
        }
    };
    let px = 1.0 - (1.0 - dec_beta / a_g) * alpha;
    let phi2 = px / (df * a_x) * trace_product(&d_gx, &m_inv);

    Ok(PhiFunctionals {
        phi1,
        phi2,
        indicator,
        loo_singular,
    })
}

/// The two trace functionals entering the augmented error estimate.
pub fn phi_functionals(
    x: &SampleMatrix,
    scheme: &DaScheme,
    m: usize,
    lambda: f64,
    dil: &DilationFactors,
    eta: f64,
) -> Result<PhiFunctionals> {
    let dec = moment_decomposition(scheme, x)?;
    let ctx = ShrinkageContext::new(x);
    phi_from_parts(
        &ctx,
        dec.beta,
        &dec.lambda_g,
        m,
        lambda,
        dil.a_x,
        dil.a_g,
        eta,
    )
}

/// Assembles the augmented error estimate from a concrete draw `g` and
/// precomputed dilation factors. `error_estimate_augmented` is the
/// self-contained variant; this one lets a curve sweep reuse its own draw.
pub fn error_estimate_augmented_with(
    x: &SampleMatrix,
    g: &SampleMatrix,
    scheme: &DaScheme,
    lambda: f64,
    eta: f64,
    mode: EstimateMode<'_>,
    dilation: DilationFactors,
) -> Result<AugmentedErrorParts> {
    let d = x.dim() as f64;
    let r_aug = augmented_precision(x, g, lambda)?;
    // tr(R^2) = ||R||_F^2 for symmetric R
    let tr_r2_term = frobenius_norm_sq(r_aug.data()) / d;
    let dec = moment_decomposition(scheme, x)?;
    let ctx = ShrinkageContext::new(x);
    let phi = phi_from_parts(
        &ctx,
        dec.beta,
        &dec.lambda_g,
        g.len(),
        lambda,
        dilation.a_x,
        dilation.a_g,
        eta,
    )?;
    let constant_term = match mode {
        EstimateMode::Relative => None,
        EstimateMode::Oracle(sigma) => Some(inv_sq_trace_norm(sigma)?),
    };
    Ok(AugmentedErrorParts {
        tr_r2_term,
        phi1: phi.phi1,
        phi2: phi.phi2,
        constant_term,
        dilation,
        indicator: phi.indicator,
        loo_singular: phi.loo_singular,
    })
}

/// Data-only estimate of the augmented quadratic error at one `lambda`.
///
/// The `tr(R_Aug^2)` term uses one concrete draw of `G` (the dataset a user
/// would actually train with, from `stream.child(1)`); the dilation factors
/// average over `opts.replicates` draws derived from `stream.child(0)`.
pub fn error_estimate_augmented(
    x: &SampleMatrix,
    scheme: &DaScheme,
    m: usize,
    lambda: f64,
    eta: f64,
    mode: EstimateMode<'_>,
    opts: &McOptions,
    stream: RngStream,
) -> Result<AugmentedErrorParts> {
    let dilation = dilation_factors(x, scheme, m, lambda, opts, stream.child(0))?;
    let g = sample_augmented(scheme, x, m, stream.child(1))?;
    error_estimate_augmented_with(x, &g, scheme, lambda, eta, mode, dilation)
}

const COUPLED_MAX_ITER: usize = 1000;
const COUPLED_DAMPING: f64 = 0.5;

struct CoupledSystem<'a> {
    sigma: &'a SpdMatrix,
    weighted: DMatrix<f64>, // beta Sigma + Lambda_bar
    lambda_bar: &'a SpdMatrix,
    beta: f64,
    alpha: f64,
    n: f64,
    m: f64,
    lambda: f64,
    d: usize,
}

impl CoupledSystem<'_> {
    fn d_bar(&self, a_x: f64, a_g: f64) -> Result<DMatrix<f64>> {
        let px = 1.0 - (1.0 - self.beta / a_g) * self.alpha;
        let cg = if self.alpha > 0.0 {
            self.alpha / a_g
        } else {
            0.0
        };
        let mut a = self.sigma.data() * (px / a_x) + self.lambda_bar.data() * cg;
        for i in 0..self.d {
            a[(i, i)] += self.lambda;
        }
        cholesky_inverse(&a).ok_or_else(|| {
            let spd = SpdMatrix::from_symmetric_unchecked(a.clone());
            Error::SingularShift {
                min_eig: spd.min_eigenvalue(),
                tol: PD_FLOOR,
            }
        })
    }

    fn apply(&self, a_x: f64, a_g: f64) -> Result<(f64, f64)> {
        let d_bar = self.d_bar(a_x, a_g)?;
        let px = 1.0 - (1.0 - self.beta / a_g) * self.alpha;
        let fx = 1.0 + px / self.n * trace_product(self.sigma.data(), &d_bar);
        let fg = if self.alpha > 0.0 {
            1.0 + self.alpha / self.m * trace_product(&self.weighted, &d_bar)
        } else {
            1.0
        };
        Ok((fx, fg))
    }

    /// Solves the a_x equation for a fixed a_g by bisection.
    fn solve_a_x(&self, a_g: f64) -> Result<f64> {
        let g = |a_x: f64| -> Result<f64> {
            let (fx, _) = self.apply(a_x, a_g)?;
            Ok(fx - a_x)
        };
        let mut lo = 1.0f64;
        let mut hi = 2.0f64;
        let mut expand = 0;
        while g(hi)? > 0.0 {
            hi *= 2.0;
            expand += 1;
            if expand > 60 {
                return Err(Error::NoConvergence {
                    iterations: expand,
                    residual: g(hi)?.abs(),
                });
            }
        }
        for _ in 0..120 {
            let mid = 0.5 * (lo + hi);
            if g(mid)? > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= f64::EPSILON * hi {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

/// Solves the coupled self-consistent system for `(a_x*, a_g*)` and returns
/// the deterministic equivalent
/// `D_bar = ((1 - (1 - beta/a_g*) alpha)/a_x* Sigma + (alpha/a_g*) Lambda_bar + lambda I)^{-1}`.
///
/// Damped alternating iteration from `(1, 1)`; on a stall, the `a_g`
/// coordinate falls back to bisection with the `a_x` equation solved inside.
#[allow(clippy::too_many_arguments)]
pub fn solve_augmented_det_equiv(
    sigma: &SpdMatrix,
    lambda_bar: &SpdMatrix,
    beta: f64,
    alpha: f64,
    n: usize,
    m: usize,
    lambda: f64,
    tol: f64,
) -> Result<AugmentedDetEquiv> {
    if sigma.min_eigenvalue() <= PD_FLOOR {
        return Err(Error::SingularSigma(sigma.min_eigenvalue()));
    }
    if sigma.dim() != lambda_bar.dim() {
        return Err(Error::DimensionMismatch(format!(
            "sigma is {} x {} but lambda_bar is {} x {}",
            sigma.dim(),
            sigma.dim(),
            lambda_bar.dim(),
            lambda_bar.dim()
        )));
    }
    lambda_bar
        .validate_psd()
        .map_err(|e| Error::InvalidInput(format!("lambda_bar: {e}")))?;
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::InvalidInput(format!(
            "beta must lie in [0, 1], got {beta}"
        )));
    }
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::InvalidInput(format!(
            "alpha must lie in [0, 1), got {alpha}"
        )));
    }
    if n == 0 || (alpha > 0.0 && m == 0) {
        return Err(Error::InvalidInput(
            "n must be >= 1, and m >= 1 whenever alpha > 0".into(),
        ));
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

    let system = CoupledSystem {
        sigma,
        weighted: sigma.data() * beta + lambda_bar.data(),
        lambda_bar,
        beta,
        alpha,
        n: n as f64,
        m: m.max(1) as f64,
        lambda,
        d: sigma.dim(),
    };

    let mut a_x = 1.0f64;
    let mut a_g = 1.0f64;
    let mut iterations = 0usize;
    let mut residuals = (f64::INFINITY, f64::INFINITY);
    for _ in 0..COUPLED_MAX_ITER {
        iterations += 1;
        let (fx, fg) = system.apply(a_x, a_g)?;
        residuals = ((fx - a_x).abs(), (fg - a_g).abs());
        if residuals.0 <= tol && residuals.1 <= tol {
            let d_bar = SpdMatrix::from_symmetric_unchecked(system.d_bar(a_x, a_g)?);
            return Ok(AugmentedDetEquiv {
                a_x_star: a_x,
                a_g_star: a_g,
                d_bar,
                residuals,
                iterations,
            });
        }
        a_x = (1.0 - COUPLED_DAMPING) * a_x + COUPLED_DAMPING * fx;
        a_g = (1.0 - COUPLED_DAMPING) * a_g + COUPLED_DAMPING * fg;
        if !a_x.is_finite() || !a_g.is_finite() || a_x > 1e15 || a_g > 1e15 {
            return Err(Error::NoConvergence {
                iterations,
                residual: residuals.0.max(residuals.1),
            });
        }
    }

    // bisection fallback on the a_g coordinate
    let h = |a_g: f64, system: &CoupledSystem<'_>| -> Result<(f64, f64)> {
        let a_x = system.solve_a_x(a_g)?;
        let (_, fg) = system.apply(a_x, a_g)?;
        Ok((a_x, fg - a_g))
    };
    let mut lo = 1.0f64;
    let mut hi = 2.0f64;
    let mut expand = 0;
    while h(hi, &system)?.1 > 0.0 {
        hi *= 2.0;
        expand += 1;
        if expand > 60 {
            return Err(Error::NoConvergence {
                iterations,
                residual: residuals.0.max(residuals.1),
            });
        }
    }
    for _ in 0..120 {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        if h(mid, &system)?.1 > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    a_g = 0.5 * (lo + hi);
    a_x = system.solve_a_x(a_g)?;
    let (fx, fg) = system.apply(a_x, a_g)?;
    residuals = ((fx - a_x).abs(), (fg - a_g).abs());
    if residuals.0 <= tol && residuals.1 <= tol {
        let d_bar = SpdMatrix::from_symmetric_unchecked(system.d_bar(a_x, a_g)?);
        Ok(AugmentedDetEquiv {
            a_x_star: a_x,
            a_g_star: a_g,
            d_bar,
            residuals,
            iterations,
        })
    } else {
        Err(Error::NoConvergence {
            iterations,
            residual: residuals.0.max(residuals.1),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shrinkage::{det_equiv_shrinkage, shrinkage_precision, solve_b_star};
    use crate::synth::{build_sigma, sample_data, NoiseSpec, SigmaSpec};

    fn gaussian_x(d: usize, n: usize, seed: u64) -> SampleMatrix {
        let sigma = build_sigma(&SigmaSpec::Ar1 { d, corr: 0.3 }).unwrap();
        sample_data(&sigma, n, &NoiseSpec::Gaussian, RngStream::new(seed, 0))
    }

    #[test]
    fn empty_augmentation_reduces_to_shrinkage() {
        let x = gaussian_x(5, 12, 1);
        let g = SampleMatrix::empty(5);
        let r_aug = augmented_precision(&x, &g, 0.3).unwrap();
        let r = shrinkage_precision(&x, 0.3).unwrap();
        assert_eq!(r_aug.data(), r.data());
    }

    #[test]
    fn zero_data_pure_shift() {
        let x = SampleMatrix::new(DMatrix::zeros(4, 3)).unwrap();
        let g = SampleMatrix::new(DMatrix::zeros(4, 2)).unwrap();
        let r = augmented_precision(&x, &g, 4.0).unwrap();
        for i in 0..4 {
            assert!((r.data()[(i, i)] - 0.25).abs() <= 1e-15);
        }
    }

    #[test]
    fn sherman_morrison_column_update() {
        // R_{X|G} = R_{X^-|G} - (n+m)^{-1} R^- x1 x1^T R^- / (1 + (n+m)^{-1} x1^T R^- x1)
        let x = gaussian_x(6, 10, 3);
        let g = gaussian_x(6, 4, 5);
        let lambda = 0.2;
        let r_full = augmented_precision(&x, &g, lambda).unwrap();
        let x_minus = x.zero_column(0).unwrap();
        let r_loo = augmented_precision(&x_minus, &g, lambda).unwrap();
        let x1 = x.column(0).into_owned();
        let total = (x.len() + g.len()) as f64;
        let rx = r_loo.data() * &x1;
        let denom = 1.0 + quadratic_form(r_loo.data(), &x1) / total;
        let update = r_loo.data() - &rx * rx.transpose() / (total * denom);
        let diff = r_full.data() - update;
        assert!(frobenius_norm_sq(&diff).sqrt() <= 1e-10);
    }

    #[test]
    fn dilation_tends_to_one_for_large_lambda() {
        let x = gaussian_x(5, 20, 7);
        let scheme = DaScheme::FixedGaussianGda {
            cov: SpdMatrix::identity(5),
        };
        let dil = dilation_factors(
            &x,
            &scheme,
            10,
            1e8,
            &McOptions {
                replicates: 8,
                variance_reduction: false,
            },
            RngStream::new(9, 0),
        )
        .unwrap();
        assert!((dil.a_x - 1.0).abs() <= 1e-5);
        assert!((dil.a_g - 1.0).abs() <= 1e-5);
    }

    #[test]
    fn dilation_factors_are_at_least_one() {
        let x = gaussian_x(6, 30, 11);
        let scheme = DaScheme::RandomMaskTda { keep_prob: 0.8 };
        for lambda in [1e-2, 0.1, 1.0, 10.0] {
            let dil = dilation_factors(
                &x,
                &scheme,
                15,
                lambda,
                &McOptions {
                    replicates: 8,
                    variance_reduction: false,
                },
                RngStream::new(13, 0),
            )
            .unwrap();
            assert!(dil.a_x >= 1.0, "lambda {lambda}: a_x = {}", dil.a_x);
            assert!(dil.a_g >= 1.0, "lambda {lambda}: a_g = {}", dil.a_g);
        }
    }

    #[test]
    fn dilation_matches_independent_reassembly_for_gda() {
        // beta = 0 makes the a_x prefactor (1 - alpha)/n exactly
        let x = gaussian_x(5, 16, 15);
        let scheme = DaScheme::FixedGaussianGda {
            cov: SpdMatrix::scaled_identity(5, 0.5),
        };
        let m = 8;
        let lambda = 0.4;
        let k_mc = 6;
        let stream = RngStream::new(17, 0);
        let dil = dilation_factors(
            &x,
            &scheme,
            m,
            lambda,
            &McOptions {
                replicates: k_mc,
                variance_reduction: false,
            },
            stream,
        )
        .unwrap();

        // reassemble through the documented child-stream contract
        let n = x.len();
        let alpha = m as f64 / (n + m) as f64;
        let x_minus = x.zero_column(0).unwrap();
        let x1 = x.column(0).into_owned();
        let dec = moment_decomposition(&scheme, &x).unwrap();
        let mut t_gs = Vec::new();
        let mut qs = Vec::new();
        for k in 0..k_mc {
            let g = sample_augmented(&scheme, &x, m, stream.child(k as u64)).unwrap();
            let r_full = augmented_precision(&x, &g, lambda).unwrap();
            let mixed = sample_covariance(&x)
                .linear_combination(dec.beta, &dec.lambda_g, 1.0)
                .unwrap();
            t_gs.push(trace_product(mixed.data(), r_full.data()) / (n + m) as f64);
            let r_loo = augmented_precision(&x_minus, &g, lambda).unwrap();
            qs.push(quadratic_form(r_loo.data(), &x1));
        }
        let a_g = 1.0 + t_gs.iter().sum::<f64>() / k_mc as f64;
        let a_x = 1.0 + (1.0 - alpha) / n as f64 * qs.iter().sum::<f64>() / k_mc as f64;
        assert!((dil.a_g - a_g).abs() <= 1e-9 * a_g, "{} vs {a_g}", dil.a_g);
        assert!((dil.a_x - a_x).abs() <= 1e-9 * a_x, "{} vs {a_x}", dil.a_x);
    }

    #[test]
    fn phi1_vanishes_when_indicator_fails() {
        let x = gaussian_x(8, 8, 19); // d >= n: indicator false
        let scheme = DaScheme::FixedGaussianGda {
            cov: SpdMatrix::identity(8),
        };
        let dil = dilation_factors(
            &x,
            &scheme,
            4,
            0.5,
            &McOptions {
                replicates: 4,
                variance_reduction: false,
            },
            RngStream::new(21, 0),
        )
        .unwrap();
        let phi = phi_functionals(&x, &scheme, 4, 0.5, &dil, 1.0).unwrap();
        assert!(!phi.indicator);
        assert_eq!(phi.phi1, 0.0);
    }

    #[test]
    fn phi2_alpha_zero_specialization() {
        // m = 0: phi2 = tr((C_X + lambda I)^{-1}) / (d lambda a_x)
        let x = gaussian_x(6, 24, 23);
        let lambda = 0.3;
        let scheme = DaScheme::FixedGaussianGda {
            cov: SpdMatrix::identity(6),
        };
        let dil =
            dilation_factors(&x, &scheme, 0, lambda, &McOptions::default(), RngStream::new(25, 0))
                .unwrap();
        assert_eq!(dil.a_g, 1.0);
        let phi = phi_functionals(&x, &scheme, 0, lambda, &dil, 1e-6).unwrap();
        let r = shrinkage_precision(&x, lambda).unwrap();
        let tr: f64 = (0..6).map(|i| r.data()[(i, i)]).sum();
        let expected = tr / (6.0 * lambda * dil.a_x);
        assert!((phi.phi2 - expected).abs() <= 1e-12 * expected.abs().max(1.0));
    }

    #[test]
    fn phi_assembly_matches_single_expression() {
        let x = gaussian_x(5, 40, 27);
        let scheme = DaScheme::SaltPepperTda {
            keep_prob: 0.7,
            noise_var: 0.4,
        };
        let m = 20;
        let lambda = 0.25;
        let eta = 1e-4;
        let dil = dilation_factors(
            &x,
            &scheme,
            m,
            lambda,
            &McOptions {
                replicates: 8,
                variance_reduction: false,
            },
            RngStream::new(29, 0),
        )
        .unwrap();
        let phi = phi_functionals(&x, &scheme, m, lambda, &dil, eta).unwrap();

        // independent single-expression re-evaluation via LU inverses
        let d = 5.0;
        let n = x.len() as f64;
        let alpha = m as f64 / (x.len() + m) as f64;
        let dec = moment_decomposition(&scheme, &x).unwrap();
        let c = sample_covariance(&x);
        let m_mat = dec.lambda_g.data() * (alpha / dil.a_g) + DMatrix::identity(5, 5) * lambda;
        let m_inv = m_mat.try_inverse().unwrap();
        let ind = crate::shrinkage::indicator_eta(&x, eta).unwrap();
        let phi1 = if ind {
            (1.0 - d / n) / d
                * (c.data().clone().try_inverse().unwrap() * &m_inv).trace()
        } else {
            0.0
        };
        let combo = c.data() * (1.0 - alpha)
            + (dec.lambda_g.data() + c.data() * dec.beta) * (alpha / dil.a_g)
            + DMatrix::identity(5, 5) * lambda;
        let phi2 = (1.0 - (1.0 - dec.beta / dil.a_g) * alpha) / (d * dil.a_x)
            * (combo.try_inverse().unwrap() * &m_inv).trace();
        assert!((phi.phi1 - phi1).abs() <= 1e-12 * phi1.abs().max(1.0));
        assert!((phi.phi2 - phi2).abs() <= 1e-12 * phi2.abs().max(1.0));
    }

    #[test]
    fn singular_m_at_zero_lambda_with_singular_lambda_g() {
        let x = gaussian_x(4, 40, 31);
        // rank-one PSD covariance parameter: Lambda_G is singular
        let mut cov = DMatrix::zeros(4, 4);
        cov[(0, 0)] = 1.0;
        let scheme = DaScheme::FixedGaussianGda {
            cov: SpdMatrix::new(cov).unwrap(),
        };
        let dil = DilationFactors {
            a_x: 1.1,
            a_g: 1.1,
            mc_replicates: 1,
            stderr_a_x: 0.0,
            stderr_a_g: 0.0,
            dropped: 0,
        };
        assert!(matches!(
            phi_functionals(&x, &scheme, 8, 0.0, &dil, 1e-6),
            Err(Error::SingularM { .. })
        ));
    }

    #[test]
    fn error_estimate_large_lambda_limit() {
        let sigma = build_sigma(&SigmaSpec::Identity { d: 8 }).unwrap();
        let x = sample_data(&sigma, 40, &NoiseSpec::Gaussian, RngStream::new(33, 0));
        let scheme = DaScheme::FixedGaussianTda {
            cov: SpdMatrix::scaled_identity(8, 0.25),
        };
        let parts = error_estimate_augmented(
            &x,
            &scheme,
            20,
            1e8,
            1e-6,
            EstimateMode::Oracle(&sigma),
            &McOptions {
                replicates: 4,
                variance_reduction: false,
            },
            RngStream::new(35, 0),
        )
        .unwrap();
        assert!((parts.total() - 1.0).abs() <= 1e-4);
    }

    #[test]
    fn m_zero_total_matches_shrinkage_assembly() {
        let x = gaussian_x(6, 30, 37);
        let lambda = 0.2;
        let eta = 1e-5;
        let parts = error_estimate_augmented(
            &x,
            &DaScheme::FixedGaussianGda {
                cov: SpdMatrix::identity(6),
            },
            0,
            lambda,
            eta,
            EstimateMode::Relative,
            &McOptions::default(),
            RngStream::new(39, 0),
        )
        .unwrap();

        // alpha = 0 specialization assembled from shrinkage quantities
        let r = shrinkage_precision(&x, lambda).unwrap();
        let tr_r2 = frobenius_norm_sq(r.data()) / 6.0;
        let ind = crate::shrinkage::indicator_eta(&x, eta).unwrap();
        let c = sample_covariance(&x);
        let r0 = c.inverse().unwrap();
        let phi1 = if ind {
            (1.0 - 6.0 / 30.0) / 6.0 * r0.trace() / lambda
        } else {
            0.0
        };
        let loo = leave_one_out_covariance(&x, 0).unwrap();
        let r_loo = resolvent_scalar(&loo, lambda).unwrap();
        let x1 = x.column(0).into_owned();
        let a_x = 1.0 + quadratic_form(r_loo.data(), &x1) / 30.0;
        let phi2 = r.data().trace() / (6.0 * lambda * a_x);
        let expected = tr_r2 - 2.0 * (phi1 - phi2);
        assert!(
            (parts.total() - expected).abs() <= 1e-10,
            "{} vs {expected}",
            parts.total()
        );
    }

    #[test]
    fn coupled_solver_reduces_to_shrinkage_at_alpha_zero() {
        let sigma = build_sigma(&SigmaSpec::Ar1 { d: 8, corr: 0.4 }).unwrap();
        let n = 32;
        let lambda = 0.3;
        let out = solve_augmented_det_equiv(
            &sigma,
            &SpdMatrix::identity(8),
            0.0,
            0.0,
            n,
            0,
            lambda,
            1e-12,
        )
        .unwrap();
        assert_eq!(out.a_g_star, 1.0);
        let b = solve_b_star(&sigma, n, lambda, 1e-12).unwrap();
        assert!((out.a_x_star - b.value).abs() <= 1e-10);
        let de = det_equiv_shrinkage(&sigma, n, lambda).unwrap();
        let diff = out.d_bar.data() - de.data();
        assert!(frobenius_norm_sq(&diff).sqrt() <= 1e-10);
    }

    #[test]
    fn coupled_solver_dominant_shift_expansion() {
        let sigma = build_sigma(&SigmaSpec::Ar1 { d: 6, corr: 0.2 }).unwrap();
        let lambda_bar = SpdMatrix::scaled_identity(6, 0.8);
        let n = 24;
        let m = 12;
        let alpha = m as f64 / (n + m) as f64;
        let lambda = 1e6;
        let out =
            solve_augmented_det_equiv(&sigma, &lambda_bar, 0.0, alpha, n, m, lambda, 1e-12)
                .unwrap();
        let ax_expected = 1.0 + (1.0 - alpha) * sigma.trace() / (n as f64 * lambda);
        let ag_expected = 1.0 + alpha * lambda_bar.trace() / (m as f64 * lambda);
        assert!((out.a_x_star - ax_expected).abs() <= 1e-6);
        assert!((out.a_g_star - ag_expected).abs() <= 1e-6);
    }

    #[test]
    fn coupled_solver_reconstruction_invariant() {
        let sigma = build_sigma(&SigmaSpec::Spectrum {
            values: vec![0.5, 1.0, 2.0, 4.0],
            seed: 41,
        })
        .unwrap();
        let lambda_bar = build_sigma(&SigmaSpec::Ar1 { d: 4, corr: 0.5 }).unwrap();
        let beta = 0.6;
        let n = 20;
        let m = 10;
        let alpha = m as f64 / (n + m) as f64;
        let out =
            solve_augmented_det_equiv(&sigma, &lambda_bar, beta, alpha, n, m, 0.15, 1e-12).unwrap();
        let px = 1.0 - (1.0 - beta / out.a_g_star) * alpha;
        let mut recon = sigma.data() * (px / out.a_x_star)
            + lambda_bar.data() * (alpha / out.a_g_star);
        for i in 0..4 {
            recon[(i, i)] += 0.15;
        }
        let product = recon * out.d_bar.data();
        let diff = product - DMatrix::identity(4, 4);
        assert!(frobenius_norm_sq(&diff).sqrt() <= 1e-10);
        assert!(out.a_x_star >= 1.0 && out.a_g_star >= 1.0);
    }
}
