//! Data-augmentation schemes: sampling artificial columns `G` given `X`, and
//! the exact second-moment decomposition `E[C_G | X] = beta C_X + Lambda_G(X)`
//! that every augmented-estimator formula consumes.
//!
//! Generative (GDA) schemes draw from a fitted model and ignore the columns
//! of `X` beyond their parameters; transformative (TDA) schemes resample a
//! column uniformly and perturb it. Column `j` of the output is drawn from
//! `stream.child(j)`, with the resampling index drawn before the noise, so
//! output bits do not depend on scheduling.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{frobenius_norm_sq, sample_covariance, SampleMatrix, SpdMatrix};
use crate::synth::RngStream;

/// Declarative description of one augmentation procedure.
#[derive(Debug, Clone)]
pub enum DaScheme {
    /// `G_j ~ N(0, cov)`.
    FixedGaussianGda { cov: SpdMatrix },
    /// `G_j ~ sum_i w_i N(mu_i, cov_i)`, centered: `sum_i w_i mu_i = 0`.
    GaussianMixtureGda {
        weights: Vec<f64>,
        means: Vec<DVector<f64>>,
        covs: Vec<SpdMatrix>,
    },
    /// `G_j = X_I + Z`, `Z ~ N(0, cov)`.
    FixedGaussianTda { cov: SpdMatrix },
    /// `G_j = X_I .* B`, `B ~ Ber(keep_prob)^d` elementwise.
    RandomMaskTda { keep_prob: f64 },
    /// `G_j = X_I .* B + (1 - B) .* N(0, noise_var)` elementwise.
    SaltPepperTda { keep_prob: f64, noise_var: f64 },
}

impl DaScheme {
    pub fn name(&self) -> &'static str {
        match self {
            DaScheme::FixedGaussianGda { .. } => "fixed_gaussian_gda",
            DaScheme::GaussianMixtureGda { .. } => "gaussian_mixture_gda",
            DaScheme::FixedGaussianTda { .. } => "fixed_gaussian_tda",
            DaScheme::RandomMaskTda { .. } => "random_mask_tda",
            DaScheme::SaltPepperTda { .. } => "salt_pepper_tda",
        }
    }

    pub fn is_generative(&self) -> bool {
        matches!(
            self,
            DaScheme::FixedGaussianGda { .. } | DaScheme::GaussianMixtureGda { .. }
        )
    }

    /// The scheme's `beta` in `E[C_G | X] = beta C_X + Lambda_G(X)`. Constant
    /// in `X` for every supported scheme. Masking schemes carry `rho^2`, the
    /// exact value from the law of total expectation.
    pub fn beta(&self) -> f64 {
        match self {
            DaScheme::FixedGaussianGda { .. } | DaScheme::GaussianMixtureGda { .. } => 0.0,
            DaScheme::FixedGaussianTda { .. } => 1.0,
            DaScheme::RandomMaskTda { keep_prob }
            | DaScheme::SaltPepperTda { keep_prob, .. } => keep_prob * keep_prob,
        }
    }

    /// Checks the parameter invariants against sample dimension `d`.
    pub fn validate(&self, d: usize) -> Result<()> {
        let check_cov = |cov: &SpdMatrix, what: &str| -> Result<()> {
            if cov.dim() != d {
                return Err(Error::InvalidScheme(format!(
                    "{what} covariance is {} x {} but samples have dimension {d}",
                    cov.dim(),
                    cov.dim()
                )));
            }
            cov.validate_psd()
                .map_err(|e| Error::InvalidScheme(format!("{what} covariance: {e}")))
        };
        match self {
            DaScheme::FixedGaussianGda { cov } | DaScheme::FixedGaussianTda { cov } => {
                check_cov(cov, self.name())
            }
            DaScheme::GaussianMixtureGda {
                weights,
                means,
                covs,
            } => {
                let k = weights.len();
                if k == 0 || means.len() != k || covs.len() != k {
                    return Err(Error::InvalidScheme(format!(
                        "mixture needs matching non-empty weights/means/covs (got {}/{}/{})",
                        k,
                        means.len(),
                        covs.len()
                    )));
                }
                if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
                    return Err(Error::InvalidScheme(
                        "mixture weights must be non-negative".into(),
                    ));
                }
                let sum: f64 = weights.iter().sum();
                if (sum - 1.0).abs() > 1e-10 {
                    return Err(Error::InvalidScheme(format!(
                        "mixture weights must sum to 1 (got {sum})"
                    )));
                }
                for mu in means {
                    if mu.len() != d {
                        return Err(Error::InvalidScheme(format!(
                            "mixture mean has dimension {} but samples have {d}",
                            mu.len()
                        )));
                    }
                }
                for cov in covs {
                    check_cov(cov, "mixture component")?;
                }
                // centered mixture: E[G | X] must vanish
                let mut bary = DVector::zeros(d);
                for (w, mu) in weights.iter().zip(means) {
                    bary += mu * *w;
                }
                let max_norm = means.iter().map(|m| m.norm()).fold(0.0f64, f64::max);
                if bary.norm() > 1e-10 * max_norm {
                    return Err(Error::InvalidScheme(format!(
                        "mixture is not centered: |sum w_i mu_i| = {:.3e}",
                        bary.norm()
                    )));
                }
                Ok(())
            }
            DaScheme::RandomMaskTda { keep_prob } => {
                if !(*keep_prob > 0.0 && *keep_prob <= 1.0) {
                    return Err(Error::InvalidScheme(format!(
                        "keep probability must lie in (0, 1], got {keep_prob}"
                    )));
                }
                Ok(())
            }
            DaScheme::SaltPepperTda {
                keep_prob,
                noise_var,
            } => {
                if !(*keep_prob > 0.0 && *keep_prob <= 1.0) {
                    return Err(Error::InvalidScheme(format!(
                        "keep probability must lie in (0, 1], got {keep_prob}"
                    )));
                }
                if !noise_var.is_finite() || *noise_var < 0.0 {
                    return Err(Error::InvalidScheme(format!(
                        "noise variance must be >= 0, got {noise_var}"
                    )));
                }
                Ok(())
            }
        }
    }
}

/// The exact `(beta, Lambda_G(X))` pair with spectral diagnostics.
#[derive(Debug, Clone)]
pub struct MomentDecomposition {
    pub beta: f64,
    pub lambda_g: SpdMatrix,
    /// `(lambda_min, lambda_max)` of `Lambda_G(X)`; reported only, never
    /// enforced (mask schemes can produce a singular `Lambda_G`).
    pub kappa_bounds: (f64, f64),
}

/// Draws `m` i.i.d. columns from the scheme's conditional distribution.
///
/// Column `j` consumes `stream.child(j)`; TDA schemes draw the resampling
/// index first, then the noise. `m = 0` yields an empty matrix so that the
/// unaugmented limit stays expressible.
pub fn sample_augmented(
    scheme: &DaScheme,
    x: &SampleMatrix,
    m: usize,
    stream: RngStream,
) -> Result<SampleMatrix> {
    let d = x.dim();
    scheme.validate(d)?;
    if !scheme.is_generative() && x.is_empty() {
        return Err(Error::InvalidInput(
            "transformative schemes need at least one original sample".into(),
        ));
    }
    if m == 0 {
        return Ok(SampleMatrix::empty(d));
    }
    let n = x.len() as u64;
    let mut out = DMatrix::zeros(d, m);

    match scheme {
        DaScheme::FixedGaussianGda { cov } => {
            let root = cov.sqrt();
            let mut z = DVector::zeros(d);
            for j in 0..m {
                let mut rng = stream.child(j as u64).rng();
                for k in 0..d {
                    z[k] = StandardNormal.sample(&mut rng);
                }
                out.column_mut(j).gemv(1.0, root.data(), &z, 0.0);
            }
        }
        DaScheme::GaussianMixtureGda {
            weights,
            means,
            covs,
        } => {
            let roots: Vec<SpdMatrix> = covs.iter().map(|c| c.sqrt()).collect();
            let mut z = DVector::zeros(d);
            for j in 0..m {
                let mut rng = stream.child(j as u64).rng();
                let u: f64 = rng.random();
                let mut comp = weights.len() - 1;
                let mut acc = 0.0;
                for (i, w) in weights.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        comp = i;
                        break;
                    }
                }
                for k in 0..d {
                    z[k] = StandardNormal.sample(&mut rng);
                }
                let mut col = out.column_mut(j);
                col.gemv(1.0, roots[comp].data(), &z, 0.0);
                col += &means[comp];
            }
        }
        DaScheme::FixedGaussianTda { cov } => {
            let root = cov.sqrt();
            let mut z = DVector::zeros(d);
            for j in 0..m {
                let mut rng = stream.child(j as u64).rng();
                let idx = rng.random_range(0..n) as usize;
                for k in 0..d {
                    z[k] = StandardNormal.sample(&mut rng);
                }
                let mut col = out.column_mut(j);
                col.gemv(1.0, root.data(), &z, 0.0);
                col += &x.column(idx);
            }
        }
        DaScheme::RandomMaskTda { keep_prob } => {
            for j in 0..m {
                let mut rng = stream.child(j as u64).rng();
                let idx = rng.random_range(0..n) as usize;
                let src = x.column(idx);
                let mut col = out.column_mut(j);
                for k in 0..d {
                    let keep: f64 = rng.random();
                    col[k] = if keep < *keep_prob { src[k] } else { 0.0 };
                }
            }
        }
        DaScheme::SaltPepperTda {
            keep_prob,
            noise_var,
        } => {
            let sd = noise_var.sqrt();
            for j in 0..m {
                let mut rng = stream.child(j as u64).rng();
                let idx = rng.random_range(0..n) as usize;
                let src = x.column(idx);
                let mut col = out.column_mut(j);
                // mask bits first, then the replacement noise
                for k in 0..d {
                    let keep: f64 = rng.random();
                    col[k] = if keep < *keep_prob { src[k] } else { f64::NAN };
                }
                for k in 0..d {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    if col[k].is_nan() {
                        col[k] = sd * z;
                    }
                }
            }
        }
    }
    SampleMatrix::new(out)
}

/// The exact `(beta, Lambda_G(X))` with `E[C_G | X] = beta C_X + Lambda_G(X)`,
/// computed analytically per scheme.
pub fn moment_decomposition(scheme: &DaScheme, x: &SampleMatrix) -> Result<MomentDecomposition> {
    let d = x.dim();
    scheme.validate(d)?;
    let lambda_g = match scheme {
        DaScheme::FixedGaussianGda { cov } | DaScheme::FixedGaussianTda { cov } => cov.clone(),
        DaScheme::GaussianMixtureGda {
            weights,
            means,
            covs,
        } => {
            let mut acc = DMatrix::zeros(d, d);
            for ((w, mu), cov) in weights.iter().zip(means).zip(covs) {
                acc += cov.data() * *w;
                acc += mu * mu.transpose() * *w;
            }
            SpdMatrix::from_symmetric_unchecked(acc)
        }
        DaScheme::RandomMaskTda { keep_prob } => {
            let c = sample_covariance(x);
            let rho = *keep_prob;
            let diag = DVector::from_iterator(d, (0..d).map(|k| rho * (1.0 - rho) * c.data()[(k, k)]));
            SpdMatrix::from_diagonal(&diag)?
        }
        DaScheme::SaltPepperTda {
            keep_prob,
            noise_var,
        } => {
            let c = sample_covariance(x);
            let rho = *keep_prob;
            let diag = DVector::from_iterator(
                d,
                (0..d).map(|k| rho * (1.0 - rho) * c.data()[(k, k)] + (1.0 - rho) * noise_var),
            );
            SpdMatrix::from_diagonal(&diag)?
        }
    };
    let kappa_bounds = (lambda_g.min_eigenvalue(), lambda_g.max_eigenvalue());
    Ok(MomentDecomposition {
        beta: scheme.beta(),
        lambda_g,
        kappa_bounds,
    })
}

/// Monte-Carlo check of the decomposition: relative Frobenius distance
/// between the empirical covariance of `m_mc` draws and
/// `beta C_X + Lambda_G(X)`.
pub fn verify_decomposition(
    scheme: &DaScheme,
    x: &SampleMatrix,
    m_mc: usize,
    stream: RngStream,
) -> Result<f64> {
    if m_mc < 1_000 {
        return Err(Error::InvalidInput(format!(
            "m_mc must be at least 1000, got {m_mc}"
        )));
    }
    let dec = moment_decomposition(scheme, x)?;
    let c_x = sample_covariance(x);
    let expected = c_x.linear_combination(dec.beta, &dec.lambda_g, 1.0)?;
    let g = sample_augmented(scheme, x, m_mc, stream)?;
    let c_g = sample_covariance(&g);
    let diff = c_g.data() - expected.data();
    Ok(frobenius_norm_sq(&diff).sqrt() / frobenius_norm_sq(expected.data()).sqrt())
}
