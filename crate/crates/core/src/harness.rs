//! Oracles, tuning curves and experiment suites: true/proxy errors, the
//! lambda- and alpha-curve pipelines, concentration and deterministic-
//! equivalent convergence experiments, and a small isotropic EM fitter for
//! mixture GDA centroids.
//!
//! Replicates and grid points fan out as parallel maps over derived RNG
//! streams and aggregate in fixed order, so reports are byte-stable for a
//! fixed seed regardless of thread count.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::augment::{sample_augmented, DaScheme};
use crate::augmented::{
    augmented_precision, dilation_factors, error_estimate_augmented_with,
    solve_augmented_det_equiv, McOptions,
};
use crate::error::{Error, Result};
use crate::linalg::{
    cholesky_inverse, compensated_sum, frobenius_sq_distance, leave_one_out_covariance,
    pooled_covariance, resolvent_scalar, sample_covariance, trace_product, SampleMatrix,
    SpdMatrix, PD_FLOOR,
};
use crate::shrinkage::{det_equiv_shrinkage, suggest_eta, EstimateMode, ShrinkageContext};
use crate::synth::{build_sigma, sample_data, NoiseSpec, RngStream, SigmaSpec};

/// True quadratic error `||R - Sigma^{-1}||_F^2 / d`.
pub fn oracle_error(r: &SpdMatrix, sigma: &SpdMatrix) -> Result<f64> {
    let inv = sigma.inverse()?;
    Ok(frobenius_sq_distance(r, &inv)? / r.dim() as f64)
}

/// Proxy error against the inverse of a full-dataset sample covariance.
pub fn proxy_error(r: &SpdMatrix, full_cov: &SpdMatrix) -> Result<f64> {
    oracle_error(r, full_cov)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CurveAxis {
    Lambda,
    Alpha,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct PointDiagnostics {
    pub indicator: Option<bool>,
    pub b_hat: Option<f64>,
    pub a_x: Option<f64>,
    pub a_g: Option<f64>,
    /// Set when a guarded term was zeroed or MC replicates were dropped.
    pub flagged: bool,
    /// Per-point failure; the point is excluded from the argmins.
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CurvePoint {
    pub param: f64,
    pub estimate: Option<f64>,
    pub oracle: Option<f64>,
    pub proxy: Option<f64>,
    pub diagnostics: PointDiagnostics,
}

/// A hyperparameter grid with estimates and optional oracle/proxy columns.
#[derive(Debug, Clone, Serialize)]
pub struct ErrorCurve {
    pub axis: CurveAxis,
    pub points: Vec<CurvePoint>,
    pub argmin_estimate: Option<usize>,
    pub argmin_oracle: Option<usize>,
}

fn argmin_by<F: Fn(&CurvePoint) -> Option<f64>>(points: &[CurvePoint], f: F) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in points.iter().enumerate() {
        if p.diagnostics.error.is_some() {
            continue;
        }
        if let Some(v) = f(p) {
            // first occurrence wins ties (favors stronger regularization)
            if best.is_none_or(|(_, bv)| v < bv) {
                best = Some((i, v));
            }
        }
    }
    best.map(|(i, _)| i)
}

/// No NaN/Inf may ever reach a curve: a non-finite value turns the point
/// into a recorded error, excluded from the argmins.
fn guard_finite(point: &mut CurvePoint) {
    let bad = point.estimate.is_some_and(|v| !v.is_finite())
        || point.oracle.is_some_and(|v| !v.is_finite())
        || point.proxy.is_some_and(|v| !v.is_finite());
    if bad && point.diagnostics.error.is_none() {
        point.diagnostics.error = Some("non-finite value".into());
    }
}

fn finish_curve(axis: CurveAxis, mut points: Vec<CurvePoint>) -> ErrorCurve {
    for p in points.iter_mut() {
        guard_finite(p);
    }
    let argmin_estimate = argmin_by(&points, |p| p.estimate);
    let argmin_oracle = argmin_by(&points, |p| p.oracle);
    ErrorCurve {
        axis,
        points,
        argmin_estimate,
        argmin_oracle,
    }
}

fn sorted_grid(grid: &[f64]) -> Result<Vec<f64>> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("hyperparameter grid is empty".into()));
    }
    if grid.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("grid values must be finite".into()));
    }
    let mut g = grid.to_vec();
    g.sort_by(|a, b| a.total_cmp(b));
    Ok(g)
}

/// Configuration for [`lambda_curve`]. The oracle column is filled when the
/// true covariance is supplied (which also switches the estimate to oracle
/// mode); the proxy column when a full-dataset covariance is supplied.
#[derive(Debug, Clone)]
pub struct LambdaCurveConfig {
    pub grid: Vec<f64>,
    pub eta: f64,
    pub oracle_sigma: Option<SpdMatrix>,
    pub proxy_cov: Option<SpdMatrix>,
}

/// Sweeps `lambda -> E_hat_X(lambda)` over a grid, sharing one
/// eigendecomposition of `C_X` across all points.
pub fn lambda_curve(x: &SampleMatrix, cfg: &LambdaCurveConfig) -> Result<ErrorCurve> {
    let grid = sorted_grid(&cfg.grid)?;
    let ctx = ShrinkageContext::new(x);
    ctx.covariance().eigen(); // populate the shared cache up front
    let points: Vec<CurvePoint> = grid
        .par_iter()
        .map(|&lambda| {
            let mut diag = PointDiagnostics::default();
            let mode = match &cfg.oracle_sigma {
                Some(s) => EstimateMode::Oracle(s),
                None => EstimateMode::Relative,
            };
            let estimate = match ctx.error_estimate(lambda, cfg.eta, mode) {
                Ok(parts) => {
                    diag.indicator = Some(parts.indicator);
                    diag.b_hat = Some(parts.b_hat);
                    diag.flagged = parts.loo_singular;
                    Some(parts.total())
                }
                Err(e) => {
                    diag.error = Some(e.to_string());
                    None
                }
            };
            let mut oracle = None;
            let mut proxy = None;
            if diag.error.is_none() {
                match resolvent_scalar(ctx.covariance(), lambda) {
                    Ok(r) => {
                        if let Some(sigma) = &cfg.oracle_sigma {
                            match oracle_error(&r, sigma) {
                                Ok(v) => oracle = Some(v),
                                Err(e) => diag.error = Some(e.to_string()),
                            }
                        }
                        if let Some(full) = &cfg.proxy_cov {
                            match proxy_error(&r, full) {
                                Ok(v) => proxy = Some(v),
                                Err(e) => diag.error = Some(e.to_string()),
                            }
                        }
                    }
                    Err(e) => diag.error = Some(e.to_string()),
                }
            }
            CurvePoint {
                param: lambda,
                estimate,
                oracle,
                proxy,
                diagnostics: diag,
            }
        })
        .collect();
    Ok(finish_curve(CurveAxis::Lambda, points))
}

/// Configuration for [`alpha_curve`].
#[derive(Debug, Clone)]
pub struct AlphaCurveConfig {
    pub scheme: DaScheme,
    pub lambda: f64,
    pub alpha_grid: Vec<f64>,
    pub eta: f64,
    pub mc: McOptions,
    pub oracle_sigma: Option<SpdMatrix>,
    pub proxy_cov: Option<SpdMatrix>,
}

/// Number of artificial samples realizing a proportion `alpha = m / (n + m)`.
pub fn alpha_to_m(alpha: f64, n: usize) -> Result<usize> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::InvalidInput(format!(
            "alpha must lie in [0, 1), got {alpha}"
        )));
    }
    Ok((alpha * n as f64 / (1.0 - alpha)).round() as usize)
}

/// Sweeps `alpha -> E_hat_Aug(lambda)` over a proportion grid. Point `i`
/// draws from `stream.child(i)`; the pathwise `G` of each point is shared by
/// its estimate and its oracle/proxy columns.
pub fn alpha_curve(
    x: &SampleMatrix,
    cfg: &AlphaCurveConfig,
    stream: RngStream,
) -> Result<ErrorCurve> {
    let grid = sorted_grid(&cfg.alpha_grid)?;
    cfg.scheme.validate(x.dim())?;
    let points: Vec<CurvePoint> = grid
        .par_iter()
        .enumerate()
        .map(|(i, &alpha)| {
            let mut diag = PointDiagnostics::default();
            let pstream = stream.child(i as u64);
            let mode = match &cfg.oracle_sigma {
                Some(s) => EstimateMode::Oracle(s),
                None => EstimateMode::Relative,
            };
            let outcome = (|| -> Result<(f64, Option<f64>, Option<f64>, PointDiagnostics)> {
                let m = alpha_to_m(alpha, x.len())?;
                let dil =
                    dilation_factors(x, &cfg.scheme, m, cfg.lambda, &cfg.mc, pstream.child(0))?;
                let g = sample_augmented(&cfg.scheme, x, m, pstream.child(1))?;
                let parts = error_estimate_augmented_with(
                    x, &g, &cfg.scheme, cfg.lambda, cfg.eta, mode, dil,
                )?;
                let d = PointDiagnostics {
                    indicator: Some(parts.indicator),
                    a_x: Some(parts.dilation.a_x),
                    a_g: Some(parts.dilation.a_g),
                    flagged: parts.loo_singular || parts.dilation.dropped > 0,
                    ..Default::default()
                };
                let mut oracle = None;
                let mut proxy = None;
                if cfg.oracle_sigma.is_some() || cfg.proxy_cov.is_some() {
                    let r_aug = augmented_precision(x, &g, cfg.lambda)?;
                    if let Some(sigma) = &cfg.oracle_sigma {
                        oracle = Some(oracle_error(&r_aug, sigma)?);
                    }
                    if let Some(full) = &cfg.proxy_cov {
                        proxy = Some(proxy_error(&r_aug, full)?);
                    }
                }
                Ok((parts.total(), oracle, proxy, d))
            })();
            match outcome {
                Ok((estimate, oracle, proxy, d)) => CurvePoint {
                    param: alpha,
                    estimate: Some(estimate),
                    oracle,
                    proxy,
                    diagnostics: d,
                },
                Err(e) => {
                    diag.error = Some(e.to_string());
                    CurvePoint {
                        param: alpha,
                        estimate: None,
                        oracle: None,
                        proxy: None,
                        diagnostics: diag,
                    }
                }
            }
        })
        .collect();
    Ok(finish_curve(CurveAxis::Alpha, points))
}

/// One line of an experiment report.
#[derive(Debug, Clone, Serialize)]
pub struct ReplicateRecord {
    pub index: usize,
    pub value: f64,
    pub extras: Vec<(String, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SummaryStats {
    pub mean: f64,
    pub stderr: f64,
    /// `(level, value)` empirical quantiles.
    pub quantiles: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ToleranceCheck {
    pub name: String,
    pub observed: f64,
    pub bound: f64,
    pub passed: bool,
}

/// Self-describing experiment outcome; the thresholds live in the config
/// echo, not in code.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub name: String,
    pub config_echo: Vec<(String, String)>,
    pub replicates: Vec<ReplicateRecord>,
    pub summary: SummaryStats,
    pub checks: Vec<ToleranceCheck>,
    pub passed: bool,
}

fn summarize(values: &[f64]) -> SummaryStats {
    let k = values.len().max(1) as f64;
    let mean = compensated_sum(values.iter().copied()) / k;
    let stderr = if values.len() >= 2 {
        let var = compensated_sum(values.iter().map(|v| (v - mean) * (v - mean))) / (k - 1.0);
        (var / k).sqrt()
    } else {
        0.0
    };
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let quantile = |q: f64| -> f64 {
        if sorted.is_empty() {
            return f64::NAN;
        }
        let pos = q * (sorted.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        let w = pos - lo as f64;
        sorted[lo] * (1.0 - w) + sorted[hi] * w
    };
    SummaryStats {
        mean,
        stderr,
        quantiles: vec![(0.5, quantile(0.5)), (0.95, quantile(0.95))],
    }
}

/// How the conditioning threshold is chosen inside an experiment.
#[derive(Debug, Clone, Copy)]
pub enum EtaPolicy {
    /// Per-replicate data-driven default.
    Auto,
    Fixed(f64),
    /// Plug the known population `lambda_min` into the admissible bound.
    FromSigma { safety: f64 },
}

#[derive(Debug, Clone)]
pub struct ConcentrationConfig {
    pub sigma_spec: SigmaSpec,
    pub n: usize,
    pub lambda: f64,
    pub eta: EtaPolicy,
    pub noise: NoiseSpec,
    pub replicates: usize,
    /// Pass iff the empirical 95th percentile of `|E_hat - E|` stays below.
    pub p95_bound: f64,
    /// Optional additional check on the mean of `|E_hat - E| / E`.
    pub mean_rel_bound: Option<f64>,
    pub seed: u64,
}

/// Draws replicate datasets and compares the data-only error estimate with
/// the oracle error.
pub fn concentration_experiment(cfg: &ConcentrationConfig) -> Result<ExperimentReport> {
    if cfg.replicates < 20 {
        return Err(Error::InvalidInput(format!(
            "at least 20 replicates required, got {}",
            cfg.replicates
        )));
    }
    let sigma = build_sigma(&cfg.sigma_spec)?;
    let d = sigma.dim();
    let eta_fixed = match cfg.eta {
        EtaPolicy::Fixed(v) => Some(v),
        EtaPolicy::FromSigma { safety } => {
            Some(suggest_eta(sigma.min_eigenvalue(), cfg.n, d, safety)?)
        }
        EtaPolicy::Auto => None,
    };
    let base = RngStream::new(cfg.seed, 0);
    let per_rep: Vec<(f64, f64)> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| -> Result<(f64, f64)> {
            let x = sample_data(&sigma, cfg.n, &cfg.noise, base.child(r as u64));
            let ctx = ShrinkageContext::new(&x);
            let eta = eta_fixed.unwrap_or_else(|| crate::shrinkage::auto_eta(&x));
            let parts = ctx.error_estimate(cfg.lambda, eta, EstimateMode::Oracle(&sigma))?;
            let r_x = resolvent_scalar(ctx.covariance(), cfg.lambda)?;
            let oracle = oracle_error(&r_x, &sigma)?;
            Ok((parts.total(), oracle))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut records = Vec::with_capacity(cfg.replicates);
    let mut abs_devs = Vec::with_capacity(cfg.replicates);
    let mut rel_devs = Vec::with_capacity(cfg.replicates);
    for (i, (est, oracle)) in per_rep.iter().enumerate() {
        let dev = (est - oracle).abs();
        abs_devs.push(dev);
        rel_devs.push(dev / oracle.max(f64::MIN_POSITIVE));
        records.push(ReplicateRecord {
            index: i,
            value: dev,
            extras: vec![
                ("estimate".into(), *est),
                ("oracle".into(), *oracle),
                ("relative".into(), dev / oracle.max(f64::MIN_POSITIVE)),
            ],
        });
    }
    let summary = summarize(&abs_devs);
    let p95 = summary
        .quantiles
        .iter()
        .find(|(q, _)| *q == 0.95)
        .map(|(_, v)| *v)
        .unwrap_or(f64::NAN);
    let mut checks = vec![ToleranceCheck {
        name: "p95_abs_deviation".into(),
        observed: p95,
        bound: cfg.p95_bound,
        passed: p95 <= cfg.p95_bound,
    }];
    if let Some(bound) = cfg.mean_rel_bound {
        let mean_rel = compensated_sum(rel_devs.iter().copied()) / rel_devs.len() as f64;
        checks.push(ToleranceCheck {
            name: "mean_rel_deviation".into(),
            observed: mean_rel,
            bound,
            passed: mean_rel <= bound,
        });
    }
    let passed = checks.iter().all(|c| c.passed);
    let mut config_echo = vec![
        ("experiment".into(), "concentration".into()),
        ("sigma".into(), format!("{:?}", cfg.sigma_spec)),
        ("d".into(), d.to_string()),
        ("n".into(), cfg.n.to_string()),
        ("lambda".into(), cfg.lambda.to_string()),
        ("eta".into(), format!("{:?}", cfg.eta)),
        ("noise".into(), format!("{:?}", cfg.noise)),
        ("replicates".into(), cfg.replicates.to_string()),
        ("p95_bound".into(), cfg.p95_bound.to_string()),
        ("seed".into(), cfg.seed.to_string()),
    ];
    if let Some(b) = cfg.mean_rel_bound {
        config_echo.push(("mean_rel_bound".into(), b.to_string()));
    }
    Ok(ExperimentReport {
        name: "concentration".into(),
        config_echo,
        replicates: records,
        summary,
        checks,
        passed,
    })
}

/// Covariance families that scale with the dimension.
#[derive(Debug, Clone, Copy)]
pub enum SigmaFamily {
    Identity,
    Scaled(f64),
    Ar1(f64),
}

impl SigmaFamily {
    pub fn spec(&self, d: usize) -> SigmaSpec {
        match self {
            SigmaFamily::Identity => SigmaSpec::Identity { d },
            SigmaFamily::Scaled(v) => SigmaSpec::Scaled { d, variance: *v },
            SigmaFamily::Ar1(r) => SigmaSpec::Ar1 { d, corr: *r },
        }
    }
}

/// The deterministic test matrix for trace functionals.
#[derive(Debug, Clone, Copy)]
pub enum BMatrixSpec {
    /// `Sigma^{-1} / ||Sigma^{-1}||_F`.
    SigmaInvNormalized,
    /// `I / sqrt(d)`.
    IdentityNormalized,
}

#[derive(Debug, Clone, Copy)]
pub enum IsoSchemeKind {
    FixedGaussianGda,
    FixedGaussianTda,
}

/// Constant-decomposition augmentation used by the convergence experiment.
#[derive(Debug, Clone, Copy)]
pub struct DetEquivAugmentation {
    pub alpha: f64,
    pub scheme: IsoSchemeKind,
    pub variance: f64,
}

#[derive(Debug, Clone)]
pub struct DetEquivConfig {
    pub family: SigmaFamily,
    /// `d = round(ratio * n)`.
    pub ratio: f64,
    /// Ascending sample counts, at least 3 entries.
    pub n_list: Vec<usize>,
    pub lambda: f64,
    pub b_matrix: BMatrixSpec,
    pub noise: NoiseSpec,
    pub replicates: usize,
    /// Pass iff each successive bias is `<= decay_factor` times the previous.
    pub decay_factor: f64,
    pub eta_safety: f64,
    pub augmentation: Option<DetEquivAugmentation>,
    pub seed: u64,
}

fn b_matrix(spec: BMatrixSpec, sigma: &SpdMatrix) -> Result<DMatrix<f64>> {
    match spec {
        BMatrixSpec::SigmaInvNormalized => {
            let inv = sigma.inverse()?;
            let norm = crate::linalg::frobenius_norm_sq(inv.data()).sqrt();
            Ok(inv.data() / norm)
        }
        BMatrixSpec::IdentityNormalized => {
            let d = sigma.dim();
            Ok(DMatrix::identity(d, d) / (d as f64).sqrt())
        }
    }
}

/// Measures `|tr(B {E_MC[R 1_A] - D_bar 1_A}) / d|` for each `n` and checks
/// that the bias shrinks by the configured factor per step.
pub fn det_equiv_convergence(cfg: &DetEquivConfig) -> Result<ExperimentReport> {
    if cfg.n_list.len() < 3 {
        return Err(Error::InvalidInput(
            "n_list must contain at least 3 ascending values".into(),
        ));
    }
    if cfg.n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput("n_list must be ascending".into()));
    }
    if cfg.replicates < 2 {
        return Err(Error::InvalidInput("need at least 2 replicates".into()));
    }

    let base = RngStream::new(cfg.seed, 0);
    let mut records = Vec::new();
    let mut biases = Vec::new();

    for (step, &n) in cfg.n_list.iter().enumerate() {
        let d = (cfg.ratio * n as f64).round() as usize;
        if d == 0 || d >= n {
            return Err(Error::InvalidInput(format!(
                "ratio {} gives d = {d} for n = {n}",
                cfg.ratio
            )));
        }
        let sigma = build_sigma(&cfg.family.spec(d))?;
        let eta = suggest_eta(sigma.min_eigenvalue(), n, d, cfg.eta_safety)?;
        let b = b_matrix(cfg.b_matrix, &sigma)?;

        let (m, d_bar, scheme) = match cfg.augmentation {
            None => (0usize, det_equiv_shrinkage(&sigma, n, cfg.lambda)?, None),
            Some(aug) => {
                let m = alpha_to_m(aug.alpha, n)?;
                let alpha_eff = m as f64 / (n + m) as f64;
                let cov = SpdMatrix::scaled_identity(d, aug.variance);
                let (beta, scheme) = match aug.scheme {
                    IsoSchemeKind::FixedGaussianGda => {
                        (0.0, DaScheme::FixedGaussianGda { cov: cov.clone() })
                    }
                    IsoSchemeKind::FixedGaussianTda => {
                        (1.0, DaScheme::FixedGaussianTda { cov: cov.clone() })
                    }
                };
                let solved = if m == 0 {
                    det_equiv_shrinkage(&sigma, n, cfg.lambda)?
                } else {
                    solve_augmented_det_equiv(
                        &sigma, &cov, beta, alpha_eff, n, m, cfg.lambda, 1e-11,
                    )?
                    .d_bar
                };
                (m, solved, Some(scheme))
            }
        };

        // per-replicate scalar: tr(B (R - D_bar)) / d gated by the indicator
        let step_stream = base.child(step as u64);
        let traces: Vec<f64> = (0..cfg.replicates)
            .into_par_iter()
            .map(|r| -> Result<f64> {
                let rep = step_stream.child(r as u64);
                let x = sample_data(&sigma, n, &cfg.noise, rep.child(0));
                let loo = leave_one_out_covariance(&x, 0)?;
                // PSD probe: lambda_min(C^-) >= eta iff C^- - eta I admits a
                // Cholesky factor
                let probe = loo.add_scaled_identity(-eta);
                let indicator = nalgebra::Cholesky::new(probe.data().clone()).is_some();
                if !indicator {
                    return Ok(0.0);
                }
                let pooled = match &scheme {
                    None => sample_covariance(&x),
                    Some(s) => {
                        let g = sample_augmented(s, &x, m, rep.child(1))?;
                        pooled_covariance(&x, &g)?
                    }
                };
                let shifted = pooled.add_scaled_identity(cfg.lambda);
                let r_mat = cholesky_inverse(shifted.data()).ok_or(Error::SingularShift {
                    min_eig: shifted.min_eigenvalue(),
                    tol: PD_FLOOR,
                })?;
                let diff = &r_mat - d_bar.data();
                Ok(trace_product(&b, &diff) / d as f64)
            })
            .collect::<Result<Vec<_>>>()?;

        let bias = (compensated_sum(traces.iter().copied()) / cfg.replicates as f64).abs();
        let spread = summarize(&traces);
        records.push(ReplicateRecord {
            index: step,
            value: bias,
            extras: vec![
                ("n".into(), n as f64),
                ("d".into(), d as f64),
                ("m".into(), m as f64),
                ("stderr".into(), spread.stderr),
            ],
        });
        biases.push((n, bias));
    }

    let mut checks = Vec::new();
    for w in biases.windows(2) {
        let (n_prev, prev) = w[0];
        let (n_next, next) = w[1];
        checks.push(ToleranceCheck {
            name: format!("bias_decay_n{n_prev}_to_n{n_next}"),
            observed: next,
            bound: cfg.decay_factor * prev,
            passed: next <= cfg.decay_factor * prev,
        });
    }
    let passed = checks.iter().all(|c| c.passed);
    let bias_values: Vec<f64> = biases.iter().map(|(_, b)| *b).collect();
    Ok(ExperimentReport {
        name: "det_equiv_convergence".into(),
        config_echo: vec![
            ("experiment".into(), "det_equiv_convergence".into()),
            ("family".into(), format!("{:?}", cfg.family)),
            ("ratio".into(), cfg.ratio.to_string()),
            ("n_list".into(), format!("{:?}", cfg.n_list)),
            ("lambda".into(), cfg.lambda.to_string()),
            ("b_matrix".into(), format!("{:?}", cfg.b_matrix)),
            ("noise".into(), format!("{:?}", cfg.noise)),
            ("replicates".into(), cfg.replicates.to_string()),
            ("decay_factor".into(), cfg.decay_factor.to_string()),
            ("eta_safety".into(), cfg.eta_safety.to_string()),
            ("augmentation".into(), format!("{:?}", cfg.augmentation)),
            ("seed".into(), cfg.seed.to_string()),
        ],
        replicates: records,
        summary: summarize(&bias_values),
        checks,
        passed,
    })
}

/// A fitted isotropic Gaussian mixture, recentred so its mean vanishes.
#[derive(Debug, Clone)]
pub struct FittedMixture {
    pub scheme: DaScheme,
    /// The weighted mean subtracted from every centroid.
    pub recenter_shift: DVector<f64>,
    pub sigma2: f64,
}

const EM_RESTARTS: usize = 5;
const SIGMA2_FLOOR: f64 = 1e-12;

fn kmeans_pp_init(x: &SampleMatrix, k: usize, stream: RngStream) -> Vec<usize> {
    use rand::Rng;
    let n = x.len();
    let mut rng = stream.rng();
    let mut chosen = Vec::with_capacity(k);
    chosen.push(rng.random_range(0..n as u64) as usize);
    let mut dist2 = vec![f64::INFINITY; n];
    while chosen.len() < k {
        let last = *chosen.last().unwrap();
        for j in 0..n {
            let diff = x.column(j) - x.column(last);
            dist2[j] = dist2[j].min(diff.norm_squared());
        }
        let total: f64 = dist2.iter().sum();
        let next = if total > 0.0 {
            let mut u: f64 = rng.random();
            u *= total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (j, w) in dist2.iter().enumerate() {
                acc += w;
                if u < acc {
                    pick = j;
                    break;
                }
            }
            pick
        } else {
            // duplicate columns: take the first index not yet chosen
            (0..n).find(|j| !chosen.contains(j)).unwrap_or(0)
        };
        chosen.push(next);
    }
    chosen
}

/// Fits a `k`-centroid isotropic Gaussian mixture by k-means++ seeding and EM
/// with one shared spherical variance, then recentres the mixture so its mean
/// vanishes (the shift is reported).
pub fn fit_mixture(
    x: &SampleMatrix,
    k: usize,
    stream: RngStream,
    iters: usize,
) -> Result<FittedMixture> {
    let n = x.len();
    let d = x.dim();
    if k == 0 || k > n {
        return Err(Error::InvalidInput(format!(
            "k must satisfy 1 <= k <= n (got k = {k}, n = {n})"
        )));
    }

    'restart: for restart in 0..EM_RESTARTS {
        let init = kmeans_pp_init(x, k, stream.child(restart as u64));
        let mut means: Vec<DVector<f64>> =
            init.iter().map(|&j| x.column(j).into_owned()).collect();
        let mut weights = vec![1.0 / k as f64; k];
        // shared spherical variance seeded from nearest-centroid distances
        let mut sigma2 = {
            let mut acc = 0.0;
            for j in 0..n {
                let best = means
                    .iter()
                    .map(|mu| (x.column(j) - mu).norm_squared())
                    .fold(f64::INFINITY, f64::min);
                acc += best;
            }
            (acc / (n as f64 * d as f64)).max(SIGMA2_FLOOR)
        };

        let mut resp = DMatrix::zeros(k, n);
        for _ in 0..iters.max(1) {
            // E step in log space
            for j in 0..n {
                let mut logp = vec![0.0f64; k];
                for (i, mu) in means.iter().enumerate() {
                    let d2 = (x.column(j) - mu).norm_squared();
                    logp[i] = weights[i].max(1e-300).ln() - d2 / (2.0 * sigma2);
                }
                let max = logp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for v in logp.iter_mut() {
                    *v = (*v - max).exp();
                    z += *v;
                }
                for i in 0..k {
                    resp[(i, j)] = logp[i] / z;
                }
            }
            // M step
            let mut acc_sigma2 = 0.0;
            for i in 0..k {
                let ni: f64 = (0..n).map(|j| resp[(i, j)]).sum();
                if ni < 1e-10 * n as f64 {
                    continue 'restart; // empty component
                }
                let mut mu = DVector::zeros(d);
                for j in 0..n {
                    mu += x.column(j) * resp[(i, j)];
                }
                mu /= ni;
                for j in 0..n {
                    acc_sigma2 += resp[(i, j)] * (x.column(j) - &mu).norm_squared();
                }
                means[i] = mu;
                weights[i] = ni / n as f64;
            }
            sigma2 = (acc_sigma2 / (n as f64 * d as f64)).max(SIGMA2_FLOOR);
        }

        // recentre so that sum_i w_i mu_i = 0
        let mut shift = DVector::zeros(d);
        for (w, mu) in weights.iter().zip(&means) {
            shift += mu * *w;
        }
        for mu in means.iter_mut() {
            *mu -= &shift;
        }
        let cov = SpdMatrix::scaled_identity(d, sigma2);
        let scheme = DaScheme::GaussianMixtureGda {
            weights,
            means,
            covs: vec![cov; k],
        };
        scheme.validate(d)?;
        return Ok(FittedMixture {
            scheme,
            recenter_shift: shift,
            sigma2,
        });
    }
    Err(Error::DegenerateCluster {
        restarts: EM_RESTARTS,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian_x(spec: &SigmaSpec, n: usize, seed: u64) -> (SpdMatrix, SampleMatrix) {
        let sigma = build_sigma(spec).unwrap();
        let x = sample_data(&sigma, n, &NoiseSpec::Gaussian, RngStream::new(seed, 0));
        (sigma, x)
    }

    #[test]
    fn oracle_error_examples() {
        let sigma = SpdMatrix::scaled_identity(4, 2.0);
        let inv = sigma.inverse().unwrap();
        assert_eq!(oracle_error(&inv, &sigma).unwrap(), 0.0);
        let zero = SpdMatrix::zeros(3);
        let id = SpdMatrix::identity(3);
        assert!((oracle_error(&zero, &id).unwrap() - 1.0).abs() <= 1e-15);
    }

    #[test]
    fn oracle_error_matches_entry_loop() {
        let (sigma, x) = gaussian_x(&SigmaSpec::Ar1 { d: 5, corr: 0.4 }, 40, 1);
        let r = resolvent_scalar(&sample_covariance(&x), 0.3).unwrap();
        let inv = sigma.inverse().unwrap();
        let mut acc = 0.0;
        for i in 0..5 {
            for j in 0..5 {
                let t = r.data()[(i, j)] - inv.data()[(i, j)];
                acc += t * t;
            }
        }
        assert!((oracle_error(&r, &sigma).unwrap() - acc / 5.0).abs() <= 1e-12);
    }

    #[test]
    fn proxy_error_definitional_cases() {
        let (sigma, x) = gaussian_x(&SigmaSpec::Identity { d: 4 }, 30, 3);
        let r = resolvent_scalar(&sample_covariance(&x), 0.2).unwrap();
        let full_inv = sigma.inverse().unwrap();
        assert_eq!(proxy_error(&full_inv, &sigma).unwrap(), 0.0);
        assert_eq!(
            proxy_error(&r, &sigma).unwrap(),
            oracle_error(&r, &sigma).unwrap()
        );
    }

    #[test]
    fn single_point_grid_is_its_own_argmin() {
        let (_, x) = gaussian_x(&SigmaSpec::Identity { d: 4 }, 30, 5);
        let curve = lambda_curve(
            &x,
            &LambdaCurveConfig {
                grid: vec![0.5],
                eta: 1e-6,
                oracle_sigma: None,
                proxy_cov: None,
            },
        )
        .unwrap();
        assert_eq!(curve.argmin_estimate, Some(0));
        assert_eq!(curve.points.len(), 1);
    }

    #[test]
    fn lambda_curve_large_lambda_endpoint_matches_constant() {
        let (sigma, x) = gaussian_x(&SigmaSpec::Identity { d: 6 }, 40, 7);
        let curve = lambda_curve(
            &x,
            &LambdaCurveConfig {
                grid: vec![0.1, 1e8],
                eta: 1e-6,
                oracle_sigma: Some(sigma.clone()),
                proxy_cov: None,
            },
        )
        .unwrap();
        let last = curve.points.last().unwrap();
        let constant = 1.0; // tr(I^{-2}) / d
        assert!((last.estimate.unwrap() - constant).abs() <= 1e-3);
    }

    #[test]
    fn curves_are_deterministic() {
        let (sigma, x) = gaussian_x(&SigmaSpec::Ar1 { d: 6, corr: 0.3 }, 60, 9);
        let cfg = AlphaCurveConfig {
            scheme: DaScheme::FixedGaussianTda {
                cov: SpdMatrix::scaled_identity(6, 0.25),
            },
            lambda: 0.2,
            alpha_grid: vec![0.0, 0.3, 0.6],
            eta: 1e-6,
            mc: McOptions {
                replicates: 4,
                variance_reduction: false,
            },
            oracle_sigma: Some(sigma),
            proxy_cov: None,
        };
        let a = alpha_curve(&x, &cfg, RngStream::new(11, 0)).unwrap();
        let b = alpha_curve(&x, &cfg, RngStream::new(11, 0)).unwrap();
        let ser_a = serde_json::to_string(&a).unwrap();
        let ser_b = serde_json::to_string(&b).unwrap();
        assert_eq!(ser_a, ser_b);
        for p in &a.points {
            assert!(p.estimate.unwrap().is_finite());
            assert!(p.oracle.unwrap().is_finite());
        }
    }

    #[test]
    fn alpha_to_m_round_trip() {
        assert_eq!(alpha_to_m(0.0, 400).unwrap(), 0);
        assert_eq!(alpha_to_m(0.5, 400).unwrap(), 400);
        assert!(alpha_to_m(1.0, 10).is_err());
    }

    #[test]
    fn concentration_collapses_at_huge_lambda() {
        let report = concentration_experiment(&ConcentrationConfig {
            sigma_spec: SigmaSpec::Identity { d: 8 },
            n: 40,
            lambda: 1e8,
            eta: EtaPolicy::FromSigma { safety: 0.5 },
            noise: NoiseSpec::Gaussian,
            replicates: 20,
            p95_bound: 1e-3,
            mean_rel_bound: None,
            seed: 13,
        })
        .unwrap();
        assert!(report.passed, "checks: {:?}", report.checks);
        assert_eq!(report.replicates.len(), 20);
    }

    #[test]
    fn fit_mixture_single_component_is_column_mean() {
        let (_, x) = gaussian_x(&SigmaSpec::Identity { d: 3 }, 50, 15);
        let fit = fit_mixture(&x, 1, RngStream::new(17, 0), 10).unwrap();
        match &fit.scheme {
            DaScheme::GaussianMixtureGda { weights, means, .. } => {
                assert_eq!(weights, &vec![1.0]);
                // recentred mean must vanish
                assert!(means[0].norm() <= 1e-12);
            }
            other => panic!("unexpected scheme {other:?}"),
        }
        // the shift is the column mean
        let mut mean = DVector::zeros(3);
        for j in 0..50 {
            mean += x.column(j);
        }
        mean /= 50.0;
        assert!((fit.recenter_shift - mean).norm() <= 1e-10);
    }

    #[test]
    fn fit_mixture_recovers_planted_blobs() {
        // two unit-variance spherical blobs at +/- c, 500 points each
        let d = 4;
        let c = DVector::from_element(d, 3.0);
        let stream = RngStream::new(19, 0);
        let noise = build_sigma(&SigmaSpec::Identity { d }).unwrap();
        let a = sample_data(&noise, 500, &NoiseSpec::Gaussian, stream.child(0));
        let b = sample_data(&noise, 500, &NoiseSpec::Gaussian, stream.child(1));
        let mut cols = DMatrix::zeros(d, 1000);
        for j in 0..500 {
            cols.set_column(j, &(a.column(j) + &c));
            cols.set_column(500 + j, &(b.column(j) - &c));
        }
        let x = SampleMatrix::new(cols).unwrap();
        let fit = fit_mixture(&x, 2, RngStream::new(21, 0), 30).unwrap();
        match &fit.scheme {
            DaScheme::GaussianMixtureGda { means, .. } => {
                let mut found_pos = false;
                let mut found_neg = false;
                for mu in means {
                    if (mu - &c).norm() / (d as f64).sqrt() <= 0.1 {
                        found_pos = true;
                    }
                    if (mu + &c).norm() / (d as f64).sqrt() <= 0.1 {
                        found_neg = true;
                    }
                }
                assert!(found_pos && found_neg, "means: {means:?}");
            }
            other => panic!("unexpected scheme {other:?}"),
        }
    }

    #[test]
    fn fit_mixture_with_k_equal_n() {
        let (_, x) = gaussian_x(&SigmaSpec::Identity { d: 3 }, 6, 23);
        let fit = fit_mixture(&x, 6, RngStream::new(25, 0), 5).unwrap();
        match &fit.scheme {
            DaScheme::GaussianMixtureGda { weights, .. } => {
                let sum: f64 = weights.iter().sum();
                assert!((sum - 1.0).abs() <= 1e-12);
            }
            other => panic!("unexpected scheme {other:?}"),
        }
    }

    #[test]
    fn det_equiv_convergence_rejects_bad_config() {
        let cfg = DetEquivConfig {
            family: SigmaFamily::Identity,
            ratio: 0.25,
            n_list: vec![100, 80, 200],
            lambda: 0.2,
            b_matrix: BMatrixSpec::SigmaInvNormalized,
            noise: NoiseSpec::Gaussian,
            replicates: 10,
            decay_factor: 0.6,
            eta_safety: 0.5,
            augmentation: None,
            seed: 0,
        };
        assert!(matches!(
            det_equiv_convergence(&cfg),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn det_equiv_trivial_at_huge_lambda() {
        // both sides collapse to lambda^{-1} tr(B)/d
        let cfg = DetEquivConfig {
            family: SigmaFamily::Identity,
            ratio: 0.25,
            n_list: vec![20, 40, 80],
            lambda: 1e6,
            b_matrix: BMatrixSpec::IdentityNormalized,
            noise: NoiseSpec::Gaussian,
            replicates: 5,
            decay_factor: 1.0,
            eta_safety: 0.5,
            augmentation: None,
            seed: 27,
        };
        let report = det_equiv_convergence(&cfg).unwrap();
        for rec in &report.replicates {
            assert!(rec.value <= 1e-6, "bias {}", rec.value);
        }
    }
}
