//! Subcommand implementations. Exit codes: 0 on success, 1 when a validation
//! tolerance fails, 2 on configuration or data errors.

use std::path::{Path, PathBuf};

use nalgebra::DVector;
use thiserror::Error;

use precda::augment::{sample_augmented, DaScheme};
use precda::augmented::{augmented_precision, McOptions};
use precda::harness::{
    alpha_to_m, fit_mixture, lambda_curve, AlphaCurveConfig, ErrorCurve, LambdaCurveConfig,
};
use precda::linalg::sample_covariance;
use precda::shrinkage::{auto_eta, shrinkage_precision, ShrinkageContext, EstimateMode};
use precda::synth::{build_sigma, sample_data, NoiseSpec, RngStream, SigmaSpec};
use precda::{SampleMatrix, SpdMatrix};

use crate::config::{ConfigEcho, ConfigError, RunConfig};
use crate::curves::write_curve_csv;
use crate::matio::{detect_format, load_dmatrix, load_matrix, save_dmatrix, MatIoError, MatrixFormat};
use crate::reports::write_reports_jsonl;
use crate::suites::{run_suite, SuiteOptions, ALL_SUITES};

pub const EXIT_OK: i32 = 0;
pub const EXIT_TOLERANCE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    MatIo(#[from] MatIoError),
    #[error("{0}")]
    Core(#[from] precda::Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Usage(String),
}

pub type CmdResult = Result<i32, CliError>;

// stream ids per role, stable across releases: data generation, scheme
// sampling, curve Monte Carlo, mixture fitting
const STREAM_DATA: u64 = 0;
const STREAM_SCHEME: u64 = 1;
const STREAM_CURVE: u64 = 2;
const STREAM_FIT: u64 = 3;

fn seed_of(cfg: &RunConfig) -> Result<u64, ConfigError> {
    Ok(cfg.get_u64("seed")?.unwrap_or(0))
}

fn noise_of(cfg: &RunConfig) -> Result<NoiseSpec, CliError> {
    match cfg.get("noise.dist").unwrap_or("gaussian") {
        "gaussian" => Ok(NoiseSpec::Gaussian),
        "rademacher" => Ok(NoiseSpec::Rademacher),
        "uniform" | "uniform-scaled" => Ok(NoiseSpec::UniformScaled),
        other => Err(ConfigError::BadValue {
            key: "noise.dist".into(),
            message: format!("unknown distribution '{other}'"),
        }
        .into()),
    }
}

fn sigma_spec_of(cfg: &RunConfig) -> Result<Option<SigmaSpec>, CliError> {
    let Some(kind) = cfg.get("sigma.kind") else {
        return Ok(None);
    };
    let d = || cfg.require_usize("sigma.d");
    let spec = match kind {
        "identity" => SigmaSpec::Identity { d: d()? },
        "scaled" => SigmaSpec::Scaled {
            d: d()?,
            variance: cfg.require_f64("sigma.variance")?,
        },
        "ar1" => SigmaSpec::Ar1 {
            d: d()?,
            corr: cfg.require_f64("sigma.r")?,
        },
        "spectrum" => SigmaSpec::Spectrum {
            values: cfg
                .get_f64_list("sigma.values")?
                .ok_or_else(|| ConfigError::Missing("sigma.values".into()))?,
            seed: cfg.get_u64("sigma.seed")?.unwrap_or(0),
        },
        "spiked" => SigmaSpec::Spiked {
            d: d()?,
            bulk: cfg.require_f64("sigma.bulk")?,
            spikes: cfg
                .get_f64_list("sigma.spikes")?
                .ok_or_else(|| ConfigError::Missing("sigma.spikes".into()))?,
            seed: cfg.get_u64("sigma.seed")?.unwrap_or(0),
        },
        other => {
            return Err(ConfigError::BadValue {
                key: "sigma.kind".into(),
                message: format!("unknown kind '{other}'"),
            }
            .into())
        }
    };
    Ok(Some(spec))
}

fn echo_sigma_spec(echo: &mut ConfigEcho, cfg: &RunConfig) {
    for key in [
        "sigma.kind",
        "sigma.d",
        "sigma.variance",
        "sigma.r",
        "sigma.values",
        "sigma.bulk",
        "sigma.spikes",
        "sigma.seed",
    ] {
        if let Some(v) = cfg.get(key) {
            echo.push(key, v);
        }
    }
}

/// The true covariance for oracle mode: an explicit matrix file wins over a
/// synthetic spec.
fn sigma_of(cfg: &RunConfig, echo: &mut ConfigEcho) -> Result<Option<SpdMatrix>, CliError> {
    if let Some(path) = cfg.get_path("sigma_file") {
        let data = load_dmatrix(&path, None)?;
        let sigma = SpdMatrix::new(data)?;
        echo.push("sigma_file", path.display());
        return Ok(Some(sigma));
    }
    if let Some(spec) = sigma_spec_of(cfg)? {
        echo_sigma_spec(echo, cfg);
        return Ok(Some(build_sigma(&spec)?));
    }
    Ok(None)
}

/// Loads `data` or generates it from a sigma spec; returns the matrix and
/// the true covariance when one is known.
fn data_of(cfg: &RunConfig, echo: &mut ConfigEcho) -> Result<(SampleMatrix, Option<SpdMatrix>), CliError> {
    if let Some(path) = cfg.get_path("data") {
        let fmt = cfg
            .get("data.format")
            .map(|f| {
                MatrixFormat::from_name(f).ok_or_else(|| ConfigError::BadValue {
                    key: "data.format".into(),
                    message: format!("unknown format '{f}'"),
                })
            })
            .transpose()?;
        let x = load_matrix(&path, fmt)?;
        echo.push("data", path.display());
        if let Some(f) = cfg.get("data.format") {
            echo.push("data.format", f);
        }
        let sigma = sigma_of(cfg, echo)?;
        return Ok((x, sigma));
    }
    let Some(spec) = sigma_spec_of(cfg)? else {
        return Err(CliError::Usage(
            "either 'data' or a sigma.* spec with 'n' is required".into(),
        ));
    };
    let n = cfg.require_usize("n")?;
    let noise = noise_of(cfg)?;
    let seed = seed_of(cfg)?;
    let sigma = build_sigma(&spec)?;
    let x = sample_data(&sigma, n, &noise, RngStream::new(seed, STREAM_DATA));
    echo_sigma_spec(echo, cfg);
    echo.push("n", n);
    echo.push("noise.dist", cfg.get("noise.dist").unwrap_or("gaussian"));
    echo.push("seed", seed);
    Ok((x, Some(sigma)))
}

fn scheme_cov_of(cfg: &RunConfig, d: usize, echo: &mut ConfigEcho) -> Result<SpdMatrix, CliError> {
    if let Some(path) = cfg.get_path("scheme.cov_file") {
        let data = load_dmatrix(&path, None)?;
        echo.push("scheme.cov_file", path.display());
        return Ok(SpdMatrix::new(data)?);
    }
    if let Some(v) = cfg.get_f64("scheme.cov")? {
        echo.push("scheme.cov", v);
        return Ok(SpdMatrix::scaled_identity(d, v));
    }
    Err(ConfigError::Missing("scheme.cov (or scheme.cov_file)".into()).into())
}

fn scheme_of(
    cfg: &RunConfig,
    x: &SampleMatrix,
    echo: &mut ConfigEcho,
) -> Result<Option<DaScheme>, CliError> {
    let Some(kind) = cfg.get("scheme.kind") else {
        return Ok(None);
    };
    echo.push("scheme.kind", kind);
    let d = x.dim();
    let scheme = match kind {
        "fixed_gaussian_gda" => DaScheme::FixedGaussianGda {
            cov: scheme_cov_of(cfg, d, echo)?,
        },
        "fixed_gaussian_tda" => DaScheme::FixedGaussianTda {
            cov: scheme_cov_of(cfg, d, echo)?,
        },
        "random_mask_tda" => {
            let keep_prob = cfg.require_f64("scheme.keep_prob")?;
            echo.push("scheme.keep_prob", keep_prob);
            DaScheme::RandomMaskTda { keep_prob }
        }
        "salt_pepper_tda" => {
            let keep_prob = cfg.require_f64("scheme.keep_prob")?;
            let noise_var = cfg.require_f64("scheme.noise_var")?;
            echo.push("scheme.keep_prob", keep_prob);
            echo.push("scheme.noise_var", noise_var);
            DaScheme::SaltPepperTda {
                keep_prob,
                noise_var,
            }
        }
        "gaussian_mixture_gda" => {
            if let Some(k) = cfg.get_usize("scheme.fit_k")? {
                // fit the mixture on the data by k-means++ and isotropic EM
                let iters = cfg.get_usize("scheme.fit_iters")?.unwrap_or(50);
                let seed = seed_of(cfg)?;
                let fitted = fit_mixture(x, k, RngStream::new(seed, STREAM_FIT), iters)?;
                echo.push("scheme.fit_k", k);
                echo.push("scheme.fit_iters", iters);
                echo.push("seed", seed);
                fitted.scheme
            } else {
                let weights = cfg
                    .get_f64_list("scheme.weights")?
                    .ok_or_else(|| ConfigError::Missing("scheme.weights".into()))?;
                let means_path = cfg
                    .get_path("scheme.means_file")
                    .ok_or_else(|| ConfigError::Missing("scheme.means_file".into()))?;
                let means_mat = load_dmatrix(&means_path, None)?;
                if means_mat.nrows() != d || means_mat.ncols() != weights.len() {
                    return Err(CliError::Usage(format!(
                        "scheme.means_file must hold {} samples of dimension {d} (one mean per row in CSV), got {} x {}",
                        weights.len(),
                        means_mat.nrows(),
                        means_mat.ncols()
                    )));
                }
                let means: Vec<DVector<f64>> = (0..means_mat.ncols())
                    .map(|j| means_mat.column(j).into_owned())
                    .collect();
                let cov = scheme_cov_of(cfg, d, echo)?;
                echo.push(
                    "scheme.weights",
                    weights
                        .iter()
                        .map(|w| w.to_string())
                        .collect::<Vec<_>>()
                        .join(","),
                );
                echo.push("scheme.means_file", means_path.display());
                DaScheme::GaussianMixtureGda {
                    weights,
                    means,
                    covs: vec![cov; means_mat.ncols()],
                }
            }
        }
        other => {
            return Err(ConfigError::BadValue {
                key: "scheme.kind".into(),
                message: format!("unknown scheme '{other}'"),
            }
            .into())
        }
    };
    scheme.validate(d)?;
    Ok(Some(scheme))
}

fn eta_of(cfg: &RunConfig, x: &SampleMatrix, echo: &mut ConfigEcho) -> Result<f64, CliError> {
    let eta = match cfg.get("eta") {
        None | Some("auto") => auto_eta(x),
        Some(raw) => raw.parse::<f64>().map_err(|_| ConfigError::BadValue {
            key: "eta".into(),
            message: format!("'{raw}' is neither a number nor 'auto'"),
        })?,
    };
    // record the resolved value so the choice is auditable and replayable
    echo.push("eta", eta);
    Ok(eta)
}

fn output_of(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    Ok(cfg
        .get_path("output")
        .ok_or_else(|| ConfigError::Missing("output".into()))?)
}

fn mode_is_oracle(cfg: &RunConfig) -> Result<bool, CliError> {
    match cfg.get("mode").unwrap_or("relative") {
        "relative" => Ok(false),
        "oracle" => Ok(true),
        other => Err(ConfigError::BadValue {
            key: "mode".into(),
            message: format!("expected 'relative' or 'oracle', got '{other}'"),
        }
        .into()),
    }
}

fn proxy_cov_of(cfg: &RunConfig, echo: &mut ConfigEcho) -> Result<Option<SpdMatrix>, CliError> {
    let Some(path) = cfg.get_path("proxy_data") else {
        return Ok(None);
    };
    let full = load_matrix(&path, None)?;
    echo.push("proxy_data", path.display());
    Ok(Some(sample_covariance(&full)))
}

fn write_echo(echo: &ConfigEcho, output: &Path) -> Result<(), CliError> {
    echo.write_next_to(output)?;
    Ok(())
}

fn print_curve_summary(curve: &ErrorCurve, label: &str) {
    match curve.argmin_estimate {
        Some(i) => {
            let p = &curve.points[i];
            println!("{label}_star = {:.16e} (estimate {:.16e})", p.param, p.estimate.unwrap());
        }
        None => println!("{label}_star = none (no valid grid point)"),
    }
    if let Some(i) = curve.argmin_oracle {
        println!("{label}_star_oracle = {:.16e}", curve.points[i].param);
    }
}

/// `gen`: draw synthetic data from a sigma spec.
pub fn cmd_gen(cfg: &RunConfig) -> CmdResult {
    let mut echo = ConfigEcho::new("gen");
    let spec = sigma_spec_of(cfg)?
        .ok_or_else(|| CliError::Usage("gen requires a sigma.* spec".into()))?;
    let n = cfg.require_usize("n")?;
    let noise = noise_of(cfg)?;
    let seed = seed_of(cfg)?;
    let output = output_of(cfg)?;
    let sigma = build_sigma(&spec)?;
    let x = sample_data(&sigma, n, &noise, RngStream::new(seed, STREAM_DATA));
    crate::matio::save_matrix(&output, &x, detect_format(&output))?;
    echo_sigma_spec(&mut echo, cfg);
    echo.push("n", n);
    echo.push("noise.dist", cfg.get("noise.dist").unwrap_or("gaussian"));
    echo.push("seed", seed);
    echo.push("output", output.display());
    if let Some(sig_out) = cfg.get_path("sigma_output") {
        save_dmatrix(&sig_out, sigma.data(), detect_format(&sig_out))?;
        echo.push("sigma_output", sig_out.display());
    }
    write_echo(&echo, &output)?;
    println!(
        "wrote {} ({} x {} samples)",
        output.display(),
        x.dim(),
        x.len()
    );
    Ok(EXIT_OK)
}

/// `estimate`: write the shrinkage or augmented precision estimate.
pub fn cmd_estimate(cfg: &RunConfig) -> CmdResult {
    let mut echo = ConfigEcho::new("estimate");
    let (x, _) = data_of(cfg, &mut echo)?;
    let lambda = cfg.require_f64("lambda")?;
    echo.push("lambda", lambda);
    let output = output_of(cfg)?;
    let r = match scheme_of(cfg, &x, &mut echo)? {
        Some(scheme) => {
            let m = cfg.require_usize("m")?;
            let seed = seed_of(cfg)?;
            echo.push("m", m);
            echo.push("seed", seed);
            let g = sample_augmented(&scheme, &x, m, RngStream::new(seed, STREAM_SCHEME))?;
            augmented_precision(&x, &g, lambda)?
        }
        None => shrinkage_precision(&x, lambda)?,
    };
    save_dmatrix(&output, r.data(), detect_format(&output))?;
    echo.push("output", output.display());
    write_echo(&echo, &output)?;
    println!("wrote {} ({} x {} precision estimate)", output.display(), r.dim(), r.dim());
    Ok(EXIT_OK)
}

/// `augment`: write artificial samples for a scheme.
pub fn cmd_augment(cfg: &RunConfig) -> CmdResult {
    let mut echo = ConfigEcho::new("augment");
    let (x, _) = data_of(cfg, &mut echo)?;
    let scheme = scheme_of(cfg, &x, &mut echo)?
        .ok_or_else(|| CliError::Usage("augment requires a scheme.* spec".into()))?;
    let m = cfg.require_usize("m")?;
    let seed = seed_of(cfg)?;
    let output = output_of(cfg)?;
    let g = sample_augmented(&scheme, &x, m, RngStream::new(seed, STREAM_SCHEME))?;
    crate::matio::save_matrix(&output, &g, detect_format(&output))?;
    echo.push("m", m);
    echo.push("seed", seed);
    echo.push("output", output.display());
    write_echo(&echo, &output)?;
    println!("wrote {} ({} x {} artificial samples)", output.display(), g.dim(), g.len());
    Ok(EXIT_OK)
}

fn lambda_curve_of(cfg: &RunConfig, echo: &mut ConfigEcho) -> Result<ErrorCurve, CliError> {
    let (x, sigma) = data_of(cfg, echo)?;
    let grid = cfg
        .get_grid("lambda_grid")?
        .ok_or_else(|| ConfigError::Missing("lambda_grid".into()))?;
    let eta = eta_of(cfg, &x, echo)?;
    let oracle = mode_is_oracle(cfg)?;
    if oracle && sigma.is_none() {
        return Err(CliError::Usage(
            "oracle mode needs the true covariance (sigma.* spec or sigma_file)".into(),
        ));
    }
    echo.push("mode", if oracle { "oracle" } else { "relative" });
    echo.push("lambda_grid", cfg.get("lambda_grid").unwrap());
    let proxy_cov = proxy_cov_of(cfg, echo)?;
    Ok(lambda_curve(
        &x,
        &LambdaCurveConfig {
            grid,
            eta,
            oracle_sigma: if oracle { sigma } else { None },
            proxy_cov,
        },
    )?)
}

/// `lambda-curve`: sweep the shrinkage error estimate over a lambda grid.
pub fn cmd_lambda_curve(cfg: &RunConfig) -> CmdResult {
    let mut echo = ConfigEcho::new("lambda-curve");
    let curve = lambda_curve_of(cfg, &mut echo)?;
    let output = output_of(cfg)?;
    write_curve_csv(&output, &curve)?;
    echo.push("output", output.display());
    write_echo(&echo, &output)?;
    print_curve_summary(&curve, "lambda");
    Ok(EXIT_OK)
}

fn alpha_curve_of(cfg: &RunConfig, echo: &mut ConfigEcho) -> Result<ErrorCurve, CliError> {
    let (x, sigma) = data_of(cfg, echo)?;
    let scheme = scheme_of(cfg, &x, echo)?
        .ok_or_else(|| CliError::Usage("alpha-curve requires a scheme.* spec".into()))?;
    let lambda = cfg.require_f64("lambda")?;
    let grid = cfg
        .get_grid("alpha_grid")?
        .ok_or_else(|| ConfigError::Missing("alpha_grid".into()))?;
    let eta = eta_of(cfg, &x, echo)?;
    let k_mc = cfg.get_usize("k_mc")?.unwrap_or(64);
    let variance_reduction = cfg.get_bool("variance_reduction")?.unwrap_or(false);
    let seed = seed_of(cfg)?;
    let oracle = mode_is_oracle(cfg)?;
    if oracle && sigma.is_none() {
        return Err(CliError::Usage(
            "oracle mode needs the true covariance (sigma.* spec or sigma_file)".into(),
        ));
    }
    echo.push("lambda", lambda);
    echo.push("alpha_grid", cfg.get("alpha_grid").unwrap());
    echo.push("k_mc", k_mc);
    echo.push("variance_reduction", variance_reduction);
    echo.push("seed", seed);
    echo.push("mode", if oracle { "oracle" } else { "relative" });
    let proxy_cov = proxy_cov_of(cfg, echo)?;
    Ok(precda::harness::alpha_curve(
        &x,
        &AlphaCurveConfig {
            scheme,
            lambda,
            alpha_grid: grid,
            eta,
            mc: McOptions {
                replicates: k_mc,
                variance_reduction,
            },
            oracle_sigma: if oracle { sigma } else { None },
            proxy_cov,
        },
        RngStream::new(seed, STREAM_CURVE),
    )?)
}

/// `alpha-curve`: sweep the augmented error estimate over a proportion grid.
pub fn cmd_alpha_curve(cfg: &RunConfig) -> CmdResult {
    let mut echo = ConfigEcho::new("alpha-curve");
    let curve = alpha_curve_of(cfg, &mut echo)?;
    let output = output_of(cfg)?;
    write_curve_csv(&output, &curve)?;
    echo.push("output", output.display());
    write_echo(&echo, &output)?;
    print_curve_summary(&curve, "alpha");
    Ok(EXIT_OK)
}

/// Golden-section refinement of the lambda argmin over its bracketing
/// interval.
fn golden_refine(
    x: &SampleMatrix,
    eta: f64,
    sigma: Option<&SpdMatrix>,
    mut lo: f64,
    mut hi: f64,
) -> Result<f64, CliError> {
    let ctx = ShrinkageContext::new(x);
    let eval = |lambda: f64| -> Result<f64, CliError> {
        let mode = match sigma {
            Some(s) => EstimateMode::Oracle(s),
            None => EstimateMode::Relative,
        };
        Ok(ctx.error_estimate(lambda, eta, mode)?.total())
    };
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - phi * (hi - lo);
    let mut b = lo + phi * (hi - lo);
    let mut fa = eval(a)?;
    let mut fb = eval(b)?;
    for _ in 0..80 {
        if hi - lo <= 1e-6 * hi.max(1.0) {
            break;
        }
        if fa < fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - phi * (hi - lo);
            fa = eval(a)?;
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + phi * (hi - lo);
            fb = eval(b)?;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `tune`: pick the grid argmin (optionally golden-section refined for
/// lambda) and write the curve it came from.
pub fn cmd_tune(cfg: &RunConfig) -> CmdResult {
    let has_lambda = cfg.get("lambda_grid").is_some();
    let has_alpha = cfg.get("alpha_grid").is_some();
    let refine = match cfg.get("refine") {
        None | Some("none") => false,
        Some("golden") => true,
        Some(other) => {
            return Err(ConfigError::BadValue {
                key: "refine".into(),
                message: format!("expected 'golden' or 'none', got '{other}'"),
            }
            .into())
        }
    };
    match (has_lambda, has_alpha) {
        (true, false) => {
            let mut echo = ConfigEcho::new("tune");
            let curve = lambda_curve_of(cfg, &mut echo)?;
            let output = output_of(cfg)?;
            write_curve_csv(&output, &curve)?;
            let Some(i) = curve.argmin_estimate else {
                println!("lambda_star = none (no valid grid point)");
                echo.push("output", output.display());
                write_echo(&echo, &output)?;
                return Ok(EXIT_OK);
            };
            let mut star = curve.points[i].param;
            if refine && curve.points.len() > 1 {
                let lo = if i > 0 {
                    curve.points[i - 1].param
                } else {
                    curve.points[i].param
                };
                let hi = if i + 1 < curve.points.len() {
                    curve.points[i + 1].param
                } else {
                    curve.points[i].param
                };
                if hi > lo {
                    // re-resolve the inputs the curve was built from
                    let mut scratch = ConfigEcho::new("tune");
                    let (x, sigma) = data_of(cfg, &mut scratch)?;
                    let eta = eta_of(cfg, &x, &mut scratch)?;
                    let oracle = mode_is_oracle(cfg)?;
                    star = golden_refine(
                        &x,
                        eta,
                        if oracle { sigma.as_ref() } else { None },
                        lo,
                        hi,
                    )?;
                }
                echo.push("refine", "golden");
            }
            echo.push("output", output.display());
            write_echo(&echo, &output)?;
            println!("lambda_star = {star:.16e}");
            Ok(EXIT_OK)
        }
        (false, true) => {
            if refine {
                return Err(CliError::Usage(
                    "refine=golden applies to lambda grids only; the alpha grid is discrete in m".into(),
                ));
            }
            let mut echo = ConfigEcho::new("tune");
            let curve = alpha_curve_of(cfg, &mut echo)?;
            let output = output_of(cfg)?;
            write_curve_csv(&output, &curve)?;
            echo.push("output", output.display());
            write_echo(&echo, &output)?;
            match curve.argmin_estimate {
                Some(i) => {
                    let alpha = curve.points[i].param;
                    let mut scratch = ConfigEcho::new("tune");
                    let (x, _) = data_of(cfg, &mut scratch)?;
                    println!("alpha_star = {alpha:.16e}");
                    println!("m_star = {}", alpha_to_m(alpha, x.len())?);
                }
                None => println!("alpha_star = none (no valid grid point)"),
            }
            Ok(EXIT_OK)
        }
        (true, true) => Err(CliError::Usage(
            "tune needs exactly one of lambda_grid or alpha_grid, not both".into(),
        )),
        (false, false) => Err(CliError::Usage(
            "tune needs a lambda_grid or an alpha_grid".into(),
        )),
    }
}

/// `validate`: run the named suites, write their reports, exit nonzero on
/// any tolerance failure.
pub fn cmd_validate(cfg: &RunConfig, suite_flag: Option<&str>) -> CmdResult {
    let mut echo = ConfigEcho::new("validate");
    let suites_raw = suite_flag
        .map(str::to_string)
        .or_else(|| cfg.get("suite").map(str::to_string))
        .unwrap_or_else(|| "all".into());
    let names: Vec<String> = if suites_raw == "all" {
        ALL_SUITES.iter().map(|s| s.to_string()).collect()
    } else {
        suites_raw.split(',').map(|s| s.trim().to_string()).collect()
    };
    let opts = SuiteOptions {
        seed: seed_of(cfg)?,
        replicates: cfg.get_usize("replicates")?,
        m_mc: cfg.get_usize("m_mc")?.unwrap_or(200_000),
        bound: cfg.get_f64("bound")?,
    };
    let output = output_of(cfg)?;
    echo.push("suite", &suites_raw);
    echo.push("seed", opts.seed);
    if let Some(r) = opts.replicates {
        echo.push("replicates", r);
    }
    echo.push("m_mc", opts.m_mc);
    if let Some(b) = opts.bound {
        echo.push("bound", b);
    }
    echo.push("output", output.display());

    let mut reports = Vec::new();
    let mut all_passed = true;
    for name in &names {
        let suite_reports = run_suite(name, &opts)?;
        for report in &suite_reports {
            let status = if report.passed { "PASS" } else { "FAIL" };
            println!("suite {}: {status}", report.name);
            for check in &report.checks {
                println!(
                    "  check {}: observed {:.6e} bound {:.6e} -> {}",
                    check.name,
                    check.observed,
                    check.bound,
                    if check.passed { "ok" } else { "VIOLATED" }
                );
            }
            all_passed &= report.passed;
        }
        reports.extend(suite_reports);
    }
    write_reports_jsonl(&output, &reports)?;
    write_echo(&echo, &output)?;
    Ok(if all_passed { EXIT_OK } else { EXIT_TOLERANCE })
}

/// Entry point shared by `main` and the integration tests.
pub fn dispatch(command: &str, cfg: &RunConfig, suite_flag: Option<&str>) -> CmdResult {
    if let Some(expected) = cfg.get("command") {
        if expected != command {
            return Err(CliError::Usage(format!(
                "config was echoed by '{expected}' but invoked as '{command}'"
            )));
        }
    }
    match command {
        "gen" => cmd_gen(cfg),
        "estimate" => cmd_estimate(cfg),
        "lambda-curve" => cmd_lambda_curve(cfg),
        "alpha-curve" => cmd_alpha_curve(cfg),
        "tune" => cmd_tune(cfg),
        "augment" => cmd_augment(cfg),
        "validate" => cmd_validate(cfg, suite_flag),
        other => Err(CliError::Usage(format!("unknown command '{other}'"))),
    }
}
