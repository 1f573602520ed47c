//! Property tests for the algebraic identities the estimators rely on.

use nalgebra::DMatrix;
use proptest::prelude::*;

use precda::augment::{sample_augmented, DaScheme};
use precda::augmented::augmented_precision;
use precda::linalg::{
    frobenius_norm_sq, leave_one_out_covariance, resolvent_scalar, sample_covariance,
    SampleMatrix, SpdMatrix,
};
use precda::shrinkage::{b_hat, shrinkage_precision, suggest_eta};
use precda::synth::{build_sigma, sample_data, NoiseSpec, RngStream, SigmaSpec};

fn finite_matrix(d: usize, n: usize) -> impl Strategy<Value = SampleMatrix> {
    proptest::collection::vec(-3.0f64..3.0, d * n).prop_map(move |v| {
        SampleMatrix::new(DMatrix::from_column_slice(d, n, &v)).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn resolvent_inverts_shifted_covariance(
        d in 1usize..8,
        n in 1usize..10,
        exponent in -3.0f64..3.0,
        seed in 0u64..1000,
    ) {
        let lambda = 10f64.powf(exponent);
        let sigma = build_sigma(&SigmaSpec::Identity { d }).unwrap();
        let x = sample_data(&sigma, n, &NoiseSpec::Gaussian, RngStream::new(seed, 0));
        let c = sample_covariance(&x);
        let r = resolvent_scalar(&c, lambda).unwrap();
        let residual = c.add_scaled_identity(lambda).data() * r.data()
            - DMatrix::identity(d, d);
        prop_assert!(frobenius_norm_sq(&residual).sqrt() <= 1e-10);
    }

    #[test]
    fn resolvent_map_is_lipschitz(
        d in 1usize..6,
        n in 2usize..10,
        lambda in 0.05f64..2.0,
        seed in 0u64..1000,
    ) {
        let sigma = build_sigma(&SigmaSpec::Identity { d }).unwrap();
        let x1 = sample_data(&sigma, n, &NoiseSpec::Gaussian, RngStream::new(seed, 0));
        let bump = sample_data(&sigma, n, &NoiseSpec::UniformScaled, RngStream::new(seed, 1));
        let x2 = SampleMatrix::new(x1.data() + bump.data() * 0.3).unwrap();
        let c1 = sample_covariance(&x1);
        let c2 = sample_covariance(&x2);
        let eps = (c1.min_eigenvalue() + lambda).min(c2.min_eigenvalue() + lambda);
        prop_assume!(eps > 1e-6);
        let r1 = resolvent_scalar(&c1, lambda).unwrap();
        let r2 = resolvent_scalar(&c2, lambda).unwrap();
        let lhs = frobenius_norm_sq(&(r1.data() - r2.data())).sqrt();
        let dx = frobenius_norm_sq(&(x1.data() - x2.data())).sqrt();
        let bound = 2.0 / ((n as f64) * eps.powi(3)).sqrt() * dx;
        prop_assert!(
            lhs <= bound * (1.0 + 1e-9),
            "lhs {lhs} exceeds bound {bound}"
        );
    }

    #[test]
    fn leave_one_out_plus_rank_one_restores_covariance(x in finite_matrix(4, 6)) {
        let c = sample_covariance(&x);
        let loo = leave_one_out_covariance(&x, 0).unwrap();
        let x1 = x.column(0).into_owned();
        let rebuilt = loo.data() + &x1 * x1.transpose() / 6.0;
        let diff = rebuilt - c.data();
        prop_assert!(frobenius_norm_sq(&diff).sqrt() <= 1e-12);
    }

    #[test]
    fn b_hat_at_least_one_below_aspect_one(
        n in 6usize..20,
        exponent in -3.0f64..1.0,
        seed in 0u64..1000,
    ) {
        let d = n / 2;
        let lambda = 10f64.powf(exponent);
        let sigma = build_sigma(&SigmaSpec::Identity { d }).unwrap();
        let x = sample_data(&sigma, n, &NoiseSpec::Gaussian, RngStream::new(seed, 2));
        let b = b_hat(&x, lambda).unwrap();
        prop_assert!(b >= 1.0 - 1e-12, "b_hat = {b}");
    }

    #[test]
    fn augmentation_sampling_is_deterministic(
        keep in 0.05f64..1.0,
        master in 0u64..1000,
        stream_id in 0u64..1000,
    ) {
        let sigma = build_sigma(&SigmaSpec::Identity { d: 4 }).unwrap();
        let x = sample_data(&sigma, 7, &NoiseSpec::Gaussian, RngStream::new(master, 9));
        let scheme = DaScheme::RandomMaskTda { keep_prob: keep };
        let a = sample_augmented(&scheme, &x, 11, RngStream::new(master, stream_id)).unwrap();
        let b = sample_augmented(&scheme, &x, 11, RngStream::new(master, stream_id)).unwrap();
        prop_assert_eq!(a.data(), b.data());
    }

    #[test]
    fn empty_augmentation_is_exactly_shrinkage(
        d in 1usize..6,
        n in 1usize..10,
        lambda in 0.05f64..5.0,
        seed in 0u64..1000,
    ) {
        let sigma = build_sigma(&SigmaSpec::Identity { d }).unwrap();
        let x = sample_data(&sigma, n, &NoiseSpec::Gaussian, RngStream::new(seed, 3));
        let r_aug = augmented_precision(&x, &SampleMatrix::empty(d), lambda).unwrap();
        let r = shrinkage_precision(&x, lambda).unwrap();
        prop_assert_eq!(r_aug.data(), r.data());
    }

    #[test]
    fn suggested_eta_is_admissible_and_positive(
        n in 4usize..200,
        lam_min in 0.01f64..10.0,
        safety in 0.1f64..1.0,
    ) {
        let d = n / 2;
        prop_assume!(d >= 1 && d < n - 1);
        let eta = suggest_eta(lam_min, n, d, safety).unwrap();
        prop_assert!(eta > 0.0);
        // never exceeds the un-damped admissible bound
        let nf = n as f64;
        let full = lam_min * (((nf - 1.0) / nf).sqrt() - ((d as f64) / nf).sqrt()).powi(2);
        prop_assert!(eta <= full * (1.0 + 1e-12));
    }
}

/// Spot check outside proptest: the PSD ordering of resolvents in lambda.
#[test]
fn resolvent_loewner_order_spot_check() {
    for seed in 0..20u64 {
        let sigma = build_sigma(&SigmaSpec::Ar1 { d: 6, corr: 0.5 }).unwrap();
        let x = sample_data(&sigma, 18, &NoiseSpec::Gaussian, RngStream::new(seed, 4));
        let c = sample_covariance(&x);
        let r_small = resolvent_scalar(&c, 0.2).unwrap();
        let r_large = resolvent_scalar(&c, 1.7).unwrap();
        let diff = SpdMatrix::new(r_small.data() - r_large.data()).unwrap();
        assert!(diff.min_eigenvalue() >= -1e-12, "seed {seed}");
    }
}
