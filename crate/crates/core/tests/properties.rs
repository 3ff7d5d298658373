//! Property-based checks of the structural invariants.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use firasym::estimators::{
    inverse_gap, ls_decomposition, ls_estimate, rls_estimate, rls_estimate_output_space,
    KernelSpec,
};
use firasym::rng::{derive_seed, ReplicationSeeds, STREAM_INPUT, STREAM_NOISE};
use firasym::signal::{ExperimentSetup, FilterSpec, InnovationSpec};
use firasym::theory::{cgamma_matrix, default_tau_cutoff, sigma_matrix};
use firasym::verify::{cubic_trace_sandwich, logdet_sandwich, trace_sandwich};

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-2.0f64..2.0, rows * cols)
        .prop_map(move |v| DMatrix::from_column_slice(rows, cols, &v))
}

/// Full-rank design: a random perturbation of a scaled identity block.
fn design() -> impl Strategy<Value = DMatrix<f64>> {
    (1usize..=4, 0usize..40).prop_flat_map(|(n, extra)| {
        let rows = n + 5 + extra;
        matrix(rows, n).prop_map(move |m| {
            let mut m = m;
            for i in 0..n {
                m[(i, i)] += 4.0;
            }
            m
        })
    })
}

fn spd(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
    (matrix(n, n), 0.05f64..2.0).prop_map(move |(m, shift)| {
        let a = m.tr_mul(&m) + DMatrix::identity(n, n) * shift;
        (&a + a.transpose()) * 0.5
    })
}

fn kernel(n: usize) -> impl Strategy<Value = KernelSpec> {
    prop_oneof![
        (0.2f64..3.0).prop_map(move |eta| KernelSpec::ridge(eta, n).unwrap()),
        (0.5f64..2.0, 0.4f64..0.95, -0.8f64..0.8)
            .prop_map(move |(c, l, r)| KernelSpec::dc(c, l, r, n).unwrap()),
        (0.5f64..2.0, 0.4f64..0.95).prop_map(move |(c, l)| KernelSpec::tc(c, l, n).unwrap()),
    ]
}

fn filter() -> impl Strategy<Value = FilterSpec> {
    prop_oneof![
        (-0.9f64..0.9).prop_map(|a| FilterSpec::ar1(a).unwrap()),
        prop::collection::vec(-1.0f64..1.0, 1..5).prop_map(|mut h| {
            h[0] = 1.0;
            FilterSpec::fir(h).unwrap()
        }),
    ]
}

fn innovation() -> impl Strategy<Value = InnovationSpec> {
    prop_oneof![
        (0.2f64..3.0).prop_map(|s| InnovationSpec::gaussian(s).unwrap()),
        (0.2f64..3.0).prop_map(|s| InnovationSpec::uniform(s).unwrap()),
        (0.2f64..3.0, 0.0f64..=1.0).prop_map(|(s, w)| InnovationSpec::rademacher_mixture(s, w).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn sigma_is_symmetric_toeplitz(f in filter(), s in 0.2f64..3.0, n in 1usize..7) {
        let sigma = sigma_matrix(&f, s, n).unwrap();
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(sigma[(i, j)], sigma[(j, i)]);
                if i + 1 < n && j + 1 < n {
                    prop_assert_eq!(sigma[(i, j)], sigma[(i + 1, j + 1)]);
                }
            }
        }
    }

    #[test]
    fn cgamma_is_symmetric(f in filter(), innov in innovation(), n in 1usize..4) {
        let c = cgamma_matrix(&f, &innov, n, default_tau_cutoff(&f, n)).unwrap();
        let scale = c.amax().max(1.0);
        prop_assert!((&c - c.transpose()).amax() <= 1e-10 * scale);
    }

    #[test]
    fn logdet_sandwich_holds(a in (1usize..7).prop_flat_map(spd)) {
        let s = logdet_sandwich(&a).unwrap();
        prop_assert!(s.lower - s.value <= 1e-10 * s.value.abs().max(1.0));
        prop_assert!(s.value - s.upper <= 1e-10 * s.value.abs().max(1.0));
    }

    #[test]
    fn trace_sandwiches_hold((a, b) in (1usize..6).prop_flat_map(|n| (matrix(n, n), spd(n)))) {
        for k in [1, 2] {
            prop_assert!(trace_sandwich(&a, &b, k).unwrap().holds(1e-10));
        }
        prop_assert!(cubic_trace_sandwich(&a, &b).unwrap().holds(1e-10));
    }

    #[test]
    fn two_rls_forms_agree(
        (phi, p) in design().prop_flat_map(|phi| { let n = phi.ncols(); (Just(phi), kernel(n)) }),
        sigma2 in 0.05f64..3.0,
        seed in any::<u64>(),
    ) {
        let y = DVector::from_fn(phi.nrows(), |i, _| ((i as u64 ^ seed) % 97) as f64 / 50.0 - 1.0);
        let p = p.matrix();
        let a = rls_estimate(&phi, &y, &p, sigma2).unwrap().theta_tr;
        let b = rls_estimate_output_space(&phi, &y, &p, sigma2).unwrap();
        prop_assert!((&a - &b).norm() <= 1e-8 * a.norm().max(b.norm()).max(1e-300));
    }

    #[test]
    fn gap_identity_is_exact(
        (phi, p) in design().prop_flat_map(|phi| { let n = phi.ncols(); (Just(phi), kernel(n)) }),
        sigma2_hat in 0.0f64..3.0,
    ) {
        let p = p.matrix();
        let (lhs, rhs) = inverse_gap(&p, sigma2_hat, &phi).unwrap();
        let p_inv = p.clone().try_inverse().unwrap();
        let scale = p_inv.norm() * p_inv.norm() * p.norm();
        prop_assert!((&lhs - &rhs).norm() <= 1e-12 * scale);
    }

    #[test]
    fn ls_residual_is_orthogonal(phi in design(), seed in any::<u64>()) {
        let y = DVector::from_fn(phi.nrows(), |i, _| (((i as u64).wrapping_mul(seed | 1)) % 101) as f64 / 30.0);
        let theta = ls_estimate(&phi, &y).unwrap();
        let ortho = phi.tr_mul(&(&y - &phi * &theta));
        prop_assert!(ortho.norm() <= 1e-8 * phi.tr_mul(&y).norm().max(1e-300));
    }

    #[test]
    fn ridge_norm_grows_with_eta(phi in design(), sigma2 in 0.05f64..3.0) {
        let y = DVector::from_fn(phi.nrows(), |i, _| (i as f64 * 0.37).sin() + 0.5);
        let n = phi.ncols();
        let mut last = f64::INFINITY;
        for eta in [100.0, 10.0, 1.0, 0.1, 0.01, 0.001] {
            let fit = rls_estimate(&phi, &y, &(DMatrix::identity(n, n) * eta), sigma2).unwrap();
            let norm = fit.theta_tr.norm();
            prop_assert!(norm <= last * (1.0 + 1e-12));
            last = norm;
        }
    }

    #[test]
    fn generated_data_reconstructs_and_decomposes(
        f in filter(),
        iu in innovation(),
        iv in innovation(),
        theta0 in prop::collection::vec(-2.0f64..2.0, 1..5),
        n_samples in 20usize..150,
        master in any::<u64>(),
        rep in 0u64..1000,
    ) {
        let setup = ExperimentSetup { filter: f, innov_u: iu, innov_v: iv, theta0 };
        let seeds = ReplicationSeeds::derive(master, n_samples, rep);
        let data = setup.generate(n_samples, seeds).unwrap();
        let scale = data.y.amax().max(1.0);
        prop_assert!(data.reconstruction_residual() <= 1e-13 * scale);
        prop_assert_eq!(&data, &setup.generate(n_samples, seeds).unwrap());
        if let Ok(theta) = ls_estimate(&data.phi, &data.y) {
            let route = ls_decomposition(&data.phi, &data.v, &data.theta0).unwrap();
            prop_assert!((&theta - &route.theta).norm() <= 1e-9 * theta.norm().max(1.0));
        }
    }

    #[test]
    fn replication_streams_are_distinct(master in any::<u64>(), n in 1usize..10_000, rep in 0u64..1_000_000) {
        let a = ReplicationSeeds::derive(master, n, rep);
        let b = ReplicationSeeds::derive(master, n, rep + 1);
        prop_assert_ne!(a.input, a.noise);
        prop_assert_ne!(a.input, b.input);
        prop_assert_ne!(a.noise, b.noise);
        prop_assert_eq!(a.input, derive_seed(master, &[STREAM_INPUT, n as u64, rep]));
        prop_assert_eq!(a.noise, derive_seed(master, &[STREAM_NOISE, n as u64, rep]));
    }

    #[test]
    fn kernels_are_symmetric_psd(k in (1usize..8).prop_flat_map(kernel)) {
        let p = k.matrix();
        prop_assert_eq!(&p, &p.transpose());
        let eig = p.symmetric_eigenvalues();
        prop_assert!(eig.min() >= -1e-12 * eig.amax());
    }
}
