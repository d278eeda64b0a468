mod common;

use common::*;
use hmclab::diagnostics::two_sample_projected_tv;
use hmclab::leapfrog::{forward_endpoint, momentum_jacobian};
use hmclab::linalg;
use hmclab::overlap::*;
use hmclab::rng::{standard_normal_vec, stream_rng};
use hmclab::target::{GaussianTarget, LogisticPosteriorTarget, Ridge1D, RidgeSeparableTarget};
use hmclab::Target;
use nalgebra::{DMatrix, DVector};

#[test]
fn inverse_map_matches_linear_solve() {
    let g = GaussianTarget::standard(1);
    let (a, b) = position_blocks(0.1, &DMatrix::identity(1, 1), 2);
    for &(q0, y) in &[(0.3, 0.1), (-1.0, 0.7), (2.0, 2.5)] {
        let p = inverse_map(&g, &[q0], &[y], 2, 0.1, 1e-13).unwrap();
        let expected = (y - a[(0, 0)] * q0) / b[(0, 0)];
        assert!((p[0] - expected).abs() <= 1e-10, "{} vs {expected}", p[0]);
    }
}

#[test]
fn inverse_map_round_trip() {
    let t = LogisticPosteriorTarget::synthetic(10, 4, 1.0, 3);
    let l = t.smoothness();
    let mut rng = stream_rng(8, 0);
    for k in 1..=4 {
        let eta = 0.25 / (k as f64 * l.sqrt());
        let q0 = standard_normal_vec(&mut rng, 4);
        let p = standard_normal_vec(&mut rng, 4);
        let y = forward_endpoint(&t, &q0, &p, k, eta).unwrap().q;
        let tol = 1e-12;
        let ph = inverse_map(&t, &q0, &y, k, eta, tol).unwrap();
        let y2 = forward_endpoint(&t, &q0, &ph, k, eta).unwrap().q;
        assert!(linalg::dist(&y2, &y) <= tol);
        assert!(linalg::dist(&ph, &p) <= 1e-9);
    }
}

#[test]
fn density_matches_gaussian_closed_form() {
    let lam = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.6]);
    let g = GaussianTarget::dense(lam.clone()).unwrap();
    let (k, eta) = (3, 0.08);
    let (a, b) = position_blocks(eta, &lam, k);
    let cov = &b * b.transpose();
    let cov_inv = cov.clone().try_inverse().unwrap();
    let q0 = [0.4, -0.2];
    let mean = &a * DVector::from_column_slice(&q0);
    let mut rng = stream_rng(1, 0);
    for _ in 0..10 {
        let y = DVector::from_vec(standard_normal_vec(&mut rng, 2)) * 0.2 + &mean;
        let r = &y - &mean;
        let logpdf = -(2.0 * std::f64::consts::PI).ln() - 0.5 * cov.determinant().ln() - 0.5 * (r.transpose() * &cov_inv * &r)[(0, 0)];
        let got = proposal_log_density(&g, &q0, y.as_slice(), k, eta).unwrap();
        assert!((got - logpdf).abs() <= 1e-8, "{got} vs {logpdf}");
    }
}

#[test]
fn density_integrates_to_one() {
    let g = GaussianTarget::standard(1);
    let eta = 0.1;
    let n = 4001;
    let h = 12.0 * eta / (n - 1) as f64;
    let vals: Vec<f64> = (0..n)
        .map(|i| proposal_log_density(&g, &[0.0], &[-6.0 * eta + i as f64 * h], 1, eta).unwrap().exp())
        .collect();
    let integral = h * (vals.iter().sum::<f64>() - 0.5 * (vals[0] + vals[n - 1]));
    assert!((integral - 1.0).abs() <= 1e-4, "{integral}");
}

#[test]
fn kl_matches_closed_form_in_1d() {
    let g = GaussianTarget::standard(1);
    let kl = kl_between_proposals(&g, &[0.01], &[0.0], 1, 0.1, 100_000, 4).unwrap();
    let exact = gaussian_proposal_kl(0.1, &DMatrix::identity(1, 1), 1, &[0.01], &[0.0]);
    assert!((exact - 4.950125e-3).abs() < 1e-12);
    assert!((kl.estimate - exact).abs() <= 3.0 * kl.std_error.max(1e-15), "{kl:?} vs {exact}");
}

#[test]
fn kl_is_symmetric_on_gaussians() {
    let lam = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.5, 2.0]));
    let g = GaussianTarget::dense(lam.clone()).unwrap();
    let q0 = [0.1, 0.2, -0.1];
    let q1 = [0.11, 0.19, -0.1];
    let ab = kl_between_proposals(&g, &q0, &q1, 2, 0.1, 20_000, 1).unwrap();
    let ba = kl_between_proposals(&g, &q1, &q0, 2, 0.1, 20_000, 1).unwrap();
    let exact = gaussian_proposal_kl(0.1, &lam, 2, &q0, &q1);
    assert!((ab.estimate - exact).abs() <= 4.0 * ab.std_error, "{ab:?} vs {exact}");
    assert!((ba.estimate - exact).abs() <= 4.0 * ba.std_error, "{ba:?} vs {exact}");
}

#[test]
fn inverse_jacobian_identity_and_eigenvalue_range() {
    let t = RidgeSeparableTarget::random(8, 4, Ridge1D::LogCosh, 7);
    let l = t.smoothness();
    let mut rng = stream_rng(5, 0);
    for k in 1..=5 {
        let eta = 0.25 / (k as f64 * l.sqrt());
        let q0 = standard_normal_vec(&mut rng, 4);
        let p = standard_normal_vec(&mut rng, 4);
        let y = forward_endpoint(&t, &q0, &p, k, eta).unwrap().q;
        let jf = momentum_jacobian(&t, &q0, &p, k, eta).unwrap();
        let jg = fd_jacobian(|y| inverse_map(&t, &q0, y, k, eta, 1e-14).unwrap(), &y, 1e-6);
        let prod = &jf * &jg;
        assert!((prod - linalg::identity(4)).amax() <= 1e-5);
        let keta = k as f64 * eta;
        let inv = jf.try_inverse().unwrap();
        for ev in inv.complex_eigenvalues().iter() {
            let m = ev.norm();
            assert!(m >= 16.0 / (17.0 * keta) * (1.0 - 1e-12) && m <= 16.0 / (15.0 * keta) * (1.0 + 1e-12), "k={k}: {m}");
        }
    }
}

#[test]
fn kl_respects_lemma_bound_on_gamma_bounded_target() {
    let t = LogisticPosteriorTarget::synthetic(8, 3, 1.0, 2);
    let pts = random_points(3, 10, 1.0, 3);
    let gamma = hmclab::tensor::estimate_gamma(&t, &pts).unwrap();
    let t = t.with_gamma(gamma);
    let l = t.smoothness();
    let (k, eta) = (2, 0.25 / (2.0 * l.sqrt()));
    let q0 = vec![0.1, -0.3, 0.2];
    let dir = linalg::unit(&[1.0, 1.0, -1.0]);
    let q1: Vec<f64> = q0.iter().zip(&dir).map(|(a, b)| a + k as f64 * eta / 64.0 * b).collect();
    let kl = kl_between_proposals(&t, &q0, &q1, k, eta, 20_000, 9).unwrap();
    let bound = kl_lemma_bound(k, eta, gamma, l);
    assert!(kl.estimate >= -3.0 * kl.std_error);
    assert!(kl.estimate <= bound + 3.0 * kl.std_error, "{kl:?} > {bound}");
    assert!(kl_proof_bound(k, eta, gamma, l) >= bound);
}

#[test]
fn projected_tv_is_below_pinsker() {
    let g = GaussianTarget::standard(1);
    let (k, eta) = (1, 0.1);
    let q0 = [0.01];
    let q1 = [0.0];
    let kl = kl_between_proposals(&g, &q0, &q1, k, eta, 100_000, 1).unwrap();
    let a = sample_proposals(&g, &q0, k, eta, 100_000, 2).unwrap();
    let b = sample_proposals(&g, &q1, k, eta, 100_000, 3).unwrap();
    let null = sample_proposals(&g, &q0, k, eta, 100_000, 4).unwrap();
    let tv = two_sample_projected_tv(&a, &b, 8, 50, 0);
    // histogram noise floor: the same distribution sampled twice
    let floor = two_sample_projected_tv(&a, &null, 8, 50, 0);
    assert!(tv <= kl.pinsker_tv() + floor + 0.01, "tv {tv}, pinsker {}, floor {floor}", kl.pinsker_tv());
}

#[test]
fn kl_needs_invertible_inputs() {
    let g = GaussianTarget::standard(2);
    assert!(kl_between_proposals(&g, &[0.0], &[0.0, 0.0], 1, 0.1, 10, 0).is_err());
    assert!(kl_between_proposals(&g, &[0.0, 0.0], &[0.0, 0.1], 0, 0.1, 10, 0).is_err());
}
