mod common;

use common::*;
use hmclab::kernel::hamiltonian;
use hmclab::leapfrog::*;
use hmclab::linalg;
use hmclab::rng::{standard_normal_vec, stream_rng};
use hmclab::target::{GaussianTarget, LogisticPosteriorTarget, Ridge1D, RidgeSeparableTarget};
use hmclab::Target;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn random_spd(d: usize, lmax: f64, seed: u64) -> DMatrix<f64> {
    let mut rng = stream_rng(seed, 0);
    let a = DMatrix::from_vec(d, d, standard_normal_vec(&mut rng, d * d));
    let q = a.qr().q();
    let eig: Vec<f64> = (0..d).map(|i| 0.1 + (lmax - 0.1) * i as f64 / d.max(2) as f64).collect();
    let m = &q * DMatrix::from_diagonal(&DVector::from_vec(eig)) * q.transpose();
    (&m + m.transpose()) * 0.5
}

fn state(d: usize, seed: u64) -> PhaseState {
    let mut rng = stream_rng(seed, 1);
    PhaseState::new(standard_normal_vec(&mut rng, d), standard_normal_vec(&mut rng, d)).unwrap()
}

#[test]
fn forward_map_equals_linear_map_on_gaussians() {
    for (i, &(d, k, eta)) in [(1, 2, 0.1), (3, 5, 0.3), (8, 32, 0.2), (17, 9, 0.5), (64, 32, 0.15), (64, 3, 0.7)]
        .iter()
        .enumerate()
    {
        let lam = random_spd(d, 2.0, i as u64);
        let g = GaussianTarget::dense(lam.clone()).unwrap();
        let s0 = state(d, 10 + i as u64);
        let traj = forward_map(&g, &s0, k, eta).unwrap();
        let mk = mat_pow(&leapfrog_matrix(eta, &lam), k);
        let mut x = s0.q.clone();
        x.extend(&s0.p);
        let y = &mk * DVector::from_vec(x);
        let last = traj.last();
        let got: Vec<f64> = last.q.iter().chain(&last.p).cloned().collect();
        let err = got.iter().zip(y.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err <= 1e-12 * y.amax().max(1.0), "d={d} K={k}: {err}");
        assert!(traj.max_recursion_residual(&g) <= 1e-12);
    }
}

#[test]
fn forward_map_1d_example() {
    let g = GaussianTarget::standard(1);
    let s0 = PhaseState::new(vec![1.0], vec![0.0]).unwrap();
    let end = forward_map(&g, &s0, 2, 0.1).unwrap();
    // 0.995² − 0.1·0.09975
    assert!((end.last().q[0] - 0.98005).abs() < 1e-12);
    let m = DMatrix::from_row_slice(2, 2, &[0.995, 0.1, -0.09975, 0.995]);
    let y = &m * &m * DVector::from_vec(vec![1.0, 0.0]);
    assert!((end.last().p[0] - y[1]).abs() < 1e-14);
    let one = forward_map(&g, &s0, 1, 0.1).unwrap();
    assert_eq!(one.last(), &leapfrog_step(&g, &s0, 0.1).unwrap());
}

#[test]
fn reversibility() {
    let targets: Vec<Box<dyn Target>> = vec![
        Box::new(GaussianTarget::diagonal(vec![1.0, 3.0, 0.5]).unwrap()),
        Box::new(RidgeSeparableTarget::random(5, 3, Ridge1D::LogCosh, 2)),
        Box::new(LogisticPosteriorTarget::synthetic(8, 3, 1.0, 3)),
    ];
    for (i, t) in targets.iter().enumerate() {
        let s0 = state(3, 40 + i as u64);
        let fwd = forward_map(t.as_ref(), &s0, 12, 0.1).unwrap();
        let back = forward_map(t.as_ref(), &fwd.last().flipped(), 12, 0.1).unwrap();
        let end = back.last().flipped();
        let scale = linalg::norm(&s0.q).max(linalg::norm(&s0.p)).max(1.0);
        assert!(linalg::dist(&end.q, &s0.q) / scale <= 1e-10);
        assert!(linalg::dist(&end.p, &s0.p) / scale <= 1e-10);
    }
}

#[test]
fn volume_preservation() {
    for d in 1..=6usize {
        let t = RidgeSeparableTarget::random(d + 2, d, Ridge1D::LogCosh, d as u64);
        let s0 = state(d, 50 + d as u64);
        let x0: Vec<f64> = s0.q.iter().chain(&s0.p).cloned().collect();
        let map = |x: &[f64]| {
            let s = PhaseState::new(x[..d].to_vec(), x[d..].to_vec()).unwrap();
            let e = forward_map(&t, &s, 6, 0.15).unwrap();
            let last = e.last();
            last.q.iter().chain(&last.p).cloned().collect::<Vec<f64>>()
        };
        let jac = fd_jacobian(map, &x0, 1e-5);
        let (_, logdet) = linalg::log_abs_det(&jac);
        assert!(logdet.abs() <= 1e-6, "d={d}: log det {logdet}");
    }
}

#[test]
fn momentum_jacobian_matches_finite_differences() {
    let t = RidgeSeparableTarget::random(6, 4, Ridge1D::LogCosh, 8);
    let s0 = state(4, 60);
    let jac = momentum_jacobian(&t, &s0.q, &s0.p, 5, 0.05).unwrap();
    let fd = fd_jacobian(|p| forward_map(&t, &PhaseState::new(s0.q.clone(), p.to_vec()).unwrap(), 5, 0.05).unwrap().last().q.clone(), &s0.p, 1e-5);
    assert!((jac - fd).amax() <= 1e-6);
}

#[test]
fn momentum_jacobian_bound_in_regime() {
    for seed in 0..20u64 {
        let d = 1 + seed as usize % 8;
        let k = 1 + seed as usize % 8;
        let t = RidgeSeparableTarget::random(d + 3, d, Ridge1D::LogCosh, seed);
        let l = t.smoothness();
        let eta = 0.25 / (k as f64 * l.sqrt());
        let s0 = state(d, 70 + seed);
        let jacs = momentum_jacobians(&t, &s0.q, &s0.p, k, eta).unwrap();
        for (j, m) in jacs.iter().enumerate() {
            let jf = (j + 1) as f64;
            let dev = linalg::spectral_norm(&(m - linalg::identity(d) * (jf * eta)));
            assert!(dev <= jf.powi(3) * eta.powi(3) * l * (1.0 + 1e-12), "seed {seed} j {}", j + 1);
        }
    }
}

#[test]
fn forward_map_lipschitz_in_regime() {
    for seed in 0..20u64 {
        let d = 2 + seed as usize % 5;
        let k = 1 + seed as usize % 6;
        let t = LogisticPosteriorTarget::synthetic(10, d, 1.0, seed);
        let l = t.smoothness();
        let eta = 0.5 / (k as f64 * l.sqrt());
        let a = state(d, 90 + seed);
        let b = state(d, 190 + seed);
        let ta = forward_map(&t, &a, k, eta).unwrap();
        let tb = forward_map(&t, &b, k, eta).unwrap();
        for j in 1..=k {
            let lhs = linalg::dist(&ta.states[j].q, &tb.states[j].q);
            let rhs = 2.0 * linalg::dist(&a.q, &b.q) + 2.0 * j as f64 * eta * linalg::dist(&a.p, &b.p);
            assert!(lhs <= rhs, "seed {seed} j {j}: {lhs} > {rhs}");
        }
    }
}

#[test]
fn single_step_discretization_error_is_cubic() {
    let g = GaussianTarget::standard(1);
    let s0 = PhaseState::new(vec![1.0], vec![1.0]).unwrap();
    let ts: Vec<f64> = (0..12).map(|i| 0.01 * 30f64.powf(i as f64 / 11.0)).collect();
    let errs: Vec<f64> = ts
        .iter()
        .map(|&t| {
            let exact = continuous_reference(&g, &s0, t, 1e-14).unwrap();
            let step = leapfrog_step(&g, &s0, t).unwrap();
            (exact.q[0] - step.q[0]).abs()
        })
        .collect();
    let s = slope(&ts.iter().map(|t| t.ln()).collect::<Vec<_>>(), &errs.iter().map(|e| e.ln()).collect::<Vec<_>>());
    assert!((s - 3.0).abs() <= 0.3, "slope {s}");
}

#[test]
fn continuous_reference_conserves_energy() {
    let t = RidgeSeparableTarget::random(4, 3, Ridge1D::LogCosh, 5);
    let s0 = state(3, 5);
    let tol = 1e-9;
    let end = continuous_reference(&t, &s0, 2.0, tol).unwrap();
    assert!((hamiltonian(&t, &end) - hamiltonian(&t, &s0)).abs() <= 10.0 * tol);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn reversible_for_arbitrary_states(
        q in prop::collection::vec(-3.0f64..3.0, 3),
        p in prop::collection::vec(-3.0f64..3.0, 3),
        k in 1usize..20,
        eta in 0.01f64..0.4,
    ) {
        let t = RidgeSeparableTarget::random(4, 3, Ridge1D::Logistic { label: true }, 1);
        let s0 = PhaseState::new(q, p).unwrap();
        let fwd = forward_map(&t, &s0, k, eta).unwrap();
        let back = forward_map(&t, &fwd.last().flipped(), k, eta).unwrap();
        let end = back.last().flipped();
        prop_assert!(linalg::dist(&end.q, &s0.q) <= 1e-10 * (1.0 + linalg::norm(&s0.q)));
        prop_assert!(linalg::dist(&end.p, &s0.p) <= 1e-10 * (1.0 + linalg::norm(&s0.p)));
    }
}
