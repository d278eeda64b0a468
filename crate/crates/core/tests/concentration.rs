mod common;

use common::*;
use hmclab::concentration::*;
use hmclab::leapfrog::PhaseState;
use hmclab::target::{ConstantTarget, GaussianTarget, LogisticPosteriorTarget, Ridge1D, RidgeSeparableTarget};
use hmclab::{HmcConfig, Target};

fn within(r: &MomentReport, expected: f64, sigmas: f64) {
    assert!(
        (r.empirical - expected).abs() <= sigmas * r.std_error,
        "{}: {} ± {} vs {expected}",
        r.quantity,
        r.empirical,
        r.std_error
    );
}

#[test]
fn grad_norm_examples() {
    let g = GaussianTarget::standard(10);
    let s = ExactGaussianSampler { target: &g };
    let r = check_grad_norm_moment(&g, 1, 100_000, &s, 1).unwrap();
    within(&r, 10.0, 3.0);
    assert_eq!(r.bound, 10.0);
    assert!(!r.violated);

    let g = GaussianTarget::standard(2);
    let s = ExactGaussianSampler { target: &g };
    let r = check_grad_norm_moment(&g, 2, 100_000, &s, 2).unwrap();
    within(&r, 8f64.sqrt(), 3.0);
    assert_eq!(r.bound, 4.0);
}

#[test]
fn php_matches_chi_square_moments() {
    for &d in &[2usize, 7, 30] {
        let g = GaussianTarget::standard(d);
        for &ell in &[1usize, 2, 3, 4] {
            let r = check_php_moment(&g, &vec![0.0; d], ell, 100_000, 3 + ell as u64).unwrap();
            within(&r, chi_square_moment_norm(d, ell), 3.0);
            assert!(!r.violated);
            assert_eq!(r.bound, d as f64 + 2.0 * (ell as f64 - 1.0));
        }
    }
    let c = ConstantTarget::new(3, 0.0);
    assert_eq!(check_php_moment(&c, &[0.0; 3], 2, 100, 0).unwrap().empirical, 0.0);
}

#[test]
fn gradhp_examples() {
    let g = GaussianTarget::standard(6);
    let s = ExactGaussianSampler { target: &g };
    let r = check_gradhp_moment(&g, 2, 100_000, &s, 4).unwrap();
    within(&r, 6f64.sqrt(), 3.0);
    assert!((r.bound - 2f64.sqrt() * 8f64.sqrt()).abs() < 1e-12);

    // Λ = 2I₂: ∇fᵀ∇²f p = 4qᵀp with q ~ 𝒩(0, I/2), so E(·)² = 16·d/2; Υ₂ = 4 + 2·L = 8
    let g = GaussianTarget::isotropic(2, 2.0);
    let s = ExactGaussianSampler { target: &g };
    let r = check_gradhp_moment(&g, 2, 100_000, &s, 5).unwrap();
    within(&r, 16f64.sqrt(), 3.0);
    assert!((r.bound - 2f64.sqrt() * 2.0 * 8f64.sqrt()).abs() < 1e-12);
    assert!(r.empirical <= r.bound);

    assert!(check_gradhp_moment(&g, 3, 100, &s, 0).is_err());
    let c = ConstantTarget::new(2, 0.0);
    assert_eq!(check_gradhp_moment(&c, 2, 100, &PointMass(vec![1.0, 1.0]), 0).unwrap().empirical, 0.0);
}

#[test]
fn chaos_examples() {
    let g = GaussianTarget::standard(3);
    let (a, b) = check_chaos_moments(&g, &[0.1, 0.2, 0.3], 2, 1000, 1.0, 0).unwrap();
    assert_eq!(a.empirical, 0.0);
    assert_eq!(b.empirical, 0.0);

    let ridge = RidgeSeparableTarget::new(vec![vec![1.0, 0.0, 0.0]], vec![Ridge1D::CubicSixth])
        .unwrap()
        .with_smoothness(1.0);
    // ∇³f[p,p,p] = p₁³ and ‖∇³f[p,p,·]‖² = p₁⁴; both norms of e₁⊗e₁⊗e₁ are 1
    let (a, b) = check_chaos_moments(&ridge, &[0.0; 3], 2, 200_000, 1.0, 1).unwrap();
    within(&a, 15f64.sqrt(), 3.0);
    within(&b, 105f64.sqrt(), 3.0);
    assert!((a.bound - (2f64.powf(1.5) + 2f64.sqrt() * 3f64.sqrt())).abs() < 1e-9);
    assert!((b.bound - (4.0 + 4.0 * 3.0)).abs() < 1e-9);
    let (_, b1) = check_chaos_moments(&ridge, &[0.0; 3], 1, 200_000, 1.0, 2).unwrap();
    within(&b1, 3.0, 3.0);
}

#[test]
fn dynamics_gap_matches_harmonic_closed_form() {
    let g = GaussianTarget::standard(1);
    let pts = random_points(2, 20, 1.0, 6);
    for &t in &[0.05, 0.2, 0.5] {
        for x in &pts {
            let (q0, p0) = (x[0], x[1]);
            let diff = dynamics_diff(&g, &PhaseState::new(vec![q0], vec![p0]).unwrap(), t, 1e-13).unwrap();
            let exact = q0 * (t.cos() - 1.0 + t * t / 2.0) + p0 * (t.sin() - t);
            assert!((diff.position_gap[0] - exact).abs() <= 1e-10, "{} vs {exact}", diff.position_gap[0]);
        }
    }
    let t: f64 = 0.3;
    let s = ExactGaussianSampler { target: &g };
    let r = check_dynamics_diffs(&g, t, 1, 20_000, &s, 1e-12, 1.0, 7).unwrap();
    let a = t.cos() - 1.0 + t * t / 2.0;
    let b = t.sin() - t;
    within(&r[2], (a * a + b * b).sqrt(), 3.0);
    assert!(!r[2].violated);

    let r0 = check_dynamics_diffs(&g, 0.0, 2, 100, &s, 1e-12, 1.0, 7).unwrap();
    assert!(r0.iter().all(|r| r.empirical == 0.0));
}

#[test]
fn position_gap_scales_cubically() {
    let g = GaussianTarget::standard(4);
    let s = ExactGaussianSampler { target: &g };
    let ts = [0.01, 0.03, 0.1, 0.3];
    let ys: Vec<f64> = ts
        .iter()
        .map(|&t| check_dynamics_diffs(&g, t, 1, 4000, &s, 1e-12, 1.0, 8).unwrap()[2].empirical.ln())
        .collect();
    let xs: Vec<f64> = ts.iter().map(|t: &f64| t.ln()).collect();
    let sl = slope(&xs, &ys);
    assert!((sl - 3.0).abs() <= 0.3, "slope {sl}");
}

#[test]
fn energy_error_examples() {
    let g = GaussianTarget::standard(1);
    let r = energy_error_moment(&g, 0.5, 2, 2, &PointMass(vec![1.0]), 1.0, 0).unwrap();
    assert!(r.empirical > 0.0);
    // single point (1, 1): ΔH forced by the update
    let q1: f64 = 1.375;
    let p1: f64 = 1.0 - 0.25 * (1.0 + q1);
    let dh = 1.0 - 0.5 * (q1 * q1 + p1 * p1);
    assert!((dh + 0.0278320).abs() < 1e-7);

    let c = ConstantTarget::new(4, 0.0);
    let r = energy_error_moment(&c, 0.5, 4, 500, &PointMass(vec![0.0; 4]), 1.0, 0).unwrap();
    assert_eq!(r.empirical, 0.0);
    assert!(energy_error_moment(&g, 0.5, 3, 500, &PointMass(vec![0.0]), 1.0, 0).is_err());
}

#[test]
fn energy_error_slopes() {
    let g = GaussianTarget::standard(64);
    let s = ExactGaussianSampler { target: &g };
    let etas = [0.02, 0.05, 0.1, 0.2];
    let ys: Vec<f64> = etas
        .iter()
        .map(|&e| energy_error_moment(&g, e, 2, 20_000, &s, 1.0, 9).unwrap().empirical.ln())
        .collect();
    let xs: Vec<f64> = etas.iter().map(|e: &f64| e.ln()).collect();
    let sl = slope(&xs, &ys);
    assert!((sl - 3.0).abs() <= 0.3, "eta slope {sl}");

    let ds = [16usize, 64, 256, 1024];
    let ys: Vec<f64> = ds
        .iter()
        .map(|&d| {
            let g = GaussianTarget::standard(d);
            let s = ExactGaussianSampler { target: &g };
            energy_error_moment(&g, 0.05, 2, 10_000, &s, 1.0, 10).unwrap().empirical.ln()
        })
        .collect();
    let xs: Vec<f64> = ds.iter().map(|&d| (d as f64).ln()).collect();
    let sl = slope(&xs, &ys);
    assert!((sl - 0.5).abs() <= 0.15, "dimension slope {sl}");
}

#[test]
fn trajectory_energy_error_telescopes() {
    let t = LogisticPosteriorTarget::synthetic(20, 3, 1.0, 1).with_gamma(1.0);
    let q = PointMass(vec![0.1, 0.0, -0.2]);
    let eta = 0.05;
    let total = energy_error_moment_k(&t, eta, 4, 2, 3000, &q, 1.0, 11).unwrap();
    let cfg = HmcConfig::new(eta, 4);
    let p = vec![0.3, -1.0, 0.5];
    let s0 = PhaseState::new(vec![0.1, 0.0, -0.2], p).unwrap();
    let steps = hmclab::kernel::per_step_energy_errors(&t, &s0, cfg.n_leapfrog, eta).unwrap();
    let traj = hmclab::forward_map(&t, &s0, 4, eta).unwrap();
    let h = |s: &PhaseState| t.potential(&s.q) + 0.5 * s.p.iter().map(|x| x * x).sum::<f64>();
    let whole = h(&traj.states[0]) - h(traj.last());
    assert!((steps.iter().sum::<f64>() - whole).abs() <= 1e-12);
    assert!(total.empirical > 0.0 && total.bound > 0.0);
}

#[test]
fn logistic_hard_bounds_hold_under_warm_chain() {
    let t = LogisticPosteriorTarget::synthetic(30, 4, 1.0, 12);
    let l = t.smoothness();
    let cfg = HmcConfig::new(0.2 / l.sqrt(), 5).with_seed(3);
    let sampler = WarmChainSampler::new(&t, cfg, &[0.0; 4], 5000, 200, 5).unwrap();
    for &ell in &[1usize, 2, 4] {
        let r = check_grad_norm_moment(&t, ell, 20_000, &sampler, 13).unwrap();
        assert!(r.hard && !r.violated, "{r:?}");
        let r = check_php_moment(&t, sampler.warm_state(), ell, 20_000, 14).unwrap();
        assert!(r.hard && !r.violated, "{r:?}");
    }
}

#[test]
fn implied_constants_are_stable_across_dimension() {
    let mut gradhp = vec![];
    let mut energy = vec![];
    let mut drift = vec![];
    for &d in &[4usize, 16, 64] {
        let g = GaussianTarget::standard(d);
        let s = ExactGaussianSampler { target: &g };
        gradhp.push(check_gradhp_moment(&g, 2, 20_000, &s, 15).unwrap().implied_constant);
        energy.push(energy_error_moment(&g, 0.1, 2, 20_000, &s, 1.0, 16).unwrap().implied_constant);
        drift.push(check_dynamics_diffs(&g, 0.1, 2, 4000, &s, 1e-10, 1.0, 17).unwrap()[1].implied_constant);
    }
    for (name, cs) in [("grad_h_p", &gradhp), ("energy_error", &energy), ("hp_drift", &drift)] {
        let hi = cs.iter().cloned().fold(f64::MIN, f64::max);
        let lo = cs.iter().cloned().fold(f64::MAX, f64::min);
        println!("{name}: implied constants {cs:?}");
        assert!(hi <= 2.0 * lo, "{name}: {cs:?}");
    }
}

#[test]
fn reports_are_deterministic() {
    let g = GaussianTarget::standard(5);
    let s = ExactGaussianSampler { target: &g };
    let a = check_grad_norm_moment(&g, 2, 5000, &s, 21).unwrap();
    let b = check_grad_norm_moment(&g, 2, 5000, &s, 21).unwrap();
    assert_eq!(a, b);
}
