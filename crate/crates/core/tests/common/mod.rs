//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use hmclab::rng::{standard_normal_vec, stream_rng};
use hmclab::Target;
use nalgebra::{DMatrix, DVector};

/// Central difference of the potential.
pub fn fd_gradient<T: Target + ?Sized>(t: &T, q: &[f64], h: f64) -> Vec<f64> {
    (0..q.len())
        .map(|i| {
            let mut a = q.to_vec();
            let mut b = q.to_vec();
            a[i] += h;
            b[i] -= h;
            (t.potential(&a) - t.potential(&b)) / (2.0 * h)
        })
        .collect()
}

/// Central difference of the gradient along `v`.
pub fn fd_hessian_vec<T: Target + ?Sized>(t: &T, q: &[f64], v: &[f64], h: f64) -> Vec<f64> {
    let d = q.len();
    let a: Vec<f64> = q.iter().zip(v).map(|(x, y)| x + h * y).collect();
    let b: Vec<f64> = q.iter().zip(v).map(|(x, y)| x - h * y).collect();
    let mut ga = vec![0.0; d];
    let mut gb = vec![0.0; d];
    t.gradient(&a, &mut ga);
    t.gradient(&b, &mut gb);
    ga.iter().zip(&gb).map(|(x, y)| (x - y) / (2.0 * h)).collect()
}

/// Central difference of the Hessian-vector product `∇²f_q v` along `u`.
pub fn fd_third<T: Target + ?Sized>(t: &T, q: &[f64], u: &[f64], v: &[f64], h: f64) -> Vec<f64> {
    let d = q.len();
    let a: Vec<f64> = q.iter().zip(u).map(|(x, y)| x + h * y).collect();
    let b: Vec<f64> = q.iter().zip(u).map(|(x, y)| x - h * y).collect();
    let mut ha = vec![0.0; d];
    let mut hb = vec![0.0; d];
    t.hessian_vec(&a, v, &mut ha).unwrap();
    t.hessian_vec(&b, v, &mut hb).unwrap();
    ha.iter().zip(&hb).map(|(x, y)| (x - y) / (2.0 * h)).collect()
}

/// `‖a − b‖ / max(‖b‖, floor)`
pub fn rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / nb.max(floor)
}

pub fn random_points(d: usize, n: usize, scale: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = stream_rng(seed, 0);
    (0..n)
        .map(|_| standard_normal_vec(&mut rng, d).into_iter().map(|x| scale * x).collect())
        .collect()
}

/// One leapfrog step on `½qᵀΛq` as a `2d × 2d` matrix:
/// `[[𝕀−η²Λ/2, η𝕀], [−ηΛ(𝕀−η²Λ/4), 𝕀−η²Λ/2]]`.
pub fn leapfrog_matrix(eta: f64, lambda: &DMatrix<f64>) -> DMatrix<f64> {
    let d = lambda.nrows();
    let eye = DMatrix::<f64>::identity(d, d);
    let a = &eye - lambda * (eta * eta / 2.0);
    let c = -(lambda * (&eye - lambda * (eta * eta / 4.0))) * eta;
    let mut m = DMatrix::zeros(2 * d, 2 * d);
    m.view_mut((0, 0), (d, d)).copy_from(&a);
    m.view_mut((0, d), (d, d)).copy_from(&(&eye * eta));
    m.view_mut((d, 0), (d, d)).copy_from(&c);
    m.view_mut((d, d), (d, d)).copy_from(&a);
    m
}

pub fn mat_pow(m: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let mut out = DMatrix::identity(m.nrows(), m.ncols());
    for _ in 0..k {
        out = &out * m;
    }
    out
}

/// `(A_qq, A_qp)` blocks of `M^K`.
pub fn position_blocks(eta: f64, lambda: &DMatrix<f64>, k: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let d = lambda.nrows();
    let mk = mat_pow(&leapfrog_matrix(eta, lambda), k);
    (
        mk.view((0, 0), (d, d)).into_owned(),
        mk.view((0, d), (d, d)).into_owned(),
    )
}

/// `KL(𝒩(Aq₀, BBᵀ) ‖ 𝒩(Aq̃₀, BBᵀ)) = ½‖B⁻¹A(q₀ − q̃₀)‖²`
pub fn gaussian_proposal_kl(eta: f64, lambda: &DMatrix<f64>, k: usize, q0: &[f64], q0t: &[f64]) -> f64 {
    let (a, b) = position_blocks(eta, lambda, k);
    let dq = DVector::from_iterator(q0.len(), q0.iter().zip(q0t).map(|(x, y)| x - y));
    let z = b.lu().solve(&(a * dq)).unwrap();
    0.5 * z.norm_squared()
}

/// Gauss–Hermite nodes and weights for `E g(X)`, `X ~ 𝒩(0, 1)`, by Golub–Welsch.
pub fn gauss_hermite_normal(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut j = DMatrix::<f64>::zeros(n, n);
    for i in 1..n {
        let b = (i as f64 / 2.0).sqrt();
        j[(i, i - 1)] = b;
        j[(i - 1, i)] = b;
    }
    let eig = j.symmetric_eigen();
    let nodes: Vec<f64> = eig.eigenvalues.iter().map(|x| x * std::f64::consts::SQRT_2).collect();
    let weights: Vec<f64> = (0..n).map(|i| eig.eigenvectors[(0, i)].powi(2)).collect();
    (nodes, weights)
}

/// Finite-difference Jacobian of `x ↦ f(x)`.
pub fn fd_jacobian(f: impl Fn(&[f64]) -> Vec<f64>, x: &[f64], h: f64) -> DMatrix<f64> {
    let n = x.len();
    let m = f(x).len();
    let mut jac = DMatrix::zeros(m, n);
    for j in 0..n {
        let mut a = x.to_vec();
        let mut b = x.to_vec();
        a[j] += h;
        b[j] -= h;
        let fa = f(&a);
        let fb = f(&b);
        for i in 0..m {
            jac[(i, j)] = (fa[i] - fb[i]) / (2.0 * h);
        }
    }
    jac
}

/// Least-squares slope of `ys` against `xs`.
pub fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}
