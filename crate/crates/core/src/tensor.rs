//! Order-3 tensors and the multi-index norms `{123}`, `{12}{3}` and `{1}{2}{3}`.
//!
//! For `A ∈ R^{d×d×d}` with `A[x, y, z] = Σ A_ijk x_i y_j z_k`:
//!
//! * `‖A‖_{123}` is the Frobenius norm,
//! * `‖A‖_{12}{3} = sup_{‖z‖=1} ‖A[·,·,z]‖_F`, the top singular value of the
//!   `d² × d` unfolding with rows `(i, j)` and columns `k`,
//! * `‖A‖_{1}{2}{3}` is the injective norm. It is NP-hard in general, so only a
//!   multistart lower bound is computed.
//!
//! They satisfy `‖A‖_{1}{2}{3} ≤ ‖A‖_{12}{3} ≤ ‖A‖_{123}`.

use crate::error::{HmcError, Result};
use crate::linalg::{self, basis};
use crate::rng::{stream_rng, unit_vector};
use crate::target::Target;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Largest dimension for which target tensors are materialized.
pub const MAX_TENSOR_DIM: usize = 32;

/// Dense `d × d × d` tensor, index `(i, j, k)` stored at `(i·d + j)·d + k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    dim: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * dim * dim],
        }
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut t = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                for k in 0..dim {
                    t.data[(i * dim + j) * dim + k] = f(i, j, k);
                }
            }
        }
        t
    }

    pub fn from_vec(dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != dim * dim * dim {
            return Err(HmcError::InvalidInput(format!(
                "expected {} entries for a {dim}-dimensional 3-tensor, got {}",
                dim * dim * dim,
                data.len()
            )));
        }
        if !linalg::all_finite(&data) {
            return Err(HmcError::InvalidInput("tensor entries must be finite".into()));
        }
        Ok(Self { dim, data })
    }

    /// `c · a ⊗ b ⊗ e`
    pub fn outer(c: f64, a: &[f64], b: &[f64], e: &[f64]) -> Self {
        let d = a.len();
        Self::from_fn(d, |i, j, k| c * a[i] * b[j] * e[k])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[(i * self.dim + j) * self.dim + k]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        self.data[(i * self.dim + j) * self.dim + k] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|x| c * x).collect(),
        }
    }

    /// Average over all six index permutations.
    pub fn symmetrized(&self) -> Self {
        Self::from_fn(self.dim, |i, j, k| {
            (self.get(i, j, k)
                + self.get(i, k, j)
                + self.get(j, i, k)
                + self.get(j, k, i)
                + self.get(k, i, j)
                + self.get(k, j, i))
                / 6.0
        })
    }

    /// `A[x, y, z]`
    pub fn trilinear(&self, x: &[f64], y: &[f64], z: &[f64]) -> f64 {
        let d = self.dim;
        let mut s = 0.0;
        for i in 0..d {
            for j in 0..d {
                let xy = x[i] * y[j];
                if xy == 0.0 {
                    continue;
                }
                let row = &self.data[(i * d + j) * d..(i * d + j + 1) * d];
                s += xy * linalg::dot(row, z);
            }
        }
        s
    }

    /// The matrix `A[·, ·, z]`.
    pub fn contract_last(&self, z: &[f64]) -> DMatrix<f64> {
        let d = self.dim;
        DMatrix::from_fn(d, d, |i, j| linalg::dot(&self.data[(i * d + j) * d..(i * d + j + 1) * d], z))
    }

    /// `d² × d` unfolding, rows `(i, j)`, columns `k`.
    pub fn unfold_12_3(&self) -> DMatrix<f64> {
        let d = self.dim;
        DMatrix::from_row_slice(d * d, d, &self.data)
    }

    fn partial(&self, mode: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut out = vec![0.0; d];
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    let v = self.get(i, j, k);
                    match mode {
                        0 => out[i] += v * a[j] * b[k],
                        1 => out[j] += v * a[i] * b[k],
                        _ => out[k] += v * a[i] * b[j],
                    }
                }
            }
        }
        out
    }
}

/// `‖A‖_{123}`: square root of the sum of squared entries.
pub fn norm_frobenius_123(a: &Tensor3) -> f64 {
    linalg::norm(&a.data)
}

/// `‖A‖_{12}{3}`: exact top singular value of the `(ij) × k` unfolding.
pub fn norm_12_3(a: &Tensor3) -> f64 {
    if a.dim == 0 {
        return 0.0;
    }
    linalg::spectral_norm(&a.unfold_12_3())
}

/// Multistart alternating power ascent for `sup A[x, y, z]` over unit vectors.
///
/// The result is a certified lower bound on `‖A‖_{1}{2}{3}`. Restart 0 starts from the
/// top singular vectors of the unfolding; the rest from random directions on stream
/// `(seed, restart)`.
pub fn norm_injective_lower(a: &Tensor3, restarts: usize, seed: u64) -> f64 {
    let d = a.dim;
    if d == 0 || norm_frobenius_123(a) == 0.0 {
        return 0.0;
    }
    let restarts = restarts.max(1);
    (0..restarts)
        .into_par_iter()
        .map(|r| {
            let (x, y, z) = if r == 0 {
                spectral_start(a)
            } else {
                let mut rng = stream_rng(seed, r as u64);
                (unit_vector(&mut rng, d), unit_vector(&mut rng, d), unit_vector(&mut rng, d))
            };
            ascend(a, x, y, z)
        })
        .reduce(|| 0.0, f64::max)
}

fn spectral_start(a: &Tensor3) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let d = a.dim;
    let svd = a.unfold_12_3().svd(false, true);
    let (imax, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::MIN), |acc, (i, &s)| if s > acc.1 { (i, s) } else { acc });
    let vt = svd.v_t.expect("requested right singular vectors");
    let z: Vec<f64> = vt.row(imax).iter().cloned().collect();
    let m = a.contract_last(&z);
    let msvd = m.svd(true, true);
    let (jmax, _) = msvd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::MIN), |acc, (i, &s)| if s > acc.1 { (i, s) } else { acc });
    let x: Vec<f64> = msvd.u.expect("left vectors").column(jmax).iter().cloned().collect();
    let y: Vec<f64> = msvd.v_t.expect("right vectors").row(jmax).iter().cloned().collect();
    debug_assert_eq!(x.len(), d);
    (x, y, z)
}

fn ascend(a: &Tensor3, mut x: Vec<f64>, mut y: Vec<f64>, mut z: Vec<f64>) -> f64 {
    let mut value = a.trilinear(&x, &y, &z).abs();
    for _ in 0..1000 {
        x = normalized_or(a.partial(0, &y, &z), x);
        y = normalized_or(a.partial(1, &x, &z), y);
        z = normalized_or(a.partial(2, &x, &y), z);
        let next = a.trilinear(&x, &y, &z).abs();
        let done = (next - value).abs() <= 1e-15 * next.max(1e-300);
        value = value.max(next);
        if done {
            break;
        }
    }
    value
}

fn normalized_or(v: Vec<f64>, fallback: Vec<f64>) -> Vec<f64> {
    let n = linalg::norm(&v);
    if n > 0.0 {
        v.into_iter().map(|x| x / n).collect()
    } else {
        fallback
    }
}

/// The three norms plus a flag for `{1}{2}{3} ≤ {12}{3} ≤ {123}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TensorNormReport {
    pub norm_123: f64,
    pub norm_12_3: f64,
    pub norm_1_2_3_lower: f64,
    pub partition_ordering_ok: bool,
}

impl TensorNormReport {
    pub fn compute(a: &Tensor3, restarts: usize, seed: u64) -> Self {
        let norm_123 = norm_frobenius_123(a);
        let norm_12_3 = norm_12_3(a);
        let lower = norm_injective_lower(a, restarts, seed);
        let tol = 1.0 + 1e-10;
        Self {
            norm_123,
            norm_12_3,
            norm_1_2_3_lower: lower,
            partition_ordering_ok: lower <= norm_12_3 * tol && norm_12_3 <= norm_123 * tol,
        }
    }
}

/// Materializes `∇³f_q` from `d²` contractions `∇³f_q[e_i, e_j, ·]`, symmetrized.
pub fn third_derivative_tensor<T: Target + ?Sized>(target: &T, q: &[f64]) -> Result<Tensor3> {
    third_derivative_tensor_capped(target, q, MAX_TENSOR_DIM)
}

pub fn third_derivative_tensor_capped<T: Target + ?Sized>(
    target: &T,
    q: &[f64],
    max_dim: usize,
) -> Result<Tensor3> {
    let d = target.dim();
    if d > max_dim {
        return Err(HmcError::InvalidInput(format!(
            "refusing to materialize a {d}³ tensor (cap {max_dim})"
        )));
    }
    if q.len() != d {
        return Err(HmcError::InvalidInput("position dimension mismatch".into()));
    }
    let mut t = Tensor3::zeros(d);
    let mut out = vec![0.0; d];
    for i in 0..d {
        let ei = basis(d, i);
        for j in 0..d {
            target.third_contract(q, &ei, &basis(d, j), &mut out)?;
            for (k, &v) in out.iter().enumerate() {
                t.set(i, j, k, v);
            }
        }
    }
    Ok(t.symmetrized())
}

/// `max_q ‖∇³f_q‖_{12}{3} / L^{3/2}` over the sample points: a lower bound on `γ`.
pub fn estimate_gamma<T: Target + ?Sized>(target: &T, sample_points: &[Vec<f64>]) -> Result<f64> {
    if !target.supports_third() {
        return Err(crate::target::unsupported(target.name(), "third-derivative contractions"));
    }
    let l = target.smoothness();
    if !(l > 0.0 && l.is_finite()) {
        return Err(HmcError::Precondition(format!("estimate_gamma needs L > 0, got {l}")));
    }
    let mut best: f64 = 0.0;
    for q in sample_points {
        let t = third_derivative_tensor(target, q)?;
        best = best.max(norm_12_3(&t));
    }
    Ok(best / l.powf(1.5))
}
