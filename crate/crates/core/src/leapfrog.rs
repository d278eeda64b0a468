//! Leapfrog integration, forward maps, the momentum Jacobian recursion and an RK4
//! reference for the continuous Hamiltonian flow.

use crate::error::{HmcError, Result};
use crate::linalg;
use crate::target::{hessian_matrix, unsupported, Target};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Trajectories whose position or momentum norm exceeds this are flagged diverged.
pub const DIVERGENCE_NORM: f64 = 1e8;

/// Default dimension cap for dense Jacobians.
pub const MAX_JACOBIAN_DIM: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseState {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

impl PhaseState {
    pub fn new(q: Vec<f64>, p: Vec<f64>) -> Result<Self> {
        if q.len() != p.len() {
            return Err(HmcError::InvalidInput(format!(
                "position has dimension {} but momentum has {}",
                q.len(),
                p.len()
            )));
        }
        if !linalg::all_finite(&q) || !linalg::all_finite(&p) {
            return Err(HmcError::InvalidInput("phase state must be finite".into()));
        }
        Ok(Self { q, p })
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    /// Same position, negated momentum.
    pub fn flipped(&self) -> Self {
        Self {
            q: self.q.clone(),
            p: self.p.iter().map(|x| -x).collect(),
        }
    }
}

/// States `0..=K` of a leapfrog run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<PhaseState>,
    pub step_size: f64,
    pub gradient_evals: usize,
}

impl Trajectory {
    pub fn n_steps(&self) -> usize {
        self.states.len() - 1
    }

    pub fn last(&self) -> &PhaseState {
        self.states.last().expect("trajectory holds at least the start state")
    }

    /// Largest relative residual of the leapfrog recursion between consecutive states.
    pub fn max_recursion_residual<T: Target + ?Sized>(&self, target: &T) -> f64 {
        let eta = self.step_size;
        let d = self.states[0].dim();
        let mut g0 = vec![0.0; d];
        let mut g1 = vec![0.0; d];
        let mut worst: f64 = 0.0;
        for w in self.states.windows(2) {
            target.gradient(&w[0].q, &mut g0);
            target.gradient(&w[1].q, &mut g1);
            for i in 0..d {
                let q = w[0].q[i] + eta * w[0].p[i] - 0.5 * eta * eta * g0[i];
                let p = w[0].p[i] - 0.5 * eta * (g0[i] + g1[i]);
                worst = worst
                    .max((q - w[1].q[i]).abs() / w[1].q[i].abs().max(1.0))
                    .max((p - w[1].p[i]).abs() / w[1].p[i].abs().max(1.0));
            }
        }
        worst
    }

    /// CSV with columns `k, q_1..q_d, p_1..p_d`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let d = self.states.first().map_or(0, PhaseState::dim);
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["k".to_string()];
        header.extend((1..=d).map(|i| format!("q_{i}")));
        header.extend((1..=d).map(|i| format!("p_{i}")));
        out.write_record(&header)?;
        for (k, s) in self.states.iter().enumerate() {
            let mut row = vec![k.to_string()];
            row.extend(s.q.iter().map(|x| format!("{x:e}")));
            row.extend(s.p.iter().map(|x| format!("{x:e}")));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn diverged(q: &[f64], p: &[f64]) -> bool {
    let nq = linalg::norm(q);
    let np = linalg::norm(p);
    !(nq.is_finite() && np.is_finite()) || nq > DIVERGENCE_NORM || np > DIVERGENCE_NORM
}

/// One leapfrog step in place. `grad` must hold `∇f(q)` on entry and holds `∇f(q')` on
/// exit, so each call costs exactly one gradient evaluation.
pub fn step_in_place<T: Target + ?Sized>(
    target: &T,
    q: &mut [f64],
    p: &mut [f64],
    grad: &mut [f64],
    eta: f64,
) {
    let half = 0.5 * eta;
    for i in 0..q.len() {
        p[i] -= half * grad[i];
        q[i] += eta * p[i];
    }
    target.gradient(q, grad);
    for i in 0..q.len() {
        p[i] -= half * grad[i];
    }
}

fn check_step_size(eta: f64) -> Result<()> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(HmcError::InvalidInput(format!("step size must be positive, got {eta}")));
    }
    Ok(())
}

/// `q' = q + ηp − (η²/2)∇f(q)`, `p' = p − (η/2)(∇f(q) + ∇f(q'))`.
pub fn leapfrog_step<T: Target + ?Sized>(target: &T, s: &PhaseState, eta: f64) -> Result<PhaseState> {
    Ok(forward_map(target, s, 1, eta)?.states.pop().expect("two states"))
}

/// `K` leapfrog steps from `s0`, keeping every state. Costs `K + 1` gradient evaluations.
pub fn forward_map<T: Target + ?Sized>(target: &T, s0: &PhaseState, k: usize, eta: f64) -> Result<Trajectory> {
    check_step_size(eta)?;
    if k == 0 {
        return Err(HmcError::InvalidInput("number of leapfrog steps must be at least 1".into()));
    }
    let d = target.dim();
    if s0.q.len() != d || s0.p.len() != d {
        return Err(HmcError::InvalidInput(format!(
            "phase state dimension does not match target dimension {d}"
        )));
    }
    let mut q = s0.q.clone();
    let mut p = s0.p.clone();
    let mut grad = vec![0.0; d];
    target.gradient(&q, &mut grad);
    let mut states = Vec::with_capacity(k + 1);
    states.push(s0.clone());
    for step in 1..=k {
        step_in_place(target, &mut q, &mut p, &mut grad, eta);
        if diverged(&q, &p) || !linalg::all_finite(&grad) {
            return Err(HmcError::DivergedTrajectory { step });
        }
        states.push(PhaseState { q: q.clone(), p: p.clone() });
    }
    Ok(Trajectory {
        states,
        step_size: eta,
        gradient_evals: k + 1,
    })
}

/// Endpoint of `K` leapfrog steps without storing intermediate states.
pub fn forward_endpoint<T: Target + ?Sized>(
    target: &T,
    q0: &[f64],
    p0: &[f64],
    k: usize,
    eta: f64,
) -> Result<PhaseState> {
    let d = q0.len();
    let mut q = q0.to_vec();
    let mut p = p0.to_vec();
    let mut grad = vec![0.0; d];
    target.gradient(&q, &mut grad);
    for step in 1..=k {
        step_in_place(target, &mut q, &mut p, &mut grad, eta);
        if diverged(&q, &p) || !linalg::all_finite(&grad) {
            return Err(HmcError::DivergedTrajectory { step });
        }
    }
    Ok(PhaseState { q, p })
}

/// `D₂𝔽_j(q₀, p₀)` for `j = 1..=K`: derivatives of the `j`-th position with respect to
/// the initial momentum, from
/// `D₂𝔽_j = jη𝕀 − η² Σ_{l=1}^{j−1} (j − l) ∇²f(𝔽_l) D₂𝔽_l`.
pub fn momentum_jacobians<T: Target + ?Sized>(
    target: &T,
    q0: &[f64],
    p0: &[f64],
    k: usize,
    eta: f64,
) -> Result<Vec<DMatrix<f64>>> {
    momentum_jacobians_capped(target, q0, p0, k, eta, MAX_JACOBIAN_DIM)
}

pub fn momentum_jacobians_capped<T: Target + ?Sized>(
    target: &T,
    q0: &[f64],
    p0: &[f64],
    k: usize,
    eta: f64,
    max_dim: usize,
) -> Result<Vec<DMatrix<f64>>> {
    if !target.supports_hessian() {
        return Err(unsupported(target.name(), "Hessian-vector products"));
    }
    let d = target.dim();
    if d > max_dim {
        return Err(HmcError::InvalidInput(format!(
            "dense Jacobians limited to dimension {max_dim}, target has {d}"
        )));
    }
    let s0 = PhaseState::new(q0.to_vec(), p0.to_vec())?;
    let traj = forward_map(target, &s0, k, eta)?;
    let eye = linalg::identity(d);
    let mut jac: Vec<DMatrix<f64>> = Vec::with_capacity(k);
    // hd[l - 1] = ∇²f(𝔽_l) D₂𝔽_l
    let mut hd: Vec<DMatrix<f64>> = Vec::with_capacity(k);
    for j in 1..=k {
        let mut dj = &eye * (j as f64 * eta);
        for (l, m) in hd.iter().enumerate() {
            let weight = (j - (l + 1)) as f64;
            dj -= m * (eta * eta * weight);
        }
        if j < k {
            let h = hessian_matrix(target, &traj.states[j].q)?;
            hd.push(h * &dj);
        }
        jac.push(dj);
    }
    Ok(jac)
}

/// `D₂𝔽_K(q₀, p₀)`.
pub fn momentum_jacobian<T: Target + ?Sized>(
    target: &T,
    q0: &[f64],
    p0: &[f64],
    k: usize,
    eta: f64,
) -> Result<DMatrix<f64>> {
    Ok(momentum_jacobians(target, q0, p0, k, eta)?.pop().expect("k >= 1"))
}

fn rk4_run<T: Target + ?Sized>(target: &T, s0: &PhaseState, t: f64, n: usize) -> Result<PhaseState> {
    let d = s0.dim();
    let h = t / n as f64;
    let mut q = s0.q.clone();
    let mut p = s0.p.clone();
    let mut g = vec![0.0; d];
    let mut tmp = vec![0.0; d];
    let (mut kq1, mut kq2, mut kq3, mut kq4) = (vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    let (mut kp1, mut kp2, mut kp3, mut kp4) = (vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    for _ in 0..n {
        kq1.copy_from_slice(&p);
        target.gradient(&q, &mut g);
        for i in 0..d {
            kp1[i] = -g[i];
        }
        for i in 0..d {
            kq2[i] = p[i] + 0.5 * h * kp1[i];
            tmp[i] = q[i] + 0.5 * h * kq1[i];
        }
        target.gradient(&tmp, &mut g);
        for i in 0..d {
            kp2[i] = -g[i];
        }
        for i in 0..d {
            kq3[i] = p[i] + 0.5 * h * kp2[i];
            tmp[i] = q[i] + 0.5 * h * kq2[i];
        }
        target.gradient(&tmp, &mut g);
        for i in 0..d {
            kp3[i] = -g[i];
        }
        for i in 0..d {
            kq4[i] = p[i] + h * kp3[i];
            tmp[i] = q[i] + h * kq3[i];
        }
        target.gradient(&tmp, &mut g);
        for i in 0..d {
            kp4[i] = -g[i];
        }
        for i in 0..d {
            q[i] += h / 6.0 * (kq1[i] + 2.0 * kq2[i] + 2.0 * kq3[i] + kq4[i]);
            p[i] += h / 6.0 * (kp1[i] + 2.0 * kp2[i] + 2.0 * kp3[i] + kp4[i]);
        }
        if diverged(&q, &p) {
            return Err(HmcError::NoConvergence("continuous flow left the divergence bound".into()));
        }
    }
    Ok(PhaseState { q, p })
}

/// Largest number of RK4 steps tried before giving up.
pub const RK4_MAX_STEPS: usize = 1 << 22;

/// The exact Hamiltonian flow `(𝔮_t, 𝔭_t)` from `s0`, by RK4 with the step halved until
/// two successive refinements agree to `tol` in every coordinate.
pub fn continuous_reference<T: Target + ?Sized>(target: &T, s0: &PhaseState, t: f64, tol: f64) -> Result<PhaseState> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(HmcError::InvalidInput(format!("integration time must be nonnegative, got {t}")));
    }
    if !(tol > 0.0) {
        return Err(HmcError::InvalidInput(format!("tolerance must be positive, got {tol}")));
    }
    if s0.dim() != target.dim() {
        return Err(HmcError::InvalidInput("phase state dimension does not match target".into()));
    }
    if t == 0.0 {
        return Ok(s0.clone());
    }
    let l = target.smoothness();
    let mut n = if l.is_finite() && l > 0.0 {
        ((t * l.sqrt() * 4.0).ceil() as usize).max(4)
    } else {
        4
    };
    let mut prev = rk4_run(target, s0, t, n)?;
    while n < RK4_MAX_STEPS {
        n *= 2;
        let next = rk4_run(target, s0, t, n)?;
        let diff = prev
            .q
            .iter()
            .zip(&next.q)
            .chain(prev.p.iter().zip(&next.p))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if diff <= tol {
            return Ok(next);
        }
        prev = next;
    }
    Err(HmcError::NoConvergence(format!(
        "RK4 refinements still differ by more than {tol} at {RK4_MAX_STEPS} steps"
    )))
}
