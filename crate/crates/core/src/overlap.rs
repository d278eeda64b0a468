//! Proposal densities via the inverse momentum map, and Monte Carlo KL divergence
//! between the proposals launched from two nearby positions.
//!
//! For a fixed start `q₀` the proposal position is `y = 𝔽_K(q₀, p)` with `p ~ 𝒩(0, 𝕀)`.
//! When `Kη√L ≤ ¼` the map `p ↦ y` is invertible with inverse `𝔾(q₀, ·)`, so the
//! proposal has density `ρ_{q₀}(y) = φ(𝔾(q₀, y)) / det 𝐃₂𝔽_K(q₀, 𝔾(q₀, y))`.

use crate::error::{HmcError, Result};
use crate::leapfrog::{forward_endpoint, momentum_jacobian};
use crate::linalg;
use crate::rng::{blocks, fill_standard_normal, stream_rng};
use crate::stats::RunningStats;
use crate::target::Target;
use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Newton iteration cap for [`inverse_map`].
pub const NEWTON_MAX_ITERS: usize = 50;

/// Residual tolerance used internally by density and KL evaluation.
pub const NEWTON_TOL: f64 = 1e-12;

const KL_BLOCK: usize = 1024;
const MIN_DAMPING: f64 = 1.0 / 1024.0;

fn check_inputs<T: Target + ?Sized>(target: &T, q0: &[f64], y: &[f64], k: usize, eta: f64) -> Result<()> {
    let d = target.dim();
    if q0.len() != d || y.len() != d {
        return Err(HmcError::InvalidInput(format!("inputs must have dimension {d}")));
    }
    if k == 0 || !(eta > 0.0 && eta.is_finite()) {
        return Err(HmcError::InvalidInput(format!("need K >= 1 and eta > 0, got K={k}, eta={eta}")));
    }
    Ok(())
}

/// The momentum `p` with `𝔽_K(q₀, p) = y` up to `tol`, by damped Newton iteration
/// from `p = (y − q₀)/(Kη)`.
pub fn inverse_map<T: Target + ?Sized>(
    target: &T,
    q0: &[f64],
    y: &[f64],
    k: usize,
    eta: f64,
    tol: f64,
) -> Result<Vec<f64>> {
    check_inputs(target, q0, y, k, eta)?;
    if !(tol > 0.0) {
        return Err(HmcError::InvalidInput(format!("tolerance must be positive, got {tol}")));
    }
    let keta = k as f64 * eta;
    let mut p: Vec<f64> = y.iter().zip(q0).map(|(a, b)| (a - b) / keta).collect();
    let residual = |p: &[f64]| -> Result<(Vec<f64>, f64)> {
        let end = forward_endpoint(target, q0, p, k, eta)?;
        let r = linalg::sub(&end.q, y);
        let n = linalg::norm(&r);
        Ok((r, n))
    };
    let (mut r, mut rn) = residual(&p)?;
    for _ in 0..NEWTON_MAX_ITERS {
        if rn <= tol {
            return Ok(p);
        }
        let jac = momentum_jacobian(target, q0, &p, k, eta)?;
        let delta = jac
            .lu()
            .solve(&DVector::from_column_slice(&r))
            .ok_or_else(|| HmcError::SingularJacobian("Newton system for the inverse map".into()))?;
        let mut damping = 1.0;
        loop {
            let cand: Vec<f64> = p.iter().zip(delta.iter()).map(|(a, b)| a - damping * b).collect();
            let attempt = match residual(&cand) {
                Ok(v) => Some(v),
                Err(HmcError::DivergedTrajectory { .. }) => None,
                Err(e) => return Err(e),
            };
            match attempt {
                Some((rc, rcn)) if rcn < rn || damping <= MIN_DAMPING => {
                    p = cand;
                    r = rc;
                    rn = rcn;
                    break;
                }
                None if damping <= MIN_DAMPING => {
                    return Err(HmcError::NoConvergence("Newton step diverged even when damped".into()))
                }
                _ => damping *= 0.5,
            }
        }
    }
    if rn <= tol {
        return Ok(p);
    }
    Err(HmcError::NoConvergence(format!(
        "inverse map residual {rn:e} above {tol:e} after {NEWTON_MAX_ITERS} Newton steps"
    )))
}

/// `log det 𝐃₂𝔽_K(q₀, p)`; a nonpositive determinant is reported as singular.
pub fn log_det_momentum_jacobian<T: Target + ?Sized>(
    target: &T,
    q0: &[f64],
    p: &[f64],
    k: usize,
    eta: f64,
) -> Result<f64> {
    let jac = momentum_jacobian(target, q0, p, k, eta)?;
    let (sign, logdet) = linalg::log_abs_det(&jac);
    if sign <= 0.0 || !logdet.is_finite() {
        return Err(HmcError::SingularJacobian(format!(
            "momentum Jacobian has determinant sign {sign}"
        )));
    }
    Ok(logdet)
}

fn log_std_normal(p: &[f64]) -> f64 {
    -0.5 * p.len() as f64 * (2.0 * std::f64::consts::PI).ln() - 0.5 * linalg::norm_sq(p)
}

/// `log ρ_{q₀}(y) = log φ(𝔾(q₀, y)) − log det 𝐃₂𝔽_K(q₀, 𝔾(q₀, y))`.
pub fn proposal_log_density<T: Target + ?Sized>(target: &T, q0: &[f64], y: &[f64], k: usize, eta: f64) -> Result<f64> {
    let tol = NEWTON_TOL * linalg::norm(y).max(1.0);
    let p = inverse_map(target, q0, y, k, eta, tol)?;
    Ok(log_std_normal(&p) - log_det_momentum_jacobian(target, q0, &p, k, eta)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub n_mc: usize,
}

impl KlEstimate {
    pub fn pinsker_tv(&self) -> f64 {
        pinsker_tv(self.estimate)
    }
}

/// One draw of the KL integrand for momentum `p`.
fn kl_integrand<T: Target + ?Sized>(
    target: &T,
    q0: &[f64],
    q0t: &[f64],
    p: &[f64],
    k: usize,
    eta: f64,
) -> Result<f64> {
    let y = forward_endpoint(target, q0, p, k, eta)?.q;
    let tol = NEWTON_TOL * linalg::norm(&y).max(1.0);
    let pt = inverse_map(target, q0t, &y, k, eta, tol)?;
    let ld = log_det_momentum_jacobian(target, q0, p, k, eta)?;
    let ldt = log_det_momentum_jacobian(target, q0t, &pt, k, eta)?;
    Ok(0.5 * (linalg::norm_sq(&pt) - linalg::norm_sq(p)) - ld + ldt)
}

/// Monte Carlo estimate of `KL(ρ_{q₀} ‖ ρ_{q̃₀})` over `p ~ 𝒩(0, 𝕀)`.
///
/// Draws come in blocks of 1024 with block `b` on stream `(seed, b)`; the same momenta
/// are used for any pair of starts given the same seed. Identical starts return exactly 0.
pub fn kl_between_proposals<T: Target + ?Sized>(
    target: &T,
    q0: &[f64],
    q0t: &[f64],
    k: usize,
    eta: f64,
    n_mc: usize,
    seed: u64,
) -> Result<KlEstimate> {
    check_inputs(target, q0, q0t, k, eta)?;
    if n_mc < 2 {
        return Err(HmcError::InvalidInput("need at least two Monte Carlo draws".into()));
    }
    if q0 == q0t {
        return Ok(KlEstimate {
            estimate: 0.0,
            std_error: 0.0,
            n_mc,
        });
    }
    let d = target.dim();
    let parts: Vec<Result<RunningStats>> = blocks(n_mc, KL_BLOCK)
        .into_par_iter()
        .map(|(b, len)| {
            let mut rng = stream_rng(seed, b);
            let mut p = vec![0.0; d];
            let mut stats = RunningStats::new();
            for _ in 0..len {
                fill_standard_normal(&mut rng, &mut p);
                stats.push(kl_integrand(target, q0, q0t, &p, k, eta)?);
            }
            Ok(stats)
        })
        .collect();
    let mut total = RunningStats::new();
    for part in parts {
        total.merge(&part?);
    }
    Ok(KlEstimate {
        estimate: total.mean,
        std_error: total.std_error(),
        n_mc,
    })
}

/// `√(KL/2)`, negative estimates clamped to 0.
pub fn pinsker_tv(kl: f64) -> f64 {
    (kl.max(0.0) / 2.0).sqrt()
}

/// `1/64 + ¼K⁶η⁶γ²L³`, valid for `‖q₀ − q̃₀‖ ≤ Kη/64`.
pub fn kl_lemma_bound(k: usize, eta: f64, gamma: f64, l: f64) -> f64 {
    1.0 / 64.0 + 0.25 * (k as f64 * eta).powi(6) * gamma * gamma * l.powi(3)
}

/// `¼ + 4K⁶η⁶γ²L³`, the looser form for `‖q₀ − q̃₀‖ ≤ Kη/4`.
pub fn kl_proof_bound(k: usize, eta: f64, gamma: f64, l: f64) -> f64 {
    0.25 + 4.0 * (k as f64 * eta).powi(6) * gamma * gamma * l.powi(3)
}

/// `n` proposal positions from `q₀`; draw `i` uses stream `(seed, i / 1024)`.
pub fn sample_proposals<T: Target + ?Sized>(
    target: &T,
    q0: &[f64],
    k: usize,
    eta: f64,
    n: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let d = target.dim();
    let parts: Vec<Result<Vec<Vec<f64>>>> = blocks(n, KL_BLOCK)
        .into_par_iter()
        .map(|(b, len)| {
            let mut rng = stream_rng(seed, b);
            let mut p = vec![0.0; d];
            (0..len)
                .map(|_| {
                    fill_standard_normal(&mut rng, &mut p);
                    Ok(forward_endpoint(target, q0, &p, k, eta)?.q)
                })
                .collect()
        })
        .collect();
    let mut out = Vec::with_capacity(n);
    for part in parts {
        out.extend(part?);
    }
    Ok(out)
}
