//! Monte Carlo estimates of the moments that drive the acceptance-rate analysis,
//! reported next to their theoretical bounds.
//!
//! Bounds that carry no unspecified constant (gradient norm, `pᵀ∇²f p`, and the
//! discrete-versus-continuous position gap) are hard: a report is violated when
//! `empirical > bound·(1 + 3·relative std error)`. The others are stated up to a
//! universal constant; their reports use constant 1 and expose `implied_constant`.

use crate::error::{precondition, HmcError, Result};
use crate::kernel::{run_chain_with, ChainOptions, HmcConfig};
use crate::leapfrog::{continuous_reference, leapfrog_step, PhaseState};
use crate::linalg;
use crate::rng::{blocks, derive_seed, fill_standard_normal, stream_rng, StreamRng};
use crate::stats::LogMoment;
use crate::target::{GaussianTarget, Target};
use crate::tensor::{norm_12_3, norm_frobenius_123, third_derivative_tensor};
use crate::tuning::{d_ell, upsilon_ell};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

const BLOCK: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub quantity: String,
    pub ell: usize,
    /// `[E|X|^ℓ]^{1/ℓ}` (or the `2ℓ` analogue for vector norms, see `quantity`).
    pub empirical: f64,
    pub std_error: f64,
    /// Bound including `constant`.
    pub bound: f64,
    pub constant: f64,
    /// `bound / empirical`
    pub slack_ratio: f64,
    /// `empirical / (bound / constant)`: the constant the data calls for.
    pub implied_constant: f64,
    pub n_samples: usize,
    /// Whether the bound is free of unspecified constants.
    pub hard: bool,
    pub violated: bool,
}

impl MomentReport {
    fn new(quantity: &str, ell: usize, m: &LogMoment, bound_no_const: f64, constant: f64, hard: bool) -> Self {
        let empirical = m.norm();
        let std_error = m.norm_std_error();
        let bound = bound_no_const * constant;
        let rel = if empirical > 0.0 { std_error / empirical } else { 0.0 };
        Self {
            quantity: quantity.to_string(),
            ell,
            empirical,
            std_error,
            bound,
            constant,
            slack_ratio: if empirical > 0.0 { bound / empirical } else { f64::INFINITY },
            implied_constant: if bound_no_const > 0.0 {
                empirical / bound_no_const
            } else if empirical == 0.0 {
                0.0
            } else {
                f64::INFINITY
            },
            n_samples: m.n as usize,
            hard,
            violated: empirical > bound * (1.0 + 3.0 * rel),
        }
    }
}

/// Source of (approximately) stationary draws `q ~ e^{−f}`.
///
/// Draws are produced in blocks; block `b` of a run seeded with `seed` must depend
/// only on `(seed, b)` so results do not depend on the thread count.
pub trait StationarySampler: Sync {
    fn dim(&self) -> usize;
    fn draw_block(&self, seed: u64, block: u64, n: usize) -> Result<Vec<Vec<f64>>>;
    /// Whether draws are exact rather than approximate.
    fn is_exact(&self) -> bool;
}

/// Exact draws for Gaussian targets.
pub struct ExactGaussianSampler<'a> {
    pub target: &'a GaussianTarget,
}

impl StationarySampler for ExactGaussianSampler<'_> {
    fn dim(&self) -> usize {
        self.target.dim()
    }

    fn draw_block(&self, seed: u64, block: u64, n: usize) -> Result<Vec<Vec<f64>>> {
        let mut rng = stream_rng(seed, block);
        Ok((0..n).map(|_| self.target.sample(&mut rng)).collect())
    }

    fn is_exact(&self) -> bool {
        true
    }
}

/// Every draw equals a fixed point; used for checks at a given `x`.
pub struct PointMass(pub Vec<f64>);

impl StationarySampler for PointMass {
    fn dim(&self) -> usize {
        self.0.len()
    }

    fn draw_block(&self, _seed: u64, _block: u64, n: usize) -> Result<Vec<Vec<f64>>> {
        Ok(vec![self.0.clone(); n])
    }

    fn is_exact(&self) -> bool {
        true
    }
}

/// Approximate draws from a long HMC chain.
///
/// One warmup chain of `warmup` steps fixes a common starting state. Each block then
/// runs its own chain from that state on its own stream, discards `burn` steps and
/// keeps every `thin`-th position. Draws inside a block are correlated, so standard
/// errors computed as if independent are optimistic.
pub struct WarmChainSampler<'a, T: Target + ?Sized> {
    target: &'a T,
    config: HmcConfig,
    warm_state: Vec<f64>,
    burn: usize,
    thin: usize,
}

impl<'a, T: Target + ?Sized> WarmChainSampler<'a, T> {
    pub fn new(
        target: &'a T,
        config: HmcConfig,
        q0: &[f64],
        warmup: usize,
        burn: usize,
        thin: usize,
    ) -> Result<Self> {
        precondition(thin >= 1, || "thinning must be at least 1".into())?;
        let warm_state = run_chain_with(
            target,
            &config,
            q0,
            warmup.max(1),
            ChainOptions { thin: 0, stream: u64::MAX },
            |_, _, _| {},
        )?
        .final_position;
        Ok(Self {
            target,
            config,
            warm_state,
            burn,
            thin,
        })
    }

    pub fn warm_state(&self) -> &[f64] {
        &self.warm_state
    }
}

impl<T: Target + ?Sized> StationarySampler for WarmChainSampler<'_, T> {
    fn dim(&self) -> usize {
        self.target.dim()
    }

    fn draw_block(&self, seed: u64, block: u64, n: usize) -> Result<Vec<Vec<f64>>> {
        let cfg = self.config.with_seed(seed);
        let trace = run_chain_with(
            self.target,
            &cfg,
            &self.warm_state,
            self.burn + n * self.thin,
            ChainOptions { thin: self.thin, stream: block },
            |_, _, _| {},
        )?;
        let skip = self.burn / self.thin;
        Ok(trace.positions.into_iter().skip(skip).take(n).collect())
    }

    fn is_exact(&self) -> bool {
        false
    }
}

/// Runs `n_mc` evaluations of `f(q, rng)` with `q` from the sampler and `rng` a
/// per-block momentum stream, accumulating `|f_i|^{powers[i]}`.
fn accumulate<S, F>(sampler: &S, n_mc: usize, seed: u64, powers: &[u32], f: F) -> Result<Vec<LogMoment>>
where
    S: StationarySampler + ?Sized,
    F: Fn(&[f64], &mut StreamRng) -> Result<Vec<f64>> + Sync,
{
    precondition(n_mc >= 2, || "need at least two Monte Carlo samples".into())?;
    let q_seed = derive_seed(seed, 0x51);
    let parts: Vec<Result<Vec<LogMoment>>> = blocks(n_mc, BLOCK)
        .into_par_iter()
        .map(|(b, len)| {
            let qs = sampler.draw_block(q_seed, b, len)?;
            let mut rng = stream_rng(seed, b);
            let mut acc: Vec<LogMoment> = powers.iter().map(|&p| LogMoment::new(p)).collect();
            for q in &qs {
                let vals = f(q, &mut rng)?;
                for (a, v) in acc.iter_mut().zip(vals) {
                    a.push(v);
                }
            }
            Ok(acc)
        })
        .collect();
    let mut total: Vec<LogMoment> = powers.iter().map(|&p| LogMoment::new(p)).collect();
    for part in parts {
        for (t, p) in total.iter_mut().zip(part?) {
            t.merge(&p);
        }
    }
    Ok(total)
}

fn ell_u32(ell: usize) -> Result<u32> {
    precondition(ell >= 1, || "moment order must be at least 1".into())?;
    u32::try_from(ell).map_err(|_| HmcError::InvalidInput("moment order too large".into()))
}

fn check_sampler<T: Target + ?Sized, S: StationarySampler + ?Sized>(target: &T, sampler: &S) -> Result<()> {
    if sampler.dim() != target.dim() {
        return Err(HmcError::InvalidInput("sampler and target dimensions differ".into()));
    }
    Ok(())
}

/// Declared trace bound, or `L·d` when none is declared.
pub fn trace_bound_or_default<T: Target + ?Sized>(target: &T) -> f64 {
    target
        .trace_bound()
        .unwrap_or(target.smoothness() * target.dim() as f64)
}

fn gamma_of<T: Target + ?Sized>(target: &T) -> Result<f64> {
    target.hessian_lipschitz().ok_or_else(|| {
        HmcError::Precondition(format!(
            "target '{}' declares no Hessian-Lipschitz coefficient; estimate one first",
            target.name()
        ))
    })
}

/// `[E‖∇f(q)‖^{2ℓ}]^{1/ℓ}` against `Υ_ℓ`.
pub fn check_grad_norm_moment<T, S>(target: &T, ell: usize, n_mc: usize, sampler: &S, seed: u64) -> Result<MomentReport>
where
    T: Target + ?Sized,
    S: StationarySampler + ?Sized,
{
    let e = ell_u32(ell)?;
    check_sampler(target, sampler)?;
    let d = target.dim();
    let m = accumulate(sampler, n_mc, seed, &[e], |q, _| {
        let mut g = vec![0.0; d];
        target.gradient(q, &mut g);
        Ok(vec![linalg::norm_sq(&g)])
    })?;
    let bound = upsilon_ell(trace_bound_or_default(target), target.smoothness(), ell);
    Ok(MomentReport::new("grad_norm_sq", ell, &m[0], bound, 1.0, true))
}

/// `[E(pᵀ∇²f_x p)^ℓ]^{1/ℓ}` over `p ~ 𝒩(0, 𝕀)` against `Υ_ℓ`.
pub fn check_php_moment<T: Target + ?Sized>(target: &T, x: &[f64], ell: usize, n_mc: usize, seed: u64) -> Result<MomentReport> {
    let e = ell_u32(ell)?;
    if !target.supports_hessian() {
        return Err(crate::target::unsupported(target.name(), "Hessian-vector products"));
    }
    let d = target.dim();
    let point = PointMass(x.to_vec());
    check_sampler(target, &point)?;
    let m = accumulate(&point, n_mc, seed, &[e], |q, rng| {
        let mut p = vec![0.0; d];
        fill_standard_normal(rng, &mut p);
        let mut hp = vec![0.0; d];
        target.hessian_vec(q, &p, &mut hp)?;
        Ok(vec![linalg::dot(&p, &hp)])
    })?;
    let bound = upsilon_ell(trace_bound_or_default(target), target.smoothness(), ell);
    Ok(MomentReport::new("php", ell, &m[0], bound, 1.0, true))
}

/// `[E(∇f(q)ᵀ∇²f_q p)^ℓ]^{1/ℓ}` for even `ℓ` against `ℓ^{1/2} L Υ_ℓ^{1/2}`.
pub fn check_gradhp_moment<T, S>(target: &T, ell: usize, n_mc: usize, sampler: &S, seed: u64) -> Result<MomentReport>
where
    T: Target + ?Sized,
    S: StationarySampler + ?Sized,
{
    precondition(ell >= 2 && ell.is_multiple_of(2), || format!("moment order must be even, got {ell}"))?;
    let e = ell_u32(ell)?;
    if !target.supports_hessian() {
        return Err(crate::target::unsupported(target.name(), "Hessian-vector products"));
    }
    check_sampler(target, sampler)?;
    let d = target.dim();
    let m = accumulate(sampler, n_mc, seed, &[e], |q, rng| {
        let mut p = vec![0.0; d];
        fill_standard_normal(rng, &mut p);
        let mut g = vec![0.0; d];
        target.gradient(q, &mut g);
        let mut hp = vec![0.0; d];
        target.hessian_vec(q, &p, &mut hp)?;
        Ok(vec![linalg::dot(&g, &hp)])
    })?;
    let l = target.smoothness();
    let ups = upsilon_ell(trace_bound_or_default(target), l, ell);
    let bound = (ell as f64).sqrt() * l * ups.sqrt();
    Ok(MomentReport::new("grad_h_p", ell, &m[0], bound, 1.0, false))
}

/// Gaussian-chaos moments of the third derivative at `x`:
/// `[E(∇³f_x[p,p,p])^ℓ]^{1/ℓ}` against `c(ℓ^{3/2}‖·‖_{123} + ℓ^{1/2}d^{1/2}‖·‖_{12}{3})`, and
/// `[E‖∇³f_x[p,p,·]‖^{2ℓ}]^{1/ℓ}` against `c(ℓ²‖·‖²_{123} + ℓ²d‖·‖²_{12}{3})`.
pub fn check_chaos_moments<T: Target + ?Sized>(
    target: &T,
    x: &[f64],
    ell: usize,
    n_mc: usize,
    constant: f64,
    seed: u64,
) -> Result<(MomentReport, MomentReport)> {
    let e = ell_u32(ell)?;
    if !target.supports_third() {
        return Err(crate::target::unsupported(target.name(), "third-derivative contractions"));
    }
    let d = target.dim();
    let tensor = third_derivative_tensor(target, x)?;
    let n123 = norm_frobenius_123(&tensor);
    let n12_3 = norm_12_3(&tensor);
    let point = PointMass(x.to_vec());
    let m = accumulate(&point, n_mc, seed, &[e, e], |q, rng| {
        let mut p = vec![0.0; d];
        fill_standard_normal(rng, &mut p);
        let mut v = vec![0.0; d];
        target.third_contract(q, &p, &p, &mut v)?;
        Ok(vec![linalg::dot(&v, &p), linalg::norm_sq(&v)])
    })?;
    let lf = ell as f64;
    let df = d as f64;
    let b1 = lf.powf(1.5) * n123 + lf.sqrt() * df.sqrt() * n12_3;
    let b2 = lf * lf * n123 * n123 + lf * lf * df * n12_3 * n12_3;
    Ok((
        MomentReport::new("third_ppp", ell, &m[0], b1, constant, false),
        MomentReport::new("third_pp_norm_sq", ell, &m[1], b2, constant, false),
    ))
}

/// Differences between the continuous flow at time `t` and its start, and between
/// the flow and a single leapfrog step of size `t`, from one `(q₀, p₀)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsDiff {
    /// `𝔭_tᵀ∇²f(𝔮_t)𝔭_t − p₀ᵀ∇²f(q₀)p₀`
    pub php_drift: f64,
    /// `∇²f(𝔮_t)𝔭_t − ∇²f(q₀)p₀`
    pub hp_drift: Vec<f64>,
    /// `𝔮_t − q_t`
    pub position_gap: Vec<f64>,
}

pub fn dynamics_diff<T: Target + ?Sized>(target: &T, s0: &PhaseState, t: f64, tol: f64) -> Result<DynamicsDiff> {
    let d = target.dim();
    if t == 0.0 {
        return Ok(DynamicsDiff {
            php_drift: 0.0,
            hp_drift: vec![0.0; d],
            position_gap: vec![0.0; d],
        });
    }
    let flow = continuous_reference(target, s0, t, tol)?;
    let step = leapfrog_step(target, s0, t)?;
    let mut h0 = vec![0.0; d];
    let mut ht = vec![0.0; d];
    target.hessian_vec(&s0.q, &s0.p, &mut h0)?;
    target.hessian_vec(&flow.q, &flow.p, &mut ht)?;
    Ok(DynamicsDiff {
        php_drift: linalg::dot(&flow.p, &ht) - linalg::dot(&s0.p, &h0),
        hp_drift: linalg::sub(&ht, &h0),
        position_gap: linalg::sub(&flow.q, &step.q),
    })
}

/// Three reports over `(q₀, p₀) ~ μ × 𝒩(0, 𝕀)`:
/// (i) `[E(php drift)^ℓ]^{1/ℓ}` against `t(γ+1)ℓ^{3/2}L^{3/2}d_ℓ^{1/2}`;
/// (ii) `[E‖hp drift‖^{2ℓ}]^{1/(2ℓ)}` against `t(γ+1)ℓ^{1/2}L^{3/2}d_ℓ^{1/2}`;
/// (iii) `[E‖𝔮_t − q_t‖^{2ℓ}]^{1/(2ℓ)}` against `t³L^{1/2}Υ_ℓ^{1/2}` (hard).
#[allow(clippy::too_many_arguments)]
pub fn check_dynamics_diffs<T, S>(
    target: &T,
    t: f64,
    ell: usize,
    n_mc: usize,
    sampler: &S,
    tol: f64,
    constant: f64,
    seed: u64,
) -> Result<[MomentReport; 3]>
where
    T: Target + ?Sized,
    S: StationarySampler + ?Sized,
{
    let e = ell_u32(ell)?;
    precondition(t >= 0.0 && t.is_finite(), || format!("time must be nonnegative, got {t}"))?;
    if !target.supports_hessian() {
        return Err(crate::target::unsupported(target.name(), "Hessian-vector products"));
    }
    check_sampler(target, sampler)?;
    let gamma = gamma_of(target)?;
    let d = target.dim();
    let m = accumulate(sampler, n_mc, seed, &[e, 2 * e, 2 * e], |q, rng| {
        let mut p = vec![0.0; d];
        fill_standard_normal(rng, &mut p);
        let diff = dynamics_diff(target, &PhaseState { q: q.to_vec(), p }, t, tol)?;
        Ok(vec![diff.php_drift, linalg::norm(&diff.hp_drift), linalg::norm(&diff.position_gap)])
    })?;
    let l = target.smoothness();
    let lf = ell as f64;
    let dl = d_ell(d, ell) as f64;
    let b1 = t * (gamma + 1.0) * lf.powf(1.5) * l.powf(1.5) * dl.sqrt();
    let b2 = t * (gamma + 1.0) * lf.sqrt() * l.powf(1.5) * dl.sqrt();
    let b3 = t.powi(3) * l.sqrt() * upsilon_ell(trace_bound_or_default(target), l, ell).sqrt();
    Ok([
        MomentReport::new("php_drift", ell, &m[0], b1, constant, false),
        MomentReport::new("hp_drift", ell, &m[1], b2, constant, false),
        MomentReport::new("position_gap", ell, &m[2], b3, 1.0, true),
    ])
}

/// `(γ+1)(η³ℓ^{3/2}L^{3/2}d_ℓ^{1/2} + η⁵ℓ^{1/2}L^{5/2}d_ℓ + η⁷L^{7/2}d_ℓ^{3/2})`
pub fn energy_error_bound(eta: f64, ell: usize, l: f64, gamma: f64, dim: usize) -> f64 {
    let lf = ell as f64;
    let dl = d_ell(dim, ell) as f64;
    let x = eta * l.sqrt();
    (gamma + 1.0) * (x.powi(3) * lf.powf(1.5) * dl.sqrt() + x.powi(5) * lf.sqrt() * dl + x.powi(7) * dl.powf(1.5))
}

/// `[E(ΔH)^ℓ]^{1/ℓ}` for one leapfrog step of size `η` from `(q₀, p₀) ~ μ × 𝒩(0, 𝕀)`.
pub fn energy_error_moment<T, S>(
    target: &T,
    eta: f64,
    ell: usize,
    n_mc: usize,
    sampler: &S,
    constant: f64,
    seed: u64,
) -> Result<MomentReport>
where
    T: Target + ?Sized,
    S: StationarySampler + ?Sized,
{
    energy_error_moment_k(target, eta, 1, ell, n_mc, sampler, constant, seed)
}

/// As [`energy_error_moment`] for the total `ΔH` of a `K`-step trajectory, which is the
/// sum of the per-step errors. The bound reported is `K` times the single-step bound.
#[allow(clippy::too_many_arguments)]
pub fn energy_error_moment_k<T, S>(
    target: &T,
    eta: f64,
    k: usize,
    ell: usize,
    n_mc: usize,
    sampler: &S,
    constant: f64,
    seed: u64,
) -> Result<MomentReport>
where
    T: Target + ?Sized,
    S: StationarySampler + ?Sized,
{
    precondition(ell >= 2 && ell.is_multiple_of(2), || format!("moment order must be even, got {ell}"))?;
    precondition(k >= 1, || "need at least one leapfrog step".into())?;
    let e = ell_u32(ell)?;
    check_sampler(target, sampler)?;
    let gamma = gamma_of(target)?;
    let d = target.dim();
    let m = accumulate(sampler, n_mc, seed, &[e], |q, rng| {
        let mut p = vec![0.0; d];
        fill_standard_normal(rng, &mut p);
        let h0 = target.potential(q) + 0.5 * linalg::norm_sq(&p);
        let end = crate::leapfrog::forward_endpoint(target, q, &p, k, eta)?;
        let h1 = target.potential(&end.q) + 0.5 * linalg::norm_sq(&end.p);
        Ok(vec![h0 - h1])
    })?;
    let bound = k as f64 * energy_error_bound(eta, ell, target.smoothness(), gamma, d);
    let name = if k == 1 { "energy_error" } else { "energy_error_trajectory" };
    Ok(MomentReport::new(name, ell, &m[0], bound, constant, false))
}

/// `(E(χ²_d)^ℓ)^{1/ℓ} = (Π_{j<ℓ}(d + 2j))^{1/ℓ}`
pub fn chi_square_moment_norm(d: usize, ell: usize) -> f64 {
    let log: f64 = (0..ell).map(|j| ((d + 2 * j) as f64).ln()).sum();
    (log / ell as f64).exp()
}
