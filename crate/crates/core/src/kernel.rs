//! The Metropolized HMC kernel, its lazy variant and chain drivers.
//!
//! Sign convention: `ΔH = −ℋ(proposal) + ℋ(start)`, so a positive `ΔH` means the
//! energy went down and the proposal is accepted with probability `min{1, e^{ΔH}}`.

use crate::error::{precondition, HmcError, Result};
use crate::leapfrog::{step_in_place, PhaseState, DIVERGENCE_NORM};
use crate::linalg;
use crate::rng::{fill_standard_normal, stream_rng, StreamRng};
use crate::target::Target;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HmcConfig {
    pub step_size: f64,
    pub n_leapfrog: usize,
    #[serde(default)]
    pub lazy: bool,
    #[serde(default)]
    pub seed: u64,
}

impl HmcConfig {
    pub fn new(step_size: f64, n_leapfrog: usize) -> Self {
        Self {
            step_size,
            n_leapfrog,
            lazy: false,
            seed: 0,
        }
    }

    /// MALA is the single-leapfrog case.
    pub fn mala(step_size: f64) -> Self {
        Self::new(step_size, 1)
    }

    pub fn with_lazy(mut self, lazy: bool) -> Self {
        self.lazy = lazy;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(HmcError::InvalidInput(format!(
                "step size must be positive, got {}",
                self.step_size
            )));
        }
        if self.n_leapfrog == 0 {
            return Err(HmcError::InvalidInput("number of leapfrog steps must be at least 1".into()));
        }
        Ok(())
    }

    /// Gradient evaluations per non-lazy proposal.
    pub fn grads_per_proposal(&self) -> u64 {
        self.n_leapfrog as u64 + 1
    }
}

/// `ℋ(q, p) = f(q) + ½‖p‖²`
pub fn hamiltonian<T: Target + ?Sized>(target: &T, s: &PhaseState) -> f64 {
    target.potential(&s.q) + 0.5 * linalg::norm_sq(&s.p)
}

/// `min{1, exp(ΔH)}`; NaN counts as a rejection.
pub fn acceptance_prob(delta_h: f64) -> f64 {
    if delta_h.is_nan() {
        0.0
    } else if delta_h >= 0.0 {
        1.0
    } else {
        delta_h.exp()
    }
}

/// What happened in one transition.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepInfo {
    pub accepted: bool,
    /// `NaN` for lazy holds and diverged trajectories.
    pub delta_h: f64,
    pub accept_prob: f64,
    pub lazy_hold: bool,
    pub diverged: bool,
    pub nan_energy: bool,
}

/// Reusable buffers for repeated transitions on one target.
pub struct HmcKernel<'a, T: Target + ?Sized> {
    target: &'a T,
    config: HmcConfig,
    q: Vec<f64>,
    p: Vec<f64>,
    p0: Vec<f64>,
    grad: Vec<f64>,
}

impl<'a, T: Target + ?Sized> HmcKernel<'a, T> {
    pub fn new(target: &'a T, config: HmcConfig) -> Result<Self> {
        config.validate()?;
        let d = target.dim();
        Ok(Self {
            target,
            config,
            q: vec![0.0; d],
            p: vec![0.0; d],
            p0: vec![0.0; d],
            grad: vec![0.0; d],
        })
    }

    pub fn config(&self) -> &HmcConfig {
        &self.config
    }

    /// Proposal from `q0` with the momentum `p0`, returning `(q_K, ΔH)` or `None` if
    /// the trajectory diverged.
    pub fn propose(&mut self, q0: &[f64], p0: &[f64]) -> Option<(&[f64], f64)> {
        let eta = self.config.step_size;
        let h0 = self.target.potential(q0) + 0.5 * linalg::norm_sq(p0);
        self.q.copy_from_slice(q0);
        self.p.copy_from_slice(p0);
        self.target.gradient(&self.q, &mut self.grad);
        for _ in 0..self.config.n_leapfrog {
            step_in_place(self.target, &mut self.q, &mut self.p, &mut self.grad, eta);
            let nq = linalg::norm(&self.q);
            let np = linalg::norm(&self.p);
            if !(nq <= DIVERGENCE_NORM && np <= DIVERGENCE_NORM) {
                return None;
            }
        }
        let h1 = self.target.potential(&self.q) + 0.5 * linalg::norm_sq(&self.p);
        Some((&self.q, h0 - h1))
    }

    /// One transition, updating `q` in place.
    pub fn step<R: Rng + ?Sized>(&mut self, q: &mut [f64], rng: &mut R) -> StepInfo {
        if self.config.lazy && rng.random::<bool>() {
            return StepInfo {
                delta_h: f64::NAN,
                lazy_hold: true,
                ..StepInfo::default()
            };
        }
        let mut p0 = std::mem::take(&mut self.p0);
        fill_standard_normal(rng, &mut p0);
        let outcome = self.propose(q, &p0).map(|(_, dh)| dh);
        self.p0 = p0;
        let u: f64 = rng.random();
        match outcome {
            None => StepInfo {
                delta_h: f64::NAN,
                diverged: true,
                ..StepInfo::default()
            },
            Some(dh) => {
                let a = acceptance_prob(dh);
                let accepted = u < a;
                if accepted {
                    q.copy_from_slice(&self.q);
                }
                StepInfo {
                    accepted,
                    delta_h: dh,
                    accept_prob: a,
                    nan_energy: dh.is_nan(),
                    ..StepInfo::default()
                }
            }
        }
    }
}

/// Result of [`hmc_transition`].
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionOutcome {
    pub q: Vec<f64>,
    pub info: StepInfo,
}

/// One Metropolized HMC transition from `q`.
pub fn hmc_transition<T: Target + ?Sized, R: Rng + ?Sized>(
    target: &T,
    config: &HmcConfig,
    q: &[f64],
    rng: &mut R,
) -> Result<TransitionOutcome> {
    check_start(target, q)?;
    let mut kernel = HmcKernel::new(target, *config)?;
    let mut q = q.to_vec();
    let info = kernel.step(&mut q, rng);
    Ok(TransitionOutcome { q, info })
}

fn check_start<T: Target + ?Sized>(target: &T, q: &[f64]) -> Result<()> {
    if q.len() != target.dim() {
        return Err(HmcError::InvalidInput(format!(
            "start has dimension {} but target has {}",
            q.len(),
            target.dim()
        )));
    }
    if !linalg::all_finite(q) {
        return Err(HmcError::InvalidInput("start position must be finite".into()));
    }
    Ok(())
}

/// Record of a chain run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ChainTrace {
    /// Positions after every `thin`-th step (step indices `thin, 2·thin, …`).
    pub positions: Vec<Vec<f64>>,
    pub accepted: Vec<bool>,
    pub lazy_hold: Vec<bool>,
    /// `ΔH` per step; `NaN` for lazy holds and diverged proposals.
    pub delta_h: Vec<f64>,
    pub gradient_evals: u64,
    pub divergences: u64,
    pub nan_energies: u64,
    pub final_position: Vec<f64>,
}

impl ChainTrace {
    pub fn n_steps(&self) -> usize {
        self.accepted.len()
    }

    pub fn n_proposals(&self) -> usize {
        self.lazy_hold.iter().filter(|&&l| !l).count()
    }

    /// Fraction of accepted proposals; lazy holds are not proposals.
    pub fn acceptance_rate(&self) -> f64 {
        let n = self.n_proposals();
        if n == 0 {
            return f64::NAN;
        }
        let acc = self
            .accepted
            .iter()
            .zip(&self.lazy_hold)
            .filter(|(&a, &l)| a && !l)
            .count();
        acc as f64 / n as f64
    }

    pub fn lazy_fraction(&self) -> f64 {
        self.lazy_hold.iter().filter(|&&l| l).count() as f64 / self.n_steps() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainOptions {
    /// Keep every `thin`-th position; 0 keeps none.
    pub thin: usize,
    /// RNG stream of the chain.
    pub stream: u64,
}

impl Default for ChainOptions {
    fn default() -> Self {
        Self { thin: 1, stream: 0 }
    }
}

/// `n_steps` transitions from `q0` on stream `(config.seed, 0)`.
pub fn run_chain<T: Target + ?Sized>(target: &T, config: &HmcConfig, q0: &[f64], n_steps: usize) -> Result<ChainTrace> {
    run_chain_with(target, config, q0, n_steps, ChainOptions::default(), |_, _, _| {})
}

/// Like [`run_chain`] with thinning, an explicit stream and a per-step observer
/// called as `observer(step_index, position, info)`.
pub fn run_chain_with<T, F>(
    target: &T,
    config: &HmcConfig,
    q0: &[f64],
    n_steps: usize,
    opts: ChainOptions,
    mut observer: F,
) -> Result<ChainTrace>
where
    T: Target + ?Sized,
    F: FnMut(usize, &[f64], &StepInfo),
{
    precondition(n_steps >= 1, || "a chain needs at least one step".into())?;
    check_start(target, q0)?;
    let mut kernel = HmcKernel::new(target, *config)?;
    let mut rng: StreamRng = stream_rng(config.seed, opts.stream);
    let mut q = q0.to_vec();
    let mut trace = ChainTrace {
        accepted: Vec::with_capacity(n_steps),
        lazy_hold: Vec::with_capacity(n_steps),
        delta_h: Vec::with_capacity(n_steps),
        ..ChainTrace::default()
    };
    for step in 0..n_steps {
        let info = kernel.step(&mut q, &mut rng);
        if !info.lazy_hold {
            trace.gradient_evals += config.grads_per_proposal();
        }
        trace.divergences += info.diverged as u64;
        trace.nan_energies += info.nan_energy as u64;
        trace.accepted.push(info.accepted);
        trace.lazy_hold.push(info.lazy_hold);
        trace.delta_h.push(info.delta_h);
        if opts.thin > 0 && (step + 1) % opts.thin == 0 {
            trace.positions.push(q.clone());
        }
        observer(step, &q, &info);
    }
    trace.final_position = q;
    Ok(trace)
}

/// Independent chains in parallel; chain `i` uses stream `i`.
pub fn run_chains<T: Target + ?Sized>(
    target: &T,
    config: &HmcConfig,
    starts: &[Vec<f64>],
    n_steps: usize,
    thin: usize,
) -> Result<Vec<ChainTrace>> {
    starts
        .par_iter()
        .enumerate()
        .map(|(i, q0)| {
            run_chain_with(
                target,
                config,
                q0,
                n_steps,
                ChainOptions { thin, stream: i as u64 },
                |_, _, _| {},
            )
        })
        .collect()
}

/// Per-step energy errors `ΔH_k = −ℋ(s_k) + ℋ(s_{k−1})` along a leapfrog trajectory.
/// They telescope to the trajectory's total `ΔH`.
pub fn per_step_energy_errors<T: Target + ?Sized>(
    target: &T,
    s0: &PhaseState,
    k: usize,
    eta: f64,
) -> Result<Vec<f64>> {
    let traj = crate::leapfrog::forward_map(target, s0, k, eta)?;
    let h: Vec<f64> = traj.states.iter().map(|s| hamiltonian(target, s)).collect();
    Ok(h.windows(2).map(|w| w[0] - w[1]).collect())
}
