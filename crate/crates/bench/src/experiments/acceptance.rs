use super::{seed_at, Stationary};
use crate::config::ExperimentConfig;
use hmclab::kernel::{run_chain_with, ChainOptions};
use hmclab::rng::{derive_seed, standard_normal_vec, stream_rng};
use hmclab::stats::RunningStats;
use hmclab::{HmcConfig, HmcError, Result, Target};
use rayon::prelude::*;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AcceptanceRow {
    pub seed: u64,
    /// `scaled` (η = a d^{−1/4}, K = ⌈d^{1/4}⌉) or `control` (fixed η, K).
    pub schedule: String,
    pub d: usize,
    pub eta: f64,
    #[serde(rename = "K")]
    pub k: usize,
    pub accept_mean: f64,
    /// Half-width of the 95% interval over chains.
    pub accept_ci: f64,
    pub grad_evals: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AcceptanceSummary {
    pub a: f64,
    pub calibrated: bool,
    /// Largest over seeds of max − min scaled-schedule acceptance across dimensions.
    pub scaled_spread: f64,
    /// Whether the control acceptance decreases strictly in `d` for every seed.
    pub control_decreasing: bool,
    pub max_ci: f64,
}

struct Measured {
    mean: f64,
    ci: f64,
    grad_evals: u64,
}

/// Mean Metropolis acceptance probability `min(1, e^{ΔH})` over proposals, with chains
/// started from stationary draws (or after `warmup` steps).
fn measure(
    target: &dyn Target,
    st: &Stationary,
    cfg: &HmcConfig,
    chains: usize,
    steps: usize,
    warmup: usize,
    seed: u64,
) -> Result<Measured> {
    let starts = match st.exact_draws(chains, derive_seed(seed, 1))? {
        Some(s) => s,
        None => {
            let mut rng = stream_rng(derive_seed(seed, 1), 0);
            (0..chains).map(|_| standard_normal_vec(&mut rng, target.dim())).collect()
        }
    };
    let cfg = cfg.with_seed(derive_seed(seed, 2));
    let per_chain: Vec<Result<(f64, u64)>> = starts
        .par_iter()
        .enumerate()
        .map(|(i, q0)| {
            let mut acc = RunningStats::new();
            let trace = run_chain_with(
                target,
                &cfg,
                q0,
                warmup + steps,
                ChainOptions { thin: 0, stream: i as u64 },
                |step, _, info| {
                    if step >= warmup && !info.lazy_hold {
                        acc.push(info.accept_prob);
                    }
                },
            )?;
            Ok((acc.mean, trace.gradient_evals))
        })
        .collect();
    let mut means = RunningStats::new();
    let mut grads = 0;
    for r in per_chain {
        let (m, g) = r?;
        means.push(m);
        grads += g;
    }
    Ok(Measured {
        mean: means.mean,
        ci: 1.96 * means.std_error(),
        grad_evals: grads,
    })
}

fn scaled_config(a: f64, d: usize) -> HmcConfig {
    let r = (d as f64).powf(0.25);
    HmcConfig::new(a / r, r.ceil() as usize)
}

/// Finds `a` with mean acceptance `target_accept` at dimension `d` by bisection in
/// `ln a`, reusing the same random numbers at every trial.
fn calibrate(cfg: &ExperimentConfig, d: usize, seed: u64) -> Result<f64> {
    let opts = &cfg.acceptance;
    let st = Stationary::new(cfg, d)?;
    let lazy = cfg.lazy;
    let accept = |a: f64| -> Result<f64> {
        let hc = scaled_config(a, d).with_lazy(lazy);
        Ok(measure(st.target(), &st, &hc, opts.chains, opts.steps, opts.warmup, seed)?.mean)
    };
    let (mut lo, mut hi) = (0.01f64.ln(), 4.0f64.ln());
    if accept(hi.exp())? >= opts.target_accept {
        return Ok(hi.exp());
    }
    if accept(lo.exp())? < opts.target_accept {
        return Err(HmcError::NoConvergence(format!(
            "acceptance stays below {} even at a = 0.01",
            opts.target_accept
        )));
    }
    for _ in 0..30 {
        let mid = 0.5 * (lo + hi);
        if accept(mid.exp())? >= opts.target_accept {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}

/// Mean acceptance across the dimension list under `η = a d^{−1/4}`, `K = ⌈d^{1/4}⌉`
/// and under the fixed control.
pub fn run_acceptance_scaling(cfg: &ExperimentConfig) -> Result<(Vec<AcceptanceRow>, AcceptanceSummary)> {
    let opts = &cfg.acceptance;
    if opts.chains < 2 || opts.steps < 1 {
        return Err(HmcError::Config("acceptance scaling needs at least two chains and one step".into()));
    }
    let (a, calibrated) = match opts.a {
        Some(a) => (a, false),
        None => (calibrate(cfg, cfg.dims[0], derive_seed(cfg.seeds[0], 0xca1))?, true),
    };
    let control = HmcConfig::new(opts.control_step_size, opts.control_leapfrog).with_lazy(cfg.lazy);
    control.validate()?;
    let jobs: Vec<(u64, usize)> = cfg.seeds.iter().flat_map(|&s| cfg.dims.iter().map(move |&d| (s, d))).collect();
    let results: Vec<Result<[AcceptanceRow; 2]>> = jobs
        .par_iter()
        .map(|&(seed, d)| {
            let st = Stationary::new(cfg, d)?;
            let base = seed_at(seed, d);
            let mut rows = vec![];
            for (name, hc, tag) in [("scaled", scaled_config(a, d).with_lazy(cfg.lazy), 1), ("control", control, 2)] {
                let m = measure(st.target(), &st, &hc, opts.chains, opts.steps, opts.warmup, derive_seed(base, tag))?;
                rows.push(AcceptanceRow {
                    seed,
                    schedule: name.into(),
                    d,
                    eta: hc.step_size,
                    k: hc.n_leapfrog,
                    accept_mean: m.mean,
                    accept_ci: m.ci,
                    grad_evals: m.grad_evals,
                });
            }
            let [s, c]: [AcceptanceRow; 2] = rows.try_into().expect("two schedules");
            Ok([s, c])
        })
        .collect();
    let mut rows = vec![];
    for r in results {
        rows.extend(r?);
    }
    let mut spread: f64 = 0.0;
    let mut decreasing = true;
    for &seed in &cfg.seeds {
        let scaled: Vec<f64> = rows
            .iter()
            .filter(|r| r.seed == seed && r.schedule == "scaled")
            .map(|r| r.accept_mean)
            .collect();
        let hi = scaled.iter().cloned().fold(f64::MIN, f64::max);
        let lo = scaled.iter().cloned().fold(f64::MAX, f64::min);
        spread = spread.max(hi - lo);
        let ctrl: Vec<f64> = rows
            .iter()
            .filter(|r| r.seed == seed && r.schedule == "control")
            .map(|r| r.accept_mean)
            .collect();
        decreasing &= ctrl.windows(2).all(|w| w[1] < w[0]);
    }
    let max_ci = rows.iter().map(|r| r.accept_ci).fold(0.0, f64::max);
    Ok((
        rows,
        AcceptanceSummary {
            a,
            calibrated,
            scaled_spread: spread,
            control_decreasing: decreasing,
            max_ci,
        },
    ))
}
