use super::{median, require_gaussian, seed_at};
use crate::config::{ExperimentConfig, Schedule};
use hmclab::diagnostics::iact;
use hmclab::kernel::{run_chain_with, ChainOptions};
use hmclab::rng::{derive_seed, stream_rng};
use hmclab::target::GaussianTarget;
use hmclab::{HmcError, Result};
use rayon::prelude::*;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub seed: u64,
    pub d: usize,
    pub method: String,
    pub eta: f64,
    #[serde(rename = "K")]
    pub k: usize,
    pub iact_q1: f64,
    pub iact_norm_sq: f64,
    /// The larger of the two, pooled over chains as total draws / total ESS.
    pub iact: f64,
    pub accept_rate: f64,
    pub grad_evals: u64,
    pub grad_evals_per_ess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonSummary {
    /// `(d, median over seeds of MALA / HMC gradient evaluations per effective sample)`
    pub mala_over_hmc: Vec<(usize, f64)>,
}

fn run_method(
    g: &GaussianTarget,
    name: &str,
    schedule: &Schedule,
    cfg: &ExperimentConfig,
    seed: u64,
    d: usize,
) -> Result<ComparisonRow> {
    let opts = &cfg.comparison;
    let base = seed_at(seed, d);
    // same starting draws for both methods
    let mut rng = stream_rng(derive_seed(base, 1), 0);
    let starts: Vec<Vec<f64>> = (0..opts.chains).map(|_| g.sample(&mut rng)).collect();
    let hc = schedule.resolve(g, 1.0)?.with_lazy(cfg.lazy).with_seed(derive_seed(base, 2));
    let per_chain_budget = opts.budget / opts.chains as u64;
    let n = (per_chain_budget / hc.grads_per_proposal()) as usize;
    if n < 100 {
        return Err(HmcError::Config(format!("budget too small for {name}: {n} steps per chain")));
    }
    let per_chain: Vec<Result<(f64, f64, f64, u64)>> = starts
        .par_iter()
        .enumerate()
        .map(|(i, q0)| {
            let mut q1 = Vec::with_capacity(n);
            let mut nsq = Vec::with_capacity(n);
            let trace = run_chain_with(g, &hc, q0, n, ChainOptions { thin: 0, stream: i as u64 }, |_, q, _| {
                q1.push(q[0]);
                nsq.push(q.iter().map(|x| x * x).sum());
            })?;
            Ok((iact(&q1), iact(&nsq), trace.acceptance_rate(), trace.gradient_evals))
        })
        .collect();
    let mut ess = 0.0;
    let mut iq = 0.0;
    let mut inn = 0.0;
    let mut acc = 0.0;
    let mut grads = 0;
    for r in per_chain {
        let (a, b, rate, gr) = r?;
        ess += n as f64 / a.max(b);
        iq += a;
        inn += b;
        acc += rate;
        grads += gr;
    }
    let c = opts.chains as f64;
    Ok(ComparisonRow {
        seed,
        d,
        method: name.into(),
        eta: hc.step_size,
        k: hc.n_leapfrog,
        iact_q1: iq / c,
        iact_norm_sq: inn / c,
        iact: c * n as f64 / ess,
        accept_rate: acc / c,
        grad_evals: grads,
        grad_evals_per_ess: grads as f64 / ess,
    })
}

/// Gradient evaluations per effective sample for the two schedules at equal budgets.
pub fn run_mala_vs_hmc(cfg: &ExperimentConfig) -> Result<(Vec<ComparisonRow>, ComparisonSummary)> {
    let opts = &cfg.comparison;
    if opts.chains < 1 {
        return Err(HmcError::Config("comparison needs at least one chain".into()));
    }
    let jobs: Vec<(u64, usize, &str)> = cfg
        .seeds
        .iter()
        .flat_map(|&s| cfg.dims.iter().flat_map(move |&d| [(s, d, "hmc"), (s, d, "mala")]))
        .collect();
    let rows: Vec<ComparisonRow> = jobs
        .par_iter()
        .map(|&(seed, d, name)| {
            let g = require_gaussian(cfg, d, "the MALA/HMC comparison")?;
            let schedule = if name == "hmc" { &opts.hmc } else { &opts.mala };
            run_method(&g, name, schedule, cfg, seed, d)
        })
        .collect::<Result<_>>()?;
    let mala_over_hmc = cfg
        .dims
        .iter()
        .map(|&d| {
            let ratios: Vec<f64> = cfg
                .seeds
                .iter()
                .map(|&s| {
                    let get = |m: &str| {
                        rows.iter()
                            .find(|r| r.seed == s && r.d == d && r.method == m)
                            .map(|r| r.grad_evals_per_ess)
                            .unwrap_or(f64::NAN)
                    };
                    get("mala") / get("hmc")
                })
                .collect();
            (d, median(&ratios))
        })
        .collect();
    Ok((rows, ComparisonSummary { mala_over_hmc }))
}
