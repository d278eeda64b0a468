use super::{require_gaussian, seed_at};
use crate::config::{ExperimentConfig, WarmStartSpec};
use hmclab::diagnostics::ProjectedTv;
use hmclab::kernel::HmcKernel;
use hmclab::rng::{derive_seed, stream_rng, StreamRng};
use hmclab::target::GaussianTarget;
use hmclab::{HmcError, Result, Target};
use rayon::prelude::*;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixingRow {
    pub seed: u64,
    pub d: usize,
    pub n_steps: u64,
    pub tv_estimate: f64,
    /// Summed over all chains up to this checkpoint.
    pub grad_evals: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixingRun {
    pub seed: u64,
    pub d: usize,
    pub warmness: f64,
    pub eta: f64,
    #[serde(rename = "K")]
    pub k: usize,
    /// TV the estimator reports on exact samples of the same size.
    pub estimator_bias: f64,
    /// `(ε, first checkpoint with TV estimate ≤ ε)`
    pub mixing_steps: Vec<(f64, u64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixingSummary {
    pub runs: Vec<MixingRun>,
}

fn start_states(g: &GaussianTarget, spec: WarmStartSpec, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = stream_rng(seed, 0);
    match spec {
        WarmStartSpec::Exact => (0..n).map(|_| g.sample(&mut rng)).collect(),
        WarmStartSpec::ScaledCovariance { s } => (0..n)
            .map(|_| g.sample(&mut rng).into_iter().map(|x| s.sqrt() * x).collect())
            .collect(),
        WarmStartSpec::PointMass => vec![vec![0.0; g.dim()]; n],
    }
}

/// Runs many chains from the warm start and reports the projected TV to the target at
/// geometric checkpoints, stopping once every accuracy in the list is reached.
pub fn run_mixing_estimate(cfg: &ExperimentConfig) -> Result<(Vec<MixingRow>, MixingSummary)> {
    let opts = &cfg.mixing;
    if opts.chains < 2 || opts.epsilons.is_empty() {
        return Err(HmcError::Config("mixing estimate needs chains and at least one accuracy".into()));
    }
    let jobs: Vec<(u64, usize)> = cfg.seeds.iter().flat_map(|&s| cfg.dims.iter().map(move |&d| (s, d))).collect();
    let results: Vec<Result<(Vec<MixingRow>, MixingRun)>> =
        jobs.par_iter().map(|&(seed, d)| run_one(cfg, seed, d)).collect();
    let mut rows = vec![];
    let mut runs = vec![];
    for r in results {
        let (r, run) = r?;
        rows.extend(r);
        runs.push(run);
    }
    Ok((rows, MixingSummary { runs }))
}

fn run_one(cfg: &ExperimentConfig, seed: u64, d: usize) -> Result<(Vec<MixingRow>, MixingRun)> {
    let opts = &cfg.mixing;
    let g = require_gaussian(cfg, d, "the mixing estimate")?;
    let warmness = opts.start.warmness(d);
    let base = seed_at(seed, d);
    let hc = cfg.schedule.resolve(&g, warmness)?.with_lazy(cfg.lazy).with_seed(derive_seed(base, 2));
    let tv = ProjectedTv::gaussian(&g.covariance_matrix(), opts.projections, opts.bins, derive_seed(base, 3))?;
    let mut chains: Vec<(Vec<f64>, StreamRng, u64)> = start_states(&g, opts.start, opts.chains, derive_seed(base, 1))
        .into_iter()
        .enumerate()
        .map(|(i, q)| (q, stream_rng(hc.seed, i as u64), 0))
        .collect();

    let mut eps: Vec<f64> = opts.epsilons.clone();
    eps.sort_by(|a, b| b.total_cmp(a));
    let mut reached: Vec<(f64, u64)> = vec![];
    let mut rows = vec![];
    let mut done = 0u64;
    for j in opts.first_exponent..=opts.max_exponent {
        let n = 1u64 << j;
        let todo = n - done;
        let step_results: Vec<Result<()>> = chains
            .par_iter_mut()
            .map(|(q, rng, grads)| {
                let mut kernel = HmcKernel::new(&g, hc)?;
                for _ in 0..todo {
                    let info = kernel.step(q, rng);
                    if !info.lazy_hold {
                        *grads += hc.grads_per_proposal();
                    }
                }
                Ok(())
            })
            .collect();
        step_results.into_iter().collect::<Result<Vec<()>>>()?;
        done = n;
        let estimate = tv.estimate(chains.iter().map(|c| c.0.as_slice()));
        rows.push(MixingRow {
            seed,
            d,
            n_steps: n,
            tv_estimate: estimate,
            grad_evals: chains.iter().map(|c| c.2).sum(),
        });
        while let Some(&e) = eps.get(reached.len()) {
            if estimate <= e {
                reached.push((e, n));
            } else {
                break;
            }
        }
        if reached.len() == eps.len() {
            break;
        }
    }
    if reached.len() < eps.len() {
        return Err(HmcError::BudgetExhausted(format!(
            "projected TV stayed above {} through {} steps at d = {d}",
            eps[reached.len()],
            1u64 << opts.max_exponent
        )));
    }
    reached.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok((
        rows,
        MixingRun {
            seed,
            d,
            warmness,
            eta: hc.step_size,
            k: hc.n_leapfrog,
            estimator_bias: tv.expected_bias(opts.chains),
            mixing_steps: reached,
        },
    ))
}
