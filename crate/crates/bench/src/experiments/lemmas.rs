use super::{seed_at, Stationary};
use crate::config::ExperimentConfig;
use hmclab::concentration::{
    check_chaos_moments, check_dynamics_diffs, check_gradhp_moment, check_grad_norm_moment, check_php_moment,
    energy_error_moment,
};
use hmclab::rng::derive_seed;
use hmclab::tensor::MAX_TENSOR_DIM;
use hmclab::{HmcError, MomentReport, Result};
use rayon::prelude::*;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaRow {
    pub seed: u64,
    pub d: usize,
    pub quantity: String,
    pub ell: usize,
    pub empirical: f64,
    pub std_error: f64,
    pub bound: f64,
    pub slack_ratio: f64,
    pub implied_constant: f64,
    pub n_samples: usize,
    pub hard: bool,
    pub violated: bool,
}

impl LemmaRow {
    fn new(seed: u64, d: usize, r: MomentReport) -> Self {
        Self {
            seed,
            d,
            quantity: r.quantity,
            ell: r.ell,
            empirical: r.empirical,
            std_error: r.std_error,
            bound: r.bound,
            slack_ratio: r.slack_ratio,
            implied_constant: r.implied_constant,
            n_samples: r.n_samples,
            hard: r.hard,
            violated: r.violated,
        }
    }
}

/// Every moment check the target supports, for each `ℓ` in the list. Odd `ℓ` skips the
/// checks defined only for even orders; the dynamics check uses a tenth of the samples
/// since each one integrates the continuous flow.
pub fn run_lemma_suite(cfg: &ExperimentConfig) -> Result<Vec<LemmaRow>> {
    let opts = &cfg.lemmas;
    if opts.ells.is_empty() || opts.ells.contains(&0) {
        return Err(HmcError::Config("lemma suite needs positive moment orders".into()));
    }
    let jobs: Vec<(u64, usize)> = cfg.seeds.iter().flat_map(|&s| cfg.dims.iter().map(move |&d| (s, d))).collect();
    let results: Vec<Result<Vec<LemmaRow>>> = jobs
        .par_iter()
        .map(|&(seed, d)| {
            let st = Stationary::new(cfg, d)?;
            let t = st.target();
            let base = seed_at(seed, d);
            let sampler = st.sampler(opts.warmup, base)?;
            let x = sampler.draw_block(derive_seed(base, 7), 0, 1)?.remove(0);
            let gamma_known = t.hessian_lipschitz().is_some();
            let mut rows = vec![];
            for &ell in &opts.ells {
                let s = derive_seed(base, ell as u64);
                let mut push = |r: MomentReport| rows.push(LemmaRow::new(seed, d, r));
                push(check_grad_norm_moment(t, ell, opts.n_mc, sampler.as_ref(), s)?);
                if t.supports_hessian() {
                    push(check_php_moment(t, &x, ell, opts.n_mc, s)?);
                    if ell % 2 == 0 {
                        push(check_gradhp_moment(t, ell, opts.n_mc, sampler.as_ref(), s)?);
                    }
                    if gamma_known {
                        let n = (opts.n_mc / 10).max(2);
                        for r in check_dynamics_diffs(t, opts.time, ell, n, sampler.as_ref(), 1e-10, 1.0, s)? {
                            push(r);
                        }
                    }
                }
                if t.supports_third() && d <= MAX_TENSOR_DIM {
                    let (a, b) = check_chaos_moments(t, &x, ell, opts.n_mc, 1.0, s)?;
                    push(a);
                    push(b);
                }
                if ell % 2 == 0 && gamma_known {
                    push(energy_error_moment(t, opts.step_size, ell, opts.n_mc, sampler.as_ref(), 1.0, s)?);
                }
            }
            Ok(rows)
        })
        .collect();
    let mut rows = vec![];
    for r in results {
        rows.extend(r?);
    }
    Ok(rows)
}
