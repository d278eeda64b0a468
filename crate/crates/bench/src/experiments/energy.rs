use super::{log_log_slope, seed_at, Stationary};
use crate::config::ExperimentConfig;
use hmclab::concentration::energy_error_moment;
use hmclab::{HmcError, Result};
use rayon::prelude::*;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyRow {
    pub seed: u64,
    pub d: usize,
    pub eta: f64,
    pub ell: usize,
    /// `[E ΔH^ℓ]^{1/ℓ}` for one leapfrog step from stationarity.
    pub empirical: f64,
    pub std_error: f64,
    pub bound: f64,
    pub implied_constant: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergySummary {
    /// `(seed, d, slope of ln‖ΔH‖ against ln η)`
    pub eta_slopes: Vec<(u64, usize, f64)>,
    /// `(seed, η, slope of ln‖ΔH‖ against ln d)`
    pub dim_slopes: Vec<(u64, f64, f64)>,
}

pub fn run_energy_scaling(cfg: &ExperimentConfig) -> Result<(Vec<EnergyRow>, EnergySummary)> {
    let opts = &cfg.energy;
    if opts.step_sizes.is_empty() || opts.step_sizes.iter().any(|&e| !(e > 0.0)) {
        return Err(HmcError::Config("energy scaling needs positive step sizes".into()));
    }
    let jobs: Vec<(u64, usize)> = cfg.seeds.iter().flat_map(|&s| cfg.dims.iter().map(move |&d| (s, d))).collect();
    let results: Vec<Result<Vec<EnergyRow>>> = jobs
        .par_iter()
        .map(|&(seed, d)| {
            let st = Stationary::new(cfg, d)?;
            let base = seed_at(seed, d);
            let sampler = st.sampler(cfg.lemmas.warmup, base)?;
            opts.step_sizes
                .iter()
                .map(|&eta| {
                    let r = energy_error_moment(st.target(), eta, opts.ell, opts.n_mc, sampler.as_ref(), 1.0, base)?;
                    Ok(EnergyRow {
                        seed,
                        d,
                        eta,
                        ell: opts.ell,
                        empirical: r.empirical,
                        std_error: r.std_error,
                        bound: r.bound,
                        implied_constant: r.implied_constant,
                    })
                })
                .collect()
        })
        .collect();
    let mut rows = vec![];
    for r in results {
        rows.extend(r?);
    }
    let mut summary = EnergySummary {
        eta_slopes: vec![],
        dim_slopes: vec![],
    };
    for &seed in &cfg.seeds {
        if opts.step_sizes.len() >= 2 {
            for &d in &cfg.dims {
                let (xs, ys): (Vec<f64>, Vec<f64>) = rows
                    .iter()
                    .filter(|r| r.seed == seed && r.d == d)
                    .map(|r| (r.eta, r.empirical))
                    .unzip();
                summary.eta_slopes.push((seed, d, log_log_slope(&xs, &ys)));
            }
        }
        if cfg.dims.len() >= 2 {
            for &eta in &opts.step_sizes {
                let (xs, ys): (Vec<f64>, Vec<f64>) = rows
                    .iter()
                    .filter(|r| r.seed == seed && r.eta == eta)
                    .map(|r| (r.d as f64, r.empirical))
                    .unzip();
                summary.dim_slopes.push((seed, eta, log_log_slope(&xs, &ys)));
            }
        }
    }
    Ok((rows, summary))
}
