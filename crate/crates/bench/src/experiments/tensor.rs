use super::seed_at;
use crate::config::ExperimentConfig;
use hmclab::rng::{derive_seed, standard_normal_vec, stream_rng};
use hmclab::tensor::{third_derivative_tensor, TensorNormReport};
use hmclab::{HmcError, Result};
use rayon::prelude::*;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TensorRow {
    pub seed: u64,
    pub d: usize,
    pub point: usize,
    pub norm_123: f64,
    pub norm_12_3: f64,
    /// Lower bound from multistart ascent.
    pub norm_1_2_3_lower: f64,
    pub ordering_ok: bool,
    /// `γL^{3/2}` when the target declares `γ`.
    pub declared_bound: Option<f64>,
}

/// Partition norms of the third derivative at standard normal points.
pub fn run_tensor_report(cfg: &ExperimentConfig) -> Result<Vec<TensorRow>> {
    let opts = &cfg.tensor;
    if opts.points == 0 || opts.restarts == 0 {
        return Err(HmcError::Config("tensor report needs points and restarts".into()));
    }
    let jobs: Vec<(u64, usize)> = cfg.seeds.iter().flat_map(|&s| cfg.dims.iter().map(move |&d| (s, d))).collect();
    let results: Vec<Result<Vec<TensorRow>>> = jobs
        .par_iter()
        .map(|&(seed, d)| {
            let t = cfg.build_target(d)?;
            let base = seed_at(seed, d);
            let mut rng = stream_rng(base, 0);
            let declared = t.hessian_lipschitz().map(|g| g * t.smoothness().powf(1.5));
            (0..opts.points)
                .map(|i| {
                    let x = standard_normal_vec(&mut rng, d);
                    let a = third_derivative_tensor(t.as_ref(), &x)?;
                    let r = TensorNormReport::compute(&a, opts.restarts, derive_seed(base, i as u64 + 1));
                    Ok(TensorRow {
                        seed,
                        d,
                        point: i,
                        norm_123: r.norm_123,
                        norm_12_3: r.norm_12_3,
                        norm_1_2_3_lower: r.norm_1_2_3_lower,
                        ordering_ok: r.partition_ordering_ok,
                        declared_bound: declared,
                    })
                })
                .collect()
        })
        .collect();
    let mut rows = vec![];
    for r in results {
        rows.extend(r?);
    }
    Ok(rows)
}
