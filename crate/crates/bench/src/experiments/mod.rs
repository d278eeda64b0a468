//! The experiments behind the `experiment` subcommand. Each returns its CSV rows and a
//! summary that goes into the JSON sidecar.

mod acceptance;
mod comparison;
mod energy;
mod lemmas;
mod mixing;
mod overlap;
mod tensor;

pub use acceptance::{run_acceptance_scaling, AcceptanceRow, AcceptanceSummary};
pub use comparison::{run_mala_vs_hmc, ComparisonRow, ComparisonSummary};
pub use energy::{run_energy_scaling, EnergyRow, EnergySummary};
pub use lemmas::{run_lemma_suite, LemmaRow};
pub use mixing::{run_mixing_estimate, MixingRow, MixingSummary};
pub use overlap::{gaussian_kl_closed_form, run_overlap_check, OverlapRow};
pub use tensor::{run_tensor_report, TensorRow};

use crate::config::ExperimentConfig;
use hmclab::concentration::{ExactGaussianSampler, StationarySampler, WarmChainSampler};
use hmclab::rng::derive_seed;
use hmclab::target::GaussianTarget;
use hmclab::{HmcConfig, HmcError, Result, Target};

/// Seed for everything done at dimension `d` under run seed `seed`.
pub(crate) fn seed_at(seed: u64, d: usize) -> u64 {
    derive_seed(seed, d as u64)
}

pub(crate) fn require_gaussian(cfg: &ExperimentConfig, d: usize, what: &str) -> Result<GaussianTarget> {
    match cfg.target_config(d)?.build_gaussian() {
        Some(g) => g,
        None => Err(HmcError::Precondition(format!("{what} needs a Gaussian target"))),
    }
}

/// A target together with a source of stationary draws: exact for Gaussians, a warm
/// chain otherwise.
pub(crate) struct Stationary {
    gaussian: Option<GaussianTarget>,
    target: Box<dyn Target>,
}

impl Stationary {
    pub(crate) fn new(cfg: &ExperimentConfig, d: usize) -> Result<Self> {
        let tc = cfg.target_config(d)?;
        let gaussian = tc.build_gaussian().transpose()?;
        Ok(Self {
            gaussian,
            target: tc.build()?,
        })
    }

    pub(crate) fn target(&self) -> &dyn Target {
        self.target.as_ref()
    }

    /// Exact stationary draws when available.
    pub(crate) fn exact_draws(&self, n: usize, seed: u64) -> Result<Option<Vec<Vec<f64>>>> {
        match &self.gaussian {
            Some(g) => Ok(Some(ExactGaussianSampler { target: g }.draw_block(seed, 0, n)?)),
            None => Ok(None),
        }
    }

    /// `warmup` is only used without an exact sampler.
    pub(crate) fn sampler(&self, warmup: usize, seed: u64) -> Result<Box<dyn StationarySampler + '_>> {
        if let Some(g) = &self.gaussian {
            return Ok(Box::new(ExactGaussianSampler { target: g }));
        }
        let t = self.target.as_ref();
        let cfg = HmcConfig::new(0.1 / t.smoothness().sqrt(), 5).with_seed(seed);
        Ok(Box::new(WarmChainSampler::new(t, cfg, &vec![0.0; t.dim()], warmup, 100, 10)?))
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Median of a nonempty list.
pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
