//! Experiment configuration, read from TOML.
//!
//! ```toml
//! experiment = "acceptance-scaling"
//! dims = [16, 64, 256]
//! seeds = [1, 2]
//!
//! [target]
//! family = "gaussian"
//! dim = 16
//!
//! [schedule]
//! kind = "corollary-hmc"
//! epsilon = 0.1
//! ```
//!
//! The target's own `dim` is replaced by each entry of `dims`.

use hmclab::target::TargetConfig;
use hmclab::tuning::{best_hmc_params, mala_params, TheoryParams};
use hmclab::{HmcConfig, HmcError, Result, Target};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    AcceptanceScaling,
    EnergyScaling,
    MixingEstimate,
    OverlapCheck,
    LemmaSuite,
    TensorReport,
    MalaVsHmc,
}

/// How `(η, K)` is chosen for a given dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Schedule {
    Fixed {
        step_size: f64,
        #[serde(default = "one_usize")]
        n_leapfrog: usize,
    },
    CorollaryHmc {
        #[serde(default = "one")]
        c: f64,
        #[serde(default = "one")]
        c_prime: f64,
        #[serde(default = "default_epsilon")]
        epsilon: f64,
    },
    CorollaryMala {
        #[serde(default = "one")]
        c: f64,
        #[serde(default = "default_epsilon")]
        epsilon: f64,
    },
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule::CorollaryHmc {
            c: 1.0,
            c_prime: 1.0,
            epsilon: default_epsilon(),
        }
    }
}

impl Schedule {
    /// Kernel parameters for `target` started from a distribution of warmness `warmness`.
    pub fn resolve(&self, target: &dyn Target, warmness: f64) -> Result<HmcConfig> {
        let theory = |epsilon: f64| -> Result<TheoryParams> {
            if !warmness.is_finite() {
                return Err(HmcError::Precondition(
                    "the theory schedules need a warm start with finite warmness".into(),
                ));
            }
            let gamma = target.hessian_lipschitz().ok_or_else(|| {
                HmcError::Precondition(format!("target '{}' declares no Hessian-Lipschitz coefficient", target.name()))
            })?;
            Ok(TheoryParams::new(target.smoothness(), gamma, target.dim(), warmness, epsilon))
        };
        match *self {
            Schedule::Fixed { step_size, n_leapfrog } => {
                let cfg = HmcConfig::new(step_size, n_leapfrog);
                cfg.validate()?;
                Ok(cfg)
            }
            Schedule::CorollaryHmc { c, c_prime, epsilon } => {
                let mut tp = theory(epsilon)?;
                tp.c = c;
                tp.c_prime = c_prime;
                let t = best_hmc_params(&tp)?;
                Ok(HmcConfig::new(t.step_size, t.n_leapfrog))
            }
            Schedule::CorollaryMala { c, epsilon } => {
                let mut tp = theory(epsilon)?;
                tp.c = c;
                Ok(HmcConfig::mala(mala_params(&tp)?.step_size))
            }
        }
    }
}

/// Initial distribution of the chains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
#[derive(Default)]
pub enum WarmStartSpec {
    /// Exact draws from a Gaussian target.
    #[default]
    Exact,
    /// Draws from the Gaussian target with covariance scaled by `s`.
    ScaledCovariance { s: f64 },
    /// Every chain starts at the mode.
    PointMass,
}


impl WarmStartSpec {
    /// Warmness `M` relative to a `d`-dimensional Gaussian target: the supremum of the
    /// density ratio, `s^{−d/2}` for `s ≤ 1` and infinite otherwise.
    pub fn warmness(&self, d: usize) -> f64 {
        match *self {
            WarmStartSpec::Exact => 1.0,
            WarmStartSpec::ScaledCovariance { s } if s > 0.0 && s <= 1.0 => (-0.5 * d as f64 * s.ln()).exp(),
            WarmStartSpec::ScaledCovariance { .. } | WarmStartSpec::PointMass => f64::INFINITY,
        }
    }

    pub fn is_warm(&self, d: usize) -> bool {
        self.warmness(d).is_finite()
    }

    fn validate(&self) -> Result<()> {
        if let WarmStartSpec::ScaledCovariance { s } = *self {
            if !(s > 0.0 && s.is_finite()) {
                return Err(HmcError::Config(format!("covariance scale must be positive, got {s}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcceptanceOptions {
    /// Constant `a` in `η = a d^{−1/4}`; calibrated on the first dimension when absent.
    pub a: Option<f64>,
    /// Mean acceptance the pilot calibration aims for.
    pub target_accept: f64,
    pub control_step_size: f64,
    pub control_leapfrog: usize,
    pub chains: usize,
    pub steps: usize,
    /// Steps discarded before recording; only needed without exact starts.
    pub warmup: usize,
}

impl Default for AcceptanceOptions {
    fn default() -> Self {
        Self {
            a: None,
            target_accept: 0.8,
            control_step_size: 0.4,
            control_leapfrog: 1,
            chains: 64,
            steps: 400,
            warmup: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyOptions {
    pub step_sizes: Vec<f64>,
    pub ell: usize,
    pub n_mc: usize,
}

impl Default for EnergyOptions {
    fn default() -> Self {
        Self {
            step_sizes: vec![0.02, 0.05, 0.1, 0.2],
            ell: 2,
            n_mc: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixingOptions {
    pub start: WarmStartSpec,
    pub epsilons: Vec<f64>,
    pub chains: usize,
    pub projections: usize,
    pub bins: usize,
    /// Checkpoints are `2^first_exponent, 2^(first_exponent+1), …, 2^max_exponent`.
    pub first_exponent: u32,
    pub max_exponent: u32,
}

impl Default for MixingOptions {
    fn default() -> Self {
        Self {
            start: WarmStartSpec::Exact,
            epsilons: vec![0.1],
            chains: 8192,
            projections: 64,
            bins: 200,
            first_exponent: 5,
            max_exponent: 14,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComparisonOptions {
    /// Gradient evaluations spent by each method.
    pub budget: u64,
    pub chains: usize,
    pub hmc: Schedule,
    pub mala: Schedule,
}

impl Default for ComparisonOptions {
    fn default() -> Self {
        Self {
            budget: 1_000_000,
            chains: 4,
            hmc: Schedule::default(),
            mala: Schedule::CorollaryMala {
                c: 1.0,
                epsilon: default_epsilon(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OverlapOptions {
    pub instances: usize,
    pub max_leapfrog: usize,
    pub n_mc: usize,
    /// Separation `‖q₀ − q̃₀‖` as a fraction of `Kη`.
    pub separation: f64,
}

impl Default for OverlapOptions {
    fn default() -> Self {
        Self {
            instances: 10,
            max_leapfrog: 4,
            n_mc: 100_000,
            separation: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LemmaOptions {
    pub ells: Vec<usize>,
    pub n_mc: usize,
    pub step_size: f64,
    pub time: f64,
    /// Steps of the chain that supplies approximate stationary draws for non-Gaussian targets.
    pub warmup: usize,
}

impl Default for LemmaOptions {
    fn default() -> Self {
        Self {
            ells: vec![1, 2, 4],
            n_mc: 100_000,
            step_size: 0.05,
            time: 0.1,
            warmup: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TensorOptions {
    pub points: usize,
    pub restarts: usize,
}

impl Default for TensorOptions {
    fn default() -> Self {
        Self { points: 5, restarts: 16 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    /// Defaults to the standard Gaussian.
    #[serde(default)]
    pub target: Option<TargetConfig>,
    pub dims: Vec<usize>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub schedule: Schedule,
    #[serde(default)]
    pub lazy: bool,
    #[serde(default)]
    pub output: Option<String>,
    #[serde(default)]
    pub acceptance: AcceptanceOptions,
    #[serde(default)]
    pub energy: EnergyOptions,
    #[serde(default)]
    pub mixing: MixingOptions,
    #[serde(default)]
    pub comparison: ComparisonOptions,
    #[serde(default)]
    pub overlap: OverlapOptions,
    #[serde(default)]
    pub lemmas: LemmaOptions,
    #[serde(default)]
    pub tensor: TensorOptions,
}

fn one() -> f64 {
    1.0
}

fn one_usize() -> usize {
    1
}

fn default_epsilon() -> f64 {
    0.1
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentKind, dims: Vec<usize>) -> Self {
        Self {
            experiment,
            target: None,
            dims,
            seeds: default_seeds(),
            schedule: Schedule::default(),
            lazy: false,
            output: None,
            acceptance: AcceptanceOptions::default(),
            energy: EnergyOptions::default(),
            mixing: MixingOptions::default(),
            comparison: ComparisonOptions::default(),
            overlap: OverlapOptions::default(),
            lemmas: LemmaOptions::default(),
            tensor: TensorOptions::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| HmcError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path.as_ref())?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("experiment config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() {
            return Err(HmcError::Config("dimension list is empty".into()));
        }
        if self.dims.contains(&0) {
            return Err(HmcError::Config("dimensions must be positive".into()));
        }
        if self.dims.windows(2).any(|w| w[0] >= w[1]) {
            return Err(HmcError::Config("dimension list must be strictly ascending".into()));
        }
        if self.seeds.is_empty() {
            return Err(HmcError::Config("seed list is empty".into()));
        }
        self.mixing.start.validate()?;
        if self.mixing.epsilons.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
            return Err(HmcError::Config("mixing accuracies must lie in (0, 1)".into()));
        }
        if self.mixing.first_exponent > self.mixing.max_exponent {
            return Err(HmcError::Config("first checkpoint exponent exceeds the maximum".into()));
        }
        Ok(())
    }

    /// Target at dimension `d`.
    pub fn target_config(&self, d: usize) -> Result<TargetConfig> {
        let base = self.target.clone().unwrap_or_else(|| TargetConfig::standard_gaussian(d));
        with_dim(base, d)
    }

    pub fn build_target(&self, d: usize) -> Result<Box<dyn Target>> {
        self.target_config(d)?.build()
    }
}

/// Replaces the dimension of a target description.
pub fn with_dim(cfg: TargetConfig, d: usize) -> Result<TargetConfig> {
    Ok(match cfg {
        TargetConfig::Gaussian {
            dim,
            precision_diag,
            precision,
        } => {
            if dim != d && (precision_diag.is_some() || precision.is_some()) {
                return Err(HmcError::Config(
                    "cannot resize a Gaussian with an explicit precision; list a single dimension".into(),
                ));
            }
            TargetConfig::Gaussian {
                dim: d,
                precision_diag,
                precision,
            }
        }
        TargetConfig::Ridge {
            n,
            profile,
            seed,
            smoothness,
            ..
        } => TargetConfig::Ridge {
            dim: d,
            n,
            profile,
            seed,
            smoothness,
        },
        TargetConfig::Logistic {
            dim,
            n,
            alpha,
            seed,
            data_csv,
        } => {
            if dim != d && data_csv.is_some() {
                return Err(HmcError::Config("cannot resize a logistic target read from data".into()));
            }
            TargetConfig::Logistic {
                dim: d,
                n,
                alpha,
                seed,
                data_csv,
            }
        }
        TargetConfig::Constant { value, .. } => TargetConfig::Constant { dim: d, value },
        two_layer @ TargetConfig::TwoLayer { hidden, input_dim, .. } => {
            if hidden * input_dim != d {
                return Err(HmcError::Config(format!(
                    "two-layer network has dimension {}, not {d}",
                    hidden * input_dim
                )));
            }
            two_layer
        }
    })
}
