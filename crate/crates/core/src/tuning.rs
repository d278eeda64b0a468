//! Step size and trajectory length from the mixing-time theory, and the constraint
//! inequalities those choices must satisfy. Natural logarithms throughout.

use crate::error::{precondition, Result};
use serde::{Deserialize, Serialize};

/// Problem constants and the two universal-constant knobs `c`, `c′`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryParams {
    /// Smoothness `L`.
    pub l: f64,
    /// Hessian-Lipschitz coefficient `γ`.
    pub gamma: f64,
    pub dim: usize,
    /// Warmness `M ≥ 1` of the initial distribution.
    pub warmness: f64,
    /// Target TV accuracy `ε ∈ (0, 1)`.
    pub epsilon: f64,
    /// Isoperimetric coefficient `ψ_μ`, user supplied.
    #[serde(default = "one")]
    pub psi: f64,
    #[serde(default = "one")]
    pub c: f64,
    #[serde(default = "one")]
    pub c_prime: f64,
}

fn one() -> f64 {
    1.0
}

impl TheoryParams {
    pub fn new(l: f64, gamma: f64, dim: usize, warmness: f64, epsilon: f64) -> Self {
        Self {
            l,
            gamma,
            dim,
            warmness,
            epsilon,
            psi: 1.0,
            c: 1.0,
            c_prime: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        precondition(self.l > 0.0 && self.l.is_finite(), || format!("L must be positive, got {}", self.l))?;
        precondition(self.gamma >= 0.0 && self.gamma.is_finite(), || {
            format!("gamma must be nonnegative, got {}", self.gamma)
        })?;
        precondition(self.dim >= 1, || "dimension must be positive".into())?;
        precondition(self.warmness >= 1.0 && self.warmness.is_finite(), || {
            format!("warmness must be finite and at least 1, got {}", self.warmness)
        })?;
        precondition(self.epsilon > 0.0 && self.epsilon < 1.0, || {
            format!("epsilon must lie in (0, 1), got {}", self.epsilon)
        })?;
        precondition(self.psi > 0.0, || format!("psi must be positive, got {}", self.psi))?;
        precondition(self.c > 0.0 && self.c_prime > 0.0, || "constants c, c' must be positive".into())
    }

    /// `ln(M/ε)`
    pub fn log_term(&self) -> f64 {
        (self.warmness / self.epsilon).ln()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TunedParams {
    pub step_size: f64,
    pub n_leapfrog: usize,
    pub ell: usize,
    pub d_ell: usize,
    /// `ln(M/ε) / (K²η²ψ²)`, up to a universal constant.
    pub predicted_mixing_steps: f64,
    /// `K` times the predicted mixing steps.
    pub predicted_gradient_complexity: f64,
}

/// `ℓ = 2⌈c′ ln(M/ε)⌉`, at least 2.
pub fn ell_for(warmness: f64, epsilon: f64, c_prime: f64) -> Result<usize> {
    precondition(warmness >= 1.0 && warmness.is_finite(), || {
        format!("warmness must be finite and at least 1, got {warmness}")
    })?;
    precondition(epsilon > 0.0 && epsilon < 1.0, || format!("epsilon must lie in (0, 1), got {epsilon}"))?;
    precondition(c_prime > 0.0, || "c' must be positive".into())?;
    let x = c_prime * (warmness / epsilon).ln();
    // guard against ln(e²) landing a hair above 2
    let k = (x - 1e-12 * x.abs().max(1.0)).ceil().max(1.0);
    Ok(2 * k as usize)
}

/// `d_ℓ = d + 2(ℓ − 1)`
pub fn d_ell(dim: usize, ell: usize) -> usize {
    dim + 2 * ell.saturating_sub(1)
}

/// `Υ_ℓ = Υ + 2(ℓ − 1)L`
pub fn upsilon_ell(upsilon: f64, l: f64, ell: usize) -> f64 {
    upsilon + 2.0 * ell.saturating_sub(1) as f64 * l
}

fn finish(tp: &TheoryParams, eta: f64, k: usize) -> Result<TunedParams> {
    let ell = ell_for(tp.warmness, tp.epsilon, tp.c_prime)?;
    let kf = k as f64;
    let mixing = tp.log_term() / (kf * kf * eta * eta * tp.psi * tp.psi);
    Ok(TunedParams {
        step_size: eta,
        n_leapfrog: k,
        ell,
        d_ell: d_ell(tp.dim, ell),
        predicted_mixing_steps: mixing,
        predicted_gradient_complexity: kf * mixing,
    })
}

/// `η² = c / (L (d + log)^{1/2} (γ+1)^{2/3} log^{3/2})` with `log = ln(M/ε)`, and
/// `K = max(1, round(c′ / (2√L (γ+1)^{1/3} η)))`.
pub fn best_hmc_params(tp: &TheoryParams) -> Result<TunedParams> {
    tp.validate()?;
    let lg = tp.log_term();
    let g1 = tp.gamma + 1.0;
    let eta2 = tp.c / (tp.l * (tp.dim as f64 + lg).sqrt() * g1.powf(2.0 / 3.0) * lg.powf(1.5));
    let eta = eta2.sqrt();
    let k = (tp.c_prime / (2.0 * tp.l.sqrt() * g1.cbrt() * eta)).round().max(1.0) as usize;
    finish(tp, eta, k)
}

/// `η² = c / (L (d + log)^{3/7} log^{3/7})`.
pub fn mala_step_size(tp: &TheoryParams) -> Result<f64> {
    tp.validate()?;
    let lg = tp.log_term();
    let eta2 = tp.c / (tp.l * (tp.dim as f64 + lg).powf(3.0 / 7.0) * lg.powf(3.0 / 7.0));
    Ok(eta2.sqrt())
}

/// MALA parameters: the step size above with `K = 1`.
pub fn mala_params(tp: &TheoryParams) -> Result<TunedParams> {
    let eta = mala_step_size(tp)?;
    finish(tp, eta, 1)
}

/// Both constraint inequalities with their sides and margins (bound − LHS).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintCheck {
    pub ok: bool,
    /// `Kη√L`
    pub lhs_first: f64,
    /// `1 / (2γ^{1/3})`, infinite for `γ = 0`.
    pub bound_first: f64,
    pub margin_first: f64,
    /// `K(η³L^{3/2}d_ℓ^{1/2} + η⁵L^{5/2}d_ℓ + η⁷L^{7/2}d_ℓ^{3/2})`
    pub lhs_second: f64,
    /// `1 / (c(γ+1)ℓ^{3/2})`
    pub bound_second: f64,
    pub margin_second: f64,
}

pub fn check_theorem_constraints(eta: f64, k: usize, tp: &TheoryParams, ell: usize) -> ConstraintCheck {
    let kf = k as f64;
    let sl = tp.l.sqrt();
    let lhs_first = kf * eta * sl;
    let bound_first = if tp.gamma == 0.0 {
        f64::INFINITY
    } else {
        1.0 / (2.0 * tp.gamma.cbrt())
    };
    let dl = d_ell(tp.dim, ell) as f64;
    let x = eta * sl;
    let lhs_second = kf * (x.powi(3) * dl.sqrt() + x.powi(5) * dl + x.powi(7) * dl.powf(1.5));
    let bound_second = 1.0 / (tp.c * (tp.gamma + 1.0) * (ell as f64).powf(1.5));
    let margin_first = bound_first - lhs_first;
    let margin_second = bound_second - lhs_second;
    ConstraintCheck {
        ok: margin_first >= 0.0 && margin_second >= 0.0,
        lhs_first,
        bound_first,
        margin_first,
        lhs_second,
        bound_second,
        margin_second,
    }
}
