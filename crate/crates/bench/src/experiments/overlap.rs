use super::{seed_at, Stationary};
use crate::config::ExperimentConfig;
use hmclab::leapfrog::momentum_jacobian;
use hmclab::linalg;
use hmclab::overlap::{kl_between_proposals, kl_lemma_bound, kl_proof_bound, pinsker_tv};
use hmclab::rng::{derive_seed, standard_normal_vec, stream_rng, unit_vector};
use hmclab::target::GaussianTarget;
use hmclab::{HmcError, Result, Target};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlapRow {
    pub seed: u64,
    pub d: usize,
    pub instance: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub eta: f64,
    pub separation: f64,
    pub kl_estimate: f64,
    pub kl_std_error: f64,
    /// Exact for Gaussian targets, empty otherwise.
    pub kl_closed_form: Option<f64>,
    pub z_score: Option<f64>,
    /// Estimate of `KL(q₀, q₀)`.
    pub kl_self: f64,
    pub lemma_bound: Option<f64>,
    pub proof_bound: Option<f64>,
    pub pinsker_tv: f64,
    /// Extreme eigenvalue moduli of the inverse momentum Jacobian, times `Kη`.
    pub inverse_jacobian_min: f64,
    pub inverse_jacobian_max: f64,
}

/// Position blocks `(A, B)` of the `K`-th power of the leapfrog map for `f = ½ qᵀΛq`,
/// so that the endpoint is `A q₀ + B p₀`.
fn gaussian_position_blocks(lambda: &DMatrix<f64>, k: usize, eta: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let d = lambda.nrows();
    let id = DMatrix::<f64>::identity(d, d);
    let diag = &id - lambda * (0.5 * eta * eta);
    let lower = -(lambda * eta) + lambda * lambda * (eta.powi(3) / 4.0);
    let mut step = DMatrix::<f64>::zeros(2 * d, 2 * d);
    step.view_mut((0, 0), (d, d)).copy_from(&diag);
    step.view_mut((0, d), (d, d)).copy_from(&(&id * eta));
    step.view_mut((d, 0), (d, d)).copy_from(&lower);
    step.view_mut((d, d), (d, d)).copy_from(&diag);
    let mut m = DMatrix::<f64>::identity(2 * d, 2 * d);
    for _ in 0..k {
        m = &step * m;
    }
    (m.view((0, 0), (d, d)).into_owned(), m.view((0, d), (d, d)).into_owned())
}

/// `KL = ½‖B⁻¹A(q₀ − q̃₀)‖²` between the Gaussian proposal laws.
pub fn gaussian_kl_closed_form(g: &GaussianTarget, k: usize, eta: f64, q0: &[f64], q0t: &[f64]) -> Result<f64> {
    let (a, b) = gaussian_position_blocks(&g.precision_matrix(), k, eta);
    let dq = DVector::from_vec(linalg::sub(q0, q0t));
    let z = b
        .lu()
        .solve(&(a * dq))
        .ok_or_else(|| HmcError::SingularJacobian("position block is singular".into()))?;
    Ok(0.5 * z.norm_squared())
}

/// Monte Carlo KL between proposals from nearby starts, against the closed form where
/// one exists, plus the eigenvalue range of the inverse momentum Jacobian.
pub fn run_overlap_check(cfg: &ExperimentConfig) -> Result<Vec<OverlapRow>> {
    let opts = &cfg.overlap;
    if opts.instances == 0 || opts.max_leapfrog == 0 {
        return Err(HmcError::Config("overlap check needs instances and leapfrog steps".into()));
    }
    let jobs: Vec<(u64, usize, usize)> = cfg
        .seeds
        .iter()
        .flat_map(|&s| cfg.dims.iter().flat_map(move |&d| (0..opts.instances).map(move |i| (s, d, i))))
        .collect();
    jobs.par_iter()
        .map(|&(seed, d, i)| {
            let st = Stationary::new(cfg, d)?;
            let t = st.target();
            let gaussian = cfg.target_config(d)?.build_gaussian().transpose()?;
            let base = derive_seed(seed_at(seed, d), i as u64);
            let mut rng = stream_rng(base, 0);
            let k = rng.random_range(1..=opts.max_leapfrog);
            let l = t.smoothness();
            // Kη√L between 0.05 and 0.25
            let eta = rng.random_range(0.05..0.25) / (k as f64 * l.sqrt());
            let q0 = standard_normal_vec(&mut rng, d);
            let dir = unit_vector(&mut rng, d);
            let sep = opts.separation * k as f64 * eta;
            let q0t: Vec<f64> = q0.iter().zip(&dir).map(|(a, b)| a + sep * b).collect();
            let kl = kl_between_proposals(t, &q0, &q0t, k, eta, opts.n_mc, derive_seed(base, 1))?;
            let kl_self = kl_between_proposals(t, &q0, &q0, k, eta, 2, derive_seed(base, 2))?.estimate;
            let closed = gaussian
                .as_ref()
                .map(|g| gaussian_kl_closed_form(g, k, eta, &q0, &q0t))
                .transpose()?;
            let z = closed.map(|c| (kl.estimate - c) / kl.std_error.max(f64::MIN_POSITIVE));
            let gamma = t.hessian_lipschitz();
            let p = standard_normal_vec(&mut rng, d);
            let (lo, hi) = inverse_jacobian_range(t, &q0, &p, k, eta)?;
            Ok(OverlapRow {
                seed,
                d,
                instance: i,
                k,
                eta,
                separation: sep,
                kl_estimate: kl.estimate,
                kl_std_error: kl.std_error,
                kl_closed_form: closed,
                z_score: z,
                kl_self,
                lemma_bound: gamma.map(|g| kl_lemma_bound(k, eta, g, l)),
                proof_bound: gamma.map(|g| kl_proof_bound(k, eta, g, l)),
                pinsker_tv: pinsker_tv(kl.estimate.max(0.0)),
                inverse_jacobian_min: lo,
                inverse_jacobian_max: hi,
            })
        })
        .collect()
}

fn inverse_jacobian_range(t: &dyn Target, q0: &[f64], p: &[f64], k: usize, eta: f64) -> Result<(f64, f64)> {
    let jf = momentum_jacobian(t, q0, p, k, eta)?;
    let inv = jf
        .try_inverse()
        .ok_or_else(|| HmcError::SingularJacobian("momentum Jacobian is singular".into()))?;
    let keta = k as f64 * eta;
    let mods: Vec<f64> = inv.complex_eigenvalues().iter().map(|z| z.norm() * keta).collect();
    Ok((
        mods.iter().cloned().fold(f64::INFINITY, f64::min),
        mods.iter().cloned().fold(0.0, f64::max),
    ))
}
