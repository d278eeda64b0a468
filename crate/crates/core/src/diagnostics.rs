//! Chain diagnostics: integrated autocorrelation time, effective sample size and a
//! projected-histogram estimator of total variation distance.

use crate::error::{HmcError, Result};
use crate::linalg;
use crate::rng::{stream_rng, unit_vector};
use nalgebra::DMatrix;
use serde::Serialize;

/// Integrated autocorrelation time `1 + 2Σρ_k` truncated by the initial positive
/// sequence rule: pairs `ρ_{2m} + ρ_{2m+1}` are summed while they stay positive.
pub fn iact(series: &[f64]) -> f64 {
    let n = series.len();
    if n < 4 {
        return f64::NAN;
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = series.iter().map(|x| x - mean).collect();
    let autocov = |lag: usize| -> f64 {
        centered[..n - lag]
            .iter()
            .zip(&centered[lag..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / n as f64
    };
    let c0 = autocov(0);
    if c0 == 0.0 {
        return f64::NAN;
    }
    let mut total = 0.0;
    let mut m = 0;
    while 2 * m + 1 < n {
        let pair = (autocov(2 * m) + autocov(2 * m + 1)) / c0;
        if pair <= 0.0 {
            break;
        }
        total += pair;
        m += 1;
    }
    2.0 * total - 1.0
}

/// `n / τ`
pub fn ess(series: &[f64]) -> f64 {
    series.len() as f64 / iact(series)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Inverse of [`normal_cdf`] by bisection.
pub fn normal_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile level must lie in (0, 1)");
    let (mut lo, mut hi) = (-40.0f64, 40.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if normal_cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Symmetry test of a binned transition-count matrix `counts[a][b]` (start bin `a`,
/// end bin `b`) from transitions started at stationarity.
///
/// For each off-diagonal pair with at least `min_hits` transitions,
/// `z = (N_ab − N_ba)/√(N_ab + N_ba)` is approximately standard normal under detailed
/// balance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetailedBalanceReport {
    pub pairs: usize,
    pub max_abs_z: f64,
    /// Pairs with `|z| > 3`.
    pub exceed_3_sigma: usize,
    /// `pairs · P(|Z| > 3)`
    pub expected_exceed_3_sigma: f64,
    /// Per-pair threshold keeping the family-wise error at `P(|Z| > 3)`.
    pub bonferroni_z: f64,
    /// `Σ z²`, approximately `χ²` with `pairs` degrees of freedom.
    pub chi_square: f64,
    /// `(Σz² − pairs)/√(2·pairs)`
    pub chi_square_z: f64,
}

impl DetailedBalanceReport {
    pub fn from_counts(counts: &[Vec<u64>], min_hits: u64) -> Self {
        let mut zs = Vec::new();
        for a in 0..counts.len() {
            for b in (a + 1)..counts.len() {
                let (x, y) = (counts[a][b], counts[b][a]);
                if x + y >= min_hits && x + y > 0 {
                    zs.push((x as f64 - y as f64) / ((x + y) as f64).sqrt());
                }
            }
        }
        let pairs = zs.len();
        let tail3 = 2.0 * normal_cdf(-3.0);
        let chi_square: f64 = zs.iter().map(|z| z * z).sum();
        Self {
            pairs,
            max_abs_z: zs.iter().fold(0.0, |m: f64, z| m.max(z.abs())),
            exceed_3_sigma: zs.iter().filter(|z| z.abs() > 3.0).count(),
            expected_exceed_3_sigma: pairs as f64 * tail3,
            bonferroni_z: if pairs > 0 {
                -normal_quantile(tail3 / (2.0 * pairs as f64))
            } else {
                f64::INFINITY
            },
            chi_square,
            chi_square_z: if pairs > 0 {
                (chi_square - pairs as f64) / (2.0 * pairs as f64).sqrt()
            } else {
                0.0
            },
        }
    }

    /// Every pair within 3σ, with no multiplicity correction.
    pub fn per_pair_ok(&self) -> bool {
        self.exceed_3_sigma == 0
    }

    /// Family-wise version at the 3σ error level plus the aggregate χ² test at 3σ.
    pub fn family_wise_ok(&self) -> bool {
        self.max_abs_z <= self.bonferroni_z && self.chi_square_z.abs() <= 3.0
    }
}

/// Averages histogram TV over random 1D projections against an exact centred
/// Gaussian marginal.
///
/// Each projection `uᵀq` is binned into `bins` equal cells on `±5` marginal standard
/// deviations plus one tail cell on each side. The estimate is biased upward by
/// roughly `½ Σ_b √(2p_b / (πn))` for `n` samples.
#[derive(Debug, Clone)]
pub struct ProjectedTv {
    directions: Vec<Vec<f64>>,
    sds: Vec<f64>,
    bins: usize,
    probs: Vec<Vec<f64>>,
}

const HALF_WIDTH_SDS: f64 = 5.0;

impl ProjectedTv {
    /// Reference `𝒩(0, Σ)`; directions drawn on stream `(seed, 0)`.
    pub fn gaussian(covariance: &DMatrix<f64>, n_projections: usize, bins: usize, seed: u64) -> Result<Self> {
        let d = covariance.nrows();
        if d == 0 || covariance.ncols() != d {
            return Err(HmcError::InvalidInput("covariance must be square and nonempty".into()));
        }
        if n_projections == 0 || bins == 0 {
            return Err(HmcError::InvalidInput("need at least one projection and one bin".into()));
        }
        let mut rng = stream_rng(seed, 0);
        let directions: Vec<Vec<f64>> = (0..n_projections).map(|_| unit_vector(&mut rng, d)).collect();
        let sds: Vec<f64> = directions
            .iter()
            .map(|u| {
                let v = nalgebra::DVector::from_column_slice(u);
                (v.transpose() * covariance * &v)[(0, 0)].sqrt()
            })
            .collect();
        let edges: Vec<f64> = (0..=bins)
            .map(|b| -HALF_WIDTH_SDS + 2.0 * HALF_WIDTH_SDS * b as f64 / bins as f64)
            .collect();
        let mut cell = vec![normal_cdf(edges[0])];
        cell.extend(edges.windows(2).map(|w| normal_cdf(w[1]) - normal_cdf(w[0])));
        cell.push(1.0 - normal_cdf(edges[bins]));
        let probs = vec![cell; n_projections];
        Ok(Self {
            directions,
            sds,
            bins,
            probs,
        })
    }

    pub fn isotropic(d: usize, variance: f64, n_projections: usize, bins: usize, seed: u64) -> Result<Self> {
        Self::gaussian(&(DMatrix::identity(d, d) * variance), n_projections, bins, seed)
    }

    pub fn n_projections(&self) -> usize {
        self.directions.len()
    }

    fn cell(&self, z: f64) -> usize {
        if z < -HALF_WIDTH_SDS {
            0
        } else if z >= HALF_WIDTH_SDS {
            self.bins + 1
        } else {
            let b = ((z + HALF_WIDTH_SDS) / (2.0 * HALF_WIDTH_SDS) * self.bins as f64) as usize;
            1 + b.min(self.bins - 1)
        }
    }

    /// Approximate bias of [`Self::estimate`] at `n` exact samples, `½ Σ_b √(2p_b(1−p_b)/(πn))`
    /// averaged over projections.
    pub fn expected_bias(&self, n: usize) -> f64 {
        let nf = n as f64;
        let total: f64 = self
            .probs
            .iter()
            .map(|p| 0.5 * p.iter().map(|&pb| (2.0 * pb * (1.0 - pb) / (std::f64::consts::PI * nf)).sqrt()).sum::<f64>())
            .sum();
        total / self.probs.len() as f64
    }

    /// Mean over projections of `½ Σ_b |p̂_b − p_b|`.
    pub fn estimate<'a, I>(&self, samples: I) -> f64
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut counts = vec![vec![0u64; self.bins + 2]; self.directions.len()];
        let mut n = 0u64;
        for q in samples {
            for (j, u) in self.directions.iter().enumerate() {
                let z = linalg::dot(u, q) / self.sds[j];
                counts[j][self.cell(z)] += 1;
            }
            n += 1;
        }
        if n == 0 {
            return f64::NAN;
        }
        let nf = n as f64;
        let total: f64 = counts
            .iter()
            .zip(&self.probs)
            .map(|(c, p)| 0.5 * c.iter().zip(p).map(|(&ci, &pi)| (ci as f64 / nf - pi).abs()).sum::<f64>())
            .sum();
        total / self.directions.len() as f64
    }
}

/// Two-sample version: histogram TV between the projections of `a` and `b`, averaged
/// over `n_projections` random directions, using `bins` equal cells spanning the
/// pooled range.
pub fn two_sample_projected_tv(a: &[Vec<f64>], b: &[Vec<f64>], n_projections: usize, bins: usize, seed: u64) -> f64 {
    if a.is_empty() || b.is_empty() || bins == 0 {
        return f64::NAN;
    }
    let d = a[0].len();
    let mut rng = stream_rng(seed, 0);
    let mut total = 0.0;
    for _ in 0..n_projections {
        let u = unit_vector(&mut rng, d);
        let pa: Vec<f64> = a.iter().map(|q| linalg::dot(&u, q)).collect();
        let pb: Vec<f64> = b.iter().map(|q| linalg::dot(&u, q)).collect();
        let lo = pa.iter().chain(&pb).cloned().fold(f64::INFINITY, f64::min);
        let hi = pa.iter().chain(&pb).cloned().fold(f64::NEG_INFINITY, f64::max);
        let width = (hi - lo).max(1e-300);
        let hist = |xs: &[f64]| {
            let mut h = vec![0.0; bins];
            for &x in xs {
                let k = (((x - lo) / width) * bins as f64) as usize;
                h[k.min(bins - 1)] += 1.0 / xs.len() as f64;
            }
            h
        };
        let (ha, hb) = (hist(&pa), hist(&pb));
        total += 0.5 * ha.iter().zip(&hb).map(|(x, y)| (x - y).abs()).sum::<f64>();
    }
    total / n_projections as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::standard_normal_vec;
    use rand::Rng;

    fn ar1(phi: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = stream_rng(seed, 0);
        let mut x = 0.0;
        let s = (1.0 - phi * phi).sqrt();
        (0..n)
            .map(|_| {
                let e: f64 = standard_normal_vec(&mut rng, 1)[0];
                x = phi * x + s * e;
                x
            })
            .collect()
    }

    #[test]
    fn iact_of_ar1_matches_closed_form() {
        // τ = (1 + φ)/(1 − φ)
        let tau = iact(&ar1(0.5, 200_000, 3));
        assert!((tau - 3.0).abs() < 0.15, "{tau}");
        let tau = iact(&ar1(0.0, 200_000, 4));
        assert!((tau - 1.0).abs() < 0.05, "{tau}");
    }

    #[test]
    fn iact_degenerate_inputs() {
        assert!(iact(&[1.0, 2.0]).is_nan());
        assert!(iact(&[1.0; 10]).is_nan());
    }

    #[test]
    fn normal_cdf_values() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert!((normal_cdf(1.959963984540054) - 0.975).abs() < 1e-12);
    }

    #[test]
    fn projected_tv_small_for_exact_and_large_for_shifted() {
        let tv = ProjectedTv::isotropic(3, 1.0, 16, 50, 1).unwrap();
        let mut rng = stream_rng(9, 0);
        let good: Vec<Vec<f64>> = (0..40_000).map(|_| standard_normal_vec(&mut rng, 3)).collect();
        let bad: Vec<Vec<f64>> = (0..40_000)
            .map(|_| standard_normal_vec(&mut rng, 3).iter().map(|x| 0.3 * x + rng.random::<f64>()).collect())
            .collect();
        let e_good = tv.estimate(good.iter().map(|v| v.as_slice()));
        let e_bad = tv.estimate(bad.iter().map(|v| v.as_slice()));
        assert!(e_good < 0.03, "{e_good}");
        assert!(e_bad > 0.3, "{e_bad}");
    }

    #[test]
    fn exact_sample_tv_matches_predicted_bias() {
        let tv = ProjectedTv::isotropic(4, 1.0, 32, 200, 2).unwrap();
        let mut rng = stream_rng(10, 0);
        let n = 8192;
        let xs: Vec<Vec<f64>> = (0..n).map(|_| standard_normal_vec(&mut rng, 4)).collect();
        let e = tv.estimate(xs.iter().map(|v| v.as_slice()));
        let bias = tv.expected_bias(n);
        assert!((e / bias - 1.0).abs() < 0.15, "{e} vs {bias}");
    }

    #[test]
    fn quantile_inverts_cdf() {
        for &p in &[1e-6, 0.025, 0.5, 0.9] {
            assert!((normal_cdf(normal_quantile(p)) - p).abs() < 1e-12);
        }
    }

    #[test]
    fn balance_report_on_symmetric_counts() {
        let counts = vec![vec![0, 200, 150], vec![200, 0, 5], vec![150, 5, 0]];
        let r = DetailedBalanceReport::from_counts(&counts, 100);
        assert_eq!(r.pairs, 2);
        assert_eq!(r.max_abs_z, 0.0);
        assert!(r.per_pair_ok());
        let skewed = vec![vec![0, 400], vec![100, 0]];
        let r = DetailedBalanceReport::from_counts(&skewed, 100);
        assert!(!r.per_pair_ok() && !r.family_wise_ok());
    }

    #[test]
    fn two_sample_tv_of_identical_sets_is_zero() {
        let mut rng = stream_rng(2, 0);
        let a: Vec<Vec<f64>> = (0..500).map(|_| standard_normal_vec(&mut rng, 2)).collect();
        assert_eq!(two_sample_projected_tv(&a, &a, 8, 20, 0), 0.0);
    }
}
