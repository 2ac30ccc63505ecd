//! Total-variation distance: closed-form upper bounds and a Monte Carlo
//! estimator.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg;

use super::{GaussianComponent, GaussianMixture, MixtureDensity};

const RANK_TOL: f64 = 1e-10;

/// Parameter-distance upper bound on `d_TV(a, b)`:
/// `C * sqrt((mu_a-mu_b)^T S_a^+ (mu_a-mu_b)) + C * ||S_a^{+/2}(S_b-S_a)S_a^{+/2}||_F`,
/// clipped to [0, 1]. A range-space mismatch yields the sentinel 1.
pub fn tv_upper_bound(a: &GaussianComponent, b: &GaussianComponent, c: f64) -> f64 {
    let delta = b.mean() - a.mean();
    let pinv = linalg::sym_pseudo_pow(a.cov(), -1.0, RANK_TOL);
    let pinv_half = linalg::sym_pseudo_pow(a.cov(), -0.5, RANK_TOL);

    // Anything living outside range(S_a) makes the Gaussians mutually singular.
    let rank_a = linalg::sym_rank(a.cov(), RANK_TOL);
    let d = a.dim();
    if rank_a < d {
        let proj = linalg::sym_pseudo_pow(a.cov(), 0.0, RANK_TOL); // projector onto range
        let scale = a.cov().abs().max().max(1.0);
        let mean_out = (&delta - &proj * &delta).norm();
        let cov_out = (b.cov() - &proj * b.cov() * &proj).abs().max();
        if mean_out > 1e-8 * scale.sqrt() || cov_out > 1e-8 * scale {
            return 1.0;
        }
    }

    let mean_term = (delta.dot(&(&pinv * &delta))).max(0.0).sqrt();
    let diff = b.cov() - a.cov();
    let cov_term = (&pinv_half * diff * &pinv_half).norm();
    (c * mean_term + c * cov_term).clamp(0.0, 1.0)
}

/// Frobenius-distance bound `C * (||mu_a-mu_b|| + ||S_a-S_b||_F) / lambda`,
/// valid when all eigenvalues of both covariances are at least `lambda`.
pub fn tv_frobenius_bound(
    a: &GaussianComponent,
    b: &GaussianComponent,
    lambda: f64,
    c: f64,
) -> Result<f64> {
    if lambda <= 0.0 {
        return Err(Error::invalid("eigenvalue lower bound must be positive"));
    }
    let mean_term = (a.mean() - b.mean()).norm();
    let cov_term = (a.cov() - b.cov()).norm();
    Ok((c * (mean_term + cov_term) / lambda).clamp(0.0, 1.0))
}

/// Monte Carlo TV estimate with standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TvEstimate {
    pub value: f64,
    pub stderr: f64,
}

/// Estimates `d_TV(a, b)` by sampling from the balanced mixture `(a+b)/2`;
/// the integrand `|p_a - p_b| / (p_a + p_b) = |tanh((log p_a - log p_b)/2)|`
/// is bounded in [0, 1], which controls the variance. Degenerate covariances
/// are regularized with `floor` on the diagonal and must have `floor > 0`.
pub fn tv_monte_carlo<R: Rng>(
    a: &GaussianMixture,
    b: &GaussianMixture,
    n: usize,
    floor: f64,
    rng: &mut R,
) -> Result<TvEstimate> {
    if n < 1000 {
        return Err(Error::invalid("Monte Carlo TV needs at least 1000 samples"));
    }
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
            context: "mixture dimensions".into(),
        });
    }
    let da = MixtureDensity::new(a, floor)?;
    let db = MixtureDensity::new(b, floor)?;
    let fa: Vec<DMatrix<f64>> = a.components().iter().map(|c| c.sampling_factor()).collect();
    let fb: Vec<DMatrix<f64>> = b.components().iter().map(|c| c.sampling_factor()).collect();
    let d = a.dim();

    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..n {
        let from_a = rng.gen::<f64>() < 0.5;
        let (mix, factors) = if from_a { (a, &fa) } else { (b, &fb) };
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut idx = mix.len() - 1;
        for (i, w) in mix.weights().iter().enumerate() {
            acc += w;
            if u < acc {
                idx = i;
                break;
            }
        }
        let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
        let x = mix.components()[idx].mean() + &factors[idx] * z;
        let t = (0.5 * (da.logp(&x) - db.logp(&x))).tanh().abs();
        sum += t;
        sum_sq += t * t;
    }
    let nf = n as f64;
    let mean = sum / nf;
    let var = (sum_sq / nf - mean * mean).max(0.0);
    Ok(TvEstimate {
        value: mean,
        stderr: (var / nf).sqrt(),
    })
}
