//! Univariate raw moments and the moment-distance test against the standard
//! Gaussian.

use crate::error::{Error, Result};

use super::GaussianMixture;

/// Raw moments `M_1..M_j_max` of a univariate mixture, by the exact
/// pair/singleton partition sum: `M_j = sum_p binom-count(j,p) sigma^{2p} mu^{j-2p}`
/// per component, where `p` counts pairs.
pub fn raw_moments_1d(mixture: &GaussianMixture, j_max: usize) -> Result<Vec<f64>> {
    if mixture.dim() != 1 {
        return Err(Error::invalid("raw_moments_1d needs a univariate mixture"));
    }
    if j_max > 16 {
        return Err(Error::invalid("raw moments supported up to order 16"));
    }
    let mut out = Vec::with_capacity(j_max);
    for j in 1..=j_max {
        let mut mj = 0.0;
        for (w, c) in mixture.weights().iter().zip(mixture.components()) {
            let mu = c.mean()[0];
            let var = c.cov()[(0, 0)];
            mj += w * gaussian_raw_moment(mu, var, j);
        }
        out.push(mj);
    }
    Ok(out)
}

/// `E[X^j]` for `X ~ N(mu, var)`: partitions of `[j]` into `p` pairs and
/// `j - 2p` singletons contribute `sigma^{2p} mu^{j-2p}` each, and there are
/// `j! / (p! 2^p (j-2p)!)` of them.
pub(crate) fn gaussian_raw_moment(mu: f64, var: f64, j: usize) -> f64 {
    let mut total = 0.0;
    for p in 0..=(j / 2) {
        let count = partition_count(j, p);
        total += count * var.powi(p as i32) * mu.powi((j - 2 * p) as i32);
    }
    total
}

fn partition_count(j: usize, pairs: usize) -> f64 {
    let mut c = 1.0;
    // j! / (pairs! 2^pairs (j - 2 pairs)!) computed incrementally:
    // choose the pairs one at a time.
    let mut remaining = j;
    for _ in 0..pairs {
        c *= (remaining * (remaining - 1)) as f64 / 2.0;
        remaining -= 2;
    }
    for i in 1..=pairs {
        c /= i as f64; // unordered pairs
        let _ = i;
    }
    c
}

/// Outcome of the moment-distance test against `N(0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentDistanceReport {
    /// Whether some moment differs by at least the threshold.
    pub exceeds: bool,
    /// The maximizing moment order (1-based), when any moment was compared.
    pub witness_j: usize,
    pub max_abs_diff: f64,
    pub threshold: f64,
    /// Precondition violations are diagnostics, not failures.
    pub warnings: Vec<String>,
}

/// Tests whether `max_{j <= 2k} |M_j(m) - M_j(N(0,1))| >= beta^(C^{k+1}(k+1)! - 1)`.
/// Under the preconditions this must hold whenever some component has
/// `|mu_i| + |sigma_i^2 - 1| >= beta`.
pub fn moment_distance_check(
    mixture: &GaussianMixture,
    beta: f64,
    d_bound: f64,
    k: usize,
    c: f64,
) -> Result<MomentDistanceReport> {
    if mixture.dim() != 1 {
        return Err(Error::invalid("moment_distance_check is univariate"));
    }
    let mut warnings = Vec::new();
    for (w, comp) in mixture.weights().iter().zip(mixture.components()) {
        if *w < beta {
            warnings.push(format!("weight {w} below beta {beta}"));
        }
        let mu = comp.mean()[0].abs();
        let sigma = comp.cov()[(0, 0)].sqrt();
        if mu > d_bound || sigma > d_bound {
            warnings.push(format!(
                "component parameters (|mu|={mu}, sigma={sigma}) exceed bound {d_bound}"
            ));
        }
    }
    let beta_cap = 1.0 / (2.0 * factorial(2 * k - 1) * d_bound.powi(2 * k as i32 - 3));
    if beta > beta_cap {
        warnings.push(format!("beta {beta} above admissible cap {beta_cap:.3e}"));
    }

    let moments = raw_moments_1d(mixture, 2 * k)?;
    let mut witness_j = 1;
    let mut max_abs_diff = 0.0;
    for (j, mj) in moments.iter().enumerate() {
        let order = j + 1;
        let reference = gaussian_raw_moment(0.0, 1.0, order);
        let diff = (mj - reference).abs();
        if diff > max_abs_diff {
            max_abs_diff = diff;
            witness_j = order;
        }
    }
    let exponent = c.powi(k as i32 + 1) * factorial(k + 1) - 1.0;
    let threshold = beta.powf(exponent);
    Ok(MomentDistanceReport {
        exceeds: max_abs_diff >= threshold,
        witness_j,
        max_abs_diff,
        threshold,
        warnings,
    })
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}
