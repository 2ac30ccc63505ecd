//! Diagnostic check that a labeled synthetic sample is "good": per-component
//! directional moments and mixture moment tensors concentrate at the rate the
//! estimation contracts assume.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::hermite::{raw_moment_tensor, DenseTensor};
use crate::model::GaussianMixture;

/// One directional moment comparison.
#[derive(Debug, Clone)]
pub struct DirectionalCheck {
    pub component: usize,
    pub order: usize,
    pub deviation: f64,
    pub budget: f64,
}

/// Outcome of the good-sample diagnostic.
#[derive(Debug, Clone)]
pub struct GoodSampleReport {
    pub pass: bool,
    /// Worst directional margin (budget - deviation); negative means failure.
    pub worst_margin: f64,
    pub directional_failures: usize,
    pub tensor_failures: usize,
    /// Whether `n` meets the sufficient-sample-size rate `k t^t d^t / gamma^3`.
    pub sample_size_ok: bool,
    pub checks: Vec<DirectionalCheck>,
}

/// Checks directional moment closeness along seeded random directions and
/// mixture raw-moment-tensor closeness against the `gamma` budget. Labels are
/// the generating components of a synthetic sample; points with out-of-range
/// labels (adversarial points) are ignored. Diagnostic only.
pub fn good_sample_diagnostic<R: Rng>(
    points: &[DVector<f64>],
    labels: &[usize],
    mixture: &GaussianMixture,
    gamma: f64,
    t: usize,
    guard: usize,
    rng: &mut R,
) -> Result<GoodSampleReport> {
    if points.len() != labels.len() {
        return Err(Error::invalid("labels must align with points"));
    }
    if points.is_empty() {
        return Err(Error::Empty("good_sample_diagnostic".into()));
    }
    let n = points.len() as f64;
    let d = mixture.dim();
    let k = mixture.len();

    let mut checks = Vec::new();
    let mut directional_failures = 0;
    let mut worst_margin = f64::INFINITY;

    let n_dirs = 8;
    for _ in 0..n_dirs {
        let mut v = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = v.norm();
        if norm == 0.0 {
            continue;
        }
        v /= norm;
        for (i, comp) in mixture.components().iter().enumerate() {
            let w = mixture.weights()[i];
            if w < gamma {
                continue;
            }
            let dir_var = (v.transpose() * comp.cov() * &v)[(0, 0)].max(0.0);
            for m in 1..=t {
                // Empirical (1/n) sum_{x in X_i} <v, x - mu_i>^m.
                let mut emp = 0.0;
                for (p, &l) in points.iter().zip(labels) {
                    if l == i {
                        emp += v.dot(&(p - comp.mean())).powi(m as i32);
                    }
                }
                emp /= n;
                let expected = if m % 2 == 1 {
                    0.0
                } else {
                    w * double_factorial(m - 1) * dir_var.powi(m as i32 / 2)
                };
                let deviation = (emp - expected).abs();
                let budget = if gamma.is_infinite() {
                    f64::INFINITY
                } else {
                    w * gamma * factorial(m) * dir_var.powf(m as f64 / 2.0)
                };
                let margin = budget - deviation;
                if margin < worst_margin {
                    worst_margin = margin;
                }
                if deviation > budget {
                    directional_failures += 1;
                }
                checks.push(DirectionalCheck {
                    component: i,
                    order: m,
                    deviation,
                    budget,
                });
            }
        }
    }

    // Mixture-level raw moment tensors against the gamma^2 m^m B^m d^m budget.
    let b = mixture
        .components()
        .iter()
        .map(|c| {
            let mu2 = c.mean().norm_squared();
            let op = crate::linalg::sym_eigen_sorted(c.cov())
                .0
                .first()
                .copied()
                .unwrap_or(0.0);
            mu2.max(op)
        })
        .fold(1.0f64, f64::max);
    let mut tensor_failures = 0;
    let t_tensor = t.min(4);
    for m in 1..=t_tensor {
        let mut emp = DenseTensor::zeros(d, m, guard)?;
        let mut raw = vec![0usize; m];
        let mut scratch = vec![0.0; emp.len()];
        for p in points.iter() {
            // x^{(x) m} accumulated entry-wise.
            for (flat, slot) in scratch.iter_mut().enumerate() {
                emp.unflatten(flat, &mut raw);
                let mut prod = 1.0;
                for &c in &raw {
                    prod *= p[c];
                }
                *slot += prod;
            }
        }
        for (flat, slot) in scratch.iter().enumerate() {
            emp.data_mut()[flat] = slot / n;
        }
        let mut expected = DenseTensor::zeros(d, m, guard)?;
        for (w, c) in mixture.weights().iter().zip(mixture.components()) {
            expected.axpy(*w, &raw_moment_tensor(c, m, guard)?)?;
        }
        emp.axpy(-1.0, &expected)?;
        let budget = if gamma.is_infinite() {
            f64::INFINITY
        } else {
            gamma
                * (m as f64).powf(m as f64 / 2.0).max(1.0)
                * b.powf(m as f64 / 2.0)
                * (d as f64).powf(m as f64 / 2.0)
        };
        if emp.norm() > budget {
            tensor_failures += 1;
        }
    }

    let sample_size_ok = if gamma.is_infinite() {
        true
    } else {
        let needed = k as f64 * (t as f64).powf(t as f64) * (d as f64).powi(t as i32)
            / gamma.powi(3);
        n >= needed.min(f64::MAX)
    };

    Ok(GoodSampleReport {
        pass: directional_failures == 0 && tensor_failures == 0,
        worst_margin,
        directional_failures,
        tensor_failures,
        sample_size_ok,
        checks,
    })
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

fn double_factorial(n: usize) -> f64 {
    let mut v = 1.0;
    let mut i = n as i64;
    while i > 1 {
        v *= i as f64;
        i -= 2;
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hermite::DEFAULT_ENTRY_GUARD as GUARD;
    use crate::model::{sample_mixture, GaussianComponent};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn large_clean_sample_passes() {
        let m = GaussianMixture::single(GaussianComponent::standard(2));
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let (x, l) = sample_mixture(&m, 60_000, &mut rng);
        let rep = good_sample_diagnostic(&x, &l, &m, 0.05, 3, GUARD, &mut rng).unwrap();
        assert!(rep.pass, "failures: {} directional", rep.directional_failures);
    }

    #[test]
    fn tiny_sample_fails_with_margin() {
        let m = GaussianMixture::single(GaussianComponent::standard(2));
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let (x, l) = sample_mixture(&m, 10, &mut rng);
        let rep = good_sample_diagnostic(&x, &l, &m, 0.001, 4, GUARD, &mut rng).unwrap();
        assert!(!rep.pass);
        assert!(rep.worst_margin < 0.0);
        assert!(!rep.sample_size_ok);
    }

    #[test]
    fn infinite_gamma_always_passes() {
        let m = GaussianMixture::single(GaussianComponent::standard(2));
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let (x, l) = sample_mixture(&m, 10, &mut rng);
        let rep = good_sample_diagnostic(&x, &l, &m, f64::INFINITY, 4, GUARD, &mut rng).unwrap();
        assert!(rep.pass);
        assert!(rep.sample_size_ok);
    }
}
