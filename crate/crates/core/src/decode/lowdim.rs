//! Desk-scale low-dimensional mixture learner: a multi-restart trimmed-EM /
//! moment-matching hybrid with merging of indistinguishable components. It
//! stands in for an external subdivision learner behind a stable interface;
//! swapping in a different implementation requires no other changes.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{tv_frobenius_bound, GaussianComponent};

/// Learned mixture in subspace coordinates.
#[derive(Debug, Clone)]
pub struct SubspaceMixture {
    pub weights: Vec<f64>,
    pub means: Vec<DVector<f64>>,
    pub covs: Vec<DMatrix<f64>>,
    pub converged: bool,
}

/// Knobs for the learner.
#[derive(Debug, Clone)]
pub struct LowDimConfig {
    pub restarts: usize,
    pub em_iters: usize,
    pub tol: f64,
    /// Components closer than this in TV are merged into one.
    pub merge_tol: f64,
    /// Covariance regularization floor, as a fraction of trace.
    pub reg_scale: f64,
    /// Maximum subspace dimension the learner accepts.
    pub max_dim: usize,
}

impl Default for LowDimConfig {
    fn default() -> Self {
        LowDimConfig {
            restarts: 8,
            em_iters: 200,
            tol: 1e-7,
            merge_tol: 0.05,
            reg_scale: 1e-9,
            max_dim: 6,
        }
    }
}

/// Learns a k-component mixture from points in a low-dimensional subspace.
/// `eps1 > 0` trims that fraction of lowest-likelihood points from every
/// M-step, which keeps sparse contamination from dragging the moments.
pub fn low_dim_learn<R: Rng>(
    points: &[DVector<f64>],
    k: usize,
    eps1: f64,
    cfg: &LowDimConfig,
    rng: &mut R,
) -> Result<SubspaceMixture> {
    let n = points.len();
    if n == 0 {
        return Err(Error::Empty("low_dim_learn".into()));
    }
    let d = points[0].len();
    if d > cfg.max_dim {
        return Err(Error::invalid(format!(
            "subspace dimension {d} exceeds the learner cap {}",
            cfg.max_dim
        )));
    }
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if k == 1 && eps1 == 0.0 {
        // Exact: sample mean and covariance.
        let mean = linalg::mean_point(points);
        let cov = linalg::covariance(points);
        return Ok(SubspaceMixture {
            weights: vec![1.0],
            means: vec![mean],
            covs: vec![cov],
            converged: true,
        });
    }
    if n < 4 * k * (d + 1) {
        return Err(Error::invalid("too few points for the requested k"));
    }

    // Model selection over 1..=k components by BIC, so a subdivision with
    // fewer effective components wins over a spurious split of one Gaussian.
    let params_per = d + d * (d + 1) / 2 + 1;
    let mut best: Option<(f64, SubspaceMixture)> = None;
    for k_try in 1..=k {
        let mut best_ll: Option<(f64, SubspaceMixture)> = None;
        for _ in 0..cfg.restarts.max(1) {
            if let Some((ll, mix)) = em_once(points, k_try, eps1, cfg, rng) {
                let better = match &best_ll {
                    Some((bll, _)) => ll > *bll,
                    None => true,
                };
                if better {
                    best_ll = Some((ll, mix));
                }
            }
        }
        let Some((mean_ll, mix)) = best_ll else { continue };
        let bic = -2.0 * mean_ll * n as f64
            + (k_try * params_per) as f64 * (n as f64).ln();
        let better = match &best {
            Some((b, _)) => bic < *b,
            None => true,
        };
        if better {
            best = Some((bic, mix));
        }
    }
    let (_, mix) = best.ok_or_else(|| Error::invalid("all EM restarts failed"))?;
    Ok(merge_close(mix, cfg))
}

fn em_once<R: Rng>(
    points: &[DVector<f64>],
    k: usize,
    eps1: f64,
    cfg: &LowDimConfig,
    rng: &mut R,
) -> Option<(f64, SubspaceMixture)> {
    let n = points.len();
    let d = points[0].len();
    let trim = ((eps1 * n as f64).floor() as usize).min(n / 4);

    // Seeding: distance-squared sampling of initial means, global covariance.
    let global_cov = linalg::covariance(points);
    let reg = DMatrix::<f64>::identity(d, d) * (cfg.reg_scale * global_cov.trace().max(1.0));
    let mut means: Vec<DVector<f64>> = vec![points[rng.gen_range(0..n)].clone()];
    while means.len() < k {
        let dists: Vec<f64> = points
            .iter()
            .map(|p| {
                means
                    .iter()
                    .map(|m| (p - m).norm_squared())
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let total: f64 = dists.iter().sum();
        if total <= 0.0 {
            means.push(points[rng.gen_range(0..n)].clone());
            continue;
        }
        let mut u = rng.gen::<f64>() * total;
        let mut pick = n - 1;
        for (i, &w) in dists.iter().enumerate() {
            u -= w;
            if u <= 0.0 {
                pick = i;
                break;
            }
        }
        means.push(points[pick].clone());
    }
    let mut covs: Vec<DMatrix<f64>> = vec![&global_cov + &reg; k];
    let mut weights = vec![1.0 / k as f64; k];

    let mut prev_ll = f64::NEG_INFINITY;
    let mut converged = false;
    let mut resp = DMatrix::zeros(n, k);
    let mut kept: Vec<usize> = (0..n).collect();

    for _ in 0..cfg.em_iters {
        // E-step in log space.
        let mut comps = Vec::with_capacity(k);
        for c in 0..k {
            let chol = covs[c].clone().cholesky()?;
            let logdet = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
            let inv_l = chol
                .l()
                .solve_lower_triangular(&DMatrix::identity(d, d))?;
            comps.push((inv_l, logdet));
        }
        let mut point_ll = vec![0.0f64; n];
        for i in 0..n {
            let mut terms = Vec::with_capacity(k);
            for c in 0..k {
                let (inv_l, logdet) = &comps[c];
                let z = inv_l * (&points[i] - &means[c]);
                let lw = if weights[c] > 0.0 {
                    weights[c].ln()
                } else {
                    f64::NEG_INFINITY
                };
                terms.push(
                    lw - 0.5
                        * (d as f64 * (2.0 * std::f64::consts::PI).ln()
                            + logdet
                            + z.norm_squared()),
                );
            }
            let lse = linalg::logsumexp(&terms);
            point_ll[i] = lse;
            for c in 0..k {
                resp[(i, c)] = (terms[c] - lse).exp();
            }
        }
        // Trim the lowest-likelihood points from the M-step.
        kept = (0..n).collect();
        if trim > 0 {
            kept.sort_by(|&a, &b| point_ll[b].total_cmp(&point_ll[a]).then(a.cmp(&b)));
            kept.truncate(n - trim);
            kept.sort_unstable();
        }
        let ll: f64 = kept.iter().map(|&i| point_ll[i]).sum::<f64>() / kept.len() as f64;
        if (ll - prev_ll).abs() < cfg.tol {
            converged = true;
            prev_ll = ll;
            break;
        }
        prev_ll = ll;

        // M-step over the kept points.
        for c in 0..k {
            let nk: f64 = kept.iter().map(|&i| resp[(i, c)]).sum();
            if nk < 1e-8 {
                // Reseed a dead component at the worst-covered point.
                let worst = kept
                    .iter()
                    .copied()
                    .min_by(|&a, &b| point_ll[a].total_cmp(&point_ll[b]))
                    .unwrap_or(0);
                means[c] = points[worst].clone();
                covs[c] = &global_cov + &reg;
                weights[c] = 1.0 / n as f64;
                continue;
            }
            let mut mean = DVector::zeros(d);
            for &i in &kept {
                mean.axpy(resp[(i, c)], &points[i], 1.0);
            }
            mean /= nk;
            let mut cov = DMatrix::zeros(d, d);
            for &i in &kept {
                let delta = &points[i] - &mean;
                cov.syger(resp[(i, c)], &delta, &delta, 1.0);
            }
            cov /= nk;
            cov.fill_upper_triangle_with_lower_triangle();
            means[c] = mean;
            covs[c] = cov + &reg;
            weights[c] = nk / kept.len() as f64;
        }
        let wsum: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= wsum;
        }
    }
    let _ = kept;
    Some((
        prev_ll,
        SubspaceMixture {
            weights,
            means,
            covs,
            converged,
        },
    ))
}

/// Merges components whose TV bound falls below the merge tolerance, in an
/// equivalence-class sweep; merged parameters are moment-matched.
fn merge_close(mix: SubspaceMixture, cfg: &LowDimConfig) -> SubspaceMixture {
    let k = mix.weights.len();
    if k <= 1 {
        return mix;
    }
    let comps: Vec<Option<GaussianComponent>> = (0..k)
        .map(|i| GaussianComponent::new(mix.means[i].clone(), linalg::psd_floor(&mix.covs[i], 0.0)).ok())
        .collect();
    let mut parent: Vec<usize> = (0..k).collect();
    fn find(p: &mut Vec<usize>, i: usize) -> usize {
        let mut r = i;
        while p[r] != r {
            r = p[r];
        }
        let mut c = i;
        while p[c] != r {
            let nx = p[c];
            p[c] = r;
            c = nx;
        }
        r
    }
    for i in 0..k {
        for j in i + 1..k {
            let close = match (&comps[i], &comps[j]) {
                (Some(a), Some(b)) => {
                    let lam = min_eig(&mix.covs[i]).min(min_eig(&mix.covs[j])).max(1e-12);
                    tv_frobenius_bound(a, b, lam, 1.0).map(|v| v < cfg.merge_tol).unwrap_or(false)
                }
                _ => false,
            };
            if close {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[rj] = ri;
                }
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..k {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    let mut weights = Vec::new();
    let mut means = Vec::new();
    let mut covs = Vec::new();
    for (_, members) in groups {
        let w: f64 = members.iter().map(|&i| mix.weights[i]).sum();
        if w <= 0.0 {
            continue;
        }
        let d = mix.means[0].len();
        let mut mean = DVector::zeros(d);
        for &i in &members {
            mean.axpy(mix.weights[i] / w, &mix.means[i], 1.0);
        }
        // Moment-matched covariance: within + between spread.
        let mut cov = DMatrix::zeros(d, d);
        for &i in &members {
            let wi = mix.weights[i] / w;
            cov += &mix.covs[i] * wi;
            let delta = &mix.means[i] - &mean;
            cov.syger(wi, &delta, &delta, 1.0);
        }
        cov.fill_upper_triangle_with_lower_triangle();
        weights.push(w);
        means.push(mean);
        covs.push((&cov + cov.transpose()) * 0.5);
    }
    SubspaceMixture {
        weights,
        means,
        covs,
        converged: mix.converged,
    }
}

fn min_eig(m: &DMatrix<f64>) -> f64 {
    linalg::sym_eigen_sorted(m).0.last().copied().unwrap_or(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{sample_mixture, GaussianMixture};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn k1_returns_sample_moments_exactly() {
        let pts: Vec<DVector<f64>> = (0..40)
            .map(|i| DVector::from_vec(vec![i as f64, (i as f64).sin()]))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mix = low_dim_learn(&pts, 1, 0.0, &LowDimConfig::default(), &mut rng).unwrap();
        assert_eq!(mix.means[0], linalg::mean_point(&pts));
        assert_eq!(mix.covs[0], linalg::covariance(&pts));
        assert_eq!(mix.weights, vec![1.0]);
    }

    #[test]
    fn separated_two_mix_recovered() {
        let truth = GaussianMixture::new(
            vec![0.5, 0.5],
            vec![
                GaussianComponent::new(
                    DVector::from_vec(vec![0.0, 0.0]),
                    DMatrix::identity(2, 2),
                )
                .unwrap(),
                GaussianComponent::new(
                    DVector::from_vec(vec![6.0, 0.0]),
                    DMatrix::identity(2, 2) * 0.5,
                )
                .unwrap(),
            ],
        )
        .unwrap();
        let mut errs = Vec::new();
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let (pts, _) = sample_mixture(&truth, 3000, &mut rng);
            let mix = low_dim_learn(&pts, 2, 0.0, &LowDimConfig::default(), &mut rng).unwrap();
            assert_eq!(mix.weights.len(), 2);
            let err = truth
                .components()
                .iter()
                .map(|c| {
                    mix.means
                        .iter()
                        .map(|m| (m - c.mean()).norm())
                        .fold(f64::INFINITY, f64::min)
                })
                .fold(0.0, f64::max);
            errs.push(err);
        }
        errs.sort_by(f64::total_cmp);
        assert!(errs[10] < 0.1, "median mean error {}", errs[10]);
    }

    #[test]
    fn identical_components_merge_to_one() {
        let comp = GaussianComponent::standard(2);
        let truth = GaussianMixture::new(vec![0.5, 0.5], vec![comp.clone(), comp]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (pts, _) = sample_mixture(&truth, 2000, &mut rng);
        let mix = low_dim_learn(&pts, 2, 0.0, &LowDimConfig::default(), &mut rng).unwrap();
        assert_eq!(mix.weights.len(), 1);
        assert!((mix.weights[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dimension_cap_enforced() {
        let pts: Vec<DVector<f64>> = (0..100).map(|_| DVector::zeros(9)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        assert!(low_dim_learn(&pts, 1, 0.0, &LowDimConfig::default(), &mut rng).is_err());
    }
}
