//! Cover enumeration of candidate parameters inside a search subspace.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::linalg;

use super::subspace::SearchSubspace;
use super::{Candidate, CandidateList};

/// Lattice points of step `step` within the radius-`radius` ball of `R^dim`,
/// in deterministic lexicographic order, truncated at `cap` points. Always
/// contains the origin (so truncation cannot lose it, the origin is emitted
/// first).
pub fn ball_cover(dim: usize, step: f64, radius: f64, cap: usize) -> Vec<DVector<f64>> {
    if dim == 0 {
        return vec![DVector::zeros(0)];
    }
    assert!(step > 0.0, "cover step must be positive");
    let reach = (radius / step).floor().min(1e6) as i64;
    let mut out = vec![DVector::zeros(dim)];
    let mut counter = vec![-reach; dim];
    loop {
        if out.len() >= cap {
            return out;
        }
        let v = DVector::from_iterator(dim, counter.iter().map(|&c| c as f64 * step));
        if v.norm() <= radius + 1e-12 && v.norm() > 0.0 {
            out.push(v);
        }
        // Increment the mixed-radix counter.
        let mut pos = dim;
        loop {
            if pos == 0 {
                return out;
            }
            pos -= 1;
            if counter[pos] < reach {
                counter[pos] += 1;
                for c in counter.iter_mut().skip(pos + 1) {
                    *c = -reach;
                }
                break;
            }
        }
    }
}

/// Symmetric grid `{0, +-step, +-2 step, ...}` up to `limit`, capped at
/// 10001 values around zero.
pub fn symmetric_grid(step: f64, limit: f64) -> Vec<f64> {
    assert!(step > 0.0, "grid step must be positive");
    let reach = (limit / step).floor().min(5000.0) as i64;
    let mut out = Vec::with_capacity((2 * reach + 1) as usize);
    for i in -reach..=reach {
        out.push(i as f64 * step);
    }
    out
}

/// Enumerates candidates `(mu, I + S + sum_j tau_j v_j v_j^T)` over a
/// `delta^(1/4)`-cover of the radius-`2/sqrt(alpha)` ball (means) and tuples
/// of `k' = c k^2` cover directions with scalars on a `delta^(1/4)` grid over
/// `[-phi, phi]`. Deterministic order; the budget truncates the tail.
#[allow(clippy::too_many_arguments)]
pub fn enumerate_candidates(
    subspace: &SearchSubspace,
    s_hat: &DMatrix<f64>,
    alpha: f64,
    delta: f64,
    phi: f64,
    k: usize,
    kprime_c: f64,
    budget: usize,
) -> Result<CandidateList> {
    let d = s_hat.nrows();
    let dim = subspace.dim();
    let step = delta.powf(0.25);
    let radius = 2.0 / alpha.sqrt();
    let identity = DMatrix::<f64>::identity(d, d);
    let base = &identity + s_hat;

    if dim == 0 {
        let cov = linalg::psd_floor(&((&base + base.transpose()) * 0.5), 0.0);
        return Ok(CandidateList {
            entries: vec![Candidate {
                mean: DVector::zeros(d),
                cov,
                group: None,
                weight: None,
            }],
            budget,
            truncated: false,
        });
    }

    let mean_cover = ball_cover(dim, step, radius, budget.max(1));
    // Directions: normalized nonzero cover points, deduplicated by sign.
    let mut directions: Vec<DVector<f64>> = Vec::new();
    for c in &mean_cover {
        let norm = c.norm();
        if norm < 1e-12 {
            continue;
        }
        let u = c / norm;
        if directions
            .iter()
            .any(|v| (v - &u).norm() < 1e-9 || (v + &u).norm() < 1e-9)
        {
            continue;
        }
        directions.push(u);
    }
    let scalars = symmetric_grid(step, phi);
    let kprime = ((kprime_c * (k * k) as f64).round() as usize).max(1);

    let mut entries = Vec::new();
    let mut truncated = false;
    // Term choices per rank-1 summand: (direction, scalar); the zero scalar
    // collapses to "no term" and sorts first so small corrections come early.
    let mut scalar_order = scalars.clone();
    scalar_order.sort_by(|a, b| a.abs().total_cmp(&b.abs()).then(a.total_cmp(b)));
    let ambient_dirs: Vec<DVector<f64>> =
        directions.iter().map(|u| &subspace.basis * u).collect();
    let n_terms = ambient_dirs.len() * scalar_order.len();

    'outer: for mu_coord in &mean_cover {
        let mean = &subspace.basis * mu_coord;
        if n_terms == 0 {
            let cov = linalg::psd_floor(&((&base + base.transpose()) * 0.5), 0.0);
            entries.push(Candidate {
                mean,
                cov,
                group: None,
                weight: None,
            });
            if entries.len() >= budget {
                truncated = true;
                break 'outer;
            }
            continue;
        }
        // Non-decreasing k'-tuples of term codes (combinations with
        // repetition) avoid permuted duplicates.
        let mut counter = vec![0usize; kprime];
        let mut done = false;
        while !done {
            let mut q = DMatrix::zeros(d, d);
            for &code in &counter {
                let di = code % ambient_dirs.len();
                let si = code / ambient_dirs.len();
                let tau = scalar_order[si];
                if tau != 0.0 {
                    q.syger(tau, &ambient_dirs[di], &ambient_dirs[di], 1.0);
                }
            }
            q.fill_upper_triangle_with_lower_triangle();
            let cov_raw = &base + &q;
            let cov = linalg::psd_floor(&((&cov_raw + cov_raw.transpose()) * 0.5), 0.0);
            entries.push(Candidate {
                mean: mean.clone(),
                cov,
                group: None,
                weight: None,
            });
            if entries.len() >= budget {
                truncated = true;
                break 'outer;
            }
            done = true;
            for pos in (0..kprime).rev() {
                if counter[pos] + 1 < n_terms {
                    counter[pos] += 1;
                    let v = counter[pos];
                    for c in counter.iter_mut().skip(pos + 1) {
                        *c = v;
                    }
                    done = false;
                    break;
                }
            }
        }
    }
    Ok(CandidateList {
        entries,
        budget,
        truncated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decode::subspace::build_search_subspace;
    use crate::hermite::DenseTensor;

    #[test]
    fn line_cover_of_radius_one_step_one() {
        let cover = ball_cover(1, 1.0, 1.0, 1000);
        let mut values: Vec<f64> = cover.iter().map(|v| v[0]).collect();
        values.sort_by(f64::total_cmp);
        assert_eq!(values, vec![-1.0, 0.0, 1.0]);
    }

    #[test]
    fn cover_contains_origin_and_respects_radius() {
        let cover = ball_cover(2, 0.5, 1.0, 1000);
        assert!(cover.iter().any(|v| v.norm() == 0.0));
        assert!(cover.iter().all(|v| v.norm() <= 1.0 + 1e-9));
    }

    #[test]
    fn zero_dim_subspace_single_candidate() {
        let t = DenseTensor::zeros(3, 2, 1000).unwrap();
        let sub = build_search_subspace(&[t], None, 1.0, 0.5, 6).unwrap();
        let s_hat = DMatrix::from_diagonal(&DVector::from_vec(vec![0.1, -0.2, 0.0]));
        let list = enumerate_candidates(&sub, &s_hat, 0.5, 0.5, 1.0, 2, 1.0, 100).unwrap();
        assert_eq!(list.entries.len(), 1);
        assert!(!list.truncated);
        // Candidate covariance is the floored I + S.
        let cov = &list.entries[0].cov;
        assert!((cov[(0, 0)] - 1.1).abs() < 1e-12);
        assert!((cov[(1, 1)] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn enumeration_is_deterministic_and_budgeted() {
        let mu = DVector::from_vec(vec![2.0, 0.0]);
        let outer = &mu * mu.transpose();
        let t = DenseTensor::from_matrix(&outer);
        let sub = build_search_subspace(&[t], None, 1.0, 0.0625, 6).unwrap();
        assert_eq!(sub.dim(), 1);
        let s_hat = DMatrix::zeros(2, 2);
        let a = enumerate_candidates(&sub, &s_hat, 1.0, 0.0625, 1.0, 1, 1.0, 50).unwrap();
        let b = enumerate_candidates(&sub, &s_hat, 1.0, 0.0625, 1.0, 1, 1.0, 50).unwrap();
        assert_eq!(a.entries.len(), b.entries.len());
        for (x, y) in a.entries.iter().zip(&b.entries) {
            assert_eq!(x.mean, y.mean);
            assert_eq!(x.cov, y.cov);
        }
        let tiny = enumerate_candidates(&sub, &s_hat, 1.0, 0.0625, 1.0, 1, 1.0, 3).unwrap();
        assert_eq!(tiny.entries.len(), 3);
        assert!(tiny.truncated);
    }

    #[test]
    fn emitted_covariances_are_symmetric_psd() {
        let mu = DVector::from_vec(vec![1.5, 0.5]);
        let outer = &mu * mu.transpose();
        let t = DenseTensor::from_matrix(&outer);
        let sub = build_search_subspace(&[t], None, 0.5, 0.1, 6).unwrap();
        let s_hat = DMatrix::from_row_slice(2, 2, &[0.2, 0.1, 0.1, -0.4]);
        let list = enumerate_candidates(&sub, &s_hat, 1.0, 0.1, 2.0, 1, 1.0, 200).unwrap();
        for c in &list.entries {
            assert!((&c.cov - c.cov.transpose()).abs().max() < 1e-12);
            let (vals, _) = linalg::sym_eigen_sorted(&c.cov);
            assert!(vals.last().copied().unwrap_or(0.0) >= -1e-12);
        }
    }
}
