//! The low-dimensional search subspace spanned by heavy singular directions
//! of the estimated Hermite tensors and of a collapsed matrix.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::hermite::DenseTensor;
use crate::linalg;

/// Where a basis direction came from.
#[derive(Debug, Clone, PartialEq)]
pub enum SubspaceSource {
    /// Left singular vector of the flattened order-`order` moment tensor.
    MomentTensor { order: usize, singular: f64 },
    /// Singular vector of the collapsed matrix.
    Collapse { singular: f64 },
}

/// Orthonormal search subspace with provenance tags.
#[derive(Debug, Clone)]
pub struct SearchSubspace {
    /// `d x dim`, orthonormal columns.
    pub basis: DMatrix<f64>,
    pub sources: Vec<SubspaceSource>,
    /// Set when the dimension cap forced a truncation.
    pub truncated: bool,
}

impl SearchSubspace {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    /// Coordinates of `x` in the subspace.
    pub fn project_coords(&self, x: &DVector<f64>) -> DVector<f64> {
        self.basis.transpose() * x
    }

    /// Projection of `x` onto the subspace, in ambient coordinates.
    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.basis * (self.basis.transpose() * x)
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.dim();
        let gram = self.basis.transpose() * &self.basis;
        let dev = (&gram - DMatrix::<f64>::identity(r, r)).abs().max();
        if dev > 1e-9 {
            return Err(Error::invalid(format!(
                "subspace basis not orthonormal (deviation {dev:.3e})"
            )));
        }
        Ok(())
    }
}

/// Builds `V'`: the span of left singular vectors of the flattenings of
/// `T_1..T_m` with singular value at least `lambda`, plus singular vectors of
/// `s_hat` with singular value at least `delta^(1/4)`. Directions are sorted
/// by descending singular value before orthonormalization so a dimension cap
/// keeps the heaviest ones.
pub fn build_search_subspace(
    tensors: &[DenseTensor],
    s_hat: Option<&DMatrix<f64>>,
    lambda: f64,
    delta: f64,
    dim_cap: usize,
) -> Result<SearchSubspace> {
    if lambda <= 0.0 || delta <= 0.0 {
        return Err(Error::invalid("lambda and delta must be positive"));
    }
    let mut d = 0usize;
    let mut tagged: Vec<(f64, DVector<f64>, SubspaceSource)> = Vec::new();
    for t in tensors {
        d = t.dim();
        let flat = t.flatten();
        for (sigma, u) in flat.left_singular_pairs() {
            if sigma >= lambda {
                tagged.push((
                    sigma,
                    u,
                    SubspaceSource::MomentTensor {
                        order: t.order(),
                        singular: sigma,
                    },
                ));
            }
        }
    }
    if let Some(s) = s_hat {
        d = s.nrows();
        let cut = delta.powf(0.25);
        let (vals, vecs) = linalg::sym_eigen_sorted(s);
        for (i, &v) in vals.iter().enumerate() {
            let sigma = v.abs();
            if sigma >= cut {
                tagged.push((
                    sigma,
                    vecs.column(i).into_owned(),
                    SubspaceSource::Collapse { singular: sigma },
                ));
            }
        }
    }
    tagged.sort_by(|a, b| b.0.total_cmp(&a.0));

    let columns: Vec<DVector<f64>> = tagged.iter().map(|(_, u, _)| u.clone()).collect();
    let ortho = linalg::orthonormalize(&columns, 1e-9);
    let truncated = ortho.len() > dim_cap;
    let keep = ortho.len().min(dim_cap);
    let mut basis = DMatrix::zeros(d, keep);
    for (j, col) in ortho.iter().take(keep).enumerate() {
        basis.set_column(j, col);
    }
    // Provenance: tags of the retained (sorted) directions, best effort since
    // orthonormalization can drop dependent columns.
    let sources = tagged
        .into_iter()
        .take(keep)
        .map(|(_, _, s)| s)
        .collect();
    Ok(SearchSubspace {
        basis,
        sources,
        truncated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hermite::{expected_hermite_mixture, DEFAULT_ENTRY_GUARD as GUARD};
    use crate::model::{GaussianComponent, GaussianMixture};

    #[test]
    fn zero_tensors_give_empty_subspace() {
        let t = DenseTensor::zeros(3, 2, GUARD).unwrap();
        let sub = build_search_subspace(&[t], None, 0.1, 0.1, 6).unwrap();
        assert_eq!(sub.dim(), 0);
    }

    #[test]
    fn rank_one_second_moment_contains_mean_direction() {
        let mu = DVector::from_vec(vec![3.0, 4.0, 0.0]);
        let outer = &mu * mu.transpose();
        let t = DenseTensor::from_matrix(&outer);
        // lambda below ||mu||^2 = 25.
        let sub = build_search_subspace(&[t], None, 1.0, 0.1, 6).unwrap();
        assert_eq!(sub.dim(), 1);
        let unit = &mu / mu.norm();
        let proj = sub.project(&unit);
        assert!((proj - &unit).norm() < 1e-9);
    }

    #[test]
    fn increasing_lambda_never_increases_dim() {
        let mu = DVector::from_vec(vec![1.0, 0.5, -0.3]);
        let cov = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0, 0.5]));
        let m = GaussianMixture::single(GaussianComponent::new(mu, cov).unwrap());
        let tensors: Vec<DenseTensor> = (1..=4)
            .map(|ord| expected_hermite_mixture(&m, ord, GUARD).unwrap())
            .collect();
        let mut prev = usize::MAX;
        for lambda in [0.01, 0.1, 0.5, 1.0, 5.0] {
            let sub = build_search_subspace(&tensors, None, lambda, 0.1, 10).unwrap();
            assert!(sub.dim() <= prev);
            prev = sub.dim();
        }
    }

    #[test]
    fn mean_projection_contract_on_rank_limited_plant() {
        // d = 8, k = 2, components whose S_i and mu_i live in a 3-dim
        // subspace: V' captures the means within the contract
        // ||mu - P mu||^2 <= (20/alpha^2) sqrt(delta) Delta.
        let d = 8;
        let alpha: f64 = 0.5;
        let mut cov1 = DMatrix::identity(d, d);
        cov1[(0, 0)] = 2.2;
        cov1[(1, 1)] = 0.6;
        let mut cov2 = DMatrix::identity(d, d);
        cov2[(1, 1)] = 1.8;
        cov2[(2, 2)] = 0.5;
        let mu1 = DVector::from_fn(d, |i, _| if i == 0 { 1.2 } else { 0.0 });
        let mu2 = DVector::from_fn(d, |i, _| if i == 2 { -0.9 } else { 0.0 });
        let mix = GaussianMixture::new(
            vec![alpha, 1.0 - alpha],
            vec![
                GaussianComponent::new(mu1.clone(), cov1).unwrap(),
                GaussianComponent::new(mu2.clone(), cov2).unwrap(),
            ],
        )
        .unwrap();
        let tensors: Vec<DenseTensor> = (1..=4)
            .map(|ord| expected_hermite_mixture(&mix, ord, GUARD).unwrap())
            .collect();
        // Exact tensors: eta can be taken small.
        let eta: f64 = 1e-3;
        let lambda = 4.0 * eta;
        let delta: f64 = 2.0 * eta.powf(1.0 / 6.0);
        let sub = build_search_subspace(&tensors, None, lambda, delta, 8).unwrap();
        sub.validate().unwrap();
        let delta_bound = 2.0; // ||Sigma_i - I||_F <= 2 here
        let budget = 20.0 / (alpha * alpha) * delta.sqrt() * delta_bound;
        for mu in [&mu1, &mu2] {
            let err = (mu - sub.project(mu)).norm_squared();
            assert!(err <= budget, "projection error {err} > {budget}");
        }
    }
}
