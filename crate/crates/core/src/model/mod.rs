//! Gaussian mixture data model: components, mixtures, sampling, densities,
//! and the isotropizing affine transform.
//!
//! Covariances are validated at construction (symmetric within 1e-12 of
//! scale, minimum eigenvalue at least `-1e-10 * trace`) and symmetrized
//! exactly, so downstream code can rely on well-formed matrices. Degenerate
//! covariances are legal; density evaluation regularizes them with an
//! explicit eigenvalue floor where needed, while estimation paths use
//! pseudo-inverses.

mod matching;
mod moments;
mod tv;

pub use matching::{match_components, weight_gap_threshold, MatchReport};
pub use moments::{moment_distance_check, raw_moments_1d, MomentDistanceReport};
pub use tv::{tv_frobenius_bound, tv_monte_carlo, tv_upper_bound, TvEstimate};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

const SYMMETRY_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;

/// One Gaussian component `N(mean, cov)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianComponent {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl GaussianComponent {
    /// Validates symmetry and positive semidefiniteness, then stores the
    /// exactly symmetrized covariance.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if cov.nrows() != d || cov.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: cov.nrows(),
                context: "covariance shape".into(),
            });
        }
        let scale = cov.abs().max().max(1.0);
        let asym = (&cov - cov.transpose()).abs().max();
        if asym > SYMMETRY_TOL * scale {
            return Err(Error::NotPsd(format!(
                "covariance asymmetry {asym:.3e} exceeds tolerance"
            )));
        }
        let sym = (&cov + cov.transpose()) * 0.5;
        let (eigs, _) = linalg::sym_eigen_sorted(&sym);
        let min_eig = eigs.last().copied().unwrap_or(0.0);
        let trace = sym.trace();
        if min_eig < -PSD_TOL * trace.max(1.0) {
            return Err(Error::NotPsd(format!(
                "minimum eigenvalue {min_eig:.3e} below tolerance for trace {trace:.3e}"
            )));
        }
        Ok(GaussianComponent { mean, cov: sym })
    }

    pub fn standard(d: usize) -> Self {
        GaussianComponent {
            mean: DVector::zeros(d),
            cov: DMatrix::identity(d, d),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Factor `A` with `cov = A A^T`, usable for sampling even when singular.
    pub fn sampling_factor(&self) -> DMatrix<f64> {
        linalg::psd_sqrt_factor(&self.cov)
    }
}

/// A finite Gaussian mixture with nonnegative weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    weights: Vec<f64>,
    components: Vec<GaussianComponent>,
}

impl GaussianMixture {
    pub fn new(weights: Vec<f64>, components: Vec<GaussianComponent>) -> Result<Self> {
        if weights.len() != components.len() {
            return Err(Error::DimensionMismatch {
                expected: components.len(),
                got: weights.len(),
                context: "weights vs components".into(),
            });
        }
        if components.is_empty() {
            return Err(Error::Empty("mixture needs at least one component".into()));
        }
        let d = components[0].dim();
        if components.iter().any(|c| c.dim() != d) {
            return Err(Error::invalid("components have differing dimensions"));
        }
        if weights.iter().any(|&w| w < 0.0) {
            return Err(Error::invalid("negative mixing weight"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "weights sum to {total}, expected 1 within 1e-9"
            )));
        }
        Ok(GaussianMixture {
            weights,
            components,
        })
    }

    /// Single-component mixture.
    pub fn single(component: GaussianComponent) -> Self {
        GaussianMixture {
            weights: vec![1.0],
            components: vec![component],
        }
    }

    /// Builds a mixture from possibly unnormalized nonnegative weights.
    pub fn normalized(weights: Vec<f64>, components: Vec<GaussianComponent>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::invalid("weights sum to zero"));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        GaussianMixture::new(weights, components)
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    /// Mixture mean `sum_i w_i mu_i`.
    pub fn mean(&self) -> DVector<f64> {
        let mut m = DVector::zeros(self.dim());
        for (w, c) in self.weights.iter().zip(&self.components) {
            m.axpy(*w, c.mean(), 1.0);
        }
        m
    }

    /// Mixture covariance `sum_i w_i (Sigma_i + (mu_i - mu)(mu_i - mu)^T)`.
    pub fn covariance(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mu = self.mean();
        let mut cov = DMatrix::zeros(d, d);
        for (w, c) in self.weights.iter().zip(&self.components) {
            cov += c.cov() * *w;
            let delta = c.mean() - &mu;
            cov.syger(*w, &delta, &delta, 1.0);
        }
        cov.fill_upper_triangle_with_lower_triangle();
        (&cov + cov.transpose()) * 0.5
    }
}

/// Draws `n` points from the mixture; labels record the generating component
/// for diagnostics only.
pub fn sample_mixture<R: Rng>(
    mixture: &GaussianMixture,
    n: usize,
    rng: &mut R,
) -> (Vec<DVector<f64>>, Vec<usize>) {
    let d = mixture.dim();
    let factors: Vec<DMatrix<f64>> = mixture
        .components
        .iter()
        .map(|c| c.sampling_factor())
        .collect();
    let mut points = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut idx = mixture.len() - 1;
        for (i, w) in mixture.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                idx = i;
                break;
            }
        }
        let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        points.push(mixture.components[idx].mean() + &factors[idx] * z);
        labels.push(idx);
    }
    (points, labels)
}

/// Precomputed per-component factorizations for repeated density evaluation.
pub struct MixtureDensity {
    log_weights: Vec<f64>,
    means: Vec<DVector<f64>>,
    chol_inv: Vec<DMatrix<f64>>,
    log_norms: Vec<f64>,
}

impl MixtureDensity {
    /// `floor` is added to every covariance diagonal before factorization;
    /// it must be positive if any component is degenerate.
    pub fn new(mixture: &GaussianMixture, floor: f64) -> Result<Self> {
        if floor < 0.0 {
            return Err(Error::invalid("eigenvalue floor must be nonnegative"));
        }
        let d = mixture.dim();
        let mut log_weights = Vec::new();
        let mut means = Vec::new();
        let mut chol_inv = Vec::new();
        let mut log_norms = Vec::new();
        for (w, c) in mixture.weights.iter().zip(&mixture.components) {
            if *w == 0.0 {
                continue;
            }
            let reg = c.cov() + DMatrix::<f64>::identity(d, d) * floor;
            let chol = reg.clone().cholesky().ok_or_else(|| {
                Error::invalid("degenerate covariance requires a positive density floor")
            })?;
            let log_det = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
            let inv_l = chol
                .l()
                .solve_lower_triangular(&DMatrix::identity(d, d))
                .ok_or_else(|| Error::invalid("singular Cholesky factor"))?;
            log_weights.push(w.ln());
            means.push(c.mean().clone());
            chol_inv.push(inv_l);
            log_norms.push(-0.5 * (d as f64 * (2.0 * std::f64::consts::PI).ln() + log_det));
        }
        Ok(MixtureDensity {
            log_weights,
            means,
            chol_inv,
            log_norms,
        })
    }

    /// Log density at `x`.
    pub fn logp(&self, x: &DVector<f64>) -> f64 {
        let mut terms = Vec::with_capacity(self.log_weights.len());
        for i in 0..self.log_weights.len() {
            let z = &self.chol_inv[i] * (x - &self.means[i]);
            terms.push(self.log_weights[i] + self.log_norms[i] - 0.5 * z.norm_squared());
        }
        linalg::logsumexp(&terms)
    }
}

/// Log density of the mixture at `x`, regularizing each covariance with
/// `floor` on the diagonal.
pub fn log_density(mixture: &GaussianMixture, x: &DVector<f64>, floor: f64) -> Result<f64> {
    Ok(MixtureDensity::new(mixture, floor)?.logp(x))
}

/// A candidate mixture plus the pipeline path that produced it.
#[derive(Debug, Clone)]
pub struct Hypothesis {
    pub mixture: GaussianMixture,
    pub provenance: String,
}

impl Hypothesis {
    pub fn new(mixture: GaussianMixture, provenance: impl Into<String>) -> Self {
        Hypothesis {
            mixture,
            provenance: provenance.into(),
        }
    }
}

/// The affine map `y -> Lambda^{+/2} U^T (y - shift)` that sends the robustly
/// estimated mixture to approximately zero mean and identity covariance on
/// its range space.
#[derive(Debug, Clone)]
pub struct IsotropizingTransform {
    pub shift: DVector<f64>,
    /// `d x r`, orthonormal columns.
    pub basis: DMatrix<f64>,
    /// Diagonal of `Lambda^{+/2}` (inverse square roots of retained eigenvalues).
    pub scale: DVector<f64>,
    pub rank: usize,
}

impl IsotropizingTransform {
    pub fn validate(&self) -> Result<()> {
        let r = self.rank;
        if self.basis.ncols() != r || self.scale.len() != r {
            return Err(Error::invalid("transform rank mismatch"));
        }
        let gram = self.basis.transpose() * &self.basis;
        let dev = (&gram - DMatrix::<f64>::identity(r, r)).abs().max();
        if dev > 1e-9 {
            return Err(Error::invalid(format!(
                "basis not orthonormal (deviation {dev:.3e})"
            )));
        }
        if self.scale.iter().any(|&s| s < 0.0) {
            return Err(Error::invalid("negative scale entry"));
        }
        Ok(())
    }

    /// Forward map into r-dimensional isotropic coordinates.
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let z = self.basis.transpose() * (x - &self.shift);
        z.component_mul(&self.scale)
    }

    /// Inverse map of a point in transformed coordinates.
    pub fn invert_point(&self, z: &DVector<f64>) -> DVector<f64> {
        let back = z.zip_map(&self.inv_scale(), |zi, s| zi * s);
        &self.basis * back + &self.shift
    }

    /// Pulls a transformed-space mean back to original coordinates.
    pub fn invert_mean(&self, mean: &DVector<f64>) -> DVector<f64> {
        self.invert_point(mean)
    }

    /// Pulls a transformed-space covariance back to original coordinates.
    pub fn invert_cov(&self, cov: &DMatrix<f64>) -> DMatrix<f64> {
        let s = DMatrix::from_diagonal(&self.inv_scale());
        let half = &self.basis * s;
        &half * cov * half.transpose()
    }

    fn inv_scale(&self) -> DVector<f64> {
        self.scale.map(|s| if s > 0.0 { 1.0 / s } else { 0.0 })
    }
}

// --- JSON schema ------------------------------------------------------------
//
// {"weights":[...], "components":[{"mean":[...], "cov":[[...]]}, ...]}
// with covariances row-major; validated on deserialization.

#[derive(Serialize, Deserialize)]
struct ComponentRepr {
    mean: Vec<f64>,
    cov: Vec<Vec<f64>>,
}

impl Serialize for GaussianComponent {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let d = self.dim();
        ComponentRepr {
            mean: self.mean.iter().cloned().collect(),
            cov: (0..d)
                .map(|i| (0..d).map(|j| self.cov[(i, j)]).collect())
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for GaussianComponent {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = ComponentRepr::deserialize(d)?;
        let dim = repr.mean.len();
        if repr.cov.len() != dim || repr.cov.iter().any(|r| r.len() != dim) {
            return Err(serde::de::Error::custom("covariance shape mismatch"));
        }
        let cov = DMatrix::from_fn(dim, dim, |i, j| repr.cov[i][j]);
        GaussianComponent::new(DVector::from_vec(repr.mean), cov)
            .map_err(|e| serde::de::Error::custom(e.to_string()))
    }
}

impl Serialize for GaussianMixture {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Out<'a> {
            weights: &'a [f64],
            components: &'a [GaussianComponent],
        }
        Out {
            weights: &self.weights,
            components: &self.components,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for GaussianMixture {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct In {
            weights: Vec<f64>,
            components: Vec<GaussianComponent>,
        }
        let raw = In::deserialize(d)?;
        GaussianMixture::new(raw.weights, raw.components)
            .map_err(|e| serde::de::Error::custom(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gaussian_1d(mu: f64, var: f64) -> GaussianComponent {
        GaussianComponent::new(
            DVector::from_vec(vec![mu]),
            DMatrix::from_vec(1, 1, vec![var]),
        )
        .unwrap()
    }

    #[test]
    fn rejects_asymmetric_cov() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(GaussianComponent::new(DVector::zeros(2), cov).is_err());
    }

    #[test]
    fn rejects_indefinite_cov() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(GaussianComponent::new(DVector::zeros(2), cov).is_err());
    }

    #[test]
    fn single_component_sampling_labels() {
        let m = GaussianMixture::single(GaussianComponent::standard(2));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (points, labels) = sample_mixture(&m, 3, &mut rng);
        assert_eq!(points.len(), 3);
        assert!(labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn zero_covariance_gives_copies() {
        let mu = DVector::from_vec(vec![2.0, -1.0]);
        let comp = GaussianComponent::new(mu.clone(), DMatrix::zeros(2, 2)).unwrap();
        let m = GaussianMixture::single(comp);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (points, _) = sample_mixture(&m, 5, &mut rng);
        for p in points {
            assert_relative_eq!((p - &mu).norm(), 0.0, epsilon = 0.0);
        }
    }

    #[test]
    fn empirical_mean_concentrates() {
        let mu = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let comp = GaussianComponent::new(mu.clone(), DMatrix::identity(3, 3)).unwrap();
        let m = GaussianMixture::single(comp);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 100_000;
        let (points, _) = sample_mixture(&m, n, &mut rng);
        let emp = linalg::mean_point(&points);
        // 5 sigma / sqrt(n) per coordinate.
        let tol = 5.0 / (n as f64).sqrt();
        for i in 0..3 {
            assert!((emp[i] - mu[i]).abs() < tol * 3.0_f64.sqrt());
        }
    }

    #[test]
    fn component_frequencies_match_weights() {
        let m = GaussianMixture::new(
            vec![0.3, 0.7],
            vec![gaussian_1d(0.0, 1.0), gaussian_1d(5.0, 1.0)],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 50_000;
        let (_, labels) = sample_mixture(&m, n, &mut rng);
        let f0 = labels.iter().filter(|&&l| l == 0).count() as f64 / n as f64;
        let w = 0.3;
        assert!((f0 - w).abs() < 5.0 * (w * (1.0 - w) / n as f64).sqrt());
    }

    #[test]
    fn log_density_standard_normal_at_zero() {
        let m = GaussianMixture::single(gaussian_1d(0.0, 1.0));
        let lp = log_density(&m, &DVector::from_vec(vec![0.0]), 0.0).unwrap();
        assert_relative_eq!(
            lp,
            -(0.5 * (2.0 * std::f64::consts::PI).ln()),
            epsilon = 1e-12
        );
    }

    #[test]
    fn log_density_symmetric_two_mix() {
        let a = 1.5;
        let m = GaussianMixture::new(
            vec![0.5, 0.5],
            vec![gaussian_1d(a, 1.0), gaussian_1d(-a, 1.0)],
        )
        .unwrap();
        let lp = log_density(&m, &DVector::from_vec(vec![0.0]), 0.0).unwrap();
        let single = log_density(
            &GaussianMixture::single(gaussian_1d(a, 1.0)),
            &DVector::from_vec(vec![0.0]),
            0.0,
        )
        .unwrap();
        // Average of the two equal densities equals either one of them.
        assert_relative_eq!(lp, single, epsilon = 1e-12);
    }

    #[test]
    fn density_integrates_to_one_2d() {
        // Simpson quadrature over a grid.
        let cov = DMatrix::from_row_slice(2, 2, &[1.3, 0.4, 0.4, 0.8]);
        let comp = GaussianComponent::new(DVector::from_vec(vec![0.2, -0.3]), cov).unwrap();
        let m = GaussianMixture::new(
            vec![0.4, 0.6],
            vec![comp, GaussianComponent::standard(2)],
        )
        .unwrap();
        let dens = MixtureDensity::new(&m, 0.0).unwrap();
        let lo = -8.0;
        let hi = 8.0;
        let n = 160;
        let h = (hi - lo) / n as f64;
        let mut total = 0.0;
        for i in 0..=n {
            for j in 0..=n {
                let wx = if i == 0 || i == n {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                let wy = if j == 0 || j == n {
                    1.0
                } else if j % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                let x = DVector::from_vec(vec![lo + i as f64 * h, lo + j as f64 * h]);
                total += wx * wy * dens.logp(&x).exp();
            }
        }
        total *= h * h / 9.0;
        assert!((total - 1.0).abs() < 1e-3, "integral = {total}");
    }

    #[test]
    fn degenerate_density_needs_floor() {
        let comp = GaussianComponent::new(DVector::zeros(2), DMatrix::zeros(2, 2)).unwrap();
        let m = GaussianMixture::single(comp);
        assert!(log_density(&m, &DVector::zeros(2), 0.0).is_err());
        assert!(log_density(&m, &DVector::zeros(2), 1e-9).is_ok());
    }

    #[test]
    fn mixture_json_roundtrip() {
        let m = GaussianMixture::new(
            vec![0.25, 0.75],
            vec![gaussian_1d(0.0, 1.0), gaussian_1d(3.0, 2.0)],
        )
        .unwrap();
        let json = serde_json::to_string(&m).unwrap();
        assert!(json.contains("\"weights\""));
        let back: GaussianMixture = serde_json::from_str(&json).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn mixture_json_rejects_bad_weights() {
        let json = r#"{"weights":[0.5,0.6],"components":[
            {"mean":[0.0],"cov":[[1.0]]},{"mean":[1.0],"cov":[[1.0]]}]}"#;
        assert!(serde_json::from_str::<GaussianMixture>(json).is_err());
    }

    #[test]
    fn isotropizing_transform_roundtrip() {
        let basis = DMatrix::identity(3, 3);
        let t = IsotropizingTransform {
            shift: DVector::from_vec(vec![1.0, 2.0, 3.0]),
            basis,
            scale: DVector::from_vec(vec![0.5, 1.0, 2.0]),
            rank: 3,
        };
        t.validate().unwrap();
        let x = DVector::from_vec(vec![0.3, -0.7, 1.1]);
        let z = t.apply(&x);
        let back = t.invert_point(&z);
        assert_relative_eq!((back - x).norm(), 0.0, epsilon = 1e-12);
    }
}
