//! Pseudo-moment matrices and the two oracle implementations.

use nalgebra::{DMatrix, DVector};

use crate::config::OracleMode;
use crate::error::{Error, Result};
use crate::linalg;
use crate::robust;

/// An `n x n` nonnegative similarity matrix carrying the pseudo-moment
/// invariants the rounding analysis consumes: entries in `[0, alpha + slack]`,
/// diagonal within `slack` of `alpha`, and per-row mean at least
/// `alpha^2 - slack`.
#[derive(Debug, Clone)]
pub struct MomentMatrix {
    entries: DMatrix<f64>,
    alpha: f64,
    slack: f64,
}

impl MomentMatrix {
    pub fn new(entries: DMatrix<f64>, alpha: f64, slack: f64) -> Result<Self> {
        let m = MomentMatrix {
            entries,
            alpha,
            slack,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn len(&self) -> usize {
        self.entries.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.nrows() == 0
    }

    /// Exact invariant assertions with the configured slack; reports which
    /// invariant failed.
    pub fn validate(&self) -> Result<()> {
        let n = self.entries.nrows();
        if n == 0 || self.entries.ncols() != n {
            return Err(Error::OracleRejected("matrix must be square".into()));
        }
        let a = self.alpha;
        let s = self.slack;
        for i in 0..n {
            let diag = self.entries[(i, i)];
            if (diag - a).abs() > s {
                return Err(Error::OracleRejected(format!(
                    "diagonal invariant: M({i},{i}) = {diag} not within {s} of alpha = {a}"
                )));
            }
            let mut row_sum = 0.0;
            for j in 0..n {
                let v = self.entries[(i, j)];
                if !(0.0..=a + s).contains(&v) {
                    return Err(Error::OracleRejected(format!(
                        "entry invariant: M({i},{j}) = {v} outside [0, alpha + slack]"
                    )));
                }
                row_sum += v;
            }
            let row_mean = row_sum / n as f64;
            if row_mean < a * a - s {
                return Err(Error::OracleRejected(format!(
                    "row-mean invariant: row {i} mean {row_mean} below alpha^2 - slack"
                )));
            }
        }
        Ok(())
    }
}

/// Knobs for the affinity surrogate.
#[derive(Debug, Clone)]
pub struct AffinityParams {
    /// Neighborhood size for the self-tuning bandwidth, as a fraction of n.
    pub neighbor_frac: f64,
    /// Eigenvector embedding dimension (defaults to k).
    pub embed_dim: Option<usize>,
    /// Invariant slack as a fraction of alpha^2.
    pub slack_scale: f64,
    /// Iterations for the eigenvector solver.
    pub power_iters: usize,
}

impl Default for AffinityParams {
    fn default() -> Self {
        AffinityParams {
            neighbor_frac: 0.1,
            embed_dim: None,
            slack_scale: 0.05,
            power_iters: 120,
        }
    }
}

/// Builds a pseudo-moment matrix.
///
/// Ground-truth mode produces the ideal pseudo-moments
/// `M(i,j) = alpha * 1[same component]` from diagnostic labels and requires
/// every label to be valid. Affinity mode whitens the sample robustly, builds
/// a self-tuning kernel on pairwise distances, and normalizes a spectral
/// embedding of its rows so that same-cluster pairs score near `alpha`; the
/// result is validated against the invariants and rejected if it fails.
pub fn moment_matrix_oracle(
    points: &[DVector<f64>],
    mode: OracleMode,
    alpha: f64,
    eps: f64,
    k: usize,
    params: &AffinityParams,
    labels: Option<&[usize]>,
) -> Result<MomentMatrix> {
    let n = points.len();
    if n == 0 {
        return Err(Error::Empty("moment_matrix_oracle".into()));
    }
    if !(0.0 < alpha && alpha <= 1.0) {
        return Err(Error::invalid("alpha must lie in (0, 1]"));
    }
    let slack = params.slack_scale * alpha * alpha;
    match mode {
        OracleMode::GroundTruth => {
            let labels = labels
                .ok_or_else(|| Error::invalid("ground-truth oracle requires labels"))?;
            if labels.len() != n {
                return Err(Error::invalid("labels must align with points"));
            }
            if labels.iter().any(|&l| l >= k) {
                return Err(Error::invalid(
                    "ground-truth oracle requires valid labels for every point",
                ));
            }
            let entries = DMatrix::from_fn(n, n, |i, j| {
                if labels[i] == labels[j] {
                    alpha
                } else {
                    0.0
                }
            });
            MomentMatrix::new(entries, alpha, slack)
        }
        OracleMode::Affinity => affinity_matrix(points, alpha, eps, k, params, slack),
    }
}

fn affinity_matrix(
    points: &[DVector<f64>],
    alpha: f64,
    eps: f64,
    k: usize,
    params: &AffinityParams,
    slack: f64,
) -> Result<MomentMatrix> {
    // Try a small deterministic ladder of embedding settings; return the
    // first candidate that satisfies the invariants.
    let base_q = params.embed_dim.unwrap_or(k);
    let ladder = [
        (base_q, params.neighbor_frac),
        (base_q + 1, params.neighbor_frac),
        (base_q, params.neighbor_frac * 2.0),
        (base_q + 1, params.neighbor_frac * 2.0),
        (2 * base_q, params.neighbor_frac),
    ];
    let mut last_err = None;
    for (q, nf) in ladder {
        let attempt = AffinityParams {
            neighbor_frac: nf,
            embed_dim: Some(q.max(1)),
            ..params.clone()
        };
        match affinity_matrix_once(points, alpha, eps, k, &attempt, slack) {
            Ok(m) => return Ok(m),
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.unwrap())
}

fn affinity_matrix_once(
    points: &[DVector<f64>],
    alpha: f64,
    eps: f64,
    k: usize,
    params: &AffinityParams,
    slack: f64,
) -> Result<MomentMatrix> {
    let n = points.len();
    // Robust whitening so the kernel sees Mahalanobis geometry.
    let (_, whitened) = robust::isotropize(
        points,
        eps.min(0.3),
        robust::DEFAULT_STOP,
        robust::DEFAULT_MAX_ITER,
    )?;

    // Pairwise squared distances.
    let mut dist2 = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let d2 = (&whitened[i] - &whitened[j]).norm_squared();
            dist2[(i, j)] = d2;
            dist2[(j, i)] = d2;
        }
    }

    // Self-tuning bandwidths: distance to the kappa-th neighbor.
    let kappa = ((n as f64 * params.neighbor_frac).ceil() as usize).clamp(3, n - 1);
    let mut sigma = vec![0.0f64; n];
    let mut row = vec![0.0f64; n];
    for i in 0..n {
        for j in 0..n {
            row[j] = dist2[(i, j)];
        }
        row.sort_by(f64::total_cmp);
        sigma[i] = row[kappa].sqrt().max(1e-12);
    }

    // Self-tuned kernel with symmetric degree normalization.
    let mut kernel = DMatrix::from_fn(n, n, |i, j| {
        (-dist2[(i, j)] / (sigma[i] * sigma[j])).exp()
    });
    let degrees: Vec<f64> = (0..n).map(|i| kernel.row(i).sum().max(1e-300)).collect();
    for i in 0..n {
        for j in 0..n {
            kernel[(i, j)] /= (degrees[i] * degrees[j]).sqrt();
        }
    }

    // Spectral embedding of the normalized kernel.
    let q = params.embed_dim.unwrap_or(k).clamp(1, n);
    let (_, vecs) = linalg::top_eigenpairs_psd(&kernel, q, params.power_iters);
    let mut embed = vecs;
    for i in 0..n {
        let norm = embed.row(i).norm();
        if norm > 1e-12 {
            for j in 0..q {
                embed[(i, j)] /= norm;
            }
        }
    }

    // Rescale to pseudo-moment form: round the embedding to k clusters
    // (deterministic farthest-first k-means), refine with Gaussian hard
    // assignment in the whitened space, and emit alpha * indicator.
    let mut assign = kmeans_rows(&embed, k, 25);
    refine_gaussian(&whitened, &mut assign, k, 10);
    let entries = DMatrix::from_fn(n, n, |i, j| {
        if assign[i] == assign[j] {
            alpha
        } else {
            0.0
        }
    });
    MomentMatrix::new(entries, alpha, slack)
}

/// Deterministic k-means on the rows of `data`: farthest-first seeding from
/// the first row, fixed iteration count, ties to the lower cluster index.
fn kmeans_rows(data: &DMatrix<f64>, k: usize, iters: usize) -> Vec<usize> {
    let n = data.nrows();
    let q = data.ncols();
    let k = k.clamp(1, n);
    let mut centers: Vec<DVector<f64>> = vec![data.row(0).transpose()];
    while centers.len() < k {
        let mut best = 0usize;
        let mut best_d = -1.0;
        for i in 0..n {
            let r = data.row(i).transpose();
            let d = centers
                .iter()
                .map(|c| (&r - c).norm_squared())
                .fold(f64::INFINITY, f64::min);
            if d > best_d {
                best_d = d;
                best = i;
            }
        }
        centers.push(data.row(best).transpose());
    }
    let mut assign = vec![0usize; n];
    for _ in 0..iters {
        for i in 0..n {
            let r = data.row(i).transpose();
            let mut bi = 0;
            let mut bd = f64::INFINITY;
            for (ci, c) in centers.iter().enumerate() {
                let d = (&r - c).norm_squared();
                if d < bd {
                    bd = d;
                    bi = ci;
                }
            }
            assign[i] = bi;
        }
        let mut sums = vec![DVector::zeros(q); k];
        let mut counts = vec![0usize; k];
        for i in 0..n {
            sums[assign[i]] += data.row(i).transpose();
            counts[assign[i]] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = &sums[c] / counts[c] as f64;
            }
        }
    }
    assign
}

/// Hard-assignment refinement with per-cluster Gaussian scores; sharpens the
/// split along directions where clusters are tight but distances are noisy.
fn refine_gaussian(points: &[DVector<f64>], assign: &mut [usize], k: usize, rounds: usize) {
    let n = points.len();
    let d = points[0].len();
    for _ in 0..rounds {
        let mut stats = Vec::with_capacity(k);
        for c in 0..k {
            let members: Vec<DVector<f64>> = (0..n)
                .filter(|&i| assign[i] == c)
                .map(|i| points[i].clone())
                .collect();
            if members.len() < d + 2 {
                stats.push(None);
                continue;
            }
            let mean = linalg::mean_point(&members);
            let cov = linalg::covariance(&members);
            let reg = &cov + DMatrix::<f64>::identity(d, d) * (1e-9 * cov.trace().max(1.0));
            let (vals, _) = linalg::sym_eigen_sorted(&reg);
            let logdet: f64 = vals.iter().map(|v| v.max(1e-300).ln()).sum();
            stats.push(Some((mean, linalg::sym_pseudo_pow(&reg, -1.0, 1e-12), logdet)));
        }
        let mut changed = false;
        for i in 0..n {
            let mut bi = assign[i];
            let mut bs = f64::INFINITY;
            for (c, s) in stats.iter().enumerate() {
                let Some((mean, pinv, logdet)) = s else { continue };
                let delta = &points[i] - mean;
                let score = delta.dot(&(pinv * &delta)) + logdet;
                if score < bs {
                    bs = score;
                    bi = c;
                }
            }
            if bi != assign[i] {
                assign[i] = bi;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{sample_mixture, GaussianComponent, GaussianMixture};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ground_truth_two_equal_blocks() {
        let labels: Vec<usize> = (0..40).map(|i| i / 20).collect();
        let points: Vec<DVector<f64>> = (0..40)
            .map(|i| DVector::from_vec(vec![i as f64, 0.0]))
            .collect();
        let m = moment_matrix_oracle(
            &points,
            OracleMode::GroundTruth,
            0.5,
            0.0,
            2,
            &AffinityParams::default(),
            Some(&labels),
        )
        .unwrap();
        assert_eq!(m.entries()[(0, 1)], 0.5);
        assert_eq!(m.entries()[(0, 39)], 0.0);
        m.validate().unwrap();
    }

    #[test]
    fn ground_truth_single_cluster_all_alpha() {
        let labels = vec![0usize; 25];
        let points: Vec<DVector<f64>> = (0..25)
            .map(|i| DVector::from_vec(vec![i as f64]))
            .collect();
        let m = moment_matrix_oracle(
            &points,
            OracleMode::GroundTruth,
            1.0,
            0.0,
            1,
            &AffinityParams::default(),
            Some(&labels),
        )
        .unwrap();
        assert!(m.entries().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn ground_truth_rejects_invalid_labels() {
        let labels = vec![0usize, usize::MAX];
        let points = vec![DVector::zeros(1), DVector::zeros(1)];
        assert!(moment_matrix_oracle(
            &points,
            OracleMode::GroundTruth,
            0.5,
            0.0,
            1,
            &AffinityParams::default(),
            Some(&labels),
        )
        .is_err());
    }

    #[test]
    fn invariant_violations_name_the_invariant() {
        let bad = DMatrix::from_fn(4, 4, |i, j| if i == j { 0.9 } else { 0.0 });
        let err = MomentMatrix::new(bad, 0.5, 0.01).unwrap_err();
        assert!(err.to_string().contains("diagonal"));
        let bad2 = DMatrix::from_element(4, 4, 0.0);
        let err2 = MomentMatrix::new(bad2, 0.5, 0.01).unwrap_err();
        assert!(err2.to_string().contains("diagonal"));
    }

    #[test]
    fn affinity_recovers_separated_spherical_clusters() {
        // Two well-separated spherical clusters: the affinity matrix should
        // reproduce the block structure within 0.1 * alpha entrywise.
        let d = 3;
        let mix = GaussianMixture::new(
            vec![0.5, 0.5],
            vec![
                GaussianComponent::new(
                    DVector::from_element(d, 0.0),
                    DMatrix::identity(d, d),
                )
                .unwrap(),
                GaussianComponent::new(
                    DVector::from_element(d, 12.0),
                    DMatrix::identity(d, d),
                )
                .unwrap(),
            ],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(90);
        let (pts, labels) = sample_mixture(&mix, 300, &mut rng);
        let m = moment_matrix_oracle(
            &pts,
            OracleMode::Affinity,
            0.5,
            0.0,
            2,
            &AffinityParams::default(),
            None,
        )
        .unwrap();
        let mut worst = 0.0f64;
        for i in 0..300 {
            for j in 0..300 {
                let ideal = if labels[i] == labels[j] { 0.5 } else { 0.0 };
                worst = worst.max((m.entries()[(i, j)] - ideal).abs());
            }
        }
        assert!(worst <= 0.1 * 0.5, "worst entry deviation {worst}");
    }
}
