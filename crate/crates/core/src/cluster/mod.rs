//! Partial clustering: split a corrupted sample into two sub-mixture halves
//! by rounding a pseudo-moment matrix and merging candidate clusters whose
//! robust second moments agree.
//!
//! The moment-matrix SDP itself is out of scope; the rounding and merging
//! operate on any n x n matrix satisfying the pseudo-moment invariants, with
//! two oracle implementations behind [`moment_matrix_oracle`]: ideal
//! pseudo-moments from diagnostic labels, and a spectral-affinity surrogate
//! built from the corrupted sample.

mod moment_matrix;
mod separation;

pub use moment_matrix::{moment_matrix_oracle, AffinityParams, MomentMatrix};
pub use separation::{separation_test, SeparationKind, SeparationOutcome};

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::config::OracleMode;
use crate::error::{Error, Result};
use crate::linalg;
use crate::robust;

/// Rounding variant: the original threshold or the polynomial-time upgrade.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoundingVariant {
    /// Threshold `eta^2 alpha^5 / k`.
    V1,
    /// Threshold `alpha^2 / 2`.
    Upgraded,
}

/// Candidate clusters produced by rounding.
#[derive(Debug, Clone)]
pub struct RoundingOutcome {
    pub clusters: Vec<Vec<usize>>,
    /// Rows that were sampled.
    pub rows: Vec<usize>,
    /// Points not covered by any cluster.
    pub uncovered: usize,
}

/// Samples `ell = C (1/alpha) log(k/eta)` rows and collects the columns above
/// the variant threshold.
pub fn round_partition<R: Rng>(
    m: &MomentMatrix,
    k: usize,
    eta: f64,
    variant: RoundingVariant,
    c_ell: f64,
    rng: &mut R,
) -> Result<RoundingOutcome> {
    m.validate()?;
    let n = m.len();
    let alpha = m.alpha();
    if !(0.0 < eta && eta < 1.0) {
        return Err(Error::invalid("eta must lie in (0,1)"));
    }
    let ell = ((c_ell / alpha) * (k as f64 / eta).ln()).ceil().max(1.0) as usize;
    let threshold = match variant {
        RoundingVariant::V1 => eta * eta * alpha.powi(5) / k as f64,
        RoundingVariant::Upgraded => alpha * alpha / 2.0,
    };
    let mut rows = Vec::with_capacity(ell);
    let mut clusters = Vec::with_capacity(ell);
    let mut covered = vec![false; n];
    for _ in 0..ell {
        let i = rng.gen_range(0..n);
        rows.push(i);
        let mut cluster = Vec::new();
        for j in 0..n {
            if m.entries()[(i, j)] >= threshold {
                cluster.push(j);
                covered[j] = true;
            }
        }
        clusters.push(cluster);
    }
    let uncovered = covered.iter().filter(|&&c| !c).count();
    Ok(RoundingOutcome {
        clusters,
        rows,
        uncovered,
    })
}

/// Result of merging candidate clusters by robust second-moment agreement.
#[derive(Debug, Clone)]
pub struct MergeOutcome {
    /// Groups of indices into the input cluster list.
    pub groups: Vec<Vec<usize>>,
    /// Robust second moment per input cluster (those that met the size floor).
    pub moments: Vec<Option<DMatrix<f64>>>,
    /// Clusters dropped for being under the size floor.
    pub dropped: Vec<usize>,
}

/// Union-finds clusters whose robust second moments are within `2 c tau` in
/// Frobenius norm. Clusters smaller than `min_size` are dropped.
pub fn merge_clusters(
    clusters: &[Vec<usize>],
    points: &[DVector<f64>],
    eta_rates: &[f64],
    tau: f64,
    c: f64,
    min_size: usize,
) -> Result<MergeOutcome> {
    if clusters.len() != eta_rates.len() {
        return Err(Error::invalid("eta_rates must align with clusters"));
    }
    let mut moments: Vec<Option<DMatrix<f64>>> = Vec::with_capacity(clusters.len());
    let mut dropped = Vec::new();
    for (ci, cluster) in clusters.iter().enumerate() {
        if cluster.len() < min_size.max(1) {
            moments.push(None);
            dropped.push(ci);
            continue;
        }
        let members: Vec<DVector<f64>> = cluster.iter().map(|&i| points[i].clone()).collect();
        let rep = robust::robust_second_moment(&members, eta_rates[ci].min(0.49))?;
        moments.push(Some(rep.matrix));
    }

    // Union-find over the surviving clusters.
    let mut parent: Vec<usize> = (0..clusters.len()).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        let mut r = i;
        while parent[r] != r {
            r = parent[r];
        }
        let mut cur = i;
        while parent[cur] != r {
            let next = parent[cur];
            parent[cur] = r;
            cur = next;
        }
        r
    }
    for i in 0..clusters.len() {
        let Some(si) = &moments[i] else { continue };
        for j in i + 1..clusters.len() {
            let Some(sj) = &moments[j] else { continue };
            if (si - sj).norm() <= 2.0 * c * tau {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[rj] = ri;
                }
            }
        }
    }
    let mut groups_by_root: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..clusters.len() {
        if moments[i].is_some() {
            let r = find(&mut parent, i);
            groups_by_root.entry(r).or_default().push(i);
        }
    }
    Ok(MergeOutcome {
        groups: groups_by_root.into_values().collect(),
        moments,
        dropped,
    })
}

/// Result of partial clustering.
#[derive(Debug, Clone)]
pub struct PartitionResult {
    pub side1: Vec<usize>,
    pub side2: Vec<usize>,
    /// Candidate clusters (indices into `points`).
    pub clusters: Vec<Vec<usize>>,
    /// Merge groups as point-index sets.
    pub groups: Vec<Vec<usize>>,
    /// True when only one merge group exists and no non-trivial split is
    /// possible (side1 then carries everything).
    pub trivial: bool,
    /// Per-true-cluster purity (max side fraction), when labels are supplied.
    pub purity: Option<Vec<f64>>,
    /// Whether the oracle ran on a subsample that was then extended.
    pub subsampled: bool,
}

/// Tuning knobs for [`partial_cluster`].
#[derive(Debug, Clone)]
pub struct PartialClusterParams {
    pub eta: f64,
    /// Merge scale `tau`.
    pub tau: f64,
    /// Constant at the merge threshold site (`cluster.tau.c`).
    pub c_tau: f64,
    /// Constant at the rounding repetition site (`cluster.round.ell.c`).
    pub c_ell: f64,
    pub variant: RoundingVariant,
    /// Cap on the number of points entering the oracle.
    pub sample_cap: usize,
    pub affinity: AffinityParams,
}

impl Default for PartialClusterParams {
    fn default() -> Self {
        PartialClusterParams {
            eta: 0.05,
            tau: 1.0,
            c_tau: 1.0,
            c_ell: 1.0,
            variant: RoundingVariant::Upgraded,
            sample_cap: 3000,
            affinity: AffinityParams::default(),
        }
    }
}

/// Merge-threshold scale from the analysis: `10^8 C^6 t^4 / (beta^(2/t) alpha^2)`.
/// Astronomical at desk scale; exposed so configurations can audit it.
pub fn tau_formula(beta: f64, alpha: f64, c: f64, t: f64) -> f64 {
    1e8 * c.powi(6) * t.powi(4) / (beta.powf(2.0 / t) * alpha * alpha)
}

/// Oracle -> rounding -> merging -> random subset of merge groups.
///
/// On conforming separated inputs the split respects the true clustering up
/// to `O(sqrt(eta)) + O(beta/(eta alpha^2))` per component. `labels` feed the
/// ground-truth oracle and the purity diagnostics; they are never used by the
/// affinity path.
#[allow(clippy::too_many_arguments)]
pub fn partial_cluster<R: Rng>(
    points: &[DVector<f64>],
    k: usize,
    alpha: f64,
    eps: f64,
    beta: f64,
    oracle_mode: OracleMode,
    labels: Option<&[usize]>,
    params: &PartialClusterParams,
    rng: &mut R,
) -> Result<PartitionResult> {
    let n = points.len();
    if n == 0 {
        return Err(Error::Empty("partial_cluster".into()));
    }
    if alpha <= 2.0 * eps {
        return Err(Error::invalid("need alpha > 2 eps"));
    }

    // Oracle on a bounded subsample; the partition is extended afterwards.
    let subsampled = n > params.sample_cap;
    let sub_idx: Vec<usize> = if subsampled {
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..params.sample_cap {
            let j = rng.gen_range(i..n);
            idx.swap(i, j);
        }
        idx.truncate(params.sample_cap);
        idx.sort_unstable();
        idx
    } else {
        (0..n).collect()
    };
    let sub_points: Vec<DVector<f64>> = sub_idx.iter().map(|&i| points[i].clone()).collect();
    let sub_labels: Option<Vec<usize>> =
        labels.map(|l| sub_idx.iter().map(|&i| l[i]).collect());

    let matrix = moment_matrix_oracle(
        &sub_points,
        oracle_mode,
        alpha,
        eps,
        k,
        &params.affinity,
        sub_labels.as_deref(),
    )?;

    let rounding = round_partition(&matrix, k, params.eta, params.variant, params.c_ell, rng)?;
    let n_sub = sub_points.len();
    let min_size = ((alpha * n_sub as f64) / 2.0).floor() as usize;
    let eta_rate = (3.0 * eps / alpha + 2.0 * beta / (params.eta * alpha * alpha)).min(0.25);
    let eta_rates = vec![eta_rate; rounding.clusters.len()];
    let merged = merge_clusters(
        &rounding.clusters,
        &sub_points,
        &eta_rates,
        params.tau,
        params.c_tau,
        min_size,
    )?;

    // Merge groups as subsample point sets.
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for g in &merged.groups {
        let mut set = std::collections::BTreeSet::new();
        for &ci in g {
            for &p in &rounding.clusters[ci] {
                set.insert(p);
            }
        }
        groups.push(set.into_iter().collect());
    }
    // A point claimed by clusters in different merge groups stays with the
    // group whose classifier score prefers it (resolved below by scoring).

    if groups.len() <= 1 {
        let side1: Vec<usize> = (0..n).collect();
        let purity = labels.map(|l| purity_per_cluster(l, &side1, n, k));
        return Ok(PartitionResult {
            side1,
            side2: Vec::new(),
            clusters: remap(&rounding.clusters, &sub_idx),
            groups: remap(&groups, &sub_idx),
            trivial: true,
            purity,
            subsampled,
        });
    }

    // Group classifier: Gaussian score from the group's member points.
    let stats: Vec<(DVector<f64>, DMatrix<f64>, f64)> = groups
        .iter()
        .map(|g| {
            let members: Vec<DVector<f64>> = g.iter().map(|&i| sub_points[i].clone()).collect();
            let mean = linalg::mean_point(&members);
            let cov = linalg::covariance(&members);
            let d = mean.len();
            let reg = &cov + DMatrix::<f64>::identity(d, d) * (1e-9 * cov.trace().max(1.0));
            let (vals, _) = linalg::sym_eigen_sorted(&reg);
            let logdet: f64 = vals.iter().map(|v| v.max(1e-300).ln()).sum();
            (mean, linalg::sym_pseudo_pow(&reg, -1.0, 1e-12), logdet)
        })
        .collect();
    let assign_group = |x: &DVector<f64>| -> usize {
        let mut best = 0usize;
        let mut best_score = f64::INFINITY;
        for (gi, (mean, pinv, logdet)) in stats.iter().enumerate() {
            let c = x - mean;
            let score = c.dot(&(pinv * &c)) + logdet;
            if score < best_score {
                best_score = score;
                best = gi;
            }
        }
        best
    };

    // Random nonempty proper subset of merge groups.
    let g = groups.len();
    let subset_code = rng.gen_range(1..(1usize << g) - 1);
    let chosen: Vec<usize> = (0..g).filter(|i| subset_code >> i & 1 == 1).collect();
    let in_side1_group: Vec<bool> = (0..g).map(|i| chosen.contains(&i)).collect();

    let mut side1 = Vec::new();
    let mut side2 = Vec::new();
    let mut sub_assignment: std::collections::HashMap<usize, usize> = Default::default();
    for (gi, group) in groups.iter().enumerate() {
        for &p in group {
            // Contested points (claimed by several groups) resolve by score.
            let entry = sub_assignment.entry(p).or_insert(gi);
            if *entry != gi {
                *entry = assign_group(&sub_points[p]);
            }
        }
    }
    for (pos, &orig) in sub_idx.iter().enumerate() {
        let gi = match sub_assignment.get(&pos) {
            Some(&gi) => gi,
            None => assign_group(&sub_points[pos]),
        };
        if in_side1_group[gi] {
            side1.push(orig);
        } else {
            side2.push(orig);
        }
    }
    if subsampled {
        let in_sub: std::collections::BTreeSet<usize> = sub_idx.iter().copied().collect();
        for i in 0..n {
            if in_sub.contains(&i) {
                continue;
            }
            if in_side1_group[assign_group(&points[i])] {
                side1.push(i);
            } else {
                side2.push(i);
            }
        }
        side1.sort_unstable();
        side2.sort_unstable();
    }

    let purity = labels.map(|l| purity_per_cluster(l, &side1, n, k));
    Ok(PartitionResult {
        side1,
        side2,
        clusters: remap(&rounding.clusters, &sub_idx),
        groups: remap(&groups, &sub_idx),
        trivial: false,
        purity,
        subsampled,
    })
}

fn remap(sets: &[Vec<usize>], sub_idx: &[usize]) -> Vec<Vec<usize>> {
    sets.iter()
        .map(|s| s.iter().map(|&i| sub_idx[i]).collect())
        .collect()
}

fn purity_per_cluster(labels: &[usize], side1: &[usize], n: usize, k: usize) -> Vec<f64> {
    let side1_set: std::collections::BTreeSet<usize> = side1.iter().copied().collect();
    let mut counts = vec![(0usize, 0usize); k];
    for i in 0..n {
        let l = labels[i];
        if l >= k {
            continue;
        }
        if side1_set.contains(&i) {
            counts[l].0 += 1;
        } else {
            counts[l].1 += 1;
        }
    }
    counts
        .iter()
        .map(|&(a, b)| {
            let total = a + b;
            if total == 0 {
                1.0
            } else {
                a.max(b) as f64 / total as f64
            }
        })
        .collect()
}
