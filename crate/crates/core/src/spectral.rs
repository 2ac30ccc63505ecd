//! Spectral separation of thin components: a one-dimensional piecewise
//! constant classifier `F(x) = f(v . x)` built from candidate parameters
//! when some candidate covariance has a small eigenvalue.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

/// The two separator shapes.
#[derive(Debug, Clone, PartialEq)]
pub enum SeparatorKind {
    /// `F(x) = 1` iff `v . x` lies in one of the intervals
    /// `(center - half_width, center + half_width)`.
    VarianceGap {
        threshold: f64,
        intervals: Vec<(f64, f64)>,
    },
    /// `F(x) = 1` iff `v . x > threshold`.
    MeanGap { threshold: f64 },
}

/// Direction plus 1-D classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct Separator {
    pub direction: DVector<f64>,
    pub kind: SeparatorKind,
}

impl Separator {
    pub fn classify(&self, x: &DVector<f64>) -> bool {
        let p = self.direction.dot(x);
        match &self.kind {
            SeparatorKind::VarianceGap { intervals, .. } => intervals
                .iter()
                .any(|&(c, hw)| (p - c).abs() < hw),
            SeparatorKind::MeanGap { threshold } => p > *threshold,
        }
    }
}

/// Minimum-eigenvalue search over the candidate covariances: the direction
/// and component index with `v^T Sigma_s v < 2 eta`, if one exists. Ties
/// break toward the lowest component index.
pub fn find_thin_direction(
    candidates: &[(DVector<f64>, DMatrix<f64>)],
    eta: f64,
) -> Option<(DVector<f64>, usize)> {
    let mut best: Option<(f64, DVector<f64>, usize)> = None;
    for (s, (_, cov)) in candidates.iter().enumerate() {
        let (vals, vecs) = linalg::sym_eigen_sorted(cov);
        let min_idx = vals.len() - 1;
        let lambda = vals[min_idx];
        let better = match &best {
            Some((b, _, _)) => lambda < *b,
            None => true,
        };
        if better {
            best = Some((lambda, vecs.column(min_idx).into_owned(), s));
        }
    }
    match best {
        Some((lambda, v, s)) if lambda < 2.0 * eta => Some((v, s)),
        _ => None,
    }
}

/// Builds the separator from candidate parameters along `v`.
///
/// Variance-gap case: some `v^T Sigma_j v > sqrt(eta)`; scan a log grid over
/// `(2 eta, sqrt(eta))` for a threshold `t` with no directional variance in
/// the multiplicative band `(t, t * gap_c * eta^(-1/(2k)))`, and cut out
/// intervals of half-width `width_mult * sqrt(t) * log(1/eta)` around every
/// projected candidate mean. Mean-gap case: all directional variances are at
/// most `sqrt(eta)`; pick the largest gap between projected means, requiring
/// clearance `1/(20k)`.
pub fn build_separator(
    candidates: &[(DVector<f64>, DMatrix<f64>)],
    v: &DVector<f64>,
    eta: f64,
    k: usize,
    gap_c: f64,
    width_mult: f64,
) -> Result<Separator> {
    if k < 2 || candidates.len() < 2 {
        return Err(Error::SeparatorFailure(
            "need at least two components to separate".into(),
        ));
    }
    if !(0.0 < eta && eta < 1.0) {
        return Err(Error::invalid("eta must lie in (0,1)"));
    }
    let dir_vars: Vec<f64> = candidates
        .iter()
        .map(|(_, cov)| (v.transpose() * cov * v)[(0, 0)].max(0.0))
        .collect();
    let proj_means: Vec<f64> = candidates.iter().map(|(mu, _)| v.dot(mu)).collect();
    let root_eta = eta.sqrt();

    if dir_vars.iter().any(|&a| a > root_eta) {
        // Variance-gap: log-scan for a band free of directional variances.
        let gap = gap_c * eta.powf(-1.0 / (2.0 * k as f64));
        if gap <= 1.0 {
            return Err(Error::SeparatorFailure(format!(
                "gap factor {gap} is not separating; eta too large for k = {k}"
            )));
        }
        let lo = (2.0 * eta).ln();
        let hi = root_eta.ln();
        let steps = 1000;
        let mut found = None;
        // Scan strictly inside (2 eta, sqrt(eta)), smallest t first so the
        // intervals stay as narrow as possible.
        for i in 1..steps {
            let t = (lo + (hi - lo) * i as f64 / steps as f64).exp();
            let band_free = dir_vars.iter().all(|&a| !(a > t && a < t * gap));
            let below = dir_vars.iter().any(|&a| a <= t);
            let above = dir_vars.iter().any(|&a| a >= t * gap);
            if band_free && below && above {
                found = Some(t);
                break;
            }
        }
        let t = found.ok_or_else(|| {
            Error::SeparatorFailure(
                "no variance band free of candidates; parameters violate the dichotomy".into(),
            )
        })?;
        let half_width = width_mult * t.sqrt() * (1.0 / eta).ln();
        let intervals: Vec<(f64, f64)> = proj_means.iter().map(|&m| (m, half_width)).collect();
        Ok(Separator {
            direction: v.clone(),
            kind: SeparatorKind::VarianceGap {
                threshold: t,
                intervals,
            },
        })
    } else {
        // Mean-gap: all variances small along v; split at the widest gap.
        let mut sorted = proj_means.clone();
        sorted.sort_by(f64::total_cmp);
        let clearance = 1.0 / (20.0 * k as f64);
        let mut best: Option<(f64, f64)> = None; // (gap, midpoint)
        for w in sorted.windows(2) {
            let gap = w[1] - w[0];
            let better = match best {
                Some((g, _)) => gap > g,
                None => true,
            };
            if better {
                best = Some((gap, 0.5 * (w[0] + w[1])));
            }
        }
        match best {
            Some((gap, mid)) if gap > 2.0 * clearance => Ok(Separator {
                direction: v.clone(),
                kind: SeparatorKind::MeanGap { threshold: mid },
            }),
            _ => Err(Error::SeparatorFailure(
                "no projected-mean gap wide enough; parameters violate the dichotomy".into(),
            )),
        }
    }
}

/// Asserts the constructed gap property: no directional variance inside the
/// excluded band (variance-gap), or no projected mean within `1/(20k)` of the
/// threshold (mean-gap). Used by tests and reports.
pub fn check_gap_property(
    sep: &Separator,
    candidates: &[(DVector<f64>, DMatrix<f64>)],
    eta: f64,
    k: usize,
    gap_c: f64,
) -> bool {
    let v = &sep.direction;
    match &sep.kind {
        SeparatorKind::VarianceGap { threshold, .. } => {
            let gap = gap_c * eta.powf(-1.0 / (2.0 * k as f64));
            candidates.iter().all(|(_, cov)| {
                let a = (v.transpose() * cov * v)[(0, 0)];
                !(a > *threshold && a < *threshold * gap)
            })
        }
        SeparatorKind::MeanGap { threshold } => {
            let clearance = 1.0 / (20.0 * k as f64);
            candidates
                .iter()
                .all(|(mu, _)| (v.dot(mu) - threshold).abs() >= clearance)
        }
    }
}

/// Partitions points by the separator value; side1 collects `F(x) = 1`.
pub fn apply_separator(
    sep: &Separator,
    points: &[DVector<f64>],
) -> (Vec<usize>, Vec<usize>) {
    let mut side1 = Vec::new();
    let mut side2 = Vec::new();
    for (i, p) in points.iter().enumerate() {
        if sep.classify(p) {
            side1.push(i);
        } else {
            side2.push(i);
        }
    }
    (side1, side2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{sample_mixture, GaussianComponent, GaussianMixture};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cand(mean: Vec<f64>, diag: Vec<f64>) -> (DVector<f64>, DMatrix<f64>) {
        (
            DVector::from_vec(mean),
            DMatrix::from_diagonal(&DVector::from_vec(diag)),
        )
    }

    #[test]
    fn no_thin_direction_on_isotropic() {
        let cands = vec![
            cand(vec![0.0, 0.0], vec![1.0, 1.0]),
            cand(vec![1.0, 0.0], vec![1.0, 1.0]),
        ];
        assert!(find_thin_direction(&cands, 0.1).is_none());
    }

    #[test]
    fn thin_direction_found_with_ties_to_lowest() {
        let cands = vec![
            cand(vec![0.0, 0.0], vec![1.0, 1e-6]),
            cand(vec![0.0, 0.0], vec![1.0, 1.0]),
        ];
        let (v, s) = find_thin_direction(&cands, 1e-3).unwrap();
        assert_eq!(s, 0);
        assert!(v[1].abs() > 0.999, "direction should be e2: {v}");
    }

    #[test]
    fn variance_gap_separator_construction() {
        let k = 2;
        let eta = 1e-4;
        let cands = vec![
            cand(vec![0.0, 0.0], vec![1e-6, 1.0]),
            cand(vec![0.0, 0.0], vec![1.0, 1.0]),
        ];
        let (v, _) = find_thin_direction(&cands, eta).unwrap();
        let sep = build_separator(&cands, &v, eta, k, 0.25, 1.0).unwrap();
        match &sep.kind {
            SeparatorKind::VarianceGap { threshold, intervals } => {
                assert!(*threshold > 2.0 * eta && *threshold < eta.sqrt());
                assert_eq!(intervals.len(), 2);
            }
            other => panic!("expected variance gap, got {other:?}"),
        }
        assert!(check_gap_property(&sep, &cands, eta, k, 0.25));
    }

    #[test]
    fn mean_gap_separator_midpoint_rule() {
        let k = 2;
        let eta = 0.01; // sqrt(eta) = 0.1 above both variances
        let cands = vec![
            cand(vec![0.0, 0.0], vec![1e-4, 1.0]),
            cand(vec![1.0, 0.0], vec![1e-4, 1.0]),
        ];
        let v = DVector::from_vec(vec![1.0, 0.0]);
        let sep = build_separator(&cands, &v, eta, k, 0.25, 1.0).unwrap();
        match &sep.kind {
            SeparatorKind::MeanGap { threshold } => {
                assert!((threshold - 0.5).abs() < 1e-12);
            }
            other => panic!("expected mean gap, got {other:?}"),
        }
        assert!(check_gap_property(&sep, &cands, eta, k, 0.25));
    }

    #[test]
    fn k1_rejected() {
        let cands = vec![cand(vec![0.0], vec![1e-6])];
        let v = DVector::from_vec(vec![1.0]);
        assert!(build_separator(&cands, &v, 1e-3, 1, 0.25, 1.0).is_err());
    }

    #[test]
    fn separator_is_deterministic() {
        let sep = Separator {
            direction: DVector::from_vec(vec![1.0, 0.0]),
            kind: SeparatorKind::MeanGap { threshold: 0.3 },
        };
        let points: Vec<DVector<f64>> = (0..10)
            .map(|i| DVector::from_vec(vec![i as f64 * 0.1, 1.0]))
            .collect();
        let (s1a, s2a) = apply_separator(&sep, &points);
        let (s1b, s2b) = apply_separator(&sep, &points);
        assert_eq!(s1a, s1b);
        assert_eq!(s2a, s2b);
        assert_eq!(s1a.len() + s2a.len(), 10);
    }

    #[test]
    fn all_points_in_one_interval() {
        let sep = Separator {
            direction: DVector::from_vec(vec![1.0]),
            kind: SeparatorKind::VarianceGap {
                threshold: 0.01,
                intervals: vec![(0.0, 100.0)],
            },
        };
        let points: Vec<DVector<f64>> =
            (0..20).map(|i| DVector::from_vec(vec![i as f64])).collect();
        let (s1, s2) = apply_separator(&sep, &points);
        assert_eq!(s1.len(), 20);
        assert!(s2.is_empty());
    }

    #[test]
    fn planted_thin_component_low_misclassification() {
        // Thin component (variance 1e-6 along e1) vs a unit-variance one;
        // width multiplier tuned small keeps the wide component out of the
        // intervals.
        let d = 3;
        let thin_cov =
            DMatrix::from_diagonal(&DVector::from_vec(vec![1e-6, 1.0, 1.0]));
        let wide_cov = DMatrix::identity(d, d);
        let mix = GaussianMixture::new(
            vec![0.5, 0.5],
            vec![
                GaussianComponent::new(DVector::zeros(d), thin_cov.clone()).unwrap(),
                GaussianComponent::new(DVector::from_vec(vec![0.3, 0.0, 0.0]), wide_cov.clone())
                    .unwrap(),
            ],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(60);
        let n = 10_000;
        let (points, labels) = sample_mixture(&mix, n, &mut rng);
        let eta = 1e-3;
        let cands = vec![
            (DVector::zeros(d), thin_cov),
            (DVector::from_vec(vec![0.3, 0.0, 0.0]), wide_cov),
        ];
        let (v, s) = find_thin_direction(&cands, eta).unwrap();
        assert_eq!(s, 0);
        let sep = build_separator(&cands, &v, eta, 2, 0.25, 0.015).unwrap();
        let (side1, _) = apply_separator(&sep, &points);
        let side1_set: std::collections::BTreeSet<usize> = side1.into_iter().collect();
        let mut mis = [0usize; 2];
        let mut tot = [0usize; 2];
        for i in 0..n {
            tot[labels[i]] += 1;
            // Thin component should be F = 1, wide F = 0.
            let predicted_one = side1_set.contains(&i);
            if (labels[i] == 0) != predicted_one {
                mis[labels[i]] += 1;
            }
        }
        for c in 0..2 {
            let rate = mis[c] as f64 / tot[c] as f64;
            assert!(rate <= 0.01, "component {c} misclassified at {rate}");
        }
    }
}
