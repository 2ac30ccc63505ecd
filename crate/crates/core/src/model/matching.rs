//! Component matching for evaluation, and the weight-gap interval trick.

use super::{tv_upper_bound, GaussianMixture};

/// Result of matching hypothesis components to truth components.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchReport {
    /// For each truth component, the hypothesis component it matched, or
    /// `None` when its best match exceeded the tolerance.
    pub assignment: Vec<Option<usize>>,
    /// Total truth weight matched to each hypothesis component.
    pub matched_weight: Vec<f64>,
    /// `|W_i - w_hat_i|` per hypothesis component.
    pub weight_gaps: Vec<f64>,
    /// Total weight of truth components left unmatched.
    pub unmatched_weight: f64,
    /// Largest matched TV bound (diagnostic).
    pub max_matched_tv: f64,
}

/// Matches each truth component to its closest hypothesis component under the
/// parameter-distance TV bound, applying the tolerance test after matching.
/// Several truth components may share one hypothesis component (a merged
/// component absorbs their combined weight).
pub fn match_components(
    truth: &GaussianMixture,
    hypothesis: &GaussianMixture,
    tv_tol: f64,
    c: f64,
) -> MatchReport {
    let kt = truth.len();
    let kh = hypothesis.len();
    let mut assignment = vec![None; kt];
    let mut matched_weight = vec![0.0; kh];
    let mut unmatched_weight = 0.0;
    let mut max_matched_tv: f64 = 0.0;
    for j in 0..kt {
        let mut best = f64::INFINITY;
        let mut best_i = 0;
        for i in 0..kh {
            let cost = tv_upper_bound(&truth.components()[j], &hypothesis.components()[i], c);
            if cost < best {
                best = cost;
                best_i = i;
            }
        }
        if best <= tv_tol {
            assignment[j] = Some(best_i);
            matched_weight[best_i] += truth.weights()[j];
            max_matched_tv = max_matched_tv.max(best);
        } else {
            unmatched_weight += truth.weights()[j];
        }
    }
    let weight_gaps = matched_weight
        .iter()
        .zip(hypothesis.weights())
        .map(|(m, w)| (m - w).abs())
        .collect();
    MatchReport {
        assignment,
        matched_weight,
        weight_gaps,
        unmatched_weight,
        max_matched_tv,
    }
}

/// Smallest `i` in `[k1 + k2 + 1]` such that no weight from either list lies
/// in `[eps^(c1^(i-1)), eps^(c1^i))`; exists by pigeonhole since the
/// intervals are disjoint and there are more of them than weights.
pub fn weight_gap_threshold(weights_a: &[f64], weights_b: &[f64], eps: f64, c1: f64) -> usize {
    assert!(eps > 0.0 && eps < 1.0, "eps must lie in (0,1)");
    assert!(c1 > 0.0 && c1 < 1.0, "c1 must lie in (0,1)");
    assert!(!weights_a.is_empty() && !weights_b.is_empty());
    let bins = weights_a.len() + weights_b.len() + 1;
    for i in 1..=bins {
        let lo = eps.powf(c1.powi(i as i32 - 1));
        let hi = eps.powf(c1.powi(i as i32));
        let occupied = weights_a
            .iter()
            .chain(weights_b)
            .any(|&w| w >= lo && w < hi);
        if !occupied {
            return i;
        }
    }
    unreachable!("pigeonhole guarantees an empty interval")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GaussianComponent;
    use nalgebra::{DMatrix, DVector};

    fn mix1(params: &[(f64, f64, f64)]) -> GaussianMixture {
        let weights = params.iter().map(|p| p.0).collect();
        let comps = params
            .iter()
            .map(|p| {
                GaussianComponent::new(
                    DVector::from_vec(vec![p.1]),
                    DMatrix::from_vec(1, 1, vec![p.2]),
                )
                .unwrap()
            })
            .collect();
        GaussianMixture::new(weights, comps).unwrap()
    }

    #[test]
    fn identical_mixtures_match_perfectly() {
        let m = mix1(&[(0.4, 0.0, 1.0), (0.6, 5.0, 2.0)]);
        let rep = match_components(&m, &m, 0.1, 1.0);
        assert_eq!(rep.unmatched_weight, 0.0);
        assert!(rep.weight_gaps.iter().all(|&g| g == 0.0));
        assert_eq!(rep.assignment, vec![Some(0), Some(1)]);
    }

    #[test]
    fn missing_light_component_lands_unmatched() {
        let eps = 0.02;
        let truth = mix1(&[(1.0 - eps, 0.0, 1.0), (eps, 50.0, 1.0)]);
        let hyp = mix1(&[(1.0, 0.0, 1.0)]);
        let rep = match_components(&truth, &hyp, 0.2, 1.0);
        assert_eq!(rep.assignment[1], None);
        assert!((rep.unmatched_weight - eps).abs() < 1e-12);
    }

    /// Brute-force oracle: best assignment of truth components to hypothesis
    /// components (or none) minimizing total weight gap subject to the TV
    /// tolerance, by exhaustive enumeration. Feasible for k <= 3.
    fn brute_force_gap(truth: &GaussianMixture, hyp: &GaussianMixture, tol: f64) -> f64 {
        let kt = truth.len();
        let kh = hyp.len();
        let options = kh + 1; // hypothesis index or unmatched
        let mut best = f64::INFINITY;
        let total = options.pow(kt as u32);
        for code in 0..total {
            let mut c = code;
            let mut matched = vec![0.0; kh];
            let mut feasible = true;
            for j in 0..kt {
                let choice = c % options;
                c /= options;
                if choice < kh {
                    let tv =
                        tv_upper_bound(&truth.components()[j], &hyp.components()[choice], 1.0);
                    if tv > tol {
                        feasible = false;
                        break;
                    }
                    matched[choice] += truth.weights()[j];
                }
            }
            if !feasible {
                continue;
            }
            let gap: f64 = matched
                .iter()
                .zip(hyp.weights())
                .map(|(m, w)| (m - w).abs())
                .sum();
            best = best.min(gap);
        }
        best
    }

    #[test]
    fn merged_component_absorbs_both_weights() {
        // Two nearly identical truth components vs one merged hypothesis.
        let truth = mix1(&[(0.3, 0.0, 1.0), (0.5, 1e-4, 1.0), (0.2, 40.0, 1.0)]);
        let hyp = mix1(&[(0.75, 0.0, 1.0), (0.25, 40.0, 1.0)]);
        let rep = match_components(&truth, &hyp, 0.1, 1.0);
        assert_eq!(rep.assignment[0], Some(0));
        assert_eq!(rep.assignment[1], Some(0));
        assert!((rep.matched_weight[0] - 0.8).abs() < 1e-12);
        assert!((rep.weight_gaps[0] - 0.05).abs() < 1e-12);
        // Greedy matches the brute-force optimum on this instance.
        let oracle = brute_force_gap(&truth, &hyp, 0.1);
        let greedy: f64 = rep.weight_gaps.iter().sum();
        assert!((greedy - oracle).abs() < 1e-12);
    }

    #[test]
    fn gap_threshold_all_heavy() {
        // All weights >= eps^{c1} miss the first interval [eps, eps^{c1}).
        let i = weight_gap_threshold(&[0.5, 0.4], &[0.6], 0.01, 0.5);
        assert_eq!(i, 1);
    }

    #[test]
    fn gap_threshold_first_interval_occupied() {
        // eps = 0.01, c1 = 0.5: interval 1 is [0.01, 0.1); planting 0.05
        // forces i = 2 unless interval 2 = [0.1, 0.316) is also occupied.
        let i = weight_gap_threshold(&[0.05, 0.95], &[0.5], 0.01, 0.5);
        assert_eq!(i, 2);
    }

    #[test]
    fn gap_threshold_equal_pair() {
        let i = weight_gap_threshold(&[0.5], &[0.5], 0.01, 0.5);
        assert_eq!(i, 1);
    }

    #[test]
    fn gap_threshold_exists_randomized() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let ka = rng.gen_range(1..=3);
            let kb = rng.gen_range(1..=3);
            let wa: Vec<f64> = (0..ka).map(|_| rng.gen_range(1e-6..1.0)).collect();
            let wb: Vec<f64> = (0..kb).map(|_| rng.gen_range(1e-6..1.0)).collect();
            let i = weight_gap_threshold(&wa, &wb, 0.01, 0.6);
            assert!(i >= 1 && i <= ka + kb + 1);
        }
    }
}
