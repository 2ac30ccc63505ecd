//! Robust hypothesis selection by Scheffe-set comparisons: single
//! elimination over the candidate list plus a champion re-check round.

use nalgebra::DVector;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{sample_mixture, GaussianMixture, MixtureDensity};

/// One pairwise comparison, for the ledger.
#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub left: usize,
    pub right: usize,
    /// Empirical mass of the Scheffe set {p_left > p_right} on the data.
    pub empirical: f64,
    /// Estimated mass under each hypothesis.
    pub mass_left: f64,
    pub mass_right: f64,
    pub winner: usize,
}

/// Selection outcome with the full comparison ledger.
#[derive(Debug, Clone, Serialize)]
pub struct TournamentOutcome {
    pub winner: usize,
    pub comparisons: Vec<Comparison>,
    /// Warning when the sample is smaller than the log(n)/eta^2 guidance.
    pub sample_size_warning: bool,
}

/// Selects a hypothesis within `O(eta)` TV of the best, assuming the best is
/// within `eta` of the sampled distribution. The evaluation points may be an
/// eps-corruption with `eps <= eta`.
pub fn tournament_select<R: Rng>(
    hypotheses: &[GaussianMixture],
    points: &[DVector<f64>],
    eta: f64,
    n_mc: usize,
    density_floor_scale: f64,
    rng: &mut R,
) -> Result<TournamentOutcome> {
    if hypotheses.is_empty() {
        return Err(Error::Empty("tournament over an empty list".into()));
    }
    if points.is_empty() {
        return Err(Error::Empty("tournament needs evaluation points".into()));
    }
    if hypotheses.len() == 1 {
        return Ok(TournamentOutcome {
            winner: 0,
            comparisons: Vec::new(),
            sample_size_warning: false,
        });
    }
    let n = points.len();
    let sample_size_warning =
        (n as f64) < (hypotheses.len() as f64).ln().max(1.0) / (eta * eta);

    // Per-hypothesis log densities on the evaluation points, precomputed.
    let densities: Vec<MixtureDensity> = hypotheses
        .iter()
        .map(|h| {
            let floor = density_floor_scale
                * h.components()
                    .iter()
                    .map(|c| c.cov().trace())
                    .fold(1.0f64, f64::max);
            MixtureDensity::new(h, floor)
        })
        .collect::<Result<_>>()?;
    let mut logp = vec![vec![0.0f64; n]; hypotheses.len()];
    for (h, dens) in densities.iter().enumerate() {
        for (i, x) in points.iter().enumerate() {
            logp[h][i] = dens.logp(x);
        }
    }

    let mut comparisons: Vec<Comparison> = Vec::new();
    let mut compare = |i: usize, j: usize, rng: &mut R| -> Result<usize> {
        // Scheffe set A = {x : p_i(x) > p_j(x)}.
        let empirical =
            (0..n).filter(|&t| logp[i][t] > logp[j][t]).count() as f64 / n as f64;
        let mass = |h: usize, rng: &mut R| -> Result<f64> {
            let (draws, _) = sample_mixture(&hypotheses[h], n_mc, rng);
            let mut hits = 0usize;
            for x in &draws {
                if densities[i].logp(x) > densities[j].logp(x) {
                    hits += 1;
                }
            }
            Ok(hits as f64 / n_mc as f64)
        };
        let mass_left = mass(i, rng)?;
        let mass_right = mass(j, rng)?;
        // mass_left >= mass_right by construction of A; the empirical mass
        // closer to a hypothesis' predicted mass picks the winner. Ties go to
        // the lower index.
        let winner = if empirical >= 0.5 * (mass_left + mass_right) {
            i
        } else {
            j
        };
        comparisons.push(Comparison {
            left: i,
            right: j,
            empirical,
            mass_left,
            mass_right,
            winner,
        });
        Ok(winner)
    };

    // Single elimination.
    let mut alive: Vec<usize> = (0..hypotheses.len()).collect();
    while alive.len() > 1 {
        let mut next = Vec::with_capacity(alive.len() / 2 + 1);
        let mut idx = 0;
        while idx + 1 < alive.len() {
            let (i, j) = (alive[idx].min(alive[idx + 1]), alive[idx].max(alive[idx + 1]));
            next.push(compare(i, j, rng)?);
            idx += 2;
        }
        if idx < alive.len() {
            next.push(alive[idx]);
        }
        alive = next;
    }
    let mut champion = alive[0];

    // Champion re-check: one pass against every other hypothesis.
    for challenger in 0..hypotheses.len() {
        if challenger == champion {
            continue;
        }
        let (i, j) = (champion.min(challenger), champion.max(challenger));
        let w = compare(i, j, rng)?;
        if w != champion {
            champion = w;
        }
    }

    Ok(TournamentOutcome {
        winner: champion,
        comparisons,
        sample_size_warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GaussianComponent;
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn g(mu: f64, var: f64) -> GaussianMixture {
        GaussianMixture::single(
            GaussianComponent::new(
                DVector::from_vec(vec![mu]),
                DMatrix::from_vec(1, 1, vec![var]),
            )
            .unwrap(),
        )
    }

    #[test]
    fn single_hypothesis_wins_trivially() {
        let hyps = vec![g(0.0, 1.0)];
        let pts = vec![DVector::from_vec(vec![0.0]); 10];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = tournament_select(&hyps, &pts, 0.05, 1000, 1e-9, &mut rng).unwrap();
        assert_eq!(out.winner, 0);
    }

    #[test]
    fn identical_hypotheses_tie_to_lowest_index() {
        let hyps = vec![g(0.0, 1.0), g(0.0, 1.0), g(0.0, 1.0)];
        let truth = g(0.0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (pts, _) = sample_mixture(&truth, 3000, &mut rng);
        let out = tournament_select(&hyps, &pts, 0.05, 2000, 1e-9, &mut rng).unwrap();
        assert_eq!(out.winner, 0);
    }

    #[test]
    fn truth_beats_wild_alternative() {
        let truth = g(0.0, 1.0);
        let hyps = vec![g(0.0, 100.0), truth.clone()];
        let mut wins = 0;
        for seed in 0..30 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let (pts, _) = sample_mixture(&truth, 4000, &mut rng);
            let out = tournament_select(&hyps, &pts, 0.05, 4000, 1e-9, &mut rng).unwrap();
            if out.winner == 1 {
                wins += 1;
            }
        }
        assert!(wins >= 29, "truth won only {wins}/30");
    }

    #[test]
    fn winner_has_smaller_deficit_in_its_comparisons() {
        let truth = g(0.0, 1.0);
        let hyps = vec![g(3.0, 1.0), g(0.0, 1.0), g(0.0, 4.0), g(-2.0, 0.5)];
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (pts, _) = sample_mixture(&truth, 5000, &mut rng);
        let out = tournament_select(&hyps, &pts, 0.05, 4000, 1e-9, &mut rng).unwrap();
        assert_eq!(out.winner, 1);
        for c in &out.comparisons {
            let dl = (c.mass_left - c.empirical).abs();
            let dr = (c.mass_right - c.empirical).abs();
            let (wd, ld) = if c.winner == c.left { (dl, dr) } else { (dr, dl) };
            assert!(
                wd <= ld + 3.0 * 0.05,
                "winner deficit {wd} vs loser {ld} in {c:?}"
            );
        }
    }
}
