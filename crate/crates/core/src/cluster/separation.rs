//! The three-way parameter-separation test between Gaussian components.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::GaussianComponent;

const RANK_TOL: f64 = 1e-10;

/// Which separation condition fired (tested in order).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeparationKind {
    MeanSep,
    SpectralSep,
    FrobeniusSep,
    None,
}

/// Separation verdict with a witness direction where one exists.
#[derive(Debug, Clone)]
pub struct SeparationOutcome {
    pub kind: SeparationKind,
    pub witness: Option<DVector<f64>>,
    /// The relative-Frobenius test only applies when the covariance range
    /// spaces coincide; a mismatch is reported here.
    pub range_mismatch: bool,
}

/// Tests the three conditions of parameter separation at level `delta`:
/// mean separation (via the generalized Rayleigh quotient), spectral
/// separation (both orderings), and relative-Frobenius separation.
pub fn separation_test(
    a: &GaussianComponent,
    b: &GaussianComponent,
    delta: f64,
) -> Result<SeparationOutcome> {
    if delta <= 0.0 {
        return Err(Error::invalid("delta must be positive"));
    }
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
            context: "separation_test".into(),
        });
    }

    // Mean separation: max_v <mu1-mu2, v>^2 / v^T (S1+S2) v is the
    // generalized Rayleigh quotient d^T (S1+S2)^+ d with witness (S1+S2)^+ d.
    let dmu = a.mean() - b.mean();
    let total = a.cov() + b.cov();
    let pinv = linalg::sym_pseudo_pow(&total, -1.0, RANK_TOL);
    let proj = linalg::sym_pseudo_pow(&total, 0.0, RANK_TOL);
    let outside = (&dmu - &proj * &dmu).norm();
    let scale = total.trace().max(1.0);
    if outside > 1e-8 * scale.sqrt() && dmu.norm() > 0.0 {
        // Mean difference escapes the joint range space: infinitely
        // mean-separated along that direction.
        let w = &dmu - &proj * &dmu;
        return Ok(SeparationOutcome {
            kind: SeparationKind::MeanSep,
            witness: Some(w.normalize()),
            range_mismatch: false,
        });
    }
    let ratio = dmu.dot(&(&pinv * &dmu));
    if ratio > delta * delta {
        let w = &pinv * &dmu;
        return Ok(SeparationOutcome {
            kind: SeparationKind::MeanSep,
            witness: Some(w.normalize()),
            range_mismatch: false,
        });
    }

    // Spectral separation, each ordering in turn.
    for (first, second) in [(a, b), (b, a)] {
        if let Some(w) = spectral_witness(first, second, delta) {
            return Ok(SeparationOutcome {
                kind: SeparationKind::SpectralSep,
                witness: Some(w),
                range_mismatch: false,
            });
        }
    }

    // Relative Frobenius separation requires identical range spaces.
    let rank_a = linalg::sym_rank(a.cov(), RANK_TOL);
    let rank_b = linalg::sym_rank(b.cov(), RANK_TOL);
    let proj_a = linalg::sym_pseudo_pow(a.cov(), 0.0, RANK_TOL);
    let proj_b = linalg::sym_pseudo_pow(b.cov(), 0.0, RANK_TOL);
    let range_mismatch = rank_a != rank_b || (&proj_a - &proj_b).norm() > 1e-6;
    if !range_mismatch {
        let half = linalg::sym_pseudo_pow(a.cov(), -0.5, RANK_TOL);
        let rel = &half * (b.cov() - a.cov()) * &half;
        let frob_sq = rel.norm_squared();
        let op = linalg::sym_eigen_sorted(
            &(linalg::sym_pseudo_pow(a.cov(), -1.0, RANK_TOL) * b.cov()),
        )
        .0
        .iter()
        .map(|v| v.abs())
        .fold(0.0, f64::max);
        if frob_sq > delta * delta * op * op {
            let (_, vecs) = linalg::sym_eigen_sorted(&rel);
            return Ok(SeparationOutcome {
                kind: SeparationKind::FrobeniusSep,
                witness: Some(vecs.column(0).into_owned()),
                range_mismatch: false,
            });
        }
    }

    Ok(SeparationOutcome {
        kind: SeparationKind::None,
        witness: None,
        range_mismatch,
    })
}

fn spectral_witness(
    big: &GaussianComponent,
    small: &GaussianComponent,
    delta: f64,
) -> Option<DVector<f64>> {
    // Mass of `big` outside range(small) means an unbounded ratio.
    let proj = linalg::sym_pseudo_pow(small.cov(), 0.0, RANK_TOL);
    let resid = big.cov() - &proj * big.cov() * &proj;
    let scale = big.cov().trace().max(1.0);
    if resid.norm() > 1e-8 * scale {
        let (_, vecs) = linalg::sym_eigen_sorted(&resid);
        return Some(vecs.column(0).into_owned());
    }
    let half = linalg::sym_pseudo_pow(small.cov(), -0.5, RANK_TOL);
    let m = &half * big.cov() * &half;
    let (vals, vecs) = linalg::sym_eigen_sorted(&m);
    let top = vals.first().copied().unwrap_or(0.0);
    if top > delta {
        let w = &half * vecs.column(0);
        let norm = w.norm();
        if norm > 0.0 {
            return Some(w / norm);
        }
    }
    None
}
