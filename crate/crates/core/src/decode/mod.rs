//! List-decodable recovery of candidate component parameters from robust
//! Hermite tensors.
//!
//! The route: estimate `T_1..T_m` robustly, collapse two modes of `T_4`
//! against random Gaussian pairs to expose one component's covariance shift
//! up to a low-rank error, build a search subspace from heavy singular
//! directions, then either enumerate a cover of candidate parameters (cover
//! mode) or learn the mixture inside the subspace from a fresh sample and
//! lift it back (efficient mode). The list always contains the trivial
//! robust-mean/robust-covariance candidate, so it is never empty.

mod enumerate;
mod lowdim;
mod subspace;

pub use enumerate::{ball_cover, enumerate_candidates, symmetric_grid};
pub use lowdim::{low_dim_learn, LowDimConfig, SubspaceMixture};
pub use subspace::{build_search_subspace, SearchSubspace, SubspaceSource};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::config::DecodeMode;
use crate::error::{Error, Result};
use crate::hermite::{collapse_modes, DenseTensor};
use crate::linalg;
use crate::robust;

/// One random collapse of the estimated fourth Hermite tensor.
#[derive(Debug, Clone)]
pub struct CollapseDraw {
    pub pairs: Vec<(DVector<f64>, DVector<f64>)>,
    pub coeffs: Vec<f64>,
    /// Symmetrized `sum_j a_j T_4(.,.,x_j,y_j)`.
    pub s_hat: DMatrix<f64>,
}

/// One candidate component parameter pair.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    /// Group id for candidates emitted together as a k-tuple.
    pub group: Option<usize>,
    /// Mixing weight when the producing route learned one.
    pub weight: Option<f64>,
}

/// Bounded list of candidates.
#[derive(Debug, Clone)]
pub struct CandidateList {
    pub entries: Vec<Candidate>,
    pub budget: usize,
    pub truncated: bool,
}

impl CandidateList {
    /// Indices of entries sharing each group id, in group order.
    pub fn groups(&self) -> Vec<Vec<usize>> {
        let mut map: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for (i, c) in self.entries.iter().enumerate() {
            if let Some(g) = c.group {
                map.entry(g).or_default().push(i);
            }
        }
        map.into_values().collect()
    }
}

/// Decode-stage configuration (scales, budgets, and the constants feeding
/// the parameter formulas).
#[derive(Debug, Clone)]
pub struct DecodeConfig {
    pub m_max: usize,
    pub collapse_budget: usize,
    pub cover_budget: usize,
    pub candidate_budget: usize,
    pub subspace_dim_cap: usize,
    pub tensor_sample_cap: usize,
    pub guard: usize,
    pub lowdim: LowDimConfig,
    pub filter_stop: f64,
    pub filter_max_iter: usize,
    /// Constants at the decode formula sites.
    pub c_eta: f64,
    pub eta_cap: f64,
    /// Lower clamp on eta; keeps grid scales finite when eps is tiny.
    pub eta_floor: f64,
    pub c_coeff_bound: f64,
    pub c_delta: f64,
    pub c_lambda: f64,
    pub c_phi: f64,
    pub c_kprime: f64,
    pub dedup_scale: f64,
    /// Explicit overrides; `None` takes the (capped) formula value.
    pub eta_override: Option<f64>,
    pub delta_override: Option<f64>,
    /// Trim rate for the low-dimensional learner.
    pub lowdim_trim: f64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            m_max: 4,
            collapse_budget: 50,
            cover_budget: 20_000,
            candidate_budget: 4_000,
            subspace_dim_cap: 6,
            tensor_sample_cap: 20_000,
            guard: crate::hermite::DEFAULT_ENTRY_GUARD,
            lowdim: LowDimConfig::default(),
            filter_stop: robust::DEFAULT_STOP,
            filter_max_iter: robust::DEFAULT_MAX_ITER,
            c_eta: 1.0,
            eta_cap: 0.25,
            eta_floor: 0.01,
            c_coeff_bound: 1.0,
            c_delta: 1.0,
            c_lambda: 4.0,
            c_phi: 10.0,
            c_kprime: 1.0,
            dedup_scale: 0.1,
            eta_override: None,
            delta_override: None,
            lowdim_trim: 0.0,
        }
    }
}

/// Resolved decode scales, embedded in reports.
#[derive(Debug, Clone, Serialize)]
pub struct DecodeScales {
    pub eta: f64,
    pub eta_formula: f64,
    pub delta: f64,
    pub lambda: f64,
    pub phi: f64,
    pub coeff_bound: f64,
    /// log10 of the repetition formula (astronomical at faithful scales).
    pub ell_formula_log10: f64,
    pub ell_used: usize,
}

/// Computes the decode scales from `(k, alpha, eps, delta_bound)` with the
/// configured constants, caps, and overrides.
pub fn decode_scales(k: usize, alpha: f64, eps: f64, delta_bound: f64, cfg: &DecodeConfig) -> DecodeScales {
    let kf = k as f64;
    let four_k = 4.0 * kf;
    // eta = (2k)^{4k} (C k (1/alpha + Delta))^{4k} sqrt(eps), computed in logs.
    let log_eta = four_k * (2.0 * kf).ln()
        + four_k * (cfg.c_eta * kf * (1.0 / alpha + delta_bound)).ln()
        + 0.5 * eps.max(1e-300).ln();
    let eta_formula = log_eta.exp();
    let eta = cfg
        .eta_override
        .unwrap_or_else(|| eta_formula.clamp(cfg.eta_floor, cfg.eta_cap));
    let gk_exponent = 1.0 / (cfg.c_delta.powi(k as i32 + 1) * factorial(k + 1));
    let delta = cfg.delta_override.unwrap_or(2.0 * eta.powf(gk_exponent));
    let lambda = cfg.c_lambda * eta;
    let phi = cfg.c_phi * (1.0 + delta_bound * delta_bound) / (eta.sqrt() * alpha.powi(5));
    let coeff_bound = cfg.c_coeff_bound * kf.powi(4) / (alpha * eta.sqrt());
    // ell' = 100 log k * (eta / (k^5 (Delta^4 + 1/alpha^4)))^{-4k} in log10.
    let ratio = eta / (kf.powi(5) * (delta_bound.powi(4) + alpha.powi(-4)));
    let ell_formula_log10 = (100.0 * kf.max(2.0).ln()).log10() - four_k * ratio.log10();
    let ell_used = if ell_formula_log10 < (cfg.collapse_budget as f64).log10() {
        (10f64.powf(ell_formula_log10).ceil() as usize).max(1)
    } else {
        cfg.collapse_budget
    };
    DecodeScales {
        eta,
        eta_formula,
        delta,
        lambda,
        phi,
        coeff_bound,
        ell_formula_log10,
        ell_used,
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

/// Draws `4k` standard Gaussian pairs and uniform coefficients in
/// `[-D, D]` with `D = C k^4/(alpha sqrt(eta))`, and collapses the fourth
/// tensor: `S = Sym(sum_j a_j T_4(.,.,x_j,y_j))`.
pub fn random_collapse<R: Rng>(
    t4: &DenseTensor,
    k: usize,
    alpha: f64,
    eta: f64,
    c_coeff_bound: f64,
    rng: &mut R,
) -> Result<CollapseDraw> {
    if t4.order() != 4 {
        return Err(Error::invalid("random_collapse needs an order-4 tensor"));
    }
    if !(0.0 < alpha && alpha <= 1.0) || !(0.0 < eta && eta < 1.0) {
        return Err(Error::invalid("alpha and eta must lie in (0,1)"));
    }
    let d = t4.dim();
    let bound = c_coeff_bound * (k as f64).powi(4) / (alpha * eta.sqrt());
    let mut pairs = Vec::with_capacity(4 * k);
    let mut coeffs = Vec::with_capacity(4 * k);
    let mut s_hat = DMatrix::zeros(d, d);
    for _ in 0..4 * k {
        let x = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let a: f64 = rng.gen_range(-bound..bound);
        s_hat += collapse_modes(t4, &x, &y)? * a;
        pairs.push((x, y));
        coeffs.push(a);
    }
    // Symmetrize immediately after the collapse.
    let s_hat = (&s_hat + s_hat.transpose()) * 0.5;
    Ok(CollapseDraw {
        pairs,
        coeffs,
        s_hat,
    })
}

/// Lifts subspace estimates back to the ambient space:
/// `mu = U mu_hat`, `Sigma = U Sigma_hat U^T + (I + S) - P (I + S) P` with
/// `P = U U^T`; symmetrized and eigenvalue-floored at zero.
pub fn assemble_candidates(
    subspace: &SearchSubspace,
    s_hat: &DMatrix<f64>,
    lowdim: &SubspaceMixture,
    group: usize,
) -> Vec<Candidate> {
    let d = s_hat.nrows();
    let u = &subspace.basis;
    let base = DMatrix::<f64>::identity(d, d) + s_hat;
    let p = u * u.transpose();
    let residual = &base - &p * &base * &p;
    lowdim
        .weights
        .iter()
        .zip(lowdim.means.iter().zip(&lowdim.covs))
        .map(|(&w, (mean, cov))| {
            let lifted_cov = u * cov * u.transpose() + &residual;
            let sym = (&lifted_cov + lifted_cov.transpose()) * 0.5;
            Candidate {
                mean: u * mean,
                cov: linalg::psd_floor(&sym, 0.0),
                group: Some(group),
                weight: Some(w),
            }
        })
        .collect()
}

/// Decode-stage report.
#[derive(Debug, Clone, Serialize)]
pub struct DecodeReport {
    pub scales: DecodeScales,
    pub subspace_dims: Vec<usize>,
    pub distinct_subspaces: usize,
    pub list_len: usize,
    pub truncated: bool,
    pub tensor_points_used: usize,
}

/// Full list-decoding pass over a corrupted sample.
///
/// Cover mode enumerates candidate parameters per collapse draw; efficient
/// mode requires a fresh corrupted sample, learns the mixture inside each
/// distinct search subspace, and lifts the result. Candidates are
/// deduplicated at distance `delta * dedup_scale` in `(l2, Frobenius)`.
#[allow(clippy::too_many_arguments)]
pub fn list_decode<R: Rng>(
    points: &[DVector<f64>],
    k: usize,
    alpha: f64,
    eps: f64,
    delta_bound: f64,
    mode: DecodeMode,
    fresh_points: Option<&[DVector<f64>]>,
    cfg: &DecodeConfig,
    rng: &mut R,
) -> Result<(CandidateList, DecodeReport)> {
    if points.is_empty() {
        return Err(Error::Empty("list_decode".into()));
    }
    if mode == DecodeMode::Efficient && fresh_points.is_none() {
        return Err(Error::invalid(
            "efficient mode requires a fresh corrupted sample",
        ));
    }
    let scales = decode_scales(k, alpha, eps, delta_bound, cfg);

    // Bounded subsample for tensor estimation.
    let tensor_points: Vec<DVector<f64>> = if points.len() > cfg.tensor_sample_cap {
        let mut idx: Vec<usize> = (0..points.len()).collect();
        for i in 0..cfg.tensor_sample_cap {
            let j = rng.gen_range(i..points.len());
            idx.swap(i, j);
        }
        idx.truncate(cfg.tensor_sample_cap);
        idx.into_iter().map(|i| points[i].clone()).collect()
    } else {
        points.to_vec()
    };

    // Step 1: robust Hermite tensors T_1..T_m.
    let mut tensors = Vec::with_capacity(cfg.m_max);
    for m in 1..=cfg.m_max.max(4) {
        let (t, _) = robust::robust_tensor_mean(
            &tensor_points,
            m,
            eps,
            cfg.guard,
            cfg.filter_stop,
            cfg.filter_max_iter,
        )?;
        tensors.push(t);
    }

    // Trivial candidate: robust mean and covariance of the input.
    let (cov, mu, _) =
        robust::robust_cov_estimate(&tensor_points, eps, cfg.filter_stop, cfg.filter_max_iter)?;
    let trivial = Candidate {
        mean: mu,
        cov,
        group: None,
        weight: None,
    };

    let (list, mut report) = decode_from_tensors(
        &tensors,
        k,
        alpha,
        eps,
        scales,
        mode,
        fresh_points,
        Some(trivial),
        cfg,
        rng,
    )?;
    report.tensor_points_used = tensor_points.len();
    Ok((list, report))
}

/// Steps 2-4 of the decoding pass, starting from already-estimated (or
/// exactly planted) Hermite tensors `T_1..T_m` with `m >= 4`.
#[allow(clippy::too_many_arguments)]
pub fn decode_from_tensors<R: Rng>(
    tensors: &[DenseTensor],
    k: usize,
    alpha: f64,
    eps: f64,
    scales: DecodeScales,
    mode: DecodeMode,
    fresh_points: Option<&[DVector<f64>]>,
    trivial: Option<Candidate>,
    cfg: &DecodeConfig,
    rng: &mut R,
) -> Result<(CandidateList, DecodeReport)> {
    if tensors.len() < 4 {
        return Err(Error::invalid("need tensors of orders 1..=4"));
    }
    let t4 = &tensors[3];
    let moment_tensors: &[DenseTensor] = &tensors[..cfg.m_max.min(tensors.len())];

    // Step 2: collapse draws.
    let mut draws = Vec::with_capacity(scales.ell_used);
    for _ in 0..scales.ell_used {
        draws.push(random_collapse(
            t4,
            k,
            alpha,
            scales.eta,
            cfg.c_coeff_bound,
            rng,
        )?);
    }

    // Step 3 + 4 per draw.
    let mut entries: Vec<Candidate> = Vec::new();
    let mut subspace_dims = Vec::new();
    let mut truncated = false;
    let mut seen_projectors: Vec<DMatrix<f64>> = Vec::new();
    let mut group_id = 0usize;
    for draw in &draws {
        let sub = build_search_subspace(
            moment_tensors,
            Some(&draw.s_hat),
            scales.lambda,
            scales.delta,
            cfg.subspace_dim_cap,
        )?;
        subspace_dims.push(sub.dim());
        match mode {
            DecodeMode::Cover => {
                let remaining = cfg.cover_budget.saturating_sub(entries.len());
                if remaining == 0 {
                    truncated = true;
                    break;
                }
                let list = enumerate_candidates(
                    &sub,
                    &draw.s_hat,
                    alpha,
                    scales.delta,
                    scales.phi,
                    k,
                    cfg.c_kprime,
                    remaining,
                )?;
                truncated |= list.truncated;
                entries.extend(list.entries);
            }
            DecodeMode::Efficient => {
                // Skip subspaces already processed (projector distance).
                let proj = &sub.basis * sub.basis.transpose();
                if seen_projectors.iter().any(|p| (p - &proj).norm() < 1e-6) {
                    continue;
                }
                seen_projectors.push(proj);
                if sub.dim() == 0 {
                    continue;
                }
                let fresh = fresh_points.ok_or_else(|| {
                    Error::invalid("efficient mode requires a fresh corrupted sample")
                })?;
                let projected: Vec<DVector<f64>> =
                    fresh.iter().map(|p| sub.project_coords(p)).collect();
                let learned = match low_dim_learn(
                    &projected,
                    k,
                    cfg.lowdim_trim.max(eps),
                    &cfg.lowdim,
                    rng,
                ) {
                    Ok(l) => l,
                    Err(_) => continue,
                };
                entries.extend(assemble_candidates(&sub, &draw.s_hat, &learned, group_id));
                group_id += 1;
            }
        }
    }
    if let Some(t) = trivial {
        entries.push(t);
    }

    // Dedup at (l2, Frobenius) distance delta * dedup_scale, keeping group
    // members (they carry tuple structure).
    let tol = scales.delta * cfg.dedup_scale;
    let mut kept: Vec<Candidate> = Vec::new();
    for c in entries {
        let dup = c.group.is_none()
            && kept.iter().any(|o| {
                (&o.mean - &c.mean).norm() < tol && (&o.cov - &c.cov).norm() < tol
            });
        if !dup {
            kept.push(c);
        }
    }
    if kept.len() > cfg.candidate_budget {
        kept.truncate(cfg.candidate_budget);
        truncated = true;
    }

    let distinct = seen_projectors.len().max(if mode == DecodeMode::Cover {
        subspace_dims.len()
    } else {
        0
    });
    let report = DecodeReport {
        scales,
        subspace_dims,
        distinct_subspaces: distinct,
        list_len: kept.len(),
        truncated,
        tensor_points_used: 0,
    };
    Ok((
        CandidateList {
            entries: kept,
            budget: cfg.candidate_budget,
            truncated,
        },
        report,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hermite::{expected_hermite_mixture, DEFAULT_ENTRY_GUARD as GUARD};
    use crate::model::{sample_mixture, GaussianComponent, GaussianMixture};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn collapse_of_zero_tensor_is_zero() {
        let t = DenseTensor::zeros(3, 4, GUARD).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let draw = random_collapse(&t, 2, 0.5, 0.1, 1.0, &mut rng).unwrap();
        assert_eq!(draw.s_hat.abs().max(), 0.0);
        assert_eq!(draw.pairs.len(), 8);
    }

    #[test]
    fn collapse_linear_in_coefficients() {
        // Rebuilding S from the recorded pairs with doubled coefficients
        // doubles the matrix.
        let mu = DVector::from_vec(vec![0.5, -0.2, 0.1]);
        let cov = DMatrix::from_diagonal(&DVector::from_vec(vec![1.5, 0.8, 1.0]));
        let m = GaussianMixture::single(GaussianComponent::new(mu, cov).unwrap());
        let t4 = expected_hermite_mixture(&m, 4, GUARD).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let draw = random_collapse(&t4, 1, 0.5, 0.1, 1.0, &mut rng).unwrap();
        let mut doubled = DMatrix::zeros(3, 3);
        for ((x, y), a) in draw.pairs.iter().zip(&draw.coeffs) {
            doubled += collapse_modes(&t4, x, y).unwrap() * (2.0 * a);
        }
        let doubled = (&doubled + doubled.transpose()) * 0.5;
        assert_relative_eq!((doubled - &draw.s_hat * 2.0).abs().max(), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn collapse_of_symmetrized_square_stays_in_structured_span() {
        // T = Sym(S (x) S) for symmetric rank-2 S: the collapse lies in
        // span{S} + span{(S x_j)(S y_j)^T + transposes}, verified by
        // least-squares residual.
        let d = 4;
        let mut s = DMatrix::zeros(d, d);
        s[(0, 0)] = 1.0;
        s[(1, 1)] = -0.7;
        s[(0, 1)] = 0.3;
        s[(1, 0)] = 0.3;
        // Build Sym(S (x) S).
        let mut t = DenseTensor::zeros(d, 4, GUARD).unwrap();
        for i in 0..d {
            for j in 0..d {
                for g in 0..d {
                    for h in 0..d {
                        t.set(&[i, j, g, h], s[(i, j)] * s[(g, h)]);
                    }
                }
            }
        }
        let t = t.symmetrized();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let k = 2;
        let draw = random_collapse(&t, k, 0.5, 0.25, 1.0, &mut rng).unwrap();
        // Basis: S itself plus symmetrized (S x_j)(S y_j)^T for each pair.
        let mut basis: Vec<DMatrix<f64>> = vec![s.clone()];
        for (x, y) in &draw.pairs {
            let sx = &s * x;
            let sy = &s * y;
            let outer = &sx * sy.transpose();
            basis.push((&outer + outer.transpose()) * 0.5);
        }
        // Least-squares projection of s_hat onto the span.
        let n = d * d;
        let cols = basis.len();
        let mut a = DMatrix::zeros(n, cols);
        for (c, b) in basis.iter().enumerate() {
            for i in 0..d {
                for j in 0..d {
                    a[(i * d + j, c)] = b[(i, j)];
                }
            }
        }
        let mut target = DVector::zeros(n);
        for i in 0..d {
            for j in 0..d {
                target[i * d + j] = draw.s_hat[(i, j)];
            }
        }
        let svd = a.svd(true, true);
        let coeffs = svd.solve(&target, 1e-12).unwrap();
        let residual = (a_times(&basis, &coeffs, d) - &draw.s_hat).norm();
        assert!(residual <= 1e-8, "residual {residual}");
    }

    fn a_times(basis: &[DMatrix<f64>], coeffs: &DVector<f64>, d: usize) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(d, d);
        for (b, &c) in basis.iter().zip(coeffs.iter()) {
            out += b * c;
        }
        out
    }

    #[test]
    fn approximate_preimage_exists_for_planted_square() {
        // For exact T' = sum_i w_i vec(S'_i) vec(S'_i)^T there is a matrix P
        // with bounded norm and T'(.,.,P) close to S'_i; the least-squares
        // system is the oracle.
        let d = 3;
        let s1 = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -0.5, 0.2]));
        let s2 = DMatrix::from_row_slice(
            3,
            3,
            &[0.3, 0.1, 0.0, 0.1, -0.2, 0.4, 0.0, 0.4, 0.6],
        );
        let w = [0.5, 0.5];
        let vec_of = |m: &DMatrix<f64>| {
            DVector::from_iterator(d * d, (0..d * d).map(|i| m[(i / d, i % d)]))
        };
        let v1 = vec_of(&s1);
        let v2 = vec_of(&s2);
        let tprime = &v1 * v1.transpose() * w[0] + &v2 * v2.transpose() * w[1];
        for target in [&v1, &v2] {
            let svd = tprime.clone().svd(true, true);
            let p = svd.solve(target, 1e-10).unwrap();
            let residual = (&tprime * &p - target).norm();
            assert!(residual < 1e-8, "residual {residual}");
        }
    }

    #[test]
    fn assemble_full_space_projector_cancels_s_hat() {
        let d = 3;
        let sub = SearchSubspace {
            basis: DMatrix::identity(d, d),
            sources: vec![],
            truncated: false,
        };
        let s_hat = DMatrix::from_row_slice(3, 3, &[0.5, 0.1, 0.0, 0.1, -0.3, 0.0, 0.0, 0.0, 0.2]);
        let lowdim = SubspaceMixture {
            weights: vec![1.0],
            means: vec![DVector::from_vec(vec![1.0, 2.0, 3.0])],
            covs: vec![DMatrix::identity(3, 3) * 0.7],
            converged: true,
        };
        let cands = assemble_candidates(&sub, &s_hat, &lowdim, 0);
        assert_eq!(cands.len(), 1);
        // P = I: Sigma = U Sigma_hat U^T exactly.
        assert_relative_eq!(
            (&cands[0].cov - DMatrix::<f64>::identity(3, 3) * 0.7).abs().max(),
            0.0,
            epsilon = 1e-12
        );
        assert_eq!(cands[0].weight, Some(1.0));
    }

    #[test]
    fn assemble_empty_subspace_returns_i_plus_s() {
        let d = 2;
        let sub = SearchSubspace {
            basis: DMatrix::zeros(d, 0),
            sources: vec![],
            truncated: false,
        };
        let s_hat = DMatrix::from_row_slice(2, 2, &[0.3, 0.0, 0.0, -0.4]);
        let lowdim = SubspaceMixture {
            weights: vec![1.0],
            means: vec![DVector::zeros(0)],
            covs: vec![DMatrix::zeros(0, 0)],
            converged: true,
        };
        let cands = assemble_candidates(&sub, &s_hat, &lowdim, 0);
        let expected = DMatrix::from_row_slice(2, 2, &[1.3, 0.0, 0.0, 0.6]);
        assert_relative_eq!((&cands[0].cov - expected).abs().max(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn assemble_block_plant_reassembles_exactly() {
        // Planted Sigma with a known split across a 2-dim subspace of R^4:
        // exact low-dim input reassembles within 1e-8.
        let d = 4;
        let mut basis = DMatrix::zeros(d, 2);
        basis[(0, 0)] = 1.0;
        basis[(1, 1)] = 1.0;
        let sub = SearchSubspace {
            basis,
            sources: vec![],
            truncated: false,
        };
        // Sigma block-diagonal: top-left B (in subspace), bottom-right D.
        let b = DMatrix::from_row_slice(2, 2, &[1.5, 0.2, 0.2, 0.9]);
        let mut sigma = DMatrix::identity(d, d);
        sigma[(0, 0)] = b[(0, 0)];
        sigma[(0, 1)] = b[(0, 1)];
        sigma[(1, 0)] = b[(1, 0)];
        sigma[(1, 1)] = b[(1, 1)];
        sigma[(2, 2)] = 2.5;
        sigma[(3, 3)] = 0.4;
        // s_hat = Sigma - I reproduces Sigma when the subspace part is exact.
        let s_hat = &sigma - DMatrix::<f64>::identity(d, d);
        let mu_sub = DVector::from_vec(vec![0.7, -0.3]);
        let lowdim = SubspaceMixture {
            weights: vec![1.0],
            means: vec![mu_sub.clone()],
            covs: vec![b],
            converged: true,
        };
        let cands = assemble_candidates(&sub, &s_hat, &lowdim, 0);
        assert!((&cands[0].cov - &sigma).abs().max() < 1e-8);
        assert!((&cands[0].mean - DVector::from_vec(vec![0.7, -0.3, 0.0, 0.0])).norm() < 1e-12);
        let _ = mu_sub;
    }

    #[test]
    fn list_decode_k1_clean_close_to_truth() {
        let mu = DVector::from_vec(vec![0.4, -0.6, 0.2]);
        let cov = DMatrix::from_diagonal(&DVector::from_vec(vec![1.4, 0.7, 1.0]));
        let truth = GaussianMixture::single(GaussianComponent::new(mu.clone(), cov.clone()).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (points, _) = sample_mixture(&truth, 8000, &mut rng);
        let (fresh, _) = sample_mixture(&truth, 8000, &mut rng);
        let cfg = DecodeConfig {
            collapse_budget: 5,
            ..Default::default()
        };
        let (list, report) = list_decode(
            &points,
            1,
            1.0,
            0.0,
            2.0,
            DecodeMode::Efficient,
            Some(&fresh),
            &cfg,
            &mut rng,
        )
        .unwrap();
        assert!(!list.entries.is_empty());
        let best = list
            .entries
            .iter()
            .map(|c| (&c.mean - &mu).norm() + (&c.cov - &cov).norm())
            .fold(f64::INFINITY, f64::min);
        assert!(best < 0.15, "best error {best}");
        assert!(report.list_len >= 1);
    }

    #[test]
    fn list_decode_efficient_requires_fresh() {
        let points = vec![DVector::zeros(2); 100];
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let cfg = DecodeConfig::default();
        assert!(list_decode(
            &points,
            1,
            1.0,
            0.0,
            1.0,
            DecodeMode::Efficient,
            None,
            &cfg,
            &mut rng
        )
        .is_err());
    }

    #[test]
    fn list_decode_budget_one_collapse() {
        let truth = GaussianMixture::single(GaussianComponent::standard(2));
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (points, _) = sample_mixture(&truth, 2000, &mut rng);
        let cfg = DecodeConfig {
            collapse_budget: 1,
            cover_budget: 50,
            ..Default::default()
        };
        let (list, report) = list_decode(
            &points,
            1,
            1.0,
            0.0,
            1.0,
            DecodeMode::Cover,
            None,
            &cfg,
            &mut rng,
        )
        .unwrap();
        assert_eq!(report.scales.ell_used, 1);
        assert!(!list.entries.is_empty());
    }
}
