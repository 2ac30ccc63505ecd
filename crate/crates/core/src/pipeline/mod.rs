//! The cluster-or-decode recursion, hypothesis aggregation, and robust
//! tournament.
//!
//! One attempt of the recursion guesses its way down a branch tree: treat the
//! lightest component as noise, or isotropize and either partially cluster
//! and recurse on both sides, or list-decode and (when a thin component shows
//! up) spectrally separate and recurse. Failures anywhere turn the attempt
//! into a null; the outer loop runs many attempts with split seeds and a
//! Scheffe tournament on an independent corrupted sample picks the winner.

mod tournament;

pub use tournament::{tournament_select, Comparison, TournamentOutcome};

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::cluster::{partial_cluster, PartialClusterParams, RoundingVariant};
use crate::config::{
    DecodeMode, ExponentSchedule, FlooredExponent, PipelineConfig, WeightMode,
};
use crate::decode::{list_decode, DecodeConfig};
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{GaussianComponent, GaussianMixture, Hypothesis};
use crate::robust;
use crate::spectral;

/// A weighted parameter set in some coordinate frame.
type ParamSet = Vec<(f64, DVector<f64>, DMatrix<f64>)>;

/// One node of the branch trace.
#[derive(Debug, Clone, Serialize)]
pub struct BranchNode {
    pub step: String,
    pub k: usize,
    pub eps: f64,
    pub children: Vec<BranchNode>,
}

impl BranchNode {
    fn leaf(step: impl Into<String>, k: usize, eps: f64) -> Self {
        BranchNode {
            step: step.into(),
            k,
            eps,
            children: Vec::new(),
        }
    }

    /// Depth of the trace tree (a single node has depth 1).
    pub fn depth(&self) -> usize {
        1 + self
            .children
            .iter()
            .map(BranchNode::depth)
            .max()
            .unwrap_or(0)
    }

    fn path_summary(&self) -> String {
        let mut s = self.step.clone();
        if !self.children.is_empty() {
            let inner: Vec<String> =
                self.children.iter().map(BranchNode::path_summary).collect();
            s.push_str(&format!("({})", inner.join(",")));
        }
        s
    }
}

/// Full run report: the chosen hypothesis' provenance, per-attempt traces,
/// list sizes, the constants actually used, exponent floorings, and timings.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub k: usize,
    pub eps: f64,
    pub attempts: usize,
    pub non_null: usize,
    pub winner_index: usize,
    pub winner_provenance: String,
    pub winner_trace: BranchNode,
    pub stage_list_sizes: Vec<(String, usize)>,
    pub floored_exponents: Vec<FlooredExponent>,
    pub constants: BTreeMap<String, f64>,
    pub tournament: TournamentOutcome,
    /// Seconds per stage, filled by the caller where wall-clock is available.
    pub timings: BTreeMap<String, f64>,
    /// Monte Carlo TV estimate against a known truth, when the harness has one.
    pub tv_vs_truth: Option<(f64, f64)>,
}

/// Uniform simplex draw scaled to sum `1 +- k eps`.
pub fn weight_guess<R: Rng>(k: usize, eps: f64, rng: &mut R) -> Vec<f64> {
    assert!(k >= 1);
    let mut raw: Vec<f64> = (0..k)
        .map(|_| -rng.gen::<f64>().max(1e-300).ln())
        .collect();
    let total: f64 = raw.iter().sum();
    let scale = 1.0 + (2.0 * rng.gen::<f64>() - 1.0) * (k as f64) * eps;
    for w in &mut raw {
        *w = *w / total * scale;
    }
    raw
}

/// Grid weights for the bounded-weights mode: each weight on the grid
/// `{alpha, 2 alpha, ...}` capped at `1/k`-ish, retried until the sum lands
/// within `k alpha` of one; falls back to the simplex draw.
fn weight_grid<R: Rng>(k: usize, alpha: f64, rng: &mut R) -> Vec<f64> {
    let alpha = alpha.clamp(1e-3, 1.0 / k as f64);
    let levels = ((1.0 / alpha).floor() as usize).max(1);
    for _ in 0..50 {
        let w: Vec<f64> = (0..k)
            .map(|_| (rng.gen_range(1..=levels) as f64) * alpha)
            .collect();
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() <= k as f64 * alpha {
            return w;
        }
    }
    weight_guess(k, alpha, rng)
}

fn decode_config(cfg: &PipelineConfig) -> DecodeConfig {
    let c = &cfg.constants;
    DecodeConfig {
        m_max: cfg.m_max,
        collapse_budget: cfg.budgets.collapse_reps,
        cover_budget: cfg.budgets.cover_budget,
        candidate_budget: cfg.budgets.candidate_budget,
        subspace_dim_cap: cfg.budgets.subspace_dim_cap,
        tensor_sample_cap: cfg.budgets.tensor_sample_cap,
        guard: cfg.tensor_entry_guard,
        lowdim: crate::decode::LowDimConfig {
            restarts: cfg.budgets.lowdim_restarts,
            em_iters: cfg.budgets.em_iters,
            ..Default::default()
        },
        filter_stop: c.get("filter.stop.c"),
        filter_max_iter: c.get("filter.max_iter") as usize,
        c_eta: c.get("decode.eta.c"),
        eta_cap: c.get("decode.eta.cap"),
        eta_floor: 0.01,
        c_coeff_bound: c.get("decode.coeff_bound.c"),
        c_delta: c.get("decode.delta.c"),
        c_lambda: c.get("decode.lambda.c"),
        c_phi: c.get("decode.phi.c"),
        c_kprime: c.get("decode.kprime.c"),
        dedup_scale: c.get("decode.dedup.scale"),
        eta_override: cfg.decode_eta,
        delta_override: cfg.decode_delta,
        lowdim_trim: cfg.lowdim_trim.unwrap_or(0.0),
    }
}

struct AttemptOutput {
    params: ParamSet,
    trace: BranchNode,
    events: Vec<FlooredExponent>,
    list_sizes: Vec<(String, usize)>,
}

/// One full randomized attempt; errors anywhere null the attempt.
fn attempt_recursion(
    points: &[DVector<f64>],
    k: usize,
    eps: f64,
    cfg: &PipelineConfig,
    sched: &mut ExponentSchedule,
    sizes: &mut Vec<(String, usize)>,
    depth: usize,
    max_depth: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(ParamSet, BranchNode)> {
    if k == 0 {
        return Err(Error::PipelineFailure("recursed to k = 0".into()));
    }
    if depth > max_depth {
        return Err(Error::PipelineFailure(format!(
            "recursion depth {depth} exceeded the component budget {max_depth}"
        )));
    }
    let c_stop = cfg.constants.get("filter.stop.c");
    let max_iter = cfg.constants.get("filter.max_iter") as usize;

    // Step: treat the lightest component as noise with probability p_light.
    if rng.gen::<f64>() < cfg.branch.p_light {
        let escalated = (eps + sched.escalate("light-component", eps, 10.0, k as u32)).min(0.45);
        let mut node = BranchNode::leaf("light-noise", k, eps);
        let (mut params, child) = attempt_recursion(
            points,
            k - 1,
            escalated,
            cfg,
            sched,
            sizes,
            depth + 1,
            max_depth,
            rng,
        )?;
        node.children.push(child);
        let d = points[0].len();
        params.push((0.0, DVector::zeros(d), DMatrix::identity(d, d)));
        return Ok((params, node));
    }

    // Step: robust isotropic transformation (always, unless the light branch
    // fired above).
    let (transform, transformed) = robust::isotropize(points, eps.min(0.32), c_stop, max_iter)?;
    if k == 1 {
        let node = BranchNode::leaf("isotropize-k1", 1, eps);
        let d = points[0].len();
        let inv_scale = transform.scale.map(|s| if s > 0.0 { 1.0 / (s * s) } else { 0.0 });
        let cov = &transform.basis * DMatrix::from_diagonal(&inv_scale) * transform.basis.transpose();
        let _ = d;
        return Ok((vec![(1.0, transform.shift.clone(), cov)], node));
    }

    let alpha = sched.escalate("min-weight-guess", eps.max(1e-6), 10.0, k as u32);

    if rng.gen::<f64>() < cfg.branch.p_cluster {
        // Step: partial clustering, then recurse on both sides.
        let mut node = BranchNode::leaf("partial-cluster", k, eps);
        let acc = sched.escalate("cluster-accuracy", eps.max(1e-6), 5.0, k as u32);
        let tau = cfg.cluster_tau.unwrap_or_else(|| {
            crate::cluster::tau_formula(
                0.01,
                alpha,
                cfg.constants.get("cluster.tau.c"),
                cfg.constants.get("cluster.tau.t"),
            )
        });
        let params = PartialClusterParams {
            eta: acc.clamp(1e-3, 0.45),
            tau,
            c_tau: cfg.constants.get("cluster.tau.c"),
            c_ell: cfg.constants.get("cluster.round.ell.c"),
            variant: RoundingVariant::Upgraded,
            sample_cap: cfg.budgets.cluster_sample_cap,
            affinity: Default::default(),
        };
        let result = partial_cluster(
            &transformed,
            k,
            alpha.max(2.5 * eps).min(0.49),
            eps,
            0.01,
            cfg.oracle_mode,
            None,
            &params,
            rng,
        )?;
        if result.trivial {
            return Err(Error::PipelineFailure("partial clustering was trivial".into()));
        }
        sizes.push(("cluster-groups".into(), result.groups.len()));
        let k1 = rng.gen_range(1..k);
        let escalated = sched.escalate("cluster-recursion", eps.max(1e-6), 10.0, k as u32);
        let side_points = |idx: &[usize]| -> Vec<DVector<f64>> {
            idx.iter().map(|&i| transformed[i].clone()).collect()
        };
        let y1 = side_points(&result.side1);
        let y2 = side_points(&result.side2);
        if y1.is_empty() || y2.is_empty() {
            return Err(Error::PipelineFailure("degenerate partition".into()));
        }
        let (p1, t1) = attempt_recursion(
            &y1, k1, escalated, cfg, sched, sizes, depth + 1, max_depth, rng,
        )?;
        let (p2, t2) = attempt_recursion(
            &y2,
            k - k1,
            escalated,
            cfg,
            sched,
            sizes,
            depth + 1,
            max_depth,
            rng,
        )?;
        node.children.push(t1);
        node.children.push(t2);
        let f1 = y1.len() as f64 / transformed.len() as f64;
        let f2 = y2.len() as f64 / transformed.len() as f64;
        let mut params_out = ParamSet::new();
        for (w, mu, cov) in p1 {
            params_out.push((
                w * f1,
                transform.invert_mean(&mu),
                transform.invert_cov(&cov),
            ));
        }
        for (w, mu, cov) in p2 {
            params_out.push((
                w * f2,
                transform.invert_mean(&mu),
                transform.invert_cov(&cov),
            ));
        }
        return Ok((params_out, node));
    }

    // Step: list decoding via tensor decomposition.
    let mut node = BranchNode::leaf("decode", k, eps);
    let dcfg = decode_config(cfg);
    let delta_bound = 4.0 / alpha;
    // Split the sample when the efficient route needs a fresh half.
    let (tensor_half, fresh_half): (Vec<DVector<f64>>, Vec<DVector<f64>>) =
        if cfg.mode == DecodeMode::Efficient {
            let mut idx: Vec<usize> = (0..transformed.len()).collect();
            for i in 0..idx.len() {
                let j = rng.gen_range(i..idx.len());
                idx.swap(i, j);
            }
            let half = idx.len() / 2;
            (
                idx[..half].iter().map(|&i| transformed[i].clone()).collect(),
                idx[half..].iter().map(|&i| transformed[i].clone()).collect(),
            )
        } else {
            (transformed.clone(), Vec::new())
        };
    let (list, report) = list_decode(
        &tensor_half,
        k,
        alpha,
        eps,
        delta_bound,
        cfg.mode,
        if cfg.mode == DecodeMode::Efficient {
            Some(&fresh_half)
        } else {
            None
        },
        &dcfg,
        rng,
    )?;
    sizes.push(("decode-list".into(), list.entries.len()));

    // Draw one candidate set: a whole emitted group when present, otherwise
    // k distinct entries uniformly.
    let groups = list.groups();
    let chosen: Vec<usize> = if !groups.is_empty() {
        groups[rng.gen_range(0..groups.len())].clone()
    } else {
        let mut idx: Vec<usize> = (0..list.entries.len()).collect();
        for i in 0..k.min(idx.len()) {
            let j = rng.gen_range(i..idx.len());
            idx.swap(i, j);
        }
        idx.truncate(k.min(idx.len()));
        idx
    };
    let candidates: Vec<(DVector<f64>, DMatrix<f64>)> = chosen
        .iter()
        .map(|&i| (list.entries[i].mean.clone(), list.entries[i].cov.clone()))
        .collect();
    let learned_weights: Option<Vec<f64>> = chosen
        .iter()
        .map(|&i| list.entries[i].weight)
        .collect::<Option<Vec<f64>>>();
    let _ = report;

    let tau = sched.escalate("eigenvalue-threshold", eps.max(1e-6), 40.0, k as u32);
    let all_large = candidates.iter().all(|(_, cov)| {
        linalg::sym_eigen_sorted(cov)
            .0
            .last()
            .copied()
            .unwrap_or(0.0)
            >= tau
    });

    if all_large {
        node.step = "decode-return".into();
        let kc = candidates.len();
        let weights = match cfg.weight_mode {
            WeightMode::Guess => weight_guess(kc, eps, rng),
            WeightMode::Grid => weight_grid(kc, alpha, rng),
            WeightMode::Learned => learned_weights.unwrap_or_else(|| weight_guess(kc, eps, rng)),
        };
        let params: ParamSet = weights
            .into_iter()
            .zip(candidates)
            .map(|(w, (mu, cov))| (w, transform.invert_mean(&mu), transform.invert_cov(&cov)))
            .collect();
        return Ok((params, node));
    }

    // Step: spectral separation of a thin component.
    node.step = "spectral-split".into();
    let (v, _) = spectral::find_thin_direction(&candidates, tau)
        .ok_or_else(|| Error::SeparatorFailure("no thin direction found".into()))?;
    let sep = spectral::build_separator(
        &candidates,
        &v,
        tau.min(0.2),
        k,
        cfg.constants.get("spectral.gap.c"),
        cfg.constants.get("spectral.width.mult"),
    )?;
    let (side1, side2) = spectral::apply_separator(&sep, &transformed);
    let n = transformed.len();
    let small_frac = sched.escalate("small-side", eps.max(1e-6), 400.0 * k as f64, k as u32);
    if side1.len().min(side2.len()) < (small_frac * n as f64) as usize {
        // Small side is treated as noise: recurse at k-1 on everything.
        let escalated = (2.0 * small_frac).min(0.45);
        let (p, t) = attempt_recursion(
            &transformed,
            k - 1,
            escalated,
            cfg,
            sched,
            sizes,
            depth + 1,
            max_depth,
            rng,
        )?;
        node.children.push(t);
        let mut params: ParamSet = p
            .into_iter()
            .map(|(w, mu, cov)| (w, transform.invert_mean(&mu), transform.invert_cov(&cov)))
            .collect();
        let d = points[0].len();
        params.push((0.0, DVector::zeros(d), DMatrix::identity(d, d)));
        return Ok((params, node));
    }
    let k1 = rng.gen_range(1..k);
    let escalated = sched.escalate("spectral-recursion", eps.max(1e-6), 100.0 * k as f64, k as u32);
    let y1: Vec<DVector<f64>> = side1.iter().map(|&i| transformed[i].clone()).collect();
    let y2: Vec<DVector<f64>> = side2.iter().map(|&i| transformed[i].clone()).collect();
    let (p1, t1) = attempt_recursion(
        &y1, k1, escalated, cfg, sched, sizes, depth + 1, max_depth, rng,
    )?;
    let (p2, t2) = attempt_recursion(
        &y2,
        k - k1,
        escalated,
        cfg,
        sched,
        sizes,
        depth + 1,
        max_depth,
        rng,
    )?;
    node.children.push(t1);
    node.children.push(t2);
    let f1 = y1.len() as f64 / n as f64;
    let f2 = y2.len() as f64 / n as f64;
    let mut params_out = ParamSet::new();
    for (w, mu, cov) in p1 {
        params_out.push((w * f1, transform.invert_mean(&mu), transform.invert_cov(&cov)));
    }
    for (w, mu, cov) in p2 {
        params_out.push((w * f2, transform.invert_mean(&mu), transform.invert_cov(&cov)));
    }
    Ok((params_out, node))
}

fn params_to_hypothesis(params: ParamSet, provenance: String) -> Result<Hypothesis> {
    let mut weights = Vec::new();
    let mut comps = Vec::new();
    for (w, mu, cov) in params {
        let floored = linalg::psd_floor(&((&cov + cov.transpose()) * 0.5), 0.0);
        weights.push(w.max(0.0));
        comps.push(GaussianComponent::new(mu, floored)?);
    }
    let mixture = GaussianMixture::normalized(weights, comps)?;
    Ok(Hypothesis::new(mixture, provenance))
}

/// One public cluster-or-decode attempt (the Algorithm's inner routine).
pub fn cluster_or_decode<R: Rng>(
    points: &[DVector<f64>],
    k: usize,
    eps: f64,
    cfg: &PipelineConfig,
    rng: &mut R,
) -> Result<Hypothesis> {
    cfg.validate()?;
    if points.is_empty() {
        return Err(Error::Empty("cluster_or_decode".into()));
    }
    let mut sched = ExponentSchedule::new(&cfg.constants);
    let mut sizes = Vec::new();
    let mut attempt_rng = ChaCha8Rng::seed_from_u64(rng.gen());
    let (params, trace) = attempt_recursion(
        points,
        k,
        eps,
        cfg,
        &mut sched,
        &mut sizes,
        1,
        k.max(1) + 1,
        &mut attempt_rng,
    )?;
    params_to_hypothesis(params, trace.path_summary())
}

fn splitmix(seed: u64, i: u64) -> u64 {
    let mut z = seed.wrapping_add(i.wrapping_mul(0x9E3779B97F4A7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Full learning run: repeats the cluster-or-decode attempt for the outer
/// budget on `points_a` (attempts run in parallel with index-derived seeds,
/// so the result is reproducible regardless of scheduling), then selects a
/// winner with the robust tournament on the independent sample `points_b`.
pub fn learn_gmm(
    points_a: &[DVector<f64>],
    points_b: &[DVector<f64>],
    k: usize,
    eps: f64,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<(Hypothesis, RunReport)> {
    cfg.validate()?;
    if points_a.is_empty() || points_b.is_empty() {
        return Err(Error::Empty("learn_gmm needs two samples".into()));
    }
    let attempts = cfg.budgets.outer_reps;
    let results: Vec<Option<AttemptOutput>> = (0..attempts)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed, i as u64));
            let mut sched = ExponentSchedule::new(&cfg.constants);
            let mut sizes = Vec::new();
            attempt_recursion(
                points_a,
                k,
                eps,
                cfg,
                &mut sched,
                &mut sizes,
                1,
                k.max(1) + 1,
                &mut rng,
            )
            .ok()
            .map(|(params, trace)| AttemptOutput {
                params,
                trace,
                events: sched.events,
                list_sizes: sizes,
            })
        })
        .collect();

    let mut hypotheses = Vec::new();
    let mut traces = Vec::new();
    let mut floored: Vec<FlooredExponent> = Vec::new();
    let mut stage_list_sizes = Vec::new();
    for out in results.into_iter().flatten() {
        if let Ok(h) = params_to_hypothesis(out.params, out.trace.path_summary()) {
            traces.push(out.trace);
            for e in out.events {
                if !floored.iter().any(|f| f.site == e.site) {
                    floored.push(e);
                }
            }
            stage_list_sizes.extend(out.list_sizes);
            hypotheses.push(h);
        }
    }
    if hypotheses.is_empty() {
        return Err(Error::PipelineFailure(
            "no attempt produced a hypothesis".into(),
        ));
    }
    let non_null = hypotheses.len();

    // Tournament on the independent sample, subsampled to the cap.
    let cap = cfg.budgets.tournament_points_cap;
    let eval_points: Vec<DVector<f64>> = if points_b.len() > cap {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed, 0xBEEF));
        let mut idx: Vec<usize> = (0..points_b.len()).collect();
        for i in 0..cap {
            let j = rng.gen_range(i..points_b.len());
            idx.swap(i, j);
        }
        idx.truncate(cap);
        idx.into_iter().map(|i| points_b[i].clone()).collect()
    } else {
        points_b.to_vec()
    };
    let mixtures: Vec<GaussianMixture> =
        hypotheses.iter().map(|h| h.mixture.clone()).collect();
    let mut t_rng = ChaCha8Rng::seed_from_u64(splitmix(seed, 0xF00D));
    let eta = (2.0 * eps).max(0.05);
    let outcome = tournament_select(
        &mixtures,
        &eval_points,
        eta,
        cfg.budgets.tournament_mc,
        cfg.density_floor_scale,
        &mut t_rng,
    )?;
    let winner = outcome.winner;
    let report = RunReport {
        k,
        eps,
        attempts,
        non_null,
        winner_index: winner,
        winner_provenance: hypotheses[winner].provenance.clone(),
        winner_trace: traces[winner].clone(),
        stage_list_sizes,
        floored_exponents: floored,
        constants: cfg.constants.table().clone(),
        tournament: outcome,
        timings: BTreeMap::new(),
        tv_vs_truth: None,
    };
    Ok((hypotheses.swap_remove(winner), report))
}
