//! Configuration: the constants table, budgets, and the pipeline exponent
//! schedule.
//!
//! Every asymptotic bound in the method hides an unnamed constant. Each such
//! constant gets a named site in [`Constants`] so that reports can record the
//! exact configuration a claim was produced under. Formula-derived quantities
//! (coefficient bounds, grid scales, escalated outlier rates) are computed
//! symbolically from `(C, k)` and clamped by explicit budgets; any clamping is
//! recorded by the caller in its report.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Default values for every named constant site.
pub const DEFAULT_CONSTANTS: &[(&str, f64)] = &[
    // Total-variation bounds.
    ("tv.upper.c", 1.0),
    ("tv.frobenius.c", 1.0),
    // Univariate moment-distance test.
    ("moments.distance.c", 1.0),
    // Outlier filter: spectral stop factor and iteration cap.
    ("filter.stop.c", 10.0),
    ("filter.max_iter", 60.0),
    // Tensor decode parameter sites.
    ("decode.eta.c", 1.0),
    ("decode.eta.cap", 0.25),
    ("decode.coeff_bound.c", 1.0),
    ("decode.delta.c", 1.0),
    ("decode.lambda.c", 4.0),
    ("decode.phi.c", 10.0),
    ("decode.kprime.c", 1.0),
    ("decode.dedup.scale", 0.1),
    // Partial clustering: rounding and merge sites.
    ("cluster.round.ell.c", 1.0),
    ("cluster.round.threshold.c", 1.0),
    ("cluster.tau.c", 1.0),
    ("cluster.tau.t", 4.0),
    ("cluster.slack.scale", 0.05),
    // Spectral separator: gap factor and interval width multiplier.
    ("spectral.gap.c", 0.25),
    ("spectral.width.mult", 1.0),
    // Recursion exponent schedule.
    ("pipeline.ck.c", 1.0),
    ("pipeline.exponent.floor", 0.5),
];

/// Named constants, keyed by formula site. Unknown keys are rejected at
/// construction so typos cannot silently fall back to defaults.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(transparent)]
pub struct Constants {
    table: BTreeMap<String, f64>,
}

impl Default for Constants {
    fn default() -> Self {
        Constants {
            table: DEFAULT_CONSTANTS
                .iter()
                .map(|(k, v)| (k.to_string(), *v))
                .collect(),
        }
    }
}

impl Constants {
    /// Value at a site. Panics on an unknown site; sites are a closed set.
    pub fn get(&self, site: &str) -> f64 {
        match self.table.get(site) {
            Some(v) => *v,
            None => panic!("unknown constant site: {site}"),
        }
    }

    /// Override a site, rejecting unknown names.
    pub fn set(&mut self, site: &str, value: f64) -> Result<()> {
        if !DEFAULT_CONSTANTS.iter().any(|(k, _)| *k == site) {
            return Err(Error::invalid(format!("unknown constant site: {site}")));
        }
        self.table.insert(site.to_string(), value);
        Ok(())
    }

    /// Merge a partial table of overrides.
    pub fn with_overrides(mut self, overrides: &BTreeMap<String, f64>) -> Result<Self> {
        for (k, v) in overrides {
            self.set(k, *v)?;
        }
        Ok(self)
    }

    /// The full resolved table, for report embedding.
    pub fn table(&self) -> &BTreeMap<String, f64> {
        &self.table
    }

    /// Validate a deserialized table (all sites known, all sites present).
    pub fn validate(&self) -> Result<()> {
        for k in self.table.keys() {
            if !DEFAULT_CONSTANTS.iter().any(|(d, _)| d == k) {
                return Err(Error::invalid(format!("unknown constant site: {k}")));
            }
        }
        for (k, _) in DEFAULT_CONSTANTS {
            if !self.table.contains_key(*k) {
                return Err(Error::invalid(format!("missing constant site: {k}")));
            }
        }
        Ok(())
    }
}

/// `sf(k) = prod_{i in [k]} (k - i)!`, the super-factorial.
pub fn super_factorial(k: u32) -> f64 {
    (0..k).map(|i| factorial(k - 1 - i)).product()
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

/// The headline error exponent `c_k = 1 / (100^k C^{(k+1)!} k! sf(k+1))`.
pub fn error_exponent(k: u32, c: f64) -> f64 {
    let kf = factorial(k);
    1.0 / (100f64.powi(k as i32) * c.powf(factorial(k + 1)) * kf * super_factorial(k + 1))
}

/// A formula exponent that was clamped to stay meaningful at desk scale.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FlooredExponent {
    pub site: String,
    pub formula: f64,
    pub used: f64,
}

/// Exponent schedule for the recursion: the per-branch outlier-rate
/// escalations `eps^(1/(a C^{k+1} (k+1)!))` with the exponent floored so the
/// escalated rate stays below one at desk-scale eps.
#[derive(Debug, Clone)]
pub struct ExponentSchedule {
    pub c: f64,
    pub floor: f64,
    pub events: Vec<FlooredExponent>,
}

impl ExponentSchedule {
    pub fn new(constants: &Constants) -> Self {
        ExponentSchedule {
            c: constants.get("pipeline.ck.c"),
            floor: constants.get("pipeline.exponent.floor"),
            events: Vec::new(),
        }
    }

    /// `eps^e` with `e = 1/(a C^{k+1} (k+1)!)` floored at the configured
    /// minimum; the clamping event is recorded.
    pub fn escalate(&mut self, site: &str, eps: f64, a: f64, k: u32) -> f64 {
        let formula = 1.0 / (a * self.c.powi(k as i32 + 1) * factorial(k + 1));
        let used = formula.max(self.floor);
        if used != formula {
            self.events.push(FlooredExponent {
                site: site.to_string(),
                formula,
                used,
            });
        }
        eps.powf(used).min(0.49)
    }
}

/// Which decode route the pipeline takes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecodeMode {
    /// Exhaustive cover enumeration of candidate parameters.
    Cover,
    /// Low-dimensional learner on a fresh sample, lifted back to full space.
    Efficient,
}

/// How the pipeline assigns mixing weights to a decoded hypothesis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightMode {
    /// Uniform draw from the simplex, scaled to sum `1 +- k eps`.
    Guess,
    /// Grid over `[alpha, 1/k]^k` with precision `alpha` (bounded-weights mode).
    Grid,
    /// Weights reported by the low-dimensional learner when available.
    Learned,
}

/// Moment-matrix oracle selection for partial clustering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleMode {
    /// Spectral-affinity surrogate built from the corrupted sample.
    Affinity,
    /// Ideal pseudo-moments from diagnostic labels (synthetic data only).
    GroundTruth,
}

/// Iteration and size budgets. Formula values from the method are
/// astronomically large at desk scale; these caps bound actual work and are
/// recorded in every report.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct Budgets {
    /// Outer repetitions of the cluster-or-decode attempt.
    pub outer_reps: usize,
    /// Random collapse draws per decode call.
    pub collapse_reps: usize,
    /// Maximum candidates emitted by cover enumeration.
    pub cover_budget: usize,
    /// Maximum entries kept in a candidate list.
    pub candidate_budget: usize,
    /// Restarts of the low-dimensional learner.
    pub lowdim_restarts: usize,
    /// EM iterations per restart.
    pub em_iters: usize,
    /// Monte Carlo draws per hypothesis when estimating Scheffe masses.
    pub tournament_mc: usize,
    /// Cap on points fed to the tournament comparisons.
    pub tournament_points_cap: usize,
    /// Cap on points used for Hermite tensor estimation.
    pub tensor_sample_cap: usize,
    /// Cap on points entering the moment-matrix oracle; the partition is
    /// extended to the rest by nearest neighbor.
    pub cluster_sample_cap: usize,
    /// Cap on the search-subspace dimension.
    pub subspace_dim_cap: usize,
}

impl Default for Budgets {
    fn default() -> Self {
        Budgets {
            outer_reps: 100,
            collapse_reps: 50,
            cover_budget: 20_000,
            candidate_budget: 4_000,
            lowdim_restarts: 8,
            em_iters: 200,
            tournament_mc: 20_000,
            tournament_points_cap: 50_000,
            tensor_sample_cap: 20_000,
            cluster_sample_cap: 3_000,
            subspace_dim_cap: 6,
        }
    }
}

/// Branch probabilities of the randomized recursion, exposed so tests can
/// force specific branches deterministically.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct BranchSchedule {
    /// Probability of treating the lightest component as noise.
    pub p_light: f64,
    /// Probability of the partial-clustering branch (vs list decoding).
    pub p_cluster: f64,
}

impl Default for BranchSchedule {
    fn default() -> Self {
        BranchSchedule {
            p_light: 0.5,
            p_cluster: 0.5,
        }
    }
}

/// Full pipeline configuration.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct PipelineConfig {
    pub mode: DecodeMode,
    pub weight_mode: WeightMode,
    pub oracle_mode: OracleMode,
    pub budgets: Budgets,
    pub branch: BranchSchedule,
    pub constants: Constants,
    /// Highest Hermite order used for the search subspace.
    pub m_max: usize,
    /// Memory guard for dense tensors (entry count).
    pub tensor_entry_guard: usize,
    /// Eigenvalue floor used when a density evaluation needs one, as a
    /// fraction of trace.
    pub density_floor_scale: f64,
    /// Explicit decode-scale overrides; `None` means use the formula value
    /// (capped). Recorded in reports either way.
    pub decode_eta: Option<f64>,
    pub decode_delta: Option<f64>,
    /// Merge scale for partial clustering (`tau`); `None` uses the formula.
    pub cluster_tau: Option<f64>,
    /// Trim rate handed to the low-dimensional learner.
    pub lowdim_trim: Option<f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            mode: DecodeMode::Efficient,
            weight_mode: WeightMode::Guess,
            oracle_mode: OracleMode::Affinity,
            budgets: Budgets::default(),
            branch: BranchSchedule::default(),
            constants: Constants::default(),
            m_max: 4,
            tensor_entry_guard: 100_000_000,
            density_floor_scale: 1e-9,
            decode_eta: None,
            decode_delta: None,
            cluster_tau: None,
            lowdim_trim: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.constants.validate()?;
        if self.budgets.outer_reps == 0 || self.budgets.collapse_reps == 0 {
            return Err(Error::invalid("budgets must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.branch.p_light)
            || !(0.0..=1.0).contains(&self.branch.p_cluster)
        {
            return Err(Error::invalid("branch probabilities must lie in [0,1]"));
        }
        Ok(())
    }
}
