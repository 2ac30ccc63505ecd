//! Adversarial contamination of sample sets.
//!
//! Three adversaries, in increasing strength: Huber (additive noise drawn at
//! generation time), total-variation (i.i.d. draws from a fixed distribution
//! within eps of the target), and strong (inspects the clean sample, then
//! replaces exactly floor(eps n) points). The adversary is existential in the
//! analysis; the concrete strategies here make robustness claims falsifiable,
//! and passing them is necessary but not sufficient.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermite::{hermite_tensor_of_point, DenseTensor};
use crate::linalg;
use crate::model::{sample_mixture, GaussianComponent, GaussianMixture};

/// Which corruption model the adversary plays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContaminationModel {
    Huber,
    Tv,
    Strong,
}

/// Concrete attack strategy for the strong adversary (and noise shape for the
/// TV adversary).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackStrategy {
    /// Tight clump at distance `location_scale` along the top principal
    /// direction of the sample.
    FarCluster,
    /// Points placed to bias the empirical 4th Hermite tensor along a random
    /// rank-1 direction.
    MomentAttack,
    /// Replace the lowest-density points by shifted copies of the densest
    /// region.
    DensitySwap,
}

/// Full adversary specification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContaminationSpec {
    pub model: ContaminationModel,
    /// Corrupted fraction, in [0, 1/2).
    pub eps: f64,
    pub strategy: AttackStrategy,
    /// Distance scale of the attack (clump distance, attack magnitude).
    pub location_scale: f64,
}

impl ContaminationSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.eps) {
            return Err(Error::invalid("eps must lie in [0, 1/2)"));
        }
        Ok(())
    }
}

/// A corrupted sample set plus the corruption mask for diagnostics.
#[derive(Debug, Clone)]
pub struct CorruptedSample {
    pub points: Vec<DVector<f64>>,
    /// `true` where the adversary replaced the point.
    pub mask: Vec<bool>,
    /// Generating component labels where known (clean draws), usize::MAX on
    /// corrupted points.
    pub labels: Vec<usize>,
}

impl CorruptedSample {
    pub fn corrupted_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Huber model: each point of `x` is independently replaced by a draw from
/// `noise` with probability eps. Unreplaced points stay bit-identical.
pub fn huber_contaminate<R: Rng>(
    x: &[DVector<f64>],
    labels: &[usize],
    spec: &ContaminationSpec,
    noise: &GaussianMixture,
    rng: &mut R,
) -> Result<CorruptedSample> {
    spec.validate()?;
    if spec.model != ContaminationModel::Huber {
        return Err(Error::invalid("spec.model must be huber"));
    }
    let mut points = Vec::with_capacity(x.len());
    let mut mask = Vec::with_capacity(x.len());
    let mut out_labels = Vec::with_capacity(x.len());
    for (p, &l) in x.iter().zip(labels) {
        if rng.gen::<f64>() < spec.eps {
            let (draw, _) = sample_mixture(noise, 1, rng);
            points.push(draw.into_iter().next().unwrap());
            mask.push(true);
            out_labels.push(usize::MAX);
        } else {
            points.push(p.clone());
            mask.push(false);
            out_labels.push(l);
        }
    }
    Ok(CorruptedSample {
        points,
        mask,
        labels: out_labels,
    })
}

/// TV model: i.i.d. draws from the canonical member `(1-eps) m + eps noise`
/// of the TV ball around `m`; no per-sample adaptivity. The noise mixture is
/// derived from the attack strategy.
pub fn tv_contaminate<R: Rng>(
    mixture: &GaussianMixture,
    spec: &ContaminationSpec,
    n: usize,
    rng: &mut R,
) -> Result<CorruptedSample> {
    spec.validate()?;
    if spec.model != ContaminationModel::Tv {
        return Err(Error::invalid("spec.model must be tv"));
    }
    let noise = tv_noise_mixture(mixture.dim(), spec, rng)?;
    let mut points = Vec::with_capacity(n);
    let mut mask = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        if rng.gen::<f64>() < spec.eps {
            let (draw, _) = sample_mixture(&noise, 1, rng);
            points.push(draw.into_iter().next().unwrap());
            mask.push(true);
            labels.push(usize::MAX);
        } else {
            let (draw, l) = sample_mixture(mixture, 1, rng);
            points.push(draw.into_iter().next().unwrap());
            mask.push(false);
            labels.push(l[0]);
        }
    }
    Ok(CorruptedSample {
        points,
        mask,
        labels,
    })
}

fn tv_noise_mixture<R: Rng>(
    d: usize,
    spec: &ContaminationSpec,
    rng: &mut R,
) -> Result<GaussianMixture> {
    let u = random_unit(d, rng);
    let r = spec.location_scale;
    let tight = DMatrix::<f64>::identity(d, d) * 1e-4;
    match spec.strategy {
        AttackStrategy::FarCluster | AttackStrategy::DensitySwap => Ok(GaussianMixture::single(
            GaussianComponent::new(&u * r, tight)?,
        )),
        AttackStrategy::MomentAttack => GaussianMixture::new(
            vec![0.5, 0.5],
            vec![
                GaussianComponent::new(&u * r, tight.clone())?,
                GaussianComponent::new(&u * -r, tight)?,
            ],
        ),
    }
}

/// Strong model: the adversary inspects the clean sample, then replaces
/// exactly `floor(eps n)` points with adversarial ones. If `eps n < 1` the
/// input is returned unchanged (a warning case, reported in the mask count).
pub fn strong_contaminate<R: Rng>(
    x: &[DVector<f64>],
    labels: &[usize],
    spec: &ContaminationSpec,
    rng: &mut R,
) -> Result<CorruptedSample> {
    spec.validate()?;
    if spec.model != ContaminationModel::Strong {
        return Err(Error::invalid("spec.model must be strong"));
    }
    let n = x.len();
    let m = (spec.eps * n as f64).floor() as usize;
    let mut points: Vec<DVector<f64>> = x.to_vec();
    let mut mask = vec![false; n];
    let mut out_labels = labels.to_vec();
    if m == 0 {
        return Ok(CorruptedSample {
            points,
            mask,
            labels: out_labels,
        });
    }
    let d = x[0].len();
    let targets = match spec.strategy {
        // Replace a seeded random subset; the replacement values inspect x.
        AttackStrategy::FarCluster | AttackStrategy::MomentAttack => choose_indices(n, m, rng),
        // Replace the lowest-density points specifically.
        AttackStrategy::DensitySwap => {
            let scores = mahalanobis_scores(x);
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
            order.truncate(m);
            order
        }
    };
    match spec.strategy {
        AttackStrategy::FarCluster => {
            let mean = linalg::mean_point(x);
            let weights = vec![1.0; n];
            let (_, v) = linalg::top_centered_eigenpair(x, &weights, &mean, 200);
            let center = &v * spec.location_scale;
            for &i in &targets {
                // Jitter keeps pairwise distances at most 1.
                let jitter = DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0)) * (0.28 / (d as f64).sqrt());
                points[i] = &center + jitter;
            }
        }
        AttackStrategy::MomentAttack => {
            let u = random_unit(d, rng);
            let s = spec.location_scale;
            for (j, &i) in targets.iter().enumerate() {
                // Alternating signs keep the mean roughly centered while the
                // 4th moment along u grows like s^4.
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                points[i] = &u * (sign * s);
            }
        }
        AttackStrategy::DensitySwap => {
            let scores = mahalanobis_scores(x);
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
            let mean = linalg::mean_point(x);
            let weights = vec![1.0; n];
            let (_, v) = linalg::top_centered_eigenpair(x, &weights, &mean, 200);
            let shift = &v * spec.location_scale;
            for (j, &i) in targets.iter().enumerate() {
                let donor = order[j % order.len()];
                points[i] = &x[donor] + &shift;
            }
        }
    }
    for &i in &targets {
        mask[i] = true;
        out_labels[i] = usize::MAX;
    }
    Ok(CorruptedSample {
        points,
        mask,
        labels: out_labels,
    })
}

/// Empirical mean of the order-4 Hermite tensors of a sample (used to verify
/// moment attacks actually move the statistic they target).
pub fn empirical_h4_mean(points: &[DVector<f64>], guard: usize) -> Result<DenseTensor> {
    let d = points
        .first()
        .ok_or_else(|| Error::Empty("empirical_h4_mean".into()))?
        .len();
    let mut acc = DenseTensor::zeros(d, 4, guard)?;
    for p in points {
        acc.axpy(1.0, &hermite_tensor_of_point(p, 4, guard)?)?;
    }
    acc.scale(1.0 / points.len() as f64);
    Ok(acc)
}

fn random_unit<R: Rng>(d: usize, rng: &mut R) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let n = v.norm();
        if n > 1e-9 {
            return v / n;
        }
    }
}

fn choose_indices<R: Rng>(n: usize, m: usize, rng: &mut R) -> Vec<usize> {
    // Partial Fisher-Yates over the index list.
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..m.min(n) {
        let j = rng.gen_range(i..n);
        idx.swap(i, j);
    }
    idx.truncate(m);
    idx
}

fn mahalanobis_scores(x: &[DVector<f64>]) -> Vec<f64> {
    let mean = linalg::mean_point(x);
    let cov = linalg::covariance(x);
    let pinv = linalg::sym_pseudo_pow(&cov, -1.0, 1e-10);
    x.iter()
        .map(|p| {
            let c = p - &mean;
            c.dot(&(&pinv * &c))
        })
        .collect()
}
