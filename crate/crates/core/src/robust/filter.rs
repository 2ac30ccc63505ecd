//! Iterative spectral filtering with multiplicative-weights down-weighting.
//!
//! The filter operates on a flat row-major matrix so the same code serves raw
//! points, packed second-moment vectors, and flattened Hermite tensors. It is
//! fully deterministic: the power iteration starts from the largest centered
//! row, ties break toward the lower index, and no generator is consumed.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;

/// 75th percentile of the standard normal; converts a median absolute
/// deviation into a standard-deviation estimate.
const MAD_TO_SIGMA: f64 = 0.674489750196082;

/// Dense row-major sample matrix.
pub struct RowMatrix {
    pub n: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl RowMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::Empty("filter input".into()));
        }
        let dim = rows[0].len();
        let mut data = Vec::with_capacity(n * dim);
        for r in rows {
            if r.len() != dim {
                return Err(Error::invalid("ragged rows"));
            }
            data.extend_from_slice(r);
        }
        Ok(RowMatrix { n, dim, data })
    }

    pub fn with_capacity(n: usize, dim: usize) -> Self {
        RowMatrix {
            n: 0,
            dim,
            data: Vec::with_capacity(n * dim),
        }
    }

    pub fn push_row(&mut self, row: &[f64]) {
        debug_assert_eq!(row.len(), self.dim);
        self.data.extend_from_slice(row);
        self.n += 1;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

/// One filter iteration, for the report history.
#[derive(Debug, Clone, Serialize)]
pub struct FilterStep {
    pub spectral: f64,
    pub scale: f64,
    pub active: usize,
}

/// Outcome of a filtering run.
#[derive(Debug, Clone, Serialize)]
pub struct FilterReport {
    pub iterations: usize,
    /// Indices whose weight fell below 1/2 and were zeroed out.
    pub removed: Vec<usize>,
    /// Top eigenvalue of the centered second moment at termination.
    pub final_spectral: f64,
    pub history: Vec<FilterStep>,
    /// Whether the spectral stopping condition was met (vs the iteration cap).
    pub converged: bool,
}

fn weighted_mean(rows: &RowMatrix, weights: &[f64]) -> Vec<f64> {
    let mut mean = vec![0.0; rows.dim];
    let mut total = 0.0;
    for i in 0..rows.n {
        let w = weights[i];
        if w <= 0.0 {
            continue;
        }
        total += w;
        let r = rows.row(i);
        for (m, &x) in mean.iter_mut().zip(r) {
            *m += w * x;
        }
    }
    if total > 0.0 {
        for m in &mut mean {
            *m /= total;
        }
    }
    mean
}

/// Matrix-free power iteration for the top eigenpair of the weighted centered
/// second moment. The start vector is the heaviest centered active row, which
/// keeps the whole filter covariant under orthogonal maps of the data.
fn top_eigenpair(rows: &RowMatrix, weights: &[f64], mean: &[f64], iters: usize) -> (f64, Vec<f64>) {
    let dim = rows.dim;
    let total: f64 = weights.iter().sum();
    let mut v = vec![0.0; dim];
    let mut best = -1.0;
    for i in 0..rows.n {
        if weights[i] <= 0.0 {
            continue;
        }
        let r = rows.row(i);
        let mut n2 = 0.0;
        for (j, &x) in r.iter().enumerate() {
            let c = x - mean[j];
            n2 += c * c;
        }
        if n2 > best {
            best = n2;
            for (j, &x) in r.iter().enumerate() {
                v[j] = x - mean[j];
            }
        }
    }
    let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || total <= 0.0 {
        return (0.0, v);
    }
    for x in &mut v {
        *x /= norm;
    }
    let mut lambda = 0.0;
    let mut next = vec![0.0; dim];
    for _ in 0..iters {
        next.iter_mut().for_each(|x| *x = 0.0);
        for i in 0..rows.n {
            let w = weights[i];
            if w <= 0.0 {
                continue;
            }
            let r = rows.row(i);
            let mut proj = 0.0;
            for (j, &x) in r.iter().enumerate() {
                proj += (x - mean[j]) * v[j];
            }
            let scale = w * proj;
            for (j, &x) in r.iter().enumerate() {
                next[j] += scale * (x - mean[j]);
            }
        }
        for x in &mut next {
            *x /= total;
        }
        let nn: f64 = next.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nn == 0.0 {
            return (0.0, v);
        }
        let done = (nn - lambda).abs() <= 1e-10 * nn.max(1e-300);
        lambda = nn;
        for (vj, &nj) in v.iter_mut().zip(next.iter()) {
            *vj = nj / nn;
        }
        if done {
            break;
        }
    }
    (lambda, v)
}

/// Runs the filter and returns the weighted mean of the surviving points.
///
/// While the top eigenvalue of the centered second moment exceeds
/// `c_stop` times a median-based scale estimate along the top direction,
/// points are down-weighted in proportion to their squared projection;
/// weights below 1/2 are zeroed. With `eps == 0` the plain mean is returned
/// untouched.
pub fn spectral_filter_mean(
    rows: &RowMatrix,
    eps: f64,
    c_stop: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, FilterReport)> {
    if rows.n == 0 {
        return Err(Error::Empty("filter input".into()));
    }
    if !(0.0..1.0 / 3.0).contains(&eps) {
        return Err(Error::invalid("filter eps must lie in [0, 1/3)"));
    }
    let mut weights = vec![1.0f64; rows.n];
    if eps == 0.0 {
        let mean = weighted_mean(rows, &weights);
        return Ok((
            mean,
            FilterReport {
                iterations: 0,
                removed: Vec::new(),
                final_spectral: 0.0,
                history: Vec::new(),
                converged: true,
            },
        ));
    }
    if (rows.n as f64) < 10.0 / eps {
        return Err(Error::invalid(format!(
            "need at least {} points for eps = {eps}",
            (10.0 / eps).ceil()
        )));
    }

    let mut history = Vec::new();
    let mut converged = false;
    let mut final_spectral = 0.0;
    let mut iterations = 0;
    let power_iters = 60;

    for _ in 0..max_iter {
        let mean = weighted_mean(rows, &weights);
        let (lambda, v) = top_eigenpair(rows, &weights, &mean, power_iters);
        // Robust variance scale along the top direction: squared MAD around
        // the projection median, so a corrupted center cannot inflate it.
        let mut proj: Vec<f64> = Vec::with_capacity(rows.n);
        for i in 0..rows.n {
            if weights[i] <= 0.0 {
                continue;
            }
            let r = rows.row(i);
            let mut p = 0.0;
            for (j, &x) in r.iter().enumerate() {
                p += (x - mean[j]) * v[j];
            }
            proj.push(p);
        }
        let center = linalg::median(&proj);
        let abs_dev: Vec<f64> = proj.iter().map(|p| (p - center).abs()).collect();
        let mad = linalg::median(&abs_dev);
        let scale = (mad / MAD_TO_SIGMA).powi(2);
        let active = proj.len();
        history.push(FilterStep {
            spectral: lambda,
            scale,
            active,
        });
        final_spectral = lambda;
        if lambda <= c_stop * scale || lambda <= 1e-300 {
            converged = true;
            break;
        }
        iterations += 1;

        // Multiplicative-weights update; ties on the max score resolve to the
        // lower index.
        let mut tau_max = 0.0;
        let mut scores = vec![0.0f64; rows.n];
        for i in 0..rows.n {
            if weights[i] <= 0.0 {
                continue;
            }
            let r = rows.row(i);
            let mut p = 0.0;
            for (j, &x) in r.iter().enumerate() {
                p += (x - mean[j]) * v[j];
            }
            scores[i] = p * p;
            if scores[i] > tau_max {
                tau_max = scores[i];
            }
        }
        if tau_max <= 0.0 {
            converged = true;
            break;
        }
        for i in 0..rows.n {
            if weights[i] <= 0.0 {
                continue;
            }
            weights[i] *= 1.0 - scores[i] / tau_max;
            if weights[i] < 0.5 {
                weights[i] = 0.0;
            }
        }
        let live: f64 = weights.iter().sum();
        if live < rows.n as f64 * 0.25 {
            return Err(Error::FilterFailure(format!(
                "filter removed too much mass ({live:.1} of {} left)",
                rows.n
            )));
        }
    }

    let removed: Vec<usize> = (0..rows.n).filter(|&i| weights[i] == 0.0).collect();
    if removed.len() == rows.n {
        return Err(Error::FilterFailure("all points removed".into()));
    }
    let mean = weighted_mean(rows, &weights);
    Ok((
        mean,
        FilterReport {
            iterations,
            removed,
            final_spectral,
            history,
            converged,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows_from(points: Vec<Vec<f64>>) -> RowMatrix {
        RowMatrix::from_rows(&points).unwrap()
    }

    #[test]
    fn clean_tight_cluster_returns_plain_mean() {
        let pts: Vec<Vec<f64>> = (0..200)
            .map(|i| {
                let t = i as f64 * 0.01;
                vec![t.sin() * 0.01, t.cos() * 0.01]
            })
            .collect();
        let rows = rows_from(pts.clone());
        let (mean, report) = spectral_filter_mean(&rows, 0.1, 10.0, 60).unwrap();
        assert_eq!(report.iterations, 0);
        assert!(report.converged);
        let mut plain = vec![0.0, 0.0];
        for p in &pts {
            plain[0] += p[0];
            plain[1] += p[1];
        }
        plain[0] /= 200.0;
        plain[1] /= 200.0;
        assert_eq!(mean, plain);
    }

    #[test]
    fn identical_points_survive() {
        let pts = vec![vec![3.0, -1.0]; 150];
        let rows = rows_from(pts);
        let (mean, _) = spectral_filter_mean(&rows, 0.1, 10.0, 60).unwrap();
        assert_eq!(mean, vec![3.0, -1.0]);
    }

    #[test]
    fn eps_zero_skips_filtering() {
        let pts = vec![vec![0.0], vec![1000.0]];
        let rows = rows_from(pts);
        let (mean, report) = spectral_filter_mean(&rows, 0.0, 10.0, 60).unwrap();
        assert_eq!(mean, vec![500.0]);
        assert!(report.removed.is_empty());
    }

    #[test]
    fn small_sample_rejected() {
        let pts = vec![vec![0.0]; 50];
        let rows = rows_from(pts);
        assert!(spectral_filter_mean(&rows, 0.1, 10.0, 60).is_err());
    }
}
