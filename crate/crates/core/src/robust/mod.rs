//! Practical filter-based robust estimators: mean, covariance, Hermite
//! moment tensors, trimmed second moments, and the isotropizing transform.
//!
//! One filter family (iterative spectral filtering with multiplicative
//! weights, [`filter`]) backs all of the estimation contracts used by the
//! pipeline; the bounded-covariance precondition for Hermite tensors comes
//! from the covariance growth of `h_m` under the component parameters.

mod diagnostic;
mod filter;

pub use diagnostic::{good_sample_diagnostic, GoodSampleReport};
pub use filter::{spectral_filter_mean, FilterReport, FilterStep, RowMatrix};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::hermite::{hermite_tensor_of_point, DenseTensor};
use crate::linalg;
use crate::model::IsotropizingTransform;

/// Default spectral stopping factor (constants site `filter.stop.c`).
pub const DEFAULT_STOP: f64 = 10.0;
/// Default filter iteration cap (constants site `filter.max_iter`).
pub const DEFAULT_MAX_ITER: usize = 60;

const RANK_TOL: f64 = 1e-8;

fn points_to_rows(points: &[DVector<f64>]) -> Result<RowMatrix> {
    let n = points.len();
    if n == 0 {
        return Err(Error::Empty("no points".into()));
    }
    let d = points[0].len();
    let mut rows = RowMatrix::with_capacity(n, d);
    for p in points {
        if p.len() != d {
            return Err(Error::invalid("ragged point set"));
        }
        rows.push_row(p.as_slice());
    }
    Ok(rows)
}

/// Robust mean via spectral filtering. On an eps-corruption of a
/// bounded-covariance set the error is `O(sqrt(eps)) * ||Cov||_op^(1/2)`.
pub fn robust_mean_filter(
    points: &[DVector<f64>],
    eps: f64,
    c_stop: f64,
    max_iter: usize,
) -> Result<(DVector<f64>, FilterReport)> {
    let rows = points_to_rows(points)?;
    let (mean, report) = spectral_filter_mean(&rows, eps, c_stop, max_iter)?;
    Ok((DVector::from_vec(mean), report))
}

/// Robust order-`m` Hermite moment tensor: the filter applied to
/// `{h_m(x_i)}` viewed as `d^m`-vectors. With `eps == 0` this is exactly the
/// empirical Hermite mean.
pub fn robust_tensor_mean(
    points: &[DVector<f64>],
    order: usize,
    eps: f64,
    guard: usize,
    c_stop: f64,
    max_iter: usize,
) -> Result<(DenseTensor, FilterReport)> {
    let n = points.len();
    if n == 0 {
        return Err(Error::Empty("no points".into()));
    }
    let d = points[0].len();
    let probe = DenseTensor::zeros(d, order, guard)?;
    let mut rows = RowMatrix::with_capacity(n, probe.len());
    for p in points {
        let h = hermite_tensor_of_point(p, order, guard)?;
        rows.push_row(h.data());
    }
    let (mean, report) = spectral_filter_mean(&rows, eps, c_stop, max_iter)?;
    Ok((DenseTensor::from_data(d, order, mean)?, report))
}

/// Packs a symmetric outer product `(c c^T)` into the `d(d+1)/2` upper
/// triangle with sqrt(2) off-diagonal scaling, preserving the Frobenius
/// inner product.
fn pack_outer(c: &DVector<f64>, out: &mut Vec<f64>) {
    let d = c.len();
    out.clear();
    let root2 = std::f64::consts::SQRT_2;
    for i in 0..d {
        out.push(c[i] * c[i]);
        for j in i + 1..d {
            out.push(root2 * c[i] * c[j]);
        }
    }
}

fn unpack_sym(d: usize, packed: &[f64]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(d, d);
    let inv_root2 = 1.0 / std::f64::consts::SQRT_2;
    let mut k = 0;
    for i in 0..d {
        m[(i, i)] = packed[k];
        k += 1;
        for j in i + 1..d {
            let v = packed[k] * inv_root2;
            m[(i, j)] = v;
            m[(j, i)] = v;
            k += 1;
        }
    }
    m
}

/// Report for the robust covariance estimate.
#[derive(Debug, Clone)]
pub struct CovReport {
    pub mean_filter: FilterReport,
    pub cov_filter: FilterReport,
}

/// Robust covariance (and mean): a mean-filter pass, then the same filter in
/// the packed space of centered second-moment outer products.
pub fn robust_cov_estimate(
    points: &[DVector<f64>],
    eps: f64,
    c_stop: f64,
    max_iter: usize,
) -> Result<(DMatrix<f64>, DVector<f64>, CovReport)> {
    let (mu, mean_filter) = robust_mean_filter(points, eps, c_stop, max_iter)?;
    let d = mu.len();
    let mut rows = RowMatrix::with_capacity(points.len(), d * (d + 1) / 2);
    let mut packed = Vec::with_capacity(d * (d + 1) / 2);
    for p in points {
        let c = p - &mu;
        pack_outer(&c, &mut packed);
        rows.push_row(&packed);
    }
    let (mean, cov_filter) = spectral_filter_mean(&rows, eps, c_stop, max_iter)?;
    let cov = linalg::psd_floor(&unpack_sym(d, &mean), 0.0);
    Ok((
        cov,
        mu,
        CovReport {
            mean_filter,
            cov_filter,
        },
    ))
}

/// Trimmed second moment: iteratively drop the eta-fraction of points with
/// the largest leverage against the current estimate, to a fixpoint.
#[derive(Debug, Clone)]
pub struct SecondMomentReport {
    pub matrix: DMatrix<f64>,
    pub trimmed: Vec<usize>,
    pub iterations: usize,
    pub warnings: Vec<String>,
}

pub fn robust_second_moment(points: &[DVector<f64>], eta: f64) -> Result<SecondMomentReport> {
    let n = points.len();
    if n == 0 {
        return Err(Error::Empty("no points".into()));
    }
    if !(0.0..1.0).contains(&eta) {
        return Err(Error::invalid("eta must lie in [0, 1)"));
    }
    let mut warnings = Vec::new();
    if eta > 0.01 {
        warnings.push(format!("eta {eta} above the 1/100 regime; relaxed"));
    }
    let m = (eta * n as f64).floor() as usize;
    let all: Vec<usize> = (0..n).collect();
    let mut keep = all.clone();
    let mut iterations = 0;
    let max_iter = 50;
    loop {
        let moment = linalg::second_moment(points, &keep);
        if m == 0 {
            return Ok(SecondMomentReport {
                matrix: moment,
                trimmed: Vec::new(),
                iterations,
                warnings,
            });
        }
        let pinv = linalg::sym_pseudo_pow(&moment, -1.0, 1e-10);
        let mut scored: Vec<(f64, usize)> = points
            .iter()
            .enumerate()
            .map(|(i, p)| (p.dot(&(&pinv * p)), i))
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let mut trimmed: Vec<usize> = scored.iter().take(m).map(|&(_, i)| i).collect();
        trimmed.sort_unstable();
        let next: Vec<usize> = all
            .iter()
            .copied()
            .filter(|i| trimmed.binary_search(i).is_err())
            .collect();
        iterations += 1;
        if next == keep || iterations >= max_iter {
            let matrix = linalg::second_moment(points, &next);
            return Ok(SecondMomentReport {
                matrix,
                trimmed,
                iterations,
                warnings,
            });
        }
        keep = next;
    }
}

/// Robustly estimates mean and covariance, then whitens:
/// `y -> Lambda^{+/2} U^T (y - mu)`. Rank is detected at a relative 1e-8
/// eigenvalue threshold; the output lives in `rank` dimensions.
pub fn isotropize(
    points: &[DVector<f64>],
    eps: f64,
    c_stop: f64,
    max_iter: usize,
) -> Result<(IsotropizingTransform, Vec<DVector<f64>>)> {
    let (cov, mu, _) = robust_cov_estimate(points, eps, c_stop, max_iter)?;
    let (vals, vecs) = linalg::sym_eigen_sorted(&cov);
    let lmax = vals.first().copied().unwrap_or(0.0);
    if lmax <= 0.0 {
        return Err(Error::invalid("zero-rank covariance cannot be isotropized"));
    }
    let rank = vals.iter().filter(|&&v| v > lmax * RANK_TOL).count();
    let basis = vecs.columns(0, rank).into_owned();
    let scale = DVector::from_iterator(rank, vals[..rank].iter().map(|&v| 1.0 / v.sqrt()));
    let transform = IsotropizingTransform {
        shift: mu,
        basis,
        scale,
        rank,
    };
    let transformed = points.iter().map(|p| transform.apply(p)).collect();
    Ok((transform, transformed))
}
