//! Small dense linear-algebra helpers shared by the estimation modules.
//!
//! Everything here is deterministic: eigenpairs are returned in sorted order,
//! iterative methods use data-derived start vectors, and reductions run in
//! index order so results are reproducible bit-for-bit.

use nalgebra::{DMatrix, DVector};

/// Eigenpairs of a symmetric matrix, sorted by descending eigenvalue.
pub fn sym_eigen_sorted(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (j, &i) in order.iter().enumerate() {
        vectors.set_column(j, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

/// Clamp the spectrum of a symmetric matrix from below.
pub fn psd_floor(m: &DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    let (vals, vecs) = sym_eigen_sorted(m);
    let clamped = DVector::from_iterator(vals.len(), vals.iter().map(|&v| v.max(floor)));
    &vecs * DMatrix::from_diagonal(&clamped) * vecs.transpose()
}

/// Pseudo-inverse power `m^p` of a symmetric PSD matrix, treating eigenvalues
/// below `rel_tol * lambda_max` as zero. `p = -0.5` gives the whitening map.
pub fn sym_pseudo_pow(m: &DMatrix<f64>, p: f64, rel_tol: f64) -> DMatrix<f64> {
    let (vals, vecs) = sym_eigen_sorted(m);
    let lmax = vals.first().copied().unwrap_or(0.0).max(0.0);
    let cut = lmax * rel_tol;
    let powered = DVector::from_iterator(
        vals.len(),
        vals.iter()
            .map(|&v| if v > cut && v > 0.0 { v.powf(p) } else { 0.0 }),
    );
    &vecs * DMatrix::from_diagonal(&powered) * vecs.transpose()
}

/// Numerical rank of a symmetric PSD matrix at a relative eigenvalue threshold.
pub fn sym_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    let (vals, _) = sym_eigen_sorted(m);
    let lmax = vals.first().copied().unwrap_or(0.0).max(0.0);
    vals.iter().filter(|&&v| v > lmax * rel_tol && v > 0.0).count()
}

/// Symmetric square-root factor `A` with `m = A * A^T`, tolerating tiny
/// negative eigenvalues from roundoff (clamped to zero).
pub fn psd_sqrt_factor(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (vals, vecs) = sym_eigen_sorted(m);
    let roots = DVector::from_iterator(vals.len(), vals.iter().map(|&v| v.max(0.0).sqrt()));
    &vecs * DMatrix::from_diagonal(&roots)
}

/// Top eigenpair of the weighted, centered second moment of a point set,
/// computed matrix-free by power iteration. The start vector is the largest
/// centered point, which keeps the iteration covariant with the data.
pub fn top_centered_eigenpair(
    points: &[DVector<f64>],
    weights: &[f64],
    mean: &DVector<f64>,
    iters: usize,
) -> (f64, DVector<f64>) {
    let d = mean.len();
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return (0.0, DVector::zeros(d));
    }
    let mut start = 0usize;
    let mut best = -1.0;
    for (i, x) in points.iter().enumerate() {
        if weights[i] <= 0.0 {
            continue;
        }
        let n2 = (x - mean).norm_squared();
        if n2 > best {
            best = n2;
            start = i;
        }
    }
    let mut v = &points[start] - mean;
    if v.norm() == 0.0 {
        v = DVector::from_element(d, 1.0);
    }
    v /= v.norm();
    let mut lambda = 0.0;
    for _ in 0..iters {
        let mut next = DVector::zeros(d);
        for (i, x) in points.iter().enumerate() {
            let w = weights[i];
            if w <= 0.0 {
                continue;
            }
            let c = x - mean;
            let proj = c.dot(&v);
            next.axpy(w * proj, &c, 1.0);
        }
        next /= total;
        let norm = next.norm();
        if norm == 0.0 {
            return (0.0, v);
        }
        let new_lambda = norm;
        let new_v = next / norm;
        let done = (new_lambda - lambda).abs() <= 1e-12 * new_lambda.max(1.0);
        lambda = new_lambda;
        v = new_v;
        if done {
            break;
        }
    }
    (lambda, v)
}

/// Top-`q` eigenpairs of a dense symmetric PSD matrix by orthogonal
/// iteration. Cheaper than a full decomposition when `q << n`; deterministic
/// start. Ordering is by magnitude, which coincides with value on PSD input.
pub fn top_eigenpairs_psd(m: &DMatrix<f64>, q: usize, iters: usize) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let q = q.min(n);
    if q == 0 || n == 0 {
        return (Vec::new(), DMatrix::zeros(n, 0));
    }
    if q * 4 >= n {
        let (vals, vecs) = sym_eigen_sorted(m);
        return (vals[..q].to_vec(), vecs.columns(0, q).into_owned());
    }
    // Deterministic full-rank start block.
    let mut block = DMatrix::zeros(n, q);
    for j in 0..q {
        for i in 0..n {
            let t = ((i * (j + 1) + 7 * j + 1) % 97) as f64 / 97.0 - 0.5;
            block[(i, j)] = t + if i == j { 1.0 } else { 0.0 };
        }
    }
    for _ in 0..iters {
        let prod = m * &block;
        let qr = prod.qr();
        block = qr.q();
    }
    // Rayleigh-Ritz on the converged block.
    let small = block.transpose() * m * &block;
    let (vals, vecs) = sym_eigen_sorted(&small);
    let lifted = block * vecs;
    (vals, lifted)
}

/// Orthonormalize the columns of `basis` by modified Gram-Schmidt, dropping
/// columns whose residual norm falls below `tol`.
pub fn orthonormalize(columns: &[DVector<f64>], tol: f64) -> Vec<DVector<f64>> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for col in columns {
        let mut v = col.clone();
        for b in &basis {
            let c = b.dot(&v);
            v.axpy(-c, b, 1.0);
        }
        // Second pass for numerical orthogonality.
        for b in &basis {
            let c = b.dot(&v);
            v.axpy(-c, b, 1.0);
        }
        let norm = v.norm();
        if norm > tol {
            basis.push(v / norm);
        }
    }
    basis
}

/// log(sum(exp(xs))) with the usual max shift.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = xs.iter().map(|&x| (x - m).exp()).sum();
    m + s.ln()
}

/// Median of a slice (total order; averages the middle pair for even length).
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Mean of a point set.
pub fn mean_point(points: &[DVector<f64>]) -> DVector<f64> {
    let d = points.first().map(|p| p.len()).unwrap_or(0);
    let mut m = DVector::zeros(d);
    for p in points {
        m += p;
    }
    if !points.is_empty() {
        m /= points.len() as f64;
    }
    m
}

/// Sample covariance (normalizing by `n`) around the sample mean.
pub fn covariance(points: &[DVector<f64>]) -> DMatrix<f64> {
    let d = points.first().map(|p| p.len()).unwrap_or(0);
    let m = mean_point(points);
    let mut cov = DMatrix::zeros(d, d);
    for p in points {
        let c = p - &m;
        cov.syger(1.0, &c, &c, 1.0);
    }
    if !points.is_empty() {
        cov /= points.len() as f64;
    }
    // syger fills the lower triangle; mirror it.
    cov.fill_upper_triangle_with_lower_triangle();
    cov
}

/// Second moment E[x x^T] of a subset of points, normalizing by the subset size.
pub fn second_moment(points: &[DVector<f64>], idx: &[usize]) -> DMatrix<f64> {
    let d = points.first().map(|p| p.len()).unwrap_or(0);
    let mut m = DMatrix::zeros(d, d);
    for &i in idx {
        m.syger(1.0, &points[i], &points[i], 1.0);
    }
    if !idx.is_empty() {
        m /= idx.len() as f64;
    }
    m.fill_upper_triangle_with_lower_triangle();
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn eigen_sorted_descending() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 5.0, 3.0]));
        let (vals, _) = sym_eigen_sorted(&m);
        assert_eq!(vals, vec![5.0, 3.0, 1.0]);
    }

    #[test]
    fn pseudo_pow_whitens() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 9.0]));
        let w = sym_pseudo_pow(&m, -0.5, 1e-12);
        let id = &w * &m * &w;
        assert_relative_eq!(id[(0, 0)], 1.0, epsilon = 1e-12);
        assert_relative_eq!(id[(1, 1)], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn power_iteration_matches_dense() {
        let points: Vec<DVector<f64>> = (0..50)
            .map(|i| {
                let t = i as f64 / 7.0;
                DVector::from_vec(vec![t.sin() * 3.0, t.cos(), (t * 1.3).sin()])
            })
            .collect();
        let w = vec![1.0; points.len()];
        let mean = mean_point(&points);
        let (lambda, _) = top_centered_eigenpair(&points, &w, &mean, 500);
        let cov = covariance(&points);
        let (vals, _) = sym_eigen_sorted(&cov);
        assert_relative_eq!(lambda, vals[0], epsilon = 1e-8);
    }

    #[test]
    fn subspace_iteration_matches_dense() {
        let mut a = DMatrix::zeros(40, 40);
        for i in 0..40 {
            for j in 0..40 {
                a[(i, j)] = ((i * j) as f64 * 0.37).sin();
            }
        }
        let m = &a * a.transpose(); // PSD
        let (vals, _) = top_eigenpairs_psd(&m, 3, 300);
        let (full, _) = sym_eigen_sorted(&m);
        for q in 0..3 {
            assert_relative_eq!(vals[q], full[q], epsilon = 1e-6, max_relative = 1e-6);
        }
    }

    #[test]
    fn orthonormalize_drops_dependent() {
        let a = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let b = DVector::from_vec(vec![1.0, 1e-14, 0.0]);
        let c = DVector::from_vec(vec![0.0, 1.0, 0.0]);
        let basis = orthonormalize(&[a, b, c], 1e-9);
        assert_eq!(basis.len(), 2);
    }
}
