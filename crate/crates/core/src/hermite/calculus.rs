//! The Hermite calculus: point tensors, Gaussian expectations, and the
//! raw/Hermite change of basis.
//!
//! Everything is an exact partition sum over pair/singleton partitions of the
//! index set: the point tensor pairs contribute `-I`, Gaussian expectations
//! pair with `cov - I` (Hermite) or `cov` (raw), and singletons contribute
//! the point or the mean.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{GaussianComponent, GaussianMixture};

use super::partitions::pair_partitions;
use super::tensor::DenseTensor;

/// Evaluation plan for `h_m(x)` at fixed `(d, m)`: per flat entry, the
/// surviving partitions (those whose pairs sit on equal indices) reduced to a
/// sign and the singleton coordinates.
struct PointPlan {
    terms: Vec<Vec<(f64, Vec<usize>)>>,
}

fn plan_cache() -> &'static Mutex<HashMap<(usize, usize), Arc<PointPlan>>> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<PointPlan>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn point_plan(dim: usize, order: usize, guard: usize) -> Result<Arc<PointPlan>> {
    if let Some(hit) = plan_cache().lock().unwrap().get(&(dim, order)) {
        return Ok(hit.clone());
    }
    let template = DenseTensor::zeros(dim, order, guard)?;
    let partitions = pair_partitions(order);
    let mut terms = Vec::with_capacity(template.len());
    let mut idx = vec![0usize; order];
    for flat in 0..template.len() {
        template.unflatten(flat, &mut idx);
        let mut alive = Vec::new();
        'parts: for part in partitions.iter() {
            for &(a, b) in &part.pairs {
                if idx[a] != idx[b] {
                    continue 'parts;
                }
            }
            let sign = if part.pairs.len() % 2 == 0 { 1.0 } else { -1.0 };
            let coords = part.singles.iter().map(|&c| idx[c]).collect();
            alive.push((sign, coords));
        }
        terms.push(alive);
    }
    let plan = Arc::new(PointPlan { terms });
    plan_cache()
        .lock()
        .unwrap()
        .insert((dim, order), plan.clone());
    Ok(plan)
}

/// The degree-`m` Hermite polynomial tensor `h_m(x)`.
pub fn hermite_tensor_of_point(x: &DVector<f64>, order: usize, guard: usize) -> Result<DenseTensor> {
    let dim = x.len();
    let plan = point_plan(dim, order, guard)?;
    let mut out = DenseTensor::zeros(dim, order, guard)?;
    let data = out.data_mut();
    for (flat, alive) in plan.terms.iter().enumerate() {
        let mut acc = 0.0;
        for (sign, coords) in alive {
            let mut prod = *sign;
            for &c in coords {
                prod *= x[c];
            }
            acc += prod;
        }
        data[flat] = acc;
    }
    Ok(out)
}

/// `E[h_m(G)]` for `G ~ N(mu, cov)`: pairs contribute `(cov - I)`, singletons
/// contribute `mu`.
pub fn expected_hermite(c: &GaussianComponent, order: usize, guard: usize) -> Result<DenseTensor> {
    let d = c.dim();
    let shifted = c.cov() - DMatrix::<f64>::identity(d, d);
    partition_moment_tensor(c.mean(), &shifted, order, guard)
}

/// `E[h_m(M)]` of a mixture: the weighted sum of per-component tensors.
pub fn expected_hermite_mixture(
    m: &GaussianMixture,
    order: usize,
    guard: usize,
) -> Result<DenseTensor> {
    let mut out = DenseTensor::zeros(m.dim(), order, guard)?;
    for (w, c) in m.weights().iter().zip(m.components()) {
        out.axpy(*w, &expected_hermite(c, order, guard)?)?;
    }
    Ok(out)
}

/// Raw moment tensor `E[G^{(x)m}]` of one Gaussian component: pairs
/// contribute `cov`, singletons `mu`.
pub fn raw_moment_tensor(c: &GaussianComponent, order: usize, guard: usize) -> Result<DenseTensor> {
    partition_moment_tensor(c.mean(), c.cov(), order, guard)
}

fn partition_moment_tensor(
    mean: &DVector<f64>,
    pair_matrix: &DMatrix<f64>,
    order: usize,
    guard: usize,
) -> Result<DenseTensor> {
    let dim = mean.len();
    let partitions = pair_partitions(order);
    let mut out = DenseTensor::zeros(dim, order, guard)?;
    let mut idx = vec![0usize; order];
    for flat in 0..out.len() {
        out.unflatten(flat, &mut idx);
        let mut acc = 0.0;
        for part in partitions.iter() {
            let mut prod = 1.0;
            for &(a, b) in &part.pairs {
                prod *= pair_matrix[(idx[a], idx[b])];
                if prod == 0.0 {
                    break;
                }
            }
            if prod != 0.0 {
                for &s in &part.singles {
                    prod *= mean[idx[s]];
                }
            }
            acc += prod;
        }
        out.data_mut()[flat] = acc;
    }
    Ok(out)
}

/// Hermite moment tensors `H_0..H_m` from raw moment tensors `R_0..R_m`:
/// pairs contribute `-I`, singleton blocks the lower-order raw tensor. The
/// inverse relation is identical with `+I` pairs; the composition is exact.
pub fn hermite_from_raw(raw: &[DenseTensor]) -> Result<Vec<DenseTensor>> {
    change_basis(raw, -1.0)
}

/// Raw moment tensors from Hermite moment tensors (exact inverse of
/// [`hermite_from_raw`]).
pub fn raw_from_hermite(hermite: &[DenseTensor]) -> Result<Vec<DenseTensor>> {
    change_basis(hermite, 1.0)
}

fn change_basis(input: &[DenseTensor], pair_sign: f64) -> Result<Vec<DenseTensor>> {
    if input.is_empty() {
        return Err(Error::Empty("need tensors of orders 0..=m".into()));
    }
    let dim = input[0].dim();
    for (j, t) in input.iter().enumerate() {
        if t.order() != j {
            return Err(Error::invalid(format!(
                "expected order {j} at position {j}, got {}",
                t.order()
            )));
        }
        if t.dim() != dim && t.order() > 0 {
            return Err(Error::invalid("tensor dimensions differ"));
        }
    }
    let mut out = Vec::with_capacity(input.len());
    let mut idx = Vec::new();
    for (m, _) in input.iter().enumerate() {
        let partitions = pair_partitions(m);
        let mut t = DenseTensor::zeros(dim, m, usize::MAX)?;
        idx.resize(m, 0);
        for flat in 0..t.len() {
            t.unflatten(flat, &mut idx);
            let mut acc = 0.0;
            'parts: for part in partitions.iter() {
                let mut prod = 1.0;
                for &(a, b) in &part.pairs {
                    if idx[a] != idx[b] {
                        continue 'parts;
                    }
                    prod *= pair_sign;
                }
                // Remaining factor: the lower-order tensor at the singleton
                // coordinates (order 0 tensors are scalars).
                let lower = &input[part.singles.len()];
                let mut lidx = 0usize;
                for &s in &part.singles {
                    lidx = lidx * dim + idx[s];
                }
                acc += prod * lower.data()[lidx];
            }
            t.data_mut()[flat] = acc;
        }
        out.push(t);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hermite::DEFAULT_ENTRY_GUARD as GUARD;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn comp(mean: Vec<f64>, cov: DMatrix<f64>) -> GaussianComponent {
        GaussianComponent::new(DVector::from_vec(mean), cov).unwrap()
    }

    /// Closed-form probabilists' Hermite polynomials as the oracle.
    fn he(m: usize, x: f64) -> f64 {
        match m {
            0 => 1.0,
            1 => x,
            2 => x * x - 1.0,
            3 => x.powi(3) - 3.0 * x,
            4 => x.powi(4) - 6.0 * x * x + 3.0,
            5 => x.powi(5) - 10.0 * x.powi(3) + 15.0 * x,
            6 => x.powi(6) - 15.0 * x.powi(4) + 45.0 * x * x - 15.0,
            _ => unimplemented!(),
        }
    }

    #[test]
    fn point_tensor_order_one_is_x() {
        let x = DVector::from_vec(vec![1.5, -2.0]);
        let t = hermite_tensor_of_point(&x, 1, GUARD).unwrap();
        assert_eq!(t.data(), &[1.5, -2.0]);
    }

    #[test]
    fn point_tensor_order_two_matches_outer_minus_identity() {
        let x = DVector::from_vec(vec![1.0, 0.0]);
        let t = hermite_tensor_of_point(&x, 2, GUARD).unwrap();
        let m = t.as_matrix().unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, -1.0]);
        assert_eq!(m, expected);
    }

    #[test]
    fn point_tensor_univariate_matches_closed_form() {
        for m in 0..=6usize {
            for &xv in &[-2.0, -0.3, 0.0, 0.7, 2.0] {
                let t = hermite_tensor_of_point(&DVector::from_vec(vec![xv]), m, GUARD).unwrap();
                assert_relative_eq!(t.data()[0], he(m, xv), epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn expected_hermite_standard_gaussian_vanishes() {
        let c = GaussianComponent::standard(3);
        for m in 1..=4 {
            let t = expected_hermite(&c, m, GUARD).unwrap();
            assert_eq!(t.norm(), 0.0);
        }
    }

    #[test]
    fn expected_hermite_mean_square() {
        let c = comp(vec![1.0], DMatrix::from_vec(1, 1, vec![1.0]));
        let t = expected_hermite(&c, 2, GUARD).unwrap();
        assert_relative_eq!(t.data()[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn expected_hermite_variance_fourth_order() {
        // E[He_4(N(0, 1+s))] = 3 s^2.
        let s = 0.37;
        let c = comp(vec![0.0], DMatrix::from_vec(1, 1, vec![1.0 + s]));
        let t = expected_hermite(&c, 4, GUARD).unwrap();
        assert_relative_eq!(t.data()[0], 3.0 * s * s, epsilon = 1e-12);
    }

    #[test]
    fn expected_hermite_matches_quadrature_univariate() {
        // Simpson quadrature of He_m against N(mu, var) as the oracle.
        let mu = 0.6;
        let var = 1.8;
        let c = comp(vec![mu], DMatrix::from_vec(1, 1, vec![var]));
        for m in 1..=6usize {
            let t = expected_hermite(&c, m, GUARD).unwrap();
            let lo = mu - 14.0 * var.sqrt();
            let hi = mu + 14.0 * var.sqrt();
            let n = 40_000;
            let h = (hi - lo) / n as f64;
            let mut total = 0.0;
            for i in 0..=n {
                let w = if i == 0 || i == n {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                let x = lo + i as f64 * h;
                let pdf = (-0.5 * (x - mu) * (x - mu) / var).exp()
                    / (2.0 * std::f64::consts::PI * var).sqrt();
                total += w * he(m, x) * pdf;
            }
            total *= h / 3.0;
            assert_relative_eq!(t.data()[0], total, epsilon = 1e-8, max_relative = 1e-6);
        }
    }

    #[test]
    fn empirical_hermite_mean_concentrates() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.4, 0.3, 0.3, 0.9]);
        let c = comp(vec![0.5, -0.2], cov.clone());
        let mixture = GaussianMixture::single(c.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 100_000;
        let (points, _) = crate::model::sample_mixture(&mixture, n, &mut rng);
        let m = 3usize;
        let mut acc = DenseTensor::zeros(2, m, GUARD).unwrap();
        for p in &points {
            acc.axpy(1.0, &hermite_tensor_of_point(p, m, GUARD).unwrap())
                .unwrap();
        }
        acc.scale(1.0 / n as f64);
        let expected = expected_hermite(&c, m, GUARD).unwrap();
        acc.axpy(-1.0, &expected).unwrap();
        let s_norm = (cov - DMatrix::<f64>::identity(2, 2)).norm();
        let mu_norm = (0.5f64 * 0.5 + 0.2 * 0.2).sqrt();
        let budget =
            5.0 * (m as f64 * (1.0 + s_norm + mu_norm)).powi(m as i32) / (n as f64).sqrt();
        assert!(acc.norm() < budget, "{} vs {}", acc.norm(), budget);
    }

    #[test]
    fn mixture_expected_hermite_is_linear() {
        let c1 = comp(vec![0.3, 0.0], DMatrix::identity(2, 2) * 1.2);
        let c2 = comp(vec![-0.5, 0.7], DMatrix::identity(2, 2) * 0.8);
        let m = GaussianMixture::new(vec![0.4, 0.6], vec![c1.clone(), c2.clone()]).unwrap();
        let t = expected_hermite_mixture(&m, 3, GUARD).unwrap();
        let mut manual = expected_hermite(&c1, 3, GUARD).unwrap();
        manual.scale(0.4);
        manual
            .axpy(0.6, &expected_hermite(&c2, 3, GUARD).unwrap())
            .unwrap();
        for (a, b) in t.data().iter().zip(manual.data()) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn raw_hermite_roundtrip_exact_on_random_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let dim = 3;
        let mut tensors = Vec::new();
        for m in 0..=4usize {
            let mut t = DenseTensor::zeros(dim, m, GUARD).unwrap();
            for v in t.data_mut() {
                *v = rng.gen_range(-1.0..1.0);
            }
            tensors.push(t);
        }
        let hermite = hermite_from_raw(&tensors).unwrap();
        let back = raw_from_hermite(&hermite).unwrap();
        for (orig, rec) in tensors.iter().zip(&back) {
            for (a, b) in orig.data().iter().zip(rec.data()) {
                assert_relative_eq!(a, b, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn standard_gaussian_raw_moments_have_zero_hermite() {
        let c = GaussianComponent::standard(2);
        let raw: Vec<DenseTensor> = (0..=4)
            .map(|m| raw_moment_tensor(&c, m, GUARD).unwrap())
            .collect();
        let hermite = hermite_from_raw(&raw).unwrap();
        for t in hermite.iter().skip(1) {
            assert!(t.norm() < 1e-12, "order {} norm {}", t.order(), t.norm());
        }
    }

    #[test]
    fn univariate_second_hermite_moment_formula() {
        // raw (1, mu, mu^2 + var) -> H_2 = mu^2 + var - 1.
        let mu = 0.9;
        let var = 1.7;
        let c = comp(vec![mu], DMatrix::from_vec(1, 1, vec![var]));
        let raw: Vec<DenseTensor> = (0..=2)
            .map(|m| raw_moment_tensor(&c, m, GUARD).unwrap())
            .collect();
        assert_relative_eq!(raw[2].data()[0], mu * mu + var, epsilon = 1e-12);
        let hermite = hermite_from_raw(&raw).unwrap();
        assert_relative_eq!(hermite[2].data()[0], mu * mu + var - 1.0, epsilon = 1e-12);
    }

    #[test]
    fn roundtrip_rejects_wrong_orders() {
        let t0 = DenseTensor::zeros(2, 0, GUARD).unwrap();
        let t2 = DenseTensor::zeros(2, 2, GUARD).unwrap();
        assert!(hermite_from_raw(&[t0, t2]).is_err());
    }
}
