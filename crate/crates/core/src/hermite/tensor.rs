//! Dense tensor storage, flattening, symmetrization, and mode collapsing.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Default cap on dense tensor entry counts.
pub const DEFAULT_ENTRY_GUARD: usize = 100_000_000;

/// A dense order-`m` tensor over `R^d`, row-major multi-index layout
/// (the first index varies slowest). Order 0 is a scalar.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    dim: usize,
    order: usize,
    data: Vec<f64>,
}

impl DenseTensor {
    /// Zero tensor, enforcing the entry-count guard.
    pub fn zeros(dim: usize, order: usize, guard: usize) -> Result<Self> {
        let len = checked_len(dim, order, guard)?;
        Ok(DenseTensor {
            dim,
            order,
            data: vec![0.0; len],
        })
    }

    pub fn from_data(dim: usize, order: usize, data: Vec<f64>) -> Result<Self> {
        let len = checked_len(dim, order, usize::MAX)?;
        if data.len() != len {
            return Err(Error::DimensionMismatch {
                expected: len,
                got: data.len(),
                context: "tensor data length".into(),
            });
        }
        Ok(DenseTensor { dim, order, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Flat offset of a multi-index.
    pub fn flat_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.order);
        let mut f = 0;
        for &i in idx {
            debug_assert!(i < self.dim);
            f = f * self.dim + i;
        }
        f
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.flat_index(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: f64) {
        let f = self.flat_index(idx);
        self.data[f] = value;
    }

    /// Writes the multi-index of flat offset `flat` into `idx`.
    pub fn unflatten(&self, mut flat: usize, idx: &mut [usize]) {
        for slot in idx.iter_mut().rev() {
            *slot = flat % self.dim;
            flat /= self.dim;
        }
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    /// `self += s * other`.
    pub fn axpy(&mut self, s: f64, other: &DenseTensor) -> Result<()> {
        if self.dim != other.dim || self.order != other.order {
            return Err(Error::invalid("tensor shape mismatch in axpy"));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
        Ok(())
    }

    /// Average over all `m!` permutations of the index positions.
    pub fn symmetrized(&self) -> DenseTensor {
        let m = self.order;
        if m <= 1 {
            return self.clone();
        }
        let perms = permutations(m);
        let scale = 1.0 / perms.len() as f64;
        let mut out = vec![0.0; self.data.len()];
        let mut idx = vec![0usize; m];
        let mut pidx = vec![0usize; m];
        for (flat, slot) in out.iter_mut().enumerate() {
            self.unflatten(flat, &mut idx);
            let mut acc = 0.0;
            for perm in &perms {
                for (j, &p) in perm.iter().enumerate() {
                    pidx[j] = idx[p];
                }
                acc += self.data[self.flat_index_of(&pidx)];
            }
            *slot = acc * scale;
        }
        DenseTensor {
            dim: self.dim,
            order: m,
            data: out,
        }
    }

    fn flat_index_of(&self, idx: &[usize]) -> usize {
        let mut f = 0;
        for &i in idx {
            f = f * self.dim + i;
        }
        f
    }

    /// Mode-1 unfolding into a `d x d^{m-1}` matrix. The layout is such that
    /// flattening a reshaped tensor is the identity.
    pub fn flatten(&self) -> FlatTensor {
        let rows = self.dim.max(1);
        let cols = if self.order == 0 {
            1
        } else {
            self.data.len() / self.dim
        };
        let matrix = DMatrix::from_fn(rows.min(self.data.len()), cols, |r, c| {
            self.data[r * cols + c]
        });
        FlatTensor { matrix }
    }

    /// Matrix view of an order-2 tensor.
    pub fn as_matrix(&self) -> Result<DMatrix<f64>> {
        if self.order != 2 {
            return Err(Error::invalid("as_matrix needs an order-2 tensor"));
        }
        Ok(DMatrix::from_fn(self.dim, self.dim, |r, c| {
            self.data[r * self.dim + c]
        }))
    }

    /// Order-2 tensor from a square matrix.
    pub fn from_matrix(m: &DMatrix<f64>) -> DenseTensor {
        let d = m.nrows();
        let mut data = Vec::with_capacity(d * d);
        for r in 0..d {
            for c in 0..d {
                data.push(m[(r, c)]);
            }
        }
        DenseTensor {
            dim: d,
            order: 2,
            data,
        }
    }
}

/// The natural `d x d^{m-1}` flattening of a dense tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatTensor {
    matrix: DMatrix<f64>,
}

impl FlatTensor {
    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn norm(&self) -> f64 {
        self.matrix.norm()
    }

    /// Left singular pairs `(sigma_i, u_i)` sorted by descending singular
    /// value, via the eigendecomposition of the small Gram matrix `A A^T`.
    pub fn left_singular_pairs(&self) -> Vec<(f64, DVector<f64>)> {
        let gram = &self.matrix * self.matrix.transpose();
        let (vals, vecs) = crate::linalg::sym_eigen_sorted(&gram);
        vals.iter()
            .enumerate()
            .map(|(i, &v)| (v.max(0.0).sqrt(), vecs.column(i).into_owned()))
            .collect()
    }
}

/// `S(r, s) = sum_{g,h} t(r, s, g, h) x(g) y(h)` for an order-4 tensor.
pub fn collapse_modes(t: &DenseTensor, x: &DVector<f64>, y: &DVector<f64>) -> Result<DMatrix<f64>> {
    if t.order() != 4 {
        return Err(Error::invalid("collapse_modes needs an order-4 tensor"));
    }
    let d = t.dim();
    if x.len() != d || y.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: x.len().max(y.len()),
            context: "collapse vectors".into(),
        });
    }
    let data = t.data();
    let mut out = DMatrix::zeros(d, d);
    let d2 = d * d;
    let d3 = d2 * d;
    for r in 0..d {
        for s in 0..d {
            let base = r * d3 + s * d2;
            let mut acc = 0.0;
            for g in 0..d {
                let row = base + g * d;
                let xg = x[g];
                if xg == 0.0 {
                    continue;
                }
                let mut inner = 0.0;
                for h in 0..d {
                    inner += data[row + h] * y[h];
                }
                acc += xg * inner;
            }
            out[(r, s)] = acc;
        }
    }
    Ok(out)
}

fn checked_len(dim: usize, order: usize, guard: usize) -> Result<usize> {
    let mut len: usize = 1;
    for _ in 0..order {
        len = len.checked_mul(dim).ok_or(Error::MemoryGuard {
            required: usize::MAX,
            guard,
        })?;
    }
    if len > guard {
        return Err(Error::MemoryGuard {
            required: len,
            guard,
        });
    }
    Ok(len)
}

fn permutations(m: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut items: Vec<usize> = (0..m).collect();
    heap_permute(&mut items, m, &mut out);
    out
}

fn heap_permute(items: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
    if k == 1 {
        out.push(items.clone());
        return;
    }
    for i in 0..k {
        heap_permute(items, k - 1, out);
        if k % 2 == 0 {
            items.swap(i, k - 1);
        } else {
            items.swap(0, k - 1);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(dim: usize, order: usize, seed: u64) -> DenseTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = DenseTensor::zeros(dim, order, DEFAULT_ENTRY_GUARD).unwrap();
        for v in t.data_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        t
    }

    #[test]
    fn guard_rejects_oversized() {
        let err = DenseTensor::zeros(10, 9, 100_000_000).unwrap_err();
        match err {
            Error::MemoryGuard { required, guard } => {
                assert_eq!(required, 1_000_000_000);
                assert_eq!(guard, 100_000_000);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn symmetrize_idempotent_and_contractive() {
        let t = random_tensor(3, 3, 1);
        let s1 = t.symmetrized();
        let s2 = s1.symmetrized();
        for (a, b) in s1.data().iter().zip(s2.data()) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
        assert!(s1.norm() <= t.norm() + 1e-12);
    }

    #[test]
    fn symmetrize_order2_average() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 3.0, 0.0]);
        let t = DenseTensor::from_matrix(&m);
        let s = t.symmetrized().as_matrix().unwrap();
        assert_eq!(s[(0, 1)], 2.0);
        assert_eq!(s[(1, 0)], 2.0);
    }

    #[test]
    fn flatten_is_isometry_and_identity_for_matrices() {
        let t = random_tensor(4, 3, 2);
        let f = t.flatten();
        assert_relative_eq!(f.norm(), t.norm(), epsilon = 1e-12);
        let m = random_tensor(5, 2, 3);
        let f2 = m.flatten();
        assert_eq!(f2.matrix(), &m.as_matrix().unwrap());
    }

    #[test]
    fn flatten_rank_one_cube() {
        let a = DVector::from_vec(vec![1.0, -2.0]);
        let mut t = DenseTensor::zeros(2, 3, DEFAULT_ENTRY_GUARD).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    t.set(&[i, j, k], a[i] * a[j] * a[k]);
                }
            }
        }
        let pairs = t.flatten().left_singular_pairs();
        assert!(pairs[0].0 > 1e-9);
        assert!(pairs[1].0 < 1e-9, "rank should be 1");
    }

    #[test]
    fn collapse_matches_brute_force() {
        let t = random_tensor(3, 4, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = DVector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0));
        let y = DVector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0));
        let fast = collapse_modes(&t, &x, &y).unwrap();
        for r in 0..3 {
            for s in 0..3 {
                let mut acc = 0.0;
                for g in 0..3 {
                    for h in 0..3 {
                        acc += t.get(&[r, s, g, h]) * x[g] * y[h];
                    }
                }
                assert_relative_eq!(fast[(r, s)], acc, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn collapse_rank_one_tensor() {
        // t = a (x) b (x) c (x) e collapses to (c.x)(e.y) a b^T.
        let a = DVector::from_vec(vec![1.0, 2.0]);
        let b = DVector::from_vec(vec![-1.0, 0.5]);
        let c = DVector::from_vec(vec![0.3, 0.7]);
        let e = DVector::from_vec(vec![2.0, -1.0]);
        let mut t = DenseTensor::zeros(2, 4, DEFAULT_ENTRY_GUARD).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                for g in 0..2 {
                    for h in 0..2 {
                        t.set(&[i, j, g, h], a[i] * b[j] * c[g] * e[h]);
                    }
                }
            }
        }
        let x = DVector::from_vec(vec![0.4, -1.1]);
        let y = DVector::from_vec(vec![0.9, 0.2]);
        let s = collapse_modes(&t, &x, &y).unwrap();
        let scale = c.dot(&x) * e.dot(&y);
        for i in 0..2 {
            for j in 0..2 {
                assert_relative_eq!(s[(i, j)], scale * a[i] * b[j], epsilon = 1e-12);
            }
        }
        let zero = collapse_modes(&t, &DVector::zeros(2), &y).unwrap();
        assert_eq!(zero.abs().max(), 0.0);
    }

    #[test]
    fn collapse_linear_in_tensor() {
        let t = random_tensor(2, 4, 6);
        let mut t2 = t.clone();
        t2.scale(2.0);
        let x = DVector::from_vec(vec![0.2, 0.8]);
        let y = DVector::from_vec(vec![-0.5, 1.0]);
        let s1 = collapse_modes(&t, &x, &y).unwrap();
        let s2 = collapse_modes(&t2, &x, &y).unwrap();
        assert_relative_eq!((s2 - &s1 * 2.0).abs().max(), 0.0, epsilon = 1e-12);
    }
}
