//! Symmetric positive definite matrices and their factorizations.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix, CsrMatrix};

use crate::error::{Error, Result};

/// An SPD operator stored densely (subdomain and coarse problems) or in CSR
/// form (the full problem).
#[derive(Debug, Clone)]
pub enum SpdMatrix {
    Dense(DMatrix<f64>),
    Sparse(CsrMatrix<f64>),
}

impl SpdMatrix {
    pub fn dim(&self) -> usize {
        match self {
            SpdMatrix::Dense(a) => a.nrows(),
            SpdMatrix::Sparse(a) => a.nrows(),
        }
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            SpdMatrix::Dense(a) => a * x,
            SpdMatrix::Sparse(a) => csr_mul(a, x),
        }
    }

    pub fn quad_form(&self, x: &DVector<f64>) -> f64 {
        x.dot(&self.mul_vec(x))
    }

    /// `‖x‖_A`.
    pub fn energy_norm(&self, x: &DVector<f64>) -> f64 {
        self.quad_form(x).max(0.0).sqrt()
    }

    pub fn diagonal(&self) -> DVector<f64> {
        match self {
            SpdMatrix::Dense(a) => a.diagonal(),
            SpdMatrix::Sparse(a) => {
                let mut d = DVector::zeros(a.nrows());
                for (i, row) in a.row_iter().enumerate() {
                    if let Some(pos) = row.col_indices().iter().position(|&c| c == i) {
                        d[i] = row.values()[pos];
                    }
                }
                d
            }
        }
    }

    pub fn factor(&self) -> Result<SpdFactor> {
        let all: Vec<usize> = (0..self.dim()).collect();
        self.principal_factor(&all)
    }

    /// Factorization of the principal submatrix on the sorted index set `idx`.
    pub fn principal_factor(&self, idx: &[usize]) -> Result<SpdFactor> {
        if idx.is_empty() {
            return Ok(SpdFactor::Empty);
        }
        match self {
            SpdMatrix::Dense(a) => {
                let sub = dense_principal(a, idx);
                Cholesky::new(sub).map(SpdFactor::Dense).ok_or(Error::NotPositiveDefinite)
            }
            SpdMatrix::Sparse(a) => {
                let sub = csr_principal(a, idx);
                // symmetric, so the CSR arrays are also a valid CSC layout
                let (offsets, indices, values) = sub.disassemble();
                let csc = CscMatrix::try_from_csc_data(idx.len(), idx.len(), offsets, indices, values)
                    .expect("principal submatrix has valid CSC layout");
                CscCholesky::factor(&csc).map(SpdFactor::Sparse).map_err(|_| Error::NotPositiveDefinite)
            }
        }
    }
}

pub enum SpdFactor {
    Empty,
    Dense(Cholesky<f64, Dyn>),
    Sparse(CscCholesky<f64>),
}

impl SpdFactor {
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        match self {
            SpdFactor::Empty => DVector::zeros(0),
            SpdFactor::Dense(c) => c.solve(b),
            SpdFactor::Sparse(c) => {
                let x = c.solve(b);
                DVector::from_column_slice(x.as_slice())
            }
        }
    }
}

impl std::fmt::Debug for SpdFactor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SpdFactor::Empty => write!(f, "SpdFactor::Empty"),
            SpdFactor::Dense(c) => write!(f, "SpdFactor::Dense({})", c.l_dirty().nrows()),
            SpdFactor::Sparse(c) => write!(f, "SpdFactor::Sparse(nnz(L) = {})", c.l().nnz()),
        }
    }
}

pub(crate) fn csr_mul(a: &CsrMatrix<f64>, x: &DVector<f64>) -> DVector<f64> {
    let mut y = DVector::zeros(a.nrows());
    for (i, row) in a.row_iter().enumerate() {
        y[i] = row.col_indices().iter().zip(row.values()).map(|(&j, &v)| v * x[j]).sum();
    }
    y
}

/// `Aᵀ x`.
pub(crate) fn csr_mul_transpose(a: &CsrMatrix<f64>, x: &DVector<f64>) -> DVector<f64> {
    let mut y = DVector::zeros(a.ncols());
    for (i, row) in a.row_iter().enumerate() {
        let xi = x[i];
        if xi != 0.0 {
            for (&j, &v) in row.col_indices().iter().zip(row.values()) {
                y[j] += v * xi;
            }
        }
    }
    y
}

pub(crate) fn dense_principal(a: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |r, c| a[(idx[r], idx[c])])
}

pub(crate) fn csr_principal(a: &CsrMatrix<f64>, idx: &[usize]) -> CsrMatrix<f64> {
    let mut map = vec![usize::MAX; a.ncols()];
    for (new, &old) in idx.iter().enumerate() {
        map[old] = new;
    }
    let mut offsets = Vec::with_capacity(idx.len() + 1);
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    offsets.push(0);
    for &old in idx {
        let row = a.row(old);
        for (&c, &v) in row.col_indices().iter().zip(row.values()) {
            if map[c] != usize::MAX {
                cols.push(map[c]);
                vals.push(v);
            }
        }
        offsets.push(cols.len());
    }
    CsrMatrix::try_from_csr_data(idx.len(), idx.len(), offsets, cols, vals)
        .expect("column order is preserved by the monotone index map")
}

pub(crate) fn csr_to_dense_principal(a: &CsrMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    let mut map = vec![usize::MAX; a.ncols()];
    for (new, &old) in idx.iter().enumerate() {
        map[old] = new;
    }
    let mut out = DMatrix::zeros(idx.len(), idx.len());
    for (r, &old) in idx.iter().enumerate() {
        let row = a.row(old);
        for (&c, &v) in row.col_indices().iter().zip(row.values()) {
            if map[c] != usize::MAX {
                out[(r, map[c])] = v;
            }
        }
    }
    out
}

pub(crate) fn csr_from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> CsrMatrix<f64> {
    let mut coo = CooMatrix::new(nrows, ncols);
    for &(r, c, v) in triplets {
        coo.push(r, c, v);
    }
    CsrMatrix::from(&coo)
}

/// Largest eigenvalue estimate of a symmetric positive semidefinite operator
/// by `iters` steps of the power method (Rayleigh quotient of the last iterate).
pub fn power_iteration(dim: usize, iters: usize, apply: impl Fn(&DVector<f64>) -> DVector<f64>) -> f64 {
    if dim == 0 {
        return 0.0;
    }
    // deterministic start with components along every eigenvector in practice
    let mut x = DVector::from_fn(dim, |i, _| 1.0 + 0.37 * ((i * 7919) % 101) as f64 / 101.0);
    x /= x.norm();
    let mut lambda = 0.0;
    for _ in 0..iters {
        let y = apply(&x);
        lambda = x.dot(&y);
        let norm = y.norm();
        if norm == 0.0 {
            return 0.0;
        }
        x = y / norm;
    }
    lambda.max(apply(&x).dot(&x))
}

/// Jacobi-preconditioned conjugate gradients: `‖A x − rhs‖ ≤ tol ‖rhs‖`.
pub fn spd_solve(a: &SpdMatrix, rhs: &DVector<f64>, tol: f64) -> Result<DVector<f64>> {
    let n = a.dim();
    if rhs.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: rhs.len() });
    }
    let max_iter = 10 * n + 100;
    let target = tol * rhs.norm();
    let mut x = DVector::zeros(n);
    if target == 0.0 {
        return Ok(x);
    }
    let inv_diag = a.diagonal().map(|d| if d > 0.0 { 1.0 / d } else { 1.0 });
    let mut r = rhs.clone();
    let mut z = r.component_mul(&inv_diag);
    let mut p = z.clone();
    let mut rz = r.dot(&z);
    for _ in 0..max_iter {
        if r.norm() <= target {
            return Ok(x);
        }
        let ap = a.mul_vec(&p);
        let pap = p.dot(&ap);
        if !(pap > 0.0) {
            return Err(Error::NotPositiveDefinite);
        }
        let alpha = rz / pap;
        x.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &ap, 1.0);
        z = r.component_mul(&inv_diag);
        let rz_new = r.dot(&z);
        p = &z + (rz_new / rz) * &p;
        rz = rz_new;
    }
    let residual = (rhs - a.mul_vec(&x)).norm() / rhs.norm();
    if residual <= tol {
        Ok(x)
    } else {
        Err(Error::NonConvergence { solver: "conjugate gradients", iterations: max_iter, residual })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_spd(n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
        let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        &m * m.transpose() + DMatrix::identity(n, n) * (n as f64 * 0.1)
    }

    #[test]
    fn identity_and_diagonal() {
        let r = DVector::from_vec(vec![1.0, -2.0, 3.0]);
        let a = SpdMatrix::Dense(DMatrix::identity(3, 3));
        assert!((spd_solve(&a, &r, 1e-14).unwrap() - &r).norm() < 1e-14);

        let d = SpdMatrix::Dense(DMatrix::from_diagonal(&DVector::from_fn(5, |i, _| (i + 1) as f64)));
        let x = spd_solve(&d, &DVector::from_element(5, 1.0), 1e-14).unwrap();
        for i in 0..5 {
            assert!((x[i] - 1.0 / (i + 1) as f64).abs() < 1e-14);
        }
    }

    #[test]
    fn random_spd_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_spd(50, &mut rng);
        let rhs = DVector::from_fn(50, |_, _| rng.random_range(-1.0..1.0));
        let m = SpdMatrix::Dense(a.clone());
        let x = spd_solve(&m, &rhs, 1e-10).unwrap();
        assert!((&a * &x - &rhs).norm() <= 1e-10 * rhs.norm());
    }

    #[test]
    fn dense_and_sparse_factors_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_spd(12, &mut rng);
        let mut trip = Vec::new();
        for i in 0..12 {
            for j in 0..12 {
                trip.push((i, j, a[(i, j)]));
            }
        }
        let sparse = SpdMatrix::Sparse(csr_from_triplets(12, 12, &trip));
        let dense = SpdMatrix::Dense(a.clone());
        let idx = [0, 2, 3, 7, 11];
        let b = DVector::from_fn(5, |i, _| i as f64 - 1.5);
        let xd = dense.principal_factor(&idx).unwrap().solve(&b);
        let xs = sparse.principal_factor(&idx).unwrap().solve(&b);
        assert!((xd - xs).norm() < 1e-12);
        assert!((dense.mul_vec(&DVector::from_element(12, 1.0)) - sparse.mul_vec(&DVector::from_element(12, 1.0))).norm() < 1e-12);
    }

    #[test]
    fn power_iteration_bounds_spectrum() {
        let d = DMatrix::from_diagonal(&DVector::from_fn(20, |i, _| 1.0 + i as f64));
        let l = power_iteration(20, 200, |x| &d * x);
        assert!((l - 20.0).abs() < 1e-3);
    }
}
