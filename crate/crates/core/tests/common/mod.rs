//! Brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::{CooMatrix, CsrMatrix};
use rand::Rng;

pub fn random_spd(n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &m * m.transpose() + DMatrix::identity(n, n) * (0.1 * n as f64)
}

pub fn dense_to_csr(a: &DMatrix<f64>) -> CsrMatrix<f64> {
    let mut coo = CooMatrix::new(a.nrows(), a.ncols());
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            if a[(i, j)] != 0.0 {
                coo.push(i, j, a[(i, j)]);
            }
        }
    }
    CsrMatrix::from(&coo)
}

pub fn csr_to_dense(a: &CsrMatrix<f64>) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(a.nrows(), a.ncols());
    for (i, j, v) in a.triplet_iter() {
        d[(i, j)] += *v;
    }
    d
}

pub fn energy_norm(a: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    x.dot(&(a * x)).max(0.0).sqrt()
}

/// `min ½ wᵀA w − gᵀw` s.t. `w ≤ upper` by trying every active set.
pub fn enumerate_bounds(a: &DMatrix<f64>, g: &DVector<f64>, upper: &DVector<f64>) -> DVector<f64> {
    let n = g.len();
    let eye = DMatrix::identity(n, n);
    let rows: Vec<usize> = (0..n).filter(|&i| upper[i].is_finite()).collect();
    let gmat = DMatrix::from_fn(rows.len(), n, |r, c| eye[(rows[r], c)]);
    let c = DVector::from_iterator(rows.len(), rows.iter().map(|&i| upper[i]));
    enumerate_constraints(a, g, &gmat, &c).expect("a strictly convex QP has a KKT point")
}

/// `min ½ wᵀA w − gᵀw` s.t. `G w ≤ c` by trying every set of at most
/// `dim` active rows and keeping the first KKT point.
pub fn enumerate_constraints(a: &DMatrix<f64>, g: &DVector<f64>, gmat: &DMatrix<f64>, c: &DVector<f64>) -> Option<DVector<f64>> {
    let n = g.len();
    let m = gmat.nrows();
    let scale = 1.0 + c.amax() + g.amax();
    let mut active = Vec::new();
    search(a, g, gmat, c, n, m, 0, &mut active, 1e-10 * scale)
}

#[allow(clippy::too_many_arguments)]
fn search(
    a: &DMatrix<f64>,
    g: &DVector<f64>,
    gmat: &DMatrix<f64>,
    c: &DVector<f64>,
    n: usize,
    m: usize,
    start: usize,
    active: &mut Vec<usize>,
    tol: f64,
) -> Option<DVector<f64>> {
    if let Some(w) = kkt_point(a, g, gmat, c, active, tol) {
        return Some(w);
    }
    if active.len() == n {
        return None;
    }
    for r in start..m {
        active.push(r);
        if let Some(w) = search(a, g, gmat, c, n, m, r + 1, active, tol) {
            return Some(w);
        }
        active.pop();
    }
    None
}

fn kkt_point(a: &DMatrix<f64>, g: &DVector<f64>, gmat: &DMatrix<f64>, c: &DVector<f64>, active: &[usize], tol: f64) -> Option<DVector<f64>> {
    let n = g.len();
    let k = active.len();
    let mut kkt = DMatrix::zeros(n + k, n + k);
    kkt.view_mut((0, 0), (n, n)).copy_from(a);
    let mut rhs = DVector::zeros(n + k);
    rhs.rows_mut(0, n).copy_from(g);
    for (r, &row) in active.iter().enumerate() {
        for j in 0..n {
            kkt[(n + r, j)] = gmat[(row, j)];
            kkt[(j, n + r)] = gmat[(row, j)];
        }
        rhs[n + r] = c[row];
    }
    let lu = kkt.lu();
    let sol = lu.solve(&rhs)?;
    if !sol.iter().all(|x| x.is_finite()) {
        return None;
    }
    let w = sol.rows(0, n).into_owned();
    let lambda = sol.rows(n, k);
    if lambda.iter().any(|&l| l < -tol) {
        return None;
    }
    let gw = gmat * &w;
    if (0..gmat.nrows()).any(|i| gw[i] > c[i] + tol) {
        return None;
    }
    Some(w)
}
