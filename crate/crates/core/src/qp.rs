//! Solvers for the constrained quadratic subproblems
//! `min ½ wᵀA w − gᵀw` subject to upper bounds (local spaces) or general
//! rows `G w ≤ c` (coarse space, through its dual).

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use nalgebra_sparse::CsrMatrix;

use crate::error::{Error, Result};
use crate::linalg::{csr_mul, csr_mul_transpose, power_iteration, SpdFactor, SpdMatrix};

/// Bound-constrained QP `min ½ wᵀA w − gᵀw` s.t. `w ≤ upper`.
/// Components with an infinite upper bound are unconstrained.
#[derive(Debug, Clone)]
pub struct BoundQP {
    pub matrix: SpdMatrix,
    pub linear: DVector<f64>,
    pub upper: DVector<f64>,
}

impl BoundQP {
    pub fn new(matrix: SpdMatrix, linear: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        let n = matrix.dim();
        for len in [linear.len(), upper.len()] {
            if len != n {
                return Err(Error::DimensionMismatch { expected: n, got: len });
            }
        }
        if linear.iter().any(|x| !x.is_finite()) || upper.iter().any(|x| x.is_nan() || *x == f64::NEG_INFINITY) {
            return Err(Error::InvalidParameter("QP data must be finite".into()));
        }
        Ok(BoundQP { matrix, linear, upper })
    }

    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    pub fn objective(&self, w: &DVector<f64>) -> f64 {
        0.5 * self.matrix.quad_form(w) - self.linear.dot(w)
    }

    pub fn project(&self, w: &mut DVector<f64>) {
        for (x, &b) in w.iter_mut().zip(self.upper.iter()) {
            *x = x.min(b);
        }
    }

    /// Largest bound violation `max (w − b)⁺`.
    pub fn max_violation(&self, w: &DVector<f64>) -> f64 {
        w.iter().zip(self.upper.iter()).map(|(&x, &b)| (x - b).max(0.0)).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub w: DVector<f64>,
    /// Sorted indices where the bound is active.
    pub active: Vec<usize>,
    /// Multipliers `λ = g − A w`, zero off the active set.
    pub multipliers: DVector<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct PdasOptions {
    /// Relative `A`-norm increment below which a stable active set is accepted.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PdasOptions {
    fn default() -> Self {
        PdasOptions { tol: 1e-12, max_iter: 200 }
    }
}

const FACTOR_CACHE: usize = 4;

/// Reusable factorizations of `A_II` keyed by the inactive set, plus the
/// final active set of the previous solve, which seeds the next one.
#[derive(Debug, Default)]
pub struct PdasWorkspace {
    cache: Vec<(Vec<usize>, SpdFactor)>,
    last_active: Vec<bool>,
}

impl PdasWorkspace {
    pub fn new() -> Self {
        Self::default()
    }

    fn factor(&mut self, a: &SpdMatrix, inactive: &[usize]) -> Result<&SpdFactor> {
        let pos = match self.cache.iter().position(|(k, _)| k == inactive) {
            Some(p) => p,
            None => {
                let f = a.principal_factor(inactive)?;
                if self.cache.len() == FACTOR_CACHE {
                    self.cache.remove(0);
                }
                self.cache.push((inactive.to_vec(), f));
                self.cache.len() - 1
            }
        };
        Ok(&self.cache[pos].1)
    }
}

/// Primal-dual active set method with `c = 1`, started from the bounds that
/// `w0` violates.
pub fn pdas_solve(qp: &BoundQP, w0: &DVector<f64>, tol: f64) -> Result<QpSolution> {
    let opts = PdasOptions { tol, ..Default::default() };
    pdas_solve_with(qp, w0, &opts, &mut PdasWorkspace::new())
}

pub fn pdas_solve_with(qp: &BoundQP, w0: &DVector<f64>, opts: &PdasOptions, ws: &mut PdasWorkspace) -> Result<QpSolution> {
    let n = qp.dim();
    if w0.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: w0.len() });
    }
    let b = &qp.upper;
    let g = &qp.linear;
    let scale = 1.0 + b.iter().filter(|x| x.is_finite()).fold(0.0_f64, |m, x| m.max(x.abs()));
    // hysteresis: enter on violation beyond `eps`, leave on multiplier below `-eps`
    let eps = 1e-14 * scale;
    let seeded = ws.last_active.len() == n;
    let mut active: Vec<bool> =
        (0..n).map(|i| b[i].is_finite() && (w0[i] - b[i] > eps || (seeded && ws.last_active[i]))).collect();
    let mut w = w0.clone();
    let mut lambda = DVector::zeros(n);
    let mut history: Vec<Vec<bool>> = Vec::new();

    for iter in 1..=opts.max_iter {
        let inactive: Vec<usize> = (0..n).filter(|&i| !active[i]).collect();
        let mut next = DVector::zeros(n);
        for i in 0..n {
            if active[i] {
                next[i] = b[i];
            }
        }
        let a_next = qp.matrix.mul_vec(&next);
        let rhs = DVector::from_iterator(inactive.len(), inactive.iter().map(|&i| g[i] - a_next[i]));
        let wi = ws.factor(&qp.matrix, &inactive)?.solve(&rhs);
        for (k, &i) in inactive.iter().enumerate() {
            next[i] = wi[k];
        }
        let residual = g - qp.matrix.mul_vec(&next);
        for i in 0..n {
            lambda[i] = if active[i] { residual[i] } else { 0.0 };
        }

        let increment = qp.matrix.energy_norm(&(&next - &w));
        let norm = qp.matrix.energy_norm(&w);
        w = next;

        let new_active: Vec<bool> =
            (0..n).map(|i| if active[i] { lambda[i] > -eps } else { w[i] - b[i] > eps }).collect();
        if new_active == active || (iter > 1 && increment <= opts.tol * norm && kkt_ok(&w, &lambda, b, eps)) {
            let active_idx = (0..n).filter(|&i| active[i]).collect();
            ws.last_active = active;
            return Ok(QpSolution { w, active: active_idx, multipliers: lambda, iterations: iter });
        }
        if history.contains(&new_active) {
            log::debug!("PDAS revisits an active set at iteration {iter}");
        }
        history.push(std::mem::replace(&mut active, new_active));
    }
    let residual = w.iter().zip(b.iter()).map(|(&x, &bi)| (x - bi).max(0.0)).fold(0.0, f64::max)
        + lambda.iter().map(|l| (-l).max(0.0)).fold(0.0, f64::max);
    Err(Error::NonConvergence { solver: "primal-dual active set", iterations: opts.max_iter, residual })
}

fn kkt_ok(w: &DVector<f64>, lambda: &DVector<f64>, b: &DVector<f64>, eps: f64) -> bool {
    w.iter().zip(b.iter()).all(|(&x, &bi)| x - bi <= eps) && lambda.iter().all(|&l| l >= -eps)
}

#[derive(Debug, Clone, Copy)]
pub struct FbsOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Step `1/L`; estimated by power iteration when absent.
    pub lipschitz: Option<f64>,
}

impl Default for FbsOptions {
    fn default() -> Self {
        FbsOptions { tol: 1e-12, max_iter: 100_000, lipschitz: None }
    }
}

#[derive(Debug, Clone)]
pub struct FbsSolution {
    pub w: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// `L ≥ λ_max(A)`: 50 power iterations with a 5% margin.
pub fn lipschitz_estimate(a: &SpdMatrix) -> f64 {
    1.05 * power_iteration(a.dim(), 50, |x| a.mul_vec(x))
}

/// Projected gradient iteration `w ← Π(w − (A w − g)/L)`.
pub fn fbs_solve(qp: &BoundQP, w0: &DVector<f64>, tol: f64) -> Result<FbsSolution> {
    fbs_solve_with(qp, w0, &FbsOptions { tol, ..Default::default() })
}

pub fn fbs_solve_with(qp: &BoundQP, w0: &DVector<f64>, opts: &FbsOptions) -> Result<FbsSolution> {
    let n = qp.dim();
    if w0.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: w0.len() });
    }
    let l = opts.lipschitz.unwrap_or_else(|| lipschitz_estimate(&qp.matrix));
    let mut w = w0.clone();
    if l <= 0.0 {
        return Ok(FbsSolution { w, iterations: 0, converged: true });
    }
    let mut aw = qp.matrix.mul_vec(&w);
    for iter in 1..=opts.max_iter {
        let mut next = &w - (&aw - &qp.linear) / l;
        qp.project(&mut next);
        let a_next = qp.matrix.mul_vec(&next);
        let diff = &next - &w;
        let increment = diff.dot(&(&a_next - &aw)).max(0.0).sqrt();
        let norm = w.dot(&aw).max(0.0).sqrt();
        w = next;
        aw = a_next;
        if increment <= opts.tol * norm || increment == 0.0 {
            return Ok(FbsSolution { w, iterations: iter, converged: true });
        }
    }
    Ok(FbsSolution { w, iterations: opts.max_iter, converged: false })
}

/// `min ½ wᵀA w − gᵀw` s.t. `G w ≤ c`, solved through its dual
/// `min_{λ ≥ 0} ½ (Gᵀλ − g)ᵀ A⁻¹ (Gᵀλ − g) + cᵀλ`.
pub struct DualQP<'a> {
    pub matrix: &'a DMatrix<f64>,
    pub factor: &'a Cholesky<f64, Dyn>,
    pub constraints: &'a CsrMatrix<f64>,
    pub linear: DVector<f64>,
    pub slack: DVector<f64>,
}

impl DualQP<'_> {
    pub fn primal_objective(&self, w: &DVector<f64>) -> f64 {
        0.5 * w.dot(&(self.matrix * w)) - self.linear.dot(w)
    }

    /// Primal point `w(λ) = A⁻¹(g − Gᵀλ)`.
    pub fn recover(&self, lambda: &DVector<f64>) -> DVector<f64> {
        self.factor.solve(&(&self.linear - csr_mul_transpose(self.constraints, lambda)))
    }

    /// Dual objective value at `λ` (to be minimized).
    pub fn dual_objective(&self, lambda: &DVector<f64>) -> f64 {
        let r = csr_mul_transpose(self.constraints, lambda) - &self.linear;
        0.5 * r.dot(&self.factor.solve(&r)) + self.slack.dot(lambda)
    }

    /// `max (G w − c)⁺`.
    pub fn primal_violation(&self, w: &DVector<f64>) -> f64 {
        let gw = csr_mul(self.constraints, w);
        gw.iter().zip(self.slack.iter()).map(|(&a, &c)| (a - c).max(0.0)).fold(0.0, f64::max)
    }

    /// `λ_max(G A⁻¹ Gᵀ)` with a 5% margin.
    pub fn lipschitz(&self) -> f64 {
        let g = self.constraints;
        1.05 * power_iteration(g.nrows(), 50, |x| csr_mul(g, &self.factor.solve(&csr_mul_transpose(g, x))))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DualOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub lipschitz: Option<f64>,
    /// Record `(primal objective of w(λ), dual objective)` per iteration.
    pub record_history: bool,
}

impl Default for DualOptions {
    fn default() -> Self {
        DualOptions { tol: 1e-10, max_iter: 50_000, lipschitz: None, record_history: false }
    }
}

#[derive(Debug, Clone)]
pub struct DualSolution {
    pub w: DVector<f64>,
    pub lambda: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub primal_violation: f64,
    /// `|λᵀ(c − G w)|`.
    pub complementarity: f64,
    pub history: Vec<(f64, f64)>,
}

/// Projected gradient on the dual, from `λ = 0`. Stops once `w(λ)` violates
/// no row and complementarity holds, both up to `tol (1 + ‖c‖)`.
pub fn dual_coarse_solve(qp: &DualQP<'_>, tol: f64) -> Result<(DVector<f64>, DVector<f64>)> {
    let sol = dual_coarse_solve_with(qp, None, &DualOptions { tol, ..Default::default() })?;
    if !sol.converged {
        return Err(Error::NonConvergence {
            solver: "dual projected gradient",
            iterations: sol.iterations,
            residual: sol.primal_violation.max(sol.complementarity),
        });
    }
    Ok((sol.w, sol.lambda))
}

pub fn dual_coarse_solve_with(qp: &DualQP<'_>, lambda0: Option<&DVector<f64>>, opts: &DualOptions) -> Result<DualSolution> {
    let m = qp.constraints.nrows();
    let n = qp.matrix.nrows();
    if qp.constraints.ncols() != n || qp.linear.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: qp.linear.len() });
    }
    if qp.slack.len() != m {
        return Err(Error::DimensionMismatch { expected: m, got: qp.slack.len() });
    }
    let mut lambda = match lambda0 {
        Some(l) if l.len() == m => l.map(|x| x.max(0.0)),
        Some(l) => return Err(Error::DimensionMismatch { expected: m, got: l.len() }),
        None => DVector::zeros(m),
    };
    let threshold = opts.tol * (1.0 + qp.slack.norm());
    let l = opts.lipschitz.unwrap_or_else(|| qp.lipschitz());
    let mut history = Vec::new();
    let mut iterations = 0;
    loop {
        let w = qp.recover(&lambda);
        let gap = &qp.slack - csr_mul(qp.constraints, &w);
        let violation = gap.iter().map(|&s| (-s).max(0.0)).fold(0.0, f64::max);
        let complementarity = lambda.dot(&gap).abs();
        if opts.record_history {
            history.push((qp.primal_objective(&w), qp.dual_objective(&lambda)));
        }
        let converged = violation <= threshold && complementarity <= threshold;
        if converged || iterations == opts.max_iter || l <= 0.0 {
            return Ok(DualSolution {
                w,
                lambda,
                iterations,
                converged: converged || l <= 0.0,
                primal_violation: violation,
                complementarity,
                history,
            });
        }
        // ∇D(λ) = c − G w(λ) = gap
        for (x, &s) in lambda.iter_mut().zip(gap.iter()) {
            *x = (*x - s / l).max(0.0);
        }
        iterations += 1;
    }
}

/// Dual active set method (Goldfarb–Idnani) for the same problem: starts
/// from the unconstrained minimizer with `λ = 0` and repeatedly brings the
/// most violated row into the active set, keeping `λ ≥ 0` and
/// `w = A⁻¹(g − Gᵀλ)` throughout. Terminates finitely with an exact KKT point
/// up to round-off.
pub fn dual_active_set_solve(qp: &DualQP<'_>, tol: f64) -> Result<DualSolution> {
    let m = qp.constraints.nrows();
    let n = qp.matrix.nrows();
    if qp.constraints.ncols() != n || qp.linear.len() != n || qp.slack.len() != m {
        return Err(Error::DimensionMismatch { expected: n, got: qp.linear.len() });
    }
    let row = |p: usize| {
        let r = qp.constraints.row(p);
        let mut v = DVector::zeros(n);
        for (&j, &x) in r.col_indices().iter().zip(r.values()) {
            v[j] = x;
        }
        v
    };
    let threshold = tol * (1.0 + qp.slack.amax());
    let max_iter = 20 * (n + 10) + m;
    let mut w = qp.factor.solve(&qp.linear);
    // active rows, their multipliers, G_p and A⁻¹ G_pᵀ
    let mut active: Vec<usize> = Vec::new();
    let mut mult: Vec<f64> = Vec::new();
    let mut rows: Vec<DVector<f64>> = Vec::new();
    let mut solved: Vec<DVector<f64>> = Vec::new();
    let mut iterations = 0;
    loop {
        let gap = &qp.slack - csr_mul(qp.constraints, &w);
        let (p, worst) = gap.iter().copied().enumerate().fold((0, f64::INFINITY), |b, (i, s)| if s < b.1 { (i, s) } else { b });
        if m == 0 || worst >= -threshold {
            let mut lambda = DVector::zeros(m);
            for (&i, &u) in active.iter().zip(&mult) {
                lambda[i] = u;
            }
            let complementarity = lambda.dot(&gap).abs();
            return Ok(DualSolution {
                w,
                lambda,
                iterations,
                converged: true,
                primal_violation: (-worst).max(0.0),
                complementarity,
                history: Vec::new(),
            });
        }
        let np = row(p);
        let hp = qp.factor.solve(&np);
        let mut up = 0.0;
        loop {
            iterations += 1;
            if iterations > max_iter {
                return Err(Error::NonConvergence { solver: "dual active set", iterations, residual: -worst });
            }
            // r = (N A⁻¹ Nᵀ)⁻¹ N A⁻¹ n_p and z = A⁻¹ n_p − A⁻¹ Nᵀ r
            let q = active.len();
            let r = if q == 0 {
                DVector::zeros(0)
            } else {
                let k = DMatrix::from_fn(q, q, |a, b| rows[a].dot(&solved[b]));
                let rhs = DVector::from_fn(q, |a, _| rows[a].dot(&hp));
                match Cholesky::new(k) {
                    Some(c) => c.solve(&rhs),
                    None => return Err(Error::NotPositiveDefinite),
                }
            };
            let mut z = hp.clone();
            for (a, ra) in r.iter().enumerate() {
                z.axpy(-ra, &solved[a], 1.0);
            }
            let curvature = np.dot(&z);
            let dependent = curvature <= 1e-12 * np.dot(&hp);
            let (mut t1, mut drop) = (f64::INFINITY, None);
            for a in 0..q {
                if r[a] > 0.0 {
                    let t = mult[a] / r[a];
                    if t < t1 {
                        t1 = t;
                        drop = Some(a);
                    }
                }
            }
            let sp = qp.slack[p] - np.dot(&w);
            let t2 = if dependent { f64::INFINITY } else { -sp / curvature };
            let t = t1.min(t2);
            if !t.is_finite() {
                return Err(Error::Infeasible(-sp));
            }
            if !dependent {
                w.axpy(-t, &z, 1.0);
            }
            for a in 0..q {
                mult[a] -= t * r[a];
            }
            up += t;
            if t2 <= t1 {
                active.push(p);
                mult.push(up);
                rows.push(np);
                solved.push(hp);
                break;
            }
            let a = drop.unwrap();
            active.remove(a);
            mult.remove(a);
            rows.remove(a);
            solved.remove(a);
        }
    }
}
