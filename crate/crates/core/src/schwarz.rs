//! One- and two-level additive Schwarz iteration for the discrete obstacle
//! problem: `u ← u + τ Σ_k R_kᵀ w_k`, where each `w_k` minimizes the energy
//! decrease `F(u + R_kᵀ w) − F(u)` over the admissible corrections.

use std::time::{Duration, Instant};

use nalgebra::DVector;
use rayon::prelude::*;

use crate::assembly::DiscreteProblem;
use crate::error::{Error, Result};
use crate::grid::DomainDecomposition;
use crate::linalg::{csr_to_dense_principal, SpdMatrix};
use crate::qp::{
    dual_active_set_solve, dual_coarse_solve_with, fbs_solve_with, lipschitz_estimate, pdas_solve_with, BoundQP, DualOptions, DualQP,
    FbsOptions, PdasOptions, PdasWorkspace,
};
use crate::space::{build_coarse_space, build_local_spaces, coloring_number, CoarseSpace, LocalSpace};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LocalSolver {
    Pdas,
    Fbs,
}

/// Solver for the coarse problem; both work on its dual.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoarseSolver {
    /// Projected gradient on the multipliers.
    DualFbs,
    /// Dual active set method, exact up to round-off.
    DualActiveSet,
}

impl std::str::FromStr for CoarseSolver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dual-fbs" => Ok(CoarseSolver::DualFbs),
            "dual-active-set" => Ok(CoarseSolver::DualActiveSet),
            other => Err(Error::Config(format!("unknown coarse solver `{other}`"))),
        }
    }
}

impl std::str::FromStr for LocalSolver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pdas" => Ok(LocalSolver::Pdas),
            "fbs" => Ok(LocalSolver::Fbs),
            other => Err(Error::Config(format!("unknown local solver `{other}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SchwarzConfig {
    /// 1: local spaces only; 2: local spaces plus the coarse space.
    pub levels: usize,
    pub tau: f64,
    pub max_outer: usize,
    /// Target relative energy error (against `reference_energy`), or relative
    /// energy decrease per iteration when no reference is known.
    pub tol: f64,
    pub reference_energy: Option<f64>,
    pub local_solver: LocalSolver,
    pub coarse_solver: CoarseSolver,
    pub pdas: PdasOptions,
    pub fbs: FbsOptions,
    pub dual: DualOptions,
}

impl Default for SchwarzConfig {
    fn default() -> Self {
        SchwarzConfig {
            levels: 2,
            tau: 0.2,
            max_outer: 500,
            tol: 1e-6,
            reference_energy: None,
            local_solver: LocalSolver::Pdas,
            coarse_solver: CoarseSolver::DualActiveSet,
            pdas: PdasOptions::default(),
            fbs: FbsOptions { tol: 1e-12, max_iter: 100_000, lipschitz: None },
            dual: DualOptions { tol: 1e-10, max_iter: 20_000, lipschitz: None, record_history: false },
        }
    }
}

impl SchwarzConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.levels) {
            return Err(Error::Config(format!("levels must be 1 or 2, got {}", self.levels)));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Config(format!("step size must be positive, got {}", self.tau)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("tolerance must be positive, got {}", self.tol)));
        }
        if self.max_outer == 0 {
            return Err(Error::Config("max_outer must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IterationRecord {
    pub iter: usize,
    pub energy: f64,
    pub rel_energy_error: Option<f64>,
    pub feasible: bool,
    pub max_violation: f64,
    pub elapsed: Duration,
}

#[derive(Debug, Clone)]
pub struct ConvergenceRecord {
    /// Row 0 is the initial iterate.
    pub history: Vec<IterationRecord>,
    pub solution: DVector<f64>,
    pub converged: bool,
}

impl ConvergenceRecord {
    pub fn outer_iterations(&self) -> usize {
        self.history.len() - 1
    }

    pub fn energies(&self) -> Vec<f64> {
        self.history.iter().map(|r| r.energy).collect()
    }

    /// First iteration whose relative energy error drops below `tol`.
    pub fn iterations_to(&self, tol: f64) -> Option<usize> {
        self.history.iter().find(|r| r.rel_energy_error.is_some_and(|e| e < tol)).map(|r| r.iter)
    }
}

fn check_feasible(p: &DiscreteProblem, u: &DVector<f64>) -> Result<()> {
    if p.feasible(u) {
        Ok(())
    } else {
        Err(Error::Infeasible(p.max_violation(u)?))
    }
}

/// Local subproblem about `u`: `A_k = R_k A R_kᵀ`, linear term
/// `R_k (f − A u)` and upper bounds `ψ − J u` on the constrained values.
pub fn local_subproblem(p: &DiscreteProblem, u: &DVector<f64>, space: &LocalSpace) -> Result<BoundQP> {
    check_feasible(p, u)?;
    let a = SpdMatrix::Dense(csr_to_dense_principal(p.sparse_matrix(), &space.dof_ids));
    let mut qp = BoundQP::new(a, DVector::zeros(space.dim()), DVector::from_element(space.dim(), f64::INFINITY))?;
    update_local(&mut qp, space, &p.residual(u), &p.slack(u)?);
    Ok(qp)
}

fn update_local(qp: &mut BoundQP, space: &LocalSpace, residual: &DVector<f64>, slack: &DVector<f64>) {
    qp.linear = space.restrict(residual);
    for &(local, row) in &space.constrained {
        qp.upper[local] = slack[row];
    }
}

/// Coarse subproblem about `u`: constraints `J R₀ᵀ w ≤ ψ − J u`.
pub fn coarse_subproblem<'a>(p: &DiscreteProblem, u: &DVector<f64>, coarse: &'a CoarseSpace) -> Result<DualQP<'a>> {
    check_feasible(p, u)?;
    Ok(DualQP {
        matrix: &coarse.matrix,
        factor: &coarse.factor,
        constraints: &coarse.value_map,
        linear: coarse.restrict(&p.residual(u)),
        slack: p.slack(u)?,
    })
}

struct LocalState {
    space: LocalSpace,
    qp: BoundQP,
    workspace: PdasWorkspace,
    lipschitz: Option<f64>,
    w: DVector<f64>,
}

impl LocalState {
    fn solve(&mut self, config: &SchwarzConfig) -> Result<()> {
        match config.local_solver {
            LocalSolver::Pdas => {
                let s = pdas_solve_with(&self.qp, &self.w, &config.pdas, &mut self.workspace)?;
                self.w = s.w;
            }
            LocalSolver::Fbs => {
                let l = *self.lipschitz.get_or_insert_with(|| lipschitz_estimate(&self.qp.matrix));
                let mut w0 = self.w.clone();
                self.qp.project(&mut w0);
                let opts = FbsOptions { lipschitz: Some(l), ..config.fbs };
                let s = fbs_solve_with(&self.qp, &w0, &opts)?;
                if !s.converged {
                    log::debug!("forward-backward splitting stopped at its iteration cap on subdomain {}", self.space.k);
                }
                // a warm start may leave an inexact solve worse than w = 0
                self.w = if self.qp.objective(&s.w) <= 0.0 { s.w } else { DVector::zeros(s.w.len()) };
            }
        }
        Ok(())
    }
}

struct CoarseState {
    space: CoarseSpace,
    lipschitz: f64,
    lambda: Option<DVector<f64>>,
    w: DVector<f64>,
}

impl CoarseState {
    fn solve(&mut self, residual: &DVector<f64>, slack: &DVector<f64>, config: &SchwarzConfig) -> Result<()> {
        let qp = DualQP {
            matrix: &self.space.matrix,
            factor: &self.space.factor,
            constraints: &self.space.value_map,
            linear: self.space.restrict(residual),
            slack: slack.clone(),
        };
        let sol = match config.coarse_solver {
            CoarseSolver::DualFbs => {
                let opts = DualOptions { lipschitz: Some(self.lipschitz), ..config.dual };
                dual_coarse_solve_with(&qp, self.lambda.as_ref(), &opts)?
            }
            CoarseSolver::DualActiveSet => dual_active_set_solve(&qp, config.dual.tol)?,
        };
        if !sol.converged {
            log::debug!(
                "coarse dual stopped after {} iterations (violation {:.3e})",
                sol.iterations,
                sol.primal_violation
            );
        }
        // The dual iterate is only approximately optimal: scale the recovered
        // correction back into the admissible set and drop it if it does not
        // decrease the energy.
        let gw = crate::linalg::csr_mul(&self.space.value_map, &sol.w);
        let theta = gw
            .iter()
            .zip(slack.iter())
            .filter(|(&a, &c)| a > c)
            .map(|(&a, &c)| (c.max(0.0) / a).clamp(0.0, 1.0))
            .fold(1.0, f64::min);
        let w = sol.w * theta;
        self.w = if qp.primal_objective(&w) <= 0.0 { w } else { DVector::zeros(self.space.dim()) };
        self.lambda = Some(sol.lambda);
        Ok(())
    }
}

/// Additive Schwarz solver with persistent subproblem workspaces.
pub struct SchwarzSolver<'p> {
    problem: &'p DiscreteProblem,
    config: SchwarzConfig,
    locals: Vec<LocalState>,
    coarse: Option<CoarseState>,
    colors: usize,
}

impl<'p> SchwarzSolver<'p> {
    pub fn new(p: &'p DiscreteProblem, dd: &DomainDecomposition, config: SchwarzConfig) -> Result<Self> {
        let spaces = build_local_spaces(dd, p)?;
        Self::with_spaces(p, dd, spaces, config)
    }

    pub fn with_spaces(
        p: &'p DiscreteProblem,
        dd: &DomainDecomposition,
        spaces: Vec<LocalSpace>,
        config: SchwarzConfig,
    ) -> Result<Self> {
        config.validate()?;
        let colors = coloring_number(dd, config.levels == 2);
        if config.tau > 1.0 / colors as f64 + 1e-15 {
            log::warn!("step size {} exceeds 1/{colors}; feasibility and monotonicity are not guaranteed", config.tau);
        }
        let locals = spaces
            .into_par_iter()
            .map(|space| {
                let a = SpdMatrix::Dense(csr_to_dense_principal(p.sparse_matrix(), &space.dof_ids));
                let dim = space.dim();
                let qp = BoundQP::new(a, DVector::zeros(dim), DVector::from_element(dim, f64::INFINITY))?;
                Ok(LocalState { space, qp, workspace: PdasWorkspace::new(), lipschitz: None, w: DVector::zeros(dim) })
            })
            .collect::<Result<Vec<_>>>()?;
        let coarse = if config.levels == 2 {
            let space = build_coarse_space(dd, p)?;
            let probe = DualQP {
                matrix: &space.matrix,
                factor: &space.factor,
                constraints: &space.value_map,
                linear: DVector::zeros(space.dim()),
                slack: DVector::zeros(p.num_bounds()),
            };
            let lipschitz = config.dual.lipschitz.unwrap_or_else(|| probe.lipschitz());
            let w = DVector::zeros(space.dim());
            Some(CoarseState { space, lipschitz, lambda: None, w })
        } else {
            None
        };
        Ok(SchwarzSolver { problem: p, config, locals, coarse, colors })
    }

    /// Number of colour classes `N_c` of the decomposition.
    pub fn colors(&self) -> usize {
        self.colors
    }

    pub fn num_subspaces(&self) -> usize {
        self.locals.len() + usize::from(self.coarse.is_some())
    }

    /// One outer iteration: solve all subproblems about `u` and return the
    /// summed correction `Σ_k R_kᵀ w_k` (before damping).
    pub fn correction(&mut self, u: &DVector<f64>, iteration: usize) -> Result<DVector<f64>> {
        let p = self.problem;
        let residual = p.residual(u);
        let slack = p.slack(u)?;
        let config = &self.config;
        let locals = &mut self.locals;
        let coarse = &mut self.coarse;
        let (local_result, coarse_result) = rayon::join(
            || {
                locals.par_iter_mut().try_for_each(|st| {
                    update_local(&mut st.qp, &st.space, &residual, &slack);
                    st.solve(config).map_err(|e| Error::Subproblem {
                        iteration,
                        subproblem: st.space.k + 1,
                        source: Box::new(e),
                    })
                })
            },
            || match coarse {
                Some(c) => c.solve(&residual, &slack, config).map_err(|e| Error::Subproblem {
                    iteration,
                    subproblem: 0,
                    source: Box::new(e),
                }),
                None => Ok(()),
            },
        );
        local_result?;
        coarse_result?;
        // fixed summation order: coarse first, then subdomains row-major
        let mut total = match &self.coarse {
            Some(c) => c.space.prolongate(&c.w),
            None => DVector::zeros(p.num_free()),
        };
        for st in &self.locals {
            st.space.add_extended(&mut total, &st.w, 1.0);
        }
        Ok(total)
    }

    pub fn solve(&mut self, u0: &DVector<f64>) -> Result<ConvergenceRecord> {
        let p = self.problem;
        if u0.len() != p.num_free() {
            return Err(Error::DimensionMismatch { expected: p.num_free(), got: u0.len() });
        }
        check_feasible(p, u0)?;
        let start = Instant::now();
        let reference = self.config.reference_energy;
        let rel_error = |e: f64| reference.map(|r| (e - r) / r.abs().max(f64::MIN_POSITIVE));
        let record = |iter: usize, u: &DVector<f64>| -> Result<IterationRecord> {
            let energy = p.energy(u)?;
            Ok(IterationRecord {
                iter,
                energy,
                rel_energy_error: rel_error(energy),
                feasible: p.feasible(u),
                max_violation: p.max_violation(u)?,
                elapsed: start.elapsed(),
            })
        };
        let mut u = u0.clone();
        let mut history = vec![record(0, &u)?];
        let mut converged = false;
        for n in 1..=self.config.max_outer {
            let c = self.correction(&u, n)?;
            u.axpy(self.config.tau, &c, 1.0);
            let rec = record(n, &u)?;
            let prev = history.last().unwrap().energy;
            history.push(rec);
            let done = match rec.rel_energy_error {
                Some(e) => e < self.config.tol,
                None => (prev - rec.energy) <= self.config.tol * rec.energy.abs(),
            };
            log::debug!("outer {n}: energy {:.12e}, relative error {:?}", rec.energy, rec.rel_energy_error);
            if done {
                converged = true;
                break;
            }
        }
        Ok(ConvergenceRecord { history, solution: u, converged })
    }
}

/// Runs Algorithm 1 from `u = 0`.
pub fn schwarz_solve(
    p: &DiscreteProblem,
    dd: &DomainDecomposition,
    spaces: &[LocalSpace],
    config: &SchwarzConfig,
) -> Result<ConvergenceRecord> {
    let mut solver = SchwarzSolver::with_spaces(p, dd, spaces.to_vec(), config.clone())?;
    solver.solve(&DVector::zeros(p.num_free()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble, ProblemSpec};
    use crate::field::Constant;
    use crate::grid::{build_decomposition, Grid};
    use crate::qp::pdas_solve;
    use crate::linalg::spd_solve;
    use std::sync::Arc;

    fn plate(n: usize) -> DiscreteProblem {
        assemble(&ProblemSpec::plate_obstacle(), &Grid::new(n).unwrap()).unwrap()
    }

    #[test]
    fn local_bounds_at_zero() {
        let p = plate(16);
        let dd = build_decomposition(16, 8, 2).unwrap();
        let spaces = build_local_spaces(&dd, &p).unwrap();
        let u = DVector::zeros(p.num_free());
        let qp = local_subproblem(&p, &u, &spaces[3]).unwrap();
        for &(local, row) in &spaces[3].constrained {
            assert_eq!(qp.upper[local], p.bounds[row]);
        }
        let constrained = spaces[3].constrained.len();
        assert_eq!(qp.upper.iter().filter(|b| b.is_finite()).count(), constrained);
        assert!(qp.upper.iter().all(|&b| b >= 0.0));
    }

    #[test]
    fn subproblem_objective_is_energy_decrease() {
        let p = plate(16);
        let dd = build_decomposition(16, 8, 2).unwrap();
        let spaces = build_local_spaces(&dd, &p).unwrap();
        let u = DVector::from_fn(p.num_free(), |i, _| 1e-3 * ((i * 37 % 11) as f64 - 5.0));
        let u = if p.feasible(&u) { u } else { u * 0.0 };
        let s = &spaces[1];
        let qp = local_subproblem(&p, &u, s).unwrap();
        let w = DVector::from_fn(s.dim(), |i, _| ((i * 13 % 7) as f64 - 3.0) * 1e-2);
        let lhs = p.energy(&(&u + s.extend(&w, p.num_free()))).unwrap() - p.energy(&u).unwrap();
        assert!((lhs - qp.objective(&w)).abs() <= 1e-11 * (1.0 + lhs.abs()));

        let sol = pdas_solve(&qp, &DVector::zeros(s.dim()), 1e-12).unwrap();
        assert!(qp.objective(&sol.w) <= 0.0);
    }

    #[test]
    fn infeasible_iterate_is_rejected() {
        let p = plate(8);
        let dd = build_decomposition(8, 4, 1).unwrap();
        let spaces = build_local_spaces(&dd, &p).unwrap();
        let u = DVector::from_element(p.num_free(), 10.0);
        assert!(matches!(local_subproblem(&p, &u, &spaces[0]), Err(Error::Infeasible(_))));
        let mut solver = SchwarzSolver::new(&p, &dd, SchwarzConfig::default()).unwrap();
        assert!(matches!(solver.solve(&u), Err(Error::Infeasible(_))));
    }

    #[test]
    fn single_subdomain_is_exact() {
        let p = plate(8);
        let dd = build_decomposition(8, 8, 1).unwrap();
        let config = SchwarzConfig { levels: 1, tau: 1.0, max_outer: 3, tol: 1e-12, ..Default::default() };
        let mut solver = SchwarzSolver::new(&p, &dd, config).unwrap();
        let rec = solver.solve(&DVector::zeros(p.num_free())).unwrap();
        let mut upper = DVector::from_element(p.num_free(), f64::INFINITY);
        for (r, &d) in p.value_dofs().iter().enumerate() {
            upper[d] = p.bounds[r];
        }
        let full = BoundQP::new(p.matrix.clone(), p.load.clone(), upper).unwrap();
        let exact = pdas_solve(&full, &DVector::zeros(p.num_free()), 1e-12).unwrap();
        let after_one = &rec.history[1];
        assert!((after_one.energy - p.energy(&exact.w).unwrap()).abs() < 1e-12 * after_one.energy.abs());
    }

    #[test]
    fn unconstrained_two_level_reaches_direct_solve() {
        let spec = ProblemSpec::plate_obstacle().with_obstacle(Arc::new(Constant(1e6)));
        let p = assemble(&spec, &Grid::new(16).unwrap()).unwrap();
        let dd = build_decomposition(16, 8, 2).unwrap();
        let direct = spd_solve(&p.matrix, &p.load, 1e-13).unwrap();
        let config = SchwarzConfig {
            reference_energy: Some(p.energy(&direct).unwrap()),
            tol: 1e-13,
            max_outer: 2000,
            ..Default::default()
        };
        let rec = SchwarzSolver::new(&p, &dd, config).unwrap().solve(&DVector::zeros(p.num_free())).unwrap();
        let err = p.matrix.energy_norm(&(&rec.solution - &direct)) / p.matrix.energy_norm(&direct);
        assert!(err <= 1e-6, "relative A-norm error {err}");
    }

    #[test]
    fn plate_iterates_feasible_and_monotone() {
        let p = plate(16);
        let dd = build_decomposition(16, 8, 2).unwrap();
        for levels in [1, 2] {
            let config = SchwarzConfig { levels, max_outer: 40, tol: 1e-14, ..Default::default() };
            let rec = SchwarzSolver::new(&p, &dd, config).unwrap().solve(&DVector::zeros(p.num_free())).unwrap();
            for w in rec.history.windows(2) {
                assert!(w[1].feasible);
                assert!(w[1].energy <= w[0].energy + 1e-12 * (1.0 + w[0].energy.abs()));
            }
        }
    }

    #[test]
    fn fbs_local_solver_decreases_energy() {
        let p = plate(8);
        let dd = build_decomposition(8, 4, 1).unwrap();
        let config = SchwarzConfig {
            local_solver: LocalSolver::Fbs,
            fbs: FbsOptions { tol: 1e-10, max_iter: 5_000, lipschitz: None },
            max_outer: 5,
            tol: 1e-14,
            ..Default::default()
        };
        let rec = SchwarzSolver::new(&p, &dd, config).unwrap().solve(&DVector::zeros(p.num_free())).unwrap();
        assert!(rec.history.last().unwrap().energy < rec.history[0].energy);
        for w in rec.history.windows(2) {
            assert!(w[1].feasible);
            assert!(w[1].energy <= w[0].energy + 1e-12 * (1.0 + w[0].energy.abs()));
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let p = plate(16);
        let dd = build_decomposition(16, 4, 1).unwrap();
        let config = SchwarzConfig { max_outer: 5, tol: 1e-14, ..Default::default() };
        let a = SchwarzSolver::new(&p, &dd, config.clone()).unwrap().solve(&DVector::zeros(p.num_free())).unwrap();
        let b = SchwarzSolver::new(&p, &dd, config).unwrap().solve(&DVector::zeros(p.num_free())).unwrap();
        assert_eq!(a.solution, b.solution);
    }
}
