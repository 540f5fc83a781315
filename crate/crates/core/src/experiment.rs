//! Experiment runner: assembles one of the two model problems, obtains a
//! reference solution and records the Schwarz convergence history as CSV.

use std::io::Write;
use std::path::PathBuf;

use nalgebra::DVector;

use crate::assembly::{assemble, DiscreteProblem, ProblemSpec};
use crate::error::{Error, Result};
use crate::grid::{build_decomposition, Grid};
use crate::reference::{compute_reference, load_reference, save_reference};
use crate::schwarz::{CoarseSolver, ConvergenceRecord, LocalSolver, SchwarzConfig, SchwarzSolver};

pub const CSV_HEADER: &str = "iter,energy,rel_energy_error,max_violation,elapsed_ms";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Problem {
    /// Clamped plate above the paraboloid obstacle.
    Plate,
    /// Optimal control with state bound `ψ = 1`.
    Control,
}

impl Problem {
    pub fn spec(self) -> ProblemSpec {
        match self {
            Problem::Plate => ProblemSpec::plate_obstacle(),
            Problem::Control => ProblemSpec::optimal_control(),
        }
    }
}

impl std::str::FromStr for Problem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plate" => Ok(Problem::Plate),
            "control" => Ok(Problem::Control),
            other => Err(Error::Config(format!("unknown problem `{other}` (expected plate or control)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReferencePolicy {
    Compute,
    Load(PathBuf),
    None,
}

impl std::str::FromStr for ReferencePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "compute" => Ok(ReferencePolicy::Compute),
            "none" => Ok(ReferencePolicy::None),
            _ => match s.strip_prefix("load:") {
                Some(path) if !path.is_empty() => Ok(ReferencePolicy::Load(PathBuf::from(path))),
                _ => Err(Error::Config(format!("unknown reference policy `{s}` (compute, load:<path> or none)"))),
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub problem: Problem,
    pub n: usize,
    pub ratio: usize,
    pub overlap: usize,
    pub levels: usize,
    pub tau: f64,
    pub tol: f64,
    pub max_outer: usize,
    pub local_solver: LocalSolver,
    pub coarse_solver: CoarseSolver,
    pub reference: ReferencePolicy,
    /// Where to cache a computed reference.
    pub save_reference: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            problem: Problem::Plate,
            n: 32,
            ratio: 8,
            overlap: 2,
            levels: 2,
            tau: 0.2,
            tol: 1e-6,
            max_outer: 1000,
            local_solver: LocalSolver::Pdas,
            coarse_solver: CoarseSolver::DualActiveSet,
            reference: ReferencePolicy::Compute,
            save_reference: None,
        }
    }
}

impl ExperimentConfig {
    pub fn schwarz_config(&self, reference_energy: Option<f64>) -> SchwarzConfig {
        SchwarzConfig {
            levels: self.levels,
            tau: self.tau,
            max_outer: self.max_outer,
            tol: self.tol,
            reference_energy,
            local_solver: self.local_solver,
            coarse_solver: self.coarse_solver,
            ..Default::default()
        }
    }

    /// Checks everything that can be checked before any assembly.
    pub fn validate(&self) -> Result<()> {
        Grid::new(self.n)?;
        build_decomposition(self.n, self.ratio, self.overlap)?;
        self.schwarz_config(None).validate()?;
        if self.levels == 2 && self.n / self.ratio < 2 {
            return Err(Error::Config("two levels need at least 2 coarse cells per side".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub record: ConvergenceRecord,
    pub reference_energy: Option<f64>,
}

pub fn reference_solution(config: &ExperimentConfig, p: &DiscreteProblem) -> Result<Option<DVector<f64>>> {
    let u = match &config.reference {
        ReferencePolicy::None => return Ok(None),
        ReferencePolicy::Load(path) => load_reference(path, p)?,
        ReferencePolicy::Compute => compute_reference(p)?.solution,
    };
    if let Some(path) = &config.save_reference {
        save_reference(path, p, &u)?;
    }
    Ok(Some(u))
}

/// Runs the experiment from the zero initial guess.
pub fn run(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    run_from(config, |p| DVector::zeros(p.num_free()))
}

/// Runs the experiment from `initial(problem)`, which must be feasible.
pub fn run_from(config: &ExperimentConfig, initial: impl FnOnce(&DiscreteProblem) -> DVector<f64>) -> Result<ExperimentOutcome> {
    config.validate()?;
    let p = assemble(&config.problem.spec(), &Grid::new(config.n)?)?;
    let dd = build_decomposition(config.n, config.ratio, config.overlap)?;
    let reference_energy = reference_solution(config, &p)?.map(|u| p.energy(&u)).transpose()?;
    let mut solver = SchwarzSolver::new(&p, &dd, config.schwarz_config(reference_energy))?;
    let u0 = initial(&p);
    if u0.len() != p.num_free() {
        return Err(Error::DimensionMismatch { expected: p.num_free(), got: u0.len() });
    }
    let record = solver.solve(&u0)?;
    Ok(ExperimentOutcome { record, reference_energy })
}

/// One row per recorded iterate, starting with the initial guess.
pub fn write_csv(record: &ConvergenceRecord, out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in &record.history {
        writeln!(
            out,
            "{},{:e},{:e},{:e},{:.3}",
            r.iter,
            r.energy,
            r.rel_energy_error.unwrap_or(f64::NAN),
            r.max_violation,
            r.elapsed.as_secs_f64() * 1e3
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_policies() {
        assert_eq!("compute".parse::<ReferencePolicy>().unwrap(), ReferencePolicy::Compute);
        assert_eq!("none".parse::<ReferencePolicy>().unwrap(), ReferencePolicy::None);
        assert_eq!("load:a/b.txt".parse::<ReferencePolicy>().unwrap(), ReferencePolicy::Load("a/b.txt".into()));
        assert!("load:".parse::<ReferencePolicy>().is_err());
        assert!("cheese".parse::<Problem>().is_err());
    }

    #[test]
    fn overlap_half_of_coarse_cell_is_rejected() {
        let c = ExperimentConfig { n: 16, ratio: 8, overlap: 4, ..Default::default() };
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn csv_rows() {
        let c = ExperimentConfig { n: 16, ratio: 8, overlap: 2, max_outer: 3, tol: 1e-14, ..Default::default() };
        let out = run(&c).unwrap();
        let mut buf = Vec::new();
        write_csv(&out.record, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 5);
        assert!(lines[1].starts_with("0,0e0,"));
    }
}
