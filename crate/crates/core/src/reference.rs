//! Reference solutions: the full discrete obstacle problem solved directly by
//! the primal-dual active set method, with a plain-text cache format.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DVector;

use crate::assembly::DiscreteProblem;
use crate::error::{Error, Result};
use crate::qp::{pdas_solve_with, BoundQP, PdasOptions, PdasWorkspace};

#[derive(Debug, Clone)]
pub struct Reference {
    /// Free-DOF coefficients.
    pub solution: DVector<f64>,
    pub energy: f64,
    pub iterations: usize,
}

/// The full problem `min F_h(v)` s.t. `J v ≤ ψ` as a bound-constrained QP.
pub fn full_problem_qp(p: &DiscreteProblem) -> Result<BoundQP> {
    let mut upper = DVector::from_element(p.num_free(), f64::INFINITY);
    for (&d, &b) in p.value_dofs().iter().zip(p.bounds.iter()) {
        upper[d] = b;
    }
    BoundQP::new(p.matrix.clone(), p.load.clone(), upper)
}

pub fn compute_reference(p: &DiscreteProblem) -> Result<Reference> {
    let qp = full_problem_qp(p)?;
    let opts = PdasOptions { tol: 1e-12, max_iter: 500 };
    let s = pdas_solve_with(&qp, &DVector::zeros(p.num_free()), &opts, &mut PdasWorkspace::new())?;
    log::info!("reference: {} active-set iterations, {} active bounds", s.iterations, s.active.len());
    let energy = p.energy(&s.w)?;
    Ok(Reference { solution: s.w, energy, iterations: s.iterations })
}

/// KKT residuals of `u` as a solution of the full problem, each relative to
/// `1 + ‖f‖∞`.
#[derive(Debug, Clone, Copy)]
pub struct KktReport {
    pub violation: f64,
    /// Residual `f − A u` off the value DOFs and the negative part of the
    /// multipliers on them.
    pub stationarity: f64,
    /// `max |λ_i (ψ − J u)_i|`.
    pub complementarity: f64,
}

impl KktReport {
    pub fn max(&self) -> f64 {
        self.violation.max(self.stationarity).max(self.complementarity)
    }
}

pub fn kkt_report(p: &DiscreteProblem, u: &DVector<f64>) -> Result<KktReport> {
    let scale = 1.0 + p.load.amax();
    let r = p.residual(u);
    let slack = p.slack(u)?;
    let mut is_value = vec![false; p.num_free()];
    let mut stationarity = 0.0_f64;
    let mut complementarity = 0.0_f64;
    for (row, &d) in p.value_dofs().iter().enumerate() {
        is_value[d] = true;
        stationarity = stationarity.max((-r[d]).max(0.0));
        complementarity = complementarity.max((r[d] * slack[row]).abs());
    }
    for (d, &v) in is_value.iter().enumerate() {
        if !v {
            stationarity = stationarity.max(r[d].abs());
        }
    }
    Ok(KktReport {
        violation: p.max_violation(u)? / scale,
        stationarity: stationarity / scale,
        complementarity: complementarity / scale,
    })
}

fn header(p: &DiscreteProblem) -> [(&'static str, String); 4] {
    [
        ("n", p.grid.n().to_string()),
        ("form", p.form.name().to_string()),
        ("beta", format!("{:e}", p.form.beta())),
        ("dofs", p.num_free().to_string()),
    ]
}

/// Writes `u` with a header identifying the discrete problem. Values use the
/// shortest round-trip representation, so reloading is exact.
pub fn save_reference(path: &Path, p: &DiscreteProblem, u: &DVector<f64>) -> Result<()> {
    if u.len() != p.num_free() {
        return Err(Error::DimensionMismatch { expected: p.num_free(), got: u.len() });
    }
    let mut out = String::from("# asm4vi reference solution\n");
    for (k, v) in header(p) {
        writeln!(out, "{k} {v}").unwrap();
    }
    for x in u.iter() {
        writeln!(out, "{x:e}").unwrap();
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn load_reference(path: &Path, p: &DiscreteProblem) -> Result<DVector<f64>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty());
    for (key, expected) in header(p) {
        let line = lines.next().ok_or_else(|| Error::Reference(format!("missing `{key}` header")))?;
        let (k, v) = line.split_once(' ').ok_or_else(|| Error::Reference(format!("malformed header line `{line}`")))?;
        if k != key {
            return Err(Error::Reference(format!("expected `{key}` header, found `{k}`")));
        }
        if v.trim() != expected {
            return Err(Error::Reference(format!("{key} is {} in the file but {expected} in the problem", v.trim())));
        }
    }
    let values = lines
        .map(|l| l.trim().parse::<f64>().map_err(|e| Error::Reference(format!("bad value `{l}`: {e}"))))
        .collect::<Result<Vec<_>>>()?;
    if values.len() != p.num_free() {
        return Err(Error::Reference(format!("{} values for {} DOFs", values.len(), p.num_free())));
    }
    Ok(DVector::from_vec(values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble, ProblemSpec};
    use crate::field::Constant;
    use crate::grid::Grid;
    use crate::linalg::spd_solve;
    use std::sync::Arc;

    #[test]
    fn plate_reference_is_kkt() {
        let p = assemble(&ProblemSpec::plate_obstacle(), &Grid::new(8).unwrap()).unwrap();
        let r = compute_reference(&p).unwrap();
        let kkt = kkt_report(&p, &r.solution).unwrap();
        assert!(kkt.max() <= 1e-8, "{kkt:?}");
        assert!(p.feasible(&r.solution));
        // the obstacle binds somewhere
        assert!(p.slack(&r.solution).unwrap().min() < 1e-12);
    }

    #[test]
    fn inactive_obstacle_gives_linear_solve() {
        let spec = ProblemSpec::optimal_control().with_obstacle(Arc::new(Constant(1e6)));
        let p = assemble(&spec, &Grid::new(8).unwrap()).unwrap();
        let r = compute_reference(&p).unwrap();
        let direct = spd_solve(&p.matrix, &p.load, 1e-14).unwrap();
        assert!((&r.solution - &direct).amax() <= 1e-8 * (1.0 + direct.amax()));
    }

    #[test]
    fn round_trip_is_exact() {
        let p = assemble(&ProblemSpec::optimal_control(), &Grid::new(8).unwrap()).unwrap();
        let r = compute_reference(&p).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ref.txt");
        save_reference(&path, &p, &r.solution).unwrap();
        let back = load_reference(&path, &p).unwrap();
        assert_eq!(back, r.solution);
        assert!((p.energy(&back).unwrap() - r.energy).abs() <= 1e-12 * r.energy.abs());

        let other = assemble(&ProblemSpec::plate_obstacle(), &Grid::new(8).unwrap()).unwrap();
        assert!(matches!(load_reference(&path, &other), Err(Error::Reference(_))));
    }
}
