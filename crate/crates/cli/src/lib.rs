//! Settings handling for the `asm4vi` binary: a `key = value` file merged
//! with command-line flags, flags taking precedence.

use std::path::PathBuf;

use asm4vi::{CoarseSolver, Error, ExperimentConfig, LocalSolver, Problem, ReferencePolicy, Result};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Every setting is optional so that a file and the flags can be layered.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    pub problem: Option<Problem>,
    pub n: Option<usize>,
    pub ratio: Option<usize>,
    pub overlap: Option<usize>,
    pub levels: Option<usize>,
    pub tau: Option<f64>,
    pub tol: Option<f64>,
    pub max_outer: Option<usize>,
    pub local_solver: Option<LocalSolver>,
    pub coarse_solver: Option<CoarseSolver>,
    pub reference: Option<ReferencePolicy>,
    pub save_reference: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub seed: Option<u64>,
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config(format!("bad value `{value}` for `{key}`")))
}

impl Settings {
    /// Parses `key = value` lines. Keys are the long flag names with or
    /// without dashes (`max-outer` or `max_outer`); `#` starts a comment.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut s = Settings::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            s.set(&key.trim().replace('_', "-"), value.trim())?;
        }
        Ok(s)
    }

    fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "problem" => self.problem = Some(v.parse()?),
            "n" => self.n = Some(parse(key, v)?),
            "ratio" => self.ratio = Some(parse(key, v)?),
            "overlap" => self.overlap = Some(parse(key, v)?),
            "levels" => self.levels = Some(parse(key, v)?),
            "tau" => self.tau = Some(parse(key, v)?),
            "tol" => self.tol = Some(parse(key, v)?),
            "max-outer" => self.max_outer = Some(parse(key, v)?),
            "local-solver" => self.local_solver = Some(v.parse()?),
            "coarse-solver" => self.coarse_solver = Some(v.parse()?),
            "reference" => self.reference = Some(v.parse()?),
            "save-reference" => self.save_reference = Some(v.into()),
            "out" => self.out = Some(v.into()),
            "threads" => self.threads = Some(parse(key, v)?),
            "seed" => self.seed = Some(parse(key, v)?),
            other => return Err(Error::Config(format!("unknown setting `{other}`"))),
        }
        Ok(())
    }

    /// `self` with every unset field taken from `base`.
    pub fn over(self, base: Settings) -> Settings {
        Settings {
            problem: self.problem.or(base.problem),
            n: self.n.or(base.n),
            ratio: self.ratio.or(base.ratio),
            overlap: self.overlap.or(base.overlap),
            levels: self.levels.or(base.levels),
            tau: self.tau.or(base.tau),
            tol: self.tol.or(base.tol),
            max_outer: self.max_outer.or(base.max_outer),
            local_solver: self.local_solver.or(base.local_solver),
            coarse_solver: self.coarse_solver.or(base.coarse_solver),
            reference: self.reference.or(base.reference),
            save_reference: self.save_reference.or(base.save_reference),
            out: self.out.or(base.out),
            threads: self.threads.or(base.threads),
            seed: self.seed.or(base.seed),
        }
    }

    pub fn experiment(&self) -> ExperimentConfig {
        let d = ExperimentConfig::default();
        ExperimentConfig {
            problem: self.problem.unwrap_or(d.problem),
            n: self.n.unwrap_or(d.n),
            ratio: self.ratio.unwrap_or(d.ratio),
            overlap: self.overlap.unwrap_or(d.overlap),
            levels: self.levels.unwrap_or(d.levels),
            tau: self.tau.unwrap_or(d.tau),
            tol: self.tol.unwrap_or(d.tol),
            max_outer: self.max_outer.unwrap_or(d.max_outer),
            local_solver: self.local_solver.unwrap_or(d.local_solver),
            coarse_solver: self.coarse_solver.unwrap_or(d.coarse_solver),
            reference: self.reference.clone().unwrap_or(d.reference),
            save_reference: self.save_reference.clone(),
        }
    }
}

/// Random initial guess that satisfies the obstacle: uniform noise, with
/// every constrained value clamped to its bound.
pub fn random_feasible_start(p: &asm4vi::DiscreteProblem, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = DVector::<f64>::from_fn(p.num_free(), |_, _| rng.random_range(-1.0..1.0));
    for (row, &d) in p.value_dofs().iter().enumerate() {
        u[d] = u[d].min(p.bounds[row]);
    }
    u
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_keys_and_comments() {
        let s = Settings::from_text("# study\nproblem = control\nmax_outer=40 # short\nlocal-solver = fbs\n\n").unwrap();
        assert_eq!(s.problem, Some(Problem::Control));
        assert_eq!(s.max_outer, Some(40));
        assert_eq!(s.local_solver, Some(LocalSolver::Fbs));
        assert!(Settings::from_text("colour = blue").is_err());
        assert!(Settings::from_text("n 16").is_err());
        assert!(Settings::from_text("n = sixteen").is_err());
    }

    #[test]
    fn flags_override_file() {
        let file = Settings::from_text("n = 32\ntau = 0.1").unwrap();
        let flags = Settings { n: Some(16), ..Default::default() };
        let c = flags.over(file).experiment();
        assert_eq!(c.n, 16);
        assert_eq!(c.tau, 0.1);
        assert_eq!(c.ratio, ExperimentConfig::default().ratio);
    }
}
