use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use asm4vi::experiment::{run_from, write_csv};
use asm4vi::{CoarseSolver, Error, LocalSolver, Problem, ReferencePolicy};
use asm4vi_cli::{random_feasible_start, Settings};
use clap::Parser;

const EXIT_NOT_CONVERGED: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_SOLVER: u8 = 3;

/// Additive Schwarz experiments for fourth-order obstacle problems.
///
/// Writes the convergence history as CSV (to stdout unless --out is given).
/// Exit status: 0 converged, 1 not converged, 2 usage or configuration
/// error, 3 solver failure.
#[derive(Debug, Parser)]
#[command(name = "asm4vi", version)]
struct Cli {
    /// `key = value` settings file; flags override it
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// plate | control
    #[arg(long)]
    problem: Option<Problem>,
    /// Fine cells per side
    #[arg(long)]
    n: Option<usize>,
    /// H/h
    #[arg(long)]
    ratio: Option<usize>,
    /// δ/h
    #[arg(long)]
    overlap: Option<usize>,
    /// 1 or 2
    #[arg(long)]
    levels: Option<usize>,
    /// Damping of the additive update [default: 0.2]
    #[arg(long)]
    tau: Option<f64>,
    /// Target relative energy error [default: 1e-6]
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_outer: Option<usize>,
    /// pdas | fbs
    #[arg(long)]
    local_solver: Option<LocalSolver>,
    /// dual-active-set | dual-fbs
    #[arg(long)]
    coarse_solver: Option<CoarseSolver>,
    /// compute | load:<path> | none
    #[arg(long)]
    reference: Option<ReferencePolicy>,
    /// Write the computed or loaded reference here
    #[arg(long, value_name = "PATH")]
    save_reference: Option<PathBuf>,
    /// Worker threads for the subproblems (default: all cores)
    #[arg(long)]
    threads: Option<usize>,
    /// CSV output file
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Start from a seeded random feasible guess instead of zero
    #[arg(long)]
    seed: Option<u64>,
}

impl Cli {
    fn settings(self) -> Settings {
        Settings {
            problem: self.problem,
            n: self.n,
            ratio: self.ratio,
            overlap: self.overlap,
            levels: self.levels,
            tau: self.tau,
            tol: self.tol,
            max_outer: self.max_outer,
            local_solver: self.local_solver,
            coarse_solver: self.coarse_solver,
            reference: self.reference,
            save_reference: self.save_reference,
            out: self.out,
            threads: self.threads,
            seed: self.seed,
        }
    }
}

fn usage(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(EXIT_USAGE)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let file = match &cli.config {
        Some(path) => match std::fs::read_to_string(path).map_err(Error::from).and_then(|t| Settings::from_text(&t)) {
            Ok(s) => s,
            Err(e) => return usage(format!("{}: {e}", path.display())),
        },
        None => Settings::default(),
    };
    let settings = cli.settings().over(file);
    let config = settings.experiment();
    if let Err(e) = config.validate() {
        return usage(e);
    }
    if let Some(threads) = settings.threads {
        if threads == 0 {
            return usage("--threads must be positive");
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            return usage(e);
        }
    }
    // open the output before the run so that a bad path fails fast
    let mut out: Box<dyn Write> = match &settings.out {
        Some(path) => match File::create(path) {
            Ok(f) => Box::new(BufWriter::new(f)),
            Err(e) => return usage(format!("{}: {e}", path.display())),
        },
        None => Box::new(io::stdout().lock()),
    };

    let seed = settings.seed;
    let outcome = run_from(&config, |p| match seed {
        Some(s) => random_feasible_start(p, s),
        None => nalgebra::DVector::zeros(p.num_free()),
    });
    let outcome = match outcome {
        Ok(o) => o,
        Err(e) if e.is_configuration() => return usage(e),
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_SOLVER);
        }
    };
    if let Err(e) = write_csv(&outcome.record, &mut out).and_then(|_| out.flush()) {
        return usage(format!("writing CSV: {e}"));
    }
    let rec = &outcome.record;
    let last = rec.history.last().expect("history starts with the initial iterate");
    log::info!("{} outer iterations, final energy {:e}", rec.outer_iterations(), last.energy);
    if rec.converged {
        ExitCode::SUCCESS
    } else {
        eprintln!("not converged after {} outer iterations", rec.outer_iterations());
        ExitCode::from(EXIT_NOT_CONVERGED)
    }
}
