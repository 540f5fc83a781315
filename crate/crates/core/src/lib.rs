//! Additive Schwarz methods for discrete fourth-order obstacle problems.
//!
//! The crate discretizes clamped-plate and optimal-control obstacle problems
//! on the unit square with Bogner–Fox–Schmit elements and solves them with
//! one- and two-level additive Schwarz iterations. The two-level variant uses
//! a partition-of-unity coarse space; [`analysis`] holds the constructive
//! positivity-preserving coarse interpolation that makes that coarse space
//! compatible with the obstacle.

pub mod analysis;
pub mod assembly;
pub mod bfs;
pub mod error;
pub mod experiment;
pub mod field;
pub mod grid;
pub mod linalg;
pub mod qp;
pub mod reference;
pub mod schwarz;
pub mod space;

pub use assembly::{assemble, DiscreteProblem, ProblemSpec};
pub use bfs::{interpolate, BilinearForm, DofVector};
pub use error::{Error, Result};
pub use grid::{build_decomposition, build_fine_grid, DomainDecomposition, Grid, Hierarchy, Patch};
pub use experiment::{ExperimentConfig, ExperimentOutcome, Problem, ReferencePolicy};
pub use qp::{BoundQP, DualQP, QpSolution};
pub use reference::{compute_reference, Reference};
pub use schwarz::{CoarseSolver, ConvergenceRecord, IterationRecord, LocalSolver, SchwarzConfig, SchwarzSolver};
pub use space::{build_coarse_space, build_local_spaces, CoarseSpace, LocalSpace};
