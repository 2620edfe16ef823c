//! Solver toolkit for one- and two-dimensional tempered fractional diffusion
//! problems discretized with shifted Grunwald stencils and Crank-Nicolson
//! time stepping.
//!
//! The crate is organized bottom-up:
//!
//! * [`fastlinalg`]: FFT-based Toeplitz/circulant/block-Toeplitz kernels,
//!   dense materialization oracles, tridiagonal and banded direct solvers.
//! * [`stencil`]: Grunwald weights, tempered stencil coefficients and the
//!   Toeplitz coefficient matrix they generate.
//! * [`operator`]: matrix-free discrete operators for the steady and
//!   Crank-Nicolson schemes, together with boundary handling.
//! * [`symbol`]: generating-symbol evaluation, damped-Jacobi weight
//!   estimates, stability and eigenvalue-distribution diagnostics.
//! * [`multigrid`]: grid transfers, geometric and Galerkin hierarchies,
//!   V-cycles and a stand-alone multigrid solver.
//! * [`krylov`]: CG and full GMRES with the preconditioner family used by
//!   the experiment plans (multigrid, circulant, Laplacian-based).
//! * [`problems`]: the bundled example problems, manufactured forcing,
//!   time marching, steady solves and consistency studies.
//! * [`experiment`]: parameter sweeps producing iteration-count tables.

pub mod error;
pub mod fastlinalg;
pub mod stencil;
pub mod operator;
pub mod symbol;
pub mod multigrid;
pub mod krylov;
pub mod problems;
pub mod experiment;
mod report;

pub use error::Error;
pub use report::SolveReport;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
