//! Convergence report shared by the multigrid and Krylov solvers.

/// Outcome of one iterative solve.
///
/// `history[k]` is the relative residual after iteration `k + 1`; the
/// relative residual is measured against the right-hand side norm, so a
/// zero right-hand side converges immediately with an empty history.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub iterations: usize,
    pub converged: bool,
    /// Relative residual after each iteration, in the solver's own metric
    /// (true residual for CG and multigrid, preconditioned for GMRES).
    pub history: Vec<f64>,
    /// True relative residual of the returned iterate.
    pub final_relres: f64,
    /// Wall-clock seconds spent inside the solver.
    pub elapsed: f64,
}

impl SolveReport {
    pub fn trivial() -> Self {
        SolveReport { iterations: 0, converged: true, history: Vec::new(), final_relres: 0.0, elapsed: 0.0 }
    }
}
