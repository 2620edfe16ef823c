//! Parameter-lattice experiment plans and their parallel execution.
//!
//! A plan is the cross product of tempering values, fractional orders,
//! grid sizes, and solver entries for one catalogue problem. Running it
//! yields one row per combination, in the deterministic order of the
//! nested lattice, regardless of how many worker threads execute it.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::error::Error;
use crate::multigrid::GalerkinCaps;
use crate::problems::{
    cn_march, cn_march_2d, steady_solve, Coarsening, OmegaChoice, PrecondKind, Problem,
    SolverConfig, SolverKind,
};
use crate::Result;

/// One solver/preconditioner column of a results table.
#[derive(Debug, Clone)]
pub struct SolverEntry {
    /// Short column label, e.g. "v11", "pc".
    pub label: String,
    pub solver: SolverKind,
    pub precond: PrecondKind,
    pub coarsening: Coarsening,
    pub nu1: usize,
    pub nu2: usize,
    pub omega: OmegaChoice,
}

impl SolverEntry {
    fn new(label: &str, solver: SolverKind, precond: PrecondKind) -> Self {
        SolverEntry {
            label: label.into(),
            solver,
            precond,
            coarsening: Coarsening::Galerkin,
            nu1: 1,
            nu2: 1,
            omega: OmegaChoice::Auto,
        }
    }

    /// Standalone V-cycle solver with a fixed Jacobi weight.
    pub fn v_cycle(nu1: usize, nu2: usize, omega: OmegaChoice) -> Self {
        let mut e = SolverEntry::new("v", SolverKind::Mg, PrecondKind::None);
        e.label = format!("v{nu1}{nu2}");
        e.nu1 = nu1;
        e.nu2 = nu2;
        e.omega = omega;
        e
    }

    /// Name for the CSV `solver` column.
    pub fn solver_name(&self) -> &'static str {
        match self.solver {
            SolverKind::Cg => "cg",
            SolverKind::Gmres => "gmres",
            SolverKind::Mg => "mg",
        }
    }

    /// Name for the CSV `precond` column.
    pub fn precond_name(&self) -> String {
        match self.precond {
            PrecondKind::None => "none".into(),
            PrecondKind::Multigrid => format!("mg:{},{}", self.nu1, self.nu2),
            PrecondKind::Circulant => "circulant".into(),
            PrecondKind::Laplacian => "laplacian".into(),
            PrecondKind::LaplacianInner(nu) => format!("laplacian-inner:{nu}"),
        }
    }
}

/// Cross product of parameters to sweep for one problem.
#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    pub problem: usize,
    /// (alpha, beta) pairs; beta is None for one-dimensional problems.
    pub orders: Vec<(f64, Option<f64>)>,
    /// Tempering values; two-dimensional runs use the same value per axis.
    pub lambdas: Vec<f64>,
    pub gamma3: f64,
    /// (M, N) pairs; N is None for steady problems.
    pub sizes: Vec<(usize, Option<usize>)>,
    pub entries: Vec<SolverEntry>,
    pub tol: f64,
    pub maxit: usize,
    pub caps: GalerkinCaps,
    /// Repetitions for timing; iteration counts must not change across them.
    pub reps: usize,
}

/// One fully resolved run of a plan.
#[derive(Debug, Clone)]
pub struct RunSetting {
    pub problem: usize,
    pub lambda: f64,
    pub alpha: f64,
    pub beta: Option<f64>,
    pub m: usize,
    pub steps: Option<usize>,
    pub entry: SolverEntry,
}

/// One output row; metric fields are NaN when `failure` is set.
#[derive(Debug, Clone)]
pub struct ResultRow {
    pub problem: usize,
    pub lambda: f64,
    pub alpha: f64,
    pub beta: Option<f64>,
    pub m: usize,
    pub steps: Option<usize>,
    pub label: String,
    pub solver: &'static str,
    pub precond: String,
    /// Jacobi weight actually used; NaN for runs without a smoother.
    pub omega: f64,
    pub avg_iters: f64,
    pub cpu_seconds: f64,
    pub final_relres: f64,
    pub error_inf: f64,
    pub error_l2: f64,
    pub failure: Option<String>,
}

impl ExperimentPlan {
    /// Preset plan reproducing one of the five benchmark tables.
    pub fn table(table: usize) -> Result<Self> {
        use OmegaChoice::{Auto, Fixed};
        use PrecondKind as P;
        use SolverKind as S;

        let fixed_sweep = [0.5, 0.6, 0.7, 0.8, 0.9];
        match table {
            1 => Ok(ExperimentPlan {
                problem: 1,
                orders: vec![(1.2, None), (1.5, None), (1.8, None)],
                lambdas: vec![0.0, 2.0, 10.0],
                gamma3: 0.01,
                sizes: (6..=9).map(|k| (1 << k, Some(1 << k))).collect(),
                entries: fixed_sweep
                    .iter()
                    .map(|&w| SolverEntry::v_cycle(1, 1, Fixed(w)))
                    .chain([SolverEntry::v_cycle(1, 1, Auto)])
                    .collect(),
                tol: 1e-7,
                maxit: 2000,
                caps: GalerkinCaps::default(),
                reps: 1,
            }),
            2 | 3 => {
                let (krylov, name) =
                    if table == 2 { (S::Cg, "cg") } else { (S::Gmres, "gmres") };
                let mut entries = vec![SolverEntry::new(name, krylov, P::None)];
                if table == 2 {
                    entries
                        .extend(fixed_sweep.iter().map(|&w| SolverEntry::v_cycle(1, 1, Fixed(w))));
                }
                entries.push(SolverEntry::v_cycle(1, 1, Auto));
                entries.push(SolverEntry::v_cycle(0, 1, Auto));
                let mut pv11 = SolverEntry::new("pv11", krylov, P::Multigrid);
                pv11.label = "pv11".into();
                entries.push(pv11);
                if table == 3 {
                    let mut pv01 = SolverEntry::new("pv01", krylov, P::Multigrid);
                    pv01.nu1 = 0;
                    entries.push(pv01);
                }
                entries.push(SolverEntry::new("pc", krylov, P::Circulant));
                entries.push(SolverEntry::new("p2", krylov, P::Laplacian));
                Ok(ExperimentPlan {
                    problem: table,
                    orders: vec![(1.4, None), (1.7, None), (1.9, None)],
                    lambdas: vec![3.0],
                    gamma3: 0.00235,
                    sizes: (7..=10).map(|k| (1 << k, None)).collect(),
                    entries,
                    tol: 1e-7,
                    maxit: 2000,
                    caps: GalerkinCaps::default(),
                    reps: 1,
                })
            }
            4 | 5 => {
                let mut pv11 = SolverEntry::new("pv11", S::Gmres, P::Multigrid);
                pv11.coarsening = Coarsening::Geometric;
                let entries = vec![
                    SolverEntry::new("gmres", S::Gmres, P::None),
                    SolverEntry::new("p2~", S::Gmres, P::Laplacian),
                    SolverEntry::new("p2i1", S::Gmres, P::LaplacianInner(1)),
                    SolverEntry::new("p2i2", S::Gmres, P::LaplacianInner(2)),
                    SolverEntry::new("pv~11", S::Gmres, P::Multigrid),
                    pv11,
                    SolverEntry::new("pc", S::Gmres, P::Circulant),
                ];
                Ok(ExperimentPlan {
                    problem: table,
                    orders: vec![(1.8, Some(1.6))],
                    lambdas: vec![0.0, 1.0, 5.0],
                    gamma3: 0.0235,
                    sizes: vec![(16, Some(16)), (32, Some(32))],
                    entries,
                    tol: 1e-7,
                    maxit: 2000,
                    caps: GalerkinCaps { max_per_dim_2d: 1 << 7, ..GalerkinCaps::default() },
                    reps: 1,
                })
            }
            _ => Err(Error::InvalidParameter(format!("no table {table}"))),
        }
    }

    /// All runs of the plan, in deterministic lattice order.
    pub fn runs(&self) -> Vec<RunSetting> {
        let mut out = Vec::new();
        for &lambda in &self.lambdas {
            for &(alpha, beta) in &self.orders {
                for &(m, steps) in &self.sizes {
                    for entry in &self.entries {
                        out.push(RunSetting {
                            problem: self.problem,
                            lambda,
                            alpha,
                            beta,
                            m,
                            steps,
                            entry: entry.clone(),
                        });
                    }
                }
            }
        }
        out
    }

    fn config(&self, entry: &SolverEntry) -> SolverConfig {
        SolverConfig {
            solver: entry.solver,
            precond: entry.precond,
            coarsening: entry.coarsening,
            omega: entry.omega,
            nu1: entry.nu1,
            nu2: entry.nu2,
            tol: self.tol,
            maxit: self.maxit,
            caps: self.caps,
            ..SolverConfig::default()
        }
    }
}

fn execute(plan: &ExperimentPlan, setting: &RunSetting) -> ResultRow {
    let mut row = ResultRow {
        problem: setting.problem,
        lambda: setting.lambda,
        alpha: setting.alpha,
        beta: setting.beta,
        m: setting.m,
        steps: setting.steps,
        label: setting.entry.label.clone(),
        solver: setting.entry.solver_name(),
        precond: setting.entry.precond_name(),
        omega: f64::NAN,
        avg_iters: f64::NAN,
        cpu_seconds: f64::NAN,
        final_relres: f64::NAN,
        error_inf: f64::NAN,
        error_l2: f64::NAN,
        failure: None,
    };
    let outcome = Problem::example(setting.problem).and_then(|mut p| {
        p.alpha = setting.alpha;
        if let Some(b) = setting.beta {
            p.beta = b;
        }
        p.lambda1 = setting.lambda;
        if p.two_d {
            p.lambda2 = setting.lambda;
        }
        p.gamma3 = plan.gamma3;
        let cfg = plan.config(&setting.entry);
        let mut best: Option<crate::problems::RunResult> = None;
        for _ in 0..plan.reps.max(1) {
            let r = match (setting.steps, p.two_d) {
                (None, false) => steady_solve(&p, setting.m, &cfg)?,
                (Some(n), false) => cn_march(&p, setting.m, n, &cfg)?,
                (Some(n), true) => cn_march_2d(&p, setting.m, setting.m, n, &cfg)?,
                (None, true) => {
                    return Err(Error::Unsupported("steady two-dimensional run".into()))
                }
            };
            best = Some(match best {
                Some(prev) if prev.elapsed <= r.elapsed => prev,
                _ => r,
            });
        }
        Ok(best.expect("reps >= 1"))
    });
    match outcome {
        Ok(r) => {
            row.omega = r.omega;
            row.avg_iters = r.avg_iterations;
            row.cpu_seconds = r.elapsed;
            row.final_relres = r.final_relres;
            row.error_inf = r.error_inf;
            row.error_l2 = r.error_l2;
        }
        Err(e) => row.failure = Some(e.to_string()),
    }
    row
}

fn thread_count(runs: usize) -> usize {
    let available = std::env::var("TFDE_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    available.min(runs.max(1))
}

/// Execute every run of the plan. Individual failures are recorded in
/// their rows; the row order matches `plan.runs()` regardless of the
/// number of worker threads (`TFDE_THREADS` overrides the default).
pub fn run_experiment(plan: &ExperimentPlan) -> Vec<ResultRow> {
    let settings = plan.runs();
    if settings.is_empty() {
        return Vec::new();
    }
    let workers = thread_count(settings.len());
    if workers == 1 {
        return settings.iter().map(|s| execute(plan, s)).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<ResultRow>>> =
        settings.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= settings.len() {
                    break;
                }
                let row = execute(plan, &settings[i]);
                *slots[i].lock().expect("unpoisoned slot") = Some(row);
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| slot.into_inner().expect("unpoisoned slot").expect("all slots filled"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_plan_produces_no_rows() {
        let mut plan = ExperimentPlan::table(1).unwrap();
        plan.sizes.clear();
        assert!(run_experiment(&plan).is_empty());
    }

    #[test]
    fn table_plans_enumerate_expected_grids() {
        let t1 = ExperimentPlan::table(1).unwrap();
        assert_eq!(t1.runs().len(), 3 * 3 * 4 * 6);
        let t2 = ExperimentPlan::table(2).unwrap();
        assert_eq!(t2.entries.len(), 11);
        let t3 = ExperimentPlan::table(3).unwrap();
        assert_eq!(t3.entries.len(), 7);
        assert!(ExperimentPlan::table(6).is_err());
    }

    #[test]
    fn rows_follow_lattice_order_and_are_deterministic() {
        let mut plan = ExperimentPlan::table(1).unwrap();
        plan.lambdas = vec![2.0];
        plan.orders = vec![(1.5, None)];
        plan.sizes = vec![(32, Some(32))];
        plan.entries = vec![
            SolverEntry::v_cycle(1, 1, OmegaChoice::Fixed(0.7)),
            SolverEntry::v_cycle(1, 1, OmegaChoice::Auto),
        ];
        let rows = run_experiment(&plan);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].label, "v11");
        assert!((rows[0].omega - 0.7).abs() <= 1e-15);
        assert!(rows[0].failure.is_none(), "{:?}", rows[0].failure);
        assert!(rows[0].avg_iters >= 1.0);
        let again = run_experiment(&plan);
        assert_eq!(rows[0].avg_iters, again[0].avg_iters);
        assert_eq!(rows[1].avg_iters, again[1].avg_iters);
    }

    #[test]
    fn failures_are_recorded_not_fatal() {
        let mut plan = ExperimentPlan::table(2).unwrap();
        plan.sizes = vec![(64, None)];
        plan.orders = vec![(1.7, None)];
        plan.maxit = 2;
        plan.entries = vec![SolverEntry::new("cg", SolverKind::Cg, PrecondKind::None)];
        let rows = run_experiment(&plan);
        assert_eq!(rows.len(), 1);
        assert!(rows[0].failure.is_some());
        assert!(rows[0].avg_iters.is_nan());
    }

    #[test]
    fn serial_and_parallel_runs_agree() {
        let mut plan = ExperimentPlan::table(2).unwrap();
        plan.sizes = vec![(64, None)];
        plan.entries.truncate(3);
        let rows = run_experiment(&plan);
        let serial: Vec<ResultRow> =
            plan.runs().iter().map(|s| execute(&plan, s)).collect();
        assert_eq!(rows.len(), serial.len());
        for (a, b) in rows.iter().zip(serial.iter()) {
            assert_eq!(a.label, b.label);
            assert_eq!(a.avg_iters, b.avg_iters);
            assert_eq!(a.error_inf, b.error_inf);
        }
    }
}
