//! Geometric multigrid with damped-Jacobi smoothing.
//!
//! Coarse node `j` sits at fine node `2j + 1` (0-based interiors), so a
//! grid with `m` interior nodes coarsens to `m / 2`. Prolongation carries
//! weights `[1/2, 1, 1/2]`, restriction is its exact transpose, and the
//! two-dimensional transfers are the tensor products of the 1-d ones on
//! the x-fastest layout.
//!
//! Inside the cycle the restricted residual is averaged by `1/2` per
//! dimension (full weighting). That normalization is what makes a
//! rediscretized coarse operator consistent with the fine one: for the
//! second-order limit, `(1/2) P' A_h P` equals the coarse-grid matrix
//! `A_{2h}` exactly. Coarse operators come either from rediscretizing the
//! problem (the caller supplies a constructor per shape) or from the
//! Galerkin product `R A P` with the same weighting, formed densely column
//! by column.

use crate::error::Error;
use crate::fastlinalg::{materialize_dense, DenseOp, LinearOp};
use crate::report::SolveReport;
use crate::Result;
use nalgebra::{DMatrix, DVector, Dyn, LU};

/// Interior-node counts of a structured grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridShape {
    One(usize),
    Two(usize, usize),
}

impl GridShape {
    pub fn len(&self) -> usize {
        match *self {
            GridShape::One(m) => m,
            GridShape::Two(m1, m2) => m1 * m2,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Next coarser shape, if every axis still has an interior node.
    pub fn coarsen(&self) -> Option<GridShape> {
        match *self {
            GridShape::One(m) => (m / 2 >= 1).then_some(GridShape::One(m / 2)),
            GridShape::Two(m1, m2) => {
                (m1 / 2 >= 1 && m2 / 2 >= 1).then_some(GridShape::Two(m1 / 2, m2 / 2))
            }
        }
    }
}

/// Prolongation/restriction pair between two shapes.
#[derive(Debug, Clone, Copy)]
pub struct TransferOp {
    fine: GridShape,
    coarse: GridShape,
}

fn prolong_line(coarse: &[f64], fine: &mut [f64]) {
    let mc = coarse.len();
    fine.fill(0.0);
    for (j, &c) in coarse.iter().enumerate() {
        fine[2 * j + 1] = c;
    }
    for i in (0..fine.len()).step_by(2) {
        let j = i / 2;
        let mut v = 0.0;
        if j < mc {
            v += 0.5 * coarse[j];
        }
        if j >= 1 {
            v += 0.5 * coarse[j - 1];
        }
        fine[i] = v;
    }
}

fn restrict_line(fine: &[f64], coarse: &mut [f64]) {
    let mc = coarse.len();
    for (j, c) in coarse.iter_mut().enumerate() {
        *c = fine[2 * j + 1];
    }
    for i in (0..fine.len()).step_by(2) {
        let j = i / 2;
        if j < mc {
            coarse[j] += 0.5 * fine[i];
        }
        if j >= 1 {
            coarse[j - 1] += 0.5 * fine[i];
        }
    }
}

impl TransferOp {
    pub fn new(fine: GridShape, coarse: GridShape) -> Result<Self> {
        let ok = match (fine, coarse) {
            (GridShape::One(mf), GridShape::One(mc)) => mc == mf / 2 && mc >= 1,
            (GridShape::Two(f1, f2), GridShape::Two(c1, c2)) => {
                c1 == f1 / 2 && c2 == f2 / 2 && c1 >= 1 && c2 >= 1
            }
            _ => false,
        };
        if !ok {
            return Err(Error::InvalidParameter(format!(
                "shapes {fine:?} and {coarse:?} are not a coarsening pair"
            )));
        }
        Ok(TransferOp { fine, coarse })
    }

    pub fn fine(&self) -> GridShape {
        self.fine
    }

    pub fn coarse(&self) -> GridShape {
        self.coarse
    }

    /// Full-weighting factor: `1/2` per dimension on top of the plain
    /// transpose.
    pub fn weighting_scale(&self) -> f64 {
        match self.fine {
            GridShape::One(_) => 0.5,
            GridShape::Two(_, _) => 0.25,
        }
    }

    pub fn prolong(&self, coarse: &[f64]) -> Vec<f64> {
        assert_eq!(coarse.len(), self.coarse.len());
        match (self.fine, self.coarse) {
            (GridShape::One(mf), GridShape::One(_)) => {
                let mut fine = vec![0.0; mf];
                prolong_line(coarse, &mut fine);
                fine
            }
            (GridShape::Two(f1, f2), GridShape::Two(c1, c2)) => {
                // x sweep on coarse rows, then y sweep on fine columns
                let mut half = vec![0.0; f1 * c2];
                for j2 in 0..c2 {
                    prolong_line(&coarse[j2 * c1..(j2 + 1) * c1], &mut half[j2 * f1..(j2 + 1) * f1]);
                }
                let mut fine = vec![0.0; f1 * f2];
                let mut col_c = vec![0.0; c2];
                let mut col_f = vec![0.0; f2];
                for i1 in 0..f1 {
                    for j2 in 0..c2 {
                        col_c[j2] = half[i1 + f1 * j2];
                    }
                    prolong_line(&col_c, &mut col_f);
                    for i2 in 0..f2 {
                        fine[i1 + f1 * i2] = col_f[i2];
                    }
                }
                fine
            }
            _ => unreachable!("validated in new"),
        }
    }

    pub fn restrict(&self, fine: &[f64]) -> Vec<f64> {
        assert_eq!(fine.len(), self.fine.len());
        match (self.fine, self.coarse) {
            (GridShape::One(_), GridShape::One(mc)) => {
                let mut coarse = vec![0.0; mc];
                restrict_line(fine, &mut coarse);
                coarse
            }
            (GridShape::Two(f1, f2), GridShape::Two(c1, c2)) => {
                let mut half = vec![0.0; f1 * c2];
                let mut col_f = vec![0.0; f2];
                let mut col_c = vec![0.0; c2];
                for i1 in 0..f1 {
                    for i2 in 0..f2 {
                        col_f[i2] = fine[i1 + f1 * i2];
                    }
                    restrict_line(&col_f, &mut col_c);
                    for j2 in 0..c2 {
                        half[i1 + f1 * j2] = col_c[j2];
                    }
                }
                let mut coarse = vec![0.0; c1 * c2];
                for j2 in 0..c2 {
                    restrict_line(&half[j2 * f1..(j2 + 1) * f1], &mut coarse[j2 * c1..(j2 + 1) * c1]);
                }
                coarse
            }
            _ => unreachable!("validated in new"),
        }
    }
}

/// V-cycle shape: pre/post smoothing counts, damping weight, and the size
/// at which the hierarchy bottoms out in a direct solve.
#[derive(Debug, Clone, Copy)]
pub struct CycleConfig {
    pub nu1: usize,
    pub nu2: usize,
    pub omega: f64,
    pub min_size: usize,
}

impl CycleConfig {
    pub fn new(nu1: usize, nu2: usize, omega: f64) -> Self {
        CycleConfig { nu1, nu2, omega, min_size: 16 }
    }
}

impl Default for CycleConfig {
    fn default() -> Self {
        CycleConfig::new(1, 1, 2.0 / 3.0)
    }
}

struct Level {
    op: Box<dyn LinearOp>,
    inv_diag: Vec<f64>,
    shape: GridShape,
}

/// Operator hierarchy ready for V-cycles.
pub struct Hierarchy {
    levels: Vec<Level>,
    transfers: Vec<TransferOp>,
    coarse_lu: LU<f64, Dyn, Dyn>,
    cfg: CycleConfig,
}

/// Size caps for the dense Galerkin construction.
#[derive(Debug, Clone, Copy)]
pub struct GalerkinCaps {
    pub max_size_1d: usize,
    pub max_per_dim_2d: usize,
}

impl Default for GalerkinCaps {
    fn default() -> Self {
        GalerkinCaps { max_size_1d: 1 << 12, max_per_dim_2d: 1 << 5 }
    }
}

fn level_from_op(op: Box<dyn LinearOp>, shape: GridShape) -> Result<Level> {
    if op.size() != shape.len() {
        return Err(Error::DimensionMismatch {
            expected: shape.len(),
            found: op.size(),
            context: "hierarchy level",
        });
    }
    let mut inv_diag = op.diagonal();
    for (i, d) in inv_diag.iter_mut().enumerate() {
        if *d == 0.0 {
            return Err(Error::ZeroPivot { index: i });
        }
        *d = 1.0 / *d;
    }
    Ok(Level { op, inv_diag, shape })
}

fn finish_hierarchy(levels: Vec<Level>, transfers: Vec<TransferOp>, cfg: CycleConfig) -> Result<Hierarchy> {
    let coarsest = levels.last().expect("at least one level");
    let dense = materialize_dense(coarsest.op.as_ref(), coarsest.shape.len())?;
    let coarse_lu = dense.lu();
    Ok(Hierarchy { levels, transfers, coarse_lu, cfg })
}

/// Build a hierarchy by rediscretizing: `make_op` constructs the operator
/// for any requested shape and level (0 = finest). The mesh spacing must
/// double per level — deriving it from the coarse point count instead
/// drifts away from true doubling and the cycle loses its contraction.
pub fn build_hierarchy_geometric(
    shape: GridShape,
    cfg: CycleConfig,
    make_op: &dyn Fn(GridShape, usize) -> Result<Box<dyn LinearOp>>,
) -> Result<Hierarchy> {
    if shape.is_empty() {
        return Err(Error::InvalidParameter("empty grid".into()));
    }
    let mut levels = vec![level_from_op(make_op(shape, 0)?, shape)?];
    let mut transfers = Vec::new();
    let mut current = shape;
    while current.len() > cfg.min_size {
        let Some(next) = current.coarsen() else { break };
        transfers.push(TransferOp::new(current, next)?);
        levels.push(level_from_op(make_op(next, levels.len())?, next)?);
        current = next;
    }
    finish_hierarchy(levels, transfers, cfg)
}

/// Build a hierarchy from the fine operator alone: every coarse operator
/// is the dense product `R A P`, assembled column by column.
pub fn build_hierarchy_galerkin(
    fine_op: Box<dyn LinearOp>,
    shape: GridShape,
    cfg: CycleConfig,
    caps: GalerkinCaps,
) -> Result<Hierarchy> {
    if shape.is_empty() {
        return Err(Error::InvalidParameter("empty grid".into()));
    }
    let within = match shape {
        GridShape::One(m) => m <= caps.max_size_1d,
        GridShape::Two(m1, m2) => m1 <= caps.max_per_dim_2d && m2 <= caps.max_per_dim_2d,
    };
    if !within {
        let cap = match shape {
            GridShape::One(_) => caps.max_size_1d,
            GridShape::Two(_, _) => caps.max_per_dim_2d,
        };
        return Err(Error::SizeCapExceeded { size: shape.len(), cap });
    }

    let mut levels = vec![level_from_op(fine_op, shape)?];
    let mut transfers = Vec::new();
    let mut current = shape;
    while current.len() > cfg.min_size {
        let Some(next) = current.coarsen() else { break };
        let transfer = TransferOp::new(current, next)?;
        let scale = transfer.weighting_scale();
        let fine = levels.last().expect("nonempty").op.as_ref();
        let nc = next.len();
        let mut coarse = DMatrix::<f64>::zeros(nc, nc);
        let mut basis = vec![0.0; nc];
        for j in 0..nc {
            basis[j] = 1.0;
            let tall = transfer.prolong(&basis);
            basis[j] = 0.0;
            let applied = fine.apply(&tall);
            let col = transfer.restrict(&applied);
            for (i, v) in col.iter().enumerate() {
                coarse[(i, j)] = scale * v;
            }
        }
        transfers.push(transfer);
        levels.push(level_from_op(Box::new(DenseOp::new(coarse)), next)?);
        current = next;
    }
    finish_hierarchy(levels, transfers, cfg)
}

fn jacobi_sweep(op: &dyn LinearOp, inv_diag: &[f64], omega: f64, x: &mut [f64], b: &[f64]) {
    let r = op.apply(x);
    for i in 0..x.len() {
        x[i] += omega * inv_diag[i] * (b[i] - r[i]);
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl Hierarchy {
    pub fn shape(&self) -> GridShape {
        self.levels[0].shape
    }

    pub fn size(&self) -> usize {
        self.levels[0].shape.len()
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn config(&self) -> &CycleConfig {
        &self.cfg
    }

    pub fn fine_op(&self) -> &dyn LinearOp {
        self.levels[0].op.as_ref()
    }

    fn v_cycle(&self, level: usize, x: &mut [f64], b: &[f64]) {
        let lvl = &self.levels[level];
        if level + 1 == self.levels.len() {
            let rhs = DVector::from_column_slice(b);
            let sol = self.coarse_lu.solve(&rhs).expect("coarsest factor is regular");
            x.copy_from_slice(sol.as_slice());
            return;
        }
        for _ in 0..self.cfg.nu1 {
            jacobi_sweep(lvl.op.as_ref(), &lvl.inv_diag, self.cfg.omega, x, b);
        }
        let ax = lvl.op.apply(x);
        let residual: Vec<f64> = b.iter().zip(ax.iter()).map(|(bi, ai)| bi - ai).collect();
        let scale = self.transfers[level].weighting_scale();
        let mut coarse_b = self.transfers[level].restrict(&residual);
        for v in coarse_b.iter_mut() {
            *v *= scale;
        }
        let mut coarse_x = vec![0.0; coarse_b.len()];
        self.v_cycle(level + 1, &mut coarse_x, &coarse_b);
        let correction = self.transfers[level].prolong(&coarse_x);
        for (xi, c) in x.iter_mut().zip(correction.iter()) {
            *xi += c;
        }
        for _ in 0..self.cfg.nu2 {
            jacobi_sweep(lvl.op.as_ref(), &lvl.inv_diag, self.cfg.omega, x, b);
        }
    }

    /// One V-cycle from a zero initial guess; linear in `b`, which makes
    /// it usable as a preconditioner.
    pub fn apply_cycle(&self, b: &[f64]) -> Vec<f64> {
        self.apply_cycles(b, 1)
    }

    /// `nu` stationary V-cycle iterations from a zero guess; still linear
    /// in `b`.
    pub fn apply_cycles(&self, b: &[f64], nu: usize) -> Vec<f64> {
        assert_eq!(b.len(), self.size());
        let mut x = vec![0.0; b.len()];
        for _ in 0..nu {
            self.v_cycle(0, &mut x, b);
        }
        x
    }
}

/// Run V-cycles until `||b - A x|| <= tol * ||b||` or `maxit` cycles.
pub fn mg_solve(
    hierarchy: &Hierarchy,
    b: &[f64],
    x0: &[f64],
    tol: f64,
    maxit: usize,
) -> Result<(Vec<f64>, SolveReport)> {
    let n = hierarchy.size();
    if b.len() != n || x0.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: b.len(), context: "mg solve" });
    }
    let start = std::time::Instant::now();
    if norm2(b) == 0.0 {
        return Ok((vec![0.0; n], SolveReport::trivial()));
    }
    let op = hierarchy.fine_op();
    let mut x = x0.to_vec();
    // Residuals are measured against the initial residual, so a warm start
    // has to improve on what it inherited rather than coast on a small
    // starting residual.
    let ax0 = op.apply(&x);
    let r0_norm: f64 = b
        .iter()
        .zip(ax0.iter())
        .map(|(bi, ai)| (bi - ai) * (bi - ai))
        .sum::<f64>()
        .sqrt();
    if r0_norm == 0.0 {
        let mut report = SolveReport::trivial();
        report.elapsed = start.elapsed().as_secs_f64();
        return Ok((x, report));
    }
    let mut report = SolveReport {
        iterations: 0,
        converged: false,
        history: Vec::new(),
        final_relres: f64::NAN,
        elapsed: 0.0,
    };
    for _ in 0..maxit {
        hierarchy.v_cycle(0, &mut x, b);
        report.iterations += 1;
        let ax = op.apply(&x);
        let res: f64 = b
            .iter()
            .zip(ax.iter())
            .map(|(bi, ai)| (bi - ai) * (bi - ai))
            .sum::<f64>()
            .sqrt();
        let relres = res / r0_norm;
        report.history.push(relres);
        if relres <= tol {
            report.converged = true;
            break;
        }
    }
    report.final_relres = *report.history.last().expect("maxit >= 1");
    report.elapsed = start.elapsed().as_secs_f64();
    Ok((x, report))
}
