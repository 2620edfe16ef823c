//! Conjugate gradients and full GMRES with the preconditioners used by
//! the solver sweeps.
//!
//! Counting convention matches MATLAB's `pcg`/`gmres`: one iteration per
//! search direction (CG) or Arnoldi step (GMRES), a warm start that
//! already meets the tolerance reports zero iterations, and convergence is
//! declared on `||b - A x|| <= tol ||b||` (CG) or its left-preconditioned
//! counterpart `||P^{-1}(b - A x)|| <= tol ||P^{-1} b||` (GMRES).

use crate::error::Error;
use crate::fastlinalg::{
    chan_circulant, fft, tridiag_solve, BandedLu, BandedMatrix, CirculantDescriptor, LinearOp,
};
use crate::multigrid::Hierarchy;
use crate::operator::{Operator1D, Operator2D};
use crate::report::SolveReport;
use crate::Result;
use rustfft::num_complex::Complex;

/// Stopping parameters shared by both solvers.
#[derive(Debug, Clone, Copy)]
pub struct KrylovConfig {
    pub tol: f64,
    pub maxit: usize,
}

impl Default for KrylovConfig {
    fn default() -> Self {
        KrylovConfig { tol: 1e-7, maxit: 1000 }
    }
}

/// Left preconditioners. Each application solves `P z = r` for one fixed,
/// linear `P`.
pub enum Preconditioner {
    Identity,
    /// One V-cycle of the given hierarchy from a zero guess.
    Cycle(Hierarchy),
    /// `nu` stationary V-cycle iterations from a zero guess.
    Cycles(Hierarchy, usize),
    /// Circulant approximation of a constant-coefficient operator.
    Circulant(CirculantDescriptor),
    /// Two-level circulant approximation diagonalized by the 2-d FFT.
    Spectral2D { m1: usize, m2: usize, denom: Vec<f64> },
    /// Second-order part of a 1-d operator, solved directly.
    Tridiag { sub: Vec<f64>, diag: Vec<f64>, sup: Vec<f64> },
    /// Second-order part of a 2-d operator, banded LU factor.
    Banded(BandedLu),
}

impl Preconditioner {
    /// Expected vector length; `None` when any length works.
    pub fn size(&self) -> Option<usize> {
        match self {
            Preconditioner::Identity => None,
            Preconditioner::Cycle(h) | Preconditioner::Cycles(h, _) => Some(h.size()),
            Preconditioner::Circulant(c) => Some(c.size()),
            Preconditioner::Spectral2D { m1, m2, .. } => Some(m1 * m2),
            Preconditioner::Tridiag { diag, .. } => Some(diag.len()),
            Preconditioner::Banded(lu) => Some(lu.size()),
        }
    }

    pub fn apply(&self, r: &[f64]) -> Result<Vec<f64>> {
        if let Some(n) = self.size() {
            if r.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: r.len(),
                    context: "preconditioner",
                });
            }
        }
        match self {
            Preconditioner::Identity => Ok(r.to_vec()),
            Preconditioner::Cycle(h) => Ok(h.apply_cycle(r)),
            Preconditioner::Cycles(h, nu) => Ok(h.apply_cycles(r, *nu)),
            Preconditioner::Circulant(c) => c.solve(r),
            Preconditioner::Spectral2D { m1, m2, denom } => {
                let mut buf: Vec<Complex<f64>> =
                    r.iter().map(|&x| Complex::new(x, 0.0)).collect();
                fft::forward_2d(&mut buf, *m1, *m2);
                for (z, d) in buf.iter_mut().zip(denom.iter()) {
                    *z /= *d;
                }
                fft::inverse_2d(&mut buf, *m1, *m2);
                Ok(buf.iter().map(|z| z.re).collect())
            }
            Preconditioner::Tridiag { sub, diag, sup } => tridiag_solve(sub, diag, sup, r),
            Preconditioner::Banded(lu) => Ok(lu.solve(r)),
        }
    }
}

/// Chan circulant of the whole operator; needs constant coefficients.
pub fn circulant_1d(op: &Operator1D) -> Result<Preconditioner> {
    let desc = op.as_toeplitz().ok_or_else(|| {
        Error::Unsupported("circulant preconditioner needs constant coefficients".into())
    })?;
    Ok(Preconditioner::Circulant(chan_circulant(&desc)))
}

/// Two-dimensional circulant preconditioner: per-axis Chan circulants of
/// the symmetrized coefficient matrices, weighted by the grid means of the
/// diffusion fields and diagonalized by the 2-d FFT.
pub fn circulant_2d(op: &Operator2D) -> Result<Preconditioner> {
    let (m1, m2) = op.sizes();
    let f = op.field();
    let n = (m1 * m2) as f64;
    let c_mean = f.c_left.iter().zip(f.c_right.iter()).map(|(a, b)| a + b).sum::<f64>() / (2.0 * n);
    let e_mean = f.e_left.iter().zip(f.e_right.iter()).map(|(a, b)| a + b).sum::<f64>() / (2.0 * n);
    let cx = chan_circulant(op.toeplitz_x());
    let cy = chan_circulant(op.toeplitz_y());
    // C + C' has the real spectrum 2 Re(eig C) in the same Fourier basis
    let eig_x: Vec<f64> = cx.spectrum().iter().map(|z| 2.0 * z.re).collect();
    let eig_y: Vec<f64> = cy.spectrum().iter().map(|z| 2.0 * z.re).collect();
    let scale_x = op.coef_toeplitz_x() * c_mean;
    let scale_y = op.coef_toeplitz_y() * e_mean;
    let iw = op.identity_weight();
    let mut denom = vec![0.0; m1 * m2];
    let mut largest = 0.0f64;
    for k2 in 0..m2 {
        for k1 in 0..m1 {
            let d = iw + scale_x * eig_x[k1] + scale_y * eig_y[k2];
            denom[k1 + m1 * k2] = d;
            largest = largest.max(d.abs());
        }
    }
    for (k, d) in denom.iter().enumerate() {
        if d.abs() <= 1e-14 * largest {
            return Err(Error::SingularSpectrum { mode: k });
        }
    }
    Ok(Preconditioner::Spectral2D { m1, m2, denom })
}

/// Second-order part of a 1-d operator: the same identity weight and
/// Toeplitz scaling applied to `tridiag{1, -2, 1}` row-scaled by
/// `c_left + c_right`. The advection part is dropped.
#[derive(Debug, Clone)]
pub struct LaplacianOp1D {
    iw: f64,
    coef: Vec<f64>,
}

impl LaplacianOp1D {
    pub fn new(iw: f64, coef: Vec<f64>) -> Self {
        LaplacianOp1D { iw, coef }
    }

    pub fn from_operator(op: &Operator1D) -> Self {
        let coef = op
            .c_left()
            .iter()
            .zip(op.c_right().iter())
            .map(|(a, b)| op.coef_toeplitz() * (a + b))
            .collect();
        LaplacianOp1D { iw: op.identity_weight(), coef }
    }
}

impl LinearOp for LaplacianOp1D {
    fn size(&self) -> usize {
        self.coef.len()
    }

    fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        let n = v.len();
        assert_eq!(n, self.coef.len());
        for i in 0..n {
            let up = if i + 1 < n { v[i + 1] } else { 0.0 };
            let dn = if i > 0 { v[i - 1] } else { 0.0 };
            out[i] = self.iw * v[i] + self.coef[i] * (dn - 2.0 * v[i] + up);
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        self.coef.iter().map(|c| self.iw - 2.0 * c).collect()
    }
}

/// Second-order part of a 2-d operator on the x-fastest layout.
#[derive(Debug, Clone)]
pub struct LaplacianOp2D {
    m1: usize,
    m2: usize,
    iw: f64,
    coef_x: Vec<f64>,
    coef_y: Vec<f64>,
}

impl LaplacianOp2D {
    pub fn new(m1: usize, m2: usize, iw: f64, coef_x: Vec<f64>, coef_y: Vec<f64>) -> Self {
        assert_eq!(coef_x.len(), m1 * m2);
        assert_eq!(coef_y.len(), m1 * m2);
        LaplacianOp2D { m1, m2, iw, coef_x, coef_y }
    }

    pub fn from_operator(op: &Operator2D) -> Self {
        let (m1, m2) = op.sizes();
        let f = op.field();
        let coef_x = f
            .c_left
            .iter()
            .zip(f.c_right.iter())
            .map(|(a, b)| op.coef_toeplitz_x() * (a + b))
            .collect();
        let coef_y = f
            .e_left
            .iter()
            .zip(f.e_right.iter())
            .map(|(a, b)| op.coef_toeplitz_y() * (a + b))
            .collect();
        LaplacianOp2D { m1, m2, iw: op.identity_weight(), coef_x, coef_y }
    }

    /// Assemble and factor the banded matrix (bandwidth `m1`).
    pub fn factor(&self) -> Result<BandedLu> {
        let (m1, m2) = (self.m1, self.m2);
        let n = m1 * m2;
        let mut banded = BandedMatrix::zeros(n, m1);
        for i2 in 0..m2 {
            for i1 in 0..m1 {
                let i = i1 + m1 * i2;
                banded.set(i, i, self.iw - 2.0 * self.coef_x[i] - 2.0 * self.coef_y[i]);
                if i1 + 1 < m1 {
                    banded.set(i, i + 1, self.coef_x[i]);
                }
                if i1 > 0 {
                    banded.set(i, i - 1, self.coef_x[i]);
                }
                if i2 + 1 < m2 {
                    banded.set(i, i + m1, self.coef_y[i]);
                }
                if i2 > 0 {
                    banded.set(i, i - m1, self.coef_y[i]);
                }
            }
        }
        banded.factor()
    }
}

impl LinearOp for LaplacianOp2D {
    fn size(&self) -> usize {
        self.m1 * self.m2
    }

    fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        let (m1, m2) = (self.m1, self.m2);
        assert_eq!(v.len(), m1 * m2);
        for i2 in 0..m2 {
            for i1 in 0..m1 {
                let i = i1 + m1 * i2;
                let xl = if i1 > 0 { v[i - 1] } else { 0.0 };
                let xr = if i1 + 1 < m1 { v[i + 1] } else { 0.0 };
                let yd = if i2 > 0 { v[i - m1] } else { 0.0 };
                let yu = if i2 + 1 < m2 { v[i + m1] } else { 0.0 };
                out[i] = self.iw * v[i]
                    + self.coef_x[i] * (xl - 2.0 * v[i] + xr)
                    + self.coef_y[i] * (yd - 2.0 * v[i] + yu);
            }
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        (0..self.m1 * self.m2)
            .map(|i| self.iw - 2.0 * self.coef_x[i] - 2.0 * self.coef_y[i])
            .collect()
    }
}

/// Direct tridiagonal solve of the 1-d second-order part.
pub fn laplacian_1d(op: &Operator1D) -> Preconditioner {
    let lap = LaplacianOp1D::from_operator(op);
    let n = lap.size();
    let diag = lap.diagonal();
    let sub = (1..n).map(|i| lap.coef[i]).collect();
    let sup = (0..n - 1).map(|i| lap.coef[i]).collect();
    Preconditioner::Tridiag { sub, diag, sup }
}

/// Direct banded solve of the 2-d second-order part.
pub fn laplacian_2d(op: &Operator2D) -> Result<Preconditioner> {
    Ok(Preconditioner::Banded(LaplacianOp2D::from_operator(op).factor()?))
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Preconditioned conjugate gradients.
pub fn cg(
    op: &dyn LinearOp,
    precond: &Preconditioner,
    b: &[f64],
    x0: &[f64],
    cfg: &KrylovConfig,
) -> Result<(Vec<f64>, SolveReport)> {
    let n = op.size();
    if b.len() != n || x0.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: b.len(), context: "cg" });
    }
    let start = std::time::Instant::now();
    if norm2(b) == 0.0 {
        return Ok((vec![0.0; n], SolveReport::trivial()));
    }
    let mut x = x0.to_vec();
    let ax = op.apply(&x);
    let mut r: Vec<f64> = b.iter().zip(ax.iter()).map(|(bi, ai)| bi - ai).collect();
    // Convergence is measured against the initial residual, so a warm
    // start must improve on what it inherited.
    let r0_norm = norm2(&r);
    if r0_norm == 0.0 {
        let mut report = SolveReport::trivial();
        report.elapsed = start.elapsed().as_secs_f64();
        return Ok((x, report));
    }
    let mut report = SolveReport {
        iterations: 0,
        converged: false,
        history: Vec::new(),
        final_relres: 1.0,
        elapsed: 0.0,
    };
    let mut z = precond.apply(&r)?;
    let mut rz = dot(&r, &z);
    if rz <= 0.0 {
        return Err(Error::Breakdown(format!("preconditioned product {rz} not positive")));
    }
    let mut p = z.clone();
    for it in 1..=cfg.maxit {
        let ap = op.apply(&p);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::Breakdown(format!("curvature {pap} not positive at step {it}")));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let relres = norm2(&r) / r0_norm;
        report.iterations = it;
        report.history.push(relres);
        if relres <= cfg.tol {
            report.converged = true;
            break;
        }
        z = precond.apply(&r)?;
        let rz_next = dot(&r, &z);
        if rz_next <= 0.0 {
            return Err(Error::Breakdown(format!(
                "preconditioned product {rz_next} not positive at step {it}"
            )));
        }
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    report.final_relres = *report.history.last().expect("at least one step");
    report.elapsed = start.elapsed().as_secs_f64();
    Ok((x, report))
}

fn givens(a: f64, b: f64) -> (f64, f64) {
    if b == 0.0 {
        (1.0, 0.0)
    } else if b.abs() > a.abs() {
        let t = a / b;
        let s = 1.0 / (1.0 + t * t).sqrt();
        (s * t, s)
    } else {
        let t = b / a;
        let c = 1.0 / (1.0 + t * t).sqrt();
        (c, c * t)
    }
}

/// Full (unrestarted) GMRES with left preconditioning, modified
/// Gram-Schmidt and Givens updates of the residual estimate.
pub fn gmres(
    op: &dyn LinearOp,
    precond: &Preconditioner,
    b: &[f64],
    x0: &[f64],
    cfg: &KrylovConfig,
) -> Result<(Vec<f64>, SolveReport)> {
    let n = op.size();
    if b.len() != n || x0.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: b.len(), context: "gmres" });
    }
    let start = std::time::Instant::now();
    if norm2(b) == 0.0 {
        return Ok((vec![0.0; n], SolveReport::trivial()));
    }
    let mut x = x0.to_vec();
    let ax = op.apply(&x);
    let residual: Vec<f64> = b.iter().zip(ax.iter()).map(|(bi, ai)| bi - ai).collect();
    let r0 = precond.apply(&residual)?;
    // Convergence is measured against the initial preconditioned
    // residual, so a warm start must improve on what it inherited.
    let beta = norm2(&r0);
    if beta == 0.0 {
        if norm2(&residual) > 0.0 {
            return Err(Error::Breakdown("preconditioner annihilates the residual".into()));
        }
        let mut report = SolveReport::trivial();
        report.elapsed = start.elapsed().as_secs_f64();
        return Ok((x, report));
    }
    let mut report = SolveReport {
        iterations: 0,
        converged: false,
        history: Vec::new(),
        final_relres: 1.0,
        elapsed: 0.0,
    };

    let maxit = cfg.maxit.min(n);
    let mut basis: Vec<Vec<f64>> = vec![r0.iter().map(|v| v / beta).collect()];
    let mut hcols: Vec<Vec<f64>> = Vec::new();
    let mut cs: Vec<f64> = Vec::new();
    let mut sn: Vec<f64> = Vec::new();
    let mut g = vec![beta];
    let mut steps = 0;

    for j in 0..maxit {
        let mut w = precond.apply(&op.apply(&basis[j]))?;
        let pre_norm = norm2(&w);
        let mut hcol = vec![0.0; j + 2];
        for (i, vi) in basis.iter().enumerate() {
            let hij = dot(&w, vi);
            hcol[i] = hij;
            for (wk, vk) in w.iter_mut().zip(vi.iter()) {
                *wk -= hij * vk;
            }
        }
        let hnorm = norm2(&w);
        hcol[j + 1] = hnorm;
        let happy = hnorm <= 1e-12 * pre_norm;

        for i in 0..j {
            let (hi, hj) = (hcol[i], hcol[i + 1]);
            hcol[i] = cs[i] * hi + sn[i] * hj;
            hcol[i + 1] = -sn[i] * hi + cs[i] * hj;
        }
        let (c, s) = givens(hcol[j], hcol[j + 1]);
        cs.push(c);
        sn.push(s);
        hcol[j] = c * hcol[j] + s * hcol[j + 1];
        hcol[j + 1] = 0.0;
        if hcol[j] == 0.0 {
            return Err(Error::Breakdown(format!("vanishing pivot at step {}", j + 1)));
        }
        let gj = g[j];
        g[j] = c * gj;
        g.push(-s * gj);
        hcols.push(hcol);

        steps = j + 1;
        let relres = g[j + 1].abs() / beta;
        report.iterations = steps;
        report.history.push(relres);
        if relres <= cfg.tol || happy {
            report.converged = true;
            break;
        }
        if j + 1 < maxit {
            basis.push(w.iter().map(|v| v / hnorm).collect());
        }
    }

    // back substitution in the rotated Hessenberg system
    let mut y = vec![0.0; steps];
    for j in (0..steps).rev() {
        let mut acc = g[j];
        for k in j + 1..steps {
            acc -= hcols[k][j] * y[k];
        }
        y[j] = acc / hcols[j][j];
    }
    for (yk, vk) in y.iter().zip(basis.iter()) {
        for i in 0..n {
            x[i] += yk * vk[i];
        }
    }

    report.final_relres = *report.history.last().expect("at least one step");
    report.elapsed = start.elapsed().as_secs_f64();
    Ok((x, report))
}
