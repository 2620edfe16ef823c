//! Matrix-free discrete operators.
//!
//! With `B` the Toeplitz coefficient matrix from [`crate::stencil`], `H` the
//! centered-difference matrix `tridiag{-1, 0, 1}` and `C_l`, `C_r` diagonal
//! coefficient samples, the one-dimensional schemes read
//!
//! ```text
//! transient solve operator  A = I - r (C_l B + C_r B') + s (C_l - C_r) H
//! transient rhs operator        I + r (C_l B + C_r B') - s (C_l - C_r) H
//! steady operator           A = -(1/h^a)(C_l B + C_r B') + q (C_l - C_r) H
//! ```
//!
//! with `r = tau / (2 h^a)`, `s = a lambda^{a-1} tau / (4 h)` and
//! `q = a lambda^{a-1} / (2 h)`. All three share one internal form (an
//! identity weight plus signed Toeplitz and advection multipliers), so the
//! two-dimensional operator is the same thing summed over both axes with
//! the grid stored x-fastest.

use crate::error::Error;
use crate::fastlinalg::{LinearOp, PlannedToeplitz, ToeplitzDescriptor};
use crate::stencil::{tempered_stencil, toeplitz_b, FractionalParams, Grid1D, TemperedStencil};
use crate::Result;

/// Diffusion coefficient samples at the interior nodes.
#[derive(Debug, Clone)]
pub struct DiffusionField1D {
    pub left: Vec<f64>,
    pub right: Vec<f64>,
}

impl DiffusionField1D {
    pub fn constant(c_left: f64, c_right: f64, m: usize) -> Self {
        DiffusionField1D { left: vec![c_left; m], right: vec![c_right; m] }
    }
}

/// One-dimensional operator in the shared internal form.
#[derive(Debug)]
pub struct Operator1D {
    grid: Grid1D,
    params: FractionalParams,
    identity_weight: f64,
    coef_toeplitz: f64,
    coef_advection: f64,
    stencil: TemperedStencil,
    toeplitz: ToeplitzDescriptor,
    planned_b: PlannedToeplitz,
    planned_bt: PlannedToeplitz,
    c_left: Vec<f64>,
    c_right: Vec<f64>,
    diag: Vec<f64>,
}

fn check_field(m: usize, field: &DiffusionField1D) -> Result<()> {
    if field.left.len() != m || field.right.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: field.left.len().max(field.right.len()),
            context: "coefficient field",
        });
    }
    Ok(())
}

fn build_1d(
    params: &FractionalParams,
    grid: &Grid1D,
    field: &DiffusionField1D,
    identity_weight: f64,
    coef_toeplitz: f64,
    coef_advection: f64,
) -> Result<Operator1D> {
    check_field(grid.m, field)?;
    let stencil = tempered_stencil(params, grid.h, grid.m + 1)?;
    let toeplitz = toeplitz_b(&stencil, grid.m)?;
    let planned_b = PlannedToeplitz::new(&toeplitz);
    let planned_bt = PlannedToeplitz::new(&toeplitz.transpose());
    let diag_b = stencil.g[1] - stencil.phi;
    let diag = (0..grid.m)
        .map(|i| identity_weight + coef_toeplitz * (field.left[i] + field.right[i]) * diag_b)
        .collect();
    Ok(Operator1D {
        grid: *grid,
        params: *params,
        identity_weight,
        coef_toeplitz,
        coef_advection,
        stencil,
        toeplitz,
        planned_b,
        planned_bt,
        c_left: field.left.clone(),
        c_right: field.right.clone(),
        diag,
    })
}

/// Crank-Nicolson solve operator `I - M` for one time step of size `tau`.
pub fn cn_operator(
    params: &FractionalParams,
    grid: &Grid1D,
    tau: f64,
    field: &DiffusionField1D,
) -> Result<Operator1D> {
    if !(tau > 0.0) {
        return Err(Error::InvalidParameter(format!("time step {tau} must be positive")));
    }
    let r = tau / (2.0 * grid.h.powf(params.alpha));
    let s = params.advection_speed() * tau / (4.0 * grid.h);
    build_1d(params, grid, field, 1.0, -r, s)
}

/// Crank-Nicolson right-hand-side operator `I + M`.
pub fn cn_plus_operator(
    params: &FractionalParams,
    grid: &Grid1D,
    tau: f64,
    field: &DiffusionField1D,
) -> Result<Operator1D> {
    if !(tau > 0.0) {
        return Err(Error::InvalidParameter(format!("time step {tau} must be positive")));
    }
    let r = tau / (2.0 * grid.h.powf(params.alpha));
    let s = params.advection_speed() * tau / (4.0 * grid.h);
    build_1d(params, grid, field, 1.0, r, -s)
}

/// Steady-state operator for the source problem.
pub fn steady_operator(
    params: &FractionalParams,
    grid: &Grid1D,
    field: &DiffusionField1D,
) -> Result<Operator1D> {
    let r = grid.h.powf(-params.alpha);
    let q = params.advection_speed() / (2.0 * grid.h);
    build_1d(params, grid, field, 0.0, -r, q)
}

/// `out_i = v_{i+1} - v_{i-1}` with zero extension past both ends.
fn centered_diff(v: &[f64], out: &mut [f64]) {
    let n = v.len();
    for i in 0..n {
        let up = if i + 1 < n { v[i + 1] } else { 0.0 };
        let dn = if i > 0 { v[i - 1] } else { 0.0 };
        out[i] = up - dn;
    }
}

impl Operator1D {
    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn params(&self) -> &FractionalParams {
        &self.params
    }

    pub fn stencil(&self) -> &TemperedStencil {
        &self.stencil
    }

    pub fn toeplitz(&self) -> &ToeplitzDescriptor {
        &self.toeplitz
    }

    pub fn identity_weight(&self) -> f64 {
        self.identity_weight
    }

    /// Signed multiplier of `C_l B + C_r B'`.
    pub fn coef_toeplitz(&self) -> f64 {
        self.coef_toeplitz
    }

    /// Signed multiplier of `(C_l - C_r) H`.
    pub fn coef_advection(&self) -> f64 {
        self.coef_advection
    }

    pub fn c_left(&self) -> &[f64] {
        &self.c_left
    }

    pub fn c_right(&self) -> &[f64] {
        &self.c_right
    }

    /// Both coefficient fields constant: returns `(c_left, c_right)`.
    pub fn constant_coefficients(&self) -> Option<(f64, f64)> {
        let cl = self.c_left[0];
        let cr = self.c_right[0];
        let constant = self.c_left.iter().all(|&x| x == cl) && self.c_right.iter().all(|&x| x == cr);
        constant.then_some((cl, cr))
    }

    /// The full operator as a Toeplitz descriptor; only available when the
    /// coefficients are constant.
    pub fn as_toeplitz(&self) -> Option<ToeplitzDescriptor> {
        let (cl, cr) = self.constant_coefficients()?;
        let m = self.grid.m;
        let mut first_col = vec![0.0; m];
        let mut first_row = vec![0.0; m];
        for k in 0..m {
            let ki = k as isize;
            let mut below = self.coef_toeplitz
                * (cl * self.toeplitz.diag_value(ki) + cr * self.toeplitz.diag_value(-ki));
            let mut above = self.coef_toeplitz
                * (cl * self.toeplitz.diag_value(-ki) + cr * self.toeplitz.diag_value(ki));
            if k == 0 {
                below += self.identity_weight;
                above += self.identity_weight;
            }
            if k == 1 {
                // H = tridiag{-1, 0, 1}
                below += self.coef_advection * (cl - cr) * (-1.0);
                above += self.coef_advection * (cl - cr) * 1.0;
            }
            first_col[k] = below;
            first_row[k] = above;
        }
        Some(ToeplitzDescriptor::new(first_col, first_row).expect("corner entries match"))
    }

    /// Contribution of the two boundary columns when the operator is
    /// extended to the full grid: what `A_ext (u_left, v, u_right)` adds on
    /// top of `A v`. Subtract it from the right-hand side when the solve
    /// operator carries inhomogeneous Dirichlet data.
    pub fn ghost_contribution(&self, u_left: f64, u_right: f64) -> Vec<f64> {
        let field = DiffusionField1D { left: self.c_left.clone(), right: self.c_right.clone() };
        let mut out =
            boundary_rhs(&self.stencil, &field, u_left, u_right, self.coef_toeplitz).expect("sized");
        let m = self.grid.m;
        out[0] += self.coef_advection * (self.c_left[0] - self.c_right[0]) * (-u_left);
        out[m - 1] += self.coef_advection * (self.c_left[m - 1] - self.c_right[m - 1]) * u_right;
        out
    }
}

impl LinearOp for Operator1D {
    fn size(&self) -> usize {
        self.grid.m
    }

    fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        let m = self.grid.m;
        assert_eq!(v.len(), m);
        assert_eq!(out.len(), m);
        let mut bv = vec![0.0; m];
        let mut btv = vec![0.0; m];
        self.planned_b.apply_into(v, &mut bv);
        self.planned_bt.apply_into(v, &mut btv);
        let mut hv = vec![0.0; m];
        centered_diff(v, &mut hv);
        for i in 0..m {
            out[i] = self.identity_weight * v[i]
                + self.coef_toeplitz * (self.c_left[i] * bv[i] + self.c_right[i] * btv[i])
                + self.coef_advection * (self.c_left[i] - self.c_right[i]) * hv[i];
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        self.diag.clone()
    }
}

/// Boundary-column weights of the one-sided stencil sums, scaled by
/// `scale`. Entry `i` (1-based) collects
///
/// ```text
/// u_left:  c_{l,i} g_{i+1}        plus, for i = 1, c_{r,1} g_0
/// u_right: c_{r,i} g_{m-i+2}      plus, for i = m, c_{l,m} g_0
/// ```
///
/// The advection correction is not included here; see
/// [`Operator1D::ghost_contribution`] for the complete extension term.
pub fn boundary_rhs(
    stencil: &TemperedStencil,
    field: &DiffusionField1D,
    u_left: f64,
    u_right: f64,
    scale: f64,
) -> Result<Vec<f64>> {
    let m = field.left.len();
    check_field(m, field)?;
    if stencil.max_index() < m + 1 {
        return Err(Error::DimensionMismatch {
            expected: m + 2,
            found: stencil.g.len(),
            context: "stencil coefficients for boundary terms",
        });
    }
    let g = &stencil.g;
    let mut out = vec![0.0; m];
    for i in 1..=m {
        let mut acc = field.left[i - 1] * g[i + 1] * u_left;
        acc += field.right[i - 1] * g[m - i + 2] * u_right;
        if i == 1 {
            acc += field.right[0] * g[0] * u_left;
        }
        if i == m {
            acc += field.left[m - 1] * g[0] * u_right;
        }
        out[i - 1] = scale * acc;
    }
    Ok(out)
}

/// Crank-Nicolson right-hand side for one step:
/// `(I + M) u_prev + tau * forcing + boundary_terms`.
///
/// `forcing` is the midpoint source sample; `boundary_terms` carries the
/// already-scaled boundary-column contributions of both time levels and is
/// identically zero for homogeneous Dirichlet problems.
pub fn cn_rhs(
    op_plus: &Operator1D,
    u_prev: &[f64],
    forcing: &[f64],
    boundary_terms: &[f64],
    tau: f64,
) -> Result<Vec<f64>> {
    let m = op_plus.size();
    if u_prev.len() != m || forcing.len() != m || boundary_terms.len() != m {
        return Err(Error::DimensionMismatch { expected: m, found: u_prev.len(), context: "cn rhs" });
    }
    let mut rhs = op_plus.apply(u_prev);
    for i in 0..m {
        rhs[i] += tau * forcing[i] + boundary_terms[i];
    }
    Ok(rhs)
}

/// Coefficient samples for the two-dimensional problem, x-fastest.
#[derive(Debug, Clone)]
pub struct DiffusionField2D {
    pub c_left: Vec<f64>,
    pub c_right: Vec<f64>,
    pub e_left: Vec<f64>,
    pub e_right: Vec<f64>,
}

/// Two-dimensional Crank-Nicolson operator on an `m1 x m2` interior grid.
#[derive(Debug)]
pub struct Operator2D {
    grid_x: Grid1D,
    grid_y: Grid1D,
    params_x: FractionalParams,
    params_y: FractionalParams,
    identity_weight: f64,
    coef_tx: f64,
    coef_ax: f64,
    coef_ty: f64,
    coef_ay: f64,
    toeplitz_x: ToeplitzDescriptor,
    toeplitz_y: ToeplitzDescriptor,
    bx: PlannedToeplitz,
    bxt: PlannedToeplitz,
    by: PlannedToeplitz,
    byt: PlannedToeplitz,
    field: DiffusionField2D,
    diag: Vec<f64>,
}

fn build_2d(
    params_x: &FractionalParams,
    params_y: &FractionalParams,
    grid_x: &Grid1D,
    grid_y: &Grid1D,
    field: &DiffusionField2D,
    identity_weight: f64,
    sign: f64,
    tau: f64,
) -> Result<Operator2D> {
    let (m1, m2) = (grid_x.m, grid_y.m);
    let m = m1 * m2;
    for len in [field.c_left.len(), field.c_right.len(), field.e_left.len(), field.e_right.len()] {
        if len != m {
            return Err(Error::DimensionMismatch { expected: m, found: len, context: "2d field" });
        }
    }
    let stencil_x = tempered_stencil(params_x, grid_x.h, m1 + 1)?;
    let stencil_y = tempered_stencil(params_y, grid_y.h, m2 + 1)?;
    let toeplitz_x = toeplitz_b(&stencil_x, m1)?;
    let toeplitz_y = toeplitz_b(&stencil_y, m2)?;
    let r1 = tau / (2.0 * grid_x.h.powf(params_x.alpha));
    let r2 = tau / (2.0 * grid_y.h.powf(params_y.alpha));
    let s1 = params_x.advection_speed() * tau / (4.0 * grid_x.h);
    let s2 = params_y.advection_speed() * tau / (4.0 * grid_y.h);
    let coef_tx = -sign * r1;
    let coef_ax = sign * s1;
    let coef_ty = -sign * r2;
    let coef_ay = sign * s2;
    let diag_bx = stencil_x.g[1] - stencil_x.phi;
    let diag_by = stencil_y.g[1] - stencil_y.phi;
    let diag = (0..m)
        .map(|i| {
            identity_weight
                + coef_tx * (field.c_left[i] + field.c_right[i]) * diag_bx
                + coef_ty * (field.e_left[i] + field.e_right[i]) * diag_by
        })
        .collect();
    Ok(Operator2D {
        grid_x: *grid_x,
        grid_y: *grid_y,
        params_x: *params_x,
        params_y: *params_y,
        identity_weight,
        coef_tx,
        coef_ax,
        coef_ty,
        coef_ay,
        bx: PlannedToeplitz::new(&toeplitz_x),
        bxt: PlannedToeplitz::new(&toeplitz_x.transpose()),
        by: PlannedToeplitz::new(&toeplitz_y),
        byt: PlannedToeplitz::new(&toeplitz_y.transpose()),
        toeplitz_x,
        toeplitz_y,
        field: field.clone(),
        diag,
    })
}

/// Two-dimensional Crank-Nicolson solve operator `I - M_x - M_y`.
pub fn cn_operator_2d(
    params_x: &FractionalParams,
    params_y: &FractionalParams,
    grid_x: &Grid1D,
    grid_y: &Grid1D,
    tau: f64,
    field: &DiffusionField2D,
) -> Result<Operator2D> {
    if !(tau > 0.0) {
        return Err(Error::InvalidParameter(format!("time step {tau} must be positive")));
    }
    build_2d(params_x, params_y, grid_x, grid_y, field, 1.0, 1.0, tau)
}

/// Two-dimensional right-hand-side operator `I + M_x + M_y`.
pub fn cn_plus_operator_2d(
    params_x: &FractionalParams,
    params_y: &FractionalParams,
    grid_x: &Grid1D,
    grid_y: &Grid1D,
    tau: f64,
    field: &DiffusionField2D,
) -> Result<Operator2D> {
    if !(tau > 0.0) {
        return Err(Error::InvalidParameter(format!("time step {tau} must be positive")));
    }
    build_2d(params_x, params_y, grid_x, grid_y, field, 1.0, -1.0, tau)
}

impl Operator2D {
    pub fn sizes(&self) -> (usize, usize) {
        (self.grid_x.m, self.grid_y.m)
    }

    pub fn grid_x(&self) -> &Grid1D {
        &self.grid_x
    }

    pub fn grid_y(&self) -> &Grid1D {
        &self.grid_y
    }

    pub fn params_x(&self) -> &FractionalParams {
        &self.params_x
    }

    pub fn params_y(&self) -> &FractionalParams {
        &self.params_y
    }

    pub fn identity_weight(&self) -> f64 {
        self.identity_weight
    }

    pub fn coef_toeplitz_x(&self) -> f64 {
        self.coef_tx
    }

    pub fn coef_toeplitz_y(&self) -> f64 {
        self.coef_ty
    }

    pub fn coef_advection_x(&self) -> f64 {
        self.coef_ax
    }

    pub fn coef_advection_y(&self) -> f64 {
        self.coef_ay
    }

    pub fn toeplitz_x(&self) -> &ToeplitzDescriptor {
        &self.toeplitz_x
    }

    pub fn toeplitz_y(&self) -> &ToeplitzDescriptor {
        &self.toeplitz_y
    }

    pub fn field(&self) -> &DiffusionField2D {
        &self.field
    }
}

impl LinearOp for Operator2D {
    fn size(&self) -> usize {
        self.grid_x.m * self.grid_y.m
    }

    fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        let (m1, m2) = self.sizes();
        let m = m1 * m2;
        assert_eq!(v.len(), m);
        assert_eq!(out.len(), m);

        let mut bxv = vec![0.0; m];
        let mut bxtv = vec![0.0; m];
        let mut hxv = vec![0.0; m];
        for j2 in 0..m2 {
            let s = j2 * m1;
            self.bx.apply_into(&v[s..s + m1], &mut bxv[s..s + m1]);
            self.bxt.apply_into(&v[s..s + m1], &mut bxtv[s..s + m1]);
            centered_diff(&v[s..s + m1], &mut hxv[s..s + m1]);
        }

        let mut byv = vec![0.0; m];
        let mut bytv = vec![0.0; m];
        let mut hyv = vec![0.0; m];
        let mut col = vec![0.0; m2];
        let mut tmp = vec![0.0; m2];
        for i1 in 0..m1 {
            for i2 in 0..m2 {
                col[i2] = v[i1 + m1 * i2];
            }
            self.by.apply_into(&col, &mut tmp);
            for i2 in 0..m2 {
                byv[i1 + m1 * i2] = tmp[i2];
            }
            self.byt.apply_into(&col, &mut tmp);
            for i2 in 0..m2 {
                bytv[i1 + m1 * i2] = tmp[i2];
            }
            centered_diff(&col, &mut tmp);
            for i2 in 0..m2 {
                hyv[i1 + m1 * i2] = tmp[i2];
            }
        }

        let f = &self.field;
        for i in 0..m {
            out[i] = self.identity_weight * v[i]
                + self.coef_tx * (f.c_left[i] * bxv[i] + f.c_right[i] * bxtv[i])
                + self.coef_ax * (f.c_left[i] - f.c_right[i]) * hxv[i]
                + self.coef_ty * (f.e_left[i] * byv[i] + f.e_right[i] * bytv[i])
                + self.coef_ay * (f.e_left[i] - f.e_right[i]) * hyv[i];
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        self.diag.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fastlinalg::materialize_dense;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    fn random_field(rng: &mut ChaCha8Rng, m: usize) -> DiffusionField1D {
        DiffusionField1D {
            left: (0..m).map(|_| rng.gen_range(0.2..2.0)).collect(),
            right: (0..m).map(|_| rng.gen_range(0.2..2.0)).collect(),
        }
    }

    /// First-principles dense extension of the scheme to the full grid,
    /// rows = interior nodes, columns = all nodes including boundaries.
    fn dense_extended(
        params: &FractionalParams,
        grid: &Grid1D,
        field: &DiffusionField1D,
        identity_weight: f64,
        coef_t: f64,
        coef_a: f64,
    ) -> DMatrix<f64> {
        let m = grid.m;
        let stencil = tempered_stencil(params, grid.h, m + 1).unwrap();
        let g = &stencil.g;
        let mut ext = DMatrix::zeros(m, m + 2);
        for i in 1..=m {
            let (cl, cr) = (field.left[i - 1], field.right[i - 1]);
            for k in 0..=i + 1 {
                ext[(i - 1, i + 1 - k)] += coef_t * cl * g[k];
            }
            for k in 0..=m - i + 2 {
                ext[(i - 1, i + k - 1)] += coef_t * cr * g[k];
            }
            ext[(i - 1, i)] += identity_weight - coef_t * (cl + cr) * stencil.phi;
            ext[(i - 1, i + 1)] += coef_a * (cl - cr);
            ext[(i - 1, i - 1)] -= coef_a * (cl - cr);
        }
        ext
    }

    fn check_against_extension(op: &Operator1D, ext: &DMatrix<f64>, rng: &mut ChaCha8Rng) {
        let m = op.size();
        let interior = random_vec(rng, m);
        let (ul, ur) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let mut full = vec![0.0; m + 2];
        full[0] = ul;
        full[m + 1] = ur;
        full[1..=m].copy_from_slice(&interior);
        let mut expected = vec![0.0; m];
        for i in 0..m {
            expected[i] = (0..m + 2).map(|j| ext[(i, j)] * full[j]).sum();
        }
        let mut got = op.apply(&interior);
        let ghost = op.ghost_contribution(ul, ur);
        for i in 0..m {
            got[i] += ghost[i];
        }
        let err = got
            .iter()
            .zip(expected.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err <= 1e-12, "extension mismatch {err}");
    }

    #[test]
    fn operators_match_ghost_extension() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for &alpha in &[1.2, 1.8] {
            for &lambda in &[0.0, 2.0] {
                let params = FractionalParams::new(alpha, 0.01, lambda).unwrap();
                let grid = Grid1D::new(0.0, 1.0, 13).unwrap();
                let field = random_field(&mut rng, grid.m);
                let tau = 0.02;
                let r = tau / (2.0 * grid.h.powf(alpha));
                let s = params.advection_speed() * tau / (4.0 * grid.h);

                let a = cn_operator(&params, &grid, tau, &field).unwrap();
                let ext = dense_extended(&params, &grid, &field, 1.0, -r, s);
                check_against_extension(&a, &ext, &mut rng);

                let plus = cn_plus_operator(&params, &grid, tau, &field).unwrap();
                let ext_plus = dense_extended(&params, &grid, &field, 1.0, r, -s);
                check_against_extension(&plus, &ext_plus, &mut rng);

                let steady = steady_operator(&params, &grid, &field).unwrap();
                let q = params.advection_speed() / (2.0 * grid.h);
                let ext_steady =
                    dense_extended(&params, &grid, &field, 0.0, -grid.h.powf(-alpha), q);
                check_against_extension(&steady, &ext_steady, &mut rng);
            }
        }
    }

    #[test]
    fn boundary_rhs_index_pattern() {
        let params = FractionalParams::new(1.5, 0.01, 2.0).unwrap();
        let grid = Grid1D::new(0.0, 1.0, 4).unwrap();
        let stencil = tempered_stencil(&params, grid.h, grid.m + 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let field = random_field(&mut rng, 4);
        let g = &stencil.g;

        let left = boundary_rhs(&stencil, &field, 1.0, 0.0, 1.0).unwrap();
        let expected_left = [
            field.left[0] * g[2] + field.right[0] * g[0],
            field.left[1] * g[3],
            field.left[2] * g[4],
            field.left[3] * g[5],
        ];
        for (a, b) in left.iter().zip(expected_left.iter()) {
            assert!((a - b).abs() <= 1e-15);
        }

        let right = boundary_rhs(&stencil, &field, 0.0, 1.0, 1.0).unwrap();
        let expected_right = [
            field.right[0] * g[5],
            field.right[1] * g[4],
            field.right[2] * g[3],
            field.right[3] * g[2] + field.left[3] * g[0],
        ];
        for (a, b) in right.iter().zip(expected_right.iter()) {
            assert!((a - b).abs() <= 1e-15);
        }
    }

    #[test]
    fn cn_operator_symmetric_for_equal_coefficients() {
        let params = FractionalParams::new(1.7, 0.01, 3.0).unwrap();
        let grid = Grid1D::new(0.0, 1.0, 24).unwrap();
        let field = DiffusionField1D::constant(0.8, 0.8, grid.m);
        let a = cn_operator(&params, &grid, 0.01, &field).unwrap();
        let dense = materialize_dense(&a, 64).unwrap();
        let defect = (&dense - dense.transpose()).abs().max();
        assert!(defect <= 1e-13, "symmetry defect {defect}");
    }

    #[test]
    fn cn_operator_diagonally_dominant() {
        // Dominance relies on pairing g_0 with g_2 across B and B', so it
        // asks for balanced coefficients; check equal random fields plus
        // the mildly lopsided constant split used by the steady problems.
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let mut cases: Vec<(f64, f64, DiffusionField1D)> = Vec::new();
        for &alpha in &[1.2, 1.5, 1.8] {
            for &lambda in &[0.0, 2.0, 10.0] {
                let equal: Vec<f64> = (0..32).map(|_| rng.gen_range(0.2..2.0)).collect();
                cases.push((
                    alpha,
                    lambda,
                    DiffusionField1D { left: equal.clone(), right: equal },
                ));
            }
        }
        for &alpha in &[1.4, 1.7, 1.9] {
            cases.push((alpha, 3.0, DiffusionField1D::constant(0.3, 0.7, 32)));
        }
        for (alpha, lambda, field) in cases {
            let gamma3 = if lambda == 3.0 { 0.00235 } else { 0.01 };
            let params = FractionalParams::new(alpha, gamma3, lambda).unwrap();
            let grid = Grid1D::new(0.0, 1.0, 32).unwrap();
            let a = cn_operator(&params, &grid, 1.0 / 32.0, &field).unwrap();
            let dense = materialize_dense(&a, 64).unwrap();
            for i in 0..grid.m {
                let off: f64 = (0..grid.m).filter(|&j| j != i).map(|j| dense[(i, j)].abs()).sum();
                assert!(
                    dense[(i, i)].abs() > off,
                    "row {i} not dominant at alpha={alpha} lambda={lambda}"
                );
            }
        }
    }

    #[test]
    fn diagonal_matches_dense() {
        let params = FractionalParams::new(1.4, 0.00235, 3.0).unwrap();
        let grid = Grid1D::new(0.0, 1.0, 17).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let field = random_field(&mut rng, grid.m);
        for op in [
            cn_operator(&params, &grid, 0.05, &field).unwrap(),
            cn_plus_operator(&params, &grid, 0.05, &field).unwrap(),
            steady_operator(&params, &grid, &field).unwrap(),
        ] {
            let dense = materialize_dense(&op, 32).unwrap();
            for (i, d) in op.diagonal().iter().enumerate() {
                assert!((dense[(i, i)] - d).abs() <= 1e-13);
            }
        }
    }

    #[test]
    fn plus_and_minus_operators_sum_to_twice_identity() {
        let params = FractionalParams::new(1.6, 0.01, 1.0).unwrap();
        let grid = Grid1D::new(0.0, 2.0, 21).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        let field = random_field(&mut rng, grid.m);
        let a = cn_operator(&params, &grid, 0.1, &field).unwrap();
        let plus = cn_plus_operator(&params, &grid, 0.1, &field).unwrap();
        let v = random_vec(&mut rng, grid.m);
        let sum: Vec<f64> = a.apply(&v).iter().zip(plus.apply(&v)).map(|(x, y)| x + y).collect();
        for (s, vi) in sum.iter().zip(v.iter()) {
            assert!((s - 2.0 * vi).abs() <= 1e-12);
        }
    }

    #[test]
    fn as_toeplitz_matches_dense() {
        let params = FractionalParams::new(1.9, 0.00235, 3.0).unwrap();
        let grid = Grid1D::new(0.0, 1.0, 12).unwrap();
        let field = DiffusionField1D::constant(0.3, 0.7, grid.m);
        let op = steady_operator(&params, &grid, &field).unwrap();
        let desc = op.as_toeplitz().expect("constant coefficients");
        let diff = (desc.to_dense() - materialize_dense(&op, 16).unwrap()).abs().max();
        assert!(diff <= 1e-12);

        let varying = DiffusionField1D {
            left: (0..grid.m).map(|i| 1.0 + i as f64).collect(),
            right: vec![1.0; grid.m],
        };
        let op2 = steady_operator(&params, &grid, &varying).unwrap();
        assert!(op2.as_toeplitz().is_none());
    }

    #[test]
    fn steady_laplacian_limit_is_scaled_poisson_matrix() {
        let params = FractionalParams::new(2.0, 0.0, 0.0).unwrap();
        let grid = Grid1D::new(0.0, 1.0, 9).unwrap();
        let field = DiffusionField1D::constant(1.0, 0.0, grid.m);
        let op = steady_operator(&params, &grid, &field).unwrap();
        let dense = materialize_dense(&op, 16).unwrap();
        let scale = grid.h.powi(-2);
        for i in 0..grid.m {
            for j in 0..grid.m {
                let expected = match (i as isize - j as isize).abs() {
                    0 => 2.0 * scale,
                    1 => -scale,
                    _ => 0.0,
                };
                assert!((dense[(i, j)] - expected).abs() <= 1e-9 * scale);
            }
        }
    }

    #[test]
    fn operator_2d_matches_kronecker_assembly() {
        let mut rng = ChaCha8Rng::seed_from_u64(36);
        let params_x = FractionalParams::new(1.8, 0.0235, 1.0).unwrap();
        let params_y = FractionalParams::new(1.6, 0.0235, 1.0).unwrap();
        let grid_x = Grid1D::new(0.0, 2.0, 4).unwrap();
        let grid_y = Grid1D::new(0.0, 2.0, 5).unwrap();
        let (m1, m2) = (grid_x.m, grid_y.m);
        let m = m1 * m2;
        let field = DiffusionField2D {
            c_left: random_vec(&mut rng, m).iter().map(|x| x + 2.0).collect(),
            c_right: random_vec(&mut rng, m).iter().map(|x| x + 2.0).collect(),
            e_left: random_vec(&mut rng, m).iter().map(|x| x + 2.0).collect(),
            e_right: random_vec(&mut rng, m).iter().map(|x| x + 2.0).collect(),
        };
        let tau = 0.125;

        let op = cn_operator_2d(&params_x, &params_y, &grid_x, &grid_y, tau, &field).unwrap();
        let dense = materialize_dense(&op, 64).unwrap();

        let sx = tempered_stencil(&params_x, grid_x.h, m1 + 1).unwrap();
        let sy = tempered_stencil(&params_y, grid_y.h, m2 + 1).unwrap();
        let bx = toeplitz_b(&sx, m1).unwrap().to_dense();
        let by = toeplitz_b(&sy, m2).unwrap().to_dense();
        let hx = DMatrix::from_fn(m1, m1, |i, j| {
            if j + 1 == i {
                -1.0
            } else if i + 1 == j {
                1.0
            } else {
                0.0
            }
        });
        let hy = DMatrix::from_fn(m2, m2, |i, j| {
            if j + 1 == i {
                -1.0
            } else if i + 1 == j {
                1.0
            } else {
                0.0
            }
        });
        let eye1 = DMatrix::<f64>::identity(m1, m1);
        let eye2 = DMatrix::<f64>::identity(m2, m2);
        let diag = |v: &Vec<f64>| DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(v));

        let r1 = tau / (2.0 * grid_x.h.powf(params_x.alpha));
        let r2 = tau / (2.0 * grid_y.h.powf(params_y.alpha));
        let s1 = params_x.advection_speed() * tau / (4.0 * grid_x.h);
        let s2 = params_y.advection_speed() * tau / (4.0 * grid_y.h);

        let kron_xb = eye2.kronecker(&bx);
        let kron_xbt = eye2.kronecker(&bx.transpose());
        let kron_xh = eye2.kronecker(&hx);
        let kron_yb = by.kronecker(&eye1);
        let kron_ybt = by.transpose().kronecker(&eye1);
        let kron_yh = hy.kronecker(&eye1);

        let mx = diag(&field.c_left) * kron_xb * r1 + diag(&field.c_right) * kron_xbt * r1
            - (diag(&field.c_left) - diag(&field.c_right)) * kron_xh * s1;
        let my = diag(&field.e_left) * kron_yb * r2 + diag(&field.e_right) * kron_ybt * r2
            - (diag(&field.e_left) - diag(&field.e_right)) * kron_yh * s2;
        let expected = DMatrix::<f64>::identity(m, m) - mx - my;

        let diff = (&dense - &expected).abs().max();
        assert!(diff <= 1e-12, "2d assembly mismatch {diff}");

        let plus = cn_plus_operator_2d(&params_x, &params_y, &grid_x, &grid_y, tau, &field).unwrap();
        let v = random_vec(&mut rng, m);
        let sum: Vec<f64> =
            op.apply(&v).iter().zip(plus.apply(&v)).map(|(x, y)| x + y).collect();
        for (s, vi) in sum.iter().zip(v.iter()) {
            assert!((s - 2.0 * vi).abs() <= 1e-12);
        }

        for (i, d) in op.diagonal().iter().enumerate() {
            assert!((dense[(i, i)] - d).abs() <= 1e-13);
        }
    }
}
