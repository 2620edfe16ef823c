//! Generating symbol of the difference stencil and quantities derived
//! from it: damped-Jacobi smoothing weights, the Crank-Nicolson
//! amplification radius, and eigenvalue sampling checks.
//!
//! With `psi = (a/2)(x - pi)`, the limit symbol of the weighted stencil is
//!
//! ```text
//! f(a; x) = (2 sin(x/2))^a [ (a/2) cos(psi - x) + (1 - a/2) cos(psi)
//!                            + 2 g3 cos(psi) (cos x - 1) ]
//! ```
//!
//! extended evenly to negative `x`. It is nonpositive on `[-pi, pi]`
//! whenever the third weight sits in its admissible interval, attains its
//! largest magnitude `2^a (a - 1 + 4 g3)` at `x = pi`, and collapses to
//! `2 cos x - 2` at `a = 2, g3 = 0`.

use crate::error::Error;
use crate::fastlinalg::{materialize_dense, LinearOp};
use crate::stencil::{tempered_stencil, toeplitz_b, FractionalParams};
use crate::Result;
use std::f64::consts::PI;

/// Limit symbol `f(alpha; x)`, even in `x`, meaningful on `[-pi, pi]`.
pub fn symbol(alpha: f64, gamma3: f64, x: f64) -> f64 {
    let ax = x.abs();
    let amp = (2.0 * (ax / 2.0).sin()).powf(alpha);
    let psi = 0.5 * alpha * (ax - PI);
    amp * (0.5 * alpha * (psi - ax).cos()
        + (1.0 - 0.5 * alpha) * psi.cos()
        + 2.0 * gamma3 * psi.cos() * (ax.cos() - 1.0))
}

/// Largest value of the symbol over an `n`-point grid on `[-pi, pi]`.
/// Nonpositive (up to rounding) for admissible parameters.
pub fn symbol_max(alpha: f64, gamma3: f64, n: usize) -> f64 {
    assert!(n >= 2);
    (0..n)
        .map(|j| -PI + 2.0 * PI * j as f64 / (n - 1) as f64)
        .map(|x| symbol(alpha, gamma3, x))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Truncated symbol of the discrete operator on `m` interior nodes of the
/// unit interval: the cosine sum of the stencil coefficients (tempering
/// scaled for `h = 1/(m+1)`) minus the diagonal correction.
pub fn partial_symbol(params: &FractionalParams, m: usize, x: f64) -> Result<f64> {
    let h = 1.0 / (m + 1) as f64;
    let stencil = tempered_stencil(params, h, m)?;
    let mut acc = -stencil.phi;
    for (k, gk) in stencil.g.iter().enumerate() {
        acc += gk * ((k as f64 - 1.0) * x).cos();
    }
    Ok(acc)
}

/// Sup deviation between the truncated and limit symbols over an `n`-point
/// grid on `[0, pi]`. Shrinks as `m` grows.
pub fn partial_symbol_deviation(params: &FractionalParams, m: usize, n: usize) -> Result<f64> {
    assert!(n >= 2);
    let h = 1.0 / (m + 1) as f64;
    let stencil = tempered_stencil(params, h, m)?;
    let mut worst = 0.0f64;
    for j in 0..n {
        let x = PI * j as f64 / (n - 1) as f64;
        let mut acc = -stencil.phi;
        for (k, gk) in stencil.g.iter().enumerate() {
            acc += gk * ((k as f64 - 1.0) * x).cos();
        }
        worst = worst.max((acc - symbol(params.alpha, params.gamma3, x)).abs());
    }
    Ok(worst)
}

/// Damped-Jacobi weight derived from the symbol's mean-to-peak ratio.
#[derive(Debug, Clone, Copy)]
pub struct SmoothingBound {
    /// Mean-to-peak ratio of the symbol magnitude.
    pub xi: f64,
    /// Recommended damping weight.
    pub omega: f64,
}

fn mean_to_peak_term(alpha: f64, gamma3: f64) -> (f64, f64) {
    let mean = 0.5 * alpha * (alpha + 1.0) + gamma3 * (alpha + 2.0) - 1.0;
    let peak = 2.0f64.powf(alpha) * (alpha - 1.0 + 4.0 * gamma3);
    (mean, peak)
}

/// Smoothing weight for the one-dimensional operator: `omega = (2/3) xi`.
pub fn smoothing_bound_1d(alpha: f64, gamma3: f64) -> Result<SmoothingBound> {
    if !(alpha > 1.0 && alpha <= 2.0) {
        return Err(Error::InvalidParameter(format!("order {alpha} outside (1, 2]")));
    }
    let (mean, peak) = mean_to_peak_term(alpha, gamma3);
    if peak <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "symbol peak vanishes at alpha={alpha} gamma3={gamma3}"
        )));
    }
    let xi = 2.0 * mean / peak;
    Ok(SmoothingBound { xi, omega: 2.0 / 3.0 * xi })
}

/// Smoothing weight for the two-dimensional operator with per-axis orders
/// and mean diffusion weights: `omega = (4/5) xi`.
pub fn smoothing_bound_2d(
    alpha: f64,
    beta: f64,
    gamma3: f64,
    c_weight: f64,
    e_weight: f64,
) -> Result<SmoothingBound> {
    for order in [alpha, beta] {
        if !(order > 1.0 && order <= 2.0) {
            return Err(Error::InvalidParameter(format!("order {order} outside (1, 2]")));
        }
    }
    let (mean_x, peak_x) = mean_to_peak_term(alpha, gamma3);
    let (mean_y, peak_y) = mean_to_peak_term(beta, gamma3);
    let mean = c_weight * mean_x + e_weight * mean_y;
    let peak = c_weight * peak_x + e_weight * peak_y;
    if peak <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "symbol peak vanishes at alpha={alpha} beta={beta} gamma3={gamma3}"
        )));
    }
    let xi = 2.0 * mean / peak;
    Ok(SmoothingBound { xi, omega: 0.8 * xi })
}

/// Spectral radius of the one-step map `solve_op^{-1} rhs_op`.
///
/// Both operators are materialized densely (refusing sizes above `cap`).
/// When `I - solve_op` comes out symmetric the radius is computed from its
/// real eigenvalues `m` mapped through `(1 + m)/(1 - m)`; otherwise the
/// complex spectrum of the solved product decides.
pub fn amplification_radius(
    solve_op: &dyn LinearOp,
    rhs_op: &dyn LinearOp,
    cap: usize,
) -> Result<f64> {
    let n = solve_op.size();
    if rhs_op.size() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: rhs_op.size(),
            context: "amplification operators",
        });
    }
    let a = materialize_dense(solve_op, cap)?;
    let sym_defect = (&a - a.transpose()).abs().max();
    if sym_defect <= 1e-12 * a.abs().max() {
        // a = I - M with M symmetric; eigenvalues of the step map are
        // (1 + m)/(1 - m) over eigenvalues m of M.
        let m_mat = nalgebra::DMatrix::<f64>::identity(n, n) - &a;
        let eig = nalgebra::SymmetricEigen::new(m_mat);
        let mut rho = 0.0f64;
        for &m in eig.eigenvalues.iter() {
            let denom = 1.0 - m;
            if denom.abs() < 1e-300 {
                return Ok(f64::INFINITY);
            }
            rho = rho.max(((1.0 + m) / denom).abs());
        }
        return Ok(rho);
    }
    let b = materialize_dense(rhs_op, cap)?;
    let lu = a.lu();
    let x = lu
        .solve(&b)
        .ok_or(Error::ZeroPivot { index: 0 })?;
    let eigs = x.complex_eigenvalues();
    Ok(eigs.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// Sup distance between the sorted eigenvalues of the symmetrized
/// coefficient matrix on `m` interior unit-interval nodes and the sorted
/// limit-symbol samples `f(j pi / (m+1))`. Shrinks as `m` grows.
pub fn szego_deviation(params: &FractionalParams, m: usize) -> Result<f64> {
    let h = 1.0 / (m + 1) as f64;
    let stencil = tempered_stencil(params, h, m)?;
    let desc = toeplitz_b(&stencil, m)?;
    let dense = desc.to_dense();
    let sym = (&dense + dense.transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::new(sym);
    let mut eigs: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    eigs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut samples: Vec<f64> = (1..=m)
        .map(|j| symbol(params.alpha, params.gamma3, j as f64 * PI / (m + 1) as f64))
        .collect();
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(eigs
        .iter()
        .zip(samples.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{cn_operator, cn_plus_operator, DiffusionField1D};
    use crate::stencil::Grid1D;

    #[test]
    fn symbol_frozen_value_and_peak() {
        let v = symbol(1.5, 0.01, PI);
        assert!((v - (-1.5273506473629428)).abs() <= 1e-14);
        // peak magnitude at x = pi equals 2^a (a - 1 + 4 g3)
        let peak = 2.0f64.powf(1.5) * (0.5 + 0.04);
        assert!((v.abs() - peak).abs() <= 1e-14);
        // even extension
        assert_eq!(symbol(1.5, 0.01, -1.3), symbol(1.5, 0.01, 1.3));
        assert_eq!(symbol(1.4, 0.0, 0.0), 0.0);
    }

    #[test]
    fn symbol_classical_limit() {
        for j in 0..40 {
            let x = -PI + 2.0 * PI * j as f64 / 39.0;
            let expected = 2.0 * x.cos() - 2.0;
            assert!((symbol(2.0, 0.0, x) - expected).abs() <= 1e-12);
        }
    }

    #[test]
    fn symbol_nonpositive_for_admissible_weights() {
        for &alpha in &[1.1, 1.4, 1.5, 1.8, 2.0] {
            let gamma3 = if alpha == 2.0 { 0.0 } else { 0.01 };
            let top = symbol_max(alpha, gamma3, 2001);
            assert!(top <= 1e-12, "alpha={alpha}: max {top}");
        }
    }

    #[test]
    fn partial_symbol_converges_to_limit() {
        let params = FractionalParams::new(1.5, 0.01, 2.0).unwrap();
        let d100 = partial_symbol_deviation(&params, 100, 257).unwrap();
        let d400 = partial_symbol_deviation(&params, 400, 257).unwrap();
        assert!(d400 < d100, "deviations {d100} -> {d400}");
        assert!(d400 < 0.05);
        // the scalar evaluator agrees with the scan
        let at_pi = partial_symbol(&params, 100, PI).unwrap();
        assert!((at_pi - symbol(1.5, 0.01, PI)).abs() <= d100 + 1e-12);
    }

    #[test]
    fn smoothing_weights_frozen_values() {
        let cases_1d = [
            (1.2, 0.01, 0.8512049952228773),
            (1.5, 0.01, 0.7944039146663681),
            (1.8, 0.01, 0.7101873163037222),
            (1.4, 0.00235, 0.8490456282311422),
            (1.7, 0.00235, 0.7541757428604927),
            (1.9, 0.00235, 0.693052280087728),
        ];
        for &(alpha, gamma3, expected) in &cases_1d {
            let b = smoothing_bound_1d(alpha, gamma3).unwrap();
            assert!(
                (b.omega - expected).abs() <= 1e-12,
                "alpha={alpha}: {} vs {expected}",
                b.omega
            );
            assert!((b.omega - 2.0 / 3.0 * b.xi).abs() <= 1e-15);
        }
        let b2 = smoothing_bound_2d(1.8, 1.6, 0.0235, 1.0, 1.0).unwrap();
        assert!((b2.omega - 0.8507422224129554).abs() <= 1e-12, "{}", b2.omega);
        assert!(smoothing_bound_1d(2.5, 0.0).is_err());
    }

    #[test]
    fn crank_nicolson_step_contracts() {
        let params = FractionalParams::new(1.8, 0.01, 2.0).unwrap();
        let grid = Grid1D::new(0.0, 1.0, 16).unwrap();
        let field = DiffusionField1D::constant(1.0, 1.0, grid.m);
        let tau = 1.0 / 16.0;
        let a = cn_operator(&params, &grid, tau, &field).unwrap();
        let plus = cn_plus_operator(&params, &grid, tau, &field).unwrap();
        let rho = amplification_radius(&a, &plus, 64).unwrap();
        assert!(rho < 1.0, "radius {rho}");

        // lopsided coefficients exercise the nonsymmetric path
        let skew = DiffusionField1D::constant(0.3, 0.7, grid.m);
        let a2 = cn_operator(&params, &grid, tau, &skew).unwrap();
        let p2 = cn_plus_operator(&params, &grid, tau, &skew).unwrap();
        let rho2 = amplification_radius(&a2, &p2, 64).unwrap();
        assert!(rho2 < 1.0, "skew radius {rho2}");
    }

    #[test]
    fn szego_samples_track_eigenvalues() {
        // classical limit: the tridiagonal eigenvalues equal the samples
        let classical = FractionalParams::new(2.0, 0.0, 0.0).unwrap();
        let dev = szego_deviation(&classical, 24).unwrap();
        assert!(dev <= 1e-10, "classical deviation {dev}");

        let params = FractionalParams::new(1.5, 0.01, 0.0).unwrap();
        let d32 = szego_deviation(&params, 32).unwrap();
        let d128 = szego_deviation(&params, 128).unwrap();
        assert!(d128 < d32, "deviations {d32} -> {d128}");
    }
}
