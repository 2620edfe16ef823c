//! Tempered, weighted and shifted Grunwald stencils.
//!
//! For a fractional order `alpha` in (1, 2), tempering parameter
//! `lambda >= 0` and tuning weight `gamma3`, the second-order stencil
//! combines three shifted Grunwald expansions with weights
//!
//! ```text
//! gamma1 = alpha / 2 + gamma3
//! gamma2 = (2 - alpha) / 2 - 2 gamma3
//! ```
//!
//! into coefficients
//!
//! ```text
//! g_0 = gamma1 e^{h lambda}
//! g_1 = gamma1 w_1 + gamma2 w_0
//! g_k = (gamma1 w_k + gamma2 w_{k-1} + gamma3 w_{k-2}) e^{-(k-1) h lambda},  k >= 2
//! ```
//!
//! where `w_k` are the alternating-sign binomial weights. The row sums of
//! the resulting operator converge to `phi(lambda) =
//! (gamma1 e^{h lambda} + gamma2 + gamma3 e^{-h lambda})(1 - e^{-h lambda})^alpha`,
//! which appears as a diagonal correction in the coefficient matrix.

use crate::error::Error;
use crate::fastlinalg::ToeplitzDescriptor;
use crate::Result;

/// Alternating-sign binomial weights `w_k = (-1)^k C(alpha, k)` for
/// `k = 0..=count`, by the stable recurrence
/// `w_k = w_{k-1} (1 - (alpha + 1) / k)`.
pub fn grunwald_weights(alpha: f64, count: usize) -> Result<Vec<f64>> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidParameter(format!("grunwald order {alpha} must be positive")));
    }
    let mut w = Vec::with_capacity(count + 1);
    w.push(1.0);
    for k in 1..=count {
        let prev = w[k - 1];
        w.push(prev * (1.0 - (alpha + 1.0) / k as f64));
    }
    Ok(w)
}

/// Fractional order, tempering and stencil weights in one bundle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FractionalParams {
    pub alpha: f64,
    pub lambda: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    /// Whether `gamma3` falls inside the interval guaranteeing the sign
    /// pattern of the stencil (callers may proceed regardless, but the
    /// convergence theory no longer applies).
    pub gamma3_valid: bool,
}

impl FractionalParams {
    /// `alpha` in (1, 2), or exactly 2 with `gamma3 == 0` for the classical
    /// Laplacian limit. `lambda` must be nonnegative.
    pub fn new(alpha: f64, gamma3: f64, lambda: f64) -> Result<Self> {
        if !(alpha > 1.0 && alpha <= 2.0) {
            return Err(Error::InvalidParameter(format!("alpha {alpha} outside (1, 2]")));
        }
        if alpha == 2.0 && gamma3 != 0.0 {
            return Err(Error::InvalidParameter(
                "alpha = 2 is supported only with gamma3 = 0".into(),
            ));
        }
        if !(lambda >= 0.0) {
            return Err(Error::InvalidParameter(format!("lambda {lambda} must be >= 0")));
        }
        let (lo, hi) = Self::gamma3_interval(alpha);
        Ok(FractionalParams {
            alpha,
            lambda,
            gamma1: alpha / 2.0 + gamma3,
            gamma2: (2.0 - alpha) / 2.0 - 2.0 * gamma3,
            gamma3,
            gamma3_valid: gamma3 >= lo && gamma3 <= hi,
        })
    }

    /// Closed interval of `gamma3` values for which the stencil keeps the
    /// sign pattern needed by the spectral analysis.
    pub fn gamma3_interval(alpha: f64) -> (f64, f64) {
        let a = alpha;
        let lower1 = (2.0 - a) * (a * a + a - 8.0) / (2.0 * (a * a + 3.0 * a + 2.0));
        let lower2 = (1.0 - a) * (a * a + 2.0 * a) / (2.0 * (a * a + 3.0 * a + 4.0));
        let upper = (2.0 - a) * (a * a + 2.0 * a - 3.0) / (2.0 * (a * a + 3.0 * a + 2.0));
        (lower1.max(lower2), upper)
    }

    /// `alpha lambda^{alpha - 1}`, the advection correction speed. Zero
    /// when the problem is untempered.
    pub fn advection_speed(&self) -> f64 {
        if self.lambda == 0.0 {
            0.0
        } else {
            self.alpha * self.lambda.powf(self.alpha - 1.0)
        }
    }
}

/// Row-sum limit of the tempered stencil,
/// `(gamma1 e^{h lambda} + gamma2 + gamma3 e^{-h lambda})(1 - e^{-h lambda})^alpha`.
pub fn phi_value(params: &FractionalParams, h: f64) -> f64 {
    let hl = h * params.lambda;
    let front = params.gamma1 * hl.exp() + params.gamma2 + params.gamma3 * (-hl).exp();
    front * (1.0 - (-hl).exp()).powf(params.alpha)
}

/// Uniform spatial grid on `[a, b]` with `m` interior nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1D {
    pub a: f64,
    pub b: f64,
    pub m: usize,
    pub h: f64,
}

impl Grid1D {
    pub fn new(a: f64, b: f64, m: usize) -> Result<Self> {
        if !(b > a) {
            return Err(Error::InvalidParameter(format!("empty interval [{a}, {b}]")));
        }
        if m == 0 {
            return Err(Error::InvalidParameter("grid needs at least one interior node".into()));
        }
        Ok(Grid1D { a, b, m, h: (b - a) / (m + 1) as f64 })
    }

    /// Node `x_i` for `i = 0..=m+1`; 0 and m+1 are the boundary points.
    pub fn node(&self, i: usize) -> f64 {
        self.a + self.h * i as f64
    }

    /// Interior nodes `x_1..x_m`.
    pub fn interior(&self) -> Vec<f64> {
        (1..=self.m).map(|i| self.node(i)).collect()
    }

    /// Grid of every other interior node: spacing doubles exactly.
    /// (Recomputing `h` from the halved count instead would not double it
    /// unless `m` is odd, and that drift compounds over repeated halvings.)
    pub fn coarsened(&self) -> Option<Self> {
        let m = self.m / 2;
        if m == 0 {
            return None;
        }
        Some(Grid1D { a: self.a, b: self.b, m, h: 2.0 * self.h })
    }
}

/// Uniform time grid on `[0, t_final]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub t_final: f64,
    pub steps: usize,
    pub tau: f64,
}

impl TimeGrid {
    pub fn new(t_final: f64, steps: usize) -> Result<Self> {
        if !(t_final > 0.0) || steps == 0 {
            return Err(Error::InvalidParameter("time grid needs t_final > 0 and steps >= 1".into()));
        }
        Ok(TimeGrid { t_final, steps, tau: t_final / steps as f64 })
    }
}

/// Tempered stencil coefficients `g_0..g_K` on a grid of spacing `h`.
#[derive(Debug, Clone)]
pub struct TemperedStencil {
    pub params: FractionalParams,
    pub h: f64,
    /// Binomial weights `w_0..w_K`.
    pub omega: Vec<f64>,
    /// Stencil coefficients `g_0..g_K`.
    pub g: Vec<f64>,
    /// Row-sum limit `phi(lambda)`.
    pub phi: f64,
}

/// Builds the stencil with coefficients up to `g_k`. An operator on `m`
/// interior nodes needs `k = m + 1` so that the boundary columns are
/// covered as well.
pub fn tempered_stencil(params: &FractionalParams, h: f64, k: usize) -> Result<TemperedStencil> {
    if !(h > 0.0) {
        return Err(Error::InvalidParameter(format!("grid spacing {h} must be positive")));
    }
    if k < 1 {
        return Err(Error::InvalidParameter("stencil needs at least g_0, g_1".into()));
    }
    let omega = grunwald_weights(params.alpha, k)?;
    let hl = h * params.lambda;
    let decay = (-hl).exp();
    let mut g = Vec::with_capacity(k + 1);
    g.push(params.gamma1 * hl.exp());
    g.push(params.gamma1 * omega[1] + params.gamma2 * omega[0]);
    let mut weight = decay;
    for j in 2..=k {
        let raw = params.gamma1 * omega[j] + params.gamma2 * omega[j - 1] + params.gamma3 * omega[j - 2];
        g.push(raw * weight);
        weight *= decay;
    }
    Ok(TemperedStencil { params: *params, h, omega, g, phi: phi_value(params, h) })
}

impl TemperedStencil {
    /// Highest coefficient index available.
    pub fn max_index(&self) -> usize {
        self.g.len() - 1
    }

    /// Applies the raw one-sided stencil to samples `u_0..u_{m+1}` (both
    /// boundary values included), returning the `m` interior values of
    ///
    /// ```text
    /// h^{-alpha} ( sum_k g_k u_{i -+ (k - 1)} - phi u_i )
    /// ```
    ///
    /// which approximates the tempered derivative minus `lambda^alpha u`.
    /// The left stencil at node `i` needs `g_0..g_{i+1}`, the right one
    /// `g_0..g_{m-i+2}`, so the stencil must extend to `g_{m+1}`.
    pub fn apply_one_sided(&self, side: Side, samples: &[f64]) -> Result<Vec<f64>> {
        if samples.len() < 3 {
            return Err(Error::InvalidParameter("need at least one interior sample".into()));
        }
        let m = samples.len() - 2;
        if self.max_index() < m + 1 {
            return Err(Error::DimensionMismatch {
                expected: m + 2,
                found: self.g.len(),
                context: "stencil coefficients for one-sided application",
            });
        }
        let scale = self.h.powf(-self.params.alpha);
        let mut out = vec![0.0; m];
        for i in 1..=m {
            let mut acc = 0.0;
            match side {
                Side::Left => {
                    for k in 0..=i + 1 {
                        acc += self.g[k] * samples[i + 1 - k];
                    }
                }
                Side::Right => {
                    for k in 0..=m - i + 2 {
                        acc += self.g[k] * samples[i + k - 1];
                    }
                }
            }
            out[i - 1] = scale * (acc - self.phi * samples[i]);
        }
        Ok(out)
    }
}

/// Which one-sided derivative a stencil application approximates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Toeplitz coefficient matrix of the left-sided operator on `m` interior
/// nodes: lower Hessenberg with first row `[g_1 - phi, g_0, 0, ...]` and
/// first column `[g_1 - phi, g_2, ..., g_m]`. The right-sided operator is
/// its transpose.
pub fn toeplitz_b(stencil: &TemperedStencil, m: usize) -> Result<ToeplitzDescriptor> {
    if m == 0 {
        return Err(Error::InvalidParameter("matrix needs at least one row".into()));
    }
    if stencil.max_index() < m {
        return Err(Error::DimensionMismatch {
            expected: m + 1,
            found: stencil.g.len(),
            context: "stencil coefficients for toeplitz matrix",
        });
    }
    let diag = stencil.g[1] - stencil.phi;
    let mut first_col = Vec::with_capacity(m);
    first_col.push(diag);
    for k in 1..m {
        first_col.push(stencil.g[k + 1]);
    }
    let mut first_row = vec![0.0; m];
    first_row[0] = diag;
    if m > 1 {
        first_row[1] = stencil.g[0];
    }
    ToeplitzDescriptor::new(first_col, first_row)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn grunwald_weights_small_cases() {
        let w = grunwald_weights(1.5, 3).unwrap();
        let expected = [1.0, -1.5, 0.375, 0.0625];
        for (a, b) in w.iter().zip(expected.iter()) {
            assert_close(*a, *b, 1e-15);
        }
        let w2 = grunwald_weights(2.0, 4).unwrap();
        let expected2 = [1.0, -2.0, 1.0, 0.0, 0.0];
        for (a, b) in w2.iter().zip(expected2.iter()) {
            assert_close(*a, *b, 1e-15);
        }
    }

    #[test]
    fn grunwald_weights_sign_pattern_and_zero_sum() {
        for &alpha in &[1.1, 1.2, 1.5, 1.8, 1.99] {
            let w = grunwald_weights(alpha, 10_000).unwrap();
            assert_eq!(w[0], 1.0);
            assert_close(w[1], -alpha, 1e-14);
            for k in 2..w.len() {
                assert!(w[k] > 0.0, "w_{k} sign at alpha={alpha}");
                if k > 2 {
                    assert!(w[k] < w[k - 1], "w_k must decrease, alpha={alpha}, k={k}");
                }
            }
            let sum: f64 = w.iter().sum();
            assert!(sum.abs() < 1e-3, "partial sum {sum} at alpha={alpha}");
        }
    }

    #[test]
    fn params_weights_and_interval() {
        let p = FractionalParams::new(1.5, 0.01, 2.0).unwrap();
        assert_close(p.gamma1, 0.76, 1e-15);
        assert_close(p.gamma2, 0.23, 1e-15);
        assert!(p.gamma3_valid);
        let (lo, hi) = FractionalParams::gamma3_interval(1.5);
        assert_close(hi, 0.0642857142857143, 1e-12);
        assert!(lo < 0.0);

        // outside the interval: constructed fine, flagged invalid
        let q = FractionalParams::new(1.5, 0.2, 2.0).unwrap();
        assert!(!q.gamma3_valid);

        assert!(FractionalParams::new(1.0, 0.0, 0.0).is_err());
        assert!(FractionalParams::new(2.0, 0.01, 0.0).is_err());
        assert!(FractionalParams::new(2.0, 0.0, 0.0).is_ok());
        assert!(FractionalParams::new(1.5, 0.0, -1.0).is_err());
    }

    #[test]
    fn phi_and_low_order_coefficients() {
        let p = FractionalParams::new(1.5, 0.01, 2.0).unwrap();
        let s = tempered_stencil(&p, 0.1, 6).unwrap();
        assert_close(s.phi, 0.0900230225603496, 1e-15);
        assert_close(s.g[0], 0.9282660962017291, 1e-15);
        assert_close(s.g[1], -0.91, 1e-15);
        assert_close(s.g[2], -0.04093653765389909, 1e-15);
        assert_close(s.g[3], 0.07960050546673218, 1e-15);
        assert!(s.g[0] + s.g[2] >= 0.0);

        // untempered: phi vanishes, g_0 = gamma1
        let p0 = FractionalParams::new(1.5, 0.01, 0.0).unwrap();
        let s0 = tempered_stencil(&p0, 0.1, 4).unwrap();
        assert_close(s0.phi, 0.0, 0.0);
        assert_close(s0.g[0], 0.76, 1e-15);

        // laplacian limit: phi = e^{h l}(1 - e^{-h l})^2 shape
        let p2 = FractionalParams::new(2.0, 0.0, 3.0).unwrap();
        let h = 0.05;
        let hl: f64 = h * 3.0;
        let expected = hl.exp() * (1.0 - (-hl).exp()).powi(2);
        assert_close(phi_value(&p2, h), expected, 1e-15);
    }

    #[test]
    fn laplacian_limit_matrix() {
        let p = FractionalParams::new(2.0, 0.0, 0.0).unwrap();
        let s = tempered_stencil(&p, 0.25, 5).unwrap();
        let b = toeplitz_b(&s, 4).unwrap();
        let dense = b.to_dense();
        for i in 0..4 {
            for j in 0..4 {
                let expected = match (i as isize - j as isize).abs() {
                    0 => -2.0,
                    1 => 1.0,
                    _ => 0.0,
                };
                assert_close(dense[(i, j)], expected, 1e-15);
            }
        }
    }

    #[test]
    fn stencil_sign_pattern_on_lattice() {
        for &alpha in &[1.2, 1.5, 1.8] {
            for &gamma3 in &[0.0, 0.00235, 0.01] {
                for &lambda in &[0.0, 2.0, 10.0] {
                    for &h in &[0.1, 0.01] {
                        let p = FractionalParams::new(alpha, gamma3, lambda).unwrap();
                        assert!(p.gamma3_valid, "lattice point must be valid");
                        let s = tempered_stencil(&p, h, 40).unwrap();
                        assert!(s.g[1] <= 0.0);
                        assert!(s.g[0] + s.g[2] >= 0.0);
                        for k in 3..s.g.len() {
                            assert!(s.g[k] >= -1e-15, "g_{k} at a={alpha} g3={gamma3} l={lambda}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn stencil_partial_sums_approach_phi() {
        let p = FractionalParams::new(1.5, 0.01, 2.0).unwrap();
        let s = tempered_stencil(&p, 0.01, 100_000).unwrap();
        let mut partial = 0.0;
        let mut prev_gap = f64::INFINITY;
        for (k, &gk) in s.g.iter().enumerate() {
            partial += gk;
            if k >= 3 {
                let gap = s.phi - partial;
                assert!(gap >= -1e-12, "partial sums must stay below phi (k={k})");
                assert!(gap <= prev_gap + 1e-15, "monotone approach fails at k={k}");
                prev_gap = gap;
            }
        }
        assert!((partial - s.phi).abs() < 1e-6, "gap {}", (partial - s.phi).abs());
    }

    #[test]
    fn one_sided_application_needs_long_stencil() {
        let p = FractionalParams::new(1.5, 0.01, 0.0).unwrap();
        let s = tempered_stencil(&p, 0.2, 3).unwrap();
        let samples = vec![0.0; 6]; // m = 4 needs g_5
        assert!(s.apply_one_sided(Side::Left, &samples).is_err());
    }
}
