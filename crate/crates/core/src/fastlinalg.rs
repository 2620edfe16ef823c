//! Structured linear algebra kernels.
//!
//! The discrete fractional operators built elsewhere in this crate are sums
//! of diagonally scaled Toeplitz matrices, so everything here revolves
//! around fast Toeplitz application:
//!
//! ```text
//! T v  =  first M entries of  ifft( fft(embed(T)) .* fft(pad(v)) )
//! ```
//!
//! where `embed` places the Toeplitz diagonals into a circulant of length
//! at least `2M - 1`. Circulant systems are solved by spectral division,
//! block-Toeplitz-Toeplitz-block (BTTB) products by the same embedding in
//! two dimensions. Dense materialization is provided as a slow oracle for
//! tests and for the coarsest multigrid levels, along with Thomas and
//! banded LU direct solvers used by the Laplacian-style preconditioners.

use crate::error::Error;
use crate::Result;
use nalgebra::DMatrix;
use rustfft::num_complex::Complex;

pub(crate) mod fft {
    use rustfft::num_complex::Complex;
    use rustfft::{Fft, FftPlanner};
    use std::cell::RefCell;
    use std::collections::HashMap;
    use std::sync::Arc;

    thread_local! {
        static PLANS: RefCell<(FftPlanner<f64>, HashMap<(usize, bool), Arc<dyn Fft<f64>>>)> =
            RefCell::new((FftPlanner::new(), HashMap::new()));
    }

    fn process(buf: &mut [Complex<f64>], forward: bool) {
        let len = buf.len();
        if len <= 1 {
            return;
        }
        let plan = PLANS.with(|cell| {
            let (planner, cache) = &mut *cell.borrow_mut();
            cache
                .entry((len, forward))
                .or_insert_with(|| {
                    if forward {
                        planner.plan_fft_forward(len)
                    } else {
                        planner.plan_fft_inverse(len)
                    }
                })
                .clone()
        });
        plan.process(buf);
    }

    pub fn forward(buf: &mut [Complex<f64>]) {
        process(buf, true);
    }

    /// Unitary up to the usual 1/n: `inverse(forward(x)) == x`.
    pub fn inverse(buf: &mut [Complex<f64>]) {
        process(buf, false);
        let scale = 1.0 / buf.len() as f64;
        for z in buf.iter_mut() {
            *z *= scale;
        }
    }

    /// In-place 2D transform of an `n1 x n2` array stored with the first
    /// index fastest.
    pub fn forward_2d(buf: &mut [Complex<f64>], n1: usize, n2: usize) {
        transform_2d(buf, n1, n2, true);
    }

    pub fn inverse_2d(buf: &mut [Complex<f64>], n1: usize, n2: usize) {
        transform_2d(buf, n1, n2, false);
        let scale = 1.0 / (n1 * n2) as f64;
        for z in buf.iter_mut() {
            *z *= scale;
        }
    }

    fn transform_2d(buf: &mut [Complex<f64>], n1: usize, n2: usize, forward: bool) {
        assert_eq!(buf.len(), n1 * n2);
        for row in buf.chunks_exact_mut(n1) {
            process(row, forward);
        }
        let mut col = vec![Complex::new(0.0, 0.0); n2];
        for i1 in 0..n1 {
            for i2 in 0..n2 {
                col[i2] = buf[i1 + n1 * i2];
            }
            process(&mut col, forward);
            for i2 in 0..n2 {
                buf[i1 + n1 * i2] = col[i2];
            }
        }
    }
}

/// A real square linear operator applied matrix-free.
///
/// Implementations are immutable after construction and safe to share
/// across threads.
pub trait LinearOp: Send + Sync {
    fn size(&self) -> usize;

    /// `out = A v`. Panics on length mismatch.
    fn apply_into(&self, v: &[f64], out: &mut [f64]);

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.size()];
        self.apply_into(v, &mut out);
        out
    }

    /// Main diagonal of the operator, exact.
    fn diagonal(&self) -> Vec<f64>;
}

/// Square Toeplitz matrix `T[i][j] = t_{i-j}` described by its first column
/// (`t_0..t_{M-1}`) and first row (`t_0, t_{-1}, ..., t_{-(M-1)}`).
#[derive(Debug, Clone, PartialEq)]
pub struct ToeplitzDescriptor {
    first_col: Vec<f64>,
    first_row: Vec<f64>,
}

impl ToeplitzDescriptor {
    pub fn new(first_col: Vec<f64>, first_row: Vec<f64>) -> Result<Self> {
        if first_col.is_empty() || first_col.len() != first_row.len() {
            return Err(Error::DimensionMismatch {
                expected: first_col.len(),
                found: first_row.len(),
                context: "toeplitz descriptor",
            });
        }
        if first_col[0] != first_row[0] {
            return Err(Error::InvalidParameter(
                "toeplitz first column and first row must share the corner entry".into(),
            ));
        }
        Ok(ToeplitzDescriptor { first_col, first_row })
    }

    pub fn size(&self) -> usize {
        self.first_col.len()
    }

    pub fn first_col(&self) -> &[f64] {
        &self.first_col
    }

    pub fn first_row(&self) -> &[f64] {
        &self.first_row
    }

    /// Diagonal value `t_k` with `k = i - j` (negative above the diagonal).
    pub fn diag_value(&self, k: isize) -> f64 {
        let m = self.size() as isize;
        if k >= 0 && k < m {
            self.first_col[k as usize]
        } else if k < 0 && -k < m {
            self.first_row[(-k) as usize]
        } else {
            0.0
        }
    }

    pub fn transpose(&self) -> ToeplitzDescriptor {
        ToeplitzDescriptor { first_col: self.first_row.clone(), first_row: self.first_col.clone() }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let m = self.size();
        DMatrix::from_fn(m, m, |i, j| self.diag_value(i as isize - j as isize))
    }
}

/// Toeplitz operator with a precomputed circulant-embedding spectrum.
///
/// The embedding length is the smallest power of two at or above `2M - 1`;
/// any length at least `2M - 1` yields the same product up to roundoff.
#[derive(Debug, Clone)]
pub struct PlannedToeplitz {
    m: usize,
    len: usize,
    spectrum: Vec<Complex<f64>>,
}

impl PlannedToeplitz {
    pub fn new(desc: &ToeplitzDescriptor) -> Self {
        let m = desc.size();
        let len = (2 * m - 1).next_power_of_two();
        PlannedToeplitz::with_embedding_length(desc, len).expect("power-of-two embedding is valid")
    }

    /// Embed into a circulant of the caller's chosen length (`>= 2M - 1`).
    pub fn with_embedding_length(desc: &ToeplitzDescriptor, len: usize) -> Result<Self> {
        let m = desc.size();
        if len < 2 * m - 1 {
            return Err(Error::InvalidParameter(format!(
                "embedding length {len} below minimum {}",
                2 * m - 1
            )));
        }
        let mut spectrum = vec![Complex::new(0.0, 0.0); len];
        for (k, &t) in desc.first_col.iter().enumerate() {
            spectrum[k].re = t;
        }
        for k in 1..m {
            spectrum[len - k].re = desc.first_row[k];
        }
        fft::forward(&mut spectrum);
        Ok(PlannedToeplitz { m, len, spectrum })
    }

    pub fn size(&self) -> usize {
        self.m
    }

    pub fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        assert_eq!(v.len(), self.m);
        assert_eq!(out.len(), self.m);
        if self.m == 1 {
            out[0] = self.spectrum[0].re * v[0];
            return;
        }
        let mut buf = vec![Complex::new(0.0, 0.0); self.len];
        for (slot, &x) in buf.iter_mut().zip(v.iter()) {
            slot.re = x;
        }
        fft::forward(&mut buf);
        for (slot, s) in buf.iter_mut().zip(self.spectrum.iter()) {
            *slot *= s;
        }
        fft::inverse(&mut buf);
        for (o, z) in out.iter_mut().zip(buf.iter()) {
            *o = z.re;
        }
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.m];
        self.apply_into(v, &mut out);
        out
    }
}

/// One-shot fast Toeplitz product.
pub fn toeplitz_matvec(desc: &ToeplitzDescriptor, v: &[f64]) -> Result<Vec<f64>> {
    if v.len() != desc.size() {
        return Err(Error::DimensionMismatch {
            expected: desc.size(),
            found: v.len(),
            context: "toeplitz matvec",
        });
    }
    Ok(PlannedToeplitz::new(desc).apply(v))
}

/// Circulant matrix described by its first column, spectrum cached.
#[derive(Debug, Clone)]
pub struct CirculantDescriptor {
    first_col: Vec<f64>,
    spectrum: Vec<Complex<f64>>,
}

impl CirculantDescriptor {
    pub fn new(first_col: Vec<f64>) -> Self {
        let mut spectrum: Vec<Complex<f64>> =
            first_col.iter().map(|&x| Complex::new(x, 0.0)).collect();
        fft::forward(&mut spectrum);
        CirculantDescriptor { first_col, spectrum }
    }

    pub fn size(&self) -> usize {
        self.first_col.len()
    }

    pub fn first_col(&self) -> &[f64] {
        &self.first_col
    }

    /// Eigenvalues in FFT mode order.
    pub fn spectrum(&self) -> &[Complex<f64>] {
        &self.spectrum
    }

    /// First column of the transposed circulant: index k maps to (n-k) mod n.
    pub fn transpose(&self) -> CirculantDescriptor {
        let n = self.size();
        let col: Vec<f64> = (0..n).map(|k| self.first_col[(n - k) % n]).collect();
        CirculantDescriptor::new(col)
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.size());
        let mut buf: Vec<Complex<f64>> = v.iter().map(|&x| Complex::new(x, 0.0)).collect();
        fft::forward(&mut buf);
        for (slot, s) in buf.iter_mut().zip(self.spectrum.iter()) {
            *slot *= s;
        }
        fft::inverse(&mut buf);
        buf.into_iter().map(|z| z.re).collect()
    }

    /// Spectral solve. Fails if any mode magnitude falls below
    /// `1e-14 * max_mode`, reporting the offending mode index.
    pub fn solve(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.size() {
            return Err(Error::DimensionMismatch {
                expected: self.size(),
                found: v.len(),
                context: "circulant solve",
            });
        }
        let max_mode = self.spectrum.iter().map(|z| z.norm()).fold(0.0, f64::max);
        for (k, z) in self.spectrum.iter().enumerate() {
            if z.norm() <= 1e-14 * max_mode {
                return Err(Error::SingularSpectrum { mode: k });
            }
        }
        let mut buf: Vec<Complex<f64>> = v.iter().map(|&x| Complex::new(x, 0.0)).collect();
        fft::forward(&mut buf);
        for (slot, s) in buf.iter_mut().zip(self.spectrum.iter()) {
            *slot /= s;
        }
        fft::inverse(&mut buf);
        Ok(buf.into_iter().map(|z| z.re).collect())
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.size();
        DMatrix::from_fn(n, n, |i, j| self.first_col[(n + i - j) % n])
    }
}

/// T. Chan's optimal circulant approximation: the Frobenius-norm projection
/// of a Toeplitz matrix onto the circulant algebra,
/// `c_k = ((M - k) t_k + k t_{k-M}) / M`.
pub fn chan_circulant(desc: &ToeplitzDescriptor) -> CirculantDescriptor {
    let m = desc.size();
    let mf = m as f64;
    let col: Vec<f64> = (0..m)
        .map(|k| {
            let kf = k as f64;
            let wrapped = if k == 0 { 0.0 } else { desc.diag_value(k as isize - m as isize) };
            ((mf - kf) * desc.first_col[k] + kf * wrapped) / mf
        })
        .collect();
    CirculantDescriptor::new(col)
}

/// Convenience wrapper for [`CirculantDescriptor::solve`].
pub fn circulant_solve(c: &CirculantDescriptor, v: &[f64]) -> Result<Vec<f64>> {
    c.solve(v)
}

/// Block-Toeplitz matrix with Toeplitz blocks on an `m1 x m2` grid stored
/// with the first index fastest:
///
/// ```text
/// (T u)[i1, i2] = sum_{j1, j2} c[i1 - j1, i2 - j2] u[j1, j2]
/// ```
///
/// Coefficients are held in a dense `(2 m1 - 1) x (2 m2 - 1)` array with
/// `c[k1, k2]` stored at `[k1 + m1 - 1, k2 + m2 - 1]`.
#[derive(Debug, Clone)]
pub struct BttbDescriptor {
    m1: usize,
    m2: usize,
    coef: Vec<f64>,
}

impl BttbDescriptor {
    pub fn new(m1: usize, m2: usize, coef: Vec<f64>) -> Result<Self> {
        let expected = (2 * m1 - 1) * (2 * m2 - 1);
        if coef.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: coef.len(),
                context: "bttb coefficients",
            });
        }
        Ok(BttbDescriptor { m1, m2, coef })
    }

    pub fn sizes(&self) -> (usize, usize) {
        (self.m1, self.m2)
    }

    pub fn coef(&self, k1: isize, k2: isize) -> f64 {
        let (m1, m2) = (self.m1 as isize, self.m2 as isize);
        if k1.abs() < m1 && k2.abs() < m2 {
            let r = (k1 + m1 - 1) as usize;
            let s = (k2 + m2 - 1) as usize;
            self.coef[r + (2 * self.m1 - 1) * s]
        } else {
            0.0
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.m1 * self.m2;
        DMatrix::from_fn(n, n, |p, q| {
            let (i1, i2) = ((p % self.m1) as isize, (p / self.m1) as isize);
            let (j1, j2) = ((q % self.m1) as isize, (q / self.m1) as isize);
            self.coef(i1 - j1, i2 - j2)
        })
    }
}

/// Fast BTTB product through a two-dimensional circulant embedding.
pub fn bttb_matvec(desc: &BttbDescriptor, u: &[f64]) -> Result<Vec<f64>> {
    let (m1, m2) = desc.sizes();
    if u.len() != m1 * m2 {
        return Err(Error::DimensionMismatch {
            expected: m1 * m2,
            found: u.len(),
            context: "bttb matvec",
        });
    }
    let l1 = (2 * m1 - 1).next_power_of_two();
    let l2 = (2 * m2 - 1).next_power_of_two();
    let mut sym = vec![Complex::new(0.0, 0.0); l1 * l2];
    for k2 in -(m2 as isize - 1)..=(m2 as isize - 1) {
        let p2 = ((k2 + l2 as isize) % l2 as isize) as usize;
        for k1 in -(m1 as isize - 1)..=(m1 as isize - 1) {
            let p1 = ((k1 + l1 as isize) % l1 as isize) as usize;
            sym[p1 + l1 * p2].re = desc.coef(k1, k2);
        }
    }
    fft::forward_2d(&mut sym, l1, l2);

    let mut buf = vec![Complex::new(0.0, 0.0); l1 * l2];
    for i2 in 0..m2 {
        for i1 in 0..m1 {
            buf[i1 + l1 * i2].re = u[i1 + m1 * i2];
        }
    }
    fft::forward_2d(&mut buf, l1, l2);
    for (slot, s) in buf.iter_mut().zip(sym.iter()) {
        *slot *= s;
    }
    fft::inverse_2d(&mut buf, l1, l2);

    let mut out = vec![0.0; m1 * m2];
    for i2 in 0..m2 {
        for i1 in 0..m1 {
            out[i1 + m1 * i2] = buf[i1 + l1 * i2].re;
        }
    }
    Ok(out)
}

/// Dense materialization oracle: applies the operator to every unit vector.
/// Refuses sizes above `cap` so tests cannot accidentally build huge
/// matrices.
pub fn materialize_dense(op: &dyn LinearOp, cap: usize) -> Result<DMatrix<f64>> {
    let n = op.size();
    if n > cap {
        return Err(Error::SizeCapExceeded { size: n, cap });
    }
    let mut dense = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    let mut col = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        op.apply_into(&e, &mut col);
        e[j] = 0.0;
        for i in 0..n {
            dense[(i, j)] = col[i];
        }
    }
    Ok(dense)
}

/// Thomas elimination for a tridiagonal system.
///
/// `sub[i]` sits at `A[i+1][i]`, `sup[i]` at `A[i][i+1]`. No pivoting is
/// performed; intended for the diagonally dominant systems produced here.
pub fn tridiag_solve(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    if rhs.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: rhs.len(), context: "tridiag rhs" });
    }
    if sub.len() + 1 != n || sup.len() + 1 != n {
        return Err(Error::DimensionMismatch {
            expected: n - 1,
            found: sub.len(),
            context: "tridiag bands",
        });
    }
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut pivot = diag[0];
    if pivot.abs() < f64::MIN_POSITIVE {
        return Err(Error::ZeroPivot { index: 0 });
    }
    if n > 1 {
        c[0] = sup[0] / pivot;
    }
    d[0] = rhs[0] / pivot;
    for i in 1..n {
        pivot = diag[i] - sub[i - 1] * c[i - 1];
        if pivot.abs() < f64::MIN_POSITIVE {
            return Err(Error::ZeroPivot { index: i });
        }
        if i + 1 < n {
            c[i] = sup[i] / pivot;
        }
        d[i] = (rhs[i] - sub[i - 1] * d[i - 1]) / pivot;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Ok(d)
}

/// Square banded matrix with equal lower and upper bandwidth, stored as a
/// dense ribbon: entry `(i, j)` lives at `data[i * (2w + 1) + (j - i + w)]`.
#[derive(Debug, Clone)]
pub struct BandedMatrix {
    n: usize,
    w: usize,
    data: Vec<f64>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, w: usize) -> Self {
        BandedMatrix { n, w, data: vec![0.0; n * (2 * w + 1)] }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.w
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let (i, j, w) = (i as isize, j as isize, self.w as isize);
        let off = j - i;
        if off.abs() > w || i < 0 || j < 0 {
            None
        } else {
            Some((i as usize) * (2 * self.w + 1) + (off + w) as usize)
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map(|s| self.data[s]).unwrap_or(0.0)
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        let s = self.slot(i, j).expect("entry outside band");
        self.data[s] = value;
    }

    pub fn add(&mut self, i: usize, j: usize, value: f64) {
        let s = self.slot(i, j).expect("entry outside band");
        self.data[s] += value;
    }

    /// In-place LU without pivoting. Fill stays inside the band, which is
    /// why this is restricted to the diagonally dominant matrices built by
    /// the preconditioners.
    pub fn factor(mut self) -> Result<BandedLu> {
        let (n, w) = (self.n, self.w);
        for k in 0..n {
            let pivot = self.get(k, k);
            if pivot.abs() < f64::MIN_POSITIVE {
                return Err(Error::ZeroPivot { index: k });
            }
            let i_max = (k + w).min(n - 1);
            for i in k + 1..=i_max {
                let l = self.get(i, k) / pivot;
                self.set(i, k, l);
                if l != 0.0 {
                    let j_max = (k + w).min(n - 1);
                    for j in k + 1..=j_max {
                        let ukj = self.get(k, j);
                        if ukj != 0.0 {
                            self.add(i, j, -l * ukj);
                        }
                    }
                }
            }
        }
        Ok(BandedLu { factors: self })
    }
}

/// LU factors of a [`BandedMatrix`], unit lower triangle stored below the
/// diagonal.
#[derive(Debug, Clone)]
pub struct BandedLu {
    factors: BandedMatrix,
}

impl BandedLu {
    pub fn size(&self) -> usize {
        self.factors.n
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let (n, w) = (self.factors.n, self.factors.w);
        assert_eq!(rhs.len(), n);
        let mut x = rhs.to_vec();
        for i in 0..n {
            let j_lo = i.saturating_sub(w);
            let mut acc = x[i];
            for j in j_lo..i {
                acc -= self.factors.get(i, j) * x[j];
            }
            x[i] = acc;
        }
        for i in (0..n).rev() {
            let j_hi = (i + w).min(n - 1);
            let mut acc = x[i];
            for j in i + 1..=j_hi {
                acc -= self.factors.get(i, j) * x[j];
            }
            x[i] = acc / self.factors.get(i, i);
        }
        x
    }
}

/// Dense operator wrapper, used for Galerkin coarse levels and test oracles.
#[derive(Debug, Clone)]
pub struct DenseOp {
    matrix: DMatrix<f64>,
}

impl DenseOp {
    pub fn new(matrix: DMatrix<f64>) -> Self {
        assert_eq!(matrix.nrows(), matrix.ncols());
        DenseOp { matrix }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
}

impl LinearOp for DenseOp {
    fn size(&self) -> usize {
        self.matrix.nrows()
    }

    fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        let n = self.size();
        assert_eq!(v.len(), n);
        assert_eq!(out.len(), n);
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc += self.matrix[(i, j)] * v[j];
            }
            out[i] = acc;
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        (0..self.size()).map(|i| self.matrix[(i, i)]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    fn random_toeplitz(rng: &mut ChaCha8Rng, m: usize) -> ToeplitzDescriptor {
        let mut col = random_vec(rng, m);
        let mut row = random_vec(rng, m);
        row[0] = col[0];
        // keep the corner shared
        col[0] = row[0];
        ToeplitzDescriptor::new(col, row).unwrap()
    }

    fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn toeplitz_matvec_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &m in &[1usize, 2, 3, 5, 17, 40, 64] {
            let t = random_toeplitz(&mut rng, m);
            let v = random_vec(&mut rng, m);
            let fast = toeplitz_matvec(&t, &v).unwrap();
            let dense = t.to_dense();
            let slow: Vec<f64> = (0..m)
                .map(|i| (0..m).map(|j| dense[(i, j)] * v[j]).sum())
                .collect();
            assert!(max_abs_diff(&fast, &slow) <= 1e-12, "m={m}");
        }
    }

    #[test]
    fn embedding_length_does_not_change_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let m = 33;
        let t = random_toeplitz(&mut rng, m);
        let v = random_vec(&mut rng, m);
        let pow2 = PlannedToeplitz::new(&t).apply(&v);
        let tight = PlannedToeplitz::with_embedding_length(&t, 2 * m - 1).unwrap().apply(&v);
        let loose = PlannedToeplitz::with_embedding_length(&t, 2 * m + 13).unwrap().apply(&v);
        assert!(max_abs_diff(&pow2, &tight) <= 1e-13);
        assert!(max_abs_diff(&pow2, &loose) <= 1e-13);
        assert!(PlannedToeplitz::with_embedding_length(&t, 2 * m - 2).is_err());
    }

    #[test]
    fn transpose_apply_matches_dense_transpose() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let m = 21;
        let t = random_toeplitz(&mut rng, m);
        let v = random_vec(&mut rng, m);
        let fast = toeplitz_matvec(&t.transpose(), &v).unwrap();
        let dense = t.to_dense().transpose();
        let slow: Vec<f64> = (0..m)
            .map(|i| (0..m).map(|j| dense[(i, j)] * v[j]).sum())
            .collect();
        assert!(max_abs_diff(&fast, &slow) <= 1e-12);
    }

    #[test]
    fn chan_circulant_of_laplacian_stencil() {
        let t = ToeplitzDescriptor::new(vec![2.0, -1.0, 0.0], vec![2.0, -1.0, 0.0]).unwrap();
        let c = chan_circulant(&t);
        let expected = [2.0, -2.0 / 3.0, -2.0 / 3.0];
        for (a, b) in c.first_col().iter().zip(expected.iter()) {
            assert!((a - b).abs() <= 1e-15);
        }
    }

    #[test]
    fn chan_circulant_fixes_circulants() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let n = 12;
        let col = random_vec(&mut rng, n);
        // circulant: t_{-k} = t_{n-k}
        let mut row = vec![0.0; n];
        row[0] = col[0];
        for k in 1..n {
            row[k] = col[n - k];
        }
        let t = ToeplitzDescriptor::new(col.clone(), row).unwrap();
        let c = chan_circulant(&t);
        assert!(max_abs_diff(c.first_col(), &col) <= 1e-14);
    }

    #[test]
    fn chan_circulant_is_frobenius_optimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let m = 64;
        let t = random_toeplitz(&mut rng, m);
        let dense_t = t.to_dense();
        let best = chan_circulant(&t);
        let dist = |c: &CirculantDescriptor| (dense_t.clone() - c.to_dense()).norm();
        let best_dist = dist(&best);
        for _ in 0..50 {
            let noise: Vec<f64> = best
                .first_col()
                .iter()
                .map(|&x| x + rng.gen_range(-0.05..0.05))
                .collect();
            let other = CirculantDescriptor::new(noise);
            assert!(best_dist <= dist(&other) + 1e-12);
        }
    }

    #[test]
    fn circulant_solve_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        // diagonally dominant circulant so the spectrum stays away from zero
        let mut col = random_vec(&mut rng, 32);
        col[0] += 8.0;
        let c = CirculantDescriptor::new(col);
        let v = random_vec(&mut rng, 32);
        let x = c.solve(&v).unwrap();
        let back = c.matvec(&x);
        assert!(max_abs_diff(&back, &v) <= 1e-12);
    }

    #[test]
    fn circulant_solve_reports_singular_mode() {
        // all-ones circulant annihilates every nonconstant mode
        let c = CirculantDescriptor::new(vec![1.0; 8]);
        let v = vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        match c.solve(&v) {
            Err(Error::SingularSpectrum { mode }) => assert!(mode > 0),
            other => panic!("expected singular spectrum, got {other:?}"),
        }
    }

    #[test]
    fn circulant_transpose_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let col = random_vec(&mut rng, 9);
        let c = CirculantDescriptor::new(col);
        let diff = (c.to_dense().transpose() - c.transpose().to_dense()).norm();
        assert!(diff <= 1e-14);
    }

    #[test]
    fn bttb_matvec_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        for &(m1, m2) in &[(1usize, 1usize), (3, 2), (5, 7), (8, 8)] {
            let coef = random_vec(&mut rng, (2 * m1 - 1) * (2 * m2 - 1));
            let b = BttbDescriptor::new(m1, m2, coef).unwrap();
            let u = random_vec(&mut rng, m1 * m2);
            let fast = bttb_matvec(&b, &u).unwrap();
            let dense = b.to_dense();
            let slow: Vec<f64> = (0..m1 * m2)
                .map(|i| (0..m1 * m2).map(|j| dense[(i, j)] * u[j]).sum())
                .collect();
            assert!(max_abs_diff(&fast, &slow) <= 1e-12, "{m1}x{m2}");
        }
    }

    #[test]
    fn tridiag_solve_by_elimination() {
        // tridiag{1,-2,1} with rhs (-1, 0, 0) eliminates to (0.75, 0.5, 0.25)
        let x = tridiag_solve(&[1.0, 1.0], &[-2.0, -2.0, -2.0], &[1.0, 1.0], &[-1.0, 0.0, 0.0])
            .unwrap();
        let expected = [0.75, 0.5, 0.25];
        assert!(max_abs_diff(&x, &expected) <= 1e-14);
    }

    #[test]
    fn tridiag_solve_matches_dense_lu() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let n = 40;
        let sub = random_vec(&mut rng, n - 1);
        let sup = random_vec(&mut rng, n - 1);
        let diag: Vec<f64> = random_vec(&mut rng, n).iter().map(|x| x + 4.0).collect();
        let rhs = random_vec(&mut rng, n);
        let x = tridiag_solve(&sub, &diag, &sup, &rhs).unwrap();
        let mut dense = DMatrix::zeros(n, n);
        for i in 0..n {
            dense[(i, i)] = diag[i];
            if i + 1 < n {
                dense[(i + 1, i)] = sub[i];
                dense[(i, i + 1)] = sup[i];
            }
        }
        let xd = dense.lu().solve(&nalgebra::DVector::from_column_slice(&rhs)).unwrap();
        assert!(max_abs_diff(&x, xd.as_slice()) <= 1e-11);
    }

    #[test]
    fn banded_lu_matches_dense_lu() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let (n, w) = (30usize, 4usize);
        let mut band = BandedMatrix::zeros(n, w);
        let mut dense = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i.saturating_sub(w)..=(i + w).min(n - 1) {
                let value = if i == j { rng.gen_range(4.0..6.0) } else { rng.gen_range(-0.4..0.4) };
                band.set(i, j, value);
                dense[(i, j)] = value;
            }
        }
        let rhs = random_vec(&mut rng, n);
        let lu = band.factor().unwrap();
        let x = lu.solve(&rhs);
        let xd = dense.lu().solve(&nalgebra::DVector::from_column_slice(&rhs)).unwrap();
        assert!(max_abs_diff(&x, xd.as_slice()) <= 1e-11);
    }

    #[test]
    fn materialize_dense_respects_cap() {
        let op = DenseOp::new(DMatrix::identity(10, 10));
        assert!(materialize_dense(&op, 9).is_err());
        let dense = materialize_dense(&op, 10).unwrap();
        assert!((dense - DMatrix::identity(10, 10)).norm() == 0.0);
    }
}
