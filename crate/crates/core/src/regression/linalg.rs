//! Small dense linear algebra kernels used by the fitting code.
//!
//! Everything here is column-major and sized for design matrices with at
//! most a few hundred columns, which is all the fitting routines ever
//! produce. No attempt is made at blocking or SIMD; the penalised
//! least-squares problems are tiny compared to the cost of building the
//! designs themselves.

use alloc::vec;
use alloc::vec::Vec;

// Float supplies f64 math in no_std builds; tests resolve to std's inherent methods.
#[cfg_attr(test, allow(unused_imports))]
use crate::math::Float;

/// Dense column-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    /// Build from column vectors; all columns must share a length.
    pub fn from_cols(cols: &[Vec<f64>]) -> Self {
        let rows = cols.first().map_or(0, Vec::len);
        let mut m = Mat::zeros(rows, cols.len());
        for (c, col) in cols.iter().enumerate() {
            debug_assert_eq!(col.len(), rows);
            m.data[c * rows..(c + 1) * rows].copy_from_slice(col);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    #[cfg_attr(not(test), allow(dead_code))]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[c * self.rows + r]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[c * self.rows + r] = v;
    }

    #[inline]
    pub fn add_to(&mut self, r: usize, c: usize, v: f64) {
        self.data[c * self.rows + r] += v;
    }

    pub fn col(&self, c: usize) -> &[f64] {
        &self.data[c * self.rows..(c + 1) * self.rows]
    }

    pub fn col_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.data[c * self.rows..(c + 1) * self.rows]
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for c in 0..self.cols {
            for r in 0..self.rows {
                t.set(c, r, self.get(r, c));
            }
        }
        t
    }

    pub fn mul(&self, other: &Mat) -> Mat {
        debug_assert_eq!(self.cols, other.rows);
        let mut out = Mat::zeros(self.rows, other.cols);
        for c in 0..other.cols {
            for k in 0..self.cols {
                let w = other.get(k, c);
                if w == 0.0 {
                    continue;
                }
                let src = self.col(k);
                let dst = out.col_mut(c);
                for r in 0..self.rows {
                    dst[r] += src[r] * w;
                }
            }
        }
        out
    }

    /// `self * v` for a vector `v`.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(self.cols, v.len());
        let mut out = vec![0.0; self.rows];
        for c in 0..self.cols {
            let w = v[c];
            if w == 0.0 {
                continue;
            }
            for (o, x) in out.iter_mut().zip(self.col(c)) {
                *o += x * w;
            }
        }
        out
    }

    /// `self' * v` for a vector `v`.
    pub fn t_mul_vec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(self.rows, v.len());
        (0..self.cols).map(|c| dot(self.col(c), v)).collect()
    }

    /// Gram matrix `self' * self`.
    pub fn xtx(&self) -> Mat {
        let mut out = Mat::zeros(self.cols, self.cols);
        for i in 0..self.cols {
            for j in i..self.cols {
                let v = dot(self.col(i), self.col(j));
                out.set(i, j, v);
                out.set(j, i, v);
            }
        }
        out
    }

    /// `self[r0.., c0..] += scale * block`, used to assemble penalty blocks.
    pub fn add_scaled_block(&mut self, r0: usize, c0: usize, block: &Mat, scale: f64) {
        debug_assert!(r0 + block.rows <= self.rows && c0 + block.cols <= self.cols);
        for c in 0..block.cols {
            for r in 0..block.rows {
                self.add_to(r0 + r, c0 + c, scale * block.get(r, c));
            }
        }
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &Mat) -> Mat {
        let mut out = Mat::zeros(self.rows * other.rows, self.cols * other.cols);
        for ca in 0..self.cols {
            for ra in 0..self.rows {
                let a = self.get(ra, ca);
                if a == 0.0 {
                    continue;
                }
                for cb in 0..other.cols {
                    for rb in 0..other.rows {
                        out.set(
                            ra * other.rows + rb,
                            ca * other.cols + cb,
                            a * other.get(rb, cb),
                        );
                    }
                }
            }
        }
        out
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cholesky factorisation `a = L L'` for symmetric positive-definite `a`.
/// Returns `None` when a pivot is not strictly positive.
pub(crate) fn cholesky(a: &Mat) -> Option<Mat> {
    debug_assert_eq!(a.rows, a.cols);
    let n = a.rows;
    let mut l = Mat::zeros(n, n);
    for j in 0..n {
        let mut d = a.get(j, j);
        for k in 0..j {
            let v = l.get(j, k);
            d -= v * v;
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let dj = d.sqrt();
        l.set(j, j, dj);
        for i in j + 1..n {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, s / dj);
        }
    }
    Some(l)
}

/// Solve `L L' x = b` given the lower Cholesky factor.
pub(crate) fn chol_solve(l: &Mat, b: &[f64]) -> Vec<f64> {
    let n = l.rows;
    debug_assert_eq!(b.len(), n);
    let mut x = b.to_vec();
    // Forward: L z = b.
    for i in 0..n {
        let mut s = x[i];
        for k in 0..i {
            s -= l.get(i, k) * x[k];
        }
        x[i] = s / l.get(i, i);
    }
    // Backward: L' x = z.
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in i + 1..n {
            s -= l.get(k, i) * x[k];
        }
        x[i] = s / l.get(i, i);
    }
    x
}

/// Solve `L L' X = B` column by column.
pub(crate) fn chol_solve_mat(l: &Mat, b: &Mat) -> Mat {
    let mut out = Mat::zeros(b.rows, b.cols);
    for c in 0..b.cols {
        let x = chol_solve(l, b.col(c));
        out.col_mut(c).copy_from_slice(&x);
    }
    out
}

/// Solve `a x = b` for symmetric positive-definite `a`.
#[cfg_attr(not(test), allow(dead_code))]
pub(crate) fn solve_spd(a: &Mat, b: &[f64]) -> Option<Vec<f64>> {
    cholesky(a).map(|l| chol_solve(&l, b))
}

/// Inverse of a symmetric positive-definite matrix.
pub(crate) fn invert_spd(a: &Mat) -> Option<Mat> {
    let l = cholesky(a)?;
    Some(chol_solve_mat(&l, &Mat::identity(a.rows)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{} vs {}", a, b);
    }

    #[test]
    fn matmul_and_transpose() {
        let a = Mat::from_cols(&[vec![1.0, 3.0], vec![2.0, 4.0]]);
        let b = Mat::from_cols(&[vec![5.0, 7.0], vec![6.0, 8.0]]);
        let c = a.mul(&b);
        assert_eq!(c.get(0, 0), 19.0);
        assert_eq!(c.get(0, 1), 22.0);
        assert_eq!(c.get(1, 0), 43.0);
        assert_eq!(c.get(1, 1), 50.0);
        let t = a.transpose();
        assert_eq!(t.get(0, 1), 3.0);
        assert_eq!(t.get(1, 0), 2.0);
    }

    #[test]
    fn cholesky_solves_spd_system() {
        // a = m' m + I is SPD for any m.
        let m = Mat::from_cols(&[
            vec![1.0, 2.0, 0.5],
            vec![-1.0, 0.3, 2.2],
            vec![0.7, 0.7, -0.4],
        ]);
        let mut a = m.xtx();
        for i in 0..3 {
            a.add_to(i, i, 1.0);
        }
        let want = vec![0.3, -1.2, 2.5];
        let b = a.mul_vec(&want);
        let got = solve_spd(&a, &b).unwrap();
        for (g, w) in got.iter().zip(&want) {
            approx(*g, *w, 1e-12);
        }
        let inv = invert_spd(&a).unwrap();
        let prod = a.mul(&inv);
        for i in 0..3 {
            for j in 0..3 {
                approx(prod.get(i, j), if i == j { 1.0 } else { 0.0 }, 1e-12);
            }
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = Mat::from_cols(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert!(cholesky(&a).is_none());
    }

    #[test]
    fn kron_matches_hand_expansion() {
        let a = Mat::from_cols(&[vec![1.0, 3.0], vec![2.0, 4.0]]);
        let i2 = Mat::identity(2);
        let k = a.kron(&i2);
        // (a ⊗ I)[(ra,rb),(ca,cb)] = a[ra,ca] * I[rb,cb]
        assert_eq!(k.rows(), 4);
        assert_eq!(k.get(0, 0), 1.0);
        assert_eq!(k.get(1, 1), 1.0);
        assert_eq!(k.get(0, 2), 2.0);
        assert_eq!(k.get(3, 1), 3.0);
        assert_eq!(k.get(2, 2), 4.0);
        assert_eq!(k.get(0, 1), 0.0);
    }
}
