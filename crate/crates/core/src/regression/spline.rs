//! Cubic regression spline bases and tensor-product smooths.
//!
//! The basis is parameterised by the spline's values at `k` knots placed
//! at evenly spaced quantiles of the observed predictor. With natural
//! (zero second derivative) boundary conditions the second derivatives at
//! the knots are a linear map `F = B^{-1} D` of the knot values, which
//! gives both the pointwise basis functions and the exact curvature
//! penalty `S = D' B^{-1} D` (so `beta' S beta` equals the integrated
//! squared second derivative of the interpolant). Outside the knot range
//! the basis extrapolates linearly, continuing the boundary slope.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::linalg::{cholesky, chol_solve_mat, Mat};
use super::RegressionError;
use crate::math::quantile_sorted;

/// A cubic regression spline basis over fixed knots.
#[derive(Debug, Clone)]
pub(crate) struct CrBasis {
    knots: Vec<f64>,
    /// k x k map from knot values to knot second derivatives; the first
    /// and last rows are zero (natural boundary).
    f: Mat,
    /// k x k curvature penalty D' B^{-1} D.
    penalty: Mat,
}

impl CrBasis {
    /// Place `k` knots at evenly spaced quantiles of `xs` and build the
    /// basis. Fails if `k < 4` or `xs` has fewer than `k` distinct values.
    pub fn from_data(xs: &[f64], k: usize) -> Result<Self, RegressionError> {
        if k < 4 {
            return Err(RegressionError::BasisTooSmall { k });
        }
        let mut distinct: Vec<f64> = xs.iter().copied().filter(|v| v.is_finite()).collect();
        distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
        distinct.dedup();
        if distinct.len() < k {
            return Err(RegressionError::KnotError { required: k, distinct: distinct.len() });
        }
        let knots: Vec<f64> = (0..k)
            .map(|i| quantile_sorted(&distinct, i as f64 / (k - 1) as f64))
            .collect();
        Self::from_knots(knots)
    }

    /// Build the basis from explicit strictly increasing knots.
    pub fn from_knots(knots: Vec<f64>) -> Result<Self, RegressionError> {
        let k = knots.len();
        if k < 4 {
            return Err(RegressionError::BasisTooSmall { k });
        }
        if knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(RegressionError::KnotError { required: k, distinct: 0 });
        }
        let h: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();
        // D maps knot values to scaled second differences ((k-2) x k);
        // B is the tridiagonal Gram matrix of the second-derivative
        // interpolation ((k-2) x (k-2)).
        let m = k - 2;
        let mut d = Mat::zeros(m, k);
        let mut b = Mat::zeros(m, m);
        for i in 0..m {
            d.set(i, i, 1.0 / h[i]);
            d.set(i, i + 1, -1.0 / h[i] - 1.0 / h[i + 1]);
            d.set(i, i + 2, 1.0 / h[i + 1]);
            b.set(i, i, (h[i] + h[i + 1]) / 3.0);
            if i + 1 < m {
                b.set(i, i + 1, h[i + 1] / 6.0);
                b.set(i + 1, i, h[i + 1] / 6.0);
            }
        }
        let l = cholesky(&b).ok_or(RegressionError::NotPositiveDefinite)?;
        let f_inner = chol_solve_mat(&l, &d); // B^{-1} D, (k-2) x k
        let mut f = Mat::zeros(k, k);
        for r in 0..m {
            for c in 0..k {
                f.set(r + 1, c, f_inner.get(r, c));
            }
        }
        let penalty = d.transpose().mul(&f_inner); // D' B^{-1} D, k x k
        Ok(CrBasis { knots, f, penalty })
    }

    pub fn k(&self) -> usize {
        self.knots.len()
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn penalty(&self) -> &Mat {
        &self.penalty
    }

    pub fn in_range(&self, x: f64) -> bool {
        x >= self.knots[0] && x <= *self.knots.last().unwrap()
    }

    /// Write the basis row for `x` into `out` (length `k`).
    pub fn eval_into(&self, x: f64, out: &mut [f64]) {
        let k = self.k();
        debug_assert_eq!(out.len(), k);
        out.fill(0.0);
        let first = self.knots[0];
        let last = self.knots[k - 1];
        if x < first {
            // Linear continuation: s(first) + (x - first) * s'(first).
            let h = self.knots[1] - first;
            let t = x - first;
            out[0] += 1.0 - t / h;
            out[1] += t / h;
            let w = -t * h / 6.0;
            for c in 0..k {
                out[c] += w * self.f.get(1, c);
            }
            return;
        }
        if x > last {
            let h = last - self.knots[k - 2];
            let t = x - last;
            out[k - 1] += 1.0 + t / h;
            out[k - 2] -= t / h;
            let w = t * h / 6.0;
            for c in 0..k {
                out[c] += w * self.f.get(k - 2, c);
            }
            return;
        }
        // Interval index j with knots[j] <= x <= knots[j+1].
        let mut j = match self
            .knots
            .binary_search_by(|v| v.partial_cmp(&x).unwrap())
        {
            Ok(i) => i,
            Err(i) => i - 1,
        };
        if j == k - 1 {
            j -= 1;
        }
        let h = self.knots[j + 1] - self.knots[j];
        let below = self.knots[j + 1] - x;
        let above = x - self.knots[j];
        let a_minus = below / h;
        let a_plus = above / h;
        let c_minus = (below * below * below / h - h * below) / 6.0;
        let c_plus = (above * above * above / h - h * above) / 6.0;
        out[j] += a_minus;
        out[j + 1] += a_plus;
        for c in 0..k {
            out[c] += c_minus * self.f.get(j, c) + c_plus * self.f.get(j + 1, c);
        }
    }
}

/// A smooth model term: either a univariate cubic regression spline or a
/// tensor product of two of them with one penalty per margin.
#[derive(Debug, Clone)]
pub struct SmoothTerm {
    name: String,
    inputs: Vec<String>,
    bases: Vec<CrBasis>,
}

impl SmoothTerm {
    /// Univariate smooth `s(input)` with `k` knots placed from `xs`.
    pub fn cr(input: &str, xs: &[f64], k: usize) -> Result<Self, RegressionError> {
        let basis = CrBasis::from_data(xs, k)?;
        Ok(SmoothTerm {
            name: alloc::format!("s({})", input),
            inputs: vec![input.into()],
            bases: vec![basis],
        })
    }

    /// Tensor-product smooth `te(a, b)` with `k_marginal` knots per margin.
    pub fn tensor(
        input_a: &str,
        xa: &[f64],
        input_b: &str,
        xb: &[f64],
        k_marginal: usize,
    ) -> Result<Self, RegressionError> {
        let ba = CrBasis::from_data(xa, k_marginal)?;
        let bb = CrBasis::from_data(xb, k_marginal)?;
        Ok(SmoothTerm {
            name: alloc::format!("te({},{})", input_a, input_b),
            inputs: vec![input_a.into(), input_b.into()],
            bases: vec![ba, bb],
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Names of the predictor columns this term consumes (1 or 2).
    pub fn inputs(&self) -> &[String] {
        &self.inputs
    }

    /// Number of raw basis functions (before identifiability constraints).
    pub fn dim(&self) -> usize {
        self.bases.iter().map(CrBasis::k).product()
    }

    /// Number of penalties (one per margin).
    pub fn n_penalties(&self) -> usize {
        self.bases.len()
    }

    /// Dimension of the joint penalty null space after the sum-to-zero
    /// constraint: 1 for a univariate smooth (the centred linear trend),
    /// 3 for a tensor smooth (centred main effects and their product).
    pub fn null_dim(&self) -> usize {
        if self.bases.len() == 1 {
            1
        } else {
            3
        }
    }

    /// Knot locations of the (single) margin of a univariate smooth.
    pub(crate) fn univariate_basis(&self) -> Option<&CrBasis> {
        if self.bases.len() == 1 {
            Some(&self.bases[0])
        } else {
            None
        }
    }

    /// Raw (unconstrained) penalties, expanded to the full term dimension.
    /// For a tensor term these are `S_a (x) I` and `I (x) S_b`.
    pub(crate) fn penalties(&self) -> Vec<Mat> {
        match self.bases.as_slice() {
            [b] => vec![b.penalty().clone()],
            [a, b] => vec![
                a.penalty().kron(&Mat::identity(b.k())),
                Mat::identity(a.k()).kron(b.penalty()),
            ],
            _ => unreachable!("smooth terms have one or two margins"),
        }
    }

    /// Evaluate the raw basis row at one predictor point.
    pub(crate) fn eval_row(&self, point: &[f64], out: &mut [f64]) {
        debug_assert_eq!(point.len(), self.bases.len());
        match self.bases.as_slice() {
            [b] => b.eval_into(point[0], out),
            [a, b] => {
                let (ka, kb) = (a.k(), b.k());
                let mut ra = vec![0.0; ka];
                let mut rb = vec![0.0; kb];
                a.eval_into(point[0], &mut ra);
                b.eval_into(point[1], &mut rb);
                for i in 0..ka {
                    for j in 0..kb {
                        out[i * kb + j] = ra[i] * rb[j];
                    }
                }
            }
            _ => unreachable!(),
        }
    }

    /// Raw design block: one basis row per observation.
    pub(crate) fn design(&self, columns: &[&[f64]]) -> Mat {
        debug_assert_eq!(columns.len(), self.bases.len());
        let n = columns[0].len();
        let d = self.dim();
        let mut out = Mat::zeros(n, d);
        let mut row = vec![0.0; d];
        let mut point = vec![0.0; columns.len()];
        for r in 0..n {
            for (p, c) in point.iter_mut().zip(columns) {
                *p = c[r];
            }
            self.eval_row(&point, &mut row);
            for (c, v) in row.iter().enumerate() {
                out.set(r, c, *v);
            }
        }
        out
    }
}
