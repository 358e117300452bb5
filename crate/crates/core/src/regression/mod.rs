//! Regression backends for reading-time modelling.
//!
//! Two model families are provided. [`fit_ols`] fits an ordinary linear
//! model by QR decomposition with deterministic handling of degenerate
//! columns. [`fit_gam`] fits a penalised additive model built from cubic
//! regression splines and tensor-product smooths, selecting smoothing
//! parameters by GCV on a fixed grid.
//!
//! Both fits evaluate per-row Gaussian log-likelihoods on held-out data
//! through a shared error-variance convention: `sigma2` is the training
//! mean squared residual (`RSS / n`, floored at `f64::MIN_POSITIVE`).

mod gam;
pub(crate) mod linalg;
mod spline;

pub use gam::{fit_gam, Columns, GamFit, GamOptions, GamSpec, PartialEffect};
pub use spline::SmoothTerm;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

// Float supplies f64 math in no_std builds; tests resolve to std's inherent methods.
#[cfg_attr(test, allow(unused_imports))]
use crate::math::{self, Float, LN_2PI};
use crate::surprisal::PredictorRow;

/// Errors produced by design construction and model fitting.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RegressionError {
    /// Structural problem while assembling a design matrix.
    #[error("invalid design: {reason}")]
    InvalidDesign { reason: String },
    /// Response length does not match the design.
    #[error("length mismatch: design has {expected} rows, response has {got}")]
    LengthMismatch { expected: usize, got: usize },
    /// Every candidate column was dropped; nothing left to fit.
    #[error("degenerate design: no usable columns remain")]
    DegenerateDesign,
    /// A fitted model was asked to predict from a design lacking a column.
    #[error("schema error: required column {column:?} missing from design")]
    SchemaError { column: String },
    /// Too few distinct predictor values to place the requested knots.
    #[error("knot error: basis needs {required} distinct values, found {distinct}")]
    KnotError { required: usize, distinct: usize },
    /// Spline bases need at least four knots.
    #[error("basis dimension {k} too small; cubic regression splines need k >= 4")]
    BasisTooSmall { k: usize },
    /// More coefficients than observations.
    #[error("too few rows: {rows} rows cannot identify {cols} coefficients")]
    TooFewRows { rows: usize, cols: usize },
    /// Referenced smooth term does not exist in the fit.
    #[error("no such term: {term:?}")]
    NoSuchTerm { term: String },
    /// Partial-effect curves are only defined for one-dimensional smooths.
    #[error("term {term:?} is not one-dimensional")]
    NotOneDimensional { term: String },
    /// The penalised normal equations were not positive definite.
    #[error("penalised system not positive definite")]
    NotPositiveDefinite,
}

/// Role of a design column, used to split baseline from surprisal terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnTag {
    Intercept,
    Control,
    Surprisal,
}

/// A named, tagged design matrix with finite entries and exactly one
/// intercept column.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    names: Vec<String>,
    tags: Vec<ColumnTag>,
    cols: Vec<Vec<f64>>,
    n_rows: usize,
}

impl DesignMatrix {
    pub fn from_columns(
        columns: Vec<(String, ColumnTag, Vec<f64>)>,
    ) -> Result<Self, RegressionError> {
        if columns.is_empty() {
            return Err(RegressionError::InvalidDesign { reason: "no columns".into() });
        }
        let n_rows = columns[0].2.len();
        if n_rows == 0 {
            return Err(RegressionError::InvalidDesign { reason: "no rows".into() });
        }
        let mut names = Vec::with_capacity(columns.len());
        let mut tags = Vec::with_capacity(columns.len());
        let mut cols = Vec::with_capacity(columns.len());
        let mut intercepts = 0usize;
        for (name, tag, col) in columns {
            if col.len() != n_rows {
                return Err(RegressionError::InvalidDesign {
                    reason: format!("column {:?} has {} rows, expected {}", name, col.len(), n_rows),
                });
            }
            if col.iter().any(|v| !v.is_finite()) {
                return Err(RegressionError::InvalidDesign {
                    reason: format!("column {:?} contains a non-finite value", name),
                });
            }
            if names.contains(&name) {
                return Err(RegressionError::InvalidDesign {
                    reason: format!("duplicate column name {:?}", name),
                });
            }
            if tag == ColumnTag::Intercept {
                intercepts += 1;
            }
            names.push(name);
            tags.push(tag);
            cols.push(col);
        }
        if intercepts != 1 {
            return Err(RegressionError::InvalidDesign {
                reason: format!("expected exactly one intercept column, found {}", intercepts),
            });
        }
        Ok(DesignMatrix { names, tags, cols, n_rows })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.cols.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tag(&self, j: usize) -> ColumnTag {
        self.tags[j]
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.cols[j]
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn column_by_name(&self, name: &str) -> Option<&[f64]> {
        self.position(name).map(|j| self.cols[j].as_slice())
    }

    /// The design with all surprisal-tagged columns removed: the baseline
    /// model used by the delta-log-likelihood comparison.
    pub fn baseline(&self) -> DesignMatrix {
        let mut names = Vec::new();
        let mut tags = Vec::new();
        let mut cols = Vec::new();
        for j in 0..self.n_cols() {
            if self.tags[j] != ColumnTag::Surprisal {
                names.push(self.names[j].clone());
                tags.push(self.tags[j]);
                cols.push(self.cols[j].clone());
            }
        }
        DesignMatrix { names, tags, cols, n_rows: self.n_rows }
    }
}

pub(crate) fn lag_name(base: &str, j: usize) -> String {
    format!("{}_{}", base, j)
}

/// Build the linear design for a set of spillover predictor rows.
///
/// Column order is fixed: `intercept`, `surp_0 .. surp_k`, then for each
/// lag `j` the controls `freq_j`, `len_j`, and their product `freq_len_j`.
/// Surprisal columns carry [`ColumnTag::Surprisal`]; controls carry
/// [`ColumnTag::Control`].
pub fn build_linear_design(rows: &[PredictorRow]) -> Result<DesignMatrix, RegressionError> {
    if rows.is_empty() {
        return Err(RegressionError::InvalidDesign { reason: "no predictor rows".into() });
    }
    let k = rows[0].k();
    if rows.iter().any(|r| r.k() != k) {
        return Err(RegressionError::InvalidDesign {
            reason: "predictor rows disagree on spillover window size".into(),
        });
    }
    let n = rows.len();
    let mut columns = Vec::with_capacity(2 + 4 * (k + 1));
    columns.push(("intercept".into(), ColumnTag::Intercept, alloc::vec![1.0; n]));
    for j in 0..=k {
        let col = rows.iter().map(|r| r.surp[j]).collect();
        columns.push((lag_name("surp", j), ColumnTag::Surprisal, col));
    }
    for j in 0..=k {
        let freq: Vec<f64> = rows.iter().map(|r| r.freq[j]).collect();
        let len: Vec<f64> = rows.iter().map(|r| r.len[j]).collect();
        let prod = freq.iter().zip(&len).map(|(f, l)| f * l).collect();
        columns.push((lag_name("freq", j), ColumnTag::Control, freq));
        columns.push((lag_name("len", j), ColumnTag::Control, len));
        columns.push((lag_name("freq_len", j), ColumnTag::Control, prod));
    }
    DesignMatrix::from_columns(columns)
}

/// Extract the response vector matching [`build_linear_design`] row order.
pub fn response(rows: &[PredictorRow]) -> Vec<f64> {
    rows.iter().map(|r| r.rt).collect()
}

/// Predictor rows as named columns (`surp_j`, `freq_j`, `len_j`) for GAM
/// fitting; interactions are left to tensor smooths.
pub fn predictor_columns(rows: &[PredictorRow]) -> gam::Columns {
    let mut columns = gam::Columns::new();
    if rows.is_empty() {
        return columns;
    }
    let k = rows[0].k();
    for j in 0..=k {
        columns.insert(lag_name("surp", j), rows.iter().map(|r| r.surp[j]).collect());
        columns.insert(lag_name("freq", j), rows.iter().map(|r| r.freq[j]).collect());
        columns.insert(lag_name("len", j), rows.iter().map(|r| r.len[j]).collect());
    }
    columns
}

/// Gaussian log density of one residual under error variance `sigma2`.
pub fn gaussian_loglik(residual: f64, sigma2: f64) -> f64 {
    -0.5 * (LN_2PI + sigma2.ln()) - residual * residual / (2.0 * sigma2)
}

/// Result of an ordinary least squares fit.
#[derive(Debug, Clone)]
pub struct LinearFit {
    column_names: Vec<String>,
    coefficients: Vec<f64>,
    dropped: Vec<String>,
    sigma2: f64,
    train_loglik: f64,
    n_train: usize,
}

impl LinearFit {
    /// Names of the retained columns, in design order.
    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    /// Coefficients aligned with [`LinearFit::column_names`].
    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.column_names
            .iter()
            .position(|n| n == name)
            .map(|j| self.coefficients[j])
    }

    /// Columns dropped for zero variance or collinearity, in drop order.
    pub fn dropped(&self) -> &[String] {
        &self.dropped
    }

    /// Training mean squared residual (floored at `f64::MIN_POSITIVE`).
    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn train_loglik(&self) -> f64 {
        self.train_loglik
    }

    pub fn n_train(&self) -> usize {
        self.n_train
    }

    /// Predict responses for a design carrying the retained columns.
    pub fn predict(&self, x: &DesignMatrix) -> Result<Vec<f64>, RegressionError> {
        let mut out = alloc::vec![0.0; x.n_rows()];
        for (name, beta) in self.column_names.iter().zip(&self.coefficients) {
            let col = x
                .column_by_name(name)
                .ok_or_else(|| RegressionError::SchemaError { column: name.clone() })?;
            for (o, v) in out.iter_mut().zip(col) {
                *o += beta * v;
            }
        }
        Ok(out)
    }

    /// Per-row Gaussian log-likelihoods of `y` under the fitted model.
    pub fn loglik_rows(&self, x: &DesignMatrix, y: &[f64]) -> Result<Vec<f64>, RegressionError> {
        if y.len() != x.n_rows() {
            return Err(RegressionError::LengthMismatch { expected: x.n_rows(), got: y.len() });
        }
        let pred = self.predict(x)?;
        Ok(pred
            .iter()
            .zip(y)
            .map(|(p, obs)| gaussian_loglik(obs - p, self.sigma2))
            .collect())
    }
}

const VAR_TOL: f64 = 1e-12;
const RCOND_TOL: f64 = 1e-10;

/// Fit an ordinary least squares regression of `y` on `x`.
///
/// Column handling is deterministic: non-intercept columns with variance
/// below `1e-12` are dropped first, then columns are orthogonalised in
/// design order (modified Gram-Schmidt with one re-orthogonalisation
/// pass) and a column is dropped when adding it would push the reciprocal
/// condition estimate of the triangular factor below `1e-10` — so of two
/// collinear columns, the later-added one drops.
pub fn fit_ols(x: &DesignMatrix, y: &[f64]) -> Result<LinearFit, RegressionError> {
    let n = x.n_rows();
    if y.len() != n {
        return Err(RegressionError::LengthMismatch { expected: n, got: y.len() });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(RegressionError::InvalidDesign {
            reason: "response contains a non-finite value".into(),
        });
    }

    let mut dropped = Vec::new();
    let mut candidates = Vec::new();
    for j in 0..x.n_cols() {
        if x.tag(j) != ColumnTag::Intercept && math::variance(x.col(j)) < VAR_TOL {
            dropped.push(x.names()[j].clone());
        } else {
            candidates.push(j);
        }
    }

    // Modified Gram-Schmidt with a second pass; R is stored column-wise,
    // r_cols[m] holding the m-th retained column's loadings on q_0..q_m.
    let mut q_cols: Vec<Vec<f64>> = Vec::new();
    let mut r_cols: Vec<Vec<f64>> = Vec::new();
    let mut retained: Vec<usize> = Vec::new();
    let mut min_diag = f64::INFINITY;
    let mut max_diag = 0.0f64;
    for &j in &candidates {
        let mut v = x.col(j).to_vec();
        let mut coeffs = alloc::vec![0.0; q_cols.len()];
        for _pass in 0..2 {
            for (m, q) in q_cols.iter().enumerate() {
                let c = linalg::dot(q, &v);
                coeffs[m] += c;
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= c * qi;
                }
            }
        }
        let norm = linalg::dot(&v, &v).sqrt();
        let new_min = min_diag.min(norm);
        let new_max = max_diag.max(norm);
        if !norm.is_finite() || norm <= 0.0 || new_min / new_max < RCOND_TOL {
            dropped.push(x.names()[j].clone());
            continue;
        }
        for vi in v.iter_mut() {
            *vi /= norm;
        }
        coeffs.push(norm);
        q_cols.push(v);
        r_cols.push(coeffs);
        retained.push(j);
        min_diag = new_min;
        max_diag = new_max;
    }

    if retained.is_empty() {
        return Err(RegressionError::DegenerateDesign);
    }
    let p = retained.len();
    if n < p {
        return Err(RegressionError::TooFewRows { rows: n, cols: p });
    }

    // Solve R beta = Q' y by back substitution.
    let qty: Vec<f64> = q_cols.iter().map(|q| linalg::dot(q, y)).collect();
    let mut beta = alloc::vec![0.0; p];
    for i in (0..p).rev() {
        let mut s = qty[i];
        for j in i + 1..p {
            s -= r_cols[j][i] * beta[j];
        }
        beta[i] = s / r_cols[i][i];
    }

    let mut rss = 0.0;
    let mut fitted = alloc::vec![0.0; n];
    for (m, &j) in retained.iter().enumerate() {
        for (f, v) in fitted.iter_mut().zip(x.col(j)) {
            *f += beta[m] * v;
        }
    }
    for (f, obs) in fitted.iter().zip(y) {
        let r = obs - f;
        rss += r * r;
    }
    let sigma2 = (rss / n as f64).max(f64::MIN_POSITIVE);
    let train_loglik = fitted
        .iter()
        .zip(y)
        .map(|(f, obs)| gaussian_loglik(obs - f, sigma2))
        .sum();

    Ok(LinearFit {
        column_names: retained.iter().map(|&j| x.names()[j].clone()).collect(),
        coefficients: beta,
        dropped,
        sigma2,
        train_loglik,
        n_train: n,
    })
}
