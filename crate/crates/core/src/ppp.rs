//! Psychometric predictive power: held-out ΔLogLik under k-fold CV.
//!
//! For each fold, a baseline regression (intercept + frequency/length
//! controls) and a full regression (baseline + surprisal terms) are fit
//! on the other folds; both are then scored on the held-out rows and the
//! per-token difference in Gaussian log-likelihood (natural log) is
//! recorded. The headline number is the token-weighted mean of those
//! differences; fold means and their standard error come along for
//! plotting.
//!
//! Rows are canonicalised (sorted by item and word index) before folds
//! are assigned, so results are invariant to input row order, bit for
//! bit.

use alloc::string::String;
use alloc::vec::Vec;

use crate::math;
use crate::regression::{
    build_linear_design, fit_gam, fit_ols, predictor_columns, response, Columns, GamFit,
    GamOptions, GamSpec, RegressionError, SmoothTerm,
};
use crate::rng::SeededRng;
use crate::surprisal::PredictorRow;

/// Which regression family backs the ΔLogLik comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegressionKind {
    Linear,
    Gam,
}

impl RegressionKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            RegressionKind::Linear => "linear",
            RegressionKind::Gam => "gam",
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PppError {
    #[error("too few rows: {rows} rows cannot fill {folds} folds")]
    TooFewRows { rows: usize, folds: usize },
    #[error("invalid predictor rows: {reason}")]
    Rows { reason: String },
    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        source: RegressionError,
    },
    #[error("full-data fit: {source}")]
    Fit { source: RegressionError },
}

/// A seeded partition of `n` rows into `k` folds of near-equal size.
#[derive(Debug, Clone)]
pub struct FoldSplit {
    k: usize,
    seed: u64,
    assignments: Vec<usize>,
}

impl FoldSplit {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Fold id per row index.
    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    pub fn fold_of(&self, row: usize) -> usize {
        self.assignments[row]
    }
}

/// Assign `n` rows to `k` folds: seeded uniform shuffle, then contiguous
/// blocks, the first `n mod k` folds taking one extra row.
pub fn kfold(n: usize, k: usize, seed: u64) -> Result<FoldSplit, PppError> {
    if k == 0 || n < k {
        return Err(PppError::TooFewRows { rows: n, folds: k });
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = SeededRng::new(seed);
    rng.shuffle(&mut order);
    let base = n / k;
    let extra = n % k;
    let mut assignments = alloc::vec![0usize; n];
    let mut cursor = 0;
    for fold in 0..k {
        let size = base + usize::from(fold < extra);
        for &row in &order[cursor..cursor + size] {
            assignments[row] = fold;
        }
        cursor += size;
    }
    Ok(FoldSplit { k, seed, assignments })
}

/// Settings for [`delta_loglik`].
#[derive(Debug, Clone)]
pub struct PppOptions {
    pub folds: usize,
    pub seed: u64,
    /// Assign folds over items instead of tokens (leakage-averse mode).
    pub by_item: bool,
    /// Basis size for univariate surprisal smooths (GAM family).
    pub k_smooth: usize,
    /// Marginal basis size for frequency × length tensor smooths.
    pub k_tensor: usize,
    pub gam: GamOptions,
}

impl Default for PppOptions {
    fn default() -> Self {
        PppOptions {
            folds: 10,
            seed: 0,
            by_item: false,
            k_smooth: 20,
            k_tensor: 5,
            gam: GamOptions::default(),
        }
    }
}

/// Cross-validated predictive-power summary.
#[derive(Debug, Clone)]
pub struct PppResult {
    pub regression_kind: RegressionKind,
    /// Token-weighted mean held-out ΔLogLik, nats per token.
    pub mean_dll: f64,
    /// Mean ΔLogLik per fold, in fold order.
    pub fold_means: Vec<f64>,
    /// Standard error of the fold means.
    pub se: f64,
    pub n_tokens: usize,
    pub folds: usize,
    pub seed: u64,
}

/// Standard error of by-fold means: sample standard deviation / √k.
pub fn se_by_fold(fold_means: &[f64]) -> f64 {
    if fold_means.len() < 2 {
        return 0.0;
    }
    math::sample_sd(fold_means) / math::Float::sqrt(fold_means.len() as f64)
}

fn sorted_rows(rows: &[PredictorRow]) -> Result<Vec<&PredictorRow>, PppError> {
    if rows.is_empty() {
        return Err(PppError::Rows { reason: "no predictor rows".into() });
    }
    let k = rows[0].k();
    if rows.iter().any(|r| r.k() != k) {
        return Err(PppError::Rows {
            reason: "rows disagree on spillover window size".into(),
        });
    }
    let mut sorted: Vec<&PredictorRow> = rows.iter().collect();
    sorted.sort_by(|a, b| {
        (&a.item_id, a.word_index).cmp(&(&b.item_id, b.word_index))
    });
    if sorted
        .windows(2)
        .any(|w| w[0].item_id == w[1].item_id && w[0].word_index == w[1].word_index)
    {
        return Err(PppError::Rows {
            reason: "duplicate (item, word index) predictor rows".into(),
        });
    }
    Ok(sorted)
}

/// Fold ids aligned with `sorted` row order.
fn assign_folds(
    sorted: &[&PredictorRow],
    opts: &PppOptions,
) -> Result<Vec<usize>, PppError> {
    if opts.by_item {
        let mut items: Vec<&str> = Vec::new();
        for r in sorted {
            // sorted by item, so items arrive grouped
            if items.last() != Some(&r.item_id.as_str()) {
                items.push(&r.item_id);
            }
        }
        let split = kfold(items.len(), opts.folds, opts.seed)?;
        let mut item_fold = alloc::collections::BTreeMap::new();
        for (i, item) in items.iter().enumerate() {
            item_fold.insert(*item, split.fold_of(i));
        }
        Ok(sorted
            .iter()
            .map(|r| item_fold[r.item_id.as_str()])
            .collect())
    } else {
        let split = kfold(sorted.len(), opts.folds, opts.seed)?;
        Ok(split.assignments().to_vec())
    }
}

fn gam_spec(k_spill: usize, surprisal: bool, opts: &PppOptions, cols: &Columns) -> Result<GamSpec, RegressionError> {
    let mut smooths = Vec::new();
    if surprisal {
        for j in 0..=k_spill {
            let name = alloc::format!("surp_{}", j);
            smooths.push(SmoothTerm::cr(&name, &cols[&name], opts.k_smooth)?);
        }
    }
    for j in 0..=k_spill {
        let fname = alloc::format!("freq_{}", j);
        let lname = alloc::format!("len_{}", j);
        smooths.push(SmoothTerm::tensor(
            &fname,
            &cols[&fname],
            &lname,
            &cols[&lname],
            opts.k_tensor,
        )?);
    }
    Ok(GamSpec::new(smooths))
}

/// Per-row held-out ΔLogLik for one fold.
fn fold_dll(
    train: &[PredictorRow],
    test: &[PredictorRow],
    kind: RegressionKind,
    opts: &PppOptions,
) -> Result<Vec<f64>, RegressionError> {
    match kind {
        RegressionKind::Linear => {
            let x_train = build_linear_design(train)?;
            let y_train = response(train);
            let full = fit_ols(&x_train, &y_train)?;
            let base = fit_ols(&x_train.baseline(), &y_train)?;
            let x_test = build_linear_design(test)?;
            let y_test = response(test);
            let ll_full = full.loglik_rows(&x_test, &y_test)?;
            let ll_base = base.loglik_rows(&x_test, &y_test)?;
            Ok(ll_full.iter().zip(&ll_base).map(|(f, b)| f - b).collect())
        }
        RegressionKind::Gam => {
            let cols_train = predictor_columns(train);
            let y_train = response(train);
            let k_spill = train[0].k();
            let full_spec = gam_spec(k_spill, true, opts, &cols_train)?;
            let base_spec = gam_spec(k_spill, false, opts, &cols_train)?;
            let full = fit_gam(&full_spec, &cols_train, &y_train, &opts.gam)?;
            let base = fit_gam(&base_spec, &cols_train, &y_train, &opts.gam)?;
            let cols_test = predictor_columns(test);
            let y_test = response(test);
            let ll_full = full.loglik_rows(&cols_test, &y_test)?;
            let ll_base = base.loglik_rows(&cols_test, &y_test)?;
            Ok(ll_full.iter().zip(&ll_base).map(|(f, b)| f - b).collect())
        }
    }
}

/// Cross-validated mean per-token ΔLogLik of the surprisal model over the
/// control-only baseline.
pub fn delta_loglik(
    rows: &[PredictorRow],
    kind: RegressionKind,
    opts: &PppOptions,
) -> Result<PppResult, PppError> {
    let sorted = sorted_rows(rows)?;
    let folds = assign_folds(&sorted, opts)?;
    let k = opts.folds;

    let mut fold_means = Vec::with_capacity(k);
    let mut total = 0.0;
    let mut n_tokens = 0usize;
    for fold in 0..k {
        let mut train: Vec<PredictorRow> = Vec::new();
        let mut test: Vec<PredictorRow> = Vec::new();
        for (row, &f) in sorted.iter().zip(&folds) {
            if f == fold {
                test.push((*row).clone());
            } else {
                train.push((*row).clone());
            }
        }
        if test.is_empty() {
            return Err(PppError::TooFewRows { rows: sorted.len(), folds: k });
        }
        let dll = fold_dll(&train, &test, kind, opts)
            .map_err(|source| PppError::Fold { fold, source })?;
        let sum: f64 = dll.iter().sum();
        fold_means.push(sum / dll.len() as f64);
        total += sum;
        n_tokens += dll.len();
    }

    let se = se_by_fold(&fold_means);
    Ok(PppResult {
        regression_kind: kind,
        mean_dll: total / n_tokens as f64,
        fold_means,
        se,
        n_tokens,
        folds: k,
        seed: opts.seed,
    })
}

/// Fit the full GAM (surprisal smooths plus controls) to every row at once,
/// outside cross-validation. Partial-effect curves for plotting are read
/// off this fit; the smooth structure matches what [`delta_loglik`] uses
/// inside each fold.
pub fn fit_full_gam(rows: &[PredictorRow], opts: &PppOptions) -> Result<GamFit, PppError> {
    let sorted = sorted_rows(rows)?;
    let owned: Vec<PredictorRow> = sorted.iter().map(|r| (*r).clone()).collect();
    let cols = predictor_columns(&owned);
    let y = response(&owned);
    let spec = gam_spec(owned[0].k(), true, opts, &cols)
        .map_err(|source| PppError::Fit { source })?;
    fit_gam(&spec, &cols, &y, &opts.gam).map_err(|source| PppError::Fit { source })
}

/// Null-control transform: redistribute the surprisal windows across rows
/// (seeded derangement-style shuffle) while keeping reading times and
/// control predictors in place. Used to check that ΔLogLik collapses when
/// surprisal carries no information about the response.
pub fn permute_surprisal(rows: &[PredictorRow], seed: u64) -> Vec<PredictorRow> {
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mut rng = SeededRng::new(seed);
    rng.shuffle(&mut order);
    rows.iter()
        .zip(&order)
        .map(|(row, &src)| {
            let mut out = row.clone();
            out.surp = rows[src].surp.clone();
            out
        })
        .collect()
}
