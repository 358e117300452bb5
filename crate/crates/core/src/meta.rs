//! Cross-model analyses over (perplexity, ΔLogLik, SG) records.
//!
//! Records arrive one per model × test corpus. Three analyses are
//! supported: a within-vocabulary regression of ΔLogLik on perplexity
//! with fixed dummy intercepts for test corpus and architecture, a
//! perplexity-residualized SG-vs-ΔLogLik pairing for plotting, and a
//! stepwise nested F-test asking whether SG scores predict ΔLogLik over
//! and above perplexity.
//!
//! The dummy-intercept construction is a fixed-effects stand-in for
//! random intercepts; every output carries [`APPROXIMATION_NOTE`] saying
//! so.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::regression::linalg::{invert_spd, Mat};
use crate::regression::{fit_ols, ColumnTag, DesignMatrix, LinearFit};
use crate::stat;

/// Carried verbatim in analysis outputs: the grouping structure is a
/// fixed-effects approximation, not a mixed model.
pub const APPROXIMATION_NOTE: &str =
    "group intercepts are fixed dummy coefficients approximating random intercepts";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetaError {
    #[error("invalid record {model_id:?}: {reason}")]
    InvalidRecord { model_id: String, reason: String },
    #[error("degenerate group {group:?}: {reason}")]
    DegenerateGroup { group: String, reason: String },
    #[error("too few records: {got} (need at least {needed})")]
    TooFewRecords { got: usize, needed: usize },
    #[error("length mismatch: {reason}")]
    LengthMismatch { reason: String },
}

/// One model × test-corpus measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelRecord {
    pub model_id: String,
    /// ngram | lstm | rnng | transformer | other.
    pub architecture: String,
    pub training_corpus: String,
    pub test_corpus: String,
    pub vocab_group: String,
    pub seed: u64,
    /// Held-out language-model perplexity (> 1).
    pub ppl: f64,
    /// Mean ΔLogLik, nats per token, on `test_corpus`.
    pub dll: f64,
    /// Syntactic Generalization score in [0, 1].
    pub sg: f64,
}

impl ModelRecord {
    pub fn validate(&self) -> Result<(), MetaError> {
        let fail = |reason: String| {
            Err(MetaError::InvalidRecord { model_id: self.model_id.clone(), reason })
        };
        if self.model_id.is_empty() {
            return Err(MetaError::InvalidRecord {
                model_id: String::new(),
                reason: "empty model_id".into(),
            });
        }
        if self.vocab_group.is_empty() {
            return fail("empty vocab_group".into());
        }
        if !(self.ppl.is_finite() && self.ppl > 1.0) {
            return fail(alloc::format!("perplexity {} not in (1, inf)", self.ppl));
        }
        if !(self.sg.is_finite() && (0.0..=1.0).contains(&self.sg)) {
            return fail(alloc::format!("sg score {} not in [0, 1]", self.sg));
        }
        if !self.dll.is_finite() {
            return fail(alloc::format!("non-finite dll {}", self.dll));
        }
        Ok(())
    }
}

fn validate_all(records: &[ModelRecord]) -> Result<(), MetaError> {
    for r in records {
        r.validate()?;
    }
    Ok(())
}

/// Canonical record order, so analyses are independent of input order.
fn canonical<'a>(records: &'a [ModelRecord]) -> Vec<&'a ModelRecord> {
    let mut sorted: Vec<&ModelRecord> = records.iter().collect();
    sorted.sort_by(|a, b| {
        (&a.model_id, &a.test_corpus, a.seed, &a.vocab_group)
            .cmp(&(&b.model_id, &b.test_corpus, b.seed, &b.vocab_group))
    });
    sorted
}

/// Sorted distinct values of a label column.
fn levels<'a>(records: &[&'a ModelRecord], label: impl Fn(&ModelRecord) -> &str + 'a) -> Vec<String> {
    let mut out: Vec<String> = records.iter().map(|r| String::from(label(r))).collect();
    out.sort();
    out.dedup();
    out
}

/// Drop-first dummy columns for a label, named `{prefix}={level}`.
fn dummy_columns(
    records: &[&ModelRecord],
    prefix: &str,
    label: impl Fn(&ModelRecord) -> &str + Copy,
) -> Vec<(String, ColumnTag, Vec<f64>)> {
    let lv = levels(records, label);
    lv.iter()
        .skip(1)
        .map(|level| {
            let col = records
                .iter()
                .map(|r| if label(r) == level { 1.0 } else { 0.0 })
                .collect();
            (alloc::format!("{}={}", prefix, level), ColumnTag::Control, col)
        })
        .collect()
}

fn design_for(
    records: &[&ModelRecord],
    with_sg: bool,
) -> Result<(DesignMatrix, Vec<f64>), MetaError> {
    let n = records.len();
    let mut columns: Vec<(String, ColumnTag, Vec<f64>)> = Vec::new();
    columns.push(("intercept".into(), ColumnTag::Intercept, alloc::vec![1.0; n]));
    columns.extend(dummy_columns(records, "corpus", |r| &r.test_corpus));
    columns.extend(dummy_columns(records, "arch", |r| &r.architecture));
    columns.extend(dummy_columns(records, "vocab", |r| &r.vocab_group));
    columns.push(("ppl".into(), ColumnTag::Control, records.iter().map(|r| r.ppl).collect()));
    if with_sg {
        columns.push(("sg".into(), ColumnTag::Control, records.iter().map(|r| r.sg).collect()));
    }
    let x = DesignMatrix::from_columns(columns).map_err(|e| MetaError::DegenerateGroup {
        group: String::from("<design>"),
        reason: alloc::format!("{}", e),
    })?;
    let y = records.iter().map(|r| r.dll).collect();
    Ok((x, y))
}

fn ols_or_degenerate(
    x: &DesignMatrix,
    y: &[f64],
    group: &str,
) -> Result<LinearFit, MetaError> {
    fit_ols(x, y).map_err(|e| MetaError::DegenerateGroup {
        group: String::from(group),
        reason: alloc::format!("{}", e),
    })
}

/// Residual sum of squares implied by a fit's ML variance estimate.
fn rss_of(fit: &LinearFit) -> f64 {
    fit.sigma2() * fit.n_train() as f64
}

/// Slope of ΔLogLik on perplexity within one vocabulary group.
#[derive(Debug, Clone, PartialEq)]
pub struct PplDllRegression {
    pub vocab_group: String,
    pub slope: f64,
    pub std_error: f64,
    pub t_value: f64,
    pub p_value: f64,
    /// Residual degrees of freedom of the t-test.
    pub df: f64,
    pub n_records: usize,
    /// Fixed-vs-random intercept caveat; copy into any report.
    pub note: &'static str,
}

/// Regresses dll on ppl within `vocab_group`, with fixed dummy intercepts
/// for test corpus and architecture standing in for random intercepts.
pub fn regress_ppl_dll(
    records: &[ModelRecord],
    vocab_group: &str,
) -> Result<PplDllRegression, MetaError> {
    validate_all(records)?;
    let group: Vec<&ModelRecord> = canonical(records)
        .into_iter()
        .filter(|r| r.vocab_group == vocab_group)
        .collect();
    let degenerate = |reason: String| MetaError::DegenerateGroup {
        group: String::from(vocab_group),
        reason,
    };
    if group.len() < 3 {
        return Err(degenerate(alloc::format!(
            "{} records; need at least 3",
            group.len()
        )));
    }
    {
        let mut ppls: Vec<f64> = group.iter().map(|r| r.ppl).collect();
        ppls.sort_by(f64::total_cmp);
        ppls.dedup();
        if ppls.len() < 2 {
            return Err(degenerate("perplexity constant within group".into()));
        }
    }

    let (x, y) = design_for(&group, false)?;
    let fit = ols_or_degenerate(&x, &y, vocab_group)?;
    if fit.dropped().iter().any(|c| c == "ppl") {
        return Err(degenerate(
            "perplexity collinear with group intercepts".into(),
        ));
    }
    let p = fit.column_names().len();
    let n = group.len();
    if n <= p {
        return Err(degenerate(alloc::format!(
            "{} records cannot support {} coefficients plus error",
            n, p
        )));
    }

    // Unbiased residual variance and the usual OLS covariance diag.
    let df = (n - p) as f64;
    let sigma2 = rss_of(&fit) / df;
    let cols: Vec<Vec<f64>> = fit
        .column_names()
        .iter()
        .map(|name| x.column_by_name(name).expect("retained column").to_vec())
        .collect();
    let xtx = Mat::from_cols(&cols).xtx();
    let inv = invert_spd(&xtx)
        .ok_or_else(|| degenerate("normal equations not invertible".into()))?;
    let j = fit
        .column_names()
        .iter()
        .position(|c| c == "ppl")
        .expect("ppl retained");
    let slope = fit.coefficient("ppl").expect("ppl retained");
    let std_error = crate::math::Float::sqrt(sigma2 * inv.get(j, j));
    let t_value = slope / std_error;
    let p_value = stat::t_test_p(t_value, df);
    Ok(PplDllRegression {
        vocab_group: String::from(vocab_group),
        slope,
        std_error,
        t_value,
        p_value,
        df,
        n_records: n,
        note: APPROXIMATION_NOTE,
    })
}

/// Per-group residuals of `values` on (intercept, covariate).
#[derive(Debug, Clone, PartialEq)]
pub struct Residualized {
    /// Residuals aligned with the input order.
    pub residuals: Vec<f64>,
    /// One entry per singleton group (whose residual is pinned to 0).
    pub warnings: Vec<String>,
}

/// Residualizes `values` on `covariate` separately within each group.
/// Groups with a constant covariate fall back to centering; singleton
/// groups get residual 0 and a warning.
pub fn residualize(
    values: &[f64],
    covariate: &[f64],
    groups: &[&str],
) -> Result<Residualized, MetaError> {
    if values.len() != covariate.len() || values.len() != groups.len() {
        return Err(MetaError::LengthMismatch {
            reason: alloc::format!(
                "values {}, covariate {}, groups {}",
                values.len(), covariate.len(), groups.len()
            ),
        });
    }
    if let Some(i) = (0..values.len()).find(|&i| !values[i].is_finite() || !covariate[i].is_finite()) {
        return Err(MetaError::LengthMismatch {
            reason: alloc::format!("non-finite value or covariate at row {}", i),
        });
    }
    let mut by_group: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, g) in groups.iter().enumerate() {
        by_group.entry(g).or_default().push(i);
    }
    let mut residuals = alloc::vec![0.0; values.len()];
    let mut warnings = Vec::new();
    for (g, idx) in by_group {
        if idx.len() == 1 {
            warnings.push(alloc::format!(
                "group {:?} has a single record; residual set to 0",
                g
            ));
            continue;
        }
        let n = idx.len() as f64;
        let my = idx.iter().map(|&i| values[i]).sum::<f64>() / n;
        let mx = idx.iter().map(|&i| covariate[i]).sum::<f64>() / n;
        let sxx: f64 = idx.iter().map(|&i| (covariate[i] - mx) * (covariate[i] - mx)).sum();
        let slope = if sxx > 0.0 {
            idx.iter().map(|&i| (covariate[i] - mx) * (values[i] - my)).sum::<f64>() / sxx
        } else {
            0.0
        };
        for &i in &idx {
            residuals[i] = values[i] - my - slope * (covariate[i] - mx);
        }
    }
    Ok(Residualized { residuals, warnings })
}

/// One record's coordinates in the residualized SG-vs-ΔLogLik plane.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualPair {
    pub model_id: String,
    pub test_corpus: String,
    pub vocab_group: String,
    /// SG score residualized on perplexity within vocab_group.
    pub x_resid: f64,
    /// ΔLogLik residualized on perplexity within vocab_group.
    pub y_resid: f64,
}

/// Residualizes both SG and ΔLogLik on perplexity within each vocabulary
/// group, returning pairs in the records' canonical order.
pub fn residual_pairs(
    records: &[ModelRecord],
) -> Result<(Vec<ResidualPair>, Vec<String>), MetaError> {
    validate_all(records)?;
    if records.is_empty() {
        return Err(MetaError::TooFewRecords { got: 0, needed: 1 });
    }
    let sorted = canonical(records);
    let ppl: Vec<f64> = sorted.iter().map(|r| r.ppl).collect();
    let groups: Vec<&str> = sorted.iter().map(|r| r.vocab_group.as_str()).collect();
    let sg: Vec<f64> = sorted.iter().map(|r| r.sg).collect();
    let dll: Vec<f64> = sorted.iter().map(|r| r.dll).collect();
    let x = residualize(&sg, &ppl, &groups)?;
    let y = residualize(&dll, &ppl, &groups)?;
    let mut warnings = x.warnings;
    warnings.extend(y.warnings);
    warnings.dedup();
    let pairs = sorted
        .iter()
        .zip(x.residuals.iter().zip(&y.residuals))
        .map(|(r, (&xr, &yr))| ResidualPair {
            model_id: r.model_id.clone(),
            test_corpus: r.test_corpus.clone(),
            vocab_group: r.vocab_group.clone(),
            x_resid: xr,
            y_resid: yr,
        })
        .collect();
    Ok((pairs, warnings))
}

/// Outcome of the stepwise SG-over-perplexity comparison.
#[derive(Debug, Clone, PartialEq)]
pub enum StepwiseOutcome {
    Tested {
        f_stat: f64,
        p_value: f64,
        /// Denominator degrees of freedom (numerator df is 1).
        df2: f64,
        note: &'static str,
    },
    /// The SG column was collinear with perplexity and the group dummies.
    Untestable { reason: String },
}

/// Nested F-test of `dll ~ ppl + groups` against `dll ~ ppl + sg + groups`,
/// with fixed dummy intercepts for test corpus, architecture, and
/// vocabulary group.
pub fn stepwise_sg(records: &[ModelRecord]) -> Result<StepwiseOutcome, MetaError> {
    validate_all(records)?;
    if records.len() < 5 {
        return Err(MetaError::TooFewRecords { got: records.len(), needed: 5 });
    }
    let sorted = canonical(records);
    let (x0, y) = design_for(&sorted, false)?;
    let (x1, _) = design_for(&sorted, true)?;
    let fit0 = ols_or_degenerate(&x0, &y, "<stepwise>")?;
    let fit1 = ols_or_degenerate(&x1, &y, "<stepwise>")?;
    if fit1.dropped().iter().any(|c| c == "sg") {
        return Ok(StepwiseOutcome::Untestable {
            reason: "sg collinear with perplexity and group intercepts".into(),
        });
    }
    let n = sorted.len();
    let p1 = fit1.column_names().len();
    if n <= p1 {
        return Err(MetaError::DegenerateGroup {
            group: String::from("<stepwise>"),
            reason: alloc::format!("{} records cannot support {} coefficients plus error", n, p1),
        });
    }
    let df2 = (n - p1) as f64;
    let rss0 = rss_of(&fit0);
    let rss1 = rss_of(&fit1);
    // Nested designs share their column prefix, so rss0 >= rss1 up to
    // rounding; clamp the difference.
    let f_stat = (((rss0 - rss1) / 1.0) / (rss1 / df2)).max(0.0);
    let p_value = stat::f_test_p(f_stat, 1.0, df2);
    Ok(StepwiseOutcome::Tested { f_stat, p_value, df2, note: APPROXIMATION_NOTE })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use alloc::string::ToString;
    use alloc::vec;

    fn record(model_id: &str, arch: &str, corpus: &str, vocab: &str, ppl: f64, dll: f64, sg: f64) -> ModelRecord {
        ModelRecord {
            model_id: model_id.to_string(),
            architecture: arch.to_string(),
            training_corpus: "bllip-like".to_string(),
            test_corpus: corpus.to_string(),
            vocab_group: vocab.to_string(),
            seed: 1,
            ppl,
            dll,
            sg,
        }
    }

    #[test]
    fn validation_catches_out_of_range_fields() {
        let good = record("m", "lstm", "c", "v", 120.0, 0.3, 0.5);
        assert!(good.validate().is_ok());
        let mut bad = good.clone();
        bad.ppl = 1.0;
        assert!(matches!(bad.validate(), Err(MetaError::InvalidRecord { .. })));
        bad = good.clone();
        bad.sg = 1.2;
        assert!(matches!(bad.validate(), Err(MetaError::InvalidRecord { .. })));
        bad = good.clone();
        bad.vocab_group.clear();
        assert!(matches!(bad.validate(), Err(MetaError::InvalidRecord { .. })));
        bad = good;
        bad.dll = f64::NAN;
        assert!(matches!(bad.validate(), Err(MetaError::InvalidRecord { .. })));
    }

    #[test]
    fn decreasing_dll_gives_negative_slope_with_small_p() {
        let records: Vec<ModelRecord> = (0..12)
            .map(|i| {
                let ppl = 100.0 + 40.0 * i as f64;
                record(&alloc::format!("m{}", i), "lstm", "c", "v", ppl, 0.8 - 0.001 * ppl, 0.5)
            })
            .collect();
        let out = regress_ppl_dll(&records, "v").unwrap();
        assert!(out.slope < 0.0);
        assert!((out.slope + 0.001).abs() < 1e-9, "slope {}", out.slope);
        assert!(out.p_value < 1e-6, "p {}", out.p_value);
        assert_eq!(out.note, APPROXIMATION_NOTE);
    }

    #[test]
    fn two_architecture_slope_recovery() {
        // Shared slope -0.001, intercepts 0.9 (lstm) vs 0.5 (ngram),
        // mild noise; slope must come back within 10%.
        let mut rng = SeededRng::new(5);
        let mut records = Vec::new();
        for i in 0..14 {
            let arch = if i % 2 == 0 { "lstm" } else { "ngram" };
            let intercept = if i % 2 == 0 { 0.9 } else { 0.5 };
            let ppl = 120.0 + 35.0 * i as f64 + rng.uniform_in(0.0, 10.0);
            let dll = intercept - 0.001 * ppl + 0.004 * rng.normal();
            records.push(record(&alloc::format!("m{}", i), arch, "c", "v", ppl, dll, 0.5));
        }
        let out = regress_ppl_dll(&records, "v").unwrap();
        assert!(
            (out.slope + 0.001).abs() < 0.0001,
            "slope {} off by more than 10%",
            out.slope
        );
    }

    #[test]
    fn permuted_dll_p_values_are_roughly_uniform() {
        // dll noise independent of ppl: p < 0.05 should occur for ~5% of
        // seeded permutations.
        let mut rng = SeededRng::new(9);
        let base: Vec<ModelRecord> = (0..24)
            .map(|i| {
                let ppl = 90.0 + 25.0 * i as f64;
                record(&alloc::format!("m{}", i), "lstm", "c", "v", ppl, rng.normal(), 0.5)
            })
            .collect();
        let mut hits = 0;
        for seed in 0..100 {
            let mut records = base.clone();
            let mut dlls: Vec<f64> = records.iter().map(|r| r.dll).collect();
            SeededRng::new(seed).shuffle(&mut dlls);
            for (r, d) in records.iter_mut().zip(dlls) {
                r.dll = d;
            }
            let out = regress_ppl_dll(&records, "v").unwrap();
            if out.p_value < 0.05 {
                hits += 1;
            }
        }
        assert!(hits <= 12, "{} of 100 null permutations significant", hits);
    }

    #[test]
    fn regression_is_invariant_to_order_and_dummy_relabeling() {
        let mut rng = SeededRng::new(13);
        let mut records = Vec::new();
        for i in 0..12 {
            let arch = ["lstm", "ngram", "rnng"][i % 3];
            let corpus = ["dundee-like", "ns-like"][i % 2];
            let ppl = 150.0 + 30.0 * i as f64;
            let dll = 0.6 - 0.0012 * ppl + 0.1 * (i % 3) as f64 + 0.01 * rng.normal();
            records.push(record(&alloc::format!("m{}", i), arch, corpus, "v", ppl, dll, 0.5));
        }
        let a = regress_ppl_dll(&records, "v").unwrap();

        let mut shuffled = records.clone();
        SeededRng::new(77).shuffle(&mut shuffled);
        let b = regress_ppl_dll(&shuffled, "v").unwrap();
        assert_eq!(a, b);

        // Renaming a level changes which dummy is dropped but not the
        // slope, its standard error, or the p-value.
        let relabeled: Vec<ModelRecord> = records
            .iter()
            .map(|r| {
                let mut r = r.clone();
                if r.architecture == "lstm" {
                    r.architecture = "zz-lstm".to_string();
                }
                r
            })
            .collect();
        let c = regress_ppl_dll(&relabeled, "v").unwrap();
        assert!((a.slope - c.slope).abs() < 1e-10);
        assert!((a.std_error - c.std_error).abs() < 1e-10);
        assert!((a.p_value - c.p_value).abs() < 1e-10);
    }

    #[test]
    fn degenerate_groups_are_rejected() {
        let few = vec![
            record("a", "lstm", "c", "v", 100.0, 0.1, 0.5),
            record("b", "lstm", "c", "v", 200.0, 0.2, 0.5),
        ];
        assert!(matches!(
            regress_ppl_dll(&few, "v"),
            Err(MetaError::DegenerateGroup { .. })
        ));
        let constant = vec![
            record("a", "lstm", "c", "v", 100.0, 0.1, 0.5),
            record("b", "lstm", "c", "v", 100.0, 0.2, 0.5),
            record("c", "lstm", "c", "v", 100.0, 0.3, 0.5),
        ];
        assert!(matches!(
            regress_ppl_dll(&constant, "v"),
            Err(MetaError::DegenerateGroup { .. })
        ));
    }

    #[test]
    fn residualize_closed_forms() {
        // Perfectly linear values → zero residuals.
        let cov = [1.0, 2.0, 3.0, 4.0];
        let vals: Vec<f64> = cov.iter().map(|x| 3.0 - 2.0 * x).collect();
        let out = residualize(&vals, &cov, &["g"; 4]).unwrap();
        assert!(out.residuals.iter().all(|r| r.abs() < 1e-10));
        assert!(out.warnings.is_empty());

        // Constant covariate → centering.
        let vals = [1.0, 3.0, 8.0];
        let out = residualize(&vals, &[5.0; 3], &["g"; 3]).unwrap();
        assert_eq!(out.residuals, vec![-3.0, -1.0, 4.0]);

        // Singleton group → 0 with a warning.
        let out = residualize(&[2.5, 1.0, 2.0], &[1.0, 1.0, 2.0], &["solo", "g", "g"]).unwrap();
        assert_eq!(out.residuals[0], 0.0);
        assert_eq!(out.warnings.len(), 1);
        assert!(out.warnings[0].contains("solo"));
    }

    #[test]
    fn residuals_are_orthogonal_within_groups() {
        let mut rng = SeededRng::new(21);
        let n = 40;
        let groups: Vec<&str> = (0..n).map(|i| ["a", "b", "c"][i % 3]).collect();
        let cov: Vec<f64> = (0..n).map(|_| rng.uniform_in(50.0, 500.0)).collect();
        let vals: Vec<f64> = cov.iter().map(|x| 0.3 * x + 10.0 * rng.normal()).collect();
        let out = residualize(&vals, &cov, &groups).unwrap();
        for g in ["a", "b", "c"] {
            let idx: Vec<usize> = (0..n).filter(|&i| groups[i] == g).collect();
            let m = idx.len() as f64;
            let dot_cov: f64 = idx.iter().map(|&i| out.residuals[i] * cov[i]).sum();
            let dot_one: f64 = idx.iter().map(|&i| out.residuals[i]).sum();
            assert!(dot_cov.abs() / m < 1e-8, "group {}: {}", g, dot_cov / m);
            assert!(dot_one.abs() / m < 1e-8, "group {}: {}", g, dot_one / m);
        }
    }

    #[test]
    fn residual_pairs_are_orthogonal_to_ppl_per_vocab_group() {
        let mut rng = SeededRng::new(33);
        let records: Vec<ModelRecord> = (0..30)
            .map(|i| {
                let vocab = ["v1", "v2"][i % 2];
                let ppl = rng.uniform_in(80.0, 900.0);
                let dll = 0.9 - 0.0008 * ppl + 0.02 * rng.normal();
                let sg = (0.4 + 0.0004 * ppl + 0.05 * rng.normal()).clamp(0.0, 1.0);
                record(&alloc::format!("m{}", i), "lstm", "c", vocab, ppl, dll, sg)
            })
            .collect();
        let (pairs, warnings) = residual_pairs(&records).unwrap();
        assert!(warnings.is_empty());
        assert_eq!(pairs.len(), 30);
        for vocab in ["v1", "v2"] {
            let sel: Vec<&ResidualPair> = pairs.iter().filter(|p| p.vocab_group == vocab).collect();
            let ppl_of = |p: &ResidualPair| {
                records
                    .iter()
                    .find(|r| r.model_id == p.model_id)
                    .map(|r| r.ppl)
                    .unwrap()
            };
            let m = sel.len() as f64;
            let dx: f64 = sel.iter().map(|p| p.x_resid * ppl_of(p)).sum();
            let dy: f64 = sel.iter().map(|p| p.y_resid * ppl_of(p)).sum();
            assert!(dx.abs() / m < 1e-8);
            assert!(dy.abs() / m < 1e-8);
        }
    }

    /// Stepwise fixture: dll driven by ppl (+ optional sg signal).
    fn stepwise_records(seed: u64, sg_effect: f64) -> Vec<ModelRecord> {
        let mut rng = SeededRng::new(seed);
        (0..30)
            .map(|i| {
                let arch = ["lstm", "ngram"][i % 2];
                let ppl = rng.uniform_in(100.0, 800.0);
                let sg = rng.uniform_in(0.2, 0.9);
                let dll = 0.7 - 0.0009 * ppl + sg_effect * sg + 0.01 * rng.normal();
                record(&alloc::format!("m{}", i), arch, "c", "v", ppl, dll, sg)
            })
            .collect()
    }

    #[test]
    fn stepwise_matches_the_nested_rss_formula() {
        let records = stepwise_records(3, 0.0);
        let out = stepwise_sg(&records).unwrap();
        let StepwiseOutcome::Tested { f_stat, p_value, df2, .. } = out else {
            panic!("expected Tested");
        };
        // Recompute both RSS values from scratch.
        let sorted = canonical(&records);
        let (x0, y) = design_for(&sorted, false).unwrap();
        let (x1, _) = design_for(&sorted, true).unwrap();
        let rss = |x: &DesignMatrix| {
            let fit = fit_ols(x, &y).unwrap();
            let pred = fit.predict(x).unwrap();
            y.iter().zip(pred).map(|(yi, pi)| (yi - pi) * (yi - pi)).sum::<f64>()
        };
        let (rss0, rss1) = (rss(&x0), rss(&x1));
        let f_manual = ((rss0 - rss1) / 1.0) / (rss1 / df2);
        assert!(f_stat >= 0.0);
        assert!((f_stat - f_manual).abs() < 1e-10, "{} vs {}", f_stat, f_manual);
        assert!((0.0..=1.0).contains(&p_value));
    }

    #[test]
    fn stepwise_null_calibration_and_power() {
        // Null: sg carries no signal → p < 0.05 around 5% of the time.
        let mut hits = 0;
        let replicates = 300;
        for seed in 0..replicates {
            let records = stepwise_records(1000 + seed, 0.0);
            match stepwise_sg(&records).unwrap() {
                StepwiseOutcome::Tested { p_value, .. } => {
                    if p_value < 0.05 {
                        hits += 1;
                    }
                }
                StepwiseOutcome::Untestable { .. } => panic!("unexpected untestable"),
            }
        }
        let rate = hits as f64 / replicates as f64;
        assert!((rate - 0.05).abs() <= 0.035, "null rejection rate {}", rate);

        // Power: strong sg effect → tiny p.
        let records = stepwise_records(7, 0.5);
        match stepwise_sg(&records).unwrap() {
            StepwiseOutcome::Tested { p_value, .. } => assert!(p_value < 0.01, "p {}", p_value),
            StepwiseOutcome::Untestable { .. } => panic!("unexpected untestable"),
        }
    }

    #[test]
    fn collinear_sg_is_untestable() {
        let records: Vec<ModelRecord> = (0..10)
            .map(|i| {
                let ppl = 100.0 + 50.0 * i as f64;
                // sg is an affine function of ppl (and lands in [0,1]).
                let sg = ppl / 1000.0;
                record(&alloc::format!("m{}", i), "lstm", "c", "v", ppl, 0.5 - 0.0005 * ppl, sg)
            })
            .collect();
        match stepwise_sg(&records).unwrap() {
            StepwiseOutcome::Untestable { reason } => assert!(reason.contains("collinear")),
            other => panic!("unexpected: {:?}", other),
        }
    }

    #[test]
    fn stepwise_needs_five_records() {
        let records = stepwise_records(1, 0.0);
        assert!(matches!(
            stepwise_sg(&records[..4]),
            Err(MetaError::TooFewRecords { got: 4, needed: 5 })
        ));
    }
}
