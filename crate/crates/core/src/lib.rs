//! Core algorithms for evaluating language models as psycholinguistic subjects.
//!
//! The crate covers the full quantitative pipeline used in broad-coverage
//! surprisal studies:
//!
//! * [`corpus`] — tokenization, vocabularies, reading-time data, frequency norms.
//! * [`ngram`] — interpolated (modified) Kneser-Ney n-gram models, perplexity,
//!   and per-token surprisal.
//! * [`surprisal`] — surprisal tables, subword aggregation, and alignment of
//!   surprisals with reading-time corpora.
//! * [`regression`] — OLS and penalized cubic-regression-spline GAMs with
//!   tensor-product smooths, fit by GCV.
//! * [`ppp`] — predictive-power evaluation: mean per-token delta log-likelihood
//!   under k-fold cross-validation.
//! * [`sgtest`] — syntactic-generalization suites scored by region-surprisal
//!   inequalities.
//! * [`meta`] — across-model analyses relating perplexity, predictive power,
//!   and syntactic generalization.
//! * [`synth`] — synthetic reading-time generation with known ground truth.
//!
//! The crate is `no_std` (with `alloc`) so the numerical pipeline can be
//! embedded anywhere; all file formats and the command-line interface live in
//! the companion `psylm` crate. All randomized procedures take explicit seeds
//! and produce identical results on every platform.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
#[macro_use]
extern crate std;

pub mod corpus;
pub mod math;
pub mod meta;
pub mod ngram;
pub mod ppp;
pub mod regression;
pub mod rng;
pub mod sgtest;
pub mod stat;
pub mod surprisal;
pub mod synth;

pub use corpus::{FrequencyTable, Modality, RtDataset, RtRecord, TokenizedCorpus, Vocabulary};
pub use ngram::{KnVariant, NGramModel};
pub use meta::{ModelRecord, PplDllRegression, ResidualPair, StepwiseOutcome};
pub use ppp::{PppOptions, PppResult, RegressionKind};
pub use regression::{DesignMatrix, GamFit, GamSpec, LinearFit, PartialEffect, SmoothTerm};
pub use sgtest::{SgResult, SgSuite, SgTest};
pub use surprisal::SurprisalTable;
