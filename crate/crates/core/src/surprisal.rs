//! Surprisal tables and their alignment with reading-time data.
//!
//! Surprisal values arrive either from the in-repo n-gram model or from
//! external files (LSTM/RNNG/GPT-style models). Subword rows are collapsed to
//! word level by the chain rule (bits add), tables are inner-joined with
//! reading-time records, and joined rows are expanded into spillover
//! predictor windows for the regression modules.

use alloc::borrow::ToOwned;
use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::corpus::{FrequencyTable, RtDataset};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SurprisalError {
    #[error("duplicate surprisal entry for item {item_id:?} word {word_index}")]
    DuplicateEntry { item_id: String, word_index: u32 },
    #[error("subword indices for item {item_id:?} word {word_index} are not contiguous from 0")]
    SubwordGap { item_id: String, word_index: u32 },
    #[error(
        "{mismatched} of {total} joined rows mismatch on word form (> 5%); first offenders: {}",
        format_mismatches(.sample)
    )]
    Misaligned {
        mismatched: usize,
        total: usize,
        sample: Vec<Mismatch>,
    },
}

fn format_mismatches(sample: &[Mismatch]) -> String {
    let mut s = String::new();
    for (i, m) in sample.iter().enumerate() {
        if i > 0 {
            s.push_str(", ");
        }
        s.push_str(&alloc::format!(
            "{}/{} {:?}≠{:?}",
            m.item_id,
            m.word_index,
            m.word_form,
            m.token
        ));
    }
    s
}

/// Identification metadata carried by every surprisal table.
#[derive(Debug, Clone, PartialEq)]
pub struct TableMeta {
    pub model_id: String,
    pub vocab_group: String,
    pub architecture: String,
}

impl TableMeta {
    pub fn new(model_id: &str, vocab_group: &str) -> TableMeta {
        TableMeta {
            model_id: model_id.to_owned(),
            vocab_group: vocab_group.to_owned(),
            architecture: "unknown".to_owned(),
        }
    }

    pub fn with_architecture(mut self, architecture: &str) -> TableMeta {
        self.architecture = architecture.to_owned();
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    token: String,
    bits: f64,
}

/// Word-level surprisal (bits) keyed by (item_id, word_index).
#[derive(Debug, Clone, PartialEq)]
pub struct SurprisalTable {
    meta: TableMeta,
    entries: BTreeMap<(String, u32), Entry>,
}

impl SurprisalTable {
    pub fn new(meta: TableMeta) -> SurprisalTable {
        SurprisalTable {
            meta,
            entries: BTreeMap::new(),
        }
    }

    pub fn meta(&self) -> &TableMeta {
        &self.meta
    }

    pub fn model_id(&self) -> &str {
        &self.meta.model_id
    }

    pub fn vocab_group(&self) -> &str {
        &self.meta.vocab_group
    }

    /// Inserts an entry, replacing any previous one for the same key.
    pub fn insert(&mut self, item_id: &str, word_index: u32, token: &str, bits: f64) {
        debug_assert!(bits.is_finite() && bits >= 0.0, "surprisal must be finite and >= 0");
        self.entries.insert(
            (item_id.to_owned(), word_index),
            Entry {
                token: token.to_owned(),
                bits,
            },
        );
    }

    /// Inserts an entry, failing on duplicate (item, word) keys.
    pub fn try_insert(
        &mut self,
        item_id: &str,
        word_index: u32,
        token: &str,
        bits: f64,
    ) -> Result<(), SurprisalError> {
        if self.entries.contains_key(&(item_id.to_owned(), word_index)) {
            return Err(SurprisalError::DuplicateEntry {
                item_id: item_id.to_owned(),
                word_index,
            });
        }
        self.insert(item_id, word_index, token, bits);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, item_id: &str, word_index: u32) -> Option<f64> {
        self.entries
            .get(&(item_id.to_owned(), word_index))
            .map(|e| e.bits)
    }

    pub fn token(&self, item_id: &str, word_index: u32) -> Option<&str> {
        self.entries
            .get(&(item_id.to_owned(), word_index))
            .map(|e| e.token.as_str())
    }

    /// Entries in (item_id, word_index) order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, u32, &str, f64)> {
        self.entries
            .iter()
            .map(|((item, idx), e)| (item.as_str(), *idx, e.token.as_str(), e.bits))
    }

    /// All surprisal values in key order.
    pub fn bits(&self) -> Vec<f64> {
        self.entries.values().map(|e| e.bits).collect()
    }
}

/// One subword row from an external (e.g. BPE-segmented) surprisal file.
#[derive(Debug, Clone, PartialEq)]
pub struct SubwordRow {
    pub item_id: String,
    pub word_index: u32,
    pub subword_index: u32,
    pub token: String,
    pub bits: f64,
}

/// Collapses subword surprisals to word level by the chain rule.
///
/// The joint probability of a word is the product of its subword
/// probabilities, so word bits are the sum of subword bits. Subword indices
/// must cover 0..n contiguously for each word; the word token is the
/// concatenation of its subword tokens.
pub fn aggregate_subwords(
    rows: &[SubwordRow],
    meta: TableMeta,
) -> Result<SurprisalTable, SurprisalError> {
    let mut groups: BTreeMap<(String, u32), Vec<(u32, &str, f64)>> = BTreeMap::new();
    for row in rows {
        groups
            .entry((row.item_id.clone(), row.word_index))
            .or_default()
            .push((row.subword_index, &row.token, row.bits));
    }
    let mut table = SurprisalTable::new(meta);
    for ((item_id, word_index), mut parts) in groups {
        parts.sort_by_key(|&(si, _, _)| si);
        let contiguous = parts
            .iter()
            .enumerate()
            .all(|(i, &(si, _, _))| si as usize == i);
        if !contiguous {
            return Err(SurprisalError::SubwordGap {
                item_id,
                word_index,
            });
        }
        let mut token = String::new();
        let mut bits = 0.0;
        for (_, t, b) in parts {
            token.push_str(t);
            bits += b;
        }
        table.insert(&item_id, word_index, &token, bits);
    }
    Ok(table)
}

/// A surprisal entry joined with its reading-time record.
#[derive(Debug, Clone, PartialEq)]
pub struct JoinedRow {
    pub item_id: String,
    pub word_index: u32,
    /// Word form from the reading-time side.
    pub word_form: String,
    /// Token from the surprisal side.
    pub token: String,
    pub rt: f64,
    pub bits: f64,
}

/// A word-form disagreement that survived normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct Mismatch {
    pub item_id: String,
    pub word_index: u32,
    pub word_form: String,
    pub token: String,
}

/// Inner join of a surprisal table with reading times.
#[derive(Debug, Clone, PartialEq)]
pub struct Aligned {
    /// Joined rows in (item_id, word_index) order.
    pub rows: Vec<JoinedRow>,
    /// Rows whose normalized word forms still disagree (kept, but reported).
    pub mismatches: Vec<Mismatch>,
}

/// Case-fold and strip outer punctuation for word-form comparison.
fn normalize_form(s: &str) -> String {
    s.trim_matches(|c: char| c.is_ascii_punctuation()).to_lowercase()
}

/// Joins surprisals to reading times on (item_id, word_index).
///
/// Word forms are compared after normalization (case-fold, outer punctuation
/// stripped). Mismatching rows are kept and reported; if more than 5% of
/// joined rows mismatch the join is rejected, listing the first 20 offenders.
pub fn align(table: &SurprisalTable, rt: &RtDataset) -> Result<Aligned, SurprisalError> {
    let mut rows = Vec::new();
    let mut mismatches = Vec::new();
    for (item_id, word_index, rec) in rt.iter() {
        let Some(bits) = table.get(item_id, word_index) else {
            continue;
        };
        let token = table.token(item_id, word_index).unwrap_or_default();
        if normalize_form(&rec.word_form) != normalize_form(token) {
            mismatches.push(Mismatch {
                item_id: item_id.to_owned(),
                word_index,
                word_form: rec.word_form.clone(),
                token: token.to_owned(),
            });
        }
        rows.push(JoinedRow {
            item_id: item_id.to_owned(),
            word_index,
            word_form: rec.word_form.clone(),
            token: token.to_owned(),
            rt: rec.rt,
            bits,
        });
    }
    if mismatches.len() * 20 > rows.len() {
        let mismatched = mismatches.len();
        let mut sample = mismatches;
        sample.truncate(20);
        return Err(SurprisalError::Misaligned {
            mismatched,
            total: rows.len(),
            sample,
        });
    }
    Ok(Aligned { rows, mismatches })
}

/// One reading-time observation with its spillover predictor window.
///
/// Index 0 of each vector is the current word; index `j` is the word `j`
/// positions back. All vectors have length `k + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorRow {
    pub item_id: String,
    pub word_index: u32,
    pub rt: f64,
    /// Surprisal in bits for lags 0..=k.
    pub surp: Vec<f64>,
    /// Word length in characters for lags 0..=k.
    pub len: Vec<f64>,
    /// Smoothed log2 unigram probability for lags 0..=k.
    pub freq: Vec<f64>,
}

impl PredictorRow {
    /// Spillover window size (number of previous words included).
    pub fn k(&self) -> usize {
        self.surp.len() - 1
    }
}

/// Result of spillover expansion, with the number of rows excluded for
/// incomplete windows.
#[derive(Debug, Clone, PartialEq)]
pub struct SpilloverRows {
    pub rows: Vec<PredictorRow>,
    pub excluded: usize,
}

/// Builds spillover predictor rows from joined surprisal/RT rows.
///
/// A row is emitted for a word only when the full window — the word itself
/// and its `k` immediate predecessors by `word_index` — exists in the joined
/// rows within the same item. Windows never cross item boundaries; rows lost
/// to incomplete windows are counted in `excluded`. Length and frequency
/// controls are computed from each window word's reading-time form.
pub fn spillover_features(
    joined: &[JoinedRow],
    k: usize,
    freq: &FrequencyTable,
) -> SpilloverRows {
    let mut by_key: BTreeMap<(&str, u32), &JoinedRow> = BTreeMap::new();
    for row in joined {
        by_key.insert((row.item_id.as_str(), row.word_index), row);
    }
    let mut rows = Vec::new();
    for row in joined {
        let mut window: Vec<&JoinedRow> = Vec::with_capacity(k + 1);
        window.push(row);
        let mut complete = true;
        for j in 1..=k as u32 {
            match row
                .word_index
                .checked_sub(j)
                .and_then(|idx| by_key.get(&(row.item_id.as_str(), idx)))
            {
                Some(prev) => window.push(prev),
                None => {
                    complete = false;
                    break;
                }
            }
        }
        if !complete {
            continue;
        }
        let mut surp = Vec::with_capacity(k + 1);
        let mut len = Vec::with_capacity(k + 1);
        let mut lf = Vec::with_capacity(k + 1);
        for w in &window {
            let feats = freq.word_features(&w.word_form);
            surp.push(w.bits);
            len.push(feats.len as f64);
            lf.push(feats.log_freq);
        }
        rows.push(PredictorRow {
            item_id: row.item_id.clone(),
            word_index: row.word_index,
            rt: row.rt,
            surp,
            len,
            freq: lf,
        });
    }
    let excluded = joined.len() - rows.len();
    SpilloverRows { rows, excluded }
}
