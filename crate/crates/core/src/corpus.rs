//! Training text, reading-time data, and frequency norms.
//!
//! This module owns the plain data-handling end of the pipeline: splitting
//! raw text into tokenized sentences, building count-thresholded
//! vocabularies, averaging per-subject reading times, and computing the
//! word-level control features (length, smoothed log-frequency) used by the
//! regression models.

use alloc::borrow::ToOwned;
use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

// Float supplies f64 math in no_std builds; tests resolve to std's inherent methods.
#[cfg_attr(test, allow(unused_imports))]
use crate::math::Float;

/// The out-of-vocabulary symbol; always present in every [`Vocabulary`].
pub const UNK_SYMBOL: &str = "<unk>";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorpusError {
    #[error("empty corpus: input contains no tokens")]
    EmptyCorpus,
    #[error("duplicate reading-time record for item {item_id:?} word {word_index} subject {subject:?}")]
    DuplicateRecord {
        item_id: String,
        word_index: u32,
        subject: Option<String>,
    },
    #[error("word-form mismatch at item {item_id:?} word {word_index}: {first:?} vs {second:?}")]
    Alignment {
        item_id: String,
        word_index: u32,
        first: String,
        second: String,
    },
    #[error("no reading-time records left after dropping non-positive/missing RTs")]
    EmptyRt,
}

/// Compact token identifier; indexes into the owning [`Vocabulary`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct WordId(pub u32);

impl WordId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// A fixed word list with an `<unk>` entry at id 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    id: String,
    min_count: u32,
    words: Vec<String>,
    index: BTreeMap<String, u32>,
}

impl Vocabulary {
    /// Builds a vocabulary from distinct content words (order preserved).
    ///
    /// `<unk>` is inserted at id 0; a literal `<unk>` among `words` is
    /// ignored. Duplicate words are ignored after their first occurrence.
    pub fn from_words<I, S>(id: &str, min_count: u32, words: I) -> Vocabulary
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut v = Vocabulary {
            id: id.to_owned(),
            min_count,
            words: Vec::new(),
            index: BTreeMap::new(),
        };
        v.push(UNK_SYMBOL);
        for w in words {
            v.push(w.as_ref());
        }
        v
    }

    fn push(&mut self, word: &str) {
        if !self.index.contains_key(word) {
            self.index.insert(word.to_owned(), self.words.len() as u32);
            self.words.push(word.to_owned());
        }
    }

    /// Label identifying how this vocabulary was built.
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn min_count(&self) -> u32 {
        self.min_count
    }

    /// Number of entries, including `<unk>`.
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        false // <unk> is always present
    }

    pub fn unk(&self) -> WordId {
        WordId(0)
    }

    pub fn unk_symbol(&self) -> &str {
        UNK_SYMBOL
    }

    pub fn get(&self, word: &str) -> Option<WordId> {
        self.index.get(word).map(|&i| WordId(i))
    }

    /// Maps a word to its id, falling back to `<unk>`.
    pub fn get_or_unk(&self, word: &str) -> WordId {
        self.get(word).unwrap_or(WordId(0))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    /// The word string for `id`; panics if the id is out of range.
    pub fn word(&self, id: WordId) -> &str {
        &self.words[id.index()]
    }

    /// All entries in id order.
    pub fn entries(&self) -> impl Iterator<Item = &str> {
        self.words.iter().map(String::as_str)
    }
}

/// Flags controlling [`tokenize`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenizeOptions {
    /// Case-fold every token.
    pub lowercase: bool,
    /// Trim leading/trailing ASCII punctuation from tokens; tokens that
    /// become empty are dropped. When false, punctuation stays attached.
    pub strip_punctuation: bool,
}

impl Default for TokenizeOptions {
    fn default() -> Self {
        TokenizeOptions {
            lowercase: false,
            strip_punctuation: false,
        }
    }
}

/// Sentences as id sequences, together with the vocabulary they index.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenizedCorpus {
    vocab: Vocabulary,
    sentences: Vec<Vec<WordId>>,
}

impl TokenizedCorpus {
    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn vocab_id(&self) -> &str {
        self.vocab.id()
    }

    pub fn sentences(&self) -> &[Vec<WordId>] {
        &self.sentences
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(Vec::len).sum()
    }

    /// Re-indexes every token against `vocab`, mapping unseen words to unk.
    pub fn remap(&self, vocab: &Vocabulary) -> TokenizedCorpus {
        let sentences = self
            .sentences
            .iter()
            .map(|s| {
                s.iter()
                    .map(|&id| vocab.get_or_unk(self.vocab.word(id)))
                    .collect()
            })
            .collect();
        TokenizedCorpus {
            vocab: vocab.clone(),
            sentences,
        }
    }

    /// Count of tokens equal to `<unk>` under this corpus's own vocabulary.
    pub fn unk_token_count(&self) -> usize {
        let unk = self.vocab.unk();
        self.sentences
            .iter()
            .flat_map(|s| s.iter())
            .filter(|&&id| id == unk)
            .count()
    }
}

fn is_strippable(c: char) -> bool {
    c.is_ascii_punctuation()
}

/// Splits newline-delimited text into whitespace-tokenized sentences.
///
/// Blank lines are skipped. The resulting corpus indexes a "surface"
/// vocabulary containing every distinct token in first-seen order.
pub fn tokenize(text: &str, opts: TokenizeOptions) -> Result<TokenizedCorpus, CorpusError> {
    let mut sentences: Vec<Vec<String>> = Vec::new();
    for line in text.lines() {
        let mut sent: Vec<String> = Vec::new();
        for raw in line.split_whitespace() {
            let tok = if opts.strip_punctuation {
                raw.trim_matches(is_strippable)
            } else {
                raw
            };
            if tok.is_empty() {
                continue;
            }
            if opts.lowercase {
                sent.push(tok.to_lowercase());
            } else {
                sent.push(tok.to_owned());
            }
        }
        if !sent.is_empty() {
            sentences.push(sent);
        }
    }
    if sentences.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }

    let vocab = Vocabulary::from_words(
        "surface",
        0,
        sentences.iter().flat_map(|s| s.iter().map(String::as_str)),
    );
    let sentences = sentences
        .iter()
        .map(|s| s.iter().map(|w| vocab.get_or_unk(w)).collect())
        .collect();
    Ok(TokenizedCorpus { vocab, sentences })
}

/// Builds a count-thresholded vocabulary from a tokenized corpus.
///
/// Words occurring fewer than `min_count` times are excluded (they will map
/// to `<unk>` after [`TokenizedCorpus::remap`]). Entries are ordered by count
/// descending, then lexicographically, after the `<unk>` entry.
pub fn build_vocab(corpus: &TokenizedCorpus, min_count: u32) -> Vocabulary {
    let min_count = min_count.max(1);
    let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
    for sent in corpus.sentences() {
        for &id in sent {
            *counts.entry(corpus.vocab().word(id)).or_insert(0) += 1;
        }
    }
    counts.remove(UNK_SYMBOL);
    let mut kept: Vec<(&str, u64)> = counts
        .into_iter()
        .filter(|&(_, c)| c >= min_count as u64)
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    Vocabulary::from_words(
        &alloc::format!("min_count={min_count}"),
        min_count,
        kept.iter().map(|&(w, _)| w),
    )
}

/// Which reading-time paradigm a dataset comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modality {
    EyeTracking,
    SelfPaced,
}

impl Modality {
    /// Conventional spillover window: the previous word for eye-tracking,
    /// the previous three words for self-paced reading.
    pub fn default_spillover(self) -> usize {
        match self {
            Modality::EyeTracking => 1,
            Modality::SelfPaced => 3,
        }
    }
}

/// One per-subject reading-time measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct RtRecord {
    pub item_id: String,
    pub word_index: u32,
    pub word_form: String,
    /// Reading time in milliseconds; rows with `rt <= 0` are dropped.
    pub rt: f64,
    pub subject_id: Option<String>,
}

/// Subject-averaged reading time for one word token.
#[derive(Debug, Clone, PartialEq)]
pub struct AveragedRt {
    pub word_form: String,
    pub rt: f64,
    pub n_subjects: u32,
}

/// Reading times averaged across subjects, one record per (item, word).
#[derive(Debug, Clone, PartialEq)]
pub struct RtDataset {
    modality: Modality,
    records: BTreeMap<(String, u32), AveragedRt>,
    dropped_rows: usize,
}

impl RtDataset {
    /// Averages per-subject records into one record per (item, word).
    ///
    /// Rows with non-positive or non-finite RT are dropped first (skipped
    /// words in eye-tracking). Subject rows disagreeing on the word form at a
    /// position are rejected — that signals misaligned input files.
    pub fn from_records(
        records: impl IntoIterator<Item = RtRecord>,
        modality: Modality,
    ) -> Result<RtDataset, CorpusError> {
        struct Acc {
            word_form: String,
            sum: f64,
            n: u32,
            subjects: Vec<Option<String>>,
        }
        let mut acc: BTreeMap<(String, u32), Acc> = BTreeMap::new();
        let mut dropped = 0usize;
        for rec in records {
            if !(rec.rt > 0.0) || !rec.rt.is_finite() {
                dropped += 1;
                continue;
            }
            let key = (rec.item_id, rec.word_index);
            match acc.get_mut(&key) {
                None => {
                    acc.insert(
                        key,
                        Acc {
                            word_form: rec.word_form,
                            sum: rec.rt,
                            n: 1,
                            subjects: alloc::vec![rec.subject_id],
                        },
                    );
                }
                Some(a) => {
                    if a.word_form != rec.word_form {
                        return Err(CorpusError::Alignment {
                            item_id: key.0,
                            word_index: key.1,
                            first: a.word_form.clone(),
                            second: rec.word_form,
                        });
                    }
                    if a.subjects.contains(&rec.subject_id) {
                        return Err(CorpusError::DuplicateRecord {
                            item_id: key.0,
                            word_index: key.1,
                            subject: rec.subject_id,
                        });
                    }
                    a.sum += rec.rt;
                    a.n += 1;
                    a.subjects.push(rec.subject_id);
                }
            }
        }
        if acc.is_empty() {
            return Err(CorpusError::EmptyRt);
        }
        let records = acc
            .into_iter()
            .map(|(key, a)| {
                (
                    key,
                    AveragedRt {
                        word_form: a.word_form,
                        rt: a.sum / a.n as f64,
                        n_subjects: a.n,
                    },
                )
            })
            .collect();
        Ok(RtDataset {
            modality,
            records,
            dropped_rows: dropped,
        })
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    /// Number of input rows discarded for non-positive / non-finite RT.
    pub fn dropped_rows(&self) -> usize {
        self.dropped_rows
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, item_id: &str, word_index: u32) -> Option<&AveragedRt> {
        self.records.get(&(item_id.to_owned(), word_index))
    }

    /// Records in (item_id, word_index) order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, u32, &AveragedRt)> {
        self.records
            .iter()
            .map(|((item, idx), rec)| (item.as_str(), *idx, rec))
    }

    /// Distinct item ids in sorted order.
    pub fn item_ids(&self) -> Vec<&str> {
        let mut ids: Vec<&str> = Vec::new();
        for ((item, _), _) in &self.records {
            if ids.last() != Some(&item.as_str()) {
                ids.push(item);
            }
        }
        ids
    }
}

/// Per-word control features for the reading-time regressions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WordFeatures {
    /// Length in characters (Unicode scalar values).
    pub len: usize,
    /// Add-one smoothed log2 unigram probability (negative bits).
    pub log_freq: f64,
}

/// Unigram counts from a (typically larger) reference corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyTable {
    counts: BTreeMap<String, u64>,
    total: u64,
}

impl FrequencyTable {
    /// Accumulates counts; duplicate words are summed.
    pub fn from_counts<I, S>(counts: I) -> FrequencyTable
    where
        I: IntoIterator<Item = (S, u64)>,
        S: AsRef<str>,
    {
        let mut map: BTreeMap<String, u64> = BTreeMap::new();
        let mut total = 0u64;
        for (w, c) in counts {
            *map.entry(w.as_ref().to_owned()).or_insert(0) += c;
            total += c;
        }
        FrequencyTable { counts: map, total }
    }

    /// Counts every token in a tokenized corpus.
    pub fn from_corpus(corpus: &TokenizedCorpus) -> FrequencyTable {
        let mut map: BTreeMap<String, u64> = BTreeMap::new();
        let mut total = 0u64;
        for sent in corpus.sentences() {
            for &id in sent {
                *map.entry(corpus.vocab().word(id).to_owned()).or_insert(0) += 1;
                total += 1;
            }
        }
        FrequencyTable { counts: map, total }
    }

    pub fn count(&self, word: &str) -> u64 {
        self.counts.get(word).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Number of distinct words in the table.
    pub fn vocab_size(&self) -> usize {
        self.counts.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.counts.iter().map(|(w, &c)| (w.as_str(), c))
    }

    /// Length and smoothed log-frequency controls for one word.
    ///
    /// `log_freq = log2((count + 1) / (total + vocab_size))`, the add-one
    /// smoothed unigram log-probability; unseen words get the smoothing
    /// floor rather than -inf.
    pub fn word_features(&self, word: &str) -> WordFeatures {
        let len = word.chars().count();
        let num = (self.count(word) + 1) as f64;
        let den = (self.total + self.vocab_size() as u64) as f64;
        WordFeatures {
            len,
            log_freq: (num / den).log2(),
        }
    }
}
