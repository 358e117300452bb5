//! Interpolated Kneser-Ney n-gram language models.
//!
//! Training follows Chen & Goodman: absolute discounting with
//! count-of-counts-derived discounts, continuation counts for every order
//! below the top (raw counts are kept for `<s>`-prefixed n-grams, which can
//! never be left-extended), and interpolation with the next-lower order. The
//! unigram level is interpolated with a uniform distribution over the
//! prediction vocabulary, so every query has strictly positive probability.
//!
//! The interpolated model is stored directly in ARPA backoff form: for every
//! observed n-gram the full interpolated probability, and for every observed
//! context the leftover mass γ(h) as its backoff weight. Because γ is
//! computed from the mass actually removed in each context, Σ_w P(w|h) = 1
//! holds exactly (to rounding) for every context, by induction over orders.
//!
//! Sentence boundaries: `<s>` pads contexts and is never predicted
//! (probability zero by convention, −99 in ARPA exports); `</s>` is predicted
//! and counted. The prediction vocabulary is therefore all vocabulary entries
//! (including `<unk>`) plus `</s>`.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::corpus::{TokenizedCorpus, Vocabulary, WordId};
// Float supplies f64 math in no_std builds; tests resolve to std's inherent methods.
#[cfg_attr(test, allow(unused_imports))]
use crate::math::Float;
use crate::surprisal::{SurprisalTable, TableMeta};

pub const BOS_SYMBOL: &str = "<s>";
pub const EOS_SYMBOL: &str = "</s>";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NgramError {
    #[error("n-gram order must be at least 2 (got {order}); Kneser-Ney backoff is undefined with no lower order")]
    OrderTooSmall { order: usize },
    #[error("cannot train on an empty corpus")]
    EmptyCorpus,
    #[error("perplexity of an empty surprisal sequence is undefined")]
    EmptyInput,
    #[error("non-finite surprisal at token {index}")]
    NonFinite { index: usize },
    #[error("invalid model tables: {reason}")]
    InvalidTables { reason: String },
}

/// Which Kneser-Ney discount schedule to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KnVariant {
    /// Chen-Goodman modified KN: three discounts per order (counts 1, 2, 3+).
    Modified,
    /// Classic interpolated KN: a single discount per order.
    Unmodified,
}

/// Per-order absolute discounts.
///
/// `d1/d2/d3` apply to n-grams with count 1, 2, and ≥3 respectively; the
/// unmodified variant stores the same value in all three. `fallback` records
/// that some needed count-of-counts was zero (or produced an out-of-range
/// estimate) and the affected discounts were replaced by 0.5.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Discounts {
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
    pub fallback: bool,
}

impl Discounts {
    fn for_count(&self, count: u64) -> f64 {
        match count {
            0 => 0.0,
            1 => self.d1,
            2 => self.d2,
            _ => self.d3,
        }
    }
}

/// A token in model space: a vocabulary word or a sentence boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Token {
    Word(WordId),
    Bos,
    Eos,
}

/// Internal symbol ids: vocabulary ids, then EOS, then BOS.
type Sym = u32;

#[derive(Debug, Clone, PartialEq)]
pub struct NGramModel {
    order: usize,
    vocab: Vocabulary,
    /// probs[o-1]: o-gram → log2 probability.
    probs: Vec<BTreeMap<Vec<Sym>, f64>>,
    /// bows[l-1]: length-l context → log2 backoff weight.
    bows: Vec<BTreeMap<Vec<Sym>, f64>>,
    /// Per-order discounts (empty for imported models).
    discounts: Vec<Discounts>,
    variant: Option<KnVariant>,
    degenerate_counts: bool,
}

/// Final perplexity summary over a token sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct PerplexityResult {
    pub ppl: f64,
    pub token_count: usize,
    pub mean_surprisal_bits: f64,
}

/// Perplexity from per-token surprisals: `2^(mean bits)`.
pub fn perplexity(surprisals: &[f64]) -> Result<PerplexityResult, NgramError> {
    if surprisals.is_empty() {
        return Err(NgramError::EmptyInput);
    }
    for (i, &s) in surprisals.iter().enumerate() {
        if !s.is_finite() {
            return Err(NgramError::NonFinite { index: i });
        }
    }
    let mean = surprisals.iter().sum::<f64>() / surprisals.len() as f64;
    Ok(PerplexityResult {
        ppl: mean.exp2(),
        token_count: surprisals.len(),
        mean_surprisal_bits: mean,
    })
}

/// Chen-Goodman discounts from count-of-counts (n1..n4 = number of n-grams
/// observed exactly 1..4 times). Falls back to 0.5 wherever the estimate is
/// undefined or out of range.
fn estimate_discounts(variant: KnVariant, n: [u64; 4]) -> Discounts {
    let [n1, n2, n3, n4] = n;
    let mut fallback = false;
    let mut pick = |needed_nonzero: bool, value: f64, max: f64| -> f64 {
        if needed_nonzero && value > 0.0 && value <= max {
            value
        } else {
            fallback = true;
            0.5
        }
    };
    let y = if n1 + 2 * n2 > 0 {
        n1 as f64 / (n1 + 2 * n2) as f64
    } else {
        0.0
    };
    let d = match variant {
        KnVariant::Unmodified => {
            let d = pick(n1 > 0 && n2 > 0, y, 1.0);
            Discounts {
                d1: d,
                d2: d,
                d3: d,
                fallback,
            }
        }
        KnVariant::Modified => {
            let d1 = pick(n1 > 0 && n2 > 0, 1.0 - 2.0 * y * n2 as f64 / n1 as f64, 1.0);
            let d2 = pick(n2 > 0 && n3 > 0, 2.0 - 3.0 * y * n3 as f64 / n2 as f64, 2.0);
            let d3 = pick(n3 > 0 && n4 > 0, 3.0 - 4.0 * y * n4 as f64 / n3 as f64, 3.0);
            Discounts {
                d1,
                d2,
                d3,
                fallback,
            }
        }
    };
    d
}

impl NGramModel {
    /// Trains an interpolated Kneser-Ney model of the given order.
    ///
    /// The corpus's own vocabulary becomes the model vocabulary; remap the
    /// corpus against a thresholded vocabulary first if an `<unk>` policy is
    /// wanted. Degenerate count-of-counts do not fail training; they trigger
    /// the 0.5 fallback discount and set [`NGramModel::degenerate_counts`].
    pub fn train_kn(
        corpus: &TokenizedCorpus,
        order: usize,
        variant: KnVariant,
    ) -> Result<NGramModel, NgramError> {
        if order < 2 {
            return Err(NgramError::OrderTooSmall { order });
        }
        if corpus.token_count() == 0 {
            return Err(NgramError::EmptyCorpus);
        }
        let vocab = corpus.vocab().clone();
        let n_words = vocab.len() as Sym;
        let eos: Sym = n_words;
        let bos: Sym = n_words + 1;
        // Prediction space: every vocabulary entry plus </s> (never <s>).
        let v_pred = (n_words + 1) as f64;

        // Raw counts of all length-o windows over padded sentences, except
        // the bare <s> unigram, which is never a prediction target.
        let mut raw: Vec<BTreeMap<Vec<Sym>, u64>> = alloc::vec![BTreeMap::new(); order];
        let mut padded: Vec<Sym> = Vec::new();
        for sent in corpus.sentences() {
            padded.clear();
            padded.push(bos);
            padded.extend(sent.iter().map(|id| id.0 as Sym));
            padded.push(eos);
            for o in 1..=order {
                if padded.len() < o {
                    continue;
                }
                for win in padded.windows(o) {
                    if o == 1 && win[0] == bos {
                        continue;
                    }
                    *raw[o - 1].entry(win.to_vec()).or_insert(0) += 1;
                }
            }
        }

        // Effective counts: continuation counts below the top order (number
        // of distinct left-extensions), raw counts at the top and for
        // <s>-prefixed n-grams.
        let mut used: Vec<BTreeMap<Vec<Sym>, u64>> = Vec::with_capacity(order);
        for o in 1..=order {
            if o == order {
                used.push(raw[o - 1].clone());
            } else {
                let mut cont: BTreeMap<Vec<Sym>, u64> = BTreeMap::new();
                for (g, _) in &raw[o] {
                    *cont.entry(g[1..].to_vec()).or_insert(0) += 1;
                }
                let mut table = BTreeMap::new();
                for (g, &c) in &raw[o - 1] {
                    let count = if g[0] == bos {
                        c
                    } else {
                        cont.get(g).copied().unwrap_or(0)
                    };
                    debug_assert!(count > 0, "observed n-gram with zero effective count");
                    table.insert(g.clone(), count);
                }
                used.push(table);
            }
        }

        let mut discounts = Vec::with_capacity(order);
        let mut degenerate = false;
        for table in &used {
            let mut n = [0u64; 4];
            for &c in table.values() {
                if (1..=4).contains(&c) {
                    n[(c - 1) as usize] += 1;
                }
            }
            let d = estimate_discounts(variant, n);
            degenerate |= d.fallback;
            discounts.push(d);
        }

        let mut probs: Vec<BTreeMap<Vec<Sym>, f64>> = alloc::vec![BTreeMap::new(); order];
        let mut bows: Vec<BTreeMap<Vec<Sym>, f64>> =
            alloc::vec![BTreeMap::new(); order.saturating_sub(1)];

        // Unigram level: discounted continuation estimate interpolated with
        // the uniform distribution, stored for the whole prediction space.
        {
            let d = &discounts[0];
            let denom: u64 = used[0].values().sum();
            debug_assert!(denom > 0);
            let denom = denom as f64;
            let mut removed = 0.0;
            for &c in used[0].values() {
                removed += d.for_count(c);
            }
            let gamma = removed / denom;
            for w in 0..=eos {
                let c = used[0].get(&alloc::vec![w]).copied().unwrap_or(0);
                let p = (c as f64 - d.for_count(c)) / denom + gamma / v_pred;
                probs[0].insert(alloc::vec![w], p.log2());
            }
        }

        // Higher orders: group by context (BTreeMap iteration is sorted, so
        // each context's n-grams are contiguous), discount, interpolate with
        // the already-computed next-lower order, and record γ as the backoff.
        for o in 2..=order {
            let d = &discounts[o - 1];
            let table = &used[o - 1];
            let mut entries: Vec<(&Vec<Sym>, u64)> = Vec::new();
            let mut current: Option<&[Sym]> = None;
            let flush = |entries: &mut Vec<(&Vec<Sym>, u64)>,
                             probs: &mut Vec<BTreeMap<Vec<Sym>, f64>>,
                             bows: &mut Vec<BTreeMap<Vec<Sym>, f64>>| {
                if entries.is_empty() {
                    return;
                }
                let ctx = &entries[0].0[..o - 1];
                let denom: u64 = entries.iter().map(|&(_, c)| c).sum();
                let denom = denom as f64;
                let removed: f64 = entries.iter().map(|&(_, c)| d.for_count(c)).sum();
                let gamma = removed / denom;
                for &(g, c) in entries.iter() {
                    let lower = probs[o - 2]
                        .get(&g[1..])
                        .copied()
                        .expect("suffix of an observed n-gram is always stored")
                        .exp2();
                    let p = (c as f64 - d.for_count(c)) / denom + gamma * lower;
                    probs[o - 1].insert(g.clone(), p.log2());
                }
                bows[o - 2].insert(ctx.to_vec(), gamma.log2());
                entries.clear();
            };
            for (g, &c) in table {
                if current != Some(&g[..o - 1]) {
                    flush(&mut entries, &mut probs, &mut bows);
                    current = Some(&g[..o - 1]);
                }
                entries.push((g, c));
            }
            flush(&mut entries, &mut probs, &mut bows);
        }

        Ok(NGramModel {
            order,
            vocab,
            probs,
            bows,
            discounts,
            variant: Some(variant),
            degenerate_counts: degenerate,
        })
    }

    /// Rebuilds a model from explicit probability/backoff tables (ARPA
    /// import). `probs[o-1]` maps o-grams to log2 probabilities; `bows` maps
    /// contexts of length 1..order-1 to log2 backoff weights.
    pub fn from_tables(
        vocab: Vocabulary,
        order: usize,
        probs: Vec<Vec<(Vec<Token>, f64)>>,
        bows: Vec<(Vec<Token>, f64)>,
    ) -> Result<NGramModel, NgramError> {
        if order < 1 {
            return Err(NgramError::InvalidTables {
                reason: "order must be at least 1".into(),
            });
        }
        if probs.len() != order {
            return Err(NgramError::InvalidTables {
                reason: alloc::format!(
                    "expected {order} probability sections, got {}",
                    probs.len()
                ),
            });
        }
        let n_words = vocab.len() as Sym;
        let to_sym = |t: &Token| -> Sym {
            match t {
                Token::Word(id) => {
                    if id.index() < n_words as usize {
                        id.0
                    } else {
                        0 // unknown ids collapse to <unk>
                    }
                }
                Token::Eos => n_words,
                Token::Bos => n_words + 1,
            }
        };
        let mut prob_tables: Vec<BTreeMap<Vec<Sym>, f64>> = alloc::vec![BTreeMap::new(); order];
        for (o_idx, section) in probs.into_iter().enumerate() {
            let o = o_idx + 1;
            for (gram, lp) in section {
                if gram.len() != o {
                    return Err(NgramError::InvalidTables {
                        reason: alloc::format!("{o}-gram section contains a {}-gram", gram.len()),
                    });
                }
                if lp > 0.0 || lp.is_nan() {
                    return Err(NgramError::InvalidTables {
                        reason: alloc::format!("log probability {lp} out of range"),
                    });
                }
                let key: Vec<Sym> = gram.iter().map(&to_sym).collect();
                // <s> carries a sentinel probability in ARPA files; it is
                // context-only here, so skip storing it as an event.
                if o == 1 && key[0] == n_words + 1 {
                    continue;
                }
                prob_tables[o_idx].insert(key, lp);
            }
        }
        let mut bow_tables: Vec<BTreeMap<Vec<Sym>, f64>> =
            alloc::vec![BTreeMap::new(); order.saturating_sub(1)];
        for (gram, bw) in bows {
            let l = gram.len();
            if l == 0 || l >= order {
                return Err(NgramError::InvalidTables {
                    reason: alloc::format!("backoff weight on a length-{l} context (order {order})"),
                });
            }
            if !bw.is_finite() {
                return Err(NgramError::InvalidTables {
                    reason: "non-finite backoff weight".into(),
                });
            }
            bow_tables[l - 1].insert(gram.iter().map(&to_sym).collect(), bw);
        }
        Ok(NGramModel {
            order,
            vocab,
            probs: prob_tables,
            bows: bow_tables,
            discounts: Vec::new(),
            variant: None,
            degenerate_counts: false,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn vocab_id(&self) -> &str {
        self.vocab.id()
    }

    pub fn variant(&self) -> Option<KnVariant> {
        self.variant
    }

    /// Per-order discounts (empty for imported models).
    pub fn discounts(&self) -> &[Discounts] {
        &self.discounts
    }

    /// True when some discount fell back to 0.5 because a needed
    /// count-of-counts was zero (tiny training corpora).
    pub fn degenerate_counts(&self) -> bool {
        self.degenerate_counts
    }

    /// Number of stored n-grams of each order 1..=order.
    pub fn gram_counts(&self) -> Vec<usize> {
        self.probs.iter().map(BTreeMap::len).collect()
    }

    fn sym(&self, t: Token) -> Sym {
        let n_words = self.vocab.len() as Sym;
        match t {
            Token::Word(id) => {
                if id.index() < n_words as usize {
                    id.0
                } else {
                    0
                }
            }
            Token::Eos => n_words,
            Token::Bos => n_words + 1,
        }
    }

    fn sym_to_token(&self, s: Sym) -> Token {
        let n_words = self.vocab.len() as Sym;
        if s < n_words {
            Token::Word(WordId(s))
        } else if s == n_words {
            Token::Eos
        } else {
            Token::Bos
        }
    }

    /// The surface string for a token (`<s>`/`</s>` for boundaries).
    pub fn token_str(&self, t: Token) -> &str {
        match t {
            Token::Word(id) => self.vocab.word(id),
            Token::Bos => BOS_SYMBOL,
            Token::Eos => EOS_SYMBOL,
        }
    }

    /// Parses a surface string into a token, mapping OOV words to `<unk>`.
    pub fn token_of(&self, s: &str) -> Token {
        match s {
            BOS_SYMBOL => Token::Bos,
            EOS_SYMBOL => Token::Eos,
            w => Token::Word(self.vocab.get_or_unk(w)),
        }
    }

    /// Stored n-grams of order `o` with their log2 probabilities, sorted.
    pub fn grams(&self, o: usize) -> impl Iterator<Item = (Vec<Token>, f64)> + '_ {
        self.probs[o - 1]
            .iter()
            .map(move |(g, &lp)| (g.iter().map(|&s| self.sym_to_token(s)).collect(), lp))
    }

    /// Log2 backoff weight stored for a context, if any.
    pub fn backoff(&self, context: &[Token]) -> Option<f64> {
        if context.is_empty() || context.len() >= self.order {
            return None;
        }
        let key: Vec<Sym> = context.iter().map(|&t| self.sym(t)).collect();
        self.bows[context.len() - 1].get(&key).copied()
    }

    /// Log2 backoff weight of the bare `<s>` context (for ARPA export).
    pub fn bos_backoff(&self) -> Option<f64> {
        self.backoff(&[Token::Bos])
    }

    /// Log2 conditional probability of `word` given `context`.
    ///
    /// Only the last `order − 1` context tokens are used. Unknown word ids
    /// map to `<unk>`. Querying `<s>` as the predicted word returns −∞ (it is
    /// context-only by convention).
    pub fn log2_cond_prob(&self, word: Token, context: &[Token]) -> f64 {
        let ctx_len = context.len().min(self.order - 1);
        let mut key: Vec<Sym> = Vec::with_capacity(ctx_len + 1);
        for &t in &context[context.len() - ctx_len..] {
            key.push(self.sym(t));
        }
        key.push(self.sym(word));
        let total = key.len();
        let mut acc = 0.0f64;
        for start in 0..total {
            let gram = &key[start..];
            if let Some(&lp) = self.probs[gram.len() - 1].get(gram) {
                return acc + lp;
            }
            if gram.len() >= 2 {
                if let Some(&bw) = self.bows[gram.len() - 2].get(&gram[..gram.len() - 1]) {
                    acc += bw;
                }
            }
        }
        f64::NEG_INFINITY
    }

    /// Conditional probability in linear space.
    pub fn cond_prob(&self, word: Token, context: &[Token]) -> f64 {
        self.log2_cond_prob(word, context).exp2()
    }

    /// Per-token surprisal (bits) for a sentence, optionally including the
    /// implicit `</s>` event. Context starts at `<s>` and grows left to
    /// right.
    pub fn sentence_surprisals(&self, sentence: &[WordId], include_eos: bool) -> Vec<f64> {
        let mut ctx: Vec<Token> = Vec::with_capacity(sentence.len() + 1);
        ctx.push(Token::Bos);
        let mut out = Vec::with_capacity(sentence.len() + usize::from(include_eos));
        for &w in sentence {
            let t = Token::Word(w);
            out.push(-self.log2_cond_prob(t, &ctx));
            ctx.push(t);
        }
        if include_eos {
            out.push(-self.log2_cond_prob(Token::Eos, &ctx));
        }
        out
    }

    /// Joint log2 probability of a sentence including the `</s>` event.
    pub fn sentence_log2_prob(&self, sentence: &[WordId]) -> f64 {
        -self.sentence_surprisals(sentence, true).iter().sum::<f64>()
    }

    /// Per-token surprisals over a whole corpus, `</s>` included, in corpus
    /// order (the sequence perplexity is computed from).
    pub fn corpus_surprisals(&self, corpus: &TokenizedCorpus) -> Vec<f64> {
        let mut out = Vec::with_capacity(corpus.token_count() + corpus.sentences().len());
        for sent in corpus.sentences() {
            out.extend(self.sentence_surprisals(sent, true));
        }
        out
    }

    /// Word-by-word surprisal table for stimulus items.
    ///
    /// Each item is scored independently: context resets to `<s>` at item
    /// boundaries. `</s>` is not emitted — reading-time alignment is over
    /// visible words only. OOV tokens are scored as `<unk>`.
    pub fn surprisal_table<S: AsRef<str>>(
        &self,
        items: &[(String, Vec<S>)],
        meta: TableMeta,
    ) -> SurprisalTable {
        let mut table = SurprisalTable::new(meta);
        for (item_id, tokens) in items {
            let ids: Vec<WordId> = tokens
                .iter()
                .map(|t| self.vocab.get_or_unk(t.as_ref()))
                .collect();
            let bits = self.sentence_surprisals(&ids, false);
            for (idx, (tok, b)) in tokens.iter().zip(bits).enumerate() {
                table.insert(item_id, idx as u32, tok.as_ref(), b);
            }
        }
        table
    }
}
