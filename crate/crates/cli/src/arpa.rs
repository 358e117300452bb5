//! ARPA backoff-format import/export.
//!
//! Probabilities and backoff weights are stored internally in log base 2;
//! the ARPA text format uses log base 10 with six decimal places. `<s>` is
//! context-only and is written with the conventional −99 sentinel in the
//! unigram section.

use std::path::Path;

use psylm_core::corpus::Vocabulary;
use psylm_core::ngram::Token;
use psylm_core::NGramModel;

use crate::{read_file, write_file, CliError};

const LOG10_2: f64 = std::f64::consts::LOG10_2;

fn fmt_log10(lp2: f64) -> String {
    format!("{:.6}", lp2 * LOG10_2)
}

/// Serialize a model in ARPA text form.
pub fn write_arpa(path: &Path, model: &NGramModel) -> Result<(), CliError> {
    write_file(path, &to_arpa_string(model))
}

pub fn to_arpa_string(model: &NGramModel) -> String {
    let order = model.order();
    let mut out = String::from("\\data\\\n");
    for o in 1..=order {
        // +1 in the unigram section for the <s> sentinel line
        let count = model.grams(o).count() + usize::from(o == 1);
        out.push_str(&format!("ngram {o}={count}\n"));
    }
    for o in 1..=order {
        out.push_str(&format!("\n\\{o}-grams:\n"));
        for (gram, lp2) in model.grams(o) {
            out.push_str(&fmt_log10(lp2));
            for &t in &gram {
                out.push('\t');
                out.push_str(model.token_str(t));
            }
            if let Some(bow) = model.backoff(&gram) {
                out.push('\t');
                out.push_str(&fmt_log10(bow));
            }
            out.push('\n');
        }
        if o == 1 {
            out.push_str("-99.000000\t<s>");
            if let Some(bow) = model.bos_backoff() {
                out.push('\t');
                out.push_str(&fmt_log10(bow));
            }
            out.push('\n');
        }
    }
    out.push_str("\n\\end\\\n");
    out
}

/// Parse an ARPA file back into a model.
///
/// Vocabulary ids are assigned from the unigram section in file order, so a
/// file produced by [`write_arpa`] reads back into a model that re-exports
/// byte-identically.
pub fn read_arpa(path: &Path) -> Result<NGramModel, CliError> {
    let text = read_file(path)?;
    parse_arpa(path, &text)
}

fn perr(path: &Path, line: usize, section: &str, message: String) -> CliError {
    CliError::parse(path, line, format!("in {section}: {message}"))
}

fn parse_arpa(path: &Path, text: &str) -> Result<NGramModel, CliError> {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "model".to_owned());

    let mut declared: Vec<usize> = Vec::new(); // declared[o-1] = count for order o
    let mut in_data = false;
    let mut cur: Option<usize> = None;
    let mut ended = false;
    let mut last_line = 0usize;

    // raw unigram rows until the section closes and the vocabulary is fixed
    let mut unigrams: Vec<(String, f64, Option<f64>)> = Vec::new();
    let mut vocab: Option<Vocabulary> = None;
    let mut probs: Vec<Vec<(Vec<Token>, f64)>> = Vec::new();
    let mut bows: Vec<(Vec<Token>, f64)> = Vec::new();
    let mut found = 0usize;

    fn section_name(in_data: bool, cur: Option<usize>) -> String {
        match cur {
            Some(o) => format!("\\{o}-grams\\ section"),
            None if in_data => "\\data\\ section".to_owned(),
            None => "preamble".to_owned(),
        }
    }

    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        last_line = lineno;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if ended {
            return Err(perr(path, lineno, "\\end\\", "content after \\end\\ marker".into()));
        }
        if !in_data {
            if line == "\\data\\" {
                in_data = true;
                continue;
            }
            return Err(perr(
                path,
                lineno,
                "preamble",
                format!("expected \\data\\ header, got {line:?}"),
            ));
        }
        if let Some(rest) = line.strip_prefix('\\') {
            // close out the running section before switching
            if let Some(o) = cur {
                let expect = declared[o - 1];
                if found != expect {
                    return Err(perr(
                        path,
                        lineno,
                        &format!("\\{o}-grams\\ section"),
                        format!("declared {expect} entries, found {found}"),
                    ));
                }
                if o == 1 {
                    let order = declared.len();
                    let (v, mut p1, mut b1) = finish_unigrams(path, lineno, &stem, &unigrams, order)?;
                    vocab = Some(v);
                    probs.push(core::mem::take(&mut p1));
                    bows.append(&mut b1);
                }
            }
            if rest == "end\\" {
                let next = cur.map_or(1, |o| o + 1);
                if next != declared.len() + 1 {
                    return Err(perr(
                        path,
                        lineno,
                        "\\end\\",
                        format!("missing \\{next}-grams: section"),
                    ));
                }
                ended = true;
                cur = None;
                continue;
            }
            let o = rest
                .strip_suffix("-grams:")
                .and_then(|d| d.parse::<usize>().ok())
                .ok_or_else(|| {
                    perr(
                        path,
                        lineno,
                        &section_name(in_data, cur),
                        format!("unrecognized section header {line:?}"),
                    )
                })?;
            let next = cur.map_or(1, |prev| prev + 1);
            if o != next {
                return Err(perr(
                    path,
                    lineno,
                    &section_name(in_data, cur),
                    format!("expected \\{next}-grams: section, got \\{o}-grams:"),
                ));
            }
            if o > declared.len() {
                return Err(perr(
                    path,
                    lineno,
                    &section_name(in_data, cur),
                    format!("\\{o}-grams: section was not declared in \\data\\"),
                ));
            }
            if o > 1 {
                probs.push(Vec::with_capacity(declared[o - 1]));
            }
            cur = Some(o);
            found = 0;
            continue;
        }
        match cur {
            None => {
                // \data\ counts
                let rest = line.strip_prefix("ngram").map(str::trim).ok_or_else(|| {
                    perr(
                        path,
                        lineno,
                        "\\data\\ section",
                        format!("expected `ngram N=count`, got {line:?}"),
                    )
                })?;
                let (o, c) = rest
                    .split_once('=')
                    .and_then(|(o, c)| Some((o.trim().parse::<usize>().ok()?, c.trim().parse::<usize>().ok()?)))
                    .ok_or_else(|| {
                        perr(
                            path,
                            lineno,
                            "\\data\\ section",
                            format!("expected `ngram N=count`, got {line:?}"),
                        )
                    })?;
                if o != declared.len() + 1 {
                    return Err(perr(
                        path,
                        lineno,
                        "\\data\\ section",
                        format!("expected count for order {}, got order {o}", declared.len() + 1),
                    ));
                }
                declared.push(c);
            }
            Some(o) => {
                let sec = format!("\\{o}-grams\\ section");
                let fields: Vec<&str> = line.split_whitespace().collect();
                let max_order = declared.len();
                let has_bow = if fields.len() == o + 1 {
                    false
                } else if fields.len() == o + 2 && o < max_order {
                    true
                } else {
                    return Err(perr(
                        path,
                        lineno,
                        &sec,
                        format!("expected {} or {} fields, got {}", o + 1, o + 2, fields.len()),
                    ));
                };
                let lp10: f64 = fields[0].parse().map_err(|_| {
                    perr(path, lineno, &sec, format!("invalid log probability {:?}", fields[0]))
                })?;
                let bow10: Option<f64> = if has_bow {
                    Some(fields[o + 1].parse().map_err(|_| {
                        perr(path, lineno, &sec, format!("invalid backoff weight {:?}", fields[o + 1]))
                    })?)
                } else {
                    None
                };
                let lp2 = lp10 / LOG10_2;
                let bow2 = bow10.map(|b| b / LOG10_2);
                if o == 1 {
                    unigrams.push((fields[1].to_owned(), lp2, bow2));
                } else {
                    let v = vocab.as_ref().expect("vocabulary fixed after 1-grams");
                    let gram: Vec<Token> = fields[1..=o].iter().map(|w| token_of(v, w)).collect();
                    probs[o - 1].push((gram.clone(), lp2));
                    if let Some(b) = bow2 {
                        bows.push((gram, b));
                    }
                }
                found += 1;
            }
        }
    }
    if !ended {
        return Err(perr(
            path,
            last_line + 1,
            &section_name(in_data, cur),
            "missing \\end\\ marker".into(),
        ));
    }
    if declared.is_empty() {
        return Err(perr(path, last_line, "\\data\\ section", "no ngram counts declared".into()));
    }
    let vocab = vocab.expect("vocabulary fixed after 1-grams");
    NGramModel::from_tables(vocab, declared.len(), probs, bows)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn token_of(vocab: &Vocabulary, word: &str) -> Token {
    match word {
        "<s>" => Token::Bos,
        "</s>" => Token::Eos,
        _ => Token::Word(vocab.get_or_unk(word)),
    }
}

/// Build the vocabulary from a completed unigram section and convert its
/// raw rows to token-keyed tables.
#[allow(clippy::type_complexity)]
fn finish_unigrams(
    path: &Path,
    lineno: usize,
    stem: &str,
    unigrams: &[(String, f64, Option<f64>)],
    order: usize,
) -> Result<(Vocabulary, Vec<(Vec<Token>, f64)>, Vec<(Vec<Token>, f64)>), CliError> {
    let vocab = Vocabulary::from_words(
        &format!("arpa:{stem}"),
        1,
        unigrams
            .iter()
            .map(|(w, _, _)| w.as_str())
            .filter(|w| *w != "<s>" && *w != "</s>"),
    );
    let mut probs = Vec::with_capacity(unigrams.len());
    let mut bows = Vec::new();
    for (word, lp2, bow2) in unigrams {
        let tok = token_of(&vocab, word);
        probs.push((vec![tok], *lp2));
        if let Some(b) = *bow2 {
            if order == 1 {
                return Err(perr(
                    path,
                    lineno,
                    "\\1-grams\\ section",
                    "backoff weight in a unigram-only model".into(),
                ));
            }
            bows.push((vec![tok], b));
        }
    }
    Ok((vocab, probs, bows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use psylm_core::corpus::{tokenize, TokenizeOptions};
    use psylm_core::ngram::KnVariant;

    fn toy_model(order: usize) -> NGramModel {
        let text = "the dog chased the cat\n\
                    the cat saw the dog\n\
                    a dog and a cat ran\n\
                    the dog ran\n\
                    the cat slept\n\
                    a cat chased a mouse\n";
        let corpus = tokenize(text, TokenizeOptions::default()).unwrap();
        NGramModel::train_kn(&corpus, order, KnVariant::Modified).unwrap()
    }

    fn dir() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn round_trip_matches_conditional_probabilities() {
        for order in [2, 3] {
            let model = toy_model(order);
            let d = dir();
            let path = d.path().join("m.arpa");
            write_arpa(&path, &model).unwrap();
            let back = read_arpa(&path).unwrap();
            assert_eq!(back.order(), order);

            for o in 1..=order {
                for (gram, _) in model.grams(o) {
                    let (&word, ctx) = gram.split_last().unwrap();
                    // same ids on both sides: the reader rebuilds the
                    // vocabulary in file order, which is id order
                    let p = model.log2_cond_prob(word, ctx).exp2();
                    let q = back.log2_cond_prob(word, ctx).exp2();
                    assert!(
                        (p - q).abs() <= 1e-5 * p,
                        "order {o} gram {gram:?}: {p} vs {q}"
                    );
                }
            }
        }
    }

    #[test]
    fn re_export_is_byte_identical() {
        let model = toy_model(3);
        let d = dir();
        let first = d.path().join("m.arpa");
        write_arpa(&first, &model).unwrap();
        let back = read_arpa(&first).unwrap();
        let second = d.path().join("m2.arpa");
        write_arpa(&second, &back).unwrap();
        assert_eq!(
            std::fs::read(&first).unwrap(),
            std::fs::read(&second).unwrap()
        );
    }

    #[test]
    fn bos_is_written_as_sentinel_and_skipped_on_import() {
        let model = toy_model(2);
        let text = to_arpa_string(&model);
        assert!(text.contains("-99.000000\t<s>"));
        let declared: usize = text
            .lines()
            .find_map(|l| l.strip_prefix("ngram 1="))
            .unwrap()
            .parse()
            .unwrap();
        assert_eq!(declared, model.grams(1).count() + 1);
    }

    #[test]
    fn missing_end_marker_is_reported_with_section() {
        let model = toy_model(2);
        let mut text = to_arpa_string(&model);
        text.truncate(text.find("\\end\\").unwrap());
        let d = dir();
        let path = d.path().join("m.arpa");
        std::fs::write(&path, &text).unwrap();
        match read_arpa(&path).unwrap_err() {
            CliError::Parse { message, .. } => {
                assert!(message.contains("\\end\\"), "{message}");
                assert!(message.contains("2-grams"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn count_mismatch_is_reported_with_line() {
        let d = dir();
        let path = d.path().join("m.arpa");
        std::fs::write(
            &path,
            "\\data\\\nngram 1=3\n\n\\1-grams:\n-0.5\tthe\n-0.9\t</s>\n\n\\end\\\n",
        )
        .unwrap();
        match read_arpa(&path).unwrap_err() {
            CliError::Parse { line, message, .. } => {
                assert_eq!(line, 8);
                assert!(message.contains("declared 3"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_gram_line_is_reported() {
        let d = dir();
        let path = d.path().join("m.arpa");
        std::fs::write(
            &path,
            "\\data\\\nngram 1=1\n\n\\1-grams:\n-0.5\tthe\textra\tfields\n\n\\end\\\n",
        )
        .unwrap();
        match read_arpa(&path).unwrap_err() {
            CliError::Parse { line, message, .. } => {
                assert_eq!(line, 5);
                assert!(message.contains("fields"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn out_of_order_sections_are_rejected() {
        let d = dir();
        let path = d.path().join("m.arpa");
        std::fs::write(
            &path,
            "\\data\\\nngram 1=1\nngram 2=1\n\n\\2-grams:\n-0.5\tthe dog\n\\end\\\n",
        )
        .unwrap();
        match read_arpa(&path).unwrap_err() {
            CliError::Parse { message, .. } => {
                assert!(message.contains("expected \\1-grams:"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
