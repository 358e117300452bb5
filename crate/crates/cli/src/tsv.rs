//! Tab-separated formats the subcommands exchange, plus the partial-effect
//! curve CSV.
//!
//! All numeric output goes through [`fmt_f64`] (shortest round-trip), so a
//! written file parses back to identical bits and repeated runs are
//! byte-identical.

use std::cell::Cell;
use std::path::Path;

use psylm_core::corpus::RtRecord;
use psylm_core::meta::{ModelRecord, ResidualPair};
use psylm_core::regression::PartialEffect;
use psylm_core::sgtest::SgResult;
use psylm_core::surprisal::{aggregate_subwords, SubwordRow, TableMeta};
use psylm_core::{FrequencyTable, RtDataset, SurprisalTable};

use crate::{fmt_f64, read_file, write_file, CliError};

struct Header<'a> {
    path: &'a Path,
    names: Vec<&'a str>,
}

impl<'a> Header<'a> {
    fn parse(path: &'a Path, line: &'a str) -> Header<'a> {
        Header {
            path,
            names: line.split('\t').map(str::trim).collect(),
        }
    }

    fn require(&self, name: &str) -> Result<usize, CliError> {
        self.optional(name).ok_or_else(|| {
            CliError::parse(self.path, 1, format!("missing required column `{name}`"))
        })
    }

    fn optional(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| *n == name)
    }
}

fn field<'f>(
    path: &Path,
    lineno: usize,
    fields: &[&'f str],
    idx: usize,
) -> Result<&'f str, CliError> {
    fields.get(idx).copied().ok_or_else(|| {
        CliError::parse(
            path,
            lineno,
            format!("expected at least {} columns, got {}", idx + 1, fields.len()),
        )
    })
}

fn parse_num<T: std::str::FromStr>(
    path: &Path,
    lineno: usize,
    raw: &str,
    what: &str,
) -> Result<T, CliError> {
    raw.trim().parse().map_err(|_| {
        CliError::parse(path, lineno, format!("invalid {what}: {raw:?}"))
    })
}

/// Iterate data lines: skips blanks, hands the first non-blank line to
/// `on_header`, the rest to `on_row`.
fn for_each_row(
    path: &Path,
    text: &str,
    mut on_header: impl FnMut(usize, &str) -> Result<(), CliError>,
    mut on_row: impl FnMut(usize, &[&str]) -> Result<(), CliError>,
) -> Result<(), CliError> {
    let mut seen_header = false;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        if !seen_header {
            on_header(lineno, line)?;
            seen_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        on_row(lineno, &fields)?;
    }
    if !seen_header {
        return Err(CliError::parse(path, 1, "empty file"));
    }
    Ok(())
}

/// Reading-time TSV: `item_id  word_index  word  rt` with an optional
/// `subject` column for per-subject data.
pub fn read_rt(path: &Path) -> Result<Vec<RtRecord>, CliError> {
    let text = read_file(path)?;
    let cols = Cell::new(None);
    let mut records = Vec::new();
    for_each_row(
        path,
        &text,
        |_, line| {
            let h = Header::parse(path, line);
            cols.set(Some((
                h.require("item_id")?,
                h.require("word_index")?,
                h.require("word")?,
                h.require("rt")?,
                h.optional("subject"),
            )));
            Ok(())
        },
        |lineno, fields| {
            let (ii, wi, wo, rt, subj) = cols.get().unwrap();
            records.push(RtRecord {
                item_id: field(path, lineno, fields, ii)?.to_owned(),
                word_index: parse_num(path, lineno, field(path, lineno, fields, wi)?, "word_index")?,
                word_form: field(path, lineno, fields, wo)?.to_owned(),
                rt: parse_num(path, lineno, field(path, lineno, fields, rt)?, "rt")?,
                subject_id: subj
                    .and_then(|j| fields.get(j))
                    .map(|s| s.trim())
                    .filter(|s| !s.is_empty())
                    .map(str::to_owned),
            });
            Ok(())
        },
    )?;
    if records.is_empty() {
        return Err(CliError::parse(path, 1, "no reading-time rows"));
    }
    Ok(records)
}

/// Write an averaged reading-time dataset (one row per item/word).
pub fn write_rt(path: &Path, data: &RtDataset) -> Result<(), CliError> {
    let mut out = String::from("item_id\tword_index\tword\trt\n");
    for (item_id, word_index, rec) in data.iter() {
        out.push_str(&format!(
            "{item_id}\t{word_index}\t{}\t{}\n",
            rec.word_form,
            fmt_f64(rec.rt)
        ));
    }
    write_file(path, &out)
}

/// Frequency-norm TSV: `word  count`.
pub fn read_freq(path: &Path) -> Result<FrequencyTable, CliError> {
    let text = read_file(path)?;
    let cols = Cell::new(None);
    let mut counts: Vec<(String, u64)> = Vec::new();
    for_each_row(
        path,
        &text,
        |_, line| {
            let h = Header::parse(path, line);
            cols.set(Some((h.require("word")?, h.require("count")?)));
            Ok(())
        },
        |lineno, fields| {
            let (wc, cc) = cols.get().unwrap();
            let word = field(path, lineno, fields, wc)?.to_owned();
            let count = parse_num(path, lineno, field(path, lineno, fields, cc)?, "count")?;
            if counts.iter().any(|(w, _)| *w == word) {
                return Err(CliError::parse(path, lineno, format!("duplicate word {word:?}")));
            }
            counts.push((word, count));
            Ok(())
        },
    )?;
    if counts.is_empty() {
        return Err(CliError::parse(path, 1, "no frequency rows"));
    }
    Ok(FrequencyTable::from_counts(counts))
}

/// Write frequency norms in the same `word  count` shape `read_freq` expects.
pub fn write_freq(path: &Path, freq: &FrequencyTable) -> Result<(), CliError> {
    let mut out = String::from("word\tcount\n");
    for (word, count) in freq.iter() {
        out.push_str(&format!("{word}\t{count}\n"));
    }
    write_file(path, &out)
}

/// Surprisal TSV.
///
/// Leading `# key=value` lines carry table metadata (`model_id` and
/// `vocab_group` required, `architecture` optional). Data columns are
/// `item_id  word_index  token  surprisal`; when a `subword_index` column is
/// present the rows are subword-level and get aggregated to words by the
/// chain rule.
pub fn read_surprisal(path: &Path) -> Result<SurprisalTable, CliError> {
    let text = read_file(path)?;
    let mut model_id: Option<String> = None;
    let mut vocab_group: Option<String> = None;
    let mut architecture: Option<String> = None;

    let mut header_line = 0usize;
    let mut body = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if header_line == 0 {
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim();
                let (key, value) = rest.split_once('=').ok_or_else(|| {
                    CliError::parse(path, lineno, format!("metadata line is not key=value: {rest:?}"))
                })?;
                let slot = match key.trim() {
                    "model_id" => &mut model_id,
                    "vocab_group" => &mut vocab_group,
                    "architecture" => &mut architecture,
                    other => {
                        return Err(CliError::parse(
                            path,
                            lineno,
                            format!("unknown metadata key `{other}`"),
                        ))
                    }
                };
                *slot = Some(value.trim().to_owned());
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            header_line = lineno;
        }
        body.push((lineno, line));
    }
    let first = body.first().copied().map(|(l, _)| l).unwrap_or(1);
    let model_id = model_id
        .ok_or_else(|| CliError::parse(path, first, "missing `# model_id=` metadata line"))?;
    let vocab_group = vocab_group
        .ok_or_else(|| CliError::parse(path, first, "missing `# vocab_group=` metadata line"))?;
    let mut meta = TableMeta::new(&model_id, &vocab_group);
    if let Some(arch) = &architecture {
        meta = meta.with_architecture(arch);
    }

    let body_text: String = body
        .iter()
        .map(|(_, l)| format!("{l}\n"))
        .collect();
    let offset = first.saturating_sub(1);

    let cols = Cell::new(None);
    let mut table = SurprisalTable::new(meta.clone());
    let mut subrows: Vec<SubwordRow> = Vec::new();
    let mut seen_sub = std::collections::BTreeSet::new();
    for_each_row(
        path,
        &body_text,
        |_, line| {
            let h = Header::parse(path, line);
            cols.set(Some((
                h.require("item_id")?,
                h.require("word_index")?,
                h.require("token")?,
                h.require("surprisal")?,
                h.optional("subword_index"),
            )));
            Ok(())
        },
        |rel, fields| {
            let lineno = rel + offset;
            let (ii, wi, tk, su, sub) = cols.get().unwrap();
            let item_id = field(path, lineno, fields, ii)?;
            let word_index: u32 =
                parse_num(path, lineno, field(path, lineno, fields, wi)?, "word_index")?;
            let token = field(path, lineno, fields, tk)?;
            let bits: f64 =
                parse_num(path, lineno, field(path, lineno, fields, su)?, "surprisal")?;
            if !bits.is_finite() || bits < 0.0 {
                return Err(CliError::parse(
                    path,
                    lineno,
                    format!("surprisal must be finite and non-negative, got {bits}"),
                ));
            }
            match sub {
                Some(si) => {
                    let subword_index: u32 =
                        parse_num(path, lineno, field(path, lineno, fields, si)?, "subword_index")?;
                    if !seen_sub.insert((item_id.to_owned(), word_index, subword_index)) {
                        return Err(CliError::parse(
                            path,
                            lineno,
                            format!("duplicate subword entry for item {item_id:?} word {word_index} subword {subword_index}"),
                        ));
                    }
                    subrows.push(SubwordRow {
                        item_id: item_id.to_owned(),
                        word_index,
                        subword_index,
                        token: token.to_owned(),
                        bits,
                    });
                }
                None => {
                    table
                        .try_insert(item_id, word_index, token, bits)
                        .map_err(|e| CliError::parse(path, lineno, e.to_string()))?;
                }
            }
            Ok(())
        },
    )?;
    if !subrows.is_empty() {
        table = aggregate_subwords(&subrows, meta)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    }
    if table.is_empty() {
        return Err(CliError::parse(path, first, "no surprisal rows"));
    }
    Ok(table)
}

/// Write a word-level surprisal table.
pub fn write_surprisal(path: &Path, table: &SurprisalTable) -> Result<(), CliError> {
    let meta = table.meta();
    let mut out = format!(
        "# model_id={}\n# vocab_group={}\n# architecture={}\nitem_id\tword_index\ttoken\tsurprisal\n",
        meta.model_id, meta.vocab_group, meta.architecture
    );
    for (item_id, word_index, token, bits) in table.iter() {
        out.push_str(&format!(
            "{item_id}\t{word_index}\t{token}\t{}\n",
            fmt_f64(bits)
        ));
    }
    write_file(path, &out)
}

/// Model-record TSV for the meta analyses: one row per trained model per
/// test corpus.
pub fn read_records(path: &Path) -> Result<Vec<ModelRecord>, CliError> {
    let text = read_file(path)?;
    let cols = Cell::new(None);
    let mut records = Vec::new();
    for_each_row(
        path,
        &text,
        |_, line| {
            let h = Header::parse(path, line);
            cols.set(Some([
                h.require("model_id")?,
                h.require("architecture")?,
                h.require("training_corpus")?,
                h.require("test_corpus")?,
                h.require("vocab_group")?,
                h.require("seed")?,
                h.require("ppl")?,
                h.require("dll")?,
                h.require("sg")?,
            ]));
            Ok(())
        },
        |lineno, fields| {
            let c = cols.get().unwrap();
            records.push(ModelRecord {
                model_id: field(path, lineno, fields, c[0])?.to_owned(),
                architecture: field(path, lineno, fields, c[1])?.to_owned(),
                training_corpus: field(path, lineno, fields, c[2])?.to_owned(),
                test_corpus: field(path, lineno, fields, c[3])?.to_owned(),
                vocab_group: field(path, lineno, fields, c[4])?.to_owned(),
                seed: parse_num(path, lineno, field(path, lineno, fields, c[5])?, "seed")?,
                ppl: parse_num(path, lineno, field(path, lineno, fields, c[6])?, "ppl")?,
                dll: parse_num(path, lineno, field(path, lineno, fields, c[7])?, "dll")?,
                sg: parse_num(path, lineno, field(path, lineno, fields, c[8])?, "sg")?,
            });
            Ok(())
        },
    )?;
    if records.is_empty() {
        return Err(CliError::parse(path, 1, "no model records"));
    }
    Ok(records)
}

/// Residualized (sg, dll) pairs, one row per model record.
pub fn write_pairs(path: &Path, pairs: &[ResidualPair]) -> Result<(), CliError> {
    let mut out = String::from("model_id\ttest_corpus\tvocab_group\tsg_resid\tdll_resid\n");
    for p in pairs {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            p.model_id,
            p.test_corpus,
            p.vocab_group,
            fmt_f64(p.x_resid),
            fmt_f64(p.y_resid)
        ));
    }
    write_file(path, &out)
}

/// Per-test accuracies as TSV.
pub fn write_sg_tsv(path: &Path, result: &SgResult) -> Result<(), CliError> {
    let mut out = String::from("test\taccuracy\n");
    for (test, acc) in &result.by_test_accuracy {
        out.push_str(&format!("{test}\t{}\n", fmt_f64(*acc)));
    }
    write_file(path, &out)
}

/// One point of a partial-effect curve.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub x: f64,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Write a partial-effect curve as `x,estimate,lower,upper` CSV.
pub fn write_curve(path: &Path, effect: &PartialEffect) -> Result<(), CliError> {
    let mut out = String::from("x,estimate,lower,upper\n");
    for i in 0..effect.grid.len() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            fmt_f64(effect.grid[i]),
            fmt_f64(effect.estimate[i]),
            fmt_f64(effect.lower[i]),
            fmt_f64(effect.upper[i])
        ));
    }
    write_file(path, &out)
}

/// Read a partial-effect curve CSV.
pub fn read_curve(path: &Path) -> Result<Vec<CurvePoint>, CliError> {
    let text = read_file(path)?;
    let mut points = Vec::new();
    let mut seen_header = false;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        if !seen_header {
            if line.trim() != "x,estimate,lower,upper" {
                return Err(CliError::parse(
                    path,
                    lineno,
                    "expected header `x,estimate,lower,upper`",
                ));
            }
            seen_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(CliError::parse(
                path,
                lineno,
                format!("expected 4 columns, got {}", fields.len()),
            ));
        }
        points.push(CurvePoint {
            x: parse_num(path, lineno, fields[0], "x")?,
            estimate: parse_num(path, lineno, fields[1], "estimate")?,
            lower: parse_num(path, lineno, fields[2], "lower")?,
            upper: parse_num(path, lineno, fields[3], "upper")?,
        });
    }
    if points.is_empty() {
        return Err(CliError::parse(path, 1, "no curve points"));
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use psylm_core::corpus::Modality;

    fn tmp(name: &str, contents: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(name);
        std::fs::write(&path, contents).unwrap();
        (dir, path)
    }

    #[test]
    fn rt_round_trip_with_subjects() {
        let (_d, path) = tmp(
            "rt.tsv",
            "item_id\tword_index\tword\trt\tsubject\n\
             i1\t0\tthe\t210.5\ts1\n\
             i1\t0\tthe\t195.5\ts2\n\
             i1\t1\tdog\t260\ts1\n\
             i1\t1\tdog\t240\ts2\n",
        );
        let records = read_rt(&path).unwrap();
        assert_eq!(records.len(), 4);
        assert_eq!(records[0].subject_id.as_deref(), Some("s1"));
        let data = RtDataset::from_records(records, Modality::EyeTracking).unwrap();
        assert_eq!(data.get("i1", 0).unwrap().rt, 203.0);

        let out = path.with_extension("out.tsv");
        write_rt(&out, &data).unwrap();
        let back = read_rt(&out).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1].rt, 250.0);
        assert_eq!(back[1].subject_id, None);
    }

    #[test]
    fn rt_missing_column_is_a_parse_error() {
        let (_d, path) = tmp("rt.tsv", "item_id\tword\trt\ni1\tthe\t200\n");
        let err = read_rt(&path).unwrap_err();
        match err {
            CliError::Parse { line, ref message, .. } => {
                assert_eq!(line, 1);
                assert!(message.contains("word_index"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn surprisal_metadata_and_rows_round_trip() {
        let (_d, path) = tmp(
            "surp.tsv",
            "# model_id=kn5-demo\n# vocab_group=bllip-lg\n# architecture=ngram\n\
             item_id\tword_index\ttoken\tsurprisal\n\
             i1\t0\tthe\t2.125\n\
             i1\t1\tdog\t7.0625\n",
        );
        let table = read_surprisal(&path).unwrap();
        assert_eq!(table.model_id(), "kn5-demo");
        assert_eq!(table.vocab_group(), "bllip-lg");
        assert_eq!(table.meta().architecture, "ngram");
        assert_eq!(table.get("i1", 1), Some(7.0625));

        let out = path.with_extension("copy.tsv");
        write_surprisal(&out, &table).unwrap();
        assert_eq!(read_surprisal(&out).unwrap(), table);
        // byte-identical re-serialization
        write_surprisal(&path, &read_surprisal(&out).unwrap()).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&out).unwrap()
        );
    }

    #[test]
    fn negative_surprisal_is_a_parse_error_with_line() {
        let (_d, path) = tmp(
            "surp.tsv",
            "# model_id=m\n# vocab_group=g\n\
             item_id\tword_index\ttoken\tsurprisal\n\
             i1\t0\tthe\t2.0\n\
             i1\t1\tdog\t-1.0\n",
        );
        match read_surprisal(&path).unwrap_err() {
            CliError::Parse { line, message, .. } => {
                assert_eq!(line, 5);
                assert!(message.contains("non-negative"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_surprisal_entry_is_a_parse_error() {
        let (_d, path) = tmp(
            "surp.tsv",
            "# model_id=m\n# vocab_group=g\n\
             item_id\tword_index\ttoken\tsurprisal\n\
             i1\t0\tthe\t2.0\n\
             i1\t0\tthe\t2.5\n",
        );
        match read_surprisal(&path).unwrap_err() {
            CliError::Parse { line, message, .. } => {
                assert_eq!(line, 5);
                assert!(message.contains("duplicate"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_metadata_is_a_parse_error() {
        let (_d, path) = tmp(
            "surp.tsv",
            "item_id\tword_index\ttoken\tsurprisal\ni1\t0\tthe\t2.0\n",
        );
        match read_surprisal(&path).unwrap_err() {
            CliError::Parse { message, .. } => {
                assert!(message.contains("model_id"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn subword_rows_aggregate_to_words() {
        let (_d, path) = tmp(
            "surp.tsv",
            "# model_id=bpe\n# vocab_group=g\n\
             item_id\tword_index\tsubword_index\ttoken\tsurprisal\n\
             i1\t0\t0\tun\t3.5\n\
             i1\t0\t1\tlock\t1.25\n\
             i1\t1\t0\tit\t2.0\n",
        );
        let table = read_surprisal(&path).unwrap();
        assert_eq!(table.get("i1", 0), Some(4.75));
        assert_eq!(table.token("i1", 0), Some("unlock"));
        assert_eq!(table.len(), 2);
    }

    #[test]
    fn subword_gap_is_a_data_error() {
        let (_d, path) = tmp(
            "surp.tsv",
            "# model_id=bpe\n# vocab_group=g\n\
             item_id\tword_index\tsubword_index\ttoken\tsurprisal\n\
             i1\t0\t1\tlock\t1.25\n",
        );
        match read_surprisal(&path).unwrap_err() {
            CliError::Data(message) => assert!(message.contains("contiguous"), "{message}"),
            other => panic!("expected data error, got {other:?}"),
        }
    }

    #[test]
    fn freq_and_records_parse() {
        let (_d, fpath) = tmp("freq.tsv", "word\tcount\nthe\t120\ndog\t7\n");
        let freq = read_freq(&fpath).unwrap();
        assert_eq!(freq.count("the"), 120);

        let (_d2, rpath) = tmp(
            "records.tsv",
            "model_id\tarchitecture\ttraining_corpus\ttest_corpus\tvocab_group\tseed\tppl\tdll\tsg\n\
             m1\tngram\tbllip-lg\tdundee\tbllip-lg\t1\t152.5\t0.011\t0.55\n",
        );
        let records = read_records(&rpath).unwrap();
        assert_eq!(records[0].seed, 1);
        assert_eq!(records[0].ppl, 152.5);
    }

    #[test]
    fn curve_round_trip() {
        let effect = PartialEffect {
            term: "s(surp_0)".into(),
            grid: vec![0.0, 1.5, 3.0],
            estimate: vec![-2.0, 0.25, 2.5],
            lower: vec![-3.0, -0.5, 1.0],
            upper: vec![-1.0, 1.0, 4.0],
            extrapolated: vec![false, false, false],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("curve.csv");
        write_curve(&path, &effect).unwrap();
        let points = read_curve(&path).unwrap();
        assert_eq!(points.len(), 3);
        assert_eq!(points[1].x, 1.5);
        assert_eq!(points[2].upper, 4.0);
    }
}
