//! End-to-end tests of the psylm binary: exit codes, determinism, and the
//! shape of what each subcommand leaves on disk.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_psylm"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn stderr_str(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write(dir: &Path, name: &str, content: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, content).unwrap();
    path
}

fn read_bytes(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

fn manifest_of(primary: &Path) -> PathBuf {
    let mut name = primary.file_name().unwrap().to_os_string();
    name.push(".manifest.json");
    primary.with_file_name(name)
}

const TINY_CORPUS: &str = "\
the cat sat on the mat
the dog sat on the rug
a cat saw the dog
the dog saw a cat
a dog sat on the mat
the cat saw the rug
cats sit on mats
dogs sit on rugs
the cat sat on the rug
a dog saw the cat
";

/// Trains on a fixed corpus with relative paths (cwd = `dir`), so output
/// and manifest bytes are comparable across directories.
fn train_tiny(dir: &Path, order: &str) -> PathBuf {
    write(dir, "corpus.txt", TINY_CORPUS);
    let out = bin()
        .current_dir(dir)
        .args(["train-ngram", "corpus.txt", "-o", "model.arpa", "--order", order])
        .output()
        .expect("binary runs");
    assert_eq!(code(&out), 0, "train failed: {}", stderr_str(&out));
    dir.join("model.arpa")
}

#[test]
fn help_and_version_exit_zero() {
    for args in [&["--help"][..], &["--version"], &["train-ngram", "--help"]] {
        let out = run(args);
        assert_eq!(code(&out), 0, "{args:?}");
    }
}

#[test]
fn bad_usage_exits_one() {
    let dir = TempDir::new().unwrap();
    let surp = write(
        dir.path(),
        "s.tsv",
        "# model_id=m\n# vocab_group=g\nitem_id\tword_index\ttoken\tsurprisal\na\t0\tx\t1.0\n",
    );
    let cases: Vec<Vec<&str>> = vec![
        vec![],
        vec!["no-such-subcommand"],
        vec!["train-ngram"],
        vec!["train-ngram", "corpus.txt", "-o", "m.arpa", "--order", "two"],
        vec!["perplexity", "--surprisal", surp.to_str().unwrap(), "--text", "t.txt"],
        vec!["perplexity"],
        vec!["perplexity", "--text", "t.txt"], // --text without --model
        vec!["eval-ppp", "--rt", "r", "--surprisal", "s", "--freq", "f"], // no modality
    ];
    for args in cases {
        let out = run(&args);
        assert_eq!(code(&out), 1, "{args:?}: {}", stderr_str(&out));
    }
}

#[test]
fn curve_out_without_gam_is_usage_error() {
    let out = run(&[
        "eval-ppp", "--rt", "r.tsv", "--surprisal", "s.tsv", "--freq", "f.tsv",
        "--modality", "spr", "--regression", "linear", "--curve-out", "c.csv",
    ]);
    assert_eq!(code(&out), 1);
    assert!(stderr_str(&out).contains("--curve-out"), "{}", stderr_str(&out));
}

#[test]
fn missing_input_file_exits_two() {
    let out = run(&["train-ngram", "/nonexistent/corpus.txt", "-o", "/tmp/x.arpa"]);
    assert_eq!(code(&out), 2);
    assert!(stderr_str(&out).contains("/nonexistent/corpus.txt"));
}

#[test]
fn malformed_arpa_exits_two_with_location() {
    let dir = TempDir::new().unwrap();
    let bad = write(dir.path(), "bad.arpa", "\\data\\\nngram 1=2\n\n\\1-grams:\nnot-a-logprob\tw\n");
    let text = write(dir.path(), "t.txt", "w\n");
    let out = run(&[
        "perplexity", "--model", bad.to_str().unwrap(), "--text", text.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    let err = stderr_str(&out);
    assert!(err.contains("bad.arpa") && err.contains(":5"), "{err}");
}

#[test]
fn negative_surprisal_in_table_exits_two() {
    let dir = TempDir::new().unwrap();
    let surp = write(
        dir.path(),
        "neg.tsv",
        "# model_id=m\n# vocab_group=g\nitem_id\tword_index\ttoken\tsurprisal\na\t0\tx\t-1.0\n",
    );
    let out = run(&["perplexity", "--surprisal", surp.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stderr_str(&out).contains(":4"), "{}", stderr_str(&out));
}

#[test]
fn train_is_deterministic_and_manifest_checks_out() {
    let d1 = TempDir::new().unwrap();
    let d2 = TempDir::new().unwrap();
    let m1 = train_tiny(d1.path(), "3");
    let m2 = train_tiny(d2.path(), "3");
    assert_eq!(read_bytes(&m1), read_bytes(&m2), "ARPA output differs across runs");
    assert_eq!(
        read_bytes(&manifest_of(&m1)),
        read_bytes(&manifest_of(&m2)),
        "manifests differ across runs"
    );

    let manifest: Value = serde_json::from_slice(&read_bytes(&manifest_of(&m1))).unwrap();
    assert_eq!(manifest["command"], "train-ngram");
    assert_eq!(manifest["flags"]["order"], "3");
    let hash_of = |path: &Path| -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update(read_bytes(path));
        format!("{:x}", h.finalize())
    };
    assert_eq!(
        manifest["inputs"][0]["sha256"].as_str().unwrap(),
        hash_of(&d1.path().join("corpus.txt"))
    );
    assert_eq!(manifest["outputs"][0]["sha256"].as_str().unwrap(), hash_of(&m1));
    assert!(!read_bytes(&manifest_of(&m1)).windows(4).any(|w| w == b"time"));
}

#[test]
fn perplexity_of_training_text_is_sane() {
    let dir = TempDir::new().unwrap();
    let model = train_tiny(dir.path(), "3");
    let text = dir.path().join("corpus.txt");
    let out = run(&[
        "perplexity", "--model", model.to_str().unwrap(), "--text", text.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr_str(&out));
    let report = stdout_json(&out);
    let ppl = report["ppl"].as_f64().unwrap();
    assert!(ppl > 1.0 && ppl < 20.0, "ppl {ppl}");
    assert_eq!(report["oov_tokens"], 0);
    // 2^(mean bits) identity, straight off the report
    let mean = report["mean_surprisal_bits"].as_f64().unwrap();
    assert!((ppl - mean.exp2()).abs() / ppl < 1e-12);
}

#[test]
fn surprisal_table_roundtrips_through_perplexity() {
    let dir = TempDir::new().unwrap();
    let model = train_tiny(dir.path(), "3");
    let text = dir.path().join("corpus.txt");
    let surp = dir.path().join("surp.tsv");
    let out = run(&[
        "surprisal", "--model", model.to_str().unwrap(), "--text", text.to_str().unwrap(),
        "-o", surp.to_str().unwrap(), "--model-id", "tiny", "--vocab-group", "toy",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr_str(&out));
    let head = String::from_utf8_lossy(&read_bytes(&surp)).into_owned();
    assert!(head.starts_with("# model_id=tiny\n# vocab_group=toy\n# architecture=ngram\n"));

    // Perplexity from the table matches perplexity of the text, minus the
    // </s> events the table does not carry.
    let out = run(&["perplexity", "--surprisal", surp.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let report = stdout_json(&out);
    assert_eq!(report["token_count"], 52); // 52 words, no </s>
    assert!(report.get("oov_tokens").is_none());
}

#[test]
fn simulate_is_seeded() {
    let dir = TempDir::new().unwrap();
    let model = train_tiny(dir.path(), "3");
    let text = dir.path().join("corpus.txt");
    let surp = dir.path().join("surp.tsv");
    assert_eq!(
        code(&run(&[
            "surprisal", "--model", model.to_str().unwrap(), "--text", text.to_str().unwrap(),
            "-o", surp.to_str().unwrap(),
        ])),
        0
    );
    let freq = write(
        dir.path(),
        "freq.tsv",
        "word\tcount\na\t4\ncat\t5\ncats\t1\ndog\t5\ndogs\t1\nmat\t2\nmats\t1\non\t7\nrug\t3\nrugs\t1\nsat\t4\nsaw\t4\nsit\t2\nthe\t12\n",
    );
    let mk = |name: &str, seed: &str| {
        let out_path = dir.path().join(name);
        let out = run(&[
            "simulate", "--surprisal", surp.to_str().unwrap(), "--freq", freq.to_str().unwrap(),
            "-o", out_path.to_str().unwrap(), "--seed", seed, "--delta", "-2.5",
        ]);
        assert_eq!(code(&out), 0, "{}", stderr_str(&out));
        out_path
    };
    let a = mk("rt_a.tsv", "9");
    let b = mk("rt_b.tsv", "9");
    let c = mk("rt_c.tsv", "10");
    assert_eq!(read_bytes(&a), read_bytes(&b));
    assert_ne!(read_bytes(&a), read_bytes(&c));
}

#[test]
fn sg_score_reports_exact_accuracy() {
    let dir = TempDir::new().unwrap();
    let suite = write(
        dir.path(),
        "suite.json",
        r#"{
  "tests": [
    {
      "name": "t",
      "items": [
        {
          "item_number": 1,
          "conditions": [
            { "name": "good", "regions": [{ "name": "r", "tokens": ["x"] }] },
            { "name": "bad", "regions": [{ "name": "r", "tokens": ["x"] }] }
          ]
        },
        {
          "item_number": 2,
          "conditions": [
            { "name": "good", "regions": [{ "name": "r", "tokens": ["x"] }] },
            { "name": "bad", "regions": [{ "name": "r", "tokens": ["x"] }] }
          ]
        }
      ],
      "predictions": [
        {
          "lesser": { "condition": "good", "region": "r" },
          "greater": { "condition": "bad", "region": "r" }
        }
      ]
    }
  ]
}
"#,
    );
    let surp = write(
        dir.path(),
        "surp.tsv",
        "# model_id=m\n# vocab_group=g\n\
         item_id\tword_index\ttoken\tsurprisal\n\
         t/1/good\t0\tx\t1.0\nt/1/bad\t0\tx\t2.0\n\
         t/2/good\t0\tx\t3.0\nt/2/bad\t0\tx\t2.0\n",
    );
    let tsv_out = dir.path().join("by_test.tsv");
    let out = run(&[
        "sg-score", "--suite", suite.to_str().unwrap(), "--surprisal", surp.to_str().unwrap(),
        "--tsv-out", tsv_out.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr_str(&out));
    let report = stdout_json(&out);
    assert_eq!(report["sg_score"], 0.5);
    assert_eq!(report["n_items"], 2);
    let tsv = String::from_utf8_lossy(&read_bytes(&tsv_out)).into_owned();
    assert_eq!(tsv, "test\taccuracy\nt\t0.5\n");
}

#[test]
fn eval_ppp_bits_is_nats_over_ln2() {
    let dir = TempDir::new().unwrap();
    let model = train_tiny(dir.path(), "3");
    let text = dir.path().join("corpus.txt");
    let surp = dir.path().join("surp.tsv");
    assert_eq!(
        code(&run(&[
            "surprisal", "--model", model.to_str().unwrap(), "--text", text.to_str().unwrap(),
            "-o", surp.to_str().unwrap(),
        ])),
        0
    );
    let freq = write(dir.path(), "freq.tsv", "word\tcount\nthe\t12\ncat\t5\ndog\t5\n");
    let rt = dir.path().join("rt.tsv");
    assert_eq!(
        code(&run(&[
            "simulate", "--surprisal", surp.to_str().unwrap(), "--freq", freq.to_str().unwrap(),
            "-o", rt.to_str().unwrap(), "--betas", "6", "--sigma", "8", "--seed", "3",
        ])),
        0
    );
    let eval = |base: &str| -> Value {
        let out = run(&[
            "eval-ppp", "--rt", rt.to_str().unwrap(), "--surprisal", surp.to_str().unwrap(),
            "--freq", freq.to_str().unwrap(), "--modality", "eye", "--spillover", "0",
            "--folds", "5", "--base", base,
        ]);
        assert_eq!(code(&out), 0, "{}", stderr_str(&out));
        stdout_json(&out)
    };
    let nats = eval("nats");
    let bits = eval("bits");
    let ratio = bits["mean_dll"].as_f64().unwrap() / nats["mean_dll"].as_f64().unwrap();
    assert!((ratio - std::f64::consts::LN_2.recip()).abs() < 1e-12, "ratio {ratio}");
    assert!(nats["mean_dll"].as_f64().unwrap() > 0.0);
    assert_eq!(nats["regression_kind"], "linear");
}

#[test]
fn meta_handles_small_record_sets() {
    let dir = TempDir::new().unwrap();
    let mut rows = String::from(
        "model_id\tarchitecture\ttraining_corpus\ttest_corpus\tvocab_group\tseed\tppl\tdll\tsg\n",
    );
    // two vocab groups x three models x two corpora, dll tracking ppl
    let mut z = 0.0;
    for (g, base) in [("bpe", 40.0), ("word", 70.0)] {
        for m in 1..=3u32 {
            for c in ["x", "y"] {
                z += 0.7;
                let ppl = base + 10.0 * m as f64 + f64::sin(z);
                let dll = 0.08 - 0.001 * ppl + 0.002 * f64::cos(z);
                let sg = 0.4 + 0.05 * m as f64 + 0.01 * f64::sin(z);
                rows.push_str(&format!("m{m}-{g}\tlstm\ttrn\t{c}\t{g}\t{m}\t{ppl}\t{dll}\t{sg}\n"));
            }
        }
    }
    let records = write(dir.path(), "records.tsv", &rows);
    let pairs = dir.path().join("pairs.tsv");
    let out = run(&[
        "meta", "--records", records.to_str().unwrap(), "--pairs-out", pairs.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr_str(&out));
    let report = stdout_json(&out);
    assert_eq!(report["n_records"], 12);
    assert_eq!(report["ppl_dll"].as_array().unwrap().len(), 2);
    for entry in report["ppl_dll"].as_array().unwrap() {
        assert!(entry["slope"].as_f64().unwrap() < 0.0, "{entry}");
    }
    assert!(report["stepwise"]["p_value"].is_number());
    let pairs_text = String::from_utf8_lossy(&read_bytes(&pairs)).into_owned();
    assert_eq!(pairs_text.lines().count(), 13);
    assert!(pairs_text.starts_with("model_id\ttest_corpus\tvocab_group\tsg_resid\tdll_resid\n"));
}

#[test]
fn plot_curve_writes_svg_with_manifest() {
    let dir = TempDir::new().unwrap();
    let curve = write(
        dir.path(),
        "curve.csv",
        "x,estimate,lower,upper\n0,-3,-4,-2\n5,0,-1,1\n10,3,2,4\n",
    );
    let surp = write(
        dir.path(),
        "surp.tsv",
        "# model_id=m\n# vocab_group=g\nitem_id\tword_index\ttoken\tsurprisal\n\
         a\t0\tx\t2.0\na\t1\ty\t5.5\na\t2\tz\t8.25\n",
    );
    let svg = dir.path().join("curve.svg");
    let out = run(&[
        "plot-curve", "--curve", curve.to_str().unwrap(), "--surprisal", surp.to_str().unwrap(),
        "-o", svg.to_str().unwrap(), "--y-label", "effect (ms)",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr_str(&out));
    let body = String::from_utf8_lossy(&read_bytes(&svg)).into_owned();
    assert!(body.starts_with("<svg ") && body.trim_end().ends_with("</svg>"));
    assert!(body.contains("effect (ms)"));
    assert!(manifest_of(&svg).exists());
}

#[test]
fn reports_to_stdout_leave_no_manifest_behind() {
    let dir = TempDir::new().unwrap();
    let model = train_tiny(dir.path(), "2");
    let text = dir.path().join("corpus.txt");
    let before = std::fs::read_dir(dir.path()).unwrap().count();
    let out = run(&[
        "perplexity", "--model", model.to_str().unwrap(), "--text", text.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let after = std::fs::read_dir(dir.path()).unwrap().count();
    assert_eq!(before, after, "stdout report created files");
}
