//! JSON serialization for syntactic-generalization test suites.
//!
//! The on-disk document mirrors the core structures: a list of tests, each
//! carrying items (conditions of named token regions) and predictions
//! (inequalities over region surprisal sums).

use std::path::Path;

use serde::{Deserialize, Serialize};

use psylm_core::sgtest::{
    InequalityAtom, RegionRef, SgCondition, SgItem, SgRegion, SgTest,
};
use psylm_core::SgSuite;

use crate::{read_file, write_file, CliError};

#[derive(Debug, Serialize, Deserialize)]
struct SuiteDoc {
    tests: Vec<TestDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TestDoc {
    name: String,
    items: Vec<ItemDoc>,
    predictions: Vec<AtomDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ItemDoc {
    item_number: u32,
    conditions: Vec<ConditionDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ConditionDoc {
    name: String,
    regions: Vec<RegionDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RegionDoc {
    name: String,
    tokens: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct AtomDoc {
    lesser: RefDoc,
    greater: RefDoc,
    #[serde(default, skip_serializing_if = "is_zero")]
    offset: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct RefDoc {
    condition: String,
    region: String,
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

fn to_core(doc: SuiteDoc) -> Vec<SgTest> {
    doc.tests
        .into_iter()
        .map(|t| SgTest {
            name: t.name,
            items: t
                .items
                .into_iter()
                .map(|i| SgItem {
                    item_number: i.item_number,
                    conditions: i
                        .conditions
                        .into_iter()
                        .map(|c| SgCondition {
                            name: c.name,
                            regions: c
                                .regions
                                .into_iter()
                                .map(|r| SgRegion { name: r.name, tokens: r.tokens })
                                .collect(),
                        })
                        .collect(),
                })
                .collect(),
            predictions: t
                .predictions
                .into_iter()
                .map(|a| {
                    InequalityAtom::new(
                        RegionRef::new(&a.lesser.condition, &a.lesser.region),
                        RegionRef::new(&a.greater.condition, &a.greater.region),
                    )
                    .with_offset(a.offset)
                })
                .collect(),
        })
        .collect()
}

fn to_doc(suite: &SgSuite) -> SuiteDoc {
    SuiteDoc {
        tests: suite
            .tests()
            .iter()
            .map(|t| TestDoc {
                name: t.name.clone(),
                items: t
                    .items
                    .iter()
                    .map(|i| ItemDoc {
                        item_number: i.item_number,
                        conditions: i
                            .conditions
                            .iter()
                            .map(|c| ConditionDoc {
                                name: c.name.clone(),
                                regions: c
                                    .regions
                                    .iter()
                                    .map(|r| RegionDoc {
                                        name: r.name.clone(),
                                        tokens: r.tokens.clone(),
                                    })
                                    .collect(),
                            })
                            .collect(),
                    })
                    .collect(),
                predictions: t
                    .predictions
                    .iter()
                    .map(|a| AtomDoc {
                        lesser: RefDoc {
                            condition: a.lesser.condition.clone(),
                            region: a.lesser.region.clone(),
                        },
                        greater: RefDoc {
                            condition: a.greater.condition.clone(),
                            region: a.greater.region.clone(),
                        },
                        offset: a.offset,
                    })
                    .collect(),
            })
            .collect(),
    }
}

/// Load and validate a suite document.
pub fn read_suite(path: &Path) -> Result<SgSuite, CliError> {
    let text = read_file(path)?;
    let doc: SuiteDoc = serde_json::from_str(&text).map_err(|e| {
        CliError::parse(path, e.line(), e.to_string())
    })?;
    SgSuite::new(to_core(doc)).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Write a suite document (pretty-printed, stable field order).
pub fn write_suite(path: &Path, suite: &SgSuite) -> Result<(), CliError> {
    let json = serde_json::to_string_pretty(&to_doc(suite)).expect("suite serializes");
    write_file(path, &format!("{json}\n"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demo_json() -> String {
        r#"{
  "tests": [
    {
      "name": "agreement",
      "items": [
        {
          "item_number": 1,
          "conditions": [
            {
              "name": "match",
              "regions": [
                {"name": "subject", "tokens": ["the", "dog"]},
                {"name": "verb", "tokens": ["runs"]}
              ]
            },
            {
              "name": "mismatch",
              "regions": [
                {"name": "subject", "tokens": ["the", "dog"]},
                {"name": "verb", "tokens": ["run"]}
              ]
            }
          ]
        }
      ],
      "predictions": [
        {
          "lesser": {"condition": "match", "region": "verb"},
          "greater": {"condition": "mismatch", "region": "verb"}
        }
      ]
    }
  ]
}
"#
        .to_owned()
    }

    #[test]
    fn loads_and_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("suite.json");
        std::fs::write(&path, demo_json()).unwrap();
        let suite = read_suite(&path).unwrap();
        assert_eq!(suite.n_tests(), 1);
        assert_eq!(suite.n_items(), 1);

        let copy = dir.path().join("copy.json");
        write_suite(&copy, &suite).unwrap();
        let back = read_suite(&copy).unwrap();
        assert_eq!(back.tests(), suite.tests());

        // second serialization is byte-identical
        let again = dir.path().join("again.json");
        write_suite(&again, &back).unwrap();
        assert_eq!(
            std::fs::read(&copy).unwrap(),
            std::fs::read(&again).unwrap()
        );
    }

    #[test]
    fn offsets_default_to_zero_and_survive_round_trip() {
        let with_offset = demo_json().replace(
            r#""greater": {"condition": "mismatch", "region": "verb"}"#,
            r#""greater": {"condition": "mismatch", "region": "verb"}, "offset": 1.5"#,
        );
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("suite.json");
        std::fs::write(&path, &with_offset).unwrap();
        let suite = read_suite(&path).unwrap();
        assert_eq!(suite.tests()[0].predictions[0].offset, 1.5);

        let copy = dir.path().join("copy.json");
        write_suite(&copy, &suite).unwrap();
        assert_eq!(read_suite(&copy).unwrap().tests()[0].predictions[0].offset, 1.5);
    }

    #[test]
    fn invalid_json_reports_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("suite.json");
        std::fs::write(&path, "{\n  \"tests\": [\n    {]\n").unwrap();
        match read_suite(&path).unwrap_err() {
            CliError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn schema_violations_become_data_errors() {
        let broken = demo_json().replace(r#""region": "verb"}"#, r#""region": "nope"}"#);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("suite.json");
        std::fs::write(&path, &broken).unwrap();
        match read_suite(&path).unwrap_err() {
            CliError::Data(message) => assert!(message.contains("nope"), "{message}"),
            other => panic!("expected data error, got {other:?}"),
        }
    }
}
