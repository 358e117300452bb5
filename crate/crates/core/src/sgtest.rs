//! Targeted syntactic test suites and Syntactic Generalization scoring.
//!
//! A suite is a battery of tests. Each test declares a condition schema, a
//! region schema shared by all conditions, a set of items instantiating
//! every condition, and a prediction: a conjunction of strict inequalities
//! between region surprisal sums across conditions. An item passes when
//! every atom of the conjunction holds strictly; ties fail. A test's
//! accuracy is the fraction of passing items, and the SG score is the
//! unweighted mean of by-test accuracies, so small and large tests count
//! the same.
//!
//! Region surprisals are looked up in a [`SurprisalTable`] keyed by the
//! `test/item/condition` convention of [`item_key`], with word indices
//! running over the concatenated regions of the condition sentence.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::surprisal::SurprisalTable;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SgError {
    #[error("suite schema violation: {reason}")]
    SchemaError { reason: String },
    #[error("no surprisal entry for {item_id:?} position {position} ({token:?})")]
    MissingSurprisal {
        item_id: String,
        position: u32,
        token: String,
    },
}

fn schema(reason: alloc::string::String) -> SgError {
    SgError::SchemaError { reason }
}

/// One labeled span of tokens within a condition sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct SgRegion {
    pub name: String,
    /// Tokens exactly as supplied; may be empty (e.g. an unfilled gap site).
    pub tokens: Vec<String>,
}

/// One experimental condition of an item: its regions in sentence order.
#[derive(Debug, Clone, PartialEq)]
pub struct SgCondition {
    pub name: String,
    pub regions: Vec<SgRegion>,
}

impl SgCondition {
    /// Half-open token span `[start, end)` of a region within the
    /// concatenated condition sentence.
    pub fn region_span(&self, region: &str) -> Option<(usize, usize)> {
        let mut start = 0;
        for r in &self.regions {
            let end = start + r.tokens.len();
            if r.name == region {
                return Some((start, end));
            }
            start = end;
        }
        None
    }

    /// All tokens of the condition sentence in order.
    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.regions.iter().flat_map(|r| r.tokens.iter().map(String::as_str))
    }
}

/// One item: the same sentence frame realized in every condition.
#[derive(Debug, Clone, PartialEq)]
pub struct SgItem {
    pub item_number: u32,
    pub conditions: Vec<SgCondition>,
}

/// One side of an inequality atom.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionRef {
    pub condition: String,
    pub region: String,
}

impl RegionRef {
    pub fn new(condition: &str, region: &str) -> RegionRef {
        RegionRef {
            condition: String::from(condition),
            region: String::from(region),
        }
    }
}

/// Strict inequality between two region surprisal sums:
/// `sum(lesser) + offset < sum(greater)`, offset in bits (default 0).
#[derive(Debug, Clone, PartialEq)]
pub struct InequalityAtom {
    pub lesser: RegionRef,
    pub greater: RegionRef,
    pub offset: f64,
}

impl InequalityAtom {
    pub fn new(lesser: RegionRef, greater: RegionRef) -> InequalityAtom {
        InequalityAtom { lesser, greater, offset: 0.0 }
    }

    pub fn with_offset(mut self, offset: f64) -> InequalityAtom {
        self.offset = offset;
        self
    }
}

/// One test: items sharing a condition/region schema plus the conjunction
/// of inequality atoms every item must satisfy.
#[derive(Debug, Clone, PartialEq)]
pub struct SgTest {
    pub name: String,
    pub items: Vec<SgItem>,
    /// Conjunction: an item is correct iff every atom holds strictly.
    pub predictions: Vec<InequalityAtom>,
}

/// A validated battery of tests.
#[derive(Debug, Clone, PartialEq)]
pub struct SgSuite {
    tests: Vec<SgTest>,
}

impl SgSuite {
    /// Validates the schema: each test needs at least one item and one
    /// prediction atom; every item must instantiate the same condition
    /// set with the same region names in the same order; predictions may
    /// reference only declared conditions and regions, and may not compare
    /// a region sum with itself.
    pub fn new(tests: Vec<SgTest>) -> Result<SgSuite, SgError> {
        if tests.is_empty() {
            return Err(schema("suite has no tests".into()));
        }
        let mut names = BTreeSet::new();
        for test in &tests {
            if !names.insert(test.name.clone()) {
                return Err(schema(alloc::format!("duplicate test name {:?}", test.name)));
            }
            validate_test(test)?;
        }
        Ok(SgSuite { tests })
    }

    pub fn tests(&self) -> &[SgTest] {
        &self.tests
    }

    pub fn n_tests(&self) -> usize {
        self.tests.len()
    }

    pub fn n_items(&self) -> usize {
        self.tests.iter().map(|t| t.items.len()).sum()
    }
}

fn validate_test(test: &SgTest) -> Result<(), SgError> {
    if test.items.is_empty() {
        return Err(schema(alloc::format!("test {:?} has no items", test.name)));
    }
    if test.predictions.is_empty() {
        return Err(schema(alloc::format!("test {:?} has no predictions", test.name)));
    }

    // The first item fixes the schema: condition names and, per condition,
    // the ordered region names.
    let first = &test.items[0];
    let condition_names: Vec<&String> = first.conditions.iter().map(|c| &c.name).collect();
    {
        let mut seen = BTreeSet::new();
        for c in &condition_names {
            if !seen.insert(c.as_str()) {
                return Err(schema(alloc::format!(
                    "test {:?}: duplicate condition {:?}",
                    test.name, c
                )));
            }
        }
    }
    let region_names: Vec<&String> = first
        .conditions
        .first()
        .map(|c| c.regions.iter().map(|r| &r.name).collect())
        .unwrap_or_default();
    if region_names.is_empty() {
        return Err(schema(alloc::format!(
            "test {:?}: conditions declare no regions",
            test.name
        )));
    }
    {
        let mut seen = BTreeSet::new();
        for r in &region_names {
            if !seen.insert(r.as_str()) {
                return Err(schema(alloc::format!(
                    "test {:?}: duplicate region {:?}",
                    test.name, r
                )));
            }
        }
    }

    let mut item_numbers = BTreeSet::new();
    for item in &test.items {
        if !item_numbers.insert(item.item_number) {
            return Err(schema(alloc::format!(
                "test {:?}: duplicate item number {}",
                test.name, item.item_number
            )));
        }
        let got: Vec<&String> = item.conditions.iter().map(|c| &c.name).collect();
        if got != condition_names {
            let missing = condition_names
                .iter()
                .find(|c| !got.contains(c))
                .map(|c| c.as_str())
                .unwrap_or("<order>");
            return Err(schema(alloc::format!(
                "test {:?} item {}: condition {:?} missing or out of order",
                test.name, item.item_number, missing
            )));
        }
        for cond in &item.conditions {
            let regions: Vec<&String> = cond.regions.iter().map(|r| &r.name).collect();
            if regions != region_names {
                return Err(schema(alloc::format!(
                    "test {:?} item {} condition {:?}: region names differ from schema",
                    test.name, item.item_number, cond.name
                )));
            }
        }
    }

    for atom in &test.predictions {
        for side in [&atom.lesser, &atom.greater] {
            if !condition_names.iter().any(|c| **c == side.condition) {
                return Err(schema(alloc::format!(
                    "test {:?}: prediction references unknown condition {:?}",
                    test.name, side.condition
                )));
            }
            if !region_names.iter().any(|r| **r == side.region) {
                return Err(schema(alloc::format!(
                    "test {:?}: prediction references unknown region {:?}",
                    test.name, side.region
                )));
            }
        }
        if atom.lesser == atom.greater {
            return Err(schema(alloc::format!(
                "test {:?}: prediction compares ({}, {}) with itself",
                test.name, atom.lesser.condition, atom.lesser.region
            )));
        }
        if !atom.offset.is_finite() {
            return Err(schema(alloc::format!(
                "test {:?}: non-finite prediction offset",
                test.name
            )));
        }
    }
    Ok(())
}

/// Surprisal-table item id for one condition sentence:
/// `test/item_number/condition`.
pub fn item_key(test: &str, item_number: u32, condition: &str) -> String {
    alloc::format!("{}/{}/{}", test, item_number, condition)
}

/// Sum of per-token surprisal (bits) over one region of one condition
/// sentence. Word indices are positions in the concatenated region token
/// list; the empty region sums to zero.
pub fn region_surprisal(
    table: &SurprisalTable,
    test: &str,
    item_number: u32,
    condition: &SgCondition,
    region: &str,
) -> Result<f64, SgError> {
    let (start, end) = condition.region_span(region).ok_or_else(|| {
        schema(alloc::format!(
            "condition {:?} has no region {:?}",
            condition.name, region
        ))
    })?;
    let key = item_key(test, item_number, &condition.name);
    let tokens: Vec<&str> = condition.tokens().collect();
    let mut sum = 0.0;
    for pos in start..end {
        let bits = table.get(&key, pos as u32).ok_or_else(|| SgError::MissingSurprisal {
            item_id: key.clone(),
            position: pos as u32,
            token: String::from(tokens[pos]),
        })?;
        sum += bits;
    }
    Ok(sum)
}

/// Evaluates one item of a test: true iff every prediction atom holds
/// strictly. Equal sums (after the offset) fail.
pub fn eval_item(
    test: &SgTest,
    item: &SgItem,
    table: &SurprisalTable,
) -> Result<bool, SgError> {
    let by_name = |name: &str| -> Result<&SgCondition, SgError> {
        item.conditions.iter().find(|c| c.name == name).ok_or_else(|| {
            schema(alloc::format!(
                "item {} has no condition {:?}",
                item.item_number, name
            ))
        })
    };
    for atom in &test.predictions {
        let lo = region_surprisal(
            table,
            &test.name,
            item.item_number,
            by_name(&atom.lesser.condition)?,
            &atom.lesser.region,
        )?;
        let hi = region_surprisal(
            table,
            &test.name,
            item.item_number,
            by_name(&atom.greater.condition)?,
            &atom.greater.region,
        )?;
        if !(lo + atom.offset < hi) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// By-test accuracies and their unweighted mean.
#[derive(Debug, Clone, PartialEq)]
pub struct SgResult {
    /// test name → fraction of items whose conjunction held.
    pub by_test_accuracy: BTreeMap<String, f64>,
    /// Unweighted mean of by-test accuracies.
    pub sg_score: f64,
}

/// Scores a suite against a surprisal table.
pub fn score(suite: &SgSuite, table: &SurprisalTable) -> Result<SgResult, SgError> {
    let mut by_test_accuracy = BTreeMap::new();
    for test in suite.tests() {
        let mut correct = 0usize;
        for item in &test.items {
            if eval_item(test, item, table)? {
                correct += 1;
            }
        }
        by_test_accuracy.insert(
            test.name.clone(),
            correct as f64 / test.items.len() as f64,
        );
    }
    let sg_score =
        by_test_accuracy.values().sum::<f64>() / by_test_accuracy.len() as f64;
    Ok(SgResult { by_test_accuracy, sg_score })
}
