//! Parameter-level constraints: enumerations with a distinct-value bound,
//! numeric ranges and mandatory-parameter detection.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::log_model::ApiCallRecord;

pub const DEFAULT_ENUM_THRESHOLD: usize = 20;
/// Maximum share of unparseable values for a range to be reported.
pub const MAX_NON_NUMERIC_RATIO: f64 = 0.01;
/// Minimum number of successful calls before requiredness is inferred.
pub const REQUIRED_SUPPORT: u64 = 30;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConstraintError {
    #[error("enum threshold must be at least 2, got {0}")]
    InvalidThreshold(usize),
    #[error("cannot merge enum state of {left:?} with {right:?}")]
    KeyMismatch {
        left: (String, String),
        right: (String, String),
    },
    #[error("cannot merge enum states with thresholds {0} and {1}")]
    ThresholdMismatch(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnumStatus {
    Enumerable,
    NotEnumerable,
}

/// Distinct values of one parameter while their count stays below
/// `threshold`. Once the bound is reached the state is `NotEnumerable`
/// for good and the value set is dropped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnumState {
    pub api: String,
    pub param: String,
    pub threshold: usize,
    pub status: EnumStatus,
    pub values: BTreeSet<String>,
}

impl EnumState {
    pub fn new(api: impl Into<String>, param: impl Into<String>, threshold: usize) -> Result<Self, ConstraintError> {
        if threshold < 2 {
            return Err(ConstraintError::InvalidThreshold(threshold));
        }
        Ok(EnumState {
            api: api.into(),
            param: param.into(),
            threshold,
            status: EnumStatus::Enumerable,
            values: BTreeSet::new(),
        })
    }

    pub fn is_enumerable(&self) -> bool {
        self.status == EnumStatus::Enumerable
    }

    pub fn observe(&mut self, value: &str) {
        if !self.is_enumerable() || self.values.contains(value) {
            return;
        }
        self.values.insert(value.to_string());
        if self.values.len() >= self.threshold {
            self.status = EnumStatus::NotEnumerable;
            self.values.clear();
        }
    }

    /// Folds a new batch of values into the state.
    pub fn merge_enum<'a, I>(&self, batch: I) -> EnumState
    where
        I: IntoIterator<Item = &'a String>,
    {
        let mut next = self.clone();
        for v in batch {
            next.observe(v);
        }
        next
    }

    /// Union of two states of the same parameter.
    pub fn merge(&self, other: &EnumState) -> Result<EnumState, ConstraintError> {
        if (self.api.as_str(), self.param.as_str()) != (other.api.as_str(), other.param.as_str()) {
            return Err(ConstraintError::KeyMismatch {
                left: (self.api.clone(), self.param.clone()),
                right: (other.api.clone(), other.param.clone()),
            });
        }
        if self.threshold != other.threshold {
            return Err(ConstraintError::ThresholdMismatch(self.threshold, other.threshold));
        }
        if !other.is_enumerable() {
            return Ok(other.clone());
        }
        Ok(self.merge_enum(&other.values))
    }
}

pub fn mine_enum<'a, I>(api: &str, param: &str, values: I, threshold: usize) -> Result<EnumState, ConstraintError>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut state = EnumState::new(api, param, threshold)?;
    for v in values {
        state.observe(v);
        if !state.is_enumerable() {
            break;
        }
    }
    Ok(state)
}

/// Decimal literal: optional sign, digits with an optional fraction, no
/// exponent. `".5"` and `"5."` are accepted.
pub fn parse_decimal(s: &str) -> Option<f64> {
    let body = s.strip_prefix(['+', '-']).unwrap_or(s);
    let (int, frac) = match body.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (body, None),
    };
    let digits = |p: &str| p.bytes().all(|b| b.is_ascii_digit());
    let ok = digits(int) && frac.is_none_or(digits) && (!int.is_empty() || frac.is_some_and(|f| !f.is_empty()));
    if !ok {
        return None;
    }
    s.parse::<f64>().ok()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NumericRange {
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub sample_count: u64,
    pub non_numeric_count: u64,
}

impl NumericRange {
    pub fn observe(&mut self, value: &str) {
        match parse_decimal(value) {
            Some(x) => {
                self.sample_count += 1;
                self.min = Some(self.min.map_or(x, |m| m.min(x)));
                self.max = Some(self.max.map_or(x, |m| m.max(x)));
            }
            None => self.non_numeric_count += 1,
        }
    }

    /// Widens to cover both ranges; counts add up.
    pub fn merge(&self, other: &NumericRange) -> NumericRange {
        let pick = |a: Option<f64>, b: Option<f64>, f: fn(f64, f64) -> f64| match (a, b) {
            (Some(x), Some(y)) => Some(f(x, y)),
            (x, y) => x.or(y),
        };
        NumericRange {
            min: pick(self.min, other.min, f64::min),
            max: pick(self.max, other.max, f64::max),
            sample_count: self.sample_count + other.sample_count,
            non_numeric_count: self.non_numeric_count + other.non_numeric_count,
        }
    }

    pub fn total(&self) -> u64 {
        self.sample_count + self.non_numeric_count
    }

    /// `(min, max)` when at most 1% of the observed values were non-numeric.
    pub fn reported(&self) -> Option<(f64, f64)> {
        if self.sample_count == 0 {
            return None;
        }
        let ratio = self.non_numeric_count as f64 / self.total() as f64;
        if ratio > MAX_NON_NUMERIC_RATIO {
            return None;
        }
        Some((self.min?, self.max?))
    }
}

pub fn mine_numeric_range<'a, I>(values: I) -> NumericRange
where
    I: IntoIterator<Item = &'a str>,
{
    let mut range = NumericRange::default();
    for v in values {
        range.observe(v);
    }
    range
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequirednessStat {
    pub present_count: u64,
    pub total_success_count: u64,
    pub inferred_required: bool,
}

impl RequirednessStat {
    pub fn new(present_count: u64, total_success_count: u64) -> Self {
        RequirednessStat {
            present_count,
            total_success_count,
            inferred_required: total_success_count >= REQUIRED_SUPPORT && present_count == total_success_count,
        }
    }
}

/// Presence counts over the successful calls of one API.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RequirednessTable {
    pub total_success: u64,
    pub present: BTreeMap<String, u64>,
}

impl RequirednessTable {
    /// Every parameter seen is registered, even if only in failed calls.
    pub fn observe(&mut self, record: &ApiCallRecord) {
        let ok = record.outcome.is_right();
        if ok {
            self.total_success += 1;
        }
        for (name, _) in &record.params {
            *self.present.entry(name.clone()).or_insert(0) += u64::from(ok);
        }
    }

    pub fn merge(&mut self, other: &RequirednessTable) {
        self.total_success += other.total_success;
        for (k, &c) in &other.present {
            *self.present.entry(k.clone()).or_insert(0) += c;
        }
    }

    pub fn stat(&self, param: &str) -> RequirednessStat {
        RequirednessStat::new(self.present.get(param).copied().unwrap_or(0), self.total_success)
    }

    pub fn stats(&self) -> BTreeMap<String, RequirednessStat> {
        self.present.keys().map(|k| (k.clone(), self.stat(k))).collect()
    }
}

pub fn mine_requiredness<'a, I>(records: I) -> BTreeMap<String, RequirednessStat>
where
    I: IntoIterator<Item = &'a ApiCallRecord>,
{
    let mut table = RequirednessTable::default();
    for r in records {
        table.observe(r);
    }
    table.stats()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::log_model::OutcomeLabel;
    use proptest::prelude::*;

    fn distinct(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("v{i}")).collect()
    }

    #[test]
    fn enum_threshold_is_strict() {
        let s = mine_enum("A", "p", ["on", "off", "on"], 20).unwrap();
        assert!(s.is_enumerable());
        assert_eq!(s.values, BTreeSet::from(["on".to_string(), "off".to_string()]));

        let v = distinct(20);
        let s = mine_enum("A", "p", v.iter().map(String::as_str), 20).unwrap();
        assert_eq!(s.status, EnumStatus::NotEnumerable);

        let s = mine_enum("A", "p", v[..19].iter().map(String::as_str), 20).unwrap();
        assert!(s.is_enumerable());
        assert_eq!(s.values.len(), 19);

        assert_eq!(
            mine_enum("A", "p", ["x"], 1),
            Err(ConstraintError::InvalidThreshold(1))
        );
    }

    #[test]
    fn enum_merges() {
        let ab = mine_enum("A", "p", ["a", "b"], 20).unwrap();
        let merged = ab.merge_enum(&BTreeSet::from(["b".to_string(), "c".to_string()]));
        assert_eq!(merged.values.len(), 3);
        assert!(merged.is_enumerable());

        let v = distinct(25);
        let not = mine_enum("A", "p", v.iter().map(String::as_str), 20).unwrap();
        assert!(!not.merge_enum(&BTreeSet::new()).is_enumerable());
        assert!(!ab.merge(&not).unwrap().is_enumerable());
        assert!(!not.merge(&ab).unwrap().is_enumerable());

        let nineteen = mine_enum("A", "p", v[..19].iter().map(String::as_str), 20).unwrap();
        let crossed = nineteen.merge_enum(&BTreeSet::from(["new".to_string()]));
        assert_eq!(crossed.status, EnumStatus::NotEnumerable);

        let other = mine_enum("A", "q", ["a"], 20).unwrap();
        assert!(matches!(ab.merge(&other), Err(ConstraintError::KeyMismatch { .. })));
        let other = mine_enum("A", "p", ["a"], 10).unwrap();
        assert_eq!(ab.merge(&other), Err(ConstraintError::ThresholdMismatch(20, 10)));
    }

    #[test]
    fn decimal_parsing() {
        for (s, v) in [("1", 1.0), ("-2.5", -2.5), ("+3", 3.0), (".5", 0.5), ("5.", 5.0), ("007", 7.0)] {
            assert_eq!(parse_decimal(s), Some(v), "{s}");
        }
        for s in ["", "-", ".", "1e5", "1.2.3", "0x1f", " 1", "inf", "NaN", "1,000"] {
            assert_eq!(parse_decimal(s), None, "{s}");
        }
    }

    #[test]
    fn numeric_ranges() {
        let r = mine_numeric_range(["1", "5", "3"]);
        assert_eq!(r.reported(), Some((1.0, 5.0)));
        assert_eq!(mine_numeric_range(["a", "b"]).reported(), None);
        let r = mine_numeric_range(["1", "2", "oops"]);
        assert_eq!(r.non_numeric_count, 1);
        assert_eq!(r.reported(), None);
        // exactly 1% junk is tolerated
        let mut values: Vec<String> = (1..=99).map(|i| i.to_string()).collect();
        values.push("n/a".into());
        let r = mine_numeric_range(values.iter().map(String::as_str));
        assert_eq!(r.reported(), Some((1.0, 99.0)));
        assert_eq!(mine_numeric_range([]).reported(), None);
    }

    fn call(params: &[&str], ok: bool) -> ApiCallRecord {
        ApiCallRecord {
            api: "A".into(),
            params: params.iter().map(|p| (p.to_string(), "1".to_string())).collect(),
            outcome: if ok { OutcomeLabel::Right } else { OutcomeLabel::ErrorCode("E".into()) },
            session_id: "s".into(),
            timestamp: 0,
        }
    }

    #[test]
    fn requiredness_rule() {
        let mut log: Vec<_> = (0..500).map(|_| call(&["a", "b"], true)).collect();
        log[0] = call(&["a"], true);
        log.push(call(&["c"], false));
        let stats = mine_requiredness(&log);
        assert!(stats["a"].inferred_required);
        assert_eq!(stats["a"].present_count, 500);
        assert!(!stats["b"].inferred_required);
        assert_eq!(stats["b"].present_count, 499);
        assert_eq!(stats["c"].present_count, 0);
        assert!(!stats["c"].inferred_required);

        let few: Vec<_> = (0..10).map(|_| call(&["a"], true)).collect();
        assert!(!mine_requiredness(&few)["a"].inferred_required);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn merge_order_never_revives(batches in proptest::collection::vec(proptest::collection::btree_set("[a-z]{1,2}", 0..8), 1..8), perm_seed in any::<u64>()) {
            let mut order: Vec<usize> = (0..batches.len()).collect();
            let mut s = perm_seed;
            for i in (1..order.len()).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                order.swap(i, (s >> 33) as usize % (i + 1));
            }
            let mut state = EnumState::new("A", "p", 20).unwrap();
            let mut seen_not = false;
            for &i in &order {
                state = state.merge_enum(&batches[i]);
                if seen_not {
                    prop_assert!(!state.is_enumerable());
                }
                seen_not |= !state.is_enumerable();
                if state.is_enumerable() {
                    prop_assert!(state.values.len() < 20);
                }
            }
            let union: BTreeSet<&String> = batches.iter().flatten().collect();
            prop_assert_eq!(state.is_enumerable(), union.len() < 20);
        }

        #[test]
        fn chunked_enum_equals_stream(values in proptest::collection::vec("[a-z]{1,2}", 0..60), chunk in 1usize..10) {
            let whole = mine_enum("A", "p", values.iter().map(String::as_str), 20).unwrap();
            let mut acc = EnumState::new("A", "p", 20).unwrap();
            for part in values.chunks(chunk) {
                let s = mine_enum("A", "p", part.iter().map(String::as_str), 20).unwrap();
                acc = acc.merge(&s).unwrap();
            }
            prop_assert_eq!(acc, whole);
        }

        #[test]
        fn range_matches_scan(values in proptest::collection::vec(-1000i32..1000, 1..50)) {
            let text: Vec<String> = values.iter().map(|v| format!("{}.{}", v / 10, v.rem_euclid(10))).collect();
            let r = mine_numeric_range(text.iter().map(String::as_str));
            let parsed: Vec<f64> = text.iter().map(|t| t.parse().unwrap()).collect();
            let lo = parsed.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = parsed.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(r.reported(), Some((lo, hi)));
        }
    }
}
