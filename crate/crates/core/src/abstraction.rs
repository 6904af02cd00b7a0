//! Parameter abstraction: per-chunk extraction of a common subsequence,
//! compressed character-class patterns and length statistics, with an
//! associative reduction into one profile per parameter.
//!
//! Character classes: CJK ideograph `z`, ASCII lowercase `x`, ASCII
//! uppercase `X`, ASCII digit `d`; every other character is kept as is.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lcs::lcs_smallest;

/// Values longer than this (in chars) are truncated before LCS.
pub const MAX_LCS_CHARS: usize = 4096;
/// Default number of distinct patterns kept per parameter.
pub const DEFAULT_PATTERN_CAP: usize = 256;
/// Bucket that absorbs patterns beyond the cap. Cannot collide with a real
/// pattern: ASCII lowercase letters never survive `transform`.
pub const OTHER_PATTERN: &str = "other";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AbstractionError {
    #[error("empty input")]
    EmptyInput,
}

fn class_of(c: char) -> char {
    match c {
        '\u{4E00}'..='\u{9FFF}' => 'z',
        'a'..='z' => 'x',
        'A'..='Z' => 'X',
        '0'..='9' => 'd',
        other => other,
    }
}

/// Maps each character to its class symbol. Length-preserving.
pub fn transform(value: &str) -> String {
    value.chars().map(class_of).collect()
}

/// Collapses maximal runs of one character into a single occurrence.
pub fn compress(abstract_value: &str) -> String {
    let mut out = String::with_capacity(abstract_value.len());
    let mut last = None;
    for c in abstract_value.chars() {
        if last != Some(c) {
            out.push(c);
            last = Some(c);
        }
    }
    out
}

/// `compress(transform(value))`.
pub fn pattern_of(value: &str) -> String {
    compress(&transform(value))
}

/// Common subsequence of all values: a left fold of pairwise LCS over the
/// values in lexicographic order. Returns the subsequence and how many
/// values had to be truncated to [`MAX_LCS_CHARS`].
pub fn common_subsequence_counted<S: AsRef<str>>(
    values: &[S],
) -> Result<(String, u64), AbstractionError> {
    if values.is_empty() {
        return Err(AbstractionError::EmptyInput);
    }
    let truncated = values
        .iter()
        .filter(|v| v.as_ref().chars().nth(MAX_LCS_CHARS).is_some())
        .count() as u64;
    // Folding a duplicate is the identity, so distinct values suffice.
    let distinct: BTreeSet<&str> = values.iter().map(AsRef::as_ref).collect();
    let mut prepared = distinct
        .into_iter()
        .map(|v| v.chars().take(MAX_LCS_CHARS).collect::<Vec<char>>());
    let mut acc = prepared.next().expect("non-empty");
    for v in prepared {
        if acc.is_empty() {
            break;
        }
        acc = lcs_smallest(&acc, &v);
    }
    Ok((acc.into_iter().collect(), truncated))
}

pub fn common_subsequence<S: AsRef<str>>(values: &[S]) -> Result<String, AbstractionError> {
    common_subsequence_counted(values).map(|(s, _)| s)
}

/// Two-pointer subsequence test.
pub fn is_subsequence(needle: &str, haystack: &str) -> bool {
    let mut hay = haystack.chars();
    needle.chars().all(|c| hay.any(|h| h == c))
}

/// Character length → number of values with that length.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LengthHistogram(pub BTreeMap<usize, u64>);

impl LengthHistogram {
    pub fn add(&mut self, len: usize, count: u64) {
        if count > 0 {
            *self.0.entry(len).or_insert(0) += count;
        }
    }

    pub fn merge(&mut self, other: &LengthHistogram) {
        for (&len, &count) in &other.0 {
            self.add(len, count);
        }
    }

    pub fn total(&self) -> u64 {
        self.0.values().sum()
    }

    pub fn get(&self, len: usize) -> u64 {
        self.0.get(&len).copied().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn length_histogram<S: AsRef<str>>(values: &[S]) -> LengthHistogram {
    let mut hist = LengthHistogram::default();
    for v in values {
        hist.add(v.as_ref().chars().count(), 1);
    }
    hist
}

/// Mapper output for one chunk of values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartialAbstraction {
    pub subsequence: String,
    pub patterns: BTreeMap<String, u64>,
    pub lengths: LengthHistogram,
    pub values_seen: u64,
    pub truncated: u64,
}

pub fn map_chunk<S: AsRef<str>>(values: &[S]) -> Result<PartialAbstraction, AbstractionError> {
    let (subsequence, truncated) = common_subsequence_counted(values)?;
    let mut patterns = BTreeMap::new();
    for v in values {
        *patterns.entry(pattern_of(v.as_ref())).or_insert(0) += 1;
    }
    Ok(PartialAbstraction {
        subsequence,
        patterns,
        lengths: length_histogram(values),
        values_seen: values.len() as u64,
        truncated,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternCount {
    pub pattern: String,
    pub count: u64,
}

/// Global abstraction of one parameter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbstractionProfile {
    pub common_subsequence: String,
    /// Sorted by count descending, then pattern ascending.
    pub patterns: Vec<PatternCount>,
    pub lengths: LengthHistogram,
    pub values_seen: u64,
    #[serde(default)]
    pub truncated: u64,
}

impl AbstractionProfile {
    /// Highest-count real pattern (the spill bucket never qualifies).
    pub fn top_pattern(&self) -> Option<&str> {
        self.patterns
            .iter()
            .find(|p| p.pattern != OTHER_PATTERN)
            .map(|p| p.pattern.as_str())
    }

    pub fn pattern_count(&self, pattern: &str) -> u64 {
        self.patterns
            .iter()
            .find(|p| p.pattern == pattern)
            .map_or(0, |p| p.count)
    }

    /// Merges two profiles of the same parameter.
    pub fn merge(&self, other: &AbstractionProfile, pattern_cap: usize) -> AbstractionProfile {
        let mut patterns = BTreeMap::new();
        for p in self.patterns.iter().chain(&other.patterns) {
            *patterns.entry(p.pattern.clone()).or_insert(0) += p.count;
        }
        let mut lengths = self.lengths.clone();
        lengths.merge(&other.lengths);
        let subsequence = common_subsequence(&[&self.common_subsequence, &other.common_subsequence])
            .expect("two inputs");
        AbstractionProfile {
            common_subsequence: subsequence,
            patterns: cap_patterns(patterns, pattern_cap),
            lengths,
            values_seen: self.values_seen + other.values_seen,
            truncated: self.truncated + other.truncated,
        }
    }
}

fn cap_patterns(mut merged: BTreeMap<String, u64>, cap: usize) -> Vec<PatternCount> {
    let mut spill = merged.remove(OTHER_PATTERN).unwrap_or(0);
    let mut sorted: Vec<PatternCount> = merged
        .into_iter()
        .map(|(pattern, count)| PatternCount { pattern, count })
        .collect();
    sorted.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.pattern.cmp(&b.pattern)));
    if sorted.len() > cap {
        spill += sorted.drain(cap..).map(|p| p.count).sum::<u64>();
    }
    if spill > 0 {
        sorted.push(PatternCount {
            pattern: OTHER_PATTERN.to_string(),
            count: spill,
        });
        sorted.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.pattern.cmp(&b.pattern)));
    }
    sorted
}

/// Reducer with the default pattern cap.
pub fn reduce(partials: &[PartialAbstraction]) -> Result<AbstractionProfile, AbstractionError> {
    reduce_with_cap(partials, DEFAULT_PATTERN_CAP)
}

pub fn reduce_with_cap(
    partials: &[PartialAbstraction],
    pattern_cap: usize,
) -> Result<AbstractionProfile, AbstractionError> {
    if partials.is_empty() {
        return Err(AbstractionError::EmptyInput);
    }
    let mut patterns = BTreeMap::new();
    let mut lengths = LengthHistogram::default();
    let mut values_seen = 0;
    let mut truncated = 0;
    for p in partials {
        for (pat, &count) in &p.patterns {
            *patterns.entry(pat.clone()).or_insert(0) += count;
        }
        lengths.merge(&p.lengths);
        values_seen += p.values_seen;
        truncated += p.truncated;
    }
    let subs: Vec<&str> = partials.iter().map(|p| p.subsequence.as_str()).collect();
    Ok(AbstractionProfile {
        common_subsequence: common_subsequence(&subs)?,
        patterns: cap_patterns(patterns, pattern_cap),
        lengths,
        values_seen,
        truncated,
    })
}

/// Map over fixed-size chunks, then reduce.
pub fn profile_values<S: AsRef<str>>(
    values: &[S],
    chunk_size: usize,
    pattern_cap: usize,
) -> Result<AbstractionProfile, AbstractionError> {
    let partials = values
        .chunks(chunk_size.max(1))
        .map(map_chunk)
        .collect::<Result<Vec<_>, _>>()?;
    reduce_with_cap(&partials, pattern_cap)
}

/// Up to `limit` example values whose pattern equals the profile's top
/// pattern, most frequent first (ties lexicographic).
pub fn representative_examples<S: AsRef<str>>(
    values: &[S],
    profile: &AbstractionProfile,
    limit: usize,
) -> Vec<String> {
    let Some(top) = profile.top_pattern() else {
        return Vec::new();
    };
    let mut freq: BTreeMap<&str, u64> = BTreeMap::new();
    for v in values.iter().map(AsRef::as_ref) {
        if pattern_of(v) == top {
            *freq.entry(v).or_insert(0) += 1;
        }
    }
    let mut ranked: Vec<(&str, u64)> = freq.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.into_iter().take(limit).map(|(v, _)| v.to_string()).collect()
}
