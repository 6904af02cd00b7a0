//! Parameter-sequence mining: per API, the distinct sorted sets of
//! parameter names seen in requests, with counts and rates.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::log_model::ApiCallRecord;

/// Which parameter names are dropped before sequences are keyed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub exact: BTreeSet<String>,
    pub prefixes: Vec<String>,
    /// Count only records whose outcome is `Right`.
    #[serde(default)]
    pub successful_only: bool,
}

impl Default for FilterConfig {
    /// Common gateway/system parameters.
    fn default() -> Self {
        FilterConfig {
            exact: [
                "Signature",
                "AccessKeyId",
                "Timestamp",
                "SignatureNonce",
                "Format",
                "Version",
                "Action",
            ]
            .into_iter()
            .map(String::from)
            .collect(),
            prefixes: Vec::new(),
            successful_only: false,
        }
    }
}

impl FilterConfig {
    pub fn none() -> Self {
        FilterConfig {
            exact: BTreeSet::new(),
            prefixes: Vec::new(),
            successful_only: false,
        }
    }

    pub fn drops(&self, name: &str) -> bool {
        self.exact.contains(name) || self.prefixes.iter().any(|p| name.starts_with(p.as_str()))
    }
}

pub fn extract_parameters(record: &ApiCallRecord) -> Vec<&str> {
    record.params.iter().map(|(k, _)| k.as_str()).collect()
}

pub fn filter_parameters<'a>(names: &[&'a str], config: &FilterConfig) -> Vec<&'a str> {
    names.iter().copied().filter(|n| !config.drops(n)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SequenceKey {
    pub api: String,
    params: Vec<String>,
}

impl SequenceKey {
    /// Sorts and deduplicates `params`.
    pub fn new<S: Into<String>>(api: impl Into<String>, params: impl IntoIterator<Item = S>) -> Self {
        let set: BTreeSet<String> = params.into_iter().map(Into::into).collect();
        SequenceKey {
            api: api.into(),
            params: set.into_iter().collect(),
        }
    }

    pub fn params(&self) -> &[String] {
        &self.params
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceRow {
    pub params: Vec<String>,
    pub count: u64,
    pub rate: f64,
}

/// Counts per sequence key. Rates are derived, never stored.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SequenceStats {
    counts: BTreeMap<SequenceKey, u64>,
}

impl SequenceStats {
    pub fn record(&mut self, key: SequenceKey, count: u64) {
        if count > 0 {
            *self.counts.entry(key).or_insert(0) += count;
        }
    }

    pub fn merge(&mut self, other: &SequenceStats) {
        for (k, &c) in &other.counts {
            self.record(k.clone(), c);
        }
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn count(&self, key: &SequenceKey) -> u64 {
        self.counts.get(key).copied().unwrap_or(0)
    }

    pub fn total(&self, api: &str) -> u64 {
        self.counts.iter().filter(|(k, _)| k.api == api).map(|(_, c)| c).sum()
    }

    pub fn rate(&self, key: &SequenceKey) -> f64 {
        let total = self.total(&key.api);
        if total == 0 {
            0.0
        } else {
            self.count(key) as f64 / total as f64
        }
    }

    pub fn apis(&self) -> BTreeSet<&str> {
        self.counts.keys().map(|k| k.api.as_str()).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&SequenceKey, u64)> {
        self.counts.iter().map(|(k, &c)| (k, c))
    }

    /// All sequences of `api`, by rate descending then params ascending.
    pub fn rows(&self, api: &str) -> Vec<SequenceRow> {
        let total = self.total(api);
        let mut rows: Vec<SequenceRow> = self
            .counts
            .iter()
            .filter(|(k, _)| k.api == api)
            .map(|(k, &count)| SequenceRow {
                params: k.params.clone(),
                count,
                rate: count as f64 / total as f64,
            })
            .collect();
        rows.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.params.cmp(&b.params)));
        rows
    }
}

/// Key for one record, or `None` when the filter excludes the record.
pub fn sequence_key(record: &ApiCallRecord, config: &FilterConfig) -> Option<SequenceKey> {
    if config.successful_only && !record.outcome.is_right() {
        return None;
    }
    let names = extract_parameters(record);
    Some(SequenceKey::new(record.api.clone(), filter_parameters(&names, config)))
}

pub fn mine_sequences<'a, I>(records: I, config: &FilterConfig) -> SequenceStats
where
    I: IntoIterator<Item = &'a ApiCallRecord>,
{
    let mut stats = SequenceStats::default();
    for r in records {
        if let Some(key) = sequence_key(r, config) {
            stats.record(key, 1);
        }
    }
    stats
}
