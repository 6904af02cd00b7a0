//! Producer recommendation for API input parameters.
//!
//! Candidates for `(api, param)` are the APIs that list `param` among their
//! outputs. Each candidate `c` is scored as
//!
//! ```text
//! (alpha * sim(api, c)) * (beta * sim(param, c)) * (sigma * rel(api, c))
//! ----------------------------------------------------------------------
//!                 |inputs(c)| + |outputs(c)|
//! ```
//!
//! where `sim` is normalized edit-distance similarity and `rel` is the
//! Jaccard overlap of the session sets in which both APIs were called.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::log_model::{ApiCallRecord, ApiSpec, LogError};

#[derive(Debug, Error, PartialEq)]
pub enum DependencyError {
    #[error("rank weights must be finite and strictly positive")]
    InvalidWeights,
    #[error("{0} does not produce parameter {1}")]
    NotAProducer(String, String),
    #[error("candidate {0} declares no parameters")]
    DegenerateCandidate(String),
    #[error("unknown api {0}")]
    UnknownApi(String),
}

/// API specs indexed by name, plus output-parameter → producers.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ApiCatalog {
    specs: BTreeMap<String, ApiSpec>,
    producers: BTreeMap<String, BTreeSet<String>>,
}

impl ApiCatalog {
    pub fn new(specs: impl IntoIterator<Item = ApiSpec>) -> Result<Self, LogError> {
        let mut catalog = ApiCatalog::default();
        for spec in specs {
            spec.validate()?;
            if catalog.specs.contains_key(&spec.name) {
                return Err(LogError::InvalidSpec(format!("duplicate api {}", spec.name)));
            }
            for out in &spec.output_params {
                catalog
                    .producers
                    .entry(out.name.clone())
                    .or_default()
                    .insert(spec.name.clone());
            }
            catalog.specs.insert(spec.name.clone(), spec);
        }
        Ok(catalog)
    }

    pub fn get(&self, api: &str) -> Option<&ApiSpec> {
        self.specs.get(api)
    }

    pub fn specs(&self) -> impl Iterator<Item = &ApiSpec> {
        self.specs.values()
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    pub fn from_json(text: &str) -> Result<Self, LogError> {
        let specs: Vec<ApiSpec> = serde_json::from_str(text).map_err(|e| LogError::InvalidSpec(e.to_string()))?;
        ApiCatalog::new(specs)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.specs.values().collect::<Vec<_>>()).expect("specs serialize")
    }
}

/// APIs whose outputs contain `param` (exact, case-sensitive).
pub fn generate_candidates<'a>(catalog: &'a ApiCatalog, param: &str) -> BTreeSet<&'a str> {
    catalog
        .producers
        .get(param)
        .map(|set| set.iter().map(String::as_str).collect())
        .unwrap_or_default()
}

/// Levenshtein distance over chars.
pub fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `1 - edit_distance / max_len`, and 1 for two empty strings.
pub fn string_similarity(x: &str, y: &str) -> f64 {
    let longest = x.chars().count().max(y.chars().count());
    if longest == 0 {
        return 1.0;
    }
    1.0 - edit_distance(x, y) as f64 / longest as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankWeights {
    pub alpha: f64,
    pub beta: f64,
    pub sigma: f64,
}

impl RankWeights {
    pub fn new(alpha: f64, beta: f64, sigma: f64) -> Result<Self, DependencyError> {
        let ok = |w: f64| w.is_finite() && w > 0.0;
        if ok(alpha) && ok(beta) && ok(sigma) {
            Ok(RankWeights { alpha, beta, sigma })
        } else {
            Err(DependencyError::InvalidWeights)
        }
    }

    pub fn scaled(&self, factor: f64) -> Result<Self, DependencyError> {
        RankWeights::new(self.alpha * factor, self.beta * factor, self.sigma * factor)
    }
}

impl Default for RankWeights {
    fn default() -> Self {
        RankWeights {
            alpha: 1.0,
            beta: 1.0,
            sigma: 1.0,
        }
    }
}

/// Session co-occurrence between APIs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RelevanceTable {
    sessions: BTreeMap<String, BTreeSet<String>>,
}

impl RelevanceTable {
    /// A table without session data: every relevance is 1.
    pub fn uniform() -> Self {
        RelevanceTable::default()
    }

    pub fn has_data(&self) -> bool {
        !self.sessions.is_empty()
    }

    pub fn observe(&mut self, api: &str, session: &str) {
        self.sessions
            .entry(api.to_string())
            .or_default()
            .insert(session.to_string());
    }

    /// Jaccard similarity of the two APIs' session sets; symmetric.
    pub fn get(&self, a: &str, b: &str) -> f64 {
        if !self.has_data() {
            return 1.0;
        }
        let empty = BTreeSet::new();
        let sa = self.sessions.get(a).unwrap_or(&empty);
        let sb = self.sessions.get(b).unwrap_or(&empty);
        let both = sa.intersection(sb).count();
        let either = sa.len() + sb.len() - both;
        if either == 0 {
            0.0
        } else {
            both as f64 / either as f64
        }
    }

    pub fn apis(&self) -> impl Iterator<Item = &str> {
        self.sessions.keys().map(String::as_str)
    }
}

pub fn session_relevance<'a, I>(records: I) -> RelevanceTable
where
    I: IntoIterator<Item = &'a ApiCallRecord>,
{
    let mut table = RelevanceTable::default();
    for r in records {
        table.observe(&r.api, &r.session_id);
    }
    table
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankOptions {
    /// Compare the parameter name with the candidate's matching output
    /// parameter instead of the candidate's API name.
    #[serde(default)]
    pub compare_output_param: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependencyEdge {
    pub consumer_api: String,
    pub input_param: String,
    pub producer_api: String,
    pub score: f64,
}

pub struct Ranker<'a> {
    pub catalog: &'a ApiCatalog,
    pub relevance: &'a RelevanceTable,
    pub weights: RankWeights,
    pub options: RankOptions,
}

impl<'a> Ranker<'a> {
    pub fn new(catalog: &'a ApiCatalog, relevance: &'a RelevanceTable, weights: RankWeights) -> Self {
        Ranker {
            catalog,
            relevance,
            weights,
            options: RankOptions::default(),
        }
    }

    pub fn score(&self, api: &str, param: &str, candidate: &str) -> Result<f64, DependencyError> {
        let spec = self
            .catalog
            .get(candidate)
            .ok_or_else(|| DependencyError::UnknownApi(candidate.to_string()))?;
        if !spec.has_output(param) {
            return Err(DependencyError::NotAProducer(candidate.to_string(), param.to_string()));
        }
        let size = spec.input_params.len() + spec.output_params.len();
        if size == 0 {
            return Err(DependencyError::DegenerateCandidate(candidate.to_string()));
        }
        let param_target = if self.options.compare_output_param { param } else { candidate };
        let w = self.weights;
        let numerator = (w.alpha * string_similarity(api, candidate))
            * (w.beta * string_similarity(param, param_target))
            * (w.sigma * self.relevance.get(api, candidate));
        Ok(numerator / size as f64)
    }

    /// Top-`k` producers of `param` for `api`, by score descending then
    /// producer name. The consumer itself is never its own producer.
    pub fn rank(&self, api: &str, param: &str, k: usize) -> Vec<DependencyEdge> {
        let mut edges: Vec<DependencyEdge> = generate_candidates(self.catalog, param)
            .into_iter()
            .filter(|c| *c != api)
            .filter_map(|c| {
                let score = self.score(api, param, c).ok()?;
                Some(DependencyEdge {
                    consumer_api: api.to_string(),
                    input_param: param.to_string(),
                    producer_api: c.to_string(),
                    score,
                })
            })
            .collect();
        edges.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then_with(|| a.producer_api.cmp(&b.producer_api))
        });
        edges.truncate(k);
        edges
    }

    /// Ranked producers for every input parameter of `api`.
    pub fn rank_all(&self, api: &str, k: usize) -> Vec<DependencyEdge> {
        let Some(spec) = self.catalog.get(api) else {
            return Vec::new();
        };
        spec.input_params
            .iter()
            .flat_map(|p| self.rank(api, &p.name, k))
            .collect()
    }
}
