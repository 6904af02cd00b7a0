//! Per-API knowledge documents: mining, persistence and daily merges.
//!
//! Every field that has an exact merge is stored as raw counts (pattern
//! counts, length histogram, enum state, numeric range, presence counts,
//! sequence counts), so merging a day's batch into an existing document
//! gives the same result as re-mining the concatenated logs. The common
//! subsequence has no exact merge and is refolded from the stored partials.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::abstraction::{self, pattern_of, AbstractionProfile, DEFAULT_PATTERN_CAP};
use crate::constraints::{
    mine_enum, mine_numeric_range, parse_decimal, ConstraintError, EnumState, EnumStatus, NumericRange,
    RequirednessStat, DEFAULT_ENUM_THRESHOLD,
};
use crate::dependency::{session_relevance, ApiCatalog, DependencyEdge, RankWeights, Ranker};
use crate::log_model::{ApiCallRecord, ParamType};
use crate::sequences::{mine_sequences, FilterConfig, SequenceRow};

pub const SCHEMA_VERSION: u64 = 1;
pub const DOCUMENT_EXTENSION: &str = "json";

#[derive(Debug, Error)]
pub enum KnowledgeError {
    #[error("schema version {found:?} is not supported (expected {expected})")]
    SchemaVersionMismatch { found: Option<u64>, expected: u64 },
    #[error("malformed knowledge document: {0}")]
    MalformedDocument(String),
    #[error("cannot merge knowledge of {0} into {1}")]
    ApiMismatch(String, String),
    #[error("api name {0:?} cannot be used as a file name")]
    InvalidApiName(String),
    #[error("invalid mining config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MineConfig {
    pub enum_threshold: usize,
    pub pattern_cap: usize,
    /// Values per map chunk when profiling a parameter.
    pub chunk_size: usize,
    pub examples: usize,
    /// Producers kept per input parameter.
    pub edge_k: usize,
    pub weights: RankWeights,
    pub filter: FilterConfig,
    /// Mine enumerations and numeric ranges from `Right` calls only, so
    /// they describe values that are known to work.
    pub constraints_successful_only: bool,
}

impl Default for MineConfig {
    fn default() -> Self {
        MineConfig {
            enum_threshold: DEFAULT_ENUM_THRESHOLD,
            pattern_cap: DEFAULT_PATTERN_CAP,
            chunk_size: 1024,
            examples: 3,
            edge_k: 5,
            weights: RankWeights::default(),
            filter: FilterConfig::default(),
            constraints_successful_only: true,
        }
    }
}

impl MineConfig {
    pub fn validate(&self) -> Result<(), KnowledgeError> {
        let bad = |m: &str| Err(KnowledgeError::InvalidConfig(m.to_string()));
        if self.enum_threshold < 2 {
            return bad("enum threshold must be at least 2");
        }
        if self.pattern_cap == 0 || self.chunk_size == 0 {
            return bad("pattern cap and chunk size must be positive");
        }
        RankWeights::new(self.weights.alpha, self.weights.beta, self.weights.sigma)
            .map_err(|e| KnowledgeError::InvalidConfig(e.to_string()))?;
        Ok(())
    }
}

/// Enumeration summary stored in a document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnumSummary {
    pub status: EnumStatus,
    pub threshold: usize,
    pub values: BTreeSet<String>,
}

impl EnumSummary {
    fn from_state(s: &EnumState) -> Self {
        EnumSummary {
            status: s.status,
            threshold: s.threshold,
            values: s.values.clone(),
        }
    }

    fn to_state(&self, api: &str, param: &str) -> Result<EnumState, ConstraintError> {
        let mut s = EnumState::new(api, param, self.threshold)?;
        s.status = self.status;
        s.values = self.values.clone();
        Ok(s)
    }

    /// Allowed values, if the parameter is enumerable and was observed.
    pub fn allowed(&self) -> Option<&BTreeSet<String>> {
        (self.status == EnumStatus::Enumerable && !self.values.is_empty()).then_some(&self.values)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamKnowledge {
    /// Seen in the log but not declared as an input of the API.
    #[serde(default)]
    pub unspecified_param: bool,
    #[serde(default)]
    pub declared_type: ParamType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abstraction: Option<AbstractionProfile>,
    pub enum_values: EnumSummary,
    pub numeric_range: NumericRange,
    pub required: RequirednessStat,
    #[serde(default)]
    pub examples: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiKnowledge {
    pub schema_version: u64,
    pub api: String,
    /// Latest timestamp of the log the document was mined from.
    pub generated_at: u64,
    pub record_count: u64,
    pub success_count: u64,
    pub params: BTreeMap<String, ParamKnowledge>,
    pub sequences: Vec<SequenceRow>,
    pub edges: Vec<DependencyEdge>,
}

impl ApiKnowledge {
    /// Minimal valid document.
    pub fn empty(api: impl Into<String>) -> Self {
        ApiKnowledge {
            schema_version: SCHEMA_VERSION,
            api: api.into(),
            generated_at: 0,
            record_count: 0,
            success_count: 0,
            params: BTreeMap::new(),
            sequences: Vec::new(),
            edges: Vec::new(),
        }
    }

    pub fn producers(&self, param: &str, k: usize) -> Vec<&DependencyEdge> {
        self.edges.iter().filter(|e| e.input_param == param).take(k).collect()
    }

    /// Structural checks applied on load.
    pub fn validate(&self) -> Result<(), KnowledgeError> {
        let bad = |m: String| Err(KnowledgeError::MalformedDocument(m));
        if self.schema_version != SCHEMA_VERSION {
            return Err(KnowledgeError::SchemaVersionMismatch {
                found: Some(self.schema_version),
                expected: SCHEMA_VERSION,
            });
        }
        if self.success_count > self.record_count {
            return bad("success_count exceeds record_count".into());
        }
        for (name, p) in &self.params {
            if p.required.present_count > p.required.total_success_count {
                return bad(format!("{name}: present_count exceeds total_success_count"));
            }
            if let Some(top) = p.abstraction.as_ref().and_then(|a| a.top_pattern()) {
                if let Some(e) = p.examples.iter().find(|e| pattern_of(e) != top) {
                    return bad(format!("{name}: example {e:?} does not match top pattern {top:?}"));
                }
            }
        }
        if self.edges.iter().any(|e| e.consumer_api != self.api) {
            return bad("edge with a foreign consumer".into());
        }
        Ok(())
    }

    /// Rule-level checks of a request against the mined constraints.
    pub fn check(&self, params: &[(String, String)]) -> Vec<ConstraintCheck> {
        let mut checks = Vec::new();
        let given: BTreeMap<&str, &str> = params.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect();
        for (name, p) in &self.params {
            let value = given.get(name.as_str()).copied();
            if p.required.inferred_required {
                checks.push(ConstraintCheck::new(name, CheckKind::Required, value.is_some(), || {
                    "parameter is required".to_string()
                }));
            }
            let Some(v) = value else { continue };
            if let Some(allowed) = p.enum_values.allowed() {
                checks.push(ConstraintCheck::new(name, CheckKind::Enum, allowed.contains(v), || {
                    format!("{v:?} is not one of {allowed:?}")
                }));
            }
            if matches!(p.declared_type, ParamType::Integer | ParamType::Decimal) {
                if let Some((lo, hi)) = p.numeric_range.reported() {
                    let ok = parse_decimal(v).is_some_and(|x| (lo..=hi).contains(&x));
                    checks.push(ConstraintCheck::new(name, CheckKind::Range, ok, || {
                        format!("{v:?} is outside [{lo}, {hi}]")
                    }));
                }
            }
        }
        for name in given.keys().filter(|k| !self.params.contains_key(**k)) {
            checks.push(ConstraintCheck::new(name, CheckKind::Known, false, || {
                "parameter never seen for this api".to_string()
            }));
        }
        checks
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Required,
    Enum,
    Range,
    Known,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintCheck {
    pub param: String,
    pub kind: CheckKind,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl ConstraintCheck {
    fn new(param: &str, kind: CheckKind, passed: bool, detail: impl FnOnce() -> String) -> Self {
        ConstraintCheck {
            param: param.to_string(),
            kind,
            passed,
            detail: (!passed).then(detail),
        }
    }
}

fn mine_param(
    api: &str,
    records: &[&ApiCallRecord],
    name: &str,
    declared: Option<ParamType>,
    success_count: u64,
    cfg: &MineConfig,
) -> Result<ParamKnowledge, KnowledgeError> {
    let values: Vec<&str> = records.iter().filter_map(|r| r.param(name)).collect();
    let constraint_values = records
        .iter()
        .filter(|r| !cfg.constraints_successful_only || r.outcome.is_right())
        .filter_map(|r| r.param(name));
    let abstraction = if values.is_empty() {
        None
    } else {
        Some(abstraction::profile_values(&values, cfg.chunk_size, cfg.pattern_cap).expect("non-empty values"))
    };
    let examples = abstraction
        .as_ref()
        .map(|a| abstraction::representative_examples(&values, a, cfg.examples))
        .unwrap_or_default();
    let enum_state = mine_enum(api, name, constraint_values.clone(), cfg.enum_threshold)?;
    let present = records
        .iter()
        .filter(|r| r.outcome.is_right() && r.has_param(name))
        .count() as u64;
    Ok(ParamKnowledge {
        unspecified_param: declared.is_none(),
        declared_type: declared.unwrap_or_default(),
        abstraction,
        enum_values: EnumSummary::from_state(&enum_state),
        numeric_range: mine_numeric_range(constraint_values),
        required: RequirednessStat::new(present, success_count),
        examples,
    })
}

/// Mines one document per API found in the catalog or the log.
pub fn mine_knowledge(
    records: &[ApiCallRecord],
    catalog: &ApiCatalog,
    cfg: &MineConfig,
) -> Result<Vec<ApiKnowledge>, KnowledgeError> {
    cfg.validate()?;
    let mut by_api: BTreeMap<&str, Vec<&ApiCallRecord>> = catalog.specs().map(|s| (s.name.as_str(), Vec::new())).collect();
    for r in records {
        by_api.entry(r.api.as_str()).or_default().push(r);
    }
    let generated_at = records.iter().map(|r| r.timestamp).max().unwrap_or(0);
    let sequences = mine_sequences(records, &cfg.filter);
    let relevance = session_relevance(records);
    let ranker = Ranker::new(catalog, &relevance, cfg.weights);

    let mut docs = Vec::with_capacity(by_api.len());
    for (api, recs) in by_api {
        let spec = catalog.get(api);
        let success_count = recs.iter().filter(|r| r.outcome.is_right()).count() as u64;
        let mut names: BTreeMap<&str, Option<ParamType>> = BTreeMap::new();
        if let Some(spec) = spec {
            for p in &spec.input_params {
                names.insert(&p.name, Some(p.declared_type));
            }
        }
        for r in &recs {
            for (k, _) in &r.params {
                if !cfg.filter.drops(k) {
                    names.entry(k.as_str()).or_insert(None);
                }
            }
        }
        let params = names
            .into_iter()
            .map(|(name, declared)| Ok((name.to_string(), mine_param(api, &recs, name, declared, success_count, cfg)?)))
            .collect::<Result<BTreeMap<_, _>, KnowledgeError>>()?;
        let edges = if spec.is_some() { ranker.rank_all(api, cfg.edge_k) } else { Vec::new() };
        docs.push(ApiKnowledge {
            schema_version: SCHEMA_VERSION,
            api: api.to_string(),
            generated_at,
            record_count: recs.len() as u64,
            success_count,
            params,
            sequences: sequences.rows(api),
            edges,
        });
    }
    Ok(docs)
}

fn merge_sequences(a: &[SequenceRow], b: &[SequenceRow]) -> Vec<SequenceRow> {
    let mut counts: BTreeMap<&Vec<String>, u64> = BTreeMap::new();
    for row in a.iter().chain(b) {
        *counts.entry(&row.params).or_insert(0) += row.count;
    }
    let total: u64 = counts.values().sum();
    let mut rows: Vec<SequenceRow> = counts
        .into_iter()
        .map(|(params, count)| SequenceRow {
            params: params.clone(),
            count,
            rate: count as f64 / total as f64,
        })
        .collect();
    rows.sort_by(|x, y| y.count.cmp(&x.count).then_with(|| x.params.cmp(&y.params)));
    rows
}

/// Union of both edge lists. A producer scored in the new batch keeps the
/// new score, since it reflects the latest session data; each parameter's
/// list is then re-sorted and cut to the longer of the two input lists.
fn merge_edges(existing: &[DependencyEdge], batch: &[DependencyEdge]) -> Vec<DependencyEdge> {
    let mut by_param: BTreeMap<&str, BTreeMap<&str, &DependencyEdge>> = BTreeMap::new();
    let mut limits: BTreeMap<&str, usize> = BTreeMap::new();
    for list in [existing, batch] {
        let mut per_param: BTreeMap<&str, usize> = BTreeMap::new();
        for e in list {
            by_param.entry(&e.input_param).or_default().insert(&e.producer_api, e);
            *per_param.entry(&e.input_param).or_insert(0) += 1;
        }
        for (p, n) in per_param {
            let limit = limits.entry(p).or_insert(0);
            *limit = (*limit).max(n);
        }
    }
    let mut out = Vec::new();
    for (param, producers) in by_param {
        let mut edges: Vec<DependencyEdge> = producers.into_values().cloned().collect();
        edges.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.producer_api.cmp(&b.producer_api)));
        edges.truncate(limits[param]);
        out.extend(edges);
    }
    out
}

fn merge_param(
    api: &str,
    name: &str,
    a: Option<&ParamKnowledge>,
    b: Option<&ParamKnowledge>,
    success_count: u64,
    cfg: &MineConfig,
) -> Result<ParamKnowledge, KnowledgeError> {
    let (base, other) = match (a, b) {
        (Some(a), Some(b)) => (a, Some(b)),
        (Some(a), None) | (None, Some(a)) => (a, None),
        (None, None) => unreachable!("parameter from neither document"),
    };
    let mut merged = base.clone();
    merged.required = RequirednessStat::new(
        a.map_or(0, |p| p.required.present_count) + b.map_or(0, |p| p.required.present_count),
        success_count,
    );
    let Some(other) = other else { return Ok(merged) };
    merged.unspecified_param = base.unspecified_param && other.unspecified_param;
    if merged.declared_type == ParamType::Unknown {
        merged.declared_type = other.declared_type;
    }
    merged.abstraction = match (&base.abstraction, &other.abstraction) {
        (Some(x), Some(y)) => Some(x.merge(y, cfg.pattern_cap)),
        (x, y) => x.clone().or_else(|| y.clone()),
    };
    let left = base.enum_values.to_state(api, name)?;
    let right = other.enum_values.to_state(api, name)?;
    merged.enum_values = EnumSummary::from_state(&left.merge(&right)?);
    merged.numeric_range = base.numeric_range.merge(&other.numeric_range);
    merged.examples = match merged.abstraction.as_ref().and_then(|p| p.top_pattern()) {
        Some(top) => base
            .examples
            .iter()
            .chain(&other.examples)
            .filter(|e| pattern_of(e) == top)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .take(cfg.examples)
            .cloned()
            .collect(),
        None => Vec::new(),
    };
    Ok(merged)
}

/// Folds a day's batch into an existing document of the same API.
pub fn merge_daily(existing: &ApiKnowledge, batch: &ApiKnowledge, cfg: &MineConfig) -> Result<ApiKnowledge, KnowledgeError> {
    if existing.api != batch.api {
        return Err(KnowledgeError::ApiMismatch(batch.api.clone(), existing.api.clone()));
    }
    let success_count = existing.success_count + batch.success_count;
    let names: BTreeSet<&String> = existing.params.keys().chain(batch.params.keys()).collect();
    let params = names
        .into_iter()
        .map(|n| {
            let p = merge_param(&existing.api, n, existing.params.get(n), batch.params.get(n), success_count, cfg)?;
            Ok((n.clone(), p))
        })
        .collect::<Result<BTreeMap<_, _>, KnowledgeError>>()?;
    Ok(ApiKnowledge {
        schema_version: SCHEMA_VERSION,
        api: existing.api.clone(),
        generated_at: existing.generated_at.max(batch.generated_at),
        record_count: existing.record_count + batch.record_count,
        success_count,
        params,
        sequences: merge_sequences(&existing.sequences, &batch.sequences),
        edges: merge_edges(&existing.edges, &batch.edges),
    })
}

pub fn to_json(doc: &ApiKnowledge) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("knowledge serializes");
    s.push('\n');
    s
}

pub fn from_json(text: &str) -> Result<ApiKnowledge, KnowledgeError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| KnowledgeError::MalformedDocument(e.to_string()))?;
    let found = value.get("schema_version").and_then(serde_json::Value::as_u64);
    if found != Some(SCHEMA_VERSION) {
        return Err(KnowledgeError::SchemaVersionMismatch {
            found,
            expected: SCHEMA_VERSION,
        });
    }
    let doc: ApiKnowledge =
        serde_json::from_value(value).map_err(|e| KnowledgeError::MalformedDocument(e.to_string()))?;
    doc.validate()?;
    Ok(doc)
}

/// Writes to a sibling temp file, then renames over `path`.
pub fn save(doc: &ApiKnowledge, path: impl AsRef<Path>) -> Result<(), KnowledgeError> {
    let path = path.as_ref();
    let file_name = path
        .file_name()
        .ok_or_else(|| KnowledgeError::InvalidApiName(path.display().to_string()))?
        .to_string_lossy();
    let tmp = path.with_file_name(format!(".{file_name}.tmp"));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(to_json(doc).as_bytes())?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<ApiKnowledge, KnowledgeError> {
    from_json(&fs::read_to_string(path)?)
}

pub fn document_path(dir: impl AsRef<Path>, api: &str) -> Result<PathBuf, KnowledgeError> {
    let ok = !api.is_empty()
        && !api.starts_with('.')
        && api.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'));
    if !ok {
        return Err(KnowledgeError::InvalidApiName(api.to_string()));
    }
    Ok(dir.as_ref().join(format!("{api}.{DOCUMENT_EXTENSION}")))
}

/// Saves every document as `<dir>/<api>.json`.
pub fn save_all(dir: impl AsRef<Path>, docs: &[ApiKnowledge]) -> Result<Vec<PathBuf>, KnowledgeError> {
    fs::create_dir_all(dir.as_ref())?;
    docs.iter()
        .map(|d| {
            let path = document_path(dir.as_ref(), &d.api)?;
            save(d, &path)?;
            Ok(path)
        })
        .collect()
}

/// Loads every `*.json` document in `dir`, keyed by API name.
pub fn load_all(dir: impl AsRef<Path>) -> Result<BTreeMap<String, ApiKnowledge>, KnowledgeError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    paths.retain(|p| {
        p.extension().is_some_and(|e| e == DOCUMENT_EXTENSION)
            && !p.file_name().is_some_and(|n| n.to_string_lossy().starts_with('.'))
    });
    paths.sort();
    let mut docs = BTreeMap::new();
    for p in paths {
        let doc = load(&p)?;
        docs.insert(doc.api.clone(), doc);
    }
    Ok(docs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::log_model::OutcomeLabel;
    use crate::simulator::{generate, Scenario};

    fn sms_docs(n: usize, seed: u64) -> (Vec<ApiCallRecord>, Vec<ApiKnowledge>) {
        let sc = Scenario::sms(seed);
        let records = generate(&sc, n).unwrap();
        let docs = mine_knowledge(&records, &sc.catalog().unwrap(), &MineConfig::default()).unwrap();
        (records, docs)
    }

    fn doc<'a>(docs: &'a [ApiKnowledge], api: &str) -> &'a ApiKnowledge {
        docs.iter().find(|d| d.api == api).unwrap()
    }

    #[test]
    fn empty_document_is_valid_and_round_trips() {
        let d = ApiKnowledge::empty("Nothing");
        d.validate().unwrap();
        assert_eq!(from_json(&to_json(&d)).unwrap(), d);
    }

    #[test]
    fn recovers_scenario_ground_truth() {
        let (_, docs) = sms_docs(4000, 7);
        assert_eq!(docs.len(), 4);
        let send = doc(&docs, "SendSms");
        let signs = &send.params["SignName"].enum_values;
        assert_eq!(signs.status, EnumStatus::Enumerable);
        assert_eq!(signs.values.len(), 7);
        assert!(!signs.values.contains("test_sign"));
        assert!(send.params["PhoneNumbers"].required.inferred_required);
        assert!(!send.params["OutId"].required.inferred_required);
        assert_eq!(send.params["PhoneNumbers"].abstraction.as_ref().unwrap().top_pattern(), Some("d"));
        let rates: Vec<f64> = send.sequences.iter().map(|r| r.rate).collect();
        assert_eq!(rates, vec![0.7, 0.3]);
        assert_eq!(send.edges.iter().find(|e| e.input_param == "SignName").unwrap().producer_api, "AddSmsSign");

        let query = doc(&docs, "QuerySendDetails");
        assert_eq!(query.params["PageSize"].numeric_range.reported(), Some((1.0, 50.0)));
        assert_eq!(query.params["PageSize"].enum_values.status, EnumStatus::NotEnumerable);
        let tpl = doc(&docs, "AddSmsTemplate");
        let types: Vec<&str> = tpl.params["TemplateType"].enum_values.values.iter().map(String::as_str).collect();
        assert_eq!(types, ["0", "1", "2"]);
        assert!(doc(&docs, "AddSmsSign").params["SignName"].required.inferred_required);
        for d in &docs {
            d.validate().unwrap();
        }
    }

    #[test]
    fn unspecified_params_are_flagged() {
        let sc = Scenario::sms(1);
        let mut records = generate(&sc, 200).unwrap();
        records[0].params.push(("Extra".into(), "1".into()));
        records[1].params.push(("Signature".into(), "abc".into()));
        let api = records[0].api.clone();
        let docs = mine_knowledge(&records, &sc.catalog().unwrap(), &MineConfig::default()).unwrap();
        let d = doc(&docs, &api);
        assert!(d.params["Extra"].unspecified_param);
        assert!(!d.params.contains_key("Signature"));
        assert!(d.params.values().filter(|p| !p.unspecified_param).count() >= 3);
    }

    #[test]
    fn save_load_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let (_, docs) = sms_docs(500, 2);
        let paths = save_all(dir.path(), &docs).unwrap();
        assert_eq!(paths.len(), docs.len());
        let loaded = load_all(dir.path()).unwrap();
        assert_eq!(loaded.len(), docs.len());
        for d in &docs {
            assert_eq!(&loaded[&d.api], d);
        }

        let text = to_json(&docs[0]);
        let bumped = text.replacen("\"schema_version\": 1", "\"schema_version\": 99", 1);
        assert!(matches!(
            from_json(&bumped),
            Err(KnowledgeError::SchemaVersionMismatch { found: Some(99), .. })
        ));
        assert!(matches!(from_json(&text[..text.len() / 2]), Err(KnowledgeError::MalformedDocument(_))));
        assert!(matches!(from_json("{\"schema_version\": 1}"), Err(KnowledgeError::MalformedDocument(_))));
        assert!(document_path(dir.path(), "../x").is_err());
    }

    #[test]
    fn merge_with_empty_batch_keeps_document() {
        let (_, docs) = sms_docs(600, 3);
        for d in &docs {
            let empty = ApiKnowledge::empty(d.api.clone());
            let merged = merge_daily(d, &empty, &MineConfig::default()).unwrap();
            assert_eq!(&merged, d);
        }
        assert!(matches!(
            merge_daily(&docs[0], &docs[1], &MineConfig::default()),
            Err(KnowledgeError::ApiMismatch(..))
        ));
    }

    #[test]
    fn merge_matches_full_recompute_on_mergeable_fields() {
        let sc = Scenario::sms(11);
        let catalog = sc.catalog().unwrap();
        let cfg = MineConfig::default();
        let records = generate(&sc, 3000).unwrap();
        let (day1, day2) = records.split_at(1900);
        let a = mine_knowledge(day1, &catalog, &cfg).unwrap();
        let b = mine_knowledge(day2, &catalog, &cfg).unwrap();
        let full = mine_knowledge(&records, &catalog, &cfg).unwrap();
        for ((x, y), f) in a.iter().zip(&b).zip(&full) {
            let m = merge_daily(x, y, &cfg).unwrap();
            assert_eq!((m.record_count, m.success_count, m.generated_at), (f.record_count, f.success_count, f.generated_at));
            assert_eq!(m.sequences, f.sequences);
            for (name, fp) in &f.params {
                let mp = &m.params[name];
                let counts = |a: &Option<AbstractionProfile>| {
                    a.as_ref().map(|a| (a.patterns.clone(), a.lengths.clone(), a.values_seen))
                };
                assert_eq!(counts(&mp.abstraction), counts(&fp.abstraction), "{}.{name}", f.api);
                assert_eq!(mp.enum_values, fp.enum_values);
                assert_eq!(mp.numeric_range, fp.numeric_range);
                assert_eq!(mp.required, fp.required);
                let top = fp.abstraction.as_ref().and_then(|a| a.top_pattern());
                assert!(mp.examples.iter().all(|e| Some(pattern_of(e).as_str()) == top));
            }
            m.validate().unwrap();
        }
    }

    #[test]
    fn not_enumerable_survives_merge() {
        let (_, docs) = sms_docs(600, 4);
        let d = doc(&docs, "SendSms");
        let mut batch = ApiKnowledge::empty("SendSms");
        let mut p = d.params["PhoneNumbers"].clone();
        p.enum_values = EnumSummary {
            status: EnumStatus::Enumerable,
            threshold: DEFAULT_ENUM_THRESHOLD,
            values: BTreeSet::from(["1".to_string()]),
        };
        batch.params.insert("PhoneNumbers".into(), p);
        let m = merge_daily(d, &batch, &MineConfig::default()).unwrap();
        assert_eq!(m.params["PhoneNumbers"].enum_values.status, EnumStatus::NotEnumerable);
        assert!(m.params["PhoneNumbers"].enum_values.values.is_empty());
    }

    #[test]
    fn checks_report_violations() {
        let (_, docs) = sms_docs(2000, 5);
        let send = doc(&docs, "SendSms");
        let params = |pairs: &[(&str, &str)]| -> Vec<(String, String)> {
            pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
        };
        let good = params(&[
            ("PhoneNumbers", "13800138000"),
            ("SignName", "Aliyun"),
            ("TemplateCode", "SMS_100001"),
            ("TemplateParam", "{\"code\":\"123456\"}"),
        ]);
        let checks = send.check(&good);
        assert!(checks.iter().all(|c| c.passed), "{checks:?}");
        assert!(checks.iter().any(|c| c.kind == CheckKind::Enum));

        let bad = params(&[("PhoneNumbers", "13800138000"), ("SignName", "test_sign"), ("Bogus", "1")]);
        let checks = send.check(&bad);
        let failed: Vec<(&str, CheckKind)> =
            checks.iter().filter(|c| !c.passed).map(|c| (c.param.as_str(), c.kind)).collect();
        assert!(failed.contains(&("SignName", CheckKind::Enum)));
        assert!(failed.contains(&("TemplateCode", CheckKind::Required)));
        assert!(failed.contains(&("Bogus", CheckKind::Known)));

        let query = doc(&docs, "QuerySendDetails");
        let big = query.check(&params(&[("PageSize", "500")]));
        assert!(big.iter().any(|c| c.param == "PageSize" && c.kind == CheckKind::Range && !c.passed));
    }

    #[test]
    fn mining_is_deterministic() {
        let (_, a) = sms_docs(800, 9);
        let (_, b) = sms_docs(800, 9);
        let ja: Vec<String> = a.iter().map(to_json).collect();
        let jb: Vec<String> = b.iter().map(to_json).collect();
        assert_eq!(ja, jb);
    }

    #[test]
    fn catalog_only_api_gets_minimal_document() {
        let sc = Scenario::sms(0);
        let records = vec![ApiCallRecord {
            api: "SendSms".into(),
            params: vec![("PhoneNumbers".into(), "1".into())],
            outcome: OutcomeLabel::Right,
            session_id: "s".into(),
            timestamp: 5,
        }];
        let docs = mine_knowledge(&records, &sc.catalog().unwrap(), &MineConfig::default()).unwrap();
        let sign = doc(&docs, "AddSmsSign");
        assert_eq!(sign.record_count, 0);
        assert_eq!(sign.generated_at, 5);
        assert!(sign.params["Remark"].abstraction.is_none());
        sign.validate().unwrap();
    }
}
