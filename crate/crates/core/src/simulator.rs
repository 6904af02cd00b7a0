//! Deterministic synthetic call-log generator.
//!
//! A [`Scenario`] describes a small API catalog, how each parameter's values
//! are drawn, which parameter subsets are sent and how often, and an ordered
//! list of error rules. [`generate`] turns it into a log whose ground truth is
//! known by construction, so every miner can be checked against it.
//!
//! Counts are allocated with exact quotas (largest remainder), not
//! independent draws: a 0.7/0.3 mix over 1000 calls yields exactly 700/300.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::parse_decimal;
use crate::dependency::ApiCatalog;
use crate::log_model::{ApiCallRecord, ApiSpec, LogError, OutcomeLabel, ParamType};

const MIX_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("unknown api {0}")]
    UnknownApi(String),
    #[error(transparent)]
    Spec(#[from] LogError),
    #[error("scenario json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Charset {
    Digits,
    Lower,
    Upper,
    Alnum,
}

impl Charset {
    fn chars(self) -> &'static [u8] {
        match self {
            Charset::Digits => b"0123456789",
            Charset::Lower => b"abcdefghijklmnopqrstuvwxyz",
            Charset::Upper => b"ABCDEFGHIJKLMNOPQRSTUVWXYZ",
            Charset::Alnum => b"0123456789abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weighted {
    pub weight: f64,
    pub generator: Generator,
}

/// How one parameter's values are produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Generator {
    /// Cycles through a fresh shuffle of the pool, so every value appears
    /// once per `values.len()` draws.
    Pool { values: Vec<String> },
    /// Emits `min`, then `max`, then uniform integers in between.
    IntRange { min: i64, max: i64 },
    /// `prefix` followed by `len` random digits.
    Digits {
        #[serde(default)]
        prefix: String,
        len: usize,
    },
    /// `prefix` followed by `len` random characters from `charset`.
    Prefixed { prefix: String, len: usize, charset: Charset },
    /// Space-separated words from a fixed lexicon.
    FreeText { min_words: usize, max_words: usize },
    /// Flat JSON object with digit-string values.
    Json { keys: Vec<String>, digits: usize },
    /// Picks one of several generators by weight.
    Mix { options: Vec<Weighted> },
}

const LEXICON: &[&str] = &[
    "hello", "order", "shipped", "welcome", "promo", "verify", "code", "notice", "验证码", "通知", "您好", "refund",
];

impl Generator {
    fn validate(&self, at: &str) -> Result<(), SimError> {
        let bad = |msg: &str| Err(SimError::InvalidScenario(format!("{at}: {msg}")));
        match self {
            Generator::Pool { values } if values.is_empty() => bad("empty pool"),
            Generator::IntRange { min, max } if min > max => bad("min above max"),
            Generator::FreeText { min_words, max_words } if min_words > max_words || *max_words == 0 => {
                bad("bad word bounds")
            }
            Generator::Json { keys, .. } if keys.is_empty() => bad("json without keys"),
            Generator::Mix { options } => {
                if options.is_empty() {
                    return bad("empty mix");
                }
                if options.iter().any(|o| !(o.weight.is_finite() && o.weight > 0.0)) {
                    return bad("mix weights must be positive");
                }
                options.iter().try_for_each(|o| o.generator.validate(at))
            }
            _ => Ok(()),
        }
    }
}

/// Per-parameter generator state; mirrors the [`Generator`] tree.
#[derive(Debug)]
enum GenState {
    Stateless,
    Pool { order: Vec<usize>, pos: usize },
    Range { emitted: u8 },
    Mix(Vec<GenState>),
}

impl GenState {
    fn for_generator(g: &Generator) -> GenState {
        match g {
            Generator::Pool { .. } => GenState::Pool { order: Vec::new(), pos: 0 },
            Generator::IntRange { .. } => GenState::Range { emitted: 0 },
            Generator::Mix { options } => GenState::Mix(options.iter().map(|o| GenState::for_generator(&o.generator)).collect()),
            _ => GenState::Stateless,
        }
    }
}

fn random_string(rng: &mut ChaCha8Rng, charset: Charset, len: usize) -> String {
    let chars = charset.chars();
    (0..len).map(|_| chars[rng.gen_range(0..chars.len())] as char).collect()
}

fn draw(g: &Generator, state: &mut GenState, rng: &mut ChaCha8Rng) -> String {
    match (g, state) {
        (Generator::Pool { values }, GenState::Pool { order, pos }) => {
            if *pos >= order.len() {
                *order = (0..values.len()).collect();
                order.shuffle(rng);
                *pos = 0;
            }
            let v = values[order[*pos]].clone();
            *pos += 1;
            v
        }
        (Generator::IntRange { min, max }, GenState::Range { emitted }) => {
            let v = match *emitted {
                0 => *min,
                1 => *max,
                _ => rng.gen_range(*min..=*max),
            };
            *emitted = emitted.saturating_add(1);
            v.to_string()
        }
        (Generator::Digits { prefix, len }, _) => format!("{prefix}{}", random_string(rng, Charset::Digits, *len)),
        (Generator::Prefixed { prefix, len, charset }, _) => format!("{prefix}{}", random_string(rng, *charset, *len)),
        (Generator::FreeText { min_words, max_words }, _) => {
            let n = rng.gen_range((*min_words).max(1)..=*max_words);
            (0..n).map(|_| *LEXICON.choose(rng).expect("lexicon")).collect::<Vec<_>>().join(" ")
        }
        (Generator::Json { keys, digits }, _) => {
            let map: serde_json::Map<String, serde_json::Value> = keys
                .iter()
                .map(|k| (k.clone(), serde_json::Value::String(random_string(rng, Charset::Digits, *digits))))
                .collect();
            serde_json::Value::Object(map).to_string()
        }
        (Generator::Mix { options }, GenState::Mix(states)) => {
            let total: f64 = options.iter().map(|o| o.weight).sum();
            let mut x = rng.gen::<f64>() * total;
            let mut pick = options.len() - 1;
            for (i, o) in options.iter().enumerate() {
                if x < o.weight {
                    pick = i;
                    break;
                }
                x -= o.weight;
            }
            draw(&options[pick].generator, &mut states[pick], rng)
        }
        (g, _) => unreachable!("generator state out of sync for {g:?}"),
    }
}

/// Condition over a call's parameters. Conditions on a parameter that is
/// absent are false, except [`Predicate::Missing`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Predicate {
    Missing { param: String },
    Equals { param: String, value: String },
    NotAllDigits { param: String },
    NotPrefix { param: String, prefix: String },
    NumberAbove { param: String, limit: f64 },
    LengthAbove { param: String, limit: usize },
}

impl Predicate {
    pub fn param(&self) -> &str {
        match self {
            Predicate::Missing { param }
            | Predicate::Equals { param, .. }
            | Predicate::NotAllDigits { param }
            | Predicate::NotPrefix { param, .. }
            | Predicate::NumberAbove { param, .. }
            | Predicate::LengthAbove { param, .. } => param,
        }
    }

    pub fn matches(&self, params: &[(String, String)]) -> bool {
        let value = params.iter().find(|(k, _)| k == self.param()).map(|(_, v)| v.as_str());
        match (self, value) {
            (Predicate::Missing { .. }, v) => v.is_none(),
            (_, None) => false,
            (Predicate::Equals { value, .. }, Some(v)) => v == value,
            (Predicate::NotAllDigits { .. }, Some(v)) => v.is_empty() || !v.bytes().all(|b| b.is_ascii_digit()),
            (Predicate::NotPrefix { prefix, .. }, Some(v)) => !v.starts_with(prefix.as_str()),
            (Predicate::NumberAbove { limit, .. }, Some(v)) => parse_decimal(v).is_some_and(|x| x > *limit),
            (Predicate::LengthAbove { limit, .. }, Some(v)) => v.chars().count() > *limit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRule {
    pub when: Predicate,
    pub code: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceShare {
    pub params: Vec<String>,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiScenario {
    pub spec: ApiSpec,
    pub weight: f64,
    pub generators: BTreeMap<String, Generator>,
    pub sequence_mix: Vec<SequenceShare>,
    #[serde(default)]
    pub rules: Vec<ErrorRule>,
}

impl ApiScenario {
    /// Outcome of a call: the first matching rule's code, else `Right`.
    pub fn outcome(&self, params: &[(String, String)]) -> OutcomeLabel {
        self.rules
            .iter()
            .find(|r| r.when.matches(params))
            .map(|r| OutcomeLabel::ErrorCode(r.code.clone()))
            .unwrap_or(OutcomeLabel::Right)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub seed: u64,
    pub apis: Vec<ApiScenario>,
    #[serde(default = "default_sessions")]
    pub sessions: usize,
    #[serde(default)]
    pub start_ts: u64,
    #[serde(default = "default_ts_step")]
    pub ts_step: u64,
}

fn default_sessions() -> usize {
    50
}

fn default_ts_step() -> u64 {
    1
}

/// Splits `n` into integer parts proportional to `weights`: floors first,
/// then the leftover units go to the largest remainders (lower index wins
/// ties). Parts always sum to `n` and each is within 1 of its exact share.
pub fn largest_remainder(weights: &[f64], n: usize) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    if weights.is_empty() || total <= 0.0 {
        return vec![0; weights.len()];
    }
    let exact: Vec<f64> = weights.iter().map(|w| w / total * n as f64).collect();
    let mut parts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = parts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (exact[a] - exact[a].floor(), exact[b] - exact[b].floor());
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        parts[i] += 1;
    }
    parts
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn catalog(&self) -> Result<ApiCatalog, SimError> {
        Ok(ApiCatalog::new(self.apis.iter().map(|a| a.spec.clone()))?)
    }

    pub fn api(&self, name: &str) -> Option<&ApiScenario> {
        self.apis.iter().find(|a| a.spec.name == name)
    }

    /// The same scenario restricted to one API (weights of the rest dropped).
    pub fn only(&self, name: &str) -> Result<Scenario, SimError> {
        let api = self.api(name).ok_or_else(|| SimError::UnknownApi(name.to_string()))?;
        Ok(Scenario { apis: vec![api.clone()], ..self.clone() })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let invalid = |m: String| Err(SimError::InvalidScenario(m));
        if self.apis.is_empty() {
            return invalid("no apis".into());
        }
        if self.sessions == 0 {
            return invalid("sessions must be positive".into());
        }
        self.catalog()?;
        for a in &self.apis {
            let name = &a.spec.name;
            if !(a.weight.is_finite() && a.weight > 0.0) {
                return invalid(format!("{name}: weight must be positive"));
            }
            if a.sequence_mix.is_empty() {
                return invalid(format!("{name}: empty sequence mix"));
            }
            let sum: f64 = a.sequence_mix.iter().map(|s| s.probability).sum();
            if (sum - 1.0).abs() > MIX_TOLERANCE || a.sequence_mix.iter().any(|s| s.probability < 0.0) {
                return invalid(format!("{name}: sequence mix sums to {sum}, not 1"));
            }
            for share in &a.sequence_mix {
                let distinct: BTreeSet<&String> = share.params.iter().collect();
                if distinct.len() != share.params.len() {
                    return invalid(format!("{name}: repeated parameter in a sequence"));
                }
                for p in &share.params {
                    if !a.spec.has_input(p) {
                        return invalid(format!("{name}: {p} is not an input parameter"));
                    }
                    if !a.generators.contains_key(p) {
                        return invalid(format!("{name}: no generator for {p}"));
                    }
                }
            }
            for (p, g) in &a.generators {
                g.validate(&format!("{name}.{p}"))?;
            }
        }
        Ok(())
    }

    /// Outcome the scenario's rules assign to a call.
    pub fn execute(&self, api: &str, params: &[(String, String)]) -> Result<OutcomeLabel, SimError> {
        let a = self.api(api).ok_or_else(|| SimError::UnknownApi(api.to_string()))?;
        Ok(a.outcome(params))
    }

    /// The default SMS scenario: SendSms (0.7/0.3 with and without OutId),
    /// AddSmsSign, AddSmsTemplate and QuerySendDetails, with five error rules.
    pub fn sms(seed: u64) -> Scenario {
        let s = |v: &str| v.to_string();
        let pool = |vs: &[&str]| Generator::Pool { values: vs.iter().map(|v| v.to_string()).collect() };
        let mix = |opts: Vec<(f64, Generator)>| Generator::Mix {
            options: opts.into_iter().map(|(weight, generator)| Weighted { weight, generator }).collect(),
        };
        let share = |params: &[&str], probability: f64| SequenceShare {
            params: params.iter().map(|p| p.to_string()).collect(),
            probability,
        };
        let rule = |when: Predicate, code: &str| ErrorRule { when, code: s(code) };
        let spec = |name: &str, inputs: &[&str], outputs: &[&str]| {
            ApiSpec::from_names(name, inputs, outputs).expect("static spec is valid")
        };
        let sign_names = pool(&["Aliyun", "AlibabaCloud", "DingTalk", "Taobao", "Alipay", "Youku", "Amap", "test_sign"]);

        let send_sms = ApiScenario {
            spec: spec(
                "SendSms",
                &["PhoneNumbers", "SignName", "TemplateCode", "TemplateParam", "OutId"],
                &["Code", "Message", "BizId", "RequestId"],
            ),
            weight: 0.55,
            generators: BTreeMap::from([
                (
                    s("PhoneNumbers"),
                    mix(vec![
                        (0.93, Generator::Digits { prefix: s("1"), len: 10 }),
                        (0.07, Generator::Prefixed { prefix: s("+86-"), len: 11, charset: Charset::Digits }),
                    ]),
                ),
                (s("SignName"), sign_names.clone()),
                (s("TemplateCode"), pool(&["SMS_100001", "SMS_100002", "SMS_153055065", "SMS_200310", "SMS_887766"])),
                (
                    s("TemplateParam"),
                    mix(vec![
                        (0.9, Generator::Json { keys: vec![s("code")], digits: 6 }),
                        (0.1, Generator::FreeText { min_words: 1, max_words: 3 }),
                    ]),
                ),
                (s("OutId"), Generator::Prefixed { prefix: s("out-"), len: 8, charset: Charset::Lower }),
            ]),
            sequence_mix: vec![
                share(&["PhoneNumbers", "SignName", "TemplateCode", "TemplateParam"], 0.7),
                share(&["PhoneNumbers", "SignName", "TemplateCode", "TemplateParam", "OutId"], 0.3),
            ],
            rules: vec![
                rule(Predicate::Equals { param: s("SignName"), value: s("test_sign") }, "isv.SMS_SIGNATURE_ILLEGAL"),
                rule(Predicate::NotAllDigits { param: s("PhoneNumbers") }, "isv.MOBILE_NUMBER_ILLEGAL"),
                rule(Predicate::NotPrefix { param: s("TemplateParam"), prefix: s("{") }, "isv.INVALID_JSON_PARAM"),
            ],
        };

        let add_sms_sign = ApiScenario {
            spec: spec(
                "AddSmsSign",
                &["SignName", "Remark", "SignFileList", "TemplateParam"],
                &["Code", "Message", "SignName", "RequestId"],
            ),
            weight: 0.15,
            generators: BTreeMap::from([
                (s("SignName"), sign_names),
                (s("Remark"), Generator::FreeText { min_words: 1, max_words: 4 }),
                (s("SignFileList"), Generator::Prefixed { prefix: s("file-"), len: 6, charset: Charset::Alnum }),
            ]),
            sequence_mix: vec![
                share(&["SignName", "Remark", "SignFileList"], 0.8),
                share(&["SignName", "SignFileList"], 0.2),
            ],
            rules: vec![rule(Predicate::Missing { param: s("Remark") }, "isv.REMARK_MISSING")],
        };

        let add_sms_template = ApiScenario {
            spec: spec(
                "AddSmsTemplate",
                &["TemplateType", "TemplateName", "TemplateContent", "Remark"],
                &["Code", "Message", "TemplateCode", "RequestId"],
            ),
            weight: 0.15,
            generators: BTreeMap::from([
                (s("TemplateType"), pool(&["0", "1", "2"])),
                (s("TemplateName"), Generator::Prefixed { prefix: s("tpl_"), len: 5, charset: Charset::Lower }),
                (s("TemplateContent"), Generator::FreeText { min_words: 2, max_words: 5 }),
                (s("Remark"), Generator::FreeText { min_words: 1, max_words: 3 }),
            ]),
            sequence_mix: vec![share(&["TemplateType", "TemplateName", "TemplateContent", "Remark"], 1.0)],
            rules: Vec::new(),
        };

        let mut query_spec = spec(
            "QuerySendDetails",
            &["PhoneNumber", "BizId", "SendDate", "PageSize", "CurrentPage"],
            &["Code", "Message", "TotalCount", "SmsSendDetailDTOs", "RequestId"],
        );
        for p in query_spec.input_params.iter_mut().filter(|p| p.name == "PageSize" || p.name == "CurrentPage") {
            p.declared_type = ParamType::Integer;
        }
        let query_send_details = ApiScenario {
            spec: query_spec,
            weight: 0.15,
            generators: BTreeMap::from([
                (s("PhoneNumber"), Generator::Digits { prefix: s("1"), len: 10 }),
                (s("BizId"), Generator::Prefixed { prefix: s(""), len: 12, charset: Charset::Digits }),
                (s("SendDate"), pool(&["20240101", "20240102", "20240103", "20240104", "20240105"])),
                (
                    s("PageSize"),
                    mix(vec![
                        (0.85, Generator::IntRange { min: 1, max: 50 }),
                        (0.15, Generator::IntRange { min: 100, max: 999 }),
                    ]),
                ),
                (s("CurrentPage"), Generator::IntRange { min: 1, max: 20 }),
            ]),
            sequence_mix: vec![
                share(&["PhoneNumber", "SendDate", "PageSize", "CurrentPage"], 0.6),
                share(&["PhoneNumber", "BizId", "SendDate", "PageSize", "CurrentPage"], 0.4),
            ],
            rules: vec![rule(Predicate::NumberAbove { param: s("PageSize"), limit: 50.0 }, "isv.PAGE_SIZE_ILLEGAL")],
        };

        Scenario {
            seed,
            apis: vec![send_sms, add_sms_sign, add_sms_template, query_send_details],
            sessions: default_sessions(),
            start_ts: 1_700_000_000,
            ts_step: default_ts_step(),
        }
    }
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario::sms(0)
    }
}

/// `n` records from `scenario`. Per-API counts and per-API sequence counts
/// follow exact quotas; the interleaving, values and sessions come from the
/// scenario seed. Outcome is the first matching rule, else `Right`.
pub fn generate(scenario: &Scenario, n: usize) -> Result<Vec<ApiCallRecord>, SimError> {
    scenario.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);

    let api_counts = largest_remainder(&scenario.apis.iter().map(|a| a.weight).collect::<Vec<_>>(), n);
    let mut slots: Vec<(usize, usize)> = Vec::with_capacity(n);
    for (ai, (api, &count)) in scenario.apis.iter().zip(&api_counts).enumerate() {
        let probs: Vec<f64> = api.sequence_mix.iter().map(|s| s.probability).collect();
        for (si, &c) in largest_remainder(&probs, count).iter().enumerate() {
            slots.extend(std::iter::repeat_n((ai, si), c));
        }
    }
    slots.shuffle(&mut rng);

    let mut states: Vec<BTreeMap<&str, GenState>> = scenario
        .apis
        .iter()
        .map(|a| a.generators.iter().map(|(p, g)| (p.as_str(), GenState::for_generator(g))).collect())
        .collect();

    let width = scenario.sessions.to_string().len();
    let mut records = Vec::with_capacity(n);
    for (i, (ai, si)) in slots.into_iter().enumerate() {
        let api = &scenario.apis[ai];
        let params: Vec<(String, String)> = api.sequence_mix[si]
            .params
            .iter()
            .map(|p| {
                let state = states[ai].get_mut(p.as_str()).expect("validated generator");
                (p.clone(), draw(&api.generators[p], state, &mut rng))
            })
            .collect();
        let session = rng.gen_range(0..scenario.sessions);
        records.push(ApiCallRecord {
            api: api.spec.name.clone(),
            outcome: api.outcome(&params),
            params,
            session_id: format!("s{session:0width$}"),
            timestamp: scenario.start_ts + i as u64 * scenario.ts_step,
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_generation() {
        assert!(generate(&Scenario::default(), 0).unwrap().is_empty());
    }

    #[test]
    fn sms_scenario_is_valid_and_round_trips() {
        let sc = Scenario::sms(3);
        sc.validate().unwrap();
        let back = Scenario::from_json(&sc.to_json()).unwrap();
        assert_eq!(back, sc);
        assert_eq!(sc.catalog().unwrap().len(), 4);
    }

    #[test]
    fn exact_quota_sequence_mix() {
        let sc = Scenario::sms(9).only("SendSms").unwrap();
        let recs = generate(&sc, 1000).unwrap();
        assert_eq!(recs.len(), 1000);
        let with_out_id = recs.iter().filter(|r| r.has_param("OutId")).count();
        assert_eq!(with_out_id, 300);
        assert!(recs.iter().all(|r| r.api == "SendSms"));
    }

    #[test]
    fn same_seed_same_log() {
        let a = generate(&Scenario::sms(5), 500).unwrap();
        let b = generate(&Scenario::sms(5), 500).unwrap();
        let c = generate(&Scenario::sms(6), 500).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn outcome_is_first_matching_rule() {
        let recs = generate(&Scenario::sms(1), 2000).unwrap();
        let sc = Scenario::sms(1);
        for r in &recs {
            let expected = if r.api == "SendSms" && r.param("SignName") == Some("test_sign") {
                OutcomeLabel::ErrorCode("isv.SMS_SIGNATURE_ILLEGAL".into())
            } else {
                sc.execute(&r.api, &r.params).unwrap()
            };
            assert_eq!(r.outcome, expected);
        }
        let codes: BTreeSet<&str> = recs.iter().map(|r| r.outcome.as_str()).collect();
        assert_eq!(codes.len(), 6, "{codes:?}");
    }

    #[test]
    fn missing_param_rule() {
        let mut sc = Scenario::sms(2).only("AddSmsSign").unwrap();
        sc.apis[0].rules = vec![ErrorRule {
            when: Predicate::Missing { param: "Remark".into() },
            code: "isv.SMS_SIGNATURE_ILLEGAL".into(),
        }];
        for r in generate(&sc, 300).unwrap() {
            assert_eq!(r.outcome.is_right(), r.has_param("Remark"));
        }
    }

    #[test]
    fn pools_and_ranges_are_fully_covered() {
        let recs = generate(&Scenario::sms(4).only("AddSmsTemplate").unwrap(), 3).unwrap();
        let types: BTreeSet<&str> = recs.iter().filter_map(|r| r.param("TemplateType")).collect();
        assert_eq!(types, BTreeSet::from(["0", "1", "2"]));
        let mut sc = Scenario::sms(4).only("QuerySendDetails").unwrap();
        sc.apis[0].generators.insert("PageSize".into(), Generator::IntRange { min: 5, max: 9 });
        let recs = generate(&sc, 2).unwrap();
        let sizes: BTreeSet<&str> = recs.iter().filter_map(|r| r.param("PageSize")).collect();
        assert_eq!(sizes, BTreeSet::from(["5", "9"]));
    }

    #[test]
    fn predicates() {
        let p = |k: &str, v: &str| vec![(k.to_string(), v.to_string())];
        let digits = Predicate::NotAllDigits { param: "P".into() };
        assert!(!digits.matches(&p("P", "123")));
        assert!(digits.matches(&p("P", "12a")));
        assert!(digits.matches(&p("P", "")));
        assert!(!digits.matches(&p("Q", "x")));
        let above = Predicate::NumberAbove { param: "S".into(), limit: 50.0 };
        assert!(above.matches(&p("S", "51")));
        assert!(!above.matches(&p("S", "50")));
        assert!(!above.matches(&p("S", "big")));
        assert!(Predicate::Missing { param: "S".into() }.matches(&[]));
        assert!(Predicate::LengthAbove { param: "S".into(), limit: 2 }.matches(&p("S", "abc")));
    }

    #[test]
    fn invalid_scenarios_are_rejected() {
        let mut sc = Scenario::sms(0);
        sc.apis[0].sequence_mix[0].probability = 0.6;
        assert!(matches!(sc.validate(), Err(SimError::InvalidScenario(_))));
        let mut sc = Scenario::sms(0);
        sc.apis[0].sequence_mix[0].params.push("Nope".into());
        assert!(sc.validate().is_err());
        let mut sc = Scenario::sms(0);
        sc.apis[0].generators.remove("OutId");
        assert!(sc.validate().is_err());
        assert!(matches!(Scenario::sms(0).execute("Nope", &[]), Err(SimError::UnknownApi(_))));
    }

    proptest! {
        #[test]
        fn largest_remainder_is_exact(weights in prop::collection::vec(0.01f64..10.0, 1..8), n in 0usize..5000) {
            let parts = largest_remainder(&weights, n);
            prop_assert_eq!(parts.iter().sum::<usize>(), n);
            let total: f64 = weights.iter().sum();
            for (w, p) in weights.iter().zip(&parts) {
                prop_assert!((*p as f64 - w / total * n as f64).abs() < 1.0 + 1e-9);
            }
        }
    }
}
