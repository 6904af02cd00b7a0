//! API specifications, call records and the JSON-lines call-log format.

use std::collections::BTreeSet;
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

/// Reserved outcome string for a successful call.
pub const RIGHT: &str = "Right";

#[derive(Debug, Error)]
pub enum LogError {
    #[error("line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("empty line")]
    EmptyLine,
    #[error("invalid api spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamType {
    String,
    Integer,
    Decimal,
    #[default]
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub declared_required: Option<bool>,
    #[serde(default)]
    pub declared_type: ParamType,
}

impl ParamSpec {
    pub fn new(name: impl Into<String>) -> Self {
        ParamSpec {
            name: name.into(),
            declared_required: None,
            declared_type: ParamType::Unknown,
        }
    }

    pub fn typed(name: impl Into<String>, ty: ParamType) -> Self {
        ParamSpec {
            declared_type: ty,
            ..ParamSpec::new(name)
        }
    }
}

/// Declared shape of one API: its input and output parameter lists.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiSpec {
    pub name: String,
    pub input_params: Vec<ParamSpec>,
    pub output_params: Vec<ParamSpec>,
}

impl ApiSpec {
    /// Builds a spec from plain parameter names, validating it.
    pub fn from_names(name: &str, inputs: &[&str], outputs: &[&str]) -> Result<Self, LogError> {
        let spec = ApiSpec {
            name: name.to_string(),
            input_params: inputs.iter().map(|n| ParamSpec::new(*n)).collect(),
            output_params: outputs.iter().map(|n| ParamSpec::new(*n)).collect(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), LogError> {
        if self.name.is_empty() {
            return Err(LogError::InvalidSpec("empty api name".into()));
        }
        for (side, list) in [("input", &self.input_params), ("output", &self.output_params)] {
            let mut seen = BTreeSet::new();
            for p in list {
                if p.name.is_empty() {
                    return Err(LogError::InvalidSpec(format!("{}: empty {side} parameter name", self.name)));
                }
                if !seen.insert(p.name.as_str()) {
                    return Err(LogError::InvalidSpec(format!(
                        "{}: duplicate {side} parameter {}",
                        self.name, p.name
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn has_input(&self, param: &str) -> bool {
        self.input_params.iter().any(|p| p.name == param)
    }

    pub fn has_output(&self, param: &str) -> bool {
        self.output_params.iter().any(|p| p.name == param)
    }
}

/// Outcome class of a call: success or a provider error code.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum OutcomeLabel {
    Right,
    ErrorCode(String),
}

impl OutcomeLabel {
    pub fn parse(s: &str) -> Result<Self, String> {
        match s {
            "" => Err("empty outcome".to_string()),
            RIGHT => Ok(OutcomeLabel::Right),
            code => Ok(OutcomeLabel::ErrorCode(code.to_string())),
        }
    }

    pub fn is_right(&self) -> bool {
        matches!(self, OutcomeLabel::Right)
    }

    pub fn as_str(&self) -> &str {
        match self {
            OutcomeLabel::Right => RIGHT,
            OutcomeLabel::ErrorCode(c) => c,
        }
    }
}

impl TryFrom<String> for OutcomeLabel {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        OutcomeLabel::parse(&s)
    }
}

impl From<OutcomeLabel> for String {
    fn from(l: OutcomeLabel) -> String {
        l.as_str().to_string()
    }
}

impl fmt::Display for OutcomeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One logged API request. Parameters keep the order they had in the log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiCallRecord {
    pub api: String,
    pub params: Vec<(String, String)>,
    pub outcome: OutcomeLabel,
    pub session_id: String,
    pub timestamp: u64,
}

impl ApiCallRecord {
    pub fn param(&self, name: &str) -> Option<&str> {
        self.params.iter().find(|(k, _)| k == name).map(|(_, v)| v.as_str())
    }

    pub fn has_param(&self, name: &str) -> bool {
        self.params.iter().any(|(k, _)| k == name)
    }

    /// Canonical log line for this record (no trailing newline).
    pub fn to_json_line(&self) -> String {
        let mut params = Map::new();
        for (k, v) in &self.params {
            params.insert(k.clone(), Value::String(v.clone()));
        }
        let mut obj = Map::new();
        obj.insert("api".into(), Value::String(self.api.clone()));
        obj.insert("params".into(), Value::Object(params));
        obj.insert("outcome".into(), Value::String(self.outcome.as_str().to_string()));
        obj.insert("session".into(), Value::String(self.session_id.clone()));
        obj.insert("ts".into(), Value::from(self.timestamp));
        Value::Object(obj).to_string()
    }
}

fn malformed(line: usize, reason: impl Into<String>) -> LogError {
    LogError::MalformedRecord {
        line,
        reason: reason.into(),
    }
}

/// Parses one log line. `line_no` is only used in error reports.
pub fn parse_record(line: &str, line_no: usize) -> Result<ApiCallRecord, LogError> {
    let trimmed = line.trim();
    if trimmed.is_empty() {
        return Err(LogError::EmptyLine);
    }
    let value: Value = serde_json::from_str(trimmed).map_err(|e| malformed(line_no, e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| malformed(line_no, "record is not a JSON object"))?;
    let str_field = |name: &str| -> Result<String, LogError> {
        match obj.get(name) {
            Some(Value::String(s)) => Ok(s.clone()),
            Some(_) => Err(malformed(line_no, format!("field `{name}` must be a string"))),
            None => Err(malformed(line_no, format!("missing field `{name}`"))),
        }
    };

    let api = str_field("api")?;
    if api.is_empty() {
        return Err(malformed(line_no, "empty api"));
    }
    let outcome = OutcomeLabel::parse(&str_field("outcome")?).map_err(|e| malformed(line_no, e))?;
    let session_id = str_field("session")?;
    let timestamp = match obj.get("ts") {
        Some(Value::Number(n)) => n
            .as_u64()
            .ok_or_else(|| malformed(line_no, "`ts` must be a non-negative integer"))?,
        Some(_) => return Err(malformed(line_no, "`ts` must be an integer")),
        None => return Err(malformed(line_no, "missing field `ts`")),
    };
    let params = match obj.get("params") {
        Some(Value::Object(map)) => map
            .iter()
            .map(|(k, v)| match v {
                Value::String(s) if !k.is_empty() => Ok((k.clone(), s.clone())),
                Value::String(_) => Err(malformed(line_no, "empty parameter name")),
                _ => Err(malformed(line_no, format!("parameter `{k}` must be a string"))),
            })
            .collect::<Result<Vec<_>, _>>()?,
        Some(_) => return Err(malformed(line_no, "`params` must be an object")),
        None => return Err(malformed(line_no, "missing field `params`")),
    };

    Ok(ApiCallRecord {
        api,
        params,
        outcome,
        session_id,
        timestamp,
    })
}

/// Streaming reader over a call log. Malformed lines are skipped and counted;
/// only I/O failures surface as errors.
pub struct LogReader<R> {
    lines: io::Lines<R>,
    line_no: usize,
    skipped: usize,
    malformed: Vec<LogError>,
}

impl<R: BufRead> LogReader<R> {
    pub fn new(reader: R) -> Self {
        LogReader {
            lines: reader.lines(),
            line_no: 0,
            skipped: 0,
            malformed: Vec::new(),
        }
    }

    pub fn skipped(&self) -> usize {
        self.skipped
    }

    /// Errors for the malformed lines seen so far.
    pub fn malformed(&self) -> &[LogError] {
        &self.malformed
    }
}

impl<R: BufRead> Iterator for LogReader<R> {
    type Item = Result<ApiCallRecord, LogError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => return Some(Err(e.into())),
            };
            self.line_no += 1;
            match parse_record(&line, self.line_no) {
                Ok(r) => return Some(Ok(r)),
                Err(LogError::EmptyLine) => continue,
                Err(e) => {
                    self.skipped += 1;
                    self.malformed.push(e);
                }
            }
        }
    }
}

#[derive(Debug, Default)]
pub struct LoadedLog {
    pub records: Vec<ApiCallRecord>,
    pub skipped: usize,
}

pub fn open_log(path: impl AsRef<Path>) -> Result<LogReader<BufReader<File>>, LogError> {
    Ok(LogReader::new(BufReader::new(File::open(path)?)))
}

/// Reads a whole log file into memory.
pub fn load_log(path: impl AsRef<Path>) -> Result<LoadedLog, LogError> {
    let mut reader = open_log(path)?;
    let records = reader.by_ref().collect::<Result<Vec<_>, _>>()?;
    Ok(LoadedLog {
        records,
        skipped: reader.skipped(),
    })
}

pub fn write_log(path: impl AsRef<Path>, records: &[ApiCallRecord]) -> io::Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&r.to_json_line());
        out.push('\n');
    }
    std::fs::write(path, out)
}
