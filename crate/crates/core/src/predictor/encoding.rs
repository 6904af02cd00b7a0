//! Request serialization and one-hot character quantization.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::log_model::ApiCallRecord;

/// ASCII punctuation, `!` through `~` excluding letters and digits.
const ASCII_PUNCT: &str = "!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~";
/// Two private-use slots that pad the default alphabet to 96 symbols.
const RESERVED: [char; 2] = ['\u{E000}', '\u{E001}'];

/// Ordered character set; a character's index is its one-hot row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Alphabet {
    chars: Vec<char>,
    #[serde(skip)]
    index: HashMap<char, u16>,
}

impl Alphabet {
    pub fn new(chars: impl IntoIterator<Item = char>) -> Result<Self, ModelError> {
        let chars: Vec<char> = chars.into_iter().collect();
        if chars.is_empty() {
            return Err(ModelError::InvalidAlphabet("empty alphabet".into()));
        }
        if chars.len() > u16::MAX as usize {
            return Err(ModelError::InvalidAlphabet("alphabet too large".into()));
        }
        let mut index = HashMap::with_capacity(chars.len());
        for (i, &c) in chars.iter().enumerate() {
            if index.insert(c, i as u16).is_some() {
                return Err(ModelError::InvalidAlphabet(format!("duplicate character {c:?}")));
            }
        }
        Ok(Alphabet { chars, index })
    }

    /// Reads an alphabet file: every character except line breaks.
    pub fn from_file_text(text: &str) -> Result<Self, ModelError> {
        Alphabet::new(text.chars().filter(|c| *c != '\n' && *c != '\r'))
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    pub fn index_of(&self, c: char) -> Option<u16> {
        self.index.get(&c).copied()
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }
}

impl Default for Alphabet {
    /// 26 + 26 letters, 10 digits, 32 ASCII punctuation marks and 2
    /// reserved slots: 96 characters. Space is not included.
    fn default() -> Self {
        let chars = ('a'..='z')
            .chain('A'..='Z')
            .chain('0'..='9')
            .chain(ASCII_PUNCT.chars())
            .chain(RESERVED);
        Alphabet::new(chars).expect("default alphabet is valid")
    }
}

impl TryFrom<String> for Alphabet {
    type Error = ModelError;

    fn try_from(s: String) -> Result<Self, ModelError> {
        Alphabet::new(s.chars())
    }
}

impl From<Alphabet> for String {
    fn from(a: Alphabet) -> String {
        a.chars.into_iter().collect()
    }
}

/// `api|k1=v1&k2=v2` with parameters sorted by name.
pub fn serialize_request(record: &ApiCallRecord) -> String {
    serialize_parts(&record.api, record.params.iter().map(|(k, v)| (k.as_str(), v.as_str())))
}

pub fn serialize_parts<'a>(api: &str, params: impl IntoIterator<Item = (&'a str, &'a str)>) -> String {
    let mut pairs: Vec<(&str, &str)> = params.into_iter().collect();
    pairs.sort();
    let mut out = String::with_capacity(api.len() + 1 + pairs.len() * 16);
    out.push_str(api);
    out.push('|');
    for (i, (k, v)) in pairs.iter().enumerate() {
        if i > 0 {
            out.push('&');
        }
        out.push_str(k);
        out.push('=');
        out.push_str(v);
    }
    out
}

/// One-hot `m x l0` matrix stored by column: `columns[j]` is the alphabet
/// row set to 1 in column `j`, or `None` for an all-zero column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedInput {
    pub alphabet_len: usize,
    pub columns: Vec<Option<u16>>,
}

impl QuantizedInput {
    pub fn l0(&self) -> usize {
        self.columns.len()
    }

    pub fn nonzero_columns(&self) -> usize {
        self.columns.iter().filter(|c| c.is_some()).count()
    }

    /// Dense `alphabet_len x l0` matrix, row-major.
    pub fn to_dense(&self) -> Vec<f64> {
        let l0 = self.l0();
        let mut dense = vec![0.0; self.alphabet_len * l0];
        for (j, c) in self.columns.iter().enumerate() {
            if let Some(row) = c {
                dense[*row as usize * l0 + j] = 1.0;
            }
        }
        dense
    }
}

/// Backward quantization: column `j` holds the `(j+1)`-th character from
/// the end of `text`. Characters beyond `l0` (counted from the end) are
/// dropped; unknown characters and short-text padding are zero columns.
pub fn quantize(text: &str, alphabet: &Alphabet, l0: usize) -> QuantizedInput {
    let mut columns = vec![None; l0];
    for (slot, c) in columns.iter_mut().zip(text.chars().rev()) {
        *slot = alphabet.index_of(c);
    }
    QuantizedInput {
        alphabet_len: alphabet.len(),
        columns,
    }
}
