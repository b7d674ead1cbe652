//! Scale-answer extraction from free-form model output.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::dist::AttributeScale;

static MARKER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)scale\s*:").unwrap());

/// Whether a missing `Scale:` marker may fall back to a bare integer.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseMode {
    #[default]
    Lenient,
    Strict,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct NumberToken {
    value: Option<i64>,
    standalone: bool,
}

/// Numeric tokens (`123` or `12.5`) in order of appearance.
fn number_tokens(text: &str) -> Vec<NumberToken> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if !bytes[i].is_ascii_digit() {
            i += 1;
            continue;
        }
        let start = i;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
        let int_end = i;
        let mut fractional = false;
        if i + 1 < bytes.len() && bytes[i] == b'.' && bytes[i + 1].is_ascii_digit() {
            fractional = true;
            i += 1;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
        }
        let before = start.checked_sub(1).map(|j| bytes[j]);
        let after = bytes.get(i).copied();
        let standalone = !matches!(before, Some(b) if b.is_ascii_alphanumeric() || b == b'.' || b == b'_')
            && !matches!(after, Some(b) if b.is_ascii_alphanumeric() || b == b'_');
        let value = if fractional {
            None
        } else {
            text[start..int_end].parse::<i64>().ok()
        };
        out.push(NumberToken { value, standalone });
    }
    out
}

/// Extracts a scale answer.
///
/// The first number after a case-insensitive `Scale:` marker decides the
/// answer: an in-range integer is returned, anything else is `None`. Without
/// a usable marker, lenient mode falls back to the first standalone integer
/// within `1..=n`.
pub fn parse_scale(raw_text: &str, scale: &AttributeScale, mode: ParseMode) -> Option<usize> {
    if let Some(m) = MARKER.find(raw_text) {
        if let Some(tok) = number_tokens(&raw_text[m.end()..]).into_iter().next() {
            return tok
                .value
                .filter(|v| scale.contains(*v))
                .map(|v| v as usize);
        }
    }
    if mode == ParseMode::Strict {
        return None;
    }
    number_tokens(raw_text)
        .into_iter()
        .filter(|t| t.standalone)
        .filter_map(|t| t.value)
        .find(|v| scale.contains(*v))
        .map(|v| v as usize)
}
