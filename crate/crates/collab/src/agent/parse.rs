//! Parsing of templated completions.
//!
//! Completions are expected to contain the four template headers in order;
//! the chosen value is the last numeric literal after the value header,
//! with currency symbols and surrounding prose stripped (models like to
//! answer in full sentences despite being asked for just the number).

use serde::{Deserialize, Serialize};

use super::AgentError;
use crate::market::round2;

pub const HEADER_OBSERVATIONS: &str = "My observations and thoughts:";
pub const HEADER_PLANS: &str = "New content for PLANS.txt:";
pub const HEADER_INSIGHTS: &str = "New content for INSIGHTS.txt:";
pub const HEADER_PRICE: &str = "My chosen price:";
pub const HEADER_BID: &str = "My chosen bid:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputKind {
    Pricing,
    Auction,
}

impl OutputKind {
    pub fn value_header(self) -> &'static str {
        match self {
            OutputKind::Pricing => HEADER_PRICE,
            OutputKind::Auction => HEADER_BID,
        }
    }
}

/// Structured form of one completion: the chain-of-thought observations, the
/// new memory files, and the decision value (rounded to two decimals, which
/// is the precision at which it enters the market).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedDecision {
    pub observations: String,
    pub new_plans: String,
    pub new_insights: String,
    pub value: f64,
    pub raw: String,
}

/// Locate the four headers in order and extract the fields. Leading text
/// before the first header is tolerated; headers are matched
/// case-sensitively.
pub fn parse_decision(raw: &str, kind: OutputKind) -> Result<ParsedDecision, AgentError> {
    if raw.is_empty() {
        return Err(AgentError::Format {
            reason: "empty completion".into(),
        });
    }
    let value_header = kind.value_header();
    let h1 = find_header(raw, 0, HEADER_OBSERVATIONS)?;
    let h2 = find_header(raw, h1.end, HEADER_PLANS)?;
    let h3 = find_header(raw, h2.end, HEADER_INSIGHTS)?;
    let h4 = find_header(raw, h3.end, value_header)?;
    let observations = raw[h1.end..h2.start].trim().to_string();
    let new_plans = raw[h2.end..h3.start].trim().to_string();
    let new_insights = raw[h3.end..h4.start].trim().to_string();
    let tail = &raw[h4.end..];
    let value = last_number(tail).ok_or_else(|| AgentError::Format {
        reason: format!("no numeric value after {value_header:?}"),
    })?;
    if !value.is_finite() || value < 0.0 {
        return Err(AgentError::Format {
            reason: format!("value {value} out of domain"),
        });
    }
    Ok(ParsedDecision {
        observations,
        new_plans,
        new_insights,
        value: round2(value),
        raw: raw.to_string(),
    })
}

struct Span {
    start: usize,
    end: usize,
}

fn find_header(raw: &str, from: usize, header: &str) -> Result<Span, AgentError> {
    match raw[from..].find(header) {
        Some(offset) => {
            let start = from + offset;
            Ok(Span {
                start,
                end: start + header.len(),
            })
        }
        None => Err(AgentError::Format {
            reason: format!("missing header {header:?}"),
        }),
    }
}

/// Last numeric literal in `text`: digits with an optional decimal part and
/// an optional adjacent minus sign, ignoring a leading `$` and trailing
/// punctuation.
fn last_number(text: &str) -> Option<f64> {
    let mut last: Option<f64> = None;
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i].is_ascii_digit() {
            let mut start = i;
            if start > 0 && bytes[start - 1] == b'-' {
                start -= 1;
            }
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            let token = text[start..i].trim_end_matches('.');
            if let Ok(v) = token.parse::<f64>() {
                last = Some(v);
            }
        } else {
            i += 1;
        }
    }
    last
}
