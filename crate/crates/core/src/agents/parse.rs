//! Turns free-form model output into a permutation of local candidate ids.
//!
//! Parsing never fails. The first bracketed list that contains at least one
//! integer is taken as the answer, then repaired:
//!
//! 1. non-integer elements are dropped,
//! 2. ids outside `0..n` are dropped ([`Repair::DroppedOutOfRange`]),
//! 3. repeated ids keep their first occurrence ([`Repair::Deduplicated`]),
//! 4. ids still missing are appended in ascending order ([`Repair::AppendedMissing`]).
//!
//! Without any usable list the identity order is returned with
//! [`Repair::FallbackIdentity`].

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Repair {
    Deduplicated,
    DroppedOutOfRange,
    AppendedMissing,
    FallbackIdentity,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedPermutation {
    pub order: Vec<usize>,
    pub repairs: BTreeSet<Repair>,
    pub raw: String,
}

impl ParsedPermutation {
    pub fn is_clean(&self) -> bool {
        self.repairs.is_empty()
    }
}

enum Element {
    Index(usize),
    /// Syntactically an integer but negative or too large for `usize`.
    OutOfRange,
}

fn parse_element(token: &str) -> Option<Element> {
    let t = token.trim().trim_matches(|c| c == '"' || c == '\'').trim();
    let (negative, digits) = match t.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, t.strip_prefix('+').unwrap_or(t)),
    };
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    if negative && digits.bytes().any(|b| b != b'0') {
        return Some(Element::OutOfRange);
    }
    Some(match digits.parse::<usize>() {
        Ok(v) => Element::Index(v),
        Err(_) => Element::OutOfRange,
    })
}

/// Innermost `[...]` segments in order of appearance.
fn bracket_segments(raw: &str) -> impl Iterator<Item = &str> {
    let mut open: Option<usize> = None;
    raw.char_indices().filter_map(move |(i, ch)| match ch {
        '[' => {
            open = Some(i + 1);
            None
        }
        ']' => open.take().map(|start| &raw[start..i]),
        _ => None,
    })
}

pub fn parse_permutation(raw: &str, n: usize) -> ParsedPermutation {
    let mut repairs = BTreeSet::new();
    let elements = bracket_segments(raw)
        .map(|seg| seg.split(',').filter_map(parse_element).collect::<Vec<_>>())
        .find(|els| !els.is_empty());

    let Some(elements) = elements else {
        repairs.insert(Repair::FallbackIdentity);
        return ParsedPermutation {
            order: (0..n).collect(),
            repairs,
            raw: raw.to_string(),
        };
    };

    let mut in_range = Vec::with_capacity(elements.len());
    for el in elements {
        match el {
            Element::Index(i) if i < n => in_range.push(i),
            _ => {
                repairs.insert(Repair::DroppedOutOfRange);
            }
        }
    }

    let mut seen = vec![false; n];
    let mut order = Vec::with_capacity(n);
    for i in in_range {
        if seen[i] {
            repairs.insert(Repair::Deduplicated);
        } else {
            seen[i] = true;
            order.push(i);
        }
    }

    if order.len() < n {
        repairs.insert(Repair::AppendedMissing);
        order.extend((0..n).filter(|&i| !seen[i]));
    }

    ParsedPermutation {
        order,
        repairs,
        raw: raw.to_string(),
    }
}
