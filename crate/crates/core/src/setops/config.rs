//! Sectioned text format for a universe and per-party sets.
//!
//! ```text
//! # comment
//! [universe]
//! alice
//! bob
//!
//! [S1]
//! alice
//! ```
//!
//! Each non-blank, non-comment line inside a section is one element label,
//! with surrounding whitespace trimmed. The `[universe]` section is optional
//! (the hash protocol has none); party sections must be numbered `S1..Sn`
//! without gaps.

use std::collections::BTreeMap;

use super::{ExprError, InputSet, Universe};
use crate::roles::PartyId;

#[derive(Debug, Clone)]
pub struct SetsConfig {
    pub universe: Option<Universe>,
    pub sets: Vec<InputSet>,
}

fn config_err(line: usize, message: impl Into<String>) -> ExprError {
    ExprError::Config {
        line,
        message: message.into(),
    }
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

/// One element per line; blank lines and `#` comments are skipped.
pub fn parse_element_list(text: &str) -> Vec<String> {
    content_lines(text).map(|(_, l)| l.to_string()).collect()
}

pub fn parse_sets_config(text: &str) -> Result<SetsConfig, ExprError> {
    enum Section {
        Universe,
        Party(usize),
    }

    let mut universe: Option<Vec<String>> = None;
    let mut parties: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    let mut current: Option<Section> = None;

    for (line, l) in content_lines(text) {
        if let Some(name) = l.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| config_err(line, "unterminated section header"))?
                .trim();
            current = Some(if name.eq_ignore_ascii_case("universe") {
                if universe.is_some() {
                    return Err(config_err(line, "duplicate [universe] section"));
                }
                universe = Some(Vec::new());
                Section::Universe
            } else {
                let idx = name
                    .strip_prefix(['S', 's'])
                    .and_then(|d| d.parse::<usize>().ok())
                    .filter(|&i| i >= 1)
                    .ok_or_else(|| config_err(line, format!("unknown section `{name}`")))?;
                if parties.insert(idx, Vec::new()).is_some() {
                    return Err(config_err(line, format!("duplicate section [S{idx}]")));
                }
                Section::Party(idx)
            });
            continue;
        }
        match &current {
            None => return Err(config_err(line, "element outside of any section")),
            Some(Section::Universe) => universe.as_mut().expect("opened").push(l.to_string()),
            Some(Section::Party(i)) => parties.get_mut(i).expect("opened").push(l.to_string()),
        }
    }

    for (expected, &actual) in (1..).zip(parties.keys()) {
        if expected != actual {
            return Err(config_err(0, format!("missing section [S{expected}]")));
        }
    }
    let universe = universe.map(Universe::new).transpose()?;
    let sets: Vec<InputSet> = parties
        .into_iter()
        .map(|(i, members)| InputSet::new(PartyId(i), members))
        .collect();
    if let Some(u) = &universe {
        for s in &sets {
            u.membership(s)?;
        }
    }
    Ok(SetsConfig { universe, sets })
}
