//! Text templates with pool placeholders.
//!
//! `{pool}` draws a value from `pool`; `{pool#key}` binds one value to `key`
//! so every occurrence (also across the two texts of a pair) renders the same
//! value. Distinct keys over the same pool receive distinct values.

use std::collections::{BTreeMap, HashMap};

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng::Stream;
use crate::suite::Input;

/// A single template or a template pair.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TemplateText {
    Single(String),
    Pair([String; 2]),
}

impl TemplateText {
    pub fn texts(&self) -> Vec<&str> {
        match self {
            TemplateText::Single(t) => vec![t],
            TemplateText::Pair([a, b]) => vec![a, b],
        }
    }

    /// The template with every placeholder replaced by `{}`.
    pub fn skeleton(&self) -> Result<String> {
        let mut parts = Vec::new();
        for t in self.texts() {
            let pieces = parse(t)?;
            parts.push(
                pieces
                    .iter()
                    .map(|p| match p {
                        Piece::Literal(s) => s.as_str(),
                        Piece::Slot { .. } => "{}",
                    })
                    .collect::<String>(),
            );
        }
        Ok(parts.join(" ||| "))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) enum Piece {
    Literal(String),
    Slot { pool: String, key: Option<String> },
}

pub(crate) fn parse(text: &str) -> Result<Vec<Piece>> {
    let mut pieces = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find('{') {
        if open > 0 {
            pieces.push(Piece::Literal(rest[..open].to_string()));
        }
        let close = rest[open..]
            .find('}')
            .ok_or_else(|| invalid(format!("unclosed placeholder in template {text:?}")))?
            + open;
        let inner = &rest[open + 1..close];
        let (pool, key) = match inner.split_once('#') {
            Some((p, k)) => (p, Some(k.to_string())),
            None => (inner, None),
        };
        if pool.is_empty() || pool.contains(char::is_whitespace) {
            return Err(invalid(format!("malformed placeholder {{{inner}}} in template {text:?}")));
        }
        pieces.push(Piece::Slot { pool: pool.to_string(), key });
        rest = &rest[close + 1..];
    }
    if rest.contains('}') {
        return Err(invalid(format!("unmatched '}}' in template {text:?}")));
    }
    if !rest.is_empty() {
        pieces.push(Piece::Literal(rest.to_string()));
    }
    Ok(pieces)
}

/// Identifies one bound value: `pool#key` for keyed slots, or
/// `pool#@text.slot` for anonymous ones.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub(crate) struct Binding {
    pub pool: String,
    pub key: String,
}

/// A template with parsed texts.
#[derive(Clone, Debug)]
pub(crate) struct Parsed {
    texts: Vec<Vec<Piece>>,
}

impl Parsed {
    pub fn new(t: &TemplateText) -> Result<Self> {
        Ok(Parsed { texts: t.texts().into_iter().map(parse).collect::<Result<_>>()? })
    }

    fn binding(pool: &str, key: &Option<String>, text: usize, slot: usize) -> Binding {
        Binding {
            pool: pool.to_string(),
            key: key.clone().unwrap_or_else(|| format!("@{text}.{slot}")),
        }
    }

    /// Bindings in order of first appearance.
    fn bindings(&self) -> Vec<Binding> {
        let mut out: Vec<Binding> = Vec::new();
        for (t, pieces) in self.texts.iter().enumerate() {
            for (s, p) in pieces.iter().enumerate() {
                if let Piece::Slot { pool, key } = p {
                    let b = Self::binding(pool, key, t, s);
                    if !out.contains(&b) {
                        out.push(b);
                    }
                }
            }
        }
        out
    }

    pub fn pools(&self) -> impl Iterator<Item = &str> {
        self.texts.iter().flatten().filter_map(|p| match p {
            Piece::Slot { pool, .. } => Some(pool.as_str()),
            Piece::Literal(_) => None,
        })
    }

    /// Draws values for every binding.
    pub fn instantiate(&self, pools: &BTreeMap<String, Vec<String>>, rng: &mut Stream) -> Result<Instance<'_>> {
        let mut by_pool: BTreeMap<&str, Vec<Binding>> = BTreeMap::new();
        for b in self.bindings() {
            by_pool.entry(pools.get_key_value(&b.pool).map(|(k, _)| k.as_str()).ok_or_else(|| {
                invalid(format!("template placeholder refers to unknown pool '{}'", b.pool))
            })?)
            .or_default()
            .push(b);
        }
        let mut values = HashMap::new();
        for (pool, bindings) in by_pool {
            let items = &pools[pool];
            if items.len() < bindings.len() {
                return Err(invalid(format!(
                    "pool '{pool}' has {} values but the template needs {} distinct ones",
                    items.len(),
                    bindings.len()
                )));
            }
            let picks = sample(rng, items.len(), bindings.len());
            for (b, i) in bindings.into_iter().zip(picks) {
                values.insert(b, items[i].clone());
            }
        }
        Ok(Instance { parsed: self, values, overrides: vec![HashMap::new(); self.texts.len()] })
    }
}

/// A template with values bound to its slots. `overrides` replace a
/// binding's value in one text only.
#[derive(Clone, Debug)]
pub(crate) struct Instance<'a> {
    parsed: &'a Parsed,
    pub values: HashMap<Binding, String>,
    pub overrides: Vec<HashMap<Binding, String>>,
}

impl Instance<'_> {
    fn value(&self, text: usize, b: &Binding) -> &str {
        self.overrides[text].get(b).or_else(|| self.values.get(b)).map(String::as_str).unwrap_or("")
    }

    /// Rendered words of each text, plus the word index at which each binding
    /// first starts in each text.
    pub fn render_words(&self) -> (Vec<Vec<String>>, Vec<HashMap<Binding, usize>>) {
        let mut texts = Vec::new();
        let mut starts = Vec::new();
        for (t, pieces) in self.parsed.texts.iter().enumerate() {
            let mut s = String::new();
            let mut pos = HashMap::new();
            for (k, p) in pieces.iter().enumerate() {
                match p {
                    Piece::Literal(l) => s.push_str(l),
                    Piece::Slot { pool, key } => {
                        let b = Parsed::binding(pool, key, t, k);
                        let words_before = s.split_whitespace().count();
                        let glued = !s.is_empty() && !s.ends_with(char::is_whitespace);
                        pos.entry(b.clone()).or_insert(if glued { words_before - 1 } else { words_before });
                        s.push_str(self.value(t, &b));
                    }
                }
            }
            texts.push(s.split_whitespace().map(str::to_string).collect());
            starts.push(pos);
        }
        (texts, starts)
    }

    pub fn bindings_of_pool(&self, pool: &str) -> Vec<Binding> {
        let mut out: Vec<Binding> = self.parsed.bindings().into_iter().filter(|b| b.pool == pool).collect();
        out.sort();
        out
    }
}

pub(crate) fn words_to_input(words: &[Vec<String>]) -> Input {
    match words {
        [a] => Input::Text(a.join(" ")),
        [a, b] => Input::Pair(a.join(" "), b.join(" ")),
        _ => unreachable!("templates have one or two texts"),
    }
}
