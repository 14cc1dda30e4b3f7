//! Label-preserving (or label-defining) edits of template instances.

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::template::{words_to_input, Binding, Instance};
use crate::error::{invalid, Result};
use crate::rng::Stream;
use crate::suite::Input;

/// Where inserted words go.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InsertPosition {
    Start,
    #[default]
    End,
    /// Before the first word of the slot whose key (or, for unkeyed slots,
    /// pool) matches.
    Before(String),
    /// Any word boundary.
    Random,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Perturbation {
    /// Rebinds a slot of `pool` to another value of the pool, in every text
    /// or only in text `side`.
    EntitySwap {
        pool: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        side: Option<usize>,
    },
    /// Transposes two adjacent, different letters of one word.
    Typo,
    /// Inserts a value of `pool` into the (first) text.
    InsertFiller {
        pool: String,
        #[serde(default)]
        position: InsertPosition,
    },
}

/// Minimum word length preferred by typo injection.
const TYPO_MIN_LEN: usize = 4;

impl Perturbation {
    pub fn pool(&self) -> Option<&str> {
        match self {
            Perturbation::EntitySwap { pool, .. } | Perturbation::InsertFiller { pool, .. } => Some(pool),
            Perturbation::Typo => None,
        }
    }

    pub(crate) fn apply(
        &self,
        inst: &Instance<'_>,
        pools: &BTreeMap<String, Vec<String>>,
        rng: &mut Stream,
    ) -> Result<Input> {
        match self {
            Perturbation::EntitySwap { pool, side } => {
                let values = pools.get(pool).ok_or_else(|| invalid(format!("unknown pool '{pool}'")))?;
                let bindings = inst.bindings_of_pool(pool);
                let target: &Binding = bindings
                    .first()
                    .ok_or_else(|| invalid(format!("entity swap over '{pool}' but the template has no such slot")))?;
                let taken: Vec<&str> = bindings.iter().filter_map(|b| inst.values.get(b)).map(String::as_str).collect();
                let free: Vec<&String> = values.iter().filter(|v| !taken.contains(&v.as_str())).collect();
                let new = free
                    .choose(rng)
                    .ok_or_else(|| invalid(format!("pool '{pool}' has no spare value for an entity swap")))?;
                let mut edited = inst.clone();
                match side {
                    Some(s) if *s < edited.overrides.len() => {
                        edited.overrides[*s].insert(target.clone(), (*new).clone());
                    }
                    Some(s) => return Err(invalid(format!("entity swap side {s} out of range"))),
                    None => {
                        edited.values.insert(target.clone(), (*new).clone());
                    }
                }
                Ok(words_to_input(&edited.render_words().0))
            }
            Perturbation::Typo => {
                let (mut words, _) = inst.render_words();
                let mut spots = typo_spots(&words, TYPO_MIN_LEN);
                if spots.is_empty() {
                    spots = typo_spots(&words, 2);
                }
                let &(t, w, i) = spots.choose(rng).ok_or_else(|| invalid("no word admits a transposition typo"))?;
                let mut chars: Vec<char> = words[t][w].chars().collect();
                chars.swap(i, i + 1);
                words[t][w] = chars.into_iter().collect();
                Ok(words_to_input(&words))
            }
            Perturbation::InsertFiller { pool, position } => {
                let values = pools.get(pool).ok_or_else(|| invalid(format!("unknown pool '{pool}'")))?;
                let filler = values.choose(rng).ok_or_else(|| invalid(format!("pool '{pool}' is empty")))?;
                let (mut words, starts) = inst.render_words();
                let (t, at) = match position {
                    InsertPosition::Start => (0, 0),
                    InsertPosition::End => (0, words[0].len()),
                    InsertPosition::Random => (0, rng.random_range(0..=words[0].len())),
                    InsertPosition::Before(key) => starts
                        .iter()
                        .enumerate()
                        .find_map(|(t, s)| {
                            let mut hits: Vec<(&Binding, &usize)> =
                                s.iter().filter(|(b, _)| b.key == *key || (b.key.starts_with('@') && b.pool == *key)).collect();
                            hits.sort();
                            hits.first().map(|(_, &w)| (t, w))
                        })
                        .ok_or_else(|| invalid(format!("no slot '{key}' to insert before")))?,
                };
                let new: Vec<String> = filler.split_whitespace().map(str::to_string).collect();
                words[t].splice(at..at, new);
                Ok(words_to_input(&words))
            }
        }
    }
}

/// `(text, word, char)` positions where swapping `char` and `char + 1`
/// changes a word of at least `min_len` letters.
fn typo_spots(words: &[Vec<String>], min_len: usize) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for (t, text) in words.iter().enumerate() {
        for (w, word) in text.iter().enumerate() {
            let chars: Vec<char> = word.chars().collect();
            if chars.len() < min_len {
                continue;
            }
            for i in 0..chars.len() - 1 {
                if chars[i] != chars[i + 1] && chars[i].is_alphabetic() && chars[i + 1].is_alphabetic() {
                    out.push((t, w, i));
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::synth::template::{Parsed, TemplateText};

    fn pools() -> BTreeMap<String, Vec<String>> {
        let p = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        [
            ("name".to_string(), p(&["anna", "bob", "carla", "dev"])),
            ("adj".to_string(), p(&["awful", "great"])),
            ("intens".to_string(), p(&["really", "very"])),
        ]
        .into()
    }

    #[test]
    fn typo_changes_exactly_one_transposition() {
        let parsed = Parsed::new(&TemplateText::Single("{name} said it was {adj}".into())).unwrap();
        for seed in 0..50 {
            let mut rng = stream(seed);
            let inst = parsed.instantiate(&pools(), &mut rng).unwrap();
            let orig = words_to_input(&inst.render_words().0).to_string();
            let pert = Perturbation::Typo.apply(&inst, &pools(), &mut rng).unwrap().to_string();
            assert_ne!(orig, pert);
            assert_eq!(orig.len(), pert.len());
            let diff: Vec<usize> = orig.bytes().zip(pert.bytes()).enumerate().filter(|(_, (a, b))| a != b).map(|(i, _)| i).collect();
            assert_eq!(diff.len(), 2);
            assert_eq!(diff[1], diff[0] + 1);
        }
    }

    #[test]
    fn entity_swap_respects_side() {
        let t = TemplateText::Pair(["how old is {name#p} ?".into(), "what age is {name#p} ?".into()]);
        let parsed = Parsed::new(&t).unwrap();
        let mut rng = stream(3);
        let inst = parsed.instantiate(&pools(), &mut rng).unwrap();
        let both = Perturbation::EntitySwap { pool: "name".into(), side: None }.apply(&inst, &pools(), &mut rng).unwrap();
        let one = Perturbation::EntitySwap { pool: "name".into(), side: Some(1) }.apply(&inst, &pools(), &mut rng).unwrap();
        let (Input::Pair(a, b), Input::Pair(c, d)) = (both, one) else { panic!() };
        assert_eq!(a.split(' ').nth(3), b.split(' ').nth(3));
        assert_ne!(c.split(' ').nth(3), d.split(' ').nth(3));
    }

    #[test]
    fn insert_before_slot() {
        let parsed = Parsed::new(&TemplateText::Single("the seat was {adj#a}".into())).unwrap();
        let mut rng = stream(5);
        let inst = parsed.instantiate(&pools(), &mut rng).unwrap();
        let p = Perturbation::InsertFiller { pool: "intens".into(), position: InsertPosition::Before("a".into()) };
        let out = p.apply(&inst, &pools(), &mut rng).unwrap().to_string();
        let words: Vec<&str> = out.split(' ').collect();
        assert_eq!(words.len(), 5);
        assert!(["really", "very"].contains(&words[3]));
    }

    #[test]
    fn serde_forms() {
        let p: Perturbation = serde_json::from_str(r#"{"op":"insert_filler","pool":"x","position":{"before":"adj"}}"#).unwrap();
        assert_eq!(p, Perturbation::InsertFiller { pool: "x".into(), position: InsertPosition::Before("adj".into()) });
        let t: Perturbation = serde_json::from_str(r#"{"op":"typo"}"#).unwrap();
        assert_eq!(t, Perturbation::Typo);
    }
}
