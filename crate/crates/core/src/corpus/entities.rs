//! Whole-token entity matching against a knowledge base and a corpus lexicon.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{canonicalize, EntityOntology, KnowledgeBase, Lexicon};

/// Types whose values are only matched from the sample's own knowledge base.
pub const KB_ONLY_TYPES: &[&str] = &["choice"];

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntityMention {
    #[serde(rename = "type")]
    pub ty: String,
    pub value: String,
}

impl EntityMention {
    pub fn new(ty: impl Into<String>, value: impl Into<String>) -> Self {
        Self {
            ty: ty.into(),
            value: value.into(),
        }
    }
}

fn is_word_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_' || b >= 0x80
}

/// Numeric values and values of [`KB_ONLY_TYPES`] are too ambiguous to be
/// matched from the corpus-wide lexicon.
fn lexicon_eligible(ty: &str, value: &str) -> bool {
    !KB_ONLY_TYPES.contains(&ty) && !value.bytes().any(|b| b.is_ascii_digit())
}

struct Span<'a> {
    start: usize,
    end: usize,
    from_kb: bool,
    type_rank: usize,
    ty: &'a str,
    value: &'a str,
}

/// Finds the `(type, value)` pairs mentioned in `text`.
///
/// Values match on whole-token boundaries of the canonicalized text, where
/// letters, digits and underscores are token characters. Overlapping
/// candidates are resolved longest-first; on equal spans, knowledge-base
/// values win over lexicon values, then the earlier ontology type wins. The
/// result is deduplicated and ordered by first occurrence.
pub fn extract_entities(
    text: &str,
    kb: &KnowledgeBase,
    lexicon: &Lexicon,
    ontology: &EntityOntology,
) -> Vec<EntityMention> {
    let text = canonicalize(text);
    if text.is_empty() {
        return Vec::new();
    }
    let bytes = text.as_bytes();
    let mut spans = Vec::new();
    for (type_rank, ty) in ontology.types().iter().enumerate() {
        let kb_values: BTreeSet<&str> = kb.column_values(ty).collect();
        let lexicon_values = lexicon
            .values(ty)
            .filter(|v| !kb_values.contains(v) && lexicon_eligible(ty, v));
        let candidates = kb_values
            .iter()
            .map(|v| (*v, true))
            .chain(lexicon_values.map(|v| (v, false)));
        for (value, from_kb) in candidates {
            if value.is_empty() {
                continue;
            }
            for (start, _) in text.match_indices(value) {
                let end = start + value.len();
                let left_ok = start == 0 || !is_word_byte(bytes[start - 1]);
                let right_ok = end == bytes.len() || !is_word_byte(bytes[end]);
                if left_ok && right_ok {
                    spans.push(Span {
                        start,
                        end,
                        from_kb,
                        type_rank,
                        ty,
                        value,
                    });
                }
            }
        }
    }

    spans.sort_by(|a, b| {
        (b.end - b.start)
            .cmp(&(a.end - a.start))
            .then(a.start.cmp(&b.start))
            .then(b.from_kb.cmp(&a.from_kb))
            .then(a.type_rank.cmp(&b.type_rank))
    });
    let mut taken: Vec<(usize, usize)> = Vec::new();
    let mut accepted: Vec<&Span> = Vec::new();
    for span in &spans {
        if taken.iter().all(|&(s, e)| span.end <= s || span.start >= e) {
            taken.push((span.start, span.end));
            accepted.push(span);
        }
    }
    accepted.sort_by_key(|s| s.start);

    let mut seen = BTreeSet::new();
    accepted
        .into_iter()
        .filter(|s| seen.insert((s.ty, s.value)))
        .map(|s| EntityMention::new(s.ty, s.value))
        .collect()
}
