//! Text fragments of a prompt: knowledge-base JSON, rules, Python-style reprs.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{EntityMention, EntityOntology, KnowledgeBase, MISSING_VALUE};
use crate::hints::HintSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    Length,
    Closure,
    IncludeTypes,
    ExcludeTypes,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rule {
    pub kind: RuleKind,
    pub text: String,
}

/// Which hints a prompt may expose. A hidden hint contributes no rule line,
/// and hiding entity types also removes the type declaration line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HintVisibility {
    pub entity_types: bool,
    pub dialog_closure: bool,
    pub response_size: bool,
}

impl HintVisibility {
    pub const ALL: HintVisibility = HintVisibility {
        entity_types: true,
        dialog_closure: true,
        response_size: true,
    };
    pub const NONE: HintVisibility = HintVisibility {
        entity_types: false,
        dialog_closure: false,
        response_size: false,
    };

    pub fn allows(&self, kind: RuleKind) -> bool {
        match kind {
            RuleKind::Length => self.response_size,
            RuleKind::Closure => self.dialog_closure,
            RuleKind::IncludeTypes | RuleKind::ExcludeTypes => self.entity_types,
        }
    }
}

impl Default for HintVisibility {
    fn default() -> Self {
        Self::ALL
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleSet {
    pub rules: Vec<Rule>,
}

impl RuleSet {
    pub fn filtered(&self, visibility: HintVisibility) -> RuleSet {
        RuleSet {
            rules: self.rules.iter().filter(|r| visibility.allows(r.kind)).cloned().collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn lines(&self) -> impl Iterator<Item = &str> {
        self.rules.iter().map(|r| r.text.as_str())
    }

    pub fn render(&self) -> String {
        self.lines().collect::<Vec<_>>().join("\n")
    }
}

/// Rule lines for a hint set. The positive type list keeps the hint order;
/// the negative list is the ontology complement in ontology order.
pub fn hints_to_rules(hints: &HintSet, ontology: &EntityOntology) -> RuleSet {
    let mut rules = vec![
        Rule {
            kind: RuleKind::Length,
            text: format!("The response must be {} words or shorter.", hints.response_size),
        },
        Rule {
            kind: RuleKind::Closure,
            text: if hints.dialog_closure {
                "The response must close the dialog.".to_string()
            } else {
                "The response must not close the dialog.".to_string()
            },
        },
    ];
    if !hints.entity_types.is_empty() {
        rules.push(Rule {
            kind: RuleKind::IncludeTypes,
            text: format!(
                "The response must only include entities of type - {}.",
                hints.entity_types.join(", ")
            ),
        });
    }
    let complement: Vec<&str> = ontology
        .types()
        .iter()
        .filter(|t| !hints.entity_types.contains(t))
        .map(String::as_str)
        .collect();
    if !complement.is_empty() {
        rules.push(Rule {
            kind: RuleKind::ExcludeTypes,
            text: format!(
                "The response must not include any entities of type - {}.",
                complement.join(", ")
            ),
        });
    }
    RuleSet { rules }
}

fn json_str(s: &str) -> String {
    serde_json::to_string(s).expect("strings always serialize")
}

/// Knowledge base as a JSON object keyed by primary-key value, attributes in
/// ontology order. Repeated keys get `#2`, `#3`, ... suffixes.
pub fn serialize_kb(kb: &KnowledgeBase, ontology: &EntityOntology, row_cap: Option<usize>) -> String {
    let rows = row_cap.map_or(kb.records.len(), |cap| cap.min(kb.records.len()));
    if rows == 0 {
        return "{}".to_string();
    }
    let mut seen: HashMap<&str, usize> = HashMap::new();
    let mut entries = Vec::with_capacity(rows);
    for record in &kb.records[..rows] {
        let base = record.get(&kb.primary_key).map(String::as_str).unwrap_or(MISSING_VALUE);
        let n = seen.entry(base).or_insert(0);
        *n += 1;
        let key = if *n == 1 { base.to_string() } else { format!("{base}#{n}") };
        let attrs: Vec<String> = ontology
            .types()
            .iter()
            .filter(|t| **t != kb.primary_key)
            .filter_map(|t| record.get(t).map(|v| format!("    {}:{}", json_str(t), json_str(v))))
            .collect();
        if attrs.is_empty() {
            entries.push(format!("  {}:{{}}", json_str(&key)));
        } else {
            entries.push(format!("  {}:{{\n{}\n  }}", json_str(&key), attrs.join(",\n")));
        }
    }
    format!("{{\n{}\n}}", entries.join(",\n"))
}

/// Python `repr` of a string.
pub fn py_str(s: &str) -> String {
    let quote = if s.contains('\'') && !s.contains('"') { '"' } else { '\'' };
    let mut out = String::with_capacity(s.len() + 2);
    out.push(quote);
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if c == quote => {
                out.push('\\');
                out.push(c);
            }
            c if (c as u32) < 0x20 || c as u32 == 0x7f => out.push_str(&format!("\\x{:02x}", c as u32)),
            c => out.push(c),
        }
    }
    out.push(quote);
    out
}

/// Python `repr` of a list of strings.
pub fn py_str_list<S: AsRef<str>>(items: &[S]) -> String {
    let parts: Vec<String> = items.iter().map(|s| py_str(s.as_ref())).collect();
    format!("[{}]", parts.join(", "))
}

/// How (type, value) pairs are bracketed in the entity line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityListStyle {
    /// `[('type', 'value')]`
    Tuple,
    /// `[['type', 'value']]`
    ListPair,
}

pub fn entity_list(entities: &[EntityMention], style: EntityListStyle) -> String {
    let (open, close) = match style {
        EntityListStyle::Tuple => ('(', ')'),
        EntityListStyle::ListPair => ('[', ']'),
    };
    let parts: Vec<String> = entities
        .iter()
        .map(|e| format!("{open}{}, {}{close}", py_str(&e.ty), py_str(&e.value)))
        .collect();
    format!("[{}]", parts.join(", "))
}
