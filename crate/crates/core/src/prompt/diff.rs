//! Line-level comparison of two prompts, with each changed line classified.

use serde::{Deserialize, Serialize};
use similar::{ChangeTag, TextDiff};

use super::{PromptBundle, RuleKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineKind {
    Rule(RuleKind),
    RulesHeader,
    TypeDeclaration,
    Blank,
    Other,
}

pub fn classify_line(line: &str) -> LineKind {
    if line.is_empty() {
        LineKind::Blank
    } else if line.starts_with("[rules ") {
        LineKind::RulesHeader
    } else if line.starts_with("I will include entities of type ") {
        LineKind::TypeDeclaration
    } else if line.starts_with("The response must be ") && line.ends_with(" words or shorter.") {
        LineKind::Rule(RuleKind::Length)
    } else if line == "The response must close the dialog." || line == "The response must not close the dialog." {
        LineKind::Rule(RuleKind::Closure)
    } else if line.starts_with("The response must only include entities of type - ") {
        LineKind::Rule(RuleKind::IncludeTypes)
    } else if line.starts_with("The response must not include any entities of type - ") {
        LineKind::Rule(RuleKind::ExcludeTypes)
    } else {
        LineKind::Other
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptSection {
    Instructions,
    /// 1-based exemplar position.
    Exemplar(usize),
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineChange {
    pub section: PromptSection,
    pub added: bool,
    pub kind: LineKind,
    pub text: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptDiff {
    /// The two prompts use different exemplars; their blocks are not compared.
    pub exemplars_reselected: bool,
    pub changes: Vec<LineChange>,
}

impl PromptDiff {
    pub fn is_empty(&self) -> bool {
        !self.exemplars_reselected && self.changes.is_empty()
    }

    /// True when every changed line has one of `kinds`.
    pub fn only_kinds(&self, kinds: &[LineKind]) -> bool {
        self.changes.iter().all(|c| kinds.contains(&c.kind))
    }
}

fn diff_text(section: PromptSection, a: &str, b: &str, out: &mut Vec<LineChange>) {
    let a: Vec<&str> = a.split('\n').collect();
    let b: Vec<&str> = b.split('\n').collect();
    let diff = TextDiff::from_slices(&a, &b);
    for change in diff.iter_all_changes() {
        let added = match change.tag() {
            ChangeTag::Equal => continue,
            ChangeTag::Insert => true,
            ChangeTag::Delete => false,
        };
        let text = change.value().to_string();
        out.push(LineChange {
            section,
            added,
            kind: classify_line(&text),
            text,
        });
    }
}

pub fn diff_prompts(base: &PromptBundle, other: &PromptBundle) -> PromptDiff {
    let mut changes = Vec::new();
    diff_text(PromptSection::Instructions, &base.instructions, &other.instructions, &mut changes);
    let exemplars_reselected = base.exemplar_ids != other.exemplar_ids;
    if !exemplars_reselected {
        for (i, (a, b)) in base.exemplar_blocks.iter().zip(&other.exemplar_blocks).enumerate() {
            diff_text(PromptSection::Exemplar(i + 1), a, b, &mut changes);
        }
    }
    diff_text(PromptSection::Test, &base.test_block, &other.test_block, &mut changes);
    PromptDiff {
        exemplars_reselected,
        changes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompt::build_prompt;

    #[test]
    fn classifies_rule_lines() {
        assert_eq!(classify_line("The response must be 4 words or shorter."), LineKind::Rule(RuleKind::Length));
        assert_eq!(classify_line("The response must not close the dialog."), LineKind::Rule(RuleKind::Closure));
        assert_eq!(classify_line("[rules 2]"), LineKind::RulesHeader);
        assert_eq!(classify_line("user: hi"), LineKind::Other);
    }

    #[test]
    fn diff_reports_changed_lines() {
        let a = build_prompt("x", vec![], "[rules 1]\nThe response must be 4 words or shorter.\n\nend".into()).unwrap();
        let b = build_prompt("x", vec![], "end".into()).unwrap();
        let d = diff_prompts(&a, &b);
        assert!(!d.exemplars_reselected);
        assert_eq!(d.changes.len(), 3);
        assert!(d.only_kinds(&[LineKind::RulesHeader, LineKind::Rule(RuleKind::Length), LineKind::Blank]));
        assert!(diff_prompts(&a, &a).is_empty());
    }
}
