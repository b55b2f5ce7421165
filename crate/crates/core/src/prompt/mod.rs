//! Prompt rendering.
//!
//! A prompt is the dataset instructions followed by one block per exemplar and
//! a final test block, separated by blank lines. Each block carries the
//! sample's knowledge base, the rules derived from its hints, the dialog
//! history and a follow-up section; the test block stops at the entity cue so
//! the model continues with entities and then the response.

mod diff;
mod profile;
mod render;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::{extract_entities, DialogSample, EntityMention, EntityOntology, KnowledgeBase, Lexicon, Utterance};
use crate::error::{Error, Result};
use crate::hashing::sha256_hex;
use crate::hints::{derive_gold_hints, HintSet};

pub use diff::{classify_line, diff_prompts, LineChange, LineKind, PromptDiff, PromptSection};
pub use profile::{appendix_set, AppendixSet, AppendixTest, PromptProfile, INSTRUCTIONS_VERSION};
pub use render::{
    entity_list, hints_to_rules, py_str, py_str_list, serialize_kb, EntityListStyle, HintVisibility, Rule, RuleKind,
    RuleSet,
};

/// The literal cue that ends every test block.
pub const ENTITY_CUE: &str = "I will include these entities -";

/// A worked example: a training sample with its gold hints, gold entities
/// and gold response.
#[derive(Debug, Clone, PartialEq)]
pub struct Exemplar {
    pub sample_id: String,
    pub kb: Arc<KnowledgeBase>,
    pub history: Vec<Utterance>,
    pub hints: HintSet,
    pub entities: Vec<EntityMention>,
    pub response: String,
}

impl Exemplar {
    pub fn from_sample(sample: &DialogSample, lexicon: &Lexicon, ontology: &EntityOntology) -> Self {
        Self {
            sample_id: sample.id.clone(),
            kb: Arc::clone(&sample.kb),
            history: sample.history.clone(),
            hints: derive_gold_hints(sample, lexicon, ontology),
            entities: extract_entities(&sample.gold_response, &sample.kb, lexicon, ontology),
            response: sample.gold_response.clone(),
        }
    }
}

/// Everything rendering needs besides the block contents.
#[derive(Debug, Clone, Copy)]
pub struct PromptContext<'a> {
    pub profile: &'a PromptProfile,
    pub ontology: &'a EntityOntology,
    pub visibility: HintVisibility,
    pub kb_row_cap: Option<usize>,
}

impl<'a> PromptContext<'a> {
    pub fn new(profile: &'a PromptProfile, ontology: &'a EntityOntology) -> Self {
        Self {
            profile,
            ontology,
            visibility: HintVisibility::ALL,
            kb_row_cap: None,
        }
    }

    fn render_history(&self, history: &[Utterance]) -> String {
        history
            .iter()
            .map(|u| format!("{}: {}", self.profile.role(u.speaker), u.text))
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// Everything up to and including the scaffold sentence, plus the type
    /// declaration when hints allow it.
    fn render_head(&self, i: usize, kb: &KnowledgeBase, history: &[Utterance], hints: Option<&HintSet>) -> String {
        let mut out = format!(
            "[example {i}]\n[database {i}]\n{}\n\n",
            serialize_kb(kb, self.ontology, self.kb_row_cap)
        );
        let rules = hints
            .map(|h| hints_to_rules(h, self.ontology).filtered(self.visibility))
            .unwrap_or_default();
        if !rules.is_empty() {
            out.push_str(&format!("[rules {i}]\n{}\n\n", rules.render()));
        }
        out.push_str(&format!(
            "[dialog history {i}]\n{}\n\n[follow-up response {i}]\nLet's think step-by-step.\n",
            self.render_history(history)
        ));
        out.push_str(&format!(
            "As an expert, I must understand the user's requirements from [dialog history {i}], identify the relevant information from the [database {i}], follow all the [rules {i}] and write the response.\n"
        ));
        if let Some(h) = hints.filter(|_| self.visibility.entity_types) {
            out.push_str(&format!(
                "I will include entities of type {} in my response.\n",
                py_str_list(&h.entity_types)
            ));
        }
        out
    }

    pub fn render_exemplar(&self, i: usize, exemplar: &Exemplar) -> String {
        let mut out = self.render_head(i, &exemplar.kb, &exemplar.history, Some(&exemplar.hints));
        out.push_str(&format!(
            "{ENTITY_CUE} {}\n{}: {}",
            entity_list(&exemplar.entities, self.profile.entity_style),
            self.profile.system_role,
            exemplar.response
        ));
        out
    }

    /// The test block; `hints` is `None` when no hints are available.
    pub fn render_test(&self, i: usize, kb: &KnowledgeBase, history: &[Utterance], hints: Option<&HintSet>) -> String {
        let mut out = self.render_head(i, kb, history, hints);
        out.push_str(ENTITY_CUE);
        out
    }

    /// Renders exemplars and test sample and assembles the prompt.
    pub fn build(&self, exemplars: &[Exemplar], test: &DialogSample, hints: Option<&HintSet>) -> Result<PromptBundle> {
        let blocks: Vec<(String, String)> = exemplars
            .iter()
            .enumerate()
            .map(|(i, e)| (e.sample_id.clone(), self.render_exemplar(i + 1, e)))
            .collect();
        let test_block = self.render_test(exemplars.len() + 1, &test.kb, &test.history, hints);
        build_prompt(&self.profile.instructions, blocks, test_block)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub instructions: String,
    pub exemplar_ids: Vec<String>,
    pub exemplar_blocks: Vec<String>,
    pub test_block: String,
    pub full_text: String,
    pub prompt_hash: String,
}

/// Joins instructions, exemplar blocks and the test block with blank lines.
pub fn build_prompt(instructions: &str, exemplars: Vec<(String, String)>, test_block: String) -> Result<PromptBundle> {
    if instructions.trim().is_empty() {
        return Err(Error::EmptyInstructions);
    }
    let (exemplar_ids, exemplar_blocks): (Vec<String>, Vec<String>) = exemplars.into_iter().unzip();
    let mut parts: Vec<&str> = vec![instructions];
    parts.extend(exemplar_blocks.iter().map(String::as_str));
    parts.push(&test_block);
    let full_text = parts.join("\n\n");
    Ok(PromptBundle {
        instructions: instructions.to_string(),
        exemplar_ids,
        exemplar_blocks,
        prompt_hash: sha256_hex(full_text.as_bytes()),
        full_text,
        test_block,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::DatasetId;

    fn context_parts(dataset: DatasetId) -> (PromptProfile, EntityOntology, AppendixSet) {
        (PromptProfile::for_dataset(dataset), dataset.ontology(), appendix_set(dataset))
    }

    #[test]
    fn test_block_ends_with_cue() {
        let (profile, ontology, set) = context_parts(DatasetId::Smd);
        let ctx = PromptContext::new(&profile, &ontology);
        let block = ctx.render_test(3, &set.test.kb, &set.test.history, Some(&set.test.hints));
        assert!(block.ends_with(ENTITY_CUE));
        let bare = ctx.render_test(1, &set.test.kb, &set.test.history, None);
        assert!(!bare.contains("\n[rules 1]\n"));
        assert!(!bare.contains("I will include entities of type"));
        assert!(bare.contains("follow all the [rules 1]"));
    }

    #[test]
    fn exemplar_order_changes_hash() {
        let (profile, ontology, set) = context_parts(DatasetId::MultiWoz);
        let ctx = PromptContext::new(&profile, &ontology);
        let render = |ex: &[Exemplar]| {
            let blocks = ex
                .iter()
                .enumerate()
                .map(|(i, e)| (e.sample_id.clone(), ctx.render_exemplar(i + 1, e)))
                .collect();
            build_prompt(&profile.instructions, blocks, ctx.render_test(3, &set.test.kb, &set.test.history, Some(&set.test.hints)))
                .unwrap()
        };
        let forward = render(&set.exemplars);
        let reversed: Vec<Exemplar> = set.exemplars.iter().rev().cloned().collect();
        assert_ne!(forward.prompt_hash, render(&reversed).prompt_hash);
        assert_eq!(forward.full_text.matches("[example ").count(), 3);
    }

    #[test]
    fn empty_instructions_rejected() {
        assert!(matches!(build_prompt("  ", vec![], ENTITY_CUE.into()), Err(Error::EmptyInstructions)));
    }

    #[test]
    fn empty_entity_list() {
        let (profile, ontology, set) = context_parts(DatasetId::MultiWoz);
        let mut ex = set.exemplars[0].clone();
        ex.entities.clear();
        let block = PromptContext::new(&profile, &ontology).render_exemplar(1, &ex);
        assert!(block.contains("\nI will include these entities - []\nassistant: "));
    }
}
