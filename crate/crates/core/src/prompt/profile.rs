//! Per-dataset prompt settings and the appendix exemplar sets.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::render::EntityListStyle;
use super::Exemplar;
use crate::corpus::{DatasetId, EntityMention, KnowledgeBase, Speaker, Utterance};
use crate::error::{Error, Result};
use crate::hints::HintSet;

const MULTIWOZ_INSTRUCTIONS: &str = include_str!("../../assets/instructions/multiwoz.txt");
const SMD_INSTRUCTIONS: &str = include_str!("../../assets/instructions/smd.txt");
const BITOD_INSTRUCTIONS: &str = include_str!("../../assets/instructions/bitod.txt");

const MULTIWOZ_APPENDIX: &str = include_str!("../../assets/appendix/multiwoz.json");
const SMD_APPENDIX: &str = include_str!("../../assets/appendix/smd.json");
const BITOD_APPENDIX: &str = include_str!("../../assets/appendix/bitod.json");

/// Version tag of the bundled instruction texts.
pub const INSTRUCTIONS_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptProfile {
    pub dataset: DatasetId,
    pub instructions: String,
    /// Tag for system turns; user turns are always `user`.
    pub system_role: String,
    pub entity_style: EntityListStyle,
}

impl PromptProfile {
    pub fn for_dataset(dataset: DatasetId) -> Self {
        let (instructions, system_role, entity_style) = match dataset {
            DatasetId::MultiWoz => (MULTIWOZ_INSTRUCTIONS, "assistant", EntityListStyle::Tuple),
            DatasetId::Smd => (SMD_INSTRUCTIONS, "system", EntityListStyle::Tuple),
            DatasetId::BiTod => (BITOD_INSTRUCTIONS, "assistant", EntityListStyle::ListPair),
        };
        Self {
            dataset,
            instructions: instructions.to_string(),
            system_role: system_role.to_string(),
            entity_style,
        }
    }

    pub fn role(&self, speaker: Speaker) -> &str {
        match speaker {
            Speaker::User => "user",
            Speaker::System => &self.system_role,
        }
    }

    /// The canned few-shot pair used when retrieval is disabled.
    pub fn fixed_exemplars(&self) -> Vec<Exemplar> {
        appendix_set(self.dataset).exemplars
    }
}

#[derive(Debug, Clone, Deserialize)]
struct RawTurn {
    speaker: Speaker,
    text: String,
}

#[derive(Debug, Clone, Deserialize)]
struct RawBlock {
    kb: Vec<serde_json::Map<String, serde_json::Value>>,
    history: Vec<RawTurn>,
    hints: HintSet,
    #[serde(default)]
    entities: Vec<EntityMention>,
    #[serde(default)]
    response: String,
}

#[derive(Debug, Clone, Deserialize)]
struct RawAppendix {
    primary_key: String,
    exemplars: Vec<RawBlock>,
    test: RawBlock,
}

/// A test input reconstructed from a sample prompt: history, knowledge base
/// and the hints shown in its rules.
#[derive(Debug, Clone, PartialEq)]
pub struct AppendixTest {
    pub kb: Arc<KnowledgeBase>,
    pub history: Vec<Utterance>,
    pub hints: HintSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AppendixSet {
    pub exemplars: Vec<Exemplar>,
    pub test: AppendixTest,
}

fn block_parts(raw: &RawBlock, primary_key: &str, dataset: DatasetId) -> Result<(Arc<KnowledgeBase>, Vec<Utterance>)> {
    let rows = raw.kb.iter().map(|row| {
        row.iter()
            .map(|(k, v)| (k.clone(), v.as_str().unwrap_or_default().to_string()))
            .collect::<Vec<_>>()
    });
    let kb = KnowledgeBase::from_rows(primary_key, rows, &dataset.ontology())?;
    let history = raw.history.iter().map(|t| Utterance::new(t.speaker, &t.text)).collect();
    Ok((Arc::new(kb), history))
}

fn parse_appendix(dataset: DatasetId) -> Result<AppendixSet> {
    let text = match dataset {
        DatasetId::MultiWoz => MULTIWOZ_APPENDIX,
        DatasetId::Smd => SMD_APPENDIX,
        DatasetId::BiTod => BITOD_APPENDIX,
    };
    let raw: RawAppendix = serde_json::from_str(text)?;
    let mut exemplars = Vec::new();
    for (i, block) in raw.exemplars.iter().enumerate() {
        let (kb, history) = block_parts(block, &raw.primary_key, dataset)?;
        exemplars.push(Exemplar {
            sample_id: format!("appendix-{}:{}", dataset.as_str(), i + 1),
            kb,
            history,
            hints: block.hints.clone(),
            entities: block.entities.clone(),
            response: block.response.clone(),
        });
    }
    let (kb, history) = block_parts(&raw.test, &raw.primary_key, dataset)?;
    if raw.exemplars.is_empty() {
        return Err(Error::InvalidArtifact("appendix set has no exemplars".into()));
    }
    Ok(AppendixSet {
        exemplars,
        test: AppendixTest {
            kb,
            history,
            hints: raw.test.hints.clone(),
        },
    })
}

/// The inputs of a dataset's sample prompt.
pub fn appendix_set(dataset: DatasetId) -> AppendixSet {
    parse_appendix(dataset).expect("bundled appendix assets are valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_assets_load() {
        for dataset in DatasetId::ALL {
            let profile = PromptProfile::for_dataset(dataset);
            assert!(profile.instructions.ends_with("Here are the examples -"));
            assert_eq!(profile.fixed_exemplars().len(), 2);
            let set = appendix_set(dataset);
            set.test.hints.validate(&dataset.ontology()).unwrap();
        }
    }
}
