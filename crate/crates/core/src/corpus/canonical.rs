//! The canonical on-disk corpus: one JSON document per split.
//!
//! ```json
//! {
//!   "dataset": "multiwoz",
//!   "ontology": ["name", "address", "..."],
//!   "primary_key": "name",
//!   "dialogs": [
//!     {
//!       "id": "sng0073",
//!       "domain": "hotel",
//!       "kb": [{"name": "acorn guest house", "area": "north"}],
//!       "turns": [{"speaker": "user", "text": "..."}, {"speaker": "system", "text": "..."}]
//!     }
//!   ]
//! }
//! ```
//!
//! `dataset` and `primary_key` are optional; a dialog may override the
//! primary key. The primary key defaults to the first ontology type.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{validate_turns, Corpus, Dialog, EntityOntology, KnowledgeBase, Speaker, Split, Utterance};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CanonicalTurn {
    pub speaker: Speaker,
    pub text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CanonicalDialog {
    pub id: String,
    #[serde(default)]
    pub domain: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub primary_key: Option<String>,
    #[serde(default)]
    pub kb: Vec<serde_json::Map<String, Value>>,
    pub turns: Vec<CanonicalTurn>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CanonicalSplit {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
    pub ontology: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub primary_key: Option<String>,
    pub dialogs: Vec<CanonicalDialog>,
}

fn value_to_string(value: &Value) -> Option<String> {
    match value {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

pub(crate) fn dialog_from_canonical(
    raw: &CanonicalDialog,
    default_key: &str,
    ontology: &EntityOntology,
) -> std::result::Result<Dialog, String> {
    if raw.id.is_empty() {
        return Err("dialog id is empty".into());
    }
    let primary_key = raw.primary_key.as_deref().unwrap_or(default_key);
    let mut rows = Vec::with_capacity(raw.kb.len());
    for (r, record) in raw.kb.iter().enumerate() {
        let mut row = Vec::with_capacity(record.len());
        for (key, value) in record {
            let value = value_to_string(value)
                .ok_or_else(|| format!("kb row {r}: attribute `{key}` is not a scalar"))?;
            row.push((key.clone(), value));
        }
        rows.push(row);
    }
    let kb = KnowledgeBase::from_rows(primary_key, rows, ontology).map_err(|e| e.to_string())?;
    let turns: Vec<Utterance> = raw
        .turns
        .iter()
        .map(|t| Utterance::new(t.speaker, &t.text))
        .collect();
    validate_turns(&turns)?;
    Ok(Dialog {
        id: raw.id.clone(),
        domain: raw.domain.clone(),
        kb: Arc::new(kb),
        turns,
    })
}

pub(crate) fn dialog_to_canonical(dialog: &Dialog) -> CanonicalDialog {
    CanonicalDialog {
        id: dialog.id.clone(),
        domain: dialog.domain.clone(),
        primary_key: Some(dialog.kb.primary_key.clone()),
        kb: dialog
            .kb
            .records
            .iter()
            .map(|r| r.iter().map(|(k, v)| (k.clone(), Value::String(v.clone()))).collect())
            .collect(),
        turns: dialog
            .turns
            .iter()
            .map(|t| CanonicalTurn {
                speaker: t.speaker,
                text: t.text.clone(),
            })
            .collect(),
    }
}

fn read_split(path: &Path) -> Result<Option<CanonicalSplit>> {
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parsed = serde_json::from_str(&text).map_err(|e| Error::MalformedRecord {
        file: path.display().to_string(),
        index: 0,
        reason: e.to_string(),
    })?;
    Ok(Some(parsed))
}

pub(crate) fn load_canonical(dir: &Path) -> Result<Corpus> {
    if !dir.is_dir() {
        return Err(Error::MissingArtifact(dir.to_path_buf()));
    }
    let train_path = dir.join("train.json");
    let train = read_split(&train_path)?.ok_or_else(|| Error::MissingArtifact(train_path.clone()))?;
    let ontology = EntityOntology::new(train.ontology.clone()).map_err(|e| Error::MalformedRecord {
        file: train_path.display().to_string(),
        index: 0,
        reason: e.to_string(),
    })?;
    let dataset = train.dataset.clone();

    let mut splits: Vec<Vec<Dialog>> = Vec::new();
    for split in Split::ALL {
        let path = dir.join(format!("{}.json", split.as_str()));
        let doc = match split {
            Split::Train => Some(train.clone()),
            _ => read_split(&path)?,
        };
        let Some(doc) = doc else {
            if split == Split::Test {
                return Err(Error::EmptySplit("test".into()));
            }
            splits.push(Vec::new());
            continue;
        };
        let file = path.display().to_string();
        if doc.ontology != train.ontology {
            return Err(Error::MalformedRecord {
                file,
                index: 0,
                reason: "ontology differs from the training split".into(),
            });
        }
        let default_key = doc
            .primary_key
            .clone()
            .or_else(|| ontology.types().first().cloned())
            .unwrap_or_default();
        let mut dialogs = Vec::with_capacity(doc.dialogs.len());
        for (index, raw) in doc.dialogs.iter().enumerate() {
            let dialog = dialog_from_canonical(raw, &default_key, &ontology).map_err(|reason| {
                Error::MalformedRecord {
                    file: file.clone(),
                    index,
                    reason,
                }
            })?;
            dialogs.push(dialog);
        }
        if dialogs.is_empty() && split != Split::Val {
            return Err(Error::EmptySplit(split.as_str().into()));
        }
        splits.push(dialogs);
    }
    let test = splits.pop().unwrap_or_default();
    let val = splits.pop().unwrap_or_default();
    let train_dialogs = splits.pop().unwrap_or_default();
    Corpus::from_dialogs(dataset, ontology, train_dialogs, val, test)
}

/// Writes `corpus` as `train.json`, `val.json` and `test.json` under `dir`.
pub fn write_canonical(corpus: &Corpus, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for split in Split::ALL {
        let doc = CanonicalSplit {
            dataset: corpus.dataset.clone(),
            ontology: corpus.ontology.types().to_vec(),
            primary_key: None,
            dialogs: corpus.dialogs(split).iter().map(dialog_to_canonical).collect(),
        };
        let path = dir.join(format!("{}.json", split.as_str()));
        let text = serde_json::to_string_pretty(&doc)?;
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
