//! JSON-lines artifacts passed between the staged subcommands.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use todalign::hints::HintSet;
use todalign::retrieval::ScoredCandidate;
use todalign::Error;

/// One line of a `predict-hints` output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HintRecord {
    pub sample_id: String,
    #[serde(flatten)]
    pub hints: HintSet,
}

/// One line of a `select-exemplars` output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub sample_id: String,
    pub exemplar_ids: Vec<String>,
    pub short: bool,
    #[serde(default)]
    pub candidates: Vec<ScoredCandidate>,
}

/// One line of `prompts.jsonl`, written by `build-prompts`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub sample_id: String,
    pub prompt_hash: String,
    pub exemplar_ids: Vec<String>,
    /// Tag that introduces the response line.
    pub role: String,
    pub full_text: String,
}

/// A prediction for `evaluate`. Generation records are accepted as is.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct PredictionRecord {
    pub sample_id: String,
    #[serde(alias = "prediction", alias = "response")]
    pub response_text: String,
}

pub fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, Error> {
    if !path.is_file() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::MalformedRecord {
                file: path.display().to_string(),
                index: i,
                reason: e.to_string(),
            })
        })
        .collect()
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), Error> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| io_error(parent, e))?;
    }
    let mut body = String::new();
    for r in records {
        body.push_str(&serde_json::to_string(r)?);
        body.push('\n');
    }
    fs::write(path, body).map_err(|e| io_error(path, e))
}

pub fn create_dir(path: &Path) -> Result<(), Error> {
    fs::create_dir_all(path).map_err(|e| io_error(path, e))
}
