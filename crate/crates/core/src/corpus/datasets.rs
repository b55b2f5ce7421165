//! Built-in datasets and adapters for their public releases.
//!
//! Release adapters accept a directory holding `train.json`, `test.json` and
//! one of `val.json` / `valid.json` / `dev.json` (the Stanford `kvret_*_public.json`
//! names are recognized for SMD). Each file is either a JSON array of dialogs or
//! an object mapping dialog ids to dialogs. Field names are matched loosely:
//!
//! - turns: `dialog`, `dialogue`, `turns`, `log` or `utterances`; each turn
//!   carries its speaker in `speaker`, `turn`, `role` or `agent` and its text in
//!   `text`, `utterance` or `data.utterance`.
//! - knowledge base: `kb`, `KB`, `knowledge_base`, `db` or `scenario.kb.items`,
//!   as a list of rows or an object keyed by entity name.
//!
//! Column names are lowercased, underscores become spaces and dataset aliases
//! are applied (`pricerange` → `price range`, ...). Columns outside the
//! ontology are dropped, consecutive turns of the same speaker are merged and
//! leading system turns are discarded.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{canonicalize, validate_turns, Corpus, Dialog, EntityOntology, KnowledgeBase, Speaker, Split, Utterance};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetId {
    MultiWoz,
    Smd,
    BiTod,
}

impl DatasetId {
    pub const ALL: [DatasetId; 3] = [DatasetId::MultiWoz, DatasetId::Smd, DatasetId::BiTod];

    pub fn as_str(self) -> &'static str {
        match self {
            DatasetId::MultiWoz => "multiwoz",
            DatasetId::Smd => "smd",
            DatasetId::BiTod => "bitod",
        }
    }

    pub fn ontology_types(self) -> &'static [&'static str] {
        match self {
            DatasetId::MultiWoz => &[
                "name",
                "address",
                "phone",
                "food",
                "area",
                "postcode",
                "price range",
                "type",
                "reference number",
                "stars",
                "choice",
            ],
            DatasetId::Smd => &[
                "poi",
                "address",
                "poi type",
                "traffic info",
                "distance",
                "event",
                "date",
                "time",
                "party",
                "agenda",
                "room",
                "location",
                "weather attribute",
                "temperature",
                "weekly time",
            ],
            DatasetId::BiTod => &[
                "name",
                "address",
                "phone number",
                "location",
                "rating",
                "price level",
                "reference number",
                "stars",
                "price per night",
                "number of rooms",
                "number of nights",
                "user name",
                "start month",
                "start day",
                "cuisine",
                "dietary restrictions",
                "number of people",
                "month",
                "day",
                "time",
                "type",
            ],
        }
    }

    pub fn ontology(self) -> EntityOntology {
        EntityOntology::new(self.ontology_types().iter().copied())
            .expect("built-in ontologies are valid")
    }

    fn column_alias(self, column: &str) -> Option<&'static str> {
        let alias = match (self, column) {
            (DatasetId::MultiWoz, "pricerange") => "price range",
            (DatasetId::MultiWoz, "ref" | "reference" | "booking reference") => "reference number",
            (DatasetId::MultiWoz, "phone number") => "phone",
            (DatasetId::MultiWoz, "star") => "stars",
            (DatasetId::Smd, "poi type" | "poitype") => "poi type",
            (DatasetId::Smd, "traffic" | "traffic info") => "traffic info",
            (DatasetId::BiTod, "phone") => "phone number",
            (DatasetId::BiTod, "price range" | "pricerange") => "price level",
            (DatasetId::BiTod, "ref" | "reference") => "reference number",
            _ => return None,
        };
        Some(alias)
    }

    fn primary_key(self, records: &[BTreeMap<String, String>]) -> &'static str {
        match self {
            DatasetId::MultiWoz | DatasetId::BiTod => "name",
            DatasetId::Smd => ["poi", "event", "location"]
                .into_iter()
                .find(|k| records.iter().any(|r| r.contains_key(*k)))
                .unwrap_or("poi"),
        }
    }
}

impl fmt::Display for DatasetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "multiwoz" | "mwoz" => Ok(DatasetId::MultiWoz),
            "smd" | "kvret" => Ok(DatasetId::Smd),
            "bitod" => Ok(DatasetId::BiTod),
            other => Err(Error::UnknownFormat(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    Release(DatasetId),
    Canonical,
}

impl FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("canonical") {
            Ok(DatasetFormat::Canonical)
        } else {
            s.parse().map(DatasetFormat::Release)
        }
    }
}

fn find_split_file(dir: &Path, split: Split) -> Option<PathBuf> {
    let names: &[&str] = match split {
        Split::Train => &["train.json", "kvret_train_public.json"],
        Split::Val => &["val.json", "valid.json", "dev.json", "kvret_dev_public.json"],
        Split::Test => &["test.json", "kvret_test_public.json"],
    };
    names.iter().map(|n| dir.join(n)).find(|p| p.is_file())
}

fn first<'a>(obj: &'a serde_json::Map<String, Value>, keys: &[&str]) -> Option<&'a Value> {
    keys.iter().find_map(|k| obj.get(*k))
}

fn scalar(value: &Value) -> Option<String> {
    match value {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

fn parse_speaker(raw: &str) -> Option<Speaker> {
    match raw.to_ascii_lowercase().as_str() {
        "user" | "usr" | "driver" | "customer" | "human" => Some(Speaker::User),
        "system" | "sys" | "assistant" | "agent" | "wizard" | "bot" => Some(Speaker::System),
        _ => None,
    }
}

fn turn_text(turn: &serde_json::Map<String, Value>) -> Option<String> {
    first(turn, &["text", "utterance"])
        .and_then(scalar)
        .or_else(|| {
            turn.get("data")
                .and_then(Value::as_object)
                .and_then(|d| d.get("utterance"))
                .and_then(scalar)
        })
}

fn parse_turns(raw: &Value) -> std::result::Result<Vec<Utterance>, String> {
    let list = raw.as_array().ok_or("turn list is not an array")?;
    let mut turns: Vec<Utterance> = Vec::new();
    for (i, entry) in list.iter().enumerate() {
        let (speaker, text) = match entry {
            Value::String(s) => (if i % 2 == 0 { Speaker::User } else { Speaker::System }, s.clone()),
            Value::Object(obj) => {
                let speaker = match first(obj, &["speaker", "turn", "role", "agent"]) {
                    Some(v) => {
                        let raw = v.as_str().ok_or_else(|| format!("turn {i}: speaker is not a string"))?;
                        parse_speaker(raw).ok_or_else(|| format!("turn {i}: unknown speaker `{raw}`"))?
                    }
                    None if i % 2 == 0 => Speaker::User,
                    None => Speaker::System,
                };
                let text = turn_text(obj).ok_or_else(|| format!("turn {i}: missing text"))?;
                (speaker, text)
            }
            _ => return Err(format!("turn {i}: unsupported turn encoding")),
        };
        let text = canonicalize(&text);
        if text.is_empty() {
            continue;
        }
        match turns.last_mut() {
            Some(prev) if prev.speaker == speaker => {
                prev.text.push(' ');
                prev.text.push_str(&text);
            }
            None if speaker == Speaker::System => {}
            _ => turns.push(Utterance { speaker, text }),
        }
    }
    Ok(turns)
}

fn normalize_column(dataset: DatasetId, raw: &str, ontology: &EntityOntology) -> Option<String> {
    let column = canonicalize(&raw.replace('_', " "));
    let column = dataset.column_alias(&column).map(str::to_string).unwrap_or(column);
    ontology.contains(&column).then_some(column)
}

/// SMD weather rows hold one column per day ("rain, low of 30f, high of 50f").
/// Each day becomes rows keyed by location carrying the date, the weather
/// attribute and each temperature.
fn expand_weather_row(row: &serde_json::Map<String, Value>) -> Option<Vec<BTreeMap<String, String>>> {
    const DAYS: [&str; 7] = ["monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday"];
    let location = row.get("location").and_then(scalar)?;
    if !DAYS.iter().any(|d| row.contains_key(*d)) {
        return None;
    }
    let mut out = Vec::new();
    for day in DAYS {
        let Some(desc) = row.get(day).and_then(scalar) else { continue };
        let mut parts = desc.split(',').map(str::trim);
        let base = || {
            let mut r = BTreeMap::new();
            r.insert("location".to_string(), location.clone());
            r.insert("date".to_string(), day.to_string());
            r
        };
        if let Some(attr) = parts.next().filter(|s| !s.is_empty()) {
            let mut r = base();
            r.insert("weather attribute".into(), attr.to_string());
            out.push(r);
        }
        for part in parts {
            if let Some(temp) = part.split_whitespace().last() {
                let mut r = base();
                r.insert("temperature".into(), temp.to_string());
                out.push(r);
            }
        }
    }
    Some(out)
}

fn parse_kb(
    dataset: DatasetId,
    raw: Option<&Value>,
    ontology: &EntityOntology,
) -> std::result::Result<KnowledgeBase, String> {
    let mut rows: Vec<serde_json::Map<String, Value>> = Vec::new();
    match raw {
        None | Some(Value::Null) => {}
        Some(Value::Array(items)) => {
            for (r, item) in items.iter().enumerate() {
                rows.push(item.as_object().cloned().ok_or_else(|| format!("kb row {r} is not an object"))?);
            }
        }
        Some(Value::Object(map)) => {
            for (name, item) in map {
                let mut obj = item.as_object().cloned().ok_or_else(|| format!("kb entry `{name}` is not an object"))?;
                obj.entry("name").or_insert_with(|| Value::String(name.clone()));
                rows.push(obj);
            }
        }
        Some(_) => return Err("kb is neither a list nor an object".into()),
    }

    let mut records = Vec::new();
    for row in &rows {
        if dataset == DatasetId::Smd {
            if let Some(expanded) = expand_weather_row(row) {
                records.extend(expanded);
                continue;
            }
        }
        let mut record = BTreeMap::new();
        for (key, value) in row {
            let (Some(column), Some(value)) = (normalize_column(dataset, key, ontology), scalar(value)) else {
                continue;
            };
            record.insert(column, value);
        }
        records.push(record);
    }
    let primary_key = dataset.primary_key(&records);
    KnowledgeBase::from_rows(primary_key, records, ontology).map_err(|e| e.to_string())
}

fn is_english(obj: &serde_json::Map<String, Value>, id: &str) -> bool {
    let lang = first(obj, &["lang", "language"]).and_then(Value::as_str);
    !(matches!(lang, Some(l) if !l.eq_ignore_ascii_case("en") && !l.eq_ignore_ascii_case("english"))
        || id.ends_with("_zh"))
}

fn parse_dialog(
    dataset: DatasetId,
    id: String,
    obj: &serde_json::Map<String, Value>,
    ontology: &EntityOntology,
) -> std::result::Result<Dialog, String> {
    let turns_raw = first(obj, &["dialog", "dialogue", "turns", "log", "utterances"]).ok_or("missing turn list")?;
    let turns = parse_turns(turns_raw)?;
    validate_turns(&turns)?;
    let scenario = obj.get("scenario").and_then(Value::as_object);
    let kb_raw = first(obj, &["kb", "KB", "knowledge_base", "db"]).or_else(|| {
        scenario
            .and_then(|s| s.get("kb"))
            .and_then(Value::as_object)
            .and_then(|kb| kb.get("items"))
    });
    let kb = parse_kb(dataset, kb_raw, ontology)?;
    let domain = first(obj, &["domain"])
        .and_then(scalar)
        .or_else(|| {
            scenario
                .and_then(|s| s.get("task"))
                .and_then(|t| t.get("intent"))
                .and_then(scalar)
        })
        .unwrap_or_default();
    Ok(Dialog {
        id,
        domain: canonicalize(&domain),
        kb: Arc::new(kb),
        turns,
    })
}

fn load_release_split(path: &Path, dataset: DatasetId, ontology: &EntityOntology) -> Result<Vec<Dialog>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file = path.display().to_string();
    let root: Value = serde_json::from_str(&text).map_err(|e| Error::MalformedRecord {
        file: file.clone(),
        index: 0,
        reason: e.to_string(),
    })?;
    let entries: Vec<(Option<String>, &Value)> = match &root {
        Value::Array(items) => items.iter().map(|v| (None, v)).collect(),
        Value::Object(map) => map.iter().map(|(k, v)| (Some(k.clone()), v)).collect(),
        _ => {
            return Err(Error::MalformedRecord {
                file,
                index: 0,
                reason: "top level is neither an array nor an object".into(),
            })
        }
    };
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("dialog");
    let mut dialogs = Vec::with_capacity(entries.len());
    for (index, (key, value)) in entries.into_iter().enumerate() {
        let malformed = |reason: String| Error::MalformedRecord {
            file: file.clone(),
            index,
            reason,
        };
        let obj = value.as_object().ok_or_else(|| malformed("dialog is not an object".into()))?;
        let id = first(obj, &["id", "dialogue_id", "dialog_id"])
            .and_then(scalar)
            .or(key)
            .unwrap_or_else(|| format!("{stem}-{index}"));
        if dataset == DatasetId::BiTod && !is_english(obj, &id) {
            continue;
        }
        dialogs.push(parse_dialog(dataset, id, obj, ontology).map_err(malformed)?);
    }
    Ok(dialogs)
}

/// Converts a public dataset release into a [`Corpus`].
pub fn adapt_release(dir: &Path, format: DatasetFormat) -> Result<Corpus> {
    let DatasetFormat::Release(dataset) = format else {
        return super::canonical::load_canonical(dir);
    };
    if !dir.is_dir() {
        return Err(Error::MissingArtifact(dir.to_path_buf()));
    }
    let ontology = dataset.ontology();
    let mut splits = Vec::new();
    for split in Split::ALL {
        let dialogs = match find_split_file(dir, split) {
            Some(path) => load_release_split(&path, dataset, &ontology)?,
            None if split == Split::Val => Vec::new(),
            None => return Err(Error::MissingArtifact(dir.join(format!("{}.json", split.as_str())))),
        };
        if dialogs.is_empty() && split != Split::Val {
            return Err(Error::EmptySplit(split.as_str().into()));
        }
        splits.push(dialogs);
    }
    let test = splits.pop().unwrap_or_default();
    let val = splits.pop().unwrap_or_default();
    let train = splits.pop().unwrap_or_default();
    Corpus::from_dialogs(Some(dataset.as_str().to_string()), ontology, train, val, test)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn builtin_ontology_sizes() {
        assert_eq!(DatasetId::MultiWoz.ontology().len(), 11);
        assert_eq!(DatasetId::Smd.ontology().len(), 15);
        assert_eq!(DatasetId::BiTod.ontology().len(), 21);
    }

    #[test]
    fn format_parsing() {
        assert_eq!("canonical".parse::<DatasetFormat>().unwrap(), DatasetFormat::Canonical);
        assert_eq!(
            "SMD".parse::<DatasetFormat>().unwrap(),
            DatasetFormat::Release(DatasetId::Smd)
        );
        assert!(matches!("sgd".parse::<DatasetFormat>(), Err(Error::UnknownFormat(_))));
    }

    #[test]
    fn kvret_dialog() {
        let ontology = DatasetId::Smd.ontology();
        let raw = json!({
            "dialogue": [
                {"turn": "driver", "data": {"utterance": "Where is the nearest gas station?"}},
                {"turn": "assistant", "data": {"utterance": "Valero is 4 miles away."}}
            ],
            "scenario": {
                "kb": {"items": [
                    {"poi": "Valero", "poi_type": "gas station", "distance": "4 miles",
                     "traffic_info": "no traffic", "address": "200 alester ave"}
                ]},
                "task": {"intent": "navigate"}
            }
        });
        let dialog = parse_dialog(DatasetId::Smd, "x".into(), raw.as_object().unwrap(), &ontology).unwrap();
        assert_eq!(dialog.domain, "navigate");
        assert_eq!(dialog.kb.primary_key, "poi");
        assert_eq!(dialog.kb.records[0]["poi type"], "gas station");
        assert_eq!(dialog.turns[1].text, "valero is 4 miles away.");
    }

    #[test]
    fn kvret_weather_rows_expand() {
        let ontology = DatasetId::Smd.ontology();
        let kb = parse_kb(
            DatasetId::Smd,
            Some(&json!([{"location": "boston", "monday": "rain, low of 30f, high of 50f", "today": "monday"}])),
            &ontology,
        )
        .unwrap();
        assert_eq!(kb.primary_key, "location");
        assert_eq!(kb.records.len(), 3);
        assert_eq!(kb.records[0]["weather attribute"], "rain");
        assert_eq!(kb.records[2]["temperature"], "50f");
    }

    #[test]
    fn multiwoz_aliases_and_merging() {
        let ontology = DatasetId::MultiWoz.ontology();
        let raw = json!({
            "dialog": [
                {"speaker": "system", "text": "welcome"},
                {"speaker": "user", "text": "a cheap place"},
                {"speaker": "user", "text": "in the north"},
                {"speaker": "system", "text": "how about acorn guest house?"}
            ],
            "kb": {"acorn guest house": {"pricerange": "cheap", "parking": "yes", "ref": "abc"}}
        });
        let dialog = parse_dialog(DatasetId::MultiWoz, "m".into(), raw.as_object().unwrap(), &ontology).unwrap();
        assert_eq!(dialog.turns.len(), 2);
        assert_eq!(dialog.turns[0].text, "a cheap place in the north");
        let record = &dialog.kb.records[0];
        assert_eq!(record["price range"], "cheap");
        assert_eq!(record["reference number"], "abc");
        assert_eq!(record["name"], "acorn guest house");
        assert!(!record.contains_key("parking"));
    }
}
