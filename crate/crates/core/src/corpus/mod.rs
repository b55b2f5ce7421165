//! Canonical dialog corpora.
//!
//! A corpus holds whole dialogs per split together with the per-turn
//! prediction samples obtained by unrolling them. Every system turn with a
//! preceding user turn becomes one [`DialogSample`]: the history is all turns
//! before it, the gold response is the system turn itself.

mod datasets;
mod canonical;
mod entities;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use datasets::{adapt_release, DatasetFormat, DatasetId};
pub use canonical::{write_canonical, CanonicalDialog, CanonicalSplit, CanonicalTurn};
pub use entities::{extract_entities, EntityMention, KB_ONLY_TYPES};

/// Lowercases, collapses internal whitespace to single spaces and trims.
///
/// Underscores, digits and punctuation are kept as they are.
pub fn canonicalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for word in text.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.extend(word.chars().flat_map(char::to_lowercase));
    }
    out
}

/// Lowercased tokens with ASCII punctuation split off as separate tokens.
/// Underscores stay inside tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for word in text.split_whitespace() {
        let mut current = String::new();
        for c in word.chars().flat_map(char::to_lowercase) {
            if c.is_ascii_punctuation() && c != '_' {
                if !current.is_empty() {
                    tokens.push(std::mem::take(&mut current));
                }
                tokens.push(c.to_string());
            } else {
                current.push(c);
            }
        }
        if !current.is_empty() {
            tokens.push(current);
        }
    }
    tokens
}

/// Number of whitespace-separated words after canonicalization.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    User,
    System,
}

impl Speaker {
    pub fn as_str(self) -> &'static str {
        match self {
            Speaker::User => "user",
            Speaker::System => "system",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub speaker: Speaker,
    pub text: String,
}

impl Utterance {
    pub fn new(speaker: Speaker, text: &str) -> Self {
        Self {
            speaker,
            text: canonicalize(text),
        }
    }

    pub fn user(text: &str) -> Self {
        Self::new(Speaker::User, text)
    }

    pub fn system(text: &str) -> Self {
        Self::new(Speaker::System, text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" | "dev" | "valid" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split `{other}`"))),
        }
    }
}

/// The ordered entity types of a dataset.
///
/// Order is significant: it is the order of the instruction block, of the
/// serialized knowledge base attributes and of the negative-type rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct EntityOntology {
    types: Vec<String>,
}

impl EntityOntology {
    pub fn new<S: Into<String>>(types: impl IntoIterator<Item = S>) -> Result<Self> {
        let types: Vec<String> = types.into_iter().map(Into::into).collect();
        let mut seen = BTreeSet::new();
        for ty in &types {
            if ty.is_empty() || *ty != canonicalize(ty) {
                return Err(Error::Config(format!(
                    "entity type `{ty}` must be non-empty, lowercase and single-spaced"
                )));
            }
            if !seen.insert(ty.as_str()) {
                return Err(Error::Config(format!("duplicate entity type `{ty}`")));
            }
        }
        Ok(Self { types })
    }

    pub fn types(&self) -> &[String] {
        &self.types
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    pub fn contains(&self, ty: &str) -> bool {
        self.position(ty).is_some()
    }

    pub fn position(&self, ty: &str) -> Option<usize> {
        self.types.iter().position(|t| t == ty)
    }

    /// Stable fingerprint stored alongside trained models.
    pub fn fingerprint(&self) -> String {
        let fields: Vec<&str> = self.types.iter().map(String::as_str).collect();
        crate::hashing::fields_hash(&fields)
    }
}

impl TryFrom<Vec<String>> for EntityOntology {
    type Error = Error;

    fn try_from(types: Vec<String>) -> Result<Self> {
        Self::new(types)
    }
}

impl From<EntityOntology> for Vec<String> {
    fn from(ontology: EntityOntology) -> Self {
        ontology.types
    }
}

/// One knowledge-base row: entity type → canonical value.
pub type EntityRecord = BTreeMap<String, String>;

/// Value used by some releases for an attribute the row does not have.
pub const MISSING_VALUE: &str = "-";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeBase {
    pub primary_key: String,
    pub records: Vec<EntityRecord>,
}

impl KnowledgeBase {
    /// Builds a knowledge base from raw rows, canonicalizing values and
    /// dropping `-` placeholders. Every attribute must be an ontology type.
    pub fn from_rows<I, K, V>(primary_key: &str, rows: I, ontology: &EntityOntology) -> Result<Self>
    where
        I: IntoIterator,
        I::Item: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        if !ontology.contains(primary_key) {
            return Err(Error::Config(format!(
                "primary key `{primary_key}` is not an ontology type"
            )));
        }
        let mut records = Vec::new();
        for row in rows {
            let mut record = EntityRecord::new();
            for (key, value) in row {
                let key = canonicalize(key.as_ref());
                if !ontology.contains(&key) {
                    return Err(Error::Config(format!("attribute `{key}` is not an ontology type")));
                }
                let value = canonicalize(value.as_ref());
                if value.is_empty() || value == MISSING_VALUE {
                    continue;
                }
                record.insert(key, value);
            }
            records.push(record);
        }
        Ok(Self {
            primary_key: primary_key.to_string(),
            records,
        })
    }

    pub fn empty(primary_key: &str) -> Self {
        Self {
            primary_key: primary_key.to_string(),
            records: Vec::new(),
        }
    }

    /// Distinct values of one column, in row order.
    pub fn column_values<'a>(&'a self, ty: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        let mut seen = BTreeSet::new();
        self.records
            .iter()
            .filter_map(move |r| r.get(ty).map(String::as_str))
            .filter(move |v| seen.insert(*v))
    }

    pub fn has_column(&self, ty: &str) -> bool {
        self.records.iter().any(|r| r.contains_key(ty))
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Every value observed per entity type across all knowledge bases of a corpus.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lexicon {
    by_type: BTreeMap<String, BTreeSet<String>>,
}

impl Lexicon {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, ty: &str, value: &str) {
        let value = canonicalize(value);
        if value.is_empty() || value == MISSING_VALUE {
            return;
        }
        self.by_type.entry(ty.to_string()).or_default().insert(value);
    }

    pub fn add_kb(&mut self, kb: &KnowledgeBase) {
        for record in &kb.records {
            for (ty, value) in record {
                self.insert(ty, value);
            }
        }
    }

    pub fn values(&self, ty: &str) -> impl Iterator<Item = &str> {
        self.by_type
            .get(ty)
            .into_iter()
            .flat_map(|set| set.iter().map(String::as_str))
    }

    pub fn contains(&self, ty: &str, value: &str) -> bool {
        self.by_type.get(ty).is_some_and(|s| s.contains(value))
    }

    pub fn len(&self) -> usize {
        self.by_type.values().map(BTreeSet::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A full dialog with its knowledge base.
#[derive(Debug, Clone, PartialEq)]
pub struct Dialog {
    pub id: String,
    pub domain: String,
    pub kb: Arc<KnowledgeBase>,
    pub turns: Vec<Utterance>,
}

/// One prediction instance: history, gold system response and knowledge base.
#[derive(Debug, Clone, PartialEq)]
pub struct DialogSample {
    /// `{dialog_id}:{turn_index}`, where `turn_index` is the position of the
    /// gold system turn within the dialog.
    pub id: String,
    pub dialog_id: String,
    pub turn_index: usize,
    pub domain: String,
    pub history: Vec<Utterance>,
    pub gold_response: String,
    pub kb: Arc<KnowledgeBase>,
    /// True iff the gold response is the last utterance of the dialog.
    pub is_final: bool,
    pub split: Split,
}

impl DialogSample {
    pub fn last_user_utterance(&self) -> &str {
        self.history
            .iter()
            .rev()
            .find(|u| u.speaker == Speaker::User)
            .map(|u| u.text.as_str())
            .unwrap_or("")
    }
}

/// Checks that turns start with the user and strictly alternate.
pub fn validate_turns(turns: &[Utterance]) -> std::result::Result<(), String> {
    if turns.is_empty() {
        return Err("dialog has no turns".into());
    }
    for (i, turn) in turns.iter().enumerate() {
        if turn.text.is_empty() {
            return Err(format!("turn {i} has empty text"));
        }
        let expected = if i % 2 == 0 { Speaker::User } else { Speaker::System };
        if turn.speaker != expected {
            return Err(format!(
                "turn {i} is spoken by {} but {} was expected",
                turn.speaker.as_str(),
                expected.as_str()
            ));
        }
    }
    Ok(())
}

/// Unrolls a dialog into one sample per system turn that has a preceding user
/// turn. A trailing user turn yields no sample.
pub fn unroll_dialog(dialog: &Dialog, split: Split) -> Vec<DialogSample> {
    let last = dialog.turns.len().saturating_sub(1);
    dialog
        .turns
        .iter()
        .enumerate()
        .filter(|(i, turn)| *i > 0 && turn.speaker == Speaker::System)
        .map(|(i, turn)| DialogSample {
            id: format!("{}:{}", dialog.id, i),
            dialog_id: dialog.id.clone(),
            turn_index: i,
            domain: dialog.domain.clone(),
            history: dialog.turns[..i].to_vec(),
            gold_response: turn.text.clone(),
            kb: Arc::clone(&dialog.kb),
            is_final: i == last,
            split,
        })
        .collect()
}

#[derive(Debug, Clone, Default)]
pub struct SplitData {
    pub dialogs: Vec<Dialog>,
    pub samples: Vec<DialogSample>,
}

impl SplitData {
    fn new(dialogs: Vec<Dialog>, split: Split) -> Self {
        let samples = dialogs.iter().flat_map(|d| unroll_dialog(d, split)).collect();
        Self { dialogs, samples }
    }
}

/// An immutable loaded corpus.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub dataset: Option<String>,
    pub ontology: EntityOntology,
    pub lexicon: Lexicon,
    train: SplitData,
    val: SplitData,
    test: SplitData,
    index: HashMap<String, (Split, usize)>,
}

impl Corpus {
    /// Assembles a corpus from whole dialogs. The training split must not be
    /// empty; the lexicon is built over the knowledge bases of every split.
    pub fn from_dialogs(
        dataset: Option<String>,
        ontology: EntityOntology,
        train: Vec<Dialog>,
        val: Vec<Dialog>,
        test: Vec<Dialog>,
    ) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::EmptySplit("train".into()));
        }
        let mut lexicon = Lexicon::new();
        for dialog in train.iter().chain(&val).chain(&test) {
            lexicon.add_kb(&dialog.kb);
        }
        Ok(Self::assemble(
            dataset,
            ontology,
            lexicon,
            SplitData::new(train, Split::Train),
            SplitData::new(val, Split::Val),
            SplitData::new(test, Split::Test),
        ))
    }

    fn assemble(
        dataset: Option<String>,
        ontology: EntityOntology,
        lexicon: Lexicon,
        train: SplitData,
        val: SplitData,
        test: SplitData,
    ) -> Self {
        let mut corpus = Self {
            dataset,
            ontology,
            lexicon,
            train,
            val,
            test,
            index: HashMap::new(),
        };
        let mut index = HashMap::new();
        for split in Split::ALL {
            for (i, s) in corpus.split(split).samples.iter().enumerate() {
                index.insert(s.id.clone(), (split, i));
            }
        }
        corpus.index = index;
        corpus
    }

    pub fn split(&self, split: Split) -> &SplitData {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    pub fn samples(&self, split: Split) -> &[DialogSample] {
        &self.split(split).samples
    }

    pub fn dialogs(&self, split: Split) -> &[Dialog] {
        &self.split(split).dialogs
    }

    pub fn sample(&self, id: &str) -> Option<&DialogSample> {
        self.index
            .get(id)
            .map(|&(split, i)| &self.split(split).samples[i])
    }

    /// Same corpus with the training dialogs replaced. Validation and test
    /// splits as well as the global lexicon are kept.
    pub fn with_train_dialogs(&self, train: Vec<Dialog>) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::EmptySplit("train".into()));
        }
        Ok(Self::assemble(
            self.dataset.clone(),
            self.ontology.clone(),
            self.lexicon.clone(),
            SplitData::new(train, Split::Train),
            self.val.clone(),
            self.test.clone(),
        ))
    }
}

/// Loads a corpus from disk.
///
/// `canonical` expects a directory with `train.json`, `test.json` and an
/// optional `val.json`; the release formats are converted on the fly.
pub fn load_corpus(path: &Path, format: DatasetFormat) -> Result<Corpus> {
    match format {
        DatasetFormat::Canonical => canonical::load_canonical(path),
        release => datasets::adapt_release(path, release),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dialog(turns: &[(Speaker, &str)]) -> Dialog {
        Dialog {
            id: "d1".into(),
            domain: "hotel".into(),
            kb: Arc::new(KnowledgeBase::empty("name")),
            turns: turns.iter().map(|(s, t)| Utterance::new(*s, t)).collect(),
        }
    }

    #[test]
    fn canonicalize_examples() {
        assert_eq!(canonicalize("  Lovell  Lodge "), "lovell lodge");
        assert_eq!(canonicalize("chocoduck_bistro"), "chocoduck_bistro");
        assert_eq!(canonicalize(""), "");
        assert_eq!(canonicalize("A\tB\n\nC"), "a b c");
    }

    #[test]
    fn tokenize_splits_punctuation() {
        assert_eq!(
            tokenize("We're 4 miles away, ok? chocoduck_bistro!"),
            vec!["we", "'", "re", "4", "miles", "away", ",", "ok", "?", "chocoduck_bistro", "!"]
        );
    }

    #[test]
    fn unroll_minimal_dialog() {
        let d = dialog(&[(Speaker::User, "hi"), (Speaker::System, "hello")]);
        let samples = unroll_dialog(&d, Split::Train);
        assert_eq!(samples.len(), 1);
        assert!(samples[0].is_final);
        assert_eq!(samples[0].id, "d1:1");
        assert_eq!(samples[0].history.len(), 1);
    }

    #[test]
    fn unroll_four_turns() {
        let d = dialog(&[
            (Speaker::User, "a"),
            (Speaker::System, "b"),
            (Speaker::User, "c"),
            (Speaker::System, "d"),
        ]);
        let samples = unroll_dialog(&d, Split::Train);
        assert_eq!(samples.len(), 2);
        assert!(!samples[0].is_final);
        assert!(samples[1].is_final);
        assert_eq!(samples[1].history.len(), 3);
        assert_eq!(samples[1].gold_response, "d");
    }

    #[test]
    fn unroll_trailing_user_turn() {
        let d = dialog(&[(Speaker::User, "a"), (Speaker::System, "b"), (Speaker::User, "c")]);
        let samples = unroll_dialog(&d, Split::Train);
        assert_eq!(samples.len(), 1);
        assert!(!samples[0].is_final);
    }

    #[test]
    fn unroll_without_system_turn_is_empty() {
        let d = dialog(&[(Speaker::User, "a")]);
        assert!(unroll_dialog(&d, Split::Train).is_empty());
    }

    #[test]
    fn validate_rejects_non_alternating() {
        let turns = vec![Utterance::user("a"), Utterance::user("b")];
        assert!(validate_turns(&turns).is_err());
        let turns = vec![Utterance::system("a")];
        assert!(validate_turns(&turns).is_err());
    }

    #[test]
    fn ontology_rejects_duplicates_and_case() {
        assert!(EntityOntology::new(["name", "name"]).is_err());
        assert!(EntityOntology::new(["Name"]).is_err());
        assert!(EntityOntology::new(["name", "price range"]).is_ok());
    }

    #[test]
    fn kb_drops_placeholders() {
        let ontology = EntityOntology::new(["event", "room", "time"]).unwrap();
        let kb = KnowledgeBase::from_rows(
            "event",
            vec![vec![("event", "Dinner"), ("room", "-"), ("time", "7pm")]],
            &ontology,
        )
        .unwrap();
        assert_eq!(kb.records[0].len(), 2);
        assert!(!kb.has_column("room"));
        assert_eq!(kb.records[0]["event"], "dinner");
    }

    #[test]
    fn empty_train_split_is_an_error() {
        let ontology = EntityOntology::new(["name"]).unwrap();
        let err = Corpus::from_dialogs(None, ontology, vec![], vec![], vec![]).unwrap_err();
        assert!(matches!(err, Error::EmptySplit(ref s) if s == "train"));
    }
}
