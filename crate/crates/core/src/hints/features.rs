//! Sparse features for the featurized hint predictors.
//!
//! A sample is described by the bag of words of its last two utterances
//! (`w:<token>`), one indicator per knowledge-base column that has at least one
//! value (`kb:<type>`) and, for closure prediction, the turn position
//! (`turn`, the history length divided by ten).

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize, KnowledgeBase, Utterance};

pub type SparseRow = Vec<(usize, f64)>;

const TURN_FEATURE: &str = "turn";
const TURN_SCALE: f64 = 10.0;

fn raw_features(history: &[Utterance], kb: &KnowledgeBase, with_turn: bool) -> Vec<(String, f64)> {
    let mut names = BTreeSet::new();
    for utterance in history.iter().rev().take(2) {
        for token in tokenize(&utterance.text) {
            names.insert(format!("w:{token}"));
        }
    }
    for record in &kb.records {
        for ty in record.keys() {
            names.insert(format!("kb:{ty}"));
        }
    }
    let mut out: Vec<(String, f64)> = names.into_iter().map(|n| (n, 1.0)).collect();
    if with_turn {
        out.push((TURN_FEATURE.to_string(), history.len() as f64 / TURN_SCALE));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpace {
    vocabulary: Vec<String>,
    with_turn: bool,
    #[serde(skip)]
    lookup: HashMap<String, usize>,
}

impl FeatureSpace {
    pub fn fit<'a>(inputs: impl IntoIterator<Item = (&'a [Utterance], &'a KnowledgeBase)>, with_turn: bool) -> Self {
        let mut names = BTreeSet::new();
        for (history, kb) in inputs {
            for (name, _) in raw_features(history, kb, with_turn) {
                names.insert(name);
            }
        }
        Self::from_vocabulary(names.into_iter().collect(), with_turn)
    }

    pub fn from_vocabulary(vocabulary: Vec<String>, with_turn: bool) -> Self {
        let lookup = vocabulary.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        Self {
            vocabulary,
            with_turn,
            lookup,
        }
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    pub fn with_turn(&self) -> bool {
        self.with_turn
    }

    pub fn dim(&self) -> usize {
        self.vocabulary.len()
    }

    /// Features outside the fitted vocabulary are ignored.
    pub fn transform(&self, history: &[Utterance], kb: &KnowledgeBase) -> SparseRow {
        raw_features(history, kb, self.with_turn)
            .into_iter()
            .filter_map(|(name, value)| self.lookup.get(&name).map(|&i| (i, value)))
            .collect()
    }

    pub(crate) fn rebuild_lookup(&mut self) {
        self.lookup = self.vocabulary.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::EntityOntology;

    #[test]
    fn uses_last_two_utterances_and_kb_columns() {
        let ontology = EntityOntology::new(["name", "area"]).unwrap();
        let kb = KnowledgeBase::from_rows("name", vec![vec![("name", "x")]], &ontology).unwrap();
        let history = vec![
            Utterance::user("alpha"),
            Utterance::system("beta"),
            Utterance::user("gamma?"),
        ];
        let names: Vec<String> = raw_features(&history, &kb, true).into_iter().map(|(n, _)| n).collect();
        assert_eq!(names, vec!["kb:name", "w:?", "w:beta", "w:gamma", "turn"]);
    }

    #[test]
    fn unseen_features_are_dropped() {
        let kb = KnowledgeBase::empty("name");
        let train = vec![Utterance::user("hello there")];
        let space = FeatureSpace::fit([(train.as_slice(), &kb)], false);
        let row = space.transform(&[Utterance::user("hello world")], &kb);
        assert_eq!(row.len(), 1);
        assert_eq!(space.vocabulary()[row[0].0], "w:hello");
    }
}
