//! Response hints: entity types (ET), dialog closure (DC) and response size (RS).
//!
//! Gold hints are read off a sample's gold response. For unseen samples the
//! ET and DC hints come from trained predictors and RS from a constant equal
//! to the rounded mean training response size.

mod features;
mod logistic;
mod model;

use serde::{Deserialize, Serialize};

use crate::corpus::{extract_entities, word_count, DialogSample, EntityOntology, Lexicon};
use crate::error::{Error, Result};

pub use features::FeatureSpace;
pub use logistic::{LogisticModel, TrainParams};
pub use model::{
    train_dc_predictor, train_et_predictor, ClosurePredictor, DcModel, EntityTypePredictor, EtModel,
    ExternalDefaults, ExternalPredictor, FeaturizedDc, FeaturizedEt, LabeledSample, PredictorBackend,
    PredictorBundle, PredictorConfig, HINT_MODEL_FORMAT, HINT_MODEL_VERSION,
};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HintSet {
    pub entity_types: Vec<String>,
    pub dialog_closure: bool,
    pub response_size: u32,
}

impl HintSet {
    pub fn new<S: Into<String>>(entity_types: impl IntoIterator<Item = S>, dialog_closure: bool, response_size: u32) -> Self {
        Self {
            entity_types: entity_types.into_iter().map(Into::into).collect(),
            dialog_closure,
            response_size,
        }
    }

    /// Checks the set against an ontology: known, distinct types and a
    /// positive response size.
    pub fn validate(&self, ontology: &EntityOntology) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for ty in &self.entity_types {
            if !ontology.contains(ty) {
                return Err(Error::Config(format!("hint type `{ty}` is not in the ontology")));
            }
            if !seen.insert(ty) {
                return Err(Error::Config(format!("hint type `{ty}` is repeated")));
            }
        }
        if self.response_size == 0 {
            return Err(Error::Config("response size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Hints read off a sample's gold response.
pub fn derive_gold_hints(sample: &DialogSample, lexicon: &Lexicon, ontology: &EntityOntology) -> HintSet {
    let mut entity_types: Vec<String> = Vec::new();
    for mention in extract_entities(&sample.gold_response, &sample.kb, lexicon, ontology) {
        if !entity_types.contains(&mention.ty) {
            entity_types.push(mention.ty);
        }
    }
    HintSet {
        entity_types,
        dialog_closure: sample.is_final,
        response_size: word_count(&sample.gold_response).max(1) as u32,
    }
}

/// Mean gold response size in words, rounded half-up.
pub fn fit_rs_constant<'a>(train: impl IntoIterator<Item = &'a DialogSample>) -> Result<u32> {
    fit_rs_from_lengths(train.into_iter().map(|s| word_count(&s.gold_response)))
}

/// Rounded half-up mean of word counts, computed exactly in integers.
pub fn fit_rs_from_lengths(lengths: impl IntoIterator<Item = usize>) -> Result<u32> {
    let (sum, n) = lengths
        .into_iter()
        .fold((0u128, 0u128), |(sum, n), len| (sum + len as u128, n + 1));
    if n == 0 {
        return Err(Error::EmptyTrainingSet);
    }
    let rounded = (2 * sum + n) / (2 * n);
    Ok(rounded.max(1) as u32)
}

/// Where test-time hints come from.
#[derive(Clone, Copy)]
pub enum HintSource<'a> {
    Predicted(&'a PredictorBundle),
    /// Gold hints of the sample itself, for upper-bound runs.
    Oracle { lexicon: &'a Lexicon, ontology: &'a EntityOntology },
    None,
}

impl HintSource<'_> {
    pub fn hints_for(&self, sample: &DialogSample) -> Option<HintSet> {
        match self {
            HintSource::Predicted(bundle) => Some(predict_hints(sample, bundle)),
            HintSource::Oracle { lexicon, ontology } => Some(derive_gold_hints(sample, lexicon, ontology)),
            HintSource::None => None,
        }
    }
}

pub fn predict_hints(sample: &DialogSample, bundle: &PredictorBundle) -> HintSet {
    HintSet {
        entity_types: bundle.et.predict_in(&sample.history, &sample.kb, &bundle.ontology),
        dialog_closure: bundle.dc.predict(&sample.history, &sample.kb),
        response_size: bundle.rs_constant,
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::corpus::{KnowledgeBase, Split, Utterance};

    fn sample(gold: &str, is_final: bool, kb: KnowledgeBase) -> DialogSample {
        DialogSample {
            id: "d:1".into(),
            dialog_id: "d".into(),
            turn_index: 1,
            domain: "hotel".into(),
            history: vec![Utterance::user("i need a hotel")],
            gold_response: gold.into(),
            kb: Arc::new(kb),
            is_final,
            split: Split::Train,
        }
    }

    #[test]
    fn lovell_lodge_hints() {
        let ontology = EntityOntology::new(["name", "area"]).unwrap();
        let kb = KnowledgeBase::from_rows("name", vec![vec![("name", "lovell lodge"), ("area", "north")]], &ontology)
            .unwrap();
        let mut lexicon = Lexicon::new();
        lexicon.add_kb(&kb);
        let hints = derive_gold_hints(&sample("how does the lovell lodge sound?", false, kb), &lexicon, &ontology);
        // Six whitespace tokens; "sound?" is one word.
        assert_eq!(hints, HintSet::new(["name"], false, 6));
    }

    #[test]
    fn closing_turn_hints() {
        let ontology = EntityOntology::new(["name"]).unwrap();
        let hints = derive_gold_hints(
            &sample("you're welcome, goodbye", true, KnowledgeBase::empty("name")),
            &Lexicon::new(),
            &ontology,
        );
        assert_eq!(hints, HintSet::new(Vec::<String>::new(), true, 3));
    }

    #[test]
    fn rs_constant_rounding() {
        assert_eq!(fit_rs_from_lengths([10, 20, 30]).unwrap(), 20);
        assert_eq!(fit_rs_from_lengths([10, 11]).unwrap(), 11);
        assert_eq!(fit_rs_from_lengths([10, 10, 11]).unwrap(), 10);
        assert!(matches!(fit_rs_from_lengths([]), Err(Error::EmptyTrainingSet)));
    }

    #[test]
    fn validate_rejects_unknown_and_zero() {
        let ontology = EntityOntology::new(["name"]).unwrap();
        assert!(HintSet::new(["area"], false, 3).validate(&ontology).is_err());
        assert!(HintSet::new(["name"], false, 0).validate(&ontology).is_err());
        assert!(HintSet::new(["name", "name"], false, 2).validate(&ontology).is_err());
        assert!(HintSet::new(["name"], true, 2).validate(&ontology).is_ok());
    }
}
