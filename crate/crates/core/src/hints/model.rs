//! Entity-type and dialog-closure predictors.
//!
//! The featurized backend is self-contained: one-vs-rest logistic regression
//! for entity types and a single logistic regression for closure, over the
//! features of [`FeatureSpace`]. Any other model (for instance a fine-tuned
//! sequence-to-sequence ET predictor and a transformer DC classifier) plugs in
//! through [`ExternalPredictor`].

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::features::FeatureSpace;
use super::logistic::{LogisticModel, TrainParams};
use super::HintSet;
use crate::corpus::{DialogSample, EntityOntology, KnowledgeBase, Utterance};
use crate::error::{Error, Result};

pub const HINT_MODEL_FORMAT: &str = "todalign-hint-model";
pub const HINT_MODEL_VERSION: u32 = 1;
const THRESHOLD: f64 = 0.5;

/// A training sample paired with its gold hints.
#[derive(Debug, Clone, Copy)]
pub struct LabeledSample<'a> {
    pub sample: &'a DialogSample,
    pub hints: &'a HintSet,
}

pub trait EntityTypePredictor: Send + Sync {
    fn predict(&self, history: &[Utterance], kb: &KnowledgeBase) -> Vec<String>;
}

pub trait ClosurePredictor: Send + Sync {
    /// Probability that the next response closes the dialog.
    fn probability(&self, history: &[Utterance], kb: &KnowledgeBase) -> f64;
}

/// Default training recipes documented for external predictors. They are
/// passed through to the adapter untouched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalDefaults {
    pub checkpoint: String,
    pub epochs: u32,
    pub learning_rate: f64,
    pub batch_size: u32,
    pub warmup_ratio: f64,
    pub optimizer: String,
    pub scheduler: String,
}

impl ExternalDefaults {
    pub fn entity_types() -> Self {
        Self {
            checkpoint: "google/flan-t5-large".into(),
            epochs: 8,
            learning_rate: 1e-4,
            batch_size: 32,
            warmup_ratio: 0.1,
            optimizer: "adamw".into(),
            scheduler: "linear".into(),
        }
    }

    pub fn dialog_closure() -> Self {
        Self {
            checkpoint: "microsoft/deberta-v3-base".into(),
            epochs: 5,
            learning_rate: 3e-5,
            batch_size: 16,
            warmup_ratio: 0.1,
            optimizer: "adamw".into(),
            scheduler: "linear".into(),
        }
    }
}

pub trait ExternalPredictor: Send + Sync {
    fn fit_entity_types(
        &self,
        train: &[LabeledSample<'_>],
        ontology: &EntityOntology,
        defaults: &ExternalDefaults,
        seed: u64,
    ) -> Result<Arc<dyn EntityTypePredictor>>;

    fn fit_dialog_closure(
        &self,
        train: &[LabeledSample<'_>],
        defaults: &ExternalDefaults,
        seed: u64,
    ) -> Result<Arc<dyn ClosurePredictor>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictorBackend {
    Featurized,
    External,
}

impl FromStr for PredictorBackend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "featurized" => Ok(PredictorBackend::Featurized),
            "external" => Ok(PredictorBackend::External),
            other => Err(Error::UnknownBackend(other.to_string())),
        }
    }
}

#[derive(Clone)]
pub struct PredictorConfig {
    pub backend: PredictorBackend,
    pub params: TrainParams,
    pub seed: u64,
    pub external: Option<Arc<dyn ExternalPredictor>>,
    pub et_defaults: ExternalDefaults,
    pub dc_defaults: ExternalDefaults,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            backend: PredictorBackend::Featurized,
            params: TrainParams::default(),
            seed: 0,
            external: None,
            et_defaults: ExternalDefaults::entity_types(),
            dc_defaults: ExternalDefaults::dialog_closure(),
        }
    }
}

impl fmt::Debug for PredictorConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PredictorConfig")
            .field("backend", &self.backend)
            .field("params", &self.params)
            .field("seed", &self.seed)
            .field("external", &self.external.is_some())
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeClassifier {
    #[serde(rename = "type")]
    pub ty: String,
    #[serde(flatten)]
    pub model: LogisticModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturizedEt {
    pub features: FeatureSpace,
    pub threshold: f64,
    pub classifiers: Vec<TypeClassifier>,
}

impl FeaturizedEt {
    pub fn fit(train: &[LabeledSample<'_>], ontology: &EntityOntology, params: &TrainParams) -> Self {
        let features = FeatureSpace::fit(train.iter().map(|l| (l.sample.history.as_slice(), &*l.sample.kb)), false);
        let rows: Vec<_> = train
            .iter()
            .map(|l| features.transform(&l.sample.history, &l.sample.kb))
            .collect();
        let classifiers = ontology
            .types()
            .iter()
            .map(|ty| {
                let labels: Vec<bool> = train.iter().map(|l| l.hints.entity_types.contains(ty)).collect();
                TypeClassifier {
                    ty: ty.clone(),
                    model: LogisticModel::fit(&rows, &labels, features.dim(), params),
                }
            })
            .collect();
        Self {
            features,
            threshold: THRESHOLD,
            classifiers,
        }
    }

    /// Per-type probabilities in ontology order.
    pub fn probabilities(&self, history: &[Utterance], kb: &KnowledgeBase) -> Vec<(String, f64)> {
        let row = self.features.transform(history, kb);
        self.classifiers
            .iter()
            .map(|c| (c.ty.clone(), c.model.probability(&row)))
            .collect()
    }
}

impl EntityTypePredictor for FeaturizedEt {
    /// Types with probability above the threshold, most probable first.
    fn predict(&self, history: &[Utterance], kb: &KnowledgeBase) -> Vec<String> {
        let mut picked: Vec<(usize, String, f64)> = self
            .probabilities(history, kb)
            .into_iter()
            .enumerate()
            .filter(|(_, (_, p))| *p > self.threshold)
            .map(|(rank, (ty, p))| (rank, ty, p))
            .collect();
        picked.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));
        picked.into_iter().map(|(_, ty, _)| ty).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturizedDc {
    pub features: FeatureSpace,
    pub threshold: f64,
    #[serde(flatten)]
    pub model: LogisticModel,
}

impl FeaturizedDc {
    pub fn fit(train: &[LabeledSample<'_>], params: &TrainParams) -> Self {
        let features = FeatureSpace::fit(train.iter().map(|l| (l.sample.history.as_slice(), &*l.sample.kb)), true);
        let rows: Vec<_> = train
            .iter()
            .map(|l| features.transform(&l.sample.history, &l.sample.kb))
            .collect();
        let labels: Vec<bool> = train.iter().map(|l| l.hints.dialog_closure).collect();
        let model = LogisticModel::fit(&rows, &labels, features.dim(), params);
        Self {
            features,
            threshold: THRESHOLD,
            model,
        }
    }
}

impl ClosurePredictor for FeaturizedDc {
    fn probability(&self, history: &[Utterance], kb: &KnowledgeBase) -> f64 {
        self.model.probability(&self.features.transform(history, kb))
    }
}

/// A trained entity-type model.
#[derive(Clone)]
pub enum EtModel {
    Featurized(FeaturizedEt),
    External(Arc<dyn EntityTypePredictor>),
}

impl fmt::Debug for EtModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EtModel::Featurized(m) => f.debug_tuple("Featurized").field(&m.classifiers.len()).finish(),
            EtModel::External(_) => f.write_str("External"),
        }
    }
}

impl EtModel {
    /// Predicted types, restricted to the ontology and deduplicated.
    pub fn predict_in(&self, history: &[Utterance], kb: &KnowledgeBase, ontology: &EntityOntology) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for ty in self.predict(history, kb) {
            if ontology.contains(&ty) && !out.contains(&ty) {
                out.push(ty);
            }
        }
        out
    }

    pub fn predict(&self, history: &[Utterance], kb: &KnowledgeBase) -> Vec<String> {
        let raw = match self {
            EtModel::Featurized(m) => m.predict(history, kb),
            EtModel::External(m) => m.predict(history, kb),
        };
        let mut out: Vec<String> = Vec::with_capacity(raw.len());
        for ty in raw {
            if !out.contains(&ty) {
                out.push(ty);
            }
        }
        out
    }
}

/// A trained dialog-closure model; predicts closure when p > 0.5.
#[derive(Clone)]
pub enum DcModel {
    Featurized(FeaturizedDc),
    External(Arc<dyn ClosurePredictor>),
}

impl fmt::Debug for DcModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DcModel::Featurized(_) => f.write_str("Featurized"),
            DcModel::External(_) => f.write_str("External"),
        }
    }
}

impl DcModel {
    pub fn probability(&self, history: &[Utterance], kb: &KnowledgeBase) -> f64 {
        match self {
            DcModel::Featurized(m) => m.probability(history, kb),
            DcModel::External(m) => m.probability(history, kb),
        }
    }

    pub fn predict(&self, history: &[Utterance], kb: &KnowledgeBase) -> bool {
        self.probability(history, kb) > THRESHOLD
    }
}

pub fn train_et_predictor(
    train: &[LabeledSample<'_>],
    ontology: &EntityOntology,
    config: &PredictorConfig,
) -> Result<EtModel> {
    if train.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    match config.backend {
        PredictorBackend::Featurized => Ok(EtModel::Featurized(FeaturizedEt::fit(train, ontology, &config.params))),
        PredictorBackend::External => {
            let adapter = config.external.as_ref().ok_or(Error::NoExternalAdapter)?;
            adapter
                .fit_entity_types(train, ontology, &config.et_defaults, config.seed)
                .map(EtModel::External)
        }
    }
}

pub fn train_dc_predictor(train: &[LabeledSample<'_>], config: &PredictorConfig) -> Result<DcModel> {
    if train.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    match config.backend {
        PredictorBackend::Featurized => Ok(DcModel::Featurized(FeaturizedDc::fit(train, &config.params))),
        PredictorBackend::External => {
            let adapter = config.external.as_ref().ok_or(Error::NoExternalAdapter)?;
            adapter
                .fit_dialog_closure(train, &config.dc_defaults, config.seed)
                .map(DcModel::External)
        }
    }
}

/// The three hint predictors used at test time.
#[derive(Debug, Clone)]
pub struct PredictorBundle {
    pub ontology: EntityOntology,
    pub et: EtModel,
    pub dc: DcModel,
    pub rs_constant: u32,
}

#[derive(Serialize, Deserialize)]
struct BundleArtifact {
    format: String,
    version: u32,
    ontology: Vec<String>,
    ontology_hash: String,
    rs_constant: u32,
    entity_types: FeaturizedEt,
    dialog_closure: FeaturizedDc,
}

const ARTIFACT_FILE: &str = "hint_model.json";

impl PredictorBundle {
    pub fn train(train: &[LabeledSample<'_>], ontology: &EntityOntology, config: &PredictorConfig) -> Result<Self> {
        let et = train_et_predictor(train, ontology, config)?;
        let dc = train_dc_predictor(train, config)?;
        let rs_constant = super::fit_rs_constant(train.iter().map(|l| l.sample))?;
        Ok(Self {
            ontology: ontology.clone(),
            et,
            dc,
            rs_constant,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let (EtModel::Featurized(et), DcModel::Featurized(dc)) = (&self.et, &self.dc) else {
            return Err(Error::InvalidArtifact("external predictors cannot be serialized".into()));
        };
        let artifact = BundleArtifact {
            format: HINT_MODEL_FORMAT.into(),
            version: HINT_MODEL_VERSION,
            ontology: self.ontology.types().to_vec(),
            ontology_hash: self.ontology.fingerprint(),
            rs_constant: self.rs_constant,
            entity_types: et.clone(),
            dialog_closure: dc.clone(),
        };
        Ok(serde_json::to_string_pretty(&artifact)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut artifact: BundleArtifact = serde_json::from_str(text)?;
        if artifact.format != HINT_MODEL_FORMAT || artifact.version != HINT_MODEL_VERSION {
            return Err(Error::InvalidArtifact(format!(
                "expected {HINT_MODEL_FORMAT} v{HINT_MODEL_VERSION}, found {} v{}",
                artifact.format, artifact.version
            )));
        }
        let ontology = EntityOntology::new(artifact.ontology)?;
        if ontology.fingerprint() != artifact.ontology_hash {
            return Err(Error::InvalidArtifact("ontology hash does not match".into()));
        }
        if artifact.rs_constant == 0 {
            return Err(Error::InvalidArtifact("rs constant must be positive".into()));
        }
        artifact.entity_types.features.rebuild_lookup();
        artifact.dialog_closure.features.rebuild_lookup();
        Ok(Self {
            ontology,
            et: EtModel::Featurized(artifact.entity_types),
            dc: DcModel::Featurized(artifact.dialog_closure),
            rs_constant: artifact.rs_constant,
        })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(ARTIFACT_FILE);
        fs::write(&path, self.to_json()?).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(ARTIFACT_FILE);
        if !path.is_file() {
            return Err(Error::MissingArtifact(path));
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Self::from_json(&text)
    }
}
