use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{DatasetId, Split};
use crate::error::{Error, Result};
use crate::hashing::sha256_hex;
use crate::llm::{DEFAULT_CONCURRENCY, DEFAULT_MAX_TOKENS};
use crate::prompt::HintVisibility;
use crate::retrieval::{HintWeights, QueryScope};

macro_rules! string_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        impl $name {
            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text,)+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s.replace('-', "_").as_str() {
                    $($text => Ok($name::$variant),)+
                    other => Err(Error::Config(format!(
                        concat!("unknown ", stringify!($name), " `{}`"),
                        other
                    ))),
                }
            }
        }
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HintMode {
    Predicted,
    Oracle,
    None,
}
string_enum!(HintMode { Predicted => "predicted", Oracle => "oracle", None => "none" });

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DroppedHint {
    Et,
    Dc,
    Rs,
}
string_enum!(DroppedHint { Et => "et", Dc => "dc", Rs => "rs" });

/// How exemplars are chosen: dense retrieval, the dataset's fixed pair, or
/// none at all (zero-shot).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrievalMode {
    Dense,
    Fixed,
    None,
}
string_enum!(RetrievalMode { Dense => "dense", Fixed => "fixed", None => "none" });

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedderKind {
    Stub,
    Precomputed,
    Http,
}
string_enum!(EmbedderKind { Stub => "stub", Precomputed => "precomputed", Http => "http" });

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Http,
    /// Cache only; a miss is an error.
    Replay,
    /// Cache first, then scripted responses (or gold echoes without a script).
    ReplayLenient,
    Scripted,
    /// Answers every prompt with the sample's gold entities and response.
    EchoGold,
}
string_enum!(BackendKind {
    Http => "http",
    Replay => "replay",
    ReplayLenient => "replay_lenient",
    Scripted => "scripted",
    EchoGold => "echo_gold",
});

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    NoHints,
    NoRetrieval,
    NoRerank,
    DropEt,
    DropDc,
    DropRs,
}
string_enum!(Ablation {
    NoHints => "no_hints",
    NoRetrieval => "no_retrieval",
    NoRerank => "no_rerank",
    DropEt => "drop_et",
    DropDc => "drop_dc",
    DropRs => "drop_rs",
});

impl Ablation {
    pub const ALL: [Ablation; 6] = [
        Ablation::NoHints,
        Ablation::NoRetrieval,
        Ablation::NoRerank,
        Ablation::DropEt,
        Ablation::DropDc,
        Ablation::DropRs,
    ];

    fn dropped(self) -> Option<DroppedHint> {
        match self {
            Ablation::DropEt => Some(DroppedHint::Et),
            Ablation::DropDc => Some(DroppedHint::Dc),
            Ablation::DropRs => Some(DroppedHint::Rs),
            _ => None,
        }
    }
}

pub const DEFAULT_MODEL: &str = "gpt-4-0613";
pub const DEFAULT_EMBEDDING_MODEL: &str = "BAAI/bge-large-en-v1.5";

/// Everything that determines a run. Loaded from JSON; command-line flags
/// override individual fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Selects instructions, role tags and default retrieval settings.
    /// Falls back to the corpus's own dataset name.
    pub dataset: Option<DatasetId>,
    pub corpus: Option<PathBuf>,
    /// `canonical` or a release format name.
    pub corpus_format: String,
    pub split: Split,
    /// Evaluate only the first `limit` samples (by id).
    pub limit: Option<usize>,
    pub hint_mode: HintMode,
    /// Directory holding a trained hint model; trained in-run when absent.
    pub hint_model: Option<PathBuf>,
    pub dropped_hints: BTreeSet<DroppedHint>,
    pub retrieval: RetrievalMode,
    pub rerank: bool,
    pub query_scope: Option<QueryScope>,
    pub k: Option<usize>,
    pub m: usize,
    pub embedder: EmbedderKind,
    pub embedding_model: String,
    pub embedding_file: Option<PathBuf>,
    pub stub_dimension: usize,
    pub backend: BackendKind,
    pub scripted_responses: Option<PathBuf>,
    pub model_id: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub concurrency: usize,
    pub kb_row_cap: Option<usize>,
    pub seed: u64,
    pub subsample_n: Option<usize>,
    pub ablations: Vec<Ablation>,
    /// Leave samples whose generation failed out of the metrics instead of
    /// failing the run.
    pub exclude_failed: bool,
    pub output_dir: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    pub dump_prompts: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            corpus: None,
            corpus_format: "canonical".into(),
            split: Split::Test,
            limit: None,
            hint_mode: HintMode::Predicted,
            hint_model: None,
            dropped_hints: BTreeSet::new(),
            retrieval: RetrievalMode::Dense,
            rerank: true,
            query_scope: None,
            k: None,
            m: 2,
            embedder: EmbedderKind::Http,
            embedding_model: DEFAULT_EMBEDDING_MODEL.into(),
            embedding_file: None,
            stub_dimension: 256,
            backend: BackendKind::Http,
            scripted_responses: None,
            model_id: DEFAULT_MODEL.into(),
            temperature: 0.0,
            max_tokens: DEFAULT_MAX_TOKENS,
            concurrency: DEFAULT_CONCURRENCY,
            kb_row_cap: None,
            seed: 0,
            subsample_n: None,
            ablations: Vec::new(),
            exclude_failed: false,
            output_dir: None,
            cache_dir: None,
            dump_prompts: false,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingArtifact(path.to_path_buf()),
            _ => Error::io(path, e),
        })?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn config_hash(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("config serializes"))
    }

    pub fn effective_k(&self, dataset: Option<DatasetId>) -> usize {
        self.k.unwrap_or(match dataset {
            Some(DatasetId::Smd) => 2,
            _ => 30,
        })
    }

    pub fn effective_scope(&self, dataset: Option<DatasetId>) -> QueryScope {
        self.query_scope.unwrap_or(match dataset {
            Some(DatasetId::Smd) => QueryScope::FullHistory,
            _ => QueryScope::LastUserUtterance,
        })
    }

    pub fn visibility(&self) -> HintVisibility {
        if self.hint_mode == HintMode::None {
            return HintVisibility::NONE;
        }
        HintVisibility {
            entity_types: !self.dropped_hints.contains(&DroppedHint::Et),
            dialog_closure: !self.dropped_hints.contains(&DroppedHint::Dc),
            response_size: !self.dropped_hints.contains(&DroppedHint::Rs),
        }
    }

    pub fn hint_weights(&self) -> HintWeights {
        HintWeights::with_dropped(
            self.dropped_hints.contains(&DroppedHint::Et),
            self.dropped_hints.contains(&DroppedHint::Dc),
        )
    }

    /// Whether re-ranking actually happens.
    pub fn reranks(&self) -> bool {
        self.rerank && self.hint_mode != HintMode::None && self.retrieval == RetrievalMode::Dense
    }

    /// Checks consistency and applies forced settings: hint mode `none`
    /// disables re-ranking.
    pub fn resolved(mut self) -> Result<Self> {
        if self.k == Some(0) {
            return Err(Error::InvalidK);
        }
        if self.m == 0 && self.retrieval != RetrievalMode::None {
            return Err(Error::Config("m must be positive".into()));
        }
        if self.concurrency == 0 {
            return Err(Error::Config("concurrency must be positive".into()));
        }
        if self.max_tokens == 0 {
            return Err(Error::Config("max_tokens must be positive".into()));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(Error::Config("temperature must be a non-negative number".into()));
        }
        if self.stub_dimension == 0 {
            return Err(Error::Config("stub_dimension must be positive".into()));
        }
        if self.limit == Some(0) {
            return Err(Error::Config("limit must be positive".into()));
        }
        if self.hint_mode == HintMode::None && !self.dropped_hints.is_empty() {
            return Err(Error::ConflictingVariants(
                "dropping individual hints requires hints".into(),
            ));
        }
        check_ablations(&self.ablations)?;
        if self.backend == BackendKind::Scripted && self.scripted_responses.is_none() {
            return Err(Error::Config("the scripted backend needs scripted_responses".into()));
        }
        if matches!(self.backend, BackendKind::Replay | BackendKind::ReplayLenient) && self.cache_dir.is_none() {
            return Err(Error::Config("replay backends need cache_dir".into()));
        }
        if self.retrieval == RetrievalMode::Dense
            && self.embedder == EmbedderKind::Precomputed
            && self.embedding_file.is_none()
        {
            return Err(Error::Config("the precomputed embedder needs embedding_file".into()));
        }
        if self.hint_mode == HintMode::None {
            self.rerank = false;
        }
        if self.temperature != 0.0 {
            log::warn!("temperature overridden to {}", self.temperature);
        }
        Ok(self)
    }
}

fn check_ablations(ablations: &[Ablation]) -> Result<()> {
    let has = |a: Ablation| ablations.contains(&a);
    if has(Ablation::NoHints) {
        if let Some(d) = ablations.iter().find(|a| a.dropped().is_some()) {
            return Err(Error::ConflictingVariants(format!("no_hints with {d}")));
        }
    }
    if has(Ablation::NoRetrieval) && has(Ablation::NoRerank) {
        return Err(Error::ConflictingVariants("no_retrieval with no_rerank".into()));
    }
    Ok(())
}

/// Derives the configuration of one ablation variant from a base run.
pub fn ablate(base: &RunConfig, variant: Ablation) -> Result<RunConfig> {
    let mut config = base.clone();
    if !config.ablations.contains(&variant) {
        config.ablations.push(variant);
    }
    check_ablations(&config.ablations)?;
    match variant {
        Ablation::NoHints => {
            if !config.dropped_hints.is_empty() {
                return Err(Error::ConflictingVariants("no_hints with dropped hints".into()));
            }
            config.hint_mode = HintMode::None;
            config.rerank = false;
        }
        Ablation::NoRetrieval => config.retrieval = RetrievalMode::Fixed,
        Ablation::NoRerank => {
            if config.retrieval != RetrievalMode::Dense {
                return Err(Error::ConflictingVariants("no_rerank without retrieval".into()));
            }
            config.rerank = false;
        }
        Ablation::DropEt | Ablation::DropDc | Ablation::DropRs => {
            if config.hint_mode == HintMode::None {
                return Err(Error::ConflictingVariants(format!("{variant} without hints")));
            }
            config.dropped_hints.insert(variant.dropped().expect("drop variant"));
        }
    }
    config.resolved()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_dataset() {
        let c = RunConfig::default();
        assert_eq!(c.effective_k(Some(DatasetId::Smd)), 2);
        assert_eq!(c.effective_scope(Some(DatasetId::Smd)), QueryScope::FullHistory);
        assert_eq!(c.effective_k(Some(DatasetId::BiTod)), 30);
        assert_eq!(c.effective_scope(Some(DatasetId::MultiWoz)), QueryScope::LastUserUtterance);
        assert_eq!(c.m, 2);
        assert_eq!(c.temperature, 0.0);
    }

    #[test]
    fn no_hints_disables_rerank() {
        let c = ablate(&RunConfig::default(), Ablation::NoHints).unwrap();
        assert_eq!(c.hint_mode, HintMode::None);
        assert!(!c.reranks());
        assert_eq!(c.visibility(), HintVisibility::NONE);
    }

    #[test]
    fn conflicts() {
        let base = RunConfig::default();
        let dropped = ablate(&base, Ablation::DropEt).unwrap();
        assert!(matches!(ablate(&dropped, Ablation::NoHints), Err(Error::ConflictingVariants(_))));
        let fixed = ablate(&base, Ablation::NoRetrieval).unwrap();
        assert!(matches!(ablate(&fixed, Ablation::NoRerank), Err(Error::ConflictingVariants(_))));
        let none = ablate(&base, Ablation::NoHints).unwrap();
        assert!(matches!(ablate(&none, Ablation::DropDc), Err(Error::ConflictingVariants(_))));
        assert!(ablate(&none, Ablation::NoRetrieval).is_ok());
    }

    #[test]
    fn drop_dc_weights() {
        let c = ablate(&RunConfig::default(), Ablation::DropDc).unwrap();
        assert_eq!(c.hint_weights(), HintWeights { closure: 0.0, entity_types: 1.0 });
        assert!(!c.visibility().dialog_closure);
    }

    #[test]
    fn json_round_trip_and_unknown_fields() {
        let c = RunConfig { k: Some(5), ..RunConfig::default() };
        let back: RunConfig = serde_json::from_str(&c.to_json()).unwrap();
        assert_eq!(back, c);
        assert!(serde_json::from_str::<RunConfig>("{\"kk\": 1}").is_err());
        let partial: RunConfig = serde_json::from_str("{\"hint_mode\": \"oracle\"}").unwrap();
        assert_eq!(partial.hint_mode, HintMode::Oracle);
        assert_eq!("echo-gold".parse::<BackendKind>().unwrap(), BackendKind::EchoGold);
        assert_eq!(RunConfig { k: Some(0), ..RunConfig::default() }.resolved().unwrap_err().kind(), crate::ErrorKind::Config);
    }
}
