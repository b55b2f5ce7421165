//! Exemplar selection: dense retrieval followed by hint re-ranking.
//!
//! Retrieval is an exact maximum inner-product search over unit-norm
//! embeddings of the training samples. The retrieved candidates are then
//! re-ordered by how well their gold hints agree with the hints predicted for
//! the query, and the best `m` become prompt exemplars.

mod embed;
mod rerank;
mod store;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{DialogSample, Speaker};
use crate::error::{Error, Result};

pub use embed::{embed, normalize, EmbedItem, EmbeddingProvider, HttpEmbedder, PrecomputedEmbeddings, StubEmbedder};
pub use rerank::{hint_similarity, hint_similarity_weighted, jaccard, rerank_select, top_by_retrieval, HintWeights, RerankOutcome};
pub use store::{read_embeddings, write_embeddings, EmbeddingFile, EmbeddingHeader};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryScope {
    LastUserUtterance,
    FullHistory,
}

impl QueryScope {
    pub fn as_str(self) -> &'static str {
        match self {
            QueryScope::LastUserUtterance => "last_user_utterance",
            QueryScope::FullHistory => "full_history",
        }
    }
}

impl fmt::Display for QueryScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QueryScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "last_user_utterance" | "last-user-utterance" => Ok(QueryScope::LastUserUtterance),
            "full_history" | "full-history" => Ok(QueryScope::FullHistory),
            other => Err(Error::Config(format!("unknown query scope `{other}`"))),
        }
    }
}

/// The text embedded for a sample under a query scope. Index and query sides
/// use the same projection.
pub fn project(sample: &DialogSample, scope: QueryScope) -> String {
    match scope {
        QueryScope::LastUserUtterance => sample.last_user_utterance().to_string(),
        QueryScope::FullHistory => sample
            .history
            .iter()
            .map(|u| {
                let tag = match u.speaker {
                    Speaker::User => "user: ",
                    Speaker::System => "system: ",
                };
                format!("{tag}{}", u.text)
            })
            .collect::<Vec<_>>()
            .join(" "),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub sample_id: String,
    pub retrieval_score: f64,
    /// 1-based position in the retrieval ranking.
    pub retrieval_rank: usize,
    pub hint_score: f64,
}

/// Inner product accumulated in f64, left to right.
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (&x, &y)| acc + x as f64 * y as f64)
}

/// Exact top-k by inner product over `rows`. Ties are broken by ascending id;
/// `exclude` removes one id (the query itself) from the ranking.
pub fn mips_top_k(
    ids: &[String],
    rows: &[Vec<f32>],
    query: &[f32],
    k: usize,
    exclude: Option<&str>,
) -> Result<Vec<ScoredCandidate>> {
    if k == 0 {
        return Err(Error::InvalidK);
    }
    let mut scored: Vec<(f64, &String)> = Vec::with_capacity(rows.len());
    for (id, row) in ids.iter().zip(rows) {
        if row.len() != query.len() {
            return Err(Error::DimensionMismatch {
                expected: row.len(),
                got: query.len(),
            });
        }
        if exclude == Some(id.as_str()) {
            continue;
        }
        scored.push((dot(row, query), id));
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    Ok(scored
        .into_iter()
        .take(k)
        .enumerate()
        .map(|(i, (score, id))| ScoredCandidate {
            sample_id: id.clone(),
            retrieval_score: score,
            retrieval_rank: i + 1,
            hint_score: 0.0,
        })
        .collect())
}

/// Unit-norm embeddings of the training samples.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingIndex {
    ids: Vec<String>,
    vectors: Vec<Vec<f32>>,
    dimension: usize,
    pub query_scope: QueryScope,
    pub encoder_id: String,
}

impl EmbeddingIndex {
    /// Builds an index from raw vectors, normalizing each row.
    pub fn from_vectors(
        ids: Vec<String>,
        vectors: Vec<Vec<f32>>,
        query_scope: QueryScope,
        encoder_id: impl Into<String>,
    ) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        if ids.len() != vectors.len() {
            return Err(Error::LengthMismatch {
                left: ids.len(),
                right: vectors.len(),
            });
        }
        let dimension = vectors[0].len();
        let mut normalized = Vec::with_capacity(vectors.len());
        for (index, mut v) in vectors.into_iter().enumerate() {
            if v.len() != dimension {
                return Err(Error::DimensionMismatch {
                    expected: dimension,
                    got: v.len(),
                });
            }
            normalize(&mut v).map_err(|reason| Error::Provider { index, reason })?;
            normalized.push(v);
        }
        Ok(Self {
            ids,
            vectors: normalized,
            dimension,
            query_scope,
            encoder_id: encoder_id.into(),
        })
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn vectors(&self) -> &[Vec<f32>] {
        &self.vectors
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Top `min(k, len)` candidates for a query vector, excluding `exclude`.
    pub fn search(&self, query: &[f32], k: usize, exclude: Option<&str>) -> Result<Vec<ScoredCandidate>> {
        if query.len() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                got: query.len(),
            });
        }
        mips_top_k(&self.ids, &self.vectors, query, k, exclude)
    }
}

/// Embeds the scope projection of every training sample.
pub fn build_index(train: &[DialogSample], provider: &dyn EmbeddingProvider, scope: QueryScope) -> Result<EmbeddingIndex> {
    if train.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let texts: Vec<String> = train.iter().map(|s| project(s, scope)).collect();
    let items: Vec<EmbedItem<'_>> = train
        .iter()
        .zip(&texts)
        .map(|(s, t)| EmbedItem { key: &s.id, text: t })
        .collect();
    let vectors = embed(provider, &items)?;
    EmbeddingIndex::from_vectors(
        train.iter().map(|s| s.id.clone()).collect(),
        vectors,
        scope,
        provider.encoder_id(),
    )
}

/// Embeds a sample with the index's scope and retrieves its neighbours; the
/// sample's own id is excluded.
pub fn retrieve(
    index: &EmbeddingIndex,
    provider: &dyn EmbeddingProvider,
    sample: &DialogSample,
    k: usize,
) -> Result<Vec<ScoredCandidate>> {
    if k == 0 {
        return Err(Error::InvalidK);
    }
    let text = project(sample, index.query_scope);
    let query = embed(provider, &[EmbedItem { key: &sample.id, text: &text }])?
        .pop()
        .expect("one vector per item");
    index.search(&query, k, Some(&sample.id))
}
