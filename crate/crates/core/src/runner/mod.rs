//! Run configuration, ablations, low-data subsampling and end-to-end runs.

mod config;
mod pipeline;
mod subsample;

pub use config::{
    ablate, Ablation, BackendKind, DroppedHint, EmbedderKind, HintMode, RetrievalMode, RunConfig, DEFAULT_EMBEDDING_MODEL,
    DEFAULT_MODEL,
};
pub use pipeline::{
    ablation_diffs, echo_gold_backend, eval_samples, execute, make_embedder, plan_prompts, resolve_profile, run_pipeline,
    run_with, train_gold_hints, train_predictors, write_outputs, write_prompts, GenerationRecord, ManifestSample,
    RunComponents, RunManifest, RunOutcome, SamplePlan, EMBED_BASE_ENV, EMBED_KEY_ENV,
};
pub use subsample::{sampling_order, subsample_train};
