use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{BackendKind, EmbedderKind, HintMode, RetrievalMode, RunConfig};
use super::subsample::subsample_train;
use crate::corpus::{extract_entities, load_corpus, Corpus, DatasetFormat, DatasetId, DialogSample, EntityMention, Split};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalReport};
use crate::hashing::blob_hash;
use crate::hints::{derive_gold_hints, HintSet, HintSource, LabeledSample, PredictorBundle, PredictorConfig};
use crate::llm::{
    AuditLog, Completion, GenerationRequest, Generator, HttpBackend, ReplayBackend, ResponseCache, ScriptedBackend,
    API_BASE_ENV, API_KEY_ENV,
};
use crate::prompt::{
    diff_prompts, entity_list, Exemplar, PromptBundle, PromptContext, PromptDiff, PromptProfile, INSTRUCTIONS_VERSION,
};
use crate::retrieval::{
    build_index, embed, rerank_select, top_by_retrieval, EmbedItem, EmbeddingIndex, EmbeddingProvider, HttpEmbedder,
    PrecomputedEmbeddings, ScoredCandidate, StubEmbedder,
};

pub const EMBED_BASE_ENV: &str = "TODALIGN_EMBED_BASE";
pub const EMBED_KEY_ENV: &str = "TODALIGN_EMBED_KEY";

/// Everything decided for one test sample before generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePlan {
    pub sample_id: String,
    pub hints: Option<HintSet>,
    pub gold_hints: HintSet,
    pub candidates: Vec<ScoredCandidate>,
    /// Fewer than `m` exemplars were available.
    pub short: bool,
    pub prompt: PromptBundle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub sample_id: String,
    pub prompt_hash: String,
    pub response_text: String,
    pub parsed_entities: Option<Vec<EntityMention>>,
    pub parse_fallback: bool,
    pub backend_id: String,
    pub raw_text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestSample {
    pub sample_id: String,
    pub prompt_hash: String,
    pub exemplar_ids: Vec<String>,
    pub short: bool,
}

/// What is needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_hash: String,
    pub config: RunConfig,
    pub dataset: String,
    pub instructions_version: u32,
    pub encoder_id: Option<String>,
    /// Blob hashes of input files, keyed by role and file name.
    pub inputs: BTreeMap<String, String>,
    pub train_dialogs: usize,
    pub samples: Vec<ManifestSample>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: EvalReport,
    pub manifest: RunManifest,
    pub generations: Vec<GenerationRecord>,
    pub plans: Vec<SamplePlan>,
}

/// Injectable parts of a run. Missing parts are built from the config.
#[derive(Default)]
pub struct RunComponents {
    pub predictors: Option<PredictorBundle>,
    pub embedder: Option<Box<dyn EmbeddingProvider>>,
    pub backend: Option<Box<dyn Completion>>,
}

fn dataset_of(config: &RunConfig, corpus: &Corpus) -> Result<DatasetId> {
    match (config.dataset, &corpus.dataset) {
        (Some(d), _) => Ok(d),
        (None, Some(name)) => name.parse(),
        (None, None) => Err(Error::Config("dataset is not set in the config or the corpus".into())),
    }
}

pub fn resolve_profile(config: &RunConfig, corpus: &Corpus) -> Result<PromptProfile> {
    Ok(PromptProfile::for_dataset(dataset_of(config, corpus)?))
}

/// Samples to evaluate, ordered by id.
pub fn eval_samples<'c>(config: &RunConfig, corpus: &'c Corpus) -> Result<Vec<&'c DialogSample>> {
    let mut samples: Vec<&DialogSample> = corpus.samples(config.split).iter().collect();
    if samples.is_empty() {
        return Err(Error::EmptySplit(config.split.to_string()));
    }
    samples.sort_by(|a, b| a.id.cmp(&b.id));
    if let Some(limit) = config.limit {
        samples.truncate(limit);
    }
    Ok(samples)
}

/// Gold hints for every training sample.
pub fn train_gold_hints(corpus: &Corpus) -> HashMap<String, HintSet> {
    corpus
        .samples(Split::Train)
        .iter()
        .map(|s| (s.id.clone(), derive_gold_hints(s, &corpus.lexicon, &corpus.ontology)))
        .collect()
}

pub fn train_predictors(corpus: &Corpus, config: &PredictorConfig) -> Result<PredictorBundle> {
    let gold = train_gold_hints(corpus);
    let labeled: Vec<LabeledSample<'_>> = corpus
        .samples(Split::Train)
        .iter()
        .map(|s| LabeledSample {
            sample: s,
            hints: &gold[&s.id],
        })
        .collect();
    PredictorBundle::train(&labeled, &corpus.ontology, config)
}

pub fn make_embedder(config: &RunConfig) -> Result<Box<dyn EmbeddingProvider>> {
    Ok(match config.embedder {
        EmbedderKind::Stub => Box::new(StubEmbedder::new(config.stub_dimension)),
        EmbedderKind::Precomputed => {
            let path = config
                .embedding_file
                .as_ref()
                .ok_or_else(|| Error::Config("the precomputed embedder needs embedding_file".into()))?;
            Box::new(PrecomputedEmbeddings::load(path)?)
        }
        EmbedderKind::Http => {
            let base = std::env::var(EMBED_BASE_ENV)
                .or_else(|_| std::env::var(API_BASE_ENV))
                .map_err(|_| Error::Config(format!("{EMBED_BASE_ENV} or {API_BASE_ENV} must be set")))?;
            let key = std::env::var(EMBED_KEY_ENV).or_else(|_| std::env::var(API_KEY_ENV)).ok();
            let mut embedder = HttpEmbedder::new(base, config.embedding_model.clone(), key);
            embedder.concurrency = config.concurrency;
            Box::new(embedder)
        }
    })
}

fn hint_source<'a>(config: &RunConfig, corpus: &'a Corpus, predictors: Option<&'a PredictorBundle>) -> Result<HintSource<'a>> {
    Ok(match config.hint_mode {
        HintMode::Predicted => HintSource::Predicted(
            predictors.ok_or_else(|| Error::Config("predicted hints need a hint model".into()))?,
        ),
        HintMode::Oracle => HintSource::Oracle {
            lexicon: &corpus.lexicon,
            ontology: &corpus.ontology,
        },
        HintMode::None => HintSource::None,
    })
}

/// Predicts hints, selects exemplars and renders the prompt for every
/// evaluated sample.
pub fn plan_prompts(
    config: &RunConfig,
    corpus: &Corpus,
    predictors: Option<&PredictorBundle>,
    embedder: Option<&dyn EmbeddingProvider>,
) -> Result<Vec<SamplePlan>> {
    let dataset = dataset_of(config, corpus)?;
    let profile = PromptProfile::for_dataset(dataset);
    let mut ctx = PromptContext::new(&profile, &corpus.ontology);
    ctx.visibility = config.visibility();
    ctx.kb_row_cap = config.kb_row_cap;
    let samples = eval_samples(config, corpus)?;
    let source = hint_source(config, corpus, predictors)?;
    let hints: Vec<Option<HintSet>> = samples.iter().map(|s| source.hints_for(s)).collect();

    let (candidates, fixed): (Vec<Vec<ScoredCandidate>>, Vec<Exemplar>) = match config.retrieval {
        RetrievalMode::Dense => {
            let embedder = embedder.ok_or_else(|| Error::Config("dense retrieval needs an embedder".into()))?;
            let scope = config.effective_scope(Some(dataset));
            let index = build_index(corpus.samples(Split::Train), embedder, scope)?;
            (retrieve_all(&index, embedder, &samples, config.effective_k(Some(dataset)))?, Vec::new())
        }
        RetrievalMode::Fixed => {
            if corpus.ontology != dataset.ontology() {
                return Err(Error::Config(format!(
                    "fixed exemplars need the {dataset} ontology"
                )));
            }
            let fixed: Vec<Exemplar> = profile.fixed_exemplars().into_iter().take(config.m).collect();
            (vec![Vec::new(); samples.len()], fixed)
        }
        RetrievalMode::None => (vec![Vec::new(); samples.len()], Vec::new()),
    };

    let gold_train = if config.retrieval == RetrievalMode::Dense {
        train_gold_hints(corpus)
    } else {
        HashMap::new()
    };
    let mut plans = Vec::with_capacity(samples.len());
    for ((sample, hints), candidates) in samples.iter().zip(hints).zip(candidates) {
        let (exemplars, short) = match config.retrieval {
            RetrievalMode::Dense => {
                let outcome = match (&hints, config.reranks()) {
                    (Some(h), true) => rerank_select(&candidates, h, |id| gold_train.get(id), config.hint_weights(), config.m),
                    _ => top_by_retrieval(&candidates, config.m),
                };
                let exemplars = outcome
                    .selected
                    .iter()
                    .map(|c| {
                        let s = corpus.sample(&c.sample_id).ok_or_else(|| Error::UnknownSample(c.sample_id.clone()))?;
                        Ok(Exemplar::from_sample(s, &corpus.lexicon, &corpus.ontology))
                    })
                    .collect::<Result<Vec<_>>>()?;
                (exemplars, outcome.short)
            }
            RetrievalMode::Fixed => (fixed.clone(), fixed.len() < config.m),
            RetrievalMode::None => (Vec::new(), false),
        };
        if short {
            log::warn!("{}: only {} exemplars available", sample.id, exemplars.len());
        }
        let prompt = ctx.build(&exemplars, sample, hints.as_ref())?;
        plans.push(SamplePlan {
            sample_id: sample.id.clone(),
            gold_hints: derive_gold_hints(sample, &corpus.lexicon, &corpus.ontology),
            hints,
            candidates,
            short,
            prompt,
        });
    }
    Ok(plans)
}

fn retrieve_all(
    index: &EmbeddingIndex,
    embedder: &dyn EmbeddingProvider,
    samples: &[&DialogSample],
    k: usize,
) -> Result<Vec<Vec<ScoredCandidate>>> {
    let texts: Vec<String> = samples.iter().map(|s| crate::retrieval::project(s, index.query_scope)).collect();
    let items: Vec<EmbedItem<'_>> = samples
        .iter()
        .zip(&texts)
        .map(|(s, t)| EmbedItem { key: &s.id, text: t })
        .collect();
    let queries = embed(embedder, &items)?;
    samples
        .iter()
        .zip(&queries)
        .map(|(s, q)| index.search(q, k, Some(&s.id)))
        .collect()
}

/// Scripted completions that repeat each sample's gold entities and response.
pub fn echo_gold_backend(plans: &[SamplePlan], corpus: &Corpus, profile: &PromptProfile) -> Result<ScriptedBackend> {
    let mut responses = HashMap::new();
    for plan in plans {
        let sample = corpus.sample(&plan.sample_id).ok_or_else(|| Error::UnknownSample(plan.sample_id.clone()))?;
        let entities = extract_entities(&sample.gold_response, &sample.kb, &corpus.lexicon, &corpus.ontology);
        responses.insert(
            plan.prompt.prompt_hash.clone(),
            format!(
                " {}\n{}: {}",
                entity_list(&entities, profile.entity_style),
                profile.system_role,
                sample.gold_response
            ),
        );
    }
    Ok(ScriptedBackend::new(responses))
}

fn make_backend(
    config: &RunConfig,
    corpus: &Corpus,
    plans: &[SamplePlan],
    profile: &PromptProfile,
) -> Result<Box<dyn Completion>> {
    let scripted = || -> Result<ScriptedBackend> {
        match &config.scripted_responses {
            Some(path) => ScriptedBackend::load(path),
            None => echo_gold_backend(plans, corpus, profile),
        }
    };
    Ok(match config.backend {
        BackendKind::Http => Box::new(HttpBackend::from_env()?),
        BackendKind::Replay => Box::new(ReplayBackend::default()),
        BackendKind::ReplayLenient => Box::new(ReplayBackend {
            fallback: Some(scripted()?),
        }),
        BackendKind::Scripted => Box::new(scripted()?),
        BackendKind::EchoGold => Box::new(echo_gold_backend(plans, corpus, profile)?),
    })
}

/// Generates for planned prompts and evaluates the responses.
pub fn execute(config: &RunConfig, corpus: &Corpus, plans: Vec<SamplePlan>, generator: &Generator) -> Result<(EvalReport, Vec<GenerationRecord>)> {
    let requests: Vec<GenerationRequest> = plans
        .iter()
        .map(|p| GenerationRequest {
            temperature: config.temperature,
            max_tokens: config.max_tokens,
            ..GenerationRequest::new(&p.prompt, config.model_id.clone())
        })
        .collect();
    let results = generator.generate_all(&requests);
    let mut predictions = Vec::new();
    let mut samples = Vec::new();
    let mut predicted_hints = Vec::new();
    let mut gold_hints = Vec::new();
    let mut generations = Vec::new();
    let mut excluded = Vec::new();
    for (plan, result) in plans.iter().zip(results) {
        let result = match result {
            Ok(r) => r,
            Err(e) if config.exclude_failed => {
                log::warn!("{}: generation failed: {e}", plan.sample_id);
                excluded.push(plan.sample_id.clone());
                continue;
            }
            Err(e) => return Err(e),
        };
        let sample = corpus.sample(&plan.sample_id).ok_or_else(|| Error::UnknownSample(plan.sample_id.clone()))?;
        predictions.push(result.response_text.clone());
        samples.push(sample.clone());
        if let Some(h) = &plan.hints {
            predicted_hints.push(h.clone());
            gold_hints.push(plan.gold_hints.clone());
        }
        generations.push(GenerationRecord {
            sample_id: plan.sample_id.clone(),
            prompt_hash: plan.prompt.prompt_hash.clone(),
            response_text: result.response_text,
            parsed_entities: result.parsed_entities,
            parse_fallback: result.parse_fallback,
            backend_id: result.backend_id,
            raw_text: result.raw_text,
        });
    }
    let hint_pairs = (config.hint_mode == HintMode::Predicted).then_some((&predicted_hints[..], &gold_hints[..]));
    let report = evaluate(&predictions, &samples, &corpus.lexicon, &corpus.ontology, hint_pairs, excluded)?;
    Ok((report, generations))
}

/// Runs the pipeline on an already loaded corpus.
pub fn run_with(config: &RunConfig, corpus: &Corpus, components: RunComponents) -> Result<RunOutcome> {
    let config = config.clone().resolved()?;
    let corpus = match config.subsample_n {
        Some(n) => subsample_train(corpus, n, config.seed)?,
        None => corpus.clone(),
    };
    let profile = resolve_profile(&config, &corpus)?;
    let predictors = match (config.hint_mode, components.predictors) {
        (HintMode::Predicted, Some(p)) => Some(p),
        (HintMode::Predicted, None) => Some(match &config.hint_model {
            Some(dir) => PredictorBundle::load(dir)?,
            None => train_predictors(
                &corpus,
                &PredictorConfig {
                    seed: config.seed,
                    ..PredictorConfig::default()
                },
            )?,
        }),
        _ => None,
    };
    if let Some(p) = &predictors {
        if p.ontology != corpus.ontology {
            return Err(Error::InvalidArtifact("hint model ontology differs from the corpus".into()));
        }
    }
    let embedder = match (config.retrieval, components.embedder) {
        (RetrievalMode::Dense, Some(e)) => Some(e),
        (RetrievalMode::Dense, None) => Some(make_embedder(&config)?),
        _ => None,
    };
    let plans = plan_prompts(&config, &corpus, predictors.as_ref(), embedder.as_deref())?;
    let backend = match components.backend {
        Some(b) => b,
        None => make_backend(&config, &corpus, &plans, &profile)?,
    };
    let mut generator = Generator::new(backend, profile.system_role.clone());
    generator.concurrency = config.concurrency;
    if let Some(dir) = &config.cache_dir {
        generator = generator.with_cache(ResponseCache::open(dir)?);
    }
    if let Some(dir) = &config.output_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        generator = generator.with_audit(AuditLog::append(&dir.join("audit.jsonl"))?);
    }
    let (report, generations) = execute(&config, &corpus, plans.clone(), &generator)?;
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: config.config_hash(),
        dataset: profile.dataset.to_string(),
        instructions_version: INSTRUCTIONS_VERSION,
        encoder_id: embedder.as_ref().map(|e| e.encoder_id()),
        inputs: input_hashes(&config)?,
        train_dialogs: corpus.dialogs(Split::Train).len(),
        samples: plans
            .iter()
            .map(|p| ManifestSample {
                sample_id: p.sample_id.clone(),
                prompt_hash: p.prompt.prompt_hash.clone(),
                exemplar_ids: p.prompt.exemplar_ids.clone(),
                short: p.short,
            })
            .collect(),
        config,
    };
    let outcome = RunOutcome {
        report,
        manifest,
        generations,
        plans,
    };
    if let Some(dir) = &outcome.manifest.config.output_dir {
        write_outputs(&outcome, dir)?;
    }
    Ok(outcome)
}

/// Loads the corpus named in the config and runs the pipeline.
pub fn run_pipeline(config: &RunConfig) -> Result<RunOutcome> {
    let path = config
        .corpus
        .as_ref()
        .ok_or_else(|| Error::Config("corpus path is not set".into()))?;
    let format: DatasetFormat = config.corpus_format.parse()?;
    let corpus = load_corpus(path, format)?;
    run_with(config, &corpus, RunComponents::default())
}

fn hash_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(blob_hash(bytes))
}

fn input_hashes(config: &RunConfig) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    let mut add = |role: &str, path: &Path| -> Result<()> {
        if path.is_dir() {
            let mut files: Vec<_> = fs::read_dir(path)
                .map_err(|e| Error::io(path, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file())
                .collect();
            files.sort();
            for f in files {
                let name = f.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
                out.insert(format!("{role}/{name}"), hash_file(&f)?);
            }
        } else if path.is_file() {
            out.insert(role.to_string(), hash_file(path)?);
        }
        Ok(())
    };
    if let Some(p) = &config.corpus {
        add("corpus", p)?;
    }
    if let Some(p) = &config.hint_model {
        add("hint_model", p)?;
    }
    if let Some(p) = &config.embedding_file {
        add("embeddings", p)?;
    }
    if let Some(p) = &config.scripted_responses {
        add("scripted_responses", p)?;
    }
    Ok(out)
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

/// Writes reports, manifest, generations and (optionally) prompts.
pub fn write_outputs(outcome: &RunOutcome, dir: &Path) -> Result<()> {
    outcome.report.write(dir)?;
    write_file(&dir.join("manifest.json"), &(serde_json::to_string_pretty(&outcome.manifest)? + "\n"))?;
    let mut lines = String::new();
    for g in &outcome.generations {
        lines.push_str(&serde_json::to_string(g)?);
        lines.push('\n');
    }
    write_file(&dir.join("generations.jsonl"), &lines)?;
    if outcome.manifest.config.dump_prompts {
        write_prompts(&outcome.plans, &dir.join("prompts"))?;
    }
    Ok(())
}

/// One text file per distinct prompt, named by its hash.
pub fn write_prompts(plans: &[SamplePlan], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for plan in plans {
        let path = dir.join(format!("{}.txt", plan.prompt.prompt_hash));
        let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        f.write_all(plan.prompt.full_text.as_bytes()).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Per-sample structured diffs between a base run and a variant.
pub fn ablation_diffs(base: &[SamplePlan], variant: &[SamplePlan]) -> Result<Vec<(String, PromptDiff)>> {
    if base.len() != variant.len() {
        return Err(Error::LengthMismatch {
            left: base.len(),
            right: variant.len(),
        });
    }
    base.iter()
        .zip(variant)
        .map(|(a, b)| {
            if a.sample_id != b.sample_id {
                return Err(Error::UnknownSample(b.sample_id.clone()));
            }
            Ok((a.sample_id.clone(), diff_prompts(&a.prompt, &b.prompt)))
        })
        .collect()
}
