//! The staged subcommands: each reads the previous stage's artifact and
//! writes its own.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;

use todalign::corpus::{load_corpus, write_canonical, Corpus, DatasetFormat, DatasetId, DialogSample, Split};
use todalign::eval::{evaluate, hint_metrics};
use todalign::hints::{derive_gold_hints, predict_hints, HintSet, PredictorBackend, PredictorBundle, PredictorConfig, TrainParams};
use todalign::llm::{
    Completion, GenerationRequest, Generator, HttpBackend, ReplayBackend, ResponseCache, ScriptedBackend,
    DEFAULT_CONCURRENCY, DEFAULT_MAX_TOKENS,
};
use todalign::prompt::{Exemplar, PromptContext, PromptProfile};
use todalign::retrieval::{
    build_index, embed, project, read_embeddings, rerank_select, retrieve, top_by_retrieval, write_embeddings,
    EmbedItem, EmbeddingFile, EmbeddingHeader, EmbeddingProvider, HintWeights, PrecomputedEmbeddings, QueryScope,
};
use todalign::runner::{
    make_embedder, train_gold_hints, train_predictors, DroppedHint, EmbedderKind, GenerationRecord, RunConfig,
    DEFAULT_EMBEDDING_MODEL, DEFAULT_MODEL,
};
use todalign::{Error, Result};

use crate::io::{create_dir, io_error, read_jsonl, write_jsonl, HintRecord, PredictionRecord, PromptRecord, SelectionRecord};

#[derive(Args, Debug, Clone)]
pub struct CorpusArgs {
    /// Corpus directory.
    #[arg(long)]
    pub corpus: PathBuf,
    /// `canonical`, `multiwoz`, `smd` or `bitod`.
    #[arg(long, default_value = "canonical")]
    pub format: String,
    /// Dataset profile; defaults to the corpus's own dataset name.
    #[arg(long)]
    pub dataset: Option<DatasetId>,
}

impl CorpusArgs {
    pub fn load(&self) -> Result<Corpus> {
        let format: DatasetFormat = self.format.parse()?;
        load_corpus(&self.corpus, format)
    }

    pub fn dataset(&self, corpus: &Corpus) -> Result<DatasetId> {
        match (self.dataset, &corpus.dataset) {
            (Some(d), _) => Ok(d),
            (None, Some(name)) => name.parse(),
            (None, None) => Err(Error::Config("pass --dataset; the corpus does not name one".into())),
        }
    }
}

fn split_samples(corpus: &Corpus, split: Split, limit: Option<usize>) -> Result<Vec<&DialogSample>> {
    let mut samples: Vec<&DialogSample> = corpus.samples(split).iter().collect();
    if samples.is_empty() {
        return Err(Error::EmptySplit(split.to_string()));
    }
    samples.sort_by(|a, b| a.id.cmp(&b.id));
    if let Some(n) = limit {
        samples.truncate(n);
    }
    Ok(samples)
}

fn lookup<'c>(corpus: &'c Corpus, id: &str) -> Result<&'c DialogSample> {
    corpus.sample(id).ok_or_else(|| Error::UnknownSample(id.to_string()))
}

fn read_hints(path: &Path) -> Result<HashMap<String, HintSet>> {
    Ok(read_jsonl::<HintRecord>(path)?
        .into_iter()
        .map(|r| (r.sample_id, r.hints))
        .collect())
}

// ------------------------------------------------------------------ prepare

#[derive(Args, Debug)]
pub struct PrepareArgs {
    /// Directory of the dataset release.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Release format: `multiwoz`, `smd`, `bitod` or `canonical`.
    #[arg(long)]
    pub format: String,
    /// Output directory for the canonical corpus.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn prepare(args: &PrepareArgs) -> Result<()> {
    let corpus = load_corpus(&args.dataset, args.format.parse()?)?;
    write_canonical(&corpus, &args.out)?;
    for split in [Split::Train, Split::Val, Split::Test] {
        println!(
            "{split}: {} dialogs, {} samples",
            corpus.dialogs(split).len(),
            corpus.samples(split).len()
        );
    }
    Ok(())
}

// -------------------------------------------------------------- train-hints

#[derive(Args, Debug)]
pub struct TrainHintsArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// `featurized`; `external` needs an adapter registered through the library.
    #[arg(long, default_value = "featurized")]
    pub backend: String,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub l2: Option<f64>,
}

pub fn train_hints(args: &TrainHintsArgs) -> Result<()> {
    let backend: PredictorBackend = args.backend.parse()?;
    let corpus = args.corpus.load()?;
    let defaults = TrainParams::default();
    let config = PredictorConfig {
        backend,
        seed: args.seed,
        params: TrainParams {
            epochs: args.epochs.unwrap_or(defaults.epochs),
            learning_rate: args.learning_rate.unwrap_or(defaults.learning_rate),
            l2: args.l2.unwrap_or(defaults.l2),
        },
        ..PredictorConfig::default()
    };
    let bundle = train_predictors(&corpus, &config)?;
    bundle.save(&args.out)?;
    let train = corpus.samples(Split::Train);
    let (dc, et) = hint_quality(train.iter(), &bundle, &corpus)?;
    println!(
        "trained on {} samples: rs constant {}, train dc accuracy {dc:.4}, train et micro-F1 {et:.4}",
        train.len(),
        bundle.rs_constant
    );
    Ok(())
}

fn hint_quality<'a>(samples: impl Iterator<Item = &'a DialogSample>, bundle: &PredictorBundle, corpus: &Corpus) -> Result<(f64, f64)> {
    let (predicted, gold): (Vec<HintSet>, Vec<HintSet>) = samples
        .map(|s| (predict_hints(s, bundle), derive_gold_hints(s, &corpus.lexicon, &corpus.ontology)))
        .unzip();
    hint_metrics(&predicted, &gold)
}

// ------------------------------------------------------------ predict-hints

#[derive(Args, Debug)]
pub struct PredictHintsArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Directory written by `train-hints`. Without it, gold hints are emitted.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    pub split: Split,
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn predict_hints_cmd(args: &PredictHintsArgs) -> Result<()> {
    let corpus = args.corpus.load()?;
    let samples = split_samples(&corpus, args.split, args.limit)?;
    let records: Vec<HintRecord> = match &args.model {
        Some(dir) => {
            let bundle = PredictorBundle::load(dir)?;
            if bundle.ontology != corpus.ontology {
                return Err(Error::InvalidArtifact("hint model ontology differs from the corpus".into()));
            }
            let (dc, et) = hint_quality(samples.iter().copied(), &bundle, &corpus)?;
            println!("{}: dc accuracy {dc:.4}, et micro-F1 {et:.4}", args.split);
            samples
                .iter()
                .map(|s| HintRecord {
                    sample_id: s.id.clone(),
                    hints: predict_hints(s, &bundle),
                })
                .collect()
        }
        None => samples
            .iter()
            .map(|s| HintRecord {
                sample_id: s.id.clone(),
                hints: derive_gold_hints(s, &corpus.lexicon, &corpus.ontology),
            })
            .collect(),
    };
    write_jsonl(&args.out, &records)?;
    println!("wrote {} hint records to {}", records.len(), args.out.display());
    Ok(())
}

// -------------------------------------------------------------------- embed

#[derive(Args, Debug)]
pub struct EmbedArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long, default_value = "http")]
    pub embedder: EmbedderKind,
    #[arg(long, default_value = DEFAULT_EMBEDDING_MODEL)]
    pub embedding_model: String,
    #[arg(long, default_value_t = 256)]
    pub stub_dimension: usize,
    /// Defaults to the dataset's retrieval scope.
    #[arg(long)]
    pub scope: Option<QueryScope>,
    /// Query split embedded alongside the training samples.
    #[arg(long, default_value = "test")]
    pub split: Split,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn embed_cmd(args: &EmbedArgs) -> Result<()> {
    if args.embedder == EmbedderKind::Precomputed {
        return Err(Error::Config("embed needs the stub or http embedder".into()));
    }
    let corpus = args.corpus.load()?;
    let dataset = args.corpus.dataset(&corpus).ok();
    let config = RunConfig {
        embedder: args.embedder,
        embedding_model: args.embedding_model.clone(),
        stub_dimension: args.stub_dimension,
        query_scope: args.scope,
        ..RunConfig::default()
    };
    let scope = config.effective_scope(dataset);
    let provider = make_embedder(&config)?;
    let mut samples: Vec<&DialogSample> = corpus.samples(Split::Train).iter().collect();
    if args.split != Split::Train {
        samples.extend(corpus.samples(args.split));
    }
    let texts: Vec<String> = samples.iter().map(|s| project(s, scope)).collect();
    let items: Vec<EmbedItem<'_>> = samples.iter().zip(&texts).map(|(s, t)| EmbedItem { key: &s.id, text: t }).collect();
    let vectors = embed(provider.as_ref(), &items)?;
    let dimension = vectors.first().map_or(0, Vec::len);
    let file = EmbeddingFile {
        header: EmbeddingHeader {
            encoder_id: provider.encoder_id(),
            dimension,
            scope,
            rows: vectors.len(),
        },
        ids: samples.iter().map(|s| s.id.clone()).collect(),
        vectors,
    };
    write_embeddings(&args.out, &file)?;
    println!("wrote {} vectors of dimension {dimension} to {}", file.ids.len(), args.out.display());
    Ok(())
}

// --------------------------------------------------------- select-exemplars

#[derive(Args, Debug)]
pub struct SelectArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Embedding file written by `embed`, holding training and query rows.
    #[arg(long)]
    pub index: Option<PathBuf>,
    /// Used when no index file is given.
    #[arg(long, default_value = "http")]
    pub embedder: EmbedderKind,
    #[arg(long, default_value_t = 256)]
    pub stub_dimension: usize,
    /// Query hints; without them candidates are not re-ranked.
    #[arg(long)]
    pub hints: Option<PathBuf>,
    /// Defaults to 30 for MultiWOZ and BiTOD, 2 for SMD.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = 2)]
    pub m: usize,
    /// Keep the top `m` by retrieval rank.
    #[arg(long)]
    pub no_rerank: bool,
    /// Use the dataset's fixed few-shot exemplars instead of retrieval.
    #[arg(long)]
    pub fixed: bool,
    /// Hints whose term is removed from the re-ranking score.
    #[arg(long = "drop", value_delimiter = ',')]
    pub drop: Vec<DroppedHint>,
    #[arg(long, default_value = "test")]
    pub split: Split,
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn select_exemplars(args: &SelectArgs) -> Result<()> {
    if args.k == Some(0) {
        return Err(Error::InvalidK);
    }
    if args.m == 0 {
        return Err(Error::Config("m must be positive".into()));
    }
    let corpus = args.corpus.load()?;
    let dataset = args.corpus.dataset(&corpus)?;
    let samples = split_samples(&corpus, args.split, args.limit)?;
    if args.fixed {
        let ids: Vec<String> = PromptProfile::for_dataset(dataset)
            .fixed_exemplars()
            .into_iter()
            .take(args.m)
            .map(|e| e.sample_id)
            .collect();
        let records: Vec<SelectionRecord> = samples
            .iter()
            .map(|s| SelectionRecord {
                sample_id: s.id.clone(),
                exemplar_ids: ids.clone(),
                short: ids.len() < args.m,
                candidates: Vec::new(),
            })
            .collect();
        write_jsonl(&args.out, &records)?;
        println!("wrote {} fixed selections to {}", records.len(), args.out.display());
        return Ok(());
    }

    let config = RunConfig {
        embedder: args.embedder,
        stub_dimension: args.stub_dimension,
        k: args.k,
        ..RunConfig::default()
    };
    let (provider, scope): (Box<dyn EmbeddingProvider>, QueryScope) = match &args.index {
        Some(path) => {
            let file = read_embeddings(path)?;
            let scope = file.header.scope;
            let map = file.ids.into_iter().zip(file.vectors).collect();
            (
                Box::new(PrecomputedEmbeddings::from_map(file.header.encoder_id, file.header.dimension, map)),
                scope,
            )
        }
        None => (make_embedder(&config)?, config.effective_scope(Some(dataset))),
    };
    let index = build_index(corpus.samples(Split::Train), provider.as_ref(), scope)?;
    let k = config.effective_k(Some(dataset));
    let query_hints = args.hints.as_deref().map(read_hints).transpose()?;
    let gold = train_gold_hints(&corpus);
    let drop: BTreeSet<DroppedHint> = args.drop.iter().copied().collect();
    let weights = HintWeights::with_dropped(drop.contains(&DroppedHint::Et), drop.contains(&DroppedHint::Dc));
    let mut records = Vec::with_capacity(samples.len());
    for sample in samples {
        let candidates = retrieve(&index, provider.as_ref(), sample, k)?;
        let hints = match &query_hints {
            Some(map) => Some(map.get(&sample.id).ok_or_else(|| Error::UnknownSample(sample.id.clone()))?),
            None => None,
        };
        let outcome = match hints {
            Some(h) if !args.no_rerank => rerank_select(&candidates, h, |id| gold.get(id), weights, args.m),
            _ => top_by_retrieval(&candidates, args.m),
        };
        records.push(SelectionRecord {
            sample_id: sample.id.clone(),
            exemplar_ids: outcome.selected.iter().map(|c| c.sample_id.clone()).collect(),
            short: outcome.short,
            candidates: outcome.selected,
        });
    }
    write_jsonl(&args.out, &records)?;
    println!("wrote {} selections (k={k}, m={}) to {}", records.len(), args.m, args.out.display());
    Ok(())
}

// ------------------------------------------------------------ build-prompts

#[derive(Args, Debug)]
pub struct BuildPromptsArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Output of `select-exemplars`.
    #[arg(long)]
    pub exemplars: PathBuf,
    /// Output of `predict-hints`; without it prompts carry no rules.
    #[arg(long)]
    pub hints: Option<PathBuf>,
    /// Hints whose rules are left out of every block.
    #[arg(long = "drop", value_delimiter = ',')]
    pub drop: Vec<DroppedHint>,
    #[arg(long)]
    pub kb_row_cap: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn build_prompts(args: &BuildPromptsArgs) -> Result<()> {
    let corpus = args.corpus.load()?;
    let profile = PromptProfile::for_dataset(args.corpus.dataset(&corpus)?);
    let selections: Vec<SelectionRecord> = read_jsonl(&args.exemplars)?;
    let hints = args.hints.as_deref().map(read_hints).transpose()?;
    let visibility = RunConfig {
        dropped_hints: args.drop.iter().copied().collect(),
        ..RunConfig::default()
    }
    .visibility();
    let mut ctx = PromptContext::new(&profile, &corpus.ontology);
    ctx.visibility = visibility;
    ctx.kb_row_cap = args.kb_row_cap;
    let fixed: HashMap<String, Exemplar> = profile
        .fixed_exemplars()
        .into_iter()
        .map(|e| (e.sample_id.clone(), e))
        .collect();
    create_dir(&args.out)?;
    let mut records = Vec::with_capacity(selections.len());
    for sel in &selections {
        let sample = lookup(&corpus, &sel.sample_id)?;
        let exemplars = sel
            .exemplar_ids
            .iter()
            .map(|id| match corpus.sample(id) {
                Some(s) => Ok(Exemplar::from_sample(s, &corpus.lexicon, &corpus.ontology)),
                None => fixed.get(id).cloned().ok_or_else(|| Error::UnknownSample(id.clone())),
            })
            .collect::<Result<Vec<_>>>()?;
        let h = match &hints {
            Some(map) => Some(map.get(&sel.sample_id).ok_or_else(|| Error::UnknownSample(sel.sample_id.clone()))?),
            None => None,
        };
        let bundle = ctx.build(&exemplars, sample, h)?;
        let path = args.out.join(format!("{}.txt", bundle.prompt_hash));
        fs::write(&path, &bundle.full_text).map_err(|e| io_error(&path, e))?;
        records.push(PromptRecord {
            sample_id: sel.sample_id.clone(),
            prompt_hash: bundle.prompt_hash,
            exemplar_ids: bundle.exemplar_ids,
            role: profile.system_role.clone(),
            full_text: bundle.full_text,
        });
    }
    write_jsonl(&args.out.join("prompts.jsonl"), &records)?;
    println!("wrote {} prompts to {}", records.len(), args.out.display());
    Ok(())
}

// ----------------------------------------------------------------- generate

#[derive(Args, Debug)]
pub struct GenerateArgs {
    /// `prompts.jsonl`, or the directory written by `build-prompts`.
    #[arg(long)]
    pub prompts: PathBuf,
    /// `http`, `replay` or `scripted`.
    #[arg(long, default_value = "http")]
    pub backend: String,
    /// JSON object mapping prompt hashes to completions.
    #[arg(long)]
    pub scripted_responses: Option<PathBuf>,
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    #[arg(long = "model", default_value = DEFAULT_MODEL)]
    pub model_id: String,
    #[arg(long, default_value_t = 0.0)]
    pub temperature: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_TOKENS)]
    pub max_tokens: u32,
    #[arg(long, default_value_t = DEFAULT_CONCURRENCY)]
    pub concurrency: usize,
    /// Skip samples whose generation fails instead of aborting.
    #[arg(long)]
    pub exclude_failed: bool,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn generate(args: &GenerateArgs) -> Result<()> {
    let path = if args.prompts.is_dir() {
        args.prompts.join("prompts.jsonl")
    } else {
        args.prompts.clone()
    };
    let prompts: Vec<PromptRecord> = read_jsonl(&path)?;
    let role = prompts.first().map(|p| p.role.clone()).unwrap_or_else(|| "assistant".into());
    if prompts.iter().any(|p| p.role != role) {
        return Err(Error::Config("prompts use different response roles".into()));
    }
    if args.concurrency == 0 || args.max_tokens == 0 {
        return Err(Error::Config("concurrency and max_tokens must be positive".into()));
    }
    let backend: Box<dyn Completion> = match args.backend.as_str() {
        "http" => Box::new(HttpBackend::from_env()?),
        "replay" => {
            if args.cache_dir.is_none() {
                return Err(Error::Config("the replay backend needs --cache-dir".into()));
            }
            Box::new(ReplayBackend::default())
        }
        "scripted" => {
            let path = args
                .scripted_responses
                .as_ref()
                .ok_or_else(|| Error::Config("the scripted backend needs --scripted-responses".into()))?;
            Box::new(ScriptedBackend::load(path)?)
        }
        other => return Err(Error::UnknownBackend(other.to_string())),
    };
    let mut generator = Generator::new(backend, role);
    generator.concurrency = args.concurrency;
    if let Some(dir) = &args.cache_dir {
        generator = generator.with_cache(ResponseCache::open(dir)?);
    }
    let requests: Vec<GenerationRequest> = prompts
        .iter()
        .map(|p| GenerationRequest {
            prompt_hash: p.prompt_hash.clone(),
            full_text: p.full_text.clone(),
            model_id: args.model_id.clone(),
            temperature: args.temperature,
            max_tokens: args.max_tokens,
        })
        .collect();
    let mut records = Vec::with_capacity(prompts.len());
    let mut failed = 0;
    for (prompt, result) in prompts.iter().zip(generator.generate_all(&requests)) {
        match result {
            Ok(r) => records.push(GenerationRecord {
                sample_id: prompt.sample_id.clone(),
                prompt_hash: prompt.prompt_hash.clone(),
                response_text: r.response_text,
                parsed_entities: r.parsed_entities,
                parse_fallback: r.parse_fallback,
                backend_id: r.backend_id,
                raw_text: r.raw_text,
            }),
            Err(e) if args.exclude_failed => {
                log::warn!("{}: {e}", prompt.sample_id);
                failed += 1;
            }
            Err(e) => return Err(e),
        }
    }
    write_jsonl(&args.out, &records)?;
    println!("wrote {} generations ({failed} failed) to {}", records.len(), args.out.display());
    Ok(())
}

// ----------------------------------------------------------------- evaluate

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// JSON lines with `sample_id` and `response_text` (generation records work).
    #[arg(long)]
    pub predictions: PathBuf,
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Predicted hints, to report hint accuracy against gold hints.
    #[arg(long)]
    pub hints: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn evaluate_cmd(args: &EvaluateArgs) -> Result<()> {
    let corpus = args.corpus.load()?;
    let mut predictions: Vec<PredictionRecord> = read_jsonl(&args.predictions)?;
    predictions.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    let mut seen = BTreeSet::new();
    if let Some(dup) = predictions.iter().find(|p| !seen.insert(p.sample_id.as_str())) {
        return Err(Error::MalformedRecord {
            file: args.predictions.display().to_string(),
            index: 0,
            reason: format!("duplicate sample id `{}`", dup.sample_id),
        });
    }
    let samples: Vec<DialogSample> = predictions
        .iter()
        .map(|p| lookup(&corpus, &p.sample_id).cloned())
        .collect::<Result<_>>()?;
    let texts: Vec<String> = predictions.iter().map(|p| p.response_text.clone()).collect();
    let hint_pairs = match &args.hints {
        Some(path) => {
            let map = read_hints(path)?;
            let predicted: Vec<HintSet> = samples
                .iter()
                .map(|s| map.get(&s.id).cloned().ok_or_else(|| Error::UnknownSample(s.id.clone())))
                .collect::<Result<_>>()?;
            let gold: Vec<HintSet> = samples
                .iter()
                .map(|s| derive_gold_hints(s, &corpus.lexicon, &corpus.ontology))
                .collect();
            Some((predicted, gold))
        }
        None => None,
    };
    let report = evaluate(
        &texts,
        &samples,
        &corpus.lexicon,
        &corpus.ontology,
        hint_pairs.as_ref().map(|(p, g)| (&p[..], &g[..])),
        Vec::new(),
    )?;
    report.write(&args.out)?;
    crate::print_summary(&report);
    Ok(())
}
