//! Config-driven subcommands: `run`, `ablate` and `subsample`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;

use todalign::corpus::{load_corpus, Corpus, DatasetId, Split};
use todalign::hints::PredictorConfig;
use todalign::retrieval::QueryScope;
use todalign::runner::{
    ablate, ablation_diffs, make_embedder, run_with, train_predictors, Ablation, BackendKind, DroppedHint,
    EmbedderKind, HintMode, RetrievalMode, RunComponents, RunConfig, RunOutcome,
};
use todalign::{Error, Result};

use crate::io::{create_dir, io_error, write_jsonl};

/// A JSON config file plus flags that override its fields.
#[derive(Args, Debug, Clone, Default)]
pub struct ConfigArgs {
    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// multiwoz, smd or bitod; defaults to the corpus's dataset name.
    #[arg(long)]
    pub dataset: Option<DatasetId>,
    /// Corpus directory.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// `canonical` or a release format name.
    #[arg(long)]
    pub corpus_format: Option<String>,
    /// Split to evaluate: train, val or test.
    #[arg(long)]
    pub split: Option<Split>,
    /// Evaluate only the first n samples by id.
    #[arg(long)]
    pub limit: Option<usize>,
    /// predicted, oracle or none.
    #[arg(long)]
    pub hint_mode: Option<HintMode>,
    /// Trained hint model directory; trained in-run when absent.
    #[arg(long)]
    pub hint_model: Option<PathBuf>,
    /// Hints to drop, comma separated: et, dc, rs.
    #[arg(long = "drop", value_delimiter = ',')]
    pub drop: Vec<DroppedHint>,
    /// dense, fixed or none.
    #[arg(long)]
    pub retrieval: Option<RetrievalMode>,
    /// Keep the top-m retrieved exemplars without hint re-ranking.
    #[arg(long)]
    pub no_rerank: bool,
    /// Text embedded per sample: full_history or last_user_utterance.
    #[arg(long)]
    pub scope: Option<QueryScope>,
    /// Retrieved candidates per query.
    #[arg(long)]
    pub k: Option<usize>,
    /// Exemplars per prompt.
    #[arg(long)]
    pub m: Option<usize>,
    /// stub, precomputed or http.
    #[arg(long)]
    pub embedder: Option<EmbedderKind>,
    /// Model name sent to the embedding endpoint.
    #[arg(long)]
    pub embedding_model: Option<String>,
    /// Precomputed embedding file for the precomputed embedder.
    #[arg(long)]
    pub embedding_file: Option<PathBuf>,
    /// Vector size of the stub embedder.
    #[arg(long)]
    pub stub_dimension: Option<usize>,
    /// http, replay, replay_lenient, scripted or echo_gold.
    #[arg(long)]
    pub backend: Option<BackendKind>,
    /// JSON map from prompt hash to completion.
    #[arg(long)]
    pub scripted_responses: Option<PathBuf>,
    /// Chat model id.
    #[arg(long = "model")]
    pub model_id: Option<String>,
    /// Sampling temperature.
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Completion token limit.
    #[arg(long)]
    pub max_tokens: Option<u32>,
    /// Parallel requests.
    #[arg(long)]
    pub concurrency: Option<usize>,
    /// Maximum knowledge-base rows rendered per block.
    #[arg(long)]
    pub kb_row_cap: Option<usize>,
    /// Seed for hint training and subsampling.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Train on the first n dialogs of a seeded shuffle.
    #[arg(long)]
    pub subsample_n: Option<usize>,
    /// Score without samples whose generation failed.
    #[arg(long)]
    pub exclude_failed: bool,
    /// Response cache directory.
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    /// Write every prompt under <out>/prompts.
    #[arg(long)]
    pub dump_prompts: bool,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn set<T>(slot: &mut T, value: &Option<T>)
where
    T: Clone,
{
    if let Some(v) = value {
        *slot = v.clone();
    }
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if self.dataset.is_some() {
            c.dataset = self.dataset;
        }
        if self.corpus.is_some() {
            c.corpus = self.corpus.clone();
        }
        set(&mut c.corpus_format, &self.corpus_format);
        set(&mut c.split, &self.split);
        if self.limit.is_some() {
            c.limit = self.limit;
        }
        set(&mut c.hint_mode, &self.hint_mode);
        if self.hint_model.is_some() {
            c.hint_model = self.hint_model.clone();
        }
        c.dropped_hints.extend(self.drop.iter().copied());
        set(&mut c.retrieval, &self.retrieval);
        if self.no_rerank {
            c.rerank = false;
        }
        if self.scope.is_some() {
            c.query_scope = self.scope;
        }
        if self.k.is_some() {
            c.k = self.k;
        }
        set(&mut c.m, &self.m);
        set(&mut c.embedder, &self.embedder);
        set(&mut c.embedding_model, &self.embedding_model);
        if self.embedding_file.is_some() {
            c.embedding_file = self.embedding_file.clone();
        }
        set(&mut c.stub_dimension, &self.stub_dimension);
        set(&mut c.backend, &self.backend);
        if self.scripted_responses.is_some() {
            c.scripted_responses = self.scripted_responses.clone();
        }
        set(&mut c.model_id, &self.model_id);
        set(&mut c.temperature, &self.temperature);
        set(&mut c.max_tokens, &self.max_tokens);
        set(&mut c.concurrency, &self.concurrency);
        if self.kb_row_cap.is_some() {
            c.kb_row_cap = self.kb_row_cap;
        }
        set(&mut c.seed, &self.seed);
        if self.subsample_n.is_some() {
            c.subsample_n = self.subsample_n;
        }
        c.exclude_failed |= self.exclude_failed;
        if self.cache_dir.is_some() {
            c.cache_dir = self.cache_dir.clone();
        }
        c.dump_prompts |= self.dump_prompts;
        if self.out.is_some() {
            c.output_dir = self.out.clone();
        }
        c.resolved()
    }
}

fn load(config: &RunConfig) -> Result<Corpus> {
    let path = config
        .corpus
        .as_ref()
        .ok_or_else(|| Error::Config("corpus path is not set (--corpus or the config file)".into()))?;
    load_corpus(path, config.corpus_format.parse()?)
}

fn output_dir(config: &RunConfig) -> Result<PathBuf> {
    config
        .output_dir
        .clone()
        .ok_or_else(|| Error::Config("output directory is not set (--out or output_dir)".into()))
}

fn write_text(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).map_err(|e| io_error(path, e))
}

/// Predictors shared across the runs of one invocation, when they would
/// otherwise be retrained each time.
fn shared_components(config: &RunConfig, corpus: &Corpus) -> Result<RunComponents> {
    let mut components = RunComponents::default();
    if config.hint_mode == HintMode::Predicted && config.hint_model.is_none() && config.subsample_n.is_none() {
        components.predictors = Some(train_predictors(
            corpus,
            &PredictorConfig {
                seed: config.seed,
                ..PredictorConfig::default()
            },
        )?);
    }
    if config.retrieval == RetrievalMode::Dense {
        components.embedder = Some(make_embedder(config)?);
    }
    Ok(components)
}

pub fn run(args: &ConfigArgs) -> Result<()> {
    let config = args.resolve()?;
    let corpus = load(&config)?;
    let outcome = run_with(&config, &corpus, RunComponents::default())?;
    crate::print_summary(&outcome.report);
    if let Some(dir) = &config.output_dir {
        println!("outputs written to {}", dir.display());
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Variants to run, comma separated; all by default.
    #[arg(long, value_delimiter = ',')]
    pub variants: Vec<Ablation>,
}

fn run_into(config: &RunConfig, corpus: &Corpus, components: RunComponents, dir: PathBuf) -> Result<RunOutcome> {
    let config = RunConfig {
        output_dir: Some(dir),
        ..config.clone()
    };
    run_with(&config, corpus, components)
}

pub fn ablate_cmd(args: &AblateArgs) -> Result<()> {
    let base = args.config.resolve()?;
    let out = output_dir(&base)?;
    let variants = if args.variants.is_empty() {
        Ablation::ALL.to_vec()
    } else {
        args.variants.clone()
    };
    let configs: Vec<(Ablation, RunConfig)> = variants
        .iter()
        .map(|v| ablate(&base, *v).map(|c| (*v, c)))
        .collect::<Result<_>>()?;
    let corpus = load(&base)?;
    let shared = shared_components(&base, &corpus)?;
    let predictors = shared.predictors;
    let with_predictors = |config: &RunConfig| -> Result<RunComponents> {
        Ok(RunComponents {
            predictors: predictors.clone(),
            embedder: (config.retrieval == RetrievalMode::Dense).then(|| make_embedder(config)).transpose()?,
            backend: None,
        })
    };
    let base_outcome = run_into(&base, &corpus, with_predictors(&base)?, out.join("base"))?;
    let mut csv = String::from("variant,entity_f1,bleu,avg_len,avg_ent,changed_samples,reselected_samples\n");
    let row = |csv: &mut String, name: &str, o: &RunOutcome, changed: usize, reselected: usize| {
        let r = &o.report;
        let _ = writeln!(
            csv,
            "{name},{:.6},{:.6},{:.4},{:.4},{changed},{reselected}",
            r.entity_f1, r.bleu, r.avg_len, r.avg_ent
        );
    };
    row(&mut csv, "base", &base_outcome, 0, 0);
    println!("{:<14} {:>9} {:>9}", "variant", "entity_f1", "bleu");
    println!("{:<14} {:>9.4} {:>9.4}", "base", base_outcome.report.entity_f1, base_outcome.report.bleu);
    for (variant, config) in &configs {
        let dir = out.join(variant.as_str());
        let outcome = run_into(config, &corpus, with_predictors(config)?, dir.clone())?;
        let diffs = ablation_diffs(&base_outcome.plans, &outcome.plans)?;
        let changed = diffs.iter().filter(|(_, d)| !d.is_empty()).count();
        let reselected = diffs.iter().filter(|(_, d)| d.exemplars_reselected).count();
        let records: Vec<serde_json::Value> = diffs
            .iter()
            .map(|(id, d)| serde_json::json!({ "sample_id": id, "diff": d }))
            .collect();
        write_jsonl(&dir.join("prompt_diffs.jsonl"), &records)?;
        row(&mut csv, variant.as_str(), &outcome, changed, reselected);
        println!(
            "{:<14} {:>9.4} {:>9.4}",
            variant.as_str(),
            outcome.report.entity_f1,
            outcome.report.bleu
        );
    }
    write_text(&out.join("ablations.csv"), &csv)?;
    println!("outputs written to {}", out.display());
    Ok(())
}

#[derive(Args, Debug)]
pub struct SubsampleArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Training-set sizes in dialogs, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub sizes: Vec<usize>,
    /// Seeds per size, counting up from the base seed.
    #[arg(long, default_value_t = 1)]
    pub repeats: u64,
}

pub fn subsample_cmd(args: &SubsampleArgs) -> Result<()> {
    let base = args.config.resolve()?;
    if base.subsample_n.is_some() {
        return Err(Error::Config("use --sizes instead of subsample_n".into()));
    }
    if args.repeats == 0 {
        return Err(Error::Config("repeats must be positive".into()));
    }
    let out = output_dir(&base)?;
    let corpus = load(&base)?;
    let available = corpus.dialogs(Split::Train).len();
    if let Some(&n) = args.sizes.iter().find(|&&n| n == 0 || n > available) {
        return Err(Error::SubsampleOutOfRange { n, available });
    }
    create_dir(&out)?;
    let mut csv = String::from("n,seed,samples,entity_f1,bleu,avg_len,avg_ent\n");
    println!("{:>6} {:>6} {:>9} {:>9}", "n", "seed", "entity_f1", "bleu");
    for &n in &args.sizes {
        for r in 0..args.repeats {
            let seed = base.seed + r;
            let config = RunConfig {
                subsample_n: Some(n),
                seed,
                output_dir: Some(out.join(format!("n{n}")).join(format!("seed{seed}"))),
                ..base.clone()
            };
            let outcome = run_with(&config, &corpus, RunComponents::default())?;
            let rep = &outcome.report;
            let _ = writeln!(
                csv,
                "{n},{seed},{},{:.6},{:.6},{:.4},{:.4}",
                rep.samples, rep.entity_f1, rep.bleu, rep.avg_len, rep.avg_ent
            );
            println!("{n:>6} {seed:>6} {:>9.4} {:>9.4}", rep.entity_f1, rep.bleu);
        }
    }
    write_text(&out.join("subsample.csv"), &csv)?;
    println!("outputs written to {}", out.display());
    Ok(())
}
