use std::collections::HashSet;

use todalign::corpus::Split;
use todalign::hints::derive_gold_hints;
use todalign::prompt::{LineKind, RuleKind};
use todalign::runner::{
    ablate, ablation_diffs, plan_prompts, run_with, sampling_order, subsample_train, train_predictors, Ablation,
    BackendKind, EmbedderKind, HintMode, RunComponents, RunConfig,
};
use todalign::synthetic::synthetic_corpus;
use todalign::{Error, ErrorKind};

fn offline_config() -> RunConfig {
    RunConfig {
        embedder: EmbedderKind::Stub,
        backend: BackendKind::EchoGold,
        k: Some(5),
        ..RunConfig::default()
    }
}

#[test]
fn echo_gold_with_oracle_hints_is_perfect() {
    let corpus = synthetic_corpus(30, 1);
    let config = RunConfig {
        hint_mode: HintMode::Oracle,
        ..offline_config()
    };
    let out = run_with(&config, &corpus, RunComponents::default()).unwrap();
    let r = &out.report;
    assert_eq!(r.entity_f1, 1.0);
    assert!((r.bleu - 1.0).abs() < 1e-12);
    let samples = corpus.samples(Split::Test);
    let mean_rs = samples
        .iter()
        .map(|s| derive_gold_hints(s, &corpus.lexicon, &corpus.ontology).response_size as f64)
        .sum::<f64>()
        / samples.len() as f64;
    assert_eq!(r.avg_len, mean_rs);
    assert_eq!(r.avg_len, r.gold_avg_len);
    assert_eq!(r.avg_ent, r.gold_avg_ent);
    assert!(out.generations.iter().all(|g| !g.parse_fallback));
}

#[test]
fn featurized_smoke_run_fills_every_field() {
    let corpus = synthetic_corpus(10, 2);
    let out = run_with(&offline_config(), &corpus, RunComponents::default()).unwrap();
    let r = &out.report;
    assert_eq!(r.samples, corpus.samples(Split::Test).len());
    assert!(r.dc_accuracy.is_some() && r.et_micro_f1.is_some());
    for v in [r.entity_precision, r.entity_recall, r.entity_f1, r.bleu, r.dc_accuracy.unwrap(), r.et_micro_f1.unwrap()] {
        assert!((0.0..=1.0).contains(&v));
    }
    assert_eq!(out.manifest.samples.len(), r.samples);
    assert!(out.manifest.samples.iter().all(|s| s.exemplar_ids.len() == 2));
}

#[test]
fn replay_runs_are_byte_identical() {
    let corpus = synthetic_corpus(20, 3);
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    let seed = RunConfig {
        cache_dir: Some(cache.clone()),
        ..offline_config()
    };
    run_with(&seed, &corpus, RunComponents::default()).unwrap();
    let replay = RunConfig {
        backend: BackendKind::Replay,
        ..seed
    };
    let reports: Vec<String> = (0..2)
        .map(|i| {
            let out_dir = dir.path().join(format!("run{i}"));
            let config = RunConfig {
                output_dir: Some(out_dir.clone()),
                ..replay.clone()
            };
            run_with(&config, &corpus, RunComponents::default()).unwrap();
            std::fs::read_to_string(out_dir.join("report.json")).unwrap()
        })
        .collect();
    assert_eq!(reports[0], reports[1]);

    let empty_cache = RunConfig {
        cache_dir: Some(dir.path().join("empty")),
        ..replay
    };
    let err = run_with(&empty_cache, &corpus, RunComponents::default()).unwrap_err();
    assert!(matches!(err, Error::ReplayMiss(_)));
    assert_eq!(err.kind(), ErrorKind::Backend);
    let tolerant = RunConfig {
        exclude_failed: true,
        ..empty_cache
    };
    let out = run_with(&tolerant, &corpus, RunComponents::default()).unwrap();
    assert_eq!(out.report.excluded.len(), corpus.samples(Split::Test).len());
}

#[test]
fn subsamples_are_nested_prefixes() {
    let corpus = synthetic_corpus(40, 4);
    let train_ids = |c: &todalign::corpus::Corpus| -> HashSet<String> {
        c.dialogs(Split::Train).iter().map(|d| d.id.clone()).collect()
    };
    let mut previous = HashSet::new();
    for n in [1, 3, 8, 20] {
        let sub = subsample_train(&corpus, n, 9).unwrap();
        let ids = train_ids(&sub);
        assert_eq!(ids.len(), n);
        assert!(previous.is_subset(&ids));
        assert_eq!(sub.samples(Split::Test), corpus.samples(Split::Test));
        previous = ids;
    }
    let all = corpus.dialogs(Split::Train).len();
    assert_eq!(train_ids(&subsample_train(&corpus, all, 1).unwrap()), train_ids(&corpus));
    assert_eq!(sampling_order(&corpus, 5), sampling_order(&corpus, 5));
    assert!(matches!(subsample_train(&corpus, all + 1, 0), Err(Error::SubsampleOutOfRange { .. })));
    assert!(matches!(subsample_train(&corpus, 0, 0), Err(Error::SubsampleOutOfRange { .. })));
}

#[test]
fn drop_et_prompt_has_no_type_rules() {
    let corpus = synthetic_corpus(10, 5);
    let predictors = train_predictors(&corpus, &Default::default()).unwrap();
    let embedder = todalign::retrieval::StubEmbedder::new(64);
    let base = offline_config().resolved().unwrap();
    let variant = ablate(&base, Ablation::DropEt).unwrap();
    let a = plan_prompts(&base, &corpus, Some(&predictors), Some(&embedder)).unwrap();
    let b = plan_prompts(&variant, &corpus, Some(&predictors), Some(&embedder)).unwrap();
    for plan in &b {
        assert!(!plan.prompt.full_text.contains("must only include entities"));
        assert!(!plan.prompt.full_text.contains("must not include any entities"));
    }
    for (_, diff) in ablation_diffs(&a, &b).unwrap() {
        assert!(diff.only_kinds(&[
            LineKind::Rule(RuleKind::IncludeTypes),
            LineKind::Rule(RuleKind::ExcludeTypes),
            LineKind::TypeDeclaration,
        ]));
    }
}

#[test]
fn missing_artifacts_are_named() {
    let corpus = synthetic_corpus(6, 6);
    let config = RunConfig {
        hint_model: Some("/nonexistent/model".into()),
        ..offline_config()
    };
    match run_with(&config, &corpus, RunComponents::default()) {
        Err(Error::MissingArtifact(p)) => assert!(p.ends_with("hint_model.json")),
        other => panic!("unexpected {other:?}"),
    }
}
