use std::collections::HashMap;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

use todalign::corpus::{extract_entities, write_canonical, Corpus};
use todalign::prompt::{entity_list, EntityListStyle};
use todalign::synthetic::synthetic_corpus;

fn todalign(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_todalign"))
        .args(args)
        .env_remove("TODALIGN_API_BASE")
        .env_remove("TODALIGN_EMBED_BASE")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = todalign(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    todalign(args).status.code().expect("exit code")
}

struct Fixture {
    dir: TempDir,
    corpus: Corpus,
}

impl Fixture {
    fn new(dialogs: usize) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let corpus = synthetic_corpus(dialogs, 21);
        write_canonical(&corpus, &dir.path().join("corpus")).unwrap();
        Self { dir, corpus }
    }

    fn path(&self, name: &str) -> String {
        self.dir.path().join(name).display().to_string()
    }
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn jsonl(path: &str) -> Vec<Value> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn staged_commands_chain() {
    let fx = Fixture::new(20);
    let corpus = fx.path("corpus");
    ok(&["train-hints", "--corpus", &corpus, "--out", &fx.path("model"), "--seed", "3"]);
    assert!(Path::new(&fx.path("model")).join("hint_model.json").is_file());
    ok(&["predict-hints", "--corpus", &corpus, "--model", &fx.path("model"), "--out", &fx.path("hints.jsonl")]);
    let hints = jsonl(&fx.path("hints.jsonl"));
    assert_eq!(hints.len(), fx.corpus.samples(todalign::corpus::Split::Test).len());
    assert!(hints[0].get("entity_types").is_some());

    ok(&["embed", "--corpus", &corpus, "--embedder", "stub", "--stub-dimension", "64", "--out", &fx.path("emb.bin")]);
    ok(&[
        "select-exemplars", "--corpus", &corpus, "--index", &fx.path("emb.bin"), "--hints", &fx.path("hints.jsonl"),
        "--k", "5", "--m", "2", "--out", &fx.path("sel.jsonl"),
    ]);
    let sel = jsonl(&fx.path("sel.jsonl"));
    assert!(sel.iter().all(|s| s["exemplar_ids"].as_array().unwrap().len() == 2));

    ok(&[
        "build-prompts", "--corpus", &corpus, "--exemplars", &fx.path("sel.jsonl"), "--hints", &fx.path("hints.jsonl"),
        "--out", &fx.path("prompts"),
    ]);
    let prompts = jsonl(&fx.path("prompts/prompts.jsonl"));
    assert_eq!(prompts.len(), sel.len());
    for p in &prompts {
        let text = p["full_text"].as_str().unwrap();
        assert!(text.ends_with("I will include these entities -"));
        let file = Path::new(&fx.path("prompts")).join(format!("{}.txt", p["prompt_hash"].as_str().unwrap()));
        assert_eq!(std::fs::read_to_string(file).unwrap(), text);
    }

    // Script the backend to echo each sample's gold response.
    let mut script = HashMap::new();
    for p in &prompts {
        let s = fx.corpus.sample(p["sample_id"].as_str().unwrap()).unwrap();
        let entities = extract_entities(&s.gold_response, &s.kb, &fx.corpus.lexicon, &fx.corpus.ontology);
        script.insert(
            p["prompt_hash"].as_str().unwrap().to_string(),
            format!(" {}\nassistant: {}", entity_list(&entities, EntityListStyle::Tuple), s.gold_response),
        );
    }
    std::fs::write(fx.path("script.json"), serde_json::to_string(&script).unwrap()).unwrap();
    ok(&[
        "generate", "--prompts", &fx.path("prompts"), "--backend", "scripted", "--scripted-responses",
        &fx.path("script.json"), "--cache-dir", &fx.path("cache"), "--out", &fx.path("gen.jsonl"),
    ]);
    ok(&[
        "evaluate", "--predictions", &fx.path("gen.jsonl"), "--corpus", &corpus, "--hints", &fx.path("hints.jsonl"),
        "--out", &fx.path("eval"),
    ]);
    let report = read_json(&Path::new(&fx.path("eval")).join("report.json"));
    assert_eq!(report["entity_f1"], 1.0);
    assert!(report["dc_accuracy"].is_number());
    assert!(Path::new(&fx.path("eval")).join("samples.csv").is_file());
    assert!(Path::new(&fx.path("eval")).join("report.html").is_file());

    // The cache now answers the same prompts without the script.
    ok(&[
        "generate", "--prompts", &fx.path("prompts/prompts.jsonl"), "--backend", "replay", "--cache-dir",
        &fx.path("cache"), "--out", &fx.path("gen2.jsonl"),
    ]);
    assert_eq!(std::fs::read_to_string(fx.path("gen.jsonl")).unwrap(), std::fs::read_to_string(fx.path("gen2.jsonl")).unwrap());
}

#[test]
fn fixed_exemplars_and_gold_hints() {
    let fx = Fixture::new(10);
    let corpus = fx.path("corpus");
    ok(&["predict-hints", "--corpus", &corpus, "--out", &fx.path("gold.jsonl"), "--limit", "3"]);
    ok(&["select-exemplars", "--corpus", &corpus, "--fixed", "--limit", "3", "--out", &fx.path("sel.jsonl")]);
    ok(&[
        "build-prompts", "--corpus", &corpus, "--exemplars", &fx.path("sel.jsonl"), "--hints", &fx.path("gold.jsonl"),
        "--drop", "rs", "--out", &fx.path("prompts"),
    ]);
    let prompts = jsonl(&fx.path("prompts/prompts.jsonl"));
    assert_eq!(prompts.len(), 3);
    for p in prompts {
        let text = p["full_text"].as_str().unwrap();
        assert!(text.contains("[example 3]"));
        assert!(!text.contains("words or shorter"));
    }
}

#[test]
fn run_ablate_and_subsample() {
    let fx = Fixture::new(20);
    let corpus = fx.path("corpus");
    let common = ["--corpus", corpus.as_str(), "--embedder", "stub", "--backend", "echo-gold", "--k", "5"];

    let mut run_args = vec!["run", "--hint-mode", "oracle", "--out"];
    let run_dir = fx.path("run");
    run_args.push(&run_dir);
    run_args.extend(common);
    let stdout = ok(&run_args);
    assert!(stdout.contains("entity_f1"));
    let report = read_json(&Path::new(&run_dir).join("report.json"));
    assert_eq!(report["entity_f1"], 1.0);
    let manifest = read_json(&Path::new(&run_dir).join("manifest.json"));
    assert!(manifest["inputs"].as_object().unwrap().keys().any(|k| k.starts_with("corpus/")));

    let ablate_dir = fx.path("ablate");
    let mut ablate_args = vec!["ablate", "--variants", "no_rerank,drop_dc", "--limit", "6", "--out", &ablate_dir];
    ablate_args.extend(common);
    ok(&ablate_args);
    let csv = std::fs::read_to_string(Path::new(&ablate_dir).join("ablations.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(Path::new(&ablate_dir).join("drop_dc/prompt_diffs.jsonl").is_file());

    let sub_dir = fx.path("sub");
    let mut sub_args = vec!["subsample", "--sizes", "2,5", "--repeats", "2", "--limit", "4", "--out", &sub_dir];
    sub_args.extend(common);
    ok(&sub_args);
    let csv = std::fs::read_to_string(Path::new(&sub_dir).join("subsample.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn config_file_with_flag_overrides() {
    let fx = Fixture::new(10);
    let config = serde_json::json!({
        "corpus": fx.path("corpus"),
        "embedder": "stub",
        "backend": "echo_gold",
        "hint_mode": "none",
        "k": 3,
        "limit": 2,
    });
    std::fs::write(fx.path("config.json"), config.to_string()).unwrap();
    let out = fx.path("out");
    ok(&["run", "--config", &fx.path("config.json"), "--limit", "3", "--out", &out]);
    let manifest = read_json(&Path::new(&out).join("manifest.json"));
    assert_eq!(manifest["samples"].as_array().unwrap().len(), 3);
    assert_eq!(manifest["config"]["rerank"], false);
}

#[test]
fn prepare_round_trips_canonical() {
    let fx = Fixture::new(8);
    ok(&["prepare", "--dataset", &fx.path("corpus"), "--format", "canonical", "--out", &fx.path("copy")]);
    for split in ["train.json", "test.json"] {
        assert_eq!(
            read_json(&Path::new(&fx.path("corpus")).join(split)),
            read_json(&Path::new(&fx.path("copy")).join(split))
        );
    }
}

#[test]
fn exit_codes() {
    let fx = Fixture::new(8);
    let corpus = fx.path("corpus");
    assert_eq!(code(&["--help"]), 0);
    assert_eq!(code(&["run", "--no-such-flag"]), 1);
    assert_eq!(code(&["run", "--corpus", &corpus, "--k", "0"]), 1);
    assert_eq!(code(&["run", "--corpus", &corpus, "--backend", "replay", "--embedder", "stub"]), 1);
    assert_eq!(code(&["run", "--corpus", &corpus, "--embedder", "http", "--hint-mode", "none"]), 1);
    assert_eq!(code(&["run", "--corpus", &fx.path("missing"), "--embedder", "stub"]), 2);
    assert_eq!(code(&["evaluate", "--predictions", &fx.path("none.jsonl"), "--corpus", &corpus, "--out", &fx.path("e")]), 2);
    std::fs::write(fx.path("bad.jsonl"), "{not json}\n").unwrap();
    assert_eq!(code(&["evaluate", "--predictions", &fx.path("bad.jsonl"), "--corpus", &corpus, "--out", &fx.path("e")]), 2);
    let replay = [
        "run", "--corpus", &corpus, "--embedder", "stub", "--k", "3", "--backend", "replay", "--cache-dir",
        &fx.path("empty-cache"),
    ];
    assert_eq!(code(&replay), 3);
}
