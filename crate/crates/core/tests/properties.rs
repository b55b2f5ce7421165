use std::collections::{BTreeSet, HashMap};

use proptest::prelude::*;

use todalign::corpus::{DatasetId, EntityMention, KnowledgeBase, Speaker, Split};
use todalign::eval::{corpus_bleu, Counts};
use todalign::hints::HintSet;
use todalign::llm::parse_response;
use todalign::prompt::{entity_list, hints_to_rules, serialize_kb, EntityListStyle, RuleKind};
use todalign::retrieval::{embed, hint_similarity, EmbedItem, mips_top_k, normalize, rerank_select, HintWeights, ScoredCandidate, StubEmbedder};
use todalign::runner::subsample_train;
use todalign::synthetic::synthetic_corpus;

const TYPES: &[&str] = &["name", "area", "food", "phone", "price range", "address"];

fn hints() -> impl Strategy<Value = HintSet> {
    (proptest::sample::subsequence(TYPES, 0..=TYPES.len()), any::<bool>(), 1u32..40)
        .prop_map(|(types, dc, rs)| HintSet::new(types, dc, rs))
}

fn candidates(max: usize) -> impl Strategy<Value = Vec<(ScoredCandidate, HintSet)>> {
    proptest::collection::vec(hints(), 0..=max).prop_map(|hs| {
        hs.into_iter()
            .enumerate()
            .map(|(i, h)| {
                (
                    ScoredCandidate {
                        sample_id: format!("c{i}"),
                        retrieval_score: 0.0,
                        retrieval_rank: i + 1,
                        hint_score: 0.0,
                    },
                    h,
                )
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn similarity_is_bounded_and_symmetric(a in hints(), b in hints()) {
        let s = hint_similarity(&a, &b);
        prop_assert!((0.0..=1.0).contains(&s));
        prop_assert_eq!(s, hint_similarity(&b, &a));
        prop_assert_eq!(hint_similarity(&a, &a), 1.0);
    }

    #[test]
    fn rerank_keeps_a_prefix_of_the_best(cands in candidates(30), q in hints(), m in 1usize..8) {
        let gold: HashMap<String, HintSet> = cands.iter().map(|(c, h)| (c.sample_id.clone(), h.clone())).collect();
        let list: Vec<ScoredCandidate> = cands.iter().map(|(c, _)| c.clone()).collect();
        let out = rerank_select(&list, &q, |id| gold.get(id), HintWeights::default(), m);
        prop_assert_eq!(out.selected.len(), m.min(list.len()));
        prop_assert_eq!(out.short, list.len() < m);
        let ids: BTreeSet<&str> = out.selected.iter().map(|c| c.sample_id.as_str()).collect();
        prop_assert_eq!(ids.len(), out.selected.len());
        let worst = out.selected.iter().map(|c| c.hint_score).fold(f64::INFINITY, f64::min);
        for (c, h) in &cands {
            if !ids.contains(c.sample_id.as_str()) {
                prop_assert!(hint_similarity(&q, h) <= worst);
            }
        }
        for pair in out.selected.windows(2) {
            prop_assert!(pair[0].hint_score > pair[1].hint_score
                || (pair[0].hint_score == pair[1].hint_score && pair[0].retrieval_rank < pair[1].retrieval_rank));
        }
    }

    #[test]
    fn mips_is_sorted_and_excludes(rows in proptest::collection::vec(proptest::collection::vec(-4i8..4, 4), 1..40),
                                   query in proptest::collection::vec(-4i8..4, 4), k in 1usize..50) {
        let rows: Vec<Vec<f32>> = rows.into_iter().map(|r| r.into_iter().map(f32::from).collect()).collect();
        let query: Vec<f32> = query.into_iter().map(f32::from).collect();
        let ids: Vec<String> = (0..rows.len()).map(|i| format!("r{i:02}")).collect();
        let out = mips_top_k(&ids, &rows, &query, k, Some("r00")).unwrap();
        prop_assert_eq!(out.len(), k.min(rows.len() - 1));
        prop_assert!(out.iter().all(|c| c.sample_id != "r00"));
        for pair in out.windows(2) {
            prop_assert!(pair[0].retrieval_score > pair[1].retrieval_score
                || (pair[0].retrieval_score == pair[1].retrieval_score && pair[0].sample_id < pair[1].sample_id));
        }
        for (i, c) in out.iter().enumerate() {
            prop_assert_eq!(c.retrieval_rank, i + 1);
        }
    }

    #[test]
    fn normalized_vectors_have_unit_norm(v in proptest::collection::vec(-1000.0f32..1000.0, 1..64)) {
        let mut v = v;
        if normalize(&mut v).is_ok() {
            let norm: f64 = v.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
            prop_assert!((norm - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn stub_embeddings_are_unit_and_stable(text in "[a-z ]{0,60}") {
        let e = StubEmbedder::new(32);
        let item = [EmbedItem { key: "k", text: &text }];
        let v = embed(&e, &item).unwrap().remove(0);
        prop_assert_eq!(&v, &embed(&e, &item).unwrap()[0]);
        let norm: f64 = v.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
        prop_assert!((norm - 1.0).abs() < 1e-5);
    }

    #[test]
    fn rules_partition_the_ontology(h in hints()) {
        let ontology = DatasetId::MultiWoz.ontology();
        let rules = hints_to_rules(&h, &ontology);
        let listed = |kind: RuleKind| -> Vec<String> {
            rules.rules.iter()
                .filter(|r| r.kind == kind)
                .flat_map(|r| r.text.rsplit_once(" - ").map(|(_, l)| l.trim_end_matches('.').to_string()))
                .flat_map(|l| l.split(", ").map(str::to_string).collect::<Vec<_>>())
                .collect()
        };
        let pos = listed(RuleKind::IncludeTypes);
        let neg = listed(RuleKind::ExcludeTypes);
        prop_assert_eq!(&pos, &h.entity_types);
        let mut all: Vec<String> = pos.into_iter().chain(neg).collect();
        all.sort();
        let mut expected: Vec<String> = ontology.types().to_vec();
        expected.sort();
        prop_assert_eq!(all, expected);
        prop_assert_eq!(rules.rules.iter().filter(|r| r.kind == RuleKind::Length).count(), 1);
        prop_assert_eq!(rules.rules.iter().filter(|r| r.kind == RuleKind::Closure).count(), 1);
    }

    #[test]
    fn kb_serialization_is_json(rows in proptest::collection::vec(
        proptest::collection::btree_map(proptest::sample::select(TYPES), "[a-z0-9 '\"\\\\]{1,12}", 0..4), 0..5)) {
        let ontology = DatasetId::MultiWoz.ontology();
        let kb = KnowledgeBase::from_rows("name", rows, &ontology).unwrap();
        let text = serialize_kb(&kb, &ontology, None);
        let parsed: serde_json::Value = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(parsed.as_object().map(|o| o.len()), Some(kb.records.len()));
    }

    #[test]
    fn parse_recovers_rendered_entities(
        pairs in proptest::collection::vec((proptest::sample::select(TYPES), "[a-z0-9 ',()\\[\\]]{1,15}"), 0..4),
        response in "[a-z][a-z .,?']{0,39}",
        list_pair in any::<bool>(),
    ) {
        let entities: Vec<EntityMention> = pairs.into_iter().map(|(t, v)| EntityMention::new(t, v)).collect();
        let style = if list_pair { EntityListStyle::ListPair } else { EntityListStyle::Tuple };
        let raw = format!(" {}\nassistant: {response}", entity_list(&entities, style));
        let parsed = parse_response(&raw, "assistant");
        prop_assert!(!parsed.fallback);
        prop_assert_eq!(parsed.entities, Some(entities));
        prop_assert_eq!(parsed.response, response.trim());
    }

    #[test]
    fn parse_never_panics(raw in "\\PC{0,200}") {
        let parsed = parse_response(&raw, "system");
        if parsed.fallback {
            prop_assert!(parsed.entities.is_none());
        }
    }

    #[test]
    fn adding_a_correct_prediction_never_lowers_f1(
        gold in proptest::collection::btree_set(0u8..12, 0..8),
        pred in proptest::collection::btree_set(0u8..12, 0..8),
    ) {
        let before = Counts::of_sets(&gold, &pred).prf().f1;
        for g in gold.difference(&pred) {
            let mut more = pred.clone();
            more.insert(*g);
            prop_assert!(Counts::of_sets(&gold, &more).prf().f1 >= before);
        }
    }

    #[test]
    fn bleu_ignores_pair_order(pairs in proptest::collection::vec(("[a-d ]{1,20}", "[a-d ]{1,20}"), 1..6)) {
        let (p, r): (Vec<String>, Vec<String>) = pairs.iter().cloned().unzip();
        let (mut rp, mut rr) = (p.clone(), r.clone());
        rp.reverse();
        rr.reverse();
        let a = corpus_bleu(&p, &r).unwrap();
        let b = corpus_bleu(&rp, &rr).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&a));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn subsamples_nest(seed in any::<u64>(), a in 1usize..20, b in 1usize..20) {
        let corpus = synthetic_corpus(30, 3);
        let (small, large) = (a.min(b), a.max(b));
        let ids = |n| -> BTreeSet<String> {
            subsample_train(&corpus, n, seed).unwrap().dialogs(Split::Train).iter().map(|d| d.id.clone()).collect()
        };
        prop_assert!(ids(small).is_subset(&ids(large)));
    }
}

#[test]
fn speaker_roles_differ_by_dataset() {
    use todalign::prompt::PromptProfile;
    assert_eq!(PromptProfile::for_dataset(DatasetId::Smd).role(Speaker::System), "system");
    assert_eq!(PromptProfile::for_dataset(DatasetId::MultiWoz).role(Speaker::System), "assistant");
}
