use todalign::corpus::DatasetId;
use todalign::prompt::{appendix_set, hints_to_rules, PromptContext, PromptProfile};

fn golden(dataset: DatasetId) -> String {
    let path = format!("{}/tests/golden/{}.txt", env!("CARGO_MANIFEST_DIR"), dataset.as_str());
    std::fs::read_to_string(path).unwrap()
}

fn render(dataset: DatasetId) -> String {
    let profile = PromptProfile::for_dataset(dataset);
    let ontology = dataset.ontology();
    let set = appendix_set(dataset);
    let ctx = PromptContext::new(&profile, &ontology);
    let blocks = set
        .exemplars
        .iter()
        .enumerate()
        .map(|(i, e)| (e.sample_id.clone(), ctx.render_exemplar(i + 1, e)))
        .collect();
    let test = ctx.render_test(set.exemplars.len() + 1, &set.test.kb, &set.test.history, Some(&set.test.hints));
    todalign::prompt::build_prompt(&profile.instructions, blocks, test).unwrap().full_text
}

fn assert_same(dataset: DatasetId) {
    let expected = golden(dataset);
    let actual = render(dataset);
    if expected != actual {
        for (n, (e, a)) in expected.lines().zip(actual.lines()).enumerate() {
            assert_eq!(e, a, "{dataset} line {}", n + 1);
        }
        assert_eq!(expected.len(), actual.len(), "{dataset} length");
    }
}

#[test]
fn multiwoz_sample_prompt() {
    assert_same(DatasetId::MultiWoz);
}

#[test]
fn smd_sample_prompt() {
    assert_same(DatasetId::Smd);
}

#[test]
fn bitod_sample_prompt() {
    assert_same(DatasetId::BiTod);
}

/// Every `[rules i]` block of the golden files comes out of rule synthesis.
#[test]
fn rule_blocks_verbatim() {
    for dataset in DatasetId::ALL {
        let text = golden(dataset);
        let set = appendix_set(dataset);
        let ontology = dataset.ontology();
        let mut hints: Vec<_> = set.exemplars.iter().map(|e| e.hints.clone()).collect();
        hints.push(set.test.hints.clone());
        for (i, h) in hints.iter().enumerate() {
            let header = format!("[rules {}]\n", i + 1);
            let start = text.find(&header).unwrap() + header.len();
            let end = start + text[start..].find("\n\n").unwrap();
            assert_eq!(&text[start..end], hints_to_rules(h, &ontology).render(), "{dataset} rules {}", i + 1);
        }
    }
}

#[test]
fn smd_exemplar_one_rules() {
    let ontology = DatasetId::Smd.ontology();
    let h = todalign::hints::HintSet::new(["poi", "poi type"], false, 11);
    assert_eq!(
        hints_to_rules(&h, &ontology).render(),
        "The response must be 11 words or shorter.\n\
         The response must not close the dialog.\n\
         The response must only include entities of type - poi, poi type.\n\
         The response must not include any entities of type - address, traffic info, distance, event, date, time, party, agenda, room, location, weather attribute, temperature, weekly time."
    );
}
