//! Seeded synthetic corpora over the MultiWOZ ontology, for tests and demos.
//!
//! Dialogs follow a few restaurant and hotel templates: a request, an offer
//! or a clarifying question, an attribute lookup, thanks, and usually a
//! closing turn. Every value mentioned by the system comes from the
//! dialog's knowledge base.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Corpus, DatasetId, Dialog, KnowledgeBase, Utterance};

const NAMES: &[&str] = &[
    "acorn guest house", "the gardenia", "golden curry", "lovell lodge", "city stop", "pipasha",
    "the river bar", "alpha milton", "hamilton lodge", "curry king", "nandos", "the copper kettle",
    "ashley hotel", "la mimosa", "bridge guest house", "rice house",
];
const AREAS: &[&str] = &["north", "south", "east", "west", "centre"];
const PRICES: &[&str] = &["cheap", "moderate", "expensive"];
const FOODS: &[&str] = &["indian", "italian", "chinese", "thai", "british"];
const CHOICES: &[&str] = &["two", "three", "several", "five", "many"];
const STREETS: &[&str] = &["regent street", "mill road", "hills road", "bridge street", "king street"];

fn kb_for(rng: &mut ChaCha8Rng, domain: &str) -> KnowledgeBase {
    let mut names: Vec<&str> = NAMES.to_vec();
    names.shuffle(rng);
    let choice = *CHOICES.choose(rng).expect("non-empty");
    let rows: Vec<Vec<(String, String)>> = names[..3]
        .iter()
        .map(|name| {
            let mut row = vec![
                ("name".to_string(), name.to_string()),
                ("area".to_string(), AREAS.choose(rng).expect("non-empty").to_string()),
                ("price range".to_string(), PRICES.choose(rng).expect("non-empty").to_string()),
                ("phone".to_string(), format!("01223{:06}", rng.gen_range(0..1_000_000))),
                ("postcode".to_string(), format!("cb{}{}{}", rng.gen_range(1..5), rng.gen_range(0..10), ["ab", "qf", "ls", "zt"].choose(rng).expect("non-empty"))),
                ("address".to_string(), format!("{} {}", rng.gen_range(1..200), STREETS.choose(rng).expect("non-empty"))),
                ("choice".to_string(), choice.to_string()),
            ];
            if domain == "restaurant" {
                row.push(("food".to_string(), FOODS.choose(rng).expect("non-empty").to_string()));
                row.push(("type".to_string(), "restaurant".to_string()));
            } else {
                row.push(("type".to_string(), ["hotel", "guesthouse"].choose(rng).expect("non-empty").to_string()));
                row.push(("stars".to_string(), format!("{} star", rng.gen_range(2..6))));
            }
            row
        })
        .collect();
    KnowledgeBase::from_rows("name", rows, &DatasetId::MultiWoz.ontology()).expect("synthetic rows are valid")
}

fn dialog(rng: &mut ChaCha8Rng, id: String) -> Dialog {
    let domain = if rng.gen_bool(0.5) { "restaurant" } else { "hotel" };
    let kb = kb_for(rng, domain);
    let r = &kb.records[0];
    let get = |k: &str| r.get(k).cloned().unwrap_or_default();
    let (name, area, price, choice) = (get("name"), get("area"), get("price range"), get("choice"));
    let mut turns = Vec::new();
    let request = if domain == "restaurant" {
        format!("i am looking for a {price} {} restaurant in the {area} .", get("food"))
    } else {
        format!("i need a {price} place to stay in the {area} .")
    };
    turns.push(Utterance::user(&request));
    turns.push(Utterance::system(&match rng.gen_range(0..3) {
        0 => format!("there are {choice} options . how about {name} ?"),
        1 => format!("{name} is a {price} {domain} in the {area} ."),
        _ => "sure , do you have a preferred day ?".to_string(),
    }));
    if rng.gen_bool(0.5) {
        turns.push(Utterance::user("what is the phone number ?"));
        turns.push(Utterance::system(&format!("the phone number of {name} is {} .", get("phone"))));
    } else {
        turns.push(Utterance::user("can i get the address please ?"));
        turns.push(Utterance::system(&format!("it is at {} , postcode {} .", get("address"), get("postcode"))));
    }
    turns.push(Utterance::user(["thanks , that is all .", "great , thank you .", "that is all i need ."].choose(rng).expect("non-empty")));
    if rng.gen_bool(0.8) {
        turns.push(Utterance::system(["you are welcome . goodbye !", "have a nice day . bye !", "glad i could help . goodbye ."].choose(rng).expect("non-empty")));
    }
    Dialog {
        id,
        domain: domain.to_string(),
        kb: Arc::new(kb),
        turns,
    }
}

/// A corpus of `dialogs` dialogs (at least 2): roughly 70% train, 10%
/// validation and 20% test, with at least one train and one test dialog.
pub fn synthetic_corpus(dialogs: usize, seed: u64) -> Corpus {
    assert!(dialogs >= 2, "need at least two dialogs");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let all: Vec<Dialog> = (0..dialogs).map(|i| dialog(&mut rng, format!("syn{i:04}"))).collect();
    let n_test = (dialogs / 5).max(1);
    let n_val = dialogs / 10;
    let n_train = dialogs - n_test - n_val;
    let mut it = all.into_iter();
    let train: Vec<Dialog> = it.by_ref().take(n_train).collect();
    let val: Vec<Dialog> = it.by_ref().take(n_val).collect();
    let test: Vec<Dialog> = it.collect();
    Corpus::from_dialogs(Some("multiwoz".into()), DatasetId::MultiWoz.ontology(), train, val, test)
        .expect("synthetic corpus is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Split;

    #[test]
    fn deterministic_and_split() {
        let a = synthetic_corpus(10, 3);
        let b = synthetic_corpus(10, 3);
        assert_eq!(a.samples(Split::Train), b.samples(Split::Train));
        assert_eq!(a.dialogs(Split::Train).len(), 7);
        assert_eq!(a.dialogs(Split::Val).len(), 1);
        assert_eq!(a.dialogs(Split::Test).len(), 2);
    }
}
