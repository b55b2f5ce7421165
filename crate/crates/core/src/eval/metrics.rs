use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::{extract_entities, tokenize, word_count, DialogSample, EntityMention, EntityOntology, Lexicon};
use crate::error::{Error, Result};
use crate::hints::HintSet;

/// Epsilon added to zero n-gram match counts.
pub const BLEU_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Counts {
    pub fn of_sets<T: Ord>(gold: &BTreeSet<T>, predicted: &BTreeSet<T>) -> Self {
        let tp = gold.intersection(predicted).count();
        Self {
            tp,
            fp: predicted.len() - tp,
            fn_: gold.len() - tp,
        }
    }

    pub fn add(&mut self, other: Counts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }

    pub fn prf(&self) -> Prf {
        let ratio = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
        let precision = ratio(self.tp, self.tp + self.fp);
        let recall = ratio(self.tp, self.tp + self.fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Prf { precision, recall, f1 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn check_len(left: usize, right: usize) -> Result<()> {
    if left == right {
        Ok(())
    } else {
        Err(Error::LengthMismatch { left, right })
    }
}

fn mention_set(text: &str, sample: &DialogSample, lexicon: &Lexicon, ontology: &EntityOntology) -> BTreeSet<EntityMention> {
    extract_entities(text, &sample.kb, lexicon, ontology).into_iter().collect()
}

/// Per-sample entity counts: gold entities come from the gold response and
/// predicted ones from the prediction, both through the same matcher.
pub fn entity_counts(
    predictions: &[String],
    samples: &[DialogSample],
    lexicon: &Lexicon,
    ontology: &EntityOntology,
) -> Result<Vec<Counts>> {
    check_len(predictions.len(), samples.len())?;
    Ok(predictions
        .iter()
        .zip(samples)
        .map(|(p, s)| {
            Counts::of_sets(
                &mention_set(&s.gold_response, s, lexicon, ontology),
                &mention_set(p, s, lexicon, ontology),
            )
        })
        .collect())
}

/// Micro-averaged entity precision, recall and F1.
pub fn entity_f1(predictions: &[String], samples: &[DialogSample], lexicon: &Lexicon, ontology: &EntityOntology) -> Result<Prf> {
    let mut total = Counts::default();
    for c in entity_counts(predictions, samples, lexicon, ontology)? {
        total.add(c);
    }
    Ok(total.prf())
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus BLEU-4 with uniform weights, clipped counts and a single reference
/// per prediction. Zero match counts are smoothed with [`BLEU_EPSILON`].
pub fn corpus_bleu(predictions: &[String], references: &[String]) -> Result<f64> {
    check_len(predictions.len(), references.len())?;
    let mut matches = [0usize; 4];
    let mut totals = [0usize; 4];
    let (mut hyp_len, mut ref_len) = (0usize, 0usize);
    for (p, r) in predictions.iter().zip(references) {
        let hyp = tokenize(p);
        let reference = tokenize(r);
        hyp_len += hyp.len();
        ref_len += reference.len();
        for n in 1..=4 {
            let ref_counts = ngram_counts(&reference, n);
            for (gram, count) in ngram_counts(&hyp, n) {
                matches[n - 1] += count.min(ref_counts.get(gram).copied().unwrap_or(0));
            }
            totals[n - 1] += hyp.len().saturating_sub(n - 1);
        }
    }
    if hyp_len == 0 {
        return Ok(0.0);
    }
    let log_precision: f64 = (0..4)
        .map(|i| {
            let p = if matches[i] == 0 {
                BLEU_EPSILON / totals[i].max(1) as f64
            } else {
                matches[i] as f64 / totals[i] as f64
            };
            0.25 * p.ln()
        })
        .sum();
    let bp = if hyp_len > ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    };
    Ok(bp * log_precision.exp())
}

/// Mean whitespace length and mean number of distinct detected entities.
pub fn alignment_stats(
    predictions: &[String],
    samples: &[DialogSample],
    lexicon: &Lexicon,
    ontology: &EntityOntology,
) -> Result<(f64, f64)> {
    check_len(predictions.len(), samples.len())?;
    if predictions.is_empty() {
        return Ok((0.0, 0.0));
    }
    let n = predictions.len() as f64;
    let words: usize = predictions.iter().map(|p| word_count(p)).sum();
    let entities: usize = predictions
        .iter()
        .zip(samples)
        .map(|(p, s)| mention_set(p, s, lexicon, ontology).len())
        .sum();
    Ok((words as f64 / n, entities as f64 / n))
}

/// Closure accuracy and micro F1 over entity-type membership.
pub fn hint_metrics(predicted: &[HintSet], gold: &[HintSet]) -> Result<(f64, f64)> {
    check_len(predicted.len(), gold.len())?;
    if predicted.is_empty() {
        return Ok((0.0, 0.0));
    }
    let correct = predicted.iter().zip(gold).filter(|(p, g)| p.dialog_closure == g.dialog_closure).count();
    let mut total = Counts::default();
    for (p, g) in predicted.iter().zip(gold) {
        let ps: BTreeSet<&String> = p.entity_types.iter().collect();
        let gs: BTreeSet<&String> = g.entity_types.iter().collect();
        total.add(Counts::of_sets(&gs, &ps));
    }
    Ok((correct as f64 / predicted.len() as f64, total.prf().f1))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn micro_hand_case() {
        let gold: BTreeSet<_> = ["a", "b"].into_iter().collect();
        let pred: BTreeSet<_> = ["a"].into_iter().collect();
        let prf = Counts::of_sets(&gold, &pred).prf();
        assert_eq!(prf.precision, 1.0);
        assert_eq!(prf.recall, 0.5);
        assert!((prf.f1 - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(Counts::default().prf(), Prf::default());
    }

    #[test]
    fn bleu_edges() {
        let refs = s(&["the cat sat on the mat", "a dog ran"]);
        assert!((corpus_bleu(&refs, &refs).unwrap() - 1.0).abs() < 1e-12);
        assert!(corpus_bleu(&s(&["x y z w", "q r s t"]), &refs).unwrap() < 1e-6);
        assert_eq!(corpus_bleu(&s(&["", ""]), &refs).unwrap(), 0.0);
        assert!(matches!(corpus_bleu(&refs, &refs[..1]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn hint_metric_hand_case() {
        let pred = [HintSet::new(["a"], true, 1), HintSet::new(["c", "d"], false, 1)];
        let gold = [HintSet::new(["a", "b"], true, 1), HintSet::new(["c"], true, 1)];
        let (acc, f1) = hint_metrics(&pred, &gold).unwrap();
        assert_eq!(acc, 0.5);
        assert!((f1 - 2.0 / 3.0).abs() < 1e-12);
    }
}
