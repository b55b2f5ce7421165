//! Entity F1, corpus BLEU, alignment statistics, hint-predictor metrics and
//! report writers.

mod metrics;
mod report;

pub use metrics::{alignment_stats, corpus_bleu, entity_counts, entity_f1, hint_metrics, Counts, Prf, BLEU_EPSILON};
pub use report::{EvalReport, SampleRecord};

use crate::corpus::{word_count, DialogSample, EntityOntology, Lexicon};
use crate::error::Result;
use crate::hints::HintSet;

/// Scores predictions aligned with `samples`. `hints` pairs predicted with
/// gold hints when hint quality should be reported; `excluded` lists samples
/// left out because generation failed.
pub fn evaluate(
    predictions: &[String],
    samples: &[DialogSample],
    lexicon: &Lexicon,
    ontology: &EntityOntology,
    hints: Option<(&[HintSet], &[HintSet])>,
    excluded: Vec<String>,
) -> Result<EvalReport> {
    let counts = entity_counts(predictions, samples, lexicon, ontology)?;
    let mut total = Counts::default();
    for c in &counts {
        total.add(*c);
    }
    let prf = total.prf();
    let golds: Vec<String> = samples.iter().map(|s| s.gold_response.clone()).collect();
    let bleu = corpus_bleu(predictions, &golds)?;
    let (avg_len, avg_ent) = alignment_stats(predictions, samples, lexicon, ontology)?;
    let (gold_avg_len, gold_avg_ent) = alignment_stats(&golds, samples, lexicon, ontology)?;
    let (dc_accuracy, et_micro_f1) = match hints {
        Some((predicted, gold)) => {
            let (dc, et) = hint_metrics(predicted, gold)?;
            (Some(dc), Some(et))
        }
        None => (None, None),
    };
    let per_sample = predictions
        .iter()
        .zip(samples)
        .zip(&counts)
        .map(|((p, s), c)| SampleRecord {
            sample_id: s.id.clone(),
            prediction: p.clone(),
            gold_response: s.gold_response.clone(),
            counts: *c,
            words: word_count(p),
            entities: c.tp + c.fp,
        })
        .collect();
    Ok(EvalReport {
        samples: samples.len(),
        entity_precision: prf.precision,
        entity_recall: prf.recall,
        entity_f1: prf.f1,
        bleu,
        avg_len,
        avg_ent,
        gold_avg_len,
        gold_avg_ent,
        dc_accuracy,
        et_micro_f1,
        excluded,
        per_sample,
    })
}
