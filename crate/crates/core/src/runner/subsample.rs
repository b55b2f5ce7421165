use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Corpus, Split};
use crate::error::{Error, Result};

/// Training dialog ids in sampling order for a seed: a seeded shuffle of the
/// sorted ids. Every subsample of size n is a prefix of this order.
pub fn sampling_order(corpus: &Corpus, seed: u64) -> Vec<String> {
    let mut ids: Vec<String> = corpus.dialogs(Split::Train).iter().map(|d| d.id.clone()).collect();
    ids.sort();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    ids
}

/// Keeps `n` whole training dialogs chosen uniformly at random; validation,
/// test and the lexicon are untouched. Dialogs keep their original order.
pub fn subsample_train(corpus: &Corpus, n: usize, seed: u64) -> Result<Corpus> {
    let available = corpus.dialogs(Split::Train).len();
    if n == 0 || n > available {
        return Err(Error::SubsampleOutOfRange { n, available });
    }
    let keep: HashSet<String> = sampling_order(corpus, seed).into_iter().take(n).collect();
    let dialogs = corpus
        .dialogs(Split::Train)
        .iter()
        .filter(|d| keep.contains(&d.id))
        .cloned()
        .collect();
    corpus.with_train_dialogs(dialogs)
}
