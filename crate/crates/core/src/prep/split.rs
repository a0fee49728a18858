use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::Document;

use super::{PrepConfig, PrepError};

#[derive(Debug, Clone, Default)]
pub struct CorpusSplit {
    pub train: Vec<Document>,
    pub validation: Vec<Document>,
    pub test: Vec<Document>,
}

/// `(train, validation, test)` sizes for `n` documents.
///
/// Validation and test get `floor(fraction * n)` each, raised to at least one;
/// train receives the remainder.
pub fn split_sizes(n: usize, fractions: [f64; 3]) -> (usize, usize, usize) {
    let alloc = |f: f64| ((f * n as f64 + 1e-9).floor() as usize).max(1);
    let test = alloc(fractions[2]).min(n);
    let validation = alloc(fractions[1]).min(n - test);
    (n - validation - test, validation, test)
}

/// Document-level split after a seeded shuffle of the id-sorted corpus.
pub fn split_corpus(mut docs: Vec<Document>, cfg: &PrepConfig) -> Result<CorpusSplit, PrepError> {
    cfg.validate()?;
    if docs.len() < 3 {
        return Err(PrepError::InsufficientCorpus(docs.len()));
    }
    docs.sort_by(|a, b| a.id().cmp(b.id()));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    docs.shuffle(&mut rng);

    let (train, validation, _) = split_sizes(docs.len(), cfg.split_fractions);
    let test = docs.split_off(train + validation);
    let validation = docs.split_off(train);
    Ok(CorpusSplit {
        train: docs,
        validation,
        test,
    })
}
