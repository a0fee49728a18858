use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{PrepConfig, TrainingExample};

/// Number of negatives kept for `positives` positive windows.
pub fn negative_quota(positives: usize, negatives: usize, ratio: f64) -> usize {
    let cap = (ratio * positives as f64 + 1e-9).floor() as usize;
    cap.min(negatives)
}

/// Keeps every positive example and a seeded uniform sample of negatives,
/// capped at `floor(neg_to_pos_ratio * positives)`. Input order is preserved.
pub fn sample_negatives(examples: &[TrainingExample], cfg: &PrepConfig) -> Vec<TrainingExample> {
    sample_negatives_seeded(examples, cfg.neg_to_pos_ratio, cfg.rng_seed)
}

pub fn sample_negatives_seeded(examples: &[TrainingExample], ratio: f64, seed: u64) -> Vec<TrainingExample> {
    let negatives: Vec<usize> = examples
        .iter()
        .enumerate()
        .filter(|(_, e)| !e.is_positive())
        .map(|(i, _)| i)
        .collect();
    let positives = examples.len() - negatives.len();
    let quota = negative_quota(positives, negatives.len(), ratio);

    let mut keep = vec![true; examples.len()];
    for &i in &negatives {
        keep[i] = false;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in index::sample(&mut rng, negatives.len(), quota) {
        keep[negatives[k]] = true;
    }
    examples
        .iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(e, _)| e.clone())
        .collect()
}
