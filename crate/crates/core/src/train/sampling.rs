use alloc::vec::Vec;

use rand::Rng;

use crate::data::Triple;

/// A training example with a 0/1 label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledTriple {
    pub triple: Triple,
    pub label: f64,
}

/// Emits every positive with label 1 followed by `negatives_per_positive`
/// corruptions with label 0. Each corruption picks the head or tail side with
/// equal probability and replaces it with an entity drawn uniformly from
/// `0..num_entities`. Corruptions are not checked against known triples.
pub fn negative_sample<R: Rng + ?Sized>(
    positives: &[Triple],
    negatives_per_positive: usize,
    num_entities: usize,
    rng: &mut R,
) -> Vec<LabeledTriple> {
    let mut out = Vec::with_capacity(positives.len() * (1 + negatives_per_positive));
    for &triple in positives {
        out.push(LabeledTriple { triple, label: 1.0 });
        for _ in 0..negatives_per_positive {
            let mut corrupt = triple;
            let entity = rng.gen_range(0..num_entities) as u32;
            if rng.gen_bool(0.5) {
                corrupt.head = entity;
            } else {
                corrupt.tail = entity;
            }
            out.push(LabeledTriple {
                triple: corrupt,
                label: 0.0,
            });
        }
    }
    out
}
