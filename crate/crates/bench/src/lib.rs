//! Shared fixtures for the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use twostage::{generate_synthetic, HyperParams, ScoredSpan, Sentence, Span, SynthConfig, Trainer};

/// `n` random scored spans over a sentence of `len` tokens.
pub fn random_spans(n: usize, len: usize, seed: u64) -> Vec<ScoredSpan> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let s = rng.gen_range(0..len);
            ScoredSpan {
                span: Span { start: s, end: rng.gen_range(s..len.min(s + 8)) },
                label: rng.gen_range(1..4),
                score: rng.gen_range(0.0..1.0),
            }
        })
        .collect()
}

pub fn corpus(sentences: usize) -> Vec<Sentence> {
    generate_synthetic(&SynthConfig { sentences, ..SynthConfig::default() }, 11).expect("default config is feasible")
}

/// A trainer over `sentences` synthetic sentences with desk-scale defaults.
pub fn trainer(sentences: usize, epochs: usize) -> Trainer {
    let hp = HyperParams { windows: "1-5,7".parse().expect("valid windows"), epochs, ..HyperParams::default() };
    Trainer::new(hp, &corpus(sentences), &[]).expect("synthetic corpus trains")
}
