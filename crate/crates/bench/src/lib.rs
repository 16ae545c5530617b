//! Shared fixtures for the benchmark suite.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;

use ganmt_core::data::{build_vocab, AlignmentMatrix, SentencePair, Vocabulary};
use ganmt_core::model::{Model, ModelConfig};

pub fn synthetic_pairs(
    n: usize,
    vocab_words: usize,
    len_range: std::ops::RangeInclusive<usize>,
    seed: u64,
) -> Vec<SentencePair> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..n)
        .map(|line_id| {
            let len = rng.gen_range(len_range.clone());
            let tokens: Vec<String> =
                (0..len).map(|_| format!("w{}", rng.gen_range(0..vocab_words))).collect();
            SentencePair::new(tokens.clone(), tokens, line_id)
        })
        .collect()
}

pub fn vocab_over(pairs: &[SentencePair], k: usize) -> Vocabulary {
    let lines: Vec<Vec<String>> = pairs.iter().map(|p| p.source.clone()).collect();
    build_vocab(lines.iter().map(Vec::as_slice), k).unwrap()
}

pub fn identity_aligns(pairs: &[SentencePair]) -> Vec<AlignmentMatrix> {
    pairs
        .iter()
        .map(|p| {
            let links: Vec<(usize, usize)> = (0..p.source.len()).map(|i| (i, i)).collect();
            AlignmentMatrix::from_links(&links, p.target.len(), p.source.len()).unwrap()
        })
        .collect()
}

pub fn bench_model(vocab: &Vocabulary, cell_dim: usize, seed: u64) -> Model {
    let config = ModelConfig {
        embed_dim: 16,
        cell_dim,
        src_vocab_size: vocab.len(),
        tgt_vocab_size: vocab.len(),
        topic_dim: 0,
        maxout_pieces: 2,
        use_topic: false,
    };
    Model::init(config, seed).unwrap()
}
