//! Domain adaptation: continue training an existing model under an
//! in-domain vocabulary.
//!
//! Vocabulary-shaped tensors (embeddings, output projection and bias) are
//! rebuilt row by row: tokens present in both vocabularies keep their
//! trained vectors bitwise, new tokens draw fresh uniform values. Everything
//! else is carried over unchanged.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::data::Vocabulary;
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::tensor::{ParameterStore, Tensor, INIT_RANGE};

/// Rebuilds `base` parameters for new vocabularies. Returns the adapted
/// store and the adapted config (vocabulary sizes updated, all other fields
/// must match `requested`).
pub fn adapt_parameters(
    base: &ParameterStore,
    base_config: &ModelConfig,
    requested: &ModelConfig,
    old_src: &Vocabulary,
    old_tgt: &Vocabulary,
    new_src: &Vocabulary,
    new_tgt: &Vocabulary,
    seed: u64,
) -> Result<(ParameterStore, ModelConfig)> {
    let mut expected = base_config.clone();
    expected.src_vocab_size = requested.src_vocab_size;
    expected.tgt_vocab_size = requested.tgt_vocab_size;
    if &expected != requested {
        return Err(Error::Config(format!(
            "adapt config differs from checkpoint beyond vocabulary sizes: {requested:?} vs {base_config:?}"
        )));
    }
    if new_src.len() != requested.src_vocab_size || new_tgt.len() != requested.tgt_vocab_size {
        return Err(Error::Config("vocabulary files do not match requested sizes".into()));
    }
    if old_src.len() != base_config.src_vocab_size || old_tgt.len() != base_config.tgt_vocab_size {
        return Err(Error::Config("old vocabulary files do not match the checkpoint".into()));
    }

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut out = ParameterStore::new();
    for (name, tensor) in base.iter() {
        match name {
            "src.embed" | "tgt.embed" | "out.w" | "out.b" => {}
            _ => out.insert(name, tensor.clone()),
        }
    }

    // Fixed rebuild order keeps the RNG draws reproducible.
    let remap_matrix = |rng: &mut ChaCha20Rng,
                        old_t: &Tensor,
                        old_vocab: &Vocabulary,
                        new_vocab: &Vocabulary| {
        let cols = old_t.shape()[1];
        let mut data = Vec::with_capacity(new_vocab.len() * cols);
        for id in 0..new_vocab.len() as u32 {
            match old_vocab.id(new_vocab.token(id)) {
                Some(old_id) => data.extend_from_slice(old_t.row(old_id as usize)),
                None => data.extend((0..cols).map(|_| rng.gen_range(-INIT_RANGE..=INIT_RANGE))),
            }
        }
        Tensor::new(vec![new_vocab.len(), cols], data)
    };
    let remap_vector = |rng: &mut ChaCha20Rng,
                        old_t: &Tensor,
                        old_vocab: &Vocabulary,
                        new_vocab: &Vocabulary| {
        let data = (0..new_vocab.len() as u32)
            .map(|id| match old_vocab.id(new_vocab.token(id)) {
                Some(old_id) => old_t.data()[old_id as usize],
                None => rng.gen_range(-INIT_RANGE..=INIT_RANGE),
            })
            .collect();
        Tensor::vector(data)
    };

    let missing = |name: &str| Error::usage(format!("checkpoint is missing `{name}`"));
    let src_embed = base.get("src.embed").ok_or_else(|| missing("src.embed"))?;
    out.insert("src.embed", remap_matrix(&mut rng, src_embed, old_src, new_src)?);
    let tgt_embed = base.get("tgt.embed").ok_or_else(|| missing("tgt.embed"))?;
    out.insert("tgt.embed", remap_matrix(&mut rng, tgt_embed, old_tgt, new_tgt)?);
    let out_w = base.get("out.w").ok_or_else(|| missing("out.w"))?;
    out.insert("out.w", remap_matrix(&mut rng, out_w, old_tgt, new_tgt)?);
    let out_b = base.get("out.b").ok_or_else(|| missing("out.b"))?;
    out.insert("out.b", remap_vector(&mut rng, out_b, old_tgt, new_tgt));

    Ok((out, expected))
}
