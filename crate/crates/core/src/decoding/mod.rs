//! Beam search, ensembles, placeholder restoration, OOV copy-through and
//! attention-derived exports.
//!
//! Decoding never consumes an alignment matrix: guided training biases the
//! attention weights, and at decode time the model runs on its own.

mod beam;
mod restore;
mod session;

pub use beam::{beam_search, beam_search_session, default_max_len, BeamHypothesis};
pub use restore::{copy_oov, restore_placeholders};
pub use session::{DecodeSession, EnsembleSession, EnsembleSet, ModelSession};

use crate::error::{Error, Result};
use crate::model::AttentionRecord;

/// Arithmetic mean of per-member word distributions.
pub fn ensemble_step(distributions: &[Vec<f32>]) -> Result<Vec<f32>> {
    let first = distributions
        .first()
        .ok_or_else(|| Error::usage("ensemble_step needs at least one distribution"))?;
    if distributions.iter().any(|d| d.len() != first.len()) {
        return Err(Error::shape("ensemble distributions differ in length"));
    }
    let scale = 1.0 / distributions.len() as f32;
    let mut out = vec![0.0f32; first.len()];
    for dist in distributions {
        for (o, &p) in out.iter_mut().zip(dist) {
            *o += p;
        }
    }
    for o in &mut out {
        *o *= scale;
    }
    Ok(out)
}

/// Per target position, the argmax source position (ties to the smallest
/// index).
pub fn hard_alignment(att: &AttentionRecord) -> Vec<(usize, usize)> {
    att.rows()
        .iter()
        .enumerate()
        .map(|(t, row)| {
            let mut best = 0;
            for (i, &w) in row.iter().enumerate() {
                if w > row[best] {
                    best = i;
                }
            }
            (t, best)
        })
        .collect()
}

/// D x D matrix of cosine distances `1 - cos(E_j, E_k)` between topic
/// embeddings.
pub fn topic_distance_matrix(embeddings: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if embeddings.is_empty() {
        return Err(Error::usage("no topic embeddings"));
    }
    let dim = embeddings[0].len();
    let mut norms = Vec::with_capacity(embeddings.len());
    for (k, e) in embeddings.iter().enumerate() {
        if e.len() != dim {
            return Err(Error::shape("topic embeddings differ in dimension"));
        }
        let norm = e.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::usage(format!("topic embedding {k} is the zero vector")));
        }
        norms.push(norm);
    }
    let mut out = vec![vec![0.0; embeddings.len()]; embeddings.len()];
    for j in 0..embeddings.len() {
        for k in 0..embeddings.len() {
            if j == k {
                continue;
            }
            let dot: f64 = embeddings[j].iter().zip(&embeddings[k]).map(|(a, b)| a * b).sum();
            out[j][k] = 1.0 - dot / (norms[j] * norms[k]);
        }
    }
    Ok(out)
}
