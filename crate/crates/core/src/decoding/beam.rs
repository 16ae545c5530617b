//! Length-capped beam search over a decode session.
//!
//! Scores are sums of token log-probabilities with no length
//! normalization. Hypotheses that emit the sentence-end token leave the
//! beam; the best finished hypothesis wins, falling back to the best live
//! one if nothing finished within the length cap. Candidate ordering is
//! fully deterministic: score, then token id, then parent index.

use std::collections::BTreeSet;

use crate::data::{TopicVector, EOS_ID};
use crate::error::{Error, Result};
use crate::model::AttentionRecord;

use super::session::{DecodeSession, EnsembleSet};

/// A finished translation hypothesis. `tokens` excludes the final
/// sentence-end token, while `log_prob` includes its emission probability;
/// attention rows match `tokens` one to one. The placeholder and copy
/// bookkeeping is filled by the restoration passes.
#[derive(Debug, Clone)]
pub struct BeamHypothesis {
    pub tokens: Vec<u32>,
    pub log_prob: f32,
    pub attention: AttentionRecord,
    pub used_placeholder_slots: BTreeSet<(String, usize)>,
    pub copied_source_positions: Vec<usize>,
}

struct Live<S> {
    tokens: Vec<u32>,
    log_prob: f32,
    rows: Vec<Vec<f64>>,
    state: S,
}

/// `3 * source length + 10`.
pub fn default_max_len(src_len: usize) -> usize {
    3 * src_len + 10
}

/// Beam search over an ensemble for one source sentence.
pub fn beam_search(
    models: &EnsembleSet,
    src_ids: &[u32],
    topic: Option<&TopicVector>,
    beam: usize,
    max_len: usize,
) -> Result<BeamHypothesis> {
    let mut session = models.start_session(src_ids, topic)?;
    beam_search_session(&mut session, beam, max_len)
}

/// Beam search over any decode session.
pub fn beam_search_session<S: DecodeSession>(
    session: &mut S,
    beam: usize,
    max_len: usize,
) -> Result<BeamHypothesis> {
    if beam == 0 {
        return Err(Error::usage("beam size must be at least 1"));
    }
    if max_len == 0 {
        return Err(Error::usage("max_len must be at least 1"));
    }
    let initial = session.initial()?;
    let mut live = vec![Live { tokens: Vec::new(), log_prob: 0.0, rows: Vec::new(), state: initial }];
    let mut finished: Vec<Live<S::State>> = Vec::new();

    for _ in 0..max_len {
        if live.is_empty() {
            break;
        }
        let mut stepped = Vec::with_capacity(live.len());
        // (score, parent, token)
        let mut candidates: Vec<(f32, usize, u32)> = Vec::new();
        for (parent, hyp) in live.iter().enumerate() {
            let y_prev = hyp.tokens.last().copied().unwrap_or(EOS_ID);
            let (probs, attention, state) = session.step(&hyp.state, y_prev)?;
            for (id, &p) in probs.iter().enumerate() {
                candidates.push((hyp.log_prob + p.ln(), parent, id as u32));
            }
            stepped.push((attention, state));
        }
        candidates.sort_by(|a, b| {
            b.0.total_cmp(&a.0).then(a.2.cmp(&b.2)).then(a.1.cmp(&b.1))
        });

        let mut next = Vec::with_capacity(beam);
        for &(score, parent, token) in candidates.iter().take(beam) {
            let (attention, state) = &stepped[parent];
            let mut tokens = live[parent].tokens.clone();
            tokens.push(token);
            let mut rows = live[parent].rows.clone();
            rows.push(attention.clone());
            let hyp = Live { tokens, log_prob: score, rows, state: state.clone() };
            if token == EOS_ID {
                finished.push(hyp);
            } else {
                next.push(hyp);
            }
        }
        live = next;
    }

    let best = finished
        .into_iter()
        .chain(live)
        .max_by(|a, b| a.log_prob.total_cmp(&b.log_prob).then(b.tokens.len().cmp(&a.tokens.len())))
        .expect("beam search always produces at least one hypothesis");

    let mut tokens = best.tokens;
    let mut rows = best.rows;
    if tokens.last() == Some(&EOS_ID) {
        tokens.pop();
        rows.pop();
    }
    Ok(BeamHypothesis {
        tokens,
        log_prob: best.log_prob,
        attention: AttentionRecord::from_rows(rows)?,
        used_placeholder_slots: BTreeSet::new(),
        copied_source_positions: Vec::new(),
    })
}
