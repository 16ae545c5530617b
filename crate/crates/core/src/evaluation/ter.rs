//! Translation edit rate with greedy phrase shifts.
//!
//! Edits are insertions, deletions, substitutions (token Levenshtein) plus
//! phrase shifts at cost 1 each. The shift search is greedy: among all
//! movable sub-phrases of the current hypothesis that occur verbatim in the
//! reference (length capped at 10), apply the one with the largest
//! Levenshtein reduction, as long as the total edit count still drops
//! (reduction of at least 2); repeat. The exhaustive minimum lives in test
//! oracles only.

use std::collections::HashSet;

use serde::Serialize;

use super::{lowercase_corpus, validate_corpus};
use crate::error::{Error, Result};

const MAX_SHIFT_PHRASE: usize = 10;

#[derive(Debug, Clone, Serialize)]
pub struct TerScore {
    /// Corpus TER: total edits over total reference tokens. May exceed 1.
    pub ter: f64,
    pub edits: u64,
    pub shifts: u64,
    pub ref_len: u64,
}

/// Token-level Levenshtein distance, unit costs.
pub fn levenshtein_tokens(a: &[String], b: &[String]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut curr = vec![0usize; b.len() + 1];
    for i in 1..=a.len() {
        curr[0] = i;
        for j in 1..=b.len() {
            let cost = usize::from(a[i - 1] != b[j - 1]);
            curr[j] = (prev[j] + 1).min(curr[j - 1] + 1).min(prev[j - 1] + cost);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}

/// Edits (including shifts) for one lowercased sentence pair.
pub fn ter_sentence_edits(hypothesis: &[String], reference: &[String]) -> (u64, u64) {
    let mut hyp = hypothesis.to_vec();
    let mut shifts = 0u64;
    let mut current = levenshtein_tokens(&hyp, reference);

    // Phrases that exist verbatim in the reference are the only shift
    // candidates.
    let ref_phrases: HashSet<&[String]> = (1..=MAX_SHIFT_PHRASE)
        .flat_map(|n| reference.windows(n))
        .collect();

    loop {
        let mut best: Option<(usize, Vec<String>)> = None;
        for start in 0..hyp.len() {
            for len in 1..=MAX_SHIFT_PHRASE.min(hyp.len() - start) {
                let phrase = &hyp[start..start + len];
                if !ref_phrases.contains(phrase) {
                    continue;
                }
                let mut rest: Vec<String> = Vec::with_capacity(hyp.len() - len);
                rest.extend_from_slice(&hyp[..start]);
                rest.extend_from_slice(&hyp[start + len..]);
                for dest in 0..=rest.len() {
                    if dest == start {
                        continue;
                    }
                    let mut candidate = Vec::with_capacity(hyp.len());
                    candidate.extend_from_slice(&rest[..dest]);
                    candidate.extend_from_slice(phrase);
                    candidate.extend_from_slice(&rest[dest..]);
                    let d = levenshtein_tokens(&candidate, reference);
                    if best.as_ref().map_or(true, |(bd, _)| d < *bd) {
                        best = Some((d, candidate));
                    }
                }
            }
        }
        match best {
            // A shift costs 1, so it pays off only when the distance drops
            // by at least 2.
            Some((d, candidate)) if current >= d + 2 => {
                hyp = candidate;
                current = d;
                shifts += 1;
            }
            _ => break,
        }
    }
    (shifts + current as u64, shifts)
}

/// Case-insensitive corpus TER against single references.
pub fn ter(hypotheses: &[Vec<String>], references: &[Vec<String>]) -> Result<TerScore> {
    validate_corpus(hypotheses, references)?;
    let hyps = lowercase_corpus(hypotheses);
    let refs = lowercase_corpus(references);

    let mut edits = 0u64;
    let mut shifts = 0u64;
    let mut ref_len = 0u64;
    for (no, (hyp, reference)) in hyps.iter().zip(&refs).enumerate() {
        if reference.is_empty() {
            return Err(Error::format(no, "empty reference sentence"));
        }
        let (e, s) = ter_sentence_edits(hyp, reference);
        edits += e;
        shifts += s;
        ref_len += reference.len() as u64;
    }
    Ok(TerScore { ter: edits as f64 / ref_len as f64, edits, shifts, ref_len })
}
