//! Corpus BLEU: clipped modified n-gram precision up to 4-grams, brevity
//! penalty, no smoothing. Any zero precision gives a BLEU of 0, so tiny
//! test corpora must provide 4-gram overlap or expect 0.

use std::collections::HashMap;

use serde::Serialize;

use super::{lowercase_corpus, validate_corpus};
use crate::error::Result;

const MAX_N: usize = 4;

#[derive(Debug, Clone, Serialize)]
pub struct BleuScore {
    /// Corpus BLEU in [0, 1].
    pub bleu: f64,
    /// Modified precisions p1..p4.
    pub precisions: [f64; MAX_N],
    pub brevity_penalty: f64,
    pub matched: [u64; MAX_N],
    pub total: [u64; MAX_N],
    pub hyp_len: u64,
    pub ref_len: u64,
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], u64> {
    let mut counts: HashMap<&[String], u64> = HashMap::new();
    if tokens.len() >= n {
        for window in tokens.windows(n) {
            *counts.entry(window).or_insert(0) += 1;
        }
    }
    counts
}

/// Case-insensitive corpus BLEU against single references.
pub fn bleu(hypotheses: &[Vec<String>], references: &[Vec<String>]) -> Result<BleuScore> {
    validate_corpus(hypotheses, references)?;
    let hyps = lowercase_corpus(hypotheses);
    let refs = lowercase_corpus(references);

    let mut matched = [0u64; MAX_N];
    let mut total = [0u64; MAX_N];
    let mut hyp_len = 0u64;
    let mut ref_len = 0u64;

    for (hyp, reference) in hyps.iter().zip(&refs) {
        hyp_len += hyp.len() as u64;
        ref_len += reference.len() as u64;
        for n in 1..=MAX_N {
            let ref_counts = ngram_counts(reference, n);
            for (gram, count) in ngram_counts(hyp, n) {
                let clip = ref_counts.get(gram).copied().unwrap_or(0);
                matched[n - 1] += count.min(clip);
            }
            total[n - 1] += hyp.len().saturating_sub(n - 1) as u64;
        }
    }

    let mut precisions = [0.0; MAX_N];
    for n in 0..MAX_N {
        if total[n] > 0 {
            precisions[n] = matched[n] as f64 / total[n] as f64;
        }
    }

    let brevity_penalty = if hyp_len == 0 {
        0.0
    } else if hyp_len > ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    };

    let bleu = if precisions.iter().all(|&p| p > 0.0) {
        let log_mean = precisions.iter().map(|p| p.ln()).sum::<f64>() / MAX_N as f64;
        brevity_penalty * log_mean.exp()
    } else {
        0.0
    };

    Ok(BleuScore { bleu, precisions, brevity_penalty, matched, total, hyp_len, ref_len })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn identical_corpus_scores_one() {
        let corpus = vec![toks("the cat sat on the mat")];
        let report = bleu(&corpus, &corpus).unwrap();
        assert_eq!(report.bleu, 1.0);
        assert_eq!(report.brevity_penalty, 1.0);
    }

    #[test]
    fn no_fourgram_overlap_means_zero() {
        let hyp = vec![toks("a b c x y z q r")];
        let reference = vec![toks("a b c d e f g h")];
        let report = bleu(&hyp, &reference).unwrap();
        assert_eq!(report.bleu, 0.0);
        assert!(report.precisions[3] == 0.0);
    }

    #[test]
    fn hand_computed_case() {
        // hyp "a b c d e" vs ref "a b c d f":
        // p1 = 4/5, p2 = 3/4, p3 = 2/3, p4 = 1/2, BP = 1
        // BLEU = exp((ln .8 + ln .75 + ln(2/3) + ln .5) / 4) ≈ 0.66874
        let hyp = vec![toks("a b c d e")];
        let reference = vec![toks("a b c d f")];
        let report = bleu(&hyp, &reference).unwrap();
        assert!((report.precisions[0] - 0.8).abs() < 1e-12);
        assert!((report.precisions[1] - 0.75).abs() < 1e-12);
        assert!((report.precisions[2] - 2.0 / 3.0).abs() < 1e-12);
        assert!((report.precisions[3] - 0.5).abs() < 1e-12);
        let expected = (0.8f64.ln() + 0.75f64.ln() + (2.0f64 / 3.0).ln() + 0.5f64.ln()) / 4.0;
        assert!((report.bleu - expected.exp()).abs() < 1e-12);
        assert!((report.bleu - 0.6687).abs() < 1e-4);
    }

    #[test]
    fn case_insensitive() {
        let hyp = vec![toks("The Cat SAT on the mat")];
        let reference = vec![toks("the cat sat ON THE MAT")];
        assert_eq!(bleu(&hyp, &reference).unwrap().bleu, 1.0);
    }

    #[test]
    fn brevity_penalty_punishes_short_output() {
        let hyp = vec![toks("a b c d")];
        let reference = vec![toks("a b c d e f g h")];
        let report = bleu(&hyp, &reference).unwrap();
        assert!((report.brevity_penalty - (1.0f64 - 2.0).exp()).abs() < 1e-12);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(bleu(&[], &[]).is_err());
    }

    #[test]
    fn corpus_bleu_is_order_invariant() {
        let hyp = vec![toks("a b c d e"), toks("x y z w v u")];
        let reference = vec![toks("a b c d f"), toks("x y z w u v")];
        let forward = bleu(&hyp, &reference).unwrap();
        let hyp_rev: Vec<_> = hyp.into_iter().rev().collect();
        let ref_rev: Vec<_> = reference.into_iter().rev().collect();
        let backward = bleu(&hyp_rev, &ref_rev).unwrap();
        assert_eq!(forward.bleu, backward.bleu);
    }
}
