//! Sub-sentence unit extraction for bootstrapped training.
//!
//! Units are consistent phrase pairs (no alignment link crosses the block
//! boundary) whose source span is 8..=30 tokens long and whose cut points
//! fall on unit boundaries on both sides. A cut point `p` of a token
//! sequence is a boundary when `p` is the sentence start or end, or the
//! token at position `p` is punctuation — so units start either at the
//! sentence start or *at* a punctuation token, and end either at the
//! sentence end or directly *before* one.

use super::preprocess::DEFAULT_PUNCTUATION;
use super::{AlignmentMatrix, SentencePair};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct ExtractConfig {
    pub min_src_len: usize,
    pub max_src_len: usize,
    pub punctuation: Vec<char>,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        ExtractConfig {
            min_src_len: 8,
            max_src_len: 30,
            punctuation: DEFAULT_PUNCTUATION.to_vec(),
        }
    }
}

impl ExtractConfig {
    fn is_punct(&self, token: &str) -> bool {
        !token.is_empty() && token.chars().all(|c| self.punctuation.contains(&c))
    }

    /// Cut-point boundary predicate: sentence edge or punctuation at `p`.
    fn is_boundary(&self, tokens: &[String], p: usize) -> bool {
        p == 0 || p == tokens.len() || self.is_punct(&tokens[p])
    }

    fn span_ok(&self, tokens: &[String], start: usize, end: usize) -> bool {
        self.is_boundary(tokens, start) && self.is_boundary(tokens, end + 1)
    }
}

/// Extracts all qualifying sub-sentence units of a pair.
///
/// Hard links are the support of `align` (for ingested pharaoh alignments,
/// exactly the input links). Output order is by source span then target
/// span, and unit line ids restart from zero.
pub fn extract_subsentence_units(
    pair: &SentencePair,
    align: &AlignmentMatrix,
    config: &ExtractConfig,
) -> Result<Vec<SentencePair>> {
    let (s_len, t_len) = (pair.source.len(), pair.target.len());
    if align.cols() != s_len || align.rows() != t_len {
        return Err(Error::shape(format!(
            "alignment is {}x{} but pair is {} target / {} source tokens",
            align.rows(),
            align.cols(),
            t_len,
            s_len
        )));
    }
    let links = align.links();
    let mut tgt_aligned = vec![false; t_len];
    for &(_, j) in &links {
        tgt_aligned[j] = true;
    }

    let mut units = Vec::new();
    for i1 in 0..s_len {
        for i2 in i1..s_len {
            let src_span = i2 - i1 + 1;
            if src_span < config.min_src_len || src_span > config.max_src_len {
                continue;
            }
            if !config.span_ok(&pair.source, i1, i2) {
                continue;
            }
            // Target projection of the source span.
            let mut j_min = t_len;
            let mut j_max = 0;
            let mut any = false;
            for &(i, j) in &links {
                if i >= i1 && i <= i2 {
                    any = true;
                    j_min = j_min.min(j);
                    j_max = j_max.max(j);
                }
            }
            if !any {
                continue;
            }
            // Consistency: links inside the projected target span must stay
            // inside the source span.
            if links.iter().any(|&(i, j)| j >= j_min && j <= j_max && (i < i1 || i > i2)) {
                continue;
            }
            // Extend over unaligned target positions on both ends.
            let mut j1 = j_min;
            loop {
                let mut j2 = j_max;
                loop {
                    if config.span_ok(&pair.target, j1, j2) {
                        units.push(SentencePair::new(
                            pair.source[i1..=i2].to_vec(),
                            pair.target[j1..=j2].to_vec(),
                            units.len(),
                        ));
                    }
                    j2 += 1;
                    if j2 >= t_len || tgt_aligned[j2] {
                        break;
                    }
                }
                if j1 == 0 || tgt_aligned[j1 - 1] {
                    break;
                }
                j1 -= 1;
            }
        }
    }
    Ok(units)
}

/// Appends extracted units after the original corpus, renumbering line ids
/// sequentially.
pub fn bootstrap_merge(corpus: &[SentencePair], units: &[SentencePair]) -> Vec<SentencePair> {
    corpus
        .iter()
        .chain(units)
        .enumerate()
        .map(|(line_id, pair)| SentencePair::new(pair.source.clone(), pair.target.clone(), line_id))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(spec: &str) -> Vec<String> {
        spec.split_whitespace().map(str::to_string).collect()
    }

    fn identity_pair(words: &[&str]) -> (SentencePair, AlignmentMatrix) {
        let tokens: Vec<String> = words.iter().map(|s| s.to_string()).collect();
        let links: Vec<(usize, usize)> = (0..tokens.len()).map(|i| (i, i)).collect();
        let align = AlignmentMatrix::from_links(&links, tokens.len(), tokens.len()).unwrap();
        (SentencePair::new(tokens.clone(), tokens, 0), align)
    }

    #[test]
    fn comma_splits_sixteen_tokens_into_two_halves_plus_full_span() {
        // 16 tokens, comma at position 8 on both sides, identity alignment.
        let words = ["w0", "w1", "w2", "w3", "w4", "w5", "w6", "w7", ",", "w9", "w10", "w11",
            "w12", "w13", "w14", "w15"];
        let (pair, align) = identity_pair(&words);
        let units = extract_subsentence_units(&pair, &align, &ExtractConfig::default()).unwrap();
        let spans: Vec<(usize, &str)> = units
            .iter()
            .map(|u| (u.source.len(), u.source.first().unwrap().as_str()))
            .collect();
        assert_eq!(units.len(), 3, "got spans {spans:?}");
        assert_eq!(units[0].source, toks("w0 w1 w2 w3 w4 w5 w6 w7"));
        assert_eq!(units[1].source, &words.map(String::from)[..]);
        assert_eq!(units[2].source, toks(", w9 w10 w11 w12 w13 w14 w15"));
    }

    #[test]
    fn short_pair_yields_nothing() {
        let (pair, align) = identity_pair(&["a", "b", "c"]);
        let units = extract_subsentence_units(&pair, &align, &ExtractConfig::default()).unwrap();
        assert!(units.is_empty());
    }

    #[test]
    fn fully_unaligned_pair_yields_nothing() {
        let tokens = toks("a b c d e f g h i j");
        let pair = SentencePair::new(tokens.clone(), tokens.clone(), 0);
        let align = AlignmentMatrix::zeros(tokens.len(), tokens.len());
        let units = extract_subsentence_units(&pair, &align, &ExtractConfig::default()).unwrap();
        assert!(units.is_empty());
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let (pair, _) = identity_pair(&["a", "b"]);
        let align = AlignmentMatrix::zeros(3, 2);
        assert!(extract_subsentence_units(&pair, &align, &ExtractConfig::default()).is_err());
    }

    #[test]
    fn merge_concatenates_in_order() {
        let originals = vec![
            SentencePair::new(toks("a"), toks("x"), 0),
            SentencePair::new(toks("b"), toks("y"), 1),
            SentencePair::new(toks("c"), toks("z"), 2),
        ];
        let units = vec![
            SentencePair::new(toks("u"), toks("v"), 0),
            SentencePair::new(toks("p"), toks("q"), 1),
        ];
        let merged = bootstrap_merge(&originals, &units);
        assert_eq!(merged.len(), 5);
        assert_eq!(merged[0].source, toks("a"));
        assert_eq!(merged[3].source, toks("u"));
        let ids: Vec<usize> = merged.iter().map(|p| p.line_id).collect();
        assert_eq!(ids, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn merge_with_no_units_is_identity_on_content() {
        let originals = vec![SentencePair::new(toks("a b"), toks("x y"), 0)];
        let merged = bootstrap_merge(&originals, &[]);
        assert_eq!(merged, originals);
    }
}
