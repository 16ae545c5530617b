//! IBM Model 1 expectation maximization and Viterbi link extraction.
//!
//! A desk-scale stand-in for an external statistical aligner: plain Model 1
//! over `t(f|e)` with a null source token. Count accumulation walks pairs in
//! corpus order and the t-table lives in ordered maps, so runs are exactly
//! reproducible.

use std::collections::HashMap;
use std::collections::BTreeMap;

use super::SentencePair;
use crate::error::{Error, Result};

const NULL_ID: u32 = 0;

/// Trained Model 1 translation table.
#[derive(Debug, Clone)]
pub struct Ibm1Model {
    src_ids: HashMap<String, u32>,
    tgt_ids: HashMap<String, u32>,
    /// `t[e][f]` = probability of target type `f` given source type `e`;
    /// index 0 is the null token.
    t: Vec<BTreeMap<u32, f64>>,
}

impl Ibm1Model {
    fn src_id(&self, token: &str) -> Option<u32> {
        self.src_ids.get(token).copied()
    }

    fn tgt_id(&self, token: &str) -> Option<u32> {
        self.tgt_ids.get(token).copied()
    }

    /// `t(f|e)`; zero for pairs outside the co-occurrence support. The null
    /// source token is spelled `()`; pass `None` as the source.
    pub fn translation_prob(&self, source: Option<&str>, target: &str) -> f64 {
        let e = match source {
            Some(token) => match self.src_id(token) {
                Some(id) => id,
                None => return 0.0,
            },
            None => NULL_ID,
        };
        let f = match self.tgt_id(target) {
            Some(id) => id,
            None => return 0.0,
        };
        self.t[e as usize].get(&f).copied().unwrap_or(0.0)
    }

    /// Per source type, the total probability mass of its row.
    pub fn source_row_sums(&self) -> Vec<f64> {
        self.t.iter().map(|row| row.values().sum()).collect()
    }

    /// Viterbi links for one pair: per target word, the leftmost argmax
    /// source word. The null token wins only on a strictly higher
    /// probability and produces no link.
    pub fn viterbi_line(&self, pair: &SentencePair) -> String {
        let mut out: Vec<String> = Vec::new();
        for (j, f_tok) in pair.target.iter().enumerate() {
            let mut best_i: Option<usize> = None;
            let mut best_p = f64::NEG_INFINITY;
            for (i, e_tok) in pair.source.iter().enumerate() {
                let p = self.translation_prob(Some(e_tok), f_tok);
                if p > best_p {
                    best_p = p;
                    best_i = Some(i);
                }
            }
            let null_p = self.translation_prob(None, f_tok);
            if null_p > best_p {
                continue;
            }
            if let Some(i) = best_i {
                out.push(format!("{i}-{j}"));
            }
        }
        out.join(" ")
    }
}

/// Runs `iterations` rounds of EM over the corpus.
pub fn train_ibm1(pairs: &[SentencePair], iterations: usize) -> Result<Ibm1Model> {
    if pairs.is_empty() {
        return Err(Error::usage("cannot align an empty corpus"));
    }
    if iterations == 0 {
        return Err(Error::usage("ibm1 needs at least one EM iteration"));
    }

    // Type indices in first-occurrence order; source id 0 is the null token.
    let mut src_ids: HashMap<String, u32> = HashMap::new();
    let mut tgt_ids: HashMap<String, u32> = HashMap::new();
    let mut pair_ids: Vec<(Vec<u32>, Vec<u32>)> = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let mut src = Vec::with_capacity(pair.source.len());
        for token in &pair.source {
            let next = src_ids.len() as u32 + 1;
            src.push(*src_ids.entry(token.clone()).or_insert(next));
        }
        let mut tgt = Vec::with_capacity(pair.target.len());
        for token in &pair.target {
            let next = tgt_ids.len() as u32;
            tgt.push(*tgt_ids.entry(token.clone()).or_insert(next));
        }
        pair_ids.push((src, tgt));
    }
    let n_src = src_ids.len() + 1;
    let n_tgt = tgt_ids.len().max(1);

    // Uniform initialization over the co-occurrence support (plus null).
    let uniform = 1.0 / n_tgt as f64;
    let mut t: Vec<BTreeMap<u32, f64>> = vec![BTreeMap::new(); n_src];
    for (src, tgt) in &pair_ids {
        for &f in tgt {
            t[NULL_ID as usize].entry(f).or_insert(uniform);
            for &e in src {
                t[e as usize].entry(f).or_insert(uniform);
            }
        }
    }

    for _ in 0..iterations {
        let mut counts: Vec<BTreeMap<u32, f64>> = vec![BTreeMap::new(); n_src];
        for (src, tgt) in &pair_ids {
            for &f in tgt {
                let mut denom = t[NULL_ID as usize][&f];
                for &e in src {
                    denom += t[e as usize][&f];
                }
                let share = |e: u32| t[e as usize][&f] / denom;
                *counts[NULL_ID as usize].entry(f).or_insert(0.0) += share(NULL_ID);
                for &e in src {
                    *counts[e as usize].entry(f).or_insert(0.0) += share(e);
                }
            }
        }
        for (row, count_row) in t.iter_mut().zip(&counts) {
            let total: f64 = count_row.values().sum();
            if total > 0.0 {
                *row = count_row.iter().map(|(&f, &c)| (f, c / total)).collect();
            }
        }
    }

    Ok(Ibm1Model { src_ids, tgt_ids, t })
}

/// Trains Model 1 and emits one pharaoh line per input pair.
pub fn ibm1_align(pairs: &[SentencePair], iterations: usize) -> Result<Vec<String>> {
    let model = train_ibm1(pairs, iterations)?;
    Ok(pairs.iter().map(|pair| model.viterbi_line(pair)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(src: &str, tgt: &str, line_id: usize) -> SentencePair {
        SentencePair::new(
            src.split_whitespace().map(str::to_string).collect(),
            tgt.split_whitespace().map(str::to_string).collect(),
            line_id,
        )
    }

    #[test]
    fn identical_single_token_pair_aligns_directly() {
        let lines = ibm1_align(&[pair("a", "x", 0)], 3).unwrap();
        assert_eq!(lines, vec!["0-0"]);
    }

    #[test]
    fn second_pair_disambiguates_the_first() {
        // a co-occurs with x twice, so t(x|a) dominates and y falls to b.
        let corpus = vec![pair("a b", "x y", 0), pair("a", "x", 1)];
        let lines = ibm1_align(&corpus, 5).unwrap();
        assert_eq!(lines[0], "0-0 1-1");
        assert_eq!(lines[1], "0-0");
    }

    #[test]
    fn one_em_step_matches_cooccurrence_oracle() {
        // With uniform initialization, the first E-step spreads each target
        // token evenly over its co-occurring source tokens (plus null), so
        // after one M-step t(f|e) is proportional to those fractional
        // co-occurrence counts. Oracle computed by replaying that rule.
        let corpus = vec![pair("a b", "x", 0), pair("a", "x y", 1)];
        let model = train_ibm1(&corpus, 1).unwrap();

        // counts(x|a): pair 0 has candidates {null, a, b} -> 1/3; pair 1 has
        // {null, a} -> 1/2. counts(y|a) = 1/2.
        let count_x_a = 1.0 / 3.0 + 1.0 / 2.0;
        let count_y_a = 1.0 / 2.0;
        let expected_x_a = count_x_a / (count_x_a + count_y_a);
        let expected_y_a = count_y_a / (count_x_a + count_y_a);
        assert!((model.translation_prob(Some("a"), "x") - expected_x_a).abs() < 1e-12);
        assert!((model.translation_prob(Some("a"), "y") - expected_y_a).abs() < 1e-12);

        // counts(x|b) = 1/3 and b has no other mass.
        assert!((model.translation_prob(Some("b"), "x") - 1.0).abs() < 1e-12);
    }

    #[test]
    fn source_rows_stay_normalized_after_each_iteration() {
        let corpus = vec![
            pair("a b c", "x y", 0),
            pair("b c", "y z", 1),
            pair("a", "x", 2),
        ];
        for iterations in 1..=6 {
            let model = train_ibm1(&corpus, iterations).unwrap();
            for (e, sum) in model.source_row_sums().iter().enumerate() {
                assert!((sum - 1.0).abs() < 1e-6, "iteration {iterations}, row {e}: {sum}");
            }
        }
    }

    #[test]
    fn empty_corpus_is_rejected() {
        assert!(ibm1_align(&[], 3).is_err());
    }

    #[test]
    fn alignment_is_deterministic() {
        let corpus = vec![pair("a b c", "z y x", 0), pair("c b", "x y", 1)];
        let first = ibm1_align(&corpus, 7).unwrap();
        let second = ibm1_align(&corpus, 7).unwrap();
        assert_eq!(first, second);
    }
}
