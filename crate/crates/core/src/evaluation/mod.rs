//! Case-insensitive corpus BLEU and TER against single references.

mod bleu;
mod ter;

pub use bleu::{bleu, BleuScore};
pub use ter::{levenshtein_tokens, ter, ter_sentence_edits, TerScore};

use serde::Serialize;

use crate::error::{Error, Result};

/// Combined evaluation report.
#[derive(Debug, Clone, Serialize)]
pub struct ScoreReport {
    pub bleu: BleuScore,
    pub ter: TerScore,
}

impl ScoreReport {
    /// Model-selection functional: BLEU + (1 - TER).
    pub fn selection_score(&self) -> f64 {
        self.bleu.bleu + (1.0 - self.ter.ter)
    }
}

/// Scores a hypothesis corpus with both metrics.
pub fn score(hypotheses: &[Vec<String>], references: &[Vec<String>]) -> Result<ScoreReport> {
    Ok(ScoreReport { bleu: bleu(hypotheses, references)?, ter: ter(hypotheses, references)? })
}

fn validate_corpus(hypotheses: &[Vec<String>], references: &[Vec<String>]) -> Result<()> {
    if hypotheses.is_empty() {
        return Err(Error::usage("cannot score an empty corpus"));
    }
    if hypotheses.len() != references.len() {
        return Err(Error::LineCountMismatch(format!(
            "{} hypotheses vs {} references",
            hypotheses.len(),
            references.len()
        )));
    }
    Ok(())
}

fn lowercase_corpus(corpus: &[Vec<String>]) -> Vec<Vec<String>> {
    corpus
        .iter()
        .map(|line| line.iter().map(|t| t.to_lowercase()).collect())
        .collect()
}
