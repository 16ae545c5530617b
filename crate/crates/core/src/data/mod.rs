//! Corpus preprocessing, vocabularies, alignments and bootstrapping.

mod alignment;
mod ibm1;
mod preprocess;
mod subsentence;
mod topics;
mod vocab;

pub use alignment::{ingest_alignment, parse_pharaoh, AlignmentMatrix};
pub use ibm1::{ibm1_align, train_ibm1, Ibm1Model};
pub use preprocess::{
    preprocess, restore_source, tokenize, PlaceholderRules, Sidecar, SidecarItem, SidecarLine,
    DEFAULT_PUNCTUATION,
};
pub use subsentence::{bootstrap_merge, extract_subsentence_units, ExtractConfig};
pub use topics::{read_topics_file, TopicVector};
pub use vocab::{
    build_vocab, Vocabulary, EOS_ID, EOS_TOKEN, PLACEHOLDER_CLASSES, RESERVED_TOKENS, UNK_ID,
    UNK_TOKEN,
};

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{Error, Result};

/// One preprocessed sentence pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentencePair {
    pub source: Vec<String>,
    pub target: Vec<String>,
    pub line_id: usize,
}

impl SentencePair {
    pub fn new(source: Vec<String>, target: Vec<String>, line_id: usize) -> Self {
        SentencePair { source, target, line_id }
    }
}

/// Reads a token file: one sentence per line, whitespace-separated tokens.
pub fn read_token_lines(path: &Path) -> Result<Vec<Vec<String>>> {
    let file = File::open(path)
        .map_err(|e| Error::usage(format!("cannot open {}: {e}", path.display())))?;
    let mut lines = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        lines.push(line.split_whitespace().map(str::to_string).collect());
    }
    Ok(lines)
}

/// Zips two parallel token files into sentence pairs.
///
/// Pairs that are empty on either side are kept out of the result only by
/// callers that require it; line ids always refer to the original files.
pub fn pair_corpus(source: Vec<Vec<String>>, target: Vec<Vec<String>>) -> Result<Vec<SentencePair>> {
    if source.len() != target.len() {
        return Err(Error::LineCountMismatch(format!(
            "source has {} lines, target has {} lines (first missing line {})",
            source.len(),
            target.len(),
            source.len().min(target.len())
        )));
    }
    Ok(source
        .into_iter()
        .zip(target)
        .enumerate()
        .map(|(line_id, (source, target))| SentencePair { source, target, line_id })
        .collect())
}
