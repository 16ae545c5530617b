//! Tokenization, lowercasing and placeholder substitution.
//!
//! Placeholder rules run on the raw line first (so multi-character matches
//! like `.35XX` survive tokenization), then punctuation is split into
//! standalone tokens and everything is lowercased. The sidecar keeps the
//! original matched text so decode-time restoration can reinsert it.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::vocab::PLACEHOLDER_CLASSES;
use crate::error::{Error, Result};

/// Characters split into standalone tokens, and the sub-sentence boundary
/// set. Matches: period, comma, semicolon, colon, dash (both kinds),
/// exclamation and question marks, parentheses, double and single quote.
pub const DEFAULT_PUNCTUATION: [char; 12] =
    ['.', ',', ';', ':', '—', '-', '!', '?', '(', ')', '"', '\''];

/// Whitespace tokenization with punctuation characters split off as their
/// own tokens. Case is preserved; callers lowercase where required.
pub fn tokenize(text: &str, punctuation: &[char]) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        if ch.is_whitespace() {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
        } else if punctuation.contains(&ch) {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
            tokens.push(ch.to_string());
        } else {
            current.push(ch);
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// One placeholder occurrence: class token, dense per-class occurrence
/// index within the line, and the original text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SidecarItem {
    pub class: String,
    pub idx: usize,
    pub text: String,
}

/// Sidecar record for one corpus line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SidecarLine {
    pub line: usize,
    pub ph: Vec<SidecarItem>,
}

/// Whole-corpus sidecar, one record per line, stored as JSON lines.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Sidecar {
    pub lines: Vec<SidecarLine>,
}

impl Sidecar {
    pub fn write_file(&self, path: &Path) -> Result<()> {
        let mut out = fs::File::create(path)?;
        for line in &self.lines {
            serde_json::to_writer(&mut out, line)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        let file = fs::File::open(path)
            .map_err(|e| Error::usage(format!("cannot open sidecar {}: {e}", path.display())))?;
        let mut lines = Vec::new();
        for (no, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: SidecarLine = serde_json::from_str(&line)
                .map_err(|e| Error::format(no, format!("bad sidecar record: {e}")))?;
            lines.push(parsed);
        }
        Ok(Sidecar { lines })
    }

    pub fn entry(&self, line_id: usize) -> &[SidecarItem] {
        self.lines
            .iter()
            .find(|l| l.line == line_id)
            .map(|l| l.ph.as_slice())
            .unwrap_or(&[])
    }
}

/// Ordered placeholder rules: regex pattern to class token.
///
/// Rule file format: one `$class <whitespace> pattern` per line, `#`
/// comments. Classes are limited to the fixed placeholder set.
#[derive(Debug, Clone)]
pub struct PlaceholderRules {
    rules: Vec<(String, Regex)>,
}

impl PlaceholderRules {
    pub fn empty() -> Self {
        PlaceholderRules { rules: Vec::new() }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut rules = Vec::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (class, pattern) = line
                .split_once(char::is_whitespace)
                .ok_or_else(|| Error::format(no, "expected `$class pattern`"))?;
            if !PLACEHOLDER_CLASSES.contains(&class) {
                return Err(Error::format(
                    no,
                    format!("unknown placeholder class `{class}`, expected one of {PLACEHOLDER_CLASSES:?}"),
                ));
            }
            let regex = Regex::new(pattern.trim())
                .map_err(|e| Error::format(no, format!("bad pattern: {e}")))?;
            rules.push((class.to_string(), regex));
        }
        Ok(PlaceholderRules { rules })
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::usage(format!("cannot read rules {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Earliest match at or after `from` across all rules. Ties prefer the
    /// longest match, then rule order.
    fn next_match(&self, text: &str, from: usize) -> Option<(usize, usize, &str)> {
        let mut best: Option<(usize, usize, &str)> = None;
        for (class, regex) in &self.rules {
            if let Some(m) = regex.find_at(text, from) {
                let better = match best {
                    None => true,
                    Some((s, e, _)) => m.start() < s || (m.start() == s && m.end() > e),
                };
                if better {
                    best = Some((m.start(), m.end(), class));
                }
            }
        }
        best
    }
}

/// Applies placeholder rules to a raw line, then tokenizes and lowercases.
///
/// Returns the token list and the sidecar items (original text, in match
/// order, with dense per-class occurrence indices).
pub fn preprocess(raw_line: &str, rules: &PlaceholderRules) -> (Vec<String>, Vec<SidecarItem>) {
    let mut substituted = String::with_capacity(raw_line.len());
    let mut items: Vec<SidecarItem> = Vec::new();
    let mut pos = 0;
    while let Some((start, end, class)) = rules.next_match(raw_line, pos) {
        if end == start {
            // Never loop on empty matches.
            break;
        }
        substituted.push_str(&raw_line[pos..start]);
        substituted.push(' ');
        substituted.push_str(class);
        substituted.push(' ');
        let idx = items.iter().filter(|it| it.class == class).count();
        items.push(SidecarItem { class: class.to_string(), idx, text: raw_line[start..end].to_string() });
        pos = end;
    }
    substituted.push_str(&raw_line[pos..]);

    let tokens = tokenize(&substituted.to_lowercase(), &DEFAULT_PUNCTUATION);
    (tokens, items)
}

/// Splices original placeholder text back into a preprocessed token list.
///
/// Each class token is replaced by the tokenization of the original text for
/// the next occurrence of that class. Occurrences beyond the sidecar keep
/// the class token. Restored text keeps its original case.
pub fn restore_source(tokens: &[String], items: &[SidecarItem]) -> Vec<String> {
    let mut seen: std::collections::HashMap<&str, usize> = std::collections::HashMap::new();
    let mut out = Vec::with_capacity(tokens.len());
    for token in tokens {
        if PLACEHOLDER_CLASSES.contains(&token.as_str()) {
            let idx = seen.entry(token.as_str()).or_insert(0);
            let found = items.iter().find(|it| it.class == *token && it.idx == *idx);
            *idx += 1;
            match found {
                Some(item) => out.extend(tokenize(&item.text, &DEFAULT_PUNCTUATION)),
                None => out.push(token.clone()),
            }
        } else {
            out.push(token.clone());
        }
    }
    out
}
