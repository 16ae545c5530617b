//! Attention-driven placeholder restoration and OOV copy-through.

use crate::data::{SidecarItem, Vocabulary, PLACEHOLDER_CLASSES, UNK_TOKEN};

use super::BeamHypothesis;

/// Source-side placeholder slot: class, per-class occurrence index, source
/// position.
#[derive(Debug)]
struct Slot<'a> {
    class: &'a str,
    occurrence: usize,
    position: usize,
    used: bool,
}

fn source_slots(src_tokens: &[String]) -> Vec<Slot<'_>> {
    let mut counters: std::collections::HashMap<&str, usize> = std::collections::HashMap::new();
    let mut slots = Vec::new();
    for (position, token) in src_tokens.iter().enumerate() {
        if PLACEHOLDER_CLASSES.contains(&token.as_str()) {
            let counter = counters.entry(token.as_str()).or_insert(0);
            slots.push(Slot { class: token, occurrence: *counter, position, used: false });
            *counter += 1;
        }
    }
    slots
}

/// Argmax of an attention row, ties to the smallest source position.
fn attention_argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &w) in row.iter().enumerate() {
        if w > row[best] {
            best = i;
        }
    }
    best
}

/// Replaces emitted placeholder class tokens with the original source-side
/// content, using each source slot at most once.
///
/// Resolution per emitted placeholder: the attention-argmax source position
/// if it holds an unused slot of the same class; otherwise the nearest
/// unused same-class slot by source position (ties to the left); otherwise
/// the class token stays. Returns the restored token sequence and records
/// the consumed `(class, occurrence)` slots on the hypothesis.
pub fn restore_placeholders(
    hyp: &mut BeamHypothesis,
    vocab: &Vocabulary,
    sidecar: &[SidecarItem],
    src_tokens: &[String],
) -> Vec<String> {
    let mut slots = source_slots(src_tokens);
    let mut out = Vec::with_capacity(hyp.tokens.len());
    for (t, &id) in hyp.tokens.iter().enumerate() {
        let token = vocab.token(id);
        if !PLACEHOLDER_CLASSES.contains(&token) {
            out.push(token.to_string());
            continue;
        }
        let focus = attention_argmax(hyp.attention.row(t));
        let direct = slots
            .iter()
            .position(|s| !s.used && s.class == token && s.position == focus);
        let chosen = direct.or_else(|| {
            slots
                .iter()
                .enumerate()
                .filter(|(_, s)| !s.used && s.class == token)
                .min_by_key(|(_, s)| (s.position.abs_diff(focus), s.position))
                .map(|(i, _)| i)
        });
        match chosen {
            Some(i) => {
                slots[i].used = true;
                let (class, occurrence) = (slots[i].class, slots[i].occurrence);
                hyp.used_placeholder_slots.insert((class.to_string(), occurrence));
                match sidecar.iter().find(|it| it.class == class && it.idx == occurrence) {
                    Some(item) => out.push(item.text.clone()),
                    None => out.push(token.to_string()),
                }
            }
            None => out.push(token.to_string()),
        }
    }
    out
}

/// Replaces each emitted `<unk>` with the source token at its attention
/// argmax. Runs on the already placeholder-restored token sequence.
pub fn copy_oov(
    hyp: &mut BeamHypothesis,
    tokens: Vec<String>,
    src_tokens: &[String],
) -> Vec<String> {
    tokens
        .into_iter()
        .enumerate()
        .map(|(t, token)| {
            if token == UNK_TOKEN {
                let focus = attention_argmax(hyp.attention.row(t));
                hyp.copied_source_positions.push(focus);
                src_tokens[focus].clone()
            } else {
                token
            }
        })
        .collect()
}
