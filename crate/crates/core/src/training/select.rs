//! Checkpoint selection by BLEU + (1 - TER) on a development set.

use crate::data::SentencePair;
use crate::error::{Error, Result};

use super::Checkpoint;

/// Picks the checkpoint maximizing `BLEU + (1 - TER)` on the dev set; ties
/// go to the earliest checkpoint. The scorer decodes and evaluates, so this
/// function stays independent of any particular decoder.
pub fn select_model<'a, S>(
    checkpoints: &'a [Checkpoint],
    dev: &[SentencePair],
    mut score: S,
) -> Result<&'a Checkpoint>
where
    S: FnMut(&Checkpoint, &[SentencePair]) -> Result<(f64, f64)>,
{
    if checkpoints.is_empty() {
        return Err(Error::usage("no checkpoints to select from"));
    }
    if dev.is_empty() {
        return Err(Error::usage("empty development set"));
    }
    let mut best: Option<(usize, f64)> = None;
    for (i, ckpt) in checkpoints.iter().enumerate() {
        let (bleu, ter) = score(ckpt, dev)?;
        let value = bleu + (1.0 - ter);
        if best.map_or(true, |(_, b)| value > b) {
            best = Some((i, value));
        }
    }
    Ok(&checkpoints[best.expect("nonempty checkpoints").0])
}
