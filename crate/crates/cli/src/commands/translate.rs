//! Beam-search translation and topic-embedding export.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::Args;
use ganmt_core::data::{read_topics_file, read_token_lines, Sidecar, Vocabulary};
use ganmt_core::decoding::{
    beam_search, copy_oov, default_max_len, hard_alignment, restore_placeholders,
    topic_distance_matrix, EnsembleSet,
};
use ganmt_core::error::{Error, Result};
use ganmt_core::training::Checkpoint;

#[derive(Args)]
pub struct TranslateArgs {
    /// Checkpoint(s); several paths form an ensemble.
    #[arg(long = "checkpoint", visible_alias = "ensemble", required = true)]
    checkpoints: Vec<PathBuf>,
    /// Preprocessed source token file.
    #[arg(long)]
    src: PathBuf,
    /// Vocabulary files matching the checkpoints.
    #[arg(long)]
    src_vocab: PathBuf,
    #[arg(long)]
    tgt_vocab: PathBuf,
    /// Translation output, one sentence per line.
    #[arg(long)]
    output: PathBuf,
    /// Placeholder sidecar produced by `preprocess`; enables restoration.
    #[arg(long)]
    sidecar: Option<PathBuf>,
    /// Topic file (required for topic-aware checkpoints).
    #[arg(long)]
    topics: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    beam: usize,
    /// Optional JSON-lines dump with attention and hard alignments.
    #[arg(long)]
    json: Option<PathBuf>,
}

fn check_vocab(expected: &str, vocab: &Vocabulary) -> Result<()> {
    let actual = vocab.content_hash();
    if expected != actual {
        return Err(Error::VocabMismatch { expected: expected.to_string(), actual });
    }
    Ok(())
}

pub fn translate(args: TranslateArgs) -> Result<()> {
    let src_vocab = Vocabulary::read_file(&args.src_vocab)?;
    let tgt_vocab = Vocabulary::read_file(&args.tgt_vocab)?;

    let mut models = Vec::with_capacity(args.checkpoints.len());
    for path in &args.checkpoints {
        let ckpt = Checkpoint::read(path)?;
        check_vocab(&ckpt.src_vocab_hash, &src_vocab)?;
        check_vocab(&ckpt.tgt_vocab_hash, &tgt_vocab)?;
        models.push(ckpt.model()?);
    }
    let use_topic = models[0].config.use_topic;
    let topic_dim = models[0].config.topic_dim;
    if models.iter().any(|m| m.config.use_topic != use_topic || m.config.topic_dim != topic_dim) {
        return Err(Error::usage("ensemble members disagree on topic configuration"));
    }
    let ensemble = EnsembleSet::new(models)?;

    let lines = read_token_lines(&args.src)?;
    let sidecar = match &args.sidecar {
        Some(path) => Some(Sidecar::read_file(path)?),
        None => None,
    };
    let topics = match (&args.topics, use_topic) {
        (Some(path), true) => Some(read_topics_file(path, topic_dim)?),
        (None, true) => {
            return Err(Error::usage("these checkpoints are topic-aware; pass --topics"))
        }
        (Some(_), false) => {
            return Err(Error::usage("--topics given but the checkpoints ignore topics"))
        }
        (None, false) => None,
    };
    if let Some(t) = &topics {
        if t.len() != lines.len() {
            return Err(Error::LineCountMismatch(format!(
                "{} source lines but {} topic lines",
                lines.len(),
                t.len()
            )));
        }
    }

    use rayon::prelude::*;
    struct LineOut {
        text: String,
        json: Option<String>,
    }
    let want_json = args.json.is_some();
    let outputs: Vec<LineOut> = lines
        .par_iter()
        .enumerate()
        .map(|(no, tokens)| -> Result<LineOut> {
            if tokens.is_empty() {
                let json = want_json.then(|| {
                    serde_json::json!({
                        "line": no,
                        "tokens": [],
                        "log_prob": 0.0,
                        "attention": [],
                        "hard_alignment": "",
                    })
                    .to_string()
                });
                return Ok(LineOut { text: String::new(), json });
            }
            let ids = src_vocab.ids_with_eos(tokens);
            let topic = topics.as_ref().map(|t| &t[no]);
            let mut hyp =
                beam_search(&ensemble, &ids, topic, args.beam, default_max_len(ids.len()))?;
            let empty = Vec::new();
            let items = sidecar.as_ref().map(|s| s.entry(no)).unwrap_or(&empty);
            let restored = restore_placeholders(&mut hyp, &tgt_vocab, items, tokens);
            let final_tokens = copy_oov(&mut hyp, restored, tokens);
            let json = want_json.then(|| {
                let links: Vec<String> = hard_alignment(&hyp.attention)
                    .into_iter()
                    .map(|(t, i)| format!("{i}-{t}"))
                    .collect();
                serde_json::json!({
                    "line": no,
                    "tokens": final_tokens,
                    "log_prob": hyp.log_prob,
                    "attention": hyp.attention.rows(),
                    "hard_alignment": links.join(" "),
                })
                .to_string()
            });
            Ok(LineOut { text: final_tokens.join(" "), json })
        })
        .collect::<Result<_>>()?;

    let mut out = BufWriter::new(File::create(&args.output)?);
    for line in &outputs {
        writeln!(out, "{}", line.text)?;
    }
    out.flush()?;
    if let Some(path) = &args.json {
        let mut jout = BufWriter::new(File::create(path)?);
        for line in &outputs {
            writeln!(jout, "{}", line.json.as_deref().unwrap_or("{}"))?;
        }
        jout.flush()?;
    }
    Ok(())
}

#[derive(Args)]
pub struct TopicdistArgs {
    /// Topic-aware checkpoint.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Output TSV: a label header row, then the D x D distance matrix.
    #[arg(long)]
    output: PathBuf,
    /// Topic label file, one label per line (defaults to t0..tD-1).
    #[arg(long)]
    labels: Option<PathBuf>,
}

pub fn topicdist(args: TopicdistArgs) -> Result<()> {
    let ckpt = Checkpoint::read(&args.checkpoint)?;
    let model = ckpt.model()?;
    if !model.config.use_topic {
        return Err(Error::usage("checkpoint has no topic embeddings"));
    }
    let d = model.config.topic_dim;
    let embeddings: Vec<Vec<f64>> = (0..d)
        .map(|k| {
            let column = model.topic_embedding(k)?;
            Ok(column.data().iter().map(|&v| v as f64).collect())
        })
        .collect::<Result<_>>()?;
    let distances = topic_distance_matrix(&embeddings)?;

    let labels: Vec<String> = match &args.labels {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::usage(format!("cannot read {}: {e}", path.display())))?;
            let labels: Vec<String> = text.lines().map(str::to_string).collect();
            if labels.len() != d {
                return Err(Error::usage(format!(
                    "{} labels for {d} topics",
                    labels.len()
                )));
            }
            labels
        }
        None => (0..d).map(|k| format!("t{k}")).collect(),
    };

    let mut out = BufWriter::new(File::create(&args.output)?);
    writeln!(out, "{}", labels.join("\t"))?;
    for row in &distances {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
        writeln!(out, "{}", cells.join("\t"))?;
    }
    out.flush()?;
    Ok(())
}
