//! Training and domain adaptation.

use std::path::{Path, PathBuf};

use clap::Args;
use ganmt_core::data::{
    build_vocab, ingest_alignment, pair_corpus, read_token_lines, read_topics_file, SentencePair,
    TopicVector, Vocabulary,
};
use ganmt_core::decoding::{beam_search, default_max_len, EnsembleSet};
use ganmt_core::error::{Error, Result};
use ganmt_core::evaluation::score;
use ganmt_core::model::ModelConfig;
use ganmt_core::training::{
    adapt_parameters, fresh_checkpoint, select_model, train as run_train, Checkpoint,
    CheckpointSink, DirSink, OptimizerState, TrainConfig, TrainLogEntry, TrainSet,
};

use crate::config::RunConfig;

#[derive(Args)]
pub struct TrainArgs {
    /// Run configuration file (`key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a configuration key (repeatable), e.g. --set train.seed=3.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Resume from an existing checkpoint.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Args)]
pub struct AdaptArgs {
    /// Run configuration for the in-domain continuation.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Out-of-domain checkpoint to start from.
    #[arg(long)]
    base: PathBuf,
    /// Vocabulary files the base checkpoint was trained with.
    #[arg(long)]
    base_src_vocab: PathBuf,
    #[arg(long)]
    base_tgt_vocab: PathBuf,
}

/// Echoes every checkpoint log line to stderr on top of the directory sink.
struct EchoSink {
    inner: DirSink,
}

impl CheckpointSink for EchoSink {
    fn emit(&mut self, checkpoint: &Checkpoint, log: &TrainLogEntry) -> Result<()> {
        self.inner.emit(checkpoint, log)?;
        eprintln!("{}", serde_json::to_string(log)?);
        Ok(())
    }
}

struct LoadedData {
    pairs: Vec<SentencePair>,
    set_src_vocab: Vocabulary,
    set_tgt_vocab: Vocabulary,
}

fn load_corpus(cfg: &RunConfig, model_cfg: &ModelConfig, out_dir: &Path) -> Result<LoadedData> {
    let src = read_token_lines(&cfg.require_path("data.src")?)?;
    let tgt = read_token_lines(&cfg.require_path("data.tgt")?)?;
    let pairs = pair_corpus(src, tgt)?;
    if pairs.is_empty() {
        return Err(Error::usage("training corpus is empty"));
    }
    let src_lines: Vec<&[String]> = pairs.iter().map(|p| p.source.as_slice()).collect();
    let tgt_lines: Vec<&[String]> = pairs.iter().map(|p| p.target.as_slice()).collect();
    let set_src_vocab = build_vocab(src_lines.into_iter(), model_cfg.src_vocab_size)?;
    let set_tgt_vocab = build_vocab(tgt_lines.into_iter(), model_cfg.tgt_vocab_size)?;
    std::fs::create_dir_all(out_dir)?;
    set_src_vocab.write_file(&out_dir.join("src.vocab"))?;
    set_tgt_vocab.write_file(&out_dir.join("tgt.vocab"))?;
    Ok(LoadedData { pairs, set_src_vocab, set_tgt_vocab })
}

fn load_alignments(cfg: &RunConfig, pairs: &[SentencePair]) -> Result<Option<Vec<ganmt_core::data::AlignmentMatrix>>> {
    let Some(path) = cfg.path_opt("data.align") else { return Ok(None) };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::usage(format!("cannot read {}: {e}", path.display())))?;
    let lines: Vec<&str> = text.lines().collect();
    if lines.len() != pairs.len() {
        return Err(Error::LineCountMismatch(format!(
            "{} pairs but {} alignment lines (first bad line {})",
            pairs.len(),
            lines.len(),
            pairs.len().min(lines.len())
        )));
    }
    let mut out = Vec::with_capacity(pairs.len());
    for (pair, line) in pairs.iter().zip(lines) {
        out.push(ingest_alignment(line, pair.target.len(), pair.source.len(), pair.line_id)?);
    }
    Ok(Some(out))
}

fn load_topics(cfg: &RunConfig, model_cfg: &ModelConfig, expected: usize) -> Result<Option<Vec<TopicVector>>> {
    let Some(path) = cfg.path_opt("data.topics") else { return Ok(None) };
    let topics = read_topics_file(&path, model_cfg.topic_dim)?;
    if topics.len() != expected {
        return Err(Error::LineCountMismatch(format!(
            "{expected} pairs but {} topic lines",
            topics.len()
        )));
    }
    Ok(Some(topics))
}

/// Decode the dev set and score it; used for checkpoint selection.
fn dev_scorer<'v>(
    src_vocab: &'v Vocabulary,
    tgt_vocab: &'v Vocabulary,
    topics: Option<&'v [TopicVector]>,
    beam: usize,
) -> impl FnMut(&Checkpoint, &[SentencePair]) -> Result<(f64, f64)> + 'v {
    move |ckpt, dev| {
        use rayon::prelude::*;
        let model = ckpt.model()?;
        let ensemble = EnsembleSet::new(vec![model])?;
        let hyps: Vec<Vec<String>> = dev
            .par_iter()
            .enumerate()
            .map(|(i, pair)| -> Result<Vec<String>> {
                let ids = src_vocab.ids_with_eos(&pair.source);
                let topic = topics.map(|t| &t[i]);
                let hyp = beam_search(&ensemble, &ids, topic, beam, default_max_len(ids.len()))?;
                Ok(hyp.tokens.iter().map(|&id| tgt_vocab.token(id).to_string()).collect())
            })
            .collect::<Result<_>>()?;
        let refs: Vec<Vec<String>> = dev.iter().map(|p| p.target.clone()).collect();
        let report = score(&hyps, &refs)?;
        Ok((report.bleu.bleu, report.ter.ter))
    }
}

fn finish_with_selection(
    cfg: &RunConfig,
    tcfg: &TrainConfig,
    out_dir: &Path,
    set: &TrainSet,
    start: Checkpoint,
    src_vocab: &Vocabulary,
    tgt_vocab: &Vocabulary,
) -> Result<()> {
    let use_topic = start.config.use_topic;
    let topic_dim = start.config.topic_dim;
    let mut sink = EchoSink { inner: DirSink::new(out_dir.to_path_buf(), cfg.keep_checkpoints()?)? };
    run_train(start, set, tcfg, &mut sink)?;

    let (Some(dev_src), Some(dev_tgt)) = (cfg.path_opt("data.dev_src"), cfg.path_opt("data.dev_tgt"))
    else {
        return Ok(());
    };
    let dev_pairs = pair_corpus(read_token_lines(&dev_src)?, read_token_lines(&dev_tgt)?)?;
    let dev_topics = match (use_topic, cfg.path_opt("data.dev_topics")) {
        (true, Some(path)) => Some(read_topics_file(&path, topic_dim)?),
        (true, None) => {
            return Err(Error::Config("topic-aware selection needs data.dev_topics".into()))
        }
        (false, _) => None,
    };
    let mut ckpt_files: Vec<PathBuf> = std::fs::read_dir(out_dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.file_name()
                .map(|n| n.to_string_lossy().starts_with("ckpt-"))
                .unwrap_or(false)
        })
        .collect();
    ckpt_files.sort();
    let checkpoints: Vec<Checkpoint> =
        ckpt_files.iter().map(|p| Checkpoint::read(p)).collect::<Result<_>>()?;
    let scorer = dev_scorer(src_vocab, tgt_vocab, dev_topics.as_deref(), cfg.beam()?);
    let best = select_model(&checkpoints, &dev_pairs, scorer)?;
    let best_path = out_dir.join("best.ckpt");
    best.write(&best_path)?;
    eprintln!(
        "selected epoch {} batch {} -> {}",
        best.meta.epoch,
        best.meta.batches_done,
        best_path.display()
    );
    Ok(())
}

pub fn train(args: TrainArgs) -> Result<()> {
    let cfg = RunConfig::load(args.config.as_deref(), &args.overrides)?;
    let mut model_cfg = cfg.model_config()?;
    let tcfg = cfg.train_config()?;
    eprintln!("seed = {}", tcfg.seed);
    let out_dir = cfg.require_path("out.dir")?;

    let data = load_corpus(&cfg, &model_cfg, &out_dir)?;
    model_cfg.src_vocab_size = data.set_src_vocab.len();
    model_cfg.tgt_vocab_size = data.set_tgt_vocab.len();

    let aligns = load_alignments(&cfg, &data.pairs)?;
    if tcfg.guided && aligns.is_none() {
        return Err(Error::Config("train.guided needs data.align".into()));
    }
    let topics = load_topics(&cfg, &model_cfg, data.pairs.len())?;
    if tcfg.topic && topics.is_none() {
        return Err(Error::Config("train.topic needs data.topics".into()));
    }
    let set = TrainSet::build(&data.pairs, aligns, topics, &data.set_src_vocab, &data.set_tgt_vocab)?;

    let start = match &args.resume {
        Some(path) => {
            let ckpt = Checkpoint::read(path)?;
            if ckpt.src_vocab_hash != set.src_vocab_hash {
                return Err(Error::VocabMismatch {
                    expected: ckpt.src_vocab_hash,
                    actual: set.src_vocab_hash,
                });
            }
            if ckpt.tgt_vocab_hash != set.tgt_vocab_hash {
                return Err(Error::VocabMismatch {
                    expected: ckpt.tgt_vocab_hash,
                    actual: set.tgt_vocab_hash,
                });
            }
            ckpt
        }
        None => fresh_checkpoint(
            &model_cfg,
            &tcfg,
            set.src_vocab_hash.clone(),
            set.tgt_vocab_hash.clone(),
        )?,
    };
    finish_with_selection(&cfg, &tcfg, &out_dir, &set, start, &data.set_src_vocab, &data.set_tgt_vocab)
}

pub fn adapt(args: AdaptArgs) -> Result<()> {
    let cfg = RunConfig::load(args.config.as_deref(), &args.overrides)?;
    let tcfg = cfg.train_config()?;
    eprintln!("seed = {}", tcfg.seed);
    let out_dir = cfg.require_path("out.dir")?;

    let base = Checkpoint::read(&args.base)?;
    let old_src = Vocabulary::read_file(&args.base_src_vocab)?;
    let old_tgt = Vocabulary::read_file(&args.base_tgt_vocab)?;
    if old_src.content_hash() != base.src_vocab_hash {
        return Err(Error::VocabMismatch {
            expected: base.src_vocab_hash,
            actual: old_src.content_hash(),
        });
    }
    if old_tgt.content_hash() != base.tgt_vocab_hash {
        return Err(Error::VocabMismatch {
            expected: base.tgt_vocab_hash,
            actual: old_tgt.content_hash(),
        });
    }

    // In-domain vocabularies are rebuilt from the in-domain corpus.
    let mut requested = cfg.model_config()?;
    let data = load_corpus(&cfg, &requested, &out_dir)?;
    requested.src_vocab_size = data.set_src_vocab.len();
    requested.tgt_vocab_size = data.set_tgt_vocab.len();

    let (params, adapted_cfg) = adapt_parameters(
        &base.params,
        &base.config,
        &requested,
        &old_src,
        &old_tgt,
        &data.set_src_vocab,
        &data.set_tgt_vocab,
        tcfg.seed,
    )?;

    let aligns = load_alignments(&cfg, &data.pairs)?;
    let topics = load_topics(&cfg, &adapted_cfg, data.pairs.len())?;
    let set = TrainSet::build(&data.pairs, aligns, topics, &data.set_src_vocab, &data.set_tgt_vocab)?;

    let opt = OptimizerState::new(&params, tcfg.adadelta_rho, tcfg.adadelta_epsilon);
    let start = Checkpoint {
        config: adapted_cfg,
        meta: ganmt_core::model::TrainingMeta {
            epoch: 0,
            batches_done: 0,
            w1: tcfg.weights.w1,
            seed: tcfg.seed,
        },
        src_vocab_hash: set.src_vocab_hash.clone(),
        tgt_vocab_hash: set.tgt_vocab_hash.clone(),
        params,
        opt,
    };
    finish_with_selection(&cfg, &tcfg, &out_dir, &set, start, &data.set_src_vocab, &data.set_tgt_vocab)
}
