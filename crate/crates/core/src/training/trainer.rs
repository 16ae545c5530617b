//! The training loop: seeded shuffling, batched gradients with an
//! order-fixed reduction, AdaDelta updates, the per-epoch alignment-weight
//! decay, and checkpoint emission.
//!
//! Reproducibility contract: checkpoint bytes are a pure function of
//! (seed, config, data, vocabulary hashes). Every epoch shuffles with an
//! RNG derived from (seed, epoch), so resuming from a checkpoint replays
//! the exact remaining batches of the interrupted run.

use std::collections::{BTreeMap, VecDeque};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::data::{AlignmentMatrix, SentencePair, TopicVector, Vocabulary};
use crate::error::{Error, Result};
use crate::model::{
    forward_graph, read_checkpoint, write_checkpoint, CheckpointHeader, Model, ModelConfig,
    ModelNodes, TrainingMeta, CHECKPOINT_FORMAT_VERSION,
};
use crate::tape::{Tape, Value};
use crate::tensor::ParameterStore;

use super::loss::pair_loss_graph;
use super::{OptimizerState, TrainConfig};

/// A checkpoint: parameters, optimizer state and counters. `meta.epoch` and
/// `meta.batches_done` describe the next batch to run.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub meta: TrainingMeta,
    pub src_vocab_hash: String,
    pub tgt_vocab_hash: String,
    pub params: ParameterStore,
    pub opt: OptimizerState,
}

impl Checkpoint {
    pub fn model(&self) -> Result<Model> {
        Model::new(self.config.clone(), self.params.clone())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let header = CheckpointHeader {
            format_version: CHECKPOINT_FORMAT_VERSION,
            config: self.config.clone(),
            src_vocab_hash: self.src_vocab_hash.clone(),
            tgt_vocab_hash: self.tgt_vocab_hash.clone(),
            meta: self.meta.clone(),
        };
        let mut tensors = self.params.clone();
        for (name, tensor) in self.opt.to_tensors(&self.params) {
            tensors.insert(name, tensor);
        }
        write_checkpoint(path, &header, &tensors)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let (header, tensors) = read_checkpoint(path)?;
        let mut params = ParameterStore::new();
        let mut opt_tensors = ParameterStore::new();
        for (name, tensor) in tensors.iter() {
            if name.starts_with("opt.") {
                opt_tensors.insert(name, tensor.clone());
            } else {
                params.insert(name, tensor.clone());
            }
        }
        let opt = OptimizerState::from_tensors(&params, &opt_tensors);
        Ok(Checkpoint {
            config: header.config,
            meta: header.meta,
            src_vocab_hash: header.src_vocab_hash,
            tgt_vocab_hash: header.tgt_vocab_hash,
            params,
            opt,
        })
    }
}

/// One line of the training log, emitted with every checkpoint. Costs are
/// means over the batches since the previous checkpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainLogEntry {
    pub epoch: usize,
    pub batch: usize,
    pub decoder_cost: f64,
    pub alignment_cost: f64,
    pub w1: f64,
    pub wall_time: f64,
}

/// Receives checkpoints as training progresses.
pub trait CheckpointSink {
    fn emit(&mut self, checkpoint: &Checkpoint, log: &TrainLogEntry) -> Result<()>;
}

/// Collects everything in memory (tests, model selection).
#[derive(Default)]
pub struct VecSink {
    pub checkpoints: Vec<Checkpoint>,
    pub log: Vec<TrainLogEntry>,
}

impl CheckpointSink for VecSink {
    fn emit(&mut self, checkpoint: &Checkpoint, log: &TrainLogEntry) -> Result<()> {
        self.checkpoints.push(checkpoint.clone());
        self.log.push(log.clone());
        Ok(())
    }
}

/// Writes `ckpt-EEEE-BBBBBB.bin` files, keeps the most recent `keep`, and
/// appends JSON lines to `train.log.jsonl`.
pub struct DirSink {
    dir: PathBuf,
    keep: usize,
    written: VecDeque<PathBuf>,
    pub last_path: Option<PathBuf>,
}

impl DirSink {
    pub fn new(dir: PathBuf, keep: usize) -> Result<Self> {
        std::fs::create_dir_all(&dir)?;
        Ok(DirSink { dir, keep, written: VecDeque::new(), last_path: None })
    }

    pub fn default_keep(dir: PathBuf) -> Result<Self> {
        // Around 30 consecutive checkpoints are retained.
        Self::new(dir, 30)
    }
}

impl CheckpointSink for DirSink {
    fn emit(&mut self, checkpoint: &Checkpoint, log: &TrainLogEntry) -> Result<()> {
        let name = format!("ckpt-{:04}-{:06}.bin", checkpoint.meta.epoch, checkpoint.meta.batches_done);
        let path = self.dir.join(name);
        checkpoint.write(&path)?;
        self.written.push_back(path.clone());
        self.last_path = Some(path);
        while self.written.len() > self.keep {
            let old = self.written.pop_front().unwrap();
            let _ = std::fs::remove_file(old);
        }
        let mut log_file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.dir.join("train.log.jsonl"))?;
        serde_json::to_writer(&mut log_file, log)?;
        log_file.write_all(b"\n")?;
        Ok(())
    }
}

/// Id-converted training data. All sequences carry the sentence-end id.
pub struct TrainSet {
    pub src_ids: Vec<Vec<u32>>,
    pub tgt_ids: Vec<Vec<u32>>,
    pub aligns: Option<Vec<AlignmentMatrix>>,
    pub topics: Option<Vec<TopicVector>>,
    pub src_vocab_hash: String,
    pub tgt_vocab_hash: String,
}

impl TrainSet {
    /// Validates lengths and dimensions up front so training never fails
    /// mid-epoch.
    pub fn build(
        pairs: &[SentencePair],
        aligns: Option<Vec<AlignmentMatrix>>,
        topics: Option<Vec<TopicVector>>,
        src_vocab: &Vocabulary,
        tgt_vocab: &Vocabulary,
    ) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::usage("training corpus is empty"));
        }
        if let Some(a) = &aligns {
            if a.len() != pairs.len() {
                return Err(Error::LineCountMismatch(format!(
                    "{} pairs but {} alignment lines",
                    pairs.len(),
                    a.len()
                )));
            }
            for (pair, m) in pairs.iter().zip(a) {
                if m.rows() != pair.target.len() || m.cols() != pair.source.len() {
                    return Err(Error::shape(format!(
                        "line {}: alignment {}x{} does not match pair {} target / {} source",
                        pair.line_id,
                        m.rows(),
                        m.cols(),
                        pair.target.len(),
                        pair.source.len()
                    )));
                }
            }
        }
        if let Some(t) = &topics {
            if t.len() != pairs.len() {
                return Err(Error::LineCountMismatch(format!(
                    "{} pairs but {} topic lines",
                    pairs.len(),
                    t.len()
                )));
            }
        }
        for pair in pairs {
            if pair.source.is_empty() || pair.target.is_empty() {
                return Err(Error::usage(format!(
                    "line {}: empty side after preprocessing",
                    pair.line_id
                )));
            }
        }
        Ok(TrainSet {
            src_ids: pairs.iter().map(|p| src_vocab.ids_with_eos(&p.source)).collect(),
            tgt_ids: pairs.iter().map(|p| tgt_vocab.ids_with_eos(&p.target)).collect(),
            aligns,
            topics,
            src_vocab_hash: src_vocab.content_hash(),
            tgt_vocab_hash: tgt_vocab.content_hash(),
        })
    }

    pub fn len(&self) -> usize {
        self.src_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src_ids.is_empty()
    }

    fn align(&self, i: usize) -> Option<&AlignmentMatrix> {
        self.aligns.as_ref().map(|a| &a[i])
    }

    fn topic(&self, i: usize) -> Option<&TopicVector> {
        self.topics.as_ref().map(|t| &t[i])
    }
}

fn epoch_rng(seed: u64, epoch: usize) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed ^ (epoch as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

struct BatchStats {
    decoder_cost: f64,
    alignment_cost: f64,
}

/// Gradients of the mean combined loss over one batch. Pairs run in
/// parallel; the reduction folds in batch order so results are bitwise
/// stable regardless of thread count.
fn batch_gradients(
    model: &Model,
    set: &TrainSet,
    batch: &[usize],
    weights: &super::LossWeights,
    guided: bool,
    topic: bool,
) -> Result<(BTreeMap<String, Value<f32>>, BatchStats)> {
    use rayon::prelude::*;

    let per_pair: Vec<Result<(BTreeMap<String, Value<f32>>, f64, f64)>> = batch
        .par_iter()
        .map(|&i| {
            let mut tape = Tape::<f32>::new();
            let tp = tape.load_store(&model.params);
            let nodes = ModelNodes::resolve(&tp, &model.config)?;
            let loss = pair_loss_graph(
                &mut tape,
                &nodes,
                &model.config,
                &set.src_ids[i],
                &set.tgt_ids[i],
                if guided { set.align(i) } else { None },
                if topic { set.topic(i) } else { None },
                weights,
            )?;
            let grads = tape.backward(loss.total)?;
            Ok((
                grads,
                tape.value(loss.decoder).scalar() as f64,
                loss.alignment.map_or(0.0, |g| tape.value(g).scalar() as f64),
            ))
        })
        .collect();

    let scale = 1.0 / batch.len() as f32;
    let mut total: BTreeMap<String, Value<f32>> = BTreeMap::new();
    let mut stats = BatchStats { decoder_cost: 0.0, alignment_cost: 0.0 };
    for result in per_pair {
        let (grads, dec, ali) = result?;
        stats.decoder_cost += dec;
        stats.alignment_cost += ali;
        for (name, grad) in grads {
            match total.get_mut(&name) {
                Some(acc) => {
                    for (a, g) in acc.data.iter_mut().zip(&grad.data) {
                        *a += g;
                    }
                }
                None => {
                    total.insert(name, grad);
                }
            }
        }
    }
    for value in total.values_mut() {
        for v in &mut value.data {
            *v *= scale;
        }
    }
    stats.decoder_cost /= batch.len() as f64;
    stats.alignment_cost /= batch.len() as f64;
    Ok((total, stats))
}

/// Runs (or resumes) training, emitting checkpoints through `sink` and
/// returning the final checkpoint.
pub fn train(
    start: Checkpoint,
    set: &TrainSet,
    config: &TrainConfig,
    sink: &mut dyn CheckpointSink,
) -> Result<Checkpoint> {
    config.validate()?;
    if config.guided && set.aligns.is_none() {
        return Err(Error::usage("guided training requires alignments"));
    }
    if config.topic && set.topics.is_none() {
        return Err(Error::usage("topic training requires topic vectors"));
    }

    let mut model = Model::new(start.config.clone(), start.params.clone())?;
    let mut opt = start.opt.clone();
    let mut epoch = start.meta.epoch;
    let mut batches_done = start.meta.batches_done;
    let mut weights = config.weights.clone();
    weights.w1 = start.meta.w1;

    let started = Instant::now();
    let mut since_ckpt = (0usize, 0.0f64, 0.0f64);
    let mut batches_since_ckpt = 0usize;
    let mut last_emitted: Option<Checkpoint> = None;

    let snapshot = |model: &Model, opt: &OptimizerState, epoch, batches_done, w1| Checkpoint {
        config: model.config.clone(),
        meta: TrainingMeta { epoch, batches_done, w1, seed: config.seed },
        src_vocab_hash: set.src_vocab_hash.clone(),
        tgt_vocab_hash: set.tgt_vocab_hash.clone(),
        params: model.params.clone(),
        opt: opt.clone(),
    };

    while epoch < config.max_epochs {
        let mut order: Vec<usize> = (0..set.len()).collect();
        order.shuffle(&mut epoch_rng(config.seed, epoch));
        let batches: Vec<&[usize]> = order.chunks(config.batch_size).collect();

        for bi in batches_done..batches.len() {
            let (grads, stats) =
                batch_gradients(&model, set, batches[bi], &weights, config.guided, config.topic)?;
            opt.step(&mut model.params, &grads)?;
            batches_done = bi + 1;
            since_ckpt.0 += 1;
            since_ckpt.1 += stats.decoder_cost;
            since_ckpt.2 += stats.alignment_cost;
            batches_since_ckpt += 1;

            let end_of_epoch = batches_done == batches.len();
            if end_of_epoch {
                weights.w1 *= weights.decay_factor;
                epoch += 1;
                batches_done = 0;
            }
            let end_of_training = epoch >= config.max_epochs;
            if batches_since_ckpt >= config.checkpoint_every || end_of_training {
                let ckpt = snapshot(&model, &opt, epoch, batches_done, weights.w1);
                let log = TrainLogEntry {
                    epoch,
                    batch: batches_done,
                    decoder_cost: since_ckpt.1 / since_ckpt.0.max(1) as f64,
                    alignment_cost: since_ckpt.2 / since_ckpt.0.max(1) as f64,
                    w1: weights.w1,
                    wall_time: started.elapsed().as_secs_f64(),
                };
                sink.emit(&ckpt, &log)?;
                last_emitted = Some(ckpt);
                since_ckpt = (0, 0.0, 0.0);
                batches_since_ckpt = 0;
            }
            if end_of_epoch {
                break;
            }
        }
    }

    Ok(match last_emitted {
        Some(ckpt) => ckpt,
        // max_epochs already reached on entry; snapshot the unchanged state.
        None => snapshot(&model, &opt, epoch, batches_done, weights.w1),
    })
}

/// Fresh checkpoint for a new training run.
pub fn fresh_checkpoint(
    config: &ModelConfig,
    tcfg: &TrainConfig,
    src_vocab_hash: String,
    tgt_vocab_hash: String,
) -> Result<Checkpoint> {
    let model = Model::init(config.clone(), tcfg.seed)?;
    let opt = OptimizerState::new(&model.params, tcfg.adadelta_rho, tcfg.adadelta_epsilon);
    Ok(Checkpoint {
        config: model.config,
        meta: TrainingMeta {
            epoch: 0,
            batches_done: 0,
            w1: tcfg.weights.w1,
            seed: tcfg.seed,
        },
        src_vocab_hash,
        tgt_vocab_hash,
        params: model.params,
        opt,
    })
}

/// Mean per-pair decoder cost and token-weighted perplexity over a corpus.
pub fn evaluate_decoder_cost(model: &Model, set: &TrainSet, topic: bool) -> Result<(f64, f64)> {
    use rayon::prelude::*;
    if set.is_empty() {
        return Err(Error::usage("empty evaluation set"));
    }
    let costs: Vec<Result<(f64, usize)>> = (0..set.len())
        .into_par_iter()
        .map(|i| {
            let mut tape = Tape::<f32>::new();
            let tp = tape.load_store(&model.params);
            let nodes = ModelNodes::resolve(&tp, &model.config)?;
            let out = forward_graph(
                &mut tape,
                &nodes,
                &model.config,
                &set.src_ids[i],
                &set.tgt_ids[i],
                if topic { set.topic(i) } else { None },
            )?;
            Ok((tape.value(out.cost).scalar() as f64, set.tgt_ids[i].len()))
        })
        .collect();
    let mut sum_cost = 0.0;
    let mut sum_nll = 0.0;
    let mut tokens = 0usize;
    for c in costs {
        let (cost, len) = c?;
        sum_cost += cost;
        sum_nll += cost * len as f64;
        tokens += len;
    }
    let mean = sum_cost / set.len() as f64;
    let ppl = (sum_nll / tokens as f64).exp();
    Ok((mean, ppl))
}
