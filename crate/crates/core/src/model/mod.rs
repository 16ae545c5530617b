//! The attention-based encoder-decoder with topic-aware readout.
//!
//! Architecture: two-layer bidirectional GRU encoder (layer 1 over
//! embeddings, layer 2 over the concatenated layer-1 states; an annotation
//! is the concatenation of the layer-2 forward and backward states), dot
//! attention against the previous decoder state, and a readout of
//! `W_r [c_t; f_{t-1}; s_{t-1}] (+ W_c l) + b_r` followed by maxout, a
//! fully-connected projection and softmax. The decoder GRU consumes
//! `[f_{t-1}; c_t]`. The decoder start state is a tanh projection of the
//! final layer-2 backward encoder state, and decoding starts from the
//! sentence-end embedding.
//!
//! Sentence-end ids are appended by the vocabulary layer; all sequences
//! entering this module already carry them.

mod checkpoint;
mod graph;
#[cfg(test)]
mod tests;

pub use checkpoint::{
    read_checkpoint, write_checkpoint, CheckpointHeader, TrainingMeta, CHECKPOINT_FORMAT_VERSION,
};
pub use graph::{
    attention_graph, decoder_step_graph, encode_graph, forward_graph, init_state_graph,
    output_distribution_graph, readout_premax_graph, Annotations, ForwardOutcome, ModelNodes,
    StateNodes,
};

use serde::{Deserialize, Serialize};

use crate::data::TopicVector;
use crate::error::{Error, Result};
use crate::numeric::init_gru;
use crate::tape::{Tape, Value};
use crate::tensor::{ParameterStore, Tensor, UniformInit};

/// Model dimensions and switches.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub cell_dim: usize,
    pub src_vocab_size: usize,
    pub tgt_vocab_size: usize,
    pub topic_dim: usize,
    pub maxout_pieces: usize,
    pub use_topic: bool,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("embed_dim", self.embed_dim),
            ("cell_dim", self.cell_dim),
            ("src_vocab_size", self.src_vocab_size),
            ("tgt_vocab_size", self.tgt_vocab_size),
            ("maxout_pieces", self.maxout_pieces),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.use_topic && self.topic_dim == 0 {
            return Err(Error::Config("topic_dim must be positive with use_topic".into()));
        }
        Ok(())
    }

    /// Annotation width: concatenated forward/backward layer-2 states.
    pub fn annotation_dim(&self) -> usize {
        2 * self.cell_dim
    }

    /// Readout pre-activation width (maxout input).
    pub fn premax_dim(&self) -> usize {
        self.maxout_pieces * self.cell_dim
    }

    /// Readout input width: `[c_t; f_{t-1}; s_{t-1}]`.
    pub fn readout_in_dim(&self) -> usize {
        self.annotation_dim() + self.embed_dim + self.cell_dim
    }
}

/// Per-step attention rows of one decoded or teacher-forced sentence,
/// stored at f64 for use in divergence costs and their oracles.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionRecord {
    rows: Vec<Vec<f64>>,
    src_len: usize,
}

impl AttentionRecord {
    pub fn new(src_len: usize) -> Self {
        AttentionRecord { rows: Vec::new(), src_len }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let src_len = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != src_len) {
            return Err(Error::shape("ragged attention rows"));
        }
        Ok(AttentionRecord { rows, src_len })
    }

    pub fn push_row(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.src_len);
        self.rows.push(row);
    }

    pub fn steps(&self) -> usize {
        self.rows.len()
    }

    pub fn src_len(&self) -> usize {
        self.src_len
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.rows[t]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }
}

/// Decoder recurrent state plus the embedding of the last consumed output
/// token.
#[derive(Debug, Clone)]
pub struct DecoderState {
    pub s: Tensor,
    pub f: Tensor,
}

/// A configuration bound to its parameters.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParameterStore,
}

/// Fresh parameters for `config`, drawn uniform in [-0.08, 0.08] in a fixed
/// construction order.
pub fn init_params(config: &ModelConfig, seed: u64) -> ParameterStore {
    let mut store = ParameterStore::new();
    let mut init = UniformInit::new(seed);
    let (e, n) = (config.embed_dim, config.cell_dim);

    store.insert("src.embed", init.tensor(vec![config.src_vocab_size, e]));
    init_gru(&mut store, &mut init, "enc.l1f", e, n);
    init_gru(&mut store, &mut init, "enc.l1b", e, n);
    init_gru(&mut store, &mut init, "enc.l2f", 2 * n, n);
    init_gru(&mut store, &mut init, "enc.l2b", 2 * n, n);
    store.insert("dec.init.w", init.tensor(vec![n, n]));
    store.insert("dec.init.b", init.tensor(vec![n]));
    init_gru(&mut store, &mut init, "dec.cell", e + 2 * n, n);
    store.insert("att.w_s", init.tensor(vec![n, n]));
    store.insert("att.w_h", init.tensor(vec![n, 2 * n]));
    store.insert("tgt.embed", init.tensor(vec![config.tgt_vocab_size, e]));
    store.insert("readout.w", init.tensor(vec![config.premax_dim(), config.readout_in_dim()]));
    if config.use_topic {
        store.insert("readout.w_topic", init.tensor(vec![config.premax_dim(), config.topic_dim]));
    }
    store.insert("readout.b", init.tensor(vec![config.premax_dim()]));
    store.insert("out.w", init.tensor(vec![config.tgt_vocab_size, n]));
    store.insert("out.b", init.tensor(vec![config.tgt_vocab_size]));
    store
}

impl Model {
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let params = init_params(&config, seed);
        Ok(Model { config, params })
    }

    pub fn new(config: ModelConfig, params: ParameterStore) -> Result<Self> {
        config.validate()?;
        Ok(Model { config, params })
    }

    fn graph(&self) -> Result<(Tape<f32>, ModelNodes)> {
        let mut tape = Tape::<f32>::new();
        let tp = tape.load_store(&self.params);
        let nodes = ModelNodes::resolve(&tp, &self.config)?;
        Ok((tape, nodes))
    }

    /// Encoder annotations for a source id sequence: `T' x 2*cell_dim`.
    pub fn encode(&self, src_ids: &[u32]) -> Result<Tensor> {
        let (mut tape, nodes) = self.graph()?;
        let ann = encode_graph(&mut tape, &nodes, &self.config, src_ids)?;
        Ok(tape.value(ann.matrix).to_tensor())
    }

    /// Attention weights and context vector for one decoder state against
    /// precomputed annotation values.
    pub fn attention_step(&self, s_prev: &Tensor, annotations: &Tensor) -> Result<(Tensor, Tensor)> {
        if s_prev.rank() != 1 || s_prev.len() != self.config.cell_dim {
            return Err(Error::shape("decoder state has wrong width"));
        }
        if annotations.rank() != 2 || annotations.shape()[1] != self.config.annotation_dim() {
            return Err(Error::shape("annotations have wrong width"));
        }
        let (mut tape, nodes) = self.graph()?;
        let ann = Annotations::from_values(&mut tape, &nodes, annotations)?;
        let s = tape.constant(Value::from_tensor(s_prev));
        let (alpha, ctx) = attention_graph(&mut tape, &nodes, &ann, s);
        Ok((tape.value(alpha).to_tensor(), tape.value(ctx).to_tensor()))
    }

    /// Readout distribution over the target vocabulary.
    pub fn readout(
        &self,
        ctx: &Tensor,
        state: &DecoderState,
        topic: Option<&TopicVector>,
    ) -> Result<Tensor> {
        let (mut tape, nodes) = self.graph()?;
        let c = tape.constant(Value::from_tensor(ctx));
        let f = tape.constant(Value::from_tensor(&state.f));
        let s = tape.constant(Value::from_tensor(&state.s));
        let premax = readout_premax_graph(&mut tape, &nodes, &self.config, c, f, s, topic)?;
        let dist = output_distribution_graph(&mut tape, &nodes, &self.config, premax);
        Ok(tape.value(dist).to_tensor())
    }

    /// One decoder step: word distribution, next state, attention row.
    pub fn decoder_step(
        &self,
        y_prev: u32,
        state: &DecoderState,
        annotations: &Tensor,
        topic: Option<&TopicVector>,
    ) -> Result<(Tensor, DecoderState, Tensor)> {
        if y_prev as usize >= self.config.tgt_vocab_size {
            return Err(Error::usage(format!("target id {y_prev} out of vocabulary")));
        }
        let (mut tape, nodes) = self.graph()?;
        let ann = Annotations::from_values(&mut tape, &nodes, annotations)?;
        let s = tape.constant(Value::from_tensor(&state.s));
        let st = StateNodes { s };
        let step = decoder_step_graph(&mut tape, &nodes, &self.config, y_prev, &st, &ann, topic)?;
        let dist = output_distribution_graph(&mut tape, &nodes, &self.config, step.premax);
        Ok((
            tape.value(dist).to_tensor(),
            DecoderState {
                s: tape.value(step.next.s).to_tensor(),
                f: tape.value(step.f_prev).to_tensor(),
            },
            tape.value(step.alpha).to_tensor(),
        ))
    }

    /// Teacher-forced decoder cost (mean negative log-likelihood per target
    /// token) and the attention record.
    pub fn forward_teacher_forced(
        &self,
        src_ids: &[u32],
        tgt_ids: &[u32],
        topic: Option<&TopicVector>,
    ) -> Result<(f32, AttentionRecord)> {
        let (mut tape, nodes) = self.graph()?;
        let out = forward_graph(&mut tape, &nodes, &self.config, src_ids, tgt_ids, topic)?;
        let cost = tape.value(out.cost).scalar();
        let record = out.attention_record(&tape);
        Ok((cost, record))
    }

    /// Initial decoder state for given annotations (eager form).
    pub fn initial_state(&self, src_ids: &[u32]) -> Result<DecoderState> {
        let (mut tape, nodes) = self.graph()?;
        let ann = encode_graph(&mut tape, &nodes, &self.config, src_ids)?;
        let st = init_state_graph(&mut tape, &nodes, &ann);
        let f0 = tape.row(nodes.tgt_embed, crate::data::EOS_ID as usize);
        Ok(DecoderState { s: tape.value(st.s).to_tensor(), f: tape.value(f0).to_tensor() })
    }

    /// Column `k` of the topic transformation matrix.
    pub fn topic_embedding(&self, k: usize) -> Result<Tensor> {
        if !self.config.use_topic {
            return Err(Error::usage("model was built without topic support"));
        }
        if k >= self.config.topic_dim {
            return Err(Error::usage(format!(
                "topic index {k} out of range 0..{}",
                self.config.topic_dim
            )));
        }
        let w = self
            .params
            .get("readout.w_topic")
            .ok_or_else(|| Error::usage("readout.w_topic missing from store"))?;
        let rows = w.shape()[0];
        let cols = w.shape()[1];
        let column = (0..rows).map(|r| w.data()[r * cols + k]).collect();
        Ok(Tensor::vector(column))
    }
}
