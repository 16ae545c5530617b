//! Tape-level builders for the encoder, attention, readout and decoder.
//!
//! Training, decoding and the eager API all assemble their forward passes
//! from these functions, so there is exactly one implementation of the
//! model math.

use super::{AttentionRecord, ModelConfig};
use crate::data::{TopicVector, EOS_ID};
use crate::error::{Error, Result};
use crate::numeric::{gru_step, GruNodes};
use crate::tape::{NodeId, Real, Tape, TapeParams, Value};
use crate::tensor::Tensor;

/// Every parameter of the model resolved to tape nodes.
#[derive(Debug, Clone)]
pub struct ModelNodes {
    pub src_embed: NodeId,
    pub tgt_embed: NodeId,
    pub l1f: GruNodes,
    pub l1b: GruNodes,
    pub l2f: GruNodes,
    pub l2b: GruNodes,
    pub dec_init_w: NodeId,
    pub dec_init_b: NodeId,
    pub dec_cell: GruNodes,
    pub att_w_s: NodeId,
    pub att_w_h: NodeId,
    pub readout_w: NodeId,
    pub readout_w_topic: Option<NodeId>,
    pub readout_b: NodeId,
    pub out_w: NodeId,
    pub out_b: NodeId,
}

impl ModelNodes {
    pub fn resolve(tp: &TapeParams, config: &ModelConfig) -> Result<Self> {
        Ok(ModelNodes {
            src_embed: tp.get("src.embed")?,
            tgt_embed: tp.get("tgt.embed")?,
            l1f: GruNodes::resolve(tp, "enc.l1f")?,
            l1b: GruNodes::resolve(tp, "enc.l1b")?,
            l2f: GruNodes::resolve(tp, "enc.l2f")?,
            l2b: GruNodes::resolve(tp, "enc.l2b")?,
            dec_init_w: tp.get("dec.init.w")?,
            dec_init_b: tp.get("dec.init.b")?,
            dec_cell: GruNodes::resolve(tp, "dec.cell")?,
            att_w_s: tp.get("att.w_s")?,
            att_w_h: tp.get("att.w_h")?,
            readout_w: tp.get("readout.w")?,
            readout_w_topic: if config.use_topic {
                Some(tp.get("readout.w_topic")?)
            } else {
                None
            },
            readout_b: tp.get("readout.b")?,
            out_w: tp.get("out.w")?,
            out_b: tp.get("out.b")?,
        })
    }
}

/// Encoder output: annotation matrix, its attention projection, and the
/// final backward state feeding the decoder start state.
#[derive(Debug, Clone, Copy)]
pub struct Annotations {
    /// `[T', 2*cell_dim]`, row i = h_i.
    pub matrix: NodeId,
    /// `matrix @ W_hᵀ`, precomputed once per sentence.
    pub projected: NodeId,
    /// Layer-2 backward state after consuming position 0.
    pub bwd_final: NodeId,
    pub len: usize,
}

impl Annotations {
    /// Wraps precomputed annotation values (eager entry points).
    pub fn from_values<F: Real>(
        tape: &mut Tape<F>,
        nodes: &ModelNodes,
        values: &Tensor,
    ) -> Result<Self> {
        if values.rank() != 2 {
            return Err(Error::shape("annotations must be a matrix"));
        }
        let len = values.shape()[0];
        if len == 0 {
            return Err(Error::usage("empty annotation matrix"));
        }
        let matrix = tape.constant(Value::from_tensor(values));
        let projected = tape.matmat_t(matrix, nodes.att_w_h);
        // No encoder ran; reuse the first annotation's backward half shape
        // by projecting nothing. Callers of this path never read bwd_final.
        Ok(Annotations { matrix, projected, bwd_final: matrix, len })
    }
}

fn run_gru<F: Real>(
    tape: &mut Tape<F>,
    cell: &GruNodes,
    inputs: &[NodeId],
    cell_dim: usize,
    reverse: bool,
) -> Vec<NodeId> {
    let mut state = tape.constant(Value { shape: vec![cell_dim], data: vec![F::ZERO; cell_dim] });
    let mut states = vec![state; inputs.len()];
    let order: Vec<usize> = if reverse {
        (0..inputs.len()).rev().collect()
    } else {
        (0..inputs.len()).collect()
    };
    for i in order {
        state = gru_step(tape, cell, inputs[i], state);
        states[i] = state;
    }
    states
}

/// Runs the two-layer bidirectional encoder over a source id sequence
/// (sentence-end already appended).
pub fn encode_graph<F: Real>(
    tape: &mut Tape<F>,
    nodes: &ModelNodes,
    config: &ModelConfig,
    src_ids: &[u32],
) -> Result<Annotations> {
    if src_ids.is_empty() {
        return Err(Error::usage("cannot encode an empty source"));
    }
    for &id in src_ids {
        if id as usize >= config.src_vocab_size {
            return Err(Error::usage(format!("source id {id} out of vocabulary")));
        }
    }
    let embeds: Vec<NodeId> =
        src_ids.iter().map(|&id| tape.row(nodes.src_embed, id as usize)).collect();

    let n = config.cell_dim;
    let f1 = run_gru(tape, &nodes.l1f, &embeds, n, false);
    let b1 = run_gru(tape, &nodes.l1b, &embeds, n, true);
    let layer1: Vec<NodeId> =
        f1.iter().zip(&b1).map(|(&f, &b)| tape.concat(&[f, b])).collect();

    let f2 = run_gru(tape, &nodes.l2f, &layer1, n, false);
    let b2 = run_gru(tape, &nodes.l2b, &layer1, n, true);
    let rows: Vec<NodeId> = f2.iter().zip(&b2).map(|(&f, &b)| tape.concat(&[f, b])).collect();

    let matrix = tape.stack_rows(&rows);
    let projected = tape.matmat_t(matrix, nodes.att_w_h);
    Ok(Annotations { matrix, projected, bwd_final: b2[0], len: src_ids.len() })
}

/// Decoder recurrent state node(s).
#[derive(Debug, Clone, Copy)]
pub struct StateNodes {
    pub s: NodeId,
}

/// `s_0 = tanh(W_init b_final + b_init)`.
pub fn init_state_graph<F: Real>(
    tape: &mut Tape<F>,
    nodes: &ModelNodes,
    ann: &Annotations,
) -> StateNodes {
    let proj = tape.matvec(nodes.dec_init_w, ann.bwd_final);
    let pre = tape.add(proj, nodes.dec_init_b);
    StateNodes { s: tape.tanh(pre) }
}

/// Dot attention: scores `e_i = (W_s s)ᵀ (W_h h_i)` softmax-normalized, and
/// the context `c = Σ_i α_i h_i`.
pub fn attention_graph<F: Real>(
    tape: &mut Tape<F>,
    nodes: &ModelNodes,
    ann: &Annotations,
    s_prev: NodeId,
) -> (NodeId, NodeId) {
    let q = tape.matvec(nodes.att_w_s, s_prev);
    let scores = tape.matvec(ann.projected, q);
    let alpha = tape.softmax(scores);
    let ctx = tape.matvec_t(ann.matrix, alpha);
    (alpha, ctx)
}

/// One decoder step before the output projection.
pub struct StepNodes {
    pub alpha: NodeId,
    pub context: NodeId,
    pub premax: NodeId,
    pub f_prev: NodeId,
    pub next: StateNodes,
}

/// Readout pre-activation `W_r [c; f; s] (+ W_c l) + b_r`.
pub fn readout_premax_graph<F: Real>(
    tape: &mut Tape<F>,
    nodes: &ModelNodes,
    config: &ModelConfig,
    ctx: NodeId,
    f_prev: NodeId,
    s_prev: NodeId,
    topic: Option<&TopicVector>,
) -> Result<NodeId> {
    let cat = tape.concat(&[ctx, f_prev, s_prev]);
    let base = tape.matvec(nodes.readout_w, cat);
    let with_bias = tape.add(base, nodes.readout_b);
    match (config.use_topic, topic) {
        (false, None) => Ok(with_bias),
        (false, Some(_)) => {
            Err(Error::usage("topic vector supplied to a model without topic support"))
        }
        (true, None) => Err(Error::usage("topic-aware model needs a topic vector")),
        (true, Some(t)) => {
            if t.dim() != config.topic_dim {
                return Err(Error::shape(format!(
                    "topic vector has dim {}, model expects {}",
                    t.dim(),
                    config.topic_dim
                )));
            }
            let w_topic = nodes.readout_w_topic.expect("use_topic implies w_topic");
            let l = tape.constant_vector(t.weights().iter().map(|&w| F::from_f64(w)).collect());
            let e_c = tape.matvec(w_topic, l);
            Ok(tape.add(with_bias, e_c))
        }
    }
}

/// Maxout, output projection and softmax over the target vocabulary.
pub fn output_distribution_graph<F: Real>(
    tape: &mut Tape<F>,
    nodes: &ModelNodes,
    config: &ModelConfig,
    premax: NodeId,
) -> NodeId {
    let logits = output_logits_graph(tape, nodes, config, premax);
    tape.softmax(logits)
}

fn output_logits_graph<F: Real>(
    tape: &mut Tape<F>,
    nodes: &ModelNodes,
    config: &ModelConfig,
    premax: NodeId,
) -> NodeId {
    let t = tape.maxout(premax, config.maxout_pieces);
    let proj = tape.matvec(nodes.out_w, t);
    tape.add(proj, nodes.out_b)
}

/// One full decoder step from `(s_{t-1}, y_{t-1})`: attention, readout
/// pre-activation and the GRU update consuming `[f_{t-1}; c_t]`.
pub fn decoder_step_graph<F: Real>(
    tape: &mut Tape<F>,
    nodes: &ModelNodes,
    config: &ModelConfig,
    y_prev: u32,
    state: &StateNodes,
    ann: &Annotations,
    topic: Option<&TopicVector>,
) -> Result<StepNodes> {
    if y_prev as usize >= config.tgt_vocab_size {
        return Err(Error::usage(format!("target id {y_prev} out of vocabulary")));
    }
    let (alpha, context) = attention_graph(tape, nodes, ann, state.s);

    let f_prev = tape.row(nodes.tgt_embed, y_prev as usize);
    let premax = readout_premax_graph(tape, nodes, config, context, f_prev, state.s, topic)?;

    let x = tape.concat(&[f_prev, context]);
    let s_next = gru_step(tape, &nodes.dec_cell, x, state.s);

    Ok(StepNodes { alpha, context, premax, f_prev, next: StateNodes { s: s_next } })
}

/// Teacher-forced pass: per-token log-probabilities, attention rows and the
/// length-normalized decoder cost.
pub struct ForwardOutcome {
    /// `-(1/T) Σ_t log p(y_t | ...)`.
    pub cost: NodeId,
    /// One attention row per target position (including sentence end).
    pub alphas: Vec<NodeId>,
    pub log_probs: Vec<NodeId>,
}

impl ForwardOutcome {
    pub fn attention_record<F: Real>(&self, tape: &Tape<F>) -> AttentionRecord {
        let rows: Vec<Vec<f64>> = self
            .alphas
            .iter()
            .map(|&a| tape.value(a).data.iter().map(|v| v.to_f64()).collect())
            .collect();
        AttentionRecord::from_rows(rows).expect("attention rows share source length")
    }
}

/// Builds the full teacher-forced graph for one sentence pair.
pub fn forward_graph<F: Real>(
    tape: &mut Tape<F>,
    nodes: &ModelNodes,
    config: &ModelConfig,
    src_ids: &[u32],
    tgt_ids: &[u32],
    topic: Option<&TopicVector>,
) -> Result<ForwardOutcome> {
    if tgt_ids.is_empty() {
        return Err(Error::usage("cannot teacher-force an empty target"));
    }
    for &id in tgt_ids {
        if id as usize >= config.tgt_vocab_size {
            return Err(Error::usage(format!("target id {id} out of vocabulary")));
        }
    }
    let ann = encode_graph(tape, nodes, config, src_ids)?;
    let mut state = init_state_graph(tape, nodes, &ann);

    let mut y_prev = EOS_ID;
    let mut alphas = Vec::with_capacity(tgt_ids.len());
    let mut log_probs = Vec::with_capacity(tgt_ids.len());
    for &y in tgt_ids {
        let step = decoder_step_graph(tape, nodes, config, y_prev, &state, &ann, topic)?;
        let logits = output_logits_graph(tape, nodes, config, step.premax);
        let log_dist = tape.log_softmax(logits);
        log_probs.push(tape.pick(log_dist, y as usize));
        alphas.push(step.alpha);
        state = step.next;
        y_prev = y;
    }

    let total = tape.sum_scalars(&log_probs);
    let cost = tape.affine(total, -F::ONE / F::from_f64(tgt_ids.len() as f64), F::ZERO);
    Ok(ForwardOutcome { cost, alphas, log_probs })
}
