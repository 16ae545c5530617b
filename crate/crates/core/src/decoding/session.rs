//! Decoding sessions: a source sentence encoded once, then stepped token by
//! token. Beam search is generic over [`DecodeSession`] so ensembles and
//! table-driven test models share the same search.

use crate::data::TopicVector;
use crate::error::{Error, Result};
use crate::model::{
    attention_graph, decoder_step_graph, encode_graph, init_state_graph,
    output_distribution_graph, Annotations, Model, ModelNodes, StateNodes,
};
use crate::tape::Tape;

use super::ensemble_step;

/// One step of a decoder: word distribution, attention row, next state.
pub trait DecodeSession {
    type State: Clone;

    fn initial(&mut self) -> Result<Self::State>;
    fn vocab_size(&self) -> usize;
    fn step(&mut self, state: &Self::State, y_prev: u32) -> Result<(Vec<f32>, Vec<f64>, Self::State)>;
}

/// A single model decoding one sentence. The tape grows with each step and
/// holds every intermediate value of the session.
pub struct ModelSession<'m> {
    model: &'m Model,
    topic: Option<TopicVector>,
    tape: Tape<f32>,
    nodes: ModelNodes,
    ann: Annotations,
    init: StateNodes,
}

impl<'m> ModelSession<'m> {
    pub fn start(model: &'m Model, src_ids: &[u32], topic: Option<&TopicVector>) -> Result<Self> {
        if src_ids.is_empty() {
            return Err(Error::usage("cannot decode an empty source"));
        }
        let mut tape = Tape::<f32>::new();
        let tp = tape.load_store(&model.params);
        let nodes = ModelNodes::resolve(&tp, &model.config)?;
        let ann = encode_graph(&mut tape, &nodes, &model.config, src_ids)?;
        let init = init_state_graph(&mut tape, &nodes, &ann);
        Ok(ModelSession { model, topic: topic.cloned(), tape, nodes, ann, init })
    }

    /// Attention weights of a bare state, without advancing the decoder.
    pub fn peek_attention(&mut self, state: &StateNodes) -> Vec<f64> {
        let (alpha, _) = attention_graph(&mut self.tape, &self.nodes, &self.ann, state.s);
        self.tape.value(alpha).data.iter().map(|&v| v as f64).collect()
    }
}

impl DecodeSession for ModelSession<'_> {
    type State = StateNodes;

    fn initial(&mut self) -> Result<StateNodes> {
        Ok(self.init)
    }

    fn vocab_size(&self) -> usize {
        self.model.config.tgt_vocab_size
    }

    fn step(&mut self, state: &StateNodes, y_prev: u32) -> Result<(Vec<f32>, Vec<f64>, StateNodes)> {
        let step = decoder_step_graph(
            &mut self.tape,
            &self.nodes,
            &self.model.config,
            y_prev,
            state,
            &self.ann,
            self.topic.as_ref(),
        )?;
        let dist = output_distribution_graph(&mut self.tape, &self.nodes, &self.model.config, step.premax);
        let probs = self.tape.value(dist).data.clone();
        let attention = self.tape.value(step.alpha).data.iter().map(|&v| v as f64).collect();
        Ok((probs, attention, step.next))
    }
}

/// Loaded models decoding together. Members must share the target
/// vocabulary; loaders verify the vocabulary hashes, the library checks the
/// sizes.
pub struct EnsembleSet {
    pub models: Vec<Model>,
}

impl EnsembleSet {
    pub fn new(models: Vec<Model>) -> Result<Self> {
        let first = models
            .first()
            .ok_or_else(|| Error::usage("ensemble needs at least one model"))?;
        if models.iter().any(|m| m.config.tgt_vocab_size != first.config.tgt_vocab_size) {
            return Err(Error::usage("ensemble members disagree on target vocabulary size"));
        }
        Ok(EnsembleSet { models })
    }

    pub fn start_session(
        &self,
        src_ids: &[u32],
        topic: Option<&TopicVector>,
    ) -> Result<EnsembleSession<'_>> {
        let members = self
            .models
            .iter()
            .map(|m| ModelSession::start(m, src_ids, topic))
            .collect::<Result<Vec<_>>>()?;
        Ok(EnsembleSession { members })
    }
}

/// Per-step combination: mean of member distributions and mean of member
/// attention rows.
pub struct EnsembleSession<'m> {
    members: Vec<ModelSession<'m>>,
}

impl DecodeSession for EnsembleSession<'_> {
    type State = Vec<StateNodes>;

    fn initial(&mut self) -> Result<Vec<StateNodes>> {
        self.members.iter_mut().map(|m| m.initial()).collect()
    }

    fn vocab_size(&self) -> usize {
        self.members[0].vocab_size()
    }

    fn step(
        &mut self,
        state: &Vec<StateNodes>,
        y_prev: u32,
    ) -> Result<(Vec<f32>, Vec<f64>, Vec<StateNodes>)> {
        let mut dists = Vec::with_capacity(self.members.len());
        let mut attentions: Vec<Vec<f64>> = Vec::with_capacity(self.members.len());
        let mut next = Vec::with_capacity(self.members.len());
        for (member, s) in self.members.iter_mut().zip(state) {
            let (probs, att, ns) = member.step(s, y_prev)?;
            dists.push(probs);
            attentions.push(att);
            next.push(ns);
        }
        let probs = ensemble_step(&dists)?;
        let scale = 1.0 / attentions.len() as f64;
        let mut attention = vec![0.0f64; attentions[0].len()];
        for a in &attentions {
            for (acc, &v) in attention.iter_mut().zip(a) {
                *acc += v * scale;
            }
        }
        Ok((probs, attention, next))
    }
}
