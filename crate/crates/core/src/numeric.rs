//! Eager compute ops over [`Tensor`] plus the GRU cell used throughout the
//! model.
//!
//! The GRU follows the usual reset/update-gate formulation:
//!
//! ```text
//! z  = sigmoid(W_z x + U_z h + b_z)          update gate
//! r  = sigmoid(W_r x + U_r h + b_r)          reset gate
//! g  = tanh(W_c x + U_c (r * h) + b_c)       candidate state
//! h' = z * h + (1 - z) * g
//! ```
//!
//! With all weights and biases zero this reduces to `h' = 0.5 * h`.
//!
//! Eager ops build a throwaway tape internally, so the forward math here is
//! the exact code path training differentiates.

use crate::error::{Error, Result};
use crate::tape::{maxout_slice, softmax_slice, NodeId, Real, Tape, TapeParams, Value};
use crate::tensor::{ParameterStore, Tensor, UniformInit};

/// Row-wise softmax of a rank-2 tensor.
pub fn softmax_rows(m: &Tensor) -> Result<Tensor> {
    if m.rank() != 2 {
        return Err(Error::shape(format!("softmax_rows expects rank 2, got {:?}", m.shape())));
    }
    if !m.is_finite() {
        return Err(Error::usage("softmax_rows input must be finite"));
    }
    let (rows, cols) = (m.shape()[0], m.shape()[1]);
    let mut data = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        data.extend(softmax_slice(m.row(i)));
    }
    Tensor::new(vec![rows, cols], data)
}

/// Max over groups of `pieces` consecutive elements of a vector.
pub fn maxout(v: &Tensor, pieces: usize) -> Result<Tensor> {
    if v.rank() != 1 {
        return Err(Error::shape(format!("maxout expects rank 1, got {:?}", v.shape())));
    }
    if pieces == 0 || v.len() % pieces != 0 {
        return Err(Error::shape(format!(
            "maxout: length {} not divisible by {pieces} pieces",
            v.len()
        )));
    }
    Ok(Tensor::vector(maxout_slice(v.data(), pieces)))
}

/// The nine tensors of one GRU cell, resolved to tape nodes.
#[derive(Debug, Clone, Copy)]
pub struct GruNodes {
    pub w_z: NodeId,
    pub u_z: NodeId,
    pub b_z: NodeId,
    pub w_r: NodeId,
    pub u_r: NodeId,
    pub b_r: NodeId,
    pub w_c: NodeId,
    pub u_c: NodeId,
    pub b_c: NodeId,
}

pub const GRU_SUFFIXES: [&str; 9] =
    ["w_z", "u_z", "b_z", "w_r", "u_r", "b_r", "w_c", "u_c", "b_c"];

impl GruNodes {
    /// Looks up `prefix.w_z`, `prefix.u_z`, ... on the tape.
    pub fn resolve(tp: &TapeParams, prefix: &str) -> Result<Self> {
        Ok(GruNodes {
            w_z: tp.get(&format!("{prefix}.w_z"))?,
            u_z: tp.get(&format!("{prefix}.u_z"))?,
            b_z: tp.get(&format!("{prefix}.b_z"))?,
            w_r: tp.get(&format!("{prefix}.w_r"))?,
            u_r: tp.get(&format!("{prefix}.u_r"))?,
            b_r: tp.get(&format!("{prefix}.b_r"))?,
            w_c: tp.get(&format!("{prefix}.w_c"))?,
            u_c: tp.get(&format!("{prefix}.u_c"))?,
            b_c: tp.get(&format!("{prefix}.b_c"))?,
        })
    }
}

/// Registers freshly initialized GRU weights for a cell mapping
/// `input_dim` inputs onto a `cell_dim` state.
pub fn init_gru(store: &mut ParameterStore, init: &mut UniformInit, prefix: &str, input_dim: usize, cell_dim: usize) {
    for gate in ["z", "r", "c"] {
        store.insert(format!("{prefix}.w_{gate}"), init.tensor(vec![cell_dim, input_dim]));
        store.insert(format!("{prefix}.u_{gate}"), init.tensor(vec![cell_dim, cell_dim]));
        store.insert(format!("{prefix}.b_{gate}"), init.tensor(vec![cell_dim]));
    }
}

fn gate<F: Real>(
    tape: &mut Tape<F>,
    w: NodeId,
    x: NodeId,
    u: NodeId,
    h: NodeId,
    b: NodeId,
) -> NodeId {
    let wx = tape.matvec(w, x);
    let uh = tape.matvec(u, h);
    let s = tape.add(wx, uh);
    tape.add(s, b)
}

/// One GRU step on the tape: `(x, h_prev) -> h_next`.
pub fn gru_step<F: Real>(tape: &mut Tape<F>, cell: &GruNodes, x: NodeId, h_prev: NodeId) -> NodeId {
    let z_pre = gate(tape, cell.w_z, x, cell.u_z, h_prev, cell.b_z);
    let z = tape.sigmoid(z_pre);
    let r_pre = gate(tape, cell.w_r, x, cell.u_r, h_prev, cell.b_r);
    let r = tape.sigmoid(r_pre);

    let rh = tape.mul(r, h_prev);
    let wx = tape.matvec(cell.w_c, x);
    let urh = tape.matvec(cell.u_c, rh);
    let pre = tape.add(wx, urh);
    let pre_b = tape.add(pre, cell.b_c);
    let cand = tape.tanh(pre_b);

    let keep = tape.mul(z, h_prev);
    let one_minus_z = tape.affine(z, -F::ONE, F::ONE);
    let update = tape.mul(one_minus_z, cand);
    tape.add(keep, update)
}

/// Eager GRU cell over a parameter-store slice named `prefix.*`.
pub fn gru_cell(x: &Tensor, h_prev: &Tensor, params: &ParameterStore, prefix: &str) -> Result<Tensor> {
    if x.rank() != 1 || h_prev.rank() != 1 {
        return Err(Error::shape("gru_cell expects vector inputs"));
    }
    let w_z = params
        .get(&format!("{prefix}.w_z"))
        .ok_or_else(|| Error::usage(format!("missing GRU slice `{prefix}`")))?;
    if w_z.shape()[1] != x.len() || w_z.shape()[0] != h_prev.len() {
        return Err(Error::shape(format!(
            "gru_cell: weights {:?} incompatible with x[{}], h[{}]",
            w_z.shape(),
            x.len(),
            h_prev.len()
        )));
    }
    let mut tape = Tape::<f32>::new();
    let tp = tape.load_store(params);
    let cell = GruNodes::resolve(&tp, prefix)?;
    let xn = tape.constant(Value::from_tensor(x));
    let hn = tape.constant(Value::from_tensor(h_prev));
    let out = gru_step(&mut tape, &cell, xn, hn);
    Ok(tape.value(out).to_tensor())
}
