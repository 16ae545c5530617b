//! Reverse-mode automatic differentiation on a Wengert tape.
//!
//! A [`Tape`] records every primitive operation of a forward pass in order,
//! together with the produced values. Replaying the record backwards yields
//! gradients for every parameter leaf that participated; parameters that were
//! loaded but never used get zero gradients.
//!
//! The tape is generic over the scalar type: the production path runs in
//! `f32`, while [`finite_difference_check`] instantiates the same code in
//! `f64` so that central differences at epsilon 1e-4 are meaningful.

use std::collections::BTreeMap;
use std::fmt::Debug;

use crate::error::{Error, Result};
use crate::tensor::{ParameterStore, Tensor};

/// Log floor applied inside [`Tape::ln_floor`] so cross-entropy terms never
/// produce -inf on underflowed attention weights.
pub const LN_FLOOR: f64 = 1e-12;

/// Scalar type the tape can compute with.
pub trait Real:
    Copy
    + PartialOrd
    + Debug
    + Send
    + Sync
    + 'static
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::Div<Output = Self>
    + std::ops::Neg<Output = Self>
    + std::ops::AddAssign
{
    const ZERO: Self;
    const ONE: Self;
    fn from_f32(v: f32) -> Self;
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn tanh(self) -> Self;
    fn sqrt(self) -> Self;
    fn abs(self) -> Self;
    fn max(self, other: Self) -> Self;
    fn is_finite(self) -> bool;
}

macro_rules! impl_real {
    ($t:ty) => {
        impl Real for $t {
            const ZERO: Self = 0.0;
            const ONE: Self = 1.0;
            fn from_f32(v: f32) -> Self {
                v as $t
            }
            fn from_f64(v: f64) -> Self {
                v as $t
            }
            fn to_f64(self) -> f64 {
                self as f64
            }
            fn exp(self) -> Self {
                self.exp()
            }
            fn ln(self) -> Self {
                self.ln()
            }
            fn tanh(self) -> Self {
                self.tanh()
            }
            fn sqrt(self) -> Self {
                self.sqrt()
            }
            fn abs(self) -> Self {
                self.abs()
            }
            fn max(self, other: Self) -> Self {
                if self > other {
                    self
                } else {
                    other
                }
            }
            fn is_finite(self) -> bool {
                <$t>::is_finite(self)
            }
        }
    };
}

impl_real!(f32);
impl_real!(f64);

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

/// Shape plus flat data at the tape's precision.
#[derive(Debug, Clone)]
pub struct Value<F> {
    pub shape: Vec<usize>,
    pub data: Vec<F>,
}

impl<F: Real> Value<F> {
    pub fn scalar(&self) -> F {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn to_tensor(&self) -> Tensor {
        let data = self.data.iter().map(|v| v.to_f64() as f32).collect();
        Tensor::new(self.shape.clone(), data).expect("value shape consistent")
    }

    pub fn from_tensor(t: &Tensor) -> Self {
        Value {
            shape: t.shape().to_vec(),
            data: t.data().iter().map(|&v| F::from_f32(v)).collect(),
        }
    }
}

/// One recorded primitive. Indices refer to earlier nodes only.
#[derive(Debug, Clone)]
enum Op<F> {
    /// Parameter or constant input; parameters carry an index into
    /// `Tape::params`.
    Leaf { param: Option<usize> },
    /// `M v` for matrix `[r,c]` and vector `[c]`.
    MatVec { m: NodeId, v: NodeId },
    /// `Mᵀ v` for matrix `[r,c]` and vector `[r]`.
    MatVecT { m: NodeId, v: NodeId },
    /// `A Bᵀ` for `[r,k]` and `[m,k]`.
    MatMatT { a: NodeId, b: NodeId },
    /// Vectors of equal length stacked as matrix rows.
    StackRows { rows: Vec<NodeId> },
    /// Row `index` of a matrix; gradient scatters into that row.
    Row { m: NodeId, index: usize },
    Concat { parts: Vec<NodeId> },
    Add { a: NodeId, b: NodeId },
    Mul { a: NodeId, b: NodeId },
    /// `mul * x + add`, elementwise with scalar constants. Only the
    /// multiplier matters for the backward pass.
    AffineConst { x: NodeId, mul: F },
    Sigmoid { x: NodeId },
    Tanh { x: NodeId },
    /// Vector softmax (max-shifted).
    Softmax { x: NodeId },
    /// Vector log-softmax.
    LogSoftmax { x: NodeId },
    /// Max over groups of `pieces` consecutive elements.
    Maxout { x: NodeId, pieces: usize },
    /// `ln(max(x, LN_FLOOR))` elementwise.
    LnFloor { x: NodeId },
    /// `x - c` elementwise with a constant vector (pass-through backward).
    SubConst { x: NodeId },
    /// `Σ_i w_i x_i` with a constant weight vector.
    DotConst { x: NodeId, w: Vec<F> },
    /// Single element as a scalar.
    Pick { x: NodeId, index: usize },
    /// Sum of all elements.
    Sum { x: NodeId },
    /// Sum of scalar nodes.
    SumScalars { xs: Vec<NodeId> },
}

struct Node<F> {
    op: Op<F>,
    value: Value<F>,
}

/// Parameter leaves registered on a tape, addressable by store name.
#[derive(Debug, Clone)]
pub struct TapeParams {
    ids: BTreeMap<String, NodeId>,
}

impl TapeParams {
    pub fn get(&self, name: &str) -> Result<NodeId> {
        self.ids
            .get(name)
            .copied()
            .ok_or_else(|| Error::usage(format!("parameter `{name}` not on tape")))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.ids.keys().map(|s| s.as_str())
    }
}

/// The computation record: ordered primitive ops plus their values.
pub struct Tape<F: Real> {
    nodes: Vec<Node<F>>,
    /// (name, node, shape) per registered parameter.
    params: Vec<(String, NodeId, Vec<usize>)>,
}

impl<F: Real> Default for Tape<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Real> Tape<F> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), params: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Value<F> {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        &self.nodes[id.0].value.shape
    }

    fn push(&mut self, op: Op<F>, value: Value<F>) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { op, value });
        id
    }

    /// Registers a named parameter leaf.
    pub fn param(&mut self, name: &str, value: Value<F>) -> NodeId {
        let idx = self.params.len();
        let shape = value.shape.clone();
        let id = self.push(Op::Leaf { param: Some(idx) }, value);
        self.params.push((name.to_string(), id, shape));
        id
    }

    /// Registers every tensor of `store` as a parameter leaf, in
    /// lexicographic name order.
    pub fn load_store(&mut self, store: &ParameterStore) -> TapeParams {
        let mut ids = BTreeMap::new();
        for (name, tensor) in store.iter() {
            let id = self.param(name, Value::from_tensor(tensor));
            ids.insert(name.to_string(), id);
        }
        TapeParams { ids }
    }

    /// Non-trainable input.
    pub fn constant(&mut self, value: Value<F>) -> NodeId {
        self.push(Op::Leaf { param: None }, value)
    }

    pub fn constant_vector(&mut self, data: Vec<F>) -> NodeId {
        let shape = vec![data.len()];
        self.constant(Value { shape, data })
    }

    // -- primitive ops -----------------------------------------------------
    //
    // Shape checks here are assertions: callers inside this crate construct
    // graphs from validated inputs, and public entry points re-check their
    // own preconditions with proper errors.

    pub fn matvec(&mut self, m: NodeId, v: NodeId) -> NodeId {
        let (ms, vs) = (self.shape(m), self.shape(v));
        assert!(ms.len() == 2 && vs.len() == 1 && ms[1] == vs[0], "matvec {ms:?} x {vs:?}");
        let (r, c) = (ms[0], ms[1]);
        let mut out = vec![F::ZERO; r];
        let md = &self.nodes[m.0].value.data;
        let vd = &self.nodes[v.0].value.data;
        for i in 0..r {
            let mut acc = F::ZERO;
            let row = &md[i * c..(i + 1) * c];
            for j in 0..c {
                acc += row[j] * vd[j];
            }
            out[i] = acc;
        }
        self.push(Op::MatVec { m, v }, Value { shape: vec![r], data: out })
    }

    pub fn matvec_t(&mut self, m: NodeId, v: NodeId) -> NodeId {
        let (ms, vs) = (self.shape(m), self.shape(v));
        assert!(ms.len() == 2 && vs.len() == 1 && ms[0] == vs[0], "matvec_t {ms:?} x {vs:?}");
        let (r, c) = (ms[0], ms[1]);
        let mut out = vec![F::ZERO; c];
        let md = &self.nodes[m.0].value.data;
        let vd = &self.nodes[v.0].value.data;
        for i in 0..r {
            let row = &md[i * c..(i + 1) * c];
            let vi = vd[i];
            for j in 0..c {
                out[j] += vi * row[j];
            }
        }
        self.push(Op::MatVecT { m, v }, Value { shape: vec![c], data: out })
    }

    pub fn matmat_t(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (as_, bs) = (self.shape(a), self.shape(b));
        assert!(as_.len() == 2 && bs.len() == 2 && as_[1] == bs[1], "matmat_t {as_:?} x {bs:?}");
        let (r, k, m) = (as_[0], as_[1], bs[0]);
        let ad = &self.nodes[a.0].value.data;
        let bd = &self.nodes[b.0].value.data;
        let mut out = vec![F::ZERO; r * m];
        for i in 0..r {
            let arow = &ad[i * k..(i + 1) * k];
            for j in 0..m {
                let brow = &bd[j * k..(j + 1) * k];
                let mut acc = F::ZERO;
                for x in 0..k {
                    acc += arow[x] * brow[x];
                }
                out[i * m + j] = acc;
            }
        }
        self.push(Op::MatMatT { a, b }, Value { shape: vec![r, m], data: out })
    }

    pub fn stack_rows(&mut self, rows: &[NodeId]) -> NodeId {
        assert!(!rows.is_empty(), "stack_rows of nothing");
        let c = self.shape(rows[0])[0];
        let mut data = Vec::with_capacity(rows.len() * c);
        for &row in rows {
            let s = self.shape(row);
            assert!(s.len() == 1 && s[0] == c, "stack_rows ragged: {s:?} vs [{c}]");
            data.extend_from_slice(&self.nodes[row.0].value.data);
        }
        let shape = vec![rows.len(), c];
        self.push(Op::StackRows { rows: rows.to_vec() }, Value { shape, data })
    }

    pub fn row(&mut self, m: NodeId, index: usize) -> NodeId {
        let ms = self.shape(m);
        assert!(ms.len() == 2 && index < ms[0], "row {index} of {ms:?}");
        let c = ms[1];
        let data = self.nodes[m.0].value.data[index * c..(index + 1) * c].to_vec();
        self.push(Op::Row { m, index }, Value { shape: vec![c], data })
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty());
        let mut data = Vec::new();
        for &p in parts {
            assert_eq!(self.shape(p).len(), 1, "concat expects vectors");
            data.extend_from_slice(&self.nodes[p.0].value.data);
        }
        let shape = vec![data.len()];
        self.push(Op::Concat { parts: parts.to_vec() }, Value { shape, data })
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.shape(a), self.shape(b), "add shape mismatch");
        let ad = &self.nodes[a.0].value.data;
        let bd = &self.nodes[b.0].value.data;
        let data = ad.iter().zip(bd).map(|(&x, &y)| x + y).collect();
        let shape = self.shape(a).to_vec();
        self.push(Op::Add { a, b }, Value { shape, data })
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.shape(a), self.shape(b), "mul shape mismatch");
        let ad = &self.nodes[a.0].value.data;
        let bd = &self.nodes[b.0].value.data;
        let data = ad.iter().zip(bd).map(|(&x, &y)| x * y).collect();
        let shape = self.shape(a).to_vec();
        self.push(Op::Mul { a, b }, Value { shape, data })
    }

    /// `mul * x + add` elementwise.
    pub fn affine(&mut self, x: NodeId, mul: F, add: F) -> NodeId {
        let data = self.nodes[x.0].value.data.iter().map(|&v| mul * v + add).collect();
        let shape = self.shape(x).to_vec();
        self.push(Op::AffineConst { x, mul }, Value { shape, data })
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let data = self
            .nodes[x.0]
            .value
            .data
            .iter()
            .map(|&v| F::ONE / (F::ONE + (-v).exp()))
            .collect();
        let shape = self.shape(x).to_vec();
        self.push(Op::Sigmoid { x }, Value { shape, data })
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let data = self.nodes[x.0].value.data.iter().map(|&v| v.tanh()).collect();
        let shape = self.shape(x).to_vec();
        self.push(Op::Tanh { x }, Value { shape, data })
    }

    pub fn softmax(&mut self, x: NodeId) -> NodeId {
        assert_eq!(self.shape(x).len(), 1, "softmax expects a vector");
        let data = softmax_slice(&self.nodes[x.0].value.data);
        let shape = self.shape(x).to_vec();
        self.push(Op::Softmax { x }, Value { shape, data })
    }

    pub fn log_softmax(&mut self, x: NodeId) -> NodeId {
        assert_eq!(self.shape(x).len(), 1, "log_softmax expects a vector");
        let xd = &self.nodes[x.0].value.data;
        let mut mx = xd[0];
        for &v in xd.iter() {
            mx = mx.max(v);
        }
        let mut denom = F::ZERO;
        for &v in xd.iter() {
            denom += (v - mx).exp();
        }
        let log_denom = denom.ln() + mx;
        let data = xd.iter().map(|&v| v - log_denom).collect();
        let shape = self.shape(x).to_vec();
        self.push(Op::LogSoftmax { x }, Value { shape, data })
    }

    pub fn maxout(&mut self, x: NodeId, pieces: usize) -> NodeId {
        let n = self.shape(x)[0];
        assert!(pieces >= 1 && n % pieces == 0, "maxout: {n} not divisible by {pieces}");
        let xd = &self.nodes[x.0].value.data;
        let data = maxout_slice(xd, pieces);
        let shape = vec![n / pieces];
        self.push(Op::Maxout { x, pieces }, Value { shape, data })
    }

    pub fn ln_floor(&mut self, x: NodeId) -> NodeId {
        let floor = F::from_f64(LN_FLOOR);
        let data = self.nodes[x.0].value.data.iter().map(|&v| v.max(floor).ln()).collect();
        let shape = self.shape(x).to_vec();
        self.push(Op::LnFloor { x }, Value { shape, data })
    }

    pub fn sub_const(&mut self, x: NodeId, c: Vec<F>) -> NodeId {
        assert_eq!(self.nodes[x.0].value.data.len(), c.len(), "sub_const length mismatch");
        let data = self.nodes[x.0].value.data.iter().zip(&c).map(|(&v, &k)| v - k).collect();
        let shape = self.shape(x).to_vec();
        self.push(Op::SubConst { x }, Value { shape, data })
    }

    pub fn dot_const(&mut self, x: NodeId, w: Vec<F>) -> NodeId {
        assert_eq!(self.nodes[x.0].value.data.len(), w.len(), "dot_const length mismatch");
        let mut acc = F::ZERO;
        for (&v, &k) in self.nodes[x.0].value.data.iter().zip(&w) {
            acc += v * k;
        }
        self.push(Op::DotConst { x, w }, Value { shape: vec![], data: vec![acc] })
    }

    pub fn pick(&mut self, x: NodeId, index: usize) -> NodeId {
        assert!(index < self.nodes[x.0].value.data.len(), "pick index out of range");
        let v = self.nodes[x.0].value.data[index];
        self.push(Op::Pick { x, index }, Value { shape: vec![], data: vec![v] })
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let mut acc = F::ZERO;
        for &v in &self.nodes[x.0].value.data {
            acc += v;
        }
        self.push(Op::Sum { x }, Value { shape: vec![], data: vec![acc] })
    }

    pub fn sum_scalars(&mut self, xs: &[NodeId]) -> NodeId {
        assert!(!xs.is_empty());
        let mut acc = F::ZERO;
        for &x in xs {
            assert!(self.shape(x).is_empty(), "sum_scalars expects scalars");
            acc += self.nodes[x.0].value.data[0];
        }
        self.push(Op::SumScalars { xs: xs.to_vec() }, Value { shape: vec![], data: vec![acc] })
    }

    // -- reverse pass ------------------------------------------------------

    /// Replays the record backwards from a scalar loss node.
    ///
    /// Returns one gradient per registered parameter (zero where the
    /// parameter did not participate), keyed by store name.
    pub fn backward(&self, loss: NodeId) -> Result<BTreeMap<String, Value<F>>> {
        if !self.shape(loss).is_empty() {
            return Err(Error::usage(format!(
                "backward requires a scalar terminal node, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut adjoints: Vec<Option<Vec<F>>> = vec![None; self.nodes.len()];
        adjoints[loss.0] = Some(vec![F::ONE]);

        for idx in (0..=loss.0).rev() {
            let Some(dy) = adjoints[idx].take() else { continue };
            self.propagate(idx, &dy, &mut adjoints);
            // Parameter adjoints must survive the sweep.
            if let Op::Leaf { param: Some(_) } = self.nodes[idx].op {
                adjoints[idx] = Some(dy);
            }
        }

        let mut grads = BTreeMap::new();
        for (name, id, shape) in &self.params {
            let data = adjoints[id.0]
                .take()
                .unwrap_or_else(|| vec![F::ZERO; self.nodes[id.0].value.data.len()]);
            grads.insert(name.clone(), Value { shape: shape.clone(), data });
        }
        Ok(grads)
    }

    fn accumulate(&self, adjoints: &mut [Option<Vec<F>>], target: NodeId, contrib: &[F]) {
        let slot = &mut adjoints[target.0];
        match slot {
            Some(existing) => {
                for (e, &c) in existing.iter_mut().zip(contrib) {
                    *e += c;
                }
            }
            None => *slot = Some(contrib.to_vec()),
        }
    }

    fn propagate(&self, idx: usize, dy: &[F], adjoints: &mut [Option<Vec<F>>]) {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf { .. } => {}
            Op::MatVec { m, v } => {
                let (r, c) = (self.shape(*m)[0], self.shape(*m)[1]);
                let md = &self.nodes[m.0].value.data;
                let vd = &self.nodes[v.0].value.data;
                let mut dm = vec![F::ZERO; r * c];
                let mut dv = vec![F::ZERO; c];
                for i in 0..r {
                    let g = dy[i];
                    let row = &md[i * c..(i + 1) * c];
                    let drow = &mut dm[i * c..(i + 1) * c];
                    for j in 0..c {
                        drow[j] = g * vd[j];
                        dv[j] += g * row[j];
                    }
                }
                self.accumulate(adjoints, *m, &dm);
                self.accumulate(adjoints, *v, &dv);
            }
            Op::MatVecT { m, v } => {
                let (r, c) = (self.shape(*m)[0], self.shape(*m)[1]);
                let md = &self.nodes[m.0].value.data;
                let vd = &self.nodes[v.0].value.data;
                let mut dm = vec![F::ZERO; r * c];
                let mut dv = vec![F::ZERO; r];
                for i in 0..r {
                    let row = &md[i * c..(i + 1) * c];
                    let drow = &mut dm[i * c..(i + 1) * c];
                    let vi = vd[i];
                    let mut acc = F::ZERO;
                    for j in 0..c {
                        drow[j] = vi * dy[j];
                        acc += row[j] * dy[j];
                    }
                    dv[i] = acc;
                }
                self.accumulate(adjoints, *m, &dm);
                self.accumulate(adjoints, *v, &dv);
            }
            Op::MatMatT { a, b } => {
                let (r, k) = (self.shape(*a)[0], self.shape(*a)[1]);
                let m = self.shape(*b)[0];
                let ad = &self.nodes[a.0].value.data;
                let bd = &self.nodes[b.0].value.data;
                let mut da = vec![F::ZERO; r * k];
                let mut db = vec![F::ZERO; m * k];
                for i in 0..r {
                    for j in 0..m {
                        let g = dy[i * m + j];
                        let arow = &ad[i * k..(i + 1) * k];
                        let brow = &bd[j * k..(j + 1) * k];
                        let darow = &mut da[i * k..(i + 1) * k];
                        for x in 0..k {
                            darow[x] += g * brow[x];
                        }
                        let dbrow = &mut db[j * k..(j + 1) * k];
                        for x in 0..k {
                            dbrow[x] += g * arow[x];
                        }
                    }
                }
                self.accumulate(adjoints, *a, &da);
                self.accumulate(adjoints, *b, &db);
            }
            Op::StackRows { rows } => {
                let c = self.shape(rows[0])[0];
                for (i, &row) in rows.iter().enumerate() {
                    self.accumulate(adjoints, row, &dy[i * c..(i + 1) * c]);
                }
            }
            Op::Row { m, index } => {
                let (r, c) = (self.shape(*m)[0], self.shape(*m)[1]);
                let mut dm = vec![F::ZERO; r * c];
                dm[index * c..(index + 1) * c].copy_from_slice(dy);
                self.accumulate(adjoints, *m, &dm);
            }
            Op::Concat { parts } => {
                let mut offset = 0;
                for &p in parts {
                    let n = self.nodes[p.0].value.data.len();
                    self.accumulate(adjoints, p, &dy[offset..offset + n]);
                    offset += n;
                }
            }
            Op::Add { a, b } => {
                self.accumulate(adjoints, *a, dy);
                self.accumulate(adjoints, *b, dy);
            }
            Op::Mul { a, b } => {
                let ad = &self.nodes[a.0].value.data;
                let bd = &self.nodes[b.0].value.data;
                let da: Vec<F> = dy.iter().zip(bd).map(|(&g, &y)| g * y).collect();
                let db: Vec<F> = dy.iter().zip(ad).map(|(&g, &x)| g * x).collect();
                self.accumulate(adjoints, *a, &da);
                self.accumulate(adjoints, *b, &db);
            }
            Op::AffineConst { x, mul } => {
                let dx: Vec<F> = dy.iter().map(|&g| *mul * g).collect();
                self.accumulate(adjoints, *x, &dx);
            }
            Op::Sigmoid { x } => {
                let yd = &node.value.data;
                let dx: Vec<F> =
                    dy.iter().zip(yd).map(|(&g, &y)| g * y * (F::ONE - y)).collect();
                self.accumulate(adjoints, *x, &dx);
            }
            Op::Tanh { x } => {
                let yd = &node.value.data;
                let dx: Vec<F> = dy.iter().zip(yd).map(|(&g, &y)| g * (F::ONE - y * y)).collect();
                self.accumulate(adjoints, *x, &dx);
            }
            Op::Softmax { x } => {
                let yd = &node.value.data;
                let mut inner = F::ZERO;
                for (&g, &y) in dy.iter().zip(yd) {
                    inner += g * y;
                }
                let dx: Vec<F> = dy.iter().zip(yd).map(|(&g, &y)| y * (g - inner)).collect();
                self.accumulate(adjoints, *x, &dx);
            }
            Op::LogSoftmax { x } => {
                let yd = &node.value.data;
                let mut total = F::ZERO;
                for &g in dy {
                    total += g;
                }
                let dx: Vec<F> = dy.iter().zip(yd).map(|(&g, &y)| g - y.exp() * total).collect();
                self.accumulate(adjoints, *x, &dx);
            }
            Op::Maxout { x, pieces } => {
                let xd = &self.nodes[x.0].value.data;
                let mut dx = vec![F::ZERO; xd.len()];
                for (g_idx, &g) in dy.iter().enumerate() {
                    let base = g_idx * pieces;
                    let mut win = base;
                    for j in base + 1..base + pieces {
                        if xd[j] > xd[win] {
                            win = j;
                        }
                    }
                    dx[win] += g;
                }
                self.accumulate(adjoints, *x, &dx);
            }
            Op::LnFloor { x } => {
                let floor = F::from_f64(LN_FLOOR);
                let xd = &self.nodes[x.0].value.data;
                let dx: Vec<F> = dy.iter().zip(xd).map(|(&g, &v)| g / v.max(floor)).collect();
                self.accumulate(adjoints, *x, &dx);
            }
            Op::SubConst { x } => {
                self.accumulate(adjoints, *x, dy);
            }
            Op::DotConst { x, w } => {
                let g = dy[0];
                let dx: Vec<F> = w.iter().map(|&k| k * g).collect();
                self.accumulate(adjoints, *x, &dx);
            }
            Op::Pick { x, index } => {
                let mut dx = vec![F::ZERO; self.nodes[x.0].value.data.len()];
                dx[*index] = dy[0];
                self.accumulate(adjoints, *x, &dx);
            }
            Op::Sum { x } => {
                let dx = vec![dy[0]; self.nodes[x.0].value.data.len()];
                self.accumulate(adjoints, *x, &dx);
            }
            Op::SumScalars { xs } => {
                for &x in xs {
                    self.accumulate(adjoints, x, dy);
                }
            }
        }
    }
}

/// Max-shifted softmax of a slice.
pub fn softmax_slice<F: Real>(x: &[F]) -> Vec<F> {
    let mut mx = x[0];
    for &v in x.iter() {
        mx = mx.max(v);
    }
    let mut out: Vec<F> = x.iter().map(|&v| (v - mx).exp()).collect();
    let mut denom = F::ZERO;
    for &v in &out {
        denom += v;
    }
    for v in &mut out {
        *v = *v / denom;
    }
    out
}

/// Max over groups of `pieces` consecutive elements.
pub fn maxout_slice<F: Real>(x: &[F], pieces: usize) -> Vec<F> {
    x.chunks(pieces)
        .map(|group| {
            let mut m = group[0];
            for &v in &group[1..] {
                m = m.max(v);
            }
            m
        })
        .collect()
}

/// Maximum relative disagreement between analytic gradients and central
/// finite differences, over every component of every parameter.
///
/// The loss builder runs at f64 precision regardless of the production
/// scalar type; at f32 the difference quotient would drown in rounding noise
/// at epsilon 1e-4. Relative error per component is
/// `|analytic - cd| / max(|analytic|, |cd|, 1e-8)`.
pub fn finite_difference_check<L>(
    loss_fn: L,
    params: &ParameterStore,
    epsilon: f64,
) -> Result<f64>
where
    L: Fn(&mut Tape<f64>, &TapeParams) -> Result<NodeId>,
{
    if !(epsilon > 0.0 && epsilon <= 1e-2) {
        return Err(Error::usage(format!("epsilon {epsilon} outside (0, 1e-2]")));
    }
    let mut mirror: BTreeMap<String, (Vec<usize>, Vec<f64>)> = BTreeMap::new();
    for (name, tensor) in params.iter() {
        let data = tensor.data().iter().map(|&v| v as f64).collect();
        mirror.insert(name.to_string(), (tensor.shape().to_vec(), data));
    }

    let build = |mirror: &BTreeMap<String, (Vec<usize>, Vec<f64>)>| -> Result<(Tape<f64>, TapeParams, NodeId)> {
        let mut tape = Tape::<f64>::new();
        let mut ids = BTreeMap::new();
        for (name, (shape, data)) in mirror {
            let id = tape.param(name, Value { shape: shape.clone(), data: data.clone() });
            ids.insert(name.clone(), id);
        }
        let tp = TapeParams { ids };
        let loss = loss_fn(&mut tape, &tp)?;
        if !tape.shape(loss).is_empty() {
            return Err(Error::usage("finite_difference_check loss must be scalar"));
        }
        Ok((tape, tp, loss))
    };

    let (tape, _, loss) = build(&mirror)?;
    let analytic = tape.backward(loss)?;

    let names: Vec<String> = mirror.keys().cloned().collect();
    let mut max_rel: f64 = 0.0;
    for name in &names {
        let n = mirror[name].1.len();
        for i in 0..n {
            let orig = mirror[name].1[i];
            mirror.get_mut(name).unwrap().1[i] = orig + epsilon;
            let (tp0, _, l0) = build(&mirror)?;
            let plus = tp0.value(l0).scalar();
            mirror.get_mut(name).unwrap().1[i] = orig - epsilon;
            let (tp1, _, l1) = build(&mirror)?;
            let minus = tp1.value(l1).scalar();
            mirror.get_mut(name).unwrap().1[i] = orig;

            let cd = (plus - minus) / (2.0 * epsilon);
            let an = analytic[name].data[i];
            let rel = (an - cd).abs() / an.abs().max(cd.abs()).max(1e-8);
            if rel > max_rel {
                max_rel = rel;
            }
        }
    }
    Ok(max_rel)
}
