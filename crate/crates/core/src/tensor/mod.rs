//! Dense row-major `f64` tensors with a reverse-mode tape.
//!
//! A [`Tape`] records every operation as a node holding its output value.
//! [`Var`] is a cheap handle into the tape. Trainable weights live in a
//! [`ParamStore`] outside the tape; [`Tape::param`] copies a weight in as a
//! leaf and [`ParamStore::accumulate_grads`] pulls the gradients back out
//! after [`Tape::backward`].

mod kernels;
mod ops;

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

pub use ops::CustomOp;

/// Dense tensor. `shape` may be empty for a scalar.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape {
                op: "tensor",
                detail: format!("shape {:?} needs {} elements, got {}", shape, n, data.len()),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![0.0; n] }
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![value; n] }
    }

    pub fn scalar(value: f64) -> Self {
        Self { shape: Vec::new(), data: vec![value] }
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        Self { shape: vec![data.len()], data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Size of the trailing axis (1 for scalars).
    pub fn last_dim(&self) -> usize {
        self.shape.last().copied().unwrap_or(1)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Index of a parameter inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct ParamId(pub usize);

pub(crate) enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBroadcast(Var, Var),
    MulBroadcast(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    MatMul(Var, Var),
    Bmm { a: Var, b: Var, transpose_b: bool },
    Transpose(Var),
    Permute { x: Var, axes: Vec<usize> },
    Reshape(Var),
    Concat { inputs: Vec<Var>, axis: usize },
    Slice { x: Var, axis: usize, start: usize },
    Relu(Var),
    LeakyRelu(Var, f64),
    Gelu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Softmax(Var),
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<f64>, inv_std: Vec<f64> },
    Sum(Var),
    Mean(Var),
    CrossEntropy { logits: Var, labels: Vec<usize>, probs: Vec<f64> },
    SoftCrossEntropy { logits: Var, targets: Vec<f64>, probs: Vec<f64> },
    Custom { inputs: Vec<Var>, op: Box<dyn CustomOp> },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
    param: Option<ParamId>,
}

/// Wengert list of recorded operations. Nodes are appended in evaluation
/// order, so the node vector is already topologically sorted.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub(crate) fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad, grad: None, param: None });
        Var(self.nodes.len() - 1)
    }

    /// Leaf node; `requires_grad` controls whether backward fills its gradient.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    /// Detached leaf: never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    /// Copies a parameter onto the tape as a gradient-tracking leaf.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let v = self.leaf(store.get(id).value.clone(), true);
        self.nodes[v.0].param = Some(id);
        v
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a node, if backward reached it.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    /// Clears every accumulated gradient on the tape.
    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    pub(crate) fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Reverse pass from a scalar `loss`. Gradients are added to whatever
    /// each node already holds, so two passes yield twice the gradient.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::Shape {
                op: "backward",
                detail: format!("loss must be scalar, got shape {:?}", self.nodes[loss.0].value.shape),
            });
        }
        let mut adj: Vec<Option<Vec<f64>>> = Vec::with_capacity(loss.0 + 1);
        adj.resize_with(loss.0 + 1, || None);
        adj[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            if self.nodes[i].requires_grad {
                let contributions = ops::backward_node(self, i, &g);
                for (var, cg) in contributions {
                    if !self.nodes[var.0].requires_grad {
                        continue;
                    }
                    match &mut adj[var.0] {
                        Some(acc) => kernels::axpy(acc, &cg),
                        slot @ None => *slot = Some(cg),
                    }
                }
                let node = &mut self.nodes[i];
                match &mut node.grad {
                    Some(acc) => kernels::axpy(acc, &g),
                    slot @ None => *slot = Some(g),
                }
            }
        }
        Ok(())
    }
}

/// A named trainable array with its gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Vec<f64>,
}

/// Owned collection of trainable parameters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let grad = vec![0.0; value.len()];
        self.params.push(Param { name: name.into(), value, grad });
        ParamId(self.params.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// Adds the gradients held by parameter leaves of `tape` into the store.
    pub fn accumulate_grads(&mut self, tape: &Tape) {
        for node in &tape.nodes {
            if let (Some(id), Some(g)) = (node.param, node.grad.as_ref()) {
                kernels::axpy(&mut self.params[id.0].grad, g);
            }
        }
    }

    /// Total number of scalar weights.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Order-sensitive FNV checksum over every weight bit pattern.
    pub fn checksum(&self) -> u64 {
        let mut h = 0xcbf2_9ce4_8422_2325u64;
        for p in &self.params {
            for v in p.value.data() {
                for b in v.to_bits().to_le_bytes() {
                    h = (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3);
                }
            }
        }
        h
    }
}

#[cfg(test)]
mod tests;
