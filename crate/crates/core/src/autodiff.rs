//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! A [`Graph`] is an append-only arena of nodes. Because every operation
//! takes existing node ids and appends a new node, the arena index order
//! is already topological, and the backward pass is a single reverse scan
//! that accumulates gradients by summation.
//!
//! Leaves come in two flavors: [`Graph::param`] (gradients are tracked)
//! and [`Graph::constant`] (frozen; the gradient buffer stays identically
//! zero and the backward scan never writes into it). Gradients accumulate
//! across one backward pass; a second call without [`Graph::zero_grads`]
//! in between is rejected.

use crate::error::{Error, Result};
use crate::tensor::{validate_one_hot, Tensor};

use serde::{Deserialize, Serialize};

/// Slope of the leaky ReLU's negative branch.
pub const LEAKY_SLOPE: f64 = 0.2;

/// Elementwise activation kinds supported by the graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    #[serde(rename = "relu")]
    Relu,
    #[serde(rename = "leaky_relu_0.2")]
    LeakyRelu,
    #[serde(rename = "tanh")]
    Tanh,
    #[serde(rename = "sigmoid")]
    Sigmoid,
    #[serde(rename = "softplus")]
    Softplus,
}

impl Activation {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "relu" => Ok(Activation::Relu),
            "leaky_relu_0.2" => Ok(Activation::LeakyRelu),
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            "softplus" => Ok(Activation::Softplus),
            other => Err(Error::Config(format!(
                "unknown activation kind `{other}` (expected one of: relu, leaky_relu_0.2, tanh, sigmoid, softplus)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::LeakyRelu => "leaky_relu_0.2",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Softplus => "softplus",
        }
    }

    pub fn apply(&self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::LeakyRelu => {
                if x > 0.0 {
                    x
                } else {
                    LEAKY_SLOPE * x
                }
            }
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
            Activation::Softplus => softplus(x),
        }
    }

    /// Derivative given the input `x` and the already-computed output `y`.
    fn derivative(&self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu => {
                if x > 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Softplus => sigmoid(x),
        }
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Overflow-safe `ln(1 + e^x)`.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Stable softmax of a logit slice.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - m).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / total).collect()
}

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Matmul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Neg(NodeId),
    Scale(NodeId, f64),
    AddScalar(NodeId),
    Sum(NodeId),
    Mean(NodeId),
    Reshape(NodeId),
    Activation(Activation, NodeId),
    Log(NodeId),
    SoftmaxCce { logits: NodeId, target: Tensor },
    NearestUpsample { input: NodeId, factor: usize },
}

struct NodeData {
    value: Tensor,
    grad: Option<Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Reverse-mode autodiff arena.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<NodeData>,
    ran_backward: bool,
}

impl Graph {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::with_capacity(256),
            ran_backward: false,
        }
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> NodeId {
        self.nodes.push(NodeData {
            value,
            grad: None,
            op,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Trainable leaf: gradients are accumulated into it.
    pub fn param(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    /// Frozen leaf: participates in the forward pass, receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Accumulated gradient of a node; zeros if nothing reached it.
    pub fn grad(&self, id: NodeId) -> Tensor {
        let node = &self.nodes[id.0];
        node.grad
            .clone()
            .unwrap_or_else(|| Tensor::zeros(node.value.shape().to_vec()))
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn needs_grad(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].requires_grad)
    }

    // ── Operations ──────────────────────────────────────────────────────

    /// `C[i,j] = Σ_t A[i,t]·B[t,j]` for 2-D operands.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        let (sa, sb) = (va.shape(), vb.shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::Shape(format!(
                "matmul requires [m,k] x [k,n], got {sa:?} x {sb:?}"
            )));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        let (da, db) = (va.data(), vb.data());
        for i in 0..m {
            for t in 0..k {
                let ait = da[i * k + t];
                let brow = &db[t * n..(t + 1) * n];
                let crow = &mut out[i * n..(i + 1) * n];
                for j in 0..n {
                    crow[j] += ait * brow[j];
                }
            }
        }
        let rg = self.needs_grad(&[a, b]);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::Matmul(a, b), rg))
    }

    fn elementwise(
        &mut self,
        a: NodeId,
        b: NodeId,
        name: &str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::Shape(format!(
                "elementwise {name} requires matching shapes, got {:?} and {:?}",
                va.shape(),
                vb.shape()
            )));
        }
        let data: Vec<f64> = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = va.shape().to_vec();
        let rg = self.needs_grad(&[a, b]);
        Ok(self.push(Tensor::new(shape, data)?, op, rg))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.elementwise(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.elementwise(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.elementwise(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a);
        let data: Vec<f64> = v.data().iter().map(|&x| -x).collect();
        let t = Tensor::new(v.shape().to_vec(), data).expect("same shape");
        let rg = self.needs_grad(&[a]);
        self.push(t, Op::Neg(a), rg)
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.value(a);
        let data: Vec<f64> = v.data().iter().map(|&x| c * x).collect();
        let t = Tensor::new(v.shape().to_vec(), data).expect("same shape");
        let rg = self.needs_grad(&[a]);
        self.push(t, Op::Scale(a, c), rg)
    }

    pub fn add_scalar(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.value(a);
        let data: Vec<f64> = v.data().iter().map(|&x| x + c).collect();
        let t = Tensor::new(v.shape().to_vec(), data).expect("same shape");
        let rg = self.needs_grad(&[a]);
        self.push(t, Op::AddScalar(a), rg)
    }

    /// Sum of all entries, producing a shape-`[1]` scalar.
    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let total: f64 = self.value(a).data().iter().sum();
        let rg = self.needs_grad(&[a]);
        self.push(Tensor::scalar(total), Op::Sum(a), rg)
    }

    /// Mean of all entries, producing a shape-`[1]` scalar.
    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a);
        let mean = v.data().iter().sum::<f64>() / v.numel() as f64;
        let rg = self.needs_grad(&[a]);
        self.push(Tensor::scalar(mean), Op::Mean(a), rg)
    }

    /// Mean of a list of scalar nodes (summed left to right).
    pub fn mean_of(&mut self, ids: &[NodeId]) -> Result<NodeId> {
        let first = *ids
            .first()
            .ok_or_else(|| Error::Validation("mean_of needs at least one node".into()))?;
        let mut acc = first;
        for &id in &ids[1..] {
            acc = self.add(acc, id)?;
        }
        Ok(self.scale(acc, 1.0 / ids.len() as f64))
    }

    pub fn reshape(&mut self, a: NodeId, shape: Vec<usize>) -> Result<NodeId> {
        let v = self.value(a);
        let expected: usize = shape.iter().product();
        if expected != v.numel() || shape.contains(&0) {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} ({} values) to {:?}",
                v.shape(),
                v.numel(),
                shape
            )));
        }
        let t = Tensor::new(shape, v.data().to_vec())?;
        let rg = self.needs_grad(&[a]);
        Ok(self.push(t, Op::Reshape(a), rg))
    }

    pub fn activation(&mut self, kind: Activation, a: NodeId) -> NodeId {
        let v = self.value(a);
        let data: Vec<f64> = v.data().iter().map(|&x| kind.apply(x)).collect();
        let t = Tensor::new(v.shape().to_vec(), data).expect("same shape");
        let rg = self.needs_grad(&[a]);
        self.push(t, Op::Activation(kind, a), rg)
    }

    /// Elementwise natural log. The caller must ensure positive inputs.
    pub fn log(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a);
        let data: Vec<f64> = v.data().iter().map(|&x| x.ln()).collect();
        let t = Tensor::new(v.shape().to_vec(), data).expect("same shape");
        let rg = self.needs_grad(&[a]);
        self.push(t, Op::Log(a), rg)
    }

    /// Fused softmax + categorical cross-entropy against a one-hot target,
    /// stabilized through log-sum-exp: `lse(logits) - logits[target]`.
    ///
    /// The gradient with respect to the logits is `softmax(logits) - target`.
    pub fn softmax_cce(&mut self, logits: NodeId, target: &Tensor) -> Result<NodeId> {
        let v = self.value(logits);
        if v.shape() != target.shape() {
            return Err(Error::Shape(format!(
                "softmax_cce requires logits and target of the same shape, got {:?} and {:?}",
                v.shape(),
                target.shape()
            )));
        }
        if v.numel() == 0 {
            return Err(Error::Validation(
                "softmax_cce requires at least one class".into(),
            ));
        }
        let hot = validate_one_hot(target)?;
        let data = v.data();
        let (max_idx, max) =
            data.iter()
                .cloned()
                .enumerate()
                .fold(
                    (0, f64::NEG_INFINITY),
                    |acc, (i, x)| {
                        if x > acc.1 {
                            (i, x)
                        } else {
                            acc
                        }
                    },
                );
        let sum_rest: f64 = data
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != max_idx)
            .map(|(_, &l)| (l - max).exp())
            .sum();
        let loss = sum_rest.ln_1p() - (data[hot] - max);
        let rg = self.needs_grad(&[logits]);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SoftmaxCce {
                logits,
                target: target.clone(),
            },
            rg,
        ))
    }

    /// Nearest-neighbor upsampling of a 2-D tensor by integer factor `f`:
    /// `out[i,j] = in[i/f, j/f]`.
    pub fn nearest_upsample(&mut self, a: NodeId, f: usize) -> Result<NodeId> {
        if f < 1 {
            return Err(Error::Validation("upsample factor must be >= 1".into()));
        }
        let v = self.value(a);
        if v.shape().len() != 2 {
            return Err(Error::Shape(format!(
                "nearest_upsample requires a 2-D input, got shape {:?}",
                v.shape()
            )));
        }
        let (h, w) = (v.shape()[0], v.shape()[1]);
        let (oh, ow) = (h * f, w * f);
        let mut out = vec![0.0; oh * ow];
        let data = v.data();
        for i in 0..oh {
            let src_row = &data[(i / f) * w..(i / f + 1) * w];
            let dst_row = &mut out[i * ow..(i + 1) * ow];
            for j in 0..ow {
                dst_row[j] = src_row[j / f];
            }
        }
        let rg = self.needs_grad(&[a]);
        Ok(self.push(
            Tensor::new(vec![oh, ow], out)?,
            Op::NearestUpsample {
                input: a,
                factor: f,
            },
            rg,
        ))
    }

    // ── Backward ────────────────────────────────────────────────────────

    /// Reverse accumulation from a scalar-shaped root. Gradients sum into
    /// the `grad` buffers of every reachable node that requires them.
    pub fn backward(&mut self, root: NodeId) -> Result<()> {
        if self.ran_backward {
            return Err(Error::Validation(
                "backward already ran on this graph; call zero_grads before running it again"
                    .into(),
            ));
        }
        if !self.nodes[root.0].value.is_scalar() {
            return Err(Error::Validation(format!(
                "backward requires a scalar-shaped root, got shape {:?}",
                self.nodes[root.0].value.shape()
            )));
        }
        self.ran_backward = true;
        let root_shape = self.nodes[root.0].value.shape().to_vec();
        self.nodes[root.0].grad = Some(Tensor::filled(root_shape, 1.0));

        for idx in (0..=root.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let Some(g) = self.nodes[idx].grad.clone() else {
                continue;
            };
            let op = self.nodes[idx].op.clone();
            self.propagate(&op, g.data());
        }
        Ok(())
    }

    /// Clears all gradient buffers, allowing another backward pass.
    pub fn zero_grads(&mut self) {
        for node in &mut self.nodes {
            node.grad = None;
        }
        self.ran_backward = false;
    }

    fn accumulate(&mut self, id: NodeId, contribution: &[f64]) {
        let node = &mut self.nodes[id.0];
        if !node.requires_grad {
            return;
        }
        let grad = node
            .grad
            .get_or_insert_with(|| Tensor::zeros(node.value.shape().to_vec()));
        for (g, &c) in grad.data_mut().iter_mut().zip(contribution) {
            *g += c;
        }
    }

    fn propagate(&mut self, op: &Op, g: &[f64]) {
        match op {
            Op::Leaf => {}
            Op::Matmul(a, b) => {
                let (m, k) = {
                    let s = self.value(*a).shape();
                    (s[0], s[1])
                };
                let n = self.value(*b).shape()[1];
                let da = self.value(*a).data().to_vec();
                let db = self.value(*b).data().to_vec();
                // dA[i,t] = Σ_j g[i,j]·B[t,j]
                let mut ga = vec![0.0; m * k];
                for i in 0..m {
                    for t in 0..k {
                        let mut acc = 0.0;
                        for j in 0..n {
                            acc += g[i * n + j] * db[t * n + j];
                        }
                        ga[i * k + t] = acc;
                    }
                }
                // dB[t,j] = Σ_i A[i,t]·g[i,j]
                let mut gb = vec![0.0; k * n];
                for t in 0..k {
                    for i in 0..m {
                        let ait = da[i * k + t];
                        for j in 0..n {
                            gb[t * n + j] += ait * g[i * n + j];
                        }
                    }
                }
                self.accumulate(*a, &ga);
                self.accumulate(*b, &gb);
            }
            Op::Add(a, b) => {
                self.accumulate(*a, g);
                self.accumulate(*b, g);
            }
            Op::Sub(a, b) => {
                self.accumulate(*a, g);
                let neg: Vec<f64> = g.iter().map(|&x| -x).collect();
                self.accumulate(*b, &neg);
            }
            Op::Mul(a, b) => {
                let vb = self.value(*b).data().to_vec();
                let va = self.value(*a).data().to_vec();
                let ga: Vec<f64> = g.iter().zip(&vb).map(|(&gi, &y)| gi * y).collect();
                let gb: Vec<f64> = g.iter().zip(&va).map(|(&gi, &x)| gi * x).collect();
                self.accumulate(*a, &ga);
                self.accumulate(*b, &gb);
            }
            Op::Neg(a) => {
                let neg: Vec<f64> = g.iter().map(|&x| -x).collect();
                self.accumulate(*a, &neg);
            }
            Op::Scale(a, c) => {
                let scaled: Vec<f64> = g.iter().map(|&x| c * x).collect();
                self.accumulate(*a, &scaled);
            }
            Op::AddScalar(a) => {
                self.accumulate(*a, g);
            }
            Op::Sum(a) => {
                let n = self.value(*a).numel();
                self.accumulate(*a, &vec![g[0]; n]);
            }
            Op::Mean(a) => {
                let n = self.value(*a).numel();
                self.accumulate(*a, &vec![g[0] / n as f64; n]);
            }
            Op::Reshape(a) => {
                self.accumulate(*a, g);
            }
            Op::Activation(kind, a) => {
                // Recompute outputs from inputs; cheaper than caching them
                // would be at these sizes.
                let contrib: Vec<f64> = self
                    .value(*a)
                    .data()
                    .iter()
                    .zip(g)
                    .map(|(&x, &gi)| gi * kind.derivative(x, kind.apply(x)))
                    .collect();
                self.accumulate(*a, &contrib);
            }
            Op::Log(a) => {
                let contrib: Vec<f64> = self
                    .value(*a)
                    .data()
                    .iter()
                    .zip(g)
                    .map(|(&x, &gi)| gi / x)
                    .collect();
                self.accumulate(*a, &contrib);
            }
            Op::SoftmaxCce { logits, target } => {
                let probs = softmax(self.value(*logits).data());
                let contrib: Vec<f64> = probs
                    .iter()
                    .zip(target.data())
                    .map(|(&p, &t)| g[0] * (p - t))
                    .collect();
                self.accumulate(*logits, &contrib);
            }
            Op::NearestUpsample { input, factor } => {
                let (h, w) = {
                    let s = self.value(*input).shape();
                    (s[0], s[1])
                };
                let f = *factor;
                let ow = w * f;
                // Each input pixel sums the gradients of its f² replicas.
                let mut contrib = vec![0.0; h * w];
                for i in 0..h * f {
                    for j in 0..ow {
                        contrib[(i / f) * w + j / f] += g[i * ow + j];
                    }
                }
                self.accumulate(*input, &contrib);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::one_hot;

    const LN_4: f64 = 1.3862943611198906;

    fn t1(data: Vec<f64>) -> Tensor {
        Tensor::from_vec(data)
    }

    #[test]
    fn matmul_identity() {
        let mut g = Graph::new();
        let i2 = g.constant(Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let b = g.constant(Tensor::new(vec![2, 2], vec![3.0, 4.0, 5.0, 6.0]).unwrap());
        let c = g.matmul(i2, b).unwrap();
        assert_eq!(g.value(c).data(), &[3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn matmul_one_by_one() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::new(vec![1, 1], vec![2.0]).unwrap());
        let b = g.constant(Tensor::new(vec![1, 1], vec![7.0]).unwrap());
        let c = g.matmul(a, b).unwrap();
        assert_eq!(g.value(c).data(), &[14.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(vec![2, 3]));
        let b = g.constant(Tensor::zeros(vec![4, 2]));
        let err = g.matmul(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[4, 2]"), "{msg}");
    }

    #[test]
    fn matmul_matches_triple_loop_oracle() {
        // Independent oracle: literal definition C[i,j] = Σ_t A[i,t]·B[t,j].
        let mut rng = crate::rng::Rng::new(11);
        let a: Vec<f64> = (0..12).map(|_| rng.uniform_in(-2.0, 2.0)).collect();
        let b: Vec<f64> = (0..8).map(|_| rng.uniform_in(-2.0, 2.0)).collect();
        let mut expected = vec![0.0; 3 * 2];
        for i in 0..3 {
            for j in 0..2 {
                let mut acc = 0.0;
                for t in 0..4 {
                    acc += a[i * 4 + t] * b[t * 2 + j];
                }
                expected[i * 2 + j] = acc;
            }
        }
        let mut g = Graph::new();
        let na = g.constant(Tensor::new(vec![3, 4], a).unwrap());
        let nb = g.constant(Tensor::new(vec![4, 2], b).unwrap());
        let c = g.matmul(na, nb).unwrap();
        for (got, want) in g.value(c).data().iter().zip(&expected) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn activation_basics() {
        let mut g = Graph::new();
        let x = g.constant(t1(vec![-1.0, 0.0, 2.0]));
        let y = g.activation(Activation::Relu, x);
        assert_eq!(g.value(y).data(), &[0.0, 0.0, 2.0]);

        let z = g.constant(t1(vec![0.0]));
        let s = g.activation(Activation::Sigmoid, z);
        assert_eq!(g.value(s).data(), &[0.5]);

        let sp = g.activation(Activation::Softplus, z);
        assert!((g.value(sp).data()[0] - 2.0_f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn activation_parse_round_trip_and_unknown_kind() {
        for kind in [
            Activation::Relu,
            Activation::LeakyRelu,
            Activation::Tanh,
            Activation::Sigmoid,
            Activation::Softplus,
        ] {
            assert_eq!(Activation::parse(kind.name()).unwrap(), kind);
        }
        assert!(matches!(Activation::parse("gelu"), Err(Error::Config(_))));
    }

    #[test]
    fn softplus_is_overflow_safe() {
        assert!((softplus(800.0) - 800.0).abs() < 1e-9);
        assert!(softplus(-800.0) >= 0.0);
        assert!(softplus(-800.0).is_finite());
    }

    #[test]
    fn cce_uniform_logits() {
        let mut g = Graph::new();
        let logits = g.constant(t1(vec![0.0; 4]));
        let target = one_hot(4, 0).unwrap();
        let loss = g.softmax_cce(logits, &target).unwrap();
        assert!((g.value(loss).item().unwrap() - LN_4).abs() < 1e-12);
    }

    #[test]
    fn cce_saturated_correct_class() {
        let mut g = Graph::new();
        let logits = g.constant(t1(vec![100.0, 0.0, 0.0, 0.0]));
        let target = one_hot(4, 0).unwrap();
        let loss = g.softmax_cce(logits, &target).unwrap();
        assert!(g.value(loss).item().unwrap() < 1e-10);
        assert!(g.value(loss).item().unwrap() >= 0.0);
    }

    #[test]
    fn cce_matches_unfused_oracle() {
        // Independent oracle: plain softmax followed by -log p[target],
        // gradient softmax - target assembled without the fused path.
        let logits_data: Vec<f64> = vec![1.0, 2.0, 3.0];
        let exps: Vec<f64> = logits_data.iter().map(|&l| l.exp()).collect();
        let total: f64 = exps.iter().sum();
        let probs: Vec<f64> = exps.iter().map(|&e| e / total).collect();
        let expected_loss = -probs[2].ln();
        let expected_grad: Vec<f64> = probs
            .iter()
            .enumerate()
            .map(|(i, &p)| if i == 2 { p - 1.0 } else { p })
            .collect();

        let mut g = Graph::new();
        let logits = g.param(t1(logits_data));
        let target = one_hot(3, 2).unwrap();
        let loss = g.softmax_cce(logits, &target).unwrap();
        assert!((g.value(loss).item().unwrap() - expected_loss).abs() < 1e-10);
        g.backward(loss).unwrap();
        for (got, want) in g.grad(logits).data().iter().zip(&expected_grad) {
            assert!((got - want).abs() < 1e-10);
        }
    }

    #[test]
    fn cce_rejects_non_one_hot_target() {
        let mut g = Graph::new();
        let logits = g.constant(t1(vec![0.0, 0.0]));
        let bad = t1(vec![0.5, 0.5]);
        assert!(matches!(
            g.softmax_cce(logits, &bad),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn softmax_sums_to_one_and_stays_in_range() {
        let probs = softmax(&[1000.0, 999.0, -1000.0]);
        let total: f64 = probs.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(probs.iter().all(|&p| (0.0..=1.0).contains(&p)));
    }

    #[test]
    fn upsample_index_map() {
        let mut g = Graph::new();
        let img = g.constant(Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let up = g.nearest_upsample(img, 2).unwrap();
        assert_eq!(g.value(up).shape(), &[4, 4]);
        assert_eq!(
            g.value(up).data(),
            &[
                1.0, 1.0, 2.0, 2.0, //
                1.0, 1.0, 2.0, 2.0, //
                3.0, 3.0, 4.0, 4.0, //
                3.0, 3.0, 4.0, 4.0,
            ]
        );
    }

    #[test]
    fn upsample_factor_one_is_identity() {
        let mut g = Graph::new();
        let img = g.constant(Tensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap());
        let up = g.nearest_upsample(img, 1).unwrap();
        assert_eq!(g.value(up), g.value(img));
        assert!(g.nearest_upsample(img, 0).is_err());
    }

    #[test]
    fn upsample_backward_counts_replicas() {
        let mut g = Graph::new();
        let img = g.param(Tensor::filled(vec![2, 2], 0.7));
        let up = g.nearest_upsample(img, 3).unwrap();
        assert!(g.value(up).data().iter().all(|&v| v == 0.7));
        let total = g.sum(up);
        g.backward(total).unwrap();
        // All-ones upstream gradient: each input pixel has 9 replicas.
        assert_eq!(g.grad(img).data(), &[9.0, 9.0, 9.0, 9.0]);
    }

    #[test]
    fn upsample_composition_is_exact() {
        let mut rng = crate::rng::Rng::new(3);
        let data: Vec<f64> = (0..12).map(|_| rng.uniform()).collect();
        let img = Tensor::new(vec![3, 4], data).unwrap();

        let mut g = Graph::new();
        let a = g.constant(img.clone());
        let two = g.nearest_upsample(a, 2).unwrap();
        let then_three = g.nearest_upsample(two, 3).unwrap();
        let b = g.constant(img);
        let six = g.nearest_upsample(b, 6).unwrap();
        assert!(g.value(then_three).bits_eq(g.value(six)));
    }

    #[test]
    fn backward_power_rule() {
        let mut g = Graph::new();
        let w = g.param(t1(vec![3.0]));
        let w2 = g.mul(w, w).unwrap();
        let loss = g.sum(w2);
        g.backward(loss).unwrap();
        assert_eq!(g.grad(w).data(), &[6.0]);
    }

    #[test]
    fn backward_rejects_non_scalar_root() {
        let mut g = Graph::new();
        let w = g.param(t1(vec![1.0, 2.0]));
        assert!(matches!(g.backward(w), Err(Error::Validation(_))));
    }

    #[test]
    fn backward_twice_without_reset_is_rejected() {
        let mut g = Graph::new();
        let w = g.param(t1(vec![2.0]));
        let loss = g.mul(w, w).unwrap();
        g.backward(loss).unwrap();
        assert!(matches!(g.backward(loss), Err(Error::Validation(_))));
        g.zero_grads();
        g.backward(loss).unwrap();
        assert_eq!(g.grad(w).data(), &[4.0]);
    }

    #[test]
    fn frozen_subgraph_receives_zero_grad() {
        let mut g = Graph::new();
        let frozen = g.constant(t1(vec![2.0, 3.0]));
        let trainable = g.param(t1(vec![5.0, 7.0]));
        let prod = g.mul(frozen, trainable).unwrap();
        let loss = g.sum(prod);
        g.backward(loss).unwrap();
        assert_eq!(g.grad(frozen).data(), &[0.0, 0.0]);
        assert_eq!(g.grad(trainable).data(), &[2.0, 3.0]);
    }

    #[test]
    fn gradient_accumulates_over_fanout() {
        // loss = w·w + w  =>  dloss/dw = 2w + 1
        let mut g = Graph::new();
        let w = g.param(t1(vec![3.0]));
        let w2 = g.mul(w, w).unwrap();
        let s = g.add(w2, w).unwrap();
        let loss = g.sum(s);
        g.backward(loss).unwrap();
        assert_eq!(g.grad(w).data(), &[7.0]);
    }

    #[test]
    fn evaluation_is_deterministic() {
        let build = || {
            let mut g = Graph::new();
            let x = g.constant(t1(vec![0.3, -1.2, 0.7]));
            let w =
                g.constant(Tensor::new(vec![3, 2], vec![0.1, -0.4, 0.2, 0.9, -0.3, 0.5]).unwrap());
            let xr = g.reshape(x, vec![1, 3]).unwrap();
            let y = g.matmul(xr, w).unwrap();
            let a = g.activation(Activation::Tanh, y);
            let s = g.mean(a);
            g.value(s).clone()
        };
        assert!(build().bits_eq(&build()));
    }
}
