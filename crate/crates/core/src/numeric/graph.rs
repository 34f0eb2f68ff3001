//! Static computation graph with reverse-mode differentiation.
//!
//! A [`Graph`] is built once by appending nodes; node ids are handed out in
//! append order, so the node list is its own topological order. Parameters live
//! outside the graph in a [`ParamStore`] and are referenced by [`ParamId`]; two
//! graph paths that reference the same id share storage and accumulate into a
//! single gradient.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use super::kernels::{col2im, gemm, im2col, Mat, Window};
use super::tensor::{conv_output_extent, conv_transpose_output_extent, Tensor};
use super::NumericError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named parameter tensors, addressed by [`ParamId`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(tensor);
        ParamId(self.tensors.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor)> {
        self.names
            .iter()
            .zip(&self.tensors)
            .enumerate()
            .map(|(i, (n, t))| (ParamId(i), n.as_str(), t))
    }
}

/// Operation recorded at a graph node.
#[derive(Clone, Debug)]
pub enum Op {
    Input(String),
    Param(ParamId),
    Constant(Tensor),
    /// Input `[n, c, h, w]`, weight `[oc, c, k, k]`, bias `[oc]`.
    Conv2d {
        input: NodeId,
        weight: NodeId,
        bias: Option<NodeId>,
        stride: usize,
        pad: usize,
    },
    /// Input `[n, c, h, w]`, weight `[c, oc, k, k]`, bias `[oc]`.
    ConvTranspose2d {
        input: NodeId,
        weight: NodeId,
        bias: Option<NodeId>,
        stride: usize,
        pad: usize,
    },
    LeakyRelu {
        input: NodeId,
        slope: f32,
    },
    Tanh(NodeId),
    /// Per-sample, per-channel normalization over the spatial axes.
    InstanceNorm {
        input: NodeId,
        eps: f32,
    },
    /// Elementwise sum; a one-element operand broadcasts.
    Add(NodeId, NodeId),
    Mean(NodeId),
    Abs(NodeId),
    Square(NodeId),
    Scale(NodeId, f32),
}

impl Op {
    fn kind(&self) -> &'static str {
        match self {
            Op::Input(_) => "input",
            Op::Param(_) => "param",
            Op::Constant(_) => "constant",
            Op::Conv2d { .. } => "conv2d",
            Op::ConvTranspose2d { .. } => "conv_transpose2d",
            Op::LeakyRelu { .. } => "leaky_relu",
            Op::Tanh(_) => "tanh",
            Op::InstanceNorm { .. } => "instance_norm",
            Op::Add(..) => "add",
            Op::Mean(_) => "mean",
            Op::Abs(_) => "abs",
            Op::Square(_) => "square",
            Op::Scale(..) => "scale",
        }
    }

    fn inputs(&self) -> Vec<NodeId> {
        match *self {
            Op::Input(_) | Op::Param(_) | Op::Constant(_) => Vec::new(),
            Op::Conv2d {
                input,
                weight,
                bias,
                ..
            }
            | Op::ConvTranspose2d {
                input,
                weight,
                bias,
                ..
            } => {
                let mut v = vec![input, weight];
                v.extend(bias);
                v
            }
            Op::LeakyRelu { input, .. } | Op::InstanceNorm { input, .. } => vec![input],
            Op::Tanh(x) | Op::Mean(x) | Op::Abs(x) | Op::Square(x) | Op::Scale(x, _) => vec![x],
            Op::Add(a, b) => vec![a, b],
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    label: Option<String>,
    requires_grad: bool,
}

/// Append-only operation graph.
#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    param_nodes: HashMap<ParamId, NodeId>,
    frozen_nodes: HashMap<ParamId, NodeId>,
}

/// Per-node values produced by [`Graph::forward`].
#[derive(Clone, Debug)]
pub struct Evaluation {
    values: Vec<Option<Tensor>>,
    /// Double-precision shadow of one-element results, so reductions such as a
    /// loss can be read without the final `f32` rounding.
    precise: Vec<Option<f64>>,
}

/// Gradients of a scalar loss, one tensor per parameter reached by the loss.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Gradients {
    by_param: BTreeMap<ParamId, Tensor>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.by_param.get(&id)
    }

    pub fn get_mut(&mut self, id: ParamId) -> Option<&mut Tensor> {
        self.by_param.get_mut(&id)
    }

    pub fn insert(&mut self, id: ParamId, grad: Tensor) {
        self.by_param.insert(id, grad);
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.by_param.iter().map(|(k, v)| (*k, v))
    }

    pub fn len(&self) -> usize {
        self.by_param.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_param.is_empty()
    }
}

pub type Inputs = HashMap<String, Tensor>;

struct NodeName<'a>(usize, Option<&'a str>, &'static str);

impl fmt::Display for NodeName<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.1 {
            Some(l) => write!(f, "#{} {} ({})", self.0, l, self.2),
            None => write!(f, "#{} ({})", self.0, self.2),
        }
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Node ids in evaluation order.
    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> {
        (0..self.nodes.len()).map(NodeId)
    }

    pub fn op(&self, node: NodeId) -> &Op {
        &self.nodes[node.0].op
    }

    /// Attaches a human-readable label used in error messages.
    pub fn label(&mut self, node: NodeId, label: impl Into<String>) -> NodeId {
        self.nodes[node.0].label = Some(label.into());
        node
    }

    fn push(&mut self, op: Op) -> NodeId {
        let requires_grad = match &op {
            Op::Param(_) => true,
            Op::Input(_) | Op::Constant(_) => false,
            other => other
                .inputs()
                .iter()
                .any(|i| self.nodes[i.0].requires_grad),
        };
        debug_assert!(op.inputs().iter().all(|i| i.0 < self.nodes.len()));
        self.nodes.push(Node {
            op,
            label: None,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn input(&mut self, name: impl Into<String>) -> NodeId {
        let name = name.into();
        let node = self.push(Op::Input(name.clone()));
        self.label(node, name)
    }

    /// Graph node for a parameter; repeated calls with the same id return the same node.
    pub fn param(&mut self, id: ParamId) -> NodeId {
        if let Some(&node) = self.param_nodes.get(&id) {
            return node;
        }
        let node = self.push(Op::Param(id));
        self.param_nodes.insert(id, node);
        node
    }

    /// Parameter read without differentiation: no gradient flows to it.
    pub fn frozen_param(&mut self, id: ParamId) -> NodeId {
        if let Some(&node) = self.frozen_nodes.get(&id) {
            return node;
        }
        let node = self.push(Op::Param(id));
        self.nodes[node.0].requires_grad = false;
        self.frozen_nodes.insert(id, node);
        node
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Constant(value))
    }

    pub fn conv2d(
        &mut self,
        input: NodeId,
        weight: NodeId,
        bias: Option<NodeId>,
        stride: usize,
        pad: usize,
    ) -> NodeId {
        self.push(Op::Conv2d {
            input,
            weight,
            bias,
            stride,
            pad,
        })
    }

    pub fn conv_transpose2d(
        &mut self,
        input: NodeId,
        weight: NodeId,
        bias: Option<NodeId>,
        stride: usize,
        pad: usize,
    ) -> NodeId {
        self.push(Op::ConvTranspose2d {
            input,
            weight,
            bias,
            stride,
            pad,
        })
    }

    pub fn leaky_relu(&mut self, input: NodeId, slope: f32) -> NodeId {
        self.push(Op::LeakyRelu { input, slope })
    }

    pub fn tanh(&mut self, input: NodeId) -> NodeId {
        self.push(Op::Tanh(input))
    }

    pub fn instance_norm(&mut self, input: NodeId, eps: f32) -> NodeId {
        self.push(Op::InstanceNorm { input, eps })
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Add(a, b))
    }

    /// `a - b`, expressed as `a + (-1)·b`.
    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let neg = self.scale(b, -1.0);
        self.add(a, neg)
    }

    pub fn mean(&mut self, input: NodeId) -> NodeId {
        self.push(Op::Mean(input))
    }

    pub fn abs(&mut self, input: NodeId) -> NodeId {
        self.push(Op::Abs(input))
    }

    pub fn square(&mut self, input: NodeId) -> NodeId {
        self.push(Op::Square(input))
    }

    pub fn scale(&mut self, input: NodeId, factor: f32) -> NodeId {
        self.push(Op::Scale(input, factor))
    }

    fn name(&self, node: usize) -> NodeName<'_> {
        let n = &self.nodes[node];
        NodeName(node, n.label.as_deref(), n.op.kind())
    }

    fn mismatch(&self, node: usize, expected: String, actual: &[usize]) -> NumericError {
        NumericError::ShapeMismatch {
            node: self.name(node).to_string(),
            expected,
            actual: actual.to_vec(),
        }
    }

    fn value<'a>(
        &self,
        node: NodeId,
        params: &'a ParamStore,
        values: &'a [Option<Tensor>],
    ) -> &'a Tensor {
        match self.nodes[node.0].op {
            Op::Param(id) => params.get(id),
            _ => values[node.0]
                .as_ref()
                .expect("node evaluated before its consumers"),
        }
    }

    /// Evaluates every node in topological order.
    pub fn forward(&self, params: &ParamStore, inputs: &Inputs) -> Result<Evaluation, NumericError> {
        let mut values: Vec<Option<Tensor>> = Vec::with_capacity(self.nodes.len());
        let mut precise: Vec<Option<f64>> = Vec::with_capacity(self.nodes.len());
        for (idx, node) in self.nodes.iter().enumerate() {
            let out = match &node.op {
                Op::Param(id) => {
                    if id.0 >= params.len() {
                        return Err(NumericError::UnknownParam(id.0));
                    }
                    None
                }
                Op::Input(name) => Some(
                    inputs
                        .get(name)
                        .cloned()
                        .ok_or_else(|| NumericError::MissingInput(name.clone()))?,
                ),
                Op::Constant(t) => Some(t.clone()),
                op => Some(self.eval_op(idx, op, params, &values)?),
            };
            let shadow = out
                .as_ref()
                .filter(|t| t.is_scalar())
                .map(|t| self.precise_scalar(&node.op, t, params, &values, &precise));
            values.push(out);
            precise.push(shadow);
        }
        Ok(Evaluation { values, precise })
    }

    fn precise_scalar(
        &self,
        op: &Op,
        value: &Tensor,
        params: &ParamStore,
        values: &[Option<Tensor>],
        precise: &[Option<f64>],
    ) -> f64 {
        let of = |n: NodeId| {
            precise[n.0].unwrap_or_else(|| {
                let t = self.value(n, params, values);
                t.data()[0] as f64
            })
        };
        let scalar_in = |n: NodeId| self.value(n, params, values).is_scalar();
        match *op {
            Op::Mean(x) if scalar_in(x) => of(x),
            Op::Mean(x) => {
                let t = self.value(x, params, values);
                t.data().iter().map(|&v| v as f64).sum::<f64>() / t.numel().max(1) as f64
            }
            Op::Scale(x, s) => of(x) * s as f64,
            Op::Add(a, b) if scalar_in(a) && scalar_in(b) => of(a) + of(b),
            Op::Square(x) => of(x) * of(x),
            Op::Abs(x) => of(x).abs(),
            Op::Tanh(x) => of(x).tanh(),
            Op::LeakyRelu { input, slope } => {
                let v = of(input);
                if v > 0.0 {
                    v
                } else {
                    slope as f64 * v
                }
            }
            _ => value.data()[0] as f64,
        }
    }

    fn eval_op(
        &self,
        idx: usize,
        op: &Op,
        params: &ParamStore,
        values: &[Option<Tensor>],
    ) -> Result<Tensor, NumericError> {
        let val = |n: NodeId| self.value(n, params, values);
        Ok(match *op {
            Op::Conv2d {
                input,
                weight,
                bias,
                stride,
                pad,
            } => {
                let (x, w) = (val(input), val(weight));
                let b = bias.map(val);
                let geo = self.conv_geometry(idx, x, w, b, stride, pad, false)?;
                conv2d_forward(x, w, b, &geo)
            }
            Op::ConvTranspose2d {
                input,
                weight,
                bias,
                stride,
                pad,
            } => {
                let (x, w) = (val(input), val(weight));
                let b = bias.map(val);
                let geo = self.conv_geometry(idx, x, w, b, stride, pad, true)?;
                conv_transpose2d_forward(x, w, b, &geo)
            }
            Op::LeakyRelu { input, slope } => {
                map(val(input), |v| if v > 0.0 { v } else { slope * v })
            }
            Op::Tanh(x) => map(val(x), f32::tanh),
            Op::InstanceNorm { input, eps } => {
                let x = val(input);
                if x.shape().len() != 4 {
                    return Err(self.mismatch(idx, "rank 4 [n, c, h, w]".into(), x.shape()));
                }
                instance_norm_forward(x, eps)
            }
            Op::Add(a, b) => {
                let (a, b) = (val(a), val(b));
                if a.shape() == b.shape() {
                    zip(a, b, |x, y| x + y)
                } else if b.is_scalar() {
                    let s = b.item();
                    map(a, |x| x + s)
                } else if a.is_scalar() {
                    let s = a.item();
                    map(b, |x| x + s)
                } else {
                    return Err(self.mismatch(idx, format!("{:?}", a.shape()), b.shape()));
                }
            }
            Op::Mean(x) => {
                let x = val(x);
                let sum: f64 = x.data().iter().map(|&v| v as f64).sum();
                Tensor::scalar((sum / x.numel().max(1) as f64) as f32)
            }
            Op::Abs(x) => map(val(x), f32::abs),
            Op::Square(x) => map(val(x), |v| v * v),
            Op::Scale(x, s) => map(val(x), |v| v * s),
            Op::Input(_) | Op::Param(_) | Op::Constant(_) => unreachable!(),
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn conv_geometry(
        &self,
        idx: usize,
        x: &Tensor,
        w: &Tensor,
        b: Option<&Tensor>,
        stride: usize,
        pad: usize,
        transposed: bool,
    ) -> Result<ConvGeometry, NumericError> {
        let xs = x.shape();
        let ws = w.shape();
        if xs.len() != 4 {
            return Err(self.mismatch(idx, "input rank 4 [n, c, h, w]".into(), xs));
        }
        if ws.len() != 4 || ws[2] != ws[3] {
            return Err(self.mismatch(idx, "square kernel of rank 4".into(), ws));
        }
        let (batch, c_in, h, wd) = (xs[0], xs[1], xs[2], xs[3]);
        let k = ws[2];
        let (w_in, c_out) = if transposed {
            (ws[0], ws[1])
        } else {
            (ws[1], ws[0])
        };
        if w_in != c_in {
            let expected = if transposed {
                format!("weight [{c_in}, _, {k}, {k}]")
            } else {
                format!("weight [_, {c_in}, {k}, {k}]")
            };
            return Err(self.mismatch(idx, expected, ws));
        }
        if let Some(b) = b {
            if b.shape() != [c_out] {
                return Err(self.mismatch(idx, format!("bias [{c_out}]"), b.shape()));
            }
        }
        let extent = |n| {
            if transposed {
                conv_transpose_output_extent(n, k, stride, pad)
            } else {
                conv_output_extent(n, k, stride, pad)
            }
        };
        let (oh, ow) = match (extent(h), extent(wd)) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                return Err(self.mismatch(
                    idx,
                    format!("spatial extent compatible with kernel {k}, stride {stride}, pad {pad}"),
                    xs,
                ))
            }
        };
        Ok(ConvGeometry {
            batch,
            c_in,
            c_out,
            h,
            w: wd,
            oh,
            ow,
            k,
            stride,
            pad,
        })
    }

    /// Reverse-mode sweep from a one-element loss node.
    pub fn backward(
        &self,
        params: &ParamStore,
        eval: &Evaluation,
        loss: NodeId,
    ) -> Result<Gradients, NumericError> {
        let values = &eval.values;
        let loss_val = self.value(loss, params, values);
        if !loss_val.is_scalar() {
            return Err(NumericError::NonScalarLoss {
                node: self.name(loss.0).to_string(),
                shape: loss_val.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::from_parts(loss_val.shape().to_vec(), vec![1.0]));
        let mut out = Gradients::default();

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let val = |n: NodeId| self.value(n, params, values);
            let wants = |n: NodeId| self.nodes[n.0].requires_grad;
            let send = |n: NodeId, t: Tensor, grads: &mut Vec<Option<Tensor>>| {
                match &mut grads[n.0] {
                    Some(acc) => acc.add_assign(&t),
                    slot => *slot = Some(t),
                }
            };
            match node.op {
                Op::Param(id) => {
                    out.insert(id, g);
                }
                Op::Input(_) | Op::Constant(_) => {}
                Op::Conv2d {
                    input,
                    weight,
                    bias,
                    stride,
                    pad,
                }
                | Op::ConvTranspose2d {
                    input,
                    weight,
                    bias,
                    stride,
                    pad,
                } => {
                    let transposed = matches!(node.op, Op::ConvTranspose2d { .. });
                    let (x, w) = (val(input), val(weight));
                    let geo =
                        self.conv_geometry(idx, x, w, bias.map(val), stride, pad, transposed)?;
                    let want = ConvWants {
                        input: wants(input),
                        weight: wants(weight),
                    };
                    let (dx, dw) = if transposed {
                        conv_transpose2d_backward(x, w, &g, &geo, want)
                    } else {
                        conv2d_backward(x, w, &g, &geo, want)
                    };
                    if let Some(dx) = dx {
                        send(input, dx, &mut grads);
                    }
                    if let Some(dw) = dw {
                        send(weight, dw, &mut grads);
                    }
                    if let Some(b) = bias.filter(|b| wants(*b)) {
                        send(b, bias_grad(&g, &geo), &mut grads);
                    }
                }
                Op::LeakyRelu { input, slope } => {
                    let dx = zip(val(input), &g, |x, g| if x > 0.0 { g } else { slope * g });
                    send(input, dx, &mut grads);
                }
                Op::Tanh(x) => {
                    let y = values[idx].as_ref().expect("evaluated");
                    send(x, zip(y, &g, |y, g| g * (1.0 - y * y)), &mut grads);
                }
                Op::InstanceNorm { input, eps } => {
                    let y = values[idx].as_ref().expect("evaluated");
                    let dx = instance_norm_backward(val(input), y, &g, eps);
                    send(input, dx, &mut grads);
                }
                Op::Add(a, b) => {
                    let (av, bv) = (val(a), val(b));
                    for (side, v) in [(a, av), (b, bv)] {
                        if !wants(side) {
                            continue;
                        }
                        let part = if v.shape() == g.shape() {
                            g.clone()
                        } else {
                            let s: f64 = g.data().iter().map(|&x| x as f64).sum();
                            Tensor::from_parts(v.shape().to_vec(), vec![s as f32])
                        };
                        send(side, part, &mut grads);
                    }
                }
                Op::Mean(x) => {
                    let xv = val(x);
                    let scale = g.item() / xv.numel().max(1) as f32;
                    send(x, Tensor::filled(xv.shape(), scale), &mut grads);
                }
                Op::Abs(x) => {
                    let dx = zip(val(x), &g, |x, g| {
                        if x > 0.0 {
                            g
                        } else if x < 0.0 {
                            -g
                        } else {
                            0.0
                        }
                    });
                    send(x, dx, &mut grads);
                }
                Op::Square(x) => send(x, zip(val(x), &g, |x, g| 2.0 * x * g), &mut grads),
                Op::Scale(x, s) => send(x, map(&g, |g| g * s), &mut grads),
            }
        }
        Ok(out)
    }
}

impl Evaluation {
    pub fn value(&self, node: NodeId) -> Option<&Tensor> {
        self.values.get(node.0).and_then(Option::as_ref)
    }

    /// Double-precision readout of a one-element node.
    pub fn scalar(&self, node: NodeId) -> Option<f64> {
        self.precise.get(node.0).copied().flatten()
    }
}

fn map(x: &Tensor, f: impl Fn(f32) -> f32) -> Tensor {
    Tensor::from_parts(x.shape().to_vec(), x.data().iter().map(|&v| f(v)).collect())
}

fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f32, f32) -> f32) -> Tensor {
    debug_assert_eq!(a.shape(), b.shape());
    Tensor::from_parts(
        a.shape().to_vec(),
        a.data()
            .iter()
            .zip(b.data())
            .map(|(&x, &y)| f(x, y))
            .collect(),
    )
}

#[derive(Clone, Copy, Debug)]
struct ConvGeometry {
    batch: usize,
    c_in: usize,
    c_out: usize,
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
    k: usize,
    stride: usize,
    pad: usize,
}

impl ConvGeometry {
    /// Window over the conv input (forward conv) or the conv output (transposed conv).
    fn window(&self, transposed: bool) -> Window {
        if transposed {
            Window {
                channels: self.c_out,
                height: self.oh,
                width: self.ow,
                kernel: self.k,
                stride: self.stride,
                pad: self.pad,
                out_h: self.h,
                out_w: self.w,
            }
        } else {
            Window {
                channels: self.c_in,
                height: self.h,
                width: self.w,
                kernel: self.k,
                stride: self.stride,
                pad: self.pad,
                out_h: self.oh,
                out_w: self.ow,
            }
        }
    }
}

#[derive(Clone, Copy)]
struct ConvWants {
    input: bool,
    weight: bool,
}

fn add_bias(out: &mut [f32], bias: Option<&Tensor>, plane: usize) {
    if let Some(b) = bias {
        for (chunk, &bv) in out.chunks_mut(plane).zip(b.data()) {
            chunk.iter_mut().for_each(|v| *v += bv);
        }
    }
}

fn bias_grad(g: &Tensor, geo: &ConvGeometry) -> Tensor {
    let plane = geo.oh * geo.ow;
    let mut db = vec![0.0f64; geo.c_out];
    for sample in g.data().chunks(geo.c_out * plane) {
        for (c, chunk) in sample.chunks(plane).enumerate() {
            db[c] += chunk.iter().map(|&v| v as f64).sum::<f64>();
        }
    }
    Tensor::from_parts(vec![geo.c_out], db.into_iter().map(|v| v as f32).collect())
}

fn conv2d_forward(x: &Tensor, w: &Tensor, b: Option<&Tensor>, geo: &ConvGeometry) -> Tensor {
    let win = geo.window(false);
    let (rows, cols_n) = (win.col_rows(), win.col_cols());
    let in_sz = geo.c_in * geo.h * geo.w;
    let out_sz = geo.c_out * cols_n;
    let mut cols = vec![0.0; rows * cols_n];
    let mut out = vec![0.0; geo.batch * out_sz];
    for n in 0..geo.batch {
        im2col(&x.data()[n * in_sz..(n + 1) * in_sz], &win, &mut cols);
        let dst = &mut out[n * out_sz..(n + 1) * out_sz];
        gemm(
            Mat::new(w.data(), geo.c_out, rows),
            Mat::new(&cols, rows, cols_n),
            0.0,
            dst,
        );
        add_bias(dst, b, cols_n);
    }
    Tensor::from_parts(vec![geo.batch, geo.c_out, geo.oh, geo.ow], out)
}

fn conv2d_backward(
    x: &Tensor,
    w: &Tensor,
    g: &Tensor,
    geo: &ConvGeometry,
    want: ConvWants,
) -> (Option<Tensor>, Option<Tensor>) {
    let win = geo.window(false);
    let (rows, cols_n) = (win.col_rows(), win.col_cols());
    let in_sz = geo.c_in * geo.h * geo.w;
    let out_sz = geo.c_out * cols_n;
    let mut cols = vec![0.0; rows * cols_n];
    let mut dx = want.input.then(|| vec![0.0; x.numel()]);
    let mut dw = want.weight.then(|| vec![0.0; w.numel()]);
    for n in 0..geo.batch {
        let gn = &g.data()[n * out_sz..(n + 1) * out_sz];
        if let Some(dw) = dw.as_mut() {
            im2col(&x.data()[n * in_sz..(n + 1) * in_sz], &win, &mut cols);
            gemm(
                Mat::new(gn, geo.c_out, cols_n),
                Mat::t(&cols, rows, cols_n),
                1.0,
                dw,
            );
        }
        if let Some(dx) = dx.as_mut() {
            gemm(
                Mat::t(w.data(), geo.c_out, rows),
                Mat::new(gn, geo.c_out, cols_n),
                0.0,
                &mut cols,
            );
            col2im(&cols, &win, &mut dx[n * in_sz..(n + 1) * in_sz]);
        }
    }
    (
        dx.map(|d| Tensor::from_parts(x.shape().to_vec(), d)),
        dw.map(|d| Tensor::from_parts(w.shape().to_vec(), d)),
    )
}

fn conv_transpose2d_forward(
    x: &Tensor,
    w: &Tensor,
    b: Option<&Tensor>,
    geo: &ConvGeometry,
) -> Tensor {
    let win = geo.window(true);
    let (rows, cols_n) = (win.col_rows(), win.col_cols());
    let in_sz = geo.c_in * geo.h * geo.w;
    let out_plane = geo.oh * geo.ow;
    let out_sz = geo.c_out * out_plane;
    let mut cols = vec![0.0; rows * cols_n];
    let mut out = vec![0.0; geo.batch * out_sz];
    for n in 0..geo.batch {
        gemm(
            Mat::t(w.data(), geo.c_in, rows),
            Mat::new(&x.data()[n * in_sz..(n + 1) * in_sz], geo.c_in, cols_n),
            0.0,
            &mut cols,
        );
        let dst = &mut out[n * out_sz..(n + 1) * out_sz];
        col2im(&cols, &win, dst);
        add_bias(dst, b, out_plane);
    }
    Tensor::from_parts(vec![geo.batch, geo.c_out, geo.oh, geo.ow], out)
}

fn conv_transpose2d_backward(
    x: &Tensor,
    w: &Tensor,
    g: &Tensor,
    geo: &ConvGeometry,
    want: ConvWants,
) -> (Option<Tensor>, Option<Tensor>) {
    let win = geo.window(true);
    let (rows, cols_n) = (win.col_rows(), win.col_cols());
    let in_sz = geo.c_in * geo.h * geo.w;
    let out_sz = geo.c_out * geo.oh * geo.ow;
    let mut cols = vec![0.0; rows * cols_n];
    let mut dx = want.input.then(|| vec![0.0; x.numel()]);
    let mut dw = want.weight.then(|| vec![0.0; w.numel()]);
    for n in 0..geo.batch {
        im2col(&g.data()[n * out_sz..(n + 1) * out_sz], &win, &mut cols);
        if let Some(dx) = dx.as_mut() {
            gemm(
                Mat::new(w.data(), geo.c_in, rows),
                Mat::new(&cols, rows, cols_n),
                0.0,
                &mut dx[n * in_sz..(n + 1) * in_sz],
            );
        }
        if let Some(dw) = dw.as_mut() {
            gemm(
                Mat::new(&x.data()[n * in_sz..(n + 1) * in_sz], geo.c_in, cols_n),
                Mat::t(&cols, rows, cols_n),
                1.0,
                dw,
            );
        }
    }
    (
        dx.map(|d| Tensor::from_parts(x.shape().to_vec(), d)),
        dw.map(|d| Tensor::from_parts(w.shape().to_vec(), d)),
    )
}

fn plane_stats(plane: &[f32], eps: f32) -> (f32, f32) {
    let n = plane.len() as f64;
    let mean = plane.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = plane
        .iter()
        .map(|&v| {
            let d = v as f64 - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    (mean as f32, (1.0 / (var + eps as f64).sqrt()) as f32)
}

fn instance_norm_forward(x: &Tensor, eps: f32) -> Tensor {
    let s = x.shape();
    let plane = s[2] * s[3];
    let mut out = Vec::with_capacity(x.numel());
    for chunk in x.data().chunks(plane) {
        let (mean, inv_std) = plane_stats(chunk, eps);
        out.extend(chunk.iter().map(|&v| (v - mean) * inv_std));
    }
    Tensor::from_parts(s.to_vec(), out)
}

fn instance_norm_backward(x: &Tensor, y: &Tensor, g: &Tensor, eps: f32) -> Tensor {
    let s = x.shape();
    let plane = s[2] * s[3];
    let n = plane as f64;
    let mut out = Vec::with_capacity(x.numel());
    for ((xc, yc), gc) in x
        .data()
        .chunks(plane)
        .zip(y.data().chunks(plane))
        .zip(g.data().chunks(plane))
    {
        let (_, inv_std) = plane_stats(xc, eps);
        let mean_g = gc.iter().map(|&v| v as f64).sum::<f64>() / n;
        let mean_gy = gc
            .iter()
            .zip(yc)
            .map(|(&a, &b)| a as f64 * b as f64)
            .sum::<f64>()
            / n;
        out.extend(
            gc.iter()
                .zip(yc)
                .map(|(&gv, &yv)| inv_std * (gv - mean_g as f32 - yv * mean_gy as f32)),
        );
    }
    Tensor::from_parts(s.to_vec(), out)
}
