//! Direct-loop `f64` interpreter of a [`Graph`], used as a finite-difference
//! oracle where `f32` rounding would swamp the difference quotient.

use super::graph::{Graph, Inputs, NodeId, Op, ParamStore};
use super::tensor::{conv_output_extent, conv_transpose_output_extent};
use super::NumericError;

#[derive(Clone, Debug)]
struct Value {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Value {
    fn scalar(v: f64) -> Self {
        Value {
            shape: Vec::new(),
            data: vec![v],
        }
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Value {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }
}

/// Parameter values widened to `f64`, indexed like the store.
#[derive(Clone, Debug, PartialEq)]
pub struct WideParams {
    shapes: Vec<Vec<usize>>,
    data: Vec<Vec<f64>>,
}

impl WideParams {
    pub fn from_store(store: &ParamStore) -> Self {
        let (shapes, data) = store
            .iter()
            .map(|(_, _, t)| {
                (
                    t.shape().to_vec(),
                    t.data().iter().map(|&v| v as f64).collect(),
                )
            })
            .unzip();
        WideParams { shapes, data }
    }

    pub fn entry_mut(&mut self, param: usize, index: usize) -> &mut f64 {
        &mut self.data[param][index]
    }
}

fn bad_shape(node: NodeId, expected: &str, actual: &[usize]) -> NumericError {
    NumericError::ShapeMismatch {
        node: format!("#{}", node.index()),
        expected: expected.into(),
        actual: actual.to_vec(),
    }
}

fn conv(x: &Value, w: &Value, b: Option<&Value>, stride: usize, pad: usize) -> Option<Value> {
    let [n, c, h, wd] = x.shape[..] else { return None };
    let [oc, wc, k, _] = w.shape[..] else { return None };
    if wc != c {
        return None;
    }
    let oh = conv_output_extent(h, k, stride, pad)?;
    let ow = conv_output_extent(wd, k, stride, pad)?;
    let mut out = vec![0.0; n * oc * oh * ow];
    for s in 0..n {
        for o in 0..oc {
            let base = b.map_or(0.0, |b| b.data[o]);
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = base;
                    for ci in 0..c {
                        for ky in 0..k {
                            let iy = (oy * stride + ky) as isize - pad as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for kx in 0..k {
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if ix < 0 || ix >= wd as isize {
                                    continue;
                                }
                                let xv = x.data[((s * c + ci) * h + iy as usize) * wd + ix as usize];
                                acc += w.data[((o * c + ci) * k + ky) * k + kx] * xv;
                            }
                        }
                    }
                    out[((s * oc + o) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
    Some(Value {
        shape: vec![n, oc, oh, ow],
        data: out,
    })
}

fn conv_transpose(
    x: &Value,
    w: &Value,
    b: Option<&Value>,
    stride: usize,
    pad: usize,
) -> Option<Value> {
    let [n, c, h, wd] = x.shape[..] else { return None };
    let [wc, oc, k, _] = w.shape[..] else { return None };
    if wc != c {
        return None;
    }
    let oh = conv_transpose_output_extent(h, k, stride, pad)?;
    let ow = conv_transpose_output_extent(wd, k, stride, pad)?;
    let mut out = vec![0.0; n * oc * oh * ow];
    for s in 0..n {
        for o in 0..oc {
            let base = b.map_or(0.0, |b| b.data[o]);
            out[(s * oc + o) * oh * ow..(s * oc + o + 1) * oh * ow].fill(base);
        }
        for ci in 0..c {
            for iy in 0..h {
                for ix in 0..wd {
                    let xv = x.data[((s * c + ci) * h + iy) * wd + ix];
                    for o in 0..oc {
                        for ky in 0..k {
                            let oy = (iy * stride + ky) as isize - pad as isize;
                            if oy < 0 || oy >= oh as isize {
                                continue;
                            }
                            for kx in 0..k {
                                let ox = (ix * stride + kx) as isize - pad as isize;
                                if ox < 0 || ox >= ow as isize {
                                    continue;
                                }
                                out[((s * oc + o) * oh + oy as usize) * ow + ox as usize] +=
                                    xv * w.data[((ci * oc + o) * k + ky) * k + kx];
                            }
                        }
                    }
                }
            }
        }
    }
    Some(Value {
        shape: vec![n, oc, oh, ow],
        data: out,
    })
}

fn instance_norm(x: &Value, eps: f64) -> Option<Value> {
    if x.shape.len() != 4 {
        return None;
    }
    let plane = x.shape[2] * x.shape[3];
    let mut data = Vec::with_capacity(x.data.len());
    for chunk in x.data.chunks(plane) {
        let mean = chunk.iter().sum::<f64>() / plane as f64;
        let var = chunk.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / plane as f64;
        let inv = 1.0 / (var + eps).sqrt();
        data.extend(chunk.iter().map(|v| (v - mean) * inv));
    }
    Some(Value {
        shape: x.shape.clone(),
        data,
    })
}

/// Evaluates `graph` in double precision and returns the value of the
/// one-element node `loss`.
pub fn reference_loss(
    graph: &Graph,
    params: &WideParams,
    inputs: &Inputs,
    loss: NodeId,
) -> Result<f64, NumericError> {
    reference_eval(graph, params, inputs, loss).map(|(v, _)| v)
}

/// Like [`reference_loss`], also returning which side of its kink every
/// leaky-relu and absolute-value input fell on.
pub fn reference_eval(
    graph: &Graph,
    params: &WideParams,
    inputs: &Inputs,
    loss: NodeId,
) -> Result<(f64, Vec<bool>), NumericError> {
    let mut values: Vec<Value> = Vec::with_capacity(graph.len());
    let mut sides = Vec::new();
    for node in graph.node_ids() {
        if let Op::LeakyRelu { input: x, .. } | Op::Abs(x) = graph.op(node) {
            sides.extend(values[x.index()].data.iter().map(|&v| v > 0.0));
        }
        let v = |n: NodeId| &values[n.index()];
        let out = match graph.op(node) {
            Op::Input(name) => {
                let t = inputs
                    .get(name)
                    .ok_or_else(|| NumericError::MissingInput(name.clone()))?;
                Value {
                    shape: t.shape().to_vec(),
                    data: t.data().iter().map(|&x| x as f64).collect(),
                }
            }
            Op::Param(id) => {
                let i = id.index();
                if i >= params.data.len() {
                    return Err(NumericError::UnknownParam(i));
                }
                Value {
                    shape: params.shapes[i].clone(),
                    data: params.data[i].clone(),
                }
            }
            Op::Constant(t) => Value {
                shape: t.shape().to_vec(),
                data: t.data().iter().map(|&x| x as f64).collect(),
            },
            &Op::Conv2d {
                input,
                weight,
                bias,
                stride,
                pad,
            } => conv(v(input), v(weight), bias.map(v), stride, pad)
                .ok_or_else(|| bad_shape(node, "valid convolution operands", &v(input).shape))?,
            &Op::ConvTranspose2d {
                input,
                weight,
                bias,
                stride,
                pad,
            } => conv_transpose(v(input), v(weight), bias.map(v), stride, pad).ok_or_else(
                || bad_shape(node, "valid transposed convolution operands", &v(input).shape),
            )?,
            &Op::LeakyRelu { input, slope } => {
                let s = slope as f64;
                v(input).map(|x| if x > 0.0 { x } else { s * x })
            }
            &Op::Tanh(x) => v(x).map(f64::tanh),
            &Op::InstanceNorm { input, eps } => instance_norm(v(input), eps as f64)
                .ok_or_else(|| bad_shape(node, "rank 4 [n, c, h, w]", &v(input).shape))?,
            &Op::Add(a, b) => {
                let (a, b) = (v(a), v(b));
                if a.shape == b.shape {
                    Value {
                        shape: a.shape.clone(),
                        data: a.data.iter().zip(&b.data).map(|(x, y)| x + y).collect(),
                    }
                } else if b.is_scalar() {
                    a.map(|x| x + b.data[0])
                } else if a.is_scalar() {
                    b.map(|x| x + a.data[0])
                } else {
                    return Err(bad_shape(node, &format!("{:?}", a.shape), &b.shape));
                }
            }
            &Op::Mean(x) => {
                let x = v(x);
                Value::scalar(x.data.iter().sum::<f64>() / x.data.len().max(1) as f64)
            }
            &Op::Abs(x) => v(x).map(f64::abs),
            &Op::Square(x) => v(x).map(|a| a * a),
            &Op::Scale(x, s) => {
                let s = s as f64;
                v(x).map(|a| a * s)
            }
        };
        values.push(out);
    }
    let out = &values[loss.index()];
    if !out.is_scalar() {
        return Err(NumericError::NonScalarLoss {
            node: format!("#{}", loss.index()),
            shape: out.shape.clone(),
        });
    }
    Ok((out.data[0], sides))
}
