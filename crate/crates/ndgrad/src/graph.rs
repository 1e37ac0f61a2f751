use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NdError, Result};
use crate::init::{glorot_init, mix_seed};
use crate::layer::{Init, Layer, ParamSpec};
use crate::ops::{self, ConvGeom, MaxPoolGeom};
use crate::scalar::{matmul, Scalar};
use crate::tensor::Tensor;

pub type NodeId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Eval,
}

/// A named parameter or buffer tensor.
#[derive(Clone, Debug)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub trainable: bool,
}

#[derive(Clone, Debug)]
pub struct Node {
    pub name: String,
    pub layer: Layer,
    pub inputs: Vec<NodeId>,
    /// Per-sample output shape.
    pub shape: Vec<usize>,
    params: Vec<usize>,
    buffers: Vec<usize>,
}

impl Node {
    pub fn param_indices(&self) -> &[usize] {
        &self.params
    }
}

/// Serializable topology, independent of parameter values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub name: String,
    pub layer: Layer,
    pub inputs: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphSpec {
    pub nodes: Vec<NodeSpec>,
    pub output: String,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamCount {
    pub trainable: usize,
    pub frozen: usize,
    /// Running statistics; not counted as parameters.
    pub buffers: usize,
}

impl ParamCount {
    pub fn total(&self) -> usize {
        self.trainable + self.frozen
    }
}

/// Copy of all parameter and buffer values.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphState<T> {
    params: Vec<Vec<T>>,
    buffers: Vec<Vec<T>>,
}

pub struct GraphBuilder<T> {
    nodes: Vec<Node>,
    params: Vec<Param<T>>,
    buffers: Vec<Param<T>>,
    names: HashMap<String, NodeId>,
    seed: u64,
}

impl<T: Scalar> GraphBuilder<T> {
    pub fn new(input_shape: &[usize], seed: u64) -> Result<Self> {
        let mut b = Self {
            nodes: Vec::new(),
            params: Vec::new(),
            buffers: Vec::new(),
            names: HashMap::new(),
            seed,
        };
        b.add(
            "input",
            Layer::Input {
                shape: input_shape.to_vec(),
            },
            &[],
        )?;
        Ok(b)
    }

    pub fn input(&self) -> NodeId {
        0
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        &self.nodes[id].shape
    }

    pub fn node_id(&self, name: &str) -> Option<NodeId> {
        self.names.get(name).copied()
    }

    pub fn add(&mut self, name: impl Into<String>, layer: Layer, inputs: &[NodeId]) -> Result<NodeId> {
        let name = name.into();
        if self.names.contains_key(&name) {
            return Err(NdError::DuplicateNode(name));
        }
        if let Some(&bad) = inputs.iter().find(|&&i| i >= self.nodes.len()) {
            return Err(NdError::ShapeMismatch {
                node: name,
                detail: format!("input node {bad} does not exist yet"),
            });
        }
        let in_shapes: Vec<&[usize]> = inputs.iter().map(|&i| self.nodes[i].shape.as_slice()).collect();
        let shape = layer.infer_shape(&name, &in_shapes)?;
        let params = layer
            .param_specs()
            .into_iter()
            .map(|spec| {
                let idx = self.params.len();
                let value = make_tensor::<T>(&spec, mix_seed(self.seed, idx as u64))?;
                self.params.push(Param {
                    name: format!("{name}.{}", spec.suffix),
                    value,
                    trainable: true,
                });
                Ok(idx)
            })
            .collect::<Result<Vec<_>>>()?;
        let buffers = layer
            .buffer_specs()
            .into_iter()
            .map(|spec| {
                let idx = self.buffers.len();
                let value = make_tensor::<T>(&spec, 0)?;
                self.buffers.push(Param {
                    name: format!("{name}.{}", spec.suffix),
                    value,
                    trainable: false,
                });
                Ok(idx)
            })
            .collect::<Result<Vec<_>>>()?;
        let id = self.nodes.len();
        self.names.insert(name.clone(), id);
        self.nodes.push(Node {
            name,
            layer,
            inputs: inputs.to_vec(),
            shape,
            params,
            buffers,
        });
        Ok(id)
    }

    pub fn build(self, output: NodeId) -> Result<Graph<T>> {
        if output >= self.nodes.len() || output == 0 {
            return Err(NdError::ShapeMismatch {
                node: "output".into(),
                detail: format!("invalid output node {output}"),
            });
        }
        let n = self.nodes.len();
        Ok(Graph {
            nodes: self.nodes,
            params: self.params,
            buffers: self.buffers,
            output,
            seed: self.seed,
            dropout_step: 0,
            cache: None,
            node_grads: vec![None; n],
        })
    }
}

fn make_tensor<T: Scalar>(spec: &ParamSpec, seed: u64) -> Result<Tensor<T>> {
    match spec.init {
        Init::Glorot { fan_in, fan_out } => glorot_init(&spec.shape, fan_in, fan_out, seed),
        Init::Zeros => Ok(Tensor::zeros(&spec.shape)),
        Init::Ones => Ok(Tensor::full(&spec.shape, T::one())),
    }
}

enum Aux<T> {
    None,
    Argmax(Vec<u32>),
    Norm { xhat: Vec<T>, inv_std: Vec<T>, batch_stats: bool },
    Mask(Vec<T>),
}

struct Cache<T> {
    acts: Vec<Tensor<T>>,
    aux: Vec<Aux<T>>,
    input_requires_grad: bool,
}

/// A directed acyclic graph of layers in topological order. Node 0 is the input.
pub struct Graph<T> {
    nodes: Vec<Node>,
    params: Vec<Param<T>>,
    buffers: Vec<Param<T>>,
    output: NodeId,
    seed: u64,
    dropout_step: u64,
    cache: Option<Cache<T>>,
    node_grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Clone for Graph<T> {
    /// Clones topology and values; forward caches are not carried over.
    fn clone(&self) -> Self {
        Self {
            nodes: self.nodes.clone(),
            params: self.params.clone(),
            buffers: self.buffers.clone(),
            output: self.output,
            seed: self.seed,
            dropout_step: self.dropout_step,
            cache: None,
            node_grads: vec![None; self.nodes.len()],
        }
    }
}

impl<T: Scalar> Graph<T> {
    /// Rebuilds a freshly initialized graph from a topology.
    pub fn from_spec(spec: &GraphSpec, seed: u64) -> Result<Self> {
        let first = spec.nodes.first().ok_or_else(|| NdError::Checkpoint("empty topology".into()))?;
        let Layer::Input { shape } = &first.layer else {
            return Err(NdError::Checkpoint("first node must be the input".into()));
        };
        let mut b = GraphBuilder::<T>::new(shape, seed)?;
        for ns in &spec.nodes[1..] {
            let inputs = ns
                .inputs
                .iter()
                .map(|n| {
                    b.node_id(n).ok_or_else(|| NdError::UnknownNode {
                        name: n.clone(),
                        available: ns.name.clone(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            b.add(ns.name.clone(), ns.layer.clone(), &inputs)?;
        }
        let out = b.node_id(&spec.output).ok_or_else(|| NdError::UnknownNode {
            name: spec.output.clone(),
            available: "(topology)".into(),
        })?;
        b.build(out)
    }

    pub fn spec(&self) -> GraphSpec {
        GraphSpec {
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeSpec {
                    name: n.name.clone(),
                    layer: n.layer.clone(),
                    inputs: n.inputs.iter().map(|&i| self.nodes[i].name.clone()).collect(),
                })
                .collect(),
            output: self.nodes[self.output].name.clone(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn node_id(&self, name: &str) -> Result<NodeId> {
        self.nodes
            .iter()
            .position(|n| n.name == name)
            .ok_or_else(|| NdError::UnknownNode {
                name: name.to_string(),
                available: self.nodes.iter().map(|n| n.name.as_str()).collect::<Vec<_>>().join(", "),
            })
    }

    pub fn output(&self) -> NodeId {
        self.output
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.nodes[0].shape
    }

    pub fn output_shape(&self) -> &[usize] {
        &self.nodes[self.output].shape
    }

    /// The node whose activation feeds a terminal softmax, or the output itself.
    pub fn logits_node(&self) -> NodeId {
        let out = &self.nodes[self.output];
        match out.layer {
            Layer::Softmax => out.inputs[0],
            _ => self.output,
        }
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&Param<T>> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Param<T>> {
        self.params.iter_mut().find(|p| p.name == name)
    }

    pub fn buffers(&self) -> &[Param<T>] {
        &self.buffers
    }

    pub fn buffers_mut(&mut self) -> &mut [Param<T>] {
        &mut self.buffers
    }

    /// Parameters owned by a node, in declaration order.
    pub fn node_params(&self, id: NodeId) -> Vec<&Param<T>> {
        self.nodes[id].params.iter().map(|&i| &self.params[i]).collect()
    }

    pub fn node_params_mut(&mut self, id: NodeId) -> Vec<&mut Param<T>> {
        let idx = self.nodes[id].params.clone();
        self.params
            .iter_mut()
            .enumerate()
            .filter(|(i, _)| idx.contains(i))
            .map(|(_, p)| p)
            .collect()
    }

    pub fn trainable_mask(&self) -> Vec<bool> {
        self.params.iter().map(|p| p.trainable).collect()
    }

    pub fn set_trainable(&mut self, id: NodeId, trainable: bool) {
        for &i in &self.nodes[id].params {
            self.params[i].trainable = trainable;
        }
    }

    pub fn count_params(&self) -> ParamCount {
        let mut c = ParamCount::default();
        for p in &self.params {
            if p.trainable {
                c.trainable += p.value.len();
            } else {
                c.frozen += p.value.len();
            }
        }
        c.buffers = self.buffers.iter().map(|b| b.value.len()).sum();
        c
    }

    pub fn state(&self) -> GraphState<T> {
        GraphState {
            params: self.params.iter().map(|p| p.value.data().to_vec()).collect(),
            buffers: self.buffers.iter().map(|p| p.value.data().to_vec()).collect(),
        }
    }

    pub fn load_state(&mut self, state: &GraphState<T>) {
        assert_eq!(state.params.len(), self.params.len());
        assert_eq!(state.buffers.len(), self.buffers.len());
        for (p, v) in self.params.iter_mut().zip(&state.params) {
            p.value.data_mut().copy_from_slice(v);
        }
        for (b, v) in self.buffers.iter_mut().zip(&state.buffers) {
            b.value.data_mut().copy_from_slice(v);
        }
    }

    /// Sets the dropout draw counter; each train-mode forward advances it by one.
    pub fn set_dropout_step(&mut self, step: u64) {
        self.dropout_step = step;
    }

    pub fn dropout_step(&self) -> u64 {
        self.dropout_step
    }

    /// Folds one batch into population batchnorm statistics. After calls with
    /// `seen` = 0, 1, …, n−1 every trainable batchnorm holds the plain average
    /// of its n batch means and unbiased variances. Parameters, momenta and the
    /// dropout counter are left as they were.
    pub fn accumulate_population_stats(&mut self, x: &Tensor<T>, seen: usize) -> Result<()> {
        let weight = seen as f64 / (seen + 1) as f64;
        let mut saved = Vec::new();
        for (i, node) in self.nodes.iter_mut().enumerate() {
            if let Layer::BatchNorm2d { momentum, .. } = &mut node.layer {
                saved.push((i, *momentum));
                *momentum = weight;
            }
        }
        let step = self.dropout_step;
        let result = self.forward(x, Mode::Train).map(|_| ());
        for (i, m) in saved {
            if let Layer::BatchNorm2d { momentum, .. } = &mut self.nodes[i].layer {
                *momentum = m;
            }
        }
        self.dropout_step = step;
        self.clear_cache();
        result
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
        self.node_grads.iter_mut().for_each(|g| *g = None);
    }

    /// Activation of a node from the most recent forward pass.
    pub fn activation(&self, id: NodeId) -> Option<&Tensor<T>> {
        self.cache.as_ref().map(|c| &c.acts[id])
    }

    /// Gradient of the backward seed with respect to a node's activation.
    pub fn node_grad(&self, id: NodeId) -> Option<&Tensor<T>> {
        self.node_grads.get(id).and_then(|g| g.as_ref())
    }

    /// Converts all values to another precision.
    pub fn cast<U: Scalar>(&self) -> Graph<U> {
        let conv = |ps: &[Param<T>]| {
            ps.iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    value: p.value.cast::<U>(),
                    trainable: p.trainable,
                })
                .collect::<Vec<_>>()
        };
        Graph {
            nodes: self.nodes.clone(),
            params: conv(&self.params),
            buffers: conv(&self.buffers),
            output: self.output,
            seed: self.seed,
            dropout_step: self.dropout_step,
            cache: None,
            node_grads: vec![None; self.nodes.len()],
        }
    }

    pub fn forward(&mut self, input: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        self.forward_with(input, mode, &[])
    }

    /// Forward pass where listed nodes take the given activation instead of
    /// computing their own.
    pub fn forward_with(&mut self, input: &Tensor<T>, mode: Mode, overrides: &[(NodeId, Tensor<T>)]) -> Result<Tensor<T>> {
        let in_shape = input.shape();
        if in_shape.len() != self.nodes[0].shape.len() + 1 || in_shape[1..] != self.nodes[0].shape[..] {
            return Err(NdError::ShapeMismatch {
                node: "input".into(),
                detail: format!("expected (batch, {:?}), got {in_shape:?}", self.nodes[0].shape),
            });
        }
        let batch = input.batch();
        self.node_grads.iter_mut().for_each(|g| *g = None);
        let step = self.dropout_step;
        if mode == Mode::Train {
            self.dropout_step += 1;
        }
        let mut acts: Vec<Tensor<T>> = Vec::with_capacity(self.nodes.len());
        let mut aux: Vec<Aux<T>> = Vec::with_capacity(self.nodes.len());
        for id in 0..self.nodes.len() {
            let node = &self.nodes[id];
            let mut full_shape = Vec::with_capacity(node.shape.len() + 1);
            full_shape.push(batch);
            full_shape.extend_from_slice(&node.shape);
            if let Some((_, t)) = overrides.iter().find(|(o, _)| *o == id) {
                if t.shape() != full_shape.as_slice() {
                    return Err(NdError::ShapeMismatch {
                        node: node.name.clone(),
                        detail: format!("override shape {:?} != {full_shape:?}", t.shape()),
                    });
                }
                acts.push(t.clone());
                aux.push(Aux::None);
                continue;
            }
            let (data, a) = match &node.layer {
                Layer::Input { .. } => (input.data().to_vec(), Aux::None),
                layer => {
                    let x = &acts[node.inputs[0]];
                    forward_node(
                        layer,
                        node,
                        id,
                        x,
                        &acts,
                        batch,
                        mode,
                        &self.params,
                        &mut self.buffers,
                        mix_seed(self.seed ^ 0xD80F, step),
                    )
                }
            };
            if data.iter().any(|v| !v.is_finite()) {
                self.cache = None;
                return Err(NdError::NonFiniteActivation { node: node.name.clone() });
            }
            acts.push(Tensor::new(full_shape, data)?);
            aux.push(a);
        }
        let out = acts[self.output].clone();
        self.cache = Some(Cache {
            acts,
            aux,
            input_requires_grad: input.requires_grad(),
        });
        Ok(out)
    }

    /// Back-propagates `output_grad` from the output node. Parameter gradients
    /// are written into each parameter's grad slot (frozen ones included); the
    /// input gradient is returned when the forward input required grad.
    pub fn backward(&mut self, output_grad: &Tensor<T>) -> Result<Option<Tensor<T>>> {
        self.backward_from(self.output, output_grad)
    }

    pub fn backward_from(&mut self, start: NodeId, seed_grad: &Tensor<T>) -> Result<Option<Tensor<T>>> {
        let cache = self.cache.as_ref().ok_or(NdError::BackwardBeforeForward)?;
        if seed_grad.shape() != cache.acts[start].shape() {
            return Err(NdError::ShapeMismatch {
                node: self.nodes[start].name.clone(),
                detail: format!(
                    "gradient shape {:?} != activation shape {:?}",
                    seed_grad.shape(),
                    cache.acts[start].shape()
                ),
            });
        }
        for p in &mut self.params {
            p.value.clear_grad();
        }
        let batch = cache.acts[0].batch();
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<T>>> = vec![None; n];
        grads[start] = Some(seed_grad.data().to_vec());
        let mut node_grads: Vec<Option<Tensor<T>>> = vec![None; n];
        for id in (1..=start).rev() {
            let Some(dy) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            let wants: Vec<bool> = node
                .inputs
                .iter()
                .map(|&i| i != 0 || cache.input_requires_grad)
                .collect();
            let input_grads = backward_node(node, &cache.acts, &cache.aux[id], id, &dy, batch, &wants, &mut self.params);
            for (slot, g) in node.inputs.iter().zip(input_grads) {
                let Some(g) = g else { continue };
                match &mut grads[*slot] {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += *b),
                    empty => *empty = Some(g),
                }
            }
            node_grads[id] = Some(Tensor::new(cache.acts[id].shape().to_vec(), dy)?);
        }
        let input_grad = match grads[0].take() {
            Some(g) if cache.input_requires_grad => Some(Tensor::new(cache.acts[0].shape().to_vec(), g)?),
            _ => None,
        };
        if let Some(g) = &input_grad {
            node_grads[0] = Some(g.clone());
        }
        self.node_grads = node_grads;
        Ok(input_grad)
    }
}

fn bn_uses_batch_stats<T: Scalar>(node: &Node, params: &[Param<T>], mode: Mode) -> bool {
    // A fully frozen batchnorm behaves as in inference.
    mode == Mode::Train && node.params.iter().any(|&i| params[i].trainable)
}

fn spatial_of(shape: &[usize]) -> (usize, usize, usize) {
    match shape {
        [c, h, w] => (*c, *h, *w),
        [c] => (*c, 1, 1),
        _ => (shape[0], shape[1..].iter().product(), 1),
    }
}

#[allow(clippy::too_many_arguments)]
fn forward_node<T: Scalar>(
    layer: &Layer,
    node: &Node,
    id: NodeId,
    x: &Tensor<T>,
    acts: &[Tensor<T>],
    batch: usize,
    mode: Mode,
    params: &[Param<T>],
    buffers: &mut [Param<T>],
    dropout_seed: u64,
) -> (Vec<T>, Aux<T>) {
    let xs = &x.shape()[1..];
    match *layer {
        Layer::Input { .. } => unreachable!("input handled by caller"),
        Layer::Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        } => {
            let g = ConvGeom {
                channels: in_channels,
                height: xs[1],
                width: xs[2],
                out_channels,
                kernel,
                stride,
                padding,
            };
            let w = params[node.params[0]].value.data();
            let b = params[node.params[1]].value.data();
            (ops::conv2d_forward(x.data(), batch, &g, w, b), Aux::None)
        }
        Layer::BatchNorm2d {
            channels,
            momentum,
            epsilon,
        } => {
            let (_, h, w) = spatial_of(xs);
            let spatial = h * w;
            let eps = T::from_f64_lossy(epsilon);
            let batch_stats = bn_uses_batch_stats(node, params, mode);
            let (mean, var) = if batch_stats {
                let (mean, var) = ops::channel_stats(x.data(), batch, channels, spatial);
                let m = T::from_f64_lossy(momentum);
                let count = batch * spatial;
                let unbias = if count > 1 {
                    T::from_usize(count).unwrap() / T::from_usize(count - 1).unwrap()
                } else {
                    T::one()
                };
                let (rm, rv) = (node.buffers[0], node.buffers[1]);
                for c in 0..channels {
                    let r = &mut buffers[rm].value.data_mut()[c];
                    *r = m * *r + (T::one() - m) * mean[c];
                    let r = &mut buffers[rv].value.data_mut()[c];
                    *r = m * *r + (T::one() - m) * var[c] * unbias;
                }
                (mean, var)
            } else {
                (
                    buffers[node.buffers[0]].value.data().to_vec(),
                    buffers[node.buffers[1]].value.data().to_vec(),
                )
            };
            let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
            let gamma = params[node.params[0]].value.data();
            let beta = params[node.params[1]].value.data();
            let mut xhat = vec![T::zero(); x.len()];
            let mut out = vec![T::zero(); x.len()];
            for b in 0..batch {
                for c in 0..channels {
                    let off = (b * channels + c) * spatial;
                    for i in off..off + spatial {
                        let xh = (x.data()[i] - mean[c]) * inv_std[c];
                        xhat[i] = xh;
                        out[i] = gamma[c] * xh + beta[c];
                    }
                }
            }
            (
                out,
                Aux::Norm {
                    xhat,
                    inv_std,
                    batch_stats,
                },
            )
        }
        Layer::Relu => (x.data().iter().map(|&v| v.max(T::zero())).collect(), Aux::None),
        Layer::MaxPool2d {
            kernel,
            stride,
            padding,
        } => {
            let g = MaxPoolGeom {
                channels: xs[0],
                height: xs[1],
                width: xs[2],
                kernel,
                stride,
                padding,
            };
            let (out, arg) = ops::maxpool_forward(x.data(), batch, &g);
            (out, Aux::Argmax(arg))
        }
        Layer::GlobalAvgPool => {
            let (c, h, w) = (xs[0], xs[1], xs[2]);
            let hw = T::from_usize(h * w).unwrap();
            let out = x
                .data()
                .chunks_exact(h * w)
                .take(batch * c)
                .map(|plane| plane.iter().copied().sum::<T>() / hw)
                .collect();
            (out, Aux::None)
        }
        Layer::Dense {
            in_features,
            out_features,
        } => {
            let w = params[node.params[0]].value.data();
            let b = params[node.params[1]].value.data();
            let mut out = vec![T::zero(); batch * out_features];
            matmul(batch, in_features, out_features, x.data(), false, w, true, &mut out, T::one(), T::zero());
            for row in out.chunks_exact_mut(out_features) {
                row.iter_mut().zip(b).for_each(|(v, &bv)| *v += bv);
            }
            (out, Aux::None)
        }
        Layer::ConcatDepth => {
            let per: usize = node.shape.iter().product();
            let mut out = Vec::with_capacity(batch * per);
            for b in 0..batch {
                for &i in &node.inputs {
                    let t = &acts[i];
                    let len = t.len() / batch;
                    out.extend_from_slice(&t.data()[b * len..(b + 1) * len]);
                }
            }
            (out, Aux::None)
        }
        Layer::Add => {
            let mut out = x.data().to_vec();
            for &i in &node.inputs[1..] {
                out.iter_mut().zip(acts[i].data()).for_each(|(o, &v)| *o += v);
            }
            (out, Aux::None)
        }
        Layer::Softmax => {
            let f = xs[0];
            let mut out = x.data().to_vec();
            for row in out.chunks_exact_mut(f) {
                let max = row.iter().copied().fold(T::neg_infinity(), T::max);
                row.iter_mut().for_each(|v| *v = (*v - max).exp());
                let s: T = row.iter().copied().sum();
                row.iter_mut().for_each(|v| *v /= s);
            }
            (out, Aux::None)
        }
        Layer::Dropout { p } => {
            if mode == Mode::Eval || p == 0.0 {
                return (x.data().to_vec(), Aux::None);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(dropout_seed, id as u64));
            let scale = T::from_f64_lossy(1.0 / (1.0 - p));
            let mask: Vec<T> = (0..x.len())
                .map(|_| if rng.gen::<f64>() < p { T::zero() } else { scale })
                .collect();
            let out = x.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
            (out, Aux::Mask(mask))
        }
        Layer::Flatten => (x.data().to_vec(), Aux::None),
    }
}

/// Returns one optional gradient per input; `None` where `wants` is false.
#[allow(clippy::too_many_arguments)]
fn backward_node<T: Scalar>(
    node: &Node,
    acts: &[Tensor<T>],
    aux: &Aux<T>,
    id: NodeId,
    dy: &[T],
    batch: usize,
    wants: &[bool],
    params: &mut [Param<T>],
) -> Vec<Option<Vec<T>>> {
    let x = &acts[node.inputs[0]];
    let xs = &x.shape()[1..];
    match node.layer {
        Layer::Input { .. } => Vec::new(),
        Layer::Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        } => {
            let g = ConvGeom {
                channels: in_channels,
                height: xs[1],
                width: xs[2],
                out_channels,
                kernel,
                stride,
                padding,
            };
            let (wi, bi) = (node.params[0], node.params[1]);
            let mut db = std::mem::take(params[bi].value.split_grad().1);
            let (weight, dw) = params[wi].value.split_grad();
            let mut dx = if wants[0] { Some(vec![T::zero(); x.len()]) } else { None };
            ops::conv2d_backward(x.data(), dy, batch, &g, weight, dw, &mut db, dx.as_deref_mut());
            *params[bi].value.split_grad().1 = db;
            vec![dx]
        }
        Layer::BatchNorm2d { channels, .. } => {
            let Aux::Norm {
                xhat,
                inv_std,
                batch_stats,
            } = aux
            else {
                unreachable!("batchnorm cache")
            };
            let (_, h, w) = spatial_of(xs);
            let spatial = h * w;
            let gamma = params[node.params[0]].value.data().to_vec();
            let mut dgamma = vec![T::zero(); channels];
            let mut dbeta = vec![T::zero(); channels];
            for b in 0..batch {
                for c in 0..channels {
                    let off = (b * channels + c) * spatial;
                    for i in off..off + spatial {
                        dbeta[c] += dy[i];
                        dgamma[c] += dy[i] * xhat[i];
                    }
                }
            }
            let dx = wants[0].then(|| {
                let mut dx = vec![T::zero(); dy.len()];
                let n = T::from_usize(batch * spatial).unwrap();
                for b in 0..batch {
                    for c in 0..channels {
                        let off = (b * channels + c) * spatial;
                        let k = gamma[c] * inv_std[c];
                        for i in off..off + spatial {
                            dx[i] = if *batch_stats {
                                k * (dy[i] - dbeta[c] / n - xhat[i] * dgamma[c] / n)
                            } else {
                                k * dy[i]
                            };
                        }
                    }
                }
                dx
            });
            add_grad(&mut params[node.params[0]], &dgamma);
            add_grad(&mut params[node.params[1]], &dbeta);
            vec![dx]
        }
        Layer::Relu => {
            let y = &acts[id];
            vec![Some(
                dy.iter()
                    .zip(y.data())
                    .map(|(&g, &v)| if v > T::zero() { g } else { T::zero() })
                    .collect(),
            )]
        }
        Layer::MaxPool2d { .. } => {
            let Aux::Argmax(arg) = aux else { unreachable!("maxpool cache") };
            let in_len = x.len() / batch;
            let out_len = dy.len() / batch;
            let mut dx = vec![T::zero(); x.len()];
            for b in 0..batch {
                for o in 0..out_len {
                    dx[b * in_len + arg[b * out_len + o] as usize] += dy[b * out_len + o];
                }
            }
            vec![Some(dx)]
        }
        Layer::GlobalAvgPool => {
            let hw = xs[1] * xs[2];
            let inv = T::one() / T::from_usize(hw).unwrap();
            let mut dx = vec![T::zero(); x.len()];
            for (plane, &g) in dx.chunks_exact_mut(hw).zip(dy) {
                plane.iter_mut().for_each(|v| *v = g * inv);
            }
            vec![Some(dx)]
        }
        Layer::Dense {
            in_features,
            out_features,
        } => {
            let (wi, bi) = (node.params[0], node.params[1]);
            let (weight, dw) = params[wi].value.split_grad();
            matmul(out_features, batch, in_features, dy, true, x.data(), false, dw, T::one(), T::one());
            let dx = wants[0].then(|| {
                let mut dx = vec![T::zero(); x.len()];
                matmul(batch, out_features, in_features, dy, false, weight, false, &mut dx, T::one(), T::zero());
                dx
            });
            let db = params[bi].value.grad_mut_or_zero();
            for row in dy.chunks_exact(out_features) {
                db.iter_mut().zip(row).for_each(|(d, &g)| *d += g);
            }
            vec![dx]
        }
        Layer::ConcatDepth => {
            let per_out = dy.len() / batch;
            let mut out: Vec<Vec<T>> = node.inputs.iter().map(|&i| Vec::with_capacity(acts[i].len())).collect();
            for b in 0..batch {
                let mut off = b * per_out;
                for (k, &i) in node.inputs.iter().enumerate() {
                    let len = acts[i].len() / batch;
                    out[k].extend_from_slice(&dy[off..off + len]);
                    off += len;
                }
            }
            out.into_iter().zip(wants).map(|(g, &w)| w.then_some(g)).collect()
        }
        Layer::Add => wants.iter().map(|&w| w.then(|| dy.to_vec())).collect(),
        Layer::Softmax => {
            let y = acts[id].data();
            let f = xs[0];
            let mut dx = vec![T::zero(); dy.len()];
            for ((dxr, dyr), yr) in dx.chunks_exact_mut(f).zip(dy.chunks_exact(f)).zip(y.chunks_exact(f)) {
                let dot: T = dyr.iter().zip(yr).map(|(&a, &b)| a * b).sum();
                for i in 0..f {
                    dxr[i] = yr[i] * (dyr[i] - dot);
                }
            }
            vec![Some(dx)]
        }
        Layer::Dropout { .. } => match aux {
            Aux::Mask(mask) => vec![Some(dy.iter().zip(mask).map(|(&g, &m)| g * m).collect())],
            _ => vec![Some(dy.to_vec())],
        },
        Layer::Flatten => vec![Some(dy.to_vec())],
    }
}

fn add_grad<T: Scalar>(p: &mut Param<T>, g: &[T]) {
    p.value
        .grad_mut_or_zero()
        .iter_mut()
        .zip(g)
        .for_each(|(a, &b)| *a += b);
}
