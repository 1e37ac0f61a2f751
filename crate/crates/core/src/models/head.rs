use std::collections::HashSet;

use ndgrad::{mix_seed, Graph, GraphSpec, Layer, NodeSpec, Scalar};
use serde::{Deserialize, Serialize};

use super::pricenet::Head;
use crate::error::{invalid, Result};

/// Replacement head appended after a cut: optional hidden dense + ReLU, then the output.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadSpec {
    pub hidden_units: Option<usize>,
    pub head: Head,
}

const HEAD_SEED_SALT: u64 = 0x4ead;

/// Keeps the cut node and its ancestors, appends a fresh head, and optionally
/// freezes every kept parameter. Kept parameters and running statistics are
/// copied from `trunk`.
pub fn attach_head<T: Scalar>(trunk: &Graph<T>, cut_layer: &str, head: &HeadSpec, freeze_trunk: bool) -> Result<Graph<T>> {
    let cut = trunk.node_id(cut_layer)?;
    if cut == trunk.output() {
        return Err(invalid(format!("cut layer {cut_layer:?} is the output; nothing would be removed")));
    }
    if cut == 0 {
        return Err(invalid("cannot cut at the input node"));
    }
    let mut keep = HashSet::from([cut]);
    for id in (0..=cut).rev() {
        if keep.contains(&id) {
            keep.extend(trunk.node(id).inputs.iter().copied());
        }
    }
    let full = trunk.spec();
    let mut nodes: Vec<NodeSpec> = full
        .nodes
        .into_iter()
        .enumerate()
        .filter(|(i, _)| keep.contains(i))
        .map(|(_, n)| n)
        .collect();
    let shape = &trunk.node(cut).shape;
    let mut last = cut_layer.to_string();
    let push = |nodes: &mut Vec<NodeSpec>, name: &str, layer: Layer, last: &mut String| {
        nodes.push(NodeSpec {
            name: name.to_string(),
            layer,
            inputs: vec![last.clone()],
        });
        *last = name.to_string();
    };
    let mut features: usize = shape.iter().product();
    if shape.len() > 1 {
        push(&mut nodes, "attached.flatten", Layer::Flatten, &mut last);
    }
    if let Some(h) = head.hidden_units {
        push(&mut nodes, "attached.hidden", Layer::dense(features, h), &mut last);
        push(&mut nodes, "attached.hidden_relu", Layer::Relu, &mut last);
        features = h;
    }
    push(&mut nodes, "attached.out", Layer::dense(features, head.head.output_units()), &mut last);
    if let Head::Class(_) = head.head {
        push(&mut nodes, "attached.softmax", Layer::Softmax, &mut last);
    }
    let spec = GraphSpec { nodes, output: last };
    let mut graph = Graph::<T>::from_spec(&spec, mix_seed(trunk.seed(), HEAD_SEED_SALT))?;
    for p in graph.params_mut() {
        if let Some(src) = trunk.param(&p.name) {
            p.value.data_mut().copy_from_slice(src.value.data());
            p.trainable = !freeze_trunk && src.trainable;
        }
    }
    for b in graph.buffers_mut() {
        if let Some(src) = trunk.buffers().iter().find(|s| s.name == b.name) {
            b.value.data_mut().copy_from_slice(src.value.data());
        }
    }
    Ok(graph)
}
