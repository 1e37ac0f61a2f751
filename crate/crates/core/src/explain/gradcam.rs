use ndgrad::{Graph, Mode, Scalar, Tensor};
use serde::{Deserialize, Serialize};

use super::grid::Grid;
use super::saliency::{resolve_target, unit_seed};
use crate::datakit::Image;
use crate::error::{invalid, Result};
use crate::models::PriceModel;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CamMap {
    /// `relu(Σ_k w_k A_k)` at the layer's spatial resolution.
    pub map: Grid,
    pub layer_name: String,
    pub class_index: usize,
    pub channel_weights: Vec<f64>,
}

/// Class activation map for a single-sample input tensor.
pub fn grad_cam_tensor<T: Scalar>(graph: &mut Graph<T>, input: &Tensor<T>, target: usize, layer: &str) -> Result<CamMap> {
    if input.batch() != 1 {
        return Err(invalid("Grad-CAM works on one image at a time"));
    }
    let id = graph.node_id(layer)?;
    let shape = graph.node(id).shape.clone();
    let [c, h, w] = shape[..] else {
        return Err(invalid(format!("layer {layer} has shape {shape:?}, not a spatial feature map")));
    };
    if id > graph.logits_node() {
        return Err(invalid(format!("layer {layer} lies after the score layer")));
    }
    let seed = unit_seed(graph, target)?;
    graph.forward(input, Mode::Eval)?;
    let start = graph.logits_node();
    graph.backward_from(start, &seed)?;
    let plane = h * w;
    let acts: Vec<f64> = graph
        .activation(id)
        .expect("forward just ran")
        .data()
        .iter()
        .map(|v| v.to_f64().unwrap_or(f64::NAN))
        .collect();
    let grads: Vec<f64> = match graph.node_grad(id) {
        Some(g) => g.data().iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect(),
        None => vec![0.0; c * plane],
    };
    let channel_weights: Vec<f64> = grads.chunks_exact(plane).map(|g| g.iter().sum::<f64>() / plane as f64).collect();
    let values = (0..plane)
        .map(|i| {
            let s: f64 = channel_weights.iter().enumerate().map(|(k, wk)| wk * acts[k * plane + i]).sum();
            s.max(0.0)
        })
        .collect();
    Ok(CamMap {
        map: Grid::new(h, w, values)?,
        layer_name: layer.to_string(),
        class_index: target,
        channel_weights,
    })
}

pub fn grad_cam<T: Scalar>(model: &PriceModel<T>, image: &Image, class: Option<usize>, layer: &str) -> Result<CamMap> {
    let mut m = model.clone();
    let target = resolve_target(&mut m, image, class)?;
    let x = m.batch_tensor(&[image])?;
    grad_cam_tensor(&mut m.graph, &x, target, layer)
}
