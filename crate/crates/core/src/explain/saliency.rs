use ndgrad::{Graph, Mode, Scalar, Tensor};
use serde::{Deserialize, Serialize};

use super::grid::Grid;
use crate::datakit::Image;
use crate::error::{invalid, Result};
use crate::models::{Head, PriceModel};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaliencyMap {
    /// Per-pixel max over channels of |∂score/∂pixel|.
    pub weights: Grid,
    /// Output unit differentiated: the class score, or 0 for regression.
    pub target: usize,
}

/// Resolves the differentiated output unit; classification defaults to the predicted class.
pub(crate) fn resolve_target<T: Scalar>(model: &mut PriceModel<T>, image: &Image, class: Option<usize>) -> Result<usize> {
    match model.head() {
        Head::Reg => Ok(0),
        Head::Class(k) => {
            let c = match class {
                Some(c) => c,
                None => model.predict_classes(&[image], 1)?[0],
            };
            if c >= k {
                return Err(invalid(format!("class {c} outside the {k}-class head")));
            }
            Ok(c)
        }
    }
}

/// Value of the score (pre-softmax unit `target`) for a single-sample batch.
pub fn target_score<T: Scalar>(graph: &mut Graph<T>, input: &Tensor<T>, target: usize) -> Result<f64> {
    graph.forward(input, Mode::Eval)?;
    let logits = graph.logits_node();
    let act = graph.activation(logits).expect("forward just ran");
    Ok(act.data()[target].to_f64().unwrap_or(f64::NAN))
}

pub(crate) fn unit_seed<T: Scalar>(graph: &Graph<T>, target: usize) -> Result<Tensor<T>> {
    let shape = graph.node(graph.logits_node()).shape.clone();
    let units: usize = shape.iter().product();
    if target >= units {
        return Err(invalid(format!("target unit {target} outside {units} outputs")));
    }
    let mut full = vec![1];
    full.extend(shape);
    let mut seed = Tensor::zeros(&full);
    seed.data_mut()[target] = T::one();
    Ok(seed)
}

/// Gradient of the pre-softmax unit `target` with respect to a single-sample input.
pub fn input_gradient<T: Scalar>(graph: &mut Graph<T>, input: &Tensor<T>, target: usize) -> Result<Tensor<T>> {
    if input.batch() != 1 {
        return Err(invalid("saliency works on one image at a time"));
    }
    let seed = unit_seed(graph, target)?;
    graph.forward(&input.clone().with_requires_grad(true), Mode::Eval)?;
    let start = graph.logits_node();
    let grad = graph.backward_from(start, &seed)?;
    Ok(grad.expect("input requires grad"))
}

/// Channel-wise max of |gradient| of an `(1, C, H, W)` input gradient.
pub fn reduce_channels<T: Scalar>(grad: &Tensor<T>) -> Result<Grid> {
    let s = grad.shape();
    let (c, h, w) = (s[1], s[2], s[3]);
    let plane = h * w;
    let values = (0..plane)
        .map(|i| {
            (0..c)
                .map(|ch| grad.data()[ch * plane + i].to_f64().unwrap_or(f64::NAN).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    Grid::new(h, w, values)
}

pub fn saliency_map<T: Scalar>(model: &PriceModel<T>, image: &Image, class: Option<usize>) -> Result<SaliencyMap> {
    let mut m = model.clone();
    let target = resolve_target(&mut m, image, class)?;
    let x = m.batch_tensor(&[image])?;
    let grad = input_gradient(&mut m.graph, &x, target)?;
    Ok(SaliencyMap {
        weights: reduce_channels(&grad)?,
        target,
    })
}
