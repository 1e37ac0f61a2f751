use nalgebra::DMatrix;
use ndgrad::{Graph, Mode, Scalar, Tensor};

use crate::error::Result;

/// Eval-mode forward, then the named node's activation flattened to one row per sample.
pub fn cnn_feature_extract<T: Scalar>(graph: &mut Graph<T>, layer_name: &str, inputs: &Tensor<T>) -> Result<DMatrix<f64>> {
    let id = graph.node_id(layer_name)?;
    graph.forward(inputs, Mode::Eval)?;
    let act = graph.activation(id).expect("forward populated activations");
    let rows = act.batch();
    let cols = act.len() / rows;
    let values: Vec<f64> = act.data().iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect();
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}
